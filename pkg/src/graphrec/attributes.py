"""Attribute tables: schemas, encoding, masking, and the missing-value machinery.

Attributes are grouped into fields. A single-label field is a one-hot block
(a classification target), a multi-label field is a multi-hot binary block.
Each entity either has a field fully observed or fully missing; the
observation indicator is therefore constant within a field's block.
Masking deletes whole (entity, field) observations; the pre-masking values
are kept as ``ground_truth`` for evaluation and are never visible to a model.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

FIELD_KINDS = ("single", "multi")


@dataclass(frozen=True)
class Field:
    name: str
    kind: str  # "single" | "multi"
    categories: tuple
    offset: int

    @property
    def cardinality(self):
        return len(self.categories)

    @property
    def block(self):
        return slice(self.offset, self.offset + self.cardinality)


class AttributeSchema:
    """Ordered list of fields with contiguous, non-overlapping blocks."""

    def __init__(self, fields):
        self.fields = []
        offset = 0
        for name, kind, categories in fields:
            if kind not in FIELD_KINDS:
                raise ValueError(f"field {name!r}: unknown kind {kind!r}")
            categories = tuple(categories)
            if kind == "single" and len(categories) < 2:
                raise ValueError(f"single-label field {name!r} needs >= 2 categories")
            if kind == "multi" and len(categories) < 1:
                raise ValueError(f"multi-label field {name!r} needs >= 1 category")
            self.fields.append(Field(name, kind, categories, offset))
            offset += len(categories)
        self.total_dim = offset
        self._by_name = {f.name: f for f in self.fields}
        if len(self._by_name) != len(self.fields):
            raise ValueError("duplicate field names in schema")

    def __len__(self):
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    def __getitem__(self, name):
        return self._by_name[name]

    def __contains__(self, name):
        return name in self._by_name

    def to_dict(self):
        return {"fields": [[f.name, f.kind, list(f.categories)] for f in self.fields]}

    @classmethod
    def from_dict(cls, d):
        return cls([(n, k, c) for n, k, c in d["fields"]])


@dataclass
class AttributeTable:
    """Per-side attribute matrix with observation indicator and held-out truth.

    values and indicator are (num_entities x total_dim); wherever
    indicator == 1, values == ground_truth. ``masked`` lists the
    (entity, field_index) pairs deleted by :func:`mask` — the attribute
    inference test set.
    """

    schema: AttributeSchema
    side: str  # "user" | "item"
    values: np.ndarray
    indicator: np.ndarray
    ground_truth: np.ndarray
    masked: list = dc_field(default_factory=list)

    @property
    def num_entities(self):
        return self.values.shape[0]


def encode(raw_records, schema, side="user"):
    """Encode per-entity field assignments into an :class:`AttributeTable`.

    ``raw_records`` is a list with one dict per entity mapping field name to
    a category index (single-label) or an iterable of category indices
    (multi-label). Fields absent from a record stay unobserved.
    """
    E = len(raw_records)
    D = schema.total_dim
    values = np.zeros((E, D))
    indicator = np.zeros((E, D))
    for e, record in enumerate(raw_records):
        for name, assignment in record.items():
            if name not in schema:
                raise ValueError(f"entity {e}: unknown field {name!r}")
            f = schema[name]
            if f.kind == "single":
                cats = [int(assignment)]
            else:
                cats = [int(c) for c in assignment]
            for c in cats:
                if not 0 <= c < f.cardinality:
                    raise ValueError(
                        f"entity {e}, field {name!r}: category {c} out of range "
                        f"(cardinality {f.cardinality})"
                    )
                values[e, f.offset + c] = 1.0
            if f.kind == "single" and len(cats) != 1:
                raise ValueError(f"entity {e}, field {name!r}: single-label needs one category")
            indicator[e, f.block] = 1.0
    return AttributeTable(schema, side, values, indicator, values.copy(), [])


def mask(table, alpha, seed):
    """Randomly delete a fraction ``alpha`` of each field's observed values.

    For each field independently (seeded per field, deterministic), a
    uniformly random floor(alpha * num_entities)-size subset of entities has
    its indicator and values zeroed over the field's block. ground_truth is
    untouched; the deleted (entity, field) pairs become ``masked``.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    values = table.values.copy()
    indicator = table.indicator.copy()
    masked = list(table.masked)
    E = table.num_entities
    n_del = int(np.floor(alpha * E))
    for f_idx, f in enumerate(table.schema):
        if n_del == 0:
            continue
        rng = np.random.default_rng([int(seed), f_idx])
        chosen = rng.choice(E, size=n_del, replace=False)
        for e in np.sort(chosen):
            if indicator[e, f.offset] == 1.0:
                masked.append((int(e), f_idx))
            values[e, f.block] = 0.0
            indicator[e, f.block] = 0.0
    return AttributeTable(
        table.schema, table.side, values, indicator, table.ground_truth.copy(), masked
    )


def init_missing(table, fallback=None):
    """Fill missing entries with per-dimension observed means.

    Observed entries are copied through; each missing entry in dimension f is
    set to the mean of that dimension over observed entities. A dimension
    with zero observed entities is an error unless ``fallback`` is given.
    """
    obs_count = table.indicator.sum(axis=0)
    if (obs_count == 0).any():
        if fallback is None:
            dim = int(np.argmax(obs_count == 0))
            raise ValueError(f"attribute dimension {dim} has no observed entities")
        means = np.where(
            obs_count > 0,
            (table.values * table.indicator).sum(axis=0) / np.maximum(obs_count, 1),
            fallback,
        )
    else:
        means = (table.values * table.indicator).sum(axis=0) / obs_count
    return table.values * table.indicator + means * (1.0 - table.indicator)


def apply_update(current, inferred, table):
    """Write inferred values into missing positions, keep observed ones.

    Returns ``current * indicator + inferred * (1 - indicator)`` elementwise.
    """
    current = np.asarray(current)
    inferred = np.asarray(inferred)
    if current.shape != inferred.shape or current.shape != table.indicator.shape:
        raise ValueError(
            f"shape mismatch: current {current.shape}, inferred {inferred.shape}, "
            f"indicator {table.indicator.shape}"
        )
    A = table.indicator
    return current * A + inferred * (1.0 - A)


# ---------------------------------------------------------------------------
# File formats
#
# Schema file: one field per line, `name<sep>kind<sep>cat1|cat2|...`
# Attribute file: one entity per line, `entity_id<sep>field=value[<sep>...]`,
# multi-label values separated by "|". <sep> is tab or comma (auto-detected).
# ---------------------------------------------------------------------------

def _detect_sep(line):
    return "\t" if "\t" in line else ","


def load_schema(path):
    """Read an ordered field-declaration file into an :class:`AttributeSchema`."""
    fields = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(_detect_sep(line))]
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected name, kind, categories")
            name, kind, cats = parts
            fields.append((name, kind, [c.strip() for c in cats.split("|")]))
    if not fields:
        raise ValueError(f"{path}: empty schema file")
    return AttributeSchema(fields)


def load_attributes(path, schema, num_entities, id_map, side="user"):
    """Read an attribute file and encode it against ``schema``.

    ``id_map`` maps external entity ids to dense indices; lines for unknown
    entities (filtered out upstream) are skipped. Category values are looked
    up in each field's vocabulary.
    """
    records = [dict() for _ in range(num_entities)]
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            sep = _detect_sep(line)
            parts = [p.strip() for p in line.split(sep)]
            ext_id = parts[0]
            if ext_id not in id_map:
                continue
            e = id_map[ext_id]
            for item in parts[1:]:
                if "=" not in item:
                    raise ValueError(f"{path}:{lineno}: expected field=value, got {item!r}")
                name, raw = item.split("=", 1)
                name = name.strip()
                if name not in schema:
                    raise ValueError(f"{path}:{lineno}: unknown field {name!r}")
                f = schema[name]
                vals = [v.strip() for v in raw.split("|")]
                try:
                    idxs = [f.categories.index(v) for v in vals]
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: field {name!r} has no category among {vals}"
                    ) from None
                records[e][name] = idxs[0] if f.kind == "single" else idxs
    return encode(records, schema, side=side)

"""Evaluation: full-itemset ranking metrics, attribute metrics, sparsity
breakdowns, and the in-repo baselines (BPR matrix factorization, label
propagation).

Ranking scores every item a user has not trained on, so HR@N / NDCG@N are
computed against the full candidate set. Score ties are broken by ascending
item index so reports are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .graph import build_graph
from .model import forward

HR_MODES = ("user-mean", "global")
DEFAULT_TOPN = (10, 20, 30, 40, 50)


def user_topn_metrics(scores, train_items, target_items, n_list):
    """HR@N and NDCG@N for one user.

    ``scores`` covers all items; ``train_items`` are excluded from the
    candidate set. HR@N = |top-N hits| / |targets| (recall form); NDCG@N uses
    1/log2(rank+1) gains with IDCG truncated at min(N, |targets|). Ties break
    by ascending item index. Returns (hr map, ndcg map, hits map).
    """
    target_items = np.asarray(target_items)
    s = np.array(scores, dtype=float)
    if len(train_items):
        s[np.asarray(train_items)] = -np.inf
    order = np.argsort(-s, kind="stable")
    rank_of = np.empty(len(s), dtype=np.int64)
    rank_of[order] = np.arange(1, len(s) + 1)
    target_ranks = rank_of[target_items]

    hr, ndcg, hits = {}, {}, {}
    for n in n_list:
        hit_ranks = target_ranks[target_ranks <= n]
        hits[n] = len(hit_ranks)
        hr[n] = len(hit_ranks) / len(target_items)
        dcg = float((1.0 / np.log2(hit_ranks + 1.0)).sum())
        ideal = np.arange(1, min(n, len(target_items)) + 1)
        idcg = float((1.0 / np.log2(ideal + 1.0)).sum())
        ndcg[n] = dcg / idcg
    return hr, ndcg, hits


def rank_and_score(trace, dataset, n_list, target="test", hr_mode="user-mean",
                   return_per_user=False):
    """Aggregate HR@N / NDCG@N over all users with at least one target item.

    ``hr_mode`` selects the HR aggregation: "user-mean" averages per-user
    recall; "global" divides total hits by total target items. NDCG is always
    a per-user mean. Users whose candidate set is empty are skipped and
    counted.
    """
    if hr_mode not in HR_MODES:
        raise ValueError(f"hr_mode must be one of {HR_MODES}")
    targets = dataset.test_items if target == "test" else dataset.val_items
    if not targets:
        raise ValueError(f"no users with {target} items")
    graph = dataset.graph_train
    U = trace.user_embeddings
    V = trace.item_embeddings

    hr_sum = {n: 0.0 for n in n_list}
    ndcg_sum = {n: 0.0 for n in n_list}
    hits_sum = {n: 0 for n in n_list}
    total_targets = 0
    per_user_ndcg = {}
    evaluated = 0
    skipped = 0
    for a, items in targets.items():
        if len(graph.user_items[a]) >= graph.num_items:
            skipped += 1
            continue
        scores = U[a] @ V.T
        hr, ndcg, hits = user_topn_metrics(scores, graph.user_items[a], items, n_list)
        for n in n_list:
            hr_sum[n] += hr[n]
            ndcg_sum[n] += ndcg[n]
            hits_sum[n] += hits[n]
        total_targets += len(items)
        per_user_ndcg[a] = ndcg
        evaluated += 1
    if evaluated == 0:
        raise ValueError("no evaluable users")

    if hr_mode == "user-mean":
        hr_map = {n: hr_sum[n] / evaluated for n in n_list}
    else:
        hr_map = {n: hits_sum[n] / total_targets for n in n_list}
    ndcg_map = {n: ndcg_sum[n] / evaluated for n in n_list}
    if return_per_user:
        return hr_map, ndcg_map, per_user_ndcg, skipped
    return hr_map, ndcg_map


# ---------------------------------------------------------------------------
# Attribute metrics
# ---------------------------------------------------------------------------

def average_precision(truth, scores):
    """AP over one block: mean over true labels of precision at that label's
    rank when dimensions are sorted by descending score (ties by index)."""
    truth = np.asarray(truth)
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    hits = 0
    precisions = []
    for k, dim in enumerate(order, start=1):
        if truth[dim]:
            hits += 1
            precisions.append(hits / k)
    if not precisions:
        return None
    return float(np.mean(precisions))


def attribute_metrics(predicted, table):
    """Per-field ACC (single-label) / MAP (multi-label) over masked entities.

    Evaluation is restricted to the (entity, field) pairs deleted by masking;
    ground truth comes from the table's held-out values. Fields with no
    masked entities are reported as None.
    """
    results = {}
    by_field = {}
    for e, f_idx in table.masked:
        by_field.setdefault(f_idx, []).append(e)
    for f_idx, f in enumerate(table.schema):
        entities = by_field.get(f_idx, [])
        if not entities:
            results[f.name] = {"metric": "ACC" if f.kind == "single" else "MAP",
                               "value": None, "count": 0}
            continue
        blk = f.block
        if f.kind == "single":
            correct = 0
            for e in entities:
                pred_pos = int(np.argmax(predicted[e, blk]))
                true_pos = int(np.argmax(table.ground_truth[e, blk]))
                correct += pred_pos == true_pos
            results[f.name] = {"metric": "ACC", "value": correct / len(entities),
                               "count": len(entities)}
        else:
            aps = []
            for e in entities:
                ap = average_precision(table.ground_truth[e, blk], predicted[e, blk])
                if ap is not None:  # entities without true labels are skipped
                    aps.append(ap)
            value = float(np.mean(aps)) if aps else None
            results[f.name] = {"metric": "MAP", "value": value, "count": len(aps)}
    return results


def majority_class_accuracy(table, field_name):
    """ACC of always predicting the most frequent observed class (baseline
    floor for single-label fields)."""
    f = table.schema[field_name]
    blk = f.block
    observed = table.indicator[:, f.offset] == 1
    if not observed.any():
        raise ValueError(f"field {field_name!r} has no observed entities")
    counts = table.values[observed][:, blk].sum(axis=0)
    majority = int(np.argmax(counts))
    masked_entities = [e for e, f_idx in table.masked
                       if table.schema.fields[f_idx].name == field_name]
    if not masked_entities:
        raise ValueError(f"field {field_name!r} has no masked entities")
    truth = np.argmax(table.ground_truth[masked_entities][:, blk], axis=1)
    return float(np.mean(truth == majority))


# ---------------------------------------------------------------------------
# Sparsity groups
# ---------------------------------------------------------------------------

def default_bins(dataset, n_groups=5):
    """Half-open interaction-count ranges with roughly equal user counts."""
    counts = np.array([len(items) for items in dataset.graph_train.user_items])
    qs = np.quantile(counts, np.linspace(0, 1, n_groups + 1))
    edges = sorted(set(int(np.floor(q)) for q in qs))
    bins = [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]
    if bins:
        lo, _ = bins[-1]
        bins[-1] = (lo, int(counts.max()) + 1)
    else:
        bins = [(int(counts.min()), int(counts.max()) + 1)]
    return bins


def sparsity_groups(dataset, trace, bins):
    """NDCG@10 recomputed per user group, grouped by training-interaction count.

    ``bins`` are disjoint half-open [lo, hi) ranges that must cover every
    evaluated user. Empty groups get count 0 and a None metric.
    """
    _, _, per_user_ndcg, _ = rank_and_score(trace, dataset, [10],
                                            return_per_user=True)
    counts = {a: len(dataset.graph_train.user_items[a]) for a in per_user_ndcg}
    groups = []
    assigned = set()
    for lo, hi in bins:
        members = [a for a, c in counts.items() if lo <= c < hi]
        assigned.update(members)
        value = float(np.mean([per_user_ndcg[a][10] for a in members])) if members else None
        groups.append({"range": (lo, hi), "count": len(members), "ndcg10": value})
    missing = set(counts) - assigned
    if missing:
        a = next(iter(missing))
        raise ValueError(f"bins do not cover user {a} with {counts[a]} training interactions")
    return groups


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    hr: dict
    ndcg: dict
    per_field: dict = field(default_factory=dict)
    groups: list = field(default_factory=list)
    hr_mode: str = "user-mean"
    skipped_users: int = 0
    notes: list = field(default_factory=list)

    def to_lines(self):
        lines = [f"hr_mode={self.hr_mode}", f"skipped_users={self.skipped_users}"]
        for n in sorted(self.hr):
            lines.append(f"hr.{n}={self.hr[n]:.6f}")
        for n in sorted(self.ndcg):
            lines.append(f"ndcg.{n}={self.ndcg[n]:.6f}")
        for name, info in self.per_field.items():
            val = "absent" if info["value"] is None else f"{info['value']:.6f}"
            lines.append(f"attr.{name}.{info['metric'].lower()}={val}")
        for g in self.groups:
            lo, hi = g["range"]
            val = "absent" if g["ndcg10"] is None else f"{g['ndcg10']:.6f}"
            lines.append(f"group.[{lo},{hi}).count={g['count']}")
            lines.append(f"group.[{lo},{hi}).ndcg10={val}")
        for note in self.notes:
            lines.append(f"note={note}")
        return lines

    def to_table(self, sep="\t"):
        ns = sorted(self.hr)
        rows = [["metric"] + [f"N={n}" for n in ns],
                ["HR"] + [f"{self.hr[n]:.4f}" for n in ns],
                ["NDCG"] + [f"{self.ndcg[n]:.4f}" for n in ns]]
        if self.per_field:
            rows.append([])
            rows.append(["field", "metric", "value", "count"])
            for name, info in self.per_field.items():
                val = "absent" if info["value"] is None else f"{info['value']:.4f}"
                rows.append([name, info["metric"], val, str(info.get("count", 0))])
        return "\n".join(sep.join(r) for r in rows) + "\n"

    def write(self, prefix):
        with open(f"{prefix}.txt", "w") as fh:
            fh.write("\n".join(self.to_lines()) + "\n")
        with open(f"{prefix}.tsv", "w") as fh:
            fh.write(self.to_table())


def evaluate_model(params, X, Y, dataset, n_list=DEFAULT_TOPN, target="test",
                   hr_mode="user-mean", bins=None):
    """Full EvalReport for one model state: ranking metrics, per-field
    attribute metrics on the masked test pairs, and sparsity groups."""
    from .model import infer_attributes

    trace = forward(params, dataset.graph_train, X, Y)
    hr, ndcg, per_user, skipped = rank_and_score(
        trace, dataset, list(n_list), target=target, hr_mode=hr_mode,
        return_per_user=True)
    per_field = {}
    for table, side in ((dataset.user_attrs, "user"), (dataset.item_attrs, "item")):
        if table is None or not table.masked:
            continue
        predicted = infer_attributes(trace, params, side, table.schema)
        per_field.update(attribute_metrics(predicted, table))
    if bins is None:
        bins = default_bins(dataset)
    groups = sparsity_groups(dataset, trace, bins) if target == "test" else []
    notes = ["attribute metrics evaluated on all masked entities, including "
             "any without training interactions"]
    return EvalReport(hr=hr, ndcg=ndcg, per_field=per_field, groups=groups,
                      hr_mode=hr_mode, skipped_users=skipped, notes=notes)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def bpr_baseline(dataset, config, n_list=DEFAULT_TOPN, hr_mode="user-mean",
                 return_result=False):
    """Plain BPR matrix factorization: the joint trainer with the graph
    depth, attribute width, and attribute loss all switched off."""
    from .train import train

    cfg = replace(config, K=0, d_a=0, gamma=0.0)
    result = train(dataset, cfg)
    report = evaluate_model(result.params, result.X, result.Y, dataset,
                            n_list=n_list, hr_mode=hr_mode)
    if return_result:
        return report, result
    return report


@dataclass
class PropagationResult:
    entities: np.ndarray       # masked entity indices for the field
    predictions: np.ndarray    # (len(entities), cardinality) distributions
    fallback: np.ndarray       # True where the global-mean fallback was used
    iterations: int


def label_propagation(graph, table, field_name, iterations=100, tol=1e-6):
    """Neighbor-averaging label propagation for one field.

    Every node (both sides of the bipartite graph) carries a distribution
    over the field's categories. Each sweep replaces it with the
    degree-normalized average of its neighbors' distributions; entities with
    the field observed are clamped back to their true block every sweep.
    Disconnected masked entities fall back to the global observed mean and
    are flagged.
    """
    f = table.schema[field_name]
    blk = f.block
    M, N = graph.num_users, graph.num_items
    side_offset = 0 if table.side == "user" else M
    n_side = M if table.side == "user" else N

    observed = table.indicator[:, f.offset] == 1
    if not observed.any():
        raise ValueError(f"field {field_name!r} has no observed entities")
    truth = table.values[:, blk]
    mean = truth[observed].mean(axis=0)

    P = build_graph(graph.edges, M, N, "row").S if graph.norm_mode != "row" else graph.S
    F = np.tile(mean, (M + N, 1))
    rows = side_offset + np.flatnonzero(observed)
    F[rows] = truth[observed]

    deg = np.asarray(P.sum(axis=1)).ravel()
    isolated = deg == 0

    it = 0
    for it in range(1, iterations + 1):
        F_new = P @ F
        F_new[rows] = truth[observed]
        F_new[isolated] = F[isolated]
        delta = np.abs(F_new - F).max()
        F = F_new
        if delta < tol:
            break

    masked_entities = np.array(
        sorted(e for e, f_idx in table.masked if table.schema.fields[f_idx] is f),
        dtype=np.int64,
    )
    preds = F[side_offset + masked_entities].copy()
    fallback = isolated[side_offset + masked_entities]
    preds[fallback] = mean
    return PropagationResult(masked_entities, preds, fallback, it)


def label_propagation_metrics(graph, table, iterations=100, tol=1e-6):
    """ACC / MAP of label propagation on every field's masked test set."""
    results = {}
    for f in table.schema:
        lp = label_propagation(graph, table, f.name, iterations, tol)
        if len(lp.entities) == 0:
            results[f.name] = {"metric": "ACC" if f.kind == "single" else "MAP",
                               "value": None, "count": 0}
            continue
        blk = f.block
        if f.kind == "single":
            correct = sum(
                int(np.argmax(lp.predictions[r])) == int(np.argmax(table.ground_truth[e, blk]))
                for r, e in enumerate(lp.entities)
            )
            results[f.name] = {"metric": "ACC", "value": correct / len(lp.entities),
                               "count": len(lp.entities)}
        else:
            aps = [average_precision(table.ground_truth[e, blk], lp.predictions[r])
                   for r, e in enumerate(lp.entities)]
            aps = [a for a in aps if a is not None]
            results[f.name] = {"metric": "MAP",
                               "value": float(np.mean(aps)) if aps else None,
                               "count": len(aps)}
    return results

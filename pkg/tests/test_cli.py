import numpy as np
import pytest

from graphrec.cli import main, read_config_file
from graphrec.data import load_dataset
from graphrec.toy import write_toy_files


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("toydata")
    return write_toy_files(d, num_users=30, num_items=24, seed=1)


def data_flags(toy_files):
    return ["--interactions", str(toy_files["interactions"]),
            "--user-attrs", str(toy_files["user_attrs"]),
            "--user-schema", str(toy_files["user_schema"]),
            "--item-attrs", str(toy_files["item_attrs"]),
            "--item-schema", str(toy_files["item_schema"]),
            "--alpha", "0.5"]


def train_flags():
    return ["--d", "6", "--d-a", "3", "--K", "1", "--gamma", "0.2",
            "--batch-size", "256", "--max-epochs", "2",
            "--early-stop-patience", "999999", "--quiet"]


def run_train(toy_files, out):
    return main(["train", "--out", str(out)] + data_flags(toy_files) + train_flags())


class TestTrainCommand:
    def test_smoke(self, toy_files, tmp_path):
        out = tmp_path / "run"
        assert run_train(toy_files, out) == 0
        for name in ("config.txt", "checkpoint.bin", "train_log.txt",
                     "report_val.txt", "report_val.tsv",
                     "report_test.txt", "report_test.tsv"):
            assert (out / name).exists(), name

    def test_reports_byte_identical(self, toy_files, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_train(toy_files, a) == 0
        assert run_train(toy_files, b) == 0
        assert (a / "report_test.txt").read_bytes() == (b / "report_test.txt").read_bytes()
        assert (a / "report_val.txt").read_bytes() == (b / "report_val.txt").read_bytes()

    def test_missing_file_names_path(self, tmp_path, capsys):
        rc = main(["train", "--out", str(tmp_path / "x"),
                   "--interactions", "/no/such/file.tsv"] + train_flags())
        assert rc == 1
        assert "/no/such/file.tsv" in capsys.readouterr().err

    def test_no_dataset_given(self, tmp_path, capsys):
        rc = main(["train", "--out", str(tmp_path / "x")] + train_flags())
        assert rc == 1
        assert "dataset" in capsys.readouterr().err

    def test_config_echo_reproduces_run(self, toy_files, tmp_path):
        a = tmp_path / "a"
        assert run_train(toy_files, a) == 0
        echoed = read_config_file(a / "config.txt")
        assert echoed["d"] == 6 and echoed["alpha"] == 0.5
        b = tmp_path / "b"
        rc = main(["train", "--out", str(b), "--config", str(a / "config.txt"),
                   "--quiet"])
        assert rc == 0
        assert (a / "report_test.txt").read_bytes() == (b / "report_test.txt").read_bytes()


class TestPrepareAndEvaluate:
    def test_prepare_then_train_then_evaluate(self, toy_files, tmp_path, capsys):
        prep = tmp_path / "prep"
        assert main(["prepare-data", "--out", str(prep)] + data_flags(toy_files)) == 0
        bundle = prep / "dataset.bin"
        assert bundle.exists()

        run = tmp_path / "run"
        rc = main(["train", "--out", str(run), "--dataset", str(bundle)]
                  + train_flags())
        assert rc == 0

        ev = tmp_path / "eval"
        capsys.readouterr()
        rc = main(["evaluate", "--out", str(ev), "--dataset", str(bundle),
                   "--checkpoint", str(run / "checkpoint.bin")])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "hr.10=" in printed
        assert (ev / "report_test.txt").exists()
        # evaluating the checkpoint reproduces the training run's test report
        assert (ev / "report_test.txt").read_bytes() == \
            (run / "report_test.txt").read_bytes()

    def test_dimension_mismatch(self, toy_files, tmp_path, capsys):
        prep = tmp_path / "prep"
        main(["prepare-data", "--out", str(prep)] + data_flags(toy_files))
        run = tmp_path / "run"
        main(["train", "--out", str(run), "--dataset", str(prep / "dataset.bin")]
             + train_flags())
        other = tmp_path / "otherdata"
        files = write_toy_files(other, num_users=12, num_items=10, seed=3)
        rc = main(["evaluate", "--out", str(tmp_path / "ev"),
                   "--interactions", str(files["interactions"]),
                   "--checkpoint", str(run / "checkpoint.bin")])
        assert rc == 1
        assert "users" in capsys.readouterr().err


class TestInferAttributes:
    def test_predictions_cover_masked_pairs(self, toy_files, tmp_path):
        prep = tmp_path / "prep"
        main(["prepare-data", "--out", str(prep)] + data_flags(toy_files))
        bundle = prep / "dataset.bin"
        run = tmp_path / "run"
        main(["train", "--out", str(run), "--dataset", str(bundle)] + train_flags())
        out = tmp_path / "infer"
        rc = main(["infer-attributes", "--out", str(out), "--dataset", str(bundle),
                   "--checkpoint", str(run / "checkpoint.bin")])
        assert rc == 0

        ds = load_dataset(bundle)
        expected = set()
        for table, side, ids in ((ds.user_attrs, "user", ds.user_ids),
                                 (ds.item_attrs, "item", ds.item_ids)):
            for e, f_idx in table.masked:
                expected.add((side, ids[e], table.schema.fields[f_idx].name))

        lines = (out / "predictions.tsv").read_text().splitlines()
        assert lines[0] == "side\tentity\tfield\tprediction\tprobabilities"
        got = set()
        for line in lines[1:]:
            side, entity, fname, label, probs = line.split("\t")
            got.add((side, entity, fname))
            p = np.array([float(x) for x in probs.split(";")])
            assert np.all((p >= 0) & (p <= 1))
            if fname in ("group", "kind"):  # single-label fields
                assert abs(p.sum() - 1.0) <= 1e-5
                assert label in ("g0", "g1", "k0", "k1")
        assert got == expected
        assert len(lines) - 1 == sum(
            len(t.masked) for t in (ds.user_attrs, ds.item_attrs))


class TestSweep:
    def test_grid_and_resume(self, toy_files, tmp_path, capsys):
        out = tmp_path / "sweep"
        args = (["sweep", "--out", str(out)] + data_flags(toy_files) + train_flags()
                + ["--grid-k", "0,1", "--grid-gamma", "0.2"])
        assert main(args) == 0
        summary = (out / "summary.tsv").read_text().splitlines()
        assert len(summary) == 3  # header + 2 grid points
        assert summary[0].startswith("K\tgamma\thr10\tndcg10")
        for sub in ("K0_gamma0.2", "K1_gamma0.2"):
            assert (out / sub / "report_test.txt").exists()
        capsys.readouterr()

        # rerunning skips the completed points and reproduces the summary
        assert main(args) == 0
        printed = capsys.readouterr().out
        assert printed.count("skipping completed point") == 2
        assert (out / "summary.tsv").read_text().splitlines() == summary
        assert "best ranking point" in printed


class TestLpBaseline:
    def test_prints_per_field(self, toy_files, tmp_path, capsys):
        rc = main(["lp-baseline", "--out", str(tmp_path / "lp")]
                  + data_flags(toy_files))
        assert rc == 0
        printed = capsys.readouterr().out
        assert "lp.group.acc=" in printed
        assert "lp.tags.map=" in printed
        assert "lp.kind.acc=" in printed

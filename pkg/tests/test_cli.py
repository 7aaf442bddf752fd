import json

import numpy as np
import pytest

from sprinql import serialize
from sprinql.cli import main
from sprinql.reference import level_means


SMALL_DATA = {
    "env": "grid4",
    "noise_levels": [0.0, 0.4, 0.8],
    "sizes": [60, 120, 240],
    "seed": 0,
}


def _write_cfg(tmp_path, name, extra):
    cfg = dict(SMALL_DATA)
    cfg.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _gen(tmp_path, out="run"):
    out_dir = tmp_path / out
    cfg = _write_cfg(tmp_path, "gen.json", {"out": str(out_dir)})
    assert main(["gen-data", "--config", cfg]) == 0
    return out_dir, cfg


def _fit(tmp_path, out_dir):
    cfg = _write_cfg(tmp_path, "fit.json", {"out": str(out_dir), "reference": {"iterations": 100}})
    assert main(["fit-reference", "--config", cfg]) == 0
    return cfg


class TestGenData:
    def test_default_outputs_and_manifest(self, tmp_path):
        out_dir, _ = _gen(tmp_path)
        for name in ("mdp.txt", "dataset.txt", "dataset_manifest.json", "manifest.json"):
            assert (out_dir / name).exists()
        data = serialize.load_datasets(out_dir / "dataset.txt", out_dir / "dataset_manifest.json")
        assert data.n_levels == 3
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["command"] == "gen-data"

    def test_determinism(self, tmp_path):
        a, _ = _gen(tmp_path, "a")
        b, _ = _gen(tmp_path, "b")
        assert (a / "dataset.txt").read_text() == (b / "dataset.txt").read_text()
        assert (a / "mdp.txt").read_text() == (b / "mdp.txt").read_text()

    def test_bad_noise_rejected_before_write(self, tmp_path):
        out_dir = tmp_path / "bad"
        cfg = _write_cfg(tmp_path, "bad.json", {"out": str(out_dir), "noise_levels": [0.0, 0.5, 0.4]})
        assert main(["gen-data", "--config", cfg]) == 1
        assert not (out_dir / "dataset.txt").exists()

    def test_unknown_env(self, tmp_path):
        cfg = _write_cfg(tmp_path, "env.json", {"out": str(tmp_path / "x"), "env": "grid99"})
        assert main(["gen-data", "--config", cfg]) == 1


class TestFitReference:
    def test_level_means_decreasing(self, tmp_path):
        out_dir, _ = _gen(tmp_path)
        _fit(tmp_path, out_dir)
        rbar = serialize.load_table(out_dir / "rbar.txt")
        data = serialize.load_datasets(out_dir / "dataset.txt", out_dir / "dataset_manifest.json")
        means = level_means(rbar, data)
        assert means[0] > means[1] > means[2]
        assert (out_dir / "reference_loss.csv").read_text().startswith("iter,loss")

    def test_missing_dataset(self, tmp_path):
        cfg = _write_cfg(tmp_path, "f.json", {"out": str(tmp_path / "nothing")})
        assert main(["fit-reference", "--config", cfg]) == 1

    def test_zero_iterations(self, tmp_path):
        out_dir, _ = _gen(tmp_path)
        cfg = _write_cfg(tmp_path, "f0.json", {"out": str(out_dir), "reference": {"iterations": 0}})
        assert main(["fit-reference", "--config", cfg]) == 1


class TestTrain:
    def _train(self, tmp_path, method, extra=None):
        out_dir, _ = _gen(tmp_path)
        _fit(tmp_path, out_dir)
        cfg_extra = {"out": str(out_dir), "method": method, "objective": {"iterations": 100}}
        cfg_extra.update(extra or {})
        cfg = _write_cfg(tmp_path, f"train-{method}.json", cfg_extra)
        return out_dir, main(["train", "--config", cfg])

    def test_sprinql_artifacts(self, tmp_path):
        out_dir, code = self._train(tmp_path, "sprinql")
        assert code == 0
        for name in ("q.txt", "pi.txt", "rhat.txt", "diagnostics.jsonl"):
            assert (out_dir / name).exists()
        records = [json.loads(l) for l in (out_dir / "diagnostics.jsonl").read_text().splitlines()]
        assert any(r["kind"] == "eval" for r in records)
        pi = serialize.load_table(out_dir / "pi.txt")
        assert np.allclose(pi.sum(axis=1), 1.0, atol=1e-12)

    def test_noreg_alpha_override_notice(self, tmp_path, capsys):
        _, code = self._train(tmp_path, "noreg", {"objective": {"alpha": 2.0, "iterations": 100}})
        assert code == 0
        assert "noreg ablation overrides alpha to 0" in capsys.readouterr().out

    def test_unknown_method(self, tmp_path):
        _, code = self._train(tmp_path, "qlearn")
        assert code == 1

    def test_nodm_runs(self, tmp_path):
        _, code = self._train(tmp_path, "nodm")
        assert code == 0


class TestEvalAndPlot:
    def test_eval_prints_score(self, tmp_path, capsys):
        out_dir, _ = _gen(tmp_path)
        _fit(tmp_path, out_dir)
        cfg = _write_cfg(tmp_path, "t.json", {"out": str(out_dir), "objective": {"iterations": 50}})
        assert main(["train", "--config", cfg]) == 0
        capsys.readouterr()
        assert main(["eval", "--config", cfg]) == 0
        assert "normalized_score=" in capsys.readouterr().out

    def test_plot_outputs(self, tmp_path):
        out_dir, _ = _gen(tmp_path)
        _fit(tmp_path, out_dir)
        cfg = _write_cfg(tmp_path, "t.json", {"out": str(out_dir), "objective": {"iterations": 50}})
        assert main(["train", "--config", cfg]) == 0
        assert main(["plot", "--config", cfg]) == 0
        assert (out_dir / "score_curve.svg").exists()
        assert (out_dir / "reference_levels.svg").exists()

    def test_plot_nothing_to_do(self, tmp_path):
        cfg = _write_cfg(tmp_path, "p.json", {"out": str(tmp_path / "empty")})
        assert main(["plot", "--config", cfg]) == 1


class TestSuiteCommand:
    def _suite_cfg(self, tmp_path, out):
        return _write_cfg(
            tmp_path,
            f"suite-{out}.json",
            {
                "out": str(tmp_path / out),
                "suite": {
                    "envs": ["grid4"],
                    "methods": ["sprinql", "bc-both"],
                    "seeds": [0],
                    "sizes": [60, 120, 240],
                    "with_correlation": False,
                },
                "objective": {"iterations": 100},
            },
        )

    def test_suite_outputs(self, tmp_path):
        cfg = self._suite_cfg(tmp_path, "s1")
        assert main(["suite", "--config", cfg]) == 0
        assert (tmp_path / "s1" / "comparison.csv").exists()
        assert (tmp_path / "s1" / "comparison.txt").exists()

    def test_suite_determinism(self, tmp_path):
        a, b = self._suite_cfg(tmp_path, "sa"), self._suite_cfg(tmp_path, "sb")
        assert main(["suite", "--config", a]) == 0
        assert main(["suite", "--config", b]) == 0

        def strip_wall(text):  # wall-clock column is the one timing field
            return [",".join(np.delete(l.split(","), 7)) for l in text.splitlines()]

        assert strip_wall((tmp_path / "sa" / "comparison.csv").read_text()) == strip_wall(
            (tmp_path / "sb" / "comparison.csv").read_text()
        )

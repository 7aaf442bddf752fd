"""Batch command-line front end.

Subcommands: gen-data, fit-reference, train, suite, eval, plot. Every run
is driven by a JSON config tree (--config), with --seed and --out
overriding the file values; the effective config is echoed into the
manifest next to the outputs.

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 a suite
completed with some failed cells.
"""

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .baselines import BcConfig, bc_policy
from .datasets import DatasetError, build_ranked_datasets
from .evaluation import (
    DEFAULT_NOISE_LEVELS,
    DEFAULT_SIZES,
    SuiteConfig,
    prepare_run,
    results_csv,
    results_table,
    run_comparison,
    run_method,
    score_policy,
)
from .gridworld import make_gridworld, suite_config
from .mdp import MdpError
from .objective import ObjectiveError, SprinqlConfig, recovered_reward, soft_policy
from .reference import (
    FitError,
    PreferenceFitConfig,
    estimate_weights,
    fit_reference_reward,
    level_means,
    normalize_reference,
    observed_mask,
)
from . import serialize

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3


class ValidationError(Exception):
    pass


def _load_config(args) -> dict:
    cfg = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        cfg = json.loads(path.read_text())
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    cfg.setdefault("seed", 0)
    cfg.setdefault("out", "out")
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, cfg: dict) -> None:
    (out / "manifest.json").write_text(
        json.dumps({"command": command, "config": cfg}, indent=2, sort_keys=True) + "\n"
    )


def _env_cfg(cfg):
    env = cfg.get("env", "grid4")
    try:
        base = suite_config(env)
    except KeyError as exc:
        raise ValidationError(str(exc))
    return replace(base, seed=cfg["seed"])


def cmd_gen_data(cfg: dict) -> int:
    noise = tuple(cfg.get("noise_levels", DEFAULT_NOISE_LEVELS))
    sizes = tuple(cfg.get("sizes", DEFAULT_SIZES))
    if any(b <= a for a, b in zip(noise, noise[1:])) or not noise or noise[0] != 0.0:
        raise ValidationError("noise_levels must start at 0 and increase strictly")
    if len(sizes) != len(noise):
        raise ValidationError("sizes and noise_levels must have the same length")
    env_cfg = _env_cfg(cfg)
    mdp = make_gridworld(env_cfg)
    data = build_ranked_datasets(mdp, noise, sizes, env_cfg.horizon, cfg["seed"], env_name=env_cfg.name)
    out = _outdir(cfg)
    serialize.dump_mdp(mdp, out / "mdp.txt")
    serialize.dump_datasets(
        data, out / "dataset.txt", out / "dataset_manifest.json", {"env_config": asdict(env_cfg)}
    )
    _write_manifest(out, "gen-data", cfg)
    print(f"wrote {out / 'dataset.txt'} ({sum(data.level_sizes())} transitions)")
    return EXIT_OK


def _load_run_inputs(cfg):
    out = Path(cfg["out"])
    data_dir = Path(cfg.get("data_dir", out))
    for name in ("mdp.txt", "dataset.txt", "dataset_manifest.json"):
        if not (data_dir / name).exists():
            raise ValidationError(f"missing input file: {data_dir / name}")
    mdp = serialize.load_mdp(data_dir / "mdp.txt")
    data = serialize.load_datasets(data_dir / "dataset.txt", data_dir / "dataset_manifest.json")
    return mdp, data, data_dir


def cmd_fit_reference(cfg: dict) -> int:
    ref = cfg.get("reference", {})
    if ref.get("iterations", 1) <= 0:
        raise ValidationError("reference.iterations must be positive")
    mdp, data, _ = _load_run_inputs(cfg)
    fit_cfg = PreferenceFitConfig(
        iterations=ref.get("iterations", 300),
        step_size=ref.get("step_size", 1.0),
        pairs_per_batch=ref.get("pairs_per_batch", 0),
        seed=cfg["seed"],
    )
    rbar_raw, trace = fit_reference_reward(data, mdp.n_states, mdp.n_actions, fit_cfg)
    mask = observed_mask(data, mdp.n_states, mdp.n_actions)
    rbar = normalize_reference(rbar_raw, mask)
    out = _outdir(cfg)
    serialize.dump_table(rbar, out / "rbar.txt")
    with open(out / "reference_loss.csv", "w") as fh:
        fh.write("iter,loss\n")
        fh.writelines(f"{i + 1},{v:.10g}\n" for i, v in enumerate(trace))
    _write_manifest(out, "fit-reference", cfg)
    means = level_means(rbar, data)
    print("level mean reference rewards:", " ".join(f"{m:.4f}" for m in means))
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    method = cfg.get("method", "sprinql")
    if method not in ("sprinql", "noreg", "nodm"):
        raise ValidationError(f"unknown method '{method}' (expected sprinql, noreg, or nodm)")
    mdp, data, data_dir = _load_run_inputs(cfg)
    obj = cfg.get("objective", {})
    if method == "noreg" and obj.get("alpha", 0.0) != 0.0:
        print("notice: noreg ablation overrides alpha to 0")
    out = _outdir(cfg)

    if method == "noreg":
        rbar = np.zeros((mdp.n_states, mdp.n_actions))
        weights_src = normalize_reference(
            fit_reference_reward(data, mdp.n_states, mdp.n_actions,
                                 PreferenceFitConfig(seed=cfg["seed"]))[0],
            observed_mask(data, mdp.n_states, mdp.n_actions),
        )
        weights = estimate_weights(weights_src, data)
    else:
        rbar_path = Path(cfg.get("rbar", data_dir / "rbar.txt"))
        if not rbar_path.exists():
            raise ValidationError(f"missing reference reward file: {rbar_path}")
        rbar = serialize.load_table(rbar_path)
        weights = estimate_weights(rbar, data)

    train_cfg = SprinqlConfig(
        alpha=0.0 if method == "noreg" else obj.get("alpha", 1.0),
        beta=obj.get("beta", 1.0),
        step_size=obj.get("step_size", 1e-2),
        iterations=obj.get("iterations", 3000),
        mu=obj.get("mu", "uniform"),
        seed=cfg["seed"],
    )

    def eval_fn(Q):
        return score_policy(mdp, soft_policy(Q))

    from .objective import train_sprinql

    Q, pi, diags = train_sprinql(
        data, rbar, weights, train_cfg, mdp.n_states, mdp.n_actions, mdp.discount,
        eval_fn=eval_fn, dm=(method != "nodm"),
    )
    serialize.dump_table(Q, out / "q.txt")
    serialize.dump_table(pi, out / "pi.txt")
    serialize.dump_table(recovered_reward(Q, mdp), out / "rhat.txt")
    serialize.dump_diagnostics(diags, out / "diagnostics.jsonl")
    _write_manifest(out, "train", cfg)
    final = diags.eval_scores[-1] if diags.eval_scores else score_policy(mdp, pi)
    print(f"method={method} final_score={final:.2f}")
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    mdp, _, data_dir = _load_run_inputs(cfg)
    pi_path = Path(cfg.get("pi", data_dir / "pi.txt"))
    if not pi_path.exists():
        raise ValidationError(f"missing policy file: {pi_path}")
    pi = serialize.load_table(pi_path)
    print(f"normalized_score={score_policy(mdp, pi):.4f}")
    return EXIT_OK


def _suite_config(cfg) -> SuiteConfig:
    s = cfg.get("suite", {})
    obj = cfg.get("objective", {})
    return SuiteConfig(
        env_names=tuple(s.get("envs", ("grid4", "grid5", "grid6"))),
        methods=tuple(s.get("methods", SuiteConfig().methods)),
        seeds=tuple(s.get("seeds", (0, 1, 2, 3, 4))),
        noise_levels=tuple(s.get("noise_levels", DEFAULT_NOISE_LEVELS)),
        sizes=tuple(s.get("sizes", DEFAULT_SIZES)),
        sprinql=SprinqlConfig(
            alpha=obj.get("alpha", 1.0),
            beta=obj.get("beta", 1.0),
            iterations=obj.get("iterations", 3000),
        ),
        with_correlation=s.get("with_correlation", True),
    )


def cmd_suite(cfg: dict) -> int:
    suite = _suite_config(cfg)
    out = _outdir(cfg)

    def progress(method, env, seed, res):
        latest = f"{res.seed_scores[-1]:.1f}" if res.seed_scores else "FAIL"
        print(f"  {env} seed={seed} {method}: {latest}", flush=True)

    results = run_comparison(suite, progress=progress)
    (out / "comparison.csv").write_text(results_csv(results))
    (out / "comparison.txt").write_text(results_table(results) + "\n")
    _write_manifest(out, "suite", cfg)
    print(results_table(results))
    failed = [r for r in results if r.error]
    if len(failed) == len(results):
        return EXIT_RUNTIME
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_plot(cfg: dict) -> int:
    out = _outdir(cfg)
    data_dir = Path(cfg.get("data_dir", out))
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    made = []
    diag_path = data_dir / "diagnostics.jsonl"
    if diag_path.exists():
        iters, scores = [], []
        for line in diag_path.read_text().splitlines():
            rec = json.loads(line)
            if rec["kind"] == "eval":
                iters.append(rec["iter"])
                scores.append(rec["score"])
        fig, ax = plt.subplots()
        ax.plot(iters, scores, marker="o")
        ax.set_xlabel("iteration")
        ax.set_ylabel("normalized score")
        fig.savefig(out / "score_curve.svg")
        plt.close(fig)
        made.append("score_curve.svg")
    rbar_path = data_dir / "rbar.txt"
    if rbar_path.exists() and (data_dir / "dataset.txt").exists():
        rbar = serialize.load_table(rbar_path)
        data = serialize.load_datasets(data_dir / "dataset.txt", data_dir / "dataset_manifest.json")
        per_level = [rbar[s, a] for s, a, _ in (data.flat_transitions(i) for i in range(data.n_levels))]
        fig, ax = plt.subplots()
        ax.boxplot(per_level, tick_labels=[f"level {i + 1}" for i in range(len(per_level))])
        ax.set_ylabel("reference reward")
        fig.savefig(out / "reference_levels.svg")
        plt.close(fig)
        made.append("reference_levels.svg")
    if not made:
        raise ValidationError("nothing to plot: no diagnostics or reference files found")
    print("wrote " + ", ".join(made))
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit-reference": cmd_fit_reference,
    "train": cmd_train,
    "suite": cmd_suite,
    "eval": cmd_eval,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sprinql", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--jobs", type=int, default=1, help="suite parallelism bound")
        sp.add_argument("--format", choices=("csv", "svg"), default="csv")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](cfg)
    except (ValidationError, ValueError, DatasetError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (MdpError, ObjectiveError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

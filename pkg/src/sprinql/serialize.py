"""Text serialization for fixtures and CLI artifacts.

Formats (all plain text, whitespace-delimited, bit-exact round trips):

MDP file::

    mdp <n_states> <n_actions>
    discount <g>
    initial <p0 ...>                   # n_states floats
    reward <row-major r entries>       # n_states * n_actions floats
    transition <row-major P entries>   # n_states * n_actions * n_states floats

Table file (Q, pi, rbar, rhat)::

    table <n_states> <n_actions>
    <row-major entries>

Dataset file: one transition per line `level trajectory_id step s a s'`
(all 1-based except s/a/s'), accompanied by a JSON manifest carrying the
generation config and seed.
"""

import json
from pathlib import Path

import numpy as np

from .datasets import RankedDatasets, Trajectory
from .mdp import TabularMdp

_FLOAT = "%.17g"  # shortest round-trip representation of a double


def _fmt(values) -> str:
    return " ".join(_FLOAT % v for v in np.asarray(values).ravel())


def dump_mdp(mdp: TabularMdp, path) -> None:
    lines = [
        f"mdp {mdp.n_states} {mdp.n_actions}",
        f"discount {_FLOAT % mdp.discount}",
        f"initial {_fmt(mdp.initial_dist)}",
        f"reward {_fmt(mdp.true_reward)}",
        f"transition {_fmt(mdp.transition)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mdp(path) -> TabularMdp:
    fields = {}
    for line in Path(path).read_text().splitlines():
        key, _, rest = line.partition(" ")
        fields[key] = rest
    S, A = (int(x) for x in fields["mdp"].split())
    return TabularMdp(
        transition=np.fromstring(fields["transition"], sep=" ").reshape(S, A, S),
        true_reward=np.fromstring(fields["reward"], sep=" ").reshape(S, A),
        discount=float(fields["discount"]),
        initial_dist=np.fromstring(fields["initial"], sep=" "),
    )


def dump_table(table: np.ndarray, path) -> None:
    S, A = table.shape
    Path(path).write_text(f"table {S} {A}\n{_fmt(table)}\n")


def load_table(path) -> np.ndarray:
    header, body = Path(path).read_text().splitlines()
    _, S, A = header.split()
    return np.fromstring(body, sep=" ").reshape(int(S), int(A))


def dump_datasets(data: RankedDatasets, path, manifest_path=None, manifest_extra=None) -> None:
    lines = []
    for lvl, trajs in enumerate(data.levels, start=1):
        for tid, t in enumerate(trajs, start=1):
            for step in range(len(t)):
                lines.append(
                    f"{lvl} {tid} {step + 1} {t.states[step]} {t.actions[step]} {t.next_states[step]}"
                )
    Path(path).write_text("\n".join(lines) + "\n")
    if manifest_path is not None:
        manifest = {
            "noise_levels": list(data.noise_levels),
            "seed": data.seed,
            "env_name": data.env_name,
            "level_sizes": data.level_sizes(),
        }
        if manifest_extra:
            manifest.update(manifest_extra)
        Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_datasets(path, manifest_path=None) -> RankedDatasets:
    rows = np.loadtxt(path, dtype=np.int64, ndmin=2)
    noise_levels, seed, env_name = (), 0, ""
    if manifest_path is not None:
        manifest = json.loads(Path(manifest_path).read_text())
        noise_levels = tuple(manifest["noise_levels"])
        seed = manifest["seed"]
        env_name = manifest.get("env_name", "")
    levels = []
    for lvl in np.unique(rows[:, 0]):
        trajs = []
        lvl_rows = rows[rows[:, 0] == lvl]
        for tid in np.unique(lvl_rows[:, 1]):
            tr = lvl_rows[lvl_rows[:, 1] == tid]
            tr = tr[np.argsort(tr[:, 2])]
            trajs.append(
                Trajectory(
                    states=tr[:, 3].copy(), actions=tr[:, 4].copy(), next_states=tr[:, 5].copy()
                )
            )
        levels.append(trajs)
    return RankedDatasets(levels=levels, noise_levels=noise_levels, seed=seed, env_name=env_name)


def dump_diagnostics(diags, path) -> None:
    """Line-delimited JSON: one record per training iteration plus one per
    evaluation point."""
    with open(path, "w") as fh:
        for i, (obj, gn) in enumerate(zip(diags.objective, diags.grad_norm)):
            fh.write(json.dumps({"kind": "iter", "iter": i + 1, "objective": obj, "grad_norm": gn}) + "\n")
        for it, score in zip(diags.eval_iters, diags.eval_scores):
            fh.write(json.dumps({"kind": "eval", "iter": it, "score": score}) + "\n")

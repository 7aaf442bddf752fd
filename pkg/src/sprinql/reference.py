"""Reference reward fitting from ranked demonstrations.

The loss has two parts: a within-level spread penalty (reward values of
state-action pairs seen in the same level should agree) and a cross-level
pairwise Bradley-Terry term pushing trajectory returns to respect the
expertise ordering. The loss is convex in the observed table entries;
unobserved (s,a) pairs stay pinned at zero.
"""

from dataclasses import dataclass

import numpy as np

from .datasets import RankedDatasets

DIVERGENCE_PATIENCE = 10
MAX_HALVINGS = 60
# fitted rewards are scale-free; this is the default range of the observed
# entries after normalization (balances the regularizer against matching)
REFERENCE_SCALE = 10.0


class FitError(Exception):
    pass


@dataclass(frozen=True)
class PreferenceFitConfig:
    iterations: int = 300
    step_size: float = 1.0
    pairs_per_batch: int = 0  # 0 = all cross-level trajectory pairs
    within_coeff: float = 1.0
    seed: int = 0
    length_normalize: bool = True  # per-step returns when lengths differ > 2x

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


def bt_probability(R_i: float, R_j: float) -> float:
    """P(tau_i < tau_j) under the Bradley-Terry model: logistic of R_j - R_i.

    Computed in the log domain, so extreme return gaps neither overflow nor
    underflow to hard 0/1 prematurely.
    """
    d = R_i - R_j
    # compute the >= 1/2 side directly and the other as its exact complement
    # (1 - q is exact for q in [1/2, 1]), so P(i<j) + P(j<i) == 1 bit-for-bit
    q = float(1.0 / (1.0 + np.exp(-abs(d))))
    return 1.0 - q if d > 0 else q


def _softplus(x):
    # log(1 + exp(x)); equals -ln P(tau_i < tau_j) at x = R_i - R_j
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def observed_mask(data: RankedDatasets, n_states: int, n_actions: int) -> np.ndarray:
    mask = np.zeros((n_states, n_actions), dtype=bool)
    s, a, _ = data.all_transitions()
    mask[s, a] = True
    return mask


class _LossWorkspace:
    """Vectorized views of the data: per-level transition indices, stacked
    per-trajectory count matrices, and the cross-level pair index table."""

    def __init__(self, data: RankedDatasets, n_states: int, n_actions: int, length_normalize: bool):
        self.shape = (n_states, n_actions)
        self.level_idx = [data.flat_transitions(i) for i in range(data.n_levels)]

        trajs, self.traj_level = [], []
        for lvl, ts in enumerate(data.levels):
            trajs.extend(ts)
            self.traj_level.extend([lvl] * len(ts))
        T = len(trajs)
        self.counts = np.zeros((T, n_states * n_actions))
        for t, traj in enumerate(trajs):
            np.add.at(self.counts[t], traj.states * n_actions + traj.actions, 1.0)
        self.lens = np.array([len(t) for t in trajs], dtype=float)

        worse, better = [], []
        for i in range(T):
            for j in range(T):
                if self.traj_level[i] > self.traj_level[j]:
                    worse.append(i)
                    better.append(j)
        self.worse = np.array(worse, dtype=np.int64)
        self.better = np.array(better, dtype=np.int64)
        lw, lb = self.lens[self.worse], self.lens[self.better]
        norm = length_normalize & (np.maximum(lw, lb) > 2 * np.minimum(lw, lb))
        self.scale_w = np.where(norm, 1.0 / lw, 1.0)
        self.scale_b = np.where(norm, 1.0 / lb, 1.0)

    @property
    def n_pairs(self) -> int:
        return len(self.worse)

    def loss_and_grad(self, rbar, within_coeff, pair_sel, want_grad):
        grad = np.zeros(self.shape) if want_grad else None
        loss = 0.0
        # within-level spread: sum over ordered pairs (x_t - x_u)^2
        #                    = 2n * sum_t (x_t - mean)^2, exact for the full level
        for s_idx, a_idx, _ in self.level_idx:
            x = rbar[s_idx, a_idx]
            n = len(x)
            centered = x - x.mean()
            loss += within_coeff * 2.0 * n * float(centered @ centered)
            if want_grad:
                np.add.at(grad, (s_idx, a_idx), within_coeff * 4.0 * n * centered)
        # cross-level Bradley-Terry: -ln P(worse < better) = softplus(R_w - R_b)
        R = self.counts @ rbar.ravel()
        w, b = self.worse[pair_sel], self.better[pair_sel]
        sw, sb = self.scale_w[pair_sel], self.scale_b[pair_sel]
        z = R[w] * sw - R[b] * sb
        loss += float(_softplus(z).sum())
        if want_grad:
            sig = _sigmoid(z)
            coef = np.zeros(len(self.counts))
            np.add.at(coef, w, sig * sw)
            np.add.at(coef, b, -sig * sb)
            grad += (coef @ self.counts).reshape(self.shape)
        return loss, grad


def _workspace(rbar_shape, data, cfg):
    _require_nonempty(data)
    return _LossWorkspace(data, rbar_shape[0], rbar_shape[1], cfg.length_normalize)


def _pair_selection(ws, cfg, rng):
    if cfg.pairs_per_batch <= 0 or cfg.pairs_per_batch >= ws.n_pairs:
        return slice(None)
    return rng.choice(ws.n_pairs, size=cfg.pairs_per_batch, replace=False)


def reference_loss(rbar: np.ndarray, data: RankedDatasets, cfg: PreferenceFitConfig | None = None) -> float:
    cfg = cfg or PreferenceFitConfig()
    ws = _workspace(rbar.shape, data, cfg)
    loss, _ = ws.loss_and_grad(rbar, cfg.within_coeff, slice(None), False)
    return loss


def reference_loss_gradient(rbar: np.ndarray, data: RankedDatasets, cfg: PreferenceFitConfig | None = None) -> np.ndarray:
    cfg = cfg or PreferenceFitConfig()
    ws = _workspace(rbar.shape, data, cfg)
    _, grad = ws.loss_and_grad(rbar, cfg.within_coeff, slice(None), True)
    return grad


def _require_nonempty(data: RankedDatasets) -> None:
    if data.n_levels < 2:
        raise FitError("need at least two expertise levels")
    for i, lvl in enumerate(data.levels):
        if len(lvl) == 0:
            raise FitError(f"level {i + 1} has no trajectories")


def fit_reference_reward(
    data: RankedDatasets,
    n_states: int,
    n_actions: int,
    cfg: PreferenceFitConfig | None = None,
):
    """Gradient descent with halving backtracking; returns (rbar, loss_trace).

    Unobserved (s,a) entries are held at zero throughout. Raises FitError if
    the accepted loss still increases for DIVERGENCE_PATIENCE consecutive
    iterations (a step size problem, not a data problem).
    """
    cfg = cfg or PreferenceFitConfig()
    rng = np.random.default_rng(cfg.seed)
    ws = _workspace((n_states, n_actions), data, cfg)
    mask = observed_mask(data, n_states, n_actions)
    rbar = np.zeros((n_states, n_actions))
    step = cfg.step_size
    trace = []
    worse_streak = 0
    prev = np.inf
    for _ in range(cfg.iterations):
        sel = _pair_selection(ws, cfg, rng)
        loss, grad = ws.loss_and_grad(rbar, cfg.within_coeff, sel, True)
        grad = np.where(mask, grad, 0.0)
        for _ in range(MAX_HALVINGS):
            cand = rbar - step * grad
            cand_loss, _ = ws.loss_and_grad(cand, cfg.within_coeff, sel, False)
            if cand_loss <= loss or np.allclose(cand, rbar):
                break
            step *= 0.5
        rbar = cand
        trace.append(loss)
        if loss > prev + 1e-12:
            worse_streak += 1
            if worse_streak >= DIVERGENCE_PATIENCE:
                raise FitError("loss diverging; reduce the step size")
        else:
            worse_streak = 0
        prev = loss
        step *= 1.5  # re-grow so backtracking adapts in both directions
    return rbar, trace


def level_means(rbar: np.ndarray, data: RankedDatasets) -> np.ndarray:
    """Mean reference reward over each level's transitions."""
    out = []
    for i in range(data.n_levels):
        s, a, _ = data.flat_transitions(i)
        out.append(float(rbar[s, a].mean()))
    return np.array(out)


def estimate_weights(rbar: np.ndarray, data: RankedDatasets, eps: float = 1e-6) -> np.ndarray:
    """Dataset weights proportional to per-level mean reference reward.

    Means are shifted up by -min(0, min mean) + eps first, since the ratio
    formula assumes positive means while a fitted table can dip negative.
    """
    means = level_means(rbar, data)
    shifted = means - min(0.0, float(means.min())) + eps
    denom = shifted.sum()
    if denom <= 0:
        raise FitError("non-positive weight denominator after shift")
    return shifted / denom


def normalize_reference(rbar: np.ndarray, mask: np.ndarray, r_max: float = REFERENCE_SCALE) -> np.ndarray:
    """Affinely map the observed entries onto [0, r_max] (unobserved stay 0).

    The preference loss pins only differences of reference rewards, so the
    scale is a free choice; a fixed range keeps the downstream Q magnitudes
    comparable across datasets.
    """
    vals = rbar[mask]
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-12:
        return np.where(mask, r_max, 0.0)
    out = np.zeros_like(rbar)
    out[mask] = (rbar[mask] - lo) / (hi - lo) * r_max
    return out

"""Per-class feature attributions for [C, T] inputs.

Four methods share one calling convention: each produces a raw [C, T]
attribution slice for a requested class, and `attribute_both_classes`
stacks the normal/abnormal slices into the [C, T, 2] tensor the
cross-modal pipeline consumes. Gradient methods need a model exposing
`class_gradient(x, k)`; perturbation methods only need
`class_probability(x, k)`.

All methods are deterministic given (model, input, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetTooSmall,
    DegenerateDesign,
    EmptyBaselineSet,
    InvalidConfig,
    ShapeMismatch,
)

METHOD_NAMES = ("ig", "gradshap", "kernelshap", "lime")


@dataclass
class BaselineSet:
    """Reference distribution of normal-labeled [C, T] inputs.

    Must stay disjoint from the explained model's train/val/test cases;
    `case_ids` lets callers audit that.
    """

    records: list[np.ndarray]
    case_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.records:
            raise EmptyBaselineSet("baseline set needs at least one record")
        self.records = [np.asarray(r, dtype=np.float64) for r in self.records]
        shape = self.records[0].shape
        for r in self.records:
            if r.shape != shape:
                raise ShapeMismatch(f"baseline shapes differ: {r.shape} vs {shape}")

    def mean(self) -> np.ndarray:
        return np.mean(np.stack(self.records), axis=0)


@dataclass
class ClassAttribution:
    """Raw per-channel, per-time, per-class attributions [C, T, 2]."""

    case_id: str
    values: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[2] != 2:
            raise ShapeMismatch(f"values must be [C, T, 2], got {self.values.shape}")
        if self.values.shape[0] not in (3, 12):
            raise ShapeMismatch(
                f"channel count must be 3 or 12, got {self.values.shape[0]}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidConfig("attribution values must be finite")
        if self.method not in METHOD_NAMES:
            raise InvalidConfig(f"unknown method {self.method!r}")

    def class_slice(self, k: int) -> np.ndarray:
        return self.values[:, :, k]


# ---------------------------------------------------------------------------
# integrated gradients
# ---------------------------------------------------------------------------

def integrated_gradients(model, x: np.ndarray, baseline: np.ndarray | None = None,
                         steps: int = 50, noise_samples: int = 40,
                         noise_sigma: float = 0.15, target_class: int = 1,
                         seed: int = 0) -> np.ndarray:
    """Midpoint-rule path integral of the class gradient from baseline to x.

    With noise_samples > 1 the whole integral is averaged over Gaussian
    noise-injected copies of the input (the noisy endpoint also scales the
    gradient sum, preserving completeness per sample).
    """
    x = np.asarray(x, dtype=np.float64)
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if baseline.shape != x.shape:
        raise ShapeMismatch(f"baseline {baseline.shape} vs input {x.shape}")
    if steps < 1:
        raise InvalidConfig(f"steps must be >= 1, got {steps}")
    if noise_sigma < 0:
        raise InvalidConfig(f"noise_sigma must be >= 0, got {noise_sigma}")
    if noise_samples < 1:
        raise InvalidConfig(f"noise_samples must be >= 1, got {noise_samples}")

    rng = np.random.default_rng(seed)
    alphas = (np.arange(steps) + 0.5) / steps
    total = np.zeros_like(x)
    for _ in range(noise_samples):
        xs = x if noise_samples == 1 else x + rng.normal(scale=noise_sigma, size=x.shape)
        delta = xs - baseline
        grad_sum = np.zeros_like(x)
        for alpha in alphas:
            grad_sum += model.class_gradient(baseline + alpha * delta, target_class)
        total += delta * grad_sum / steps
    return total / noise_samples


# ---------------------------------------------------------------------------
# gradient SHAP
# ---------------------------------------------------------------------------

def gradient_shap(model, x: np.ndarray, baselines: BaselineSet,
                  n_samples: int = 100, noise_sigma: float = 0.0,
                  target_class: int = 1, seed: int = 0) -> np.ndarray:
    """Monte-Carlo expected gradients over the reference distribution.

    Each sample draws a baseline b and alpha ~ U[0, 1], evaluates the class
    gradient at b + alpha * (x - b) (plus optional Gaussian noise) and
    scales it by (x - b).
    """
    x = np.asarray(x, dtype=np.float64)
    if baselines.records[0].shape != x.shape:
        raise ShapeMismatch(
            f"baselines {baselines.records[0].shape} vs input {x.shape}")
    if n_samples < 1:
        raise InvalidConfig(f"n_samples must be >= 1, got {n_samples}")

    rng = np.random.default_rng(seed)
    total = np.zeros_like(x)
    for _ in range(n_samples):
        b = baselines.records[rng.integers(len(baselines.records))]
        alpha = rng.random()
        point = b + alpha * (x - b)
        if noise_sigma > 0:
            point = point + rng.normal(scale=noise_sigma, size=x.shape)
        total += model.class_gradient(point, target_class) * (x - b)
    return total / n_samples


# ---------------------------------------------------------------------------
# kernel SHAP
# ---------------------------------------------------------------------------

def contiguous_segment_groups(n_channels: int, n_samples: int,
                              segment_len: int) -> list[np.ndarray]:
    """Per-channel contiguous time segments as boolean [C, T] masks."""
    if segment_len < 1:
        raise InvalidConfig(f"segment_len must be >= 1, got {segment_len}")
    groups = []
    for c in range(n_channels):
        for start in range(0, n_samples, segment_len):
            mask = np.zeros((n_channels, n_samples), dtype=bool)
            mask[c, start:start + segment_len] = True
            groups.append(mask)
    return groups


def _shapley_kernel_weight(m: int, s: int) -> float:
    from math import comb
    return (m - 1) / (comb(m, s) * s * (m - s))


def _constrained_wls(z: np.ndarray, y: np.ndarray, weights: np.ndarray,
                     delta: float) -> np.ndarray:
    """Weighted least squares over coalition rows with the attribution sum
    pinned to delta (intercept fixed at the empty-coalition value)."""
    n, m = z.shape
    if m == 1:
        return np.array([delta])
    # eliminate the last variable: phi_m = delta - sum(phi_i)
    zm = z[:, -1]
    design = z[:, :-1] - zm[:, None]
    target = y - zm * delta
    sw = np.sqrt(weights)
    phi_head, *_ = np.linalg.lstsq(design * sw[:, None], target * sw, rcond=None)
    return np.concatenate([phi_head, [delta - phi_head.sum()]])


def kernel_shap(model, x: np.ndarray, budget: int = 100,
                background: np.ndarray | None = None, target_class: int = 1,
                seed: int = 0, groups: list[np.ndarray] | None = None,
                segment_len: int = 12) -> np.ndarray:
    """Shapley-kernel-weighted regression over masked feature groups.

    Cells are grouped (default: contiguous `segment_len`-sample slices per
    channel) so the evaluation budget can cover the feature space; masked
    groups take their background values. The budget counts model
    evaluations, including the two endpoint evaluations. Each group's value
    is spread uniformly over its member cells.
    """
    x = np.asarray(x, dtype=np.float64)
    background = (np.zeros_like(x) if background is None
                  else np.asarray(background, dtype=np.float64))
    if background.shape != x.shape:
        raise ShapeMismatch(f"background {background.shape} vs input {x.shape}")
    if groups is None:
        groups = contiguous_segment_groups(x.shape[0], x.shape[1], segment_len)
    m = len(groups)
    if budget < m + 2:
        raise BudgetTooSmall(f"budget {budget} < {m} groups + 2 endpoint evaluations")

    flat_groups = np.stack([g.ravel() for g in groups])  # [M, C*T] bool

    def coalition_value(mask_vec: np.ndarray) -> float:
        cells = flat_groups[mask_vec].any(axis=0) if mask_vec.any() else np.zeros(
            x.size, dtype=bool)
        xz = np.where(cells.reshape(x.shape), x, background)
        return model.class_probability(xz, target_class)

    f_full = model.class_probability(x, target_class)
    f_empty = model.class_probability(background, target_class)
    delta = f_full - f_empty
    n_coalitions = budget - 2

    if m == 1:
        phi = np.array([delta])
    else:
        if 2 ** m - 2 <= n_coalitions:
            rows = []
            weights = []
            for code in range(1, 2 ** m - 1):
                mask = np.array([(code >> i) & 1 for i in range(m)], dtype=bool)
                rows.append(mask)
                weights.append(_shapley_kernel_weight(m, int(mask.sum())))
        else:
            rng = np.random.default_rng(seed)
            size_probs = np.array([(m - 1) / (s * (m - s)) for s in range(1, m)])
            size_probs /= size_probs.sum()
            rows = []
            for _ in range(n_coalitions):
                s = int(rng.choice(np.arange(1, m), p=size_probs))
                mask = np.zeros(m, dtype=bool)
                mask[rng.choice(m, size=s, replace=False)] = True
                rows.append(mask)
            # sampling frequency already follows the kernel over sizes
            weights = [1.0] * len(rows)

        z = np.array(rows, dtype=np.float64)
        y = np.array([coalition_value(mask) for mask in rows]) - f_empty
        phi = _constrained_wls(z, y, np.asarray(weights), delta)

    attr = np.zeros(x.size)
    for g_mask, value in zip(flat_groups, phi):
        attr[g_mask] += value / g_mask.sum()
    return attr.reshape(x.shape)


# ---------------------------------------------------------------------------
# LIME
# ---------------------------------------------------------------------------

def lime_explain(model, x: np.ndarray, n_perturb: int = 500,
                 kernel_width: float | None = None, target_class: int = 1,
                 seed: int = 0, background: np.ndarray | None = None) -> np.ndarray:
    """Local linear surrogate over binary time-step on/off perturbations.

    A feature is one time-step: switching it off replaces that column (all
    channels) with the background value. Weighted least squares with an
    exponential locality kernel yields per-time-step coefficients, which
    are replicated across channels in the returned slice.
    """
    x = np.asarray(x, dtype=np.float64)
    background = (np.zeros_like(x) if background is None
                  else np.asarray(background, dtype=np.float64))
    if background.shape != x.shape:
        raise ShapeMismatch(f"background {background.shape} vs input {x.shape}")
    n_features = x.shape[1]
    if n_perturb < n_features + 1:
        raise BudgetTooSmall(
            f"n_perturb {n_perturb} < {n_features} time-step features + 1")
    if kernel_width is None:
        kernel_width = 0.75 * np.sqrt(n_features)

    for attempt_seed in (seed, seed + 104729):
        rng = np.random.default_rng(attempt_seed)
        z = rng.integers(0, 2, size=(n_perturb, n_features)).astype(np.float64)
        design = np.hstack([np.ones((n_perturb, 1)), z])
        if np.linalg.matrix_rank(design) == n_features + 1:
            break
    else:
        raise DegenerateDesign("perturbation matrix rank-deficient after re-sample")

    preds = np.empty(n_perturb)
    for j in range(n_perturb):
        xz = np.where(z[j][None, :] > 0, x, background)
        preds[j] = model.class_probability(xz, target_class)

    # distance from the unperturbed sample in binary feature space
    d_sq = n_features - z.sum(axis=1)
    weights = np.exp(-d_sq / kernel_width ** 2)
    sw = np.sqrt(weights)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], preds * sw, rcond=None)
    return np.tile(coef[1:], (x.shape[0], 1))


# ---------------------------------------------------------------------------
# class-pair driver
# ---------------------------------------------------------------------------

_METHOD_FNS = {
    "ig": integrated_gradients,
    "gradshap": gradient_shap,
    "kernelshap": kernel_shap,
    "lime": lime_explain,
}


def attribute_both_classes(model, x: np.ndarray, method: str, case_id: str = "",
                           seed: int = 0, **params) -> ClassAttribution:
    """Run one method for k=0 and k=1 against the model's class probabilities
    and stack the slices into a ClassAttribution."""
    if method not in _METHOD_FNS:
        raise InvalidConfig(f"unknown method {method!r}; expected one of {METHOD_NAMES}")
    fn = _METHOD_FNS[method]
    slices = [fn(model, x, target_class=k, seed=seed, **params) for k in (0, 1)]
    recorded = {k: v for k, v in params.items()
                if isinstance(v, (int, float, str, bool))}
    recorded["seed"] = seed
    return ClassAttribution(case_id=case_id,
                            values=np.stack(slices, axis=-1),
                            method=method, params=recorded)

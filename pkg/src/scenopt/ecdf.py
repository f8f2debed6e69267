"""Piecewise-linear empirical CDF and inverse CDF of a finite sample.

Every chance constraint in the toolkit is expressed through the quantile
function implemented here.  The CDF of a sample z_1 < z_2 < ... < z_n is 0
at or below z_1, 1 above z_n, and linear on each [z_i, z_{i+1}]; its inverse
interpolates between adjacent order statistics.  Samples with repeated
values must be regularized with :func:`break_ties` first; the evaluation
helpers in this module do that automatically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SortedSample", "break_ties", "ecdf_eval", "ecdf_inverse"]

#: Relative magnitude of the automatic tie-breaking perturbation.
TIE_EPS_REL = 1e-9


@dataclass(frozen=True)
class SortedSample:
    """A strictly increasing finite sample of reals.

    Construct directly from already-strict values, or go through
    :func:`break_ties` for raw data that may contain duplicates.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("sample must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sample contains non-finite values")
        if vals.size > 1 and not np.all(np.diff(vals) > 0):
            raise ValueError("sample must be strictly increasing; use break_ties")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size


def _auto_epsilon(sorted_vals: np.ndarray) -> np.ndarray:
    """Tie-breaking step: TIE_EPS_REL scaled by the sample's absolute range.

    Falls back to the magnitude of the values when the range is zero (all
    entries equal).  Operates on the last axis of an already sorted array.
    """
    span = sorted_vals[..., -1] - sorted_vals[..., 0]
    scale = np.maximum(np.abs(sorted_vals[..., 0]), np.abs(sorted_vals[..., -1]))
    span = np.where(span > 0.0, span, np.maximum(scale, 1.0))
    return TIE_EPS_REL * span


def prepare_values(values: np.ndarray, epsilon: float | np.ndarray | None = None) -> np.ndarray:
    """Sort along the last axis and break ties; result is strictly increasing.

    The recurrence out[j] = max(v[j], out[j-1] + eps) is evaluated in closed
    form as a running maximum of v[j] - j*eps, which vectorizes over leading
    axes.  For exact ties this shifts the k-th duplicate by k*eps, and it
    guarantees strict monotonicity for arbitrary input.
    """
    v = np.sort(np.asarray(values, dtype=float), axis=-1, kind="stable")
    m = v.shape[-1]
    if m <= 1:
        return v
    eps = _auto_epsilon(v) if epsilon is None else np.asarray(epsilon, dtype=float)
    offsets = np.arange(m, dtype=float)
    eps = np.expand_dims(eps, -1) if np.ndim(eps) < v.ndim else eps
    shifted = v - eps * offsets
    return np.maximum.accumulate(shifted, axis=-1) + eps * offsets


def break_ties(values, epsilon: float = 1e-9) -> SortedSample:
    """Sort ``values`` (stably) and perturb duplicates into a strict order.

    Each run of k equal values becomes value, value+eps, ..., value+(k-1)*eps,
    so every output stays within epsilon times its duplicate index of the
    input.  Inputs without ties are returned unchanged.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return SortedSample(prepare_values(np.asarray(values, dtype=float), epsilon))


def _sample_values(sample) -> np.ndarray:
    if isinstance(sample, SortedSample):
        return sample.values
    return SortedSample(np.asarray(sample, dtype=float)).values


def ecdf_eval(sample, z: float) -> float:
    """Evaluate the piecewise-linear empirical CDF at ``z``.

    Returns 0 for z <= z_1, 1 for z > z_n, and the linear interpolant
    (i - 1 + (z - z_i)/(z_{i+1} - z_i))/(n - 1) on z_i < z <= z_{i+1}.
    A singleton sample is treated as a step function at its single value.
    """
    v = _sample_values(sample)
    n = v.size
    if n == 1:
        return 1.0 if z >= v[0] else 0.0
    if z <= v[0]:
        return 0.0
    if z > v[-1]:
        return 1.0
    i = int(np.searchsorted(v, z, side="left"))  # v[i-1] < z <= v[i]
    return (i - 1 + (z - v[i - 1]) / (v[i] - v[i - 1])) / (n - 1)


def _knot_index(alpha: float, n: int) -> tuple[int, float]:
    """Bracket index (1-based) and interpolation weight for the inverse CDF.

    The index minimizes (n-1)*alpha - j + 1 over j with j - 1 <= alpha*(n-1).
    When alpha*(n-1) is an integer two indices qualify; both give the same
    value by continuity and the smaller one is used.  The product alpha*(n-1)
    is snapped to integers within a few ulps so that alpha = (i-1)/(n-1)
    recovers the i-th order statistic exactly.
    """
    t = alpha * (n - 1)
    tr = float(round(t))
    if abs(t - tr) <= 32.0 * np.finfo(float).eps * max(1.0, abs(tr)):
        t = tr
    i = int(np.floor(t)) + 1
    if i > 1 and t == i - 1:
        i -= 1
    i = min(i, n - 1)
    return i, t - i + 1


def ecdf_inverse(sample, alpha: float) -> float:
    """Evaluate the inverse of the piecewise-linear empirical CDF.

    Returns z_1 at alpha=0 and z_n at alpha=1; in between it interpolates
    between the bracketing order statistics.  Exact functional inverse of
    :func:`ecdf_eval` on [z_1, z_n].
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    v = _sample_values(sample)
    n = v.size
    if n == 1 or alpha == 0.0:
        return float(v[0])
    if alpha == 1.0:
        return float(v[-1])
    i, w = _knot_index(alpha, n)
    if w == 1.0:
        return float(v[i])
    if w == 0.0:
        return float(v[i - 1])
    return float(v[i - 1] + (v[i] - v[i - 1]) * w)


def quantile_prepared(prepared: np.ndarray, alpha: float) -> np.ndarray:
    """Inverse CDF along the last axis of tie-broken, sorted values.

    ``prepared`` must come from :func:`prepare_values`.  Vectorized over all
    leading axes; used by the formulation compilers where many per-scenario
    quantiles share one probability level.
    """
    m = prepared.shape[-1]
    if m == 1:
        return prepared[..., 0]
    if alpha <= 0.0:
        return prepared[..., 0]
    if alpha >= 1.0:
        return prepared[..., -1]
    i, w = _knot_index(alpha, m)
    if w == 1.0:
        return prepared[..., i]
    if w == 0.0:
        return prepared[..., i - 1]
    lo = prepared[..., i - 1]
    return lo + (prepared[..., i] - prepared[..., i - 1]) * w


def quantile_of(values: np.ndarray, alpha: float) -> np.ndarray:
    """Quantile of raw (unsorted, possibly tied) values along the last axis."""
    return quantile_prepared(prepare_values(values), alpha)

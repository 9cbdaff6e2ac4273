"""Recursive prefix estimators.

Every estimator here can be evaluated on all growing prefixes of a series at
once; the resulting sequence of estimates is the raw material for the
self-normalizer.  Batch variants evaluate whole matrices of series (one row
per series) and are what the bootstrap and Monte Carlo layers call in their
inner loops.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    DegenerateVarianceError,
    EstimateSequence,
    LagTooLargeError,
    SeriesLike,
    SolverFailedError,
    TooShortError,
    ValidationError,
    as_series,
)

# first prefix long enough for a mean-corrected lag-k estimate
def _autocov_first_valid(k: int) -> int:
    return k + 2


SPECTRAL_FIRST_VALID = 4
LAD_EXTRA_PREFIX = 10  # lad estimates start at t = order + 10

_DEGENERATE_RTOL = 1e-14


# ---------------------------------------------------------------------------
# Spectral weight functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhiSpec:
    """Weight function on [0, pi] for spectral averages.

    kind "indicator" integrates the spectral density over [0, x]; kind
    "cosine" (2 cos(m lambda)) picks out the lag-m autocovariance.
    """

    kind: str
    x: float = 0.0
    m: int = 0

    def __post_init__(self):
        if self.kind == "indicator":
            if not 0.0 <= self.x <= math.pi:
                raise ValidationError(f"indicator cutoff {self.x} outside [0, pi]")
        elif self.kind == "cosine":
            if self.m < 0:
                raise ValidationError("cosine order must be >= 0")
        else:
            raise ValidationError(f"unknown weight function kind {self.kind!r}")


def fourier_coeffs(phi: PhiSpec, count: int) -> np.ndarray:
    """Cosine-series weights g_0..g_{count-1}.

    The spectral average of a density f equals sum_k gamma(k) g_k where
    g_0 is the 0th Fourier coefficient of the weight over [0, pi] and
    g_k folds the +-k coefficients together.
    """
    if count < 1:
        raise ValidationError("need at least one coefficient")
    g = np.zeros(count)
    if phi.kind == "indicator":
        g[0] = phi.x / (2.0 * math.pi)
        k = np.arange(1, count)
        if count > 1:
            g[1:] = np.sin(k * phi.x) / (math.pi * k)
    else:  # cosine
        if phi.m < count:
            g[phi.m] = 1.0
    return g


# ---------------------------------------------------------------------------
# Estimator specification / canonical string forms
# ---------------------------------------------------------------------------

_PI_TOKENS = {"pi": math.pi, "pi/2": math.pi / 2, "pi/4": math.pi / 4,
              "3pi/4": 3 * math.pi / 4}


def _parse_angle(token: str) -> float:
    token = token.strip().lower()
    if token in _PI_TOKENS:
        return _PI_TOKENS[token]
    try:
        return float(token)
    except ValueError:
        raise ValidationError(f"cannot parse angle {token!r}") from None


def _format_angle(x: float) -> str:
    for name, val in _PI_TOKENS.items():
        if abs(x - val) < 1e-12:
            return name
    return repr(x)


@dataclass(frozen=True)
class EstimatorSpec:
    """Which statistic to track over prefixes.

    Canonical string forms: "mean", "median", "acov:K", "acf:K",
    "specmean:X", "specratio:X" (X a float or pi/2-style token), "ladar:P".
    """

    kind: str
    lag: int = 0
    x: float = 0.0
    order: int = 0
    divisor: str = "full_n"  # or "n_minus_lag"

    KINDS = ("mean", "median", "acov", "acf", "specmean", "specratio", "ladar")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError(f"unknown estimator kind {self.kind!r}")
        if self.divisor not in ("full_n", "n_minus_lag"):
            raise ValidationError(f"unknown divisor {self.divisor!r}")
        if self.kind in ("acov", "acf") and self.lag < 0:
            raise ValidationError("lag must be >= 0")
        if self.kind in ("specmean", "specratio") and not 0.0 <= self.x <= math.pi:
            raise ValidationError(f"spectral cutoff {self.x} outside [0, pi]")
        if self.kind == "ladar" and self.order < 1:
            raise ValidationError("autoregression order must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "EstimatorSpec":
        parts = text.strip().split(":")
        kind = parts[0].lower()
        args = parts[1:]
        if kind in ("mean", "median"):
            if args:
                raise ValidationError(f"{kind} takes no arguments")
            return cls(kind)
        if kind in ("acov", "acf"):
            if len(args) != 1:
                raise ValidationError(f"{kind} needs a lag, e.g. {kind}:1")
            try:
                lag = int(args[0])
            except ValueError:
                raise ValidationError(f"bad lag {args[0]!r}") from None
            return cls(kind, lag=lag)
        if kind in ("specmean", "specratio"):
            if len(args) != 1:
                raise ValidationError(f"{kind} needs a cutoff, e.g. {kind}:pi/2")
            return cls(kind, x=_parse_angle(args[0]))
        if kind == "ladar":
            if len(args) != 1:
                raise ValidationError("ladar needs an order, e.g. ladar:2")
            try:
                order = int(args[0])
            except ValueError:
                raise ValidationError(f"bad order {args[0]!r}") from None
            return cls(kind, order=order)
        raise ValidationError(f"unknown estimator {text!r}")

    def canonical(self) -> str:
        if self.kind in ("mean", "median"):
            return self.kind
        if self.kind in ("acov", "acf"):
            return f"{self.kind}:{self.lag}"
        if self.kind in ("specmean", "specratio"):
            return f"{self.kind}:{_format_angle(self.x)}"
        return f"ladar:{self.order}"

    @property
    def dim(self) -> int:
        return self.order if self.kind == "ladar" else 1

    def first_valid(self) -> int:
        if self.kind in ("mean", "median"):
            return 1
        if self.kind in ("acov", "acf"):
            return _autocov_first_valid(self.lag)
        if self.kind in ("specmean", "specratio"):
            return SPECTRAL_FIRST_VALID
        return self.order + LAD_EXTRA_PREFIX

    def phi(self) -> PhiSpec:
        if self.kind not in ("specmean", "specratio"):
            raise ValidationError(f"{self.kind} has no weight function")
        return PhiSpec("indicator", x=self.x)


# ---------------------------------------------------------------------------
# Batch kernels (one series per row)
# ---------------------------------------------------------------------------

def _check_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected (series, time) matrix, got shape {x.shape}")
    return x


def batch_prefix_mean(x: np.ndarray) -> np.ndarray:
    """(B, n) -> (B, n) prefix means, first column = first observation."""
    x = _check_matrix(x)
    t = np.arange(1, x.shape[1] + 1, dtype=np.float64)
    return np.cumsum(x, axis=1) / t


def batch_prefix_median(x: np.ndarray) -> np.ndarray:
    """(B, n) -> (B, n) prefix medians (midpoint rule on even prefixes)."""
    x = _check_matrix(x)
    n = x.shape[1]
    out = np.empty_like(x)
    for t in range(1, n + 1):
        out[:, t - 1] = np.median(x[:, :t], axis=1)
    return out


def _autocov_grid(x: np.ndarray, k: int, divisor: str, t_min: int) -> np.ndarray:
    """Mean-corrected lag-k autocovariance on every prefix t = t_min..n.

    Uses prefix sums so the whole grid costs O(B n):
      sum_{j<=t-k} (x_j - m_t)(x_{j+k} - m_t)
        = Q_t - m_t (P_{t-k} + P_t - P_k) + (t-k) m_t^2
    with P the prefix sums, Q the prefix sums of x_j x_{j+k}, m_t = P_t / t.
    """
    x = _check_matrix(x)
    n = x.shape[1]
    if not 0 <= k <= n - 1 or t_min > n:
        raise LagTooLargeError(k, n)
    if t_min < max(k + 1, 1):
        raise ValidationError(f"t_min {t_min} below first defined prefix {k + 1}")
    p = np.cumsum(x, axis=1)
    prod = x[:, : n - k] * x[:, k:]
    q = np.cumsum(prod, axis=1)
    ts = np.arange(t_min, n + 1)
    pt = p[:, ts - 1]
    ptk = q[:, ts - k - 1]
    p_before = p[:, ts - k - 1]
    p_first_k = p[:, k - 1][:, None] if k >= 1 else 0.0
    m = pt / ts
    num = ptk - m * (p_before + pt - p_first_k) + (ts - k) * m * m
    den = ts if divisor == "full_n" else (ts - k)
    return num / den


def batch_prefix_autocov(x: np.ndarray, k: int, divisor: str = "full_n") -> np.ndarray:
    """(B, n) -> (B, n-k-1) prefix autocovariances, prefixes k+2..n."""
    return _autocov_grid(x, k, divisor, _autocov_first_valid(k))


def batch_prefix_autocorr(
    x: np.ndarray, k: int, divisor: str = "full_n"
) -> tuple[np.ndarray, np.ndarray]:
    """Prefix lag-k autocorrelations; returns (values, ok_rows).

    Rows whose lag-0 estimate degenerates anywhere on the used prefix range
    come back as NaN with ok False; single-series callers turn that into
    DegenerateVarianceError, resampling callers redraw.
    """
    x = _check_matrix(x)
    if k < 1:
        raise ValidationError("autocorrelation lag must be >= 1")
    t0 = _autocov_first_valid(k)
    num = _autocov_grid(x, k, divisor, t0)
    # the lag-0 divisor is t under either convention (t - 0 = t)
    den = _autocov_grid(x, 0, "full_n", t0)
    floor = _DEGENERATE_RTOL * np.maximum(den[:, -1], 0.0)[:, None]
    ok = (den > floor).all(axis=1) & (den[:, -1] > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = num / den
    vals = np.where(ok[:, None], vals, np.nan)
    return vals, ok


def batch_prefix_spectral(
    x: np.ndarray, phi: PhiSpec, ratio: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Prefix spectral averages sum_k gamma_t(k) g_k for t = 4..n.

    For ratio=True divides by gamma_t(0)/2, the spectral average of the
    constant weight, giving a normalized spectral distribution value.
    """
    x = _check_matrix(x)
    b, n = x.shape
    if n < SPECTRAL_FIRST_VALID:
        raise TooShortError(n, SPECTRAL_FIRST_VALID)
    g = fourier_coeffs(phi, n)
    out = np.zeros((b, n))
    for k in range(n):
        if g[k] == 0.0:
            continue
        t0 = max(k + 1, 1)
        out[:, t0 - 1:] += g[k] * _autocov_grid(x, k, "full_n", t0)
    vals = out[:, SPECTRAL_FIRST_VALID - 1:]
    if not ratio:
        return vals, np.ones(b, dtype=bool)
    den = _autocov_grid(x, 0, "full_n", SPECTRAL_FIRST_VALID) / 2.0
    floor = _DEGENERATE_RTOL * np.maximum(den[:, -1], 0.0)[:, None]
    ok = (den > floor).all(axis=1) & (den[:, -1] > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = vals / den
    vals = np.where(ok[:, None], vals, np.nan)
    return vals, ok


def batch_prefix_values(spec: EstimatorSpec, x: np.ndarray) -> tuple[np.ndarray, int, np.ndarray]:
    """Dispatch: (values (B, rows), first_valid, ok (B,)) for scalar estimators."""
    x = _check_matrix(x)
    b = x.shape[0]
    all_ok = np.ones(b, dtype=bool)
    if spec.kind == "mean":
        return batch_prefix_mean(x), 1, all_ok
    if spec.kind == "median":
        return batch_prefix_median(x), 1, all_ok
    if spec.kind == "acov":
        return batch_prefix_autocov(x, spec.lag, spec.divisor), spec.first_valid(), all_ok
    if spec.kind == "acf":
        vals, ok = batch_prefix_autocorr(x, spec.lag, spec.divisor)
        return vals, spec.first_valid(), ok
    if spec.kind in ("specmean", "specratio"):
        vals, ok = batch_prefix_spectral(x, spec.phi(), spec.kind == "specratio")
        return vals, spec.first_valid(), ok
    raise ValidationError(f"{spec.kind} has no batch kernel; evaluate per series")


# ---------------------------------------------------------------------------
# Public single-series estimators
# ---------------------------------------------------------------------------

def _wrap(values_row: np.ndarray, first_valid: int, n: int) -> EstimateSequence:
    return EstimateSequence(values_row[:, None], first_valid, n)


def prefix_mean(ts: SeriesLike) -> EstimateSequence:
    """Running means of all prefixes."""
    s = as_series(ts)
    return _wrap(batch_prefix_mean(s.values[None, :])[0], 1, s.n)


def prefix_median(ts: SeriesLike) -> EstimateSequence:
    """Running medians in O(n log n) via two heaps.

    Even-length prefixes use the midpoint of the two central order
    statistics.
    """
    s = as_series(ts)
    lo: list[float] = []  # max-heap (negated): lower half
    hi: list[float] = []  # min-heap: upper half
    out = np.empty(s.n)
    for i, v in enumerate(s.values):
        if lo and v > -lo[0]:
            heapq.heappush(hi, float(v))
        else:
            heapq.heappush(lo, -float(v))
        if len(lo) > len(hi) + 1:
            heapq.heappush(hi, -heapq.heappop(lo))
        elif len(hi) > len(lo):
            heapq.heappush(lo, -heapq.heappop(hi))
        out[i] = -lo[0] if len(lo) > len(hi) else (-lo[0] + hi[0]) / 2.0
    return _wrap(out, 1, s.n)


def prefix_autocov(ts: SeriesLike, k: int, divisor: str = "full_n") -> EstimateSequence:
    """Running mean-corrected lag-k autocovariances, prefixes k+2..n.

    divisor "full_n" divides the lag-k sum by t (the usual gamma-hat);
    "n_minus_lag" divides by t - k.
    """
    s = as_series(ts)
    vals = batch_prefix_autocov(s.values[None, :], k, divisor)[0]
    return _wrap(vals, _autocov_first_valid(k), s.n)


def prefix_autocorr(ts: SeriesLike, k: int, divisor: str = "full_n") -> EstimateSequence:
    """Running lag-k autocorrelations, prefixes k+2..n."""
    s = as_series(ts)
    vals, ok = batch_prefix_autocorr(s.values[None, :], k, divisor)
    if not ok[0]:
        raise DegenerateVarianceError(
            "a prefix variance vanished; autocorrelation undefined"
        )
    return _wrap(vals[0], _autocov_first_valid(k), s.n)


def prefix_spectral_mean(ts: SeriesLike, phi: PhiSpec) -> EstimateSequence:
    """Running spectral averages of the prefix periodogram, prefixes 4..n."""
    s = as_series(ts)
    vals, _ = batch_prefix_spectral(s.values[None, :], phi, ratio=False)
    return _wrap(vals[0], SPECTRAL_FIRST_VALID, s.n)


def prefix_spectral_ratio(ts: SeriesLike, phi: PhiSpec) -> EstimateSequence:
    """Running normalized spectral averages (relative to total mass)."""
    s = as_series(ts)
    vals, ok = batch_prefix_spectral(s.values[None, :], phi, ratio=True)
    if not ok[0]:
        raise DegenerateVarianceError(
            "a prefix variance vanished; spectral ratio undefined"
        )
    return _wrap(vals[0], SPECTRAL_FIRST_VALID, s.n)


# ---------------------------------------------------------------------------
# Least absolute deviation autoregression
# ---------------------------------------------------------------------------

_LAD_TOL = 1e-9
_LAD_MAX_ITER = 200
_LAD_RESID_FLOOR = 1e-8


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    half = w.sum() / 2.0
    cum = np.cumsum(w)
    i = int(np.searchsorted(cum, half))
    if i + 1 < len(v) and abs(cum[i] - half) <= 1e-12 * max(half, 1.0):
        return (v[i] + v[i + 1]) / 2.0
    return float(v[min(i, len(v) - 1)])


def _lad_coordinate_descent(a: np.ndarray, y: np.ndarray, start: np.ndarray) -> Optional[np.ndarray]:
    """Exact 1-d minimization per coordinate via weighted medians of the
    residual breakpoints; used when IRLS stalls."""
    theta = start.copy()
    p = a.shape[1]
    for _ in range(200):
        moved = 0.0
        for j in range(p):
            col = a[:, j]
            mask = np.abs(col) > 0.0
            if not mask.any():
                continue
            partial = y - a @ theta + col * theta[j]
            ratios = partial[mask] / col[mask]
            new = _weighted_median(ratios, np.abs(col[mask]))
            moved = max(moved, abs(new - theta[j]))
            theta[j] = new
        if moved < _LAD_TOL:
            return theta
    return None


def _lad_fit(a: np.ndarray, y: np.ndarray, start: Optional[np.ndarray]) -> np.ndarray:
    """Iteratively reweighted least squares for the L1 autoregression.

    IRLS with a residual floor can stall at a non-optimal fixed point, so its
    output is always polished by exact coordinate descent (weighted medians of
    the breakpoints), which settles on the piecewise-linear minimizer.
    """
    if start is None:
        theta, *_ = np.linalg.lstsq(a, y, rcond=None)
    else:
        theta = start.copy()
    for _ in range(_LAD_MAX_ITER):
        resid = y - a @ theta
        w = 1.0 / np.maximum(np.abs(resid), _LAD_RESID_FLOOR)
        aw = a * w[:, None]
        try:
            new = np.linalg.solve(a.T @ aw, aw.T @ y)
        except np.linalg.LinAlgError:
            break
        step = float(np.max(np.abs(new - theta)))
        theta = new
        if step < _LAD_TOL:
            break
    polished = _lad_coordinate_descent(a, y, theta)
    if polished is None:
        raise SolverFailedError("L1 autoregression did not converge")
    return polished


def prefix_lad_ar(ts: SeriesLike, p: int) -> EstimateSequence:
    """Running LAD autoregression coefficients, prefixes p+10..n.

    Each prefix solves argmin over phi of sum |X_t - phi_1 X_{t-1} - ... -
    phi_p X_{t-p}|; IRLS with warm starts, exact coordinate descent as the
    fallback.
    """
    if p < 1:
        raise ValidationError("autoregression order must be >= 1")
    s = as_series(ts)
    first = p + LAD_EXTRA_PREFIX
    if s.n < first:
        raise TooShortError(s.n, first)
    x = s.values
    cols = [x[p - 1 - j: len(x) - 1 - j] for j in range(p)]
    design_full = np.column_stack(cols)  # row i predicts x[p + i]
    y_full = x[p:]
    rows = []
    theta: Optional[np.ndarray] = None
    for t in range(first, s.n + 1):
        m = t - p
        theta = _lad_fit(design_full[:m], y_full[:m], theta)
        rows.append(theta.copy())
    return EstimateSequence(np.vstack(rows), first, s.n)


def prefix_estimates(spec: EstimatorSpec, ts: SeriesLike) -> EstimateSequence:
    """Evaluate any estimator spec on one series."""
    s = as_series(ts)
    if spec.kind == "mean":
        return prefix_mean(s)
    if spec.kind == "median":
        return prefix_median(s)
    if spec.kind == "acov":
        return prefix_autocov(s, spec.lag, spec.divisor)
    if spec.kind == "acf":
        return prefix_autocorr(s, spec.lag, spec.divisor)
    if spec.kind == "specmean":
        return prefix_spectral_mean(s, spec.phi())
    if spec.kind == "specratio":
        return prefix_spectral_ratio(s, spec.phi())
    return prefix_lad_ar(s, spec.order)

"""Moving-block bootstrap confidence intervals.

Three schemes around one resampling engine: the raw percentile interval for
sqrt(N)(est* - est), the normal interval with a bootstrap standard error, and
the bootstrapped self-normalized interval, which replaces the simulated limit
quantile by the bootstrap quantile of the resampled pivot.  Resamples draw
ceil(n/l) blocks of length l uniformly and truncate the concatenation to n,
so a fractional last block is used when l does not divide n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import stats

from .core import (
    BlockTooLongError,
    DegenerateVarianceError,
    RngStream,
    SeriesLike,
    TooManyDegenerateResamplesError,
    ValidationError,
    as_series,
)
from .estimators import EstimatorSpec, batch_prefix_values, prefix_estimates
from .inference import (
    Ellipsoid,
    Interval,
    sn_interval,
    sn_pivot,
    sn_region,
    wn_scalar_batch,
)


@dataclass(frozen=True)
class MbbConfig:
    """Block length, resample count, seed, and degenerate-resample policy."""

    block_length: int
    replications: int = 1000
    seed: int = 0
    level: float = 0.95
    max_retries: int = 5
    max_bad_frac: float = 0.05

    def __post_init__(self):
        if self.block_length < 1:
            raise ValidationError("block length must be >= 1")
        if self.replications < 2:
            raise ValidationError("need at least 2 bootstrap replications")
        if not 0.0 < self.level < 1.0:
            raise ValidationError("level must be in (0, 1)")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")


@dataclass(frozen=True)
class MbbResult:
    scheme: str
    estimator: str
    estimate: float
    n_eff: int
    level: float
    block_length: int
    replications: int
    region: Union[Interval, Ellipsoid]
    sigma2: Optional[float] = None  # scheme 2 bootstrap variance of the root
    ustar: Optional[float] = None  # scheme 3 bootstrap pivot quantile

    def to_dict(self) -> dict:
        d = {
            "scheme": self.scheme,
            "estimator": self.estimator,
            "estimate": self.estimate,
            "N": self.n_eff,
            "level": self.level,
            "block_length": self.block_length,
            "replications": self.replications,
        }
        if isinstance(self.region, Interval):
            d["L"] = self.region.lower
            d["U"] = self.region.upper
        else:
            d["center"] = [float(v) for v in self.region.center]
            d["shape"] = [[float(v) for v in row] for row in self.region.shape]
            d["radius2"] = self.region.radius2
        if self.sigma2 is not None:
            d["sigma2"] = self.sigma2
        if self.ustar is not None:
            d["critval"] = self.ustar
        return d


def assemble_blocks(values: np.ndarray, starts: np.ndarray, block_length: int) -> np.ndarray:
    """Concatenate blocks values[s : s+l] for each 0-based start, truncated
    to the original length."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    starts = np.asarray(starts)
    idx = (starts[:, None] + np.arange(block_length)[None, :]).reshape(-1)[:n]
    if idx.shape[0] < n:
        raise ValidationError("not enough blocks to cover the series")
    return values[idx]


def mbb_resample(ts: SeriesLike, block_length: int, rng: Union[RngStream, np.random.Generator]) -> np.ndarray:
    """One moving-block resample of the series."""
    s = as_series(ts)
    n = s.n
    if block_length > n:
        raise BlockTooLongError(block_length, n)
    if block_length < 1:
        raise ValidationError("block length must be >= 1")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    k = math.ceil(n / block_length)
    starts = gen.integers(0, n - block_length + 1, size=k)
    return assemble_blocks(s.values, starts, block_length)


# ---------------------------------------------------------------------------
# Resampling engine
# ---------------------------------------------------------------------------

def _draw_resamples(x: np.ndarray, block_length: int, rows: int, gen: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    k = math.ceil(n / block_length)
    starts = gen.integers(0, n - block_length + 1, size=(rows, k))
    idx = (starts[:, :, None] + np.arange(block_length)[None, None, :]).reshape(rows, -1)[:, :n]
    return x[idx]


def _bootstrap_prefix_values(
    x: np.ndarray,
    spec: EstimatorSpec,
    cfg: MbbConfig,
    extra_ok: Optional[Callable[[np.ndarray, int], np.ndarray]] = None,
) -> tuple[np.ndarray, int]:
    """Prefix-value rows for cfg.replications resamples.

    Rows with a degenerate estimator (or failing extra_ok, e.g. a
    non-positive normalizer) are redrawn up to max_retries times, then
    dropped; more than max_bad_frac dropped rows aborts.
    """
    n = x.shape[0]
    if cfg.block_length > n:
        raise BlockTooLongError(cfg.block_length, n)
    gen = RngStream(cfg.seed).child("mbb", cfg.block_length).generator()
    xs = _draw_resamples(x, cfg.block_length, cfg.replications, gen)
    vals, first_valid, ok = batch_prefix_values(spec, xs)
    if extra_ok is not None:
        ok = ok & extra_ok(vals, first_valid)
    retries = 0
    while not ok.all() and retries < cfg.max_retries:
        retries += 1
        bad = np.flatnonzero(~ok)
        xs_new = _draw_resamples(x, cfg.block_length, bad.shape[0], gen)
        vals_new, _, ok_new = batch_prefix_values(spec, xs_new)
        if extra_ok is not None:
            ok_new = ok_new & extra_ok(vals_new, first_valid)
        vals[bad] = vals_new
        ok[bad] = ok_new
    dropped = int((~ok).sum())
    if dropped > cfg.max_bad_frac * cfg.replications:
        raise TooManyDegenerateResamplesError(dropped, cfg.replications)
    return vals[ok], first_valid


def _positive_normalizer(n_eff: int) -> Callable[[np.ndarray, int], np.ndarray]:
    def check(vals: np.ndarray, first_valid: int) -> np.ndarray:
        return wn_scalar_batch(vals, first_valid, n_eff) > 0.0

    return check


# ---------------------------------------------------------------------------
# Public schemes
# ---------------------------------------------------------------------------

def mbb_percentile_ci(ts: SeriesLike, spec: EstimatorSpec, cfg: MbbConfig) -> MbbResult:
    """Scheme 1: percentile interval from the bootstrap law of
    sqrt(N)(est* - est)."""
    s = as_series(ts)
    if spec.dim != 1:
        raise ValidationError("percentile scheme handles scalar estimators only")
    est = float(prefix_estimates(spec, s).final[0])
    vals, _ = _bootstrap_prefix_values(s.values, spec, cfg)
    root = math.sqrt(s.n) * (vals[:, -1] - est)
    alpha = 1.0 - cfg.level
    q_lo, q_hi = np.quantile(root, [alpha / 2.0, 1.0 - alpha / 2.0])
    return MbbResult(
        scheme="mbb-pct",
        estimator=spec.canonical(),
        estimate=est,
        n_eff=s.n,
        level=cfg.level,
        block_length=cfg.block_length,
        replications=cfg.replications,
        region=Interval(est - q_hi / math.sqrt(s.n), est - q_lo / math.sqrt(s.n)),
    )


def mbb_normal_ci(ts: SeriesLike, spec: EstimatorSpec, cfg: MbbConfig) -> MbbResult:
    """Scheme 2: normal interval with the bootstrap variance of the root."""
    s = as_series(ts)
    if spec.dim != 1:
        raise ValidationError("normal scheme handles scalar estimators only")
    est = float(prefix_estimates(spec, s).final[0])
    vals, _ = _bootstrap_prefix_values(s.values, spec, cfg)
    root = math.sqrt(s.n) * (vals[:, -1] - est)
    # a degenerate root (constant series) legitimately gives a point interval
    sigma2 = float(np.var(root, ddof=1))
    z = float(stats.norm.ppf(0.5 + cfg.level / 2.0))
    half = z * math.sqrt(sigma2 / s.n)
    return MbbResult(
        scheme="mbb-normal",
        estimator=spec.canonical(),
        estimate=est,
        n_eff=s.n,
        level=cfg.level,
        block_length=cfg.block_length,
        replications=cfg.replications,
        region=Interval(est - half, est + half),
        sigma2=sigma2,
    )


def mbb_sn_ci(ts: SeriesLike, spec: EstimatorSpec, cfg: MbbConfig) -> MbbResult:
    """Scheme 3: self-normalized interval with the bootstrap pivot quantile.

    The resampled pivot N (est* - est)' W*^{-1} (est* - est) replaces the
    simulated limit quantile; the interval itself is the self-normalized one
    on the original series, so it always contains the point estimate.
    """
    s = as_series(ts)
    seq = prefix_estimates(spec, s)
    if spec.dim == 1:
        vals, first_valid = _bootstrap_prefix_values(
            s.values, spec, cfg, extra_ok=_positive_normalizer(s.n)
        )
        est = float(seq.final[0])
        w = wn_scalar_batch(vals, first_valid, s.n)
        pivots = s.n * (vals[:, -1] - est) ** 2 / w
        ustar = float(np.quantile(pivots, cfg.level))
        base = sn_interval(seq, ustar, cfg.level, estimator=spec.canonical())
    else:
        # vector targets: per-resample sequences (no batch kernel)
        gen = RngStream(cfg.seed).child("mbb", cfg.block_length).generator()
        pivots = []
        bad = 0
        for _ in range(cfg.replications):
            draw = _draw_resamples(s.values, cfg.block_length, 1, gen)[0]
            retry = 0
            while True:
                try:
                    boot_seq = prefix_estimates(spec, draw)
                    pivots.append(sn_pivot(boot_seq, seq.final))
                    break
                except Exception:
                    retry += 1
                    if retry > cfg.max_retries:
                        bad += 1
                        break
                    draw = _draw_resamples(s.values, cfg.block_length, 1, gen)[0]
        if bad > cfg.max_bad_frac * cfg.replications:
            raise TooManyDegenerateResamplesError(bad, cfg.replications)
        ustar = float(np.quantile(np.asarray(pivots), cfg.level))
        base = sn_region(seq, ustar, cfg.level, estimator=spec.canonical())
    return MbbResult(
        scheme="mbb-sn",
        estimator=spec.canonical(),
        estimate=float(seq.final[0]) if spec.dim == 1 else float("nan"),
        n_eff=s.n,
        level=cfg.level,
        block_length=cfg.block_length,
        replications=cfg.replications,
        region=base.region,
        ustar=ustar,
    )


# ---------------------------------------------------------------------------
# Shared-resample suite (one draw set feeding all three schemes)
# ---------------------------------------------------------------------------

def bootstrap_suite(
    x: np.ndarray,
    spec: EstimatorSpec,
    cfg: MbbConfig,
    seq_values: np.ndarray,
    first_valid: int,
) -> dict:
    """All three bootstrap intervals from one resample set.

    seq_values/first_valid are the prefix values of the original series
    (scalar estimators only).  Used by the Monte Carlo sweeps, where drawing
    three independent resample sets per block length would triple the cost
    without changing any contract.
    """
    n = x.shape[0]
    est = float(seq_values[-1])
    vals, fv = _bootstrap_prefix_values(x, spec, cfg, extra_ok=_positive_normalizer(n))
    root = math.sqrt(n) * (vals[:, -1] - est)
    alpha = 1.0 - cfg.level
    q_lo, q_hi = np.quantile(root, [alpha / 2.0, 1.0 - alpha / 2.0])
    pct = Interval(est - q_hi / math.sqrt(n), est - q_lo / math.sqrt(n))
    sigma2 = float(np.var(root, ddof=1))
    z = float(stats.norm.ppf(0.5 + cfg.level / 2.0))
    half = z * math.sqrt(sigma2 / n)
    nrm = Interval(est - half, est + half)
    w_star = wn_scalar_batch(vals, fv, n)
    pivots = n * (vals[:, -1] - est) ** 2 / w_star
    ustar = float(np.quantile(pivots, cfg.level))
    w0 = wn_scalar_batch(seq_values[None, :], first_valid, n)[0]
    if not w0 > 0.0:
        raise DegenerateVarianceError("self-normalizer of the original series is zero")
    half_sn = math.sqrt(ustar * w0 / n)
    snb = Interval(est - half_sn, est + half_sn)
    return {"mbb-pct": pct, "mbb-normal": nrm, "mbb-sn": snb, "ustar": ustar}

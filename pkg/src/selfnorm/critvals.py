"""Limit-distribution quantiles for the self-normalized pivot.

The pivot converges to U_q = B_q(1)' V_q^{-1} B_q(1) where B_q is a
q-dimensional standard Brownian motion and V_q integrates the outer product
of its bridge.  No closed form exists, so quantiles are simulated from
discretized Brownian paths and cached as JSON.  Nothing here is hand-entered:
deleting the cache and regenerating reproduces identical bytes for the same
(q, grid, reps, seed).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import NumericalError, RngStream, quadform_batch

DEFAULT_GRID = 1000
DEFAULT_SEED = 7654321
DEFAULT_ALPHAS = (0.01, 0.025, 0.05, 0.10)
CACHE_ENV = "SELFNORM_CRITVAL_CACHE"

_CHUNK = 1024
_MAX_RESAMPLE_FRAC = 0.001
_MAX_RETRY_ROUNDS = 8


def default_reps(q: int) -> int:
    """200k replications up to dimension 5, 50k beyond (cost grows with q)."""
    return 200_000 if q <= 5 else 50_000


def default_cache_path() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME", "~/.cache")
    return Path(base).expanduser() / "selfnorm" / "critvals.json"


@dataclass(frozen=True)
class CritvalTable:
    """Simulated upper quantiles of U_q for one (q, grid, reps, seed)."""

    q: int
    grid: int
    reps: int
    seed: int
    quantiles: dict[float, float]
    sample: Optional[np.ndarray] = field(default=None, compare=False)

    def quantile(self, alpha: float) -> float:
        key = _alpha_key(alpha)
        for a, v in self.quantiles.items():
            if _alpha_key(a) == key:
                return v
        raise KeyError(f"alpha {alpha} not in table")


def _alpha_key(alpha: float) -> str:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return format(alpha, ".6f")


def u_stat_from_increments(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """U statistics for standard-normal increment arrays of shape (m, q, grid).

    The walk value at point i/grid is grid^{-1/2} * (z_1 + ... + z_i); the
    bridge subtracts r * (endpoint); V integrates the bridge outer product by
    a left Riemann sum (the bridge vanishes at both endpoints, so including
    or excluding them is identical).  Exposed for the scale-invariance test:
    multiplying z by any c > 0 leaves U unchanged.
    """
    m, q, grid = z.shape
    walk = np.cumsum(z, axis=2) / np.sqrt(grid)
    endpoint = walk[:, :, -1]
    r = np.arange(1, grid + 1, dtype=np.float64) / grid
    bridge = walk - endpoint[:, :, None] * r
    v = np.einsum("mqg,mpg->mqp", bridge, bridge) / grid
    return quadform_batch(v, endpoint)


def _simulate_chunk(stream: RngStream, rows: int, q: int, grid: int) -> tuple[np.ndarray, np.ndarray]:
    z = stream.generator().standard_normal((rows, q, grid))
    return u_stat_from_increments(z)


def simulate_uq(
    q: int,
    grid: int = DEFAULT_GRID,
    reps: Optional[int] = None,
    seed: int = DEFAULT_SEED,
    alphas: Iterable[float] = DEFAULT_ALPHAS,
    keep_sample: bool = False,
) -> CritvalTable:
    """Simulate U_q and return its upper quantiles at the requested alphas.

    Deterministic per (q, grid, reps, seed): replications are drawn in fixed
    chunks, each from its own counter-derived stream, so the result does not
    depend on how work is scheduled.  Replications whose V matrix fails the
    positive-definite pivot test (essentially impossible for grid >> q) are
    redrawn; more than 0.1% of them failing aborts.
    """
    if q < 1:
        raise ValueError("dimension q must be >= 1")
    if grid < 2 * q:
        raise ValueError(f"grid {grid} too coarse for dimension {q}")
    if reps is None:
        reps = default_reps(q)
    if reps < 100:
        raise ValueError("need at least 100 replications")
    alphas = tuple(sorted(set(float(a) for a in alphas)))
    for a in alphas:
        _alpha_key(a)

    base = RngStream(seed)
    out = np.empty(reps)
    resampled = 0
    pos = 0
    chunk_index = 0
    while pos < reps:
        rows = min(_CHUNK, reps - pos)
        u, ok = _simulate_chunk(base.child("uq", q, grid, chunk_index), rows, q, grid)
        retry = 0
        while not ok.all():
            bad = int((~ok).sum())
            resampled += bad
            retry += 1
            if retry > _MAX_RETRY_ROUNDS or resampled > _MAX_RESAMPLE_FRAC * reps:
                raise NumericalError(
                    f"{resampled} of {reps} bridge covariance matrices were "
                    "not positive definite"
                )
            u_new, ok_new = _simulate_chunk(
                base.child("uq-retry", q, grid, chunk_index, retry), bad, q, grid
            )
            idx = np.flatnonzero(~ok)
            u[idx] = u_new
            ok[idx] = ok_new
        out[pos : pos + rows] = u
        pos += rows
        chunk_index += 1

    quantiles = {
        a: float(np.quantile(out, 1.0 - a, method="linear")) for a in alphas
    }
    return CritvalTable(
        q=q,
        grid=grid,
        reps=reps,
        seed=seed,
        quantiles=quantiles,
        sample=out if keep_sample else None,
    )


# ---------------------------------------------------------------------------
# JSON cache
# ---------------------------------------------------------------------------

def _table_key(q: int, grid: int, reps: int, seed: int) -> str:
    return f"q={q}|grid={grid}|reps={reps}|seed={seed}"


def table_to_json(table: CritvalTable) -> str:
    payload = {
        "q": table.q,
        "grid": table.grid,
        "reps": table.reps,
        "seed": table.seed,
        "quantiles": {_alpha_key(a): v for a, v in sorted(table.quantiles.items())},
    }
    return json.dumps(payload, sort_keys=True)


def _load_cache(path: Path) -> dict:
    if not path.exists():
        return {"version": 1, "tables": {}}
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "tables" not in data:
        return {"version": 1, "tables": {}}
    return data


def _store_cache(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(data, fh, sort_keys=True, indent=1)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_table(
    q: int,
    grid: int = DEFAULT_GRID,
    reps: Optional[int] = None,
    seed: int = DEFAULT_SEED,
    alphas: Iterable[float] = DEFAULT_ALPHAS,
    cache_path: Optional[Path] = None,
) -> CritvalTable:
    """Fetch a quantile table, simulating and caching it on first use.

    A cached table missing some requested alpha is regenerated with the
    union of alphas; the shared seed keeps previously stored quantiles
    bit-identical.
    """
    if reps is None:
        reps = default_reps(q)
    path = Path(cache_path) if cache_path is not None else default_cache_path()
    data = _load_cache(path)
    key = _table_key(q, grid, reps, seed)
    want = tuple(sorted(set(float(a) for a in alphas)))
    entry = data["tables"].get(key)
    if entry is not None:
        have = {k: float(v) for k, v in entry["quantiles"].items()}
        if all(_alpha_key(a) in have for a in want):
            quantiles = {float(k): v for k, v in have.items()}
            return CritvalTable(q, grid, reps, seed, quantiles)
        want = tuple(sorted(set(want) | {float(k) for k in have}))
    table = simulate_uq(q, grid, reps, seed, alphas=want)
    data["tables"][key] = json.loads(table_to_json(table))
    _store_cache(path, data)
    return table


def get_quantile(
    q: int,
    alpha: float,
    grid: int = DEFAULT_GRID,
    reps: Optional[int] = None,
    seed: int = DEFAULT_SEED,
    cache_path: Optional[Path] = None,
) -> float:
    """Upper alpha quantile of U_q from the cache (simulating if needed)."""
    alphas = set(DEFAULT_ALPHAS) | {float(alpha)}
    return load_table(q, grid, reps, seed, alphas, cache_path).quantile(alpha)


def ensure_default_cache(
    qs: Iterable[int] = range(1, 7),
    cache_path: Optional[Path] = None,
    reps_override: Optional[int] = None,
) -> Path:
    """Populate the cache for the standard dimensions and alphas."""
    path = Path(cache_path) if cache_path is not None else default_cache_path()
    for q in qs:
        load_table(q, reps=reps_override, cache_path=path)
    return path

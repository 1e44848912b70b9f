"""Seeded Monte Carlo ensembles of the classical sigma*tau = 0 harnesses.

Four standardized Levy martingales (Wiener, centered Poisson, centered
gamma, centered Pascal) are sampled by exact independent increments, so that
E(X_t) = 0 and E(X_s X_t) = min(s, t) hold exactly in law.  Only these
sigma*tau = 0 processes are simulated; verification for sigma*tau > 0 is
certificate/formula based.

Randomness is counter-based: each (path block, grid step) pair owns a Philox
substream keyed by (seed, block, step), so regenerating an ensemble is
bit-identical regardless of how many worker threads assemble it.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .core import HarnessParams
from .moments import MomentVector

__all__ = [
    "BLOCK_PATHS",
    "ProcessKind",
    "Ensemble",
    "known_params",
    "pascal_theta",
    "sample_ensemble",
    "exact_marginal_moments",
    "save_ensemble",
    "load_ensemble",
    "ensemble_to_csv",
]

KINDS = ("wiener", "poisson", "gamma", "pascal")
_KIND_CODES = {k: i for i, k in enumerate(KINDS)}

# Paths per substream block; part of the stream layout (changing it changes
# the sampled ensembles).
BLOCK_PATHS = 4096

_MAGIC = b"QHE1"
_HEADER = struct.Struct("<4sBxxxdQQQ")


@dataclass(frozen=True)
class ProcessKind:
    """One of the simulated process kinds; pascal carries its success probability."""

    name: str
    q: float | None = None

    def __post_init__(self) -> None:
        if self.name not in KINDS:
            raise ValueError(f"unsupported process {self.name!r}; choose from {KINDS}")
        if self.name == "pascal":
            if self.q is None or not (0.0 < self.q < 1.0):
                raise ValueError(f"pascal needs a success probability in (0,1), got {self.q}")
        elif self.q is not None:
            raise ValueError(f"{self.name} takes no extra parameter")


def pascal_theta(q: float) -> float:
    """Linear backward-variance coefficient (2-q)/sqrt(1-q) of the standardized
    negative-binomial martingale; tends to the gamma value 2 as q -> 0."""
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must lie in (0,1), got {q}")
    return (2.0 - q) / math.sqrt(1.0 - q)


def known_params(kind: ProcessKind) -> HarnessParams:
    """The (eta, theta, sigma, tau, gamma) for which the closed-form
    conditional moments match the process exactly.

    All four are martingales with independent increments, hence
    eta = sigma = 0 and gamma = 1; theta and tau come from the bridge
    variance (binomial, beta and beta-binomial bridges respectively).
    """
    if kind.name == "wiener":
        return HarnessParams(0.0, 0.0, 0.0, 0.0, 1.0)
    if kind.name == "poisson":
        return HarnessParams(0.0, 1.0, 0.0, 0.0, 1.0)
    if kind.name == "gamma":
        return HarnessParams(0.0, 2.0, 0.0, 1.0, 1.0)
    return HarnessParams(0.0, pascal_theta(kind.q), 0.0, 1.0, 1.0)


def exact_marginal_moments(kind: ProcessKind, t: float) -> MomentVector:
    """Exact raw moments m1..m4 of the standardized marginal at time t.

    From the cumulants: kappa2 = t always; (kappa3, kappa4) are (0, 0) for
    wiener, (t, t) for poisson, (2t, 6t) for gamma and
    (t*(2-q)/sqrt(1-q), t*(6-6q+q^2)/(1-q)) for pascal.
    """
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    if kind.name == "wiener":
        k3, k4 = 0.0, 0.0
    elif kind.name == "poisson":
        k3, k4 = t, t
    elif kind.name == "gamma":
        k3, k4 = 2.0 * t, 6.0 * t
    else:
        q = kind.q
        k3 = t * (2.0 - q) / math.sqrt(1.0 - q)
        k4 = t * (6.0 - 6.0 * q + q * q) / (1.0 - q)
    return MomentVector(1.0, 0.0, t, k3, k4 + 3.0 * t * t)


@dataclass(frozen=True)
class Ensemble:
    """Sample paths on a time grid: paths[i, j] = X_{grid[j]} of path i."""

    kind: ProcessKind
    grid: np.ndarray
    paths: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("grid must be a non-empty 1-d array")
        if not np.all(grid > 0) or not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly ascending and positive")
        if self.paths.shape != (self.paths.shape[0], grid.size):
            raise ValueError("paths must be n_paths x n_times")
        if not np.all(np.isfinite(self.paths)):
            raise ValueError("path values must be finite")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def n_times(self) -> int:
        return self.grid.size

    def time_index(self, t: float) -> int:
        idx = np.nonzero(np.isclose(self.grid, t, rtol=1e-12, atol=1e-12))[0]
        if idx.size != 1:
            raise ValueError(f"time {t} is not on the grid {self.grid.tolist()}")
        return int(idx[0])


def _substream(seed: int, block: int, step: int) -> Generator:
    return Generator(Philox(key=[np.uint64(seed), np.uint64((block << 32) | step)]))


def _count_increments(kind: ProcessKind, dt: float, n: int, rng: Generator) -> np.ndarray:
    """Raw counting increments of the lattice kinds (poisson / pascal)."""
    if kind.name == "poisson":
        return rng.poisson(dt, n).astype(np.float64)
    # pascal: negative binomial NB(dt, q) as a gamma-mixed Poisson
    q = kind.q
    mix = rng.gamma(dt, (1.0 - q) / q, n)
    return rng.poisson(mix).astype(np.float64)


def _increments(kind: ProcessKind, dt: float, n: int, rng: Generator) -> np.ndarray:
    """Exact standardized increments (continuous kinds) with mean 0, variance dt."""
    if kind.name == "wiener":
        return rng.standard_normal(n) * math.sqrt(dt)
    return rng.gamma(dt, 1.0, n) - dt


def sample_ensemble(
    kind: ProcessKind,
    grid,
    n_paths: int,
    seed: int,
    n_workers: int = 1,
) -> Ensemble:
    """Sample n_paths independent trajectories on the grid.

    Deterministic per (kind, grid, n_paths, seed): the worker count only
    distributes blocks, it never changes the streams.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-d sequence of times")
    if not np.all(np.isfinite(grid)) or not np.all(grid > 0) or not np.all(np.diff(grid) > 0):
        raise ValueError("grid must be finite, positive and strictly ascending")
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if not (0 <= seed < 2**64):
        raise ValueError("seed must be an unsigned 64-bit integer")
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")

    dts = np.diff(grid, prepend=0.0)
    out = np.empty((n_paths, grid.size), dtype=np.float64)
    n_blocks = (n_paths + BLOCK_PATHS - 1) // BLOCK_PATHS
    lattice = kind.name in ("poisson", "pascal")
    if kind.name == "pascal":
        mu = (1.0 - kind.q) / kind.q
        scale = kind.q / math.sqrt(1.0 - kind.q)

    def fill_block(block: int) -> None:
        lo = block * BLOCK_PATHS
        hi = min(lo + BLOCK_PATHS, n_paths)
        acc = np.zeros(hi - lo)
        for step, dt in enumerate(dts):
            rng = _substream(seed, block, step)
            if lattice:
                # accumulate integer counts and center once per column, so
                # equal counts give bit-equal path values (exact lattice)
                acc = acc + _count_increments(kind, float(dt), hi - lo, rng)
                if kind.name == "poisson":
                    out[lo:hi, step] = acc - grid[step]
                else:
                    out[lo:hi, step] = (acc - grid[step] * mu) * scale
            else:
                acc = acc + _increments(kind, float(dt), hi - lo, rng)
                out[lo:hi, step] = acc

    if n_workers == 1 or n_blocks == 1:
        for block in range(n_blocks):
            fill_block(block)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(fill_block, range(n_blocks)))

    return Ensemble(kind=kind, grid=grid, paths=out, seed=seed)


def save_ensemble(e: Ensemble, path) -> None:
    """Write the binary container: magic, kind, pascal parameter, seed,
    shape, grid and the row-major float64 path matrix (little-endian)."""
    header = _HEADER.pack(
        _MAGIC,
        _KIND_CODES[e.kind.name],
        e.kind.q if e.kind.q is not None else 0.0,
        e.seed,
        e.n_paths,
        e.n_times,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(e.grid, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(e.paths, dtype="<f8").tobytes())


def load_ensemble(path) -> Ensemble:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, code, q, seed, n_paths, n_times = _HEADER.unpack(raw)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not an ensemble container (bad magic {magic!r})")
        try:
            name = KINDS[code]
        except IndexError:
            raise ValueError(f"{path}: unknown kind code {code}") from None
        kind = ProcessKind(name, q if name == "pascal" else None)
        grid = np.frombuffer(fh.read(8 * n_times), dtype="<f8").copy()
        paths = np.frombuffer(fh.read(8 * n_paths * n_times), dtype="<f8").copy()
        if paths.size != n_paths * n_times:
            raise ValueError(f"{path}: truncated path matrix")
    return Ensemble(kind=kind, grid=grid, paths=paths.reshape(n_paths, n_times), seed=seed)


def ensemble_to_csv(e: Ensemble, path) -> None:
    """CSV export: path_id, then one column per grid time."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        cols = ",".join(f"t_{t!r}" for t in e.grid.tolist())
        fh.write(f"path_id,{cols}\n")
        for i in range(e.n_paths):
            row = ",".join(repr(v) for v in e.paths[i].tolist())
            fh.write(f"{i},{row}\n")

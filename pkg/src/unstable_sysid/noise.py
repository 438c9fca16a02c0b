"""Noise samplers with certified coordinatewise tails.

Every model carries TailParams (c1, c2, alpha) such that each coordinate
satisfies P(|w_i| > y) <= c1 exp(-y^alpha / c2); alpha = +inf means
uniformly bounded noise with a declared bound.  The symmetric Weibull
construction achieves its tail with equality, which makes it the
sharpest stress test for the bound formulas.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma

from .errors import InputError
from .linalg import inf_norm, sym

GAUSSIAN_TAIL_C1 = 2.0


@dataclass(frozen=True)
class TailParams:
    """Constants of the coordinatewise tail bound c1 * exp(-y^alpha / c2).

    ``alpha = math.inf`` declares uniformly bounded noise; ``bound`` is
    then the almost-sure bound on |w_i| and c1, c2 are unused.
    """

    c1: float
    c2: float
    alpha: float
    bound: float | None = None

    def __post_init__(self):
        if self.c1 <= 0 or self.alpha <= 0:
            raise InputError("tail constants must be strictly positive")
        if math.isinf(self.alpha):
            if self.bound is None or self.bound < 0:
                raise InputError("bounded noise (alpha = inf) needs a declared bound")
        elif self.c2 <= 0:
            raise InputError("tail scale c2 must be strictly positive")

    @property
    def is_bounded(self) -> bool:
        return math.isinf(self.alpha)

    def tail_bound(self, y: float) -> float:
        """The certified bound on P(|w_i| > y), clamped to [0, 1]."""
        if y <= 0:
            return 1.0
        if self.is_bounded:
            return 0.0 if y >= self.bound else 1.0
        return float(min(1.0, self.c1 * math.exp(-(y ** self.alpha) / self.c2)))


@dataclass(frozen=True)
class NoiseModel:
    """A sampler for mean-zero i.i.d. noise vectors.

    ``C_sqrt`` is a square root of the covariance of the draws, so
    repeated samples have covariance C = C_sqrt @ C_sqrt.T.  ``shape`` is
    the linear map applied to the raw unit construction and ``raw`` holds
    the kind-specific raw parameters.
    """

    kind: str
    tail: TailParams
    C_sqrt: np.ndarray
    shape: np.ndarray
    raw: tuple

    @property
    def p(self) -> int:
        return self.C_sqrt.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return sym(self.C_sqrt @ self.C_sqrt.T)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n noise vectors as an (n, p) block in one vectorized call.

        A trial's whole noise sequence is always drawn as a single block,
        so stream contents depend only on (generator state, n).
        """
        if self.kind == "gaussian":
            return rng.standard_normal((n, self.p)) @ self.shape.T
        if self.kind == "weibull_symmetric":
            alpha, c2 = self.raw
            signs = rng.integers(0, 2, size=(n, self.p)) * 2.0 - 1.0
            expo = rng.standard_exponential((n, self.p))
            u = signs * (c2 * expo) ** (1.0 / alpha)
            return u @ self.shape.T
        if self.kind == "uniform_bounded":
            (bound,) = self.raw
            u = rng.uniform(-bound, bound, size=(n, self.p))
            return u @ self.shape.T
        raise InputError(f"unknown noise kind {self.kind!r}")


def sample_noise(model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """A single noise vector."""
    return model.sample(rng, 1)[0]


def psd_sqrt(C: np.ndarray) -> np.ndarray:
    C = sym(np.asarray(C, dtype=float))
    w, V = np.linalg.eigh(C)
    if w.min() < -1e-10 * max(1.0, w.max(initial=0.0)):
        raise InputError("covariance matrix is not positive semidefinite")
    return V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T


def gaussian_noise(C: np.ndarray) -> NoiseModel:
    """Gaussian noise with covariance C.

    Registered tail: (c1, c2, alpha) = (2, 2 sigma^2, 2) via the standard
    Gaussian tail bound, with sigma^2 the largest coordinate variance.  A
    degenerate all-zero covariance keeps a unit-scale certificate (any
    tail bound is valid for zero noise).
    """
    root = psd_sqrt(C)
    sigma_sq = float(np.max(np.diag(np.atleast_2d(C)))) if np.asarray(C).size else 0.0
    c2 = 2.0 * sigma_sq if sigma_sq > 0 else 2.0
    tail = TailParams(c1=GAUSSIAN_TAIL_C1, c2=c2, alpha=2.0)
    return NoiseModel("gaussian", tail, root, root, ())


def _shaped_tail(base_c1: float, base_c2: float, alpha: float, shape: np.ndarray) -> TailParams:
    """Conservative per-coordinate tail after applying a linear shape.

    |(G u)_i| <= ||G||_inf max_j |u_j|, so a union bound over the p raw
    coordinates scales c1 by p and c2 by ||G||_inf^alpha.  Diagonal
    shapes avoid the union bound.
    """
    p = shape.shape[0]
    diag = np.allclose(shape, np.diag(np.diag(shape)))
    scale = float(np.abs(np.diag(shape)).max()) if diag else inf_norm(shape)
    if scale == 0.0:
        return TailParams(c1=base_c1, c2=base_c2, alpha=alpha)
    c1 = base_c1 if diag else base_c1 * p
    return TailParams(c1=c1, c2=base_c2 * scale ** alpha, alpha=alpha)


def weibull_symmetric_noise(alpha: float, c2: float, p: int,
                            shape: np.ndarray | None = None) -> NoiseModel:
    """Symmetric Weibull noise: raw coordinates s * (c2 E)^(1/alpha) with
    s a random sign and E standard exponential, then shaped linearly.

    The raw construction attains P(|u_i| > y) = exp(-y^alpha / c2)
    exactly, so Assumption-style tails hold with c1 = 1.
    """
    if alpha <= 0 or c2 <= 0 or p < 1:
        raise InputError("need alpha > 0, c2 > 0, p >= 1")
    G = np.eye(p) if shape is None else np.asarray(shape, dtype=float)
    if G.shape != (p, p):
        raise InputError(f"shape matrix must be {p}x{p}")
    var_base = c2 ** (2.0 / alpha) * float(_gamma(1.0 + 2.0 / alpha))
    tail = _shaped_tail(1.0, c2, alpha, G)
    return NoiseModel("weibull_symmetric", tail, math.sqrt(var_base) * G, G, (alpha, c2))


def uniform_bounded_noise(bound: float, p: int,
                          shape: np.ndarray | None = None) -> NoiseModel:
    """Uniform noise on [-bound, bound] per raw coordinate, shaped linearly.

    Declared as bounded (alpha = +inf) with almost-sure coordinate bound
    bound * ||shape||_inf.
    """
    if bound < 0 or p < 1:
        raise InputError("need bound >= 0, p >= 1")
    G = np.eye(p) if shape is None else np.asarray(shape, dtype=float)
    if G.shape != (p, p):
        raise InputError(f"shape matrix must be {p}x{p}")
    eff_bound = bound * (inf_norm(G) if np.any(G != 0) else 1.0) if bound > 0 else 0.0
    tail = TailParams(c1=1.0, c2=1.0, alpha=math.inf, bound=eff_bound if bound > 0 else 0.0)
    return NoiseModel("uniform_bounded", tail, (bound / math.sqrt(3.0)) * G, G, (bound,))


# ---------------------------------------------------------------------------
# Tail verification and the uniform noise bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailReport:
    grid: np.ndarray
    exceedance: np.ndarray  # (len(grid), p) empirical frequencies
    bounds: np.ndarray      # (len(grid),) certified bounds
    passed: bool
    n_samples: int

    def to_json_dict(self) -> dict:
        return {
            "grid": [float(y) for y in self.grid],
            "exceedance": self.exceedance.tolist(),
            "bounds": [float(b) for b in self.bounds],
            "passed": bool(self.passed),
            "n_samples": int(self.n_samples),
        }


def verify_tail(samples: np.ndarray, tail: TailParams, grid) -> TailReport:
    """Empirical check of the coordinatewise tail bound.

    Passes iff for every grid level and coordinate the empirical
    exceedance frequency stays within three binomial standard errors of
    the certified bound.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    if n == 0:
        raise InputError("empty sample set")
    if n < 10_000:
        warnings.warn(f"tail verification with only {n} samples is noisy", stacklevel=2)
    grid = np.asarray(list(grid), dtype=float)
    a = np.abs(samples)
    freqs = np.stack([(a > y).mean(axis=0) for y in grid])
    bounds = np.array([tail.tail_bound(y) for y in grid])
    se = np.sqrt(bounds * (1.0 - bounds) / n)
    passed = bool(np.all(freqs <= bounds[:, None] + 3.0 * se[:, None]))
    return TailReport(grid, freqs, bounds, passed, n)


def noise_sup_bound(n: int, delta: float, p: int, tail: TailParams) -> float:
    """High-probability bound on max_{t<=n} ||w(t)||_inf.

    Equals (c2 log(c1 n p / delta))^(1/alpha); with probability at least
    1 - delta no coordinate of the first n noise vectors exceeds it.
    Bounded noise returns the declared bound.
    """
    if not (0.0 < delta < 1.0):
        raise InputError("delta must be in (0, 1)")
    if n < 1 or p < 1:
        raise InputError("need n >= 1 and p >= 1")
    if tail.is_bounded:
        return float(tail.bound)
    arg = tail.c1 * n * p / delta
    if arg <= 1.0:
        warnings.warn(
            "noise bound is vacuous: c1*n*p/delta <= 1 makes the logarithm nonpositive",
            stacklevel=2,
        )
        return 0.0
    return float((tail.c2 * math.log(arg)) ** (1.0 / tail.alpha))

"""Trajectory simulation x(t+1) = A0 x(t) + w(t+1), synthetic system
construction from exact Jordan data, and closed-loop stabilization
sensitivity scans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.linalg

from .errors import InputError, NumericalError, OverflowHorizonError, SetupError
from .linalg import spectral_norm
from .noise import NoiseModel
from .spectral import JordanForm, build_exact_jordan

OVERFLOW_GUARD = 1e250
X0_TAGS = ("zero", "random_unit")


def philox(seed: int, *spawn_key: int) -> np.random.Generator:
    """Counter-based generator for a (seed, stream) pair.

    Streams derived from the same seed with distinct spawn keys are
    independent and order-free, so trials reproduce regardless of
    execution order or thread count.
    """
    ss = np.random.SeedSequence(seed, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# System specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemSpec:
    """Transition matrix, noise model, and initial state.

    ``x0`` is either a vector or one of the tags "zero" / "random_unit";
    the tag is resolved per trial from the trial's own stream.
    """

    A0: np.ndarray
    noise: NoiseModel
    x0: Union[np.ndarray, str] = "zero"
    jordan: JordanForm | None = None

    def __post_init__(self):
        A0 = np.asarray(self.A0, dtype=float)
        object.__setattr__(self, "A0", A0)
        if A0.ndim != 2 or A0.shape[0] != A0.shape[1]:
            raise InputError(f"transition matrix must be square, got {A0.shape}")
        if not np.all(np.isfinite(A0)):
            raise InputError("transition matrix has non-finite entries")
        if self.noise.p != A0.shape[0]:
            raise InputError(
                f"noise dimension {self.noise.p} does not match state dimension {A0.shape[0]}"
            )
        if isinstance(self.x0, str):
            if self.x0 not in X0_TAGS:
                raise InputError(f"unknown initial-state tag {self.x0!r}")
        else:
            x0 = np.asarray(self.x0, dtype=float)
            if x0.shape != (A0.shape[0],):
                raise InputError(f"initial state must have shape ({A0.shape[0]},)")
            object.__setattr__(self, "x0", x0)
        if self.jordan is not None:
            recon = self.jordan.assemble()
            err = spectral_norm(recon - A0)
            if err > 1e-10 * max(1.0, spectral_norm(A0)):
                raise InputError(
                    f"attached Jordan form does not reproduce A0 (residual {err:.3e})"
                )

    @property
    def p(self) -> int:
        return self.A0.shape[0]

    def x0_vector(self, rng: np.random.Generator) -> np.ndarray:
        if isinstance(self.x0, str):
            if self.x0 == "zero":
                return np.zeros(self.p)
            v = rng.standard_normal(self.p)
            nrm = np.linalg.norm(v)
            return v / nrm if nrm > 0 else np.eye(self.p)[0]
        return self.x0.copy()

    def x0_sup_norm(self) -> float:
        """||x(0)||_inf for the bound formulas; tags resolve to their
        almost-sure bound (0 for "zero", 1 for "random_unit")."""
        if isinstance(self.x0, str):
            return 0.0 if self.x0 == "zero" else 1.0
        return float(np.abs(self.x0).max()) if self.p else 0.0

    def x0_two_norm(self) -> float:
        if isinstance(self.x0, str):
            return 0.0 if self.x0 == "zero" else 1.0
        return float(np.linalg.norm(self.x0))


def make_system_from_jordan(blocks, P="random_wellconditioned",
                            noise: NoiseModel | None = None,
                            x0: Union[np.ndarray, str] = "zero", *,
                            seed: int = 0, cond: float = 10.0) -> SystemSpec:
    """Build a real system from an exact Jordan specification.

    ``P`` is the real similarity applied to the real canonical assembly
    (for all-real blocks this is the Jordan similarity itself), or the
    string "random_wellconditioned" to draw one with condition number
    ``cond``.  Complex eigenvalues must be supplied in conjugate pairs.
    """
    p = sum(int(m) for _, m in blocks)
    if isinstance(P, str):
        if P != "random_wellconditioned":
            raise InputError(f"unknown similarity tag {P!r}")
        Q = random_wellconditioned(p, philox(seed, 0x51), cond)
    else:
        Q = np.asarray(P, dtype=float)
    A0, jf = build_exact_jordan(blocks, Q)
    if noise is None:
        from .noise import gaussian_noise

        noise = gaussian_noise(np.eye(p))
    return SystemSpec(A0=A0, noise=noise, x0=x0, jordan=jf)


def random_wellconditioned(p: int, rng: np.random.Generator, cond: float = 10.0) -> np.ndarray:
    """Random p x p matrix with prescribed 2-norm condition number."""
    if p == 1:
        return np.ones((1, 1))
    U, _ = np.linalg.qr(rng.standard_normal((p, p)))
    V, _ = np.linalg.qr(rng.standard_normal((p, p)))
    s = np.geomspace(1.0, cond, p)
    return U @ np.diag(s) @ V.T


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """States x(0..n), the noise draws w(1..n) that produced them, and the
    seed.  When the overflow guard trips, the sequences are truncated to
    the last valid state and ``overflowed_at`` records the first bad time."""

    states: np.ndarray
    noises: np.ndarray
    seed: int
    overflowed_at: int | None = None

    @property
    def n(self) -> int:
        return self.states.shape[0] - 1

    @property
    def p(self) -> int:
        return self.states.shape[1]


def simulate(spec: SystemSpec, n: int, seed: int) -> Trajectory:
    """Simulate n steps of the VAR recursion.

    Deterministic given (spec, n, seed): the initial state is resolved
    first, then the whole noise sequence is drawn as one block.
    """
    if n < 1:
        raise InputError("horizon must be at least 1")
    rng = philox(int(seed))
    x0 = spec.x0_vector(rng)
    if np.abs(x0).max(initial=0.0) > OVERFLOW_GUARD:
        raise OverflowHorizonError("initial state exceeds the overflow guard")
    W = spec.noise.sample(rng, n)
    A0 = spec.A0
    states = np.empty((n + 1, spec.p))
    states[0] = x0
    overflowed_at = None
    x = x0
    for t in range(n):
        x = A0 @ x + W[t]
        if not np.all(np.isfinite(x)) or np.abs(x).max(initial=0.0) > OVERFLOW_GUARD:
            overflowed_at = t + 1
            states = states[: t + 1]
            W = W[:t]
            break
        states[t + 1] = x
    if overflowed_at is not None and overflowed_at < 2:
        raise OverflowHorizonError(
            f"state overflowed at t={overflowed_at}: system and horizon are mismatched"
        )
    return Trajectory(states=states, noises=W.copy(), seed=int(seed),
                      overflowed_at=overflowed_at)


def trajectory_to_csv(traj: Trajectory, path, include_noise: bool = False) -> None:
    """Write a trajectory as CSV: t, x_1..x_p (and optionally w_1..w_p),
    full double precision."""
    p = traj.p
    header = ["t"] + [f"x_{i + 1}" for i in range(p)]
    if include_noise:
        header += [f"w_{i + 1}" for i in range(p)]
    lines = [",".join(header)]
    for t in range(traj.states.shape[0]):
        cells = [str(t)] + [f"{v:.17g}" for v in traj.states[t]]
        if include_noise:
            if t == 0:
                cells += [""] * p
            else:
                cells += [f"{v:.17g}" for v in traj.noises[t - 1]]
        lines.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def simulate_batch_moments(spec: SystemSpec, n: int, seeds, *, chunk: int = 1024):
    """Least-squares moments for a group of trials at one horizon.

    For each trial: V = sum_{t<n} x(t)x(t)', S = sum_{t<n} x(t+1)x(t)',
    the final state x(n), and the overflow time (-1 when none).  Each
    trial consumes its own stream exactly like `simulate` (initial state
    first, then one noise block), so results are reproducible and
    independent of grouping or execution order.
    """
    seeds = list(seeds)
    g = len(seeds)
    p = spec.p
    A_T = spec.A0.T.copy()
    rngs = [philox(int(s)) if np.isscalar(s) else np.random.Generator(np.random.Philox(s))
            for s in seeds]
    X = np.stack([spec.x0_vector(rng) for rng in rngs])
    W = np.stack([spec.noise.sample(rng, n) for rng in rngs])

    V = np.zeros((g, p, p))
    S = np.zeros((g, p, p))
    overflowed_at = np.full(g, -1, dtype=int)
    alive = np.ones(g, dtype=bool)
    prev = X.copy()
    buf = np.empty((g, chunk, p))
    t0 = 0
    while t0 < n:
        B = min(chunk, n - t0)
        x = prev.copy()
        for b in range(B):
            x = x @ A_T + W[:, t0 + b, :]
            buf[:, b, :] = x
        states = buf[:, :B, :]
        with np.errstate(invalid="ignore"):
            bad = ~np.isfinite(states).all(axis=2) | (np.abs(states).max(axis=2) > OVERFLOW_GUARD)
        bad &= alive[:, None]
        newly = bad.any(axis=1)
        if newly.any():
            first = np.where(newly, bad.argmax(axis=1), B)
            for i in np.flatnonzero(newly):
                overflowed_at[i] = t0 + int(first[i]) + 1
                states[i, first[i]:, :] = 0.0
                W[i, t0 + int(first[i]):, :] = 0.0
                alive[i] = False
        x = states[:, B - 1, :].copy()
        ext = np.concatenate([prev[:, None, :], states], axis=1)
        V += np.einsum("gbi,gbj->gij", ext[:, :-1], ext[:, :-1])
        S += np.einsum("gbi,gbj->gij", ext[:, 1:], ext[:, :-1])
        prev = x
        t0 += B

    # squares of valid-but-huge states can still overflow the moments
    finite = np.isfinite(V).all(axis=(1, 2)) & np.isfinite(S).all(axis=(1, 2))
    for i in np.flatnonzero(~finite):
        if overflowed_at[i] < 0:
            overflowed_at[i] = n
    return V, S, prev, overflowed_at


# ---------------------------------------------------------------------------
# Closed-loop stabilization sensitivity (adaptive-control example)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ControlSystem:
    """Open-loop pair: x(t+1) = Ax x(t) + Au u(t) + w(t+1) with linear
    feedback u(t) = L x(t)."""

    Ax: np.ndarray
    Au: np.ndarray
    L: np.ndarray | None = None

    def __post_init__(self):
        Ax = np.asarray(self.Ax, dtype=float)
        Au = np.asarray(self.Au, dtype=float)
        object.__setattr__(self, "Ax", Ax)
        object.__setattr__(self, "Au", Au)
        if Ax.ndim != 2 or Ax.shape[0] != Ax.shape[1]:
            raise InputError("state matrix must be square")
        if Au.ndim != 2 or Au.shape[0] != Ax.shape[0]:
            raise InputError("input matrix row count must match the state dimension")
        if self.L is not None:
            L = np.asarray(self.L, dtype=float)
            if L.shape != (Au.shape[1], Ax.shape[0]):
                raise InputError(f"feedback must be {Au.shape[1]}x{Ax.shape[0]}")
            object.__setattr__(self, "L", L)

    @property
    def p(self) -> int:
        return self.Ax.shape[0]

    @property
    def r(self) -> int:
        return self.Au.shape[1]

    def theta(self) -> np.ndarray:
        """The dynamics parameter [Ax, Au] as one p x (p+r) matrix."""
        return np.hstack([self.Ax, self.Au])


def closed_loop(cs: ControlSystem) -> np.ndarray:
    """Closed-loop transition matrix Ax + Au L."""
    if cs.L is None:
        raise InputError("control system has no feedback attached")
    return cs.Ax + cs.Au @ cs.L


def design_lqr(Ax: np.ndarray, Au: np.ndarray) -> np.ndarray:
    """Discrete-time LQR feedback with identity weights.

    Returns L with u = L x; the closed loop Ax + Au L is stable whenever
    the pair is stabilizable.
    """
    p, r = Ax.shape[0], Au.shape[1]
    try:
        Pm = scipy.linalg.solve_discrete_are(Ax, Au, np.eye(p), np.eye(r))
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Riccati solve failed: {exc}") from exc
    return -np.linalg.solve(np.eye(r) + Au.T @ Pm @ Au, Au.T @ Pm @ Ax)


@dataclass(frozen=True)
class SensitivityCurve:
    """Scan results: one closed-loop spectral radius per (magnitude, index).

    In global_awgn mode the index is the trial number; in single_entry
    mode it encodes (entry, sign) as 2*entry + (0 for +, 1 for -).
    Designs that fail outright are recorded with lambda_max = +inf.
    """

    mode: str
    magnitude: np.ndarray
    index: np.ndarray
    lambda_max: np.ndarray
    nominal_lambda_max: float

    def crossing_magnitude(self) -> float | None:
        """Smallest scanned magnitude with any lambda_max > 1."""
        unstable = self.lambda_max > 1.0
        if not unstable.any():
            return None
        return float(self.magnitude[unstable].min())


def _spectral_radius(A: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvals(A)).max())


def sensitivity_scan(cs: ControlSystem, mode: str, magnitudes, trials: int,
                     designer: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
                     seed: int = 0) -> SensitivityCurve:
    """Spectral radius of the true closed loop when the feedback is
    designed from a perturbed dynamics parameter.

    global_awgn: i.i.d. Gaussian perturbation scaled to the target
    relative 2-norm, ``trials`` independent draws per magnitude.
    single_entry: one entry of [Ax, Au] perturbed by +-magnitude times
    ||[Ax, Au]||_2, scanned over all entries.
    """
    if mode not in ("global_awgn", "single_entry"):
        raise InputError(f"unknown scan mode {mode!r}")
    designer = designer or design_lqr
    p, r = cs.p, cs.r
    theta = cs.theta()
    theta_norm = spectral_norm(theta)

    try:
        L0 = designer(cs.Ax, cs.Au)
        nominal = _spectral_radius(cs.Ax + cs.Au @ L0)
    except NumericalError as exc:
        raise SetupError(f"designer failed on the unperturbed system: {exc}") from exc
    if nominal >= 1.0:
        raise SetupError(
            f"designer does not stabilize the unperturbed system (lambda_max={nominal:.3f})"
        )

    def evaluate(delta: np.ndarray) -> float:
        pert = theta + delta
        try:
            L_hat = designer(pert[:, :p], pert[:, p:])
        except NumericalError:
            return math.inf
        lam = _spectral_radius(cs.Ax + cs.Au @ L_hat)
        return lam if np.isfinite(lam) else math.inf

    mags, idxs, lams = [], [], []
    for mi, mag in enumerate(magnitudes):
        mag = float(mag)
        if mode == "global_awgn":
            for j in range(trials):
                if mag == 0.0:
                    delta = np.zeros_like(theta)
                else:
                    g = philox(seed, mi, j).standard_normal(theta.shape)
                    delta = g * (mag * theta_norm / spectral_norm(g))
                mags.append(mag)
                idxs.append(j)
                lams.append(evaluate(delta))
        else:
            for e in range(theta.size):
                for si, sign in enumerate((1.0, -1.0)):
                    delta = np.zeros_like(theta)
                    delta.flat[e] = sign * mag * theta_norm
                    mags.append(mag)
                    idxs.append(2 * e + si)
                    lams.append(evaluate(delta))
    return SensitivityCurve(
        mode=mode,
        magnitude=np.asarray(mags, dtype=float),
        index=np.asarray(idxs, dtype=int),
        lambda_max=np.asarray(lams, dtype=float),
        nominal_lambda_max=nominal,
    )

"""Least-squares identification of the transition matrix and its
diagnostics, including the stably-normalized Gram matrix used in the
explosive regime."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputError, NumericalError, RegimeError, SingularGramError
from .linalg import spectral_norm, sym
from .spectral import eig_extremes

SINGULARITY_REL = 1e-12


@dataclass(frozen=True)
class EstimateReport:
    """Least-squares estimate with the Gram matrix it was solved against."""

    A_hat: np.ndarray
    gram: np.ndarray
    gram_min_eig: float
    n: int
    error: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "n": int(self.n),
            "error": None if self.error is None else float(self.error),
            "gram_min_eig": float(self.gram_min_eig),
            "a_hat": [float(v) for v in self.A_hat.ravel(order="C")],
        }


def gram(traj, n: int) -> np.ndarray:
    """Empirical covariance V_n = sum_{t<n} x(t) x(t)' of the state process."""
    states = traj.states
    if n > states.shape[0]:
        raise InputError(f"trajectory holds {states.shape[0]} states, requested V_{n}")
    X = states[:n]
    return sym(X.T @ X)


def error_norm(A_hat: np.ndarray, A0: np.ndarray) -> float:
    """Identification error: largest singular value of A_hat - A0."""
    A_hat = np.asarray(A_hat, dtype=float)
    A0 = np.asarray(A0, dtype=float)
    if A_hat.shape != A0.shape:
        raise InputError("estimate and truth have different shapes")
    return spectral_norm(A_hat - A0)


def loss(traj, n: int, A: np.ndarray) -> float:
    """Sum-of-squares one-step prediction loss of a candidate matrix."""
    X = traj.states[:n]
    Y = traj.states[1:n + 1]
    R = Y - X @ np.asarray(A).T
    return float((R * R).sum())


def _check_gram(V: np.ndarray, ridge: float) -> float:
    w = np.linalg.eigvalsh(V)
    lam_min, lam_max = float(w[0]), float(w[-1])
    if ridge == 0.0 and lam_min < SINGULARITY_REL * max(lam_max, 1e-300):
        raise SingularGramError(
            f"singular Gram matrix: lambda_min={lam_min:.3e}, lambda_max={lam_max:.3e}",
            lam_min,
        )
    return lam_min


def ols(traj, n: int, ridge: float = 0.0, truth: np.ndarray | None = None) -> EstimateReport:
    """Least-squares estimate from the first n transitions.

    Solved as a least-squares problem against the design matrix (an
    implicit factorization of V_n), never by explicit inversion.  With
    ridge > 0 the Gram matrix is shifted by ridge * I; that mode exists
    only so a harness can report conditioning pathologies, and all
    bound-facing results use ridge = 0.
    """
    if ridge < 0:
        raise InputError("ridge must be nonnegative")
    states = traj.states
    if n > states.shape[0] - 1:
        raise InputError(f"trajectory holds {states.shape[0] - 1} steps, requested n={n}")
    if n < 1:
        raise InputError("need at least one transition")
    X = states[:n]
    Y = states[1:n + 1]
    V = sym(X.T @ X)
    lam_min = _check_gram(V, ridge)
    p = X.shape[1]
    if ridge > 0.0:
        X_solve = np.vstack([X, np.sqrt(ridge) * np.eye(p)])
        Y_solve = np.vstack([Y, np.zeros((p, p))])
    else:
        X_solve, Y_solve = X, Y
    sol, _, _, _ = scipy.linalg.lstsq(X_solve, Y_solve, lapack_driver="gelsd")
    A_hat = sol.T
    err = None if truth is None else error_norm(A_hat, truth)
    return EstimateReport(A_hat=A_hat, gram=V, gram_min_eig=lam_min, n=n, error=err)


def ols_from_moments(V: np.ndarray, S: np.ndarray, n: int, ridge: float = 0.0,
                     truth: np.ndarray | None = None) -> EstimateReport:
    """Least-squares estimate from accumulated moments V = sum x x' and
    S = sum x(t+1) x(t)'; used by campaign kernels that never store
    full trajectories."""
    V = sym(np.asarray(V, dtype=float))
    lam_min = _check_gram(V, ridge)
    p = V.shape[0]
    Vs = V + ridge * np.eye(p) if ridge > 0 else V
    try:
        A_hat = np.linalg.solve(Vs, np.asarray(S, dtype=float).T).T
    except np.linalg.LinAlgError as exc:
        raise SingularGramError(f"Gram solve failed: {exc}", lam_min) from exc
    err = None if truth is None else error_norm(A_hat, truth)
    return EstimateReport(A_hat=A_hat, gram=V, gram_min_eig=lam_min, n=n, error=err)


def normalized_gram_explosive(traj, A0: np.ndarray, n: int) -> tuple[float, float]:
    """Extreme eigenvalues of A0^{-n} V_{n+1} A0'^{-n} for explosive A0.

    Accumulates the normalized states A0^{-(n-t)} x(t) directly, never
    forming A0^{-n} against a huge Gram matrix, so exponent cancellation
    cannot overflow.
    """
    A0 = np.asarray(A0, dtype=float)
    lam_min_mag, _ = eig_extremes(A0)
    if lam_min_mag <= 1.0:
        raise RegimeError("normalized Gram requires an explosive matrix (all |eig| > 1)")
    try:
        A_inv = np.linalg.inv(A0)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("transition matrix is singular") from exc
    states = traj.states
    if n > states.shape[0] - 1:
        raise InputError(f"trajectory holds {states.shape[0] - 1} steps, requested n={n}")
    p = A0.shape[0]
    G = np.zeros((p, p))
    R = np.eye(p)
    for k in range(n + 1):
        v = R @ states[n - k]
        G += np.outer(v, v)
        R = A_inv @ R
    w = np.linalg.eigvalsh(sym(G))
    return float(w[0]), float(w[-1])

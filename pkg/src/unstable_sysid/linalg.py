"""Matrix norms used by the finite-time constants.

Beyond the standard induced norms, the bound formulas need the mixed
operator norm ||A||_{inf->2} = sup_{||v||_inf <= 1} ||A v||_2 with the
supremum taken over complex vectors.  That supremum is a maximization of
a convex function over the unit polytorus, so it is attained at points
with |v_j| = 1; we combine exhaustive sign enumeration (exact over real
sign patterns) with a monotone phase-ascent refinement over the complex
torus started from many points.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

_SIGN_ENUM_MAX = 16  # 2^(q-1) sign patterns are enumerated up to this width


def spectral_norm(A: np.ndarray) -> float:
    """Largest singular value (the operator 2-norm)."""
    A = np.atleast_2d(np.asarray(A))
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def inf_norm(A: np.ndarray) -> float:
    """Induced infinity norm: maximum absolute row sum."""
    A = np.atleast_2d(np.asarray(A))
    if A.size == 0:
        return 0.0
    return float(np.abs(A).sum(axis=1).max())


def norm_2_to_inf(A: np.ndarray) -> float:
    """||A||_{2->inf}: the largest row 2-norm."""
    A = np.atleast_2d(np.asarray(A))
    if A.size == 0:
        return 0.0
    return float(np.sqrt((np.abs(A) ** 2).sum(axis=1).max()))


def _phase_ascent(H: np.ndarray, v0: np.ndarray, iters: int = 200) -> tuple[float, np.ndarray]:
    # Maximizes v* H v over |v_j| = 1 by iterating v <- phase(H v).
    # For Hermitian PSD H each step does not decrease the objective.
    v = v0.astype(complex)
    val = float(np.real(np.conj(v) @ (H @ v)))
    for _ in range(iters):
        u = H @ v
        mag = np.abs(u)
        v_new = np.where(mag > 0, u / np.where(mag > 0, mag, 1.0), v)
        new_val = float(np.real(np.conj(v_new) @ (H @ v_new)))
        if new_val <= val * (1 + 1e-14):
            v = v_new
            val = max(val, new_val)
            break
        v, val = v_new, new_val
    return val, v


def norm_inf_to_2(A: np.ndarray) -> float:
    """||A||_{inf->2} = max over |v_j| = 1 of ||A v||_2 (complex v).

    Exact over real sign patterns for narrow matrices; the complex torus
    maximum is then refined by phase ascent from the best sign pattern,
    the leading right singular vector, and a fixed set of random starts.
    """
    A = np.atleast_2d(np.asarray(A))
    if A.size == 0:
        return 0.0
    q = A.shape[1]
    H = np.conj(A.T) @ A

    best = 0.0
    starts: list[np.ndarray] = []
    if q <= _SIGN_ENUM_MAX:
        # all sign vectors with first entry fixed at +1 (v and -v tie)
        signs = np.array(
            [[1.0] + [1.0 if (k >> j) & 1 else -1.0 for j in range(q - 1)]
             for k in range(2 ** (q - 1))]
        )
        vals = np.einsum("kj,jl,kl->k", signs, np.real(H), signs)
        k_best = int(np.argmax(vals))
        best = float(vals[k_best])
        starts.append(signs[k_best].astype(complex))
    else:
        starts.append(np.ones(q, dtype=complex))

    _, _, vh = np.linalg.svd(A)
    top = np.conj(vh[0])
    mag = np.abs(top)
    starts.append(np.where(mag > 0, top / np.where(mag > 0, mag, 1.0), 1.0))

    rng = np.random.default_rng(0)
    for _ in range(8):
        starts.append(np.exp(2j * np.pi * rng.random(q)))

    for v0 in starts:
        val, _ = _phase_ascent(H, v0)
        best = max(best, val)
    return float(np.sqrt(max(best, 0.0)))


def min_row_norm(A: np.ndarray) -> float:
    """Smallest row 2-norm (used by the Gaussian quantile constant)."""
    A = np.atleast_2d(np.asarray(A))
    return float(np.sqrt((np.abs(A) ** 2).sum(axis=1).min()))


def condition_number(P: np.ndarray) -> float:
    """2-norm condition number, +inf when numerically singular."""
    s = np.linalg.svd(np.asarray(P), compute_uv=False)
    if s[-1] == 0:
        return float("inf")
    return float(s[0] / s[-1])


def sym(A: np.ndarray) -> np.ndarray:
    """Symmetric part; used to scrub round-off from Gram-type matrices."""
    return (A + A.T.conj()) / 2.0


def eigvals_or_raise(A: np.ndarray) -> np.ndarray:
    """Dense eigenvalues, converting solver failures into a library error."""
    try:
        return np.linalg.eigvals(np.asarray(A, dtype=float))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NumericalError(f"eigenvalue solver failed: {exc}") from exc

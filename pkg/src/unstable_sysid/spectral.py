"""Spectral machinery: eigenstructure, Jordan forms, regularity and
reachability checks, stable/explosive splitting, companion embedding.

Construction is the primary path: synthetic systems carry an exact Jordan
specification, so the similarity P and the block matrix are known exactly.
`jordan_infer` exists for user-supplied matrices; it reports conditioning
and refuses ambiguous rank decisions instead of guessing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    IllConditionedJordanError,
    InputError,
    NumericalError,
    UnitRootError,
)
from .linalg import (
    condition_number,
    eigvals_or_raise,
    inf_norm,
    spectral_norm,
    sym,
)

DEFAULT_UNIT_GAP = 1e-6
RANK_CUTOFF_REL = 1e-10
MINCOOR_ZERO_TOL = 1e-12
REACHABILITY_TOL_REL = 1e-12


# ---------------------------------------------------------------------------
# Jordan forms
# ---------------------------------------------------------------------------

def jordan_block(lam: complex, m: int) -> np.ndarray:
    """The m x m upper Jordan block of eigenvalue ``lam``."""
    J = np.eye(m, dtype=complex) * lam
    if m > 1:
        J += np.diag(np.ones(m - 1), 1)
    return J


def assemble_block_diagonal(blocks) -> np.ndarray:
    mats = [jordan_block(lam, m) for lam, m in blocks]
    return scipy.linalg.block_diag(*mats) if mats else np.zeros((0, 0), dtype=complex)


@dataclass(frozen=True)
class JordanForm:
    """Jordan decomposition A = P^{-1} Lambda P.

    ``blocks`` lists (eigenvalue, size) in the order they appear on the
    diagonal of Lambda.  ``exact`` is True when the form was specified by
    construction rather than inferred numerically.
    """

    blocks: tuple
    P: np.ndarray
    P_inv: np.ndarray
    exact: bool
    residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple((complex(l), int(m)) for l, m in self.blocks))
        if sum(m for _, m in self.blocks) != self.P.shape[0]:
            raise InputError("block sizes do not sum to the dimension of P")

    @property
    def p(self) -> int:
        return self.P.shape[0]

    @property
    def mu(self) -> int:
        """Largest block size (= largest algebraic multiplicity per block)."""
        return max(m for _, m in self.blocks)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.concatenate([[lam] * m for lam, m in self.blocks])

    @property
    def cond_P(self) -> float:
        return condition_number(self.P)

    def lam_matrix(self) -> np.ndarray:
        return assemble_block_diagonal(self.blocks)

    def assemble(self) -> np.ndarray:
        """P^{-1} Lambda P (complex; real systems have tiny imaginary part)."""
        return self.P_inv @ self.lam_matrix() @ self.P

    def identity_defect(self) -> float:
        return spectral_norm(self.P @ self.P_inv - np.eye(self.p))


def jordan_of_inverse(jf: JordanForm) -> JordanForm:
    """Exact Jordan form of A^{-1} given the Jordan form of A.

    Each block J(lam, m)^{-1} has the single eigenvalue 1/lam with one
    chain; the local similarity is read off from the chain of the
    nilpotent part, so exactness of the input is preserved.
    """
    locals_ = []
    new_blocks = []
    for lam, m in jf.blocks:
        if lam == 0:
            raise InputError("singular block: cannot invert a zero eigenvalue")
        if m == 1:
            locals_.append(np.eye(1, dtype=complex))
        else:
            Jinv = np.zeros((m, m), dtype=complex)
            for k in range(m):
                Jinv += np.diag(np.full(m - k, (-1) ** k * lam ** (-1 - k)), k)
            B = Jinv - np.eye(m) / lam
            cols = [np.linalg.matrix_power(B, m - j) @ np.eye(m, dtype=complex)[:, -1]
                    for j in range(1, m + 1)]
            locals_.append(np.column_stack(cols))
        new_blocks.append((1.0 / lam, m))
    V = scipy.linalg.block_diag(*locals_)
    V_inv = np.linalg.inv(V)
    return JordanForm(
        blocks=tuple(new_blocks),
        P=V_inv @ jf.P,
        P_inv=jf.P_inv @ V,
        exact=jf.exact,
        residual=jf.residual,
    )


def build_exact_jordan(blocks, Q: np.ndarray) -> tuple[np.ndarray, JordanForm]:
    """Assemble a real matrix A = Q^{-1} R Q from an exact Jordan spec.

    ``Q`` is the real similarity applied to the real canonical assembly R.
    Complex eigenvalues must come in conjugate pairs with equal block
    sizes; each pair contributes a real 2m x 2m block, and the fixed
    unitary pairing transform is folded into the stored complex P so that
    A = P^{-1} Lambda P holds exactly with the complex Jordan Lambda.
    """
    blocks = [(complex(l), int(m)) for l, m in blocks]
    Q = np.asarray(Q, dtype=float)
    used = [False] * len(blocks)
    units = []  # ("real", lam, m) or ("pair", lam, m) with Im(lam) > 0
    for i, (lam, m) in enumerate(blocks):
        if used[i]:
            continue
        used[i] = True
        if lam.imag == 0:
            units.append(("real", lam, m))
            continue
        partner = None
        for j in range(i + 1, len(blocks)):
            if not used[j] and blocks[j][1] == m and blocks[j][0] == lam.conjugate():
                partner = j
                break
        if partner is None:
            raise InputError(f"unpaired complex eigenvalue {lam} (size {m})")
        used[partner] = True
        units.append(("pair", lam if lam.imag > 0 else lam.conjugate(), m))

    real_parts, t_parts, ordered = [], [], []
    for kind, lam, m in units:
        if kind == "real":
            real_parts.append(jordan_block(lam.real, m).real)
            t_parts.append(np.eye(m, dtype=complex))
            ordered.append((lam, m))
        else:
            a, b = lam.real, lam.imag
            D = np.array([[a, b], [-b, a]])
            R = np.kron(np.eye(m), D)
            if m > 1:
                R += np.kron(np.diag(np.ones(m - 1), 1), np.eye(2))
            real_parts.append(R)
            # unitary pairing: per slot, (1, -i)/sqrt2 rows form the lam
            # chain and (1, +i)/sqrt2 rows the conjugate chain
            T = np.zeros((2 * m, 2 * m), dtype=complex)
            s = 1.0 / math.sqrt(2.0)
            for j in range(m):
                T[j, 2 * j], T[j, 2 * j + 1] = s, -1j * s
                T[m + j, 2 * j], T[m + j, 2 * j + 1] = s, 1j * s
            t_parts.append(T)
            ordered.append((lam, m))
            ordered.append((lam.conjugate(), m))

    R = scipy.linalg.block_diag(*real_parts) if real_parts else np.zeros((0, 0))
    p = R.shape[0]
    if Q.shape != (p, p):
        raise InputError(f"similarity must be {p}x{p}, got {Q.shape}")
    if condition_number(Q) == float("inf"):
        raise InputError("similarity matrix is singular")

    T = scipy.linalg.block_diag(*t_parts)
    Q_inv = np.linalg.inv(Q)
    A0 = Q_inv @ R @ Q
    jf = JordanForm(blocks=tuple(ordered), P=T @ Q, P_inv=Q_inv @ np.conj(T.T), exact=True)
    return A0, jf


# ---------------------------------------------------------------------------
# Numerical Jordan inference
# ---------------------------------------------------------------------------

def _cluster_eigenvalues(eigs: np.ndarray, tol: float) -> list[np.ndarray]:
    n = len(eigs)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(eigs[i] - eigs[j]) < tol:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    clusters = [eigs[idx] for idx in groups.values()]
    clusters.sort(key=lambda c: (round(c.mean().real, 9), round(c.mean().imag, 9)))
    return clusters


def _checked_rank(s: np.ndarray) -> int:
    """Numerical rank with the straddle guard on the cutoff decision."""
    if s.size == 0 or s[0] == 0:
        return 0
    cutoff = RANK_CUTOFF_REL * s[0]
    rank = int(np.sum(s > cutoff))
    if 0 < rank < s.size:
        above, below = s[rank - 1], s[rank]
        if below > 0 and above / below < 10.0:
            raise IllConditionedJordanError(
                "ill-conditioned Jordan structure: singular values "
                f"{above:.3e} and {below:.3e} straddle the rank cutoff {cutoff:.3e}"
            )
    return rank


def _nullspace(M: np.ndarray) -> tuple[int, np.ndarray]:
    u, s, vh = np.linalg.svd(M)
    rank = _checked_rank(s)
    return rank, np.conj(vh[rank:]).T


def _orth_basis(cols: list[np.ndarray], dim: int) -> np.ndarray:
    if not cols:
        return np.zeros((dim, 0), dtype=complex)
    M = np.column_stack(cols)
    q, r = np.linalg.qr(M)
    keep = np.abs(np.diag(r)) > 1e-12 * max(1.0, np.abs(np.diag(r)).max())
    return q[:, keep]


def jordan_infer(A: np.ndarray, cluster_tol: float | None = None) -> JordanForm:
    """Infer a Jordan form of a real square matrix.

    Eigenvalues within ``cluster_tol`` of each other are merged; block
    sizes come from the rank staircase of (A - lam I)^k restricted to the
    cluster's invariant subspace.  Ambiguous rank decisions raise
    IllConditionedJordanError rather than silently guessing.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"expected a square matrix, got shape {A.shape}")
    p = A.shape[0]
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    if cluster_tol is None:
        cluster_tol = 1e-8 * max(spectral_norm(A), 1.0)

    eigs = eigvals_or_raise(A)
    clusters = _cluster_eigenvalues(eigs, cluster_tol)

    blocks: list[tuple[complex, int]] = []
    columns: list[np.ndarray] = []
    for cl in clusters:
        lam_hat = complex(cl.mean())
        a_mult = len(cl)
        radius = max(np.abs(cl - lam_hat).max() * 2, cluster_tol)
        try:
            T, Z, sdim = scipy.linalg.schur(
                A.astype(complex), output="complex",
                sort=lambda z: abs(z - lam_hat) <= radius,
            )
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
            raise NumericalError(f"Schur reordering failed: {exc}") from exc
        if sdim != a_mult:
            raise IllConditionedJordanError(
                f"cluster at {lam_hat}: invariant subspace dimension {sdim} "
                f"does not match algebraic multiplicity {a_mult}"
            )
        Qsub = Z[:, :a_mult]
        B = T[:a_mult, :a_mult]
        N = B - lam_hat * np.eye(a_mult)

        # Weyr staircase: nullity growth of N^k counts blocks of size >= k
        nullities = [0]
        null_bases = [np.zeros((a_mult, 0), dtype=complex)]
        Mk = np.eye(a_mult, dtype=complex)
        while nullities[-1] < a_mult:
            Mk = Mk @ N
            rank, basis = _nullspace(Mk)
            nullities.append(a_mult - rank)
            null_bases.append(basis)
            if len(nullities) > a_mult + 1:
                raise IllConditionedJordanError(
                    f"cluster at {lam_hat}: rank staircase failed to terminate"
                )
        m_max = len(nullities) - 1
        d = [nullities[k] - nullities[k - 1] for k in range(1, m_max + 1)]
        d.append(0)

        chains: list[tuple[int, np.ndarray]] = []  # (height, top vector)
        for k in range(m_max, 0, -1):
            n_new = d[k - 1] - d[k]
            if n_new == 0:
                continue
            avoid = [null_bases[k - 1][:, j] for j in range(null_bases[k - 1].shape[1])]
            for h, top in chains:
                avoid.append(np.linalg.matrix_power(N, h - k) @ top)
            Qa = _orth_basis(avoid, a_mult)
            W = null_bases[k] - Qa @ (np.conj(Qa.T) @ null_bases[k])
            u, s, _ = np.linalg.svd(W, full_matrices=False)
            if np.sum(s > 1e-10 * max(1.0, s[0] if s.size else 1.0)) < n_new:
                raise IllConditionedJordanError(
                    f"cluster at {lam_hat}: could not separate {n_new} chain tops"
                )
            for j in range(n_new):
                chains.append((k, u[:, j]))

        for k, top in chains:
            blocks.append((lam_hat, k))
            for j in range(k - 1, -1, -1):
                columns.append(Qsub @ (np.linalg.matrix_power(N, j) @ top))

    P_inv = np.column_stack(columns)
    try:
        P = np.linalg.inv(P_inv)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedJordanError("generalized eigenvector matrix is singular") from exc

    jf = JordanForm(blocks=tuple(blocks), P=P, P_inv=P_inv, exact=False)
    residual = spectral_norm(jf.assemble() - A)
    object.__setattr__(jf, "residual", float(residual))
    return jf


# ---------------------------------------------------------------------------
# Scalar spectral queries
# ---------------------------------------------------------------------------

def eig_extremes(A: np.ndarray) -> tuple[float, float]:
    """Smallest and largest eigenvalue magnitudes of a square matrix."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    mags = np.abs(eigvals_or_raise(A))
    return float(mags.min()), float(mags.max())


def regularity_check(A: np.ndarray, unit_gap: float = DEFAULT_UNIT_GAP) -> bool:
    """True iff every eigenvalue outside the unit circle has geometric
    multiplicity one, tested via rank(A - lam I) >= p - 1.

    Raises UnitRootError when an eigenvalue magnitude is within
    ``unit_gap`` of 1; the check is ill-posed there.
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    eigs = eigvals_or_raise(A)
    mags = np.abs(eigs)
    if np.any(np.abs(mags - 1.0) <= unit_gap):
        raise UnitRootError(
            f"unit-root ambiguity: an eigenvalue magnitude lies within {unit_gap} of 1"
        )
    explosive = eigs[mags > 1.0]
    seen: list[complex] = []
    for lam in explosive:
        if any(abs(lam - mu) < 1e-9 * max(1.0, abs(lam)) for mu in seen):
            continue
        seen.append(complex(lam))
        s = np.linalg.svd(A - lam * np.eye(p), compute_uv=False)
        cutoff = RANK_CUTOFF_REL * s[0]
        if p >= 2 and s[p - 2] <= cutoff:
            return False
    return True


def reachability_gramian(A: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, float]:
    """Finite reachability Gramian K = sum_{i<p} A^i C A'^i and its
    smallest eigenvalue.  The pair [A, C] is reachable iff that
    eigenvalue is positive."""
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    p = A.shape[0]
    if C.shape != (p, p):
        raise InputError(f"covariance must be {p}x{p}, got {C.shape}")
    if spectral_norm(C - C.T) > 1e-10 * max(1.0, spectral_norm(C)):
        raise InputError("covariance matrix is not symmetric")
    K = C.copy()
    M = C.copy()
    for _ in range(1, p):
        M = A @ M @ A.T
        K += M
    K = sym(K)
    lam = np.linalg.eigvalsh(K)
    lam_min = float(lam[0])
    if lam_min < 0 and lam_min > -1e-12 * max(1.0, float(lam[-1])):
        lam_min = 0.0
    return K, lam_min


def is_reachable(A: np.ndarray, C: np.ndarray) -> bool:
    K, lam_min = reachability_gramian(A, C)
    lam_max = float(np.linalg.eigvalsh(K)[-1])
    return lam_min > REACHABILITY_TOL_REL * max(1.0, lam_max)


# ---------------------------------------------------------------------------
# Stable/explosive splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralSplit:
    """Real similarity M with M A M^{-1} = diag(A1, A2), eigenvalues of A1
    strictly inside and of A2 strictly outside the unit circle."""

    M: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    p1: int
    p2: int
    M_inv: np.ndarray = field(repr=False, default=None)

    @property
    def degenerate(self) -> bool:
        return self.p1 == 0 or self.p2 == 0


def stable_explosive_split(A: np.ndarray, unit_gap: float = DEFAULT_UNIT_GAP) -> SpectralSplit:
    """Split A into a stable block and an explosive block.

    Computed from the real Schur form with inside-unit-circle eigenvalues
    reordered first, then decoupled by solving a Sylvester equation, so M
    is real.  Pure-regime matrices return the degenerate split with M = I
    and one empty block.
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    mags = np.abs(eigvals_or_raise(A))
    if np.any(np.abs(mags - 1.0) <= unit_gap):
        raise UnitRootError(
            f"unit-root: an eigenvalue magnitude lies within {unit_gap} of 1"
        )
    p1 = int(np.sum(mags < 1.0))
    p2 = p - p1
    if p1 == p:
        return SpectralSplit(np.eye(p), A.copy(), np.zeros((0, 0)), p, 0, np.eye(p))
    if p2 == p:
        return SpectralSplit(np.eye(p), np.zeros((0, 0)), A.copy(), 0, p, np.eye(p))

    T, Z, sdim = scipy.linalg.schur(A, output="real", sort="iuc")
    if sdim != p1:  # pragma: no cover - guarded by the unit-gap check
        raise NumericalError(
            f"Schur reordering selected {sdim} stable eigenvalues, expected {p1}"
        )
    T11, T12, T22 = T[:p1, :p1], T[:p1, p1:], T[p1:, p1:]
    X = scipy.linalg.solve_sylvester(T11, -T22, -T12)
    S = np.eye(p)
    S[:p1, p1:] = -X
    S_inv = np.eye(p)
    S_inv[:p1, p1:] = X
    M = S @ Z.T
    M_inv = Z @ S_inv

    D = M @ A @ M_inv
    off = max(spectral_norm(D[:p1, p1:]), spectral_norm(D[p1:, :p1]))
    if off > 1e-8 * max(1.0, spectral_norm(A)) * condition_number(M):
        raise NumericalError(f"block decoupling failed: off-diagonal norm {off:.3e}")
    return SpectralSplit(M, T11.copy(), T22.copy(), p1, p2, M_inv)


# ---------------------------------------------------------------------------
# Companion embedding and mincoor
# ---------------------------------------------------------------------------

def companion_embed(coeffs) -> np.ndarray:
    """Companion matrix [[A1 ... Ak], [I_{(k-1)m}, 0]] of a VAR(k) model."""
    mats = [np.asarray(Ai, dtype=float) for Ai in coeffs]
    if len(mats) < 1:
        raise InputError("need at least one coefficient matrix")
    m = mats[0].shape[0]
    for Ai in mats:
        if Ai.shape != (m, m):
            raise InputError(f"coefficient blocks must all be {m}x{m}, got {Ai.shape}")
    if not np.any(mats[-1] != 0):
        raise InputError("highest-order coefficient is zero; reduce the order")
    k = len(mats)
    if k == 1:
        return mats[0].copy()
    A = np.zeros((k * m, k * m))
    A[:m, :] = np.hstack(mats)
    A[m:, :-m] = np.eye((k - 1) * m)
    return A


def mincoor(M: np.ndarray, zero_tol: float = MINCOOR_ZERO_TOL) -> float:
    """Smallest magnitude among the nonzero entries of M.

    Entries below ``zero_tol`` times the largest entry magnitude count as
    structural zeros; an all-zero matrix returns +inf so downstream
    infima ignore it.
    """
    a = np.abs(np.asarray(M))
    if a.size == 0:
        return math.inf
    mx = float(a.max())
    if mx == 0.0:
        return math.inf
    nonzero = a[a > zero_tol * mx]
    return float(nonzero.min())

"""Finite-time constants and sample-size prescriptions.

Every infinite series here is truncated with an explicit geometric tail
bound added to the partial sum, preserving upper-bound semantics: the
reported constants are valid (if loose) upper bounds of the exact ones.
Probability bounds are clamped to [0, 1].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SystemSpec, philox
from .errors import (
    InputError,
    NumericalError,
    RegimeError,
    UnreachableError,
)
from .linalg import (
    inf_norm,
    min_row_norm,
    norm_2_to_inf,
    norm_inf_to_2,
    spectral_norm,
    sym,
)
from .noise import TailParams
from .spectral import (
    DEFAULT_UNIT_GAP,
    JordanForm,
    SpectralSplit,
    eig_extremes,
    jordan_infer,
    jordan_of_inverse,
    reachability_gramian,
    stable_explosive_split,
)

SERIES_TAIL_CUTOFF = 1e-10
PHI_TRUNCATION_TOL = 1e-6
PSI_ZERO_TOL = 1e-9
_MAX_SERIES_TERMS = 2_000_000


def tail_exponent(tail: TailParams) -> float:
    """4/alpha, the log-power appearing in the stable-regime displays."""
    return 0.0 if tail.is_bounded else 4.0 / tail.alpha


def ensure_jordan(spec: SystemSpec) -> JordanForm:
    return spec.jordan if spec.jordan is not None else jordan_infer(spec.A0)


def regime_of(A: np.ndarray, unit_gap: float = DEFAULT_UNIT_GAP) -> str:
    lo, hi = eig_extremes(A)
    if abs(lo - 1.0) <= unit_gap or abs(hi - 1.0) <= unit_gap:
        raise RegimeError("eigenvalue magnitude within the unit gap of 1")
    if hi < 1.0:
        return "stable"
    if lo > 1.0:
        return "explosive"
    return "general"


# ---------------------------------------------------------------------------
# The summable Jordan-power bound
# ---------------------------------------------------------------------------

def eta_t_block(lam_abs: float, m: int, t: int) -> float:
    """inf_{rho >= |lam|} t^{m-1} rho^t sum_{j<m} rho^{-j}/j! for one block."""
    if t == 0:
        return 1.0
    if m == 1:
        return lam_abs ** t

    def f(rho: float) -> float:
        return t ** (m - 1) * sum(rho ** (t - j) / math.factorial(j) for j in range(m))

    if t >= m - 1:
        # the integrand is nondecreasing in rho, so the infimum sits at |lam|
        return f(lam_abs) if lam_abs > 0 else _f_limit_zero(m, t)
    # interior minimum possible: critical points are roots of
    # sum_j (t-j) rho^{m-1-j}/j!
    coeffs = [(t - j) / math.factorial(j) for j in range(m)]
    roots = np.roots(coeffs)
    cands = [lam_abs] if lam_abs > 0 else []
    for r in roots:
        if abs(r.imag) < 1e-12 and r.real > max(lam_abs, 0.0):
            cands.append(float(r.real))
    if not cands:
        cands = [max(lam_abs, 1e-300)]
    return min(f(rho) for rho in cands)


def _f_limit_zero(m: int, t: int) -> float:
    # lam = 0 and t >= m-1: the infimum over rho > 0 is the rho -> 0 limit,
    # which is 0 for t > m-1 and t^{m-1}/(m-1)! for t = m-1
    if t > m - 1:
        return 0.0
    return t ** (m - 1) / math.factorial(m - 1)


def eta_t(blocks, t: int) -> float:
    """eta_t of a block-diagonal Jordan structure: the block maximum,
    with eta_0 = 1 by definition."""
    if t == 0:
        return 1.0
    return max(eta_t_block(abs(complex(lam)), m, t) for lam, m in blocks)


def _spectral_radius_of_blocks(blocks) -> tuple[float, int]:
    r = max(abs(complex(lam)) for lam, _ in blocks)
    mu = max(m for _, m in blocks)
    return r, mu


def eta_weighted_series(blocks, weight, cutoff: float = SERIES_TAIL_CUTOFF) -> float:
    """sum_{t>=1} eta_t(blocks) * weight(t) plus a geometric tail bound.

    The tail uses eta_t <= t^(mu-1) r^t e^(1/r) and splits r^t = r^(t/2) *
    r^(t/2); once s^(mu-1) weight(s) r^(s/2) is decreasing the remainder
    is dominated by a geometric series.
    """
    r, mu = _spectral_radius_of_blocks(blocks)
    if r >= 1.0:
        raise RegimeError(f"series diverges: spectral radius {r} >= 1")
    if r == 0.0:
        return sum(eta_t(blocks, t) * weight(t) for t in range(1, mu + 1))
    pref = math.exp(1.0 / r)
    sqrt_r = math.sqrt(r)
    total = 0.0
    t = 1
    while t <= _MAX_SERIES_TERMS:
        total += eta_t(blocks, t) * weight(t)
        s = t + 1
        w_s = weight(s)
        ratio = ((s + 1) / s) ** (mu - 1) * (weight(s + 1) / max(w_s, 1e-300)) * sqrt_r
        if ratio <= 1.0:
            tail = pref * s ** (mu - 1) * w_s * r ** s / (1.0 - sqrt_r)
            if tail < cutoff:
                return total + tail
        t += 1
    raise NumericalError("Jordan power series did not converge within the term limit")


def eta_const(jf: JordanForm, direction: str = "A", tail_cutoff: float = SERIES_TAIL_CUTOFF) -> float:
    """The summable power bound of a stable matrix.

    direction "A" uses ||P^-1||_{inf->2} ||P||_inf; "A_transpose" uses the
    Jordan form of A' (same blocks up to a per-block flip, which drops
    out of the norms), giving ||P'||_{inf->2} ||(P^-1)'||_inf.
    """
    r, _ = _spectral_radius_of_blocks(jf.blocks)
    if r >= 1.0:
        raise RegimeError(f"matrix is not stable: largest eigenvalue magnitude {r}")
    series = 1.0 + eta_weighted_series(jf.blocks, lambda t: 1.0, tail_cutoff)
    if direction == "A":
        pre = norm_inf_to_2(jf.P_inv) * inf_norm(jf.P)
    elif direction == "A_transpose":
        pre = norm_inf_to_2(jf.P.T) * inf_norm(jf.P_inv.T)
    else:
        raise InputError(f"unknown direction {direction!r}")
    return pre * series


# ---------------------------------------------------------------------------
# Discrete Lyapunov solve (doubling)
# ---------------------------------------------------------------------------

def lyap_solve(A: np.ndarray, C: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Unique PSD solution of X = A X A' + C for stable A, by doubling."""
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    if A.size == 0:
        return np.zeros((0, 0))
    _, hi = eig_extremes(A)
    if hi >= 1.0:
        raise RegimeError(f"Lyapunov solve needs a stable matrix, got |lambda_max| = {hi}")
    X = C.copy()
    Ak = A.copy()
    for _ in range(128):
        X = X + Ak @ X @ Ak.T
        Ak = Ak @ Ak
        resid = spectral_norm(X - A @ X @ A.T - C)
        if resid <= rel_tol * max(spectral_norm(X), 1e-300):
            return sym(X)
    raise NumericalError("Lyapunov doubling iteration did not reach the residual target")


# ---------------------------------------------------------------------------
# Stable-regime constants and sample size
# ---------------------------------------------------------------------------

def _stable_tail_factor(tail: TailParams, p: int) -> float:
    # (c2 log(2 c1 p))^(4/alpha); the log is floored at 1 so extremely
    # light declared tails cannot make the factor collapse or go negative
    if tail.is_bounded:
        return 1.0
    return (tail.c2 * max(math.log(2.0 * tail.c1 * p), 1.0)) ** (4.0 / tail.alpha)


def stable_constants_detailed(spec: SystemSpec) -> dict:
    """Every factor of the stable-regime constants, for auditability."""
    jf = ensure_jordan(spec)
    _, hi = eig_extremes(spec.A0)
    if hi >= 1.0:
        raise RegimeError("stable constants need all eigenvalue magnitudes < 1")
    p = spec.p
    tail = spec.noise.tail
    C = spec.noise.covariance
    eta = eta_const(jf, "A")
    eta_T = eta_const(jf, "A_transpose")
    x0_factor = max(spec.x0_sup_norm(), 1.0) ** 2
    a_norm_sq = spectral_norm(spec.A0) ** 2
    cov_max = float(np.linalg.eigvalsh(C)[-1])
    tail_factor = _stable_tail_factor(tail, p)
    c1 = (288.0 * x0_factor * eta ** 2 * eta_T ** 4 * (a_norm_sq + 1.0)
          * (cov_max + 1.0) * tail_factor * p * math.log(8.0 * p))
    K, k_min = reachability_gramian(spec.A0, C)
    if k_min <= 0.0:
        raise UnreachableError(
            "the pair [A0, C] is not reachable: lambda_min(K(C)) = 0 leaves c2 undefined"
        )
    c2 = 4.0 * c1 * max(a_norm_sq, 1.0) / k_min ** 2 + 2.0
    return {
        "eta": eta,
        "eta_transpose": eta_T,
        "x0_factor": x0_factor,
        "a_norm_sq": a_norm_sq,
        "cov_max_eig": cov_max,
        "tail_factor": tail_factor,
        "dim_factor": p * math.log(8.0 * p),
        "k_min": k_min,
        "gramian": K,
        "c1_const": c1,
        "c2_const": c2,
    }


def stable_constants(spec: SystemSpec) -> tuple[float, float]:
    d = stable_constants_detailed(spec)
    return d["c1_const"], d["c2_const"]


def _min_n_for_display(rhs: float, log_exp: float, n_floor: int = 3) -> int:
    """Minimal integer n >= n_floor with n / (log n)^log_exp >= rhs.

    The left side dips before rising again (its minimum sits at
    n = e^log_exp); when the floor itself fails the display, everything
    up to the increasing branch fails too, so bisection runs there.
    """

    def g(n: int) -> float:
        return n / math.log(n) ** log_exp

    if g(n_floor) >= rhs:
        return n_floor
    start = max(n_floor, int(math.ceil(math.exp(log_exp))) + 1)
    if g(start) >= rhs:
        return start
    hi = start
    while g(hi) < rhs:
        hi *= 2
        if hi > 10 ** 60:
            raise NumericalError("sample-size display unsatisfiable in integer range")
    lo = start  # g(lo) < rhs, g(hi) >= rhs, g increasing on [start, hi]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if g(mid) >= rhs:
            hi = mid
        else:
            lo = mid
    return hi


def stable_sample_size(spec: SystemSpec, epsilon: float, delta: float) -> int:
    """Smallest n >= 3 with n/(log n)^(4/alpha) >= (c2/eps^2)(-log delta)^(1+4/alpha)."""
    if not (0.0 < epsilon < 1.0) or not (0.0 < delta < 1.0):
        raise InputError("epsilon and delta must lie in (0, 1)")
    _, c2 = stable_constants(spec)
    q = tail_exponent(spec.noise.tail)
    rhs = (c2 / epsilon ** 2) * (-math.log(delta)) ** (1.0 + q)
    return _min_n_for_display(rhs, q)


# ---------------------------------------------------------------------------
# Explosive-regime ingredients: psi, phi, zeta
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsiSearchOpts:
    samples: int = 10_000
    refine_top: int = 10
    rounds: int = 3
    seed: int = 0


@dataclass(frozen=True)
class MonteCarloOpts:
    samples: int = 100_000
    seed: int = 0
    chunk: int = 20_000


def _structural_coefficients(jf: JordanForm) -> np.ndarray:
    """Coefficient matrix of the distinct structural entries of the block
    polynomial sum_i a_{i+1} Lambda^{-i}.

    Row (block b, offset k) holds the coefficient of a_{i+1}, namely the
    (k-th superdiagonal) entry of J(lam_b, m_b)^{-i}; entries outside
    these rows are identically zero for every a.
    """
    p = jf.p
    rows = []
    for lam, m in jf.blocks:
        lam = complex(lam)
        for k in range(m):
            row = np.zeros(p, dtype=complex)
            for i in range(p):
                if i == 0:
                    row[i] = 1.0 if k == 0 else 0.0
                else:
                    row[i] = (-1) ** k * math.comb(i + k - 1, k) * lam ** (-i - k)
            rows.append(row)
    return np.vstack(rows)


def _blocks_regular(jf: JordanForm) -> bool:
    """Regularity read off exact Jordan data: every explosive eigenvalue
    owns exactly one block."""
    expl = [(complex(lam), m) for lam, m in jf.blocks if abs(complex(lam)) > 1.0]
    for i, (lam, _) in enumerate(expl):
        for lam2, _ in expl[i + 1:]:
            if abs(lam - lam2) < 1e-9 * max(1.0, abs(lam)):
                return False
    return True


def _psi_objective(Gamma: np.ndarray):
    def value(a: np.ndarray) -> float:
        nrm = np.abs(a).sum()
        if nrm == 0:
            return math.inf
        return float(np.abs(Gamma @ a).max() / nrm)

    return value


def psi_const(jf: JordanForm, search: PsiSearchOpts | None = None) -> float:
    """Deterministic ingredient of the explosive Gram lower bound.

    Estimates ||P||_{2->inf}^{-1} inf over l1-unit real coefficient
    vectors of the largest structural entry magnitude of the block
    polynomial in Lambda^{-1}.  The infimum is positive exactly for
    regular matrices (an annihilating real polynomial of degree < p
    exists otherwise), and 0 is returned outright when the search hits
    the tolerance floor on an irregular structure.
    """
    search = search or PsiSearchOpts()
    lo = min(abs(complex(lam)) for lam, _ in jf.blocks)
    if lo <= 1.0:
        raise RegimeError("psi is defined for explosive matrices (all |eig| > 1)")
    p = jf.p
    Gamma = _structural_coefficients(jf)
    objective = _psi_objective(Gamma)
    rng = philox(search.seed, 0x50)

    # stratified candidates: random signs times Dirichlet magnitudes
    mags = rng.dirichlet(np.ones(p), size=search.samples)
    signs = rng.integers(0, 2, size=(search.samples, p)) * 2.0 - 1.0
    cands = mags * signs
    # deterministic extras: basis vectors and kernel directions of the
    # stacked real coefficient matrix (found via SVD; these certify the
    # irregular case)
    extras = [np.eye(p)[i] for i in range(p)]
    stacked = np.vstack([Gamma.real, Gamma.imag])
    _, s, vh = np.linalg.svd(stacked)
    for row in vh[::-1][:2]:
        nrm = np.abs(row).sum()
        if nrm > 0:
            extras.append(row / nrm)
    cands = np.vstack([cands, np.array(extras)])

    vals = np.abs(cands @ Gamma.T).max(axis=1) / np.abs(cands).sum(axis=1)
    order = np.argsort(vals)
    best_val = float(vals[order[0]])
    tops = [cands[i].copy() for i in order[: search.refine_top]]

    from scipy.optimize import minimize_scalar

    for a in tops:
        a = a / np.abs(a).sum()
        cur = objective(a)
        for _ in range(search.rounds):
            for i in range(p):
                def h(sv, a=a, i=i):
                    trial = a.copy()
                    trial[i] += sv
                    return objective(trial)

                res = minimize_scalar(h, bounds=(-2.0, 2.0), method="bounded",
                                      options={"xatol": 1e-12})
                if res.fun < cur:
                    a[i] += float(res.x)
                    a = a / np.abs(a).sum()
                    cur = objective(a)
        best_val = min(best_val, cur)

    if best_val < PSI_ZERO_TOL and not _blocks_regular(jf):
        return 0.0
    return best_val / norm_2_to_inf(jf.P)


def _noise_term_bound(tail: TailParams, arg_log: float) -> float:
    """(c2 * log)^(1/alpha) with the bounded-noise limit handled."""
    if tail.is_bounded:
        return float(tail.bound)
    return (tail.c2 * max(arg_log, 1.0)) ** (1.0 / tail.alpha)


@dataclass(frozen=True)
class ExplosiveConstants:
    """delta-free proof constants of the explosive regime."""

    zeta_bar: float
    rho1: float
    rho2: float
    n1: float
    n2: float
    eta_inv: float
    eta_inv_transpose: float
    p_norm_product: float  # ||P^-1||_{inf->2} ||P||_inf


def zeta_delta_bound(jf: JordanForm, tail: TailParams, x0_two: float, p: int,
                     delta: float) -> float:
    """High-probability bound on sup_n ||z(n)||_2, z(n) = x(0) + sum A^{-t} w(t)."""
    inv = jordan_of_inverse(jf)
    pn = norm_inf_to_2(jf.P_inv) * inf_norm(jf.P)

    def w(t: int) -> float:
        return _noise_term_bound(tail, math.log(2.0 * tail.c1 * p * t * t / delta))

    return x0_two + pn * eta_weighted_series(inv.blocks, w)


def explosive_constants(jf: JordanForm, tail: TailParams, x0_two: float, p: int,
                        psi: float) -> ExplosiveConstants:
    """The delta-free constants zeta-bar, rho1, rho2, n1, n2 from the
    explosive-regime proofs, evaluated on Jordan data."""
    lam_min = min(abs(complex(lam)) for lam, _ in jf.blocks)
    if lam_min <= 1.0:
        raise RegimeError("explosive constants need all eigenvalue magnitudes > 1")
    mu = jf.mu
    inv = jordan_of_inverse(jf)
    pn = norm_inf_to_2(jf.P_inv) * inf_norm(jf.P)
    pn_T = norm_inf_to_2(jf.P.T) * inf_norm(jf.P_inv.T)
    eta_inv = eta_const(inv, "A")
    eta_inv_T = eta_const(inv, "A_transpose")

    def w_bar(t: int) -> float:
        return _noise_term_bound(tail, math.log(2.0 * tail.c1 * p * t * t))

    zeta_bar = eta_inv ** 2 * (x0_two + pn * eta_weighted_series(inv.blocks, w_bar)) ** 2

    rho1 = 2.0 * (pn * eta_inv_T ** 2 + eta_inv * norm_inf_to_2(jf.P.T) ** 2
                  * inf_norm(jf.P_inv.T) ** 2) * math.exp(2.0 * lam_min)
    rho2 = 2.0 * eta_inv_T ** 2 * (2.0 + eta_inv) * pn * math.exp(lam_min)

    if tail.is_bounded:
        tail_factor = 1.0
        inv_alpha = 0.0
    else:
        tail_factor = (tail.c2 * max(math.log(tail.c1 * p), 1.0)) ** (1.0 / tail.alpha)
        inv_alpha = 1.0 / tail.alpha
    n1 = (3.0 * math.log(rho1 * rho2 * zeta_bar ** 3 * tail_factor)
          + 12.0 * mu + 6.0 * inv_alpha) / lam_min
    if psi <= 0.0:
        n2 = math.inf
    else:
        n2 = (n1
              + 3.0 / lam_min * math.log(2.0 * p * zeta_bar * eta_inv / psi)
              + 3.0 / lam_min * math.log(pn * math.exp(lam_min)))
    return ExplosiveConstants(zeta_bar=zeta_bar, rho1=rho1, rho2=rho2, n1=n1, n2=n2,
                              eta_inv=eta_inv, eta_inv_transpose=eta_inv_T,
                              p_norm_product=pn)


@dataclass(frozen=True)
class PhiEstimate:
    """Empirical delta-quantile of the smallest coordinate magnitude of
    P z(T), with the truncation horizon and the norm bound used to pick it."""

    phi_hat: float
    truncation_T: int
    zeta_bar: float  # Eq.-(19)-style sup-norm bound at the chosen delta
    ci_lo: float
    ci_hi: float
    n_samples: int


def _phi_truncation(jf: JordanForm, tail: TailParams, p: int, delta: float,
                    tol: float = PHI_TRUNCATION_TOL) -> int:
    """Smallest T whose series tail perturbs every coordinate of P z by
    less than tol with probability at least 1 - delta/10."""
    inv = jordan_of_inverse(jf)
    r, mu = _spectral_radius_of_blocks(inv.blocks)
    pinf = inf_norm(jf.P)
    if r == 0.0:
        return mu + 1
    pref = math.exp(1.0 / r)
    sqrt_r = math.sqrt(r)

    def w(t: int) -> float:
        return _noise_term_bound(tail, math.log(20.0 * tail.c1 * p * t * t / delta))

    T = 1
    while T < 100_000:
        s = T + 1
        ratio = ((s + 1) / s) ** (mu - 1) * (w(s + 1) / max(w(s), 1e-300)) * sqrt_r
        if ratio <= 1.0:
            tail_bound = pinf * pref * s ** (mu - 1) * w(s) * r ** s / (1.0 - sqrt_r)
            if tail_bound < tol:
                return T
        T += 1
    raise NumericalError("could not find a truncation horizon for the z series")


def phi_quantile(spec: SystemSpec, delta: float, mc: MonteCarloOpts | None = None) -> PhiEstimate:
    """Monte Carlo estimate of the delta-quantile of min_i |P_i' z(inf)|.

    z(inf) is approximated by the truncated series x(0) + sum_{i<=T}
    A0^{-i} w(i) with T chosen so the dropped tail moves each coordinate
    by less than 1e-6 with probability at least 1 - delta/10.
    """
    if not (0.0 < delta < 1.0):
        raise InputError("delta must be in (0, 1)")
    mc = mc or MonteCarloOpts()
    jf = ensure_jordan(spec)
    lo, _ = eig_extremes(spec.A0)
    if lo <= 1.0:
        raise RegimeError("phi is defined for explosive matrices (all |eig| > 1)")
    from .spectral import is_reachable

    if not is_reachable(spec.A0, spec.noise.covariance):
        warnings.warn(
            "system is not reachable: phi may be zero and identification inconsistent",
            stacklevel=2,
        )
    p = spec.p
    tail = spec.noise.tail
    T = _phi_truncation(jf, tail, p, delta)
    zeta_d = zeta_delta_bound(jf, tail, spec.x0_two_norm(), p, delta)

    A_inv = np.linalg.inv(spec.A0)
    rng = philox(mc.seed, 0x5A)
    vals = np.empty(mc.samples)
    done = 0
    chunk = min(mc.chunk, max(1, int(2e7 / max(T * p, 1))))
    while done < mc.samples:
        b = min(chunk, mc.samples - done)
        if isinstance(spec.x0, str) and spec.x0 == "random_unit":
            g = rng.standard_normal((b, p))
            X0 = g / np.linalg.norm(g, axis=1, keepdims=True)
        else:
            X0 = np.tile(spec.x0_vector(rng), (b, 1))
        W = spec.noise.sample(rng, b * T).reshape(b, T, p)
        Z = np.zeros((b, p))
        for i in range(T, 0, -1):  # Horner: A^{-1}(w(i) + A^{-1}(w(i+1) + ...))
            Z = (Z + W[:, i - 1, :]) @ A_inv.T
        Z += X0
        vals[done:done + b] = np.abs(Z @ jf.P.T).min(axis=1)
        done += b

    vals.sort()
    phi_hat = float(np.quantile(vals, delta, method="inverted_cdf"))
    k = delta * mc.samples
    half = 1.96 * math.sqrt(mc.samples * delta * (1.0 - delta))
    lo_i = int(np.clip(math.floor(k - half), 0, mc.samples - 1))
    hi_i = int(np.clip(math.ceil(k + half), 0, mc.samples - 1))
    return PhiEstimate(phi_hat=phi_hat, truncation_T=T, zeta_bar=zeta_d,
                       ci_lo=float(vals[lo_i]), ci_hi=float(vals[hi_i]),
                       n_samples=mc.samples)


def explosive_sample_size(spec: SystemSpec, epsilon: float, delta: float,
                          mc: MonteCarloOpts | None = None,
                          psi_opts: PsiSearchOpts | None = None) -> tuple[int, float]:
    """Prescribed horizon for the explosive regime, and the proof constant n1.

    Ceiling of 3(alpha+4)/(alpha log lambda_min) * log((-log delta) /
    (eps * phi_hat)) joined with n2 from the proof constants.
    """
    if epsilon <= 0.0 or not (0.0 < delta < 1.0):
        raise InputError("need epsilon > 0 and delta in (0, 1)")
    jf = ensure_jordan(spec)
    lam_min, _ = eig_extremes(spec.A0)
    if lam_min <= 1.0:
        raise RegimeError("explosive prescription needs all eigenvalue magnitudes > 1")
    psi = psi_const(jf, psi_opts)
    phi = phi_quantile(spec, delta, mc)
    if psi <= 0.0 or phi.phi_hat <= 0.0:
        raise RegimeError(
            "irregular or unreachable: identification inconsistent "
            f"(psi={psi:.3e}, phi={phi.phi_hat:.3e})"
        )
    tail = spec.noise.tail
    coeff = 3.0 if tail.is_bounded else 3.0 * (tail.alpha + 4.0) / tail.alpha
    display = coeff / math.log(lam_min) * math.log((-math.log(delta)) / (epsilon * phi.phi_hat))
    cons = explosive_constants(jf, tail, spec.x0_two_norm(), spec.p, psi)
    n = max(int(math.ceil(display)), int(math.ceil(cons.n2)), 1)
    return n, cons.n1


# ---------------------------------------------------------------------------
# General (mixed) regime
# ---------------------------------------------------------------------------

def transformed_tail(tail: TailParams, M: np.ndarray) -> TailParams:
    """Tail certificate for the rotated noise M w: the proofs absorb the
    coordinate mixing as a (||M||_inf v 1) factor on the noise bound,
    which folds into c2 (or the declared bound)."""
    factor = max(inf_norm(M), 1.0)
    if tail.is_bounded:
        return TailParams(c1=tail.c1, c2=tail.c2, alpha=tail.alpha,
                          bound=tail.bound * factor)
    return TailParams(c1=tail.c1, c2=tail.c2 * factor ** tail.alpha, alpha=tail.alpha)


def _subsystem_specs(spec: SystemSpec, split: SpectralSplit) -> tuple[SystemSpec, SystemSpec]:
    from .noise import NoiseModel, psd_sqrt

    M = split.M
    C_t = sym(M @ spec.noise.covariance @ M.T)
    p1 = split.p1
    C11, C22 = C_t[:p1, :p1], C_t[p1:, p1:]
    tail_t = transformed_tail(spec.noise.tail, M)
    if isinstance(spec.x0, str):
        if spec.x0 == "zero":
            x1 = np.zeros(p1)
            x2 = np.zeros(split.p2)
        else:
            x0 = M @ spec.x0_vector(philox(0, 0xD0))
            x1, x2 = x0[:p1], x0[p1:]
    else:
        x0 = M @ spec.x0
        x1, x2 = x0[:p1], x0[p1:]
    root1, root2 = psd_sqrt(C11), psd_sqrt(C22)
    noise1 = NoiseModel("gaussian", tail_t, root1, root1, ())
    noise2 = NoiseModel("gaussian", tail_t, root2, root2, ())
    return (SystemSpec(A0=split.A1, noise=noise1, x0=x1),
            SystemSpec(A0=split.A2, noise=noise2, x0=x2))


@dataclass(frozen=True)
class GeneralConstants:
    rho0: float
    rho3: float
    c3_const: float
    n3: float
    k1_min: float
    k1_max: float
    stable_factors: dict = field(repr=False, default_factory=dict)
    explosive_constants: ExplosiveConstants | None = field(repr=False, default=None)


def general_constants(spec: SystemSpec, split: SpectralSplit, delta: float,
                      psi_opts: PsiSearchOpts | None = None) -> GeneralConstants:
    """The mixed-regime constants rho0, rho3, c3, n3.

    c2 is evaluated on the stable subsystem [A1, C11] and n2 on the
    explosive subsystem [A2, C22], both in the split coordinates.
    """
    if split.degenerate:
        raise RegimeError(
            "degenerate split (one regime empty): use the pure stable or explosive path"
        )
    sub1, sub2 = _subsystem_specs(spec, split)
    K1 = lyap_solve(split.A1, sub1.noise.covariance)
    w = np.linalg.eigvalsh(K1)
    k1_min, k1_max = float(w[0]), float(w[-1])
    if k1_min <= 0.0:
        raise UnreachableError("stable subsystem pair [A1, C11] is not reachable")
    rho0 = 0.5 - 0.5 * math.sqrt(1.0 - k1_min / (9.0 * k1_max))
    m2 = spectral_norm(split.M)
    rho3 = 4.0 * math.sqrt(4.0 / k1_min + 3.0) * m2 / (math.sqrt(k1_min) * rho0)

    stable_fac = stable_constants_detailed(sub1)
    c2 = stable_fac["c2_const"]
    lam_min2, _ = eig_extremes(split.A2)
    tail = spec.noise.tail
    expl_term = (18.0 if tail.is_bounded
                 else 18.0 * (tail.alpha + 4.0) / tail.alpha) / math.log(lam_min2)
    c3 = 72.0 * spec.p * max(m2, 1.0) ** 4 * rho3 ** 2 * c2 + expl_term

    jf2 = ensure_jordan(sub2)
    psi2 = psi_const(jf2, psi_opts)
    if psi2 <= 0.0:
        raise RegimeError("explosive subsystem is irregular: n2 undefined")
    cons2 = explosive_constants(jf2, sub2.noise.tail, sub2.x0_two_norm(), split.p2, psi2)
    n3 = 12.0 * (cons2.n2 + math.log(max(rho3 * inf_norm(split.M), 1.0)))
    return GeneralConstants(rho0=rho0, rho3=rho3, c3_const=c3, n3=n3,
                            k1_min=k1_min, k1_max=k1_max,
                            stable_factors=stable_fac, explosive_constants=cons2)


def general_sample_size(spec: SystemSpec, epsilon: float, delta: float,
                        mc: MonteCarloOpts | None = None,
                        psi_opts: PsiSearchOpts | None = None,
                        unit_gap: float = DEFAULT_UNIT_GAP) -> int:
    """Prescribed horizon for a general system; pure regimes route to
    their own prescriptions."""
    if epsilon <= 0.0 or not (0.0 < delta < 1.0):
        raise InputError("need epsilon > 0 and delta in (0, 1)")
    reg = regime_of(spec.A0, unit_gap)
    if reg == "stable":
        return stable_sample_size(spec, epsilon, delta)
    if reg == "explosive":
        return explosive_sample_size(spec, epsilon, delta, mc, psi_opts)[0]
    split = stable_explosive_split(spec.A0, unit_gap)
    cons = general_constants(spec, split, delta, psi_opts)
    _, sub2 = _subsystem_specs(spec, split)
    phi2 = phi_quantile(sub2, delta, mc)
    if phi2.phi_hat <= 0.0:
        raise RegimeError("explosive subsystem quantile is zero: identification inconsistent")
    q = tail_exponent(spec.noise.tail)
    rhs = (cons.c3_const / epsilon ** 2) * ((-math.log(delta)) ** (1.0 + q)
                                            - math.log(phi2.phi_hat))
    return _min_n_for_display(max(rhs, cons.n3), q)


# ---------------------------------------------------------------------------
# Concentration-inequality tail bounds
# ---------------------------------------------------------------------------

def bernstein_bound(n: int, p: int, variance_proxy: float, max_eig_bound: float,
                    y: float) -> float:
    """Matrix Bernstein tail: 2p exp(-3y^2 / (6 sigma^2 + 2 b y)), clamped to [0, 1].

    ``n`` only documents the number of summands; the variance proxy
    already carries it.
    """
    if n <= 0 or p <= 0 or variance_proxy <= 0 or max_eig_bound <= 0:
        raise InputError("all Bernstein parameters must be positive")
    if y < 0:
        raise InputError("threshold must be nonnegative")
    val = 2.0 * p * math.exp(-3.0 * y ** 2 / (6.0 * variance_proxy + 2.0 * max_eig_bound * y))
    return float(min(val, 1.0))


def azuma_bound(p: int, sigma_sq: float, y: float) -> float:
    """Matrix Azuma tail: 2p exp(-y^2 / (8 sigma^2)), clamped to [0, 1]."""
    if p <= 0 or sigma_sq <= 0:
        raise InputError("dimension and variance proxy must be positive")
    if y < 0:
        raise InputError("threshold must be nonnegative")
    return float(min(2.0 * p * math.exp(-(y ** 2) / (8.0 * sigma_sq)), 1.0))


def phi_gaussian_lower_coefficient(spec: SystemSpec, i: int | None = None) -> float:
    """Gaussian closed form of the linear-in-delta quantile lower bound:
    sqrt(pi lambda_min(K) / (2 lambda_max(A^i A'^i))) / p * min_i ||P_i||_2."""
    jf = ensure_jordan(spec)
    p = spec.p
    i = p if i is None else i
    _, k_min = reachability_gramian(spec.A0, spec.noise.covariance)
    if k_min <= 0:
        raise UnreachableError("quantile coefficient needs a reachable pair")
    Ai = np.linalg.matrix_power(spec.A0, i)
    lam = float(np.linalg.eigvalsh(sym(Ai @ Ai.T))[-1])
    return math.sqrt(math.pi * k_min / (2.0 * lam)) / p * min_row_norm(jf.P)


# ---------------------------------------------------------------------------
# Assembled report
# ---------------------------------------------------------------------------

@dataclass
class BoundReport:
    """Named constants of one system's regime; fields foreign to the
    regime stay None and are omitted from the JSON export."""

    regime: str
    sample_size: int
    eta: float | None = None
    eta_transpose: float | None = None
    k_min: float | None = None
    lyap_matrix: np.ndarray | None = None
    c1_const: float | None = None
    c2_const: float | None = None
    psi: float | None = None
    phi_hat: float | None = None
    zeta_bar: float | None = None
    n1: float | None = None
    n2: float | None = None
    rho0: float | None = None
    rho3: float | None = None
    c3_const: float | None = None
    n3: float | None = None
    factors: dict = field(default_factory=dict)
    stable_part: "BoundReport | None" = None
    explosive_part: "BoundReport | None" = None

    def to_json_dict(self) -> dict:
        out = {"regime": self.regime, "sample_size": int(self.sample_size)}
        scalars = ["eta", "eta_transpose", "k_min", "c1_const", "c2_const", "psi",
                   "phi_hat", "zeta_bar", "n1", "n2", "rho0", "rho3", "c3_const", "n3"]
        for name in scalars:
            v = getattr(self, name)
            if v is not None:
                out[name] = float(v)
        if self.lyap_matrix is not None:
            out["lyap_matrix"] = [[float(v) for v in row] for row in self.lyap_matrix]
        if self.factors:
            out["factors"] = {k: (float(v) if np.isscalar(v) else v)
                              for k, v in self.factors.items() if np.isscalar(v)}
        if self.stable_part is not None:
            out["stable_part"] = self.stable_part.to_json_dict()
        if self.explosive_part is not None:
            out["explosive_part"] = self.explosive_part.to_json_dict()
        return out


def compute_bound_report(spec: SystemSpec, epsilon: float, delta: float,
                         mc: MonteCarloOpts | None = None,
                         psi_opts: PsiSearchOpts | None = None) -> BoundReport:
    """Evaluate every constant relevant to the system's regime plus the
    sample-size prescription n(epsilon, delta)."""
    reg = regime_of(spec.A0)
    if reg == "stable":
        fac = stable_constants_detailed(spec)
        n = stable_sample_size(spec, epsilon, delta)
        lyap = lyap_solve(spec.A0, spec.noise.covariance)
        report_factors = {k: v for k, v in fac.items() if np.isscalar(v)}
        return BoundReport(
            regime="stable", sample_size=n,
            eta=fac["eta"], eta_transpose=fac["eta_transpose"], k_min=fac["k_min"],
            lyap_matrix=lyap, c1_const=fac["c1_const"], c2_const=fac["c2_const"],
            factors=report_factors,
        )
    if reg == "explosive":
        jf = ensure_jordan(spec)
        psi = psi_const(jf, psi_opts)
        phi = phi_quantile(spec, delta, mc)
        _, k_min = reachability_gramian(spec.A0, spec.noise.covariance)
        cons = explosive_constants(jf, spec.noise.tail, spec.x0_two_norm(), spec.p, psi)
        n, _ = explosive_sample_size(spec, epsilon, delta, mc, psi_opts)
        factors = {
            "rho1": cons.rho1, "rho2": cons.rho2, "eta_inv": cons.eta_inv,
            "eta_inv_transpose": cons.eta_inv_transpose,
            "p_norm_product": cons.p_norm_product,
            "zeta_delta": phi.zeta_bar, "phi_ci_lo": phi.ci_lo, "phi_ci_hi": phi.ci_hi,
            "phi_truncation_T": phi.truncation_T,
        }
        if spec.noise.kind == "gaussian" and k_min > 0:
            factors["phi_gaussian_coefficient"] = phi_gaussian_lower_coefficient(spec)
        return BoundReport(
            regime="explosive", sample_size=n, k_min=k_min, psi=psi,
            phi_hat=phi.phi_hat, zeta_bar=cons.zeta_bar, n1=cons.n1, n2=cons.n2,
            factors=factors,
        )
    split = stable_explosive_split(spec.A0)
    cons = general_constants(spec, split, delta, psi_opts)
    sub1, sub2 = _subsystem_specs(spec, split)
    n = general_sample_size(spec, epsilon, delta, mc, psi_opts)
    stable_part = compute_bound_report(sub1, epsilon, delta, mc, psi_opts)
    explosive_part = compute_bound_report(sub2, epsilon, delta, mc, psi_opts)
    _, k_min = reachability_gramian(spec.A0, spec.noise.covariance)
    return BoundReport(
        regime="general", sample_size=n, k_min=k_min,
        rho0=cons.rho0, rho3=cons.rho3, c3_const=cons.c3_const, n3=cons.n3,
        factors={"k1_min": cons.k1_min, "k1_max": cons.k1_max,
                 "M_norm_2": spectral_norm(split.M), "M_norm_inf": inf_norm(split.M)},
        stable_part=stable_part, explosive_part=explosive_part,
    )

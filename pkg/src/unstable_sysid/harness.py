"""Experiment campaigns: Monte Carlo verification of the error-decay and
failure-probability claims, decay-rate fitting, sensitivity reports, and
result persistence.

Per-trial randomness comes from counter-based streams keyed by
(master_seed, grid_index, trial), so campaigns are reproducible
byte-for-byte and aggregation commutes across execution order and thread
count.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bounds_mod
from .dynamics import (
    ControlSystem,
    SensitivityCurve,
    SystemSpec,
    design_lqr,
    philox,
    random_wellconditioned,
    sensitivity_scan,
    simulate_batch_moments,
)
from .errors import InputError, SetupError, SingularGramError, SysIdError
from .estimator import ols_from_moments
from .noise import NoiseModel, TailParams, gaussian_noise, uniform_bounded_noise, weibull_symmetric_noise

THREADS_ENV_VAR = "UNSTABLE_SYSID_THREADS"
CAMPAIGN_CSV_HEADER = "n,trial,error,gram_min_eig,failed,reason"
REASON_OK = ""
REASON_ERROR = "error_exceeds_eps"
REASON_SINGULAR = "singular_gram"
REASON_OVERFLOW = "overflow"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemSpec
    n_grid: tuple
    trials: int
    epsilon: float
    delta: float
    master_seed: int
    outputs: str
    fit_mode: str = "auto"   # auto | log_error_vs_n | loglog_error_vs_n | none
    prescribe: bool = True
    mc_samples: int = 100_000
    raw: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.trials < 1:
            raise InputError("trials must be at least 1")
        grid = tuple(int(n) for n in self.n_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InputError("n_grid must be strictly increasing")
        if not grid:
            raise InputError("n_grid must be nonempty")
        object.__setattr__(self, "n_grid", grid)


def noise_from_dict(d: dict, p: int) -> NoiseModel:
    kind = d.get("kind", "gaussian")
    shape = np.asarray(d["shape"], dtype=float) if "shape" in d else None
    if kind == "gaussian":
        cov = d.get("cov", 1.0)
        C = np.eye(p) * float(cov) if np.isscalar(cov) else np.asarray(cov, dtype=float)
        return gaussian_noise(C)
    if kind == "weibull_symmetric":
        return weibull_symmetric_noise(float(d["alpha"]), float(d["c2"]), p, shape)
    if kind == "uniform_bounded":
        return uniform_bounded_noise(float(d["bound"]), p, shape)
    raise InputError(f"unknown noise kind {kind!r}")


def system_from_dict(d: dict) -> SystemSpec:
    if "jordan" in d:
        j = d["jordan"]
        blocks = [(complex(b[0], b[1]), int(b[2])) for b in j["blocks"]]
        p = sum(m for _, m in blocks)
        P = j.get("p", "random_wellconditioned")
        if not isinstance(P, str):
            P = np.asarray(P, dtype=float)
        noise = noise_from_dict(d.get("noise", {}), p)
        x0 = d.get("x0", "zero")
        if not isinstance(x0, str):
            x0 = np.asarray(x0, dtype=float)
        from .dynamics import make_system_from_jordan

        return make_system_from_jordan(
            blocks, P, noise, x0,
            seed=int(j.get("seed", 0)), cond=float(j.get("cond", 10.0)),
        )
    if "a0" not in d:
        raise InputError("system needs either 'a0' or 'jordan'")
    A0 = np.asarray(d["a0"], dtype=float)
    noise = noise_from_dict(d.get("noise", {}), A0.shape[0])
    x0 = d.get("x0", "zero")
    if not isinstance(x0, str):
        x0 = np.asarray(x0, dtype=float)
    return SystemSpec(A0=A0, noise=noise, x0=x0)


def experiment_config_from_dict(d: dict, out_override: str | None = None,
                                seed_override: int | None = None) -> ExperimentConfig:
    try:
        system = system_from_dict(d["system"])
        return ExperimentConfig(
            system=system,
            n_grid=tuple(d["n_grid"]),
            trials=int(d["trials"]),
            epsilon=float(d["epsilon"]),
            delta=float(d["delta"]),
            master_seed=int(seed_override if seed_override is not None else d["master_seed"]),
            outputs=str(out_override if out_override is not None else d.get("outputs", ".")),
            fit_mode=d.get("fit_mode", "auto"),
            prescribe=bool(d.get("prescribe", True)),
            mc_samples=int(d.get("mc_samples", 100_000)),
            raw=d,
        )
    except KeyError as exc:
        raise InputError(f"missing config key: {exc}") from exc


def load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path} is not valid JSON: {exc}") from exc


def _tail_to_dict(tail: TailParams) -> dict:
    return {"c1": tail.c1, "c2": tail.c2,
            "alpha": "inf" if tail.is_bounded else tail.alpha,
            "bound": tail.bound}


def config_canonical_dict(config: ExperimentConfig) -> dict:
    """Deterministic serialization used for hashing (and the audit trail)."""
    spec = config.system
    return {
        "system": {
            "a0": spec.A0.tolist(),
            "noise": {
                "kind": spec.noise.kind,
                "tail": _tail_to_dict(spec.noise.tail),
                "c_sqrt": spec.noise.C_sqrt.tolist(),
            },
            "x0": spec.x0 if isinstance(spec.x0, str) else spec.x0.tolist(),
        },
        "n_grid": list(config.n_grid),
        "trials": config.trials,
        "epsilon": config.epsilon,
        "delta": config.delta,
        "master_seed": config.master_seed,
        "fit_mode": config.fit_mode,
    }


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config_canonical_dict(config), sort_keys=True,
                      separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Campaign execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialRecord:
    n: int
    trial: int
    error: float       # nan when unavailable
    gram_min_eig: float  # nan when unavailable
    failed: bool
    reason: str


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    per_n: list
    slope: float | None
    r_squared: float | None
    prescribed_n: int | None
    csv_path: str | None = None
    summary_path: str | None = None

    def records_for(self, n: int) -> list:
        return [r for r in self.records if r.n == n]


def _wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ph = k / n
    denom = 1.0 + z * z / n
    center = (ph + z * z / (2 * n)) / denom
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _run_group(spec: SystemSpec, n: int, ni: int, trials: range, master_seed: int,
               epsilon: float) -> list:
    seeds = [np.random.SeedSequence(master_seed, spawn_key=(ni, t)) for t in trials]
    V, S, _, overflowed_at = simulate_batch_moments(spec, n, seeds)
    out = []
    for j, t in enumerate(trials):
        if overflowed_at[j] >= 0:
            out.append(TrialRecord(n, t, math.nan, math.nan, True, REASON_OVERFLOW))
            continue
        try:
            rep = ols_from_moments(V[j], S[j], n, truth=spec.A0)
        except SingularGramError as exc:
            out.append(TrialRecord(n, t, math.nan, exc.lambda_min, True, REASON_SINGULAR))
            continue
        failed = rep.error > epsilon
        out.append(TrialRecord(n, t, rep.error, rep.gram_min_eig, failed,
                               REASON_ERROR if failed else REASON_OK))
    return out


def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}")
    return 1


def _prescribed_n(config: ExperimentConfig) -> int | None:
    spec = config.system
    mc = bounds_mod.MonteCarloOpts(samples=config.mc_samples,
                                   seed=config.master_seed ^ 0xB0)
    try:
        return int(bounds_mod.general_sample_size(spec, config.epsilon, config.delta, mc))
    except SysIdError:
        return None


def run_montecarlo(config: ExperimentConfig, threads: int | None = None) -> ExperimentReport:
    """Run the campaign, persist CSV + JSON summary, return the report.

    Deterministic given the master seed: trials use independent streams,
    results are merged in sorted order, and files are written only by the
    coordinating thread.
    """
    out_dir = config.outputs
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".write_probe")
    try:
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise InputError(f"output directory {out_dir!r} is not writable: {exc}") from exc

    spec = config.system
    n_workers = _resolve_threads(threads)
    tasks = []
    for ni, n in enumerate(config.n_grid):
        group = max(1, min(200, int(2e7 / max(n * spec.p, 1))))
        for start in range(0, config.trials, group):
            stop = min(start + group, config.trials)
            tasks.append((ni, n, range(start, stop)))

    def worker(task):
        ni, n, trials = task
        return _run_group(spec, n, ni, trials, config.master_seed, config.epsilon)

    if n_workers == 1:
        chunks = [worker(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            chunks = list(pool.map(worker, tasks))
    records = sorted((r for ch in chunks for r in ch), key=lambda r: (r.n, r.trial))

    per_n = []
    for n in config.n_grid:
        rows = [r for r in records if r.n == n]
        effective = [r for r in rows if r.reason != REASON_OVERFLOW]
        failures = sum(1 for r in effective if r.failed)
        freq = failures / len(effective) if effective else math.nan
        ci_lo, ci_hi = _wilson_interval(failures, len(effective))
        per_n.append({
            "n": int(n),
            "fail_freq": freq,
            "ci_lo": ci_lo,
            "ci_hi": ci_hi,
            "n_effective": len(effective),
            "n_overflow": len(rows) - len(effective),
        })

    slope = r_squared = None
    if config.fit_mode != "none" and len(config.n_grid) >= 4:
        mode = config.fit_mode
        if mode == "auto":
            hi = float(np.abs(np.linalg.eigvals(spec.A0)).max())
            mode = "log_error_vs_n" if hi > 1.0 else "loglog_error_vs_n"
        try:
            slope, r_squared = fit_decay_rate_records(records, mode)
        except InputError:
            pass

    prescribed = _prescribed_n(config) if config.prescribe else None

    report = ExperimentReport(config=config, records=records, per_n=per_n,
                              slope=slope, r_squared=r_squared, prescribed_n=prescribed)
    report.csv_path = os.path.join(out_dir, "campaign.csv")
    report.summary_path = os.path.join(out_dir, "summary.json")
    _write_campaign_csv(records, report.csv_path)
    _write_summary(report)
    return report


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else f"{v:.17g}"


def _write_campaign_csv(records, path: str) -> None:
    lines = [CAMPAIGN_CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.n},{r.trial},{_fmt(r.error)},{_fmt(r.gram_min_eig)},"
            f"{'true' if r.failed else 'false'},{r.reason}"
        )
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_summary(report: ExperimentReport) -> None:
    summary = {
        "config_hash": config_hash(report.config),
        "seed": report.config.master_seed,
        "per_n": report.per_n,
        "slope": report.slope,
        "r_squared": report.r_squared,
        "prescribed_n": report.prescribed_n,
    }
    with open(report.summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Decay-rate fitting
# ---------------------------------------------------------------------------

def fit_decay_rate_records(records, mode: str,
                           min_survivors: int = 50) -> tuple[float, float]:
    """Least-squares line through median log-error per grid point.

    mode "log_error_vs_n" regresses on n (explosive decay); mode
    "loglog_error_vs_n" regresses on log n (stable 1/sqrt(n) decay).
    """
    if mode not in ("log_error_vs_n", "loglog_error_vs_n"):
        raise InputError(f"unknown fit mode {mode!r}")
    by_n: dict[int, list[float]] = {}
    for r in records:
        if math.isfinite(r.error):
            by_n.setdefault(r.n, []).append(max(r.error, 1e-300))
    grid = sorted(by_n)
    starved = [n for n in grid if len(by_n[n]) < min_survivors]
    if len(grid) < 4 or starved:
        raise InputError(
            f"decay fit needs >= 4 grid points with >= {min_survivors} surviving trials; "
            f"starved points: {starved if starved else 'grid too small'}"
        )
    y = np.array([np.median(np.log(by_n[n])) for n in grid])
    x = np.array(grid, dtype=float)
    if mode == "loglog_error_vs_n":
        x = np.log(x)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r_sq = 1.0 if ss_tot == 0 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return float(slope), float(r_sq)


def fit_decay_rate(report: ExperimentReport, mode: str) -> tuple[float, float]:
    return fit_decay_rate_records(report.records, mode)


# ---------------------------------------------------------------------------
# Sensitivity reporting and the fragile-instance search
# ---------------------------------------------------------------------------

def sensitivity_report(scan: SensitivityCurve, out_dir: str) -> dict:
    """Persist a sensitivity scan: raw CSV plus aggregated plot data.

    Returns the file paths and the smallest magnitude that destabilized
    any scanned design (None if all stayed stable).
    """
    if scan.magnitude.size == 0:
        raise InputError("empty sensitivity scan")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "sensitivity.csv")
    lines = ["magnitude,index,lambda_max"]
    for mag, idx, lam in zip(scan.magnitude, scan.index, scan.lambda_max):
        lam_txt = "inf" if math.isinf(lam) else f"{lam:.17g}"
        lines.append(f"{mag:.17g},{idx},{lam_txt}")
    with open(csv_path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")

    crossing = scan.crossing_magnitude()
    per_mag = []
    for mag in sorted(set(scan.magnitude.tolist())):
        sel = scan.lambda_max[scan.magnitude == mag]
        finite = sel[np.isfinite(sel)]
        per_mag.append({
            "magnitude": mag,
            "lambda_max_median": float(np.median(finite)) if finite.size else None,
            "lambda_max_max": float(sel.max()) if np.isfinite(sel.max()) else None,
            "frac_unstable": float((sel > 1.0).mean()),
        })
    plot_path = os.path.join(out_dir, "sensitivity_plot.json")
    with open(plot_path, "w") as fh:
        json.dump({
            "mode": scan.mode,
            "nominal_lambda_max": scan.nominal_lambda_max,
            "crossing_magnitude": crossing,
            "per_magnitude": per_mag,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"csv": csv_path, "plot": plot_path, "crossing_magnitude": crossing}


def find_fragile_instance(p: int = 3, r: int = 2, magnitudes=(0.01, 0.02, 0.03, 0.04, 0.05),
                          trials: int = 20, max_attempts: int = 200,
                          seed: int = 0) -> tuple[ControlSystem, SensitivityCurve]:
    """Search random stabilizable (p, r) systems for one whose LQR design
    is destabilized by a relative perturbation within the scanned
    magnitudes.  The search favors strongly unstable open loops with weak
    control authority, where certainty about the dynamics matters most."""
    for attempt in range(max_attempts):
        rng = philox(seed, 0xF1, attempt)
        radius = 1.1 + 1.4 * rng.random()
        Ax = rng.standard_normal((p, p))
        Ax *= radius / max(np.abs(np.linalg.eigvals(Ax)).max(), 1e-12)
        Au = rng.standard_normal((p, r)) * 10.0 ** (-2.0 * rng.random())
        cs = ControlSystem(Ax=Ax, Au=Au)
        try:
            scan = sensitivity_scan(cs, "global_awgn", magnitudes, trials,
                                    designer=design_lqr, seed=seed + attempt)
        except (SetupError, SysIdError):
            continue
        if scan.crossing_magnitude() is not None:
            return cs, scan
    raise SetupError(f"no fragile instance found in {max_attempts} attempts")

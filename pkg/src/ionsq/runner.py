"""Sweep orchestration: parameter scans, optimal-squeezing search, scaling fits,
CSV/JSON emission.

Sweep points run in a bounded thread pool (IONSQ_THREADS, default 1: the
engines parallelize internally) with per-point seeds derived from
(master seed, point index); records are emitted in axis order regardless of
completion order. Reruns with the same plan and seed are reproducible except
for the wall_ms column.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
import scipy.stats

from . import metrology, protocols
from .errors import IonsqError
from .fockspace import ObservableSpec, spin_operator
from .metrology import (
    cfi_spin,
    gain_from_observable,
    qfi_full,
    qfi_spin,
    renyi_entropy,
    to_db,
)
from .protocols import ENGINE_EXACT, ProtocolConfig

SWEEP_AXES = ("r", "nbar", "sigma_phase", "n_ions", "theta")

CSV_COLUMNS = [
    "protocol", "mode", "engine", "n_ions", "n_max", "r", "xi2b_db", "phi",
    "theta_delta", "nbar", "sigma_phase", "observable", "gain", "gain_db",
    "variance", "derivative", "qfi", "qfi_spin", "cfi_spin", "renyi",
    "stderr_gain", "n_traj", "seed", "wall_ms", "status",
]


@dataclass(frozen=True)
class SweepPlan:
    """One-axis scan of a protocol configuration.

    NR sweeps on the breathing mode emit two records per point, one for the
    weighted and one for the differential observable (their ranking crosses
    over with system size); ``b_both_observables=False`` restores a single
    record with the base observable.
    """

    base: ProtocolConfig
    axis: str
    values: tuple
    optimize_r: bool = False
    r_bracket: tuple = (0.0, 1.5)
    delta_theta: float = 1e-3
    with_qfi: bool = True
    with_renyi: bool = True
    with_spin_fisher: bool = False
    with_cfi: bool = False
    b_both_observables: bool = True
    master_seed: int = 1234

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise IonsqError(f"sweep axis {self.axis!r} not in {SWEEP_AXES}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise IonsqError("sweep values must be non-empty")
        if not all(np.isfinite(vals)):
            raise IonsqError("sweep values must be finite")
        if list(vals) != sorted(vals):
            raise IonsqError("sweep values must be sorted ascending")
        object.__setattr__(self, "values", vals)


@dataclass
class SweepRecord:
    protocol: str
    mode: str
    engine: str
    n_ions: int
    n_max: object = None
    r: float = 0.0
    xi2b_db: float = 0.0
    phi: float = 0.0
    theta_delta: float = 0.0
    nbar: float = 0.0
    sigma_phase: float = 0.0
    observable: str = ""
    gain: object = None
    gain_db: object = None
    variance: object = None
    derivative: object = None
    qfi: object = None
    qfi_spin: object = None
    cfi_spin: object = None
    renyi: object = None
    stderr_gain: object = None
    n_traj: object = None
    seed: int = 0
    wall_ms: float = 0.0
    status: str = "ok"


def point_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=(master_seed, index)).generate_state(1)[0])


def _point_config(plan: SweepPlan, index: int) -> ProtocolConfig:
    value = plan.values[index]
    if plan.axis == "n_ions":
        cfg = replace(plan.base, n_ions=int(round(value)))
    else:
        cfg = replace(plan.base, **{plan.axis: value})
    return replace(cfg, seed=point_seed(plan.master_seed, index))


def evaluate_point(cfg: ProtocolConfig, delta_theta: float = 1e-3,
                   with_qfi: bool = True, with_renyi: bool = True,
                   with_spin_fisher: bool = False, with_cfi: bool = False) -> SweepRecord:
    """One full record: gain plus (exact engine only) Fisher/entropy diagnostics."""
    start = time.perf_counter()
    rec = SweepRecord(
        protocol=cfg.protocol, mode=cfg.mode, engine=cfg.engine, n_ions=cfg.n_ions,
        n_max=cfg.resolved_n_max() if cfg.engine == ENGINE_EXACT else None,
        r=cfg.r, xi2b_db=to_db(np.exp(-2.0 * cfg.r)) if cfg.r > 0 else 0.0,
        phi=cfg.phi, theta_delta=delta_theta, nbar=cfg.nbar,
        sigma_phase=cfg.sigma_phase, observable=cfg.observable,
        n_traj=cfg.n_traj if cfg.engine != ENGINE_EXACT else None, seed=cfg.seed,
    )
    try:
        report = gain_from_observable(cfg, delta_theta)
        rec.gain = report.gain
        rec.gain_db = report.gain_db
        rec.variance = report.variance
        rec.derivative = report.derivative
        rec.stderr_gain = report.stderr_gain
        if cfg.engine == ENGINE_EXACT and (with_qfi or with_renyi or with_spin_fisher or with_cfi):
            probe = protocols.run_protocol(cfg, theta=cfg.theta).probe
            rotate = protocols.imprint_rotation(cfg)
            if with_qfi:
                gen = spin_operator(
                    probe[0][1].spec, ObservableSpec(protocols.generator_observable(cfg))
                )
                if len(probe) == 1:
                    rec.qfi = qfi_full(probe, gen)
            if with_renyi and len(probe) == 1:
                rec.renyi = renyi_entropy(probe)
            if with_spin_fisher:
                rec.qfi_spin = qfi_spin(probe, rotate)
            if with_cfi:
                rec.cfi_spin = cfi_spin(probe, rotate, delta_theta)
    except IonsqError as exc:
        rec.status = f"error: {exc}"
    rec.wall_ms = 1000.0 * (time.perf_counter() - start)
    return rec


def _point_observables(plan: SweepPlan) -> list[str | None]:
    from .fockspace import OBS_SZ_MINUS, OBS_SZ_WEIGHTED

    if (plan.b_both_observables and plan.base.protocol == protocols.PROTOCOL_NR
            and plan.base.mode == "b"):
        return [OBS_SZ_WEIGHTED, OBS_SZ_MINUS]
    return [None]


def run_sweep(plan: SweepPlan) -> list[SweepRecord]:
    """Evaluate every point of the plan; per-point failures land in the record."""
    threads = max(1, int(os.environ.get("IONSQ_THREADS", "1")))
    observables = _point_observables(plan)

    def job(index: int) -> list[SweepRecord]:
        records = []
        for obs in observables:
            try:
                cfg = _point_config(plan, index)
                if obs is not None:
                    cfg = replace(cfg, observable=obs)
                opt = None
                if plan.optimize_r:
                    opt = optimize_r_for_config(cfg, plan.r_bracket,
                                                delta_theta=plan.delta_theta)
                    cfg = replace(cfg, r=opt.r_opt)
            except IonsqError as exc:
                rec = SweepRecord(
                    protocol=plan.base.protocol, mode=plan.base.mode,
                    engine=plan.base.engine, n_ions=plan.base.n_ions,
                    observable=obs or "", seed=point_seed(plan.master_seed, index),
                    status=f"error: {exc}",
                )
                if plan.axis == "r":
                    rec.r = plan.values[index]
                records.append(rec)
                continue
            rec = evaluate_point(
                cfg, plan.delta_theta, plan.with_qfi, plan.with_renyi,
                plan.with_spin_fisher, plan.with_cfi,
            )
            if opt is not None and opt.warning and rec.status == "ok":
                rec.status = f"ok ({opt.warning})"
            records.append(rec)
        return records

    if threads == 1:
        nested = [job(i) for i in range(len(plan.values))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            nested = list(pool.map(job, range(len(plan.values))))
    return [rec for group in nested for rec in group]


# ---------------------------------------------------------------------------
# Optimal-squeezing search

@dataclass
class OptimizeResult:
    r_opt: float
    gain_opt: float
    warning: str | None = None
    n_evaluations: int = 0


def optimize_r(evaluate, bracket=(0.0, 1.5), coarse_points: int = 12,
               tol: float = 1e-3, noise_scale: float = 0.0) -> OptimizeResult:
    """Minimize gain(r) over the bracket: coarse 12-point scan, then golden section.

    A pre-scan that is not unimodal (to within ``noise_scale``) returns the
    coarse minimum with a warning; a monotone pre-scan returns the bracket
    edge with a warning.
    """
    lo, hi = bracket
    xs = np.linspace(lo, hi, coarse_points)
    vs = np.array([evaluate(x) for x in xs])
    n_eval = coarse_points
    i_min = int(np.argmin(vs))
    diffs = np.diff(vs)
    signs = [0 if abs(d) <= 3.0 * noise_scale else (1 if d > 0 else -1) for d in diffs]
    nz = [s for s in signs if s != 0]
    unimodal = all(a <= b for a, b in zip(nz, nz[1:]))  # descents before ascents
    if i_min in (0, coarse_points - 1):
        return OptimizeResult(float(xs[i_min]), float(vs[i_min]),
                              warning="monotone in bracket", n_evaluations=n_eval)
    if not unimodal:
        return OptimizeResult(float(xs[i_min]), float(vs[i_min]),
                              warning="non-unimodal pre-scan", n_evaluations=n_eval)
    a, b = xs[i_min - 1], xs[i_min + 1]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = evaluate(c), evaluate(d)
    n_eval += 2
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = evaluate(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = evaluate(d)
        n_eval += 1
    f_best, x_best = min([(fc, c), (fd, d)])
    return OptimizeResult(float(x_best), float(f_best), n_evaluations=n_eval)


def optimize_r_for_config(cfg: ProtocolConfig, bracket=(0.0, 1.5),
                          delta_theta: float = 1e-3, coarse_points: int = 12,
                          tol: float = 1e-3) -> OptimizeResult:
    cache: dict[float, float] = {}

    def evaluate(r: float) -> float:
        if r not in cache:
            cache[r] = gain_from_observable(replace(cfg, r=r), delta_theta).gain
        return cache[r]

    noise = 0.0
    if cfg.engine != ENGINE_EXACT:
        probe_rep = gain_from_observable(replace(cfg, r=0.5 * sum(bracket)), delta_theta)
        noise = probe_rep.stderr_gain or 0.0
    return optimize_r(evaluate, bracket, coarse_points=coarse_points, tol=tol,
                      noise_scale=noise)


# ---------------------------------------------------------------------------
# Power-law scaling fits

@dataclass
class FitResult:
    a: float
    b: float
    a_err: float
    b_err: float
    residual_rms: float
    poorly_conditioned: bool = False


def fit_scaling(n_values, gains, confidence: float = 0.95) -> FitResult:
    """Least-squares fit of gain = a * N^(-b) on log-log axes.

    Parameter errors are half-widths of the confidence interval from the
    t-distribution with n-2 degrees of freedom; the a error is propagated
    from the intercept by the delta method. residual_rms is in log space.
    """
    n_values = np.asarray(n_values, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if n_values.size < 4:
        raise IonsqError("fit_scaling requires at least 4 points")
    if np.any(gains <= 0):
        raise IonsqError("fit_scaling requires positive gains")
    x = np.log(n_values)
    y = np.log(gains)
    n = x.size
    xbar = x.mean()
    sxx = np.sum((x - xbar) ** 2)
    slope = float(np.sum((x - xbar) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    ssr = float(np.sum(resid**2))
    dof = n - 2
    s2 = ssr / dof if dof > 0 else 0.0
    tq = float(scipy.stats.t.ppf(0.5 + confidence / 2.0, dof))
    slope_err = tq * np.sqrt(s2 / sxx)
    intercept_err = tq * np.sqrt(s2 * (1.0 / n + xbar**2 / sxx))
    a = float(np.exp(intercept))
    a_err = float(a * intercept_err)
    b = -slope
    b_err = float(slope_err)
    flag = bool(a_err >= abs(a) or b_err >= abs(b))
    return FitResult(a=a, b=b, a_err=a_err, b_err=b_err,
                     residual_rms=float(np.sqrt(ssr / n)), poorly_conditioned=flag)


# ---------------------------------------------------------------------------
# Emission

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        d = asdict(rec)
        writer.writerow([_cell(d[col]) for col in CSV_COLUMNS])
    return buf.getvalue()


def records_to_json(records) -> str:
    rows = []
    for rec in records:
        d = asdict(rec)
        rows.append({col: d[col] for col in CSV_COLUMNS})
    return json.dumps(rows, indent=2, sort_keys=False) + "\n"


def write_outputs(records, csv_path=None, json_path=None) -> None:
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write(records_to_csv(records))
    if json_path:
        with open(json_path, "w") as fh:
            fh.write(records_to_json(records))


def all_succeeded(records) -> bool:
    return all(rec.status.startswith("ok") for rec in records)

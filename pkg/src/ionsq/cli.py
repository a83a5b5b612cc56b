"""Command-line interface.

Subcommands: modes, run, sweep, fit, analytic, analyze, bench-twa. Sweeps
read a JSON plan (field names mirror ProtocolConfig/SweepPlan) with CLI
flags overriding file values. IONSQ_THREADS caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import container, metrology, noise, protocols, runner
from .chain import build_chain
from .errors import IonsqError
from .fockspace import OBS_SZ_MINUS, OBS_SZ_PLUS, OBS_SZ_WEIGHTED, ObservableSpec, spin_operator
from .metrology import cfi_spin, gain_from_observable, qfi_full, qfi_spin, renyi_entropy, to_db
from .protocols import ProtocolConfig

_OBSERVABLE_NAMES = {
    "szplus": OBS_SZ_PLUS,
    "szminus": OBS_SZ_MINUS,
    "szweighted": OBS_SZ_WEIGHTED,
}
_READOUT_NAMES = {"direct": protocols.READOUT_DIRECT, "bsswap": protocols.READOUT_BS_SWAP}


def _add_config_flags(p: argparse.ArgumentParser, require: bool = True) -> None:
    # in non-required (sweep) form every default is None so that only flags
    # the user actually passed override the config file
    p.add_argument("--protocol", choices=["nr", "sa"], required=require)
    p.add_argument("--mode", choices=["cm", "b"], required=require)
    p.add_argument("--n-ions", type=int, required=require)
    p.add_argument("--r", type=float, default=0.0 if require else None)
    p.add_argument("--phi", type=float, default=0.0 if require else None)
    p.add_argument("--theta", type=float, default=0.0 if require else None)
    p.add_argument("--observable", choices=sorted(_OBSERVABLE_NAMES), default=None)
    p.add_argument("--engine", choices=["exact", "twa"], default="exact" if require else None)
    p.add_argument("--sa-readout", choices=sorted(_READOUT_NAMES),
                   default="direct" if require else None)
    p.add_argument("--nbar", type=float, default=0.0 if require else None)
    p.add_argument("--sigma-phase", type=float, default=0.0 if require else None)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--seed", type=int, default=1234 if require else None)
    p.add_argument("--trajectories", type=int, default=10_000 if require else None)
    p.add_argument("--gh-nodes", type=int, default=41 if require else None)


def _config_from_args(args) -> ProtocolConfig:
    return ProtocolConfig(
        protocol=args.protocol,
        mode=args.mode,
        n_ions=args.n_ions,
        r=args.r,
        phi=args.phi,
        theta=args.theta,
        observable=_OBSERVABLE_NAMES[args.observable] if args.observable else None,
        sa_readout=_READOUT_NAMES[args.sa_readout],
        nbar=args.nbar,
        sigma_phase=args.sigma_phase,
        engine=args.engine,
        n_max=args.nmax,
        n_traj=args.trajectories,
        seed=args.seed,
        gh_nodes=args.gh_nodes,
    )


def _cmd_modes(args) -> int:
    chain = build_chain(args.n_ions)
    data = {
        "n_ions": chain.n_ions,
        "positions": chain.positions.tolist(),
        "mode_freqs": chain.mode_freqs.tolist(),
        "couplings_cm": chain.couplings_cm.tolist(),
        "couplings_b": chain.couplings_b.tolist(),
    }
    if args.json:
        print(json.dumps(data, indent=2))
    else:
        print(f"N = {chain.n_ions} ions")
        print(f"{'ion':>4} {'position':>12} {'g_cm':>10} {'g_b':>10}")
        for j in range(chain.n_ions):
            print(f"{j + 1:>4} {chain.positions[j]:>12.6f} "
                  f"{chain.couplings_cm[j]:>10.6f} {chain.couplings_b[j]:>10.6f}")
        freqs = " ".join(f"{f:.6f}" for f in chain.mode_freqs)
        print(f"mode frequencies (units of trap): {freqs}")
    return 0


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    result = protocols.run_protocol(cfg)
    report = gain_from_observable(cfg, args.delta_theta, with_qcrb=args.qcrb)
    out = {
        "config": _config_dict(cfg),
        "expectation": result.expectation,
        "variance": result.variance,
        "gain": report.gain,
        "gain_db": report.gain_db,
        "derivative": report.derivative,
        "qcrb": report.qcrb,
        "stderr_gain": report.stderr_gain,
        "metadata": {k: v for k, v in result.metadata.items()},
    }
    if args.save_probe:
        if cfg.engine != protocols.ENGINE_EXACT:
            raise IonsqError("--save-probe requires the exact engine")
        probe = result.probe
        if len(probe) != 1:
            raise IonsqError("--save-probe requires a noiseless (single-member) run")
        container.save_state(args.save_probe, probe[0][1])
        out["probe_file"] = args.save_probe
    if args.save_ensemble:
        if cfg.engine != protocols.ENGINE_TWA:
            raise IonsqError("--save-ensemble requires the twa engine")
        ens = protocols.twa_probe_ensemble(cfg)
        spins = np.stack([ens.sx, ens.sy, ens.sz], axis=2)
        container.save_ensemble(args.save_ensemble, spins, ens.boson, seed=cfg.seed)
        out["ensemble_file"] = args.save_ensemble
    text = json.dumps(out, indent=2)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _config_dict(cfg: ProtocolConfig) -> dict:
    return {
        "protocol": cfg.protocol, "mode": cfg.mode, "n_ions": cfg.n_ions,
        "r": cfg.r, "phi": cfg.phi, "theta": cfg.theta, "imprint": cfg.imprint,
        "observable": cfg.observable, "sa_readout": cfg.sa_readout,
        "nbar": cfg.nbar, "sigma_phase": cfg.sigma_phase, "engine": cfg.engine,
        "n_max": cfg.n_max, "n_traj": cfg.n_traj, "seed": cfg.seed,
    }


def _cmd_sweep(args) -> int:
    spec = {}
    if args.config:
        with open(args.config) as fh:
            spec = json.load(fh)
    base_spec = dict(spec.get("base", {}))
    for name in ("protocol", "mode", "n_ions", "r", "phi", "theta", "engine",
                 "nbar", "sigma_phase", "seed", "gh_nodes"):
        flag = getattr(args, name)
        if flag is not None:
            base_spec[name] = flag
    if args.observable is not None:
        base_spec["observable"] = _OBSERVABLE_NAMES[args.observable]
    if args.sa_readout is not None:
        base_spec["sa_readout"] = _READOUT_NAMES[args.sa_readout]
    if args.nmax is not None:
        base_spec["n_max"] = args.nmax
    if args.trajectories is not None:
        base_spec["n_traj"] = args.trajectories
    axis = args.axis or spec.get("axis")
    values = args.values if args.values is not None else spec.get("values")
    if isinstance(values, str):
        values = [float(v) for v in values.split(",")]
    if axis is None or values is None:
        raise IonsqError("sweep requires an axis and values (flags or config file)")
    if axis == "n_ions" and "n_ions" not in base_spec:
        base_spec["n_ions"] = int(round(values[0]))
    base = ProtocolConfig(**base_spec)
    plan = runner.SweepPlan(
        base=base,
        axis=axis,
        values=tuple(values),
        optimize_r=args.optimize_r or bool(spec.get("optimize_r", False)),
        delta_theta=args.delta_theta,
        with_spin_fisher=args.qfi_spin or bool(spec.get("with_spin_fisher", False)),
        with_cfi=args.cfi or bool(spec.get("with_cfi", False)),
        master_seed=spec.get("master_seed", args.seed if args.seed is not None else 1234),
    )
    records = runner.run_sweep(plan)
    runner.write_outputs(records, csv_path=args.output, json_path=args.json_output)
    ok = runner.all_succeeded(records)
    per_point = len(records) // len(plan.values)
    expanded = [v for v in plan.values for _ in range(per_point)]
    for value, rec in zip(expanded, records):
        gain_db = f"{rec.gain_db:+.3f} dB" if rec.gain_db is not None else "--"
        print(f"{plan.axis}={value:g} {rec.observable} r={rec.r:.4f} "
              f"gain={gain_db} [{rec.status}]")
    return 0 if ok else 1


def _cmd_fit(args) -> int:
    rows = []
    import csv as _csv

    with open(args.input) as fh:
        for row in _csv.DictReader(fh):
            if row["status"].startswith("ok") and row[args.y_col]:
                rows.append((float(row[args.x_col]), float(row[args.y_col])))
    if not rows:
        raise IonsqError(f"{args.input}: no usable rows")
    xs, ys = zip(*rows)
    fit = runner.fit_scaling(xs, ys)
    print(json.dumps({
        "a": fit.a, "b": fit.b, "a_err": fit.a_err, "b_err": fit.b_err,
        "residual_rms": fit.residual_rms, "poorly_conditioned": fit.poorly_conditioned,
        "n_points": len(rows),
    }, indent=2))
    return 0


def _cmd_analytic(args) -> int:
    out: dict
    if args.model == "nr-phase":
        r_opt, gain_opt, defined = noise.analytic_nr_phase_optimum(args.sigma)
        out = {
            "model": "nr-phase", "sigma": args.sigma,
            "gain": noise.analytic_nr_phase(args.r, args.sigma) if args.r is not None else None,
            "r": args.r, "r_opt": None if not defined else r_opt,
            "r_opt_defined": defined, "gain_opt": gain_opt,
            "gain_opt_db": to_db(gain_opt) if gain_opt > 0 else None,
        }
    elif args.model == "sa-phase":
        if args.r is None:
            raise IonsqError("sa-phase model requires --r")
        g = noise.analytic_sa_phase(args.r, args.sigma)
        out = {"model": "sa-phase", "sigma": args.sigma, "r": args.r,
               "gain": g, "gain_db": to_db(g)}
    else:
        r_opt, scale = noise.analytic_thermal(args.nbar, args.n_ions)
        out = {"model": "thermal", "nbar": args.nbar, "n_ions": args.n_ions,
               "r_opt": r_opt, "gain_scale": scale,
               "gain_loss_db": 10.0 * np.log10(scale)}
    print(json.dumps(out, indent=2))
    return 0


def _cmd_analyze(args) -> int:
    state = container.load_state(args.input)
    probe = [(1.0, state)]
    kind = OBS_SZ_PLUS if args.generator == "global" else OBS_SZ_MINUS
    gen_op = spin_operator(state.spec, ObservableSpec(kind))
    from .dynamics import RotationParams, apply_rotation

    target = "global" if args.generator == "global" else "differential"

    def rotate(st, theta):
        return apply_rotation(st, RotationParams("z", theta, target=target))

    out = {"input": args.input, "n_ions": state.spec.n_ions,
           "n_max": state.spec.n_max, "generator": args.generator}
    if args.qfi:
        out["qfi"] = qfi_full(probe, gen_op)
    if args.qfi_spin:
        out["qfi_spin"] = qfi_spin(probe, rotate)
    if args.cfi:
        out["cfi_spin"] = cfi_spin(probe, rotate, args.delta_theta)
    if args.renyi:
        out["renyi"] = renyi_entropy(probe)
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        for key, value in out.items():
            print(f"{key}: {value}")
    return 0


def _cmd_bench_twa(args) -> int:
    times = np.linspace(0.0, np.pi, args.time_points)[1:]
    report = {"n_ions": args.n_ions, "trajectories": args.trajectories, "curves": []}
    worst = 0.0
    for mode in ("cm", "b"):
        for r in (0.4, 0.8):
            exact = protocols.exchange_curve_exact(args.n_ions, mode, r, times)
            semi = protocols.exchange_curve_twa(
                args.n_ions, mode, r, times, n_traj=args.trajectories, seed=args.seed
            )
            pulls = []
            for key, se_key in (("var_x", "se_x"), ("var_y", "se_y")):
                pulls.append(np.abs(semi[key] - exact[key]) / semi[se_key])
            max_pull = float(np.max(pulls))
            worst = max(worst, max_pull)
            report["curves"].append({"mode": mode, "r": r, "max_pull_sigma": max_pull})
            print(f"mode={mode} r={r}: max |twa - exact| = {max_pull:.2f} sampling sigma")
    report["worst_pull_sigma"] = worst
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(report, fh, indent=2)
    print(f"worst deviation: {worst:.2f} sigma over all curves")
    return 0 if worst < args.sigma_limit else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ionsq",
        description="Spin-boson squeezing protocols for trapped-ion chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("modes", help="chain equilibrium, mode frequencies, couplings")
    p.add_argument("--n-ions", type=int, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_modes)

    p = sub.add_parser("run", help="run one protocol configuration")
    _add_config_flags(p)
    p.add_argument("--delta-theta", type=float, default=1e-3)
    p.add_argument("--qcrb", action="store_true", help="also report N/F_Q (exact engine)")
    p.add_argument("--save-probe", default=None, metavar="FILE")
    p.add_argument("--save-ensemble", default=None, metavar="FILE",
                   help="snapshot the pre-imprint trajectory ensemble (twa engine)")
    p.add_argument("--output", default=None, metavar="FILE")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="sweep one axis of a protocol configuration")
    _add_config_flags(p, require=False)
    p.add_argument("--config", default=None, metavar="PLAN_JSON")
    p.add_argument("--axis", choices=runner.SWEEP_AXES, default=None)
    p.add_argument("--values", default=None, help="comma-separated axis values")
    p.add_argument("--optimize-r", action="store_true")
    p.add_argument("--delta-theta", type=float, default=1e-3)
    p.add_argument("--qfi-spin", action="store_true")
    p.add_argument("--cfi", action="store_true")
    p.add_argument("--output", default=None, metavar="CSV")
    p.add_argument("--json-output", default=None, metavar="JSON")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="power-law fit gain = a N^-b from a sweep CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--x-col", default="n_ions")
    p.add_argument("--y-col", default="gain")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("analytic", help="closed-form large-N reference curves")
    p.add_argument("--model", choices=["nr-phase", "sa-phase", "thermal"], required=True)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--nbar", type=float, default=0.0)
    p.add_argument("--n-ions", type=int, default=2)
    p.set_defaults(func=_cmd_analytic)

    p = sub.add_parser("analyze", help="Fisher/entropy diagnostics of a saved state")
    p.add_argument("--input", required=True)
    p.add_argument("--generator", choices=["global", "differential"], default="global")
    p.add_argument("--delta-theta", type=float, default=1e-3)
    p.add_argument("--qfi", action="store_true")
    p.add_argument("--qfi-spin", action="store_true")
    p.add_argument("--cfi", action="store_true")
    p.add_argument("--renyi", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("bench-twa", help="semiclassical vs exact cross-check")
    p.add_argument("--n-ions", type=int, default=8)
    p.add_argument("--trajectories", type=int, default=10_000)
    p.add_argument("--time-points", type=int, default=9)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--sigma-limit", type=float, default=3.0)
    p.add_argument("--output", default=None, metavar="JSON")
    p.set_defaults(func=_cmd_bench_twa)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IonsqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

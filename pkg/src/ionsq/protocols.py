"""End-to-end noise-reduction (NR) and signal-amplification (SA) sequences.

Both engines execute the same gate list. With phase noise the squeeze and
unsqueeze of a single trial share one sampled angle offset; with thermal
occupation the exact engine averages over a truncated geometric mixture of
initial Fock states while the semiclassical engine widens its Gaussian
samples. The recorded probe is the state immediately before the phase
imprint (i.e. including the first Ramsey pulse).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics, fockspace, noise, twa
from .chain import MODE_B, MODE_CM, ChainModel, build_chain
from .dynamics import T_PI, RotationParams, SqueezeParams
from .errors import CutoffLeakageError, IonsqError
from .fockspace import ObservableSpec, SpaceSpec, SpinBosonState, build_space, initial_state

PROTOCOL_NR = "nr"
PROTOCOL_SA = "sa"
IMPRINT_GLOBAL = "global_z"
IMPRINT_DIFFERENTIAL = "differential_z"
READOUT_DIRECT = "direct"
READOUT_BS_SWAP = "beam_splitter_swap"
ENGINE_EXACT = "exact"
ENGINE_TWA = "twa"


def default_n_max(r: float, nbar: float = 0.0) -> int:
    """Fock cutoff sized for the anti-squeezed tail of a squeezed thermal state."""
    return max(20, math.ceil(12.0 * math.exp(2.0 * r) * (2.0 * nbar + 1.0)))


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: str
    mode: str
    n_ions: int
    r: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    imprint: str | None = None
    observable: str | None = None
    sa_readout: str = READOUT_DIRECT
    nbar: float = 0.0
    sigma_phase: float = 0.0
    engine: str = ENGINE_EXACT
    n_max: int | None = None
    n_traj: int = 10_000
    seed: int = 1234
    gh_nodes: int = 41
    gh_self_check: bool = True
    thermal_eps: float = 1e-6

    def __post_init__(self):
        if self.protocol not in (PROTOCOL_NR, PROTOCOL_SA):
            raise IonsqError(f"unknown protocol {self.protocol!r}")
        if self.mode not in (MODE_CM, MODE_B):
            raise IonsqError(f"unknown mode {self.mode!r}")
        if self.engine not in (ENGINE_EXACT, ENGINE_TWA):
            raise IonsqError(f"unknown engine {self.engine!r}")
        imprint = self.imprint or (IMPRINT_GLOBAL if self.mode == MODE_CM else IMPRINT_DIFFERENTIAL)
        object.__setattr__(self, "imprint", imprint)
        if self.mode == MODE_CM and imprint != IMPRINT_GLOBAL:
            raise IonsqError("CM mode senses global rotations only")
        if self.mode == MODE_B and imprint != IMPRINT_DIFFERENTIAL:
            raise IonsqError("B mode senses differential rotations only")
        if imprint == IMPRINT_DIFFERENTIAL and self.n_ions % 2:
            raise IonsqError(f"differential imprint undefined for odd N={self.n_ions}")
        obs = self.observable or (
            fockspace.OBS_SZ_PLUS if self.mode == MODE_CM else fockspace.OBS_SZ_WEIGHTED
        )
        object.__setattr__(self, "observable", obs)
        if self.sa_readout not in (READOUT_DIRECT, READOUT_BS_SWAP):
            raise IonsqError(f"unknown sa_readout {self.sa_readout!r}")
        if self.sa_readout == READOUT_BS_SWAP and (
            self.mode != MODE_B or self.protocol != PROTOCOL_SA
        ):
            raise IonsqError("beam-splitter swap readout applies only to SA with the B mode")
        if self.nbar < 0 or self.sigma_phase < 0:
            raise IonsqError("noise parameters must be non-negative")
        if self.sigma_phase > 0 and self.gh_nodes < 11:
            raise IonsqError("gh_nodes must be >= 11 when sigma_phase > 0")

    @property
    def uses_two_slots(self) -> bool:
        return self.sa_readout == READOUT_BS_SWAP

    def resolved_n_max(self) -> int:
        return self.n_max if self.n_max is not None else default_n_max(self.r, self.nbar)


@dataclass
class ProtocolResult:
    probe: object
    final: object
    expectation: float
    variance: float
    metadata: dict = field(default_factory=dict)


def _chain_for(cfg: ProtocolConfig) -> ChainModel:
    return build_chain(cfg.n_ions)


def main_couplings(cfg: ProtocolConfig, chain: ChainModel) -> np.ndarray:
    return chain.couplings_cm if cfg.mode == MODE_CM else chain.couplings_b


def observable_weights(cfg: ProtocolConfig, chain: ChainModel) -> np.ndarray | None:
    """Per-ion weights for weighted observables: sqrt(N) * g_B (units of g0)."""
    if cfg.observable in (
        fockspace.OBS_SZ_WEIGHTED, fockspace.OBS_SX_WEIGHTED, fockspace.OBS_SY_WEIGHTED
    ):
        return np.sqrt(cfg.n_ions) * chain.couplings_b
    return None


def imprint_target(cfg: ProtocolConfig) -> str:
    return "global" if cfg.imprint == IMPRINT_GLOBAL else "differential"


def _space_for(cfg: ProtocolConfig, n_max: int) -> SpaceSpec:
    mode_ids = (cfg.mode, MODE_CM) if cfg.uses_two_slots else (cfg.mode,)
    return build_space(SpaceSpec(cfg.n_ions, n_max, mode_ids))


# ---------------------------------------------------------------------------
# Exact engine

def _exact_sequence(cfg: ProtocolConfig, space: SpaceSpec, chain: ChainModel,
                    fock_init: int, dphi: float, theta: float):
    """One pure-state pass; returns (probe, final)."""
    ramsey_axis = cfg.phi + np.pi / 2
    readout_axis = cfg.phi
    squeeze = SqueezeParams(r=cfg.r, phi=cfg.phi + 2.0 * dphi, mode_slot=0)
    g_main = main_couplings(cfg, chain)
    h_main = fockspace.tc_hamiltonian(space, g_main, 0)

    occupations = (fock_init,) + (0,) * (space.n_slots - 1)
    state = initial_state(space, occupations)
    state = dynamics.apply_squeeze(state, squeeze)
    state = dynamics.evolve_tc(state, h_main, T_PI)
    state = dynamics.apply_rotation(state, RotationParams(ramsey_axis, np.pi / 2))
    probe = state.copy()
    state = dynamics.apply_rotation(
        state, RotationParams("z", theta, target=imprint_target(cfg))
    )
    if cfg.protocol == PROTOCOL_NR:
        state = dynamics.apply_rotation(state, RotationParams(readout_axis, np.pi / 2))
    else:
        state = dynamics.apply_rotation(state, RotationParams(ramsey_axis, -np.pi / 2))
        state = dynamics.evolve_tc(state, h_main, T_PI, adjoint=True)
        state = dynamics.apply_squeeze(state, squeeze, adjoint=True)
        if cfg.sa_readout == READOUT_BS_SWAP:
            # the swap maps a -> i b: a 90-degree phase-space rotation that the
            # readout pulse phase must follow
            state = dynamics.apply_beam_splitter(state, np.pi, (0, 1))
            h_read = fockspace.tc_hamiltonian(space, chain.couplings_cm, 1)
            state = dynamics.evolve_tc(state, h_read, T_PI)
            readout_axis = cfg.phi + np.pi / 2
        else:
            state = dynamics.evolve_tc(state, h_main, T_PI)
        state = dynamics.apply_rotation(state, RotationParams(readout_axis, np.pi / 2))
    return probe, state


def _noise_members(cfg: ProtocolConfig):
    """Weighted (fock_n, dphi) grid: thermal mixture x Gauss-Hermite phase nodes."""
    thermal = noise.thermal_ensemble(cfg.nbar, cfg.thermal_eps)
    if cfg.sigma_phase > 0:
        phase = noise.phase_nodes(cfg.sigma_phase, cfg.gh_nodes)
    else:
        phase = [(0.0, 1.0)]
    return [
        (wt * wp, n, dphi) for n, wt in thermal for dphi, wp in phase
    ]


def _run_exact(cfg: ProtocolConfig, theta: float, n_max: int, chain: ChainModel,
               members=None) -> ProtocolResult:
    space = _space_for(cfg, n_max)
    obs_spec = ObservableSpec(cfg.observable, mode_slot=None,
                              weights=observable_weights(cfg, chain))
    operator = fockspace.spin_operator(space, obs_spec)
    if members is None:
        members = _noise_members(cfg)
    probes, finals = [], []
    e1 = e2 = 0.0
    for weight, fock_n, dphi in members:
        probe, final = _exact_sequence(cfg, space, chain, fock_n, dphi, theta)
        m1, m2 = operator.moments(final)
        e1 += weight * m1
        e2 += weight * m2
        probes.append((weight, probe))
        finals.append((weight, final))
    worst_leak = max(dynamics.check_leakage(s) for _, s in finals)
    return ProtocolResult(
        probe=probes,
        final=finals,
        expectation=e1,
        variance=e2 - e1 * e1,
        metadata={
            "engine": ENGINE_EXACT,
            "n_max": n_max,
            "n_members": len(members),
            "leakage": worst_leak,
        },
    )


def _run_exact_with_retry(cfg: ProtocolConfig, theta: float, chain: ChainModel) -> ProtocolResult:
    n_max = cfg.resolved_n_max()
    try:
        result = _run_exact(cfg, theta, n_max, chain)
    except CutoffLeakageError:
        # one-time automatic doubling; a second failure propagates
        result = _run_exact(cfg, theta, 2 * n_max, chain)
        result.metadata["cutoff_doubled"] = True
    if cfg.sigma_phase > 0 and cfg.gh_self_check:
        check_cfg = replace(cfg, gh_nodes=2 * cfg.gh_nodes + 1, gh_self_check=False)
        check = _run_exact(check_cfg, theta, result.metadata["n_max"], chain)
        scale = max(abs(result.expectation), np.sqrt(max(result.variance, 0.0)), 1e-12)
        de = abs(check.expectation - result.expectation) / scale
        dv = abs(check.variance - result.variance) / max(abs(result.variance), 1e-12)
        if max(de, dv) > 1e-6:
            from .errors import ConvergenceError

            raise ConvergenceError(
                f"Gauss-Hermite order {cfg.gh_nodes} insufficient: node doubling "
                f"moves moments by {max(de, dv):.2e} (> 1e-6 relative)",
                residual=max(de, dv),
            )
    return result


# ---------------------------------------------------------------------------
# Semiclassical engine

def _twa_prefix(cfg: ProtocolConfig, chain: ChainModel) -> twa.TrajectoryEnsemble:
    n_slots = 2 if cfg.uses_two_slots else 1
    ens = twa.sample_initial(
        cfg.n_traj, cfg.n_ions, r=0.0, phi=0.0, nbar=cfg.nbar, seed=cfg.seed,
        n_slots=n_slots, sigma_phase=cfg.sigma_phase,
    )
    twa.map_squeeze(ens, cfg.r, cfg.phi / 2.0, slot=0)
    twa.evolve_trajectories(ens, main_couplings(cfg, chain), T_PI)
    twa.map_rotation(ens, cfg.phi + np.pi / 2, np.pi / 2, np.ones(cfg.n_ions))
    return ens


def _twa_suffix(cfg: ProtocolConfig, chain: ChainModel, ens: twa.TrajectoryEnsemble,
                theta: float) -> np.ndarray:
    """Run the remainder of the sequence on a copy; returns per-trajectory M values."""
    n = cfg.n_ions
    work = ens.copy()
    imprint_w = (np.ones(n) if cfg.imprint == IMPRINT_GLOBAL
                 else fockspace.half_split_weights(n))
    twa.map_rotation(work, "z", theta, imprint_w)
    if cfg.protocol == PROTOCOL_NR:
        twa.map_rotation(work, cfg.phi, np.pi / 2, np.ones(n))
    else:
        twa.map_rotation(work, cfg.phi + np.pi / 2, -np.pi / 2, np.ones(n))
        twa.evolve_trajectories(work, main_couplings(cfg, chain), -T_PI)
        twa.map_squeeze(work, cfg.r, cfg.phi / 2.0, slot=0, adjoint=True)
        readout_axis = cfg.phi
        if cfg.sa_readout == READOUT_BS_SWAP:
            twa.map_beam_splitter(work, np.pi, (0, 1))
            twa.evolve_trajectories(work, chain.couplings_cm, T_PI, slot=1)
            readout_axis = cfg.phi + np.pi / 2
        else:
            twa.evolve_trajectories(work, main_couplings(cfg, chain), T_PI)
        twa.map_rotation(work, readout_axis, np.pi / 2, np.ones(n))
    vals = twa.observable_values(work, cfg.observable, observable_weights(cfg, chain))
    ens.excluded |= work.excluded
    return vals


def twa_probe_ensemble(cfg: ProtocolConfig) -> twa.TrajectoryEnsemble:
    """Trajectory snapshot at the pre-imprint point (debugging/export)."""
    if cfg.engine != ENGINE_TWA:
        raise IonsqError("twa_probe_ensemble requires the twa engine")
    return _twa_prefix(cfg, _chain_for(cfg))


def twa_theta_values(cfg: ProtocolConfig, thetas, chain: ChainModel | None = None):
    """Per-trajectory observable values for each theta with common random numbers.

    Returns (list of value arrays aligned on trajectories, excluded mask).
    """
    chain = chain or _chain_for(cfg)
    prefix = _twa_prefix(cfg, chain)
    all_vals = [_twa_suffix(cfg, chain, prefix, th) for th in thetas]
    return all_vals, prefix.excluded.copy()


def _run_twa(cfg: ProtocolConfig, theta: float, chain: ChainModel) -> ProtocolResult:
    (vals,), excluded = twa_theta_values(cfg, [theta], chain)
    est = twa.estimate_moments(vals[~excluded] if excluded.any() else vals)
    return ProtocolResult(
        probe=None,
        final=None,
        expectation=est.mean,
        variance=est.variance,
        metadata={
            "engine": ENGINE_TWA,
            "n_traj": cfg.n_traj,
            "n_excluded": int(excluded.sum()),
            "stderr_mean": est.stderr_mean,
            "stderr_variance": est.stderr_variance,
        },
    )


# ---------------------------------------------------------------------------
# Public entry points

def run_protocol(cfg: ProtocolConfig, theta: float | None = None) -> ProtocolResult:
    theta = cfg.theta if theta is None else theta
    start = time.perf_counter()
    chain = _chain_for(cfg)
    if cfg.engine == ENGINE_EXACT:
        result = _run_exact_with_retry(replace(cfg, theta=theta), theta, chain)
    else:
        result = _run_twa(cfg, theta, chain)
    result.metadata["wall_ms"] = 1000.0 * (time.perf_counter() - start)
    return result


def run_nr(cfg: ProtocolConfig, theta: float | None = None) -> ProtocolResult:
    if cfg.protocol != PROTOCOL_NR:
        raise IonsqError("run_nr requires cfg.protocol == 'nr'")
    return run_protocol(cfg, theta)


def run_sa(cfg: ProtocolConfig, theta: float | None = None) -> ProtocolResult:
    if cfg.protocol != PROTOCOL_SA:
        raise IonsqError("run_sa requires cfg.protocol == 'sa'")
    return run_protocol(cfg, theta)


def probe_state(cfg: ProtocolConfig):
    """Weighted pure-state ensemble right before the phase imprint (exact engine)."""
    if cfg.engine != ENGINE_EXACT:
        raise IonsqError("probe_state is an exact-engine diagnostic")
    return run_protocol(cfg, theta=0.0).probe


def imprint_rotation(cfg: ProtocolConfig):
    """Factory: (state, theta) -> imprinted state, matching cfg's generator."""
    target = imprint_target(cfg)

    def rotate(state: SpinBosonState, theta: float) -> SpinBosonState:
        return dynamics.apply_rotation(state, RotationParams("z", theta, target=target))

    return rotate


def generator_observable(cfg: ProtocolConfig) -> str:
    """Observable kind of the imprint generator (S_z,+ or S_z,-)."""
    return fockspace.OBS_SZ_PLUS if cfg.imprint == IMPRINT_GLOBAL else fockspace.OBS_SZ_MINUS


# ---------------------------------------------------------------------------
# Engine cross-check: spin-quadrature exchange curves under the TC interaction

def exchange_curve_exact(n_ions: int, mode: str, r: float, times) -> dict:
    """Var of the transverse spin quadratures vs time (exact engine).

    Collective quadratures couple to the CM mode, weighted quadratures to the
    B mode; returns {"var_x": ..., "var_y": ...} sampled at ``times``.
    """
    chain = build_chain(n_ions)
    space = build_space(SpaceSpec(n_ions, default_n_max(r), (mode,)))
    couplings = chain.couplings_cm if mode == MODE_CM else chain.couplings_b
    if mode == MODE_CM:
        obs_x = ObservableSpec(fockspace.OBS_SX_PLUS)
        obs_y = ObservableSpec(fockspace.OBS_SY_PLUS)
    else:
        w = np.sqrt(n_ions) * chain.couplings_b
        obs_x = ObservableSpec(fockspace.OBS_SX_WEIGHTED, weights=w)
        obs_y = ObservableSpec(fockspace.OBS_SY_WEIGHTED, weights=w)
    op_x = fockspace.spin_operator(space, obs_x)
    op_y = fockspace.spin_operator(space, obs_y)
    h = fockspace.tc_hamiltonian(space, couplings, 0)
    state = initial_state(space, (0,))
    state = dynamics.apply_squeeze(state, SqueezeParams(r, 0.0))
    var_x, var_y = [], []
    prev = 0.0
    for t in times:
        state = dynamics.evolve_tc(state, h, t - prev)
        prev = t
        var_x.append(op_x.variance(state))
        var_y.append(op_y.variance(state))
    return {"times": np.asarray(times, dtype=float),
            "var_x": np.array(var_x), "var_y": np.array(var_y)}


def exchange_curve_twa(n_ions: int, mode: str, r: float, times, n_traj: int = 10_000,
                       seed: int = 1234) -> dict:
    """Semiclassical counterpart of exchange_curve_exact, with jackknife errors."""
    chain = build_chain(n_ions)
    couplings = chain.couplings_cm if mode == MODE_CM else chain.couplings_b
    if mode == MODE_CM:
        kind_x, kind_y, w = fockspace.OBS_SX_PLUS, fockspace.OBS_SY_PLUS, None
    else:
        kind_x, kind_y = fockspace.OBS_SX_WEIGHTED, fockspace.OBS_SY_WEIGHTED
        w = np.sqrt(n_ions) * chain.couplings_b
    ens = twa.sample_initial(n_traj, n_ions, r=r, phi=0.0, nbar=0.0, seed=seed)
    var_x, var_y, se_x, se_y = [], [], [], []
    prev = 0.0
    for t in times:
        twa.evolve_trajectories(ens, couplings, t - prev)
        prev = t
        ex = twa.estimate_observable(ens, kind_x, w)
        ey = twa.estimate_observable(ens, kind_y, w)
        var_x.append(ex.variance)
        var_y.append(ey.variance)
        se_x.append(ex.stderr_variance)
        se_y.append(ey.stderr_variance)
    return {"times": np.asarray(times, dtype=float),
            "var_x": np.array(var_x), "var_y": np.array(var_y),
            "se_x": np.array(se_x), "se_y": np.array(se_y)}

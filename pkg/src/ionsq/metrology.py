"""Metrological diagnostics: gain, quantum/classical Fisher information, entanglement.

Conventions: gain = N * Var(M) / (d<M>/dtheta)^2 evaluated at the working
point theta = 0, reported in dB as -10*log10(gain) so that larger dB means
better than the standard quantum limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IonsqError
from .fockspace import Operator, SpinBosonState

#: Default finite-difference angles for the reduced-state QFI limit.
QFI_SPIN_THETAS = (1e-2, 5e-3)


@dataclass
class GainReport:
    variance: float
    derivative: float
    gain: float
    gain_db: float
    delta_theta_used: float
    qcrb: float | None = None
    stderr_gain: float | None = None


def to_db(x: float) -> float:
    """Gain in decibels, -10*log10(x); x=1 is the SQL."""
    if x <= 0:
        raise IonsqError(f"dB conversion requires a positive value, got {x}")
    return -10.0 * np.log10(x)


def gain_report(n_ions: int, variance: float, derivative: float, delta_theta: float,
                qcrb: float | None = None, stderr_gain: float | None = None) -> GainReport:
    from .errors import InsensitiveObservableError

    if abs(derivative) < 1e-12:
        raise InsensitiveObservableError(
            f"derivative magnitude {abs(derivative):.2e} < 1e-12: observable is "
            "insensitive to the imprinted phase"
        )
    gain = n_ions * variance / derivative**2
    return GainReport(
        variance=variance,
        derivative=derivative,
        gain=gain,
        gain_db=to_db(gain),
        delta_theta_used=delta_theta,
        qcrb=qcrb,
        stderr_gain=stderr_gain,
    )


# ---------------------------------------------------------------------------
# Pure-state and ensemble helpers

def _as_members(probe) -> list[tuple[float, SpinBosonState]]:
    """Normalize a probe to a weighted pure-state ensemble."""
    if isinstance(probe, SpinBosonState):
        return [(1.0, probe)]
    return list(probe)


def reduced_spin_dm(probe) -> np.ndarray:
    """Trace out all boson slots of a (possibly weighted) pure-state ensemble."""
    members = _as_members(probe)
    rho = None
    for weight, state in members:
        a = state.amplitudes.reshape(1 << state.spec.n_ions, -1)
        contrib = weight * (a @ a.conj().T)
        rho = contrib if rho is None else rho + contrib
    return rho


def qfi_full(probe, generator: Operator) -> float:
    """QFI of a pure probe for a unitary imprint: 4 * Var(generator)."""
    members = _as_members(probe)
    if len(members) != 1:
        raise IonsqError(
            "qfi_full uses the pure-state variance formula; got a mixed ensemble "
            "(use qfi_spin on the reduced state instead)"
        )
    return 4.0 * generator.variance(members[0][1])


def renyi_entropy(state_or_probe) -> float:
    """Spin-boson Renyi entanglement entropy -log Tr(rho_s^2) of a pure joint state."""
    rho = reduced_spin_dm(state_or_probe)
    purity = float(np.real(np.trace(rho @ rho)))
    return -np.log(min(1.0, purity))


def _psd_root(rho: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(rho)
    if vals.min() < -1e-10:
        raise IonsqError(f"density matrix has negative eigenvalue {vals.min():.3e}")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T


def uhlmann_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 for Hermitian PSD matrices.

    Evaluated through the trace-norm identity F = ||sqrt(rho) sqrt(sigma)||_*^2:
    the singular values come out of the product directly, so small ones are
    accurate to machine epsilon absolutely. Squaring first (the literal
    formula) loses half the digits under the final square root, which is
    fatal when 1 - F ~ 1e-5 feeds a finite-difference limit.
    """
    product = _psd_root(rho) @ _psd_root(sigma)
    singular = np.linalg.svd(product, compute_uv=False)
    return float(np.sum(singular) ** 2)


def qfi_spin_from_states(rho0_s: np.ndarray, theta_mags, rho_pairs) -> float:
    """Reduced-state QFI from the fidelity limit with Richardson extrapolation.

    ``rho_pairs[i]`` holds the reduced density matrices at +theta_mags[i] and
    -theta_mags[i]. Averaging the two sides removes odd terms in theta (the
    family need not be a spins-only rotation of rho0), leaving an O(theta^2)
    error that the extrapolation over at least two magnitudes then removes.
    """
    theta_mags = list(theta_mags)
    if len(theta_mags) < 2:
        raise IonsqError("qfi_spin requires at least two theta values")
    order = np.argsort(theta_mags)[::-1]  # largest first
    estimates = []
    for i in order:
        f_avg = 0.5 * (
            uhlmann_fidelity(rho0_s, rho_pairs[i][0])
            + uhlmann_fidelity(rho0_s, rho_pairs[i][1])
        )
        estimates.append(4.0 * (1.0 - f_avg) / theta_mags[i] ** 2)
    est = estimates[0]
    for i in range(len(order) - 1):
        q = theta_mags[order[i]] / theta_mags[order[i + 1]]
        est = (q**2 * estimates[i + 1] - estimates[i]) / (q**2 - 1.0)
    return est


def qfi_spin(probe, generator_rotation, thetas=QFI_SPIN_THETAS) -> float:
    """Reduced-spin QFI of a probe whose imprint is a spin rotation.

    ``generator_rotation(probe_member, theta)`` must return the rotated pure
    state; the +/- theta families are assembled member by member.
    """
    members = _as_members(probe)
    rho0 = reduced_spin_dm(members)
    pairs = []
    for theta in thetas:
        rho_p = reduced_spin_dm([(w, generator_rotation(s, theta)) for w, s in members])
        rho_m = reduced_spin_dm([(w, generator_rotation(s, -theta)) for w, s in members])
        pairs.append((rho_p, rho_m))
    return qfi_spin_from_states(rho0, thetas, pairs)


# ---------------------------------------------------------------------------
# Classical Fisher information of collective spin projections

def _magnetization_sectors(n_ions: int) -> list[np.ndarray]:
    s = np.arange(1 << n_ions)
    pop = np.zeros(s.size, dtype=int)
    for q in range(n_ions):
        pop += (s >> q) & 1
    return [np.flatnonzero(pop == k) for k in range(n_ions + 1)]


def _measurement_unitary(azimuth: float, polar: float) -> np.ndarray:
    """Single-spin v with v^dag sigma_z v = n.sigma for n at (polar, azimuth).

    Measuring sigma_z on v rho v^dag is then equivalent to measuring the spin
    projection along n on rho. Matrices are in (down, up) ordering.
    """
    nx = np.sin(polar) * np.cos(azimuth)
    ny = np.sin(polar) * np.sin(azimuth)
    nz = np.cos(polar)
    axis = np.array([-ny, nx, 0.0])  # z x n, the rotation axis taking z to n
    s = np.linalg.norm(axis)
    if s < 1e-15:
        return np.eye(2, dtype=np.complex128)
    axis /= s
    angle = np.arccos(np.clip(nz, -1.0, 1.0))
    sx = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    sy = np.array([[0, 1j], [-1j, 0]], dtype=np.complex128)
    msig = axis[0] * sx + axis[1] * sy
    eye = np.eye(2, dtype=np.complex128)
    return np.cos(angle / 2) * eye + 1j * np.sin(angle / 2) * msig


def _kron_chain(u: np.ndarray, n_ions: int) -> np.ndarray:
    out = np.array([[1.0]], dtype=np.complex128)
    for _ in range(n_ions):
        out = np.kron(out, u)
    return out


def _sector_probabilities(rho: np.ndarray, big_u: np.ndarray, sectors) -> np.ndarray:
    diag = np.real(np.einsum("ij,jk,ik->i", big_u, rho, big_u.conj()))
    return np.array([diag[idx].sum() for idx in sectors])


def cfi_spin_from_states(rho_plus: np.ndarray, rho_minus: np.ndarray, rho_zero: np.ndarray,
                         delta_theta: float, n_ions: int, n_directions: int = 64,
                         polar: bool = False) -> float:
    """Max over measurement directions of the magnetization-binned CFI.

    Probabilities below 1e-14 are excluded from the sum (regularization of
    empty sectors). ``polar=False`` restricts the grid to the equator, where
    the squeezed quadratures lie; ``polar=True`` adds a 9-point polar scan.
    """
    sectors = _magnetization_sectors(n_ions)
    azimuths = np.arange(n_directions) * (2 * np.pi / n_directions)
    best = 0.0
    polar_angles = [np.pi / 2] if not polar else list(np.linspace(0.1, np.pi / 2, 9))
    for pol in polar_angles:
        for az in azimuths:
            u1 = _measurement_unitary(az, pol)
            big_u = _kron_chain(u1, n_ions)
            p0 = _sector_probabilities(rho_zero, big_u, sectors)
            pp = _sector_probabilities(rho_plus, big_u, sectors)
            pm = _sector_probabilities(rho_minus, big_u, sectors)
            dp = (pp - pm) / (2 * delta_theta)
            keep = p0 > 1e-14
            fc = float(np.sum(dp[keep] ** 2 / p0[keep]))
            best = max(best, fc)
    return best


def cfi_spin(probe, generator_rotation, delta_theta: float = 1e-3,
             n_directions: int = 64, polar: bool = False) -> float:
    """CFI of collective spin projections for a rotation-imprinted probe."""
    members = _as_members(probe)
    rho0 = reduced_spin_dm(members)
    rho_p = reduced_spin_dm([(w, generator_rotation(s, delta_theta)) for w, s in members])
    rho_m = reduced_spin_dm([(w, generator_rotation(s, -delta_theta)) for w, s in members])
    n_ions = members[0][1].spec.n_ions
    return cfi_spin_from_states(rho_p, rho_m, rho0, delta_theta, n_ions,
                                n_directions=n_directions, polar=polar)


def gain_from_observable(cfg, delta_theta: float = 1e-3, with_qcrb: bool = False) -> GainReport:
    """Metrological gain of a protocol config around its working point (cfg.theta).

    The derivative is a central difference at +/- delta_theta around the
    working point; with the semiclassical engine the three runs share
    trajectories (common random numbers) and the gain carries a jackknife
    standard error.
    """
    from . import protocols  # local import: metrology is below protocols in the layer stack

    if delta_theta <= 0:
        raise IonsqError("delta_theta must be positive")
    center = cfg.theta
    if cfg.engine == protocols.ENGINE_TWA:
        vals, excluded = protocols.twa_theta_values(
            cfg, [center, center + delta_theta, center - delta_theta]
        )
        if excluded.any():
            vals = [v[~excluded] for v in vals]
        v0, vp, vm = vals
        return twa_gain_report(v0, vp, vm, cfg.n_ions, delta_theta)
    res0 = protocols.run_protocol(cfg, theta=center)
    resp = protocols.run_protocol(cfg, theta=center + delta_theta)
    resm = protocols.run_protocol(cfg, theta=center - delta_theta)
    derivative = (resp.expectation - resm.expectation) / (2.0 * delta_theta)
    qcrb = None
    if with_qcrb and cfg.nbar == 0 and cfg.sigma_phase == 0:
        from .fockspace import ObservableSpec, spin_operator

        member = res0.probe[0][1]
        gen = spin_operator(member.spec, ObservableSpec(protocols.generator_observable(cfg)))
        qcrb = cfg.n_ions / qfi_full(res0.probe, gen)
    return gain_report(cfg.n_ions, res0.variance, derivative, delta_theta, qcrb=qcrb)


def twa_gain_report(v0: np.ndarray, vp: np.ndarray, vm: np.ndarray, n_ions: int,
                    delta_theta: float, n_blocks: int = 32) -> GainReport:
    """Gain from aligned per-trajectory values at theta = 0, +delta, -delta."""
    n = v0.size
    var0 = float(np.add.reduce((v0 - np.add.reduce(v0) / n) ** 2) / n)
    derivative = float((np.add.reduce(vp) - np.add.reduce(vm)) / n / (2.0 * delta_theta))
    stderr = None
    if n >= 2 * n_blocks:
        edges = np.linspace(0, n, n_blocks + 1, dtype=int)
        loo = np.empty(n_blocks)
        for i in range(n_blocks):
            keep = np.ones(n, dtype=bool)
            keep[edges[i]: edges[i + 1]] = False
            a0, ap, am = v0[keep], vp[keep], vm[keep]
            d = (ap.mean() - am.mean()) / (2.0 * delta_theta)
            loo[i] = n_ions * a0.var() / d**2
        stderr = float(np.sqrt((n_blocks - 1) / n_blocks * np.sum((loo - loo.mean()) ** 2)))
    return gain_report(n_ions, var0, derivative, delta_theta, stderr_gain=stderr)

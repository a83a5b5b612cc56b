"""Unitary operations on spin-boson states.

Boson gates (squeeze, displacement, beam splitter) are applied as exact
matrix exponentials of their truncated generators: the generator restricted
to the retained Fock levels is still anti-Hermitian, so each gate is exactly
unitary within the cutoff and truncation error surfaces only through the
leakage check. Spin rotations are exact products of 2x2 unitaries. TC
evolution uses an adaptive Lanczos propagator.

All times are in units of 1/g0 with g0 = 1; the exchange time is
``T_PI = pi/2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, CutoffLeakageError, IonsqError
from .fockspace import Operator, SpinBosonState, _slot_last, _slot_restore

#: TC exchange (pi-pulse) duration in units of 1/g0.
T_PI = np.pi / 2

LEAKAGE_LIMIT = 1e-8

_gate_cache: dict = {}


@dataclass(frozen=True)
class SqueezeParams:
    """Single-mode squeeze with parameter zeta = r * exp(i phi)."""

    r: float
    phi: float = 0.0
    mode_slot: int = 0


@dataclass(frozen=True)
class RotationParams:
    """Spin rotation exp(-i angle * G) with G = (1/2) sum_j w_j (n . sigma_j).

    ``axis`` is "x", "y", "z" or a float azimuth (radians) for an equatorial
    axis. ``target`` selects the weights: "global" (all ones), "differential"
    (+1 first half, -1 second half) or "weighted" (explicit weights).
    """

    axis: object
    angle: float
    target: str = "global"
    weights: np.ndarray | None = None

    def resolve_weights(self, n_ions: int) -> np.ndarray:
        if self.target == "global":
            return np.ones(n_ions)
        if self.target == "differential":
            from .fockspace import half_split_weights

            return half_split_weights(n_ions)
        if self.target == "weighted":
            if self.weights is None:
                raise IonsqError("weighted rotation requires weights")
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n_ions,):
                raise IonsqError(f"weights shape {w.shape} != ({n_ions},)")
            return w
        raise IonsqError(f"unknown rotation target {self.target!r}")


def check_leakage(state: SpinBosonState, limit: float = LEAKAGE_LIMIT) -> float:
    """Return the worst per-slot Fock tail mass; raise if above ``limit``."""
    worst = 0.0
    levels = 2 if state.spec.fock_dim > 2 else 1
    for slot in range(state.spec.n_slots):
        mass = state.fock_tail_mass(slot, levels=levels)
        if mass > limit:
            raise CutoffLeakageError(
                f"Fock tail mass {mass:.3e} on slot {slot} exceeds {limit:.1e} "
                f"(n_max={state.spec.n_max} too small)",
                leakage=mass,
                slot=slot,
            )
        worst = max(worst, mass)
    return worst


def _ladder(m: int) -> np.ndarray:
    a = np.zeros((m, m), dtype=np.complex128)
    a[np.arange(m - 1), np.arange(1, m)] = np.sqrt(np.arange(1, m))
    return a


def _unitary_from_generator(gen: np.ndarray) -> np.ndarray:
    """exp(gen) for anti-Hermitian gen via eigh of the Hermitian i*gen."""
    herm = 1j * gen
    vals, vecs = np.linalg.eigh(herm)
    return (vecs * np.exp(-1j * vals)) @ vecs.conj().T


def _cached_gate(key, build) -> np.ndarray:
    if key not in _gate_cache:
        if len(_gate_cache) >= 64:
            _gate_cache.clear()
        _gate_cache[key] = build()
    return _gate_cache[key]


def _squeeze_unitary(m: int, zeta: complex) -> np.ndarray:
    def build():
        a = _ladder(m)
        gen = 0.5 * (np.conj(zeta) * (a @ a) - zeta * (a.conj().T @ a.conj().T))
        return _unitary_from_generator(gen)

    return _cached_gate(("sq", m, complex(zeta)), build)


def _displacement_unitary(m: int, beta: complex) -> np.ndarray:
    def build():
        a = _ladder(m)
        gen = beta * a.conj().T - np.conj(beta) * a
        return _unitary_from_generator(gen)

    return _cached_gate(("disp", m, complex(beta)), build)


def _apply_slot_unitary(state: SpinBosonState, u: np.ndarray, slot: int) -> SpinBosonState:
    a = _slot_last(state.amplitudes, state.spec, slot)
    out = a @ u.T
    return SpinBosonState(state.spec, _slot_restore(out, state.spec, slot))


def apply_squeeze(state: SpinBosonState, p: SqueezeParams, adjoint: bool = False) -> SpinBosonState:
    """Apply S(zeta) (or its adjoint) to one boson slot."""
    zeta = p.r * np.exp(1j * p.phi)
    if adjoint:
        zeta = -zeta
    out = _apply_slot_unitary(state, _squeeze_unitary(state.spec.fock_dim, zeta), p.mode_slot)
    check_leakage(out)
    return out


def apply_displacement(state: SpinBosonState, beta: complex, mode_slot: int = 0) -> SpinBosonState:
    out = _apply_slot_unitary(state, _displacement_unitary(state.spec.fock_dim, beta), mode_slot)
    check_leakage(out)
    return out


def apply_beam_splitter(state: SpinBosonState, kappa: float, slots=(0, 1)) -> SpinBosonState:
    """exp(i kappa (a^dag b + b^dag a)/2) between two slots; kappa=pi swaps them."""
    spec = state.spec
    if spec.n_slots != 2:
        raise IonsqError("beam splitter requires a two-slot space")
    if tuple(sorted(slots)) != (0, 1):
        raise IonsqError(f"slots {slots} invalid for a two-slot space")
    m = spec.fock_dim
    v = state.amplitudes.reshape(-1, m, m).copy()
    # The generator conserves n0 + n1: exponentiate per total-occupation block,
    # where it is symmetric tridiagonal in n0.
    for total in range(1, 2 * m - 1):
        n0 = np.arange(max(0, total - m + 1), min(total, m - 1) + 1)
        n1 = total - n0
        k = n0.size
        if k == 1:
            continue
        off = np.sqrt((n0[:-1] + 1.0) * n1[:-1])  # <n0+1, n1-1| a^dag b |n0, n1>
        vals, vecs = scipy.linalg.eigh_tridiagonal(np.zeros(k), off)
        ublock = (vecs * np.exp(1j * (kappa / 2) * vals)) @ vecs.T
        sub = v[:, n0, n1]
        v[:, n0, n1] = sub @ ublock.T
    out = SpinBosonState(spec, v.reshape(-1))
    check_leakage(out)
    return out


def _axis_matrix(axis) -> np.ndarray:
    """n . sigma for an equatorial azimuth or a named axis, in (down, up) ordering."""
    if axis == "z":
        return np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=np.complex128)
    azim = {"x": 0.0, "y": np.pi / 2}.get(axis, axis)
    return np.array(
        [[0.0, np.exp(1j * azim)], [np.exp(-1j * azim), 0.0]], dtype=np.complex128
    )


def apply_rotation(state: SpinBosonState, p: RotationParams) -> SpinBosonState:
    """Exact product of single-spin rotations exp(-i (angle w_j / 2) n.sigma_j)."""
    spec = state.spec
    weights = p.resolve_weights(spec.n_ions)
    nsig = _axis_matrix(p.axis)
    boson_dim = spec.fock_dim**spec.n_slots
    amps = state.amplitudes.copy()
    eye = np.eye(2, dtype=np.complex128)
    for q in range(spec.n_ions):
        half = 0.5 * p.angle * weights[q]
        if half == 0.0:
            continue
        u = np.cos(half) * eye - 1j * np.sin(half) * nsig
        a = amps.reshape(-1, 2, (1 << q) * boson_dim)
        new0 = u[0, 0] * a[:, 0, :] + u[0, 1] * a[:, 1, :]
        new1 = u[1, 0] * a[:, 0, :] + u[1, 1] * a[:, 1, :]
        a[:, 0, :] = new0
        a[:, 1, :] = new1
    return SpinBosonState(spec, amps)


def expm_krylov(hamiltonian: Operator, amps: np.ndarray, t: float,
                tol: float = 1e-10, m_max: int = 40) -> np.ndarray:
    """Compute exp(-i t H) |amps> for Hermitian H via adaptive Lanczos.

    The Krylov basis is built once per substep with full reorthogonalization;
    the substep length is halved until the a-posteriori residual estimate
    fits within the proportional error budget ``tol * tau / t``.
    """
    total = abs(t)
    if total == 0.0:
        return amps.copy()
    sign = 1.0 if t > 0 else -1.0
    psi = amps.astype(np.complex128, copy=True)
    remaining = total
    while remaining > 1e-15 * total:
        beta0 = np.linalg.norm(psi)
        if beta0 == 0.0:
            return psi
        basis = np.empty((m_max + 1, psi.size), dtype=np.complex128)
        basis[0] = psi / beta0
        alphas = np.zeros(m_max)
        betas = np.zeros(m_max)
        m_used = m_max
        breakdown = False
        for j in range(m_max):
            w = hamiltonian.apply(basis[j])
            alphas[j] = np.real(np.vdot(basis[j], w))
            w -= alphas[j] * basis[j]
            if j > 0:
                w -= betas[j - 1] * basis[j - 1]
            # full reorthogonalization (one classical Gram-Schmidt pass)
            coeffs = basis[: j + 1].conj() @ w
            w -= coeffs.T @ basis[: j + 1]
            betas[j] = np.linalg.norm(w)
            if betas[j] < 1e-14 * max(1.0, abs(alphas[j])):
                m_used = j + 1
                breakdown = True
                break
            basis[j + 1] = w / betas[j]
        m = m_used
        tau = remaining
        while True:
            vals, vecs = scipy.linalg.eigh_tridiagonal(alphas[:m], betas[: m - 1])
            phase = np.exp(-1j * sign * tau * vals)
            small = vecs @ (phase * vecs[0])
            if breakdown:
                err = 0.0
            else:
                err = abs(betas[m - 1] * small[m - 1])
            if err <= tol * (tau / total) or tau < 1e-12 * total:
                break
            tau *= 0.5
        if not breakdown and tau < 1e-12 * total:
            raise ConvergenceError(
                f"Krylov propagator stalled: residual {err:.3e} at step {tau:.3e}",
                residual=err,
            )
        psi = beta0 * (small @ basis[:m])
        remaining -= tau
    return psi


def evolve_tc(state: SpinBosonState, hamiltonian: Operator, duration: float,
              adjoint: bool = False, tol: float = 1e-10) -> SpinBosonState:
    """Evolve under the TC Hamiltonian for ``duration`` (adjoint flips the sign)."""
    t = -duration if adjoint else duration
    out = SpinBosonState(state.spec, expm_krylov(hamiltonian, state.amplitudes, t, tol=tol))
    check_leakage(out)
    return out

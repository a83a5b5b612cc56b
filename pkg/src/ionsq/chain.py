"""Equilibrium structure, axial normal modes and spin-boson couplings of a linear ion chain.

Units are dimensionless throughout: lengths in the Coulomb length scale
``(q^2 / 4 pi eps0 m wz^2)^(1/3)``, mode frequencies in units of the axial trap
frequency, couplings in units of the characteristic spin-boson strength g0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, IonsqError

# Empirical uniform-spacing ansatz used to seed the Newton iteration.
_ANSATZ_COEF = 2.018
_ANSATZ_POW = -0.559

MODE_CM = "cm"
MODE_B = "b"


@dataclass(frozen=True)
class ChainModel:
    """Static normal-mode data for an N-ion chain.

    ``mode_vectors[m]`` is the m-th orthonormal eigenvector (ascending
    frequency); ``couplings_cm``/``couplings_b`` are unit-norm coupling
    vectors in units of g0.
    """

    n_ions: int
    positions: np.ndarray
    mode_freqs: np.ndarray
    mode_vectors: np.ndarray
    couplings_cm: np.ndarray
    couplings_b: np.ndarray


def _force_long(u: np.ndarray) -> np.ndarray:
    """Force balance residual accumulated in extended precision (returns longdouble)."""
    ul = u.astype(np.longdouble)
    diff = ul[:, None] - ul[None, :]
    np.fill_diagonal(diff, np.inf)
    return ul - np.sum(np.sign(diff) / diff**2, axis=1)


def _force(u: np.ndarray) -> np.ndarray:
    """Axial force balance residual: trap force plus pairwise Coulomb repulsion.

    Accumulated in extended precision: near the solution the two terms cancel
    to ~1e-13 of their magnitude, which plain float64 summation cannot resolve
    for long chains.
    """
    return _force_long(u).astype(float)


def _hessian(u: np.ndarray) -> np.ndarray:
    """Dimensionless axial Hessian of the trap + Coulomb potential."""
    diff = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(diff, np.inf)
    off = -2.0 / diff**3
    h = off.copy()
    np.fill_diagonal(h, 1.0 - np.sum(off, axis=1))
    return h


def solve_equilibrium(n_ions: int, max_iter: int = 200, tol: float = 1e-12) -> np.ndarray:
    """Solve the equilibrium positions of ``n_ions`` ions by damped Newton iteration.

    Returns positions sorted ascending, antisymmetric about the chain center
    (center of mass exactly zero). Raises ConvergenceError if the force
    residual cannot be brought below ``tol``.
    """
    if n_ions < 2:
        raise IonsqError("chain requires n_ions >= 2")
    j = np.arange(1, n_ions + 1, dtype=float)
    u = _ANSATZ_COEF * n_ions**_ANSATZ_POW * (j - (n_ions + 1) / 2)
    res = np.max(np.abs(_force(u)))
    for _ in range(max_iter):
        if res < tol:
            break
        step = np.linalg.solve(_hessian(u), _force(u))
        lam = 1.0
        improved = False
        while lam > 1e-6:
            trial = u - lam * step
            if np.all(np.diff(trial) > 0):
                trial_res = np.max(np.abs(_force(trial)))
                if trial_res < res:
                    u, res = trial, trial_res
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            # float64 rounding floor of the positions; the extended-precision
            # polish below recovers the remaining digits
            if res < 1e-9:
                break
            raise ConvergenceError(
                f"equilibrium line search stalled at residual {res:.3e}", residual=res
            )
    if res >= 1e-9:
        raise ConvergenceError(
            f"equilibrium Newton iteration did not converge: max residual {res:.3e}",
            residual=res,
        )
    # Polish in extended precision: for long chains the Hessian stiffness
    # (~1/spacing^3) amplifies float64 position rounding above 1e-12.
    up = u.astype(np.longdouble)
    res_p = res
    for _ in range(4):
        f = _force_long(up)
        res_p = float(np.max(np.abs(f)))
        if res_p < 1e-15:
            break
        step = np.linalg.solve(_hessian(up.astype(float)), f.astype(float))
        up = up - step.astype(np.longdouble)
    if res_p >= tol:
        raise ConvergenceError(
            f"equilibrium polish did not converge: max residual {res_p:.3e}",
            residual=res_p,
        )
    # The exact solution is antisymmetric; symmetrizing pins the center of
    # mass to zero at machine precision without degrading the residual.
    up = 0.5 * (up - up[::-1])
    return up


def normal_modes(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diagonalize the axial Hessian at the given equilibrium positions.

    Returns ``(freqs, vectors)`` with frequencies ascending (units of the
    trap frequency) and orthonormal eigenvectors as rows, signs fixed so the
    largest-magnitude entry of each vector is positive.
    """
    eigval, eigvec = np.linalg.eigh(_hessian(np.asarray(positions, dtype=float)))
    if np.any(eigval <= 0):
        raise IonsqError(
            f"non-positive Hessian eigenvalue {eigval.min():.3e}: not a stable equilibrium"
        )
    vectors = eigvec.T.copy()
    for v in vectors:
        if v[np.argmax(np.abs(v))] < 0:
            v *= -1.0
    return np.sqrt(eigval), vectors


def build_chain(n_ions: int) -> ChainModel:
    """Assemble the full chain model: equilibrium, modes and coupling vectors."""
    u_long = solve_equilibrium(n_ions)
    u = u_long.astype(float)
    freqs, vectors = normal_modes(u)
    couplings_cm = np.full(n_ions, 1.0 / np.sqrt(n_ions))
    couplings_b = (u_long / np.sqrt(np.sum(u_long**2))).astype(float)
    return ChainModel(
        n_ions=n_ions,
        positions=u,
        mode_freqs=freqs,
        mode_vectors=vectors,
        couplings_cm=couplings_cm,
        couplings_b=couplings_b,
    )


def coupling_vector(chain: ChainModel, mode: str) -> np.ndarray:
    """Unit-norm spin-boson coupling vector (units of g0) for the CM or B mode."""
    if mode == MODE_CM:
        return chain.couplings_cm.copy()
    if mode == MODE_B:
        return chain.couplings_b.copy()
    raise IonsqError(f"unknown mode {mode!r}: expected '{MODE_CM}' or '{MODE_B}'")

"""Discrete truncated-Wigner engine: sampling, mean-field flow, moment estimation.

Initial conditions follow the discrete Wigner rule for spins prepared down
(s_z = -1 exactly, s_x and s_y independent +/-1 signs) and a squeezed-thermal
Gaussian for each boson slot. Trajectories are statistically independent and
integrate their own adaptive Runge-Kutta steps, so results are bit-identical
for a given (seed, config) regardless of threading.

RNG streams are counter based: trajectory ``i`` lives in batch ``i // 4096``
drawn from ``Philox(key=seed)`` advanced by ``batch << 48``, with a fixed
draw order inside the batch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .errors import IonsqError

BATCH = 4096
_BATCH_STRIDE = 1 << 48

#: Default per-step integration tolerance.
STEP_TOL = 1e-8

#: Fraction of flagged trajectories above which a run fails loudly.
MAX_EXCLUDED_FRACTION = 1e-3


@dataclass
class TrajectoryEnsemble:
    """Classical phase-space samples: spin triples per ion plus boson amplitudes."""

    sx: np.ndarray          # (T, N)
    sy: np.ndarray
    sz: np.ndarray
    boson: np.ndarray       # (T, n_slots) complex: a = (X + iY)/2
    seed: int
    stream_ids: np.ndarray  # (T,)
    phase_noise: np.ndarray | None = None  # per-trajectory quadrature-angle offsets
    excluded: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.excluded is None:
            self.excluded = np.zeros(self.sx.shape[0], dtype=bool)

    @property
    def n_traj(self) -> int:
        return self.sx.shape[0]

    @property
    def n_ions(self) -> int:
        return self.sx.shape[1]

    def copy(self) -> "TrajectoryEnsemble":
        return TrajectoryEnsemble(
            self.sx.copy(), self.sy.copy(), self.sz.copy(), self.boson.copy(),
            self.seed, self.stream_ids,
            None if self.phase_noise is None else self.phase_noise.copy(),
            self.excluded.copy(),
        )


def _batch_rng(seed: int, batch_index: int) -> np.random.Generator:
    bg = np.random.Philox(key=seed)
    bg.advance(batch_index * _BATCH_STRIDE)
    return np.random.Generator(bg)


def sample_initial(n_traj: int, n_ions: int, r: float, phi: float, nbar: float,
                   seed: int, n_slots: int = 1, sigma_phase: float = 0.0) -> TrajectoryEnsemble:
    """Draw a fresh ensemble.

    ``phi`` is the quadrature rotation angle of the squeezed slot (half the
    squeeze-parameter phase): for phi = 0 the sampled quadratures satisfy
    Var(X) = (2 nbar + 1) e^{-2r} and Var(Y) = (2 nbar + 1) e^{+2r} on slot 0;
    further slots are vacuum. ``sigma_phase`` adds an independent Gaussian
    quadrature-angle offset per trajectory (stored, and reused by the
    protocol's unsqueeze step).
    """
    if n_traj < 1:
        raise IonsqError("n_traj must be >= 1")
    sx = np.empty((n_traj, n_ions))
    sy = np.empty((n_traj, n_ions))
    sz = np.full((n_traj, n_ions), -1.0)
    boson = np.empty((n_traj, n_slots), dtype=np.complex128)
    dphi = np.zeros(n_traj)
    for start in range(0, n_traj, BATCH):
        stop = min(start + BATCH, n_traj)
        bn = stop - start
        rng = _batch_rng(seed, start // BATCH)
        signs = 2.0 * rng.integers(0, 2, size=(bn, n_ions, 2)) - 1.0
        sx[start:stop] = signs[:, :, 0]
        sy[start:stop] = signs[:, :, 1]
        scale = np.sqrt(2.0 * nbar + 1.0)
        for slot in range(n_slots):
            xs = rng.standard_normal(bn)
            ys = rng.standard_normal(bn)
            if slot == 0:
                boson[start:stop, slot] = 0.5 * scale * (xs + 1j * ys)
            else:
                boson[start:stop, slot] = 0.5 * (xs + 1j * ys)
        if sigma_phase > 0.0:
            dphi[start:stop] = sigma_phase * rng.standard_normal(bn)
    ens = TrajectoryEnsemble(
        sx, sy, sz, boson, seed, np.arange(n_traj, dtype=np.int64),
        phase_noise=dphi if sigma_phase > 0.0 else None,
    )
    if r != 0.0 or phi != 0.0 or sigma_phase > 0.0:
        map_squeeze(ens, r, phi, slot=0)
    return ens


# ---------------------------------------------------------------------------
# Affine phase-space maps (exact images of the corresponding unitaries)

def _quad_angles(ens: TrajectoryEnsemble, phi: float) -> np.ndarray | float:
    if ens.phase_noise is None:
        return phi
    return phi + ens.phase_noise


def map_squeeze(ens: TrajectoryEnsemble, r: float, phi: float, slot: int = 0,
                adjoint: bool = False) -> None:
    """Bogoliubov map of S(zeta) with quadrature angle phi (+ per-trajectory noise)."""
    angle = _quad_angles(ens, phi)
    phase = np.exp(2j * angle)
    a = ens.boson[:, slot]
    sign = 1.0 if adjoint else -1.0
    ens.boson[:, slot] = np.cosh(r) * a + sign * phase * np.sinh(r) * np.conj(a)


def map_displacement(ens: TrajectoryEnsemble, beta: complex, slot: int = 0) -> None:
    ens.boson[:, slot] += beta


def map_beam_splitter(ens: TrajectoryEnsemble, kappa: float, slots=(0, 1)) -> None:
    if ens.boson.shape[1] < 2:
        raise IonsqError("beam splitter requires two boson slots")
    i, j = slots
    a = ens.boson[:, i].copy()
    b = ens.boson[:, j].copy()
    c, s = np.cos(kappa / 2), np.sin(kappa / 2)
    ens.boson[:, i] = c * a + 1j * s * b
    ens.boson[:, j] = 1j * s * a + c * b


def map_rotation(ens: TrajectoryEnsemble, axis, angle: float, weights: np.ndarray) -> None:
    """Rigid rotation of each spin j by angle * w_j about the given axis."""
    th = angle * np.asarray(weights)[None, :]
    c, s = np.cos(th), np.sin(th)
    if axis == "z":
        sx = ens.sx * c - ens.sy * s
        ens.sy[:] = ens.sx * s + ens.sy * c
        ens.sx[:] = sx
        return
    azim = {"x": 0.0, "y": np.pi / 2}.get(axis, axis)
    mx, my = np.cos(azim), np.sin(azim)
    # Rodrigues rotation about the equatorial unit axis (mx, my, 0)
    dot = mx * ens.sx + my * ens.sy
    cx, cy, cz = (my * ens.sz, -mx * ens.sz, mx * ens.sy - my * ens.sx)
    sx = ens.sx * c + cx * s + mx * dot * (1 - c)
    sy = ens.sy * c + cy * s + my * dot * (1 - c)
    sz = ens.sz * c + cz * s
    ens.sx[:], ens.sy[:], ens.sz[:] = sx, sy, sz


# ---------------------------------------------------------------------------
# Mean-field TC flow, per-trajectory adaptive Dormand-Prince

@njit(cache=True)
def _tc_rhs(y, g, n, dy):
    ar = y[3 * n]
    ai = y[3 * n + 1]
    sum_sy = 0.0
    sum_sx = 0.0
    for j in range(n):
        sx = y[j]
        sy = y[n + j]
        sz = y[2 * n + j]
        gj = g[j]
        dy[j] = -2.0 * gj * ai * sz
        dy[n + j] = -2.0 * gj * ar * sz
        dy[2 * n + j] = 2.0 * gj * (ar * sy + ai * sx)
        sum_sy += gj * sy
        sum_sx += gj * sx
    dy[3 * n] = -0.5 * sum_sy
    dy[3 * n + 1] = -0.5 * sum_sx


@njit(cache=True)
def _dopri5_trajectory(y, g, n, t_final, tol):
    """Integrate one trajectory in place; returns 0 on success, 1 on underflow."""
    dim = 3 * n + 2
    k1 = np.empty(dim); k2 = np.empty(dim); k3 = np.empty(dim)
    k4 = np.empty(dim); k5 = np.empty(dim); k6 = np.empty(dim)
    k7 = np.empty(dim); ytmp = np.empty(dim); y5 = np.empty(dim)
    t = 0.0
    h = 0.1 * t_final
    _tc_rhs(y, g, n, k1)
    while t < t_final:
        if h < 1e-13 * t_final:
            return 1
        if t + h > t_final:
            h = t_final - t
        for i in range(dim):
            ytmp[i] = y[i] + h * 0.2 * k1[i]
        _tc_rhs(ytmp, g, n, k2)
        for i in range(dim):
            ytmp[i] = y[i] + h * (0.075 * k1[i] + 0.225 * k2[i])
        _tc_rhs(ytmp, g, n, k3)
        for i in range(dim):
            ytmp[i] = y[i] + h * (0.9777777777777777 * k1[i] - 3.7333333333333334 * k2[i]
                                  + 3.5555555555555554 * k3[i])
        _tc_rhs(ytmp, g, n, k4)
        for i in range(dim):
            ytmp[i] = y[i] + h * (2.9525986892242035 * k1[i] - 11.595793324188385 * k2[i]
                                  + 9.822892851699436 * k3[i] - 0.2908093278463649 * k4[i])
        _tc_rhs(ytmp, g, n, k5)
        for i in range(dim):
            ytmp[i] = y[i] + h * (2.8462752525252526 * k1[i] - 10.757575757575758 * k2[i]
                                  + 8.906422717743473 * k3[i] + 0.2784090909090909 * k4[i]
                                  - 0.2735313036020583 * k5[i])
        _tc_rhs(ytmp, g, n, k6)
        for i in range(dim):
            y5[i] = y[i] + h * (0.09114583333333333 * k1[i] + 0.44923629829290207 * k3[i]
                                + 0.6510416666666666 * k4[i] - 0.322376179245283 * k5[i]
                                + 0.13095238095238096 * k6[i])
        _tc_rhs(y5, g, n, k7)
        err = 0.0
        for i in range(dim):
            e4 = (0.08991319444444444 * k1[i] + 0.4534890685834082 * k3[i]
                  + 0.6140625 * k4[i] - 0.2715123820754717 * k5[i]
                  + 0.08904761904761904 * k6[i] + 0.025 * k7[i])
            diff = h * abs((y5[i] - y[i]) / h - e4)
            scale = tol + tol * abs(y[i])
            ratio = diff / scale
            if ratio > err:
                err = ratio
        if err <= 1.0:
            t += h
            for i in range(dim):
                y[i] = y5[i]
                k1[i] = k7[i]  # FSAL
        fac = 0.9 * err ** -0.2 if err > 0.0 else 5.0
        if fac > 5.0:
            fac = 5.0
        if fac < 0.2:
            fac = 0.2
        h *= fac
    return 0


@njit(parallel=True, cache=True)
def _evolve_kernel(sx, sy, sz, ar, ai, g, t_final, tol, flags):
    n_traj, n = sx.shape
    for k in prange(n_traj):
        y = np.empty(3 * n + 2)
        for j in range(n):
            y[j] = sx[k, j]
            y[n + j] = sy[k, j]
            y[2 * n + j] = sz[k, j]
        y[3 * n] = ar[k]
        y[3 * n + 1] = ai[k]
        flags[k] = _dopri5_trajectory(y, g, n, t_final, tol)
        for j in range(n):
            sx[k, j] = y[j]
            sy[k, j] = y[n + j]
            sz[k, j] = y[2 * n + j]
        ar[k] = y[3 * n]
        ai[k] = y[3 * n + 1]


_threads_capped = False


def _cap_threads() -> None:
    """Apply the IONSQ_THREADS cap to the trajectory worker pool (once)."""
    global _threads_capped
    if _threads_capped:
        return
    _threads_capped = True
    import os

    cap = os.environ.get("IONSQ_THREADS")
    if cap:
        import numba

        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


def evolve_trajectories(ens: TrajectoryEnsemble, couplings: np.ndarray, duration: float,
                        slot: int = 0, tol: float = STEP_TOL) -> TrajectoryEnsemble:
    """Integrate the mean-field TC equations on one slot for ``duration`` (in 1/g0).

    Negative duration realizes the sign-flipped (time-reversed) interaction.
    Trajectories whose step size underflows are flagged and excluded; more
    than 0.1% of them aborts the run.
    """
    if duration == 0.0:
        return ens
    _cap_threads()
    g = np.asarray(couplings, dtype=float)
    if duration < 0:
        g = -g
        duration = -duration
    ar = np.ascontiguousarray(ens.boson[:, slot].real)
    ai = np.ascontiguousarray(ens.boson[:, slot].imag)
    flags = np.zeros(ens.n_traj, dtype=np.int64)
    _evolve_kernel(ens.sx, ens.sy, ens.sz, ar, ai, g, float(duration), tol, flags)
    ens.boson[:, slot] = ar + 1j * ai
    newly = flags.astype(bool)
    ens.excluded |= newly
    frac = ens.excluded.mean()
    if frac > MAX_EXCLUDED_FRACTION:
        raise IonsqError(
            f"{ens.excluded.sum()} of {ens.n_traj} trajectories excluded "
            f"({frac:.2e} > {MAX_EXCLUDED_FRACTION:.0e}): integration unreliable"
        )
    return ens


# ---------------------------------------------------------------------------
# Estimators

@dataclass
class MomentEstimate:
    mean: float
    variance: float
    stderr_mean: float | None
    stderr_variance: float | None
    n_used: int


def observable_values(ens: TrajectoryEnsemble, kind: str, weights: np.ndarray | None = None,
                      slot: int = 0) -> np.ndarray:
    """Per-trajectory value of the Weyl symbol of a collective observable."""
    from . import fockspace as fs

    n = ens.n_ions
    if kind in (fs.OBS_SZ_PLUS, fs.OBS_SX_PLUS, fs.OBS_SY_PLUS):
        w = np.ones(n)
    elif kind == fs.OBS_SZ_MINUS:
        w = fs.half_split_weights(n)
    elif kind in (fs.OBS_SZ_WEIGHTED, fs.OBS_SX_WEIGHTED, fs.OBS_SY_WEIGHTED):
        if weights is None:
            raise IonsqError(f"observable {kind} requires weights")
        w = np.asarray(weights, dtype=float)
    elif kind == fs.OBS_BOSON_X:
        return 2.0 * ens.boson[:, slot].real
    elif kind == fs.OBS_BOSON_Y:
        return 2.0 * ens.boson[:, slot].imag
    elif kind == fs.OBS_EXCITATION:
        vals = 0.5 * (ens.sz + 1.0) @ np.ones(n)
        return vals + np.sum(np.abs(ens.boson) ** 2, axis=1)
    else:
        raise IonsqError(f"unknown observable kind {kind!r}")
    if kind in (fs.OBS_SZ_PLUS, fs.OBS_SZ_MINUS, fs.OBS_SZ_WEIGHTED):
        comp = ens.sz
    elif kind in (fs.OBS_SX_PLUS, fs.OBS_SX_WEIGHTED):
        comp = ens.sx
    else:
        comp = ens.sy
    return 0.5 * (comp @ w)


def estimate_moments(values: np.ndarray, n_blocks: int = 32) -> MomentEstimate:
    """Sample mean/variance with jackknife standard errors over contiguous blocks."""
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(np.add.reduce(values) / n)
    var = float(np.add.reduce((values - mean) ** 2) / n)
    if n < 2 * n_blocks:
        warnings.warn(f"{n} trajectories < {2 * n_blocks}: stderr unavailable")
        return MomentEstimate(mean, var, None, None, n)
    edges = np.linspace(0, n, n_blocks + 1, dtype=int)
    loo_mean = np.empty(n_blocks)
    loo_var = np.empty(n_blocks)
    total = mean * n
    total_sq = float(np.add.reduce(values**2))
    for i in range(n_blocks):
        blk = values[edges[i]: edges[i + 1]]
        m = n - blk.size
        mu = (total - blk.sum()) / m
        loo_mean[i] = mu
        loo_var[i] = (total_sq - np.add.reduce(blk**2)) / m - mu * mu
    fac = (n_blocks - 1) / n_blocks
    se_mean = float(np.sqrt(fac * np.sum((loo_mean - loo_mean.mean()) ** 2)))
    se_var = float(np.sqrt(fac * np.sum((loo_var - loo_var.mean()) ** 2)))
    return MomentEstimate(mean, var, se_mean, se_var, n)


def estimate_observable(ens: TrajectoryEnsemble, kind: str, weights=None, slot: int = 0,
                        n_blocks: int = 32) -> MomentEstimate:
    vals = observable_values(ens, kind, weights, slot)
    if ens.excluded.any():
        vals = vals[~ens.excluded]
    return estimate_moments(vals, n_blocks=n_blocks)

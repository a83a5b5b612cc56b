"""Joint spin-boson Hilbert space: basis layout, states, observables and operators.

Basis ordering (fixed, also recorded in saved state headers): the flat index is

    ((spin_index * (n_max+1) + n_0) * (n_max+1) + n_1)      for two boson slots
    (spin_index * (n_max+1) + n_0)                           for one slot

where ``spin_index`` carries ion 1 in its least significant bit and a set bit
means the ion is up. Single-qubit matrices throughout the package are written
in the matching (down, up) ordering, i.e. sigma_z = diag(-1, +1).

Operators are matrix-free handles: spin terms act by bit-sliced reshapes and
boson ladder terms by shifted slices along the Fock axis, so no operator
matrix is ever stored at full dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, IonsqError

BASIS_ORDER_TAG = "spin-major/slot0-major/ion1-lsb/bit1-up"

#: Default cap on the joint dimension (states are dense complex128).
DEFAULT_DIM_BUDGET = 1 << 22

OBS_SZ_PLUS = "sz_plus"
OBS_SZ_MINUS = "sz_minus"
OBS_SZ_WEIGHTED = "sz_weighted"
OBS_SX_PLUS = "sx_plus"
OBS_SY_PLUS = "sy_plus"
OBS_SX_WEIGHTED = "sx_weighted"
OBS_SY_WEIGHTED = "sy_weighted"
OBS_BOSON_X = "boson_x"
OBS_BOSON_Y = "boson_y"
OBS_EXCITATION = "excitation_number"

_WEIGHTED_KINDS = {OBS_SZ_WEIGHTED, OBS_SX_WEIGHTED, OBS_SY_WEIGHTED}
_BOSON_KINDS = {OBS_BOSON_X, OBS_BOSON_Y}


@dataclass(frozen=True)
class SpaceSpec:
    """Shape of the joint space: N spins and one or two truncated boson slots.

    ``mode_ids`` names the physical mode each slot represents ("cm"/"b");
    its length is the number of boson slots.
    """

    n_ions: int
    n_max: int
    mode_ids: tuple[str, ...] = ("cm",)

    def __post_init__(self):
        if self.n_ions < 1:
            raise IonsqError("n_ions must be >= 1")
        if self.n_max < 1:
            raise IonsqError("n_max must be >= 1")
        if len(self.mode_ids) not in (1, 2):
            raise IonsqError("supported boson slot counts: 1 or 2")

    @property
    def n_slots(self) -> int:
        return len(self.mode_ids)

    @property
    def fock_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return (1 << self.n_ions) * self.fock_dim**self.n_slots

    def shape(self) -> tuple[int, ...]:
        return (1 << self.n_ions,) + (self.fock_dim,) * self.n_slots


def build_space(spec: SpaceSpec, dim_budget: int = DEFAULT_DIM_BUDGET) -> SpaceSpec:
    """Validate a space against the dimension budget and return it."""
    if spec.dim > dim_budget:
        raise BudgetExceededError(
            f"joint dimension {spec.dim} exceeds budget {dim_budget} "
            f"(2^{spec.n_ions} spins x {spec.fock_dim}^{spec.n_slots} Fock)"
        )
    return spec


@dataclass
class SpinBosonState:
    """Dense pure state over the joint basis. Norm 1 within 1e-9."""

    spec: SpaceSpec
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def view(self) -> np.ndarray:
        """Amplitudes reshaped to (2^N, fock, [fock])."""
        return self.amplitudes.reshape(self.spec.shape())

    def copy(self) -> "SpinBosonState":
        return SpinBosonState(self.spec, self.amplitudes.copy())

    def fock_tail_mass(self, slot: int, levels: int = 1) -> float:
        """Probability mass on the top ``levels`` Fock levels of ``slot``.

        The leakage check inspects two levels: number-parity-preserving
        gates (squeezing) can leave an odd top level exactly empty while the
        level below it overflows.
        """
        v = self.view()
        if not 0 <= slot < self.spec.n_slots:
            raise IonsqError(f"slot {slot} out of range")
        if self.spec.n_slots == 2 and slot == 0:
            tail = v[:, -levels:, :]
        else:
            tail = v[..., -levels:]
        return float(np.sum(np.abs(tail) ** 2))

    def fidelity(self, other: "SpinBosonState") -> float:
        return float(np.abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)


def initial_state(spec: SpaceSpec, boson_occupations=(0,)) -> SpinBosonState:
    """All spins down, boson slots in the given Fock states."""
    occ = tuple(boson_occupations)
    if len(occ) != spec.n_slots:
        raise IonsqError(f"expected {spec.n_slots} occupations, got {len(occ)}")
    if any(n < 0 or n > spec.n_max for n in occ):
        raise IonsqError(f"occupation {occ} outside 0..{spec.n_max}")
    amps = np.zeros(spec.dim, dtype=np.complex128)
    idx = 0
    for n in occ:
        idx = idx * spec.fock_dim + n
    amps[idx] = 1.0
    return SpinBosonState(spec, amps)


@dataclass(frozen=True)
class ObservableSpec:
    """Which Hermitian observable to measure; weights only for weighted kinds."""

    kind: str
    mode_slot: int | None = None
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind in _WEIGHTED_KINDS and self.weights is None:
            raise IonsqError(f"observable {self.kind} requires per-ion weights")
        if self.kind not in _WEIGHTED_KINDS and self.weights is not None:
            raise IonsqError(f"observable {self.kind} does not take weights")


class Operator:
    """Matrix-free Hermitian operator handle."""

    def apply(self, amps: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def expectation(self, state: SpinBosonState) -> float:
        return float(np.real(np.vdot(state.amplitudes, self.apply(state.amplitudes))))

    def moments(self, state: SpinBosonState) -> tuple[float, float]:
        """(<M>, <M^2>) evaluated with a single operator application."""
        v = self.apply(state.amplitudes)
        m1 = float(np.real(np.vdot(state.amplitudes, v)))
        m2 = float(np.real(np.vdot(v, v)))
        return m1, m2

    def variance(self, state: SpinBosonState) -> float:
        m1, m2 = self.moments(state)
        return m2 - m1 * m1


class DiagonalOperator(Operator):
    def __init__(self, diag: np.ndarray):
        self.diag = diag

    def apply(self, amps):
        return self.diag * amps


def _spin_z_values(n_ions: int, weights: np.ndarray) -> np.ndarray:
    """Eigenvalues of (1/2) sum_j w_j sigma^z_j over all 2^N spin configurations."""
    s = np.arange(1 << n_ions)
    vals = np.zeros(s.size)
    for q in range(n_ions):
        bit = ((s >> q) & 1).astype(float)
        vals += 0.5 * weights[q] * (2.0 * bit - 1.0)
    return vals


class SpinZOperator(DiagonalOperator):
    """(1/2) sum_j w_j sigma^z_j, diagonal in the computational basis."""

    def __init__(self, spec: SpaceSpec, weights: np.ndarray):
        boson_dim = spec.fock_dim**spec.n_slots
        diag = np.repeat(_spin_z_values(spec.n_ions, weights), boson_dim)
        super().__init__(diag.astype(np.complex128))


class SpinXYOperator(Operator):
    """(1/2) sum_j w_j sigma^{x|y}_j applied by per-ion bit-sliced reshapes."""

    def __init__(self, spec: SpaceSpec, axis: str, weights: np.ndarray):
        if axis not in ("x", "y"):
            raise IonsqError(f"axis {axis!r} not in (x, y)")
        self.spec = spec
        self.axis = axis
        self.weights = np.asarray(weights, dtype=float)

    def apply(self, amps):
        spec = self.spec
        boson_dim = spec.fock_dim**spec.n_slots
        out = np.zeros_like(amps)
        for q in range(spec.n_ions):
            w = 0.5 * self.weights[q]
            if w == 0.0:
                continue
            lo = 1 << q
            a = amps.reshape(-1, 2, lo * boson_dim)
            o = out.reshape(-1, 2, lo * boson_dim)
            if self.axis == "x":
                o[:, 0, :] += w * a[:, 1, :]
                o[:, 1, :] += w * a[:, 0, :]
            else:
                # sigma_y in (down, up) ordering: [[0, i], [-i, 0]]
                o[:, 0, :] += 1j * w * a[:, 1, :]
                o[:, 1, :] += -1j * w * a[:, 0, :]
        return out


class BosonQuadratureOperator(Operator):
    """X = a + a^dag or Y = i(a^dag - a) on one boson slot."""

    def __init__(self, spec: SpaceSpec, which: str, slot: int = 0):
        if which not in ("x", "y"):
            raise IonsqError(f"quadrature {which!r} not in (x, y)")
        if not 0 <= slot < spec.n_slots:
            raise IonsqError(f"slot {slot} out of range")
        self.spec = spec
        self.which = which
        self.slot = slot
        self.sqrtn = np.sqrt(np.arange(1, spec.fock_dim))

    def apply(self, amps):
        spec = self.spec
        a = _slot_last(amps, spec, self.slot)
        out = np.zeros_like(a)
        if self.which == "x":
            out[..., :-1] += self.sqrtn * a[..., 1:]   # a
            out[..., 1:] += self.sqrtn * a[..., :-1]   # a^dag
        else:
            out[..., 1:] += 1j * self.sqrtn * a[..., :-1]
            out[..., :-1] += -1j * self.sqrtn * a[..., 1:]
        return _slot_restore(out, spec, self.slot)


class ExcitationNumberOperator(DiagonalOperator):
    """N_exc = sum_j (sigma^z_j + 1)/2 + a^dag a on the given slot (or all slots)."""

    def __init__(self, spec: SpaceSpec, mode_slot: int | None = None):
        shape = spec.shape()
        s = np.arange(shape[0])
        ups = np.zeros(shape[0])
        for q in range(spec.n_ions):
            ups += (s >> q) & 1
        diag = np.broadcast_to(ups.reshape((-1,) + (1,) * spec.n_slots), shape).astype(float).copy()
        slots = range(spec.n_slots) if mode_slot is None else (mode_slot,)
        for slot in slots:
            n = np.arange(spec.fock_dim, dtype=float)
            nshape = [1] * (spec.n_slots + 1)
            nshape[1 + slot] = spec.fock_dim
            diag += n.reshape(nshape)
        super().__init__(diag.reshape(-1).astype(np.complex128))


def _slot_last(amps: np.ndarray, spec: SpaceSpec, slot: int) -> np.ndarray:
    """Reshape so the target slot's Fock axis is last (no copy when possible)."""
    if spec.n_slots == 1 or slot == spec.n_slots - 1:
        return amps.reshape(-1, spec.fock_dim)
    # two slots, slot 0: group slot 1 with the spin axis via a transpose
    v = amps.reshape(spec.shape())
    return np.ascontiguousarray(np.moveaxis(v, 1, 2)).reshape(-1, spec.fock_dim)


def _slot_restore(arr: np.ndarray, spec: SpaceSpec, slot: int) -> np.ndarray:
    if spec.n_slots == 1 or slot == spec.n_slots - 1:
        return arr.reshape(-1)
    v = arr.reshape((1 << spec.n_ions), spec.fock_dim, spec.fock_dim)
    return np.ascontiguousarray(np.moveaxis(v, 2, 1)).reshape(-1)


class TCHamiltonian(Operator):
    """Excitation-exchange Hamiltonian sum_j g_j (a^dag sigma^-_j + a sigma^+_j)."""

    def __init__(self, spec: SpaceSpec, couplings: np.ndarray, mode_slot: int = 0):
        couplings = np.asarray(couplings, dtype=float)
        if couplings.shape != (spec.n_ions,):
            raise IonsqError(
                f"couplings length {couplings.shape} does not match N={spec.n_ions}"
            )
        if not 0 <= mode_slot < spec.n_slots:
            raise IonsqError(f"mode_slot {mode_slot} out of range")
        self.spec = spec
        self.couplings = couplings
        self.mode_slot = mode_slot
        self.sqrtn = np.sqrt(np.arange(1, spec.fock_dim))

    def apply(self, amps):
        spec = self.spec
        m = spec.fock_dim
        two_slots = spec.n_slots == 2
        # tail = basis axes below the spin bit being addressed
        out = np.zeros_like(amps)
        for q, g in enumerate(self.couplings):
            if g == 0.0:
                continue
            tail = (1 << q) * m * (m if two_slots else 1)
            if two_slots and self.mode_slot == 0:
                a = amps.reshape(-1, 2, 1 << q, m, m)
                o = out.reshape(-1, 2, 1 << q, m, m)
                sq = self.sqrtn[:, None]
                # a^dag sigma^-: |up, n> -> sqrt(n+1) |down, n+1>
                o[:, 0, :, 1:, :] += g * sq * a[:, 1, :, :-1, :]
                # a sigma^+: |down, n+1> -> sqrt(n+1) |up, n>
                o[:, 1, :, :-1, :] += g * sq * a[:, 0, :, 1:, :]
            else:
                a = amps.reshape(-1, 2, tail // m, m)
                o = out.reshape(-1, 2, tail // m, m)
                o[:, 0, :, 1:] += g * self.sqrtn * a[:, 1, :, :-1]
                o[:, 1, :, :-1] += g * self.sqrtn * a[:, 0, :, 1:]
        return out


def half_split_weights(n_ions: int) -> np.ndarray:
    """+1 on the first half of the chain, -1 on the second (differential split)."""
    if n_ions % 2:
        raise IonsqError(f"differential split undefined for odd N={n_ions}")
    w = np.ones(n_ions)
    w[n_ions // 2:] = -1.0
    return w


def spin_operator(spec: SpaceSpec, obs: ObservableSpec) -> Operator:
    """Build the operator handle for an observable specification."""
    kind = obs.kind
    n = spec.n_ions
    if kind == OBS_SZ_PLUS:
        return SpinZOperator(spec, np.ones(n))
    if kind == OBS_SZ_MINUS:
        return SpinZOperator(spec, half_split_weights(n))
    if kind == OBS_SZ_WEIGHTED:
        return SpinZOperator(spec, np.asarray(obs.weights, dtype=float))
    if kind == OBS_SX_PLUS:
        return SpinXYOperator(spec, "x", np.ones(n))
    if kind == OBS_SY_PLUS:
        return SpinXYOperator(spec, "y", np.ones(n))
    if kind == OBS_SX_WEIGHTED:
        return SpinXYOperator(spec, "x", np.asarray(obs.weights, dtype=float))
    if kind == OBS_SY_WEIGHTED:
        return SpinXYOperator(spec, "y", np.asarray(obs.weights, dtype=float))
    if kind == OBS_BOSON_X:
        return BosonQuadratureOperator(spec, "x", obs.mode_slot or 0)
    if kind == OBS_BOSON_Y:
        return BosonQuadratureOperator(spec, "y", obs.mode_slot or 0)
    if kind == OBS_EXCITATION:
        return ExcitationNumberOperator(spec, obs.mode_slot)
    raise IonsqError(f"unknown observable kind {kind!r}")


def tc_hamiltonian(spec: SpaceSpec, couplings, mode_slot: int = 0) -> TCHamiltonian:
    return TCHamiltonian(spec, couplings, mode_slot)

import numpy as np
import pytest
from helpers import random_state

from ionsq.dynamics import (
    T_PI,
    RotationParams,
    SqueezeParams,
    apply_beam_splitter,
    apply_displacement,
    apply_rotation,
    apply_squeeze,
    evolve_tc,
    expm_krylov,
)
from ionsq.errors import CutoffLeakageError, IonsqError
from ionsq.fockspace import (
    ExcitationNumberOperator,
    ObservableSpec,
    SpaceSpec,
    SpinBosonState,
    initial_state,
    spin_operator,
    tc_hamiltonian,
)


def vacuum(n_ions=1, n_max=40, slots=("cm",)):
    return initial_state(SpaceSpec(n_ions, n_max, slots), (0,) * len(slots))


def _low_fock_state(spec, rng):
    """Random state with negligible weight near the cutoff (leakage-clean)."""
    amps = random_state(spec.dim, rng).reshape(spec.shape())
    amps[..., spec.fock_dim // 2:] *= 1e-6
    amps = amps.reshape(-1)
    return amps / np.linalg.norm(amps)


def quad_ops(spec, slot=0):
    return (
        spin_operator(spec, ObservableSpec("boson_x", mode_slot=slot)),
        spin_operator(spec, ObservableSpec("boson_y", mode_slot=slot)),
    )


class TestSqueeze:
    def test_identity_at_zero(self):
        st = vacuum()
        out = apply_squeeze(st, SqueezeParams(0.0, 0.0))
        assert abs(out.fidelity(st) - 1.0) < 1e-12

    def test_vacuum_variances(self):
        # squeezing pushes Var(X) -> e^{-2r}, Var(Y) -> e^{+2r} at phi = 0
        st = apply_squeeze(vacuum(), SqueezeParams(0.5, 0.0))
        x, y = quad_ops(st.spec)
        assert abs(x.variance(st) - np.exp(-1.0)) < 1e-9
        assert abs(y.variance(st) - np.exp(1.0)) < 1e-9
        assert abs(st.norm() - 1.0) < 1e-12

    def test_phase_rotates_squeezed_quadrature(self):
        # zeta phase pi squeezes Y instead of X
        st = apply_squeeze(vacuum(), SqueezeParams(0.5, np.pi))
        x, y = quad_ops(st.spec)
        assert abs(y.variance(st) - np.exp(-1.0)) < 1e-9
        assert abs(x.variance(st) - np.exp(1.0)) < 1e-9

    def test_adjoint_roundtrip(self):
        st = vacuum()
        p = SqueezeParams(0.7, 0.3)
        out = apply_squeeze(apply_squeeze(st, p), p, adjoint=True)
        assert abs(out.fidelity(st) - 1.0) < 1e-9

    def test_leakage_raises_when_cutoff_too_small(self):
        st = vacuum(n_max=5)
        with pytest.raises(CutoffLeakageError):
            apply_squeeze(st, SqueezeParams(1.2, 0.0))


class TestDisplacement:
    def test_identity_at_zero(self):
        st = vacuum()
        assert abs(apply_displacement(st, 0.0).fidelity(st) - 1.0) < 1e-12

    def test_poisson_statistics(self):
        import math

        st = apply_displacement(vacuum(), 1.0)
        n_op = ExcitationNumberOperator(st.spec)
        assert abs(n_op.expectation(st) - 1.0) < 1e-9
        probs = np.abs(st.view()[0]) ** 2
        for n in range(6):
            assert abs(probs[n] - np.exp(-1.0) / math.factorial(n)) < 1e-9

    def test_inverse(self):
        st = vacuum()
        out = apply_displacement(apply_displacement(st, 0.8 + 0.2j), -(0.8 + 0.2j))
        assert abs(out.fidelity(st) - 1.0) < 1e-9


class TestBeamSplitter:
    def test_identity_at_zero(self):
        st = vacuum(slots=("b", "cm"), n_max=6)
        assert abs(apply_beam_splitter(st, 0.0).fidelity(st) - 1.0) < 1e-12

    def test_full_swap_of_fock_state(self):
        spec = SpaceSpec(1, 4, ("b", "cm"))
        st = initial_state(spec, (1, 0))
        out = apply_beam_splitter(st, np.pi)
        n0 = ExcitationNumberOperator(spec, mode_slot=0)
        n1 = ExcitationNumberOperator(spec, mode_slot=1)
        # subtract the spin-up count (zero here): occupation moved 0 -> 1
        assert abs(n0.expectation(out) - 0.0) < 1e-12
        assert abs(n1.expectation(out) - 1.0) < 1e-12

    def test_swap_moves_squeezing(self):
        st = vacuum(n_max=30, slots=("b", "cm"))
        st = apply_squeeze(st, SqueezeParams(0.4, 0.0, mode_slot=0))
        out = apply_beam_splitter(st, np.pi)
        x1, y1 = quad_ops(out.spec, slot=1)
        # swap composes with the squeeze oracle: slot 1 inherits e^{-0.8}
        # up to the 90-degree phase-space rotation (X <-> Y) of the swap
        assert abs(y1.variance(out) - np.exp(-0.8)) < 1e-8
        assert abs(x1.variance(out) - np.exp(0.8)) < 1e-8

    def test_requires_two_slots(self):
        with pytest.raises(IonsqError):
            apply_beam_splitter(vacuum(), np.pi)


class TestRotation:
    def test_identity_at_zero(self):
        st = vacuum(n_ions=3, n_max=2)
        out = apply_rotation(st, RotationParams("y", 0.0))
        assert abs(out.fidelity(st) - 1.0) < 1e-12

    def test_ramsey_pulse_geometry(self):
        st = vacuum(n_ions=4, n_max=2)
        out = apply_rotation(st, RotationParams("y", np.pi / 2))
        sx = spin_operator(out.spec, ObservableSpec("sx_plus"))
        sz = spin_operator(out.spec, ObservableSpec("sz_plus"))
        assert abs(sx.expectation(out) + 2.0) < 1e-12   # -N/2 under exp(-i theta S_y)
        assert abs(sz.expectation(out)) < 1e-12

    def test_full_turn_phase(self):
        st = vacuum(n_ions=3, n_max=2)
        out = apply_rotation(st, RotationParams("z", 2 * np.pi))
        assert abs(abs(np.vdot(st.amplitudes, out.amplitudes)) - 1.0) < 1e-12

    def test_differential_odd_rejected(self):
        st = vacuum(n_ions=3, n_max=2)
        with pytest.raises(IonsqError):
            apply_rotation(st, RotationParams("z", 0.1, target="differential"))

    def test_weighted_requires_weights(self):
        st = vacuum(n_ions=2, n_max=2)
        with pytest.raises(IonsqError):
            apply_rotation(st, RotationParams("z", 0.1, target="weighted"))


class TestEvolveTC:
    def test_rabi_closed_form(self):
        # two-level resonant exchange: |down,1> -> -i|up,0> at t_pi
        spec = SpaceSpec(1, 3)
        st = initial_state(spec, (1,))
        h = tc_hamiltonian(spec, np.array([1.0]))
        out = evolve_tc(st, h, T_PI)
        target = spec.fock_dim  # |up, 0>
        assert abs(abs(out.amplitudes[target]) ** 2 - 1.0) < 1e-9
        assert abs(out.amplitudes[target] - (-1j)) < 1e-8

    def test_zero_duration_identity(self):
        spec = SpaceSpec(2, 4)
        rng = np.random.default_rng(0)
        st = SpinBosonState(spec, _low_fock_state(spec, rng))
        h = tc_hamiltonian(spec, np.array([0.3, 0.7]))
        out = evolve_tc(st, h, 0.0)
        assert np.array_equal(out.amplitudes, st.amplitudes)

    def test_conservation_laws(self):
        # n_max leaves headroom: the TC flow can climb N quanta above the
        # populated levels
        spec = SpaceSpec(3, 10)
        rng = np.random.default_rng(42)
        h = tc_hamiltonian(spec, np.array([0.5, 0.3, 0.4]))
        nexc = ExcitationNumberOperator(spec)
        for _ in range(5):
            st = SpinBosonState(spec, _low_fock_state(spec, rng))
            e0 = h.expectation(st)
            n0, n0sq = nexc.moments(st)
            out = evolve_tc(st, h, 1.7)
            assert abs(out.norm() - 1.0) < 1e-9
            assert abs(h.expectation(out) - e0) < 1e-9
            n1, n1sq = nexc.moments(out)
            assert abs(n1 - n0) < 1e-9
            assert abs((n1sq - n1**2) - (n0sq - n0**2)) < 1e-9

    def test_adjoint_reverses(self):
        spec = SpaceSpec(2, 8)
        st = initial_state(spec, (2,))
        h = tc_hamiltonian(spec, np.array([0.7, 0.7]))
        out = evolve_tc(evolve_tc(st, h, 1.3), h, 1.3, adjoint=True)
        assert abs(out.fidelity(st) - 1.0) < 1e-9

    def test_krylov_matches_dense_expm(self):
        import scipy.linalg

        from helpers import dense_tc

        spec = SpaceSpec(2, 3)
        rng = np.random.default_rng(1)
        h = tc_hamiltonian(spec, np.array([0.9, 0.4]))
        hmat = dense_tc(2, [0.9, 0.4], [4], 0)
        psi = random_state(spec.dim, rng)
        expected = scipy.linalg.expm(-1j * 2.1 * hmat) @ psi
        got = expm_krylov(h, psi, 2.1)
        assert np.abs(got - expected).max() < 1e-9


def test_commuting_operations_compose_order_independently():
    spec = SpaceSpec(2, 40)
    st = initial_state(spec, (0,))
    rot = RotationParams("y", 0.7)
    sq = SqueezeParams(0.5, 0.2)
    a = apply_squeeze(apply_rotation(st, rot), sq)
    b = apply_rotation(apply_squeeze(st, sq), rot)
    assert np.abs(a.amplitudes - b.amplitudes).max() < 1e-10


def test_random_gate_strings_preserve_norm():
    rng = np.random.default_rng(9)
    spec = SpaceSpec(2, 30)
    st = initial_state(spec, (0,))
    h = tc_hamiltonian(spec, np.array([0.5, 0.5]))
    for _ in range(10):
        op = rng.integers(0, 4)
        if op == 0:
            st = apply_squeeze(st, SqueezeParams(0.3 * rng.random(), rng.random()))
        elif op == 1:
            st = apply_displacement(st, 0.5 * (rng.random() + 1j * rng.random()))
        elif op == 2:
            st = apply_rotation(st, RotationParams(rng.random(), rng.random()))
        else:
            st = evolve_tc(st, h, rng.random())
        assert abs(st.norm() - 1.0) < 1e-9

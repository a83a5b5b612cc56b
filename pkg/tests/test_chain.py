import numpy as np
import pytest
from scipy.optimize import fsolve

from ionsq.chain import (
    MODE_B,
    MODE_CM,
    _force,
    build_chain,
    coupling_vector,
    normal_modes,
    solve_equilibrium,
)
from ionsq.errors import IonsqError


def test_two_ion_closed_form():
    # force balance u = 1/(2u)^2 gives u^3 = 1/4
    u = solve_equilibrium(2)
    expected = 0.25 ** (1.0 / 3.0)
    assert np.allclose(u.astype(float), [-expected, expected], atol=1e-12)


def test_three_ion_closed_form_and_newton_oracle():
    u = solve_equilibrium(3)
    expected = 1.25 ** (1.0 / 3.0)
    assert np.allclose(u.astype(float), [-expected, 0.0, expected], atol=1e-12)
    # independent root find from a deliberately different starting point
    oracle = fsolve(lambda x: _force(x), np.array([-1.5, 0.1, 1.2]), full_output=False)
    assert np.allclose(np.sort(oracle), u.astype(float), atol=1e-9)


@pytest.mark.parametrize("n", [2, 5, 13, 37, 88, 150, 200])
def test_force_residuals_and_symmetry(n):
    u = solve_equilibrium(n)
    assert np.abs(_force(u)).max() < 1e-12
    # element-wise antisymmetry is exact by construction, which pins the
    # center of mass; a plain sum only sees summation-order rounding
    assert np.abs(u + u[::-1]).max() == 0.0
    assert abs(float(np.sum(u))) < 1e-15
    assert np.all(np.diff(u) > 0)


def test_two_ion_mode_frequencies():
    # hand-built 2x2 Hessian: d = 2 * 4^{-1/3}, diag 1 + 2/d^3, off -2/d^3 -> 1, sqrt(3)
    u = solve_equilibrium(2)
    freqs, vectors = normal_modes(u)
    assert np.allclose(freqs, [1.0, np.sqrt(3.0)], atol=1e-12)
    assert np.allclose(np.abs(vectors[0]), 1 / np.sqrt(2), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 6, 17, 40, 100])
def test_mode_structure(n):
    chain = build_chain(n)
    # lowest mode: uniform translation at the trap frequency
    assert abs(chain.mode_freqs[0] - 1.0) < 1e-8
    assert np.allclose(chain.mode_vectors[0], 1 / np.sqrt(n), atol=1e-8)
    # second mode: breathing at sqrt(3), eigenvector parallel to positions
    assert abs(chain.mode_freqs[1] - np.sqrt(3.0)) < 1e-8
    cosang = np.dot(chain.mode_vectors[1], chain.positions) / np.linalg.norm(chain.positions)
    assert abs(abs(cosang) - 1.0) < 1e-10
    # orthonormality
    gram = chain.mode_vectors @ chain.mode_vectors.T
    assert np.abs(gram - np.eye(n)).max() < 1e-10
    # frequencies ascending
    assert np.all(np.diff(chain.mode_freqs) > 0)


def test_coupling_vectors():
    chain = build_chain(4)
    assert np.allclose(coupling_vector(chain, MODE_CM), [0.5, 0.5, 0.5, 0.5], atol=1e-14)
    chain2 = build_chain(2)
    b = coupling_vector(chain2, MODE_B)
    assert np.allclose(b, [-1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-12)
    for n in (2, 7, 30):
        c = build_chain(n)
        assert abs(np.sum(coupling_vector(c, MODE_B))) < 1e-12
        assert abs(np.linalg.norm(c.couplings_b) - 1.0) < 1e-12
        assert abs(np.linalg.norm(c.couplings_cm) - 1.0) < 1e-12
        # B coupling vector is the breathing eigenvector up to global sign
        diff = min(
            np.abs(c.couplings_b - c.mode_vectors[1]).max(),
            np.abs(c.couplings_b + c.mode_vectors[1]).max(),
        )
        assert diff < 1e-8


def test_eigenvector_sign_convention_reproducible():
    a = build_chain(9)
    b = build_chain(9)
    assert np.array_equal(a.mode_vectors, b.mode_vectors)
    for v in a.mode_vectors:
        assert v[np.argmax(np.abs(v))] > 0


def test_single_ion_rejected():
    with pytest.raises(IonsqError):
        solve_equilibrium(1)


def test_unknown_mode_rejected():
    chain = build_chain(3)
    with pytest.raises(IonsqError):
        coupling_vector(chain, "zigzag")

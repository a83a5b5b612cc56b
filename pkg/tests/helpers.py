"""Dense-matrix oracles and small closed forms used across the test suite.

Everything here is built independently of the package's matrix-free paths:
operators come from explicit np.kron products in the documented basis order
(spin index major with ion 1 in the least significant bit, boson slots minor,
single-qubit matrices in (down, up) ordering).
"""

import numpy as np

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)   # (down, up) ordering
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # up -> down
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)


def ladder(m: int) -> np.ndarray:
    a = np.zeros((m, m), dtype=complex)
    a[np.arange(m - 1), np.arange(1, m)] = np.sqrt(np.arange(1, m))
    return a


def dense_spin_op(n_ions: int, q: int, op2: np.ndarray) -> np.ndarray:
    """Single-ion operator on bit q embedded in the 2^N spin space."""
    return np.kron(np.eye(1 << (n_ions - 1 - q)), np.kron(op2, np.eye(1 << q)))


def dense_joint(spin_mat: np.ndarray, boson_mats) -> np.ndarray:
    out = spin_mat
    for b in boson_mats:
        out = np.kron(out, b)
    return out


def dense_weighted_spin(n_ions: int, axis: str, weights, fock_dims) -> np.ndarray:
    op2 = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}[axis]
    total = sum(
        0.5 * w * dense_spin_op(n_ions, q, op2) for q, w in enumerate(weights)
    )
    return dense_joint(total, [np.eye(m) for m in fock_dims])


def dense_tc(n_ions: int, couplings, fock_dims, slot: int) -> np.ndarray:
    dim_s = 1 << n_ions
    total = np.zeros((dim_s * int(np.prod(fock_dims)),) * 2, dtype=complex)
    for q, g in enumerate(couplings):
        sm = dense_spin_op(n_ions, q, SIGMA_MINUS)
        sp = dense_spin_op(n_ions, q, SIGMA_PLUS)
        for term_spin, term_boson in ((sm, "adag"), (sp, "a")):
            mats = []
            for k, m in enumerate(fock_dims):
                if k == slot:
                    a = ladder(m)
                    mats.append(a.conj().T if term_boson == "adag" else a)
                else:
                    mats.append(np.eye(m))
            total += g * dense_joint(term_spin, mats)
    return total


def operator_matrix(op, dim: int) -> np.ndarray:
    """Materialize a matrix-free operator by applying it to basis vectors."""
    cols = []
    for i in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[i] = 1.0
        cols.append(op.apply(e))
    return np.array(cols).T


def random_state(dim: int, rng) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)

import numpy as np
from hypothesis import given

from cmaring.wirtinger import (complex_gradient, complex_hessians, from_real, hermitian_real_matrix,
                               real_hessian, to_real)
from conftest import complex_matrices


@given(complex_matrices(3))
def test_real_complex_round_trip(M):
    z = M[0]
    assert np.allclose(from_real(to_real(z)), z)


@given(complex_matrices(2), complex_matrices(2))
def test_hessian_round_trip(H, S):
    herm = 0.5 * (H + H.conj().T)
    holo = 0.5 * (S + S.T)
    h2, s2 = complex_hessians(real_hessian(herm, holo))
    assert np.allclose(h2, herm) and np.allclose(s2, holo)


def test_gradient_of_squared_modulus():
    # |z|^2 at z = (1+2i, 0): Phi_1 = conj(z_1)
    z = np.array([1 + 2j, 0])
    g = 2 * to_real(z)
    assert np.allclose(complex_gradient(g), z.conj())


@given(complex_matrices(2))
def test_hermitian_real_matrix_represents_form(H):
    H = H @ H.conj().T
    z = np.array([0.3 - 1j, 2 + 0.5j])
    u = to_real(z)
    assert np.isclose(u @ hermitian_real_matrix(H) @ u, (z.conj() @ H @ z).real)

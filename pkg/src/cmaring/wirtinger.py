"""Conversions between real (x, y) coordinates and Wirtinger derivatives.

Real coordinates of z in C^n are ordered u = (x_1..x_n, y_1..y_n).
"""

import numpy as np


def to_real(z):
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, z.imag], axis=-1)


def from_real(u):
    u = np.asarray(u, dtype=float)
    n = u.shape[-1] // 2
    return u[..., :n] + 1j * u[..., n:]


def complex_gradient(g):
    """Phi_i = (Phi_x - i Phi_y) / 2 from a real gradient (..., 2n)."""
    n = g.shape[-1] // 2
    return 0.5 * (g[..., :n] - 1j * g[..., n:])


def complex_hessians(Hr):
    """(Phi_{i jbar}, Phi_{ij}) from a real Hessian (..., 2n, 2n)."""
    n = Hr.shape[-1] // 2
    xx = Hr[..., :n, :n]
    yy = Hr[..., n:, n:]
    xy = Hr[..., :n, n:]
    yx = Hr[..., n:, :n]
    herm = 0.25 * (xx + yy + 1j * (xy - yx))
    holo = 0.25 * (xx - yy - 1j * (xy + yx))
    return herm, holo


def real_hessian(herm, holo):
    """Inverse of complex_hessians."""
    xx = 2.0 * (herm.real + holo.real)
    yy = 2.0 * (herm.real - holo.real)
    xy = 2.0 * (herm.imag - holo.imag)
    yx = -2.0 * (herm.imag + holo.imag)
    top = np.concatenate([xx, xy], axis=-1)
    bot = np.concatenate([yx, yy], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def hermitian_real_matrix(H):
    """Real symmetric M with (z^H H z) = u^T M u."""
    H = np.asarray(H, dtype=complex)
    return np.block([[H.real, -H.imag], [H.imag, H.real]])

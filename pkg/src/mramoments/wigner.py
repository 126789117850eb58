"""SO(3) utilities: unit quaternions, zyz Euler angles, Wigner matrices and
real spherical harmonics.

Conventions
-----------
* A rotation acts on functions by ``(g.f)(x) = f(R^{-1} x)``.
* ``R = Rz(alpha) Ry(beta) Rz(gamma)`` (active, zyz).
* Complex harmonics carry the Condon-Shortley phase; ``Y_l^m(R^{-1}x) =
  sum_m' Y_l^m'(x) D^l_{m'm}(R)`` with ``D_{m'm} = e^{-i m' alpha}
  d_{m'm}(beta) e^{-i m gamma}``.
* Real harmonics are ordered ``m = -l..l``; ``m > 0`` are the cosine
  harmonics and ``m < 0`` the sine harmonics, both with positive
  normalisation (degree 1 is proportional to ``(y, z, x)``).
"""

from functools import lru_cache
from math import comb, factorial

import numpy as np
from scipy.special import lpmv

from .seeding import as_rng


def random_quaternions(n, rng):
    """Haar-uniform unit quaternions ``(w, x, y, z)``: normalised Gaussians."""
    rng = as_rng(rng)
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def quaternion_multiply(q1, q2):
    """Hamilton product ``q1 * q2`` (rotation by ``q2`` first)."""
    w1, x1, y1, z1 = np.moveaxis(np.asarray(q1, dtype=float), -1, 0)
    w2, x2, y2, z2 = np.moveaxis(np.asarray(q2, dtype=float), -1, 0)
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)


def quaternion_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - z * w)
    r[..., 0, 2] = 2 * (x * z + y * w)
    r[..., 1, 0] = 2 * (x * y + z * w)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - x * w)
    r[..., 2, 0] = 2 * (x * z - y * w)
    r[..., 2, 1] = 2 * (y * z + x * w)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def matrix_to_euler_zyz(r, eps=1e-12):
    """zyz Euler angles ``(alpha, beta, gamma)`` of rotation matrices.

    At the poles (``sin beta = 0``) gamma is set to zero.
    """
    r = np.asarray(r, dtype=float)
    beta = np.arccos(np.clip(r[..., 2, 2], -1.0, 1.0))
    sb = np.sqrt(r[..., 0, 2] ** 2 + r[..., 1, 2] ** 2)
    regular = sb > eps
    alpha = np.where(regular, np.arctan2(r[..., 1, 2], r[..., 0, 2]), 0.0)
    gamma = np.where(regular, np.arctan2(r[..., 2, 1], -r[..., 2, 0]), 0.0)
    north = ~regular & (r[..., 2, 2] > 0)
    south = ~regular & (r[..., 2, 2] <= 0)
    alpha = np.where(north, np.arctan2(r[..., 1, 0], r[..., 0, 0]), alpha)
    alpha = np.where(south, np.arctan2(-r[..., 0, 1], r[..., 1, 1]), alpha)
    beta = np.where(north, 0.0, np.where(south, np.pi, beta))
    return alpha, beta, gamma


def euler_zyz_to_matrix(alpha, beta, gamma):
    def rz(t):
        c, s = np.cos(t), np.sin(t)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    c, s = np.cos(beta), np.sin(beta)
    ry = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return rz(alpha) @ ry @ rz(gamma)


def jacobi(n, a, b, x):
    """Jacobi polynomial ``P_n^{(a,b)}(x)`` by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev
    p = (a + 1) + (a + b + 2) * (x - 1) / 2
    for k in range(2, n + 1):
        s = 2 * k + a + b
        c1 = 2 * k * (k + a + b) * (s - 2)
        c2 = (s - 1) * (s * (s - 2) * x + a * a - b * b)
        c3 = 2 * (k + a - 1) * (k + b - 1) * s
        p_prev, p = p, (c2 * p - c3 * p_prev) / c1
    return p


def wigner_small_d(ell, beta):
    """``d^l_{m'm}(beta)`` for all ``m', m``; shape ``beta.shape + (2l+1, 2l+1)``.

    Uses the Jacobi-polynomial form with the degree chosen as
    ``k = min(l+m, l-m, l+m', l-m')``.
    """
    beta = np.asarray(beta, dtype=float)
    half_s, half_c = np.sin(beta / 2), np.cos(beta / 2)
    cb = np.cos(beta)
    d = np.empty(beta.shape + (2 * ell + 1, 2 * ell + 1))
    for mp in range(-ell, ell + 1):
        for m in range(-ell, ell + 1):
            k = min(ell + m, ell - m, ell + mp, ell - mp)
            if k == ell + m:
                a, lam = mp - m, mp - m
            elif k == ell - m:
                a, lam = m - mp, 0
            elif k == ell + mp:
                a, lam = m - mp, 0
            else:
                a, lam = mp - m, mp - m
            b = 2 * ell - 2 * k - a
            coef = (-1) ** lam * np.sqrt(comb(2 * ell - k, k + a) / comb(k + b, b))
            d[..., mp + ell, m + ell] = coef * half_s ** a * half_c ** b * jacobi(k, a, b, cb)
    return d


def wigner_D(ell, alpha, beta, gamma):
    """Complex Wigner-D matrices for zyz Euler angles (broadcast over angles)."""
    m = np.arange(-ell, ell + 1)
    alpha, beta, gamma = (np.asarray(t, dtype=float) for t in (alpha, beta, gamma))
    left = np.exp(-1j * np.multiply.outer(alpha, m))
    right = np.exp(-1j * np.multiply.outer(gamma, m))
    return left[..., :, None] * wigner_small_d(ell, beta) * right[..., None, :]


@lru_cache(maxsize=None)
def real_to_complex(ell):
    """Matrix ``U`` with ``Yreal_m = sum_m' U[m, m'] Y_l^{m'}``."""
    n = 2 * ell + 1
    u = np.zeros((n, n), dtype=complex)
    s = 1 / np.sqrt(2)
    u[ell, ell] = 1.0
    for mu in range(1, ell + 1):
        u[ell + mu, ell + mu] = (-1) ** mu * s
        u[ell + mu, ell - mu] = s
        u[ell - mu, ell - mu] = 1j * s
        u[ell - mu, ell + mu] = -1j * (-1) ** mu * s
    u.setflags(write=False)
    return u


def wigner_D_real(ell, q):
    """Real orthogonal Wigner matrices acting on real-harmonic coefficients.

    ``q`` is one quaternion ``(4,)`` or a stack ``(n, 4)``.
    """
    alpha, beta, gamma = matrix_to_euler_zyz(quaternion_to_matrix(q))
    u = real_to_complex(ell)
    d = np.conj(u) @ wigner_D(ell, alpha, beta, gamma) @ u.T
    return d.real


def _sh_norm(ell, m):
    return np.sqrt((2 * ell + 1) / (4 * np.pi) * factorial(ell - m) / factorial(ell + m))


def real_sph_harm(ell, theta, phi):
    """Real orthonormal harmonics of degree ``ell`` at polar ``theta``,
    azimuth ``phi``; last axis indexes ``m = -l..l``."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    ct = np.cos(theta)
    out = np.empty(theta.shape + (2 * ell + 1,))
    out[..., ell] = _sh_norm(ell, 0) * lpmv(0, ell, ct)
    for mu in range(1, ell + 1):
        # lpmv carries the Condon-Shortley phase; strip it
        p = (-1) ** mu * lpmv(mu, ell, ct) * np.sqrt(2) * _sh_norm(ell, mu)
        out[..., ell + mu] = p * np.cos(mu * phi)
        out[..., ell - mu] = p * np.sin(mu * phi)
    return out


def complex_sph_harm(ell, theta, phi):
    """Complex orthonormal harmonics (Condon-Shortley), last axis ``m = -l..l``."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    ct = np.cos(theta)
    out = np.empty(theta.shape + (2 * ell + 1,), dtype=complex)
    for m in range(0, ell + 1):
        y = _sh_norm(ell, m) * lpmv(m, ell, ct) * np.exp(1j * m * phi)
        out[..., ell + m] = y
        out[..., ell - m] = (-1) ** m * np.conj(y)
    return out


def cartesian_to_sphere(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    theta = np.arccos(np.clip(x[..., 2] / r, -1, 1))
    phi = np.arctan2(x[..., 1], x[..., 0])
    return theta, phi

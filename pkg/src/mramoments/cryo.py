"""Cryo-EM shell model: equatorial slices and Legendre inversion of the
projected second moment.

For real orthonormal harmonics the addition theorem gives, on the equator,
``sum_m Y_l^m(pi/2, phi1) Y_l^m(pi/2, phi2) = (2l+1)/(4 pi) P_l(cos(phi1 - phi2))``.
Combined with the ``1/(2l+1)`` Schur factor, the projected moment is

    m2[r1, r2](dphi) = (1 / 4 pi) * sum_l B_l[r1, r2] P_l(cos dphi),

with ``B_l = G_l^T``. The ``4 pi`` is checked by :func:`calibrate_legendre`.
"""

import json
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import eval_legendre

from .moments import GramMoment, population_moment_matrix
from .rep import BlockSignal, Field, IsotypicBlock, Parity, RepresentationSpec, ValidationError
from .wigner import real_sph_harm

LEGENDRE_CALIBRATION = 4 * np.pi
NODE_TOL = 1e-12


def cryo_spec(ell_max, shells):
    blocks = tuple(IsotypicBlock(2 * l + 1, shells, Parity.ODD if l % 2 else Parity.EVEN)
                   for l in range(ell_max + 1))
    return RepresentationSpec(blocks, Field.REAL)


def slice_values_operator(model, azimuth):
    """Values of each shell's function on the equator at the given azimuths.

    Rows ``(shell, azimuth)`` shell-major; columns flat signal coordinates.
    """
    spec = model.spec
    shells = model.params["R"]
    azimuth = np.asarray(azimuth, dtype=float)
    na = azimuth.size
    op = np.zeros((shells * na, spec.N), dtype=complex)
    for ell, (off, b) in enumerate(zip(spec.offsets, spec.blocks)):
        y = real_sph_harm(ell, np.full(na, np.pi / 2), azimuth)  # (na, 2l+1)
        for r in range(shells):
            op[r * na:(r + 1) * na, off + r * b.dim:off + (r + 1) * b.dim] = y
    return op


def slice_operator(model):
    """Flat coefficients -> per-shell azimuthal Fourier coefficients.

    ``c_k = (1/P) sum_p s(phi_p) exp(-i k phi_p)`` on ``P`` equispaced
    azimuths, bins in FFT order.
    """
    p = model.params["P"]
    shells = model.params["R"]
    azimuth = 2 * np.pi * np.arange(p) / p
    values = slice_values_operator(model, azimuth)
    dft = np.exp(-2j * np.pi * np.outer(np.arange(p), np.arange(p)) / p) / p
    out = np.empty_like(values)
    for r in range(shells):
        out[r * p:(r + 1) * p] = dft @ values[r * p:(r + 1) * p]
    return out


@dataclass(frozen=True, eq=False)
class ProjectedMoment:
    """Azimuth-invariant projected moment ``values[r1, r2, j]`` sampled at
    ``dphi_j = arccos(nodes[j])``."""

    values: np.ndarray
    nodes: np.ndarray

    @property
    def angles(self):
        return np.arccos(self.nodes)

    @classmethod
    def gauss_grid(cls, n_nodes):
        return leggauss(n_nodes)[0]

    def to_json(self):
        v = np.asarray(self.values, dtype=complex)
        return json.dumps({
            "nodes": self.nodes.tolist(),
            "angles": self.angles.tolist(),
            "values": np.stack([v.real, v.imag], axis=-1).tolist(),
        })

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        v = np.asarray(doc["values"], dtype=float)
        return cls(v[..., 0] + 1j * v[..., 1], np.asarray(doc["nodes"], dtype=float))


def projected_table_from_moment(moment, model, n_nodes=None):
    """Average an observation-domain moment over common azimuthal shifts and
    evaluate it at Gauss-Legendre angles.

    Only frequency bins ``|k| <= L`` carry signal; the others are dropped.
    """
    ell_max, p, shells = model.params["L"], model.params["P"], model.params["R"]
    n_nodes = ell_max + 1 if n_nodes is None else n_nodes
    nodes = ProjectedMoment.gauss_grid(n_nodes)
    freqs = np.fft.fftfreq(p, 1.0 / p).round().astype(int)
    keep = np.flatnonzero(np.abs(freqs) <= ell_max)
    m = np.asarray(moment).reshape(shells, p, shells, p)
    diag = m[:, keep, :, keep]  # (k, r1, r2) after fancy indexing
    phase = np.exp(1j * np.outer(freqs[keep], np.arccos(nodes)))  # (k, j)
    values = np.einsum("kab,kj->abj", diag, phase)
    return ProjectedMoment(values, nodes)


def _legendre_coefficients(table, ell_max):
    nodes = np.asarray(table.nodes, dtype=float)
    n = nodes.size
    if n < ell_max + 1:
        raise ValidationError(f"{n} nodes cannot resolve degree {ell_max}; need >= {ell_max + 1}")
    ref, weights = leggauss(n)
    if np.abs(np.sort(nodes) - ref).max() > NODE_TOL:
        raise ValidationError("projected moment must be sampled at Gauss-Legendre nodes")
    order = np.argsort(nodes)
    nodes, values = nodes[order], np.asarray(table.values)[..., order]
    out = []
    for ell in range(ell_max + 1):
        w = weights * eval_legendre(ell, nodes) * (2 * ell + 1) / 2
        out.append(values @ w)
    return out


def legendre_invert(table, ell_max, calibration=LEGENDRE_CALIBRATION):
    """Recover the per-degree Grams from an azimuth-invariant projected moment.

    ``B_l = C (2l+1)/2 int m2(u) P_l(u) du`` with Gauss-Legendre quadrature
    (exact for degree <= 2L) and ``C`` the calibration constant.
    """
    coeffs = _legendre_coefficients(table, ell_max)
    shells = np.asarray(table.values).shape[0]
    grams = []
    for b in coeffs:
        g = calibration * b.T
        g = (g + g.conj().T) / 2
        grams.append(g.real)
    return GramMoment(cryo_spec(ell_max, shells), tuple(grams))


def realized_projected_table(f, model, n_nodes=None):
    """Projected moment of ``f`` evaluated directly from harmonic values at
    ``(phi1, phi2) = (dphi_j, 0)``; does not use the addition theorem."""
    ell_max = model.params["L"]
    nodes = ProjectedMoment.gauss_grid(ell_max + 1 if n_nodes is None else n_nodes)
    angles = np.arccos(nodes)
    shells = model.params["R"]
    sigma = population_moment_matrix(f)
    left = slice_values_operator(model, angles)
    right = slice_values_operator(model, np.zeros(1))
    table = (left @ sigma @ right.conj().T).reshape(shells, angles.size, shells)
    return ProjectedMoment(table.transpose(0, 2, 1), nodes)


def calibrate_legendre(model):
    """Per-degree constant mapping raw Legendre coefficients to Grams.

    Uses a single-shell, single-degree test signal for each ``l``. Every
    entry should equal ``4 pi``.
    """
    from .models import build_model
    ell_max = model.params["L"]
    probe = build_model("cryo_em", {"L": ell_max, "R": 1, "P": model.params["P"]})
    out = np.empty(ell_max + 1)
    for ell in range(ell_max + 1):
        mats = []
        for l2, b in enumerate(probe.spec.blocks):
            a = np.zeros((b.dim, 1), dtype=complex)
            if l2 == ell:
                a[0, 0] = probe.spec.block_phase(l2)
            mats.append(a)
        f = BlockSignal(probe.spec, tuple(mats))
        raw = _legendre_coefficients(realized_projected_table(f, probe), ell_max)
        out[ell] = 1.0 / raw[ell][0, 0].real
    return out

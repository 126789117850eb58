"""Second moments: closed-form Gram matrices, empirical estimates and
distances.

Convention: the stored Gram of block ``l`` is the Hermitian
``G_l = A_l^* A_l``, i.e. ``G_l[i, j] = <col_j, col_i>`` with the inner
product linear in the first slot. The per-shell matrix written as
``B_l[r1, r2] = sum_m A[m, r1] conj(A[m, r2])`` in the cryo-EM literature is
``G_l.T`` (``== conj(G_l)``). The ``1/N_l`` Schur constant is not stored;
:func:`population_moment_matrix` puts it back.
"""

from dataclasses import dataclass

import numpy as np

from .rep import BlockSignal, ShapeError, ValidationError, flatten, random_ambiguity
from .seeding import STREAM_AMBIGUITY, derive_rng

CHUNK = 1024
HERMITIAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GramMoment:
    spec: object
    grams: tuple

    def __post_init__(self):
        grams = tuple(np.array(g, dtype=complex) for g in self.grams)
        if len(grams) != self.spec.L:
            raise ShapeError(f"expected {self.spec.L} Gram matrices, got {len(grams)}")
        for i, (g, b) in enumerate(zip(grams, self.spec.blocks)):
            if g.shape != (b.mult, b.mult):
                raise ShapeError(f"Gram {i}: expected {(b.mult, b.mult)}, got {g.shape}")
            scale = np.linalg.norm(g)
            if np.linalg.norm(g - g.conj().T) > HERMITIAN_TOL * max(scale, 1e-300):
                raise ValidationError(f"Gram {i} is not Hermitian")
            g.setflags(write=False)
        object.__setattr__(self, "grams", grams)

    def __getitem__(self, i):
        return self.grams[i]

    def __len__(self):
        return len(self.grams)

    def is_psd(self, tol=HERMITIAN_TOL):
        for g in self.grams:
            w = np.linalg.eigvalsh(g)
            if w[0] < -tol * max(abs(w[-1]), 1e-300):
                return False
        return True

    def trace(self):
        return float(sum(np.trace(g).real for g in self.grams))


@dataclass(frozen=True, eq=False)
class ObservationBatch:
    model: object
    samples: np.ndarray
    sigma: float
    seed: int

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.samples, dtype=complex))
        if y.shape[0] < 1:
            raise ValidationError("an observation batch needs at least one sample")
        if self.sigma < 0:
            raise ValidationError("sigma must be nonnegative")
        object.__setattr__(self, "samples", y)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]


def population_gram(f):
    """Per-block Hermitian Grams ``A_l^* A_l`` (exact, no sampling)."""
    return GramMoment(f.spec, tuple(_hermitize(a.conj().T @ a) for a in f.matrices))


def _hermitize(g):
    return (g + g.conj().T) / 2


def population_moment_matrix(f):
    """Haar average of ``flat(g.f) flat(g.f)^*`` in flat coordinates.

    By Schur's lemma this is block diagonal with block ``kron(G_l^T, I)/N_l``.
    """
    spec = f.spec
    out = np.zeros((spec.N, spec.N), dtype=complex)
    for off, a, b in zip(spec.offsets, f.matrices, spec.blocks):
        g = a.conj().T @ a
        out[off:off + b.size, off:off + b.size] = np.kron(g.T, np.eye(b.dim)) / b.dim
    return out


def chunk_moment(y):
    """Unnormalised ``sum_i y_i y_i^*`` over the rows of ``y``."""
    return y.T @ y.conj()


def empirical_second_moment(batch, threads=1):
    """``(1/n) sum_i y_i y_i^*`` accumulated in fixed chunks of 1024 rows.

    Chunks may run on several threads; partial sums are always reduced in
    chunk order, so the result does not depend on ``threads``.
    """
    y = batch.samples if isinstance(batch, ObservationBatch) else np.atleast_2d(batch)
    n = y.shape[0]
    if n < 1:
        raise ValidationError("empty observation batch")
    chunks = [y[i:i + CHUNK] for i in range(0, n, CHUNK)]
    if threads > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(chunk_moment, chunks))
    else:
        parts = [chunk_moment(c) for c in chunks]
    total = parts[0].copy()
    for p in parts[1:]:
        total += p
    total /= n
    return (total + total.conj().T) / 2


def debias(moment, sigma):
    """Remove the additive noise term ``sigma^2 I``."""
    moment = np.asarray(moment)
    if moment.ndim != 2 or moment.shape[0] != moment.shape[1]:
        raise ValidationError("moment must be a square matrix")
    return moment - sigma ** 2 * np.eye(moment.shape[0])


def project_to_grams(moment, model):
    """Least-squares Gram estimate from an observation-domain moment.

    Unprojected models: ``G_l^T[r1, r2] = sum_m M[(r1, m), (r2, m)]`` (the
    inverse of the Schur form). ``tomography_2d``: the single stacked Gram.
    ``cryo_em``: azimuthal averaging, then Legendre inversion.
    """
    moment = np.asarray(moment, dtype=complex)
    d = model.observation_dim
    if moment.shape != (d, d):
        raise ValidationError(f"moment is {moment.shape}, model observes dimension {d}")
    spec = model.moment_spec
    if model.name == "cryo_em":
        from .cryo import legendre_invert, projected_table_from_moment
        return legendre_invert(projected_table_from_moment(moment, model), model.params["L"])
    if model.name == "tomography_2d":
        grams = (moment.T,)
    else:
        grams = []
        for off, b in zip(spec.offsets, spec.blocks):
            sub = moment[off:off + b.size, off:off + b.size]
            gt = np.einsum("imjm->ij", sub.reshape(b.mult, b.dim, b.mult, b.dim))
            grams.append(gt.T)
    grams = [_hermitize(g) for g in grams]
    if spec.is_real:
        grams = [g.real for g in grams]
    return GramMoment(spec, tuple(grams))


def gram_distance(a, b):
    """``sqrt(sum_l ||G_l^a - G_l^b||_F^2)``."""
    if a.spec != b.spec:
        raise ValidationError("Gram moments belong to different specs")
    return float(np.sqrt(sum(np.linalg.norm(x - y) ** 2 for x, y in zip(a.grams, b.grams))))


def invariance_check(f, trials, seed, elements=None):
    """Largest Gram change over random ambiguity elements applied to ``f``.

    ``elements`` overrides the random draws (used for controls).
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    base = population_gram(f)
    if elements is None:
        elements = (random_ambiguity(f.spec, derive_rng(seed, STREAM_AMBIGUITY, t)) for t in range(trials))
    worst = 0.0
    for h in elements:
        moved = BlockSignal(f.spec, tuple(u @ a for u, a in zip(h.factors, f.matrices)))
        worst = max(worst, gram_distance(population_gram(moved), base))
    return worst


def signal_distance_up_to_phase(a, b):
    """``min_phase ||a - phase * b||`` over unit complex scalars (complex
    field) or over ``+-1`` (real field)."""
    if a.spec != b.spec:
        raise ValidationError("signals belong to different specs")
    x, y = flatten(a), flatten(b)
    inner = np.vdot(y, x)
    if a.spec.is_real:
        phase = -1.0 if inner.real < 0 else 1.0
    else:
        phase = inner / abs(inner) if abs(inner) > 0 else 1.0
    return float(np.linalg.norm(x - phase * y))


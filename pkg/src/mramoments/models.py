"""Concrete multi-reference alignment models.

==============  =================================  ======================
model           blocks (dim, mult)                  observation
==============  =================================  ======================
cyclic          N x (1, 1), frequencies 0..N-1      Fourier coefficients
dihedral        (1,1), (2,1)..., [(1,1)]            Fourier coefficients
rotated_images  (1, R) per k = -L'..L'              coefficients a_{k,r}
tomography_2d   as rotated_images                   slice theta = 0 (R values)
cryo_em         (2l+1, R), l = 0..L, real field     equatorial slice,
                                                    P azimuthal coefficients
                                                    per shell
==============  =================================  ======================

Noise is added in the observation coefficient domain as circular complex
Gaussian noise with ``E[eps eps^*] = sigma^2 I``.
"""

from dataclasses import dataclass, field

import numpy as np

from .moments import CHUNK, ObservationBatch, chunk_moment, population_moment_matrix
from .rep import (BlockSignal, Field, ValidationError, RepresentationSpec,
                  IsotypicBlock, Parity, flatten, unflatten)
from .seeding import STREAM_OBSERVATIONS, as_rng, derive_rng
from .wigner import quaternion_multiply, random_quaternions, wigner_D_real

MODEL_NAMES = ("cyclic", "dihedral", "rotated_images", "tomography_2d", "cryo_em")


@dataclass(frozen=True, eq=False)
class ModelInstance:
    name: str
    spec: RepresentationSpec
    params: dict
    observation_dim: int
    moment_spec: RepresentationSpec = None
    # per flat entry: integer weight of the abelian action (cyclic/dihedral
    # frequency, rotated-image k); unused for cryo_em
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.moment_spec is None:
            object.__setattr__(self, "moment_spec", self.spec)

    @property
    def projected(self):
        return self.name in ("tomography_2d", "cryo_em")


@dataclass(frozen=True, eq=False)
class GroupElement:
    """``cyclic``: shift index; ``dihedral``: (shift, reflect); SO(2):
    angle; SO(3): unit quaternion (w, x, y, z)."""

    kind: str
    value: object

    def __post_init__(self):
        if self.kind == "so3":
            q = np.asarray(self.value, dtype=float)
            if abs(np.linalg.norm(q) - 1) > 1e-12:
                raise ValidationError("quaternion must have unit norm")
            object.__setattr__(self, "value", q)


def _require_int(params, key, minimum=1):
    if key not in params:
        raise ValidationError(f"missing model parameter {key!r}")
    v = params[key]
    if isinstance(v, bool) or int(v) != v or v < minimum:
        raise ValidationError(f"parameter {key!r} must be an integer >= {minimum}, got {v!r}")
    return int(v)


def build_model(name, params=None, **kw):
    params = dict(params or {}, **kw)
    params.pop("model", None)
    if name == "cyclic":
        n = _require_int(params, "N")
        spec = RepresentationSpec.from_pairs([(1, 1)] * n)
        return ModelInstance(name, spec, {"N": n}, n, weights=np.arange(n))
    if name == "dihedral":
        n = _require_int(params, "N")
        freqs = [[0]] + [[l, n - l] for l in range(1, (n + 1) // 2)]
        if n % 2 == 0 and n > 1:
            freqs.append([n // 2])
        spec = RepresentationSpec.from_pairs([(len(fr), 1) for fr in freqs])
        return ModelInstance(name, spec, {"N": n}, n, weights=np.concatenate(freqs))
    if name in ("rotated_images", "tomography_2d"):
        lp = _require_int(params, "L_prime", 0)
        r = _require_int(params, "R")
        n_freq = 2 * lp + 1
        spec = RepresentationSpec.from_pairs([(1, r)] * n_freq)
        weights = np.repeat(np.arange(-lp, lp + 1), r)
        if name == "rotated_images":
            return ModelInstance(name, spec, {"L_prime": lp, "R": r}, n_freq * r, weights=weights)
        moment_spec = RepresentationSpec.from_pairs([(n_freq, r)])
        return ModelInstance(name, spec, {"L_prime": lp, "R": r}, r, moment_spec, weights)
    if name == "cryo_em":
        ell_max = _require_int(params, "L", 0)
        r = _require_int(params, "R")
        p = params.get("P")
        p = 2 * ell_max + 2 if p is None else _require_int(params, "P")
        if p < 2 * ell_max + 1:
            raise ValidationError(f"azimuthal grid P={p} must be >= 2L+1 = {2 * ell_max + 1}")
        blocks = tuple(IsotypicBlock(2 * l + 1, r, Parity.ODD if l % 2 else Parity.EVEN)
                       for l in range(ell_max + 1))
        spec = RepresentationSpec(blocks, Field.REAL)
        return ModelInstance(name, spec, {"L": ell_max, "R": r, "P": p}, r * p)
    raise ValidationError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")


def model_from_config(cfg):
    return build_model(cfg["model"], {k: v for k, v in cfg.items() if k in ("N", "L", "L_prime", "R", "P")})


def _kind(model):
    return {"cyclic": "cyclic", "dihedral": "dihedral", "rotated_images": "so2",
            "tomography_2d": "so2", "cryo_em": "so3"}[model.name]


def sample_groups(model, n, rng):
    """``n`` Haar samples as a raw array (indices, pairs, angles or quaternions)."""
    rng = as_rng(rng)
    kind = _kind(model)
    if kind == "cyclic":
        return rng.integers(0, model.params["N"], size=n)
    if kind == "dihedral":
        return np.stack([rng.integers(0, model.params["N"], size=n), rng.integers(0, 2, size=n)], axis=1)
    if kind == "so2":
        return rng.uniform(0, 2 * np.pi, size=n)
    return random_quaternions(n, rng)


def sample_group(model, rng):
    raw = sample_groups(model, 1, rng)[0]
    kind = _kind(model)
    if kind == "dihedral":
        raw = (int(raw[0]), int(raw[1]))
    elif kind == "cyclic":
        raw = int(raw)
    elif kind == "so2":
        raw = float(raw)
    return GroupElement(kind, raw)


def identity_element(model):
    kind = _kind(model)
    return GroupElement(kind, {"cyclic": 0, "dihedral": (0, 0), "so2": 0.0,
                               "so3": np.array([1.0, 0, 0, 0])}[kind])


def compose(model, g2, g1):
    """Group product ``g2 g1`` (``g1`` acts first)."""
    kind = _kind(model)
    if kind == "cyclic":
        return GroupElement(kind, (g2.value + g1.value) % model.params["N"])
    if kind == "dihedral":
        (j2, b2), (j1, b1) = g2.value, g1.value
        return GroupElement(kind, ((j2 + (-1) ** b2 * j1) % model.params["N"], b2 ^ b1))
    if kind == "so2":
        return GroupElement(kind, (g2.value + g1.value) % (2 * np.pi))
    return GroupElement(kind, quaternion_multiply(g2.value, g1.value))


def _reflection_permutation(model):
    perm = np.arange(model.spec.N)
    for off, b in zip(model.spec.offsets, model.spec.blocks):
        if b.dim == 2:
            perm[off], perm[off + 1] = off + 1, off
    return perm


def act_many(model, raw, f):
    """Flat coordinates of ``g_i . f`` for a stack of raw group samples;
    shape ``(n, N)``."""
    x = flatten(f)
    kind = _kind(model)
    if kind == "cyclic":
        n = model.params["N"]
        return np.exp(2j * np.pi * np.outer(raw, model.weights) / n) * x
    if kind == "dihedral":
        n = model.params["N"]
        raw = np.atleast_2d(raw)
        xs = np.where(raw[:, 1:2] == 1, x[_reflection_permutation(model)], x)
        return np.exp(2j * np.pi * np.outer(raw[:, 0], model.weights) / n) * xs
    if kind == "so2":
        return np.exp(-1j * np.outer(raw, model.weights)) * x
    q = np.atleast_2d(raw)
    out = np.empty((q.shape[0], model.spec.N), dtype=complex)
    for ell, (off, a, b) in enumerate(zip(model.spec.offsets, f.matrices, model.spec.blocks)):
        rotated = wigner_D_real(ell, q) @ a
        out[:, off:off + b.size] = rotated.transpose(0, 2, 1).reshape(q.shape[0], -1)
    return out


def act(model, g, f):
    raw = g.value
    if g.kind == "dihedral":
        raw = np.array([raw])
    elif g.kind == "so3":
        raw = raw[None, :]
    else:
        raw = np.array([raw])
    return unflatten(f.spec, act_many(model, raw, f)[0], project=True)


def observation_operator(model):
    """Linear map from flat signal coordinates to noiseless observations."""
    if model.name == "tomography_2d":
        r = model.params["R"]
        n_freq = model.spec.L
        return np.tile(np.eye(r), (1, n_freq)).astype(complex)
    if model.name == "cryo_em":
        from .cryo import slice_operator
        return slice_operator(model)
    return np.eye(model.spec.N, dtype=complex)


def _noise(shape, sigma, rng):
    if sigma == 0:
        return 0.0
    return sigma * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def observe_many(model, f, raw, sigma, rng):
    rng = as_rng(rng)
    clean = act_many(model, raw, f)
    if model.projected:
        clean = clean @ observation_operator(model).T
    return clean + _noise(clean.shape, sigma, rng)


def observe(model, f, g, sigma, rng):
    """One observation ``T(g.f) + eps`` (``T`` = identity for unprojected models)."""
    y = observation_operator(model) @ flatten(act(model, g, f))
    return y + _noise(y.shape, sigma, as_rng(rng))


def _chunk(model, f, sigma, seed, index, size):
    rng = derive_rng(seed, STREAM_OBSERVATIONS, index)
    raw = sample_groups(model, size, rng)
    return observe_many(model, f, raw, sigma, rng)


def _chunk_sizes(n):
    return [min(CHUNK, n - i) for i in range(0, n, CHUNK)]


def simulate_batch(model, f, n, sigma, seed):
    """Materialised batch; chunk ``c`` draws from stream ``(seed, OBS, c)``."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    parts = [_chunk(model, f, sigma, seed, c, s) for c, s in enumerate(_chunk_sizes(n))]
    return ObservationBatch(model, np.concatenate(parts), sigma, seed)


def simulate_moment(model, f, n, sigma, seed, threads=1):
    """Streaming ``(1/n) sum y_i y_i^*``; identical to
    ``empirical_second_moment(simulate_batch(...))`` without storing samples."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    sizes = _chunk_sizes(n)

    def work(c):
        return chunk_moment(_chunk(model, f, sigma, seed, c, sizes[c]))

    if threads > 1 and len(sizes) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            parts = pool.map(work, range(len(sizes)))
            total = None
            for p in parts:
                total = p.copy() if total is None else total + p
    else:
        total = None
        for c in range(len(sizes)):
            p = work(c)
            total = p.copy() if total is None else total + p
    total /= n
    return (total + total.conj().T) / 2


def moment_signal(f, model):
    """``f`` as a signal of ``model.moment_spec`` (tomography stacks the
    1 x R frequency rows into one L x R block)."""
    if model.name == "tomography_2d":
        return BlockSignal(model.moment_spec, (np.vstack(f.matrices),))
    return f


def population_observation_moment(f, model):
    """Exact ``E[T(g.f) T(g.f)^*]`` (noise-free) in the observation domain."""
    sigma_full = population_moment_matrix(f)
    if model.name == "tomography_2d":
        a = np.vstack(f.matrices)
        return (a.conj().T @ a).T
    if model.name == "cryo_em":
        t = observation_operator(model)
        return t @ sigma_full @ t.conj().T
    return sigma_full


def domain_operator(model, grid=None):
    """Evaluation of flat coefficients as functions on the model's domain.

    Returns ``(Phi, shape)``: ``Phi @ flat`` gives function values on the
    grid, which reshape to ``shape``.
    """
    if model.name in ("cyclic", "dihedral"):
        n = model.params["N"]
        x = np.arange(n) if grid is None else np.asarray(grid)
        phi = np.exp(2j * np.pi * np.outer(x, model.weights) / n) / np.sqrt(n)
        return phi, (len(x),)
    if model.name in ("rotated_images", "tomography_2d"):
        r = model.params["R"]
        if model.name == "tomography_2d":
            theta = np.zeros(1)
        else:
            theta = np.linspace(0, 2 * np.pi, 4 * model.params["L_prime"] + 4, endpoint=False) \
                if grid is None else np.asarray(grid, dtype=float)
        k = model.weights[::r]
        phi = np.zeros((r * len(theta), model.spec.N), dtype=complex)
        e = np.exp(1j * np.outer(theta, k))
        for shell in range(r):
            phi[shell * len(theta):(shell + 1) * len(theta), shell::r] = e
        return phi, (r, len(theta))
    from .cryo import slice_values_operator
    azimuth = np.linspace(0, 2 * np.pi, model.params["P"], endpoint=False) if grid is None \
        else np.asarray(grid, dtype=float)
    return slice_values_operator(model, azimuth), (model.params["R"], len(azimuth))


def realize_moment_function(f, model, grid=None):
    """Closed-form functional second moment on the domain grid.

    Shape ``(R, R, n, n)`` for shell models (``(R, R)`` for tomography),
    ``(N, N)`` for cyclic/dihedral. Includes the ``1/N_l`` constants.
    """
    phi, shape = domain_operator(model, grid)
    table = phi @ population_moment_matrix(f) @ phi.conj().T
    if model.name == "tomography_2d":
        return table
    if len(shape) == 1:
        return table
    r, n = shape
    return table.reshape(r, n, r, n).transpose(0, 2, 1, 3)


def monte_carlo_moment_function(f, model, n_samples, seed, grid=None):
    """Sampled counterpart of :func:`realize_moment_function`."""
    phi, shape = domain_operator(model, grid)
    acc = None
    for c, size in enumerate(_chunk_sizes(n_samples)):
        raw = sample_groups(model, size, derive_rng(seed, STREAM_OBSERVATIONS, c))
        vals = act_many(model, raw, f) @ phi.T
        part = chunk_moment(vals)
        acc = part if acc is None else acc + part
    table = acc / n_samples
    if model.name == "tomography_2d" or len(shape) == 1:
        return table
    r, n = shape
    return table.reshape(r, n, r, n).transpose(0, 2, 1, 3)

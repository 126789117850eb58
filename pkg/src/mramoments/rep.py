"""Block representations, the second-moment ambiguity group, orbit spans and
sparsity bounds.

A signal in ``V = (+)_l V_l^{R_l}`` is stored as one ``N_l x R_l`` matrix per
isotypic block: column ``r`` holds the coefficients of the ``r``-th copy of
the irreducible ``V_l``. The ambiguity group acts by left multiplication with
one unitary (or real orthogonal) factor per block.

Flat layout
-----------
``flatten`` concatenates blocks in spec order and reads each block
column-major (copy index outer, row index inner). Every module and file
format uses this layout.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .seeding import as_rng

RANK_TOL = 1e-10
UNITARY_TOL = 1e-12
PARITY_TOL = 1e-12


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class ShapeError(ValidationError):
    """Array shapes do not match the representation layout."""


class Parity(str, Enum):
    EVEN = "even"
    ODD = "odd"
    NONE = "none"


class Field(str, Enum):
    COMPLEX = "complex"
    REAL = "real-conjugation-invariant"


@dataclass(frozen=True)
class IsotypicBlock:
    dim: int
    mult: int
    parity: Parity = Parity.NONE

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError(f"block dim must be a positive integer, got {self.dim!r}")
        if int(self.mult) != self.mult or self.mult < 1:
            raise ValidationError(f"block multiplicity must be a positive integer, got {self.mult!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "mult", int(self.mult))
        object.__setattr__(self, "parity", Parity(self.parity))

    @property
    def size(self):
        return self.dim * self.mult


@dataclass(frozen=True)
class RepresentationSpec:
    blocks: tuple
    field: Field = Field.COMPLEX

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, IsotypicBlock) else IsotypicBlock(*b) for b in self.blocks)
        if not blocks:
            raise ValidationError("a representation needs at least one block")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "field", Field(self.field))

    @classmethod
    def from_pairs(cls, pairs, field=Field.COMPLEX, parities=None):
        """Build from ``[(dim, mult), ...]``; ``parities`` optional."""
        if parities is None:
            parities = [Parity.NONE] * len(pairs)
        return cls(tuple(IsotypicBlock(d, r, p) for (d, r), p in zip(pairs, parities)), field)

    @property
    def L(self):
        return len(self.blocks)

    @property
    def N(self):
        return sum(b.dim * b.mult for b in self.blocks)

    @property
    def M(self):
        return sum(min(b.dim * b.mult, b.dim ** 2) for b in self.blocks)

    @property
    def is_real(self):
        return self.field is Field.REAL

    @property
    def offsets(self):
        out, pos = [], 0
        for b in self.blocks:
            out.append(pos)
            pos += b.size
        return tuple(out)

    def block_phase(self, i):
        """Unit scalar that makes block ``i`` real in the real field (1 or 1j)."""
        if self.is_real and self.blocks[i].parity is Parity.ODD:
            return 1j
        return 1.0

    def entry_phases(self):
        """Per-entry phase vector ``D`` in flat layout (all ones for complex)."""
        return np.concatenate([np.full(b.size, self.block_phase(i), dtype=complex)
                               for i, b in enumerate(self.blocks)])


@dataclass(frozen=True, eq=False)
class BlockSignal:
    spec: RepresentationSpec
    matrices: tuple

    def __post_init__(self):
        mats = tuple(np.array(a, dtype=complex, copy=True).reshape(np.shape(a)) for a in self.matrices)
        if len(mats) != self.spec.L:
            raise ShapeError(f"expected {self.spec.L} blocks, got {len(mats)}")
        for i, (a, b) in enumerate(zip(mats, self.spec.blocks)):
            if a.shape != (b.dim, b.mult):
                raise ShapeError(f"block {i}: expected shape {(b.dim, b.mult)}, got {a.shape}")
            if self.spec.is_real:
                off = a / self.spec.block_phase(i)
                scale = max(1.0, float(np.abs(a).max(initial=0.0)))
                if np.abs(off.imag).max(initial=0.0) > PARITY_TOL * scale:
                    raise ValidationError(f"block {i} violates its {b.parity.value} parity constraint")
            a.setflags(write=False)
        object.__setattr__(self, "matrices", mats)

    def __len__(self):
        return len(self.matrices)

    def __getitem__(self, i):
        return self.matrices[i]

    def norm(self):
        return float(np.sqrt(sum(np.vdot(a, a).real for a in self.matrices)))


@dataclass(frozen=True, eq=False)
class AmbiguityElement:
    spec: RepresentationSpec
    factors: tuple

    def __post_init__(self):
        facs = tuple(np.array(u, dtype=complex) for u in self.factors)
        if len(facs) != self.spec.L:
            raise ShapeError(f"expected {self.spec.L} factors, got {len(facs)}")
        for i, (u, b) in enumerate(zip(facs, self.spec.blocks)):
            if u.shape != (b.dim, b.dim):
                raise ShapeError(f"factor {i}: expected {(b.dim, b.dim)}, got {u.shape}")
            if np.linalg.norm(u.conj().T @ u - np.eye(b.dim)) > UNITARY_TOL * max(1, b.dim):
                raise ValidationError(f"factor {i} is not unitary")
            if self.spec.is_real and np.abs(u.imag).max() > UNITARY_TOL:
                raise ValidationError(f"factor {i} must be real orthogonal in the real field")
        object.__setattr__(self, "factors", facs)

    @classmethod
    def identity(cls, spec):
        return cls(spec, tuple(np.eye(b.dim) for b in spec.blocks))

    @classmethod
    def unchecked(cls, spec, factors):
        """Build without the unitarity check (negative controls only)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "spec", spec)
        object.__setattr__(obj, "factors", tuple(np.array(u, dtype=complex) for u in factors))
        return obj

    def compose(self, other):
        """Group product ``self * other`` (apply ``other`` first)."""
        return AmbiguityElement(self.spec, tuple(u @ v for u, v in zip(self.factors, other.factors)))


@dataclass(frozen=True, eq=False)
class SparseBasis:
    """Ordered orthonormal basis of flat coefficient space (columns)."""

    spec: RepresentationSpec
    basis: np.ndarray

    def __post_init__(self):
        q = np.array(self.basis, dtype=complex)
        n = self.spec.N
        if q.shape != (n, n):
            raise ShapeError(f"basis must be {n}x{n}, got {q.shape}")
        if np.abs(q.conj().T @ q - np.eye(n)).max() > UNITARY_TOL:
            raise ValidationError("basis columns are not orthonormal")
        if self.spec.is_real:
            rq = q / self.spec.entry_phases()[:, None]
            if np.abs(rq.imag).max() > UNITARY_TOL:
                raise ValidationError("basis vectors must lie in the conjugation-invariant subspace")
        q.setflags(write=False)
        object.__setattr__(self, "basis", q)

    @property
    def N(self):
        return self.spec.N

    def coefficients(self, f):
        """Coordinates of ``f`` (BlockSignal or flat vector) in this basis."""
        x = flatten(f) if isinstance(f, BlockSignal) else np.asarray(f, dtype=complex)
        c = self.basis.conj().T @ x
        return c.real.copy() if self.spec.is_real else c

    def synthesize(self, coeffs):
        """Flat vector with the given basis coordinates."""
        return self.basis @ np.asarray(coeffs, dtype=complex)

    @classmethod
    def standard(cls, spec):
        return cls(spec, np.diag(spec.entry_phases()))


def flatten(signal):
    """Flat length-N vector: blocks in order, column-major inside each block."""
    return np.concatenate([a.reshape(-1, order="F") for a in signal.matrices])


def unflatten(spec, x, project=False):
    """Inverse of :func:`flatten`.

    With ``project=True`` a real-field vector is first projected onto the
    conjugation-invariant subspace (drops round-off of the wrong parity).
    """
    x = np.asarray(x, dtype=complex).reshape(-1)
    if x.size != spec.N:
        raise ShapeError(f"flat vector has length {x.size}, spec needs {spec.N}")
    if project and spec.is_real:
        d = spec.entry_phases()
        x = d * (x / d).real
    mats = []
    for off, b in zip(spec.offsets, spec.blocks):
        mats.append(x[off:off + b.size].reshape((b.dim, b.mult), order="F"))
    return BlockSignal(spec, tuple(mats))


def zero_signal(spec):
    return BlockSignal(spec, tuple(np.zeros((b.dim, b.mult)) for b in spec.blocks))


def apply_ambiguity(h, f):
    """Block-wise left multiplication ``A_l -> U_l A_l``."""
    if h.spec != f.spec:
        raise ValidationError("ambiguity element and signal have different specs")
    return BlockSignal(f.spec, tuple(u @ a for u, a in zip(h.factors, f.matrices)))


def _real_block(spec, i, a):
    return (a / spec.block_phase(i)).real if spec.is_real else a


def numerical_rank(a, tol=RANK_TOL):
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def orbit_span_dimension(f, rank_tol=RANK_TOL):
    """Complex dimension of the linear span of the ambiguity orbit of ``f``:
    ``sum_l rank(A_l) * N_l``."""
    return sum(numerical_rank(a, rank_tol) * b.dim for a, b in zip(f.matrices, f.spec.blocks))


def orbit_span_basis(f, rank_tol=RANK_TOL):
    """Orthonormal ``N x D`` matrix whose columns span the orbit's linear span.

    For a block with ``A = U S Vh`` of rank ``r`` the span is
    ``{Y Vh[:r] : Y in C^{N_l x r}}`` (matrices whose columns obey the same
    linear relations as the columns of ``A``); the elementary matrices
    ``e_m Vh[j]`` give an orthonormal basis of it.
    """
    spec = f.spec
    cols = []
    for i, (off, a, b) in enumerate(zip(spec.offsets, f.matrices, spec.blocks)):
        x = _real_block(spec, i, a)
        if not np.any(x):
            continue
        _, s, vh = np.linalg.svd(x)
        r = int(np.sum(s > rank_tol * s[0]))
        phase = spec.block_phase(i)
        for j in range(r):
            for m in range(b.dim):
                col = np.zeros(spec.N, dtype=complex)
                col[off + m:off + b.size:b.dim] = phase * vh[j]
                cols.append(col)
    if not cols:
        return np.zeros((spec.N, 0), dtype=complex)
    return np.column_stack(cols)


@dataclass(frozen=True)
class SparsityBound:
    N: int
    M: int
    K_max: int

    @property
    def ratio(self):
        return self.K_max / self.N


def sparsity_bound(spec):
    """Generic-basis sparsity level ``K_max = N - M`` (may be <= 0)."""
    return SparsityBound(spec.N, spec.M, spec.N - spec.M)


def haar_unitary(n, rng):
    """Haar-distributed ``n x n`` unitary: QR of a complex Ginibre matrix
    with the phases of ``diag(R)`` moved into ``Q``."""
    rng = as_rng(rng)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def haar_orthogonal(n, rng):
    rng = as_rng(rng)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diagonal(r))


def random_ambiguity(spec, rng):
    rng = as_rng(rng)
    draw = haar_orthogonal if spec.is_real else haar_unitary
    return AmbiguityElement(spec, tuple(draw(b.dim, rng) for b in spec.blocks))


def random_basis(spec, rng):
    """Haar-random orthonormal basis (orthogonal in real coordinates for the
    real field, then rotated into the invariant subspace)."""
    rng = as_rng(rng)
    if spec.is_real:
        q = spec.entry_phases()[:, None] * haar_orthogonal(spec.N, rng)
    else:
        q = haar_unitary(spec.N, rng)
    return SparseBasis(spec, q)


def _gaussian(spec, size, rng):
    if spec.is_real:
        return rng.standard_normal(size)
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def random_signal(spec, rng, K=None, basis=None):
    """Random signal with i.i.d. standard Gaussian coefficients.

    With ``K`` given, a uniformly random size-``K`` support is drawn and the
    Gaussian coefficients are placed on it in ``basis`` (standard basis if
    omitted).
    """
    rng = as_rng(rng)
    if K is None:
        x = spec.entry_phases() * _gaussian(spec, spec.N, rng)
        return unflatten(spec, x)
    if not 1 <= K <= spec.N:
        raise ValidationError(f"sparsity K={K} outside [1, {spec.N}]")
    if basis is None:
        basis = SparseBasis.standard(spec)
    support = np.sort(rng.choice(spec.N, size=K, replace=False))
    c = np.zeros(spec.N, dtype=complex)
    c[support] = _gaussian(spec, K, rng)
    return unflatten(spec, basis.synthesize(c), project=True)


def signal_support(f, basis, tol=1e-12):
    c = basis.coefficients(f)
    return np.flatnonzero(np.abs(c) > tol * max(1.0, np.abs(c).max()))

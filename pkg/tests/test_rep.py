import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import seeds, specs
from mramoments.models import build_model
from mramoments.moments import gram_distance, population_gram
from mramoments.rep import (AmbiguityElement, BlockSignal, Field, IsotypicBlock, Parity, RepresentationSpec,
                            ShapeError, SparseBasis, ValidationError, apply_ambiguity, flatten,
                            haar_unitary, orbit_span_basis, orbit_span_dimension, random_ambiguity,
                            random_basis, random_signal, signal_support, sparsity_bound, unflatten,
                            zero_signal)
from mramoments.seeding import derive_rng


def sampled_orbit_rank(f, count, seed):
    """Numerical rank of ``[flatten(h_1 f), ..., flatten(h_count f)]``."""
    cols = [flatten(apply_ambiguity(random_ambiguity(f.spec, derive_rng(seed, 99, i)), f)) for i in range(count)]
    s = np.linalg.svd(np.column_stack(cols), compute_uv=False)
    return int(np.sum(s > 1e-10 * s[0])) if s[0] > 0 else 0


def test_block_invariants():
    with pytest.raises(ValidationError):
        IsotypicBlock(0, 1)
    with pytest.raises(ValidationError):
        IsotypicBlock(1, 0)


def test_flatten_examples():
    s1 = RepresentationSpec.from_pairs([(1, 1)])
    assert flatten(BlockSignal(s1, (np.array([[3]]),))).tolist() == [3]
    s2 = RepresentationSpec.from_pairs([(2, 1)])
    assert flatten(BlockSignal(s2, (np.array([[1], [2]]),))).tolist() == [1, 2]
    s3 = RepresentationSpec.from_pairs([(1, 2), (2, 1)])
    f = BlockSignal(s3, (np.array([[5, 6]]), np.array([[1], [2]])))
    assert flatten(f).tolist() == [5, 6, 1, 2]


def test_column_major_within_block():
    spec = RepresentationSpec.from_pairs([(2, 2)])
    a = np.array([[1, 2], [3, 4]])
    assert flatten(BlockSignal(spec, (a,))).tolist() == [1, 3, 2, 4]


def test_shape_mismatch_raises():
    spec = RepresentationSpec.from_pairs([(2, 1)])
    with pytest.raises(ShapeError):
        BlockSignal(spec, (np.zeros((1, 2)),))
    with pytest.raises(ShapeError):
        unflatten(spec, np.zeros(3))


@given(specs(), seeds)
def test_flatten_roundtrip(spec, seed):
    f = random_signal(spec, derive_rng(seed, 0, 0))
    g = unflatten(spec, flatten(f))
    assert all(np.array_equal(a, b) for a, b in zip(f.matrices, g.matrices))


def test_real_field_parity_checked():
    spec = RepresentationSpec.from_pairs([(1, 1), (1, 1)], Field.REAL, [Parity.EVEN, Parity.ODD])
    BlockSignal(spec, (np.array([[1.0]]), np.array([[2j]])))
    with pytest.raises(ValidationError):
        BlockSignal(spec, (np.array([[1j]]), np.array([[2j]])))
    with pytest.raises(ValidationError):
        BlockSignal(spec, (np.array([[1.0]]), np.array([[2.0]])))


def test_apply_ambiguity_examples():
    spec = RepresentationSpec.from_pairs([(1, 1)])
    f = BlockSignal(spec, (np.array([[1.0]]),))
    assert np.array_equal(apply_ambiguity(AmbiguityElement.identity(spec), f).matrices[0], f.matrices[0])
    alpha = 0.7
    h = AmbiguityElement(spec, (np.array([[np.exp(1j * alpha)]]),))
    assert apply_ambiguity(h, f).matrices[0][0, 0] == pytest.approx(np.exp(1j * alpha))


def test_non_unitary_factor_rejected():
    spec = RepresentationSpec.from_pairs([(2, 1)])
    with pytest.raises(ValidationError):
        AmbiguityElement(spec, (np.array([[1.0, 0.1], [0.0, 1.0]]),))
    real = RepresentationSpec.from_pairs([(1, 1)], Field.REAL, [Parity.EVEN])
    with pytest.raises(ValidationError):
        AmbiguityElement(real, (np.array([[1j]]),))


@given(specs(), seeds)
def test_ambiguity_preserves_grams(spec, seed):
    f = random_signal(spec, derive_rng(seed, 1, 0))
    h = random_ambiguity(spec, derive_rng(seed, 2, 0))
    assert gram_distance(population_gram(apply_ambiguity(h, f)), population_gram(f)) < 1e-12 * max(1, f.norm() ** 2)


@given(specs(field=Field.REAL), seeds)
def test_real_signals_stay_invariant(spec, seed):
    f = random_signal(spec, derive_rng(seed, 1, 0))
    h = random_ambiguity(spec, derive_rng(seed, 2, 0))
    g = apply_ambiguity(h, f)  # construction re-validates parity
    assert g.spec.is_real


@given(specs(), seeds)
def test_factors_unitary(spec, seed):
    h = random_ambiguity(spec, derive_rng(seed, 2, 0))
    for u in h.factors:
        assert np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])) < 1e-12
        if spec.is_real:
            assert np.abs(u.imag).max() == 0


def test_haar_columns_isotropic():
    n = 3
    acc = np.zeros((n, n), dtype=complex)
    for i in range(10_000):
        u = haar_unitary(n, derive_rng(7, 0, i))[:, 0]
        acc += np.outer(u, u.conj())
    assert np.abs(acc / 10_000 - np.eye(n) / n).max() < 0.05


def test_one_dim_phase_uniform():
    phases = np.array([np.angle(haar_unitary(1, derive_rng(3, 0, i))[0, 0]) for i in range(4000)])
    hist, _ = np.histogram(phases, bins=8, range=(-np.pi, np.pi))
    assert np.abs(hist / 4000 - 1 / 8).max() < 0.03


def test_orbit_span_dimension_examples():
    spec = build_model("cryo_em", L=4, R=9).spec
    assert orbit_span_dimension(zero_signal(spec)) == 0
    f = random_signal(spec, derive_rng(0, 1, 0))
    assert orbit_span_dimension(f) == 165
    rot = build_model("rotated_images", L_prime=2, R=4).spec
    g = random_signal(rot, derive_rng(0, 1, 0))
    mats = list(g.matrices)
    mats[2] = np.zeros_like(mats[2])
    assert orbit_span_dimension(BlockSignal(rot, tuple(mats))) == 4


def test_orbit_span_dimension_matches_sampled_rank_cryo():
    spec = build_model("cryo_em", L=2, R=3).spec
    f = random_signal(spec, derive_rng(4, 1, 0))
    assert orbit_span_dimension(f) == sampled_orbit_rank(f, 2 * spec.M + 10, 4)


@given(specs(max_blocks=3, max_dim=3, max_mult=3), seeds, st.integers(0, 2))
def test_orbit_span_dimension_matches_sampled_rank(spec, seed, deficient_block):
    f = random_signal(spec, derive_rng(seed, 1, 0))
    mats = list(f.matrices)
    i = deficient_block % spec.L
    a = mats[i]
    if a.shape[1] > 1:
        # duplicate a column: rank drops when the block was full column rank
        a = a.copy()
        a[:, -1] = a[:, 0]
        mats[i] = a
    f = BlockSignal(spec, tuple(mats))
    assert orbit_span_dimension(f) == sampled_orbit_rank(f, 2 * spec.M + 10, seed)


def test_orbit_span_basis_examples():
    s1 = RepresentationSpec.from_pairs([(1, 1)])
    q = orbit_span_basis(BlockSignal(s1, (np.array([[1.0]]),)))
    assert q.shape == (1, 1) and abs(abs(q[0, 0]) - 1) < 1e-15
    s2 = RepresentationSpec.from_pairs([(2, 1)])
    q = orbit_span_basis(BlockSignal(s2, (np.array([[1.0], [0.0]]),)))
    assert q.shape == (2, 2)


def test_orbit_points_in_span_cryo():
    spec = build_model("cryo_em", L=3, R=4).spec
    f = random_signal(spec, derive_rng(5, 1, 0))
    q = orbit_span_basis(f)
    assert np.abs(q.conj().T @ q - np.eye(q.shape[1])).max() < 1e-12
    for i in range(50):
        x = flatten(apply_ambiguity(random_ambiguity(spec, derive_rng(5, 2, i)), f))
        assert np.linalg.norm(x - q @ (q.conj().T @ x)) < 1e-10 * np.linalg.norm(x)


@given(specs(), seeds)
def test_orbit_dimension_ambiguity_invariant(spec, seed):
    f = random_signal(spec, derive_rng(seed, 1, 0))
    h = random_ambiguity(spec, derive_rng(seed, 2, 0))
    assert orbit_span_dimension(apply_ambiguity(h, f)) == orbit_span_dimension(f)


def test_sparsity_bound_examples():
    assert sparsity_bound(build_model("cyclic", N=8).spec).K_max == 0
    for lp, r in [(2, 4), (3, 2), (1, 7)]:
        b = sparsity_bound(build_model("rotated_images", L_prime=lp, R=r).spec)
        assert b.K_max == (r - 1) * (2 * lp + 1) == b.N - (2 * lp + 1)
    b = sparsity_bound(build_model("cryo_em", L=4, R=9).spec)
    assert (b.N, b.M, b.K_max) == (225, 165, 60)


@given(specs(), st.integers(0, 3))
def test_sparsity_bound_arithmetic(spec, bump):
    b = sparsity_bound(spec)
    assert b.K_max + b.M == b.N
    i = bump % spec.L
    blocks = list(spec.blocks)
    blocks[i] = IsotypicBlock(blocks[i].dim, blocks[i].mult + 1, blocks[i].parity)
    assert sparsity_bound(RepresentationSpec(tuple(blocks), spec.field)).K_max >= b.K_max


def test_random_signal_deterministic():
    spec = build_model("cryo_em", L=2, R=3).spec
    a = flatten(random_signal(spec, derive_rng(9, 1, 0)))
    b = flatten(random_signal(spec, derive_rng(9, 1, 0)))
    assert np.array_equal(a, b)


def test_random_signal_sparsity():
    spec = build_model("rotated_images", L_prime=2, R=4).spec
    basis = random_basis(spec, derive_rng(1, 2, 0))
    f = random_signal(spec, derive_rng(1, 1, 0), K=5, basis=basis)
    c = basis.coefficients(f)
    assert np.sum(np.abs(c) < 1e-12) == 15
    dense = random_signal(spec, derive_rng(1, 1, 0), K=20, basis=basis)
    assert np.all(np.abs(basis.coefficients(dense)) > 1e-12)
    with pytest.raises(ValidationError):
        random_signal(spec, derive_rng(1, 1, 0), K=21, basis=basis)


@given(specs(field=Field.REAL), seeds)
def test_real_sparse_signal_has_real_coefficients(spec, seed):
    basis = random_basis(spec, derive_rng(seed, 2, 0))
    k = max(1, spec.N // 2)
    f = random_signal(spec, derive_rng(seed, 1, 0), K=k, basis=basis)
    assert len(signal_support(f, basis)) <= k


def test_basis_orthonormality_checked():
    spec = RepresentationSpec.from_pairs([(2, 1)])
    with pytest.raises(ValidationError):
        SparseBasis(spec, np.array([[1.0, 0.1], [0.0, 1.0]]))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import seeds, specs
from mramoments.models import build_model, population_observation_moment, simulate_batch, simulate_moment
from mramoments.moments import (GramMoment, ObservationBatch, debias, empirical_second_moment, gram_distance,
                                invariance_check, population_gram, population_moment_matrix,
                                project_to_grams, signal_distance_up_to_phase)
from mramoments.rep import (AmbiguityElement, BlockSignal, RepresentationSpec, ShapeError, ValidationError,
                            random_signal, unflatten)
from mramoments.seeding import derive_rng


def test_population_gram_examples():
    spec = RepresentationSpec.from_pairs([(3, 1)])
    g = population_gram(BlockSignal(spec, (np.array([[1.0], [0], [0]]),)))
    assert np.array_equal(g[0], [[1]])
    spec = RepresentationSpec.from_pairs([(3, 2)])
    g = population_gram(BlockSignal(spec, (np.eye(3)[:, :2],)))
    assert np.array_equal(g[0], np.eye(2))


def test_gram_entries_are_column_inner_products():
    spec = RepresentationSpec.from_pairs([(3, 2)])
    a = np.array([[1, 1j], [2, 0], [0, 3]])
    g = population_gram(BlockSignal(spec, (a,)))
    for i in range(2):
        for j in range(2):
            assert g[0][i, j] == pytest.approx(np.vdot(a[:, i], a[:, j]))


def test_gram_moment_validation():
    spec = RepresentationSpec.from_pairs([(2, 2)])
    with pytest.raises(ValidationError):
        GramMoment(spec, (np.array([[1, 1], [0, 1]]),))
    with pytest.raises(ShapeError):
        GramMoment(spec, (np.eye(3),))
    assert not GramMoment(spec, (np.diag([1.0, -1.0]),)).is_psd()


def test_empirical_trivial():
    y = np.array([[1 + 1j, 2.0]])
    m = empirical_second_moment(y)
    assert np.allclose(m, np.outer(y[0], y[0].conj()))
    with pytest.raises(ValidationError):
        empirical_second_moment(np.zeros((0, 2)))


def test_cyclic_exact_group_average():
    # brute force over the 4 shifts, each shift acting by omega^k on frequency k
    x = np.array([1, 2, 0, 0], dtype=complex)
    rows = [np.exp(2j * np.pi * s * np.arange(4) / 4) * x for s in range(4)]
    m = empirical_second_moment(np.array(rows))
    assert np.allclose(m, np.diag([1, 4, 0, 0]), atol=1e-14)
    model = build_model("cyclic", N=4)
    f = unflatten(model.spec, x)
    assert np.allclose(population_observation_moment(f, model), m, atol=1e-14)


def test_noise_adds_sigma_squared():
    model = build_model("cyclic", N=4)
    f = unflatten(model.spec, np.array([1, 2, 0, 0], dtype=complex))
    clean = simulate_moment(model, f, 20_000, 0.0, 3)
    noisy = simulate_moment(model, f, 20_000, 1.5, 3)
    assert np.abs(np.diag(noisy - clean).real - 1.5 ** 2).max() < 0.1


def test_debias_examples():
    m = np.array([[2.0, 1j], [-1j, 3.0]])
    assert np.array_equal(debias(m, 0), m)
    assert np.allclose(debias(4 * np.eye(3), 2), 0)
    with pytest.raises(ValidationError):
        debias(np.zeros((2, 3)), 1)


def test_debias_pure_noise():
    model = build_model("cyclic", N=8)
    f = unflatten(model.spec, np.zeros(8))
    m = debias(simulate_moment(model, f, 100_000, 1.0, 11), 1.0)
    assert np.linalg.norm(m) < 0.1
    g = project_to_grams(m, model)
    # each diagonal entry has standard error 1/sqrt(n)
    assert np.sqrt(sum(abs(x[0, 0]) ** 2 for x in g.grams)) < 3 * np.sqrt(8 / 100_000)


def test_batch_matches_streaming():
    model = build_model("rotated_images", L_prime=1, R=2)
    f = random_signal(model.spec, derive_rng(2, 1, 0))
    batch = simulate_batch(model, f, 3000, 0.7, 5)
    assert batch.n == 3000 and batch.dim == 6
    a = empirical_second_moment(batch)
    b = simulate_moment(model, f, 3000, 0.7, 5)
    assert np.allclose(a, b, atol=1e-14, rtol=0)


def test_thread_count_does_not_change_result():
    model = build_model("cryo_em", L=1, R=2)
    f = random_signal(model.spec, derive_rng(2, 1, 0))
    one = simulate_moment(model, f, 5000, 0.5, 8, threads=1)
    two = simulate_moment(model, f, 5000, 0.5, 8, threads=3)
    assert np.array_equal(one, two)
    batch = simulate_batch(model, f, 5000, 0.5, 8)
    assert np.array_equal(empirical_second_moment(batch, 1), empirical_second_moment(batch, 4))


def test_observation_batch_invariants():
    model = build_model("cyclic", N=2)
    with pytest.raises(ValidationError):
        ObservationBatch(model, np.zeros((0, 2)), 0.0, 0)
    with pytest.raises(ValidationError):
        ObservationBatch(model, np.zeros((1, 2)), -1.0, 0)


@pytest.mark.parametrize("name,params", [
    ("cyclic", {"N": 7}), ("dihedral", {"N": 6}), ("dihedral", {"N": 5}),
    ("rotated_images", {"L_prime": 2, "R": 3}), ("tomography_2d", {"L_prime": 2, "R": 3}),
    ("cryo_em", {"L": 3, "R": 4}),
])
def test_project_exact_moment_recovers_grams(name, params):
    from mramoments.models import moment_signal
    model = build_model(name, params)
    f = random_signal(model.spec, derive_rng(6, 1, 0))
    g = project_to_grams(population_observation_moment(f, model), model)
    assert gram_distance(g, population_gram(moment_signal(f, model))) < 1e-8


def test_cyclic_grams_are_power_spectrum():
    model = build_model("cyclic", N=6)
    f = random_signal(model.spec, derive_rng(1, 1, 0))
    g = project_to_grams(population_observation_moment(f, model), model)
    for gl, a in zip(g.grams, f.matrices):
        assert abs(gl[0, 0] - abs(a[0, 0]) ** 2) < 1e-12


def test_rotated_images_grams_rank_one():
    model = build_model("rotated_images", L_prime=2, R=4)
    f = random_signal(model.spec, derive_rng(1, 1, 0))
    g = project_to_grams(population_observation_moment(f, model), model)
    for gl in g.grams:
        s = np.linalg.svd(gl, compute_uv=False)
        assert s[1] < 1e-12 * s[0]


def test_project_dimension_mismatch():
    with pytest.raises(ValidationError):
        project_to_grams(np.eye(3), build_model("cyclic", N=4))


def test_gram_distance_examples():
    spec = RepresentationSpec.from_pairs([(2, 2), (1, 1)])
    f = random_signal(spec, derive_rng(0, 1, 0))
    a = population_gram(f)
    assert gram_distance(a, a) == 0
    zero = GramMoment(spec, tuple(np.zeros_like(g) for g in a.grams))
    assert gram_distance(a, zero) == pytest.approx(np.sqrt(sum(np.linalg.norm(g) ** 2 for g in a.grams)))
    other = GramMoment(RepresentationSpec.from_pairs([(2, 2)]), (np.eye(2),))
    with pytest.raises(ValidationError):
        gram_distance(a, other)


@settings(max_examples=100)
@given(specs(max_blocks=3, max_dim=3, max_mult=3), seeds)
def test_gram_distance_triangle(spec, seed):
    a, b, c = (population_gram(random_signal(spec, derive_rng(seed, 1, i))) for i in range(3))
    assert gram_distance(a, c) <= gram_distance(a, b) + gram_distance(b, c) + 1e-12


def test_invariance_check_examples():
    spec = RepresentationSpec.from_pairs([(3, 2), (1, 2)])
    f = random_signal(spec, derive_rng(0, 1, 0))
    assert invariance_check(f, 5, 0, elements=[AmbiguityElement.identity(spec)] * 5) == 0
    assert invariance_check(f, 100, 0) < 1e-10
    # negative control: non-unitary factor, validation bypassed
    bad = AmbiguityElement.unchecked(spec, (np.diag([1.0, 1.1, 1.0]), np.eye(1)))
    assert invariance_check(f, 1, 0, elements=[bad]) > 1e-3


def test_schur_constant_cyclic():
    model = build_model("cyclic", N=1)
    f = unflatten(model.spec, np.array([2 - 1j]))
    m = population_moment_matrix(f)
    assert np.allclose(m, abs(2 - 1j) ** 2 * np.eye(1))


def test_signal_distance_examples():
    spec = RepresentationSpec.from_pairs([(2, 1), (1, 2)])
    a = random_signal(spec, derive_rng(0, 1, 0))
    b = BlockSignal(spec, tuple(np.exp(1j * np.pi / 3) * m for m in a.matrices))
    assert signal_distance_up_to_phase(a, b) < 1e-14
    real = build_model("cryo_em", L=1, R=2).spec
    f = random_signal(real, derive_rng(0, 1, 0))
    assert signal_distance_up_to_phase(f, BlockSignal(real, tuple(-m for m in f.matrices))) < 1e-14


@given(seeds)
def test_signal_distance_orthogonal_unit_vectors(seed):
    spec = RepresentationSpec.from_pairs([(3, 1), (2, 1)])
    rng = derive_rng(seed, 0, 0)
    x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    y = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    x /= np.linalg.norm(x)
    y -= np.vdot(x, y) * x
    y /= np.linalg.norm(y)
    assert signal_distance_up_to_phase(unflatten(spec, x), unflatten(spec, y)) == pytest.approx(np.sqrt(2))


@given(st.floats(0, 2 * np.pi), seeds)
def test_signal_distance_phase_invariant(alpha, seed):
    spec = RepresentationSpec.from_pairs([(2, 2)])
    a = random_signal(spec, derive_rng(seed, 1, 0))
    b = random_signal(spec, derive_rng(seed, 1, 1))
    rot = BlockSignal(spec, tuple(np.exp(1j * alpha) * m for m in b.matrices))
    assert signal_distance_up_to_phase(a, rot) == pytest.approx(signal_distance_up_to_phase(a, b), abs=1e-12)


def test_gram_error_standard_error_slope():
    from mramoments.analysis import loglog_slope
    model = build_model("cyclic", N=8)
    f = random_signal(model.spec, derive_rng(0, 1, 0))
    truth = population_gram(f)
    ns = [1000, 4000, 16000, 64000]
    errs = []
    for n in ns:
        e = [gram_distance(project_to_grams(debias(simulate_moment(model, f, n, 2.0, s), 2.0), model), truth)
             for s in range(4)]
        errs.append(np.mean(e))
    assert abs(loglog_slope(ns, errs) + 0.5) < 0.1

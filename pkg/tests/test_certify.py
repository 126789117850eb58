import json

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import seeds
from mramoments.certify import (COS_TOL, SINE_TOL, certify_basis, intersect_span_with_support,
                                intersection_from_bases, sweep_K)
from mramoments.models import build_model
from mramoments.rep import (BlockSignal, RepresentationSpec, SparseBasis, ValidationError, apply_ambiguity,
                            orbit_span_dimension, random_ambiguity, random_basis, random_signal, signal_support)
from mramoments.seeding import derive_rng


def rotated():
    return build_model("rotated_images", L_prime=2, R=4).spec


def test_sine_threshold_matches_cosine_rule():
    assert np.isclose(1 - np.sqrt(1 - SINE_TOL ** 2), COS_TOL, rtol=1e-6)


def test_principal_angle_dimension_simple():
    e = np.eye(4)
    assert intersection_from_bases(e[:, :2], e[:, 1:3]).dim == 1
    assert intersection_from_bases(e[:, :2], e[:, 2:]).dim == 0
    tilt = (e[:, 0] + 1e-3 * e[:, 2])[:, None] / np.linalg.norm(e[:, 0] + 1e-3 * e[:, 2])
    r = intersection_from_bases(e[:, :2], tilt)
    assert r.dim == 0 and r.gap == pytest.approx(1e-3 - SINE_TOL, rel=1e-4)


def test_support_of_f_meets_in_a_line():
    spec = rotated()
    basis = random_basis(spec, derive_rng(0, 2, 0))
    f = random_signal(spec, derive_rng(0, 1, 0), K=12, basis=basis)
    assert intersect_span_with_support(f, basis, signal_support(f, basis)).dim == 1


def test_full_support_gives_whole_span():
    spec = rotated()
    basis = random_basis(spec, derive_rng(0, 2, 0))
    f = random_signal(spec, derive_rng(0, 1, 0))
    assert intersect_span_with_support(f, basis, range(spec.N)).dim == orbit_span_dimension(f) == spec.M


def test_cyclic_standard_basis_two_sparse():
    spec = build_model("cyclic", N=8).spec
    basis = SparseBasis.standard(spec)
    f = random_signal(spec, derive_rng(0, 1, 0))
    assert intersect_span_with_support(f, basis, [2, 5]).dim == 2


def test_support_too_large():
    spec = RepresentationSpec.from_pairs([(1, 2)])
    f = random_signal(spec, derive_rng(0, 1, 0))
    with pytest.raises(ValidationError):
        intersect_span_with_support(f, SparseBasis.standard(spec), [0, 1, 2])


def test_trivial_spec_passes():
    spec = RepresentationSpec.from_pairs([(1, 2)])
    cert = certify_basis(spec, random_basis(spec, derive_rng(0, 2, 0)), 1, trials=20)
    assert cert.verdict == "pass" and cert.condition1_pass and cert.condition2_pass


def test_cryo_at_bound_passes_and_above_fails():
    spec = build_model("cryo_em", L=2, R=5).spec
    basis = random_basis(spec, derive_rng(0, 2, 0))
    assert certify_basis(spec, basis, 10, trials=20).verdict == "pass"
    above = certify_basis(spec, basis, 40, trials=20)
    assert above.verdict == "fail" and not above.condition2_pass
    assert certify_basis(spec, basis, spec.N, trials=3).verdict == "fail"


def test_K_outside_range():
    spec = rotated()
    basis = random_basis(spec, derive_rng(0, 2, 0))
    for k in (0, spec.N + 1):
        with pytest.raises(ValidationError):
            certify_basis(spec, basis, k)


def test_certificate_flags_consistent_and_serialisable():
    spec = rotated()
    cert = certify_basis(spec, random_basis(spec, derive_rng(3, 2, 0)), 15, trials=5, seed=3)
    assert cert.condition1_pass == all(d == 1 for d in cert.dims_condition1)
    assert cert.condition2_pass == all(d == 0 for d in cert.dims_condition2)
    assert cert.min_gap == min(cert.gaps)
    doc = json.loads(cert.to_json())
    assert doc["verdict"] == cert.verdict and doc["bound"]["K_max"] == 15 and len(doc["supports_tested"]) == 5


def test_deterministic():
    spec = rotated()
    basis = random_basis(spec, derive_rng(1, 2, 0))
    a = certify_basis(spec, basis, 10, trials=5, seed=9)
    b = certify_basis(spec, basis, 10, trials=5, seed=9)
    assert a.to_json() == b.to_json()


def test_sweep_rotated_images_frontier():
    spec = rotated()
    sweep = sweep_K(spec, random_basis(spec, derive_rng(0, 2, 0)), range(1, 18), trials=20)
    assert sweep.largest_passing_K == 15
    verdicts = dict((k, v) for k, v, _ in sweep.table())
    assert verdicts[16] == "fail" and verdicts[17] == "fail"


def test_sweep_cyclic_fails_everywhere():
    spec = build_model("cyclic", N=8).spec
    sweep = sweep_K(spec, random_basis(spec, derive_rng(0, 2, 0)), range(1, 5), trials=5)
    assert sweep.largest_passing_K == 0
    assert all(v == "fail" for _, v, _ in sweep.table())
    with pytest.raises(ValidationError):
        sweep_K(spec, SparseBasis.standard(spec), [9])


@settings(max_examples=15)
@given(seeds)
def test_verdict_ignores_ambiguity_and_phase(seed):
    spec = build_model("cryo_em", L=1, R=3).spec
    basis = random_basis(spec, derive_rng(seed, 2, 0))
    f = random_signal(spec, derive_rng(seed, 1, 0), K=spec.N - spec.M, basis=basis)
    support = signal_support(f, basis)
    other = [i for i in range(spec.N) if i not in support][:len(support)]
    g = apply_ambiguity(random_ambiguity(spec, derive_rng(seed, 6, 0)), f)
    neg = BlockSignal(spec, tuple(-a for a in f.matrices))
    for s in (support, other):
        dims = {intersect_span_with_support(x, basis, s).dim for x in (f, g, neg)}
        assert len(dims) == 1

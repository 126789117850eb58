"""Numerical genericity certificates for sparse identifiability.

For a basis and sparsity ``K`` the certificate samples supports ``S`` and
signals ``f`` supported on ``S`` and checks, by principal angles, that

1. ``L_f`` meets ``L_S`` exactly in the line through ``f``;
2. ``L_f`` meets ``L_S'`` only at 0 for another support ``S'``.

Only sampled supports are tested and condition 1 is checked at the sampled
points, not as a global algebraic statement.

A principal direction counts toward the intersection when its cosine
exceeds ``1 - 1e-8``, i.e. when its sine (a singular value of the residual
``(I - P_S) Q_f``) is below ``SINE_TOL ~ 1.41e-4``. The decision margin of a
rank decision is the distance of those sines from ``SINE_TOL``; the plain
cosine gap ``1 - cos`` of the nearest non-intersecting direction is kept
alongside for audit.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .rep import ValidationError, orbit_span_basis, random_signal, sparsity_bound
from .seeding import STREAM_TRIALS, derive_rng

COS_TOL = 1e-8
GAP_TOL = 1e-4
SINE_TOL = float(np.sqrt(1 - (1 - COS_TOL) ** 2))


@dataclass
class Intersection:
    dim: int
    gap: float
    cos_gap: float
    cosines: np.ndarray = field(repr=False)


def intersection_from_bases(q1, q2, real=False):
    prod = q1.conj().T @ q2
    if real:
        prod = prod.real
    if prod.size == 0:
        return Intersection(0, 1.0, 1.0, np.zeros(0))
    cos = np.clip(np.linalg.svd(prod, compute_uv=False), 0.0, 1.0)
    hit = cos > 1 - COS_TOL
    sines = np.sqrt(np.clip(1 - cos ** 2, 0.0, None))
    gap = float(np.abs(sines - SINE_TOL).min())
    below = cos[~hit]
    cos_gap = float(1 - below.max()) if below.size else 1.0
    return Intersection(int(hit.sum()), gap, cos_gap, cos)


def intersect_span_with_support(f, basis, support, span=None):
    """Dimension of ``L_f`` intersected with ``L_S`` (with the decision gap)."""
    support = np.asarray(sorted(support), dtype=int)
    if support.size > basis.N:
        raise ValidationError("support larger than the space")
    q_f = orbit_span_basis(f) if span is None else span
    return intersection_from_bases(q_f, basis.basis[:, support], real=basis.spec.is_real)


@dataclass
class Certificate:
    spec: object
    K: int
    seed: int
    trials: int
    supports_tested: list
    dims_condition1: list
    dims_condition2: list
    gaps: list
    cos_gaps: list
    condition1_pass: bool
    condition2_pass: bool
    min_gap: float
    verdict: str

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        from .serialize import spec_to_dict
        d = asdict(self)
        d["spec"] = spec_to_dict(self.spec)
        d["bound"] = asdict(sparsity_bound(self.spec))
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _random_other_support(n, support, rng):
    k = len(support)
    while True:
        other = np.sort(rng.choice(n, size=k, replace=False))
        if not np.array_equal(other, support):
            return other


def certify_basis(spec, basis, K, trials=20, seed=0):
    """Sampled check of both intersection conditions at sparsity ``K``.

    ``pass`` needs every decision correct with margin > 1e-4; any wrong
    decision is ``fail``; correct decisions with a smaller margin are
    ``inconclusive``.
    """
    n = spec.N
    if not 1 <= K <= n:
        raise ValidationError(f"K={K} outside [1, {n}]")
    supports, dims1, dims2, gaps, cos_gaps = [], [], [], [], []
    for t in range(trials):
        rng = derive_rng(seed, STREAM_TRIALS, t)
        f = random_signal(spec, rng, K=K, basis=basis)
        support = np.flatnonzero(np.abs(basis.coefficients(f)) > 1e-12 * max(1.0, f.norm()))
        span = orbit_span_basis(f)
        first = intersect_span_with_support(f, basis, support, span)
        dims1.append(first.dim)
        trial_gaps, trial_cos = [first.gap], [first.cos_gap]
        other = None
        if K < n:
            other = _random_other_support(n, support, rng)
            second = intersect_span_with_support(f, basis, other, span)
            dims2.append(second.dim)
            trial_gaps.append(second.gap)
            trial_cos.append(second.cos_gap)
        supports.append([support.tolist(), None if other is None else other.tolist()])
        gaps.append(min(trial_gaps))
        cos_gaps.append(min(trial_cos))
    cond1 = all(d == 1 for d in dims1)
    cond2 = all(d == 0 for d in dims2)
    min_gap = float(min(gaps)) if gaps else 1.0
    if not (cond1 and cond2):
        verdict = "fail"
    elif min_gap <= GAP_TOL:
        verdict = "inconclusive"
    else:
        verdict = "pass"
    return Certificate(spec, K, seed, trials, supports, dims1, dims2, gaps, cos_gaps, cond1, cond2, min_gap, verdict)


@dataclass
class Sweep:
    certificates: list

    @property
    def largest_passing_K(self):
        """Largest ``K`` such that every smaller tested ``K`` also passed."""
        best = 0
        for c in sorted(self.certificates, key=lambda c: c.K):
            if not c.passed:
                break
            best = c.K
        return best

    def table(self):
        return [(c.K, c.verdict, c.min_gap) for c in self.certificates]


def sweep_K(spec, basis, Ks, trials=20, seed=0):
    Ks = list(Ks)
    if any(not 1 <= k <= spec.N for k in Ks):
        raise ValidationError(f"K range must lie in [1, {spec.N}]")
    return Sweep([certify_basis(spec, basis, k, trials, seed) for k in Ks])

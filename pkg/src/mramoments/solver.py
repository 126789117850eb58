"""Sparse recovery from second moments.

The unknown signal is ``h . A0`` for a factor ``A0`` of the Grams and an
unknown ambiguity element ``h``. :func:`recover` combines two projections:
the best ``K``-term approximation in the sparsity basis, and the closest
point of the ambiguity orbit (block-wise Procrustes against ``A0``, so the
Grams are matched exactly by every reported iterate). Plain alternation of
the two stalls easily near the identifiability limit, so each restart first
runs Douglas-Rachford steps and then finishes with monotone alternating
projections. A polishing step intersects the orbit span with the span of
the selected basis vectors, which returns the planted signal to machine
precision once the support is right.
"""

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .moments import gram_distance, population_gram, signal_distance_up_to_phase
from .rep import (AmbiguityElement, BlockSignal, ValidationError, flatten, orbit_span_basis,
                  random_ambiguity, sparsity_bound, unflatten)
from .seeding import STREAM_RESTARTS, derive_rng

EIG_TOL = 1e-10
ORACLE_NULL_TOL = 1e-8


class InfeasibleError(ValueError):
    """No signal of the given representation has these Grams."""


class OracleLimitError(ValidationError):
    """Instance too large for exhaustive support enumeration."""


METHODS = ("douglas_rachford", "alternating", "support_search")
SCHEDULES = ("linear",)


@dataclass
class SolverOptions:
    """``max_iters`` counts all iterations of one restart; the last
    ``refine_iters`` of them are monotone alternating projections."""

    restarts: int = 25
    max_iters: int = 600
    tol: float = 1e-9
    threshold_schedule: str = "linear"
    anneal_fraction: float = 1 / 3
    method: str = "douglas_rachford"
    refine_iters: int = 100
    polish: bool = True
    polish_every: int = 10
    strict: bool = True
    keep_trace: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.threshold_schedule not in SCHEDULES:
            raise ValidationError(f"unknown threshold schedule {self.threshold_schedule!r}")
        if self.restarts < 1 or self.max_iters < 1 or self.tol <= 0:
            raise ValidationError("restarts and max_iters must be positive and tol > 0")
        if not 0 < self.anneal_fraction <= 1:
            raise ValidationError("anneal_fraction must lie in (0, 1]")


@dataclass(eq=False)
class RecoveryProblem:
    spec: object
    grams: object
    basis: object
    K: int
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.grams.spec != self.spec or self.basis.spec != self.spec:
            raise ValidationError("grams, basis and problem spec differ")
        if not 1 <= self.K <= self.spec.N:
            raise ValidationError(f"K={self.K} outside [1, {self.spec.N}]")
        if self.options.strict and not self.grams.is_psd():
            raise ValidationError("Gram matrices must be positive semidefinite")


@dataclass(eq=False)
class RecoveryResult:
    estimate: BlockSignal
    residual: float
    sparsity_violation: float
    status: str
    restarts_used: int
    restart_index: int
    iterations: int
    traces: list = field(default_factory=list, repr=False)

    def to_dict(self):
        from .serialize import signal_to_dict
        return {
            "estimate": signal_to_dict(self.estimate),
            "residual": self.residual,
            "sparsity_violation": self.sparsity_violation,
            "status": self.status,
            "restarts_used": self.restarts_used,
            "restart_index": self.restart_index,
            "iterations": self.iterations,
        }


def factor_gram(grams, strict=True):
    """A signal whose Grams are ``grams``: ``A_l = Lambda^{1/2} Q^*`` from
    ``G_l = Q Lambda Q^*``, top ``min(N_l, R_l)`` components, zero rows below.

    With ``strict=False`` negative eigenvalues are clipped and ranks above
    ``N_l`` truncated (the nearest feasible Grams) instead of raising.
    """
    spec = grams.spec
    mats = []
    for i, (g, b) in enumerate(zip(grams.grams, spec.blocks)):
        g = g.real if spec.is_real else g
        w, q = np.linalg.eigh((g + g.conj().T) / 2)
        w, q = w[::-1], q[:, ::-1]
        top = max(w[0], 0.0)
        rank = int(np.sum(w > EIG_TOL * top)) if top > 0 else 0
        if rank > b.dim and strict:
            raise InfeasibleError(f"block {i}: Gram rank {rank} exceeds block dimension {b.dim}")
        k = min(b.dim, b.mult)
        a = np.zeros((b.dim, b.mult), dtype=complex)
        a[:k] = np.sqrt(np.clip(w[:k], 0, None))[:, None] * q[:, :k].conj().T
        mats.append(a * spec.block_phase(i))
    return BlockSignal(spec, tuple(mats))


def _procrustes_factors(spec, current, target):
    factors = []
    for i, (a, t) in enumerate(zip(current, target)):
        m = t @ a.conj().T
        if spec.is_real:
            m = m.real
        w, _, vh = np.linalg.svd(m)
        factors.append(w @ vh)
    return factors


def block_procrustes(current, target):
    """Per-block unitary (orthogonal in the real field) ``U_l`` minimising
    ``||U_l A_l - T_l||_F``: ``U_l = W V^*`` from ``T_l A_l^* = W S V^*``."""
    if current.spec != target.spec:
        raise ValidationError("signals belong to different specs")
    return AmbiguityElement(current.spec, tuple(_procrustes_factors(current.spec, current.matrices, target.matrices)))


def _top_k(c, k):
    # stable sort: equal magnitudes keep the lowest index first
    return np.sort(np.argsort(-np.abs(c), kind="stable")[:k])


def hard_threshold(f, basis, K):
    """Best ``K``-term approximation of ``f`` in ``basis``."""
    if not 1 <= K <= basis.N:
        raise ValidationError(f"K={K} outside [1, {basis.N}]")
    c = basis.coefficients(f)
    kept = np.zeros_like(c)
    idx = _top_k(c, K)
    kept[idx] = c[idx]
    return unflatten(f.spec, basis.synthesize(kept), project=True)


def sparsity_violation(f, basis, K):
    """l2 mass of the basis coefficients outside the best ``K``-support."""
    c = basis.coefficients(f)
    rest = np.ones(c.size, dtype=bool)
    rest[_top_k(c, K)] = False
    return float(np.linalg.norm(c[rest]))


class _Engine:
    """Flat-vector kernels shared by the restarts of one problem."""

    def __init__(self, problem):
        self.problem = problem
        self.spec = problem.spec
        self.basis = problem.basis
        self.anchor = factor_gram(problem.grams, strict=problem.options.strict)
        self.anchor_blocks = self.anchor.matrices
        self.span = orbit_span_basis(self.anchor)
        self.q = problem.basis.basis
        self.qh = self.q.conj().T
        # blocks of equal shape are handled as one stacked batch
        groups = {}
        for i, (o, b) in enumerate(zip(self.spec.offsets, self.spec.blocks)):
            local = np.arange(b.size).reshape((b.dim, b.mult), order="F")
            groups.setdefault((b.dim, b.mult), []).append(o + local)
        self.groups = []
        for idx in groups.values():
            idx = np.stack(idx)
            anchor = flatten(self.anchor)[idx]
            self.groups.append((idx, anchor, anchor.conj().transpose(0, 2, 1)))

    def coefficients(self, x):
        c = self.qh @ x
        return c.real if self.spec.is_real else c

    def blocks(self, x):
        return [x[o:o + b.size].reshape((b.dim, b.mult), order="F")
                for o, b in zip(self.spec.offsets, self.spec.blocks)]

    def anchored(self, factors):
        return np.concatenate([(u @ a).reshape(-1, order="F") for u, a in zip(factors, self.anchor_blocks)])

    def project_orbit(self, target_flat):
        out = np.empty(self.spec.N, dtype=complex)
        for idx, anchor, anchor_h in self.groups:
            m = target_flat[idx] @ anchor_h
            if self.spec.is_real:
                m = m.real
            w, _, vh = np.linalg.svd(m)
            out[idx] = (w @ vh) @ anchor
        return out

    def threshold(self, x, k):
        c = self.coefficients(x)
        kept = np.zeros_like(c)
        idx = _top_k(c, k)
        kept[idx] = c[idx]
        return self.q @ kept

    def violation(self, x, k):
        c = self.coefficients(x)
        rest = np.ones(c.size, dtype=bool)
        rest[_top_k(c, k)] = False
        return float(np.linalg.norm(c[rest]))

    def _line(self, x, width):
        """Unit direction of ``L_S`` closest to the orbit span, ``S`` = the
        ``width`` largest coefficients of ``x``."""
        support = _top_k(self.coefficients(x), width)
        qs = self.q[:, support]
        prod = self.span.conj().T @ qs
        if self.spec.is_real:
            prod = prod.real
        _, _, vh = np.linalg.svd(prod)
        return qs @ vh[0].conj()

    def polish(self, x, k):
        """Map back onto the orbit the closest direction to the orbit span
        inside the span of the top-``k`` basis vectors and inside the span
        of the top ``N - dim L_f + 1`` basis vectors. The latter meets the
        orbit span in a single line, which is the planted signal as soon as
        its support is among those coefficients."""
        best, best_v = x, self.violation(x, k)
        widths = {k, min(self.spec.N, self.spec.N - self.span.shape[1] + 1)}
        for width in sorted(widths):
            if width < 1 or self.span.shape[1] == 0:
                continue
            cand = self.project_orbit(self._line(x, width))
            v = self.violation(cand, k)
            if v < best_v:
                best, best_v = cand, v
        return best


def _distance_flat(spec, x, y):
    inner = np.vdot(y, x)
    if spec.is_real:
        phase = -1.0 if inner.real < 0 else 1.0
    else:
        phase = inner / abs(inner) if abs(inner) > 0 else 1.0
    return float(np.linalg.norm(x - phase * y))


def _schedule(n, K, it, anneal):
    return K if it >= anneal else int(round(n - (n - K) * it / anneal))


def _run_restart(engine, start, opts, K):
    """One restart; returns (orbit point, iterations, status, trace).

    Iterations ``1..explore`` are Douglas-Rachford steps
    ``x <- x + P_S(2 P_O x - x) - P_O x`` (``P_O`` orbit projection,
    ``P_S`` hard thresholding at ``K_t``); the reported iterate is the orbit
    point ``P_O x``. The remaining iterations are plain alternating
    projections from that point, whose sparsity violation cannot increase.
    """
    n, spec = engine.spec.N, engine.spec
    total = opts.max_iters
    anneal = max(1, math.ceil(total * opts.anneal_fraction))
    explore = max(0, total - opts.refine_iters) if opts.method == "douglas_rachford" else 0
    x = start
    shadow = start
    trace = []
    status = "max_iters"
    it = 0
    for it in range(1, total + 1):
        k_t = _schedule(n, K, it, anneal)
        if it <= explore:
            reflected = 2 * shadow - x
            x = x + engine.threshold(reflected, k_t) - shadow
            new = engine.project_orbit(x)
        else:
            new = engine.project_orbit(engine.threshold(shadow, k_t))
        step = _distance_flat(spec, new, shadow)
        shadow = new
        viol = engine.violation(shadow, K)
        if opts.polish and it >= anneal and it % opts.polish_every == 0 and viol >= opts.tol:
            cand = engine.polish(shadow, K)
            cand_viol = engine.violation(cand, K)
            # during exploration only a solution is accepted, so the
            # Douglas-Rachford dynamics are left untouched otherwise
            if cand_viol < opts.tol or (it > explore and cand_viol < viol):
                shadow, viol = cand, cand_viol
        if opts.keep_trace:
            resid = gram_distance(population_gram(unflatten(spec, shadow)), engine.problem.grams)
            trace.append((it, resid, viol))
        if it >= anneal and viol < opts.tol:
            status = "converged"
            break
        if it > explore and it > anneal and step < opts.tol:
            status = "failed"
            break
    return shadow, it, status, trace


def recover(problem, seed=0):
    """Best-of-restarts alternating recovery; see the module docstring.

    Restart 0 starts from the Gram factor itself, restart ``r > 0`` from a
    random ambiguity applied to it (stream ``(seed, RESTARTS, r)``). The
    chosen restart minimises ``(sparsity_violation, residual, index)``;
    the search stops early once a restart meets ``tol`` on both.
    """
    opts = problem.options
    spec, K = problem.spec, problem.K
    if K > sparsity_bound(spec).K_max:
        warnings.warn(f"K={K} exceeds the generic identifiability bound K_max={sparsity_bound(spec).K_max}",
                      stacklevel=2)
    if opts.method == "support_search":
        return support_search(problem, seed)
    engine = _Engine(problem)
    best, traces = None, []
    used = 0
    for r in range(opts.restarts):
        used = r + 1
        if r == 0:
            start = flatten(engine.anchor)
        else:
            h = random_ambiguity(spec, derive_rng(seed, STREAM_RESTARTS, r))
            start = engine.anchored(h.factors)
        x, iters, _, trace = _run_restart(engine, start, opts, K)
        if opts.keep_trace:
            traces.append(trace)
        est = unflatten(spec, x, project=True)
        viol = engine.violation(flatten(est), K)
        resid = gram_distance(population_gram(est), problem.grams)
        key = (viol, resid, r)
        if best is None or key < best[0]:
            best = (key, est, iters)
        if viol < opts.tol and resid < opts.tol:
            break
    (viol, resid, idx), est, iters = best
    if viol < opts.tol and resid < opts.tol:
        status = "converged"
    elif iters >= opts.max_iters:
        status = "max_iters"
    else:
        status = "failed"
    return RecoveryResult(est, resid, viol, status, used, idx, iters, traces)


def _gram_jacobian(engine, qs, c):
    """Gram residuals and their real Jacobian for ``x = Q_S c``, batched.

    ``qs``: ``(B, N, K)``; ``c``: ``(B, K)``. Residual entries are the real
    (and, for the complex field, imaginary) parts of ``A^* A - G`` for every
    block; Jacobian columns follow ``Re c`` then ``Im c``.
    """
    real = engine.spec.is_real
    x = np.einsum("bnk,bk->bn", qs, c)
    res, jac = [], []
    for (idx, _, _), target in zip(engine.groups, engine.targets):
        a = x[:, idx]                           # (B, g, d, r)
        da = qs[:, idx, :]                      # (B, g, d, r, K)
        gram = np.einsum("bgdr,bgds->bgrs", a.conj(), a) - target
        xk = np.einsum("bgdr,bgdsk->bgrsk", a.conj(), da)
        xh = xk.conj().swapaxes(2, 3)
        cols = [xk + xh] if real else [xk + xh, 1j * (xk - xh)]
        b = gram.shape[0]
        parts = [gram.real] if real else [gram.real, gram.imag]
        res.append(np.concatenate([p.reshape(b, -1) for p in parts], axis=1))
        blocks = []
        for col in cols:
            col = col.reshape(b, -1, col.shape[-1])
            blocks.append(np.concatenate([col.real] if real else [col.real, col.imag], axis=1))
        jac.append(np.concatenate(blocks, axis=2))
    return np.concatenate(res, axis=1), np.concatenate(jac, axis=1)


def _levenberg_marquardt(engine, qs, c, iters):
    """Damped Gauss-Newton on the Gram residual for each batch row."""
    real = engine.spec.is_real
    k = c.shape[1]
    r, j = _gram_jacobian(engine, qs, c)
    cost = np.einsum("bi,bi->b", r, r)
    lam = np.full(c.shape[0], 1e-3)
    eye = np.eye(j.shape[2])
    for _ in range(iters):
        jt = j.swapaxes(1, 2)
        h = jt @ j
        scale = np.trace(h, axis1=1, axis2=2) / h.shape[1]
        # the damping floor also handles the global-phase null direction
        damped = h + (np.maximum(lam, 1e-10) * np.maximum(scale, 1e-300))[:, None, None] * eye
        step = -np.linalg.solve(damped, (jt @ r[:, :, None]))[:, :, 0]
        trial = c + (step if real else step[:, :k] + 1j * step[:, k:])
        r_new, j_new = _gram_jacobian(engine, qs, trial)
        cost_new = np.einsum("bi,bi->b", r_new, r_new)
        ok = cost_new < cost
        c[ok], r[ok], j[ok], cost[ok] = trial[ok], r_new[ok], j_new[ok], cost_new[ok]
        lam = np.where(ok, lam / 3, lam * 4)
    return c, np.sqrt(cost)


def support_search(problem, seed=0, max_dim=16, max_supports=10_000, iters=30, chunk=32):
    """Exhaustive support enumeration with a local Gram fit on each support.

    For every ``K``-support ``S`` (lexicographic order), ``restarts`` random
    coefficient vectors on ``S`` are refined by Levenberg-Marquardt on
    ``||Gram(Q_S c) - G||``; the first support whose fit reaches ``tol``
    (relative to ``||G||``) is mapped onto the orbit with Procrustes and
    returned. Needed where the orbit span is the whole space (the cyclic
    model), so that no linear intersection singles out the support. Same
    size limits as :func:`exact_oracle`.
    """
    opts = problem.options
    spec, K = problem.spec, problem.K
    n = spec.N
    if n > max_dim or math.comb(n, K) > max_supports:
        raise OracleLimitError(f"N={n}, C(N,K)={math.comb(n, K)} exceeds the exhaustive-search limits")
    engine = _Engine(problem)
    engine.targets = [np.stack([problem.grams.grams[i] for i in _block_ids(spec, idx)])
                      for idx, _, _ in engine.groups]
    gnorm = max(math.sqrt(sum(np.linalg.norm(g) ** 2 for g in problem.grams.grams)), 1e-300)
    scale = math.sqrt(max(problem.grams.trace(), 0.0) / K)
    rng = derive_rng(seed, STREAM_RESTARTS, 0)
    starts = rng.standard_normal((opts.restarts, K))
    if not spec.is_real:
        starts = (starts + 1j * rng.standard_normal((opts.restarts, K))) / math.sqrt(2)
    starts = starts * scale
    q = problem.basis.basis
    supports = itertools.combinations(range(n), K)
    tried = 0
    while True:
        batch = list(itertools.islice(supports, chunk))
        if not batch:
            break
        tried += len(batch)
        qs = np.repeat(np.stack([q[:, s] for s in batch]), opts.restarts, axis=0)
        c, fit = _levenberg_marquardt(engine, qs, np.tile(starts, (len(batch), 1)), iters)
        good = np.flatnonzero(fit / gnorm < opts.tol)
        if good.size:
            i = good[0]
            x = engine.project_orbit(qs[i] @ c[i])
            est = unflatten(spec, x, project=True)
            viol = engine.violation(flatten(est), K)
            resid = gram_distance(population_gram(est), problem.grams)
            status = "converged" if viol < opts.tol and resid < opts.tol else "failed"
            return RecoveryResult(est, resid, viol, status, opts.restarts, int(i % opts.restarts), tried)
    est = engine.anchor
    return RecoveryResult(est, gram_distance(population_gram(est), problem.grams),
                          engine.violation(flatten(est), K), "failed", opts.restarts, 0, tried)


def _block_ids(spec, idx):
    """Block indices of the stacked flat-index group ``idx``."""
    starts = {o: i for i, o in enumerate(spec.offsets)}
    return [starts[int(block[0, 0])] for block in idx]


@dataclass
class OracleResult:
    verdict: str  # "unique", "infeasible" or "ambiguous"
    estimate: BlockSignal = None
    support: tuple = None
    hits: list = field(default_factory=list)


def _real_coords(spec, m):
    return (m / spec.entry_phases()[:, None]).real if spec.is_real else m


def exact_oracle(problem, max_dim=16, max_supports=10_000, null_tol=ORACLE_NULL_TOL):
    """Exhaustive search over all ``K``-supports for those whose span meets
    the orbit span; unique iff exactly one support meets it, in a line.

    ``dim(L_f cap L_S)`` is the nullity of ``P Q_S`` with ``P`` an orthonormal
    basis of the complement of ``L_f``: singular values below ``null_tol``
    count. Near-misses are common at ``K = K_max`` among thousands of
    supports, so this is much tighter than the certifier's cosine rule.
    """
    spec, K = problem.spec, problem.K
    n = spec.N
    if n > max_dim or math.comb(n, K) > max_supports:
        raise OracleLimitError(f"N={n}, C(N,K)={math.comb(n, K)} exceeds the exhaustive-search limits")
    anchor = factor_gram(problem.grams, strict=True)
    span = _real_coords(spec, orbit_span_basis(anchor))
    q = _real_coords(spec, problem.basis.basis)
    u, s, _ = np.linalg.svd(span, full_matrices=True)
    comp = u[:, span.shape[1]:].conj().T
    pq = comp @ q
    hits = []
    for support in itertools.combinations(range(n), K):
        sv = np.linalg.svd(pq[:, support], compute_uv=False)
        nullity = K - int(np.sum(sv > null_tol))
        if nullity > 0:
            hits.append((support, nullity))
    if not hits:
        return OracleResult("infeasible", hits=hits)
    if len(hits) > 1 or hits[0][1] != 1:
        return OracleResult("ambiguous", hits=hits)
    support = hits[0][0]
    _, _, vh = np.linalg.svd(pq[:, support])
    w = vh[-1].conj()
    qs = problem.basis.basis[:, support]
    if spec.is_real:
        w = w.real
    v = unflatten(spec, qs @ w, project=True)
    h = block_procrustes(anchor, v)
    est = BlockSignal(spec, tuple(u @ a for u, a in zip(h.factors, anchor.matrices)))
    return OracleResult("unique", est, support, hits)


def planted_error(estimate, truth):
    """Distance up to phase, absolute and relative to ``||truth||``."""
    d = signal_distance_up_to_phase(estimate, truth)
    return d, d / max(truth.norm(), 1e-300)

"""Command-line experiment driver.

    python3 -m mramoments <subcommand> --config run.json [--seed S] [--out PATH] [--threads K]

Subcommands: ``bound``, ``certify``, ``recover``, ``sweep``, ``simulate``.
Exit codes: 0 success, 1 usage or config error, 2 experiment failure,
3 inconclusive certificate.
"""

import argparse
import csv
import io
import json
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import config as configmod
from .certify import certify_basis, sweep_K
from .models import model_from_config, moment_signal, simulate_batch, simulate_moment
from .moments import debias, gram_distance, population_gram, project_to_grams
from .rep import BlockSignal, SparseBasis, ValidationError, random_basis, random_signal, sparsity_bound
from .seeding import STREAM_BASIS, STREAM_SIGNAL, derive_rng
from .serialize import config_hash, dumps, signal_to_dict, write_batch
from .solver import InfeasibleError, RecoveryProblem, SolverOptions, planted_error, recover

EXIT_OK, EXIT_USAGE, EXIT_FAILURE, EXIT_INCONCLUSIVE = 0, 1, 2, 3
SWEEP_COLUMNS = ("model", "sigma", "n", "seed", "gram_error", "recovery_error", "success", "wall_time_ms")


class UsageError(Exception):
    pass


def cryo_closed_form_ratio(L):
    """``K_max / N`` for cryo-EM with ``R = 2L + 1`` shells."""
    return (2 / 3 * L ** 3 + L ** 2 + L / 3) / (2 * L ** 3 + 5 * L ** 2 + 4 * L + 1)


def _provenance(cfg, seeds):
    return {"config_sha256": config_hash(cfg.provenance_dict()), "seeds": list(seeds)}


def _basis(cfg, spec, seed):
    if cfg["basis"] == "standard":
        return SparseBasis.standard(spec)
    return random_basis(spec, derive_rng(seed, STREAM_BASIS, 0))


def cmd_bound(cfg):
    model = model_from_config(cfg.params)
    spec = model.moment_spec
    b = sparsity_bound(spec)
    row = {"model": model.name, "params": model.params, "N": b.N, "M": b.M, "K_max": b.K_max,
           "ratio": b.ratio}
    if model.name == "cryo_em":
        L, R = model.params["L"], model.params["R"]
        closed = cryo_closed_form_ratio(L)
        row["closed_form_ratio"] = closed
        if R == 2 * L + 1:
            # the closed form is the N - M arithmetic at R = 2L + 1
            if abs(closed - b.ratio) > 1e-12:
                raise AssertionError(f"closed form {closed} disagrees with N-M arithmetic {b.ratio}")
            row["closed_form_matches"] = True
        else:
            row["closed_form_matches"] = None
    row["provenance"] = _provenance(cfg, [])
    return row, EXIT_OK


def format_bound(row):
    out = [f"{'N':>8} {'M':>8} {'K_max':>8} {'K_max/N':>10}",
           f"{row['N']:>8} {row['M']:>8} {row['K_max']:>8} {row['ratio']:>10.4f}"]
    if "closed_form_ratio" in row:
        out.append(f"closed form K/N bound: {row['closed_form_ratio']:.4f}")
    return "\n".join(out)


def cmd_certify(cfg):
    model = model_from_config(cfg.params)
    spec = model.moment_spec
    seed = cfg["seed"]
    basis = _basis(cfg, spec, seed)
    if "K_range" in cfg.params:
        sweep = sweep_K(spec, basis, cfg["K_range"], cfg["trials"], seed)
        doc = {"sweep": [c.to_dict() for c in sweep.certificates],
               "largest_passing_K": sweep.largest_passing_K}
        verdicts = [c.verdict for c in sweep.certificates]
        target = next(c for c in sweep.certificates if c.K == cfg["K"]) if cfg["K"] in cfg["K_range"] else None
        verdict = target.verdict if target else ("pass" if all(v == "pass" for v in verdicts) else "fail")
    else:
        cert = certify_basis(spec, basis, cfg["K"], cfg["trials"], seed)
        doc = cert.to_dict()
        verdict = cert.verdict
    doc["provenance"] = _provenance(cfg, [seed])
    code = {"pass": EXIT_OK, "fail": EXIT_FAILURE, "inconclusive": EXIT_INCONCLUSIVE}[verdict]
    return doc, code


def _to_moment_basis(model, basis):
    """Re-index a basis of ``model.spec`` to the flat layout of ``model.moment_spec``."""
    if model.moment_spec is model.spec:
        return basis
    lp, r = model.params["L_prime"], model.params["R"]
    n_freq = 2 * lp + 1
    k, rr = np.divmod(np.arange(n_freq * r), r)
    perm = rr * n_freq + k
    q = np.empty_like(basis.basis)
    q[perm] = basis.basis
    return SparseBasis(model.moment_spec, q)


def plant(model, K, seed, basis_kind="random", normalize=False):
    """Planted ``K``-sparse signal of ``model.spec`` and its basis."""
    spec = model.spec
    if basis_kind == "standard":
        basis = SparseBasis.standard(spec)
    else:
        basis = random_basis(spec, derive_rng(seed, STREAM_BASIS, 0))
    f = random_signal(spec, derive_rng(seed, STREAM_SIGNAL, 0), K=K, basis=basis)
    if normalize:
        f = BlockSignal(spec, tuple(a / f.norm() for a in f.matrices))
    return f, basis


def estimate_grams(model, f, n, sigma, seed, threads=1):
    moment = simulate_moment(model, f, n, sigma, seed, threads=threads)
    return project_to_grams(debias(moment, sigma), model)


def _solver_options(cfg, strict):
    return SolverOptions(restarts=cfg["restarts"], max_iters=cfg["max_iters"], tol=cfg["tol"],
                         method=cfg["method"], strict=strict, keep_trace="trace" in cfg.params)


def run_recovery(model, cfg, seed, n=None, sigma=None, threads=1):
    """Plant, estimate Grams (exact when ``n`` is None), recover.

    Returns ``(result, truth, grams, gram_error, relative_error)``.
    """
    f, basis = plant(model, cfg["K"], seed, cfg["basis"], cfg["normalize"])
    truth = moment_signal(f, model)
    exact = population_gram(truth)
    if n is None:
        grams, strict = exact, True
    else:
        grams, strict = estimate_grams(model, f, n, sigma, seed, threads), False
    problem = RecoveryProblem(model.moment_spec, grams, _to_moment_basis(model, basis), cfg["K"],
                              _solver_options(cfg, strict))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = recover(problem, seed)
    _, rel = planted_error(result.estimate, truth)
    return result, truth, grams, gram_distance(grams, exact), rel


def cmd_recover(cfg, threads=1):
    model = model_from_config(cfg.params)
    seed = cfg["seed"]
    empirical = cfg["grams"] == "empirical"
    try:
        result, truth, _, gram_err, rel = run_recovery(
            model, cfg, seed, cfg.get("n") if empirical else None, cfg["sigma"], threads)
    except InfeasibleError as exc:
        return {"error": "infeasible", "message": str(exc), "provenance": _provenance(cfg, [seed])}, EXIT_FAILURE
    if "trace" in cfg.params:
        from .serialize import write_trace_csv
        write_trace_csv(cfg["trace"], result.traces)
    success = bool(rel < cfg["gate"])
    doc = {
        "result": result.to_dict(),
        "truth": signal_to_dict(truth),
        "distance": rel * truth.norm(),
        "recovery_error": rel,
        "gram_error": gram_err,
        "gate": cfg["gate"],
        "success": success,
        "provenance": _provenance(cfg, [seed]),
    }
    return doc, EXIT_OK if success else EXIT_FAILURE


@dataclass(frozen=True)
class SweepRecord:
    model: str
    sigma: float
    n: int
    seed: int
    gram_error: float
    recovery_error: float
    success: bool
    wall_time_ms: float

    def row(self):
        return [self.model, repr(float(self.sigma)), str(self.n), str(self.seed), repr(self.gram_error),
                repr(self.recovery_error), "true" if self.success else "false", repr(self.wall_time_ms)]


def sweep_point(model, cfg, sigma, n, seed):
    t0 = time.perf_counter()
    _, _, _, gram_err, rel = run_recovery(model, cfg, seed, n, sigma)
    ms = (time.perf_counter() - t0) * 1e3 if cfg["timing"] else 0.0
    return SweepRecord(model.name, float(sigma), int(n), int(seed), float(gram_err), float(rel),
                       bool(rel < cfg["gate"]), float(ms))


def cmd_sweep(cfg, threads=1):
    model = model_from_config(cfg.params)
    grid = [(s, n, seed) for s in cfg["sigmas"] for n in cfg["ns"] for seed in cfg["seeds"]]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            records = list(pool.map(lambda p: sweep_point(model, cfg, *p), grid))
    else:
        records = [sweep_point(model, cfg, *p) for p in grid]
    records.sort(key=lambda r: (r.sigma, r.n, r.seed))
    return records, EXIT_OK


def sweep_csv(records, cfg):
    buf = io.StringIO()
    prov = _provenance(cfg, cfg["seeds"])
    buf.write(f"# config_sha256={prov['config_sha256']}\n")
    buf.write(f"# seeds={json.dumps(prov['seeds'])}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def read_sweep_csv(text):
    rows = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
    out = []
    for row in rows:
        out.append(SweepRecord(
            row["model"], float(row["sigma"]), int(row["n"]), int(row["seed"]), float(row["gram_error"]),
            float(row["recovery_error"]), row["success"] == "true", float(row["wall_time_ms"])))
    return out


def cmd_simulate(cfg, out, threads=1):
    if out is None:
        raise UsageError("simulate needs --out <path> for the batch file")
    model = model_from_config(cfg.params)
    seed = cfg["seed"]
    if "K" in cfg.params:
        f, _ = plant(model, cfg["K"], seed, cfg["basis"], cfg["normalize"])
    else:
        f = random_signal(model.spec, derive_rng(seed, STREAM_SIGNAL, 0))
    batch = simulate_batch(model, f, cfg["n"], cfg["sigma"], seed)
    write_batch(out, batch)
    doc = {"batch": str(out), "n": batch.n, "dim": batch.dim, "sigma": batch.sigma, "seed": seed,
           "signal": signal_to_dict(f), "provenance": _provenance(cfg, [seed])}
    return doc, EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="mramoments", description="Sparse second-moment identifiability experiments.")
    p.add_argument("subcommand", choices=configmod.SUBCOMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="64-bit seed; overrides the config")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (outputs do not depend on it)")
    return p


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        cfg = configmod.load(args.subcommand, args.config)
        if args.seed is not None:
            if not 0 <= args.seed <= configmod.U64_MAX:
                raise UsageError("--seed must be an unsigned 64-bit integer")
            cfg.params["seed"] = args.seed
            if args.subcommand == "sweep":
                cfg.params["seeds"] = [args.seed]
        sub = args.subcommand
        if sub == "bound":
            row, code = cmd_bound(cfg)
            sys.stdout.write(format_bound(row) + "\n")
            if args.out:
                _emit(dumps(row), args.out)
        elif sub == "certify":
            doc, code = cmd_certify(cfg)
            _emit(dumps(doc), args.out)
        elif sub == "recover":
            doc, code = cmd_recover(cfg, args.threads)
            _emit(dumps(doc), args.out)
        elif sub == "sweep":
            records, code = cmd_sweep(cfg, args.threads)
            _emit(sweep_csv(records, cfg), args.out)
        else:
            doc, code = cmd_simulate(cfg, args.out, args.threads)
            sys.stdout.write(dumps(doc))
        return code
    except (UsageError, ValidationError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

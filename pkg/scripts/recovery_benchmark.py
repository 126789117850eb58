"""Planted-signal recovery rate from exact Grams, per model, K and method.

    python scripts/recovery_benchmark.py scripts/configs/recovery_benchmark.json
"""

import json
import sys
import time
import warnings
from dataclasses import dataclass, field

from mramoments.cli import plant
from mramoments.models import build_model
from mramoments.moments import population_gram, signal_distance_up_to_phase
from mramoments.solver import RecoveryProblem, SolverOptions, recover


@dataclass
class Case:
    model: str
    params: dict
    K: int
    method: str = "douglas_rachford"
    restarts: int = 25


@dataclass
class BenchmarkConfig:
    cases: list = field(default_factory=list)
    seeds: int = 20
    gate: float = 1e-6


def run_case(case, seeds, gate):
    model = build_model(case.model, case.params)
    opts = SolverOptions(restarts=case.restarts, method=case.method)
    hits, t0 = 0, time.perf_counter()
    for seed in range(seeds):
        f, basis = plant(model, case.K, seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = recover(RecoveryProblem(model.spec, population_gram(f), basis, case.K, opts), seed).estimate
        hits += signal_distance_up_to_phase(est, f) < gate * f.norm()
    return hits, time.perf_counter() - t0


def main(path=None):
    raw = json.load(open(path)) if path else {}
    cfg = BenchmarkConfig(**{k: v for k, v in raw.items() if k != "cases"})
    cfg.cases = [Case(**c) for c in raw.get("cases", [])]
    for case in cfg.cases:
        hits, secs = run_case(case, cfg.seeds, cfg.gate)
        print(f"{case.model:<16}{json.dumps(case.params):<24}K={case.K:<4}{case.method:<18}"
              f"{hits}/{cfg.seeds}  {secs:.1f}s")


if __name__ == "__main__":
    main(*sys.argv[1:2])

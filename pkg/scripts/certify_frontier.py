"""Certify several random bases over a range of K and report the largest
passing K per basis and the pass count at each K.

    python scripts/certify_frontier.py scripts/configs/certify_frontier.json
"""

import json
import sys
from collections import Counter
from dataclasses import dataclass, field

from mramoments.certify import sweep_K
from mramoments.models import build_model
from mramoments.rep import random_basis, sparsity_bound
from mramoments.seeding import STREAM_BASIS, derive_rng


@dataclass
class FrontierConfig:
    model: str = "rotated_images"
    params: dict = field(default_factory=lambda: {"L_prime": 2, "R": 4})
    K_range: list = field(default_factory=lambda: [12, 13, 14, 15, 16])
    bases: int = 5
    trials: int = 20
    seed: int = 0


def main(path=None):
    cfg = FrontierConfig(**json.load(open(path))) if path else FrontierConfig()
    spec = build_model(cfg.model, cfg.params).spec
    print(f"{cfg.model} {cfg.params}: N={spec.N} M={spec.M} K_max={sparsity_bound(spec).K_max}")
    passes = Counter()
    for b in range(cfg.bases):
        basis = random_basis(spec, derive_rng(cfg.seed, STREAM_BASIS, b))
        sweep = sweep_K(spec, basis, cfg.K_range, cfg.trials, cfg.seed)
        for c in sweep.certificates:
            passes[c.K] += c.verdict == "pass"
        print(f"basis {b}: largest passing K = {sweep.largest_passing_K}, "
              f"verdicts = {[c.verdict for c in sweep.certificates]}")
    for k in cfg.K_range:
        print(f"K={k}: {passes[k]}/{cfg.bases} bases pass")


if __name__ == "__main__":
    main(*sys.argv[1:2])

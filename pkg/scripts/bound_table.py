"""Print N, M and K_max = N - M over a grid of model sizes.

    python scripts/bound_table.py scripts/configs/bound_table.json
"""

import json
import sys
from dataclasses import dataclass, field

from mramoments.models import build_model
from mramoments.rep import sparsity_bound


@dataclass
class BoundTableConfig:
    cyclic_N: list = field(default_factory=lambda: [4, 8, 12])
    dihedral_N: list = field(default_factory=lambda: [5, 6, 8])
    images_L_prime: list = field(default_factory=lambda: [1, 2, 3])
    images_R: list = field(default_factory=lambda: [2, 4, 6])
    cryo_L: list = field(default_factory=lambda: [1, 2, 4])


def rows(cfg):
    for n in cfg.cyclic_N:
        yield "cyclic", {"N": n}
    for n in cfg.dihedral_N:
        yield "dihedral", {"N": n}
    for name in ("rotated_images", "tomography_2d"):
        for lp in cfg.images_L_prime:
            for r in cfg.images_R:
                yield name, {"L_prime": lp, "R": r}
    for ell in cfg.cryo_L:
        yield "cryo_em", {"L": ell, "R": 2 * ell + 1}


def main(path=None):
    cfg = BoundTableConfig(**json.load(open(path))) if path else BoundTableConfig()
    print(f"{'model':<16}{'params':<24}{'N':>6}{'M':>6}{'K_max':>7}{'K/N':>8}")
    for name, params in rows(cfg):
        spec = build_model(name, params).spec
        b = sparsity_bound(spec)
        ratio = max(b.K_max, 0) / b.N
        print(f"{name:<16}{json.dumps(params):<24}{b.N:>6}{b.M:>6}{b.K_max:>7}{ratio:>8.4f}")


if __name__ == "__main__":
    main(*sys.argv[1:2])

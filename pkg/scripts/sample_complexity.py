"""Noisy sweep over sigma and n: log-log slope of the Gram error and the
50% success crossings in n / sigma^4. Takes a ``sweep`` CLI config.

    python scripts/sample_complexity.py scripts/configs/sweep_cyclic.json [out.csv]
"""

import sys

import numpy as np

from mramoments.analysis import loglog_slope, mean_by, success_crossings
from mramoments.cli import cmd_sweep, sweep_csv
from mramoments.config import load


def main(path, out=None):
    cfg = load("sweep", path)
    records, _ = cmd_sweep(cfg)
    if out:
        with open(out, "w") as fh:
            fh.write(sweep_csv(records, cfg))
    for sigma in cfg["sigmas"]:
        sub = [r for r in records if r.sigma == sigma]
        errs = mean_by(sub, lambda r: r.n, lambda r: r.gram_error)
        rates = mean_by(sub, lambda r: r.n, lambda r: float(r.success))
        print(f"sigma={sigma}: slope={loglog_slope(list(errs), list(errs.values())):+.3f}")
        for n in errs:
            print(f"  n={n:<9} gram_error={errs[n]:.3e} success={rates[n]:.2f}")
    crossings = success_crossings(records, exponent=4)
    print("crossings in n/sigma^4:", {s: None if c is None else float(np.round(c, 1)) for s, c in crossings.items()})


if __name__ == "__main__":
    main(*sys.argv[1:3])

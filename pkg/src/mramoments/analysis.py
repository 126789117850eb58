"""Summaries of sweep output: scaling slopes and success-rate crossings."""

from collections import defaultdict

import numpy as np


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("need at least two positive points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def mean_by(records, key, value):
    """``{key(r): mean(value(r))}`` sorted by key."""
    groups = defaultdict(list)
    for r in records:
        groups[key(r)].append(value(r))
    return dict(sorted((k, float(np.mean(v))) for k, v in groups.items()))


def crossing(x, rate, level=0.5):
    """First ``x`` where ``rate`` reaches ``level``, interpolated linearly in
    ``log x``; ``None`` if the curve never gets there."""
    x, rate = np.asarray(x, dtype=float), np.asarray(rate, dtype=float)
    order = np.argsort(x)
    x, rate = x[order], rate[order]
    if rate[0] >= level:
        return float(x[0])
    for i in range(1, x.size):
        if rate[i] >= level:
            t = (level - rate[i - 1]) / (rate[i] - rate[i - 1])
            return float(np.exp(np.log(x[i - 1]) + t * (np.log(x[i]) - np.log(x[i - 1]))))
    return None


def success_crossings(records, exponent=4, level=0.5):
    """Per ``sigma``: the 50% success crossing in ``n / sigma**exponent``."""
    out = {}
    for sigma in sorted({r.sigma for r in records}):
        rates = mean_by([r for r in records if r.sigma == sigma], lambda r: r.n, lambda r: float(r.success))
        c = crossing(list(rates), list(rates.values()), level)
        out[sigma] = None if c is None else c / sigma ** exponent
    return out

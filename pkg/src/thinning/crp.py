"""Chinese restaurant process with discount ``m`` and strength 0.

Used as an oracle for PD(m, 0): the probability that two distinct customers
share a table is ``E[sum xi_n^2] = 1 - m``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np

from .errors import DomainError
from .seeding import as_seedspec


@numba.njit(cache=True)
def _seat(n_customers, m, seed):
    np.random.seed(seed)
    table = np.empty(n_customers, dtype=np.int64)
    sizes = np.zeros(n_customers, dtype=np.int64)
    table[0] = 0
    sizes[0] = 1
    k = 1
    for i in range(1, n_customers):
        # new table with prob m k / i; otherwise an existing table j with prob (n_j - m) / i
        if np.random.random() < m * k / i:
            t = k
            k += 1
        else:
            while True:
                t = table[np.random.randint(0, i)]
                if np.random.random() * sizes[t] < sizes[t] - m:
                    break
        table[i] = t
        sizes[t] += 1
    return sizes[:k]


def crp_table_sizes(n_customers: int, m: float, seed) -> np.ndarray:
    if not (0.0 <= m < 1.0):
        raise DomainError("discount must lie in [0, 1)")
    if n_customers < 2:
        raise DomainError("need at least two customers")
    s = as_seedspec(seed).seed_sequence().generate_state(1)[0] & 0x7FFFFFFF
    return _seat(int(n_customers), float(m), int(s))


def pair_fraction(sizes) -> float:
    """Fraction of unordered customer pairs seated together."""
    n = np.asarray(sizes, dtype=np.float64)
    tot = n.sum()
    return float((n * (n - 1)).sum() / (tot * (tot - 1)))


class PairMatch(NamedTuple):
    mean: float
    se: float
    reps: int


def crp_pair_match(m: float, n_customers: int = 100_000, reps: int = 200, seed=0) -> PairMatch:
    """Mean and standard error of the pair fraction across independent restaurants."""
    seed = as_seedspec(seed)
    vals = np.array([pair_fraction(crp_table_sizes(n_customers, m, seed.child(r))) for r in range(reps)])
    return PairMatch(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(reps)), reps)

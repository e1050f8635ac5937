"""Permutation two-sample tests, Poisson goodness of fit, and the invariance suite."""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import stats as sps

from .errors import InsufficientData
from .seeding import SeedSpec, as_generator, as_seedspec

PASS, REJECT, INCONCLUSIVE = "pass", "reject", "inconclusive"
DEFAULT_LEVEL = 1e-3
MIN_SAMPLE = 10


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size == 0:
            raise ValueError("an empirical sample must be nonempty")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"sample {self.label!r} contains non-finite values")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _as_sample(x, label=""):
    return x if isinstance(x, EmpiricalSample) else EmpiricalSample(np.asarray(x, dtype=float), label)


@dataclass
class TestReport:
    test_name: str
    statistic: float
    p_value: float
    n_a: int
    n_b: int
    decision: str
    seed: Optional[dict] = None
    metadata: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this as a test class

    @property
    def passed(self) -> bool:
        return self.decision == PASS

    @property
    def rejected(self) -> bool:
        return self.decision == REJECT

    def to_record(self) -> dict:
        return {
            "test_name": self.test_name,
            "statistic": float(self.statistic),
            "p_value": float(self.p_value),
            "n_a": int(self.n_a),
            "n_b": int(self.n_b),
            "decision": self.decision,
            "seed": self.seed,
            "metadata": _jsonable(self.metadata),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, TestReport):
        return obj.to_record()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, SeedSpec):
        return obj.to_record()
    return obj


def decide(p_value: float, level: float, n_a: int, n_b: int, floor: int = MIN_SAMPLE) -> str:
    if min(n_a, n_b) < floor:
        return INCONCLUSIVE
    return REJECT if p_value < level else PASS


def _seed_record(seed):
    if isinstance(seed, SeedSpec):
        return seed.to_record()
    if isinstance(seed, (int, np.integer)):
        return SeedSpec(int(seed)).to_record()
    return None


# --- Permutation Kolmogorov-Smirnov --------------------------------------------


class _KSLayout:
    """Pooled, sorted data; the statistic only needs label counts at tie boundaries."""

    def __init__(self, a: np.ndarray, b: np.ndarray):
        self.n_a, self.n_b = a.size, b.size
        pooled = np.concatenate((a, b))
        order = np.argsort(pooled, kind="stable")
        srt = pooled[order]
        self.labels = (order < a.size).astype(np.int8)
        last = np.flatnonzero(np.diff(srt) != 0)
        self.bounds = np.append(last, srt.size - 1)
        self.upto = (self.bounds + 1).astype(np.int64)

    def scaled_stat(self, labels: np.ndarray) -> np.ndarray:
        """``n_a * n_b * D`` as an exact integer, for one or many label rows."""
        ca = np.cumsum(labels, axis=-1, dtype=np.int64)[..., self.bounds]
        cb = self.upto - ca
        return np.abs(ca * self.n_b - cb * self.n_a).max(axis=-1)


def ks_statistic(a, b) -> float:
    a, b = _as_sample(a).values, _as_sample(b).values
    lay = _KSLayout(a, b)
    return float(lay.scaled_stat(lay.labels)) / (a.size * b.size)


def ks_two_sample_permutation(
    a,
    b,
    resamples: int = 999,
    seed: SeedSpec | int | np.random.Generator = 0,
    *,
    level: float = DEFAULT_LEVEL,
    exhaustive: Optional[bool] = None,
    stop_after: Optional[int] = 50,
    chunk: int = 256,
    min_size: int = MIN_SAMPLE,
    name: str = "ks_permutation",
) -> TestReport:
    """Two-sample KS test calibrated by random relabelling of the pooled data.

    ``resamples`` is the permutation budget. With ``stop_after = h`` the loop
    ends once ``h`` permuted statistics reach the observed one, returning the
    sequential p-value ``h / k``; this is valid and keeps null cases cheap.
    When the number of label splits is at most ``resamples`` (or
    ``exhaustive=True``) every split is enumerated and the p-value is exact.
    """
    sa, sb = _as_sample(a, "a"), _as_sample(b, "b")
    if resamples < 999:
        raise ValueError("use at least 999 resamples")
    lay = _KSLayout(sa.values, sb.values)
    n = sa.values.size + sb.values.size
    obs = int(lay.scaled_stat(lay.labels))
    d = obs / (lay.n_a * lay.n_b)
    n_splits = math.comb(n, lay.n_a)
    if exhaustive is None:
        exhaustive = n_splits <= resamples
    meta = {"resamples": resamples}
    if exhaustive:
        hits = 0
        for combo in itertools.combinations(range(n), lay.n_a):
            lab = np.zeros(n, dtype=np.int8)
            lab[list(combo)] = 1
            hits += int(lay.scaled_stat(lab) >= obs)
        p = hits / n_splits
        meta.update(method="exhaustive", splits=n_splits)
    else:
        rng = as_generator(seed)
        hits = done = 0
        stopped = False
        while done < resamples:
            size = min(chunk, resamples - done)
            rows = rng.permuted(np.broadcast_to(lay.labels, (size, n)), axis=1)
            ge = lay.scaled_stat(rows) >= obs
            if stop_after is not None:
                csum = hits + np.cumsum(ge)
                reach = np.flatnonzero(csum >= stop_after)
                if reach.size:
                    done += int(reach[0]) + 1
                    hits = stop_after
                    stopped = True
                    break
            hits += int(ge.sum())
            done += size
        if stopped:
            p = hits / done
        else:
            p = (hits + 1) / (done + 1)
        meta.update(method="sequential" if stopped else "monte_carlo", permutations=done)
    decision = decide(p, level, lay.n_a, lay.n_b, min_size)
    meta["level"] = level
    return TestReport(name, d, float(min(1.0, p)), lay.n_a, lay.n_b, decision, _seed_record(seed), meta)


# --- Poisson goodness of fit ---------------------------------------------------


def poisson_cells(counts, rate: float, min_expected: float = 5.0):
    """Observed and expected counts over merged cells of Poisson(rate).

    Cells start as ``{0}, {1}, ..., {K-1}, {>= K}`` and adjacent cells are
    merged from both tails until every expected count reaches ``min_expected``.
    """
    c = np.asarray(counts)
    if c.size == 0:
        raise InsufficientData("no counts")
    if np.any(c < 0) or not np.all(c == np.floor(c)):
        raise ValueError("counts must be nonnegative integers")
    c = c.astype(np.int64)
    n = c.size
    top = max(int(c.max()), int(sps.poisson.ppf(1 - 1e-12, rate))) + 1
    probs = sps.poisson.pmf(np.arange(top), rate)
    probs = np.append(probs, sps.poisson.sf(top - 1, rate))
    obs = np.bincount(np.minimum(c, top), minlength=top + 1).astype(float)
    exp = probs * n
    cells_o, cells_e = list(obs), list(exp)
    # merge from the low end
    # pop before indexing: the list is shorter once an element is removed
    while len(cells_e) > 1 and cells_e[0] < min_expected:
        e0, o0 = cells_e.pop(0), cells_o.pop(0)
        cells_e[0] += e0
        cells_o[0] += o0
    while len(cells_e) > 1 and cells_e[-1] < min_expected:
        e1, o1 = cells_e.pop(), cells_o.pop()
        cells_e[-1] += e1
        cells_o[-1] += o1
    i = 1
    while i < len(cells_e) - 1:
        if cells_e[i] < min_expected:
            ei, oi = cells_e.pop(i), cells_o.pop(i)
            cells_e[i] += ei
            cells_o[i] += oi
        else:
            i += 1
    return np.array(cells_o), np.array(cells_e)


def chi_square_poisson(counts, rate: float, *, level: float = DEFAULT_LEVEL, name: str = "chi_square_poisson") -> TestReport:
    """Pearson chi-square of counts against Poisson(rate), tails pooled to expected >= 5."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    o, e = poisson_cells(counts, rate)
    if o.size < 2 or e.min() < 5.0:
        raise InsufficientData(f"pooling left {o.size} usable cells")
    stat = float(np.sum((o - e) ** 2 / e))
    dof = o.size - 1
    p = float(sps.chi2.sf(stat, dof))
    n = int(np.asarray(counts).size)
    return TestReport(name, stat, p, n, n, REJECT if p < level else PASS, None, {"cells": int(o.size), "dof": dof, "level": level})


def ks_one_sample(values, cdf: Callable, *, level: float = DEFAULT_LEVEL, name: str = "ks_one_sample", min_size: int = MIN_SAMPLE):
    """One-sample KS against a continuous reference CDF."""
    v = _as_sample(values).values
    res = sps.kstest(v, cdf)
    return TestReport(name, float(res.statistic), float(res.pvalue), v.size, v.size, decide(res.pvalue, level, v.size, v.size, min_size), None, {"level": level})


def bonferroni(reports: Sequence[TestReport], level: float, name: str, *, seed=None, metadata=None) -> TestReport:
    """Combine already-computed reports whose p-values are unadjusted.

    The combined p-value is ``min(1, k * min p)``; any inconclusive member makes
    the whole inconclusive unless another member already rejects.
    """
    k = len(reports)
    if k == 0:
        raise ValueError("nothing to combine")
    pmin = min(r.p_value for r in reports)
    padj = min(1.0, k * pmin)
    decisions = {r.decision for r in reports}
    if padj < level:
        decision = REJECT
    elif INCONCLUSIVE in decisions:
        decision = INCONCLUSIVE
    else:
        decision = PASS
    meta = dict(metadata or {})
    meta.update(level=level, tests=k, members=[r.to_record() for r in reports])
    return TestReport(name, float(pmin), padj, sum(r.n_a for r in reports), sum(r.n_b for r in reports), decision, _seed_record(seed), meta)


# --- Invariance suite ----------------------------------------------------------


@dataclass(frozen=True)
class Functional:
    """A named real-valued map on sampled structures.

    ``top`` is the number of leading coordinates the value depends on, or
    ``None`` when it reads the whole retained truncation (and is therefore
    sensitive to the tail up to ``mass_error``).
    """

    name: str
    fn: Callable[[Any], float]
    top: Optional[int] = None

    def __call__(self, x) -> float:
        return float(self.fn(x))


@dataclass
class SuiteResult:
    reports: list
    level: float
    corrected_level: float
    seed: Optional[dict] = None
    samples: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(r.decision == PASS for r in self.reports)

    @property
    def rejected(self) -> bool:
        return any(r.decision == REJECT for r in self.reports)

    @property
    def min_p(self) -> float:
        return min(r.p_value for r in self.reports)

    def __iter__(self):
        return iter(self.reports)

    def __len__(self):
        return len(self.reports)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def invariance_suite(
    source: Callable[[SeedSpec], Any],
    transform: Callable[[Any, float, SeedSpec], Any],
    functionals: Sequence[Functional],
    p_values_of_thinning: Iterable[float],
    reps: int = 2000,
    level: float = DEFAULT_LEVEL,
    seed: SeedSpec | int = 0,
    *,
    resamples: Optional[int] = None,
    workers: int = 1,
    name: str = "invariance",
    min_reps: int = 500,
) -> SuiteResult:
    """Compare the source law with its image under ``transform`` for each p.

    For each thinning parameter two independent batches of ``reps`` draws are
    taken from ``source``; the second batch is passed through
    ``transform(x, p, seed)``. Every functional is then compared with a
    permutation KS test at the Bonferroni level ``level / (#p * #functionals)``.
    Replicate ``i`` of cell ``j`` always uses the same derived seed, so the
    outcome does not depend on ``workers``.
    """
    ps = [float(p) for p in p_values_of_thinning]
    funcs = list(functionals)
    if reps < min_reps:
        raise ValueError(f"invariance suite needs at least {min_reps} replicates per cell")
    seed = as_seedspec(seed)
    n_tests = len(ps) * len(funcs)
    alpha = level / n_tests
    if resamples is None:
        resamples = max(999, int(math.ceil(2.0 / alpha)))
    reports = []
    samples = {}
    for j, p in enumerate(ps):
        cell = seed.child(j)

        def ref(i, cell=cell):
            x = source(cell.child(0, i))
            return [f(x) for f in funcs]

        def img(i, cell=cell, p=p):
            x = transform(source(cell.child(1, i)), p, cell.child(2, i))
            return [f(x) for f in funcs]

        va = np.asarray(_map(ref, range(reps), workers), dtype=float)
        vb = np.asarray(_map(img, range(reps), workers), dtype=float)
        for k, f in enumerate(funcs):
            rep = ks_two_sample_permutation(
                va[:, k], vb[:, k], resamples, cell.child(3, k), level=alpha, name=f"{name}:{f.name}:p={p:g}"
            )
            rep.metadata.update(p=p, functional=f.name, top=f.top, family_level=level, tests=n_tests)
            reports.append(rep)
            samples[(p, f.name)] = (va[:, k], vb[:, k])
    return SuiteResult(reports, level, alpha, seed.to_record(), samples)


def proportion_difference_test(x, y, *, level: float = DEFAULT_LEVEL, min_reps: int = 1000, name="paired_proportions"):
    """Paired test of ``P(x=1) = P(y=1)`` for indicator pairs from the same replicates."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    d = x - y
    qx, qy = float(x.mean()), float(y.mean())
    sd = float(d.std(ddof=1)) if n > 1 else 0.0
    if sd == 0.0:
        z, p = 0.0, 1.0 if qx == qy else 0.0
    else:
        z = float(d.mean()) / (sd / math.sqrt(n))
        p = float(2.0 * sps.norm.sf(abs(z)))
    decision = INCONCLUSIVE if n < min_reps else (REJECT if p < level else PASS)
    return TestReport(name, z, p, n, n, decision, None, {"q_x": qx, "q_y": qy, "level": level, "min_reps": min_reps})

"""Random energy model: closed form, variational scan, direct estimate, cavity functionals.

``F(beta)`` is ``-ln 2 / beta - beta / 2`` below ``beta_c = sqrt(2 ln 2)`` and
``-beta_c`` above it. The variational formula maximizes
``g(m) = -ln 2 / (beta m) - beta m / 2`` over ``m`` in ``(0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import stats as sps
from scipy.special import logsumexp

from .errors import DomainError, ZeroSelection
from .partitions import PartitionStructure, sample_pd
from .point_process import PowerLaw, invert_mass
from .seeding import SeedSpec, as_generator, as_seedspec
from .stats import DEFAULT_LEVEL, TestReport, bonferroni, ks_two_sample_permutation

BETA_C = math.sqrt(2.0 * math.log(2.0))
MAX_SPINS = 24
LN2 = math.log(2.0)


def closed_form_free_energy(beta: float) -> float:
    if not beta > 0:
        raise DomainError("beta must be positive")
    if beta <= BETA_C:
        return -LN2 / beta - beta / 2.0
    return -BETA_C


def variational_objective(m, beta: float):
    m = np.asarray(m, dtype=float)
    return -LN2 / (beta * m) - beta * m / 2.0


def _golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def variational_objective_scan(beta: float, grid_size: int = 200) -> tuple[float, float]:
    """Maximize ``g`` on a uniform grid over ``(0, 1]``, then refine by golden section.

    The bracket is the grid neighbourhood of the best point; the endpoint
    ``m = 1`` is compared directly since the optimum often sits there.
    """
    if not beta > 0:
        raise DomainError("beta must be positive")
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    grid = np.arange(1, grid_size + 1) / grid_size
    vals = variational_objective(grid, beta)
    i = int(np.argmax(vals))
    lo = grid[i - 1] if i > 0 else grid[0] / 2.0
    hi = grid[min(i + 1, grid_size - 1)]
    f = lambda m: float(variational_objective(m, beta))
    m_star = _golden_max(f, float(lo), float(hi))
    best = [(f(m_star), m_star), (f(1.0), 1.0)]
    value, m_star = max(best)
    return m_star, value


@dataclass(frozen=True)
class RemParams:
    beta: float
    n_spins: int
    replicates: int = 64

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError("beta must be positive")
        if not (1 <= self.n_spins <= MAX_SPINS):
            raise DomainError(f"n_spins must lie in [1, {MAX_SPINS}]")
        if self.replicates < 2:
            raise DomainError("need at least two replicates")


class Estimate(NamedTuple):
    estimate: float
    ci_low: float
    ci_high: float
    se: float
    values: np.ndarray


def _t_interval(values: np.ndarray, confidence: float) -> Estimate:
    n = values.size
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n))
    half = float(sps.t.ppf(0.5 + confidence / 2.0, n - 1)) * se
    return Estimate(mean, mean - half, mean + half, se, values)


def rem_free_energy_sample(beta: float, n_spins: int, seed, *, chunk_log2: int = 16) -> float:
    """One draw of ``-(beta N)^{-1} ln sum_n exp(-beta sqrt(N) Z_n)`` over ``2^N`` energies.

    Energies are generated in chunks of ``2^chunk_log2`` from per-chunk seeds,
    and chunk log-sums are combined in chunk order, so the result does not
    depend on how chunks are scheduled.
    """
    seed = as_seedspec(seed)
    total = 1 << n_spins
    size = min(total, 1 << chunk_log2)
    scale = -beta * math.sqrt(n_spins)
    parts = np.empty(total // size)
    for c in range(parts.size):
        z = seed.child(c).generator().standard_normal(size)
        parts[c] = logsumexp(scale * z)
    return -float(logsumexp(parts)) / (beta * n_spins)


def direct_rem_estimate(params: RemParams, seed, *, confidence: float = 0.95) -> Estimate:
    """Mean of independent finite-``N`` free energies with a t-interval."""
    seed = as_seedspec(seed)
    vals = np.array([rem_free_energy_sample(params.beta, params.n_spins, seed.child(r)) for r in range(params.replicates)])
    return _t_interval(vals, confidence)


def energy_functional(xi: PartitionStructure, beta: float, rng) -> float:
    """``-(1/beta) ln(sum xi_n e^{-beta Z_n} + xi_0 E[e^{-beta Z}])`` with Gaussian ``Z``.

    The truncated tail is a cloud of tiny atoms and enters like dust.
    """
    rng = as_generator(rng)
    z = rng.standard_normal(xi.atoms.size)
    w = np.exp(-beta * z)
    s = float(xi.atoms @ w) + (xi.dust + xi.tail) * math.exp(beta * beta / 2.0)
    return -math.log(s) / beta


def entropy_functional(xi: PartitionStructure, rng) -> float:
    """``ln sum xi_n B_n`` with fair Bernoulli selectors; the truncated tail contributes half its mass.

    Raises ZeroSelection when the selection is empty on two consecutive draws.
    """
    rng = as_generator(rng)
    for _ in range(2):
        b = rng.random(xi.atoms.size) < 0.5
        s = float(xi.atoms[b].sum()) + 0.5 * xi.tail
        if s > 0:
            return math.log(s)
    raise ZeroSelection("no atom was selected")


class CavityEstimate(NamedTuple):
    e_hat: float
    s_hat: float
    objective: float
    e_se: float
    s_se: float
    reps: int


def cavity_functionals_estimate(
    m: float,
    beta: float,
    n_atoms: int = 10_000,
    reps: int = 2000,
    seed=0,
    *,
    sampler: Optional[Callable[[SeedSpec], PartitionStructure]] = None,
) -> CavityEstimate:
    """Monte Carlo means of the energy and entropy functionals over PD(m, 0).

    ``objective`` is ``E_hat + S_hat / beta``. Since ``S_hat`` is negative this
    equals ``-ln 2 / (beta m) - beta m / 2`` in the limit; see the report
    metadata written by the CLI for the sign convention.
    """
    if n_atoms < 1000 and sampler is None:
        raise ValueError("use at least 1000 atoms so an empty selection is negligible")
    seed = as_seedspec(seed)
    if sampler is None:
        sampler = lambda s: sample_pd(m, n_atoms, s)
    e = np.empty(reps)
    s = np.empty(reps)
    for r in range(reps):
        cell = seed.child(r)
        xi = sampler(cell.child(0))
        rng = cell.child(1).generator()
        e[r] = energy_functional(xi, beta, rng)
        s[r] = entropy_functional(xi, rng)
    e_hat, s_hat = float(e.mean()), float(s.mean())
    return CavityEstimate(
        e_hat, s_hat, e_hat + s_hat / beta, float(e.std(ddof=1) / math.sqrt(reps)), float(s.std(ddof=1) / math.sqrt(reps)), reps
    )


def stability_samples(m: float, p: float, k_top: int, reps: int, seed, *, n_atoms: Optional[int] = None, scale: Optional[float] = None):
    """Top ``k_top`` survivors of Bernoulli-``p`` thinned power-law atoms, and ``c`` times a fresh copy.

    Returns two ``(reps, k_top)`` arrays. ``scale`` defaults to ``p^{1/m}``.
    """
    if n_atoms is None:
        n_atoms = int(math.ceil((k_top + 10.0 * math.sqrt(k_top / p) + 10.0) / p))
    c = p ** (1.0 / m) if scale is None else scale
    seed = as_seedspec(seed)
    law = PowerLaw(m)
    a = np.empty((reps, k_top))
    b = np.empty((reps, k_top))
    for r in range(reps):
        rng = seed.child(r).generator()
        x = invert_mass(law, np.cumsum(rng.standard_exponential(n_atoms)))
        keep = rng.random(n_atoms) < p
        surv = x[keep]
        while surv.size < k_top:
            # extend the atom list; x keeps decreasing past the current end
            more = invert_mass(law, np.cumsum(rng.standard_exponential(n_atoms)) + (x[-1] ** -m))
            x = np.concatenate((x, more))
            surv = np.concatenate((surv, more[rng.random(n_atoms) < p]))
        a[r] = surv[:k_top]
        y = invert_mass(law, np.cumsum(rng.standard_exponential(k_top)))
        b[r] = c * y
    return a, b


def stability_check(
    m: float,
    p: float,
    k_top: int = 3,
    reps: int = 2000,
    seed=0,
    *,
    n_atoms: Optional[int] = None,
    scale: Optional[float] = None,
    level: float = DEFAULT_LEVEL,
    resamples: Optional[int] = None,
) -> TestReport:
    """Per-coordinate permutation KS of thinned atoms against rescaled fresh atoms, Bonferroni-combined."""
    if not (0.0 < m < 1.0):
        raise DomainError("m must lie in (0,1)")
    if not (0.0 < p <= 1.0):
        raise DomainError("p must lie in (0,1]")
    seed = as_seedspec(seed)
    c = p ** (1.0 / m) if scale is None else scale
    a, b = stability_samples(m, p, k_top, reps, seed.child(0), n_atoms=n_atoms, scale=c)
    alpha = level / k_top
    if resamples is None:
        resamples = max(999, int(math.ceil(2.0 / alpha)))
    reports = [
        ks_two_sample_permutation(
            np.log(a[:, j]), np.log(b[:, j]), resamples, seed.child(1, j), level=alpha, name=f"stability:coord={j + 1}"
        )
        for j in range(k_top)
    ]
    meta = {"m": m, "p": p, "scale": c, "k_top": k_top, "reps": reps}
    return bonferroni(reports, level, "stability", seed=seed, metadata=meta)


__all__ = [
    "BETA_C",
    "closed_form_free_energy",
    "variational_objective",
    "variational_objective_scan",
    "RemParams",
    "Estimate",
    "rem_free_energy_sample",
    "direct_rem_estimate",
    "energy_functional",
    "entropy_functional",
    "CavityEstimate",
    "cavity_functionals_estimate",
    "stability_samples",
    "stability_check",
]

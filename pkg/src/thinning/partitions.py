"""Partition structures, Bernoulli-p thinning, and Poisson-Kingman samplers.

A :class:`PartitionStructure` holds the top ``K`` atoms of a (possibly
infinite) partition, its dust, and a bound on the mass of atoms that were not
retained. The unresolved remainder ``1 - dust - sum(atoms)`` is the truncated
tail; thinning treats it like dust (a sea of tiny atoms that survives in
proportion ``p``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import stats as sps

from .errors import DegenerateMass, DomainError, DivergentNormalization, InsufficientAtoms, ZeroAtom
from .gaps import GapConfiguration
from .point_process import (
    PeriodicDensity,
    PowerLaw,
    TiltedLebesgue,
    invert_mass,
    sample_tilted_lebesgue,
    sample_unit_arrivals,
    tilted_tail_mass,
    truncation_error_bound,
)
from .seeding import SeedLike, as_generator

_MASS_TOL = 1e-9
DEFAULT_ATOMS = 10_000
DEFAULT_DELTA = 1e-9


@dataclass(frozen=True, eq=False)
class PartitionStructure:
    atoms: np.ndarray
    dust: float = 0.0
    mass_error: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float).reshape(-1)
        if a.size and (a[-1] < 0 or np.any(np.diff(a) > 0)):
            raise ValueError("atoms must be nonnegative and nonincreasing")
        if not (self.dust >= 0 and self.mass_error >= 0):
            raise ValueError("dust and mass_error must be nonnegative")
        total = float(self.dust) + float(a.sum())
        if total > 1.0 + self.mass_error + _MASS_TOL:
            raise ValueError(f"dust + atoms = {total} exceeds 1 + mass_error")
        if self.mass_error == 0.0 and abs(total - 1.0) > _MASS_TOL:
            raise ValueError(f"an exact partition must have dust + atoms = 1, got {total}")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "dust", float(self.dust))
        object.__setattr__(self, "mass_error", float(self.mass_error))

    def __len__(self):
        return self.atoms.size

    def __eq__(self, other):
        return (
            isinstance(other, PartitionStructure)
            and np.array_equal(self.atoms, other.atoms)
            and self.dust == other.dust
            and self.mass_error == other.mass_error
        )

    @property
    def tail(self) -> float:
        """Mass assigned to atoms below the truncation level."""
        return max(0.0, 1.0 - self.dust - float(self.atoms.sum()))

    def atom(self, n: int) -> float:
        """``xi_n`` (1-based), zero past the retained atoms."""
        return float(self.atoms[n - 1]) if n <= self.atoms.size else 0.0

    def to_record(self) -> dict:
        return {"atoms": self.atoms.tolist(), "dust": self.dust, "mass_error": self.mass_error}

    @classmethod
    def from_record(cls, rec: dict) -> "PartitionStructure":
        return cls(np.asarray(rec["atoms"], dtype=float), rec.get("dust", 0.0), rec.get("mass_error", 0.0))


def full_dust() -> PartitionStructure:
    return PartitionStructure(np.empty(0), 1.0, 0.0)


def dust_fraction(xi: PartitionStructure) -> float:
    return xi.dust


def safe_survivor_count(n_atoms: int, p: float, delta: float = DEFAULT_DELTA) -> int:
    """Largest ``n`` with ``P(Binomial(n_atoms, p) < n) <= delta``."""
    if p >= 1.0:
        return n_atoms
    return int(sps.binom.ppf(delta, n_atoms, p))


def thin_with_marks(xi: PartitionStructure, p: float, marks, n_out: Optional[int] = None) -> PartitionStructure:
    """Apply the thinning map for a fixed realization of the Bernoulli marks.

    ``Z' = p (dust + tail) + sum_k B_k xi_k``; the first ``n_out`` survivors
    (all of them by default) are divided by ``Z'``.
    """
    b = np.asarray(marks, dtype=bool)
    if b.shape != xi.atoms.shape:
        raise ValueError(f"need one mark per atom ({xi.atoms.size}), got {b.size}")
    survivors = xi.atoms[b]
    if n_out is None:
        n_out = survivors.size
    if survivors.size < n_out:
        raise InsufficientAtoms(f"{survivors.size} atoms survived thinning, {n_out} requested")
    if p == 1.0 and b.all():
        z = 1.0
    else:
        z = p * (xi.dust + xi.tail) + float(survivors.sum())
    if z <= 0.0:
        raise DegenerateMass("every atom was removed and there is no dust")
    kept = survivors[:n_out]
    dropped = float(survivors[n_out:].sum())
    return PartitionStructure(
        kept / z,
        p * xi.dust / z,
        (xi.mass_error + dropped) / z if (xi.mass_error or dropped) else 0.0,
    )


def thin_partition(
    xi: PartitionStructure,
    p: float,
    n_out: Optional[int] = None,
    seed: SeedLike = None,
    *,
    marks=None,
    delta: float = DEFAULT_DELTA,
) -> PartitionStructure:
    """Bernoulli-``p`` thinning of a partition structure, renormalized.

    Without explicit ``marks``, ``n_out`` must be attainable with shortfall
    probability at most ``delta``; ``n_out=None`` picks the largest such count.
    """
    if not (0.0 < p <= 1.0):
        raise DomainError(f"p must lie in (0,1], got {p}")
    if marks is None:
        k = xi.atoms.size
        if n_out is None:
            n_out = safe_survivor_count(k, p, delta)
        elif p < 1.0 and sps.binom.cdf(n_out - 1, k, p) > delta:
            raise InsufficientAtoms(
                f"{k} atoms at p={p} give fewer than {n_out} survivors with probability above {delta}"
            )
        if p == 1.0:
            marks = np.ones(k, dtype=bool)
        else:
            marks = as_generator(seed).random(k) < p
    return thin_with_marks(xi, p, marks, n_out)


@dataclass(frozen=True)
class PoissonKingmanSpec:
    intensity: Union[PowerLaw, TiltedLebesgue]
    v: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise DomainError("v must be nonnegative")
        if not isinstance(self.intensity, (PowerLaw, TiltedLebesgue)):
            raise DomainError("Poisson-Kingman needs an infinite-mass intensity on (0, inf)")
        if isinstance(self.intensity, TiltedLebesgue) and not self.intensity.m < 1.0:
            raise DomainError("tilted Lebesgue intensities need m in (0,1)")


def normalize_atoms(atoms, v: float = 0.0, tail_mass: float = 0.0, tail_bound: float = 0.0) -> PartitionStructure:
    """``xi_n / Z`` with ``Z = v + sum(atoms) + tail_mass``."""
    a = np.sort(np.asarray(atoms, dtype=float))[::-1]
    z = v + float(a.sum()) + tail_mass
    if z <= 0:
        raise DegenerateMass("total mass is zero")
    return PartitionStructure(a / z, v / z, tail_bound / z)


def sample_poisson_kingman(spec: PoissonKingmanSpec, n_atoms: int = DEFAULT_ATOMS, seed: SeedLike = None, *, arrivals=None):
    """Normalized top ``n_atoms`` of PPP(Lambda) plus deterministic mass ``v``.

    The dropped small atoms enter ``Z`` through their conditional expected mass
    given the smallest retained atom; ``mass_error`` carries the bound.
    """
    lam = spec.intensity
    if isinstance(lam, PowerLaw):
        if arrivals is None:
            arrivals = sample_unit_arrivals(n_atoms, seed)
        x = invert_mass(lam, np.asarray(arrivals, dtype=float)[:n_atoms])
        tail = truncation_error_bound(lam.m, float(x[-1]), lam.weight)
        bound = tail
    else:
        y = sample_tilted_lebesgue(lam, n_atoms, seed)
        x = np.exp(-y)
        tail = tilted_tail_mass(lam, float(y[-1]))
        bound = lam.density.upper * truncation_error_bound(lam.m, float(x[-1]))
    z = spec.v + float(x.sum()) + tail
    return PartitionStructure(x / z, spec.v / z, bound / z)


def sample_pd(m: float, n_atoms: int = DEFAULT_ATOMS, seed: SeedLike = None, *, arrivals=None) -> PartitionStructure:
    """PD(m, 0): the Poisson-Kingman partition of ``m x^{-m-1} dx`` with no dust."""
    if not (0.0 < m < 1.0):
        raise DomainError(f"PD(m,0) needs m in (0,1), got {m}")
    return sample_poisson_kingman(PoissonKingmanSpec(PowerLaw(m), 0.0), n_atoms, seed, arrivals=arrivals)


MixtureRule = Callable[[np.random.Generator], "tuple[Optional[PeriodicDensity], float]"]


@dataclass(frozen=True)
class CoxKingmanSpec:
    """Mixture of full dust (weight ``dust_weight``) and tilted Poisson-Kingman laws.

    ``mixture_rule(rng)`` returns ``(density, m)``; ``density=None`` stands for
    Lebesgue measure, which makes the component PD(m, 0).
    """

    dust_weight: float
    mixture_rule: MixtureRule

    def __post_init__(self):
        if not (0.0 <= self.dust_weight <= 1.0):
            raise DomainError("dust_weight must lie in [0, 1]")


def point_mass_mixture(m: float, density: Optional[PeriodicDensity] = None) -> MixtureRule:
    """Always the same ``m``; a periodic density gets a uniform phase over one period."""

    def rule(rng):
        if density is None:
            return None, m
        return density.with_phase(rng.uniform(0.0, density.period)), m

    return rule


def stationary_mixture(ms, weights=None, density: Optional[PeriodicDensity] = None) -> MixtureRule:
    ms = np.asarray(ms, dtype=float)
    w = None if weights is None else np.asarray(weights, dtype=float) / np.sum(weights)

    def rule(rng):
        m = float(rng.choice(ms, p=w))
        if density is None:
            return None, m
        return density.with_phase(rng.uniform(0.0, density.period)), m

    return rule


def sample_cox_kingman(spec: CoxKingmanSpec, n_atoms: int = DEFAULT_ATOMS, seed: SeedLike = None) -> PartitionStructure:
    rng = as_generator(seed)
    if rng.random() < spec.dust_weight:
        return full_dust()
    density, m = spec.mixture_rule(rng)
    if not (0.0 < m < 1.0):
        raise DomainError(f"mixture produced m={m}, outside (0,1)")
    lam = PowerLaw(m) if density is None else TiltedLebesgue(m, density)
    return sample_poisson_kingman(PoissonKingmanSpec(lam, 0.0), n_atoms, rng)


def two_atom_control() -> PartitionStructure:
    """The deterministic finite partition (0.7, 0.3), which is not thinning invariant."""
    return PartitionStructure(np.array([0.7, 0.3]), 0.0, 0.0)


def thin_conditioned(xi: PartitionStructure, p: float, seed: SeedLike = None, max_tries: int = 10_000):
    """Thin a finite partition, redrawing marks until at least one atom survives.

    Finite partitions lie outside the infinite partitions on which the thinning
    map is defined; conditioning on survival is the natural extension used for
    control experiments.
    """
    rng = as_generator(seed)
    if xi.dust > 0 or xi.tail > 0:
        return thin_partition(xi, p, None, rng)
    for _ in range(max_tries):
        marks = rng.random(xi.atoms.size) < p
        if marks.any():
            return thin_with_marks(xi, p, marks)
    raise DegenerateMass(f"no survivors after {max_tries} attempts")


def partition_to_gaps(xi: PartitionStructure) -> GapConfiguration:
    """``W_n = ln xi_1 - ln xi_{n+1}``."""
    a = xi.atoms
    if a.size == 0 or a[0] <= 0:
        raise ZeroAtom("need a positive leading atom")
    if np.any(a <= 0):
        raise ZeroAtom("retained atoms must be positive")
    la = np.log(a)
    return GapConfiguration(la[0] - la[1:])


def gaps_to_partition(w: GapConfiguration, *, estimate_tail: bool = False, tolerance: float = 1e-3, window: int = 8):
    """Atoms proportional to ``(1, e^{-W_1}, e^{-W_2}, ...)``, normalized.

    By default the configuration is taken as complete. With ``estimate_tail``
    the unseen terms are extrapolated geometrically from the last ``window``
    ratios and the result carries that mass as ``mass_error``.
    """
    terms = np.exp(-np.concatenate(([0.0], w.gaps)))
    s = float(terms.sum())
    tail = 0.0
    if estimate_tail:
        if terms.size < window + 1:
            raise DivergentNormalization("too few gaps to estimate the tail")
        r = float(np.exp(-(w.gaps[-1] - w.gaps[-1 - window]) / window)) if w.gaps.size > window else 1.0
        if r >= 1.0:
            raise DivergentNormalization("gaps stopped growing; the normalizing series diverges")
        tail = float(terms[-1]) * r / (1.0 - r)
        if tail / (s + tail) > tolerance:
            raise DivergentNormalization(f"estimated tail fraction {tail / (s + tail):.3g} exceeds {tolerance}")
    z = s + tail
    return PartitionStructure(terms / z, 0.0, tail / z)


def sum_of_squares(xi: PartitionStructure) -> float:
    return float(np.dot(xi.atoms, xi.atoms))

"""Poisson point processes realized top-down by inverting mass functions.

Rate-one arrivals ``E_1 < E_2 < ...`` are pushed through the inverse of the
intensity's mass function, which gives the extreme points (largest atoms of a
power law, leftmost points of an exponential tilt) exactly and in order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate

from .errors import DomainError, UnsupportedSpec
from .seeding import SeedLike, as_generator


@dataclass(frozen=True)
class PeriodicDensity:
    """A bounded periodic density on the line with Cesaro mean one.

    ``profile`` maps the phase-reduced coordinate ``((y - phase) / period) % 1``
    in [0, 1) to a nonnegative value; ``upper`` bounds it from above.
    """

    profile: Callable[[np.ndarray], np.ndarray]
    period: float = 1.0
    upper: float = 1.0
    phase: float = 0.0

    def __call__(self, y):
        z = np.mod((np.asarray(y, dtype=float) - self.phase) / self.period, 1.0)
        return self.profile(z)

    def with_phase(self, phase: float) -> "PeriodicDensity":
        return PeriodicDensity(self.profile, self.period, self.upper, float(phase))

    def mean(self) -> float:
        val, _ = integrate.quad(lambda z: float(self.profile(np.asarray(z))), 0.0, 1.0, limit=200)
        return val


def sinusoidal_density(amplitude: float = 0.5, phase: float = 0.0, period: float = 1.0) -> PeriodicDensity:
    """``1 + amplitude * sin(2 pi (y - phase) / period)``."""
    if not 0.0 <= amplitude <= 1.0:
        raise DomainError("amplitude must lie in [0, 1] for a nonnegative density")
    a = float(amplitude)
    return PeriodicDensity(lambda z: 1.0 + a * np.sin(2.0 * np.pi * z), float(period), 1.0 + a, float(phase))


@dataclass(frozen=True)
class PowerLaw:
    """Intensity ``weight * m * x**(-m-1) dx`` on (0, inf); tail mass ``weight * x**(-m)``."""

    m: float
    weight: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.m < 1.0):
            raise DomainError(f"PowerLaw needs m in (0,1) so that int min(x,1) dLambda < inf; got m={self.m}")
        if not self.weight > 0:
            raise DomainError("PowerLaw weight must be positive")

    def tail_mass(self, x):
        return self.weight * np.power(x, -self.m)


@dataclass(frozen=True)
class ExpTilt:
    """Intensity ``weight * m * exp(m x) dx`` on the line; mass function ``weight * exp(m x)``."""

    m: float
    weight: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise DomainError(f"ExpTilt needs m > 0, got {self.m}")
        if not self.weight > 0:
            raise DomainError("ExpTilt weight must be positive")

    def mass(self, x):
        return self.weight * np.exp(self.m * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LebesgueMarginal:
    """Lebesgue positions on [0, inf) with marks drawn by ``mark_rule``.

    ``mark_rule(r, rng)`` draws the mark of a point at position ``r`` (array in,
    array out). ``None`` means unmarked points. The rule is evaluated at
    ``r * exp(log_scale)``, which is how the steady-state transport acts.
    """

    mark_rule: Optional[Callable] = None
    log_scale: float = 0.0

    def draw_marks(self, r, rng):
        if self.mark_rule is None:
            return None
        return self.mark_rule(np.asarray(r, dtype=float) * math.exp(self.log_scale), rng)


@dataclass(frozen=True)
class TiltedLebesgue:
    """Intensity ``m * exp(m y) * density(y) dy`` on the line."""

    m: float
    density: PeriodicDensity

    def __post_init__(self):
        if not self.m > 0:
            raise DomainError(f"TiltedLebesgue needs m > 0, got {self.m}")


IntensitySpec = Union[PowerLaw, ExpTilt, LebesgueMarginal, TiltedLebesgue]


def sample_unit_arrivals(n: int, seed: SeedLike) -> np.ndarray:
    """Arrival times of a rate-one Poisson process: partial sums of unit exponentials."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = as_generator(seed)
    return np.cumsum(rng.standard_exponential(n))


def arrivals_from_exponentials(draws) -> np.ndarray:
    draws = np.asarray(draws, dtype=float)
    if np.any(draws <= 0):
        raise ValueError("exponential draws must be positive")
    return np.cumsum(draws)


def invert_mass(spec: IntensitySpec, arrivals) -> np.ndarray:
    """Map arrivals through the inverse mass function of a PowerLaw or ExpTilt spec."""
    e = np.asarray(arrivals, dtype=float)
    if isinstance(spec, PowerLaw):
        return np.power(e / spec.weight, -1.0 / spec.m)
    if isinstance(spec, ExpTilt):
        return np.log(e / spec.weight) / spec.m
    raise UnsupportedSpec(f"no closed-form inverse mass function for {type(spec).__name__}")


def sample_ppp_inverse_mass(spec: IntensitySpec, n: int, seed: SeedLike = None, *, arrivals=None) -> np.ndarray:
    """The ``n`` extreme points of PPP(spec).

    PowerLaw returns the largest atoms in decreasing order; ExpTilt returns the
    leftmost positions in increasing order. Pass ``arrivals`` to bypass the
    random draw.
    """
    if not isinstance(spec, (PowerLaw, ExpTilt)):
        raise UnsupportedSpec(f"sample_ppp_inverse_mass supports PowerLaw and ExpTilt, not {type(spec).__name__}")
    if arrivals is None:
        arrivals = sample_unit_arrivals(n, seed)
    else:
        arrivals = np.asarray(arrivals, dtype=float)[:n]
        if arrivals.size < n:
            raise ValueError(f"need {n} arrivals, got {arrivals.size}")
    return invert_mass(spec, arrivals)


def sample_tilted_lebesgue(spec: TiltedLebesgue, n: int, seed: SeedLike) -> np.ndarray:
    """Leftmost ``n`` points of PPP(m e^{my} h(y) dy), increasing.

    Thins the dominating ExpTilt(m, weight=sup h) process with acceptance
    probability ``h(y) / sup h``, so the law has no grid bias.
    """
    rng = as_generator(seed)
    h = spec.density
    dom = ExpTilt(spec.m, h.upper)
    accepted: list[np.ndarray] = []
    count = 0
    last = 0.0
    batch = int(math.ceil(n * h.upper * 1.25)) + 32
    while count < n:
        e = last + np.cumsum(rng.standard_exponential(batch))
        last = e[-1]
        y = invert_mass(dom, e)
        keep = rng.random(batch) * h.upper < h(y)
        accepted.append(y[keep])
        count += int(keep.sum())
        batch = max(32, int(math.ceil((n - count) * h.upper * 1.25)) + 32)
    return np.concatenate(accepted)[:n]


def truncation_error_bound(m: float, epsilon: float, weight: float = 1.0) -> float:
    """Expected total mass of PowerLaw(m) atoms below ``epsilon``: ``w m eps^(1-m) / (1-m)``."""
    if not (0.0 < m < 1.0):
        raise DomainError(f"truncation bound needs m in (0,1), got {m}")
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    return weight * m * epsilon ** (1.0 - m) / (1.0 - m)


def tilted_tail_mass(spec: TiltedLebesgue, y0: float) -> float:
    """Expected mass ``int_{y0}^inf e^{-y} m e^{my} h(y) dy`` of atoms ``e^{-y}`` below ``e^{-y0}``.

    Uses periodicity of ``h``: one-period integral divided by ``1 - e^{-cP}``.
    """
    m = spec.m
    if not m < 1.0:
        raise DomainError("the atom mass of a tilted Lebesgue intensity is finite only for m < 1")
    c = 1.0 - m
    period = spec.density.period
    h = spec.density
    one, _ = integrate.quad(lambda z: math.exp(-c * z) * float(h(y0 + z)), 0.0, period, limit=200)
    return m * math.exp(-c * y0) * one / (-math.expm1(-c * period))


def sample_ppp_window(spec: PowerLaw, lower: float, upper: float, seed: SeedLike) -> np.ndarray:
    """All atoms of PPP(spec) inside (lower, upper), decreasing.

    The count is Poisson with mean ``tail(lower) - tail(upper)``; given the
    count the atoms are iid with the normalized restricted intensity.
    """
    if not (0.0 < lower < upper):
        raise ValueError("need 0 < lower < upper")
    rng = as_generator(seed)
    hi = float(spec.tail_mass(lower))
    lo = float(spec.tail_mass(upper))
    k = rng.poisson(hi - lo)
    e = rng.uniform(lo, hi, size=k)
    return np.sort(invert_mass(spec, e))[::-1]


def dropped_mass_sample(m: float, n_atoms: int, seed: SeedLike, *, depth: float = 1000.0) -> tuple[float, float]:
    """One truncation at ``n_atoms`` atoms: ``(dropped mass, truncation_error_bound)``.

    Given the smallest retained atom ``eps``, the discarded atoms form a PPP on
    ``(0, eps)``. Atoms in ``(eps / depth, eps)`` are drawn explicitly; the
    expected mass below ``eps / depth`` is added in closed form.
    """
    rng = as_generator(seed)
    law = PowerLaw(m)
    eps = float(invert_mass(law, sample_unit_arrivals(n_atoms, rng))[-1])
    floor = eps / depth
    dropped = float(sample_ppp_window(law, floor, eps, rng).sum()) + truncation_error_bound(m, floor)
    return dropped, truncation_error_bound(m, eps)

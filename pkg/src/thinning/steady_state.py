"""Steady-state model with marks on a fed finite window.

Points start at positions ``R_n`` on ``[0, feed]`` with ``feed >= L e^{t_max}``,
carry independent Exp(1) lifetimes ``T_n`` and are scaled toward the origin,
``R_n e^{-t}``. Any point that reaches ``[0, L]`` by time ``t_max`` started
inside the feed, so the window is exact rather than approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats as sps

from .errors import InsufficientData, UnsupportedSpec
from .point_process import IntensitySpec, LebesgueMarginal, PowerLaw
from .seeding import as_generator, as_seedspec
from .stats import INCONCLUSIVE, PASS, REJECT, TestReport, bonferroni, chi_square_poisson, ks_one_sample


@dataclass(frozen=True)
class PointRecord:
    position: float
    mark: object
    lifetime: float
    death_time: float


@dataclass(frozen=True, eq=False)
class SteadyStateRun:
    """Initial configuration with lifetimes; birth is at time 0 for every point."""

    window_length: float
    horizon: float
    positions: np.ndarray
    lifetimes: np.ndarray
    marks: Optional[np.ndarray] = None
    observation_times: tuple = ()
    feed_length: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        life = np.asarray(self.lifetimes, dtype=float)
        if pos.shape != life.shape:
            raise ValueError("positions and lifetimes must align")
        if np.any(life <= 0):
            raise ValueError("lifetimes must be positive")
        if np.any(pos < 0):
            raise ValueError("positions live on [0, inf)")
        order = np.argsort(pos, kind="stable")
        object.__setattr__(self, "positions", pos[order])
        object.__setattr__(self, "lifetimes", life[order])
        if self.marks is not None:
            object.__setattr__(self, "marks", np.asarray(self.marks)[order])
        if any(not (0 <= t <= self.horizon) for t in self.observation_times):
            raise ValueError("observation times must lie in [0, horizon]")
        object.__setattr__(self, "observation_times", tuple(float(t) for t in self.observation_times))

    @property
    def records(self) -> list[PointRecord]:
        marks = self.marks if self.marks is not None else [None] * self.positions.size
        return [PointRecord(float(r), m, float(t), float(t)) for r, m, t in zip(self.positions, marks, self.lifetimes)]

    def to_records(self):
        marks = self.marks.tolist() if self.marks is not None else [None] * self.positions.size
        for r, m, t in zip(self.positions.tolist(), marks, self.lifetimes.tolist()):
            yield {"position": r, "mark": m, "lifetime": t, "death_time": t}


def simulate_run(
    window_length: float,
    horizon: float,
    seed,
    *,
    rate: float = 1.0,
    initial: str = "poisson",
    intensity: Optional[LebesgueMarginal] = None,
    observation_times: Sequence[float] = (),
    feed_factor: float = 2.0,
) -> SteadyStateRun:
    """Draw the initial configuration on ``[0, feed_factor * L e^{t_max}]`` and its lifetimes.

    ``initial="lattice"`` places points at ``k / rate`` instead (a control that
    is not stationary).
    """
    if feed_factor < 1.0:
        raise ValueError("the feed must cover [0, L e^{t_max}]")
    rng = as_generator(seed)
    feed = feed_factor * window_length * math.exp(horizon)
    if initial == "poisson":
        n = rng.poisson(rate * feed)
        pos = np.sort(rng.uniform(0.0, feed, size=n))
    elif initial == "lattice":
        pos = np.arange(1, int(math.floor(rate * feed)) + 1) / rate
    else:
        raise ValueError(f"unknown initial configuration {initial!r}")
    life = rng.standard_exponential(pos.size)
    marks = intensity.draw_marks(pos, rng) if intensity is not None else None
    return SteadyStateRun(window_length, horizon, pos, life, marks, tuple(observation_times), feed)


class ForwardState(NamedTuple):
    positions: np.ndarray
    marks: Optional[np.ndarray]

    def pairs(self):
        marks = self.marks if self.marks is not None else [None] * self.positions.size
        return list(zip(self.positions.tolist(), list(marks)))


def _alive(run: SteadyStateRun, t: float, upper: float):
    pos = run.positions * math.exp(-t)
    sel = (run.lifetimes > t) & (pos <= upper)
    return pos[sel], (run.marks[sel] if run.marks is not None else None)


def evolve_forward(run: SteadyStateRun, t: float) -> ForwardState:
    """Alive points ``(R_n e^{-t}, U_n)`` with ``T_n > t`` inside ``[0, L]``, sorted."""
    if not (0.0 <= t <= run.horizon):
        raise ValueError(f"t={t} is outside [0, {run.horizon}]")
    pos, marks = _alive(run, t, run.window_length)
    return ForwardState(pos, marks)


def phi_map(spec: IntensitySpec, t: float) -> IntensitySpec:
    """Push an intensity on ``[0, inf) x U`` forward by ``Phi_t(rho) = e^{-t} rho o (scale by e^{-t})^{-1}``.

    Lebesgue marginals are preserved and only the mark rule is re-anchored; a
    power law picks up the factor ``e^{-t(m+1)}``.
    """
    if isinstance(spec, LebesgueMarginal):
        if spec.mark_rule is None or t == 0:
            return spec
        return replace(spec, log_scale=spec.log_scale + t)
    if isinstance(spec, PowerLaw):
        if t == 0:
            return spec
        return PowerLaw(spec.m, spec.weight * math.exp(-t * (spec.m + 1.0)))
    raise UnsupportedSpec(f"no closed-form transport for {type(spec).__name__}")


def phi_counts(positions, s: float, a: float, b: float) -> float:
    """``Phi_s`` of the empirical measure of ``positions``, evaluated on ``[a, b)``."""
    moved = np.asarray(positions, dtype=float) * math.exp(-s)
    return math.exp(-s) * float(np.count_nonzero((moved >= a) & (moved < b)))


class ConditionalMean(NamedTuple):
    empirical: float
    predicted: float
    se: float


def conditional_mean_identity(run: SteadyStateRun, t0: float, s: float, a: float, b: float, continuations: int, seed) -> ConditionalMean:
    """Mean count in ``[a, b)`` at ``t0 + s`` given the configuration at ``t0``.

    Lifetimes are memoryless, so continuations redraw residual Exp(1) lives for
    the points alive at ``t0``. The prediction is ``Phi_s`` of the time-``t0``
    empirical measure.
    """
    if t0 + s > run.horizon:
        raise ValueError("t0 + s must stay within the horizon")
    if b * math.exp(s) > run.feed_length * math.exp(-t0) and run.feed_length:
        raise ValueError("the interval's preimage leaves the fed region")
    pos, _ = _alive(run, t0, math.inf)
    rng = as_generator(seed)
    moved = pos * math.exp(-s)
    inside = (moved >= a) & (moved < b)
    k = int(inside.sum())
    counts = rng.binomial(k, math.exp(-s), size=continuations) if k else np.zeros(continuations)
    se = float(counts.std(ddof=1) / math.sqrt(continuations)) if continuations > 1 else math.inf
    return ConditionalMean(float(counts.mean()), phi_counts(pos, s, a, b), se)


def window_counts(positions, length: float, bin_length: float) -> np.ndarray:
    nb = int(math.floor(length / bin_length + 1e-12))
    if nb == 0:
        return np.empty(0, dtype=np.int64)
    return np.histogram(positions, bins=nb, range=(0.0, nb * bin_length))[0]


def forward_spacings(run: SteadyStateRun, t: float) -> np.ndarray:
    """Spacings from the origin and from each alive point in ``[0, L]`` to its successor.

    Inclusion depends only on where a spacing starts, so the selected spacings
    are iid Exp(rate) for a Poisson configuration.
    """
    pos, _ = _alive(run, t, math.inf)
    pts = np.concatenate(([0.0], pos))
    nxt_ok = np.arange(pts.size) < pts.size - 1
    start_in = pts <= run.window_length
    sel = start_in & nxt_ok
    return (pts[1:] - pts[:-1])[sel[:-1]]


def stationarity_report(
    lambda_rate: float,
    L: float,
    t_max: float,
    observation_times: Sequence[float],
    reps: int,
    seed,
    *,
    initial: str = "poisson",
    level: float = 1e-3,
    bin_length: Optional[float] = None,
    min_count: int = 50,
) -> TestReport:
    """Count and spacing tests at each observation time, Bonferroni-combined.

    Per time: Pearson chi-square of unit-bin counts in ``[0, L]`` pooled over
    replicates against Poisson(rate * bin), and KS of forward spacings against
    Exponential(rate). Too little data makes the report inconclusive.
    """
    seed = as_seedspec(seed)
    times = [float(t) for t in observation_times]
    if any(not (0 <= t <= t_max) for t in times):
        raise ValueError("observation grid must lie within [0, t_max]")
    bin_length = 1.0 / lambda_rate if bin_length is None else bin_length
    runs = [
        simulate_run(L, t_max, seed.child(r), rate=lambda_rate, initial=initial, observation_times=times)
        for r in range(reps)
    ]
    members = []
    short = []
    for t in times:
        counts = np.concatenate([window_counts(evolve_forward(run, t).positions, L, bin_length) for run in runs])
        spac = np.concatenate([forward_spacings(run, t) for run in runs])
        if counts.size < 2 or spac.size < min_count:
            short.append(t)
            continue
        try:
            rc = chi_square_poisson(counts, lambda_rate * bin_length, level=level, name=f"counts@t={t:g}")
        except InsufficientData:
            short.append(t)
            continue
        rc.metadata["t"] = t
        rs = ks_one_sample(
            spac, sps.expon(scale=1.0 / lambda_rate).cdf, level=level, name=f"spacings@t={t:g}", min_size=min_count
        )
        rs.metadata["t"] = t
        members += [rc, rs]
    meta = {"rate": lambda_rate, "L": L, "t_max": t_max, "times": times, "reps": reps, "initial": initial}
    if not members:
        return TestReport("stationarity", math.nan, 1.0, 0, 0, INCONCLUSIVE, seed.to_record(), dict(meta, insufficient=short, level=level))
    rep = bonferroni(members, level, "stationarity", seed=seed, metadata=dict(meta, insufficient=short))
    if short and rep.decision == PASS:
        rep.decision = INCONCLUSIVE
    return rep


def birth_coordinates(t, r):
    """``(t, r) -> (t, ln r + t)``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return t, np.log(np.asarray(r, dtype=float)) + t


def birth_record_transform(run: SteadyStateRun):
    """Map each death record ``(t, r, u)`` to ``(t, ln r + t, u)``.

    ``t`` is the death time and ``r = R e^{-t}`` the death position, so the
    second coordinate recovers ``ln R``.
    """
    t, x = birth_coordinates(run.lifetimes, run.positions * np.exp(-run.lifetimes))
    return t.copy(), x, (run.marks.copy() if run.marks is not None else None)


def birth_factorization_report(
    L: float,
    t_max: float,
    reps: int,
    seed,
    *,
    s_bins: int = 6,
    x_bins: int = 5,
    level: float = 1e-3,
) -> TestReport:
    """Check that transformed records on ``[0, t_max) x (-inf, ln L)`` have intensity ``e^{-s} ds e^x dx``.

    Tests the truncated-exponential s-marginal, the ``e^x`` x-marginal (uniform
    in ``e^x``), and s-x independence by a contingency table.
    """
    seed = as_seedspec(seed)
    ss, xs = [], []
    for r in range(reps):
        run = simulate_run(L, t_max, seed.child(r))
        s, x, _ = birth_record_transform(run)
        keep = (s < t_max) & (x < math.log(L))
        ss.append(s[keep])
        xs.append(x[keep])
    s = np.concatenate(ss)
    x = np.concatenate(xs)
    n = s.size
    meta = {"L": L, "t_max": t_max, "reps": reps, "records": n}
    if n < 5 * s_bins * x_bins:
        return TestReport("birth_factorization", math.nan, 1.0, n, n, INCONCLUSIVE, seed.to_record(), meta)
    s_edges = np.linspace(0.0, t_max, s_bins + 1)
    s_prob = np.diff(-np.exp(-s_edges)) / -math.expm1(-t_max)
    s_obs = np.histogram(s, bins=s_edges)[0]
    s_stat, s_p = sps.chisquare(s_obs, s_prob * n)
    rs = TestReport("s_marginal", float(s_stat), float(s_p), n, n, REJECT if s_p < level else PASS, None, {"dof": s_bins - 1})
    x_edges = np.log(np.linspace(0.0, L, x_bins + 1)[1:-1])
    x_idx = np.searchsorted(x_edges, x, side="right")
    x_obs = np.bincount(x_idx, minlength=x_bins)
    x_stat, x_p = sps.chisquare(x_obs, np.full(x_bins, n / x_bins))
    rx = TestReport("x_marginal", float(x_stat), float(x_p), n, n, REJECT if x_p < level else PASS, None, {"dof": x_bins - 1})
    s_idx = np.clip(np.searchsorted(s_edges, s, side="right") - 1, 0, s_bins - 1)
    table = np.zeros((s_bins, x_bins))
    np.add.at(table, (s_idx, x_idx), 1)
    c_stat, c_p, c_dof, _ = sps.chi2_contingency(table)
    ri = TestReport("independence", float(c_stat), float(c_p), n, n, REJECT if c_p < level else PASS, None, {"dof": int(c_dof)})
    return bonferroni([rs, rx, ri], level, "birth_factorization", seed=seed, metadata=meta)


__all__ = [
    "PointRecord",
    "SteadyStateRun",
    "simulate_run",
    "evolve_forward",
    "phi_map",
    "phi_counts",
    "conditional_mean_identity",
    "stationarity_report",
    "birth_coordinates",
    "birth_record_transform",
    "birth_factorization_report",
    "forward_spacings",
    "window_counts",
]

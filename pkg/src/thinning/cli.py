"""Command-line front end: ``thinning <subcommand> --seed N [options]``.

Every subcommand writes ``report.jsonl`` and ``summary.csv`` into ``--out``
(and SVG plots with ``--emit-plots``). The exit status is 0 iff every gated suite
passes, 1 if any fails and 2 for usage errors. Probes and perturbed controls
are recorded as diagnostics and do not gate the exit.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import gaps as gp
from . import partitions as pt
from . import rem
from . import sequences as sq
from . import steady_state as ss
from .errors import DomainError, ThinningError
from .io import write_csv, write_jsonl
from .point_process import sinusoidal_density
from .seeding import SeedSpec
from .stats import DEFAULT_LEVEL, PASS, REJECT, Functional, SuiteResult, TestReport, invariance_suite, ks_one_sample

COMMANDS = ("sample", "thin", "invariance", "gaps", "sequences", "steady-state", "rem", "stability")

FAMILIES = {
    "sample": ("pd", "cox", "gaps", "iid", "periodic"),
    "thin": ("pd", "cox", "gaps", "iid", "periodic"),
    "invariance": ("pd", "cox", "two-atom"),
    "gaps": ("poisson",),
    "sequences": ("iid", "periodic"),
    "steady-state": ("poisson", "lattice"),
    "rem": ("rem",),
    "stability": ("power-law",),
}

DEFAULTS = {
    "sample": dict(family="pd", m=[0.5], p=[0.5], reps=10, atoms=1000, n=20),
    "thin": dict(family="pd", m=[0.5], p=[0.5], reps=10, atoms=1000, n=20),
    "invariance": dict(family="pd", m=[0.5], p=[0.3, 0.6, 0.9], reps=2000, atoms=10_000),
    "gaps": dict(family="poisson", m=[0.5, 1.0, 2.0], p=[0.3, 0.6, 0.9], reps=2000, t_max=8.0, drift_reps=1000),
    "sequences": dict(family="iid", p=[0.3, 0.6, 0.9], reps=2000, probe_reps=1_000_000),
    "steady-state": dict(family="poisson", L=50.0, t_max=3.0, times=[0.0, 0.75, 1.5, 2.25, 3.0], reps=100, rate=1.0),
    "rem": dict(family="rem", beta=[0.5, 1.0, 2.0], N=[16], reps=64),
    "stability": dict(family="power-law", m=[0.3, 0.5, 0.7], p=[0.25, 0.5], reps=2000, k_top=3),
}

LIST_KEYS = ("m", "p", "beta", "N", "times")


class UsageError(ThinningError, ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    out: Path = Path("out")
    level: float = DEFAULT_LEVEL
    reps: int = 0
    emit_plots: bool = False
    threads: int = 1
    family: str = ""
    m: list = field(default_factory=list)
    p: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    N: list = field(default_factory=list)
    atoms: int = 10_000
    n: int = 20
    k_top: int = 3
    t_max: float = 8.0
    L: float = 50.0
    rate: float = 1.0
    times: list = field(default_factory=list)
    drift_reps: int = 1000
    probe_reps: int = 1_000_000
    control: bool = False

    def public(self) -> dict:
        """Parameters that determine the results (output location and threads excluded)."""
        skip = {"out", "emit_plots", "threads"}
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in skip}


CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)} - {"command"}


def _split(value, cast):
    if isinstance(value, (list, tuple)):
        return [cast(v) for v in value]
    if isinstance(value, str):
        return [cast(v) for v in value.split(",") if v.strip()]
    return [cast(value)]


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="64-bit master seed (required)")
    common.add_argument("--reps", type=int, default=None)
    common.add_argument("--level", type=float, default=None, help="family-wise level (default 0.001)")
    common.add_argument("--out", type=Path, default=None)
    common.add_argument("--emit-plots", action="store_true", default=None)
    common.add_argument("--config", type=Path, default=None, help="flat YAML document of parameters")
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--family", default=None)
    common.add_argument("--m", default=None, help="comma list")
    common.add_argument("--p", default=None, help="comma list of thinning parameters")
    common.add_argument("--beta", default=None, help="comma list")
    common.add_argument("--N", default=None, help="comma list of spin counts")
    common.add_argument("--atoms", type=int, default=None)
    common.add_argument("--n", type=int, default=None, help="sample length for sample/thin")
    common.add_argument("--k-top", dest="k_top", type=int, default=None)
    common.add_argument("--t-max", dest="t_max", type=float, default=None)
    common.add_argument("--L", type=float, default=None)
    common.add_argument("--rate", type=float, default=None)
    common.add_argument("--times", default=None, help="comma list of observation times")
    common.add_argument("--drift-reps", dest="drift_reps", type=int, default=None)
    common.add_argument("--probe-reps", dest="probe_reps", type=int, default=None)
    common.add_argument("--control", action="store_true", default=None, help="also run the perturbed control")
    parser = argparse.ArgumentParser(prog="thinning", description="Thinning-invariance experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _load_config(path: Path) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("the config document must be a flat mapping")
    out = {}
    for key, value in doc.items():
        k = str(key).replace("-", "_")
        if k not in CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(value, dict):
            raise UsageError(f"config key {key!r} must not be nested")
        out[k] = value
    return out


def _validate(cfg: ExperimentConfig) -> None:
    if not (0 <= cfg.seed < 2**64):
        raise UsageError("--seed must be an unsigned 64-bit integer")
    if not (0.0 < cfg.level < 1.0):
        raise DomainError("level must lie in (0,1)")
    if cfg.reps < 1:
        raise DomainError("reps must be positive")
    if cfg.threads < 1:
        raise DomainError("threads must be positive")
    if cfg.family not in FAMILIES[cfg.command]:
        raise UsageError(f"family {cfg.family!r} is not available for {cfg.command}; choose from {FAMILIES[cfg.command]}")
    for p in cfg.p:
        if not (0.0 < p <= 1.0):
            raise DomainError(f"p must lie in (0,1], got {p}")
    if cfg.family in ("pd", "cox", "power-law"):
        for m in cfg.m:
            if not (0.0 < m < 1.0):
                raise DomainError(f"m must lie in (0,1) for the {cfg.family} family, got {m}")
    if cfg.family in ("gaps", "poisson") and cfg.command in ("gaps", "sample", "thin"):
        for m in cfg.m:
            if not m > 0:
                raise DomainError(f"m must be positive for gap configurations, got {m}")
    for b in cfg.beta:
        if not b > 0:
            raise DomainError(f"beta must be positive, got {b}")
    for n in cfg.N:
        if not (1 <= n <= rem.MAX_SPINS):
            raise DomainError(f"N must lie in [1, {rem.MAX_SPINS}], got {n}")
    if cfg.command == "steady-state":
        if any(not (0 <= t <= cfg.t_max) for t in cfg.times):
            raise DomainError("observation times must lie in [0, t_max]")
        if not (cfg.L > 0 and cfg.rate > 0):
            raise DomainError("L and rate must be positive")


def parse_config(argv: Optional[Sequence[str]] = None) -> ExperimentConfig:
    """Flags override the optional config file, which overrides the subcommand defaults.

    Raises UsageError for unknown keys or a missing seed and DomainError for
    out-of-range parameters.
    """
    parser = _build_parser()
    ns = parser.parse_args(argv)
    values = dict(DEFAULTS[ns.command])
    if ns.config is not None:
        values.update(_load_config(ns.config))
    for key, v in vars(ns).items():
        if key in ("command", "config") or v is None:
            continue
        values[key] = v
    if values.get("seed") is None:
        raise UsageError("the --seed option is required")
    casts = {"m": float, "p": float, "beta": float, "N": int, "times": float}
    for key in LIST_KEYS:
        if key in values:
            try:
                values[key] = _split(values[key], casts[key])
            except ValueError as exc:
                raise UsageError(f"cannot parse {key}: {exc}") from exc
    if "out" in values:
        values["out"] = Path(values["out"])
    for key in ("seed", "reps", "atoms", "n", "k_top", "threads", "drift_reps", "probe_reps"):
        if key in values:
            values[key] = int(values[key])
    for key in ("level", "t_max", "L", "rate"):
        if key in values:
            values[key] = float(values[key])
    cfg = ExperimentConfig(command=ns.command, **values)
    _validate(cfg)
    return cfg


# --- Experiment runners ------------------------------------------------------


def partition_functionals():
    return [
        Functional("zeta1", lambda x: x.atom(1), top=1),
        Functional("zeta2", lambda x: x.atom(2), top=2),
        Functional("zeta1+zeta2", lambda x: x.atom(1) + x.atom(2), top=2),
        Functional("sum_sq", pt.sum_of_squares),
    ]


def gap_functionals():
    return [
        Functional("W1", lambda w: w.gap(1), top=1),
        Functional("W2", lambda w: w.gap(2), top=2),
        Functional("W2-W1", lambda w: w.gap(2) - w.gap(1), top=2),
    ]


def sequence_functionals(k: int = 4):
    fs = [Functional(f"U{i}", (lambda u, i=i: float(u.marks[i - 1])), top=i) for i in range(1, k + 1)]
    fs.append(Functional(f"code{k}", lambda u: float(sq.first_marks_code(u, k)), top=k))
    return fs


def partition_source(family: str, m: float, atoms: int):
    if family == "pd":
        return lambda s: pt.sample_pd(m, atoms, s)
    if family == "cox":
        spec = pt.CoxKingmanSpec(0.0, pt.point_mass_mixture(m, sinusoidal_density(0.5)))
        return lambda s: pt.sample_cox_kingman(spec, atoms, s)
    if family == "two-atom":
        control = pt.two_atom_control()
        return lambda s: control
    raise UsageError(f"unknown partition family {family!r}")


def partition_transform(family: str):
    if family == "two-atom":
        return lambda x, p, s: pt.thin_conditioned(x, p, s)
    return lambda x, p, s: pt.thin_partition(x, p, None, s)


def directing_measure(family: str):
    return sq.iid_categorical((0.5, 0.5)) if family == "iid" else sq.parity_field(1.0)


@dataclass
class Outcome:
    """Collected results of one run."""

    records: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    columns: tuple = ("suite", "case", "statistic", "p_value", "decision")
    failed: list = field(default_factory=list)
    plots: list = field(default_factory=list)

    def add_report(self, rep: TestReport, case: str, *, expect: str = PASS, gate: bool = True):
        """``gate=False`` records a diagnostic (a probe or a control) without affecting the exit status."""
        ok = rep.decision == expect
        kind = "report" if gate else "diagnostic"
        self.records.append({"kind": kind, "case": case, "expected": expect, "ok": ok, "report": rep.to_record()})
        self.rows.append((rep.test_name, case, float(rep.statistic), float(rep.p_value), rep.decision))
        if gate and rep.decision != PASS:
            self.failed.append(f"{rep.test_name}[{case}]")

    def add_suite(self, suite: SuiteResult, case: str):
        for rep in suite.reports:
            self.records.append({"kind": "report", "case": case, "report": rep.to_record()})
            self.rows.append((rep.test_name, case, float(rep.statistic), float(rep.p_value), rep.decision))
        self.records.append(
            {"kind": "suite", "case": case, "passed": suite.passed, "min_p": suite.min_p,
             "corrected_level": suite.corrected_level, "tests": len(suite)}
        )
        if not suite.passed:
            self.failed.append(f"suite[{case}]")


def _run_sample(cfg: ExperimentConfig, out: Outcome, thin: bool):
    seed = SeedSpec(cfg.seed)
    out.columns = ("family", "m", "p", "replicate", "length", "first", "second")
    ms = cfg.m if cfg.family in ("pd", "cox", "gaps") else [math.nan]
    for i, m in enumerate(ms):
        for r in range(cfg.reps):
            s = seed.child(i, r)
            for j, p in enumerate(cfg.p if thin else [1.0]):
                if cfg.family in ("pd", "cox"):
                    x = partition_source(cfg.family, m, cfg.atoms)(s.child(0))
                    if thin:
                        x = pt.thin_partition(x, p, None, s.child(1, j))
                    rec, first, second = x.to_record(), x.atom(1), x.atom(2)
                elif cfg.family == "gaps":
                    n = gp.required_length(cfg.n + 1, min(cfg.p)) if thin else cfg.n
                    x = gp.sample_gap_poisson(m, n, s.child(0))
                    if thin:
                        x = gp.thin_gaps(x, p, cfg.n, s.child(1, j))
                    rec, first, second = x.to_record(), x.gap(1), x.gap(2)
                else:
                    n = gp.required_length(cfg.n, min(cfg.p)) if thin else cfg.n
                    x = sq.sample_cox_sequence(directing_measure(cfg.family), n, s.child(0))
                    if thin:
                        x = sq.thin_sequence(x, p, cfg.n, s.child(1, j))
                    rec, first, second = x.to_record(), float(x.marks[0]), float(x.marks[1]) if len(x) > 1 else math.nan
                rec = dict(rec, kind="sample", family=cfg.family, m=m, p=p if thin else None, replicate=r)
                out.records.append(rec)
                out.rows.append((cfg.family, m, p if thin else "", r, len(x), first, second))


def _run_invariance(cfg: ExperimentConfig, out: Outcome):
    seed = SeedSpec(cfg.seed)
    ms = [math.nan] if cfg.family == "two-atom" else cfg.m
    for i, m in enumerate(ms):
        suite = invariance_suite(
            partition_source(cfg.family, m, cfg.atoms),
            partition_transform(cfg.family),
            partition_functionals(),
            cfg.p,
            cfg.reps,
            cfg.level,
            seed.child(i),
            workers=cfg.threads,
            name=f"invariance:{cfg.family}",
        )
        case = f"{cfg.family}(m={m:g})" if cfg.family != "two-atom" else "two-atom(0.7,0.3)"
        out.add_suite(suite, case)
        out.plots.append(("ecdf", case, suite))


def _run_gaps(cfg: ExperimentConfig, out: Outcome):
    seed = SeedSpec(cfg.seed)
    n_out = 2
    src_len = gp.required_length(n_out + 1, min(cfg.p))
    for i, m in enumerate(cfg.m):
        cell = seed.child(i)
        w1 = np.array([gp.sample_gap_poisson(m, 1, cell.child(0, r)).gap(1) for r in range(cfg.reps)])
        rep = ks_one_sample(w1, lambda w, m=m: -np.expm1(-m * np.maximum(w, 0.0)), level=cfg.level, name="gap_law:W1~Exp(m)")
        rep.metadata["m"] = m
        out.add_report(rep, f"m={m:g}")
        suite = invariance_suite(
            lambda s, m=m: gp.sample_gap_poisson(m, src_len, s),
            lambda w, p, s: gp.thin_gaps(w, p, n_out, s),
            gap_functionals(),
            cfg.p,
            cfg.reps,
            cfg.level,
            cell.child(1),
            workers=cfg.threads,
            name="gap_invariance",
        )
        out.add_suite(suite, f"gaps(m={m:g})")
        est = gp.estimate_drift_velocity(m, cfg.t_max, reps=cfg.drift_reps, seed=cell.child(2))
        ok = est.ci_low <= 1.0 / m <= est.ci_high
        out.records.append(
            {"kind": "drift", "case": f"m={m:g}", "m": m, "t_max": cfg.t_max, "slope": est.slope, "ci_low": est.ci_low,
             "ci_high": est.ci_high, "se": est.se, "target": 1.0 / m, "reps": est.reps, "ok": ok}
        )
        out.rows.append(("drift", f"m={m:g}", est.slope, math.nan, PASS if ok else REJECT))
        if not ok:
            out.failed.append(f"drift[m={m:g}]")
        out.plots.append(("gap_w1", f"m={m:g}", (w1, m)))


def _run_sequences(cfg: ExperimentConfig, out: Outcome):
    seed = SeedSpec(cfg.seed)
    spec = directing_measure(cfg.family)
    n_out = 4
    src_len = gp.required_length(n_out, min(cfg.p))
    suite = invariance_suite(
        lambda s: sq.sample_cox_sequence(spec, src_len, s),
        lambda u, p, s: sq.thin_sequence(u, p, n_out, s),
        sequence_functionals(n_out),
        cfg.p,
        cfg.reps,
        cfg.level,
        seed.child(0),
        workers=cfg.threads,
        name=f"sequence_invariance:{cfg.family}",
    )
    out.add_suite(suite, cfg.family)
    probe = sq.exchangeability_probe(spec, cfg.probe_reps, seed.child(1), level=cfg.level)
    # the periodic field is thinning invariant but not exchangeable, so the probe is expected to reject
    out.add_report(probe, cfg.family, expect=REJECT if cfg.family == "periodic" else PASS, gate=False)


def _run_steady_state(cfg: ExperimentConfig, out: Outcome):
    seed = SeedSpec(cfg.seed)
    rep = ss.stationarity_report(
        cfg.rate, cfg.L, cfg.t_max, cfg.times, cfg.reps, seed.child(0), initial=cfg.family, level=cfg.level
    )
    out.add_report(rep, cfg.family)
    if cfg.family == "poisson":
        birth = ss.birth_factorization_report(cfg.L, cfg.t_max, cfg.reps, seed.child(1), level=cfg.level)
        out.add_report(birth, cfg.family)


def _run_rem(cfg: ExperimentConfig, out: Outcome):
    seed = SeedSpec(cfg.seed)
    out.columns = ("beta", "N", "estimate", "ci_low", "ci_high", "closed_form")
    curve = []
    for i, beta in enumerate(cfg.beta):
        exact = rem.closed_form_free_energy(beta)
        m_star, value = rem.variational_objective_scan(beta, 1000)
        ok_scan = abs(value - exact) <= 1e-9
        out.records.append({"kind": "rem_scan", "beta": beta, "m_star": m_star, "value": value, "closed_form": exact, "ok": ok_scan})
        if not ok_scan:
            out.failed.append(f"scan[beta={beta:g}]")
        for j, n in enumerate(cfg.N):
            est = rem.direct_rem_estimate(rem.RemParams(beta, n, cfg.reps), seed.child(i, j))
            tol = 0.05 if beta <= rem.BETA_C else 0.15
            ok = abs(est.estimate - exact) <= tol
            out.records.append(
                {"kind": "rem_direct", "beta": beta, "N": n, "replicates": cfg.reps, "estimate": est.estimate, "ci_low": est.ci_low,
                 "ci_high": est.ci_high, "se": est.se, "closed_form": exact, "tolerance": tol, "ok": ok}
            )
            out.rows.append((beta, n, est.estimate, est.ci_low, est.ci_high, exact))
            curve.append((beta, n, est))
            if not ok:
                out.failed.append(f"direct[beta={beta:g},N={n}]")
    for k, m in enumerate(cfg.m):
        for i, beta in enumerate(cfg.beta):
            cav = rem.cavity_functionals_estimate(m, beta, cfg.atoms, 2000, seed.child(len(cfg.beta), k, i))
            out.records.append(
                {"kind": "cavity", "m": m, "beta": beta, "e_hat": cav.e_hat, "s_hat": cav.s_hat, "e_se": cav.e_se, "s_se": cav.s_se,
                 "objective": cav.objective, "e_target": -beta * m / 2.0, "s_magnitude": math.log(2.0) / m,
                 "s_sign": "negative" if cav.s_hat < 0 else "positive",
                 "note": "objective = E_hat + S_hat/beta; the entropy term is nonpositive pointwise"}
            )
    out.plots.append(("rem", "free_energy", curve))


def _run_stability(cfg: ExperimentConfig, out: Outcome):
    seed = SeedSpec(cfg.seed)
    for i, m in enumerate(cfg.m):
        for j, p in enumerate(cfg.p):
            rep = rem.stability_check(m, p, cfg.k_top, cfg.reps, seed.child(i, j), level=cfg.level)
            out.add_report(rep, f"m={m:g},p={p:g}")
            if cfg.control:
                bad = rem.stability_check(m, p, cfg.k_top, cfg.reps, seed.child(i, j, 1), level=cfg.level, scale=2.0 * p ** (1.0 / m))
                out.add_report(bad, f"control m={m:g},p={p:g},c=2p^(1/m)", expect=REJECT, gate=False)


RUNNERS = {
    "sample": lambda c, o: _run_sample(c, o, False),
    "thin": lambda c, o: _run_sample(c, o, True),
    "invariance": _run_invariance,
    "gaps": _run_gaps,
    "sequences": _run_sequences,
    "steady-state": _run_steady_state,
    "rem": _run_rem,
    "stability": _run_stability,
}


def _emit_plots(cfg: ExperimentConfig, out: Outcome) -> list:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for idx, (kind, case, payload) in enumerate(out.plots):
        fig, ax = plt.subplots(figsize=(6, 4))
        if kind == "ecdf":
            key = next(iter(payload.samples))
            a, b = payload.samples[key]
            for v, lab in ((a, "source"), (b, f"thinned p={key[0]:g}")):
                v = np.sort(v)
                ax.step(v, np.arange(1, v.size + 1) / v.size, where="post", label=lab)
            ax.set_xlabel(key[1])
            ax.set_ylabel("empirical CDF")
        elif kind == "gap_w1":
            w1, m = payload
            v = np.sort(w1)
            ax.step(v, np.arange(1, v.size + 1) / v.size, where="post", label="W1")
            ax.plot(v, -np.expm1(-m * v), label=f"Exp({m:g})")
            ax.set_xlabel("W1")
        elif kind == "rem":
            grid = np.linspace(0.2, 4.0, 200)
            ax.plot(grid, [rem.closed_form_free_energy(b) for b in grid], label="closed form")
            for n in sorted({c[1] for c in payload}):
                pts = [(b, e) for b, nn, e in payload if nn == n]
                ax.errorbar([b for b, _ in pts], [e.estimate for _, e in pts],
                            yerr=[[e.estimate - e.ci_low for _, e in pts], [e.ci_high - e.estimate for _, e in pts]],
                            fmt="o", label=f"N={n}")
            ax.set_xlabel("beta")
            ax.set_ylabel("free energy")
        ax.set_title(case)
        ax.legend()
        path = cfg.out / f"{cfg.command}_{idx}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(str(path))
    return written


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run the suite, write artifacts, and return the exit status."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    out = Outcome()
    RUNNERS[cfg.command](cfg, out)
    status = 0 if not out.failed else 1
    summary = {"kind": "summary", "command": cfg.command, "config": cfg.public(), "status": "pass" if status == 0 else "fail", "failed": out.failed}
    write_jsonl(cfg.out / "report.jsonl", out.records + [summary])
    write_csv(cfg.out / "summary.csv", out.columns, out.rows)
    if cfg.emit_plots and out.plots:
        _emit_plots(cfg, out)
    print(json.dumps({"status": summary["status"], "failed": out.failed, "out": str(cfg.out)}, sort_keys=True))
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cfg = parse_config(argv)
    except (UsageError, DomainError) as exc:
        print(f"thinning: error: {exc}", file=sys.stderr)
        return 2
    try:
        return run_experiment(cfg)
    except ThinningError as exc:
        print(json.dumps({"status": "error", "error": type(exc).__name__, "message": str(exc)}, sort_keys=True))
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``stablesplit <command> ...``.

Every command writes ``<name>.json`` (the report), ``<name>.meta.json``
(timestamp and argv, kept apart so reports stay byte-reproducible) and any
CSV tables into ``--out``.  Exit codes: 0 completed, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import Exhaustion, parabolicity_by_capacity, parabolicity_by_growth, solve_capacitor
from .config import (
    ConfigError,
    ExperimentConfig,
    build_space,
    load_experiment,
    load_tols,
    read_field,
    resolve_space_config,
    write_field,
)
from .field_calculus import HESSIAN_DEPTH, ScalarField
from .model_space import ModelSpace, Region
from .profile_growth import (
    ball_dirichlet_energy,
    chain_samples,
    growth_diagnostic,
    solve_profile,
)
from .rigidity import DEFAULT_TOLS, default_region, fiber_average, front_region, splitting_audit
from .semilinear import NumericalFailure, Nonlinearity, energy, initial_guess, newton_solve
from .stability import (
    Positivity,
    RigidityGap,
    SpectralReport,
    integral_gap_scale,
    integral_inequality_gap,
    min_eigenpair,
    picone_gap,
    random_test_field,
    rigidity_gap,
)

SCHEMA_VERSION = "1.0"

# tolerances beyond the splitting audit's, all overridable through --tols
EXTRA_TOLS = {
    "picone_gap": 1e-8,
    "lemma32_gap": 1e-8,
    "lemma32_h2_constant": 1.0,
    "lemma34_gap": 1e-12,
    "profile_agreement": 1e-4,
}
KNOWN_TOLS = set(DEFAULT_TOLS) | set(EXTRA_TOLS)

DEFAULT_DEMO_SPACE = {"family": "cylinder", "T": 12.0, "h": [0.02], "fiber_lengths": [1.28], "density": "zero"}


class Report:
    """Accumulates the pieces of one JSON report while a command runs."""

    def __init__(self, command: str):
        self.command = command
        self.space: dict | None = None
        self.config: dict = {}
        self.payload: dict = {}
        self.verdicts: list[dict] = []
        self.tables: dict[str, str] = {}

    def verdict(self, name, statistic, value, threshold, passed) -> None:
        self.verdicts.append({"name": name, "statistic": statistic, "value": value,
                              "threshold": threshold, "passed": bool(passed)})

    def to_dict(self, status: str = "ok", error: dict | None = None) -> dict:
        return clean({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "status": status,
            "error": error,
            "space": self.space,
            "config": self.config,
            "payload": self.payload,
            "verdicts": self.verdicts,
            "passed": all(v["passed"] for v in self.verdicts),
            "tables": self.tables,
        })


def clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def load_schema() -> dict:
    return json.loads(resources.files("stablesplit").joinpath("schema/report.schema.json").read_text())


def validate_report(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, load_schema())


def write_table(path: Path, columns: dict) -> None:
    """CSV with one column per key; floats use ``repr`` (shortest exact form)."""
    names = list(columns)
    rows = zip(*(columns[k] for k in names))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# ------------------------------------------------------------------ parsing helpers
def _float_list(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(what, f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(what, "empty list")
    return vals


def parse_region(text: str, what: str) -> Region:
    """``full`` or ``ball:r=R[,open]``."""
    head, _, tail = text.strip().lower().partition(":")
    if head == "full" and not tail:
        return Region.full()
    if head != "ball":
        raise ConfigError(what, f"unknown region {text!r} (expected ball:r=R[,open] or full)")
    radius, closed = None, True
    for part in filter(None, (p.strip() for p in tail.split(","))):
        key, _, val = part.partition("=")
        if key == "r" and val:
            try:
                radius = float(val)
            except ValueError:
                raise ConfigError(what, f"bad radius {val!r}") from None
        elif key == "open" and not val:
            closed = False
        else:
            raise ConfigError(what, f"unknown region option {part!r}")
    if radius is None or radius <= 0:
        raise ConfigError(what, "ball needs a positive radius r=R")
    return Region.ball(radius, closed=closed)


def _nonlinearity(text: str | None, extra: dict) -> Nonlinearity:
    text = text or extra.get("nl") or "allen-cahn"
    try:
        return Nonlinearity.parse(text)
    except ValueError as exc:
        raise ConfigError("nl", str(exc)) from exc


def _space_from_args(args) -> tuple[ModelSpace, ExperimentConfig]:
    exp = load_experiment(args.config)
    return build_space(exp.space), exp


def _spectral_from_file(path: str, u: ScalarField) -> SpectralReport:
    w, extra = read_field(path)
    if w.space.describe() != u.space.describe():
        raise ConfigError("spectral", "eigenfield lives on a different space than the solution")
    w = ScalarField(u.space, w.values)
    try:
        return SpectralReport(float(extra["lambda_min"]), w, Positivity(extra["positivity"]), bool(extra["stable"]),
                              float(extra["tol"]), float(extra["tol_stab"]), float(extra["residual"]),
                              int(extra["iterations"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError("spectral", f"eigenfield sidecar lacks spectral data: {exc}") from exc


def _audit_region(u: ScalarField, spec: str) -> np.ndarray:
    if spec == "default":
        return default_region(u.space)
    head, _, tail = spec.partition(":")
    if head == "front" and tail:
        try:
            return front_region(u, float(tail))
        except ValueError:
            raise ConfigError("region", f"bad half-width {tail!r}") from None
    raise ConfigError("region", f"expected 'default' or 'front:W', got {spec!r}")


# ------------------------------------------------------------------ commands
def cmd_solve(args, rep: Report, tols: dict, out: Path) -> int:
    space, exp = _space_from_args(args)
    if args.nl:
        exp.nl = args.nl
    if args.init:
        exp.init = args.init
    if args.tol is not None:
        exp.tol = args.tol
    if args.max_iter is not None:
        exp.max_iter = args.max_iter
    if args.axis_dirichlet:
        vals = _float_list(args.axis_dirichlet, "axis_dirichlet")
        if len(vals) != 2:
            raise ConfigError("axis_dirichlet", "expected two values 'a,b'")
        exp.axis_dirichlet = (vals[0], vals[1])
    if args.seed is not None:
        exp.seed = args.seed
    init = exp.init
    if init.strip().lower() == "random":
        init = f"random:{exp.seed},1.0"
    rep.space = space.describe()
    rep.config = exp.echo()
    nl = _nonlinearity(exp.nl, {})
    try:
        u0 = initial_guess(space, init)
    except ValueError as exc:
        raise ConfigError("init", str(exc)) from exc
    outcome = newton_solve(space, nl, u0, tol=exp.tol, max_iter=exp.max_iter, initial_label=init,
                           axis_dirichlet=exp.axis_dirichlet)
    rep.payload = dict(outcome.summary(), energy=energy(outcome.u, nl), nl=nl.describe())
    write_field(out / "solution.csv", outcome.u, {"nl": nl.describe(), "axis_dirichlet": exp.axis_dirichlet})
    rep.tables["solution"] = "solution.csv"
    rep.verdict("converged", "residual_norm", outcome.residual_norm, exp.tol, outcome.converged)
    if not outcome.converged:
        raise NumericalFailure(f"Newton did not converge: residual {outcome.residual_norm:.3e} after "
                               f"{outcome.iterations} iterations")
    return 0


def cmd_stability(args, rep: Report, tols: dict, out: Path) -> int:
    u, extra = read_field(args.solution)
    nl = _nonlinearity(args.nl, extra)
    rep.space = u.space.describe()
    rep.config = {"solution": str(args.solution), "nl": nl.describe(), "tol": args.tol}
    spec = min_eigenpair(u, nl, tol=args.tol)
    rep.payload = spec.summary()
    sidecar = dict(spec.summary(), nl=nl.describe())
    write_field(out / "eigenfield.csv", spec.eigenfield, sidecar)
    rep.tables["eigenfield"] = "eigenfield.csv"
    rep.verdict("stable", "lambda_min", spec.lambda_min, -spec.tol_stab, spec.stable)
    rep.verdict("positive_ground_state", "eigenfield_min", float(spec.eigenfield.values.min()), 0.0,
                spec.positivity is Positivity.STRICTLY_POSITIVE)
    return 0


def _trial_support(space: ModelSpace, kind: str) -> np.ndarray:
    # picone needs vanishing truncation values only; the second-order gaps need the Hessian stencil
    return space.interior_mask(1 if kind == "picone" else HESSIAN_DEPTH)


def cmd_verify(args, rep: Report, tols: dict, out: Path) -> int:
    u, extra = read_field(args.solution)
    nl = _nonlinearity(args.nl, extra)
    s = u.space
    seed = 0 if args.seed is None else args.seed
    rep.space = s.describe()
    rep.config = {"solution": str(args.solution), "nl": nl.describe(), "trials": args.trials, "seed": seed,
                  "lemma": args.lemma, "tols": {k: tols[k] for k in sorted(EXTRA_TOLS)}}
    if args.trials < 1:
        raise ConfigError("trials", "must be at least 1")
    spec = _spectral_from_file(args.spectral, u) if args.spectral else min_eigenpair(u, nl)
    if spec.positivity is not Positivity.STRICTLY_POSITIVE:
        raise NumericalFailure("stability equivalence unavailable: no positive ground state")
    w = spec.eigenfield
    kernel = abs(spec.lambda_min) <= spec.tol_stab
    rng = np.random.default_rng(seed)
    support = _trial_support(s, args.lemma)
    gaps, rel, lhs_l, rhs_l = [], [], [], []
    ratio_stats = None
    for _ in range(args.trials):
        h = random_test_field(s, rng, support)
        if args.lemma == "picone":
            r = picone_gap(u, nl, w, h)
            lhs, rhs, gap = r.lhs, r.rhs, r.gap
            scale = max(abs(lhs), abs(rhs))
        elif args.lemma == "lemma32":
            gap = integral_inequality_gap(u, nl, w, h)
            scale = integral_gap_scale(u, h)
            lhs, rhs = float("nan"), float("nan")
        else:
            r = rigidity_gap(u, nl, h, spec)
            lhs, rhs, gap = r.lhs, r.rhs, r.rhs - r.lhs
            scale = max(abs(lhs), abs(rhs))
            if ratio_stats is None:
                # the ratio is judged on the audit slab, clear of the truncation layer
                field = np.ma.masked_array(r.ratio_field.data, r.ratio_field.mask | ~default_region(s))
                ratio_stats = RigidityGap(r.lhs, r.rhs, field).ratio_stats()
        scale = scale if scale > 0 else 1.0
        gaps.append(gap)
        rel.append(gap / scale)
        lhs_l.append(lhs)
        rhs_l.append(rhs)
    gaps_a, rel_a = np.array(gaps), np.array(rel)
    rep.payload = {
        "gap": {"min": gaps_a.min(), "mean": gaps_a.mean(), "max": gaps_a.max()},
        "relative_gap": {"min": rel_a.min(), "mean": rel_a.mean(), "max": rel_a.max()},
        "lambda_min": spec.lambda_min,
        "kernel_ground_state": kernel,
    }
    if ratio_stats is not None:
        rep.payload["ratio"] = ratio_stats
    name = f"verify-{args.lemma}"
    write_table(out / f"{name}.csv", {"trial": list(range(args.trials)), "lhs": lhs_l, "rhs": rhs_l,
                                       "gap": gaps, "relative_gap": rel})
    rep.tables["trials"] = f"{name}.csv"
    if args.lemma == "picone":
        tol = tols["picone_gap"]
        rep.verdict("inequality", "min relative gap", float(rel_a.min()), -tol, rel_a.min() >= -tol)
        if kernel:
            rep.verdict("equality_case", "max |relative gap|", float(np.abs(rel_a).max()), tol,
                        np.abs(rel_a).max() <= tol)
    elif args.lemma == "lemma32":
        h2 = tols["lemma32_h2_constant"] * max(s.spacing) ** 2
        if kernel:
            # equality holds up to the second-order discretization error
            rep.verdict("equality_case", "max |relative gap|", float(np.abs(rel_a).max()), h2,
                        np.abs(rel_a).max() <= h2)
        else:
            tol = tols["lemma32_gap"]
            rep.verdict("inequality", "min relative gap", float(rel_a.min()), -tol, rel_a.min() >= -tol)
    else:
        tol = tols["lemma34_gap"]
        rep.verdict("inequality", "min relative gap", float(rel_a.min()), -tol, rel_a.min() >= -tol)
        rc = ratio_stats["rel_std"] if ratio_stats and ratio_stats["count"] else float("inf")
        rep.verdict("ratio_constant", "stdev/mean of |grad u|/w", rc, tols["ratio_constancy"],
                    rc <= tols["ratio_constancy"])
    return 0


def _splitting_tables(report, out: Path, rep: Report, prefix: str = "") -> None:
    lv = report.tables.get("levels", [])
    if lv:
        write_table(out / f"{prefix}levels.csv", {k: [r[k] for r in lv] for k in lv[0]})
        rep.tables["levels"] = f"{prefix}levels.csv"
    tr = report.tables.get("trajectories", [])
    if tr:
        cols: dict = {"seed": [], "step": []}
        n = len(tr[0][0])
        for i in range(n):
            cols[f"x{i}"] = []
        for sidx, traj in enumerate(tr):
            for step, pt in enumerate(traj):
                cols["seed"].append(sidx)
                cols["step"].append(step)
                for i in range(n):
                    cols[f"x{i}"].append(float(pt[i]))
        write_table(out / f"{prefix}trajectories.csv", cols)
        rep.tables["trajectories"] = f"{prefix}trajectories.csv"
    pr = report.tables.get("profile")
    if pr:
        write_table(out / f"{prefix}fiber_profile.csv", {"t": pr["t"], "y": pr["y"]})
        rep.tables["fiber_profile"] = f"{prefix}fiber_profile.csv"


def cmd_split(args, rep: Report, tols: dict, out: Path) -> int:
    u, extra = read_field(args.solution)
    nl = _nonlinearity(args.nl, extra)
    spec = _spectral_from_file(args.spectral, u) if args.spectral else min_eigenpair(u, nl)
    rep.space = u.space.describe()
    audit_tols = {k: tols[k] for k in DEFAULT_TOLS}
    rep.config = {"solution": str(args.solution), "spectral": args.spectral, "nl": nl.describe(),
                  "levels": args.levels, "seeds": args.seeds, "region": args.region, "tols": audit_tols}
    region = _audit_region(u, args.region)
    report = splitting_audit(u, nl, spec, levels=args.levels, seeds=args.seeds, tols=audit_tols, region=region)
    rep.payload = {"stats": report.stats, "lambda_min": spec.lambda_min}
    rep.verdicts.extend(report.verdicts)
    _splitting_tables(report, out, rep)
    return 0


def cmd_capacity(args, rep: Report, tols: dict, out: Path) -> int:
    space, exp = _space_from_args(args)
    rep.space = space.describe()
    rep.config = {"space": exp.space, "K": args.K, "omega": args.omega}
    K = parse_region(args.K, "K")
    omega = parse_region(args.omega, "omega")
    try:
        cap = solve_capacitor(space, K, omega)
    except ValueError as exc:
        raise ConfigError("K", str(exc)) from exc
    rep.payload = cap.summary()
    write_field(out / "capacitor.csv", cap.phi, {"K": args.K, "omega": args.omega})
    rep.tables["capacitor"] = "capacitor.csv"
    lo, hi = float(cap.phi.values.min()), float(cap.phi.values.max())
    rep.verdict("maximum_principle", "phi range excess", max(-lo, hi - 1.0, 0.0), 1e-10,
                lo >= -1e-10 and hi <= 1.0 + 1e-10)
    return 0


def cmd_parabolicity(args, rep: Report, tols: dict, out: Path) -> int:
    space, exp = _space_from_args(args)
    rep.space = space.describe()
    rep.config = {"space": exp.space, "method": args.method, "rmax": args.rmax, "r0": args.r0,
                  "K": args.K, "tol_cap": args.tol_cap}
    if args.method == "capacity":
        K = parse_region(args.K, "K")
        radii = []
        r = 2.0 * args.r0
        while r <= args.rmax * (1 + 1e-12):
            radii.append(r)
            r *= 2.0
        if len(radii) < 3:
            raise ConfigError("rmax", "need at least three doublings of r0 below rmax")
        try:
            v = parabolicity_by_capacity(space, K, Exhaustion.balls(radii), args.tol_cap)
        except ValueError as exc:
            raise ConfigError("rmax", str(exc)) from exc
        ev = v.evidence
        write_table(out / "capacity_sequence.csv", {"radius": radii, "energy": ev["sequence"],
                                                   "resistance": [1.0 / e for e in ev["sequence"]]})
        rep.tables["sequence"] = "capacity_sequence.csv"
        rep.verdict("zero_capacity", "limit_estimate", ev["limit_estimate"], ev["tol_cap"], ev["zero_capacity"])
    else:
        try:
            v = parabolicity_by_growth(space, args.rmax, r0=args.r0)
        except ValueError as exc:
            raise ConfigError("rmax", str(exc)) from exc
        ev = v.evidence
        r = np.array(ev["r"])
        V = np.array(ev["V"])
        L = np.array(ev["L"])
        write_table(out / "growth_integrands.csv", {"r": r, "V": V, "L": L,
                                                   "inv_L": np.where(L > 0, 1.0 / np.where(L > 0, L, 1.0), np.inf),
                                                   "r_over_V": r / V})
        rep.tables["integrands"] = "growth_integrands.csv"
        rep.verdict("area_growth_divergent", "L_exponent", ev["L_exponent"], 1.05, ev["L_criterion_divergent"])
        rep.verdict("volume_growth_divergent", "V_exponent", ev["V_exponent"], 2.05, ev["V_criterion_divergent"])
    rep.payload = v.summary()
    return 0


def cmd_profile(args, rep: Report, tols: dict, out: Path) -> int:
    nl = _nonlinearity(args.nl, {})
    bvals = _float_list(args.boundary, "boundary")
    if len(bvals) != 2:
        raise ConfigError("boundary", "expected two values 'a,b'")
    rep.config = {"nl": nl.describe(), "k": args.k, "T": args.T, "h": args.h, "boundary": bvals, "tol": args.tol}
    try:
        p = solve_profile(nl, args.k, bvals, args.T, args.h, tol=args.tol)
    except ValueError as exc:
        raise ConfigError("profile", str(exc)) from exc
    rep.payload = p.summary()
    write_table(out / "profile.csv", {"t": p.t, "y": p.y, "yp": p.yp})
    rep.tables["profile"] = "profile.csv"
    rep.verdict("ode_residual", "ode_residual_max", p.ode_residual_max, args.tol, p.ode_residual_max <= args.tol)
    return 0


def _default_radii(space: ModelSpace) -> list[float]:
    T = space.T
    top = T / math.sqrt(2.0) - 2 * space.spacing[0]
    return [float(r) for r in np.geomspace(1.5, top, 8)]


def cmd_growth(args, rep: Report, tols: dict, out: Path) -> int:
    u, extra = read_field(args.solution)
    s = u.space
    radii = _float_list(args.radii, "radii") if args.radii else _default_radii(s)
    rep.space = s.describe()
    rep.config = {"solution": str(args.solution), "radii": radii}
    try:
        samples = {float(R): ball_dirichlet_energy(u, R) for R in radii}
        chain = chain_samples(u, radii) if s.n >= 2 and s.T is not None else None
        diag = growth_diagnostic(samples, chain)
    except ValueError as exc:
        raise ConfigError("radii", str(exc)) from exc
    rep.payload = diag.summary()
    cols = {"R": list(diag.R), "Q": list(diag.Q), "gamma": list(diag.gamma)}
    if diag.chain:
        cols["chain_lhs"] = diag.chain["lhs"]
        cols["chain_rhs"] = diag.chain["rhs"]
    write_table(out / "growth_samples.csv", cols)
    rep.tables["samples"] = "growth_samples.csv"
    rep.verdict("energy_small_o", "fitted (p, q)", [diag.p, diag.q], [2.0, 1.0], diag.small_o_flag)
    if diag.chain:
        rep.verdict("chain_inequality", "all radii", diag.chain["all_hold"], True, diag.chain["all_hold"])
    return 0


def cmd_demo(args, rep: Report, tols: dict, out: Path) -> int:
    """Cylinder, Allen-Cahn solve, stability, splitting audit, profile cross-check, growth."""
    if args.config:
        exp = load_experiment(args.config)
    else:
        exp = ExperimentConfig(resolve_space_config({k: (",".join(map(str, v)) if isinstance(v, list) else str(v))
                                                     for k, v in DEFAULT_DEMO_SPACE.items()}), init="tanh:1.0")
    space = build_space(exp.space)
    if space.n < 2 or space.T is None:
        raise ConfigError("config.family", "the demo needs an axis times a fiber")
    rep.space = space.describe()
    rep.config = exp.echo()
    nl = _nonlinearity(exp.nl, {})
    stages: dict = {}
    rep.payload = {"stages": stages}

    u0 = initial_guess(space, exp.init)
    sol = newton_solve(space, nl, u0, tol=exp.tol, max_iter=exp.max_iter, initial_label=exp.init,
                       axis_dirichlet=exp.axis_dirichlet)
    stages["solve"] = dict(sol.summary(), energy=energy(sol.u, nl))
    rep.verdict("solve_converged", "residual_norm", sol.residual_norm, exp.tol, sol.converged)
    if not sol.converged:
        raise NumericalFailure(f"Newton did not converge: residual {sol.residual_norm:.3e}")
    write_field(out / "solution.csv", sol.u, {"nl": nl.describe(), "axis_dirichlet": exp.axis_dirichlet})
    rep.tables["solution"] = "solution.csv"

    spec = min_eigenpair(sol.u, nl)
    stages["stability"] = spec.summary()
    rep.verdict("stable", "lambda_min", spec.lambda_min, -spec.tol_stab, spec.stable)
    rep.verdict("positive_ground_state", "eigenfield_min", float(spec.eigenfield.values.min()), 0.0,
                spec.positivity is Positivity.STRICTLY_POSITIVE)

    # Dirichlet axis data push fronts off center; audit around the front in that case
    region = front_region(sol.u, space.T / 3) if exp.axis_dirichlet else default_region(space)
    audit_tols = {k: tols[k] for k in DEFAULT_TOLS}
    report = splitting_audit(sol.u, nl, spec, tols=audit_tols, region=region)
    stages["splitting"] = report.stats
    rep.verdicts.extend(report.verdicts)
    _splitting_tables(report, out, rep)

    t = space.coords[0]
    y = fiber_average(sol.u)
    k_hat = report.stats["k_mean"]
    if exp.axis_dirichlet:
        bvals = exp.axis_dirichlet
    else:
        bvals = (float(y[0]), float(y[-1]))
    p = solve_profile(nl, k_hat, bvals, space.T, space.spacing[0])
    diff = float(np.abs(p.y - y).max())
    stages["profile"] = dict(p.summary(), sup_difference=diff, boundary=list(bvals))
    rep.verdict("profile_agreement", "sup |fiber average - profile|", diff, tols["profile_agreement"],
                diff <= tols["profile_agreement"])
    write_table(out / "profile.csv", {"t": t, "fiber_average": y, "profile": p.y})
    rep.tables["profile"] = "profile.csv"

    radii = _default_radii(space)
    samples = {float(R): ball_dirichlet_energy(sol.u, R) for R in radii}
    diag = growth_diagnostic(samples, chain_samples(sol.u, radii))
    stages["growth"] = diag.summary()
    rep.verdict("energy_small_o", "fitted (p, q)", [diag.p, diag.q], [2.0, 1.0], diag.small_o_flag)
    rep.verdict("chain_inequality", "all radii", diag.chain["all_hold"], True, diag.chain["all_hold"])
    return 0


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--out", default="stablesplit-out", help="output directory")
    common.add_argument("--tols", default=None, help="tolerance override file (key = value)")

    p = argparse.ArgumentParser(prog="stablesplit", description="Stable solutions on weighted model manifolds.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    q = sub.add_parser("solve", parents=[common], help="Newton solve of the semilinear equation")
    q.add_argument("--config", required=True)
    q.add_argument("--nl", default=None, help="allen-cahn | zero | linear:mu | poly:c0,c1,...")
    q.add_argument("--init", default=None, help="tanh[:s] | const:c | random[:seed,amp]")
    q.add_argument("--tol", type=float, default=None)
    q.add_argument("--max-iter", type=int, default=None)
    q.add_argument("--axis-dirichlet", default=None, help="fixed axis-end values 'a,b'")
    q.set_defaults(func=cmd_solve)

    q = sub.add_parser("stability", parents=[common], help="smallest eigenpair of the stability operator")
    q.add_argument("--solution", required=True)
    q.add_argument("--nl", default=None)
    q.add_argument("--tol", type=float, default=1e-10)
    q.set_defaults(func=cmd_stability)

    q = sub.add_parser("verify", parents=[common], help="gap statistics over random test fields")
    q.add_argument("lemma", choices=["picone", "lemma32", "lemma34"])
    q.add_argument("--solution", required=True)
    q.add_argument("--spectral", default=None, help="eigenfield file from 'stability'")
    q.add_argument("--trials", type=int, default=100)
    q.add_argument("--nl", default=None)
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("split-report", parents=[common], help="splitting audit of a solution")
    q.add_argument("--solution", required=True)
    q.add_argument("--spectral", default=None, help="eigenfield file from 'stability'")
    q.add_argument("--levels", type=int, default=8)
    q.add_argument("--seeds", type=int, default=8)
    q.add_argument("--region", default="default", help="default | front:W")
    q.add_argument("--nl", default=None)
    q.set_defaults(func=cmd_split)

    q = sub.add_parser("capacity", parents=[common], help="f-capacitor of a pair K inside omega")
    q.add_argument("--config", required=True)
    q.add_argument("--K", default="ball:r=1")
    q.add_argument("--omega", default="ball:r=8,open")
    q.set_defaults(func=cmd_capacity)

    q = sub.add_parser("parabolicity", parents=[common], help="parabolicity verdict")
    q.add_argument("--method", choices=["capacity", "growth"], required=True)
    q.add_argument("--config", required=True)
    q.add_argument("--rmax", type=float, required=True)
    q.add_argument("--r0", type=float, default=1.0, help="lower radius (K radius for the capacity method)")
    q.add_argument("--K", default="ball:r=1")
    q.add_argument("--tol-cap", type=float, default=None)
    q.set_defaults(func=cmd_parabolicity)

    q = sub.add_parser("profile", parents=[common], help="boundary-value solve of the profile ODE")
    q.add_argument("--nl", default="allen-cahn")
    q.add_argument("--k", type=float, default=0.0)
    q.add_argument("--T", type=float, default=12.0)
    q.add_argument("--h", type=float, default=1e-3)
    q.add_argument("--boundary", default="-1,1")
    q.add_argument("--tol", type=float, default=1e-8)
    q.set_defaults(func=cmd_profile)

    q = sub.add_parser("growth", parents=[common], help="growth diagnostic of the Dirichlet energy")
    q.add_argument("--solution", required=True)
    q.add_argument("--radii", default=None, help="comma-separated radii (default: 8 geometric radii)")
    q.set_defaults(func=cmd_growth)

    q = sub.add_parser("theorem12-demo", parents=[common], help="end-to-end cylinder pipeline")
    q.add_argument("--config", default=None, help="space/experiment config (default: Allen-Cahn cylinder)")
    q.set_defaults(func=cmd_demo)
    return p


def _write(out: Path, name: str, doc: dict, argv) -> None:
    validate_report(doc)
    (out / f"{name}.json").write_text(dumps(doc))
    meta = {"created": _dt.datetime.now(_dt.timezone.utc).isoformat(), "argv": list(argv),
            "version": __version__, "report": f"{name}.json"}
    (out / f"{name}.meta.json").write_text(dumps(meta))


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    name = f"verify-{args.lemma}" if args.command == "verify" else args.command
    rep = Report(args.command)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"stablesplit: error: out: cannot create {out}: {exc.strerror}", file=sys.stderr)
        return 2
    try:
        tols = dict(DEFAULT_TOLS, **EXTRA_TOLS)
        if args.tols:
            tols.update(load_tols(args.tols, KNOWN_TOLS))
        code = args.func(args, rep, tols, out)
        doc = rep.to_dict()
    except ConfigError as exc:
        print(f"stablesplit: error: {exc}", file=sys.stderr)
        doc = rep.to_dict("invalid_input", {"type": "ConfigError", "path": exc.path, "message": str(exc)})
        code = 2
    except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"stablesplit: numerical failure: {exc}", file=sys.stderr)
        doc = rep.to_dict("numerical_failure", {"type": type(exc).__name__, "path": None, "message": str(exc)})
        code = 3
    _write(out, name, doc, argv)
    print(f"{doc['status']}: {out / (name + '.json')} ({sum(v['passed'] for v in doc['verdicts'])}/"
          f"{len(doc['verdicts'])} verdicts passed)")
    return code


if __name__ == "__main__":
    sys.exit(main())

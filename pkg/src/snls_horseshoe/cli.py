"""Command-line front end: one subcommand per pipeline stage, one run directory per call.

Every run writes manifest.json (schema, resolved config, versions, artifact
list) next to its outputs. Timings are only recorded with --timings so that
repeated runs are byte-identical by default.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .global_map import (CANONICAL_ETA, ConsistencyError, GlobalMapModel, PoincareMap,
                         TransversalityError, affine_flow, canonical_model, canonical_rates,
                         check_A2_A3, estimate_C)
from .horseshoe import (GenericityError, InconclusiveError, ItineraryError, RefinementError,
                        ShootingError, SlabError, SliceError, asymptotic_point,
                        fixed_point_family, hat_coordinates, hat_distance, model_problem,
                        refine_fixed_point, run_horseshoe)
from .io import write_csv, write_json, write_snapshot, write_trajectory_csv
from .normal_form import (DomainExitError, NormalFormRates, flow_to_sigma1_by_events,
                          local_map_P01, random_sigma0_points)
from .params import (ModelParams, ParameterError, SearchBudgetError, check_nonresonance,
                     check_silnikov_conditions, compute_saddle, compute_spectrum,
                     ladder_from_values)
from .solver import SCHEMES, BlowupError, FieldState, SolverConfig, trajectory

MANIFEST_SCHEMA = 1
OUT_ENV = "SNLS_OUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3

NUMERICAL_ERRORS = (BlowupError, DomainExitError, SliceError, SlabError, RefinementError,
                    InconclusiveError, ShootingError, ItineraryError, GenericityError,
                    TransversalityError, ConsistencyError, SearchBudgetError,
                    np.linalg.LinAlgError)


class UsageError(Exception):
    """Flag combination rejected after parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- flag helpers ---------------------------------------------------------------

def _positive(kind):
    def conv(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _add_physics(p, eps=0.01):
    p.add_argument("--omega", type=float, default=0.8)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--eps", type=float, default=eps)


def _add_model(p):
    p.add_argument("--model", type=Path, default=None,
                   help="JSON with a global map model (optionally under 'model' with 'rates' and 'eta')")
    p.add_argument("--eta", type=float, default=None)


def _params(a) -> ModelParams:
    return ModelParams(a.alpha, a.beta, a.omega, a.eps)


def load_model_bundle(path: Path | None, eta: float | None = None):
    """(model, rates, eta); the canonical synthetic instance fills anything missing."""
    if path is None:
        return canonical_model(), canonical_rates(), eta or CANONICAL_ETA
    if not path.is_file():
        raise UsageError(f"model file {path} does not exist")
    d = json.loads(path.read_text())
    body = d.get("model", d)
    model = GlobalMapModel.from_dict(body)
    rates = NormalFormRates.from_dict(d["rates"]) if "rates" in d else canonical_rates()
    return model, rates, eta or float(d.get("eta", CANONICAL_ETA))


def _complex_list(values):
    return [[float(np.real(v)), float(np.imag(v))] for v in values]


# -- subcommands ------------------------------------------------------------------
# each returns (config dict, {artifact name: writer(path)}, summary dict)

def cmd_saddle(a):
    st = compute_saddle(_params(a))
    rec = {"I": st.I, "theta": st.theta, "q": [st.q_value.real, st.q_value.imag]}
    return rec


def _spectrum_record(params: ModelParams, n_max: int, s, nmx, rmax, lb):
    st = compute_saddle(params)
    ladder = compute_spectrum(params, max(n_max, nmx, lb))
    sil = check_silnikov_conditions(ladder)
    rec = {"I": st.I, "theta": st.theta,
           "lambda": _complex_list(ladder.lambda_plus[:n_max + 1]),
           "lambda_minus": _complex_list(ladder.lambda_minus[:n_max + 1]),
           "rates": dict(zip(("a", "b", "gamma1", "gamma2"), sil.rates.as_tuple())),
           "silnikov": {"c1": sil.c1, "c2": sil.c2, "c3": sil.c3,
                        "indeterminate": sil.indeterminate}}
    nr = check_nonresonance(ladder, s, nmx, rmax, lb)
    rec["nonresonance"] = {"holds": nr.holds, "worst_margin": nr.worst_margin,
                           "witness": nr.witness}
    return rec


def cmd_spectrum(a):
    return _spectrum_record(_params(a), a.n_max, a.s, a.nr_n_max, a.r_max, a.l_bound)


def cmd_nonres(a):
    if a.ladder_json is not None:
        if not a.ladder_json.is_file():
            raise UsageError(f"ladder file {a.ladder_json} does not exist")
        d = json.loads(a.ladder_json.read_text())
        ladder = ladder_from_values([complex(*v) for v in d["plus"]],
                                    [complex(*v) for v in d["minus"]])
        source = str(a.ladder_json)
    else:
        ladder = compute_spectrum(_params(a), max(a.n_max, a.l_bound))
        source = "physical"
    nr = check_nonresonance(ladder, a.s, a.n_max, a.r_max, a.l_bound)
    return {"source": source, "holds": nr.holds, "worst_margin": nr.worst_margin,
            "witness": nr.witness, "combinations": nr.combinations}


def cmd_evolve(a, out: Path):
    params = _params(a)
    cfg = SolverConfig(K=a.modes, dt=a.dt, t_end=a.tend, scheme=a.scheme)
    st = compute_saddle(params)
    state = FieldState.constant(st.q_value, a.modes)
    rng = np.random.default_rng(a.seed)
    k = np.arange(a.modes)
    pert = a.perturbation * np.exp(-k) * (rng.standard_normal(a.modes)
                                          + 1j * rng.standard_normal(a.modes))
    pert[k >= int(np.ceil(2 * a.modes / 3))] = 0.0
    state = FieldState(state.modes + pert, 0.0)
    traj = trajectory(state, params, cfg, record_every=a.record_every)
    write_trajectory_csv(out / "trajectory.csv", traj)
    write_snapshot(out / "final.snlsbin", traj[-1])
    summary = {"t_end": traj[-1].time, "records": len(traj),
               "mass_final": float(np.sum(np.abs(traj[-1].modes) ** 2))}
    return summary, ["trajectory.csv", "final.snlsbin"]


def cmd_local_map(a, out: Path):
    model, rates, eta = load_model_bundle(a.model, a.eta)
    pts = random_sigma0_points(a.n, eta, rates, seed=a.seed)
    rows, worst = [], 0.0
    for i, p in enumerate(pts):
        q = local_map_P01(p, eta, rates)
        t0, r = flow_to_sigma1_by_events(p, eta, rates)
        err = float(np.max(np.abs(q.to_array() - r.to_array())))
        worst = max(worst, err)
        rows.append([i, t0] + q.to_array().tolist() + [err])
    n = len(pts[0].to_array())
    header = ["index", "t0"] + [f"p1_{j}" for j in range(n)] + ["event_difference"]
    write_csv(out / "local_map.csv", header, rows)
    return {"points": len(pts), "max_event_difference": worst, "eta": eta}, ["local_map.csv"]


def cmd_global_map(a, out: Path):
    model, rates, eta = load_model_bundle(a.model, a.eta)
    if a.action == "estimate":
        est = estimate_C(affine_flow(model, a.t1), model.q1_star, a.t1)
        err = float(np.max(np.abs(est.C - model.C)))
        write_json(out / "C_estimate.json", {"C": est.C, "y_row_residual": est.y_row_residual,
                                             "dFy_dt": est.dFy_dt, "max_entry_error": err})
        return {"max_entry_error": err, "y_row_residual": est.y_row_residual}, ["C_estimate.json"]
    g = check_A2_A3(model, rates, a.l)
    rec = {"A2": g.A2, "A3": g.A3, "span_conditioning": g.span_conditioning,
           "delta1": g.delta1, "delta2": g.delta2, "c23_or_c33_nonzero": g.c23_or_c33_nonzero,
           "phi1": model.phi1}
    write_json(out / "genericity.json", rec)
    return rec, ["genericity.json"]


def cmd_fixed_points(a, out: Path):
    model, rates, eta = load_model_bundle(a.model, a.eta)
    labels = range(a.l_min, a.l_max + 1)
    fam = fixed_point_family(model, rates, l_range=range(0, a.l_max + 2), eta=eta)
    P = PoincareMap(model, eta, rates)
    rows, failures = [], {}
    for l in labels:
        e = fam.entry(l)
        guess = asymptotic_point(fam, l, model, eta, rates)
        try:
            q = refine_fixed_point(P, guess)
        except (DomainExitError, RefinementError) as exc:
            failures[l] = str(exc)
            continue
        t0r = hat_coordinates(q, model, eta, rates)[0]
        rows.append([l, e.t0, t0r, e.x_hat0, e.z_hat12, hat_distance(q, e, model, eta, rates)]
                    + P.point_to_row(q).tolist())
    header = (["l", "t0_asymptotic", "t0_refined", "x_hat0", "z_hat12", "refined_distance"]
              + ["x", "z1", "z2"] + [f"tail{j}" for j in range(model.tail_dim)])
    write_csv(out / "fixed_points.csv", header, rows)
    gaps = [r2[2] - r1[2] for r1, r2 in zip(rows, rows[1:]) if r2[0] == r1[0] + 1]
    summary = {"phi1": model.phi1, "l0": fam.l0, "refined": len(rows), "failures": failures,
               "last_gap_over_pi_b": gaps[-1] * rates.b / np.pi if gaps else None}
    return summary, ["fixed_points.csv"]


def cmd_horseshoe(a, out: Path):
    model, rates, eta = load_model_bundle(a.model, a.eta)
    run = run_horseshoe(model, rates, eta, l=a.l, depth=a.depth, period=a.period, grid=a.grid)
    ss = run.slices
    rows = []
    for kind, group in (("V", ss.V), ("H", ss.H)):
        for lab in ss.labels:
            for i, w in enumerate(group[lab].boundary):
                rows.append([kind, lab, i] + [float(v) for v in w])
    dim = ss.problem.dim
    cols = ["u1", "u2"] + [f"s{j}" for j in range(dim - 2)]
    write_csv(out / "slices.csv", ["slice", "label", "index"] + cols, rows)
    rep = run.report
    cm = {"cond_i": rep.cond_i, "nu": rep.nu, "nu_stable": rep.nu_stable,
          "nu_unstable": rep.nu_unstable, "levels": rep.levels, "l": run.l, "grid": a.grid,
          "rejected_l": run.attempts, "geometry": {k: v for k, v in ss.diagnostics.items()
                                                   if k != "branches"},
          "counts": {p: c.count for p, c in run.counts.items()}}
    write_json(out / "cm_report.json", cm)
    orows = []
    for p, c in run.counts.items():
        for word, pt, r, tol in zip(c.words, c.points, c.residuals, c.tolerances):
            orows.append([p, " ".join(map(str, word))] + [float(v) for v in pt] + [r, tol])
    write_csv(out / "orbits.csv", ["period", "word"] + cols + ["residual", "tolerance"], orows)
    summary = {"l": run.l, "nu": rep.nu, "cond_i": rep.cond_i,
               "counts": {p: c.count for p, c in run.counts.items()}}
    return summary, ["slices.csv", "cm_report.json", "orbits.csv"]


def cmd_report(a, out: Path):
    runs = []
    for root in a.runs:
        if not root.exists():
            raise UsageError(f"run directory {root} does not exist")
        runs += sorted(root.rglob("manifest.json"))
    rows = []
    for m in runs:
        d = json.loads(m.read_text())
        if d.get("command") == "report":
            continue
        summ = d.get("summary", {})
        flat = "; ".join(f"{k}={json.dumps(v, sort_keys=True)}" for k, v in sorted(summ.items())
                         if not isinstance(v, (dict, list)) or k in ("counts",))
        rows.append([str(m.parent), d.get("command"), d.get("exit_code"), flat])
    write_csv(out / "summary.csv", ["run", "command", "exit_code", "summary"], rows)
    for r in rows:
        print(f"{r[1]:<14} exit={r[2]}  {r[3]}")
    return {"runs": len(rows)}, ["summary.csv"]


# -- parser and driver ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="snls-horseshoe", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", type=Path, default=None,
                        help=f"run directory (default ${OUT_ENV}/<command> or runs/<command>)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--timings", action="store_true", help="record wall times in the manifest")
        return sp

    _add_physics(common(sub.add_parser("saddle", help="saddle equilibrium")))

    sp = common(sub.add_parser("spectrum", help="eigenvalue ladder, rates and conditions"))
    _add_physics(sp)
    sp.add_argument("--n-max", type=_positive(int), default=16)
    sp.add_argument("--s", type=_positive(int), default=4)
    sp.add_argument("--nr-n-max", type=_positive(int), default=6)
    sp.add_argument("--r-max", type=_positive(int), default=4)
    sp.add_argument("--l-bound", type=_positive(int), default=6)

    sp = common(sub.add_parser("nonres", help="small-divisor test on a ladder"))
    _add_physics(sp)
    sp.add_argument("--ladder-json", type=Path, default=None,
                    help="JSON {plus: [[re, im], ...], minus: [...]} instead of the physical ladder")
    sp.add_argument("--s", type=_positive(int), default=4)
    sp.add_argument("--n-max", type=_positive(int), default=6)
    sp.add_argument("--r-max", type=_positive(int), default=4)
    sp.add_argument("--l-bound", type=_positive(int), default=6)

    sp = common(sub.add_parser("evolve", help="integrate the PDE from a perturbed saddle"))
    _add_physics(sp)
    sp.add_argument("--tend", type=_positive(float), default=1.0)
    sp.add_argument("--dt", type=_positive(float), default=1e-3)
    sp.add_argument("--modes", type=_positive(int), default=64)
    sp.add_argument("--scheme", choices=SCHEMES, default="etdrk4")
    sp.add_argument("--perturbation", type=float, default=1e-3)
    sp.add_argument("--record-every", type=_positive(int), default=10)

    sp = common(sub.add_parser("local-map", help="closed-form passage map against event detection"))
    _add_model(sp)
    sp.add_argument("--n", type=_positive(int), default=100)

    sp = common(sub.add_parser("global-map", help="estimate or check the excursion matrix"))
    sp.add_argument("action", choices=("estimate", "check"))
    _add_model(sp)
    sp.add_argument("--t1", type=_positive(float), default=1.0)
    sp.add_argument("--l", type=int, default=0)

    sp = common(sub.add_parser("fixed-points", help="fixed-point family and Newton refinement"))
    _add_model(sp)
    sp.add_argument("--l-min", type=int, default=1)
    sp.add_argument("--l-max", type=int, default=15)

    sp = common(sub.add_parser("horseshoe", help="slices, Conley-Moser checks, periodic orbits"))
    sp.add_argument("action", choices=("run",))
    _add_model(sp)
    sp.add_argument("--l", type=int, default=None, help="slab label (default: smallest that works)")
    sp.add_argument("--depth", type=_positive(int), default=8)
    sp.add_argument("--period", type=_positive(int), default=3)
    sp.add_argument("--grid", type=_positive(int), default=64)

    sp = common(sub.add_parser("report", help="summary table over earlier run directories"))
    sp.add_argument("runs", type=Path, nargs="+")
    return p


PURE = {"saddle": cmd_saddle, "spectrum": cmd_spectrum, "nonres": cmd_nonres}
WITH_FILES = {"evolve": cmd_evolve, "local-map": cmd_local_map, "global-map": cmd_global_map,
              "fixed-points": cmd_fixed_points, "horseshoe": cmd_horseshoe, "report": cmd_report}


def _validate(a):
    if a.command == "fixed-points" and a.l_min > a.l_max:
        raise UsageError("--l-min exceeds --l-max")
    if a.command == "horseshoe" and a.l is not None and a.l < 0:
        raise UsageError("--l must be nonnegative")
    if a.command == "evolve" and (a.modes < 16 or a.modes & (a.modes - 1)):
        raise UsageError("--modes must be a power of two >= 16")
    if a.command in ("spectrum", "evolve", "saddle") or (a.command == "nonres"
                                                          and a.ladder_json is None):
        _params(a)


def _out_dir(a) -> Path:
    if a.out is not None:
        return a.out
    base = os.environ.get(OUT_ENV)
    return Path(base) / a.command if base else Path("runs") / a.command


def _config(a) -> dict:
    cfg = {}
    for k, v in sorted(vars(a).items()):
        if k in ("out", "timings"):
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) for x in v]
        cfg[k] = v
    return cfg


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        _validate(a)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(a)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    artifacts, code = [], EXIT_OK
    try:
        if a.command in PURE:
            summary = PURE[a.command](a)
            name = f"{a.command}.json"
            write_json(out / name, summary)
            artifacts = [name]
            print(json.dumps(json.loads((out / name).read_text()), indent=2))
        else:
            summary, artifacts = WITH_FILES[a.command](a, out)
            print(json.dumps(json.loads(json.dumps(summary, default=str)), sort_keys=True))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        code = EXIT_NUMERICAL
        diag = {"error": type(exc).__name__, "message": str(exc),
                "diagnostics": getattr(exc, "diagnostics", {})}
        write_json(out / "diagnostics.json", diag)
        artifacts = ["diagnostics.json"]
        summary = {"error": type(exc).__name__}
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
    manifest = {"schema": MANIFEST_SCHEMA, "command": a.command, "config": _config(a),
                "versions": {"snls_horseshoe": __version__, "numpy": np.__version__,
                             "scipy": scipy.__version__, "python": platform.python_version()},
                "artifacts": sorted(artifacts), "exit_code": code, "summary": summary}
    if a.timings:
        manifest["timings"] = {"wall_seconds": time.perf_counter() - t_start}
    write_json(out / "manifest.json", manifest)
    return code


def main(argv=None):
    sys.exit(run_command(argv))

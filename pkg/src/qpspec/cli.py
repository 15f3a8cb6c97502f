"""Command-line front end.

``qpspec <subcommand> [--config FILE] [options]`` writes one CSV or JSON
artifact (stdout unless ``--out`` is given).  The first line of every CSV
artifact is a ``# qpspec-output/<version> <subcommand>`` header; JSON
artifacts carry the same string under ``"schema"``.  Floats are printed with
17 significant digits, so identical inputs give byte-identical artifacts.
Timings go to stderr only.

Exit codes: 0 success, 1 domain error (e.g. energy below the reduction
threshold, sign-indefinite perturbation), 2 usage error.
"""

import argparse
import csv
import io
import itertools
import json
import math
import sys

import numpy as np

from . import __version__
from ._util import THREADS_ENV, default_threads
from .asymptotics import NoAccumulationError, counting_function, predict
from .averaging import classify_grid
from .config import DEFAULTS, ConfigError, RunConfig, defaults_toml, load_config
from .criticality import (CRITICAL, birkhoff_K, edge_accumulation_census, free_edge_record,
                          iterated_log_classify, kneser_classify)
from .kam import run_reduction
from .oscillation import eigenvalue_count
from .potential import PerturbationSpec
from .rotation import EdgeRecord, find_edges, refine_edge, rotation_scan

__all__ = ["main", "dispatch", "SCHEMA"]

SCHEMA = "qpspec-output/1"
SUBCOMMANDS = ("ids", "edges", "count", "kcrit", "classify", "asympt", "avg-check", "kam",
               "repro")


class DomainError(Exception):
    pass


# -- formatting ---------------------------------------------------------------

def fmt(v):
    """Deterministic text for one value."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.17g" % v
    if isinstance(v, (tuple, list)):
        return " ".join(fmt(x) for x in v)
    return "" if v is None else str(v)


def to_json(obj, indent=0):
    """JSON text with 17-digit floats; non-finite floats become null."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{_json_str(str(k))}: {to_json(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        obj = list(obj)
        if not obj:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple, np.ndarray)) for x in obj):
            return "[" + ", ".join(to_json(x) for x in obj) + "]"
        return "[\n" + ",\n".join(pad + to_json(x, indent + 1) for x in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return "null" if not math.isfinite(obj) else "%.17g" % float(obj)
    if isinstance(obj, complex):
        return to_json([obj.real, obj.imag])
    return _json_str(str(obj))


def _json_str(s):
    return json.dumps(s)


def csv_text(command, header, rows):
    buf = io.StringIO()
    buf.write(f"# {SCHEMA} {command}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def json_text(command, payload):
    return to_json({"schema": SCHEMA, "command": command, **payload}) + "\n"


# -- argument helpers ---------------------------------------------------------

def _floats(text):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from exc


def _labels(text):
    """``"1,1;2,1"`` -> [(1, 1), (2, 1)]."""
    try:
        return [tuple(int(k) for k in part.split(",")) for part in text.split(";") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad label list {text!r}") from exc


def _default_labels(dim, radius=6):
    """Nonzero labels with ``|m|_inf <= radius``, one of each pair +-m."""
    out = []
    for m in itertools.product(range(-radius, radius + 1), repeat=dim):
        if any(m) and tuple(-k for k in m) not in out:
            out.append(m)
    return out


def _pick(args, name, cfg, section, key=None):
    v = getattr(args, name)
    if v is not None:
        return v
    return cfg.section(section).get(key or name)


def _d(section, key):
    return DEFAULTS[section][key]


# -- subcommands --------------------------------------------------------------

def cmd_ids(args, cfg):
    pot = cfg.build_potential()
    energies = _pick(args, "energies", cfg, "ids")
    horizon = cfg.settings["horizons"]["rotation"] if args.horizon is None else args.horizon
    ests = rotation_scan(pot, [float(E) for E in energies], horizon, cfg.ode_tol, args.threads)
    rows = [(e.energy, e.rho, e.error_bar, e.ids, e.horizon) for e in ests]
    return csv_text("ids", ["E", "rho", "error_bar", "ids", "horizon"], rows)


def _edges(args, cfg, pot):
    sec = cfg.section("edges")
    E_range = args.E_range if args.E_range is not None else sec["E_range"]
    labels = args.labels if args.labels is not None else [tuple(m) for m in sec["labels"]]
    if not labels:
        labels = _default_labels(pot.freq.d)
    labels = [m for m in labels if any(m)]
    grid = int(args.grid if args.grid is not None else sec["grid"])
    refine = args.refine or bool(sec.get("refine", False))
    recs = find_edges(pot, E_range, labels, edge_tol=float(cfg.settings["tolerances"]["edge"]),
                      horizon=float(cfg.settings["horizons"]["edges"]), grid=grid,
                      tol=cfg.ode_tol, threads=args.threads)
    if refine:
        recs = [refine_edge(r, pot, horizon=float(cfg.settings["horizons"]["refine"]))
                for r in recs]
    return recs


def _explicit_edges(args, pot):
    if args.edge is None:
        return None
    side = args.side or "upper"
    label = tuple(args.label) if args.label else (0,) * pot.freq.d
    return [EdgeRecord(label, side, float(E), (float(E), float(E)), float("nan"))
            for E in args.edge]


def cmd_edges(args, cfg):
    pot = cfg.build_potential().background()
    recs = _edges(args, cfg, pot)
    if not args.all:
        recs = [r for r in recs if r.resolved]
    rows = [(r.label, r.side, r.energy, r.plateau, r.bracket_width, r.resolved) for r in recs]
    return csv_text("edges", ["m", "side", "E", "plateau", "bracket_width", "resolved"], rows)


def cmd_count(args, cfg):
    pot1 = cfg.build_potential()
    if pot1.perturbation is None:
        raise DomainError("count needs a perturbation in the config")
    sec = cfg.section("count")
    lam0 = args.lambda0 if args.lambda0 is not None else min(sec["lambdas"])
    lam1 = args.lambda1 if args.lambda1 is not None else max(sec["lambdas"])
    x_end = args.xend if args.xend is not None else cfg.settings["horizons"]["rotation"]
    bc = args.bc
    res = eigenvalue_count(pot1, lam0, lam1, x_end, right_bc=bc, tol=cfg.ode_tol)
    twice = eigenvalue_count(pot1, lam0, lam1, 2 * x_end, right_bc=bc, tol=cfg.ode_tol,
                             check_gap=False)
    rows = [(lam0, lam1, res.count, res.slack, res.counts[0], res.counts[1], res.index,
             res.x_end, twice.count, twice.count == res.count, bc)]
    return csv_text("count", ["lambda0", "lambda1", "count", "slack", "count_lambda0",
                              "count_lambda1", "index", "x_end", "count_2x_end", "stable", "bc"],
                    rows)


def _records(args, cfg, pot):
    edges = _explicit_edges(args, pot)
    if edges is None:
        edges = [r for r in _edges(args, cfg, pot) if r.resolved]
    windows = [float(w) for w in cfg.section("kcrit")["windows"]]
    out = []
    for e in edges:
        if pot.sup_bound == 0 and e.energy <= float(cfg.settings["tolerances"]["edge"]):
            rec = free_edge_record()
            rec.edge = e
        else:
            rec = birkhoff_K(e, pot, windows)
        out.append(rec)
    return out


def cmd_kcrit(args, cfg):
    pot = cfg.build_potential().background()
    recs = _records(args, cfg, pot)
    rows = [(r.edge.label, r.edge.side, r.edge.energy, r.K, r.mu_crit, r.spread) for r in recs]
    return csv_text("kcrit", ["m", "side", "E", "K", "mu_crit", "spread"], rows)


def cmd_classify(args, cfg):
    full = cfg.build_potential()
    pert = full.perturbation
    if pert is None:
        raise DomainError("classify needs a perturbation in the config")
    pot = full.background()
    recs = _records(args, cfg, pot)
    x_max = float(cfg.section("classify")["x_max"])
    rows = []
    census = [""] * len(recs)
    if pert.kind == "power_law":
        census = [pos for _, pos in edge_accumulation_census(recs, pert).verdicts]
    for r, acc in zip(recs, census):
        if pert.kind == "iterated_log":
            verdict = iterated_log_classify(r, pert)
        else:
            verdict = kneser_classify(r, pert, x_max)
        rows.append((r.edge.label, r.edge.side, r.edge.energy, r.K, verdict,
                     verdict == CRITICAL, acc))
    return csv_text("classify", ["m", "side", "E", "K", "verdict", "critical", "accumulates"],
                    rows)


def cmd_asympt(args, cfg):
    sec = cfg.section("asympt")
    base = cfg.build_potential().background()
    pert_cfg = cfg.build_potential().perturbation
    mu = args.mu if args.mu is not None else (pert_cfg.mu if pert_cfg is not None else None)
    gamma = args.gamma if args.gamma is not None else (
        pert_cfg.gamma if pert_cfg is not None else 2.0)
    if mu is None:
        raise DomainError("asympt needs --mu or a power-law perturbation in the config")
    E = float(args.edge if args.edge is not None else sec["edge"])
    side = args.side or sec["side"]
    pot1 = base.with_perturbation(PerturbationSpec.power(mu, gamma))
    if args.lambda_grid is not None:
        dists = args.lambda_grid
    else:
        dists = [float(v) for v in np.geomspace(sec["d_far"], sec["d_near"], 7)]
    sgn = -1.0 if side == "upper" else 1.0
    lams = [E + sgn * abs(d) for d in dists]
    K = sec.get("K")
    if K is None:
        if base.sup_bound == 0 and E == 0.0:
            K = 1.0
        else:
            rec = birkhoff_K(EdgeRecord((0,) * base.freq.d, side, E, (E, E), float("nan")), base,
                             [float(w) for w in cfg.section("kcrit")["windows"]])
            K = rec.K
    mu_crit = -1.0 / (4.0 * K)
    lam_ref = cfg.section("count").get("reference")
    counts = counting_function(pot1, E, lams, lam_ref, tol=cfg.ode_tol, threads=args.threads)
    try:
        pred = predict(E, mu, gamma, mu_crit)
        preds = [float(pred(lam)) for lam, _ in counts]
    except NoAccumulationError:
        preds = [0.0] * len(counts)
    rows = [(lam, n, p) for (lam, n), p in zip(counts, preds)]
    return csv_text("asympt", ["lambda", "N", "prediction"], rows)


def cmd_avg_check(args, cfg):
    values = args.values if args.values is not None else cfg.section("avg-check")["values"]
    grid = classify_grid([float(v) for v in values], threads=args.threads)
    rows = [(a, b, 4 * a * b - 1, v.verdict, v.rate, v.variation, v.range, v.horizon)
            for a, b, v in grid]
    return csv_text("avg-check", ["A", "B", "discriminant", "verdict", "rate", "variation",
                                  "range", "horizon"], rows)


def cmd_kam(args, cfg):
    sec = cfg.section("kam")
    pot = cfg.build_potential().background()
    E = float(args.E if args.E is not None else sec["E"])
    E0 = cfg.settings["threshold"].get("E0")
    if E0 is not None and E < float(E0):
        raise DomainError(f"E = {E!r} lies below the configured threshold E0 = {E0!r}")
    label = args.label if args.label is not None else sec.get("label")
    run = run_reduction(pot, E,
                        max_iters=int(_pick(args, "max_iters", cfg, "kam")),
                        sigma=float(_pick(args, "sigma", cfg, "kam")),
                        r1=float(_pick(args, "r1", cfg, "kam")),
                        eps1=float(cfg.settings["threshold"]["eps1"]),
                        stop=float(cfg.settings["tolerances"]["kam_stop"]),
                        label=None if label is None else tuple(label))
    iters = [{"j": r.j, "eps": r.eps, "N": r.N, "m": list(r.m), "A_norm": r.A_norm,
              "F_norm": r.F_norm, "F_size": r.F_size, "rho": r.rho, "divisor": r.divisor,
              "violations": list(r.violations)} for r in run.reports]
    n = run.norms
    norms = {"A_final": np.asarray(n.A_final).tolist(), "A_norm": n.A_norm,
             "A_nilpotency": n.A_nilpotency, "last_resonance": n.last_resonance,
             "A_times_N": n.A_times_N, "Y_sup": n.Y_sup, "log_label": n.log_label,
             "det_defect": n.det_defect, "label_sum": list(n.label_sum), "label_ok": n.label_ok,
             "rho_trace": list(n.rho_trace)}
    return json_text("kam", {"energy": E, "converged": run.converged, "tau": run.tau,
                             "initial_size": run.initial_size, "iterations": iters,
                             "norms": norms})


def cmd_repro(args, cfg):
    from . import repro
    names = list(repro.RUNS) if args.name == "all" else [args.name]
    seed = int(cfg.settings.get("seed", 0)) if args.seed is None else args.seed
    results = []
    for name in names:
        res = repro.run(name, threads=args.threads, seed=seed)
        print(res.line(), file=sys.stderr)
        results.append({"name": res.name, "passed": res.passed, "budget": res.budget,
                        "details": res.details})
    return json_text("repro", {"seed": seed, "results": results})


COMMANDS = {"ids": cmd_ids, "edges": cmd_edges, "count": cmd_count, "kcrit": cmd_kcrit,
            "classify": cmd_classify, "asympt": cmd_asympt, "avg-check": cmd_avg_check,
            "kam": cmd_kam, "repro": cmd_repro}


# -- parser -------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration (default: free operator, "
                        "built-in settings; see --write-defaults)")
    common.add_argument("--out", help="artifact path (default: stdout)")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or 1)")

    edge_opts = argparse.ArgumentParser(add_help=False)
    edge_opts.add_argument("--E-range", dest="E_range", type=float, nargs=2, default=None,
                           help=f"energy window (default: {_d('edges', 'E_range')})")
    edge_opts.add_argument("--labels", type=_labels, default=None,
                           help="gap labels as '1,1;2,1' (default: config, else all "
                                "|m|_inf <= 6)")
    edge_opts.add_argument("--grid", type=int, default=None,
                           help=f"coarse energy grid size (default: {_d('edges', 'grid')})")
    edge_opts.add_argument("--refine", action="store_true",
                           help="sharpen edges by a secant step on the edge defect")

    at_edge = argparse.ArgumentParser(add_help=False)
    at_edge.add_argument("--edge", type=_floats, default=None,
                         help="explicit edge energies instead of an edge search")
    at_edge.add_argument("--side", choices=("lower", "upper"), default=None,
                         help="side of the explicit edges (default: upper)")
    at_edge.add_argument("--label", type=lambda s: _labels(s)[0], default=None,
                         help="gap label of the explicit edges, e.g. '1,1'")

    p = argparse.ArgumentParser(
        prog="qpspec", description="Spectral diagnostics for perturbed quasiperiodic "
        "Schroedinger operators on the half line.",
        epilog="Exit codes: 0 success, 1 domain error, 2 usage error.")
    p.add_argument("--version", action="version", version=f"qpspec {__version__}")
    p.add_argument("--write-defaults", metavar="PATH",
                   help="write the default settings as TOML ('-' for stdout) and exit")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND")

    s = sub.add_parser("ids", parents=[common], help="rotation number and IDS on an energy list")
    s.add_argument("--energies", type=_floats, default=None,
                   help=f"energies (default: {_d('ids', 'energies')})")
    s.add_argument("--horizon", type=float, default=None,
                   help=f"integration length (default: {_d('horizons', 'rotation')})")

    s = sub.add_parser("edges", parents=[common, edge_opts], help="bracket gap edges (CSV)")
    s.add_argument("--all", action="store_true", help="include closed/unresolved gaps")

    s = sub.add_parser("count", parents=[common], help="relative eigenvalue count (CSV)")
    s.add_argument("--lambda0", type=float, default=None,
                   help=f"lower energy (default: min of {_d('count', 'lambdas')})")
    s.add_argument("--lambda1", type=float, default=None,
                   help=f"upper energy (default: max of {_d('count', 'lambdas')})")
    s.add_argument("--xend", type=float, default=None,
                   help=f"right end of the interval (default: {_d('horizons', 'rotation')})")
    s.add_argument("--bc", choices=("wkb", "dirichlet"), default="wkb",
                   help="right boundary condition (default: wkb)")

    sub.add_parser("kcrit", parents=[common, edge_opts, at_edge],
                   help=f"K and critical coupling per edge (CSV); windows default "
                        f"{_d('kcrit', 'windows')}")
    sub.add_parser("classify", parents=[common, edge_opts, at_edge],
                   help="oscillation verdict of the configured perturbation per edge (CSV)")

    s = sub.add_parser("asympt", parents=[common], help="counting function vs prediction (CSV)")
    s.add_argument("--edge", type=float, default=None,
                   help=f"edge energy (default: {_d('asympt', 'edge')})")
    s.add_argument("--side", choices=("lower", "upper"), default=None,
                   help=f"gap side (default: {_d('asympt', 'side')})")
    s.add_argument("--mu", type=float, default=None, help="coupling (default: config)")
    s.add_argument("--gamma", type=float, default=None, help="decay power (default: config or 2)")
    s.add_argument("--lambda-grid", dest="lambda_grid", type=_floats, default=None,
                   help=f"distances to the edge (default: 7 points from "
                        f"{_d('asympt', 'd_far')} to {_d('asympt', 'd_near')})")

    s = sub.add_parser("avg-check", parents=[common], help="phase-equation verdict grid (CSV)")
    s.add_argument("--values", type=_floats, default=None,
                   help=f"grid values for A and B (default: {_d('avg-check', 'values')})")

    s = sub.add_parser("kam", parents=[common], help="reducibility iteration (JSON)")
    s.add_argument("--E", type=float, default=None, help=f"energy (default: {_d('kam', 'E')})")
    s.add_argument("--sigma", type=float, default=None,
                   help=f"schedule exponent (default: {_d('kam', 'sigma')})")
    s.add_argument("--r1", type=float, default=None,
                   help=f"initial analyticity strip (default: {_d('kam', 'r1')})")
    s.add_argument("--max-iters", dest="max_iters", type=int, default=None,
                   help=f"iteration cap (default: {_d('kam', 'max_iters')})")
    s.add_argument("--label", type=lambda t: _labels(t)[0], default=None,
                   help="gap label to check the resonance sum against")

    from .repro import RUNS
    s = sub.add_parser("repro", parents=[common], help="run acceptance reproductions (JSON)")
    s.add_argument("name", choices=[*RUNS, "all"])
    s.add_argument("--seed", type=int, default=None,
                   help=f"seed for randomized instances (default: {DEFAULTS['seed']})")
    return p


def dispatch(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.write_defaults:
        text = defaults_toml()
        if args.write_defaults == "-":
            sys.stdout.write(text)
        else:
            with open(args.write_defaults, "w") as fh:
                fh.write(text)
        if args.command is None:
            return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("qpspec: error: a subcommand is required", file=sys.stderr)
        return 2
    if args.threads is None:
        args.threads = default_threads()
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        text = COMMANDS[args.command](args, cfg)
    except (DomainError, ConfigError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"qpspec {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"qpspec: {exc}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()

"""ncmap command line: operators, verify, sweep, dynamics, ode.

Exit status: 0 all checks pass, 1 checks ran and some failed, 2 the
configuration or a solver stage failed before checks could run.

Environment: NCMAP_OUT (output root), NCMAP_VERBOSITY (logging level name
or number), NCMAP_THREADS (sweep worker processes).
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import algebra, dynamics, flow, fock, position, similarity
from . import report as rep
from .errors import NcmapError
from .params import DeformParams

log = logging.getLogger("ncmap")

EXIT_OK, EXIT_FAILED, EXIT_ERROR = 0, 1, 2

DEFAULTS = {
    "dim": 32, "q": 1.0, "u": 0.0, "interior": None, "format": "json",
    "path": "constant:0.7", "t_end": 1.0, "h": 1e-3,
    "branch": "r0", "x_end": 4.0, "scan": False,
    "q_grid": None, "u_grid": None, "dim_grid": None,
    "dump_matrices": False, "thresholds": {},
}


@contextlib.contextmanager
def stage(name, timings=None):
    t0 = time.perf_counter()
    try:
        yield
    except NcmapError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


# ---- fock_core and unitary_flow -------------------------------------------

def run_operators(cfg, timings=None, outdir=None):
    D, u = cfg["dim"], cfg["u"]
    th, nonstd = rep.thresholds_with(cfg["thresholds"])
    with stage("operators", timings):
        a, ad, N = fock.annihilation(D), fock.creation(D), fock.number(D)
        Q, P = fock.position(D), fock.momentum(D)
        T = flow.displacement(u, D).matrix.relabel("T")
        rows = [
            rep.row("canonical_commutator",
                    fock.block_residual(fock.commutator(a, ad), np.eye(D), D - 1), th, D - 1),
            rep.row("number_factorization", fock.block_residual(ad @ a, N), th, D),
        ]
    with stage("flow", timings):
        K = D // 2
        for name, val in flow.stone_residuals(D, u, K).items():
            block = K if name in ("position_shift", "position_shift_inverse",
                                  "number_conjugation") else D
            rows.append(rep.row(name, val, th, block))
    if outdir is not None:
        mats = {"a": a, "a_dag": ad, "N": N, "Q": Q, "P": P, "T": T}
        for name, M in mats.items():
            fock.dump_matrix(M, Path(outdir) / "matrices" / f"{name}.json")
    config = {"dim": D, "u": u}
    return rep.make_report("operators", config, rows, non_standard=nonstd)


# ---- similarity and deformed pair ------------------------------------------

def _map_rows(q, D, th):
    rows = []
    K = D - 1
    b, bd = algebra.nonlinear_map("q", D, q)
    bb, bdb = (b @ bd).entries, (bd @ b).entries
    scale = max(1.0, float(np.max(np.abs(np.diag(bdb)[:K]))) * max(q, 1.0))
    rows.append(rep.row("q_commutator",
                        fock.block_residual(bb - q * bdb, np.eye(D), K) / scale, th, K, "rel"))
    rows.append(rep.row("q_commutator_rearranged",
                        fock.block_residual(bb - bdb, np.eye(D) + (q - 1) * bdb, K) / scale,
                        th, K, "rel"))
    c, cd = algebra.nonlinear_map("poly", D, q)
    rows.append(rep.row("nonlinear_map",
                        fock.block_residual(fock.commutator(c, cd),
                                            np.eye(D) + (q - 1) * fock.number(D).entries, K),
                        th, K))
    return rows


def run_verify(cfg, timings=None, outdir=None):
    th, nonstd = rep.thresholds_with(cfg["thresholds"])
    params = DeformParams(cfg["q"], cfg["u"], cfg["dim"], cfg["interior"])
    D, K = params.D, params.interior
    with stage("solve", timings):
        sol = similarity.solve_S(params)
    with stage("flow", timings):
        fl = flow.displacement(params.u, D)
    with stage("pair", timings):
        pair = algebra.build_pair(sol, fl, params)
        chain = algebra.chain_residuals(pair, K)
    rows = [
        rep.row("sylvester", float(np.max(sol.sylvester_residual)), th, D - 1, "rel_col"),
        rep.row("recurrence", similarity.recurrence_residual(sol.S, params.q, params.u),
                th, D, "rel"),
        rep.row("inverse_certificate", sol.inverse_residual, th, D),
    ]
    rows += [rep.row(k, v, th, K) for k, v in chain.items()]
    with stage("maps", timings):
        rows += _map_rows(params.q, D, th)
    diag = {
        "trivial_branch": sol.trivial,
        "note": "S = I on the trivial branch" if sol.trivial else "",
        "working_bits": sol.bits,
        "condition_estimate": sol.condition_estimate,
        "condition_estimate_block": sol.condition_estimate_block,
        "resonance_flags": [list(p) for p in sol.resonance_flags],
        "adjoint_defect": pair.adjoint_defect,
        "nonunitarity": similarity.nonunitarity_certificate(sol),
    }
    if outdir is not None and cfg.get("dump_matrices"):
        mdir = Path(outdir) / "matrices"
        for M in (sol.S, similarity.invert_S(sol).relabel("S_inv"), fl.matrix.relabel("T"),
                  pair.A, pair.B):
            fock.dump_matrix(M, mdir / f"{M.label.replace('⁻¹', '_inv')}.json")
    config = {"q": params.q, "u": params.u, "dim": D, "interior": K}
    return rep.make_report("verify", config, rows, diag, nonstd)


SWEEP_COLUMNS = [
    "q", "u", "dim", "interior", "status", "error", "condition_estimate", "inverse_residual",
    "sylvester", "recurrence", "deformed_commutator", "commutator_split",
    "similarity_conjugation", "overflow_index", "passed",
]


def sweep_point(q, u, D, interior, thresholds):
    """One grid point; failures are recorded in the row, never raised."""
    row = {k: None for k in SWEEP_COLUMNS}
    row.update(q=q, u=u, dim=D, interior=interior, passed=False)
    try:
        r = run_verify({"q": q, "u": u, "dim": D, "interior": interior,
                        "thresholds": thresholds})
    except (NcmapError, ValueError) as exc:
        status = {"NoSolutionError": "no_solution",
                  "SimilarityOverflowError": "overflow"}.get(type(exc).__name__, "error")
        row.update(status=status, error=str(exc))
        if status == "overflow" and hasattr(exc, "m"):
            row["overflow_index"] = f"{exc.m},{exc.n}"
        return row
    row["status"] = "ok"
    row["interior"] = r["config"]["interior"]
    row["condition_estimate"] = r["diagnostics"]["condition_estimate"]
    for x in r["rows"]:
        if x["identity"] in row:
            row[x["identity"]] = x["residual"]
    row["inverse_residual"] = next(x["residual"] for x in r["rows"]
                                   if x["identity"] == "inverse_certificate")
    row["passed"] = r["all_passed"]
    return row


def _grid(values, fallback):
    if values is None:
        return [fallback]
    if isinstance(values, str):
        values = [v for v in values.split(",") if v.strip()]
    return list(values)


def run_sweep(cfg, timings=None, outdir=None, workers=1):
    th, nonstd = rep.thresholds_with(cfg["thresholds"])
    qs = [float(v) for v in _grid(cfg["q_grid"], cfg["q"])]
    us = [float(v) for v in _grid(cfg["u_grid"], cfg["u"])]
    ds = [int(v) for v in _grid(cfg["dim_grid"], cfg["dim"])]
    points = [(q, u, D) for q in qs for u in us for D in ds]
    with stage("sweep", timings):
        args = [(q, u, D, cfg["interior"], cfg["thresholds"]) for q, u, D in points]
        if workers > 1 and len(args) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                rows = list(ex.map(sweep_point, *zip(*args)))
        else:
            rows = [sweep_point(*a) for a in args]
    config = {"q_grid": qs, "u_grid": us, "dim_grid": ds, "interior": cfg["interior"]}
    doc = rep.make_report("sweep", config, [], {"points": len(rows)}, nonstd)
    doc["rows"] = rep._clean(rows)
    doc["all_passed"] = all(r["passed"] for r in rows)
    return doc


# ---- dynamics ---------------------------------------------------------------

def run_dynamics(cfg, timings=None, outdir=None):
    th, nonstd = rep.thresholds_with(cfg["thresholds"])
    q, D, h, t_end = cfg["q"], cfg["dim"], cfg["h"], cfg["t_end"]
    K = cfg["interior"] or max(1, D // 4)
    path = dynamics.ParameterPath.parse(cfg["path"], q, h, t_end)
    with stage("trajectory", timings):
        frames = dynamics.build_trajectory(path, D, K)
    with stage("residuals", timings):
        drift = dynamics.commutator_drift(frames, K)
        gA = dynamics.green_reconstruct(frames, "A", K)
        gB = dynamics.green_reconstruct(frames, "B", K)
    with stage("gauge", timings):
        # the gauge comparison covers the leading 50 steps to bound the cost
        gauge_dev = dynamics.gauge_drift_deviation(cfg["path"], q, h, D, K)
    with stage("convergence", timings):
        panel = dynamics.refinement_study(cfg["path"], q, h, D, K)
    rows = [
        rep.row("eom_A", max(f.residual_A for f in frames), th, K),
        rep.row("eom_B", max(f.residual_B for f in frames), th, K),
    ]
    for which in ("A", "B"):
        for r in panel[f"eom_{which}_ratios"]:
            rows.append(rep.row(f"eom_{which}_order", abs(r - 4.0), th, K, "ratio-4", "<="))
    rows += [rep.row("green_A", gA.max_deviation, th, K),
             rep.row("green_B", gB.max_deviation, th, K)]
    for which in ("A", "B"):
        for r in panel[f"green_{which}_ratios"]:
            rows.append(rep.row(f"green_{which}_order", r, th, K, "ratio", ">="))
    rows.append(rep.row("drift_gauge", gauge_dev, th, K))
    records = [{"t": f.t, "u": f.u, "residual_A": f.residual_A, "residual_B": f.residual_B,
                "drift": float(d), "green_A": float(a), "green_B": float(b),
                "condition": f.condition}
               for f, d, a, b in zip(frames, drift, gA.deviation, gB.deviation)]
    if outdir is not None and cfg.get("dump_matrices"):
        fdir = Path(outdir) / "frames"
        for i, f in enumerate(frames):
            for name in ("a_t", "S_t", "T_t", "A_t", "B_t", "dS_dt", "dT_dt"):
                fock.dump_matrix(getattr(f, name), fdir / f"{i:05d}_{name}.json")
    config = {"q": q, "dim": D, "interior": K, "path": path.spec(), "h": h, "t_end": t_end}
    diag = {"convergence": panel, "drift_initial": float(drift[0]),
            "drift_max": float(drift.max()), "frames": len(frames)}
    return rep.make_report("dynamics", config, rows, diag, nonstd, records)


# ---- position representation ------------------------------------------------

def run_ode(cfg, timings=None, outdir=None):
    th, nonstd = rep.thresholds_with(cfg["thresholds"])
    problem = position.OdeProblem(cfg["q"], cfg["u"])
    x_end = cfg["x_end"]
    with stage("indicial", timings):
        p0 = problem.pole_residue
        roots = position.indicial_exponents(problem.q)
        indicial = max(abs(r * (r - 1) + p0 * r) for r in roots)
        pole = position.pole_order(lambda t: position.infinity_coefficients(t, problem)[1])
    with stage("integrate", timings):
        sol = position.integrate_psi(problem, cfg["branch"], x_end)
        x_cmp = min(3.0, abs(x_end)) * (1 if x_end > 0 else -1)
        alt = position.integrate_psi(problem, cfg["branch"], x_cmp, method="Radau")
        ref = position.integrate_psi(problem, cfg["branch"], x_cmp)
        dual = abs(alt.values[-1] - ref.values[-1]) / max(abs(ref.values[-1]), 1e-300)
    rows = [
        rep.row("indicial_roots", indicial, th, 0, "abs"),
        rep.row("dual_integrator", dual, th, 0, "rel"),
        rep.row("infinity_pole_order", abs(pole - 6), th, 0, "abs"),
        rep.row("envelope_slope", abs(sol.envelope_slope - 1.0), th, 0, "abs"),
    ]
    diag = {
        "indicial_exponents": list(roots), "pole_order": pole,
        "growth_class": sol.growth_class, "envelope_slope": sol.envelope_slope,
        "l2_trend": position.classify_l2(sol.l2_partial),
        "psi_end": float(sol.values[-1]),
    }
    if cfg.get("scan"):
        with stage("scan", timings):
            diag["scan"] = position.square_integrability_scan(problem, x_end=abs(x_end))
    if outdir is not None:
        Path(outdir).mkdir(parents=True, exist_ok=True)
        (Path(outdir) / "psi.txt").write_text(sol.to_table(), encoding="utf-8")
    config = {"q": problem.q, "u": problem.u, "branch": cfg["branch"], "x_end": x_end}
    return rep.make_report("ode", config, rows, diag, nonstd)


COMMANDS = {
    "operators": run_operators, "verify": run_verify, "sweep": run_sweep,
    "dynamics": run_dynamics, "ode": run_ode,
}


# ---- argument handling ------------------------------------------------------

def _threshold(text):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    return name.strip(), float(value)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values (flags win)")
    common.add_argument("--out", help="output directory (relative to $NCMAP_OUT if set)")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--threshold", action="append", type=_threshold, default=[],
                        metavar="NAME=VALUE", help="override one acceptance threshold")
    common.add_argument("--dim", type=int)
    common.add_argument("--q", type=float)
    common.add_argument("--u", type=float)
    common.add_argument("--interior", type=int, help="leading block size K")

    ap = argparse.ArgumentParser(prog="ncmap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("operators", parents=[common], help="ladder, number, quadratures, T(u)")
    p = sub.add_parser("verify", parents=[common], help="solve S, build (A, B), check identities")
    p.add_argument("--dump-matrices", action="store_true", default=None)
    p = sub.add_parser("sweep", parents=[common], help="verify over a (q, u, D) grid")
    p.add_argument("--q-grid", help="comma-separated q values")
    p.add_argument("--u-grid", help="comma-separated u values")
    p.add_argument("--dim-grid", help="comma-separated dimensions")
    p = sub.add_parser("dynamics", parents=[common], help="trajectory under u(t)")
    p.add_argument("--path", help="constant:U0 | ramp:U0,RATE | sine:U0,AMP,OMEGA")
    p.add_argument("--t-end", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--dump-matrices", action="store_true", default=None)
    p = sub.add_parser("ode", parents=[common], help="position-representation ODE")
    p.add_argument("--branch", choices=position.BRANCHES)
    p.add_argument("--x-end", type=float)
    p.add_argument("--scan", action="store_true", default=None,
                   help="also scan branch mixtures for square integrability")
    return ap


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in cfg and value is not None:
            cfg[key] = value
    cfg["thresholds"] = dict(cfg.get("thresholds") or {})
    cfg["thresholds"].update(dict(args.threshold))
    rep.thresholds_with(cfg["thresholds"])
    return cfg


def _outdir(args):
    root = Path(os.environ.get("NCMAP_OUT", "."))
    return root / (args.out or f"ncmap_{args.command}")


def _setup_logging():
    level = os.environ.get("NCMAP_VERBOSITY", "WARNING")
    level = int(level) if level.isdigit() else level.upper()
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    args = ap.parse_args(argv)
    timings = {}
    try:
        cfg = resolve_config(args)
        outdir = _outdir(args)
        kw = {}
        if args.command == "sweep":
            kw["workers"] = int(os.environ.get("NCMAP_THREADS", "1"))
        log.info("running %s with %s", args.command, cfg)
        doc = COMMANDS[args.command](cfg, timings, outdir, **kw)
        path = rep.write_report(doc, outdir, cfg["format"])
        rep.write_timings(timings, outdir)
    except NcmapError as exc:
        tag = getattr(exc, "stage", "config")
        print(f"ncmap: error [{tag}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, KeyError, OSError) as exc:
        print(f"ncmap: error [config] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.command != "sweep":
        for line in rep.summary_lines(doc):
            print(line)
    else:
        for r in doc["rows"]:
            print(f"{'PASS' if r['passed'] else 'FAIL'} q={r['q']} u={r['u']} D={r['dim']} "
                  f"status={r['status']}")
    print(f"report: {path}")
    return EXIT_OK if doc["all_passed"] else EXIT_FAILED


if __name__ == "__main__":
    raise SystemExit(main())

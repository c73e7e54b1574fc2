"""Command-line front end.

Exit codes: 0 success, 1 a ``check`` diagnostic failed, 2 configuration
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .attack import classify
from .clustering import Dendrogram, cluster_report, compute_phi
from .config import parse_overrides
from .errors import ConfigError, NumericalError
from .grid import assemble_state_space
from .lti import lyapunov_residual, observability_rank, semistable_gramian, stable_subspace
from .observer import design_gain, error_system_poles
from .pipeline import choose_clusters, jsonable, load_inputs, run_pipeline, sweep_k
from .sim import plant_from_grid, write_json

OUTPUT_ENV = "RESILIENT_SE_OUTPUT_DIR"
DEFAULT_SCENARIO = "loadstep.cfg"
DEFAULT_KS = "5,10,21,40,m"


def _output_dir(args):
    return Path(args.output_dir or os.environ.get(OUTPUT_ENV) or "out")


def _parse_ks(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok == "m":
            out.append(None)
        elif tok:
            try:
                out.append(int(tok))
            except ValueError:
                raise ConfigError(f"--ks entry {tok!r} is neither an integer nor 'm'") from None
    return out


def _table(rows, columns):
    widths = [max(len(c), *(len(_cell(r[c])) for r in rows)) for c in columns]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(_cell(r[c]).ljust(w) for c, w in zip(columns, widths)) for r in rows]
    return "\n".join(lines)


def _cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _write_rows(rows, columns, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def cmd_simulate(args):
    out = _output_dir(args)
    pr = run_pipeline(args.grid, args.scenario, args.set, out)
    m = pr.result.metrics
    keys = [k for k in ("classification", "estimator", "K", "theta", "approx_error", "state_rmse_relative",
                        "stability_margin", "residual_final_norm") if k in m]
    for k in keys:
        print(f"{k}: {_cell(m[k])}")
    print(f"wrote {len(pr.artifacts)} files to {out}")
    return 0


def cmd_cluster(args):
    out = _output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    g, sc = load_inputs(args.grid, args.scenario, args.set)
    model = assemble_state_space(g)
    plant = plant_from_grid(model, sc.sensors)
    s = plant.sys
    attacked = ()
    if sc.attack is not None:
        attacked = sc.attack.resolve(plant.output_labels, plant.bus_kinds).attacked
    trusted = tuple(i for i in range(s.m) if i not in set(attacked))
    dec = stable_subspace(s)
    phi = compute_phi(s, dec)
    dg = Dendrogram(phi)
    cs = choose_clusters(phi, sc.estimator, trusted, dg)
    report = cluster_report(cs, phi, list(plant.output_labels), s.C, dec)
    write_json(jsonable(report), out / "clusters.json")
    rows = sweep_k(g, sc, _parse_ks(args.ks))
    cols = ["K", "theta", "approx_error"]
    _write_rows(rows, cols, out / "cluster_sweep.csv")
    write_json(jsonable(rows), out / "cluster_sweep.json")
    print(f"clusters: K={cs.K} theta={cs.theta:.6g} covered={cs.covered}")
    print(_table(rows, cols))
    return 0


def _sweep_one(job):
    grid, scenario, overrides, K = job
    ov = list(overrides or []) + ["mode=resilient", f"target_K={K}"]
    pr = run_pipeline(grid, scenario, ov, None)
    m = pr.result.metrics
    return {"K_requested": K, "K": m["K"], "theta": m["theta"], "approx_error": m["approx_error"],
            "state_rmse_relative": m["state_rmse_relative"]}


def cmd_sweep(args):
    out = _output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    g, sc = load_inputs(args.grid, args.scenario, args.set)
    m = len(sc.sensors) if sc.sensors is not None else 2 * len(g.buses)
    Ks = [m if K is None else K for K in _parse_ks(args.ks)]
    jobs = [(args.grid, args.scenario, args.set, K) for K in Ks]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    rows.sort(key=lambda r: r["K_requested"])
    cols = ["K_requested", "K", "theta", "approx_error", "state_rmse_relative"]
    _write_rows(rows, cols, out / "sweep.csv")
    write_json(jsonable(rows), out / "sweep.json")
    print(_table(rows, cols))
    return 0


def run_checks(grid, scenario, overrides=None):
    """Diagnostic suite; returns a list of ``(name, passed, detail)``."""
    g, sc = load_inputs(grid, scenario, overrides)
    model = assemble_state_space(g)
    plant = plant_from_grid(model, sc.sensors)
    s = plant.sys
    A, C = s.A, s.C
    rows = []
    nA = np.linalg.norm(A, 2)

    dec = stable_subspace(s)
    lam = np.linalg.eigvals(A)
    nz = int(np.sum(np.abs(lam) <= 1e-8 * nA))
    rows.append(("single zero eigenvalue", nz == 1 and dec.z == 1, f"zero eigenvalues: {nz}"))
    rs = np.abs(model.ybus.sum(axis=1)).max()
    rows.append(("Y_bus row sums", rs <= 1e-12, f"max |row sum| = {rs:.3g}"))

    for side in ("observability", "controllability"):
        gm = semistable_gramian(s, side, dec)
        Vt, CU = dec.V_bar.T, C @ dec.U_bar
        if side == "observability":
            res = lyapunov_residual(dec.A_bar.T, gm.W_bar, CU.T @ CU)
        else:
            res = lyapunov_residual(dec.A_bar, gm.W_bar, Vt @ Vt.T)
        rows.append((f"{side} Gramian residual", res <= 1e-10, f"relative residual {res:.3g}"))

    phi = compute_phi(s, dec)
    dg = Dendrogram(phi)
    attacked = ()
    if sc.attack is not None:
        attacked = sc.attack.resolve(plant.output_labels, plant.bus_kinds).attacked
    trusted = tuple(i for i in range(s.m) if i not in set(attacked))
    cs = choose_clusters(phi, sc.estimator, trusted or tuple(range(s.m)), dg) if trusted else None
    if cs is not None:
        u = np.abs(cs.Pi @ cs.Pi.T - np.eye(cs.K)).max() if cs.K else 0.0
        rows.append(("Pi unitarity", u <= 1e-10, f"max |Pi Pi^T - I| = {u:.3g} (K={cs.K})"))
        ep = error_system_poles(s, cs.Pi, dec)
        ok = ep.max_real_part < 0 if ep.zero_mode_residue <= 1e-8 * np.linalg.norm(C, 2) else True
        rows.append(("error-system stability", ok,
                     f"zero-mode residue {ep.zero_mode_residue:.3g}, max Re pole {ep.max_real_part:.3g}"))

    full = observability_rank(A, C, tol=sc.estimator.tol)
    rows.append(("observable with all sensors", full.is_observable, f"PBH rank {full.rank}/{s.n}"))
    cl = classify(s, C, attacked, tol=sc.estimator.tol)
    rows.append(("attack classification", True, f"{cl.status} (trusted {len(cl.trusted)}/{s.m}, rank {cl.rank})"))
    try:
        d = design_gain(s, C, sc.estimator.margin, tol=sc.estimator.tol)
        rows.append(("observer margin", d.stability_margin >= sc.estimator.margin - 1e-9,
                     f"achieved {d.stability_margin:.4g}, requested {sc.estimator.margin:.4g}"))
    except NumericalError as exc:
        rows.append(("observer margin", False, str(exc)))
    return rows


def cmd_check(args):
    rows = run_checks(args.grid, args.scenario, args.set)
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name.ljust(width)}  {detail}")
    return 0 if all(ok for _, ok, _ in rows) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="resilient-se", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--grid", default="rts24", help="grid file, or the name of a shipped grid (default: rts24)")
        sp.add_argument("--scenario", default=DEFAULT_SCENARIO, help="scenario file (default: shipped loadstep.cfg)")
        sp.add_argument("--output-dir", default=None, help=f"output directory (overrides ${OUTPUT_ENV}; default ./out)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scenario value (repeatable)")
        sp.add_argument("--seed", type=int, default=None, help="reserved; the pipeline is deterministic")

    for name, fn, help_ in (("simulate", cmd_simulate, "run the full estimation pipeline"),
                            ("cluster", cmd_cluster, "cluster report and approximation-error table"),
                            ("check", cmd_check, "invariant diagnostics"),
                            ("sweep", cmd_sweep, "resilient runs over a list of cluster counts")):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        sp.set_defaults(func=fn)
        if name in ("cluster", "sweep"):
            sp.add_argument("--ks", default=DEFAULT_KS, help="comma-separated cluster counts; 'm' means all")
        if name == "sweep":
            sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.set:
            parse_overrides(args.set)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

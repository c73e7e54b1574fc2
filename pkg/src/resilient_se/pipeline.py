"""End-to-end composition: files -> model -> clusters -> observer -> simulation.

Every stage writes its artifact when an output directory is given, and
errors are re-raised with the stage name prefixed.
"""
from __future__ import annotations

import dataclasses
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import Classification, classify
from .clustering import (Dendrogram, approximation_error, augment_measurement_matrix, cluster_report, clusters_for_k,
                         compute_phi, min_theta_for_coverage)
from .config import Scenario, apply_overrides, parse_overrides, parse_scenario_file, serialize_scenario
from .errors import ConfigInvalid, ResilientSEError
from .grid import GridSpec, assemble_state_space, parse_grid_file
from .lti import observability_rank, stable_subspace
from .observer import error_system_poles
from .sim import build_estimator, plant_from_grid, simulate, write_csv, write_json

STAGES = ("parse", "assemble", "classify", "cluster", "augment", "design", "simulate", "metrics")


@contextmanager
def stage(name):
    try:
        yield
    except ResilientSEError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
            exc.args = (f"[{name}] {exc}",)
        raise


def jsonable(obj):
    """Plain-Python copy of ``obj`` with NaN/inf mapped to ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [jsonable(obj.real), jsonable(obj.imag)]
    return obj


def _eig_list(lam):
    lam = np.asarray(lam)
    order = np.lexsort((lam.imag, -lam.real))
    return [[float(lam[i].real), float(lam[i].imag)] for i in order]


@dataclass
class PipelineResult:
    scenario: Scenario
    grid: GridSpec
    plant: object
    attack: object = None
    classification: Classification = None
    mode: str = "none"
    cluster_set: object = None
    report: dict = None
    C_bar: np.ndarray = None
    augmented_observable: bool = None
    error_poles: object = None
    estimator: object = None
    result: object = None
    artifacts: dict = field(default_factory=dict)


def load_inputs(grid, scenario, overrides=None):
    """Resolve file paths (or pass objects through) and apply overrides."""
    with stage("parse"):
        g = grid if isinstance(grid, GridSpec) else parse_grid_file(grid)
        sc = scenario if isinstance(scenario, Scenario) else parse_scenario_file(scenario)
        if overrides:
            ov = overrides if isinstance(overrides, dict) else parse_overrides(overrides)
            sc = apply_overrides(sc, ov)
    return g, sc


def choose_clusters(phi, est_cfg, trusted, dendrogram=None):
    dg = dendrogram or Dendrogram(phi)
    if est_cfg.target_K is not None:
        return clusters_for_k(phi, est_cfg.target_K, trusted, dg)
    if est_cfg.theta is not None:
        return dg.cluster_set(dg.merges_at(est_cfg.theta), trusted, theta=est_cfg.theta)
    theta = min_theta_for_coverage(phi, trusted, dg)
    return dg.cluster_set(dg.merges_at(theta), trusted, theta=theta)


def run_pipeline(grid, scenario, overrides=None, output_dir=None, write_trajectories=True):
    g, sc = load_inputs(grid, scenario, overrides)
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        with stage("parse"):
            try:
                out.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ConfigInvalid(f"cannot create output directory {out}: {exc.strerror}") from None
    pr = PipelineResult(sc, g, None)

    def emit(name, payload):
        if out is None:
            return
        path = out / name
        if isinstance(payload, str):
            path.write_text(payload)
        else:
            write_json(jsonable(payload), path)
        pr.artifacts[name] = str(path)

    emit("scenario.cfg", serialize_scenario(sc))

    with stage("assemble"):
        model = assemble_state_space(g)
        plant = plant_from_grid(model, sc.sensors)
        pr.plant = plant
        sys = plant.sys
        emit("model.json", {
            "name": g.name, "n": sys.n, "m": sys.m,
            "state_labels": list(plant.state_labels), "output_labels": list(plant.output_labels),
            "eigenvalues": _eig_list(np.linalg.eigvals(sys.A)),
            "A": sys.A, "C": sys.C,
        })

    est_cfg = sc.estimator
    with stage("classify"):
        attacked = ()
        if sc.attack is not None:
            pr.attack = sc.attack.resolve(plant.output_labels, plant.bus_kinds)
            attacked = pr.attack.attacked
        pr.classification = classify(sys, sys.C, attacked, tol=est_cfg.tol)
        cl = pr.classification
        mode = est_cfg.mode
        if mode == "auto":
            mode = "resilient" if cl.requires_augmentation else "standard"
        pr.mode = mode
        emit("classification.json", {
            "status": cl.status, "rank": cl.rank, "n": sys.n, "tol": est_cfg.tol,
            "attacked": [plant.output_labels[i] for i in cl.attacked],
            "trusted": [plant.output_labels[i] for i in cl.trusted],
            "unobservable_eigenvalues": _eig_list(cl.unobservable_eigenvalues),
            "estimator": mode,
        })

    dec = None
    if mode == "resilient":
        with stage("cluster"):
            dec = stable_subspace(sys)
            phi = compute_phi(sys, dec)
            pr.cluster_set = choose_clusters(phi, est_cfg, cl.trusted)
            pr.report = cluster_report(pr.cluster_set, phi, list(plant.output_labels), sys.C, dec)
            emit("clusters.json", pr.report)
        with stage("augment"):
            pr.C_bar = augment_measurement_matrix(sys.C, pr.cluster_set.Pi, cl.attacked)
            obs = observability_rank(sys.A, pr.C_bar, tol=est_cfg.tol)
            pr.augmented_observable = obs.is_observable
            pr.error_poles = error_system_poles(sys, pr.cluster_set.Pi, dec)
            ep = pr.error_poles
            emit("augment.json", {
                "rank": obs.rank, "observable": obs.is_observable, "C_bar": pr.C_bar,
                "error_system": {"max_real_part": ep.max_real_part, "zero_mode_residue": ep.zero_mode_residue,
                                 "zero_mode_cancelled": ep.zero_mode_cancelled},
            })

    if mode != "none":
        with stage("design"):
            pr.estimator = build_estimator(
                sys, mode, cl.attacked if cl.attacked else (), pr.cluster_set, est_cfg.margin, est_cfg.tol,
                est_cfg.xhat0, est_cfg.allow_unobservable_zero_mode, est_cfg.disturbance_feedforward)
            d = pr.estimator.design
            emit("design.json", {
                "kind": mode, "requested_margin": d.requested_margin, "stability_margin": d.stability_margin,
                "shift": d.shift, "zero_mode_assigned": d.zero_mode_assigned, "poles": _eig_list(d.poles),
                "L": d.L,
            })

    with stage("simulate"):
        pr.result = simulate(plant, sc, pr.estimator, pr.attack)
        if out is not None and write_trajectories:
            write_csv(pr.result, out / "trajectories.csv")
            pr.artifacts["trajectories.csv"] = str(out / "trajectories.csv")

    with stage("metrics"):
        m = dict(pr.result.metrics)
        m["classification"] = cl.status
        m["estimator"] = mode
        if mode == "resilient":
            m["K"] = pr.cluster_set.K
            m["theta"] = pr.cluster_set.theta
            m["augmented_observable"] = pr.augmented_observable
        else:
            m.pop("approx_error", None)
        pr.result.metrics = m
        emit("metrics.json", m)
    return pr


def sweep_k(grid, scenario, Ks, overrides=None, trusted=None):
    """Approximation error of the no-attack run for each cluster count in ``Ks``.

    ``None`` in ``Ks`` stands for ``m`` (singleton clusters).  The plant is
    simulated once; every cut of the hierarchy is scored from its output Gram.
    """
    g, sc = load_inputs(grid, scenario, overrides)
    with stage("assemble"):
        model = assemble_state_space(g)
        plant = plant_from_grid(model, sc.sensors)
    with stage("cluster"):
        dec = stable_subspace(plant.sys)
        phi = compute_phi(plant.sys, dec)
        dg = Dendrogram(phi)
    with stage("simulate"):
        base = dataclasses.replace(sc, attack=None, record_every=max(sc.n_steps, 1))
        res = simulate(plant, base)
    rows = []
    with stage("metrics"):
        for K in Ks:
            K = plant.sys.m if K is None else int(K)
            cs = clusters_for_k(phi, K, trusted or (), dg)
            rows.append({"K_requested": K, "K": cs.K, "theta": cs.theta,
                         "approx_error": approximation_error(res, cs).aggregate})
    return rows

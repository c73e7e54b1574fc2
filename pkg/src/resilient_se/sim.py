"""Fixed-step simulation of plant, load events, attack and estimator.

Plant and observer are integrated as one linear system ``z = [x; xhat]``
with classic RK4 at step ``dt``.  Load disturbances are piecewise constant
with switching snapped to the grid; attack signals are sampled at the RK4
stage times.  Metrics that integrate over time are accumulated at every
step, while trajectories are recorded every ``record_every`` steps.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import approximation_error, surrogate_matrix
from .config import x_vector
from .errors import ConfigInvalid, UnknownBus, UnstableStep
from .grid import build_measurement_matrix, default_sensors
from .integrate import rk4_maps
from .lti import LtiSystem
from .observer import design_gain

DIVERGENCE_BOUND = 1e6
CHUNK = 8192


@dataclass(frozen=True)
class Plant:
    """Dynamics, measurements and disturbance channels with their names."""

    sys: LtiSystem
    E: np.ndarray  # n x d disturbance input
    columns: dict = None  # bus id -> column of E; None means column index == bus
    state_labels: tuple = None
    output_labels: tuple = None
    bus_kinds: dict = None

    def __post_init__(self):
        n, m = self.sys.n, self.sys.m
        if self.state_labels is None:
            object.__setattr__(self, "state_labels", tuple(f"x{i}" for i in range(n)))
        if self.output_labels is None:
            object.__setattr__(self, "output_labels", tuple(f"y{i}" for i in range(m)))

    def column(self, bus):
        if self.columns is None:
            if not 0 <= bus < self.E.shape[1]:
                raise UnknownBus(f"disturbance channel {bus} does not exist")
            return int(bus)
        if bus not in self.columns:
            raise UnknownBus(f"bus {bus} has no load disturbance channel")
        return self.columns[bus]


def plant_from_grid(model, sensors=None):
    sensors = default_sensors(model.spec) if sensors is None else list(sensors)
    C = build_measurement_matrix(model.spec, model.index, sensors)
    labels = tuple(s if isinstance(s, str) else s.label for s in sensors)
    cols = {b: k for k, b in enumerate(model.index.load_buses)}
    kinds = {b.id: b.kind for b in model.spec.buses}
    return Plant(LtiSystem(model.A, C), np.asarray(model.E_load), cols, tuple(model.index.labels()), labels, kinds)


@dataclass(frozen=True)
class Estimator:
    """A designed observer together with the map from received to used data.

    ``ybar_map`` (m x m) turns received measurements into the full-length
    estimator input ``ybar`` (identity rows for trusted channels, surrogate
    rows for replaced ones).  ``order`` selects the rows fed to the observer
    and ``C_rows`` is the output model of each ``ybar`` entry.
    """

    kind: str
    design: object
    ybar_map: np.ndarray
    order: tuple
    C_rows: np.ndarray
    cluster_set: object = None
    attacked: tuple = ()
    x_hat0: np.ndarray = None
    disturbance_feedforward: bool = False  # observer is told the load schedule

    @property
    def R(self):
        return self.ybar_map[list(self.order)]


def build_estimator(sys, kind, attacked=(), cluster_set=None, margin=0.1, tol=1e-9, x_hat0=None,
                    allow_unobservable_zero_mode=False, disturbance_feedforward=False):
    """``standard`` uses the trusted rows only; ``resilient`` adds cluster surrogates."""
    C = sys.C
    m = C.shape[0]
    attacked = tuple(sorted(set(int(i) for i in attacked)))
    trusted = tuple(i for i in range(m) if i not in set(attacked))
    ybar_map = np.eye(m)
    C_rows = C.copy()
    if kind == "standard":
        order = trusted
    elif kind == "resilient":
        if cluster_set is None:
            raise ConfigInvalid("the resilient estimator needs a cluster set")
        order = trusted + attacked
        if attacked:
            S = surrogate_matrix(cluster_set, attacked)
            ybar_map[list(attacked)] = S
            PC = cluster_set.Pi.T @ (cluster_set.Pi @ C)
            C_rows[list(attacked)] = PC[list(attacked)]
    else:
        raise ConfigInvalid(f"unknown estimator kind {kind!r}")
    C_used = C_rows[list(order)]
    design = design_gain(sys, C_used, margin, tol=tol, allow_unobservable_zero_mode=allow_unobservable_zero_mode)
    x0 = None if x_hat0 is None else np.asarray(x_hat0, float)
    return Estimator(kind, design, ybar_map, order, C_rows, cluster_set, attacked, x0,
                     bool(disturbance_feedforward))


@dataclass
class SimResult:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    y_tilde: np.ndarray
    y_bar: np.ndarray = None
    x_hat: np.ndarray = None
    y_hat: np.ndarray = None
    r: np.ndarray = None
    metrics: dict = field(default_factory=dict)
    state_labels: tuple = ()
    output_labels: tuple = ()
    output_gram: np.ndarray = field(default=None, repr=False)  # sum over all steps of y y^T

    def columns(self):
        """Header and data blocks for the CSV file."""
        blocks = [("x", self.state_labels, self.x), ("y", self.output_labels, self.y),
                  ("ytilde", self.output_labels, self.y_tilde)]
        if self.x_hat is not None:
            blocks += [("yhat", self.output_labels, self.y_hat), ("ybar", self.output_labels, self.y_bar),
                       ("r", self.output_labels, self.r), ("xhat", self.state_labels, self.x_hat)]
        header = ["t"] + [f"{p}_{lab}" for p, labs, _ in blocks for lab in labs]
        data = np.column_stack([self.t] + [arr for _, _, arr in blocks])
        return header, data


def _event_steps(t, dt):
    return int(round(t / dt)) if math.isfinite(t) else None


def _disturbance(plant, events, dt, k0, k1):
    """Piecewise-constant disturbance for steps ``k0..k1-1``, shape (k1-k0, d)."""
    d = np.zeros((k1 - k0, plant.E.shape[1]))
    k = np.arange(k0, k1)
    for ev in events:
        on = _event_steps(ev.t_on, dt)
        off = _event_steps(ev.t_off, dt)
        mask = (k >= on) & ((k < off) if off is not None else True)
        d[mask, plant.column(ev.bus)] += ev.delta
    return d


def _attack_samples(attack, cols, dt, k, offset):
    """Attack values on ``cols`` at times ``(k + offset) dt`` for active steps ``k``."""
    out = np.zeros((k.size, len(cols)))
    if attack is None or not cols:
        return out
    ks = int(round(attack.t_start / dt))
    ke = _event_steps(attack.t_end, dt)
    active = (k >= ks) & ((k < ke) if ke is not None else True)
    if not active.any():
        return out
    tau = (k[active] + offset) * dt - attack.t_start
    for j, i in enumerate(cols):
        out[active, j] = attack.signals[i].values(tau)
    return out


def simulate(plant, scenario, estimator=None, attack=None):
    """Run ``scenario`` on ``plant`` (optionally with an estimator in the loop)."""
    sys = plant.sys
    A, C = sys.Acl, sys.C
    n, m = A.shape[0], C.shape[0]
    dt = float(scenario.dt)
    N = scenario.n_steps
    if attack is None and scenario.attack is not None:
        attack = scenario.attack.resolve(plant.output_labels, plant.bus_kinds)
    if attack is not None and attack.m not in (None, m):
        raise ConfigInvalid(f"attack declared for {attack.m} measurements, plant has {m}")
    acols = list(attack.attacked) if attack is not None else []
    for ev in scenario.load_events:
        plant.column(ev.bus)

    x = x_vector(scenario.x0, n, "x0")
    if estimator is None:
        F, G = A, np.hstack([plant.E, np.zeros((n, len(acols)))])
        z = x
    else:
        des = estimator.design
        R = estimator.R
        LR = des.L @ R
        F = np.block([[A, np.zeros((n, n))], [LR @ C, A - des.L @ des.C_used]])
        G = np.block([[plant.E, np.zeros((n, len(acols)))],
                      [plant.E if estimator.disturbance_feedforward else np.zeros_like(plant.E), LR[:, acols]]])
        xh = estimator.x_hat0 if estimator.x_hat0 is not None else scenario.estimator.xhat0
        z = np.concatenate([x, x_vector(xh, n, "xhat0")])
    nz = z.size
    maps = rk4_maps(F, G, dt)
    rho = maps.spectral_radius
    if rho > 1.0 + 1e-9:
        raise UnstableStep(f"dt={dt} is outside the RK4 stability region (step spectral radius {rho:.6g})")

    every = int(scenario.record_every)
    rec_steps = np.arange(0, N + 1, every)
    nr = rec_steps.size
    Zrec = np.empty((nr, nz))
    Arec = np.zeros((nr, m))  # attack on the recorded grid points

    Crows = estimator.C_rows if estimator is not None else None
    Ybm = estimator.ybar_map if estimator is not None else None
    gram = np.zeros((m, m))
    w_start = int(math.ceil(scenario.metrics_start / dt - 1e-9))
    acc = {"e2": 0.0, "x2": 0.0, "nw": 0, "r2": np.zeros(m), "nr": 0}

    def account(Zc, kk):
        """Accumulate full-resolution metrics for grid points ``kk``."""
        X = Zc[:, :n]
        Y = X @ C.T
        gram[...] += Y.T @ Y
        if estimator is None:
            return
        Xh = Zc[:, n:]
        a_full = np.zeros((kk.size, m))
        a_full[:, acols] = _attack_samples(attack, acols, dt, kk, 0.0)
        Ybar = (Y + a_full) @ Ybm.T
        Rr = Xh @ Crows.T - Ybar
        acc["r2"] += np.sum(Rr ** 2, axis=0)
        acc["nr"] += kk.size
        w = kk >= w_start
        if w.any():
            acc["e2"] += float(np.sum((Xh[w] - X[w]) ** 2))
            acc["x2"] += float(np.sum(X[w] ** 2))
            acc["nw"] += int(w.sum())

    k0 = 0
    Zrec[0] = z
    account(z[None, :], np.array([0]))
    ri = 1
    while k0 < N:
        k1 = min(N, k0 + CHUNK)
        kk = np.arange(k0, k1)
        d = _disturbance(plant, scenario.load_events, dt, k0, k1)
        U0 = np.hstack([d, _attack_samples(attack, acols, dt, kk, 0.0)])
        Um = np.hstack([d, _attack_samples(attack, acols, dt, kk, 0.5)])
        U1 = np.hstack([d, _attack_samples(attack, acols, dt, kk, 1.0)])
        drive = U0 @ maps.G0.T + Um @ maps.Gm.T + U1 @ maps.G1.T
        T = maps.T
        Zc = np.empty((k1 - k0, nz))
        for j in range(k1 - k0):
            z = T @ z + drive[j]
            Zc[j] = z
        big = np.abs(Zc[:, :n]).max(axis=1) if n else np.zeros(k1 - k0)
        if not np.all(np.isfinite(Zc)) or (big > DIVERGENCE_BOUND).any():
            bad = int(np.argmax(~np.isfinite(big) | (big > DIVERGENCE_BOUND)))
            raise UnstableStep(f"state norm exceeded {DIVERGENCE_BOUND:g} at t={(k0 + bad + 1) * dt:.6g}")
        kc = np.arange(k0 + 1, k1 + 1)
        account(Zc, kc)
        sel = kc % every == 0
        nsel = int(sel.sum())
        Zrec[ri:ri + nsel] = Zc[sel]
        ri += nsel
        k0 = k1

    t = rec_steps * dt
    X = Zrec[:, :n]
    Y = X @ C.T
    if acols:
        Arec[:, acols] = _attack_samples(attack, acols, dt, rec_steps, 0.0)
    Yt = Y + Arec
    res = SimResult(t, X, Y, Yt, state_labels=tuple(plant.state_labels), output_labels=tuple(plant.output_labels),
                    output_gram=gram)
    metrics = {"n_steps": N, "dt": dt, "step_spectral_radius": rho, "attacked": [int(i) for i in acols]}
    if estimator is not None:
        Xh = Zrec[:, n:]
        res.x_hat = Xh
        res.y_hat = Xh @ C.T
        res.y_bar = Yt @ Ybm.T
        res.r = Xh @ Crows.T - res.y_bar
        metrics["estimator"] = estimator.kind
        metrics["stability_margin"] = estimator.design.stability_margin
        metrics["state_rmse"] = math.sqrt(acc["e2"] / acc["nw"]) if acc["nw"] else float("nan")
        metrics["state_rmse_relative"] = (math.sqrt(acc["e2"] / acc["x2"]) if acc["x2"] > 0 else
                                          (0.0 if acc["e2"] == 0 else float("inf")))
        rr = np.sqrt(acc["r2"] / max(acc["nr"], 1))
        metrics["residual_rms"] = [float(v) for v in rr]
        metrics["residual_rms_total"] = float(np.sqrt(np.sum(acc["r2"]) / max(acc["nr"], 1)))
        metrics["residual_final_norm"] = float(np.linalg.norm(res.r[-1]))
        if estimator.cluster_set is not None:
            metrics["approx_error"] = approximation_error(res, estimator.cluster_set).aggregate
    res.metrics = metrics
    return res


def write_csv(result, path):
    header, data = result.columns()
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")

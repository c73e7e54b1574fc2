import csv
import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import random_semistable
from resilient_se.attack import AttackScenario, AttackSignal
from resilient_se.clustering import clusters_for_k, compute_phi
from resilient_se.config import EstimatorConfig, LoadEvent, Scenario
from resilient_se.errors import ConfigInvalid, UnknownBus, UnstableStep
from resilient_se.grid import assemble_state_space, parse_grid_file
from resilient_se.lti import LtiSystem, stable_subspace
from resilient_se.observer import run_observer
from resilient_se.sim import Plant, build_estimator, plant_from_grid, simulate, write_csv, write_json


def scalar_plant(a=-1.0):
    return Plant(LtiSystem([[a]], [[1.0]]), np.ones((1, 1)))


def test_zero_input_zero_state():
    rng = np.random.default_rng(0)
    s = random_semistable(rng, 4, 2)
    res = simulate(Plant(s, np.eye(4)), Scenario(duration=2.0, dt=0.01))
    assert np.all(res.x == 0) and np.all(res.y == 0)
    assert res.t.shape == (201,) and res.x.shape == (201, 4)


def test_scalar_decay():
    res = simulate(scalar_plant(), Scenario(duration=1.0, dt=1e-3, x0=(1.0,)))
    assert res.t[-1] == pytest.approx(1.0)
    assert abs(res.x[-1, 0] - math.exp(-1.0)) <= 1e-9


def test_step_halving_order():
    """Terminal error with a forced, smooth segment shrinks like dt^4."""
    def run(dt):
        sc = Scenario(duration=2.0, dt=dt, x0=(1.0,), load_events=(LoadEvent(0, 0.5, 0.0),))
        return simulate(scalar_plant(-2.0), sc).x[-1, 0]

    exact = 0.25 + 0.75 * math.exp(-4.0)  # x' = -2x + 0.5
    e1, e2 = abs(run(0.1) - exact), abs(run(0.05) - exact)
    assert e2 <= e1 / 12
    assert abs(run(0.1) - run(0.05)) <= 1.0 * 0.1**4


def test_record_every_and_gram():
    rng = np.random.default_rng(1)
    s = random_semistable(rng, 4, 3)
    plant = Plant(s, rng.standard_normal((4, 2)))
    ev = (LoadEvent(0, 0.3, 0.5, 1.5), LoadEvent(1, -0.2, 1.0))
    full = simulate(plant, Scenario(duration=3.0, dt=0.01, load_events=ev))
    dec = simulate(plant, Scenario(duration=3.0, dt=0.01, load_events=ev, record_every=10))
    np.testing.assert_array_equal(dec.x, full.x[::10])
    np.testing.assert_allclose(dec.output_gram, full.y.T @ full.y, rtol=1e-12)
    np.testing.assert_array_equal(dec.output_gram, full.output_gram)


def test_event_timing_on_grid():
    plant = Plant(LtiSystem([[0.0]], [[1.0]]), np.ones((1, 1)))
    res = simulate(plant, Scenario(duration=1.0, dt=0.1, load_events=(LoadEvent(0, 1.0, 0.3, 0.6),)))
    # pure integrator of a unit pulse of length 0.3
    np.testing.assert_allclose(res.x[:4, 0], 0.0, atol=1e-15)
    assert res.x[-1, 0] == pytest.approx(0.3, rel=1e-12)


def test_conservation_diagnostic():
    """v_max^T x(t) follows only v_max^T E d(t)."""
    rng = np.random.default_rng(2)
    s = random_semistable(rng, 5, 2)
    E = rng.standard_normal((5, 1))
    x0 = rng.standard_normal(5)
    sc = Scenario(duration=4.0, dt=1e-3, x0=tuple(x0), load_events=(LoadEvent(0, 0.7, 1.0, 3.0),))
    res = simulate(Plant(s, E), sc)
    v = stable_subspace(s).v_max[:, 0]
    d = lambda t: 0.7 if 1.0 <= t < 3.0 else 0.0
    for k in (500, 1500, 2500, 4000):
        t = res.t[k]
        integral, _ = quad(d, 0.0, t, points=[1.0, 3.0], epsabs=1e-13)
        assert v @ res.x[k] == pytest.approx(v @ x0 + (v @ E[:, 0]) * integral, abs=1e-6)


def test_rts_load_step_bounded_and_conserved():
    model = assemble_state_space(parse_grid_file("rts24"))
    plant = plant_from_grid(model)
    sc = Scenario(duration=60.0, dt=1e-3, record_every=100, load_events=(LoadEvent(3, 0.1, 5.0, 30.0),))
    res = simulate(plant, sc)
    assert np.all(np.isfinite(res.x)) and np.abs(res.x).max() < 10
    v = stable_subspace(plant.sys).v_max[:, 0]
    # the load channel does not enter the conserved combination
    assert abs(v @ plant.E[:, plant.column(3)]) <= 1e-12
    np.testing.assert_allclose(res.x @ v, 0.0, atol=1e-9)
    w = [plant.output_labels.index(f"w{b}") for b in (1, 3, 13)]
    # frequencies drop during the step and come back after it
    k_on = int(round(20.0 / 0.1))
    assert np.all(res.y[k_on, w] < 0)
    assert np.abs(res.y[-1, w]).max() < 0.2 * np.abs(res.y[k_on, w]).max()


def test_unstable_step_and_divergence():
    with pytest.raises(UnstableStep, match="stability region"):
        simulate(scalar_plant(-1.0), Scenario(duration=10.0, dt=3.0))
    # Jordan block: step spectral radius 1, state grows linearly
    jordan = Plant(LtiSystem([[0.0, 1.0], [0.0, 0.0]], [[1.0, 0.0]]), np.zeros((2, 1)))
    with pytest.raises(UnstableStep, match="exceeded"):
        simulate(jordan, Scenario(duration=20.0, dt=1e-2, x0=(0.0, 1e5)))


def test_bad_inputs():
    with pytest.raises(UnknownBus):
        simulate(scalar_plant(), Scenario(duration=1.0, load_events=(LoadEvent(5, 1.0, 0.0),)))
    att = AttackScenario({0: AttackSignal("bias", 1.0)}, m=3)
    with pytest.raises(ConfigInvalid):
        simulate(scalar_plant(), Scenario(duration=1.0), attack=att)


def test_attack_on_recorded_outputs():
    rng = np.random.default_rng(3)
    s = random_semistable(rng, 3, 3)
    att = AttackScenario({1: AttackSignal("ramp", 0.5, slope=2.0)}, t_start=0.5, t_end=0.8)
    res = simulate(Plant(s, np.eye(3)), Scenario(duration=1.0, dt=0.1, x0=(1.0,)), attack=att)
    diff = res.y_tilde - res.y
    assert np.all(diff[:, [0, 2]] == 0)
    np.testing.assert_allclose(diff[:, 1], [0, 0, 0, 0, 0, 0.5, 0.7, 0.9, 0, 0, 0], atol=1e-12)


def test_standard_estimator_exact_start():
    rng = np.random.default_rng(4)
    s = random_semistable(rng, 4, 3)
    plant = Plant(s, rng.standard_normal((4, 1)))
    x0 = tuple(rng.standard_normal(4))
    est = build_estimator(s, "standard", margin=0.5, x_hat0=x0, disturbance_feedforward=True)
    sc = Scenario(duration=3.0, dt=1e-3, x0=x0, load_events=(LoadEvent(0, 1.0, 1.0),), record_every=50)
    res = simulate(plant, sc, est)
    assert np.abs(res.x_hat - res.x).max() <= 1e-12
    assert res.metrics["state_rmse"] <= 1e-12 and res.metrics["residual_final_norm"] <= 1e-12
    # without the load schedule the step appears as an unknown input
    est2 = build_estimator(s, "standard", margin=0.5, x_hat0=x0)
    assert simulate(plant, sc, est2).metrics["state_rmse"] > 1e-3


def test_joint_simulation_matches_run_observer():
    rng = np.random.default_rng(5)
    s = random_semistable(rng, 4, 2)
    plant = Plant(s, np.zeros((4, 1)))
    est = build_estimator(s, "standard", margin=0.3)
    sc = Scenario(duration=2.0, dt=1e-3, x0=tuple(rng.standard_normal(4)))
    res = simulate(plant, sc, est)
    run = run_observer(s, est.design, res.y, x_hat0=np.zeros(4), t=res.t, dt=sc.dt)
    # run_observer interpolates midpoint samples, the joint system does not
    np.testing.assert_allclose(run.x_hat, res.x_hat, atol=1e-6 * np.abs(res.x).max())
    np.testing.assert_allclose(run.r, res.r, atol=1e-6 * np.abs(res.y).max())


def test_resilient_estimator_wiring():
    rng = np.random.default_rng(6)
    s = random_semistable(rng, 5, 4)
    phi = compute_phi(s)
    cs = clusters_for_k(phi, 2, trusted=(0, 2))
    attacked = tuple(i for i in range(4) if i not in (0, 2) and cs.cluster_of(i) in
                     {cs.cluster_of(0), cs.cluster_of(2)})
    assert attacked
    est = build_estimator(s, "resilient", attacked, cs, margin=0.2)
    assert est.order[: 4 - len(attacked)] == tuple(i for i in range(4) if i not in attacked)
    att = AttackScenario({i: AttackSignal("bias", 5.0) for i in attacked}, m=4)
    res = simulate(Plant(s, np.eye(5)), Scenario(duration=1.0, dt=0.01, x0=(1.0,)), est, att)
    trusted = [i for i in range(4) if i not in attacked]
    np.testing.assert_array_equal(res.y_bar[:, trusted], res.y_tilde[:, trusted])
    # surrogates never read the attacked channels
    S = est.ybar_map[list(attacked)]
    assert np.all(S[:, list(attacked)] == 0)
    np.testing.assert_allclose(res.y_bar[:, list(attacked)], res.y[:, trusted] @ S[:, trusted].T, atol=1e-12)
    assert "approx_error" in res.metrics
    with pytest.raises(ConfigInvalid):
        build_estimator(s, "resilient", attacked)
    with pytest.raises(ConfigInvalid):
        build_estimator(s, "magic")


def test_estimator_config_xhat0_used():
    rng = np.random.default_rng(7)
    s = random_semistable(rng, 3, 3)
    est = build_estimator(s, "standard", margin=0.5)
    sc = Scenario(duration=0.1, dt=0.01, estimator=EstimatorConfig(xhat0=(2.0,)))
    res = simulate(Plant(s, np.eye(3)), sc, est)
    np.testing.assert_array_equal(res.x_hat[0], [2.0, 2.0, 2.0])


def test_determinism_and_writers(tmp_path):
    rng = np.random.default_rng(8)
    s = random_semistable(rng, 3, 2)
    est = build_estimator(s, "standard", margin=0.5)
    sc = Scenario(duration=1.0, dt=0.01, x0=(1.0,), load_events=(LoadEvent(0, 1.0, 0.2),))
    plant = Plant(s, np.ones((3, 1)))
    a, b = simulate(plant, sc, est), simulate(plant, sc, est)
    for p, r in (("a", a), ("b", b)):
        write_csv(r, tmp_path / f"{p}.csv")
        write_json(r.metrics, tmp_path / f"{p}.json")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    with open(tmp_path / "a.csv") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    assert header[:4] == ["t", "x_x0", "x_x1", "x_x2"]
    assert "yhat_y0" in header and "r_y1" in header and header[-1] == "xhat_x2"
    assert len(rows) == 102
    back = np.array(rows[1:], float)
    np.testing.assert_array_equal(back[:, 1:4], a.x)
    m = json.loads((tmp_path / "a.json").read_text())
    assert m["estimator"] == "standard" and m["n_steps"] == 100

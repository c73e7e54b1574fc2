import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resilient_se.errors import DisconnectedNetwork, ParseError, UnknownBus, UnknownQuantity, ValidationError
from resilient_se.grid import (Branch, Bus, GeneratorParams, GridSpec, LoadParams, Sensor, StateIndex,
                               assemble_state_space, build_measurement_matrix, build_ybus, default_sensors,
                               parse_grid_file, parse_grid_text, partition_ybus, serialize_grid)
from resilient_se.lti import stable_subspace

TWO_BUS = """
[system]
name = two
base_mva = 100
f_nominal = 50

[buses]
id kind
1  generator
2  load

[branches]
from to b
1    2  5.0

[generators]
bus J   D   T_u T_g K_t r    e_T
1   4.0 1.5 0.3 0.2 1.0 0.05 0.2

[loads]
bus J   D
2   0.5 1.2
"""


def two_bus(**gen):
    g = dict(bus=1, J=4.0, D=1.5, T_u=0.3, T_g=0.2, K_t=1.0, r=0.05, e_T=0.2)
    g.update(gen)
    return GridSpec([Bus(1, "generator"), Bus(2, "load")], [Branch(1, 2, 5.0)],
                    [GeneratorParams(**g)], [LoadParams(2, 0.5, 1.2)])


@pytest.fixture(scope="module")
def rts():
    return parse_grid_file("rts24")


def test_ybus_small():
    np.testing.assert_array_equal(build_ybus(two_bus()), [[5, -5], [-5, 5]])
    tri = GridSpec([Bus(i, "load") for i in (1, 2, 3)], [Branch(1, 2, 1), Branch(2, 3, 1), Branch(1, 3, 1)], [],
                   [LoadParams(i, 1, 1) for i in (1, 2, 3)])
    np.testing.assert_array_equal(build_ybus(tri), [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])


def test_ybus_disconnected():
    g = GridSpec([Bus(1, "load"), Bus(2, "load"), Bus(3, "load")], [Branch(1, 2, 1.0)], [],
                 [LoadParams(i, 1, 1) for i in (1, 2, 3)])
    with pytest.raises(DisconnectedNetwork):
        build_ybus(g)


def test_rts_ybus_against_incidence(rts):
    Y = build_ybus(rts)
    ids = [b.id for b in rts.buses]
    Binc = np.zeros((len(ids), len(rts.branches)))
    for k, br in enumerate(rts.branches):
        Binc[ids.index(br.from_bus), k] = 1.0
        Binc[ids.index(br.to_bus), k] = -1.0
    ref = Binc @ np.diag([br.b for br in rts.branches]) @ Binc.T
    assert Y.shape == (24, 24)
    np.testing.assert_allclose(Y, ref, rtol=1e-14, atol=1e-12)
    np.testing.assert_array_equal(Y, Y.T)
    assert np.abs(Y.sum(axis=1)).max() <= 1e-12
    ev = np.linalg.eigvalsh(Y)
    assert abs(ev[0]) <= 1e-10 * ev[-1] and ev[1] > 1e-6


def test_partition_blocks(rts):
    Y = build_ybus(rts)
    GG, GL, LG, LL = partition_ybus(rts, Y)
    assert GG.shape == (10, 10) and LL.shape == (14, 14)
    np.testing.assert_array_equal(GL, LG.T)


def test_hand_derived_two_bus():
    """6-state model written out term by term from the swing/governor equations."""
    J, D, Tu, Tg, Kt, r, eT = 4.0, 1.5, 0.3, 0.2, 1.0, 0.05, 0.2
    JL, DL, b = 0.5, 1.2, 5.0
    # [w1, PT1, a1, P1, w2, P2]
    ref = np.array([
        [-D / J, 1 / J, eT / J, -1 / J, 0, 0],
        [0, -1 / Tu, Kt / Tu, 0, 0, 0],
        [-1 / Tg, 0, -r / Tg, 0, 0, 0],
        [b, 0, 0, 0, -b, 0],
        [0, 0, 0, 0, -DL / JL, -1 / JL],
        [-b, 0, 0, 0, b, 0],
    ])
    model = assemble_state_space(two_bus())
    np.testing.assert_allclose(model.A, ref, rtol=1e-15)
    np.testing.assert_allclose(model.E_load[:, 0], [0, 0, 0, 0, -1 / JL, 0])
    assert model.index.labels() == ["w1", "PT1", "a1", "P1", "w2", "P2"]


def test_rts_dimensions(rts):
    assert len(rts.buses) == 24 and len(rts.branches) == 38
    assert len(rts.generator_buses) == 10 and len(rts.load_buses) == 14
    model = assemble_state_space(rts)
    assert model.A.shape == (68, 68) and model.index.n == 68


def test_rts_single_semisimple_zero_mode(rts):
    A = assemble_state_space(rts).A
    lam = np.linalg.eigvals(A)
    nA = np.linalg.norm(A, 2)
    assert np.sum(np.abs(lam) <= 1e-8 * nA) == 1
    assert np.max(lam.real[np.abs(lam) > 1e-8 * nA]) < 0
    dec = stable_subspace(A)
    assert dec.z == 1
    assert np.linalg.norm(dec.v_max.T @ A) <= 1e-8 * nA
    assert np.linalg.norm(A @ dec.u_max) <= 1e-8 * nA


def test_power_conservation_left_vector():
    """Sum of network powers is conserved: 1^T P' = 1^T Ybus w = 0."""
    model = assemble_state_space(two_bus())
    w = np.zeros(model.index.n)
    w[model.index.slice("P_G")] = 1.0
    w[model.index.slice("P_L")] = 1.0
    assert np.abs(w @ model.A).max() == 0.0


def test_balanced_load_step_has_equilibrium(rts):
    """A x = -E d is consistent: the zero-mode left vector annihilates the load channel."""
    model = assemble_state_space(rts)
    d = np.zeros(model.index.n_L)
    d[model.load_column(3)] = 0.1
    rhs = -model.E_load @ d
    x, *_ = np.linalg.lstsq(model.A, rhs, rcond=None)
    assert np.linalg.norm(model.A @ x - rhs) <= 1e-9 * np.linalg.norm(rhs)


def test_measurement_matrix(rts):
    model = assemble_state_space(rts)
    idx = model.index
    assert build_measurement_matrix(rts, idx, []).shape == (0, 68)
    C = build_measurement_matrix(rts, idx, [Sensor(1, "frequency")])
    e = np.zeros(68)
    e[idx.omega(1)] = 1
    np.testing.assert_array_equal(C[0], e)
    sensors = default_sensors(rts)
    C = build_measurement_matrix(rts, idx, sensors)
    assert C.shape == (48, 68)
    np.testing.assert_array_equal(np.abs(C).sum(axis=1), 1)
    assert len({tuple(r) for r in C}) == 48
    assert sensors[0].label == "w1" and sensors[24].label == "P1"
    C2 = build_measurement_matrix(rts, idx, ["P3", "w3"])
    assert C2[0, idx.power(3)] == 1 and C2[1, idx.omega(3)] == 1


def test_measurement_errors(rts):
    idx = assemble_state_space(rts).index
    with pytest.raises(UnknownBus):
        build_measurement_matrix(rts, idx, [Sensor(99, "frequency")])
    with pytest.raises(UnknownQuantity):
        build_measurement_matrix(rts, idx, [Sensor(1, "voltage")])
    with pytest.raises(UnknownQuantity):
        Sensor.from_label("V3")
    with pytest.raises(UnknownBus):
        Sensor.from_label("wx")


def test_state_index_bijective(rts):
    idx = assemble_state_space(rts).index
    labels = idx.labels()
    assert len(labels) == len(set(labels)) == 68
    pos = sorted([idx.omega(b) for b in idx.gen_buses + idx.load_buses]
                 + [idx.power(b) for b in idx.gen_buses + idx.load_buses])
    assert len(set(pos)) == 48


def test_parse_two_bus():
    g = parse_grid_text(TWO_BUS)
    assert g.name == "two" and g.f_nominal == 50.0
    assert g.generator_buses == [1] and g.load_buses == [2]
    assert g.loads[0].L_nominal == 0.0


@pytest.mark.parametrize("bad, exc", [
    (TWO_BUS.replace("1   4.0 1.5", "1   0.0 1.5"), ValidationError),
    (TWO_BUS.replace("1   4.0 1.5", "1   -1 1.5"), ValidationError),
    (TWO_BUS.replace("1    2  5.0", "1    2  -5.0"), ValidationError),
    (TWO_BUS.replace("1    2  5.0", "1    3  5.0"), ValidationError),
    (TWO_BUS.replace("2  load", "2  motor"), ParseError),
    (TWO_BUS.replace("1   4.0 1.5", "1   four 1.5"), ParseError),
    (TWO_BUS.replace("[loads]", "[lods]"), ParseError),
    (TWO_BUS.replace("base_mva = 100", "base_mva 100"), ParseError),
])
def test_parse_errors(bad, exc):
    with pytest.raises(exc):
        parse_grid_text(bad)


def test_parse_error_carries_line():
    bad = TWO_BUS.replace("1   4.0 1.5", "1   four 1.5")
    with pytest.raises(ParseError) as ei:
        parse_grid_text(bad, "x.grid")
    assert ei.value.line == bad.splitlines().index("1   four 1.5 0.3 0.2 1.0 0.05 0.2") + 1
    assert "x.grid" in str(ei.value)


def test_missing_file():
    with pytest.raises(ParseError, match="no_such.grid"):
        parse_grid_file("no_such.grid")


def test_roundtrip_rts(rts):
    again = parse_grid_text(serialize_grid(rts))
    assert again == rts


@settings(max_examples=30, deadline=None)
@given(J=st.floats(1e-3, 1e3), D=st.floats(0, 10), b=st.floats(1e-3, 1e3), r=st.floats(1e-3, 1.0))
def test_roundtrip_property(J, D, b, r):
    g = GridSpec([Bus(1, "generator"), Bus(2, "load")], [Branch(1, 2, b)],
                 [GeneratorParams(1, J, D, 0.3, 0.2, 1.0, r)], [LoadParams(2, J, D)])
    assert parse_grid_text(serialize_grid(g)) == g


def test_random_grid_has_single_zero_mode():
    rng = np.random.default_rng(3)
    for _ in range(5):
        nb = 8
        kinds = ["generator"] * 3 + ["load"] * (nb - 3)
        buses = [Bus(i + 1, k) for i, k in enumerate(kinds)]
        branches = [Branch(i + 1, i + 2, rng.uniform(1, 20)) for i in range(nb - 1)]
        branches.append(Branch(1, nb, rng.uniform(1, 20)))
        gens = [GeneratorParams(i + 1, rng.uniform(2, 8), rng.uniform(0.5, 2), 0.3, 0.2, 1.0, 0.05) for i in range(3)]
        loads = [LoadParams(i + 1, rng.uniform(0.5, 2), rng.uniform(0.5, 2)) for i in range(3, nb)]
        A = assemble_state_space(GridSpec(buses, branches, gens, loads)).A
        dec = stable_subspace(A)
        assert dec.z == 1


def test_state_index_layout():
    idx = StateIndex((1, 2), (3,))
    assert idx.n == 10
    assert idx.slice("w_L") == slice(8, 9)
    assert idx.position(3, "power") == 9

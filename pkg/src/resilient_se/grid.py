"""Linearized interconnected power-system model.

Per bus ``i`` (deviation coordinates, frequency reference at 0)::

    generator:  J w' = -D w + P_T - P + e_T a
                T_u P_T' = -P_T + K_t a
                T_g a'   = -r a - w
    load:       J w' = -D w - P - dL
    network:    P' = Ybus w          (lossless DC network, P = net injection)

State layout: ``[w_G, P_T, a, P_G, w_L, P_L]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import textfmt
from .errors import DisconnectedNetwork, ParseError, UnknownBus, UnknownQuantity, ValidationError
from .lti import LtiSystem

DATA_DIR = Path(__file__).parent / "data"
BUILTIN_GRIDS = {"rts24": DATA_DIR / "rts24.grid"}

QUANTITIES = ("frequency", "power")


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # "generator" | "load"


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    b: float


@dataclass(frozen=True)
class GeneratorParams:
    bus: int
    J: float
    D: float
    T_u: float
    T_g: float
    K_t: float
    r: float
    e_T: float = 0.0


@dataclass(frozen=True)
class LoadParams:
    bus: int
    J: float
    D: float
    L_nominal: float = 0.0


@dataclass(frozen=True)
class GridSpec:
    buses: tuple
    branches: tuple
    generators: tuple
    loads: tuple
    name: str = "grid"
    base_mva: float = 100.0
    f_nominal: float = 60.0

    def __post_init__(self):
        for attr in ("buses", "branches", "generators", "loads"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))

    @property
    def generator_buses(self):
        return [b.id for b in self.buses if b.kind == "generator"]

    @property
    def load_buses(self):
        return [b.id for b in self.buses if b.kind == "load"]

    def validate(self):
        """Raise ``ValidationError`` / ``DisconnectedNetwork`` on invariant violations."""
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValidationError("bus ids are not unique")
        if not ids:
            raise ValidationError("grid has no buses")
        for b in self.buses:
            if b.kind not in ("generator", "load"):
                raise ValidationError(f"bus {b.id}: kind must be 'generator' or 'load', got {b.kind!r}")
        known = set(ids)
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise ValidationError(f"branch {br.from_bus}-{br.to_bus} references unknown bus {end}")
            if br.from_bus == br.to_bus:
                raise ValidationError(f"branch {br.from_bus}-{br.to_bus} is a self loop")
            if not (np.isfinite(br.b) and br.b > 0):
                raise ValidationError(f"branch {br.from_bus}-{br.to_bus}: susceptance must be > 0, got {br.b}")

        gen_params = [g.bus for g in self.generators]
        load_params = [ld.bus for ld in self.loads]
        if sorted(gen_params) != sorted(self.generator_buses):
            raise ValidationError("[generators] must list exactly the generator buses, once each")
        if sorted(load_params) != sorted(self.load_buses):
            raise ValidationError("[loads] must list exactly the load buses, once each")
        for g in self.generators:
            for name in ("J", "T_u", "T_g", "r"):
                v = getattr(g, name)
                if not (np.isfinite(v) and v > 0):
                    raise ValidationError(f"generator {g.bus}: {name} must be > 0, got {v}")
            if not (np.isfinite(g.D) and g.D >= 0):
                raise ValidationError(f"generator {g.bus}: D must be >= 0, got {g.D}")
            if not (np.isfinite(g.K_t) and np.isfinite(g.e_T)):
                raise ValidationError(f"generator {g.bus}: K_t and e_T must be finite")
        for ld in self.loads:
            if not (np.isfinite(ld.J) and ld.J > 0):
                raise ValidationError(f"load {ld.bus}: J must be > 0, got {ld.J}")
            if not (np.isfinite(ld.D) and ld.D >= 0):
                raise ValidationError(f"load {ld.bus}: D must be >= 0, got {ld.D}")
        if not _is_connected(ids, self.branches):
            raise DisconnectedNetwork(f"branch graph of {self.name!r} is not connected")
        return self


def _is_connected(ids, branches):
    adj = {i: set() for i in ids}
    for br in branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == len(ids)


@dataclass(frozen=True)
class StateIndex:
    """Fixed state ordering ``[w_G, P_T, a, P_G, w_L, P_L]``."""

    gen_buses: tuple
    load_buses: tuple

    @property
    def n_G(self):
        return len(self.gen_buses)

    @property
    def n_L(self):
        return len(self.load_buses)

    @property
    def n(self):
        return 4 * self.n_G + 2 * self.n_L

    def _block(self, name):
        G, L = self.n_G, self.n_L
        starts = {"w_G": 0, "P_T": G, "a": 2 * G, "P_G": 3 * G, "w_L": 4 * G, "P_L": 4 * G + L}
        size = L if name in ("w_L", "P_L") else G
        return starts[name], size

    def slice(self, name):
        start, size = self._block(name)
        return slice(start, start + size)

    def omega(self, bus):
        if bus in self.gen_buses:
            return self._block("w_G")[0] + self.gen_buses.index(bus)
        if bus in self.load_buses:
            return self._block("w_L")[0] + self.load_buses.index(bus)
        raise UnknownBus(f"bus {bus} is not in the model")

    def power(self, bus):
        if bus in self.gen_buses:
            return self._block("P_G")[0] + self.gen_buses.index(bus)
        if bus in self.load_buses:
            return self._block("P_L")[0] + self.load_buses.index(bus)
        raise UnknownBus(f"bus {bus} is not in the model")

    def position(self, bus, quantity):
        if quantity == "frequency":
            return self.omega(bus)
        if quantity == "power":
            return self.power(bus)
        raise UnknownQuantity(f"unknown measured quantity {quantity!r}; expected one of {QUANTITIES}")

    def labels(self):
        out = []
        for name, buses in (("w", self.gen_buses), ("PT", self.gen_buses), ("a", self.gen_buses),
                            ("P", self.gen_buses), ("w", self.load_buses), ("P", self.load_buses)):
            out += [f"{name}{b}" for b in buses]
        return out


@dataclass(frozen=True)
class Sensor:
    bus: int
    quantity: str

    @property
    def label(self):
        return ("w" if self.quantity == "frequency" else "P") + str(self.bus)

    @classmethod
    def from_label(cls, label):
        label = label.strip()
        if label.startswith("w"):
            q, rest = "frequency", label[1:]
        elif label.startswith("P"):
            q, rest = "power", label[1:]
        else:
            raise UnknownQuantity(f"sensor label {label!r} must start with 'w' (frequency) or 'P' (power)")
        try:
            return cls(int(rest), q)
        except ValueError:
            raise UnknownBus(f"sensor label {label!r} has no integer bus id") from None


@dataclass(frozen=True)
class GridModel:
    """Assembled model: autonomous dynamics plus the load-disturbance channel."""

    spec: GridSpec
    index: StateIndex
    A: np.ndarray
    E_load: np.ndarray  # n x n_L, maps load-power deviations into the state derivative
    ybus: np.ndarray = field(repr=False)

    def system(self, C=None):
        if C is None:
            C = np.zeros((0, self.index.n))
        return LtiSystem(self.A, C)

    def load_column(self, bus):
        try:
            return self.index.load_buses.index(bus)
        except ValueError:
            raise UnknownBus(f"bus {bus} is not a load bus") from None


def build_ybus(grid):
    """Susceptance-weighted Laplacian, rows and columns in ``grid.buses`` order.

    The diagonal is assigned as minus the sum of the off-diagonal row so
    that row sums vanish exactly.
    """
    ids = [b.id for b in grid.buses]
    if not _is_connected(ids, grid.branches):
        raise DisconnectedNetwork(f"branch graph of {grid.name!r} is not connected")
    pos = {bid: k for k, bid in enumerate(ids)}
    Y = np.zeros((len(ids), len(ids)))
    for br in grid.branches:
        i, j = pos[br.from_bus], pos[br.to_bus]
        Y[i, j] -= br.b
        Y[j, i] -= br.b
    np.fill_diagonal(Y, 0.0)
    np.fill_diagonal(Y, -Y.sum(axis=1))
    return Y


def partition_ybus(grid, Y=None):
    """Return ``(Y_GG, Y_GL, Y_LG, Y_LL)``."""
    if Y is None:
        Y = build_ybus(grid)
    kinds = np.array([b.kind == "generator" for b in grid.buses])
    g, l = np.flatnonzero(kinds), np.flatnonzero(~kinds)
    return Y[np.ix_(g, g)], Y[np.ix_(g, l)], Y[np.ix_(l, g)], Y[np.ix_(l, l)]


def assemble_state_space(grid):
    grid.validate()
    index = StateIndex(tuple(grid.generator_buses), tuple(grid.load_buses))
    Y = build_ybus(grid)
    Y_GG, Y_GL, Y_LG, Y_LL = partition_ybus(grid, Y)
    gens = {g.bus: g for g in grid.generators}
    loads = {ld.bus: ld for ld in grid.loads}
    n = index.n
    A = np.zeros((n, n))
    wG, PT, a, PG = (index.slice(s) for s in ("w_G", "P_T", "a", "P_G"))
    wL, PL = index.slice("w_L"), index.slice("P_L")

    for k, bus in enumerate(index.gen_buses):
        g = gens[bus]
        iw, ipt, ia, ip = wG.start + k, PT.start + k, a.start + k, PG.start + k
        A[iw, iw] = -g.D / g.J
        A[iw, ipt] = 1.0 / g.J
        A[iw, ip] = -1.0 / g.J
        A[iw, ia] = g.e_T / g.J
        A[ipt, ipt] = -1.0 / g.T_u
        A[ipt, ia] = g.K_t / g.T_u
        A[ia, ia] = -g.r / g.T_g
        A[ia, iw] = -1.0 / g.T_g

    E_load = np.zeros((n, index.n_L))
    for k, bus in enumerate(index.load_buses):
        ld = loads[bus]
        iw, ip = wL.start + k, PL.start + k
        A[iw, iw] = -ld.D / ld.J
        A[iw, ip] = -1.0 / ld.J
        E_load[iw, k] = -1.0 / ld.J

    A[PG, wG] = Y_GG
    A[PG, wL] = Y_GL
    A[PL, wG] = Y_LG
    A[PL, wL] = Y_LL
    A.setflags(write=False)
    E_load.setflags(write=False)
    return GridModel(grid, index, A, E_load, Y)


def default_sensors(grid):
    """All bus frequencies followed by all bus power injections, in state order."""
    index = StateIndex(tuple(grid.generator_buses), tuple(grid.load_buses))
    buses = list(index.gen_buses) + list(index.load_buses)
    return [Sensor(b, "frequency") for b in buses] + [Sensor(b, "power") for b in buses]


def build_measurement_matrix(grid, index, sensors):
    known = {b.id for b in grid.buses}
    C = np.zeros((len(sensors), index.n))
    for row, s in enumerate(sensors):
        if isinstance(s, str):
            s = Sensor.from_label(s)
        if s.quantity not in QUANTITIES:
            raise UnknownQuantity(f"unknown measured quantity {s.quantity!r}; expected one of {QUANTITIES}")
        if s.bus not in known:
            raise UnknownBus(f"sensor references unknown bus {s.bus}")
        C[row, index.position(s.bus, s.quantity)] = 1.0
    return C


# -- grid files ---------------------------------------------------------------

_GEN_COLS = ("bus", "J", "D", "T_u", "T_g", "K_t", "r", "e_T")
_LOAD_COLS = ("bus", "J", "D", "L_nominal")


def parse_grid_text(text, path=None):
    secs = textfmt.read_sections(text, path)
    for required in ("buses", "branches", "generators", "loads"):
        if required not in secs:
            raise ParseError(f"missing section [{required}]", None, path)
    unknown = set(secs) - {"system", "buses", "branches", "generators", "loads"}
    if unknown:
        raise ParseError(f"unknown section(s) {sorted(unknown)}", None, path)

    header = {"name": "grid", "base_mva": 100.0, "f_nominal": 60.0}
    if "system" in secs:
        kv = textfmt.key_values(secs["system"], path, allowed={"name", "base_mva", "f_nominal"})
        for key, (lineno, value) in kv.items():
            header[key] = value if key == "name" else textfmt.to_float(value, lineno, key, path)

    buses = []
    for lineno, row in textfmt.table(secs["buses"], ("id", "kind"), path=path):
        kind = row["kind"].lower()
        if kind not in ("generator", "load"):
            raise ParseError(f"bus kind must be 'generator' or 'load', got {row['kind']!r}", lineno, path)
        buses.append(Bus(textfmt.to_int(row["id"], lineno, "bus id", path), kind))

    branches = []
    for lineno, row in textfmt.table(secs["branches"], ("from", "to", "b"), path=path):
        branches.append(Branch(textfmt.to_int(row["from"], lineno, "from", path),
                               textfmt.to_int(row["to"], lineno, "to", path),
                               textfmt.to_float(row["b"], lineno, "b", path)))

    generators = []
    for lineno, row in textfmt.table(secs["generators"], _GEN_COLS[:-1], optional=("e_T",), path=path):
        vals = {c: textfmt.to_float(row[c], lineno, c, path) for c in _GEN_COLS[1:] if c in row}
        generators.append(GeneratorParams(textfmt.to_int(row["bus"], lineno, "bus", path), **vals))

    loads = []
    for lineno, row in textfmt.table(secs["loads"], _LOAD_COLS[:-1], optional=("L_nominal",), path=path):
        vals = {c: textfmt.to_float(row[c], lineno, c, path) for c in _LOAD_COLS[1:] if c in row}
        loads.append(LoadParams(textfmt.to_int(row["bus"], lineno, "bus", path), **vals))

    spec = GridSpec(buses, branches, generators, loads, name=str(header["name"]),
                    base_mva=header["base_mva"], f_nominal=header["f_nominal"])
    return spec.validate()


def resolve_grid_path(path):
    if str(path) in BUILTIN_GRIDS:
        return BUILTIN_GRIDS[str(path)]
    return Path(path)


def parse_grid_file(path):
    """Read a grid description.  ``path`` may also name a shipped grid (``"rts24"``)."""
    p = resolve_grid_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read grid file: {exc.strerror}", None, p) from None
    return parse_grid_text(text, p)


def serialize_grid(grid):
    parts = [
        textfmt.write_key_values("system", [("name", grid.name), ("base_mva", float(grid.base_mva)),
                                            ("f_nominal", float(grid.f_nominal))]),
        textfmt.write_table("buses", ("id", "kind"), [(b.id, b.kind) for b in grid.buses]),
        textfmt.write_table("branches", ("from", "to", "b"),
                            [(br.from_bus, br.to_bus, float(br.b)) for br in grid.branches]),
        textfmt.write_table("generators", _GEN_COLS,
                            [tuple([g.bus] + [float(getattr(g, c)) for c in _GEN_COLS[1:]])
                             for g in grid.generators]),
        textfmt.write_table("loads", _LOAD_COLS,
                            [tuple([ld.bus] + [float(getattr(ld, c)) for c in _LOAD_COLS[1:]])
                             for ld in grid.loads]),
    ]
    return "\n".join(parts)

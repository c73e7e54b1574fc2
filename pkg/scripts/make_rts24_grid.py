"""Write the shipped IEEE RTS 24-bus grid file.

Topology and branch reactances are those of the single-area IEEE RTS
(38 branches counting parallel circuits separately).  Susceptance is
``1/x`` on a 100 MVA base.

Machine data are not part of the RTS network description, so typical
per-unit values are used, scaled by unit rating where that is physical:

* generators: ``J = 2 H S/S_base`` with ``H = 4 s``; ``D = 1.0 S/S_base``;
  turbine ``T_u = 0.3 s``; governor ``T_g = 0.01 s`` with ``r = 0.05``
  (valve time constant ``T_g / r = 0.2 s``); ``K_t = S/S_base`` so the
  droop gain scales with rating; ``e_T = 0``.
* loads: ``J = 0.2 P_L/S_base`` (motor inertia, floor 0.05) and
  ``D = 1.5 P_L/S_base`` (frequency sensitivity, floor 0.05).

Usage::

    python scripts/make_rts24_grid.py [output path]
"""
import sys
from pathlib import Path

from resilient_se.grid import Branch, Bus, GeneratorParams, GridSpec, LoadParams, serialize_grid

BRANCH_X = [
    (1, 2, 0.0139), (1, 3, 0.2112), (1, 5, 0.0845), (2, 4, 0.1267), (2, 6, 0.1920),
    (3, 9, 0.1190), (3, 24, 0.0839), (4, 9, 0.1037), (5, 10, 0.0883), (6, 10, 0.0605),
    (7, 8, 0.0614), (8, 9, 0.1651), (8, 10, 0.1651), (9, 11, 0.0839), (9, 12, 0.0839),
    (10, 11, 0.0839), (10, 12, 0.0839), (11, 13, 0.0476), (11, 14, 0.0418), (12, 13, 0.0476),
    (12, 23, 0.0966), (13, 23, 0.0865), (14, 16, 0.0389), (15, 16, 0.0173), (15, 21, 0.0490),
    (15, 21, 0.0490), (15, 24, 0.0519), (16, 17, 0.0259), (16, 19, 0.0231), (17, 18, 0.0144),
    (17, 22, 0.1053), (18, 21, 0.0259), (18, 21, 0.0259), (19, 20, 0.0396), (19, 20, 0.0396),
    (20, 23, 0.0216), (20, 23, 0.0216), (21, 22, 0.0678),
]

# installed capacity per generator bus, MW
GEN_MW = {1: 192, 2: 192, 7: 300, 13: 591, 15: 215, 16: 155, 18: 400, 21: 400, 22: 300, 23: 660}

# nominal demand, MW (RTS load buses without generation; 11, 12, 17, 24 are transit buses)
LOAD_MW = {3: 180, 4: 74, 5: 71, 6: 136, 8: 171, 9: 175, 10: 195, 11: 0, 12: 0, 14: 194,
           17: 0, 19: 181, 20: 128, 24: 0}

BASE = 100.0


def rts24():
    buses = [Bus(i, "generator" if i in GEN_MW else "load") for i in range(1, 25)]
    branches = [Branch(f, t, round(1.0 / x, 6)) for f, t, x in BRANCH_X]
    gens = []
    for bus, mw in GEN_MW.items():
        s = mw / BASE
        gens.append(GeneratorParams(bus, J=round(2 * 4.0 * s, 6), D=round(1.0 * s, 6), T_u=0.3, T_g=0.01,
                                    K_t=round(s, 6), r=0.05, e_T=0.0))
    loads = []
    for bus, mw in LOAD_MW.items():
        s = mw / BASE
        loads.append(LoadParams(bus, J=round(max(0.2 * s, 0.05), 6), D=round(max(1.5 * s, 0.05), 6),
                                L_nominal=s))
    return GridSpec(buses, branches, gens, loads, name="rts24", base_mva=BASE, f_nominal=60.0)


def main(argv):
    out = Path(argv[1]) if len(argv) > 1 else Path(__file__).resolve().parents[1] / "src/resilient_se/data/rts24.grid"
    header = ("# IEEE RTS 24-bus system, linearized swing/governor model.\n"
              "# Generated by scripts/make_rts24_grid.py; see that file for parameter choices.\n\n")
    out.write_text(header + serialize_grid(rts24().validate()))
    print(f"wrote {out}")


if __name__ == "__main__":
    main(sys.argv)

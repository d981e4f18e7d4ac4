"""Bundled test systems and their load profiles.

FIX-2   two buses, one line, one generator.
FIX-A   three-bus triangle in which ramping makes a line limit unreachable
        one step after a heavily loaded step.
FIX-6   six-bus meshed network with three generators.
FIX-39  39-bus, 46-line system with ten generators, laid out like the
        classic New England test network.  Reactances follow that layout
        (rounded); costs, limits, ramp rates and loads are invented.

The JSON files under ``ucscreen/data`` are generated by the ``make_*``
functions here; ``write_fixtures`` regenerates them.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from ..model import (
    Bus,
    Generator,
    Line,
    LoadProfile,
    UCInstance,
    parse_case,
    parse_loads,
    serialize_case,
    serialize_loads,
)

NOISE_SEED = 20240


def _gen(i, bus, cost, pmin, pmax, rup, rdn, rsu, rsd, u0, x0):
    return Generator(i, bus, float(cost), float(pmin), float(pmax), float(rup), float(rdn), float(rsu), float(rsd), bool(u0), float(x0))


def make_fix2() -> tuple[UCInstance, LoadProfile]:
    inst = UCInstance(
        buses=(Bus(0, True), Bus(1)),
        lines=(Line(0, 0, 1, 1.0, 50.0),),
        generators=(_gen(0, 0, 10, 0, 100, 100, 100, 100, 100, True, 40),),
        horizon=2,
        name="fix-2",
    )
    return inst, LoadProfile([[0.0, 0.0], [40.0, 40.0]])


def make_fix_a() -> tuple[UCInstance, LoadProfile]:
    """Triangle 0-1-2; line 0 joins the cheap unit's bus to the load bus.

    Susceptances make line 0 carry 6/7 of the bus-0 output and 1/14 of the
    bus-1 output.  Step 1 (load 60) forces both units to 30 MW, so unit 1
    must stay at 15 MW or more in step 2 and line 0 cannot reach its
    30 MW limit, although a single-step view (unit 0 at 35 MW) does.
    """
    inst = UCInstance(
        buses=(Bus(0, True), Bus(1), Bus(2)),
        lines=(Line(0, 0, 2, 11.0, 30.0), Line(1, 0, 1, 2.0, 100.0), Line(2, 1, 2, 22.0, 100.0)),
        generators=(
            _gen(0, 0, 10, 0, 35, 5, 35, 35, 35, True, 25),
            _gen(1, 1, 20, 0, 30, 15, 15, 15, 15, True, 30),
        ),
        horizon=2,
        name="fix-a-triangle",
    )
    return inst, LoadProfile([[0.0, 0.0], [0.0, 0.0], [60.0, 35.0]])


def daily_shape(T: int = 24, noise: float = 0.02, seed: int = NOISE_SEED) -> np.ndarray:
    """Sinusoid-plus-noise daily load shape, peak near 1, trough near 0.6.

    ``s(t) = 0.8 + 0.2 sin(2 pi (t - 10) / 24) + N(0, noise^2)`` for hours
    ``t = 1..T``; the noise comes from PCG64 seeded with ``seed``.
    """
    t = np.arange(1, T + 1)
    rng = np.random.Generator(np.random.PCG64(seed))
    return 0.8 + 0.2 * np.sin(2 * np.pi * (t - 10) / 24) + noise * rng.standard_normal(T)


def make_fix6() -> tuple[UCInstance, LoadProfile]:
    edges = [(0, 1, 5.0), (0, 3, 5.0), (0, 4, 3.3), (1, 2, 4.0), (1, 3, 10.0), (1, 4, 3.3),
             (1, 5, 5.0), (2, 4, 3.8), (2, 5, 10.0), (3, 4, 2.5), (4, 5, 3.3)]
    limits = [40, 60, 40, 30, 60, 30, 50, 30, 60, 20, 20]
    lines = tuple(Line(j, a, b, s, float(f)) for j, ((a, b, s), f) in enumerate(zip(edges, limits)))
    gens = (
        _gen(0, 0, 12, 20, 120, 40, 40, 60, 60, True, 60),
        _gen(1, 1, 18, 15, 100, 30, 30, 50, 50, True, 40),
        _gen(2, 2, 25, 10, 80, 25, 25, 40, 40, False, 0),
    )
    T = 6
    inst = UCInstance(tuple(Bus(i, i == 0) for i in range(6)), lines, gens, T, "fix-6")
    base = np.array([0, 0, 0, 60, 50, 50], dtype=float)
    shape = daily_shape(24)[8 : 8 + T] / daily_shape(24)[8 : 8 + T].max()
    return inst, LoadProfile(np.round(np.outer(base, shape), 3))


# 1-based from/to and reactance of the 46 branches
_B39 = [
    (1, 2, 0.0411), (1, 39, 0.0250), (2, 3, 0.0151), (2, 25, 0.0086), (2, 30, 0.0181), (3, 4, 0.0213),
    (3, 18, 0.0133), (4, 5, 0.0128), (4, 14, 0.0129), (5, 6, 0.0026), (5, 8, 0.0112), (6, 7, 0.0092),
    (6, 11, 0.0082), (6, 31, 0.0250), (7, 8, 0.0046), (8, 9, 0.0363), (9, 39, 0.0250), (10, 11, 0.0043),
    (10, 13, 0.0043), (10, 32, 0.0200), (12, 11, 0.0435), (12, 13, 0.0435), (13, 14, 0.0101), (14, 15, 0.0217),
    (15, 16, 0.0094), (16, 17, 0.0089), (16, 19, 0.0195), (16, 21, 0.0135), (16, 24, 0.0059), (17, 18, 0.0082),
    (17, 27, 0.0173), (19, 20, 0.0138), (19, 33, 0.0142), (20, 34, 0.0180), (21, 22, 0.0140), (22, 23, 0.0096),
    (22, 35, 0.0143), (23, 24, 0.0350), (23, 36, 0.0272), (25, 26, 0.0323), (25, 37, 0.0232), (26, 27, 0.0147),
    (26, 28, 0.0474), (26, 29, 0.0625), (28, 29, 0.0151), (29, 38, 0.0156),
]
# 1-based bus -> peak MW (invented, shaped after the usual load buses)
_L39 = {3: 208, 4: 304, 7: 152, 8: 320, 12: 8, 15: 200, 16: 208, 18: 104, 20: 336, 21: 176,
        23: 160, 24: 192, 25: 144, 26: 88, 27: 176, 28: 128, 29: 184, 31: 8, 39: 560}
# bus, cost, pmax; pmin = 30 % and ramps 40 % / start-up 50 % of pmax
RAMP39 = 0.4
_G39 = [(30, 14, 700), (31, 31, 550), (32, 27, 600), (33, 18, 550), (34, 35, 400),
        (35, 22, 550), (36, 39, 450), (37, 16, 500), (38, 12, 700), (39, 20, 800)]


# MW limits: about 1.5 x the 95th percentile of unconstrained-dispatch flows
# over random half-range load samples; generator feeders at least pmax.
# Wide enough that samples up to r = 0.8 stay feasible.
_LIM39 = [690, 690, 1460, 640, 1090, 840, 530, 450, 210, 210, 350, 380, 390, 770, 240, 670, 670, 380, 210, 840,
          70, 70, 220, 310, 660, 1040, 630, 430, 520, 390, 760, 760, 850, 560, 480, 450, 850, 200, 630, 410,
          780, 940, 450, 460, 570, 1090]


def make_fix39(limits=None) -> tuple[UCInstance, LoadProfile]:
    """FIX-39 with its nominal 24-hour profile.

    Units start in the merit-order dispatch of the step-1 nominal total.
    """
    T = 24
    buses = tuple(Bus(i, i == 0) for i in range(39))
    gens = []
    for i, (bus, cost, pmax) in enumerate(_G39):
        pmin = 0.3 * pmax
        gens.append(_gen(i, bus - 1, cost, pmin, pmax, RAMP39 * pmax, RAMP39 * pmax, 0.5 * pmax, 0.5 * pmax, False, 0.0))
    shape = daily_shape(T)
    base = np.zeros(39)
    for b, p in _L39.items():
        base[b - 1] = p
    loads = np.round(np.outer(base, shape), 2)

    order = np.argsort([g.cost for g in gens])
    need = loads[:, 0].sum()
    x0 = np.zeros(len(gens))
    for i in order:
        if need <= 0:
            break
        g = gens[i]
        x0[i] = min(g.p_max, max(g.p_min, need))
        need -= x0[i]
    gens = [_gen(g.id, g.bus, g.cost, g.p_min, g.p_max, g.ramp_up, g.ramp_down, g.ramp_startup, g.ramp_shutdown,
                 x0[g.id] > 0, round(x0[g.id], 2)) for g in gens]
    limits = _LIM39 if limits is None else limits
    lines = tuple(Line(j, a - 1, b - 1, round(1.0 / x, 3), float(limits[j])) for j, (a, b, x) in enumerate(_B39))
    return UCInstance(buses, lines, tuple(gens), T, "fix-39"), LoadProfile(loads)


FIXTURES = {"fix2": make_fix2, "fix_a": make_fix_a, "fix6": make_fix6, "fix39": make_fix39}


def data_dir() -> Path:
    return Path(str(resources.files("ucscreen") / "data"))


def load_fixture(name: str) -> tuple[UCInstance, LoadProfile]:
    """Read a bundled fixture (``fix2``, ``fix_a``, ``fix6``, ``fix39``)."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    d = data_dir()
    inst = parse_case((d / f"{name}.json").read_text())
    return inst, parse_loads((d / f"{name}_loads.csv").read_text(), inst)


def write_fixtures(target: Path | None = None) -> None:
    target = target or data_dir()
    for name, make in FIXTURES.items():
        inst, loads = make()
        (target / f"{name}.json").write_text(serialize_case(inst))
        (target / f"{name}_loads.csv").write_text(serialize_loads(loads))

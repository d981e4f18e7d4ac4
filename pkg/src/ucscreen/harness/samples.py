"""Load samples and random test instances.

All randomness comes from ``numpy.random.Generator(PCG64(seed))`` so that a
seed reproduces the same numbers on any platform numpy supports.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidRangeError
from ..model import Bus, Generator, Line, LoadProfile, UCInstance, validate


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def gen_samples(nominal: LoadProfile, r: float, count: int, seed: int) -> list[LoadProfile]:
    """Draw ``count`` profiles with every entry uniform in ``[(1-r), (1+r)] * nominal``.

    Entries are drawn in sample-major, bus-major, step-minor order.
    """
    if not (np.isfinite(r) and 0 <= r < 1):
        raise InvalidRangeError(f"range r must satisfy 0 <= r < 1, got {r}")
    if count < 0:
        raise ValueError("count must be non-negative")
    base = nominal.values
    rng = rng_for(seed)
    out = []
    for _ in range(count):
        if r == 0:
            out.append(LoadProfile(base.copy()))
            continue
        z = rng.uniform(1 - r, 1 + r, size=base.shape)
        out.append(LoadProfile(base * z))
    return out


def random_instance(seed: int, nb=None, ng=None, T=None) -> tuple[UCInstance, LoadProfile]:
    """A small random UC instance with a profile that is usually feasible.

    Sizes default to ``nb`` in 3..6, ``ng`` in 2..4 and ``T`` in 2..6.  The
    network is a random spanning tree plus a few extra lines; limits are
    drawn around the flows of a proportional dispatch so that some of them
    bind and some do not.
    """
    rng = rng_for(seed)
    nb = int(rng.integers(3, 7)) if nb is None else nb
    ng = int(rng.integers(2, 5)) if ng is None else ng
    T = int(rng.integers(2, 7)) if T is None else T

    edges = set()
    order = rng.permutation(nb)
    for i in range(1, nb):
        a, b = int(order[i]), int(order[rng.integers(0, i)])
        edges.add((min(a, b), max(a, b)))
    for _ in range(int(rng.integers(0, nb))):
        a, b = (int(v) for v in rng.choice(nb, size=2, replace=False))
        edges.add((min(a, b), max(a, b)))
    edges = sorted(edges)

    gens = []
    for i in range(ng):
        pmax = float(np.round(rng.uniform(40, 120), 1))
        pmin = float(np.round(pmax * rng.uniform(0.0, 0.4), 1))
        rup = float(np.round(pmax * rng.uniform(0.2, 1.0), 1))
        rdn = float(np.round(pmax * rng.uniform(0.2, 1.0), 1))
        rsu = float(np.round(max(pmin, pmax * rng.uniform(0.3, 1.0)), 1))
        rsd = float(np.round(max(pmin, pmax * rng.uniform(0.3, 1.0)), 1))
        on = bool(rng.random() < 0.6)
        x0 = float(np.round(rng.uniform(pmin, max(pmin, min(pmax, rsd))), 1)) if on else 0.0
        gens.append(Generator(i, int(rng.integers(0, nb)), float(rng.integers(5, 40)), pmin, pmax,
                              rup, rdn, rsu, rsd, on, x0))
    cap = sum(g.p_max for g in gens)

    load_buses = rng.choice(nb, size=max(1, nb // 2), replace=False)
    weights = np.zeros(nb)
    weights[load_buses] = rng.uniform(0.5, 1.5, size=load_buses.size)
    weights /= weights.sum()
    level = rng.uniform(0.3, 0.7) * cap
    shape = 1 + 0.25 * np.sin(np.linspace(0, np.pi, T) + rng.uniform(0, np.pi)) * rng.uniform(-1, 1)
    loads = np.round(np.outer(weights, level * shape), 2)

    # limits from the flows of a proportional dispatch at peak load
    suscept = np.round(rng.uniform(1.0, 10.0, size=len(edges)), 2)
    flows = _proportional_flows(nb, edges, suscept, gens, loads[:, int(np.argmax(loads.sum(axis=0)))])
    lines = []
    for j, ((a, b), s) in enumerate(zip(edges, suscept)):
        lim = max(10.0, abs(flows[j]) * rng.uniform(1.0, 1.8))
        lines.append(Line(j, a, b, float(s), float(np.round(lim, 1))))
    inst = UCInstance(tuple(Bus(i, i == 0) for i in range(nb)), tuple(lines), tuple(gens), T, f"random-{seed}")
    validate(inst)
    return inst, LoadProfile(loads)


def _proportional_flows(nb, edges, suscept, gens, load):
    inj = -np.asarray(load, dtype=float)
    cap = sum(g.p_max for g in gens)
    for g in gens:
        inj[g.bus] += load.sum() * g.p_max / cap
    B = np.zeros((nb, nb))
    for (a, b), s in zip(edges, suscept):
        B[a, a] += s
        B[b, b] += s
        B[a, b] -= s
        B[b, a] -= s
    theta = np.zeros(nb)
    theta[1:] = np.linalg.solve(B[1:, 1:], inj[1:])
    return np.array([s * (theta[a] - theta[b]) for (a, b), s in zip(edges, suscept)])

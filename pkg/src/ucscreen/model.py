"""Unit-commitment instance data, case/load parsing and the DC flow model.

Case documents are JSON objects with top-level keys ``buses``, ``lines``,
``generators`` and ``horizon`` (optionally ``name``).  Load profiles are
delimited numeric tables, one row per bus and one column per timestep.

The DC network is written in fundamental-flow coordinates: ``f`` holds the
voltage angles of the ``nb - 1`` non-reference buses, so that

    line flows   = K f                 (from-bus to to-bus positive)
    nodal balance: G x + A f = load    (A f is the net withdrawal)

with ``K = diag(b) C_r`` and ``A = -C^T diag(b) C_r`` where ``C`` is the
line-bus incidence matrix and ``C_r`` drops the reference-bus column.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph, csr_matrix

from .errors import (
    DimensionError,
    DisconnectedNetworkError,
    NegativeLoadError,
    SchemaError,
    SingularNetworkError,
    ValidationError,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Bus:
    id: int
    is_reference: bool = False


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    susceptance: float
    flow_limit: float


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    cost: float
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    ramp_startup: float
    ramp_shutdown: float
    initial_on: bool = False
    initial_output: float = 0.0


@dataclass(frozen=True)
class UCInstance:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    horizon: int
    name: str = ""

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @property
    def reference_bus(self) -> int:
        return next(b.id for b in self.buses if b.is_reference)

    @property
    def p_max(self) -> np.ndarray:
        return np.array([g.p_max for g in self.generators], dtype=float)

    @property
    def p_min(self) -> np.ndarray:
        return np.array([g.p_min for g in self.generators], dtype=float)

    @property
    def flow_limits(self) -> np.ndarray:
        return np.array([ln.flow_limit for ln in self.lines], dtype=float)

    def with_horizon(self, horizon: int) -> "UCInstance":
        return UCInstance(self.buses, self.lines, self.generators, horizon, self.name)

    def fingerprint(self) -> str:
        """Stable hash of the instance contents (independent of ``name``)."""
        doc = instance_to_dict(self)
        doc.pop("name", None)
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class LoadProfile:
    """Nodal loads, shape ``(n_buses, horizon)``, in MW."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionError(f"load table must be 2-D, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    def total(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def upto(self, k: int) -> "LoadProfile":
        return LoadProfile(self.values[:, :k])

    def __eq__(self, other):
        return isinstance(other, LoadProfile) and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FlowModel:
    K: np.ndarray  # (m, nb-1)
    A: np.ndarray  # (nb, nb-1)
    G: np.ndarray  # (nb, ng) generator-to-bus aggregation
    reference_bus: int
    free_buses: tuple[int, ...] = field(default=())

    @property
    def n_flow_coords(self) -> int:
        return self.K.shape[1]

    def line_flows(self, f: np.ndarray) -> np.ndarray:
        return self.K @ f

    def solve_flows(self, withdrawal: np.ndarray) -> np.ndarray:
        """Fundamental flows ``f`` with ``A f = withdrawal`` (must sum to zero)."""
        withdrawal = np.asarray(withdrawal, dtype=float)
        free = list(self.free_buses)
        return np.linalg.solve(self.A[free, :], withdrawal[free])


# --------------------------------------------------------------------------
# parsing / validation

_TOP_REQUIRED = {"buses", "lines", "generators", "horizon"}
_TOP_OPTIONAL = {"name", "schema_version"}
_BUS_FIELDS = ({"id"}, {"reference"})
_LINE_FIELDS = ({"id", "from", "to", "susceptance", "limit"}, set())
_GEN_FIELDS = (
    {"id", "bus", "cost", "pmin", "pmax", "ramp_up", "ramp_down", "ramp_su", "ramp_sd", "u0", "x0"},
    set(),
)


def _check_keys(obj, required, optional, path):
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    missing = required - obj.keys()
    if missing:
        raise SchemaError(f"{path}: missing field(s) {sorted(missing)}")
    extra = obj.keys() - required - optional
    if extra:
        raise SchemaError(f"{path}: unknown field(s) {sorted(extra)}")


def _num(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{path}: expected an integer, got {value!r}")
    return value


def _bool(value, path):
    if isinstance(value, bool):
        return value
    if value in (0, 1):
        return bool(value)
    raise SchemaError(f"{path}: expected a boolean, got {value!r}")


def instance_from_dict(doc: dict) -> UCInstance:
    _check_keys(doc, _TOP_REQUIRED, _TOP_OPTIONAL, "case")
    for key in ("buses", "lines", "generators"):
        if not isinstance(doc[key], list):
            raise SchemaError(f"{key}: expected a list")

    buses = []
    for i, b in enumerate(doc["buses"]):
        _check_keys(b, *_BUS_FIELDS, f"buses[{i}]")
        buses.append(Bus(_int(b["id"], f"buses[{i}].id"), _bool(b.get("reference", False), f"buses[{i}].reference")))
    lines = []
    for i, ln in enumerate(doc["lines"]):
        p = f"lines[{i}]"
        _check_keys(ln, *_LINE_FIELDS, p)
        lines.append(
            Line(
                _int(ln["id"], p + ".id"),
                _int(ln["from"], p + ".from"),
                _int(ln["to"], p + ".to"),
                _num(ln["susceptance"], p + ".susceptance"),
                _num(ln["limit"], p + ".limit"),
            )
        )
    gens = []
    for i, g in enumerate(doc["generators"]):
        p = f"generators[{i}]"
        _check_keys(g, *_GEN_FIELDS, p)
        gens.append(
            Generator(
                id=_int(g["id"], p + ".id"),
                bus=_int(g["bus"], p + ".bus"),
                cost=_num(g["cost"], p + ".cost"),
                p_min=_num(g["pmin"], p + ".pmin"),
                p_max=_num(g["pmax"], p + ".pmax"),
                ramp_up=_num(g["ramp_up"], p + ".ramp_up"),
                ramp_down=_num(g["ramp_down"], p + ".ramp_down"),
                ramp_startup=_num(g["ramp_su"], p + ".ramp_su"),
                ramp_shutdown=_num(g["ramp_sd"], p + ".ramp_sd"),
                initial_on=_bool(g["u0"], p + ".u0"),
                initial_output=_num(g["x0"], p + ".x0"),
            )
        )
    horizon = _int(doc["horizon"], "horizon")

    # default reference bus is 0 when none is flagged
    if buses and not any(b.is_reference for b in buses):
        buses = [Bus(b.id, b.id == 0) for b in buses]
    inst = UCInstance(tuple(buses), tuple(lines), tuple(gens), horizon, str(doc.get("name", "")))
    validate(inst)
    return inst


def parse_case(text: str) -> UCInstance:
    """Parse and validate a JSON case document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"case: not a valid JSON document ({exc})") from exc
    return instance_from_dict(doc)


def load_case(path) -> UCInstance:
    with open(path) as fh:
        return parse_case(fh.read())


def instance_to_dict(instance: UCInstance) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": instance.name,
        "horizon": instance.horizon,
        "buses": [
            {"id": b.id, "reference": True} if b.is_reference else {"id": b.id}
            for b in instance.buses
        ],
        "lines": [
            {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "susceptance": ln.susceptance, "limit": ln.flow_limit}
            for ln in instance.lines
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "cost": g.cost,
                "pmin": g.p_min,
                "pmax": g.p_max,
                "ramp_up": g.ramp_up,
                "ramp_down": g.ramp_down,
                "ramp_su": g.ramp_startup,
                "ramp_sd": g.ramp_shutdown,
                "u0": g.initial_on,
                "x0": g.initial_output,
            }
            for g in instance.generators
        ],
    }
    return doc


def serialize_case(instance: UCInstance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2) + "\n"


def validate(instance: UCInstance) -> None:
    """Raise ValidationError/DisconnectedNetworkError on any invariant violation."""
    nb = instance.n_buses
    if nb == 0:
        raise ValidationError("buses", "at least one bus required")
    for i, b in enumerate(instance.buses):
        if b.id != i:
            raise ValidationError(f"buses[{i}].id", f"bus ids must be 0..{nb - 1} in order, got {b.id}")
    n_ref = sum(b.is_reference for b in instance.buses)
    if n_ref != 1:
        raise ValidationError("buses", f"exactly one reference bus required, got {n_ref}")
    if instance.horizon < 1:
        raise ValidationError("horizon", "horizon must be >= 1")

    for i, ln in enumerate(instance.lines):
        p = f"lines[{i}]"
        if ln.id != i:
            raise ValidationError(p + ".id", f"line ids must be 0..m-1 in order, got {ln.id}")
        for end, bus in (("from", ln.from_bus), ("to", ln.to_bus)):
            if not 0 <= bus < nb:
                raise ValidationError(f"{p}.{end}", f"unknown bus {bus}")
        if ln.from_bus == ln.to_bus:
            raise ValidationError(p + ".to", "line endpoints must differ")
        if not (np.isfinite(ln.susceptance) and ln.susceptance > 0):
            raise ValidationError(p + ".susceptance", "must be finite and > 0")
        if not (np.isfinite(ln.flow_limit) and ln.flow_limit > 0):
            raise ValidationError(p + ".flow_limit", "must be finite and > 0")

    if not instance.generators:
        raise ValidationError("generators", "at least one generator required")
    for i, g in enumerate(instance.generators):
        p = f"generators[{i}]"
        if g.id != i:
            raise ValidationError(p + ".id", f"generator ids must be 0..ng-1 in order, got {g.id}")
        if not 0 <= g.bus < nb:
            raise ValidationError(p + ".bus", f"unknown bus {g.bus}")
        vals = (g.cost, g.p_min, g.p_max, g.ramp_up, g.ramp_down, g.ramp_startup, g.ramp_shutdown, g.initial_output)
        if not all(np.isfinite(v) for v in vals):
            raise ValidationError(p, "all numeric fields must be finite")
        if not 0 <= g.p_min <= g.p_max:
            raise ValidationError(p + ".pmin", "require 0 <= pmin <= pmax")
        for name in ("ramp_up", "ramp_down", "ramp_startup", "ramp_shutdown"):
            if getattr(g, name) < 0:
                raise ValidationError(f"{p}.{name}", "ramp rates must be >= 0")
        if not g.initial_on and g.initial_output != 0:
            raise ValidationError(p + ".x0", "an initially-off unit must have x0 = 0")
        if g.initial_on and not g.p_min <= g.initial_output <= g.p_max:
            raise ValidationError(p + ".x0", "an initially-on unit needs pmin <= x0 <= pmax")

    if nb > 1:
        rows = [ln.from_bus for ln in instance.lines]
        cols = [ln.to_bus for ln in instance.lines]
        adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nb, nb))
        n_comp, _ = csgraph.connected_components(adj, directed=False)
        if n_comp != 1:
            raise DisconnectedNetworkError(f"network has {n_comp} islands")


def parse_loads(text: str, instance: UCInstance) -> LoadProfile:
    """Parse a load table (rows = buses, columns = timesteps).

    Blank lines and lines starting with ``#`` are ignored; a first row with
    non-numeric tokens is treated as a header.  Separators may be commas,
    semicolons, tabs or spaces.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines()):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = [t for t in re.split(r"[,;\s]+", line) if t]
        try:
            rows.append([float(t) for t in tokens])
        except ValueError:
            if rows:
                raise DimensionError(f"non-numeric entry on line {lineno + 1}") from None
            continue  # header
    if not rows:
        raise DimensionError("empty load table")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DimensionError(f"ragged load table, row lengths {sorted(widths)}")
    values = np.array(rows, dtype=float)
    check_loads(values, instance)
    return LoadProfile(values)


def check_loads(values, instance: UCInstance, horizon: int | None = None) -> None:
    values = np.asarray(values)
    expected = (instance.n_buses, instance.horizon if horizon is None else horizon)
    if values.shape != expected:
        raise DimensionError(f"load table has shape {values.shape}, expected {expected}")
    if not np.all(np.isfinite(values)):
        raise DimensionError("load table contains non-finite entries")
    bad = np.argwhere(values < 0)
    if len(bad):
        i, t = bad[0]
        raise NegativeLoadError(f"loads[{i}][{t}]", f"negative load {values[i, t]}")


def load_loads(path, instance: UCInstance) -> LoadProfile:
    with open(path) as fh:
        return parse_loads(fh.read(), instance)


def serialize_loads(loads: LoadProfile) -> str:
    nb, T = loads.values.shape
    out = ["# bus," + ",".join(f"t{t + 1}" for t in range(T))]
    for row in loads.values:
        out.append(",".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# DC flow model


def incidence_matrix(instance: UCInstance) -> np.ndarray:
    C = np.zeros((instance.n_lines, instance.n_buses))
    for ln in instance.lines:
        C[ln.id, ln.from_bus] = 1.0
        C[ln.id, ln.to_bus] = -1.0
    return C


def generator_matrix(instance: UCInstance) -> np.ndarray:
    G = np.zeros((instance.n_buses, instance.n_generators))
    for g in instance.generators:
        G[g.bus, g.id] = 1.0
    return G


def build_flow_model(instance: UCInstance, rcond: float = 1e-10) -> FlowModel:
    validate(instance)
    ref = instance.reference_bus
    free = tuple(i for i in range(instance.n_buses) if i != ref)
    C = incidence_matrix(instance)
    b = np.array([ln.susceptance for ln in instance.lines])
    C_r = C[:, free]
    K = b[:, None] * C_r
    A = -(C.T @ K)
    if free:
        reduced = A[list(free), :]
        s = np.linalg.svd(reduced, compute_uv=False)
        if s[-1] <= rcond * s[0]:
            raise SingularNetworkError(f"reduced susceptance matrix is singular (cond {s[0] / max(s[-1], 1e-300):.3g})")
    # exact zero column sums: fold rounding residue into the reference row
    A[ref, :] = -(A.sum(axis=0) - A[ref, :])
    return FlowModel(K=K, A=A, G=generator_matrix(instance), reference_bus=ref, free_buses=free)


@dataclass(frozen=True, eq=False)
class CommitmentSchedule:
    """Binary on/off matrix ``(n_generators, horizon)``.

    ``steps`` lists the 1-based timesteps on which the schedule is defined;
    ``None`` means every timestep.  ``provenance`` is ``SOLVED``,
    ``PREDICTED`` or ``PARTIAL``.
    """

    values: np.ndarray
    provenance: str = "SOLVED"
    steps: tuple[int, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise DimensionError("schedule must be 2-D (generators x timesteps)")
        if not np.all((values == 0) | (values == 1)):
            raise ValidationError("schedule", "entries must be 0 or 1")
        values = values.astype(np.int8)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.steps is not None:
            steps = tuple(sorted(int(t) for t in self.steps))
            if any(not 1 <= t <= values.shape[1] for t in steps):
                raise ValidationError("schedule.steps", "timesteps must lie in 1..T")
            object.__setattr__(self, "steps", steps)

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @property
    def defined_steps(self) -> tuple[int, ...]:
        return tuple(range(1, self.horizon + 1)) if self.steps is None else self.steps

    def at(self, t: int) -> np.ndarray:
        """Column for 1-based timestep ``t``."""
        return self.values[:, t - 1]

    def __eq__(self, other):
        return (
            isinstance(other, CommitmentSchedule)
            and np.array_equal(self.values, other.values)
            and self.defined_steps == other.defined_steps
        )

    __hash__ = None


def schedule_to_dict(schedule: CommitmentSchedule) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "provenance": schedule.provenance,
        "steps": list(schedule.defined_steps),
        "schedule": schedule.values.astype(int).tolist(),
    }


def schedule_from_dict(doc: dict) -> CommitmentSchedule:
    if not isinstance(doc, dict) or "schedule" not in doc:
        raise SchemaError("schedule document needs a 'schedule' matrix")
    values = np.asarray(doc["schedule"])
    steps = doc.get("steps")
    if steps is not None and len(steps) == values.shape[-1] and list(steps) == list(range(1, values.shape[-1] + 1)):
        steps = None
    return CommitmentSchedule(values, provenance=doc.get("provenance", "SOLVED"), steps=steps)


def load_schedule(path) -> CommitmentSchedule:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schedule: not a valid JSON document ({exc})") from exc
    return schedule_from_dict(doc)

"""End-to-end experiments: screen samples, solve full and reduced problems, report."""

from __future__ import annotations

import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidRangeError, TooLargeError, UCScreenError, ValidationError
from ..formulation import build_uc, load_box
from ..milp import MIPOptions, MIPStatus, extract_schedule, solve_mip
from ..model import SCHEMA_VERSION, LoadProfile, load_case, load_loads
from ..predictor import TrainingSet, partial_schedule, predict, train
from ..screening import ScreeningMethod, reduce, screen, solve_reduced
from .fixtures import FIXTURES, load_fixture
from .oracles import certify
from .samples import gen_samples

log = logging.getLogger(__name__)

METHODS = ("single", "multi", "truth", "partial", "region")
FEAS_TOL = 1e-5  # MW; a reduced solution within this of every original row counts as feasible


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run.

    ``instance`` is a bundled fixture name or a case-file path and
    ``nominal`` a load-table path (default: the fixture's own profile).
    ``samples`` profiles are drawn for every ``r`` in ``r_values``.  The
    ``partial`` method trains a KNN model on ``train_samples`` solved
    profiles drawn at ``train_r``.
    """

    instance: str
    nominal: str | None = None
    r_values: tuple = (0.5,)
    samples: int = 10
    methods: tuple = ("single", "multi")
    seed: int = 0
    oracle: bool = False
    knn_k: int = 5
    interval: int = 4
    train_samples: int = 100
    train_r: float = 0.5
    mip_backend: str = "highs"
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "r_values", tuple(float(r) for r in self.r_values))
        object.__setattr__(self, "methods", tuple(self.methods))
        for r in self.r_values + (self.train_r,):
            if not (np.isfinite(r) and 0 <= r < 1):
                raise InvalidRangeError(f"range r must satisfy 0 <= r < 1, got {r}")
        if int(self.samples) != self.samples or self.samples < 1:
            raise ValidationError("samples", "sample count must be a positive integer")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValidationError("methods", f"unknown methods {sorted(unknown)}; choose from {list(METHODS)}")
        if self.mip_backend not in ("native", "highs"):
            raise ValidationError("mip_backend", "expected 'native' or 'highs'")
        if self.jobs < 1:
            raise ValidationError("jobs", "jobs must be at least 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        allowed = set(cls.__dataclass_fields__)
        extra = set(doc) - allowed - {"schema_version"}
        if extra:
            raise ValidationError("config", f"unknown keys {sorted(extra)}")
        if "instance" not in doc:
            raise ValidationError("config.instance", "missing")
        return cls(**{k: v for k, v in doc.items() if k in allowed})

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError("config", f"not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValidationError("config", "expected a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["r_values"] = list(self.r_values)
        doc["methods"] = list(self.methods)
        return doc


def derive_seed(seed: int, *path: int) -> int:
    """Independent integer seed for a sub-stream (``numpy.random.SeedSequence``)."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def load_problem(config: ExperimentConfig):
    if config.instance in FIXTURES:
        inst, nominal = load_fixture(config.instance)
    else:
        inst = load_case(config.instance)
        nominal = None
    if config.nominal is not None:
        nominal = load_loads(config.nominal, inst)
    if nominal is None:
        raise ValidationError("config.nominal", "a load profile is required for a case file")
    return inst, nominal


# --------------------------------------------------------------------------
# per-sample work


def _timed_mip(mip, options):
    t0 = time.perf_counter()
    sol = solve_mip(mip, options)
    return sol, 1000 * (time.perf_counter() - t0)


def _mip_record(sol, ms):
    ok = sol.status is MIPStatus.OPTIMAL
    return {"status": sol.status.value, "objective": float(sol.objective_value) if ok else None, "ms": ms}


def _keys(targets):
    return sorted([t.timestep, t.line, t.sense.value] for t in targets)


def _certify_all(inst, loads, targets, box=None):
    checked, bad = 0, []
    for t in targets:
        ok, excess = certify(inst, loads, t, box)
        checked += 1
        if not ok:
            bad.append([t.timestep, t.line, t.sense.value, float(excess)])
    return checked, bad


def _run_sample(inst, loads: LoadProfile, r, index, config: ExperimentConfig, model=None, region_kept=None):
    options = MIPOptions(backend=config.mip_backend)
    rec = {"r": r, "index": index, "methods": {}, "certified": 0, "cert_violations": []}
    mip, _ = build_uc(inst, loads)
    full, full_ms = _timed_mip(mip, options)
    rec["full"] = _mip_record(full, full_ms)
    schedule = extract_schedule(full, inst) if full.optimal else None
    methods = []
    for name in config.methods:
        if name == "single":
            methods.append(("SINGLE", ScreeningMethod.single()))
        elif name == "multi":
            methods.append(("MULTI_AWARE", ScreeningMethod.multi_aware()))
        elif name == "truth" and schedule is not None:
            methods.append(("MULTI_TRUTH", ScreeningMethod.truth(schedule)))
        elif name == "partial" and model is not None:
            guess = predict(model, loads)
            part = partial_schedule(guess, config.interval)
            rec["prediction_error"] = (
                float(np.mean(guess.values != schedule.values)) if schedule is not None else None
            )
            methods.append(("MULTI_PARTIAL", ScreeningMethod.partial(part)))
    for label, method in methods:
        res = screen(inst, loads, method)
        red_sol, red_ms = _timed_mip(build_uc(inst, loads, kept_targets=reduce(inst, res).kept_targets)[0], options)
        m = {
            "remaining": res.remaining,
            "screen_ms": res.stats["wall_ms"],
            "eliminated": _keys(res.eliminated),
            # rows kept because their screening LP was empty or failed
            "unscreened": sum(1 for v in res.verdicts.values() if v.diagnostic),
            "reduced": _mip_record(red_sol, red_ms),
        }
        if red_sol.optimal:
            m["violation"] = float(mip.base.max_violation(red_sol.primal))
            m["feasible"] = m["violation"] <= FEAS_TOL
            if full.optimal:
                m["gap"] = abs(red_sol.objective_value - full.objective_value) / max(1.0, abs(full.objective_value))
        else:
            m["feasible"] = False
        rec["methods"][label] = m
        if config.oracle and not method.uses_prediction and label != "MULTI_TRUTH":
            try:
                n, bad = _certify_all(inst, loads, res.eliminated)
                rec["certified"] += n
                rec["cert_violations"] += bad
            except TooLargeError as exc:
                rec["cert_skipped"] = str(exc)
    return rec


def _run_sample_safe(args):
    inst, loads, r, index, config, model = args
    try:
        return _run_sample(inst, loads, r, index, config, model)
    except (UCScreenError, ValueError, RuntimeError) as exc:
        log.warning("sample r=%g #%d failed: %s", r, index, exc)
        return {"r": r, "index": index, "error": f"{type(exc).__name__}: {exc}"}


def train_knn(inst, nominal, config: ExperimentConfig):
    """Solve ``train_samples`` profiles and fit the KNN model on the feasible ones."""
    options = MIPOptions(backend=config.mip_backend)
    pairs = []
    for loads in gen_samples(nominal, config.train_r, config.train_samples, derive_seed(config.seed, 1000)):
        sol = solve_mip(build_uc(inst, loads)[0], options)
        if sol.optimal:
            pairs.append((loads, extract_schedule(sol, inst)))
    return train(TrainingSet.from_pairs(pairs, inst), config.knn_k), len(pairs)


# --------------------------------------------------------------------------
# report


@dataclass
class MetricsReport:
    config: dict
    instance: str
    n_lines: int
    horizon: int
    samples: list = field(default_factory=list)
    region: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    wall_s: float = 0.0

    @property
    def total_targets(self) -> int:
        return 2 * self.n_lines * self.horizon

    def ok_samples(self, r=None):
        return [s for s in self.samples if "error" not in s and (r is None or s["r"] == r)]

    def method_labels(self) -> list[str]:
        labels = set()
        for s in self.ok_samples():
            labels |= set(s["methods"])
        return sorted(labels)

    def summary(self, label: str, r=None) -> dict:
        """Aggregate metrics of one method over the samples at ``r`` (all if None)."""
        recs = [s for s in self.ok_samples(r) if label in s["methods"]]
        if not recs:
            return {}
        rem = np.array([s["methods"][label]["remaining"] for s in recs], dtype=float)
        full_ms = np.array([s["full"]["ms"] for s in recs])
        red_ms = np.array([s["methods"][label]["reduced"]["ms"] for s in recs])
        gaps = [s["methods"][label]["gap"] for s in recs if "gap" in s["methods"][label]]
        feas = [bool(s["methods"][label]["feasible"]) for s in recs if s["full"]["status"] == "OPTIMAL"]
        return {
            "samples": len(recs),
            "mean_remaining": float(rem.mean()),
            "min_remaining": int(rem.min()),
            "max_remaining": int(rem.max()),
            "screening_rate": float(1.0 - rem.mean() / self.total_targets),
            "mean_screen_ms": float(np.mean([s["methods"][label]["screen_ms"] for s in recs])),
            "mean_full_ms": float(full_ms.mean()),
            "mean_reduced_ms": float(red_ms.mean()),
            "speedup": float(full_ms.mean() / red_ms.mean()) if red_ms.mean() > 0 else None,
            "feasibility_rate": float(np.mean(feas)) if feas else None,
            "mean_gap": float(np.mean(gaps)) if gaps else None,
            "max_gap": float(np.max(gaps)) if gaps else None,
        }

    def inclusion(self, inner: str, outer: str, r=None) -> dict:
        """How many samples have ``inner``'s eliminated set inside ``outer``'s."""
        recs = [s for s in self.ok_samples(r) if inner in s["methods"] and outer in s["methods"]]
        holds = 0
        for s in recs:
            a = {tuple(k) for k in s["methods"][inner]["eliminated"]}
            b = {tuple(k) for k in s["methods"][outer]["eliminated"]}
            holds += a <= b
        return {"samples": len(recs), "holds": holds}

    def region_soundness(self, r) -> dict:
        """Samples at ``r`` whose multi-step eliminated set contains the region's."""
        reg = self.region.get(_rkey(r))
        if reg is None:
            return {}
        elim = {tuple(k) for k in reg["eliminated"]}
        recs = [s for s in self.ok_samples(r) if "MULTI_AWARE" in s["methods"]]
        holds = sum(elim <= {tuple(k) for k in s["methods"]["MULTI_AWARE"]["eliminated"]} for s in recs)
        return {"samples": len(recs), "holds": holds}

    def certification(self) -> dict:
        recs = self.ok_samples()
        out = {
            "checked": sum(s["certified"] for s in recs) + sum(v.get("certified", 0) for v in self.region.values()),
            "violations": [v for s in recs for v in s["cert_violations"]]
            + [v for reg in self.region.values() for v in reg.get("cert_violations", [])],
        }
        return out

    def to_dict(self) -> dict:
        rs = sorted({s["r"] for s in self.samples})
        agg = {label: {_rkey(r): self.summary(label, r) for r in rs} for label in self.method_labels()}
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "instance": self.instance,
            "n_lines": self.n_lines,
            "horizon": self.horizon,
            "total_targets": self.total_targets,
            "summary": agg,
            "inclusion_single_in_multi": {_rkey(r): self.inclusion("SINGLE", "MULTI_AWARE", r) for r in rs},
            "region": {k: {kk: vv for kk, vv in v.items() if kk != "eliminated"} for k, v in sorted(self.region.items())},
            "region_soundness": {_rkey(r): self.region_soundness(r) for r in rs if _rkey(r) in self.region},
            "certification": self.certification(),
            "training": self.training,
            "failures": [s for s in self.samples if "error" in s],
            "samples": [{k: v for k, v in s.items()} for s in self.samples],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def table(self) -> str:
        out = io.StringIO()
        out.write(f"instance {self.instance}: {self.n_lines} lines x {self.horizon} steps, "
                  f"{self.total_targets} line-limit rows\n")
        head = f"{'method':<14} {'r':>5} {'n':>4} {'remaining':>10} {'rate':>7} {'full ms':>9} {'red ms':>9} {'feasible':>9} {'gap':>9}"
        out.write(head + "\n")
        rs = sorted({s["r"] for s in self.samples})
        for label in self.method_labels():
            for r in rs:
                m = self.summary(label, r)
                if not m:
                    continue
                feas = "-" if m["feasibility_rate"] is None else f"{m['feasibility_rate']:.2%}"
                gap = "-" if m["mean_gap"] is None else f"{m['mean_gap']:.3%}"
                out.write(f"{label:<14} {r:>5.2f} {m['samples']:>4} {m['mean_remaining']:>10.1f} "
                          f"{m['screening_rate']:>7.2%} {m['mean_full_ms']:>9.1f} {m['mean_reduced_ms']:>9.1f} "
                          f"{feas:>9} {gap:>9}\n")
        for key, reg in sorted(self.region.items()):
            out.write(f"{'REGION':<14} {float(key):>5.2f} {'':>4} {reg['remaining']:>10d} "
                      f"{1 - reg['remaining'] / self.total_targets:>7.2%}\n")
        for r in rs:
            inc = self.inclusion("SINGLE", "MULTI_AWARE", r)
            if inc["samples"]:
                out.write(f"single-step eliminations within multi-step at r={r:g}: {inc['holds']}/{inc['samples']}\n")
        cert = self.certification()
        if cert["checked"]:
            out.write(f"oracle certification: {cert['checked']} checked, {len(cert['violations'])} violations\n")
        fails = [s for s in self.samples if "error" in s]
        if fails:
            out.write(f"failed samples: {len(fails)}\n")
        return out.getvalue()


def _rkey(r) -> str:
    return f"{float(r):g}"


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """Run every configured method on every sample and collect the metrics.

    Samples at ``r_values[i]`` come from seed ``derive_seed(seed, i)``.  A
    failing sample is recorded with its error and does not stop the run.
    """
    t0 = time.perf_counter()
    inst, nominal = load_problem(config)
    report = MetricsReport(config.to_dict(), inst.name or inst.fingerprint(), inst.n_lines, inst.horizon)

    model = None
    if "partial" in config.methods:
        model, n_train = train_knn(inst, nominal, config)
        report.training = {"samples": config.train_samples, "feasible": n_train, "k": config.knn_k,
                           "interval": config.interval, "fingerprint": model.fingerprint()}

    if "region" in config.methods:
        for r in config.r_values:
            res = screen(inst, nominal, ScreeningMethod.region(r))
            reg = {"remaining": res.remaining, "screen_ms": res.stats["wall_ms"], "eliminated": _keys(res.eliminated)}
            if config.oracle:
                try:
                    n, bad = _certify_all(inst, nominal, res.eliminated, load_box(nominal, r))
                    reg["certified"], reg["cert_violations"] = n, bad
                except TooLargeError as exc:
                    reg["cert_skipped"] = str(exc)
            report.region[_rkey(r)] = reg

    sample_methods = [m for m in config.methods if m != "region"]
    if sample_methods or "region" in config.methods:
        sub = ExperimentConfig(**{**config.to_dict(), "methods": tuple(sample_methods) or ("multi",)})
        jobs = []
        for i, r in enumerate(config.r_values):
            for j, loads in enumerate(gen_samples(nominal, r, config.samples, derive_seed(config.seed, i))):
                jobs.append((inst, loads, r, j, sub, model))
        if config.jobs > 1:
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                records = list(pool.map(_run_sample_safe, jobs))
        else:
            records = [_run_sample_safe(a) for a in jobs]
        report.samples = sorted(records, key=lambda s: (s["r"], s["index"]))
    report.wall_s = time.perf_counter() - t0
    return report

"""Command-line interface.

Exit codes: 0 success, 1 domain failure (an infeasible problem, a failed
check), 2 usage error (bad flags, unreadable or invalid input files).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import UCScreenError
from .formulation import build_uc
from .harness.experiment import ExperimentConfig, run_experiment
from .harness.fixtures import FIXTURES, load_fixture
from .harness.samples import gen_samples
from .milp import MIPOptions, extract_schedule, solve_mip
from .model import (
    SCHEMA_VERSION,
    build_flow_model,
    load_case,
    load_loads,
    load_schedule,
    schedule_to_dict,
    serialize_loads,
)
from .predictor import TrainingSet, load_model, partial_schedule, predict, save_model, train
from .screening import ScreeningMethod, reduce, result_from_dict, screen

log = logging.getLogger("ucscreen")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or unusable input files (exit code 2)."""


class DomainFailure(Exception):
    """The inputs are valid but the requested result does not exist (exit code 1)."""


# --------------------------------------------------------------------------
# input helpers


def _read_case(spec: str):
    """A case file path, or the name of a bundled fixture."""
    if not Path(spec).exists() and spec in FIXTURES:
        return load_fixture(spec)[0]
    try:
        return load_case(spec)
    except FileNotFoundError as exc:
        raise UsageError(f"case file not found: {spec}") from exc


def _read_loads(spec: str | None, case_spec: str, inst):
    if spec is None:
        if not Path(case_spec).exists() and case_spec in FIXTURES:
            return load_fixture(case_spec)[1]
        raise UsageError("a load table is required")
    try:
        return load_loads(spec, inst)
    except FileNotFoundError as exc:
        raise UsageError(f"load file not found: {spec}") from exc


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _mip_options(args) -> MIPOptions:
    return MIPOptions(backend=args.backend)


def _infeasibility_hint(inst, loads) -> str:
    cap = inst.p_max.sum()
    total = loads.values.sum(axis=0)
    for t, d in enumerate(total, start=1):
        if d > cap:
            return f"nodal balance cannot hold at step {t}: total load {d:g} MW exceeds capacity {cap:g} MW"
    return "no commitment satisfies the nodal balance together with the generation, ramp and line limits"


# --------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    inst = _read_case(args.case)
    loads = _read_loads(args.loads, args.case, inst)
    kept = None
    if args.reduced_from:
        doc = json.loads(Path(args.reduced_from).read_text())
        result = result_from_dict(doc)
        kept = reduce(inst, result).kept_targets
    mip, layout = build_uc(inst, loads, kept_targets=kept)
    sol = solve_mip(mip, _mip_options(args))
    if not sol.optimal:
        raise DomainFailure(f"UC problem {sol.status.value.lower()}: {_infeasibility_hint(inst, loads)}")
    fm = build_flow_model(inst)
    T = inst.horizon
    x = sol.primal[layout.x_block].reshape(inst.n_generators, T)
    f = sol.primal[layout.f_block].reshape(fm.n_flow_coords, T)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "instance": inst.fingerprint(),
        "status": sol.status.value,
        "objective": float(sol.objective_value),
        "gap": float(sol.gap),
        "reduced": kept is not None,
        "line_rows": (len(kept) if kept is not None else 2 * inst.n_lines * T),
        "schedule": extract_schedule(sol, inst, layout).values.astype(int).tolist(),
        "dispatch": np.round(x, 9).tolist(),
        "flows": np.round(fm.K @ f, 9).tolist(),
    }
    text = _dump(doc)
    if args.out:
        _write(Path(args.out), text)
    print(f"objective {sol.objective_value:.6f}")
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def _method_from_args(args, inst) -> ScreeningMethod:
    m = args.method
    if m == "region":
        if args.range is None:
            raise UsageError("--method region needs --range")
        return ScreeningMethod.region(args.range)
    if args.range is not None:
        raise UsageError("--range is only valid with --method region")
    if m in ("truth", "partial"):
        if not args.schedule:
            raise UsageError(f"--method {m} needs --schedule")
        sched = load_schedule(args.schedule)
        if m == "truth":
            return ScreeningMethod.truth(sched)
        if args.interval is not None:
            sched = partial_schedule(sched, args.interval)
        return ScreeningMethod.partial(sched)
    if args.schedule or args.interval is not None:
        raise UsageError(f"--schedule/--interval are not used by --method {m}")
    return ScreeningMethod.single() if m == "single" else ScreeningMethod.multi_aware()


def cmd_screen(args) -> int:
    inst = _read_case(args.case)
    method = _method_from_args(args, inst)
    if args.method == "region":
        if args.loads:
            raise UsageError("--method region takes --nominal, not a sample load table")
        loads = _read_loads(args.nominal, args.case, inst)
    else:
        if args.nominal:
            raise UsageError("--nominal is only valid with --method region")
        loads = _read_loads(args.loads, args.case, inst)
    result = screen(inst, loads, method)
    if args.no_timings:
        for t, v in list(result.verdicts.items()):
            result.verdicts[t] = type(v)(v.target, v.verdict, v.s_star, v.bound, v.margin, 0.0, v.diagnostic)
    prefix = Path(args.out)
    _write(prefix.with_name(prefix.name + ".verdicts.txt"), result.table())
    _write(prefix.with_name(prefix.name + ".verdicts.json"), result.to_json())
    print(f"method {method.label()}: remaining {result.remaining}, eliminated {result.total - result.remaining} "
          f"of {result.total}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        config = ExperimentConfig.from_file(args.config)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {args.config}") from exc
    except (UCScreenError, TypeError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if overrides:
        config = ExperimentConfig(**{**config.to_dict(), **overrides})
    report = run_experiment(config)
    out = Path(args.out_dir)
    _write(out / "report.json", report.to_json())
    _write(out / "report.txt", report.table())
    sys.stdout.write(report.table())
    failed = report.certification()["violations"] or any(
        inc["holds"] < inc["samples"] for inc in report.to_dict()["inclusion_single_in_multi"].values()
    )
    return EXIT_DOMAIN if failed else EXIT_OK


def cmd_gen_samples(args) -> int:
    inst = _read_case(args.case)
    nominal = _read_loads(args.nominal, args.case, inst)
    out = Path(args.out_dir)
    samples = gen_samples(nominal, args.range, args.count, args.seed if args.seed is not None else 0)
    width = max(3, len(str(args.count - 1)))
    for i, s in enumerate(samples):
        _write(out / f"sample_{i:0{width}d}.csv", serialize_loads(s))
    print(f"wrote {len(samples)} samples to {out}")
    return EXIT_OK


def cmd_train_knn(args) -> int:
    inst = _read_case(args.case)
    files = sorted(Path(args.samples).glob("*.csv")) if Path(args.samples).is_dir() else []
    if not files:
        raise UsageError(f"no .csv load tables in {args.samples}")
    pairs, skipped = [], 0
    for path in files:
        loads = load_loads(path, inst)
        sol = solve_mip(build_uc(inst, loads)[0], _mip_options(args))
        if sol.optimal:
            pairs.append((loads, extract_schedule(sol, inst)))
        else:
            skipped += 1
    model = train(TrainingSet.from_pairs(pairs, inst), args.k)
    _write(Path(args.out), "")
    save_model(model, args.out)
    print(f"trained K={args.k} on {len(pairs)} samples ({skipped} infeasible skipped); fingerprint {model.fingerprint()}")
    return EXIT_OK


def cmd_predict(args) -> int:
    inst = _read_case(args.case)
    loads = _read_loads(args.loads, args.case, inst)
    try:
        model = load_model(args.model)
    except FileNotFoundError as exc:
        raise UsageError(f"model file not found: {args.model}") from exc
    if model.instance_fingerprint != inst.fingerprint():
        raise UsageError("model was trained on a different instance")
    sched = predict(model, loads)
    if args.interval is not None:
        sched = partial_schedule(sched, args.interval)
    text = _dump(schedule_to_dict(sched))
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ucscreen", description="Line-limit screening for multi-interval unit commitment.")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   help="logging verbosity (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, loads=True):
        sp.add_argument("case", help="case file (JSON) or bundled fixture name: " + ", ".join(FIXTURES))
        if loads:
            sp.add_argument("loads", nargs="?", help="load table (default: the fixture's profile)")

    sp = sub.add_parser("solve", help="solve the UC problem (full, or reduced by a verdict file)")
    common(sp)
    sp.add_argument("--reduced-from", metavar="VERDICTS", help="verdict document from 'screen'; keep only its KEPT rows")
    sp.add_argument("--backend", choices=["native", "highs"], default="native", help="MILP engine (default native)")
    sp.add_argument("--out", help="write the solution document here instead of stdout")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("screen", help="screen every line-limit row at every step")
    common(sp)
    sp.add_argument("--method", required=True, choices=["single", "multi", "truth", "partial", "region"],
                    help="screening model")
    sp.add_argument("--nominal", help="nominal load table for --method region")
    sp.add_argument("--range", type=float, help="load range r in [0, 1) for --method region")
    sp.add_argument("--schedule", help="commitment schedule document for truth/partial")
    sp.add_argument("--interval", type=int, help="keep the partial schedule only on steps interval, 2*interval, ...")
    sp.add_argument("--out", default="screen", help="output prefix (writes PREFIX.verdicts.txt/.json)")
    sp.add_argument("--no-timings", action="store_true", help="write zero solve times for byte-stable output")
    sp.set_defaults(func=cmd_screen)

    sp = sub.add_parser("bench", help="run an experiment configuration and write the metrics report")
    sp.add_argument("config", help="experiment configuration (JSON)")
    sp.add_argument("--out-dir", default="bench-out", help="directory for report.json and report.txt")
    sp.add_argument("--seed", type=int, help="override the configuration seed")
    sp.add_argument("--jobs", type=int, help="worker processes (overrides the configuration)")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("gen-samples", help="draw load samples uniformly around a nominal profile")
    common(sp, loads=False)
    sp.add_argument("nominal", nargs="?", help="nominal load table (default: the fixture's profile)")
    sp.add_argument("--range", type=float, required=True, help="relative half-width r in [0, 1)")
    sp.add_argument("--count", type=int, required=True, help="number of samples")
    sp.add_argument("--seed", type=int, default=0, help="PCG64 seed (default 0)")
    sp.add_argument("--out-dir", required=True, help="directory for sample_NNN.csv files")
    sp.set_defaults(func=cmd_gen_samples)

    sp = sub.add_parser("train-knn", help="solve sample profiles and fit the KNN commitment predictor")
    common(sp, loads=False)
    sp.add_argument("samples", help="directory of .csv load tables")
    sp.add_argument("--k", type=int, default=5, help="neighbour count (default 5)")
    sp.add_argument("--backend", choices=["native", "highs"], default="highs", help="MILP engine (default highs)")
    sp.add_argument("--out", required=True, help="model document to write")
    sp.set_defaults(func=cmd_train_knn)

    sp = sub.add_parser("predict", help="predict a commitment schedule with a trained model")
    sp.add_argument("model", help="model document from 'train-knn'")
    common(sp)
    sp.add_argument("--interval", type=int, help="emit only steps interval, 2*interval, ...")
    sp.add_argument("--out", help="write the schedule document here instead of stdout")
    sp.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ucscreen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainFailure as exc:
        print(f"ucscreen: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except UCScreenError as exc:
        # invalid input data is a usage problem; anything else is a domain failure
        from .errors import DimensionError, InvalidRangeError, SchemaError, ValidationError

        code = EXIT_USAGE if isinstance(exc, (SchemaError, ValidationError, DimensionError, InvalidRangeError)) else EXIT_DOMAIN
        print(f"ucscreen: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())

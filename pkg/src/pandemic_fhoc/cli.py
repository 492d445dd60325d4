"""Command-line entry points: ingest, train, forecast, prescribe, serve.

Every run writes a manifest (command, config, seed, input hashes, output
paths, wall time) next to its outputs, and all file writes are atomic
(temp file + rename). Exit codes: 0 success, 1 partial failure (some
regions failed), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from pandemic_fhoc import data_io
from pandemic_fhoc.contact import N_NPI, U_MAX
from pandemic_fhoc.estimation import forecast as run_forecast
from pandemic_fhoc.fhoc import (
    ControlProblem,
    pareto_sweep,
    random_schedule,
)
from pandemic_fhoc.model import CompartmentState
from pandemic_fhoc.training import RegionModel, TrainingHyper, train_region

SEED_ENV = "PANDEMIC_FHOC_SEED"

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, args, inputs: list, outputs: list, t0: float):
    doc = {
        "command": command,
        "config": getattr(args, "config", None),
        "seed": getattr(args, "seed_resolved", None),
        "input_hashes": {str(p): sha256_file(p) for p in inputs if Path(p).exists()},
        "output_paths": [str(p) for p in outputs],
        "wall_time_s": round(time.time() - t0, 3),
    }
    atomic_write(out_dir / "manifest.json", json.dumps(doc, indent=2, sort_keys=True))


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def resolve_seed(args, config: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if "seed" in config:
        return int(config["seed"])
    return int(os.environ.get(SEED_ENV, "0"))


def safe_name(region_id: str) -> str:
    return region_id.replace(" / ", "__").replace("/", "_").replace(" ", "_")


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args) -> int:
    t0 = time.time()
    out_dir = Path(args.out)
    try:
        regions, stats = data_io.ingest_oxcgrt(args.oxcgrt)
    except (data_io.IngestError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    excluded = []
    if args.population:
        try:
            pops, rejected = data_io.ingest_population(args.population)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        excluded = data_io.attach_population(regions, pops)
    outputs = []
    for rid, series in sorted(regions.items()):
        path = out_dir / f"{safe_name(rid)}.json"
        atomic_write(path, series.to_json())
        outputs.append(path)
    index = {
        "regions": sorted(regions),
        "excluded_no_population": sorted(excluded),
        "stats": {
            "rows_in": stats.rows_in,
            "rows_stored": stats.rows_stored,
            "skipped": stats.skipped,
            "npi_values_clamped": stats.npi_values_clamped,
            "negative_diffs": stats.negative_diffs,
            "calendar_gaps_filled": stats.calendar_gaps_filled,
        },
    }
    index_path = out_dir / "index.json"
    atomic_write(index_path, json.dumps(index, indent=2, sort_keys=True))
    outputs.append(index_path)
    write_manifest(out_dir, "ingest", args, [args.oxcgrt] + ([args.population] if args.population else []), outputs, t0)
    print(
        f"ingested {len(regions)} regions "
        f"({stats.rows_in} rows in, {stats.rows_skipped} skipped, "
        f"{stats.npi_values_clamped} NPI values clamped, "
        f"{stats.negative_diffs} negative-count days, "
        f"{len(excluded)} regions without population)"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _train_one(series_path: str, hyper_doc: dict) -> tuple[str, str | None, str | None]:
    """Worker: returns (region_id, model_json, error)."""
    series = data_io.RegionSeries.from_json(Path(series_path).read_text())
    try:
        hyper = TrainingHyper(**hyper_doc)
        model = train_region(series, hyper=hyper)
        return series.region_id, model.to_json(), None
    except Exception as exc:
        return series.region_id, None, f"{type(exc).__name__}: {exc}"


def cmd_train(args) -> int:
    t0 = time.time()
    config = load_config(args.config)
    data_dir = Path(args.data)
    out_dir = Path(args.out)
    paths = sorted(p for p in data_dir.glob("*.json") if p.name not in ("index.json", "manifest.json"))
    if args.regions != "all":
        wanted = {safe_name(r.strip()) for r in args.regions.split(",")}
        paths = [p for p in paths if p.stem in wanted]
    if not paths:
        print("error: no region series found", file=sys.stderr)
        return EXIT_USAGE

    hyper_doc = dict(config.get("training", {}))
    if args.quadratic:
        hyper_doc["quadratic"] = True

    jobs = args.jobs or int(config.get("jobs", 1))
    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_train_one, str(p), hyper_doc) for p in paths]
            results = [f.result() for f in futures]
    else:
        results = [_train_one(str(p), hyper_doc) for p in paths]

    outputs = []
    summary = ["region_id,beta,gamma,map_l1_norm,degenerate,low_confidence,error"]
    failures = 0
    for rid, model_json, err in sorted(results):
        if err is not None:
            failures += 1
            summary.append(f"{rid},,,,,,{err}")
            print(f"train failed for {rid}: {err}", file=sys.stderr)
            continue
        model = RegionModel.from_json(model_json)
        path = out_dir / f"{safe_name(rid)}.model.json"
        atomic_write(path, model_json)
        outputs.append(path)
        summary.append(
            f"{rid},{model.params.beta:.6g},{model.params.gamma:.6g},"
            f"{float(np.sum(model.cmap.a)):.6g},"
            f"{int(model.diagnostics.get('degenerate_map', False))},"
            f"{int(model.diagnostics.get('low_confidence', False))},"
        )
    summary_path = out_dir / "summary.csv"
    atomic_write(summary_path, "\n".join(summary) + "\n")
    outputs.append(summary_path)
    write_manifest(out_dir, "train", args, paths, outputs, t0)
    print(f"trained {len(results) - failures}/{len(results)} regions -> {out_dir}")
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# forecast


def _forecast_frame(model: RegionModel, schedule: np.ndarray, days: int):
    drive = np.asarray(model.cmap.evaluate(schedule.astype(float)), float)
    return run_forecast(
        model.filter_cfg,
        model.final_state,
        model.final_cov,
        drive,
        horizon=days,
        params=model.params,
        eps=1.0,
    )


def cmd_forecast(args) -> int:
    t0 = time.time()
    if args.days < 1:
        print("error: --days must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        model = RegionModel.from_json(Path(args.model).read_text())
        scenario = data_io.parse_scenario(args.npis)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sched = data_io.materialize_scenario(scenario, args.days, latest_npi=model.last_npi)
    fc = _forecast_frame(model, sched.levels, args.days)
    n_pop = model.params.population
    lines = ["step,new_cases_mean,new_cases_lo,new_cases_hi"]
    for k in range(args.days + 1):
        lines.append(
            f"{k},{fc.mean[k] * n_pop:.6g},{fc.lo[k] * n_pop:.6g},{fc.hi[k] * n_pop:.6g}"
        )
    out_path = Path(args.out)
    atomic_write(out_path, "\n".join(lines) + "\n")
    outputs = [out_path]

    if args.truth:
        truth = data_io.RegionSeries.from_json(Path(args.truth).read_text())
        horizon = min(args.days, len(truth.new_cases))
        err_lines = ["lookahead_days,error_percent"]
        for k in range(1, horizon + 1):
            actual = truth.new_cases[k - 1]
            if not np.isfinite(actual) or actual == 0:
                continue
            pred = fc.mean[k] * n_pop
            err_lines.append(f"{k},{abs(pred - actual) / abs(actual) * 100.0:.4f}")
        err_path = out_path.with_suffix(".errors.csv")
        atomic_write(err_path, "\n".join(err_lines) + "\n")
        outputs.append(err_path)

    write_manifest(out_path.parent, "forecast", args, [args.model], outputs, t0)
    print(f"forecast {args.days} days -> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# prescribe


def eps_grid(n: int) -> np.ndarray:
    """0 plus a log-spaced ladder up to 1: the J1 scale dwarfs J0, so the
    interesting trade-offs concentrate at small eps."""
    if n < 2:
        return np.array([0.0])
    return np.concatenate([[0.0], np.logspace(-8, 0, n - 1)])


def build_problem(model: RegionModel, weights: np.ndarray, horizon: int) -> ControlProblem:
    s, i, alpha = model.final_state[:3]
    x0 = CompartmentState(s=float(s), i=float(i), alpha=float(alpha))
    return ControlProblem(
        params=model.params,
        cmap=model.cmap,
        weights=weights,
        eps=0.0,
        horizon=horizon,
        x0=x0,
    )


def cmd_prescribe(args) -> int:
    t0 = time.time()
    config = load_config(args.config)
    args.seed_resolved = resolve_seed(args, config)
    try:
        model = RegionModel.from_json(Path(args.model).read_text())
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.weights:
        weights = np.asarray(json.loads(Path(args.weights).read_text()), float)
        if weights.shape != (N_NPI,):
            print(f"error: weights file must hold {N_NPI} numbers", file=sys.stderr)
            return EXIT_USAGE
    else:
        weights = np.ones(N_NPI)

    prob = build_problem(model, weights, args.horizon)
    values = np.array([args.eps]) if args.eps is not None else eps_grid(args.eps_grid)

    rng = np.random.default_rng(args.seed_resolved)
    scenarios = [("fixed latest", np.tile(model.last_npi, (args.horizon, 1)))]
    for j in range(args.random_scenarios):
        constant = j % 2 == 0
        kind = "constant" if constant else "variable"
        scenarios.append(
            (f"random {kind} {j}", random_schedule(rng, args.horizon, constant=constant))
        )

    sweep = pareto_sweep(prob, values, scenarios)
    out_dir = Path(args.out)
    outputs = []
    bi_path = out_dir / "biobjective.csv"
    atomic_write(bi_path, sweep.to_csv())
    outputs.append(bi_path)
    json_path = out_dir / "sweep.json"
    atomic_write(json_path, sweep.to_json())
    outputs.append(json_path)

    sched_lines = ["label,day," + ",".join(f"u{j}" for j in range(N_NPI))]
    for p in sweep.points:
        if p.schedule is None:
            continue
        for d, row in enumerate(p.schedule.levels):
            sched_lines.append(f"{p.label},{d}," + ",".join(str(int(v)) for v in row))
    sched_path = out_dir / "schedules.csv"
    atomic_write(sched_path, "\n".join(sched_lines) + "\n")
    outputs.append(sched_path)

    chosen = sweep.chosen
    chosen_path = out_dir / "chosen.json"
    atomic_write(
        chosen_path,
        json.dumps(
            None
            if chosen is None
            else {"label": chosen.label, "eps": chosen.eps, "j0": chosen.j0, "j1": chosen.j1},
            indent=2,
        ),
    )
    outputs.append(chosen_path)
    write_manifest(out_dir, "prescribe", args, [args.model], outputs, t0)
    n_fail = sum(1 for p in sweep.points if p.kind == "optimal" and not p.converged)
    print(
        f"swept {len(values)} eps values + {len(scenarios)} scenarios -> {out_dir} "
        f"({n_fail} non-converged)"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    import uvicorn

    from pandemic_fhoc.service import create_app

    app = create_app(args.models, cors_origin=args.cors_origin)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pandemic-fhoc",
        description="Epidemic forecasting and Pareto-efficient NPI prescription",
    )
    parser.add_argument("--config", help="JSON config file (flags take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse case/NPI CSV into per-region series")
    p.add_argument("--oxcgrt", required=True, help="OxCGRT-format CSV")
    p.add_argument("--population", help="two-column region,population CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train per-region models")
    p.add_argument("--data", required=True, help="directory of region series JSON")
    p.add_argument("--regions", default="all", help="comma list of region ids, or 'all'")
    p.add_argument("--out", required=True)
    p.add_argument("--quadratic", action="store_true")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="open-loop forecast under a scenario")
    p.add_argument("--model", required=True)
    p.add_argument("--npis", required=True, help="scenario JSON file")
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="region series JSON with actual reports")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("prescribe", help="bi-objective NPI prescription sweep")
    p.add_argument("--model", required=True)
    p.add_argument("--weights", help="JSON file with 12 NPI cost weights")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--eps-grid", type=int, default=25)
    group.add_argument("--eps", type=float, default=None)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--random-scenarios", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prescribe)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--models", required=True, help="directory of trained model JSON")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--cors-origin", default="http://localhost:8080")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    if not hasattr(args, "seed_resolved"):
        args.seed_resolved = resolve_seed(args, load_config(args.config))
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

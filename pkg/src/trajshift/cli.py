"""Command-line entry points: simulate, register, evaluate, sweep.

Every command writes its outputs plus a JSON run manifest; reruns with the
same arguments and seed reproduce the metric files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import CohortFormatError, load_cohort, save_cohort
from .evaluate import (
    agreement,
    recovery,
    summarize,
    window_coverage_mask,
)
from .register import (
    ConfigError,
    RegistrationConfig,
    register,
    write_history_csv,
    write_result_csv,
)
from .simulate import (
    SCENARIO_IDS,
    CorruptionSpec,
    ScenarioSpec,
    corrupt,
    generate,
    inflate_noise,
    load_ground_truth,
    save_ground_truth,
)

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("M", "alpha", "tau", "outliers", "deletion", "noise")


def _child_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=tuple(key)).generate_state(1)[0])


def _write_manifest(out_dir: Path, payload: dict) -> Path:
    payload = dict(payload)
    payload["artifact_version"] = __version__
    payload["created_unix"] = time.time()
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_simulate(args) -> int:
    spec = ScenarioSpec.standard(args.scenario, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    data, truth = generate(spec)
    cohort_path = out / "cohort.csv"
    truth_path = out / "truth.csv"
    save_cohort(data, cohort_path)
    save_ground_truth(truth, truth_path)
    _write_manifest(
        out,
        {
            "command": "simulate",
            "scenario": args.scenario,
            "seed": args.seed,
            "outputs": [str(cohort_path), str(truth_path)],
            "n_subjects": len(data),
            "n_observations": data.n_observations,
            "runtime_seconds": time.perf_counter() - t0,
        },
    )
    logger.info("wrote %s (%d subjects)", cohort_path, len(data))
    return 0


def _load_config(path) -> RegistrationConfig:
    if path is None:
        return RegistrationConfig()
    with open(path) as fh:
        payload = json.load(fh)
    return RegistrationConfig.from_dict(payload)


def _parse_window(text: str) -> tuple[float, float]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise ConfigError(f"--window expects 'lo,hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def cmd_register(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config = RegistrationConfig.from_dict({**config.to_dict(), "seed": args.seed})
    data = load_cohort(args.cohort, window=_parse_window(args.window))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = register(data, config)
    runtime = time.perf_counter() - t0
    result_path = out / "result.csv"
    history_path = out / "history.csv"
    write_result_csv(result, result_path)
    write_history_csv(result, history_path)
    _write_manifest(
        out,
        {
            "command": "register",
            "cohort": str(args.cohort),
            "config": config.to_dict(),
            "seed": config.seed,
            "outputs": [str(result_path), str(history_path)],
            "selected_k": result.selected_k,
            "termination_reason": result.termination_reason,
            "iterations": len(result.history),
            "runtime_seconds": runtime,
        },
    )
    logger.info(
        "registered %d subjects: K=%d, stop=%s, %.1fs",
        result.n,
        result.selected_k,
        result.termination_reason,
        runtime,
    )
    return 0


def _read_result_csv(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    ids: list[str] = []
    shifts: list[float] = []
    clusters: list[int] = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "subject_id,shift,cluster":
            raise CohortFormatError(f"{path}: unexpected result header {header!r}")
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise CohortFormatError(f"{path}: malformed row {line_no}: {line!r}")
            ids.append(parts[0])
            shifts.append(float(parts[1]))
            clusters.append(int(parts[2]))
    return ids, np.asarray(shifts), np.asarray(clusters)


def cmd_evaluate(args) -> int:
    truth = load_ground_truth(args.truth)
    ids, shifts, clusters = _read_result_csv(args.result)
    by_id = {sid: i for i, sid in enumerate(ids)}
    if set(by_id) != set(truth.subject_ids):
        raise CohortFormatError(
            f"subject-id mismatch: truth has {len(truth.subject_ids)}, "
            f"result has {len(ids)}, overlap {len(set(by_id) & set(truth.subject_ids))}"
        )
    order = np.asarray([by_id[sid] for sid in truth.subject_ids])
    est_shifts = shifts[order]
    est_clusters = clusters[order]

    keep = np.ones(len(truth.subject_ids), dtype=bool)
    excluded = 0
    if args.profile == "windowed":
        if args.cohort is None:
            raise ConfigError("--cohort is required for the windowed profile")
        data = load_cohort(args.cohort, window=_parse_window(args.window))
        cohort_pos = {sid: i for i, sid in enumerate(data.subject_ids)}
        missing = [sid for sid in truth.subject_ids if sid not in cohort_pos]
        if missing:
            raise CohortFormatError(
                f"cohort file lacks {len(missing)} truth subject(s), e.g. {missing[:3]}"
            )
        mask = window_coverage_mask(data)
        keep = np.asarray([mask[cohort_pos[sid]] for sid in truth.subject_ids])
        excluded = int((~keep).sum())

    rec = recovery(truth.shifts[keep], est_shifts[keep])
    agr = agreement(truth.groups[keep], est_clusters[keep])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w") as fh:
        fh.write("metric,value\n")
        for name, value in {**rec.as_dict(), **agr.as_dict()}.items():
            fh.write(f"{name},{value!r}\n")
        fh.write(f"excluded_subjects,{excluded}\n")
    _write_manifest(
        out,
        {
            "command": "evaluate",
            "truth": str(args.truth),
            "result": str(args.result),
            "profile": args.profile,
            "excluded_subjects": excluded,
            "outputs": [str(metrics_path)],
        },
    )
    logger.info("wrote %s (%d excluded)", metrics_path, excluded)
    return 0


def _sweep_config(parameter: str, value: float, seed: int) -> RegistrationConfig:
    base = RegistrationConfig(seed=seed)
    if parameter == "M":
        if value != int(value) or int(value) < 2:
            raise ConfigError(f"M must be an integer >= 2, got {value}")
        return RegistrationConfig.from_dict({**base.to_dict(), "max_clusters": int(value)})
    if parameter == "alpha":
        return RegistrationConfig.from_dict({**base.to_dict(), "trim_fraction": value})
    if parameter == "tau":
        return RegistrationConfig.from_dict({**base.to_dict(), "threshold": value})
    return base


def run_sweep_replicate(
    scenario_id: int, parameter: str, value: float, rep: int, master_seed: int
) -> dict[str, float]:
    """One seeded (value, replicate) cell: generate, corrupt, register, score.

    Cohorts depend only on the replicate index, so parameter values are
    compared on identical data.
    """
    gen_seed = _child_seed(master_seed, 1, rep)
    reg_seed = _child_seed(master_seed, 2, rep)
    spec = ScenarioSpec.standard(scenario_id, seed=gen_seed)
    if parameter == "noise":
        if value < 0:
            raise ConfigError(f"noise inflation must be >= 0, got {value}")
        spec = inflate_noise(spec, value)
    data, truth = generate(spec)
    if parameter == "outliers":
        data = corrupt(
            data,
            CorruptionSpec("outlier_doubling", value, seed=_child_seed(master_seed, 3, rep)),
        )
    elif parameter == "deletion":
        data = corrupt(
            data,
            CorruptionSpec("random_deletion", value, seed=_child_seed(master_seed, 3, rep)),
        )
    config = _sweep_config(parameter, value, reg_seed)
    t0 = time.perf_counter()
    result = register(data, config)
    runtime = time.perf_counter() - t0
    return recovery(truth.shifts, result.shifts, runtime_minutes=runtime / 60.0).as_dict()


def _sweep_cell(job):
    scenario_id, parameter, value, rep, seed = job
    return run_sweep_replicate(scenario_id, parameter, value, rep, seed)


def run_sweep(
    scenario_id: int,
    parameter: str,
    values: list[float],
    replicates: int,
    seed: int,
    workers: int = 1,
) -> list[dict]:
    """Replicate summaries per swept value, in deterministic (value, rep) order."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}")
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    for v in values:
        _sweep_config(parameter, v, 0)  # validates M/alpha/tau ranges up front
        if parameter in ("outliers", "deletion", "noise"):
            CorruptionSpec(
                {"outliers": "outlier_doubling", "deletion": "random_deletion", "noise": "noise_inflation"}[
                    parameter
                ],
                v,
            )
    jobs = [
        (scenario_id, parameter, value, rep, seed)
        for value in values
        for rep in range(replicates)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_sweep_cell, jobs))
    else:
        records = [_sweep_cell(job) for job in jobs]

    rows = []
    for vi, value in enumerate(values):
        chunk = records[vi * replicates : (vi + 1) * replicates]
        summary = summarize(chunk)
        row = {"parameter": parameter, "value": value, "replicates": replicates}
        for metric, interval in summary.stats.items():
            if metric == "runtime_minutes":
                continue  # wall-clock is not reproducible; it goes in the manifest
            row[f"{metric}_mean"] = interval.mean
            row[f"{metric}_lower"] = interval.lower
            row[f"{metric}_upper"] = interval.upper
        rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values must list at least one value")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows = run_sweep(
        args.scenario, args.parameter, values, args.replicates, args.seed, workers=args.workers
    )
    sweep_path = out / "sweep.csv"
    cols = list(rows[0])
    with open(sweep_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")
    _write_manifest(
        out,
        {
            "command": "sweep",
            "scenario": args.scenario,
            "parameter": args.parameter,
            "values": values,
            "replicates": args.replicates,
            "seed": args.seed,
            "outputs": [str(sweep_path)],
            "runtime_seconds": time.perf_counter() - t0,
        },
    )
    logger.info("wrote %s (%d rows)", sweep_path, len(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajshift",
        description="Align longitudinal trajectories onto latent per-subtype timelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a benchmark cohort")
    p_sim.add_argument("scenario", type=int, choices=SCENARIO_IDS)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_reg = sub.add_parser("register", help="estimate shifts and clusters for a cohort")
    p_reg.add_argument("cohort")
    p_reg.add_argument("--config", default=None, help="JSON file of config fields")
    p_reg.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_reg.add_argument("--window", default="1,21", help="study window as 'lo,hi' days")
    p_reg.add_argument("--out", required=True)
    p_reg.set_defaults(func=cmd_register)

    p_eval = sub.add_parser("evaluate", help="score a result against ground truth")
    p_eval.add_argument("truth")
    p_eval.add_argument("result")
    p_eval.add_argument("--profile", choices=("all", "windowed"), default="all")
    p_eval.add_argument("--cohort", default=None, help="cohort CSV, required for --profile windowed")
    p_eval.add_argument("--window", default="1,21", help="study window as 'lo,hi' days")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="sensitivity sweep over one parameter")
    p_sweep.add_argument("scenario", type=int, choices=SCENARIO_IDS)
    p_sweep.add_argument("--parameter", choices=SWEEP_PARAMETERS, required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--replicates", type=int, default=5)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CohortFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Run a configured experiment: seeds, replicas, tables and manifest."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from src.errors import ConfigurationError
from src.runner.config import ExperimentConfig, validate_config
from src.runner.manifest import RunManifest, sha256_hex
from src.runner.output import write_jsonl, write_table
from src.runner.registry import Row, build_field, get_experiment, summarize
from src.utils.seeds import replica_seeds

logger = logging.getLogger(__name__)

ROWS_FILE = "rows.csv"
SUMMARY_FILE = "summary.csv"
REPLICAS_FILE = "replicas.jsonl"


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, tuple):
        return list(value)
    return value


def run_replica(config_json: str, index: int, seed: int) -> list[Row]:
    """One replica's rows; module-level so worker processes can unpickle it."""
    config = ExperimentConfig.model_validate_json(config_json)
    experiment = get_experiment(config.experiment)
    fld = build_field(config.lattice) if experiment.needs_field else None
    rows = experiment.replica(fld, config.typed_params(), seed)
    return [{"replica": index, **{k: _plain(v) for k, v in row.items()}} for row in rows]


def _run_replicas(config: ExperimentConfig, seeds: list[int]) -> list[list[Row]]:
    payload = config.model_dump_json()
    if config.workers == 1 or len(seeds) == 1:
        return [run_replica(payload, i, s) for i, s in enumerate(seeds)]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(run_replica, payload, i, s) for i, s in enumerate(seeds)]
        # merged in submission order, whatever order they finish in
        return [f.result() for f in futures]


def output_dir(config: ExperimentConfig) -> Path:
    return Path(config.out) / config.experiment


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Run every replica, write rows, summary and per-replica JSONL plus a manifest.

    Raises ConfigurationError when the config has inter-parameter
    violations; simulation aborts propagate as SimulationAbort.
    """
    violations = validate_config(config)
    if violations:
        raise ConfigurationError("; ".join(violations))
    experiment = get_experiment(config.experiment)
    seeds = replica_seeds(config.seed, config.experiment, config.reps)
    manifest = RunManifest(
        experiment=config.experiment,
        config_hash=sha256_hex(config.canonical_json().encode()),
        config=config.model_dump(mode="json", exclude={"workers", "out"}),
        seeds=seeds,
    )
    logger.info(
        "Running %s: %d replicas on %d worker(s)", config.experiment, config.reps, config.workers
    )
    start = time.perf_counter()
    per_replica = _run_replicas(config, seeds)
    manifest.wall_clock = time.perf_counter() - start

    rows = [row for replica in per_replica for row in replica]
    records = [
        {"replica": i, "seed": s, "rows": [{k: v for k, v in r.items() if k != "replica"} for r in rep]}
        for i, (s, rep) in enumerate(zip(seeds, per_replica))
    ]
    out = output_dir(config)
    summary = summarize(experiment, rows)
    written = [
        write_table(out / ROWS_FILE, rows, experiment.name, experiment.statement),
        write_table(out / SUMMARY_FILE, summary, experiment.name, experiment.statement),
        write_jsonl(out / REPLICAS_FILE, records),
    ]
    for path in written:
        manifest.record_output(path)
    manifest.write(out)
    logger.info("%s finished in %.1fs; outputs in %s", config.experiment, manifest.wall_clock, out)
    return manifest

"""Dataset generation and parameter sweeps driven by an :class:`ExperimentConfig`."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Tuple

import numpy as np

from .config import Cell, ExperimentConfig
from .errors import CartanSyncError
from .harness import (NoiseSpec, TrialRecord, calibrate_noise, make_measurements, run_trial,
                      sample_ground_truth)
from .io import write_graph, write_records, write_truth
from .sync import MeasurementGraph

log = logging.getLogger(__name__)


def truth_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(seed), 0x7472, int(trial)]).generate_state(1, np.uint64)[0])


def make_truth(cfg: ExperimentConfig, trial: int) -> list:
    return sample_ground_truth(cfg.n, cfg.group, truth_seed(cfg.seed, trial))


def make_cell_graph(cfg: ExperimentConfig, cell: Cell, truth: list, trial: int) -> Tuple[MeasurementGraph, dict]:
    if cell.snr_db is not None:
        base = NoiseSpec(0.0, 0.0, cell.outlier_rate, cell.p, cfg.seed)
        spec, graph, snr = calibrate_noise(truth, cell.snr_db, base, cfg.noise.sigma_ratio, trial)
    else:
        spec = NoiseSpec(cell.sigma_rot, cell.sigma_trans, cell.outlier_rate, cell.p, cfg.seed)
        graph, snr = make_measurements(truth, spec, trial)
    meta = {"cell": cell.index, "trial": trial, "seed": cfg.seed, "p": cell.p,
            "outlier_rate": cell.outlier_rate, "snr_db": snr, "sigma_rot": spec.sigma_rot,
            "sigma_trans": spec.sigma_trans}
    return graph, meta


def generate(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> List[str]:
    """Write ``truth_t{trial}.json`` and ``graph_c{cell}_t{trial}.json`` files."""
    out_dir = out_dir or cfg.output_path
    paths = []
    for t in range(cfg.trials_per_cell):
        truth = make_truth(cfg, t)
        p = os.path.join(out_dir, f"truth_t{t}.json")
        write_truth(p, cfg.group, truth, {"trial": t, "seed": cfg.seed})
        paths.append(p)
        for cell in cfg.cells():
            graph, meta = make_cell_graph(cfg, cell, truth, t)
            p = os.path.join(out_dir, f"graph_c{cell.index}_t{t}.json")
            write_graph(p, graph, meta)
            paths.append(p)
    return paths


def _failed(cfg: ExperimentConfig, cell: Cell, trial: int, method: str, token: str) -> TrialRecord:
    g = cfg.group
    return TrialRecord(method, g.kind, cfg.n, g.d, g.l if g.kind == "MMG" else 0, cell.p, float("nan"),
                       cell.outlier_rate, None, trial, cfg.seed, float("nan"), 0.0, token)


def run_unit(cfg: ExperimentConfig, cell: Cell, trial: int) -> List[TrialRecord]:
    """All methods on one (cell, trial) instance, in config order."""
    truth = make_truth(cfg, trial)
    try:
        graph, meta = make_cell_graph(cfg, cell, truth, trial)
    except CartanSyncError as exc:
        return [_failed(cfg, cell, trial, m, exc.token) for m in cfg.methods]
    records = {}
    lam_contraction = None
    # contraction first: baselines that take a scale reuse its lambda
    order = sorted(cfg.methods, key=lambda m: not m.startswith(("contraction", "plugin:")))
    for m in order:
        lam = cell.lam
        if m == "se-spectral" and isinstance(lam, str) and lam_contraction is not None:
            lam = lam_contraction
        rec = run_trial(truth, graph, m, lam, trial=trial, seed=cfg.seed, align_budget=cfg.align_budget,
                        p=cell.p, outlier_rate=cell.outlier_rate, snr=meta["snr_db"])
        if m.startswith(("contraction", "plugin:")) and lam_contraction is None and rec.lam is not None:
            lam_contraction = rec.lam
        records[m] = rec
    return [records[m] for m in cfg.methods]


def worker_count() -> int:
    env = os.environ.get("CARTAN_SYNC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer CARTAN_SYNC_THREADS=%r", env)
    return os.cpu_count() or 1


def _unit(args):
    return run_unit(*args)


def sweep(cfg: ExperimentConfig, csv_path: Optional[str] = None, workers: Optional[int] = None) -> List[TrialRecord]:
    """Run the full grid; rows are ordered by cell, then trial, then method."""
    units = [(cfg, cell, t) for cell in cfg.cells() for t in range(cfg.trials_per_cell)]
    workers = workers or worker_count()
    if workers <= 1 or len(units) <= 1:
        results = [_unit(u) for u in units]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(units))) as pool:
            results = list(pool.map(_unit, units))
    records = [r for rs in results for r in rs]
    csv_path = csv_path or os.path.join(cfg.output_path, "results.csv")
    write_records(csv_path, records)
    return records

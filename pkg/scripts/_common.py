"""Helpers shared by the experiment scripts."""
from collections import defaultdict

import numpy as np


def cell_labels(cfg, records, label):
    """``label(cell)`` for every sweep row; rows come ordered by cell, trial, method."""
    cells = cfg.cells()
    per_cell = len(records) // len(cells)
    return [label(cells[k // per_cell]) for k in range(len(records))]


def median_table(records, labels):
    """Median MSE per (label, method), failed rows skipped."""
    cells = defaultdict(list)
    for r, lab in zip(records, labels):
        if not r.error and lab is not None:
            cells[(lab, r.method)].append(r.mse)
    return {k: float(np.median(v)) for k, v in cells.items()}


def print_table(table, key_name, methods):
    keys = sorted({k for k, _ in table})
    print(f"{key_name:>10} " + " ".join(f"{m:>22}" for m in methods))
    for k in keys:
        row = " ".join(f"{table.get((k, m), float('nan')):>22.5g}" for m in methods)
        print(f"{k:>10.4g} {row}")

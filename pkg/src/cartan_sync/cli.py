"""``cartan-sync`` command line."""
from __future__ import annotations

import functools
import json
import sys
import time

import click

from .config import ExperimentConfig
from .errors import CartanSyncError, ConfigInvalid, DimensionMismatch
from .experiment import generate, sweep
from .harness import TrialRecord, mse, spectral_gap_condition
from .io import append_records, read_graph, read_solution, read_truth, write_solution
from .io import FileFormatError
from .sync import solve

# input problems exit with 2, solver failures with 1
_USAGE_ERRORS = (ConfigInvalid, DimensionMismatch, FileFormatError)


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CartanSyncError as exc:
            click.echo(f"error: {exc.token}: {exc}", err=True)
            sys.exit(2 if isinstance(exc, _USAGE_ERRORS) else 1)
        except OSError as exc:
            click.echo(f"error: IOError: {exc}", err=True)
            sys.exit(2)
    return wrapper


@click.group()
def main():
    """Synchronization over Cartan motion groups via contraction."""


@main.command("generate")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, help="Output directory (default: config output_path).")
@_guard
def cmd_generate(config_path, out_dir):
    """Write ground truth and measurement graphs for every cell and trial."""
    cfg = ExperimentConfig.load(config_path)
    for p in generate(cfg, out_dir):
        click.echo(p)


def _parse_lambda(text: str):
    if text.lower() == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise ConfigInvalid(f"--lambda must be a number or 'auto', got {text!r}") from None


@main.command("solve")
@click.option("--graph", "graph_path", required=True, type=click.Path())
@click.option("--method", required=True)
@click.option("--lambda", "lam", default="auto", show_default=True)
@click.option("--align-budget", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@_guard
def cmd_solve(graph_path, method, lam, align_budget, out_path):
    """Solve one measurement graph and write the solution file."""
    graph, meta = read_graph(graph_path)
    t0 = time.perf_counter()
    sol = solve(graph, method, _parse_lambda(lam), align_budget)
    meta = dict(meta, method=method, runtime_ms=1000 * (time.perf_counter() - t0))
    write_solution(out_path, graph.group, sol, meta)
    click.echo(f"{method}: residual {sol.diagnostics.get('residual', float('nan')):.6g}"
               + (f", lambda {sol.lambda_used:.6g}" if sol.lambda_used else ""))


@main.command("eval")
@click.option("--solution", "solution_path", required=True, type=click.Path())
@click.option("--truth", "truth_path", required=True, type=click.Path())
@click.option("--csv", "csv_path", required=True, type=click.Path())
@_guard
def cmd_eval(solution_path, truth_path, csv_path):
    """Score a solution against the truth and append a CSV row."""
    group, sol, meta = read_solution(solution_path)
    tgroup, truth = read_truth(truth_path)
    if group != tgroup:
        raise DimensionMismatch(f"solution is over {group.label()}, truth over {tgroup.label()}")
    val = mse(sol.estimates, truth)
    nan = float("nan")
    rec = TrialRecord(str(meta.get("method", sol.diagnostics.get("solver", ""))), group.kind, len(truth),
                      group.d, group.l if group.kind == "MMG" else 0, meta.get("p", nan),
                      meta.get("snr_db", nan), meta.get("outlier_rate", nan), sol.lambda_used,
                      meta.get("trial", ""), meta.get("seed", ""), val, meta.get("runtime_ms", nan))
    append_records(csv_path, [rec])
    click.echo(f"{val:.6g}")


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--csv", "csv_path", default=None, help="Results CSV (default: <output_path>/results.csv).")
@_guard
def cmd_sweep(config_path, csv_path):
    """Generate, solve and evaluate the whole grid."""
    cfg = ExperimentConfig.load(config_path)
    records = sweep(cfg, csv_path)
    failed = sum(1 for r in records if r.error)
    click.echo(f"{len(records)} rows, {failed} failed")


@main.command("gapcheck")
@click.option("--n", "n", required=True, type=int)
@click.option("--sigma-rot", required=True, type=float)
@click.option("--sigma-trans", required=True, type=float)
@click.option("--samples", default=100_000, show_default=True, type=int)
@click.option("--d", "d", default=3, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@_guard
def cmd_gapcheck(n, sigma_rot, sigma_trans, samples, d, seed):
    """Estimate the noise spectral-gap condition for SE(d)."""
    rec = spectral_gap_condition(n, sigma_rot, sigma_trans, d, samples, seed)
    click.echo(json.dumps(rec.as_dict()))


if __name__ == "__main__":
    main()

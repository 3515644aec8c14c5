"""Ensemble execution and reduction to the headline observables: cumulative
defect-free success rate, mean buffer fill fraction, and normalized reservoir
signal per cycle, plus calibration of the reservoir depletion parameter and
CSV/JSON output writing.

Reported cycle k covers the k-th full rearrangement round; its observables
are read from the imaging step that opens round k+1, which is the first
image that can see round k's fills and refills. Each realization therefore
runs one extra engine cycle beyond the reported range.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .engine import CycleRecord, EventLog, run_realization

__all__ = [
    "ExperimentStats",
    "CalibrationResult",
    "CalibrationError",
    "run_experiment",
    "cumulative_success_rate",
    "binomial_halfwidth",
    "wilson_halfwidth",
    "calibrate_depletion",
    "write_outputs",
]


@dataclass(frozen=True)
class ExperimentStats:
    """Per-cycle ensemble statistics; all tuples share the cycle axis.

    ``success_ci`` and ``buffer_fill_ci`` are 1-sigma half-widths. The
    reservoir signal is normalized to its cycle-1 ensemble mean
    (``reservoir_baseline`` atoms), so it starts at 1 by construction;
    ``reservoir_std`` is the ensemble standard deviation, not an error of
    the mean.
    """

    n_replicas: int
    cycles: tuple[int, ...]
    success_rate: tuple[float, ...]
    success_ci: tuple[float, ...]
    buffer_fill_mean: tuple[float, ...]
    buffer_fill_ci: tuple[float, ...]
    reservoir_norm: tuple[float, ...]
    reservoir_std: tuple[float, ...]
    reservoir_baseline: float
    mean_delivered: float


def binomial_halfwidth(p: float, n: int) -> float:
    """Normal-approximation 1-sigma half-width of a binomial rate."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return math.sqrt(p * (1.0 - p) / n)


def wilson_halfwidth(p: float, n: int, z: float = 1.0) -> float:
    """Wilson-score 1-sigma half-width; stays sensible at p near 0 or 1."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return (z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))) / (
        1.0 + z * z / n
    )


def _success_matrix(complete: np.ndarray, definition: str) -> np.ndarray:
    """Per-replica success flags by cycle from completion observations.

    first-achievement: success at cycle k once completion was observed at
    any cycle <= k. maintained: additionally still complete at k itself.
    """
    achieved = np.maximum.accumulate(complete, axis=1)
    if definition == "maintained":
        return achieved & complete
    return achieved


def cumulative_success_rate(
    records_per_replica: list[list[CycleRecord]],
    success_definition: str = "first-achievement",
) -> list[float]:
    """Fraction of replicas counted successful at each cycle index."""
    if not records_per_replica:
        raise ValueError("need at least one replica")
    lengths = {len(records) for records in records_per_replica}
    if len(lengths) != 1:
        raise ValueError(f"replicas have differing cycle counts: {sorted(lengths)}")
    complete = np.array(
        [[r.target_complete for r in records] for records in records_per_replica],
        dtype=bool,
    )
    return [float(x) for x in _success_matrix(complete, success_definition).mean(axis=0)]


def run_experiment(
    config: ExperimentConfig, collect_events: bool = False
) -> tuple[ExperimentStats, EventLog | None]:
    """Run the full ensemble and reduce it to per-cycle statistics.

    Deterministic for a fixed config: replica i always draws from the
    stream keyed by (master_seed, i), so enlarging the ensemble never
    perturbs earlier replicas.
    """
    models = config.build_models()
    n_buffers = len(models.layout.buffer_ids)
    n_rep = config.n_replicas
    n_engine_cycles = config.n_cycles + 1
    log = EventLog() if collect_events else None
    complete = np.zeros((n_rep, n_engine_cycles), dtype=bool)
    buffer_counts = np.zeros((n_rep, n_engine_cycles), dtype=np.int64)
    reservoir_counts = np.zeros((n_rep, n_engine_cycles), dtype=np.int64)
    delivered = np.zeros(n_rep, dtype=np.int64)
    for i in range(n_rep):
        records = run_realization(
            models, config.master_seed, n_engine_cycles, replica=i, log=log
        )
        for k, rec in enumerate(records):
            complete[i, k] = rec.target_complete
            buffer_counts[i, k] = rec.n_buffer_filled
            reservoir_counts[i, k] = rec.n_reservoir
        delivered[i] = records[-1].delivered_cum
    success = _success_matrix(complete, config.success_definition).mean(axis=0)[1:]
    halfwidth = binomial_halfwidth if config.ci_method == "normal" else wilson_halfwidth
    success_ci = [halfwidth(float(p), n_rep) for p in success]
    fill = buffer_counts[:, 1:] / n_buffers
    fill_mean = fill.mean(axis=0)
    if n_rep > 1:
        fill_ci = fill.std(axis=0, ddof=1) / math.sqrt(n_rep)
    else:
        fill_ci = np.zeros(fill.shape[1])
    baseline = float(reservoir_counts[:, 1].mean())
    if baseline > 0:
        norm = reservoir_counts[:, 1:] / baseline
        norm_mean = norm.mean(axis=0)
        norm_std = norm.std(axis=0, ddof=1) if n_rep > 1 else np.zeros(norm.shape[1])
    else:
        norm_mean = np.zeros(n_engine_cycles - 1)
        norm_std = np.zeros(n_engine_cycles - 1)
    stats = ExperimentStats(
        n_replicas=n_rep,
        cycles=tuple(range(1, config.n_cycles + 1)),
        success_rate=tuple(float(x) for x in success),
        success_ci=tuple(float(x) for x in success_ci),
        buffer_fill_mean=tuple(float(x) for x in fill_mean),
        buffer_fill_ci=tuple(float(x) for x in fill_ci),
        reservoir_norm=tuple(float(x) for x in norm_mean),
        reservoir_std=tuple(float(x) for x in norm_std),
        reservoir_baseline=baseline,
        mean_delivered=float(delivered.mean()),
    )
    return stats, log


# -- calibration --------------------------------------------------------

@dataclass(frozen=True)
class CalibrationResult:
    mean_ensemble_at_full: float
    achieved_delivered: float
    evaluations: int


class CalibrationError(RuntimeError):
    """The delivered-atom target cannot be met inside the search bracket."""


def _mean_delivered(config: ExperimentConfig, ensemble_mean: float, n_replicas: int) -> float:
    cfg = dataclasses.replace(config, mean_ensemble_at_full=ensemble_mean)
    models = cfg.build_models()
    n_engine_cycles = cfg.n_cycles + 1
    total = 0
    for i in range(n_replicas):
        records = run_realization(models, cfg.master_seed, n_engine_cycles, replica=i)
        total += records[-1].delivered_cum
    return total / n_replicas


def calibrate_depletion(
    config: ExperimentConfig,
    target_delivered: float = 10.0,
    tolerance: float = 0.5,
    bracket: tuple[float, float] = (1.0, 40.0),
    n_replicas: int = 500,
    evaluate=None,
) -> CalibrationResult:
    """Find the extraction ensemble mean that delivers the target number of
    atoms per realization, by bisection.

    Mean delivered per realization decreases as the ensemble mean grows
    (bigger bites drain the reservoir sooner), so the root is bracketed by
    evaluating both ends first. Every evaluation reuses the same master
    seed (common random numbers), which keeps the response monotone in
    practice. ``evaluate`` may override the objective, mainly for tests.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be nonnegative")
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ValueError(f"invalid bracket {bracket}")
    if evaluate is None:
        def evaluate(m: float) -> float:
            return _mean_delivered(config, m, n_replicas)

    evaluations = 0

    def measure(m: float) -> float:
        nonlocal evaluations
        evaluations += 1
        return evaluate(m)

    g_lo = measure(lo)
    if abs(g_lo - target_delivered) <= tolerance:
        return CalibrationResult(lo, g_lo, evaluations)
    g_hi = measure(hi)
    if abs(g_hi - target_delivered) <= tolerance:
        return CalibrationResult(hi, g_hi, evaluations)
    if (g_lo - target_delivered) * (g_hi - target_delivered) > 0:
        raise CalibrationError(
            f"target {target_delivered} not bracketed: delivered "
            f"{g_lo:.3f} at ensemble mean {lo} and {g_hi:.3f} at {hi}"
        )
    best = (lo, g_lo) if abs(g_lo - target_delivered) < abs(g_hi - target_delivered) else (hi, g_hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        g_mid = measure(mid)
        if abs(g_mid - target_delivered) < abs(best[1] - target_delivered):
            best = (mid, g_mid)
        if abs(g_mid - target_delivered) <= tolerance:
            return CalibrationResult(mid, g_mid, evaluations)
        if (g_lo - target_delivered) * (g_mid - target_delivered) <= 0:
            hi = mid
        else:
            lo, g_lo = mid, g_mid
        if hi - lo < 1e-3:
            break
    raise CalibrationError(
        f"bisection converged without reaching target {target_delivered} "
        f"+- {tolerance}; best delivered {best[1]:.3f} at ensemble mean {best[0]:.4f}"
    )


# -- output files -------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _write_csv(path: str, header, rows) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"writing {path} failed: {exc.strerror}") from exc


def write_outputs(
    stats: ExperimentStats,
    log: EventLog | None,
    out_dir: str,
    config: ExperimentConfig,
) -> dict[str, str]:
    """Write fig4.csv, events.csv, and run_meta.json into ``out_dir``.

    Outputs are byte-stable for identical inputs: fixed float formatting,
    sorted JSON keys, no timestamps. Returns the written paths by name.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc.strerror}") from exc
    paths = {
        "fig4": os.path.join(out_dir, "fig4.csv"),
        "events": os.path.join(out_dir, "events.csv"),
        "run_meta": os.path.join(out_dir, "run_meta.json"),
    }
    _write_csv(
        paths["fig4"],
        (
            "cycle", "success_rate", "success_ci", "buffer_fill_mean",
            "buffer_fill_ci", "reservoir_norm", "reservoir_std",
        ),
        zip(
            stats.cycles, stats.success_rate, stats.success_ci,
            stats.buffer_fill_mean, stats.buffer_fill_ci,
            stats.reservoir_norm, stats.reservoir_std,
        ),
    )
    _write_csv(paths["events"], EventLog.COLUMNS, log.rows if log is not None else ())
    meta = {
        "version": __version__,
        "config": config.resolved(),
        "results": {
            "n_replicas": stats.n_replicas,
            "mean_delivered": stats.mean_delivered,
            "reservoir_baseline": stats.reservoir_baseline,
        },
    }
    try:
        with open(paths["run_meta"], "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"writing {paths['run_meta']} failed: {exc.strerror}") from exc
    return paths

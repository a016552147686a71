"""Experiment matrix execution, benchmarking, and CSV serialization.

The matrix crosses the four noise presets with the two outlier manners
over a list of seeds, runs both filter variants on every cell, and
collects per-variable indicator rows.  Work items are dispatched to a
process pool when more than one job is requested; results are merged in
the deterministic (noise, manner, seed) order either way.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import NOISE_PRESETS, with_noise_preset, with_outliers, with_seed
from .errors import DsekitError
from .evaluation import VARIABLES, report_from_run
from .filters import CKF, RCKF
from .noise import OutlierSpec
from .scenario import ScenarioConfig, filter_series, run_scenario, simulate_truth, synthesize_measurements

# Outlier placements used by the experiment matrix: one hit mid-run, and
# a one-second burst shortly after the fault.
SINGLE_OUTLIER_TIME = 6.0
WINDOW_OUTLIER_SPAN = (2.0, 3.0)
MANNERS = ("single", "window")

MATRIX_HEADER = (
    "noise", "manner", "filter", "seed", "variable",
    "epsilon1", "epsilon2", "mean_step_ms",
)
SUMMARY_HEADER = (
    "noise", "manner", "variable", "indicator",
    "ckf_median", "rckf_median", "improvement_pct",
)


@dataclass(frozen=True)
class MatrixRow:
    noise: int
    manner: str
    filter: str
    seed: int
    variable: str
    epsilon1: float | None
    epsilon2: float
    mean_step_ms: float | None


@dataclass(frozen=True)
class ExperimentMatrix:
    rows: tuple[MatrixRow, ...]
    failures: dict[str, str]
    cells_total: int
    cells_failed: int


@dataclass(frozen=True)
class TimingReport:
    variant: str
    steps: int
    mean_ms: float
    p50_ms: float
    p99_ms: float

    @classmethod
    def from_times_ns(cls, variant: str, times_ns: np.ndarray) -> "TimingReport":
        ms = np.asarray(times_ns, dtype=float) / 1e6
        return cls(
            variant=variant,
            steps=int(ms.size),
            mean_ms=float(ms.mean()),
            p50_ms=float(np.percentile(ms, 50)),
            p99_ms=float(np.percentile(ms, 99)),
        )


def manner_outliers(manner: str, base: OutlierSpec) -> OutlierSpec:
    """Outlier spec for one matrix manner, keeping the configured channel
    and scale."""
    if manner == "single":
        return OutlierSpec.single_at(
            SINGLE_OUTLIER_TIME, channel=base.channel, scale=base.scale
        )
    if manner == "window":
        return OutlierSpec.window(
            *WINDOW_OUTLIER_SPAN, channel=base.channel, scale=base.scale
        )
    raise ValueError(f"unknown outlier manner {manner!r}")


def _cell_key(preset: int, manner: str, seed: int) -> str:
    return f"noise{preset}/{manner}/seed{seed}"


def _run_cell(item) -> tuple[list[MatrixRow], dict[str, str]]:
    cfg, preset, manner, seed, timing = item
    key = _cell_key(preset, manner, seed)
    try:
        record = run_scenario(cfg)
    except DsekitError as exc:
        return [], {key: str(exc)}
    rows: list[MatrixRow] = []
    failures: dict[str, str] = {}
    for variant in (CKF, RCKF):
        if variant not in record.estimates:
            failures[f"{key}/{variant}"] = record.failures[variant]
            continue
        report = report_from_run(record, variant)
        mean_ms = (
            float(record.step_times_ns[variant].mean()) / 1e6 if timing else None
        )
        for variable in VARIABLES:
            rows.append(
                MatrixRow(
                    noise=preset,
                    manner=manner,
                    filter=variant,
                    seed=seed,
                    variable=variable,
                    epsilon1=report.epsilon1.get(variable),
                    epsilon2=report.epsilon2[variable],
                    mean_step_ms=mean_ms,
                )
            )
    return rows, failures


def run_experiment(
    cfg: ScenarioConfig,
    seeds,
    jobs: int = 1,
    timing: bool = False,
) -> ExperimentMatrix:
    """Run the full noise-by-manner matrix over the given seeds.

    Cell failures are collected, not raised; rows from failed cells are
    simply absent.  With timing enabled the mean wall time per filter step
    is recorded, which makes the output machine-dependent.
    """
    seeds = sorted(int(s) for s in seeds)
    items = []
    for preset in NOISE_PRESETS:
        for manner in MANNERS:
            spec = manner_outliers(manner, cfg.outliers)
            for seed in seeds:
                cell_cfg = with_seed(with_outliers(with_noise_preset(cfg, preset), spec), seed)
                items.append((cell_cfg, preset, manner, seed, timing))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, items, chunksize=1))
    else:
        results = [_run_cell(item) for item in items]
    rows: list[MatrixRow] = []
    failures: dict[str, str] = {}
    failed_cells = 0
    for cell_rows, cell_failures in results:
        rows.extend(cell_rows)
        failures.update(cell_failures)
        if not cell_rows:
            failed_cells += 1
    return ExperimentMatrix(
        rows=tuple(rows),
        failures=failures,
        cells_total=len(items),
        cells_failed=failed_cells,
    )


def summarize(matrix: ExperimentMatrix) -> list[tuple]:
    """Median indicators per (noise, manner, variable) across seeds, with
    the robust variant's relative improvement where defined."""
    groups: dict[tuple, dict[str, dict[str, list[float]]]] = {}
    for row in matrix.rows:
        cell = groups.setdefault(
            (row.noise, row.manner, row.variable),
            {CKF: {"epsilon1": [], "epsilon2": []}, RCKF: {"epsilon1": [], "epsilon2": []}},
        )
        if row.epsilon1 is not None:
            cell[row.filter]["epsilon1"].append(row.epsilon1)
        cell[row.filter]["epsilon2"].append(row.epsilon2)
    out: list[tuple] = []
    for (noise, manner, variable) in sorted(
        groups, key=lambda k: (k[0], k[1], VARIABLES.index(k[2]))
    ):
        cell = groups[(noise, manner, variable)]
        for indicator in ("epsilon1", "epsilon2"):
            ckf_vals = cell[CKF][indicator]
            rckf_vals = cell[RCKF][indicator]
            if not ckf_vals or not rckf_vals:
                continue
            ckf_med = float(np.median(ckf_vals))
            rckf_med = float(np.median(rckf_vals))
            improvement = (
                100.0 * (ckf_med - rckf_med) / ckf_med if ckf_med > 0.0 else None
            )
            out.append((noise, manner, variable, indicator, ckf_med, rckf_med, improvement))
    return out


def bench_filters(
    cfg: ScenarioConfig, steps: int, warmup: int = 100
) -> dict[str, TimingReport]:
    """Time both filter variants on one scenario.

    The horizon is extended so warmup + steps measurements exist; the
    first warmup step times are discarded.  Timing covers the
    predict-plus-update work only, not simulation or synthesis.
    """
    if steps < 1:
        raise ValueError(f"steps must be positive, got {steps}")
    needed = (steps + warmup) * cfg.dt
    bench_cfg = replace(cfg, t_end=max(cfg.t_end, needed))
    truth = simulate_truth(bench_cfg)
    _, corrupted = synthesize_measurements(truth, bench_cfg)
    _, step_times, _ = filter_series(bench_cfg, corrupted, (CKF, RCKF), strict=True)
    return {
        variant: TimingReport.from_times_ns(variant, times[warmup:])
        for variant, times in step_times.items()
    }


def format_float(value) -> str:
    """17 significant digit decimal form, empty string for missing."""
    if value is None:
        return ""
    return "%.17g" % value


def write_matrix_csv(path, matrix: ExperimentMatrix) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(MATRIX_HEADER) + "\n")
        for r in matrix.rows:
            fh.write(
                f"{r.noise},{r.manner},{r.filter},{r.seed},{r.variable},"
                f"{format_float(r.epsilon1)},{format_float(r.epsilon2)},"
                f"{format_float(r.mean_step_ms)}\n"
            )


def write_summary_csv(path, matrix: ExperimentMatrix) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SUMMARY_HEADER) + "\n")
        for noise, manner, variable, indicator, ckf_med, rckf_med, impr in summarize(matrix):
            fh.write(
                f"{noise},{manner},{variable},{indicator},"
                f"{format_float(ckf_med)},{format_float(rckf_med)},"
                f"{format_float(impr)}\n"
            )

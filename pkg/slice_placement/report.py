"""Charts and summary tables from metrics and timing CSVs."""

from __future__ import annotations

import csv
import logging
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .errors import ReportParseError  # noqa: E402
from .harness import EVAL_PHASE, METRICS_COLUMNS, TIMING_COLUMNS  # noqa: E402

_LOGGER = logging.getLogger(__name__)

ACCEPTANCE_CHART = "acceptance.svg"
EXEC_TIME_CHART = "exec_time.svg"
SUMMARY_FILE = "summary.txt"
SUMMARY_COLUMNS = 5

SeriesKey = Tuple[str, float]


@dataclass
class ReportData:
    # (engine, beta) -> phase -> acceptance ratios from every file sharing the key
    acceptance: Dict[SeriesKey, Dict[int, List[float]]] = field(
        default_factory=lambda: defaultdict(lambda: defaultdict(list))
    )
    evaluation: Dict[SeriesKey, List[float]] = field(default_factory=lambda: defaultdict(list))
    # (engine, nodes) -> list of (vnfs, mean_s)
    timing: Dict[Tuple[str, int], List[Tuple[int, float]]] = field(
        default_factory=lambda: defaultdict(list)
    )

    @property
    def empty(self) -> bool:
        return not (self.acceptance or self.evaluation or self.timing)


def _series_label(key: SeriesKey) -> str:
    engine, beta = key
    return f"{engine} beta={beta:g}" if engine == "hadrl" else engine


def _read_rows(path: Path, data: ReportData) -> None:
    with open(path, "r", encoding="utf-8", newline="") as csv_file:
        reader = csv.reader(csv_file)
        header = tuple(next(reader, ()))
        if header == METRICS_COLUMNS:
            kind = "metrics"
        elif header == TIMING_COLUMNS:
            kind = "timing"
        else:
            raise ReportParseError(f"{path}: unrecognised header {list(header)}", 1)

        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ReportParseError(
                    f"{path}: expected {len(header)} fields, got {len(row)}", line_number
                )
            try:
                if kind == "metrics":
                    key = (row[1], float(row[2]))
                    ratio = float(row[5])
                    if row[0] == EVAL_PHASE:
                        data.evaluation[key].append(ratio)
                    else:
                        data.acceptance[key][int(row[0])].append(ratio)
                else:
                    data.timing[(row[0], int(row[2]))].append((int(row[1]), float(row[3])))
            except ValueError as err:
                raise ReportParseError(f"{path}: {err}", line_number) from err


def read_report_data(inputs: Sequence[Path]) -> ReportData:
    data = ReportData()
    for path in sorted(inputs):
        _read_rows(path, data)
    return data


def _mean_curve(by_phase: Dict[int, List[float]]) -> Tuple[List[int], List[float]]:
    phases = sorted(by_phase)
    return phases, [statistics.mean(by_phase[p]) for p in phases]


def _save(fig: "plt.Figure", path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _acceptance_chart(data: ReportData, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in sorted(data.acceptance):
        phases, ratios = _mean_curve(data.acceptance[key])
        ax.plot(phases, [100.0 * r for r in ratios], marker="o", markersize=3, label=_series_label(key))
    ax.set_xlabel("Training phase")
    ax.set_ylabel("Acceptance ratio (%)")
    ax.set_ylim(0, 100)
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, path)


def _exec_time_chart(data: ReportData, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for engine, nodes in sorted(data.timing):
        points = sorted(data.timing[(engine, nodes)])
        ax.plot(
            [vnfs for vnfs, _ in points],
            [mean_s for _, mean_s in points],
            marker="s",
            markersize=3,
            label=f"{engine} |N|={nodes}",
        )
    ax.set_xlabel("VNFs per request")
    ax.set_ylabel("Mean placement time (s)")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    _save(fig, path)


def _summary_phases(phases: List[int]) -> List[int]:
    if len(phases) <= SUMMARY_COLUMNS:
        return phases
    step = len(phases) / SUMMARY_COLUMNS
    picked = [phases[int(round(step * (i + 1))) - 1] for i in range(SUMMARY_COLUMNS - 1)]
    return sorted(set(picked + [phases[-1]]))


def format_summary(data: ReportData) -> str:
    if data.empty:
        return "no data\n"

    lines: List[str] = []
    if data.acceptance or data.evaluation:
        all_phases = sorted({p for curve in data.acceptance.values() for p in curve})
        shown = _summary_phases(all_phases)
        header = ["engine".ljust(16)] + [f"phase {p}".rjust(10) for p in shown]
        if data.evaluation:
            header.append("eval".rjust(10))
        lines.append("Acceptance ratio (%)")
        lines.append(" ".join(header))
        for key in sorted(set(data.acceptance) | set(data.evaluation)):
            curve = data.acceptance.get(key, {})
            cells = [_series_label(key).ljust(16)]
            for phase in shown:
                value = curve.get(phase)
                cells.append(
                    (f"{100.0 * statistics.mean(value):.2f}" if value else "-").rjust(10)
                )
            if data.evaluation:
                ev = data.evaluation.get(key)
                cells.append((f"{100.0 * statistics.mean(ev):.2f}" if ev else "-").rjust(10))
            lines.append(" ".join(cells))

    if data.timing:
        if lines:
            lines.append("")
        lines.append("Mean placement time (s)")
        lines.append(" ".join(["engine".ljust(10), "|N|".rjust(6), "|V|".rjust(6), "mean_s".rjust(12)]))
        for engine, nodes in sorted(data.timing):
            for vnfs, mean_s in sorted(data.timing[(engine, nodes)]):
                lines.append(
                    " ".join(
                        [engine.ljust(10), str(nodes).rjust(6), str(vnfs).rjust(6), f"{mean_s:.6f}".rjust(12)]
                    )
                )
    return "\n".join(lines) + "\n"


def emit_report(inputs: Sequence[Path], output_dir: Path) -> List[Path]:
    """Render every chart the inputs support plus summary.txt; returns written paths."""
    data = read_report_data(inputs)
    output_dir.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "slice-placement"

    written: List[Path] = []
    if data.acceptance:
        written.append(output_dir / ACCEPTANCE_CHART)
        _acceptance_chart(data, written[-1])
    if data.timing:
        written.append(output_dir / EXEC_TIME_CHART)
        _exec_time_chart(data, written[-1])

    summary = output_dir / SUMMARY_FILE
    summary.write_text(format_summary(data), encoding="utf-8")
    written.append(summary)
    for path in written:
        _LOGGER.info("Wrote %s", path)
    return written

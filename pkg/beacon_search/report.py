"""CSV, SVG and text summaries of an aggregated experiment."""

from __future__ import annotations

import csv
import os
from typing import Dict, Iterable

import matplotlib
from matplotlib.figure import Figure

from .formatting import format_summary_table
from .harness import AggregateReport


REPORT_FORMATS = ("csv", "svg", "txt")
CSV_COLUMNS = ("algorithm", "iteration", "mean_reach", "std_reach")


def write_csv(report: AggregateReport, path: str) -> str:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for label in report.labels:
            for t, (mean, std) in enumerate(zip(report.mean[label], report.std[label]), start=1):
                writer.writerow([label, t, "%.8f" % mean, "%.8f" % std])
    return path


def write_svg(report: AggregateReport, path: str) -> str:
    fig = Figure(figsize=(7.0, 4.5))
    ax = fig.subplots()
    x = report.iterations()
    for label in report.labels:
        mean = report.mean[label]
        std = report.std[label]
        (line,) = ax.plot(x, mean, label=f"{label} (R={report.replicates[label]})", linewidth=1.6)
        ax.fill_between(x, mean - std, mean + std, color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("iterations")
    ax.set_ylabel("reachability")
    ax.set_xlim(1, max(report.length, 2))
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    with matplotlib.rc_context({"svg.hashsalt": "beacon-search"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def write_summary(report: AggregateReport, path: str) -> str:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(format_summary_table(report.final_rows(), report.num_bins) + "\n")
    return path


def write_report(
    report: AggregateReport,
    output_dir: str,
    formats: Iterable[str] = REPORT_FORMATS,
) -> Dict[str, str]:
    if not report.labels:
        raise ValueError("nothing to report")
    os.makedirs(output_dir, exist_ok=True)
    writers = {"csv": (write_csv, "reachability.csv"), "svg": (write_svg, "reachability.svg"), "txt": (write_summary, "summary.txt")}
    written: Dict[str, str] = {}
    for fmt in formats:
        if fmt not in writers:
            raise ValueError(f"unknown report format {fmt!r}; use one of {REPORT_FORMATS}")
        writer, name = writers[fmt]
        written[fmt] = writer(report, os.path.join(output_dir, name))
    return written

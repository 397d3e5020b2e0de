"""Render bench reports as an aligned table, CSV rows or a figure."""

from __future__ import annotations

import csv
import io
from typing import Iterable, Optional, Sequence, TextIO

from secfb.bench.harness import BenchReport, Topology

__all__ = ["render_table", "render_verdicts", "write_csv", "CSV_HEADER", "render_figure"]

CSV_HEADER = ("config", "topology", "cycle", "link", "t1", "t2", "L", "epoch")
BASELINE = "Latency without encryption"


def _fmt(x: float) -> str:
    return f"{x:g}"


def _cell(report: Optional[BenchReport]) -> str:
    if report is None:
        return "-"
    return f"{_fmt(report.min)}-{_fmt(report.max)} ms (mean {report.mean:.2f})"


def render_table(reports: Sequence[BenchReport]) -> str:
    """One row per configuration label, one column per topology.

    Cells read ``min-max ms (mean m)``; the unencrypted baseline comes first.
    """
    labels: list[str] = []
    for r in reports:
        if r.label not in labels:
            labels.append(r.label)
    labels = [lab for lab in labels if lab == BASELINE] + [lab for lab in labels if lab != BASELINE]
    topologies = [t for t in Topology if any(r.topology is t for r in reports)]
    cells = {(r.label, r.topology): r for r in reports}
    cycles = sorted({r.cycles for r in reports})
    header = ["Configuration", *(("Single device" if t is Topology.SINGLE else "Distributed") for t in topologies)]
    rows = [[lab, *(_cell(cells.get((lab, t))) for t in topologies)] for lab in labels]
    widths = [max(len(row[i]) for row in [header, *rows]) for i in range(len(header))]
    lines = [f"Latency of FBs over {'/'.join(map(str, cycles))} cycles"]
    for row in [header, *rows]:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if row is header:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_verdicts(reports: Sequence[BenchReport]) -> str:
    """Deadline pass/fail counts, one line per configuration and function."""
    lines = []
    for r in reports:
        for v in r.verdicts:
            lines.append(
                f"{r.label:<28} {r.topology.value:<11} {v.function.value:<12} "
                f"deadline {_fmt(v.deadline)} ms: {v.passed} pass, {v.failed} fail"
            )
        if r.missing:
            lines.append(f"{r.label:<28} {r.topology.value:<11} {r.missing} samples missing")
        if r.trip_mismatches:
            lines.append(f"{r.label:<28} {r.topology.value:<11} trip sequence mismatch on links {list(r.trip_mismatches)}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_csv(reports: Iterable[BenchReport], out: Optional[TextIO] = None) -> str:
    """One row per (configuration, cycle, link); returns the text when ``out`` is None."""
    buf = out if out is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        for row in r.rows():
            writer.writerow((r.label, r.topology.value, *row))
    return "" if out is not None else buf.getvalue()


def render_figure(reports: Sequence[BenchReport], path: str) -> None:
    """Box plot of latency per configuration, written to ``path``.

    matplotlib is imported here so the rest of the package works without it.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(reports)), 4.0))
    data = [[s.latency for s in r.samples] for r in reports]
    names = [f"{r.label}\n{r.topology.value}" for r in reports]
    ax.boxplot(data)
    ax.set_xticks(range(1, len(names) + 1))
    ax.set_xticklabels(names, fontsize=8)
    ax.set_ylabel("latency L = t2 - t1 (ms)")
    ax.set_title("Trip signal latency")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

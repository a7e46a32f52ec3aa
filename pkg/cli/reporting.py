# stcmot-desk/cli/reporting.py
"""
Rendering of evaluation results (JSON document and aligned text table) and the
optional SVG trajectory overlay.
"""

import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from cli.mot_io import atomic_write  # noqa: E402
from tracking.metrics import MetricsReport, MotCounts  # noqa: E402
from tracking.records import TrajectorySet  # noqa: E402

UNDEFINED = "undefined"
TABLE_COLUMNS = ("IDF1", "MOTA", "MT", "ML", "FP", "FN", "IDS", "IDP", "IDR", "Prec", "Rec")


def report_json(report: MetricsReport) -> str:
    """Report as indented JSON; an undefined MOTA is written as ``"undefined"``."""
    doc = report.model_dump(mode="json")
    for counts in [doc["aggregate"], *doc["sequences"].values()]:
        if counts["mota"] is None:
            counts["mota"] = UNDEFINED
    return json.dumps(doc, indent=2) + "\n"


def _pct(value: float | None) -> str:
    return UNDEFINED if value is None else f"{100 * value:.1f}"


def _row(name: str, c: MotCounts) -> list[str]:
    return [
        name, _pct(c.idf1), _pct(c.mota), str(c.mt), str(c.ml), str(c.fp), str(c.fn), str(c.ids),
        _pct(c.idp), _pct(c.idr), _pct(c.precision), _pct(c.recall),
    ]


def format_table(report: MetricsReport) -> str:
    """Aligned text table, one row per sequence plus the overall row; scores in percent."""
    rows = [["Sequence", *TABLE_COLUMNS]]
    rows += [_row(name, c) for name, c in report.sequences.items()]
    rows.append(_row("OVERALL", report.aggregate))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths))) for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def render_svg(trajectories: TrajectorySet, image_size: tuple[int, int], title: str = "") -> bytes:
    """Draw every track's center path over the image frame as SVG bytes."""
    img_w, img_h = image_size
    paths: dict[int, list[tuple[float, float]]] = {}
    for frame in sorted(trajectories):
        for b in trajectories[frame]:
            left, top, w, h = b.box
            paths.setdefault(b.id, []).append((left + w / 2, top + h / 2))

    with plt.rc_context({"svg.hashsalt": "stcmot", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.0, 6.0 * img_h / img_w))
        cmap = plt.get_cmap("tab20")
        for tid, pts in sorted(paths.items()):
            xs, ys = zip(*pts)
            ax.plot(xs, ys, "-", lw=1.0, color=cmap(tid % 20))
            ax.annotate(str(tid), pts[-1], fontsize=6, color=cmap(tid % 20))
        ax.set_xlim(0, img_w)
        ax.set_ylim(img_h, 0)
        ax.set_aspect("equal")
        if title:
            ax.set_title(title)
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def write_svg(path: str | Path, trajectories: TrajectorySet, image_size: tuple[int, int], title: str = "") -> None:
    atomic_write(path, render_svg(trajectories, image_size, title))

# stcmot-desk/cli/workflows/eval_workflow.py
"""Handles the `eval` command: ground truth plus results in, metrics report out."""

from functools import partial
from pathlib import Path

from cli.mot_io import atomic_write, parse_mot_file
from cli.reporting import report_json
from cli.workflows.sequences import find_sequences, run_parallel
from logger_config import cli_logger
from schemas import RunConfig
from tracking.metrics import MetricsReport, MotCounts, build_report, evaluate_sequence


def eval_sequence(
    seq_dir: Path, config: RunConfig, results_name: str, iou_min: float, single_class: bool
) -> tuple[str, MotCounts]:
    gt = parse_mot_file(seq_dir / config.outputs.gt)
    pred = parse_mot_file(seq_dir / results_name)
    return seq_dir.name, evaluate_sequence(gt, pred, iou_min, single_class)


def handle_eval(
    config: RunConfig,
    path: str | Path,
    workers: int = 1,
    results_name: str | None = None,
    report_path: str | Path | None = None,
    iou_min: float | None = None,
    single_class: bool | None = None,
) -> tuple[MetricsReport, Path]:
    """Evaluate every sequence under ``path`` and write the JSON report.

    Unset options fall back to the run config. The report goes to
    ``report_path`` or to the configured report name inside ``path``.

    Returns:
        The report and where it was written.
    """
    path = Path(path)
    iou_min = config.iou_min if iou_min is None else iou_min
    single_class = config.single_class if single_class is None else single_class
    results_name = results_name or config.outputs.results
    seqs = find_sequences(path, config.outputs.gt)
    fn = partial(eval_sequence, config=config, results_name=results_name, iou_min=iou_min, single_class=single_class)
    report = build_report(dict(run_parallel(fn, seqs, workers)), iou_min, single_class)
    out = Path(report_path) if report_path else path / config.outputs.report
    atomic_write(out, report_json(report))
    cli_logger.info("wrote report for %d sequences to %s", len(seqs), out)
    return report, out

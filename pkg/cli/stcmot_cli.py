# stcmot-desk/cli/stcmot_cli.py
"""Command-line surface: synth, track, eval, modules and bench."""

import sys
from pathlib import Path

import click

from cli.mot_io import DataFormatError
from cli.reporting import format_table
from cli.workflows.bench_workflow import handle_bench
from cli.workflows.eval_workflow import handle_eval
from cli.workflows.modules_workflow import SelfCheckFailure, handle_modules
from cli.workflows.synth_workflow import handle_synth
from cli.workflows.track_workflow import handle_track
from logger_config import cli_logger
from schemas import ConfigError, load_run_config, with_seed

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="YAML run config; defaults apply to everything it leaves out.",
)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Override the run seed.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, seed: int | None) -> None:
    """Desk-scale spatio-temporal multi-object tracking toolkit.

    Args:
        ctx: Click context; ``ctx.obj`` receives the validated RunConfig.
        config_path: Optional YAML config file.
        seed: Optional seed override.

    Raises:
        ConfigError: If the config cannot be read or validated.
    """
    if config_path is not None and not Path(config_path).is_file():
        raise FileNotFoundError(f"config file not found: {config_path}")
    ctx.obj = with_seed(load_run_config(config_path), seed)


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--sequences", type=click.IntRange(1, 999), default=1, help="Number of sequences to generate.")
@click.pass_obj
def synth(config, out_dir: str, sequences: int) -> None:
    """Generate ground truth, detections and embeddings into OUT_DIR."""
    for path in handle_synth(config, out_dir, sequences):
        click.echo(f"wrote {path}")


@cli.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--workers", type=click.IntRange(1, 64), default=1, help="Parallel sequence workers.")
@click.option("--svg", is_flag=True, help="Also write a tracks.svg overlay per sequence.")
@click.pass_obj
def track(config, path: str, workers: int, svg: bool) -> None:
    """Track the sequence at PATH, or every sequence directory below it."""
    for s in handle_track(config, path, workers, svg):
        click.echo(f"{s.sequence}: {s.frames} frames, {s.tracks} tracks, {s.boxes} boxes")


@cli.command(name="eval")
@click.argument("path", type=click.Path(exists=True))
@click.option("--results", "results_name", default=None, help="Results file name inside each sequence.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None, help="Where to write the JSON report.")
@click.option("--iou-min", type=click.FloatRange(0.0, 1.0, min_open=True), default=None, help="Match threshold.")
@click.option("--single-class/--class-aware", default=None, help="Ignore class ids when matching.")
@click.option("--workers", type=click.IntRange(1, 64), default=1, help="Parallel sequence workers.")
@click.pass_obj
def evaluate(config, path: str, results_name, report_path, iou_min, single_class, workers: int) -> None:
    """Score results against ground truth and print the metrics table."""
    report, out = handle_eval(config, path, workers, results_name, report_path, iou_min, single_class)
    click.echo(format_table(report), nl=False)
    click.echo(f"report: {out}")


@cli.command()
@click.option("--dump", "dump_dir", type=click.Path(file_okay=False), default=None, help="Directory for a tensor dump.")
@click.pass_obj
def modules(config, dump_dir: str | None) -> None:
    """Run the module self-checks on rendered synthetic maps."""
    results = handle_modules(config, dump_dir)
    for r in results:
        click.echo(f"{'ok  ' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise SelfCheckFailure(f"failed checks: {', '.join(failed)}")


@cli.command()
@click.option("--repeats", type=click.IntRange(1, 1000), default=3, help="Calls per timed stage.")
@click.pass_obj
def bench(config, repeats: int) -> None:
    """Print per-stage timings."""
    for t in handle_bench(config, repeats):
        click.echo(f"{t.stage:<20} {t.per_call_ms:10.2f} ms")


def main(argv: list[str] | None = None) -> int:
    """Run the CLI and map failures to exit codes (1 usage, 2 data)."""
    try:
        cli.main(args=argv, prog_name="stcmot", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("Aborted.", err=True)
        return EXIT_USAGE
    except (ConfigError, DataFormatError, FileNotFoundError, SelfCheckFailure) as e:
        cli_logger.error("run failed: %s", e, exc_info=True)
        click.echo(f"Error: {e}", err=True)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

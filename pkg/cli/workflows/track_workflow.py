# stcmot-desk/cli/workflows/track_workflow.py
"""Handles the `track` command: detections plus sidecar in, MOT results out."""

from dataclasses import dataclass
from functools import partial
from pathlib import Path

from cli.mot_io import read_detections, write_mot_file
from cli.reporting import write_svg
from cli.workflows.sequences import dense_frames, find_sequences, run_parallel
from logger_config import cli_logger
from schemas import RunConfig
from tracking.tracker import run_sequence


@dataclass(frozen=True)
class TrackSummary:
    sequence: str
    frames: int
    tracks: int
    boxes: int


def track_sequence(seq_dir: Path, config: RunConfig, svg: bool = False) -> TrackSummary:
    out = config.outputs
    dets = dense_frames(read_detections(seq_dir / out.detections, seq_dir / out.embeddings))
    traj = run_sequence(dets, config.tracker)
    write_mot_file(seq_dir / out.results, traj)
    if svg:
        write_svg(seq_dir / "tracks.svg", traj, (config.scene.image_w, config.scene.image_h), seq_dir.name)
    summary = TrackSummary(
        seq_dir.name,
        len(dets),
        len({b.id for boxes in traj.values() for b in boxes}),
        sum(map(len, traj.values())),
    )
    cli_logger.info("tracked %s", summary)
    return summary


def handle_track(config: RunConfig, path: str | Path, workers: int = 1, svg: bool = False) -> list[TrackSummary]:
    """Track every sequence under ``path``, one tracker per worker process."""
    seqs = find_sequences(path, config.outputs.detections)
    return run_parallel(partial(track_sequence, config=config, svg=svg), seqs, workers)

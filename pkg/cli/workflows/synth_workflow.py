# stcmot-desk/cli/workflows/synth_workflow.py
"""Handles the `synth` command: ground truth, detections and embeddings from a config."""

from pathlib import Path

from cli.mot_io import write_detections, write_mot_file
from logger_config import cli_logger
from schemas import RunConfig, with_seed
from tracking.synth import corrupt, generate_scene, gt_ids, make_prototypes


def synth_sequence(config: RunConfig, out_dir: Path) -> Path:
    """Generate one sequence into ``out_dir`` using the configured file names."""
    gt = generate_scene(config.scene)
    protos = make_prototypes(gt_ids(gt), config.corruption.embed_dim, seed=config.corruption.seed + 1)
    dets = corrupt(gt, config.corruption, protos, (config.scene.image_w, config.scene.image_h))
    out = config.outputs
    write_mot_file(out_dir / out.gt, gt)
    write_detections(out_dir / out.detections, out_dir / out.embeddings, dets)
    cli_logger.info(
        "synth %s: %d frames, %d gt boxes, %d detections",
        out_dir, len(gt), sum(map(len, gt.values())), sum(map(len, dets.values())),
    )
    return out_dir


def handle_synth(config: RunConfig, out_dir: str | Path, sequences: int = 1) -> list[Path]:
    """Write one sequence into ``out_dir`` or ``sequences`` numbered subdirectories.

    Sequence ``i`` of several uses run seed ``config.seed + i``.
    """
    out_dir = Path(out_dir)
    if sequences == 1:
        return [synth_sequence(config, out_dir)]
    return [synth_sequence(with_seed(config, config.seed + i), out_dir / f"seq{i:02d}") for i in range(sequences)]

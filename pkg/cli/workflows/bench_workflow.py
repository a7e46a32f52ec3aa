# stcmot-desk/cli/workflows/bench_workflow.py
"""Handles the `bench` command: wall-clock timings of the main stages."""

import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from logger_config import cli_logger
from schemas import RunConfig
from tracking.metrics import evaluate_sequence
from tracking.model import StcmotParams, stcmot_forward
from tracking.synth import corrupt, generate_scene, gt_ids, make_prototypes, render_maps
from tracking.tracker import run_sequence


@dataclass(frozen=True)
class Timing:
    stage: str
    seconds: float
    repeats: int

    @property
    def per_call_ms(self) -> float:
        return 1000.0 * self.seconds / self.repeats


def _time(stage: str, fn: Callable[[], object], repeats: int) -> Timing:
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return Timing(stage, time.perf_counter() - start, repeats)


def handle_bench(config: RunConfig, repeats: int = 3) -> list[Timing]:
    """Time scene generation, corruption, tracking, evaluation and one model forward pass."""
    scene, layout = config.scene, config.layout
    gt = generate_scene(scene)
    protos = make_prototypes(gt_ids(gt), config.corruption.embed_dim, seed=config.corruption.seed + 1)
    dets = corrupt(gt, config.corruption, protos, (scene.image_w, scene.image_h))
    traj = run_sequence(dets, config.tracker)

    map_scene = scene.model_copy(update={"image_w": layout.width * layout.stride, "image_h": layout.height * layout.stride})
    map_gt = generate_scene(map_scene.model_copy(update={"num_frames": 2, "num_classes": layout.num_classes}))
    map_protos = make_prototypes(gt_ids(map_gt), layout.embed_dim, seed=config.seed)
    prev, curr = (render_maps(map_gt[f], layout, map_protos) for f in (1, 2))
    params = StcmotParams.random(layout, np.random.default_rng(config.seed))

    timings = [
        _time("generate_scene", lambda: generate_scene(scene), repeats),
        _time("corrupt", lambda: corrupt(gt, config.corruption, protos, (scene.image_w, scene.image_h)), repeats),
        _time("run_sequence", lambda: run_sequence(dets, config.tracker), repeats),
        _time("evaluate_sequence", lambda: evaluate_sequence(gt, traj, config.iou_min), repeats),
        _time("stcmot_forward", lambda: stcmot_forward(prev.fm, curr.fm, params), repeats),
    ]
    for t in timings:
        cli_logger.info("bench %s: %.2f ms/call", t.stage, t.per_call_ms)
    return timings

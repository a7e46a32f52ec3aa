# stcmot-desk/cli/workflows/modules_workflow.py
"""
Handles the `modules` command: self-checks of TEBM, TDRM, decoding and the
losses on rendered synthetic maps, with an optional tensor dump.
"""

from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cli.mot_io import save_tensors
from logger_config import cli_logger
from schemas import RunConfig
from tracking.experiments import dropout_ablation, monotone_evidence_check
from tracking.losses import focal_heat_loss, l1_reg_loss
from tracking.model import StcmotParams, decode_detections, stcmot_forward
from tracking.synth import generate_scene, gt_ids, make_prototypes, render_maps, sample_training_pair
from tracking.tdrm import TdrmParams, max_csam, pick_topk
from tracking.tebm import BoostInputs, TebmParams, tebm_forward
from tracking.tensorlab import conv2d, relu

FD_STEP = 1e-4


class SelfCheckFailure(RuntimeError):
    """Raised when at least one module self-check fails."""


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    passed, detail = fn()
    cli_logger.info("module check %s: %s (%s)", name, "ok" if passed else "FAILED", detail)
    return CheckResult(name, passed, detail)


def _central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, cells: np.ndarray) -> np.ndarray:
    out = np.zeros(len(cells))
    flat = x.reshape(-1)
    for n, i in enumerate(cells):
        orig = flat[i]
        flat[i] = orig + FD_STEP
        up = f(x)
        flat[i] = orig - FD_STEP
        down = f(x)
        flat[i] = orig
        out[n] = (up - down) / (2 * FD_STEP)
    return out


def handle_modules(config: RunConfig, dump_dir: str | Path | None = None) -> list[CheckResult]:
    """Run every self-check on maps rendered from the configured scene.

    Returns:
        One result per check, in a fixed order.
    """
    layout, rng = config.layout, np.random.default_rng(config.seed)
    scene = config.scene.model_copy(
        update={"image_w": layout.width * layout.stride, "image_h": layout.height * layout.stride, "num_classes": layout.num_classes}
    )
    gt = generate_scene(scene)
    protos = make_prototypes(gt_ids(gt), layout.embed_dim, seed=config.seed)
    f_prev, f_curr = sample_training_pair(gt, 3, rng)
    prev, curr = render_maps(gt[f_prev], layout, protos), render_maps(gt[f_curr], layout, protos)
    params = StcmotParams.random(layout, rng)
    outputs = stcmot_forward(prev.fm, curr.fm, params)
    results = []

    def tebm_fallback():
        out = tebm_forward(BoostInputs(prev.idmap, curr.idmap), TebmParams.identity(layout.embed_dim))
        err = float(np.abs(out - relu(curr.idmap)).max())
        return bool(np.allclose(out, relu(curr.idmap), rtol=1e-4, atol=1e-7)), f"max deviation from ReLU(ID_t) {err:.2e}"

    def zero_attention_gate():
        k = min(layout.k, layout.num_classes * layout.height * layout.width)
        tdrm = TdrmParams.zero_attention(k, layout.num_classes, rng, layout.fm_channels)
        m = rng.standard_normal((k, layout.height, layout.width)).astype(np.float32)
        err = float(np.abs(max_csam(m, tdrm) - 0.25 * conv2d(m, tdrm.reduce)).max())
        return err < 1e-6, f"max |M̂ - 0.25·M_r| = {err:.2e}"

    def topk_order():
        picks = pick_topk(prev.hm, prev.idmap, layout.k)
        ok = bool(np.all(np.diff(picks.scores) <= 0))
        return ok, f"{picks.k} picks, top score {picks.scores[0]:.3f}"

    def forward_shapes():
        c, h, w = layout.num_classes, layout.height, layout.width
        want = {"hm_refined": (c, h, w), "id_boosted": (layout.embed_dim, h, w), "offset": (2, h, w), "size": (2, h, w)}
        got = {k: getattr(outputs, k).shape for k in want}
        return got == want, str(got)

    def decode_roundtrip():
        off, wh = curr.reg.to_dense(layout.height, layout.width)
        dets = decode_detections(curr.hm, off, wh, curr.idmap, len(gt[f_curr]) + 1, layout.stride, score_min=0.99)
        cells = list(curr.reg.centers)
        truth = {tuple(np.round(b.box, 3)) for b, c in zip(gt[f_curr], cells) if cells.count(c) == 1}
        found = truth & {tuple(np.round(d.box, 3)) for d in dets}
        return found == truth, f"{len(found)} of {len(truth)} unshared boxes recovered"

    def focal_gradient():
        pred = np.clip(rng.uniform(0.05, 0.95, curr.hm.shape), 0.05, 0.95)
        target = curr.heat_target
        _, grad = focal_heat_loss(pred, target)
        cells = rng.choice(pred.size, size=8, replace=False)
        fd = _central_difference(lambda p: focal_heat_loss(p, target)[0], pred, cells)
        diff = np.abs(fd - grad.reshape(-1)[cells])
        return bool(np.all(diff <= 1e-4 * np.abs(fd) + 1e-7)), f"max abs error {diff.max():.2e}"

    def l1_value():
        res = l1_reg_loss(outputs.offset, outputs.size, curr.reg)
        return bool(np.isfinite(res.total)), f"L_off={res.off:.4f} L_wh={res.wh:.4f}"

    def prior_gain():
        gains = dropout_ablation(scene, layout, seed=config.seed)
        worst = min((g.gain for g in gains), default=0.0)
        return bool(gains) and worst > 0.0, f"{len(gains)} dropped cells, min gain {worst:.4g}"

    def monotone():
        tdrm = TdrmParams.evidence_prior(layout.k, layout.num_classes, layout.fm_channels)
        m_hat = rng.random((tdrm.reduced_channels, layout.height, layout.width)).astype(np.float32)
        worst = monotone_evidence_check(curr.fm, m_hat, tdrm, rng, trials=20)
        return worst >= 0.0, f"min delta {worst:.3g}"

    for name, fn in [
        ("tebm-identity-fallback", tebm_fallback),
        ("max-csam-zero-attention", zero_attention_gate),
        ("topk-order", topk_order),
        ("forward-shapes", forward_shapes),
        ("decode-ground-truth", decode_roundtrip),
        ("focal-gradient", focal_gradient),
        ("l1-finite", l1_value),
        ("heatmap-prior-gain", prior_gain),
        ("monotone-evidence", monotone),
    ]:
        results.append(_check(name, fn))

    if dump_dir is not None:
        blob = params.to_tensors() | outputs.as_tensors()
        blob |= {"maps.fm_prev": prev.fm, "maps.fm_curr": curr.fm, "maps.hm_prev": prev.hm, "maps.hm_curr": curr.hm}
        save_tensors(Path(dump_dir) / "modules.npz", blob)
    return results

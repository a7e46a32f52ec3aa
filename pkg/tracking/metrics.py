"""CLEAR-MOT and identity metrics.

Per frame, ground-truth boxes are matched to predictions with carry-over: a
correspondence seen before is kept while its IOU stays at or above the match
threshold, and the remaining boxes are paired by a minimum (1 - IOU)
assignment. Identity scores come from one global truth-to-prediction id
assignment over per-pair overlap counts.
"""

from collections import Counter, defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, NonNegativeInt, computed_field

from logger_config import tracking_logger
from tracking.matching import FORBIDDEN, hungarian, iou_matrix
from tracking.records import AnnotatedBox, FrameBoxes

MT_RATIO = 0.8
ML_RATIO = 0.2


def _ratio(num: int, den: int) -> float:
    return num / den if den > 0 else 0.0


class MotCounts(BaseModel):
    """Raw counts of one sequence (or a sum of sequences) and the scores derived from them."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_gt: NonNegativeInt = 0
    num_pred: NonNegativeInt = 0
    tp: NonNegativeInt = 0
    fp: NonNegativeInt = 0
    fn: NonNegativeInt = 0
    ids: NonNegativeInt = 0
    num_gt_tracks: NonNegativeInt = 0
    mt: NonNegativeInt = 0
    ml: NonNegativeInt = 0
    idtp: NonNegativeInt = 0
    idfp: NonNegativeInt = 0
    idfn: NonNegativeInt = 0

    def __add__(self, other: "MotCounts") -> "MotCounts":
        return MotCounts(**{k: getattr(self, k) + getattr(other, k) for k in MotCounts.model_fields})

    @computed_field
    @property
    def mota(self) -> float | None:
        """``1 - (FN + FP + IDS) / GT``; ``None`` when there is no ground truth."""
        if self.num_gt == 0:
            return None
        return 1.0 - (self.fn + self.fp + self.ids) / self.num_gt

    @computed_field
    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @computed_field
    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @computed_field
    @property
    def idp(self) -> float:
        return _ratio(self.idtp, self.idtp + self.idfp)

    @computed_field
    @property
    def idr(self) -> float:
        return _ratio(self.idtp, self.idtp + self.idfn)

    @computed_field
    @property
    def idf1(self) -> float:
        return _ratio(2 * self.idtp, 2 * self.idtp + self.idfp + self.idfn)


class MetricsReport(BaseModel):
    """Per-sequence metrics plus their aggregate (counts summed, then scored)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    iou_min: float
    single_class: bool
    sequences: dict[str, MotCounts]
    aggregate: MotCounts


@dataclass(frozen=True)
class FrameMatch:
    """Outcome of matching one frame.

    ``history`` is the updated gt id -> last matched prediction id map to pass
    as ``carry`` to the next frame.
    """

    matches: list[tuple[int, int]]
    fp: list[int]
    fn: list[int]
    ids: int
    history: dict[int, int] = field(default_factory=dict)


def _forbid_classes(cost: np.ndarray, gt: Sequence[AnnotatedBox], pred: Sequence[AnnotatedBox]) -> None:
    g = np.array([b.class_id for b in gt])[:, None]
    p = np.array([b.class_id for b in pred])[None, :]
    cost[g != p] = FORBIDDEN


def frame_match(
    gt_boxes: Sequence[AnnotatedBox],
    pred_boxes: Sequence[AnnotatedBox],
    iou_min: float = 0.5,
    carry: Mapping[int, int] | None = None,
    class_aware: bool = True,
) -> FrameMatch:
    """Match one frame's ground truth to predictions, CLEAR style.

    Args:
        gt_boxes: Ground-truth boxes of the frame (unique ids).
        pred_boxes: Predicted boxes of the frame (unique ids).
        iou_min: Minimum IOU of a valid pair.
        carry: gt id -> prediction id it was last matched to, from earlier frames.
        class_aware: Only pair boxes that share a class id.

    Returns:
        Matched (gt id, pred id) pairs, unmatched prediction ids (FP), unmatched
        ground-truth ids (FN), identity switches and the updated history.
    """
    history = dict(carry or {})
    n, m = len(gt_boxes), len(pred_boxes)
    cost = 1.0 - iou_matrix(
        np.array([b.box for b in gt_boxes]).reshape(-1, 4), np.array([b.box for b in pred_boxes]).reshape(-1, 4)
    )
    if n and m:
        cost[cost > 1.0 - iou_min] = FORBIDDEN
        if class_aware:
            _forbid_classes(cost, gt_boxes, pred_boxes)

    pred_col = {b.id: j for j, b in enumerate(pred_boxes)}
    pairs: list[tuple[int, int]] = []
    used_r, used_c = set(), set()
    for i in sorted(range(n), key=lambda i: gt_boxes[i].id):
        j = pred_col.get(history.get(gt_boxes[i].id, None))
        if j is not None and j not in used_c and np.isfinite(cost[i, j]):
            pairs.append((i, j))
            used_r.add(i)
            used_c.add(j)

    rows = [i for i in range(n) if i not in used_r]
    cols = [j for j in range(m) if j not in used_c]
    if rows and cols:
        for r, c in hungarian(cost[np.ix_(rows, cols)]):
            pairs.append((rows[r], cols[c]))
            used_r.add(rows[r])
            used_c.add(cols[c])

    ids = 0
    matches = []
    for i, j in sorted(pairs, key=lambda p: gt_boxes[p[0]].id):
        gid, pid = gt_boxes[i].id, pred_boxes[j].id
        if gid in history and history[gid] != pid:
            ids += 1
        history[gid] = pid
        matches.append((gid, pid))
    return FrameMatch(
        matches=matches,
        fp=[pred_boxes[j].id for j in range(m) if j not in used_c],
        fn=[gt_boxes[i].id for i in range(n) if i not in used_r],
        ids=ids,
        history=history,
    )


def _frames(gt: FrameBoxes, pred: FrameBoxes) -> list[int]:
    return sorted(set(gt) | set(pred))


def clear_mot(gt: FrameBoxes, pred: FrameBoxes, iou_min: float = 0.5, single_class: bool = False) -> MotCounts:
    """CLEAR-MOT counts plus mostly-tracked / mostly-lost over a sequence.

    Returns:
        Counts with the identity fields left at zero.
    """
    history: dict[int, int] = {}
    lifespan: Counter[int] = Counter()
    tracked: Counter[int] = Counter()
    tp = fp = fn = ids = num_pred = 0
    for frame in _frames(gt, pred):
        g, p = gt.get(frame, []), pred.get(frame, [])
        fm = frame_match(g, p, iou_min, history, class_aware=not single_class)
        history = fm.history
        lifespan.update(b.id for b in g)
        tracked.update(gid for gid, _ in fm.matches)
        tp += len(fm.matches)
        fp += len(fm.fp)
        fn += len(fm.fn)
        ids += fm.ids
        num_pred += len(p)
    ratios = [tracked[gid] / n for gid, n in lifespan.items()]
    return MotCounts(
        num_gt=sum(lifespan.values()),
        num_pred=num_pred,
        tp=tp,
        fp=fp,
        fn=fn,
        ids=ids,
        num_gt_tracks=len(lifespan),
        mt=sum(r >= MT_RATIO for r in ratios),
        ml=sum(r <= ML_RATIO for r in ratios),
    )


@dataclass(frozen=True)
class IdentityCounts:
    idtp: int
    idfp: int
    idfn: int

    @property
    def idp(self) -> float:
        return _ratio(self.idtp, self.idtp + self.idfp)

    @property
    def idr(self) -> float:
        return _ratio(self.idtp, self.idtp + self.idfn)

    @property
    def idf1(self) -> float:
        return _ratio(2 * self.idtp, 2 * self.idtp + self.idfp + self.idfn)


def overlap_counts(
    gt: FrameBoxes, pred: FrameBoxes, iou_min: float = 0.5, single_class: bool = False
) -> tuple[list[int], list[int], np.ndarray]:
    """Frames in which each (gt id, pred id) pair overlaps at ``iou_min`` or more.

    Returns:
        Sorted gt ids, sorted pred ids and the count matrix between them.
    """
    pairs: defaultdict[tuple[int, int], int] = defaultdict(int)
    gt_ids, pred_ids = set(), set()
    for frame in _frames(gt, pred):
        g, p = gt.get(frame, []), pred.get(frame, [])
        gt_ids.update(b.id for b in g)
        pred_ids.update(b.id for b in p)
        if not g or not p:
            continue
        ok = iou_matrix(np.array([b.box for b in g]), np.array([b.box for b in p])) >= iou_min
        if not single_class:
            ok &= np.array([b.class_id for b in g])[:, None] == np.array([b.class_id for b in p])[None, :]
        for i, j in zip(*np.nonzero(ok)):
            pairs[g[i].id, p[j].id] += 1
    gt_sorted, pred_sorted = sorted(gt_ids), sorted(pred_ids)
    gi = {g: i for i, g in enumerate(gt_sorted)}
    pi = {p: j for j, p in enumerate(pred_sorted)}
    counts = np.zeros((len(gt_sorted), len(pred_sorted)), dtype=np.int64)
    for (g, p), c in pairs.items():
        counts[gi[g], pi[p]] = c
    return gt_sorted, pred_sorted, counts


def id_metrics(gt: FrameBoxes, pred: FrameBoxes, iou_min: float = 0.5, single_class: bool = False) -> IdentityCounts:
    """IDTP from the id assignment maximizing total overlap; IDFP/IDFN are the rest."""
    _, _, counts = overlap_counts(gt, pred, iou_min, single_class)
    num_gt = sum(len(v) for v in gt.values())
    num_pred = sum(len(v) for v in pred.values())
    idtp = 0
    if counts.size:
        cost = np.where(counts > 0, -counts.astype(np.float64), FORBIDDEN)
        idtp = int(sum(counts[r, c] for r, c in hungarian(cost)))
    return IdentityCounts(idtp=idtp, idfp=num_pred - idtp, idfn=num_gt - idtp)


def evaluate_sequence(gt: FrameBoxes, pred: FrameBoxes, iou_min: float = 0.5, single_class: bool = False) -> MotCounts:
    """All counts of one sequence."""
    counts = clear_mot(gt, pred, iou_min, single_class)
    idc = id_metrics(gt, pred, iou_min, single_class)
    return counts.model_copy(update={"idtp": idc.idtp, "idfp": idc.idfp, "idfn": idc.idfn})


def evaluate_sequences(
    sequences: Mapping[str, tuple[FrameBoxes, FrameBoxes]], iou_min: float = 0.5, single_class: bool = False
) -> MetricsReport:
    """Evaluate named (gt, pred) pairs and sum their counts into the aggregate."""
    per_seq = {name: evaluate_sequence(g, p, iou_min, single_class) for name, (g, p) in sorted(sequences.items())}
    return build_report(per_seq, iou_min, single_class)


def build_report(per_seq: Mapping[str, MotCounts], iou_min: float, single_class: bool) -> MetricsReport:
    """Reduce already-computed sequence counts into a report."""
    aggregate = sum(per_seq.values(), MotCounts())
    tracking_logger.info(
        "evaluated %d sequences: MOTA=%s IDF1=%.4f", len(per_seq), aggregate.mota, aggregate.idf1
    )
    return MetricsReport(
        iou_min=iou_min, single_class=single_class, sequences=dict(sorted(per_seq.items())), aggregate=aggregate
    )

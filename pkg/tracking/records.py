"""Box records shared by the generator, the tracker, the evaluator and the file formats."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AnnotatedBox:
    """One MOT-style row: ground truth, a raw detection (id -1) or a tracker output."""

    frame: int
    id: int
    box: tuple[float, float, float, float]
    class_id: int = 1
    conf: float = 1.0
    visibility: float = 1.0

    def __post_init__(self) -> None:
        box = tuple(float(v) for v in self.box)
        if len(box) != 4 or box[2] <= 0 or box[3] <= 0:
            raise ValueError(f"box must be (left, top, w, h) with positive size, got {self.box}")
        object.__setattr__(self, "box", box)


@dataclass(frozen=True)
class Detection:
    """Detector output with an appearance embedding normalized to unit length."""

    box: np.ndarray
    score: float
    class_id: int
    embedding: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        box = np.asarray(self.box, dtype=np.float64).reshape(4)
        if box[2] <= 0 or box[3] <= 0:
            raise ValueError(f"detection box must have positive size, got {box}")
        emb = np.asarray(self.embedding, dtype=np.float64).reshape(-1)
        norm = np.linalg.norm(emb)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "embedding", emb / norm if norm > 1e-12 else emb)
        object.__setattr__(self, "score", float(self.score))
        object.__setattr__(self, "class_id", int(self.class_id))


# frame -> boxes of that frame, frames ascending
FrameBoxes = dict[int, list[AnnotatedBox]]
GroundTruth = FrameBoxes
TrajectorySet = FrameBoxes
DetectionFrames = dict[int, list[Detection]]

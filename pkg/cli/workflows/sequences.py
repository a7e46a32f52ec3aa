# stcmot-desk/cli/workflows/sequences.py
"""
Helpers shared by the workflows: locating sequence directories and fanning
work out to a process pool.
"""

from collections.abc import Callable, Iterable
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import TypeVar

from tracking.records import DetectionFrames

T = TypeVar("T")
R = TypeVar("R")


def find_sequences(root: str | Path, marker: str) -> list[Path]:
    """``root`` itself if it holds ``marker``, else its sorted subdirectories that do.

    Raises:
        FileNotFoundError: If no sequence is found.
    """
    root = Path(root)
    if (root / marker).is_file():
        return [root]
    found = sorted(p for p in root.iterdir() if (p / marker).is_file()) if root.is_dir() else []
    if not found:
        raise FileNotFoundError(f"no sequence with {marker} under {root}")
    return found


def dense_frames(frames: DetectionFrames, last: int | None = None) -> DetectionFrames:
    """Fill missing frame numbers from 1 to the last frame with empty lists."""
    last = max(frames, default=0) if last is None else last
    return {f: frames.get(f, []) for f in range(1, last + 1)}


def run_parallel(fn: Callable[[T], R], items: Iterable[T], workers: int) -> list[R]:
    """Map ``fn`` over ``items`` in order, in worker processes when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))

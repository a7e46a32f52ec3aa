# stcmot-desk/cli/mot_io.py
"""
File formats: MOT-style text rows, the binary embedding sidecar and tensor
containers. Every writer goes through a temp file and an atomic rename.
"""

import io
import os
import struct
import tempfile
from collections.abc import Iterable, Mapping
from pathlib import Path

import numpy as np

from tracking.records import AnnotatedBox, Detection, DetectionFrames, FrameBoxes

SIDECAR_MAGIC = b"STCE"
SIDECAR_VERSION = 1
SIDECAR_HEADER = struct.Struct("<4sHH")
MOT_COLUMNS = ("frame", "id", "left", "top", "width", "height", "conf", "class", "visibility", "extra")


class DataFormatError(ValueError):
    """Raised when an input file does not follow its format."""


class MotFormatError(DataFormatError):
    def __init__(self, path: str | Path, line: int, column: int, message: str):
        self.path, self.line, self.column = str(path), line, column
        super().__init__(f"{path}:{line}: column {column} ({MOT_COLUMNS[min(column, 10) - 1]}): {message}")


class SidecarFormatError(DataFormatError):
    def __init__(self, path: str | Path, offset: int, message: str):
        self.path, self.offset = str(path), offset
        super().__init__(f"{path} at byte {offset}: {message}")


# --- Atomic writes ---


def atomic_write(path: str | Path, data: bytes | str) -> None:
    """Write ``data`` to a sibling temp file and rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


# --- MOT text rows ---


def _field(raw: str, kind: type, path: str | Path, lineno: int, col: int):
    try:
        if kind is int:
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        value = float(raw)
        if not np.isfinite(value):
            raise ValueError
        return value
    except ValueError:
        raise MotFormatError(path, lineno, col, f"expected {kind.__name__}, got {raw.strip()!r}") from None


def parse_mot_line(line: str, path: str | Path = "<string>", lineno: int = 1) -> AnnotatedBox:
    """Parse one comma-separated row of 7 to 10 fields.

    Missing or negative class and visibility columns default to 1 and 1.0;
    fields after the ninth are ignored.

    Raises:
        MotFormatError: Naming the file, line and column.
    """
    parts = line.strip().split(",")
    if not 7 <= len(parts) <= 10:
        raise MotFormatError(path, lineno, min(len(parts) + 1, 10), f"expected 7-10 fields, got {len(parts)}")
    frame = _field(parts[0], int, path, lineno, 1)
    if frame < 1:
        raise MotFormatError(path, lineno, 1, f"frame must be >= 1, got {frame}")
    tid = _field(parts[1], int, path, lineno, 2)
    left, top, w, h = (_field(parts[i], float, path, lineno, i + 1) for i in range(2, 6))
    if w <= 0 or h <= 0:
        raise MotFormatError(path, lineno, 5 if w <= 0 else 6, "box size must be positive")
    conf = _field(parts[6], float, path, lineno, 7)
    cls = _field(parts[7], int, path, lineno, 8) if len(parts) > 7 else 1
    vis = _field(parts[8], float, path, lineno, 9) if len(parts) > 8 else 1.0
    return AnnotatedBox(frame, tid, (left, top, w, h), cls if cls >= 0 else 1, conf, min(vis, 1.0) if vis >= 0 else 1.0)


def parse_mot_file(path: str | Path) -> FrameBoxes:
    """Read a MOT text file into frame -> boxes, frames ascending, rows in file order.

    Blank lines are skipped.

    Raises:
        MotFormatError: On the first malformed row.
        FileNotFoundError: If the file does not exist.
    """
    frames: dict[int, list[AnnotatedBox]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            box = parse_mot_line(line, path, lineno)
            frames.setdefault(box.frame, []).append(box)
    return dict(sorted(frames.items()))


def format_mot_line(box: AnnotatedBox) -> str:
    left, top, w, h = box.box
    return f"{box.frame},{box.id},{left:.2f},{top:.2f},{w:.2f},{h:.2f},{box.conf:.4f},{box.class_id},{box.visibility:.2f}"


def format_mot(frames: FrameBoxes) -> str:
    return "".join(f"{format_mot_line(b)}\n" for f in sorted(frames) for b in frames[f])


def write_mot_file(path: str | Path, frames: FrameBoxes) -> None:
    atomic_write(path, format_mot(frames))


# --- Embedding sidecar ---


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("frame", "<u4"), ("det_index", "<u4"), ("values", "<f4", (dim,))])


def encode_embeddings(dim: int, records: Iterable[tuple[int, int, np.ndarray]]) -> bytes:
    """Serialize (frame, det_index, vector) records after a ``STCE`` header."""
    if not 1 <= dim <= 0xFFFF:
        raise ValueError(f"embedding dim must be in [1, 65535], got {dim}")
    rows = list(records)
    arr = np.zeros(len(rows), dtype=_record_dtype(dim))
    for i, (frame, idx, vec) in enumerate(rows):
        vec = np.asarray(vec, dtype=np.float32).reshape(-1)
        if vec.size != dim:
            raise ValueError(f"record {i} has {vec.size} values, header says {dim}")
        arr[i] = (frame, idx, vec)
    return SIDECAR_HEADER.pack(SIDECAR_MAGIC, SIDECAR_VERSION, dim) + arr.tobytes()


def write_embeddings(path: str | Path, dim: int, records: Iterable[tuple[int, int, np.ndarray]]) -> None:
    atomic_write(path, encode_embeddings(dim, records))


def decode_embeddings(data: bytes, path: str | Path = "<bytes>") -> tuple[int, np.ndarray]:
    """Parse sidecar bytes into (dim, structured record array).

    Raises:
        SidecarFormatError: For a bad header or a truncated record.
    """
    if len(data) < SIDECAR_HEADER.size:
        raise SidecarFormatError(path, len(data), "file shorter than the header")
    magic, version, dim = SIDECAR_HEADER.unpack_from(data)
    if magic != SIDECAR_MAGIC:
        raise SidecarFormatError(path, 0, f"bad magic {magic!r}")
    if version != SIDECAR_VERSION:
        raise SidecarFormatError(path, 4, f"unsupported version {version}")
    if dim == 0:
        raise SidecarFormatError(path, 6, "embedding dim must be positive")
    dtype = _record_dtype(dim)
    body = len(data) - SIDECAR_HEADER.size
    full, rest = divmod(body, dtype.itemsize)
    if rest:
        raise SidecarFormatError(
            path, SIDECAR_HEADER.size + full * dtype.itemsize, f"truncated record ({rest} of {dtype.itemsize} bytes)"
        )
    return dim, np.frombuffer(data, dtype=dtype, offset=SIDECAR_HEADER.size).copy()


def read_embeddings(path: str | Path) -> tuple[int, np.ndarray]:
    return decode_embeddings(Path(path).read_bytes(), path)


# --- Detections: rows plus sidecar ---


def detection_rows(dets: DetectionFrames) -> FrameBoxes:
    return {
        f: [AnnotatedBox(f, -1, tuple(d.box), d.class_id, d.score, 1.0) for d in dets[f]] for f in sorted(dets)
    }


def write_detections(det_path: str | Path, emb_path: str | Path, dets: DetectionFrames) -> None:
    """Write detections as MOT rows (id -1) and their embeddings to the sidecar."""
    dim = next((len(d.embedding) for f in dets for d in dets[f]), 1)
    write_mot_file(det_path, detection_rows(dets))
    write_embeddings(emb_path, dim, ((f, i, d.embedding) for f in sorted(dets) for i, d in enumerate(dets[f])))


def read_detections(det_path: str | Path, emb_path: str | Path) -> DetectionFrames:
    """Join MOT detection rows with sidecar embeddings by (frame, index within frame).

    Raises:
        DataFormatError: If a detection has no embedding.
    """
    rows = parse_mot_file(det_path)
    _, records = read_embeddings(emb_path)
    lookup = {(int(r["frame"]), int(r["det_index"])): r["values"] for r in records}
    out: DetectionFrames = {}
    for frame, boxes in rows.items():
        dets = []
        for i, b in enumerate(boxes):
            emb = lookup.get((frame, i))
            if emb is None:
                raise DataFormatError(f"{emb_path}: no embedding for frame {frame}, detection {i}")
            dets.append(Detection(np.array(b.box), b.conf, b.class_id, emb))
        out[frame] = dets
    return out


# --- Tensor containers ---


def save_tensors(path: str | Path, blob: Mapping[str, np.ndarray]) -> None:
    """Store named arrays in an ``.npz`` container."""
    buf = io.BytesIO()
    np.savez(buf, **{k: np.asarray(v) for k, v in sorted(blob.items())})
    atomic_write(path, buf.getvalue())


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as z:
        return {k: z[k] for k in z.files}

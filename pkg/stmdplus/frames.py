"""
Frame file I/O: directories or manifests of PGM/PNG images, 8 or 16 bits deep.
"""
import logging
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FrameIOError

logger = logging.getLogger(__name__)

FRAME_SUFFIXES = (".pgm", ".png")

# ITU-R BT.601 luma weights
REC601 = np.array([0.299, 0.587, 0.114], dtype=np.float64)

# integer modes wider than 8 bits are read as 16-bit full scale
WIDE_SCALE = 255.0 / 65535.0


def load_image(path: Union[Path, str]) -> np.ndarray:
    """Decode one image to real luminance in [0, 255]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("L", "F"):
                lum = np.asarray(img, dtype=np.float64)
            elif img.mode == "I" or img.mode.startswith("I;16"):
                lum = np.asarray(img, dtype=np.float64) * WIDE_SCALE
            elif img.mode in ("1", "LA"):
                lum = np.asarray(img.convert("L"), dtype=np.float64)
            else:
                lum = np.asarray(img.convert("RGB"), dtype=np.float64) @ REC601
    except (OSError, UnidentifiedImageError) as exc:
        raise FrameIOError(f"cannot read frame {path}: {exc}") from None
    if lum.ndim != 2:
        raise FrameIOError(f"frame {path} decoded to shape {lum.shape}, expected a 2-D image")
    return np.clip(lum, 0.0, 255.0)


def _read_manifest(path: Path) -> List[Path]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise FrameIOError(f"cannot read manifest {path}: {exc}") from None
    out = []
    for line in lines:
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        entry = Path(text)
        out.append(entry if entry.is_absolute() else path.parent / entry)
    return out


def list_frame_files(source: Union[Path, str]) -> List[Path]:
    """Frame paths of a directory (lexicographic) or a newline-delimited manifest."""
    source = Path(source)
    if source.is_dir():
        files = sorted(p for p in source.iterdir() if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES)
    elif source.is_file():
        files = _read_manifest(source)
    else:
        raise FrameIOError(f"frame source not found: {source}")
    if not files:
        raise FrameIOError(f"no frames found in {source}")
    return files


def read_frames(source: Union[Path, str]) -> Iterator[np.ndarray]:
    """Stream frames in order; every frame must match the size of the first."""
    shape: Optional[Tuple[int, int]] = None
    for path in list_frame_files(source):
        frame = load_image(path)
        if shape is None:
            shape = frame.shape
            logger.debug("[frames] reading %s frames of %dx%d", source, shape[1], shape[0])
        elif frame.shape != shape:
            raise FrameIOError(
                f"frame {path} is {frame.shape[1]}x{frame.shape[0]}, expected {shape[1]}x{shape[0]}"
            )
        yield frame


def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(frame, dtype=np.float64)), 0, 255).astype(np.uint8)


def write_frames(frames: Iterable[np.ndarray], directory: Union[Path, str], suffix: str = ".pgm") -> List[Path]:
    """Write frames as NNNNNN.pgm (or .png) 8-bit grayscale files."""
    directory = Path(directory)
    if suffix not in FRAME_SUFFIXES:
        raise FrameIOError(f"unsupported frame format {suffix!r}")
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FrameIOError(f"cannot create frame directory {directory}: {exc}") from None
    written = []
    for index, frame in enumerate(frames):
        path = directory / f"{index:06d}{suffix}"
        try:
            Image.fromarray(to_uint8(frame)).save(path)
        except OSError as exc:
            raise FrameIOError(f"cannot write frame {path}: {exc}") from None
        written.append(path)
    logger.info("[frames] wrote %d frames to %s", len(written), directory)
    return written

"""Frame containers, image-sequence loading, color conversion and resizing."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
from PIL import Image

from .errors import FrameFormatError

FRAME_SUFFIXES = (".pgm", ".ppm", ".png")
DEFAULT_FPS = 30.0
WORKING_SIZE = (640, 480)


@dataclass(frozen=True, eq=False)
class Frame:
    """One decoded video frame.

    ``pixels`` is (H, W) for grayscale or (H, W, 3) for RGB, either uint8 in
    [0, 255] or float in [0, 1].
    """

    pixels: np.ndarray
    index: int = 0
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        px = self.pixels
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] not in (1, 3)):
            raise FrameFormatError(f"unsupported pixel array shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise FrameFormatError("frame must be at least 1x1")
        if px.ndim == 3 and px.shape[2] == 1:
            object.__setattr__(self, "pixels", px[:, :, 0])
        self.pixels.flags.writeable = False

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def timestamp_s(self) -> float:
        return self.index / self.fps

    def with_pixels(self, pixels: np.ndarray) -> "Frame":
        return Frame(pixels, self.index, self.fps)


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def to_grayscale(frame: Frame) -> Frame:
    """ITU-R 601 luma. Grayscale frames are returned unchanged."""
    if frame.channels == 1:
        return frame
    px = frame.pixels.astype(np.float64)
    gray = 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]
    if frame.pixels.dtype == np.uint8:
        gray = _round_half_up(gray)
    return frame.with_pixels(gray)


def _bilinear_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # pixel-center alignment: src = (dst + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_array(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize of a (H, W) or (H, W, C) array, keeping its dtype."""
    if width < 1 or height < 1:
        raise ValueError("target size must be at least 1x1")
    h_in, w_in = pixels.shape[:2]
    if (w_in, h_in) == (width, height):
        return pixels.copy()
    y0, y1, fy = _bilinear_axis(h_in, height)
    x0, x1, fx = _bilinear_axis(w_in, width)
    src = pixels.astype(np.float64)
    if src.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bottom * fy
    if pixels.dtype == np.uint8:
        return _round_half_up(out)
    return out.astype(pixels.dtype, copy=False)


def resize(frame: Frame, width: int, height: int) -> Frame:
    if (frame.width, frame.height) == (width, height):
        return frame
    return frame.with_pixels(resize_array(frame.pixels, width, height))


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Read an 8-bit PGM, PPM or PNG file into a uint8 array."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("L", "RGB"):
                arr = np.asarray(img)
            elif img.mode in ("P", "RGBA", "LA"):
                arr = np.asarray(img.convert("RGB" if img.mode != "LA" else "L"))
            else:
                raise FrameFormatError(f"{path}: unsupported image mode {img.mode!r} (need 8-bit)")
    except FrameFormatError:
        raise
    except Exception as exc:  # PIL raises a mix of OSError / SyntaxError / ValueError
        raise FrameFormatError(f"{path}: cannot decode frame ({exc})") from exc
    return np.array(arr, dtype=np.uint8)


def write_image(path: str | os.PathLike, pixels: np.ndarray) -> None:
    """Write uint8 pixels as binary PGM (P5) or PPM (P6), or PNG by suffix."""
    path = Path(path)
    arr = np.asarray(pixels)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    if arr.dtype != np.uint8:
        raise ValueError("only uint8 frames can be written")
    if path.suffix.lower() == ".png":
        Image.fromarray(arr).save(path, format="PNG")
        return
    if arr.ndim == 2:
        magic, h, w = b"P5", arr.shape[0], arr.shape[1]
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic, h, w = b"P6", arr.shape[0], arr.shape[1]
    else:
        raise ValueError(f"cannot write array of shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(arr).tobytes())


def _probe(path: Path) -> tuple[tuple[int, int], str]:
    try:
        with Image.open(path) as img:
            size, mode = img.size, img.mode
    except Exception as exc:
        raise FrameFormatError(f"{path}: cannot read frame header ({exc})") from exc
    if mode == "L" or mode == "LA":
        return size, "grayscale"
    if mode in ("RGB", "RGBA", "P"):
        return size, "RGB"
    raise FrameFormatError(f"{path}: unsupported image mode {mode!r} (need 8-bit)")


class VideoSource:
    """Sequential, indexable source of frames.

    Frames are produced lazily by per-index loader callables, so large
    directories and synthetic videos never sit in memory all at once.
    """

    def __init__(
        self,
        loaders: Sequence[Callable[[], np.ndarray]],
        fps: float = DEFAULT_FPS,
        resolution: tuple[int, int] | None = None,
        mode: str = "grayscale",
        path: str | None = None,
        video_id: str | None = None,
    ):
        if fps <= 0:
            raise ValueError("fps must be positive")
        self._loaders = list(loaders)
        self.fps = float(fps)
        self.resolution = resolution
        self.mode = mode
        self.path = path
        self.video_id = video_id or (Path(path).name if path else "video")

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], fps: float = DEFAULT_FPS, video_id: str = "video"):
        arrays = list(arrays)
        res = (arrays[0].shape[1], arrays[0].shape[0]) if arrays else None
        mode = "RGB" if arrays and arrays[0].ndim == 3 else "grayscale"
        return cls([lambda a=a: a for a in arrays], fps, res, mode, video_id=video_id)

    def __len__(self) -> int:
        return len(self._loaders)

    def frame(self, index: int) -> Frame:
        return Frame(self._loaders[index](), index, self.fps)

    def __iter__(self) -> Iterator[Frame]:
        for i in range(len(self._loaders)):
            yield self.frame(i)


def list_frame_files(directory: str | os.PathLike) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES)


def open_sequence(directory: str | os.PathLike, fps: float = DEFAULT_FPS) -> VideoSource:
    """Open a directory of frame images, ordered by file name.

    Every header is probed up front so size or mode mismatches are reported
    before any processing starts.

    Raises:
        FileNotFoundError: ``directory`` does not exist.
        FrameFormatError: no frames, an unreadable frame, or a size/mode mismatch.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory not found: {directory}")
    files = list_frame_files(directory)
    if not files:
        raise FrameFormatError(f"{directory}: no frames found")
    size, mode = _probe(files[0])
    for f in files[1:]:
        s, m = _probe(f)
        if s != size:
            raise FrameFormatError(f"{f}: frame size {s[0]}x{s[1]} differs from {size[0]}x{size[1]}")
        if m != mode:
            raise FrameFormatError(f"{f}: frame mode {m} differs from {mode}")
    loaders = [lambda f=f: read_image(f) for f in files]
    return VideoSource(loaders, fps, size, mode, path=str(directory))


def dump_frame(path: str | os.PathLike, frame: Frame | np.ndarray) -> None:
    pixels = frame.pixels if isinstance(frame, Frame) else frame
    write_image(path, pixels)

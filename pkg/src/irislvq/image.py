"""Gray rasters: decoding, binary PGM I/O, thresholding and first-order statistics.

Images are plain ``numpy`` arrays of dtype ``uint8`` and shape ``(height, width)``,
row-major. Binary masks are ``bool`` arrays of the same shape.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DecodeError, ParameterError, UnsupportedFormatError

# BT.601 luma weights, in thousandths so the conversion stays in integers.
LUMA_WEIGHTS = (299, 587, 114)

# Clamp applied to samples before geometric and harmonic means.
STATS_EPSILON = 1e-6

FORMATS = ("pgm", "png", "bmp", "jpeg")
_SUFFIXES = {
    ".pgm": "pgm",
    ".png": "png",
    ".bmp": "bmp",
    ".jpg": "jpeg",
    ".jpeg": "jpeg",
}


def as_gray(img) -> np.ndarray:
    """Validate and return ``img`` as a 2-D uint8 array."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ParameterError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ParameterError("intensities must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Convert an ``(h, w, 3)`` uint8 array with BT.601 weights, rounding half up."""
    rgb = np.asarray(rgb, dtype=np.int64)
    wr, wg, wb = LUMA_WEIGHTS
    acc = wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]
    return ((acc + 500) // 1000).astype(np.uint8)


def format_from_path(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    try:
        return _SUFFIXES[suffix]
    except KeyError:
        raise UnsupportedFormatError(f"unsupported image suffix {suffix!r}") from None


# --- PGM ---------------------------------------------------------------------

_WS = b" \t\r\n\f\v"


def _pgm_header(data: bytes) -> tuple[int, int, int, int]:
    """Parse a P5 header; return (width, height, maxval, raster offset)."""
    if len(data) < 2:
        raise DecodeError("file too short for a PGM magic number", offset=len(data))
    if data[:2] != b"P5":
        if data[:2] in (b"P2", b"P1", b"P3", b"P4", b"P6"):
            raise UnsupportedFormatError(f"netpbm variant {data[:2].decode()} is not supported (P5 only)")
        raise DecodeError("missing P5 magic number", offset=0)
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        # whitespace and comments between header fields
        while pos < len(data) and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        token = data[start:pos]
        if not token:
            raise DecodeError("truncated PGM header", offset=start)
        if not token.isdigit():
            raise DecodeError(f"malformed header field {token[:16]!r}", offset=start)
        fields.append(int(token))
    if pos >= len(data) or data[pos] not in _WS:
        raise DecodeError("missing whitespace after maxval", offset=pos)
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DecodeError(f"invalid dimensions {width}x{height}", offset=2)
    if not 1 <= maxval <= 255:
        raise UnsupportedFormatError(f"PGM maxval {maxval} is not supported (8-bit only)")
    return width, height, maxval, pos


def decode_pgm(data: bytes) -> np.ndarray:
    width, height, maxval, pos = _pgm_header(data)
    need = width * height
    have = len(data) - pos
    if have < need:
        raise DecodeError(f"raster truncated: expected {need} bytes, found {have}", offset=len(data))
    raster = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width)
    if maxval != 255:
        scaled = (raster.astype(np.int64) * 255 * 2 + maxval) // (2 * maxval)
        raster = np.clip(scaled, 0, 255).astype(np.uint8)
    return raster.copy()


def encode_pgm(img: np.ndarray) -> bytes:
    img = as_gray(img)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def read_pgm(path: str | Path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(img))


def mask_to_gray(mask: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)


# --- generic decoding ----------------------------------------------------------


def load_gray(data: bytes, fmt: str) -> np.ndarray:
    """Decode ``data`` in format ``fmt`` to an 8-bit gray raster.

    PGM is parsed here bit-exactly; PNG, BMP and JPEG go through Pillow.
    Colour inputs are reduced with BT.601 weights.
    """
    fmt = fmt.lower()
    if fmt == "jpg":
        fmt = "jpeg"
    if fmt == "pgm":
        return decode_pgm(data)
    if fmt not in FORMATS:
        raise UnsupportedFormatError(f"unsupported image format {fmt!r}")
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.format is None or im.format.lower() != fmt:
                raise DecodeError(f"payload is not a {fmt.upper()} image", offset=0)
            im.load()
            if im.mode == "L":
                return np.array(im, dtype=np.uint8)
            if im.mode in ("1", "I;16", "I", "F"):
                raise UnsupportedFormatError(f"image mode {im.mode!r} is not supported")
            return rgb_to_gray(np.array(im.convert("RGB"), dtype=np.uint8))
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot identify {fmt.upper()} payload: {exc}", offset=0) from exc
    except OSError as exc:
        # Pillow reports truncation as OSError without a byte position
        raise DecodeError(f"corrupt {fmt.upper()} payload: {exc}", offset=_guess_offset(str(exc), len(data))) from exc


def _guess_offset(message: str, size: int) -> int:
    m = re.search(r"(\d+) bytes", message)
    return int(m.group(1)) if m else size


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    return load_gray(path.read_bytes(), format_from_path(path))


# --- pixel statistics -----------------------------------------------------------


def mean_intensity(img: np.ndarray) -> float:
    img = as_gray(img)
    return float(img.sum(dtype=np.int64)) / img.size


def binarize_dark(img: np.ndarray, threshold: float) -> np.ndarray:
    """Foreground (True) where intensity <= threshold."""
    if threshold < 0:
        raise ParameterError("threshold must be non-negative")
    return np.asarray(img) <= threshold


@dataclass(frozen=True)
class HistogramStats:
    range: float
    mean: float
    geometric_mean: float
    harmonic_mean: float
    std_dev: float
    variance: float
    median: float
    # Clamp used for the geometric and harmonic means.
    epsilon: float = STATS_EPSILON

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.range,
            self.mean,
            self.geometric_mean,
            self.harmonic_mean,
            self.std_dev,
            self.variance,
            self.median,
        )


def histogram_stats(samples) -> HistogramStats:
    """Range, mean, geometric/harmonic mean, population std/variance and median.

    Samples are clamped to ``STATS_EPSILON`` before the geometric and harmonic
    means so that zero bins do not collapse them.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ParameterError("histogram_stats needs at least one sample")
    if np.any(x < 0):
        raise ParameterError("samples must be non-negative")
    n = x.size
    mean = math.fsum(x) / n
    variance = math.fsum((x - mean) ** 2) / n
    clamped = np.maximum(x, STATS_EPSILON)
    gmean = math.exp(math.fsum(np.log(clamped)) / n)
    hmean = n / math.fsum(1.0 / clamped)
    ordered = np.sort(x)
    mid = n // 2
    median = float(ordered[mid]) if n % 2 else 0.5 * (float(ordered[mid - 1]) + float(ordered[mid]))
    return HistogramStats(
        range=float(ordered[-1] - ordered[0]),
        mean=mean,
        geometric_mean=gmean,
        harmonic_mean=hmean,
        std_dev=math.sqrt(variance),
        variance=variance,
        median=median,
    )

"""8-bit grayscale image container, preprocessing chain, and file I/O.

All pixel coordinates follow the pixel-center convention: integer pixel
(x, y) sits at continuous point (x, y). Intensities are uint8 in [0, 255].
Rounding of fractional intensities is round-half-up everywhere so results
are reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ImageError, ImageIOError

# ITU-R BT.601 luma weights used when collapsing color inputs.
_LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Owned 8-bit single-channel raster, row-major."""

    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.ndim != 2 or px.dtype != np.uint8:
            raise ImageError("GrayImage requires a 2-D uint8 array")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ImageError("GrayImage must be at least 1x1")
        px.setflags(write=False)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_array(cls, data, width: int | None = None, height: int | None = None) -> "GrayImage":
        """Build from any array-like of intensities in [0, 255].

        A flat sequence needs explicit `width`/`height`; 2-D input infers them.
        """
        arr = np.asarray(data)
        if arr.ndim == 1:
            if width is None or height is None:
                raise ImageError("flat pixel data needs explicit width and height")
            if arr.size != width * height:
                raise ImageError(
                    f"pixel count {arr.size} != width*height {width * height}"
                )
            arr = arr.reshape(height, width)
        elif arr.ndim != 2:
            raise ImageError("expected 1-D or 2-D pixel data")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.floating):
                if np.any(arr < 0) or np.any(arr > 255):
                    raise ImageError("intensities outside [0, 255]")
                arr = _round_half_up(arr.astype(np.float64))
            elif np.any(arr < 0) or np.any(arr > 255):
                raise ImageError("intensities outside [0, 255]")
            arr = arr.astype(np.uint8)
        return cls(np.ascontiguousarray(arr))


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle: top-left corner plus extent."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ImageError(f"Rect extent must be positive, got {self.w}x{self.h}")
        if self.x0 < 0 or self.y0 < 0:
            raise ImageError(f"Rect origin must be non-negative, got ({self.x0}, {self.y0})")

    def fits_in(self, img: GrayImage) -> bool:
        return self.x0 + self.w <= img.width and self.y0 + self.h <= img.height


def downsample_half(img: GrayImage) -> GrayImage:
    """Halve both dimensions; each output pixel is the 2x2 block mean.

    The block mean doubles as an anti-alias prefilter. Odd trailing
    rows/columns are dropped. Means round half-up.
    """
    if img.width < 2 or img.height < 2:
        raise ImageError(f"image too small to downsample: {img.width}x{img.height}")
    h2, w2 = img.height // 2, img.width // 2
    p = img.pixels[: 2 * h2, : 2 * w2]
    # uint16 holds 4*255+2; the strided adds beat a reshape-sum by ~10x
    sums = p[0::2, 0::2].astype(np.uint16) + p[0::2, 1::2] + p[1::2, 0::2] + p[1::2, 1::2]
    return GrayImage(((sums + 2) >> 2).astype(np.uint8))


def normalize_range(img: GrayImage) -> GrayImage:
    """Linearly stretch intensities so min maps to 0 and max to 255.

    A constant image maps to all zeros.
    """
    lo = int(img.pixels.min())
    hi = int(img.pixels.max())
    if hi == lo:
        return GrayImage(np.zeros_like(img.pixels))
    shifted = img.pixels.astype(np.float64) - lo
    # Multiply before dividing: both operands stay integral, so exact
    # halves like 127.5 survive into the round-half-up.
    scaled = shifted * 255.0 / (hi - lo)
    return GrayImage(_round_half_up(scaled).astype(np.uint8))


def gaussian_kernel_5(sigma: float) -> np.ndarray:
    """Unit-sum 5-tap Gaussian kernel."""
    if sigma <= 0:
        raise ImageError(f"sigma must be positive, got {sigma}")
    x = np.arange(-2, 3, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur_5x5(img: GrayImage, sigma: float = 1.0) -> GrayImage:
    """Separable 5x5 Gaussian blur with clamp-replicated borders.

    Both passes run in float64; quantization (round-half-up) happens once at
    the end, so the result equals a full 2-D convolution with the outer
    product of the unit-sum 1-D kernel.
    """
    k = gaussian_kernel_5(sigma)
    out = ndimage.convolve1d(img.pixels.astype(np.float64), k, axis=1, mode="nearest")
    out = ndimage.convolve1d(out, k, axis=0, mode="nearest")
    return GrayImage(np.clip(_round_half_up(out), 0, 255).astype(np.uint8))


# Exchange schedule of the 19-comparator median-of-9 network; after these
# sorts of pairs, slot 4 holds the median of the nine inputs.
_MED9_PAIRS = (
    (1, 2), (4, 5), (7, 8), (0, 1), (3, 4), (6, 7), (1, 2), (4, 5), (7, 8),
    (0, 3), (5, 8), (4, 7), (3, 6), (1, 4), (2, 5), (4, 7), (4, 2), (6, 4),
    (4, 2),
)


def median_filter_3x3(img: GrayImage) -> GrayImage:
    """3x3 median with clamp-replicated borders; removes impulse noise."""
    padded = np.pad(img.pixels, 1, mode="edge")
    h, w = img.height, img.width
    p = [padded[dy : dy + h, dx : dx + w].copy() for dy in range(3) for dx in range(3)]
    for i, j in _MED9_PAIRS:
        lo = np.minimum(p[i], p[j])
        np.maximum(p[i], p[j], out=p[j])
        p[i] = lo
    return GrayImage(p[4])


def crop(img: GrayImage, roi: Rect) -> GrayImage:
    """Copy out an exact sub-raster. The caller keeps the roi offset."""
    if not roi.fits_in(img):
        raise ImageError(
            f"roi {roi} exceeds image bounds {img.width}x{img.height}"
        )
    sub = img.pixels[roi.y0 : roi.y0 + roi.h, roi.x0 : roi.x0 + roi.w]
    return GrayImage(np.ascontiguousarray(sub))


def load_image(path: str | Path) -> GrayImage:
    """Load an 8-bit grayscale PGM (binary P5) or PNG.

    Color inputs collapse to luma (0.299 R + 0.587 G + 0.114 B, rounded).
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"P5":
        return _parse_pgm(raw, path)
    try:
        from PIL import Image

        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "I;16", "I"):
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
            else:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                luma = rgb @ np.asarray(_LUMA_WEIGHTS)
                arr = _round_half_up(luma).astype(np.uint8)
    except ImageIOError:
        raise
    except Exception as exc:
        raise ImageIOError(f"cannot decode {path}: {exc}") from exc
    return GrayImage(np.ascontiguousarray(arr))


def save_image(img: GrayImage, path: str | Path) -> None:
    """Save as binary PGM (.pgm) or 8-bit grayscale PNG (anything else)."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
        path.write_bytes(header + img.pixels.tobytes())
        return
    from PIL import Image

    Image.fromarray(img.pixels, mode="L").save(path)


def _parse_pgm(raw: bytes, path: Path) -> GrayImage:
    # Binary P5 header: magic, width, height, maxval, single whitespace, data.
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        token = raw[start:pos]
        if not token.isdigit():
            raise ImageIOError(f"{path}: malformed PGM header")
        fields.append(int(token))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ImageIOError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    data = raw[pos : pos + width * height]
    if len(data) != width * height:
        raise ImageIOError(f"{path}: truncated PGM data")
    arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
    return GrayImage(arr.copy())

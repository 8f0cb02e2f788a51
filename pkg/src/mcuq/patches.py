"""Whole-slide tiling into fixed-size patches with a tissue-presence filter.

Supported inputs are binary PPM (P6, maxval 255) and raw interleaved RGB8
with a ``<name>.json`` sidecar ``{"width": W, "height": H}``.

The tissue test is a stand-in heuristic: a pixel counts as tissue when its
luma ``0.299 R + 0.587 G + 0.114 B`` is at most ``luma_max`` (not white) and
its chroma ``max(R,G,B) - min(R,G,B)`` is at least ``chroma_min`` (not grey).
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from mcuq.errors import FormatError

DEFAULT_SIZE = 200
DEFAULT_THRESHOLD = 0.25
DEFAULT_LUMA_MAX = 220
DEFAULT_CHROMA_MIN = 15

MANIFEST_HEADER = "slide_id,grid_x,grid_y,pixel_x,pixel_y,size,tissue_fraction,kept"


@dataclass(frozen=True, eq=False)
class SlideImage:
    """RGB8 image stored as a (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise FormatError(f"expected (height, width, 3) RGB pixels, got {px.shape}")
        if px.dtype != np.uint8:
            raise FormatError("pixels must be 8-bit")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "SlideImage":
        if width < 1 or height < 1:
            raise FormatError(f"bad image size {width}x{height}")
        if len(data) != width * height * 3:
            raise FormatError(f"{len(data)} bytes for a {width}x{height} RGB image")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class PatchRecord:
    slide_id: str
    grid_x: int
    grid_y: int
    pixel_x: int
    pixel_y: int
    size: int
    tissue_fraction: float = 0.0
    kept: bool = False

    def csv_row(self) -> str:
        return (
            f"{self.slide_id},{self.grid_x},{self.grid_y},{self.pixel_x},{self.pixel_y},"
            f"{self.size},{self.tissue_fraction:.6f},{int(self.kept)}"
        )

    @property
    def filename(self) -> str:
        return f"{self.slide_id}_y{self.grid_y}_x{self.grid_x}.ppm"


# -- image I/O ------------------------------------------------------------------

_PPM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_ppm(data: bytes) -> SlideImage:
    """Parse a binary P6 PPM with maxval 255 (comments allowed in the header)."""
    pos = 0
    fields = []
    for _ in range(4):
        m = _PPM_TOKEN.match(data, pos)
        if not m:
            raise FormatError("truncated PPM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P6":
        raise FormatError(f"not a binary PPM (magic {fields[0]!r})")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise FormatError("non-numeric PPM header field") from None
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after PPM header")
    raster = data[pos + 1 : pos + 1 + width * height * 3]
    return SlideImage.from_bytes(width, height, raster)


def encode_ppm(image: SlideImage) -> bytes:
    return f"P6\n{image.width} {image.height}\n255\n".encode("ascii") + image.pixels.tobytes()


def load_slide(path) -> SlideImage:
    path = Path(path)
    if path.suffix.lower() == ".rgb8":
        sidecar = path.with_suffix(".json")
        try:
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
            width, height = int(meta["width"]), int(meta["height"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"bad or missing sidecar {sidecar}: {exc}") from None
        return SlideImage.from_bytes(width, height, path.read_bytes())
    return decode_ppm(path.read_bytes())


def save_ppm(image: SlideImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(image))


# -- tiling ---------------------------------------------------------------------


def tile_grid(image: SlideImage, size: int = DEFAULT_SIZE, slide_id: str = "slide") -> list[PatchRecord]:
    """Non-overlapping full tiles in row-major order; partial edge tiles are dropped."""
    if size < 1:
        raise ValueError("patch size must be >= 1")
    nx, ny = image.width // size, image.height // size
    return [
        PatchRecord(slide_id, gx, gy, gx * size, gy * size, size)
        for gy in range(ny)
        for gx in range(nx)
    ]


def tissue_mask(
    pixels: np.ndarray, luma_max: float = DEFAULT_LUMA_MAX, chroma_min: float = DEFAULT_CHROMA_MIN
) -> np.ndarray:
    rgb = pixels.astype(np.int32)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    # integer form of 0.299 R + 0.587 G + 0.114 B <= luma_max
    luma_ok = 299 * r + 587 * g + 114 * b <= round(luma_max * 1000)
    chroma_ok = rgb.max(axis=-1) - rgb.min(axis=-1) >= chroma_min
    return luma_ok & chroma_ok


def tissue_fraction(
    image: SlideImage,
    record: PatchRecord,
    luma_max: float = DEFAULT_LUMA_MAX,
    chroma_min: float = DEFAULT_CHROMA_MIN,
) -> float:
    x, y, s = record.pixel_x, record.pixel_y, record.size
    if x < 0 or y < 0 or s < 1 or x + s > image.width or y + s > image.height:
        raise ValueError(f"patch at ({x}, {y}) size {s} exceeds {image.width}x{image.height}")
    patch = image.pixels[y : y + s, x : x + s]
    return float(np.count_nonzero(tissue_mask(patch, luma_max, chroma_min))) / (s * s)


def crop(image: SlideImage, record: PatchRecord) -> SlideImage:
    x, y, s = record.pixel_x, record.pixel_y, record.size
    return SlideImage(image.pixels[y : y + s, x : x + s])


def extract(
    image: SlideImage,
    size: int = DEFAULT_SIZE,
    keep_threshold: float = DEFAULT_THRESHOLD,
    slide_id: str = "slide",
    luma_max: float = DEFAULT_LUMA_MAX,
    chroma_min: float = DEFAULT_CHROMA_MIN,
    threads: Optional[int] = None,
) -> tuple[list[SlideImage], list[PatchRecord]]:
    """Tile the slide and keep patches whose tissue fraction reaches ``keep_threshold``.

    Returns the kept patch images and a manifest covering every grid cell,
    both ordered by (grid_y, grid_x).
    """
    if not 0.0 <= keep_threshold <= 1.0:
        raise ValueError("keep_threshold must lie in [0, 1]")
    grid = tile_grid(image, size, slide_id)

    def score(rec: PatchRecord) -> PatchRecord:
        f = tissue_fraction(image, rec, luma_max, chroma_min)
        return PatchRecord(
            rec.slide_id, rec.grid_x, rec.grid_y, rec.pixel_x, rec.pixel_y, rec.size,
            f, f >= keep_threshold,
        )

    threads = max(1, threads or os.cpu_count() or 1)
    if threads == 1 or len(grid) < 2:
        manifest = [score(r) for r in grid]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            manifest = list(pool.map(score, grid))
    manifest.sort(key=lambda r: (r.grid_y, r.grid_x))
    kept = [crop(image, r) for r in manifest if r.kept]
    return kept, manifest


def manifest_csv(records: list[PatchRecord]) -> str:
    return "\n".join([MANIFEST_HEADER] + [r.csv_row() for r in records]) + "\n"


def write_patches(
    kept: list[SlideImage], manifest: list[PatchRecord], outdir, manifest_name: str = "manifest.csv"
) -> Path:
    """Write kept patches as P6 files plus the manifest CSV; returns the manifest path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    kept_records = [r for r in manifest if r.kept]
    for rec, img in zip(kept_records, kept):
        save_ppm(img, outdir / rec.filename)
    path = outdir / manifest_name
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest_csv(manifest))
    return path

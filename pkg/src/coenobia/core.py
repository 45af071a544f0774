"""Shared image, geometry and dataset types plus file I/O.

Gray images are plain ``uint8`` arrays of shape ``(height, width)`` and
binary masks are ``bool`` arrays of the same shape; both are treated as
read-only once built.  Coordinates follow the raster convention: ``x`` is the
column, ``y`` the row, with ``y`` growing downwards.
"""

from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import BadLabel, CorruptHeader, IoFailure, MalformedRow, UnsupportedFormat

CLASSES = (1, 2, 4, 8)
CLASS_INDEX = {c: i for i, c in enumerate(CLASSES)}

# name, start, stop of each descriptor block in the 215-dim vector
FEATURE_BLOCKS = (
    ("hu", 0, 7),
    ("hog", 7, 88),
    ("zernike", 88, 128),
    ("lbp", 128, 187),
    ("haralick", 187, 215),
)
N_FEATURES = 215

CROP_MARGIN = 4


def round_half_up(x):
    """Round half away from zero (numpy rounds half to even)."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def check_label(value) -> Optional[int]:
    """Parse a coenobium label; blank means unlabeled."""
    if value is None:
        return None
    text = str(value).strip()
    if text == "":
        return None
    try:
        label = int(text)
    except ValueError:
        raise BadLabel(f"label {text!r} is not one of 1, 2, 4, 8") from None
    if label not in CLASSES:
        raise BadLabel(f"label {label} is not one of 1, 2, 4, 8")
    return label


def substream(seed: int, *names) -> np.random.Generator:
    """Independent generator for a named pipeline stage.

    The stage names are hashed with CRC-32 so the derivation is stable across
    interpreter runs (``hash()`` is salted).
    """
    key = [zlib.crc32(str(n).encode("utf-8")) for n in names]
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


# ---------------------------------------------------------------------------
# images

def as_gray(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"gray image must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("gray image values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luminance with half-up rounding, in exact integer arithmetic."""
    rgb = np.asarray(rgb, dtype=np.int64)
    y = 299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2]
    return ((y + 500) // 1000).astype(np.uint8)


def _pgm_tokens(buf: bytes):
    """Yield (token, end_offset) for the whitespace/comment separated header."""
    pos = 0
    n = len(buf)
    while True:
        while pos < n and (buf[pos:pos + 1].isspace() or buf[pos:pos + 1] == b"#"):
            if buf[pos:pos + 1] == b"#":
                while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise CorruptHeader("truncated PGM header")
        yield buf[start:pos], pos


def read_pgm(buf: bytes) -> np.ndarray:
    if buf[:2] != b"P5":
        raise UnsupportedFormat("only binary PGM (P5) is supported")
    tokens = _pgm_tokens(buf[2:])
    try:
        fields = []
        for _ in range(3):
            tok, end = next(tokens)
            fields.append(int(tok))
    except (ValueError, CorruptHeader, StopIteration):
        raise CorruptHeader("bad PGM header") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise CorruptHeader(f"bad PGM dimensions {width}x{height}")
    if maxval > 255:
        raise UnsupportedFormat(f"PGM maxval {maxval}: only 8-bit images are supported")
    if maxval < 1:
        raise CorruptHeader("PGM maxval must be positive")
    start = 2 + end + 1  # single whitespace byte after maxval
    data = buf[start:start + width * height]
    if len(data) != width * height:
        raise CorruptHeader(f"PGM raster has {len(data)} bytes, expected {width * height}")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width).copy()


def encode_pgm(img: np.ndarray) -> bytes:
    img = as_gray(img)
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def load_image(path) -> np.ndarray:
    """Load an 8-bit grayscale image from a P5 PGM or an 8-bit PNG.

    Color PNGs are converted with BT.601 weights.

    Raises:
        FileNotFoundError: the file does not exist.
        UnsupportedFormat: not a P5 PGM / 8-bit PNG.
        CorruptHeader: the header is unreadable or the raster is truncated.
    """
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] in (b"P5", b"P2", b"P6", b"P3", b"P1", b"P4"):
        return read_pgm(buf)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(buf)
    raise UnsupportedFormat(f"{path.name}: not a PGM or PNG file")


def _read_png(buf: bytes) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        im = Image.open(io.BytesIO(buf))
        im.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptHeader(f"unreadable PNG: {exc}") from None
    mode = im.mode
    if mode in ("L",):
        return np.asarray(im, dtype=np.uint8).copy()
    if mode in ("RGB", "RGBA", "P", "LA"):
        if mode == "P":
            im = im.convert("RGB")
        arr = np.asarray(im)
        if mode == "LA":
            return arr[..., 0].astype(np.uint8).copy()
        return rgb_to_gray(arr[..., :3])
    if mode == "1":
        return (np.asarray(im, dtype=np.uint8) * 255).astype(np.uint8)
    raise UnsupportedFormat(f"PNG mode {mode!r}: only 8-bit gray or RGB is supported")


def save_image(path, img: np.ndarray) -> None:
    """Write a P5 PGM (``.pgm``) or gray PNG (anything else)."""
    path = Path(path)
    img = as_gray(img)
    if path.suffix.lower() == ".pgm":
        path.write_bytes(encode_pgm(img))
    else:
        from PIL import Image

        Image.fromarray(img, mode="L").save(path)


def mask_to_image(mask: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)


def image_to_mask(img: np.ndarray) -> np.ndarray:
    return np.asarray(img) > 127


def resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resample to ``shape`` with pixel-center alignment."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    oh, ow = shape
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


# ---------------------------------------------------------------------------
# geometry

@dataclass(frozen=True)
class Contour:
    """Closed polygon with its place in a contour forest.

    ``points`` is an ``(N, 2)`` array of ``(x, y)``.  Contours from
    :func:`coenobia.segment.find_contours` hold integer pixel centers; refined
    snake contours carry sub-pixel coordinates.  ``area`` is the number of
    pixels enclosed by the contour (holes included).
    """

    points: np.ndarray
    parent: Optional[int] = None
    children: tuple = ()
    is_hole: bool = False
    area: int = 0

    def __post_init__(self):
        if len(self.points) < 3:
            raise ValueError("a contour needs at least 3 points")


def signed_area(points: np.ndarray) -> float:
    """Shoelace area with y pointing up on screen (counterclockwise > 0)."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], -p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def check_forest(contours: Sequence[Contour]) -> None:
    """Raise ``AssertionError`` unless parent/children links agree and are acyclic."""
    for i, c in enumerate(contours):
        for ch in c.children:
            assert contours[ch].parent == i, f"child {ch} does not point back to {i}"
        if c.parent is not None:
            assert i in contours[c.parent].children, f"{i} missing from parent's children"
    for i in range(len(contours)):
        seen = set()
        j = i
        while j is not None:
            assert j not in seen, "cycle in contour forest"
            seen.add(j)
            j = contours[j].parent


@dataclass(frozen=True)
class RegionPatch:
    """One candidate alga cut out of a frame.

    Attributes:
        image: gray crop (possibly rotated).
        mask: foreground mask aligned with ``image``.
        offset: ``(x, y)`` of the unrotated crop's top-left pixel in the frame.
        orientation_deg: estimated orientation of the alga in the frame, in
            ``[-90, 90)``, counterclockwise on screen from the x axis.
        source_id: stem of the frame the patch came from.
        index: region index within the frame (contour discovery order).
        crop_shape: ``(h, w)`` of the unrotated crop, needed to map the mask
            back into frame coordinates.
        rotation_deg: rotation already applied to ``image``/``mask``.
        low_confidence: orientation estimation fell back to 0 degrees.
        contour: refined boundary in ``image`` coordinates, if any.
    """

    image: np.ndarray
    mask: np.ndarray
    offset: tuple = (0, 0)
    orientation_deg: float = 0.0
    source_id: str = ""
    index: int = 0
    crop_shape: Optional[tuple] = None
    rotation_deg: float = 0.0
    low_confidence: bool = False
    contour: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.image.shape != self.mask.shape:
            raise ValueError("patch image and mask shapes differ")
        if self.crop_shape is None:
            object.__setattr__(self, "crop_shape", tuple(self.image.shape))

    @property
    def sample_id(self) -> str:
        return f"{self.source_id}#{self.index}"

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask))


# ---------------------------------------------------------------------------
# manifests

@dataclass(frozen=True)
class ManifestRow:
    path: Path
    label: Optional[int]


def read_manifest(path) -> list[ManifestRow]:
    """Parse a ``path,label`` CSV; relative paths resolve against its folder.

    Raises:
        MalformedRow: header missing or a row with the wrong column count.
        BadLabel: a label other than 1, 2, 4, 8 or blank.
        IoFailure: the manifest cannot be read.
    """
    path = Path(path)
    base = path.parent
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text, newline="")))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows or [c.strip() for c in rows[0]] != ["path", "label"]:
        raise MalformedRow(f"{path}: header must be 'path,label'")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise MalformedRow(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        p = Path(row[0].strip())
        if not p.is_absolute():
            p = base / p
        out.append(ManifestRow(p, check_label(row[1])))
    return out


def write_manifest(path, rows: Sequence[ManifestRow]) -> None:
    """Write a manifest; paths inside the manifest folder are stored relative."""
    path = Path(path)
    base = path.parent.resolve()
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "label"])
    for r in rows:
        p = Path(r.path)
        try:
            p = p.resolve().relative_to(base)
        except ValueError:
            pass
        w.writerow([p.as_posix(), "" if r.label is None else r.label])
    path.write_text(buf.getvalue(), encoding="utf-8")


@dataclass
class LabeledDataset:
    """Feature vectors with coenobium labels."""

    ids: list
    X: np.ndarray
    y: np.ndarray  # cell counts, values in CLASSES
    provenance: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("sample ids must be unique")
        if self.X.ndim != 2 or len(self.X) != len(self.ids) or len(self.y) != len(self.ids):
            raise ValueError("ids, X and y must have matching lengths")
        bad = set(np.unique(self.y).tolist()) - set(CLASSES)
        if bad:
            raise BadLabel(f"labels {sorted(bad)} are not coenobium classes")

    def __len__(self):
        return len(self.ids)

    def subset_features(self, indices) -> "LabeledDataset":
        return LabeledDataset(list(self.ids), self.X[:, list(indices)], self.y.copy(), self.provenance)

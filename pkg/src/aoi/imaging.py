"""Raster primitives: grayscale, warping, cropping, augmentation, color transfer.

Everything here is pure and operates on 8-bit ImageBuffer values; geometry is
expressed through Transform2D (similarity or homography, 3x3 homogeneous).
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .core import ImageBuffer, Mask


class TransformError(ValueError):
    pass


@dataclass
class Transform2D:
    """3x3 homogeneous transform. Similarity matrices keep last row (0, 0, 1);
    homography matrices are normalized so h33 = 1."""

    model: str  # "similarity" | "homography"
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise TransformError(f"matrix must be 3x3, got {m.shape}")
        if abs(np.linalg.det(m)) <= 1e-12:
            raise TransformError("transform matrix is not invertible")
        if self.model == "homography":
            m = m / m[2, 2]
        elif self.model == "similarity":
            if not np.allclose(m[2], [0, 0, 1], atol=1e-9):
                raise TransformError("similarity matrix must have last row (0, 0, 1)")
            a, b = m[0, 0], m[0, 1]
            c, d = m[1, 0], m[1, 1]
            # rotation + uniform scale: [[a, -b], [b, a]] shape
            if not (math.isclose(a, d, rel_tol=1e-6, abs_tol=1e-9)
                    and math.isclose(b, -c, rel_tol=1e-6, abs_tol=1e-9)):
                raise TransformError("matrix does not encode rotation+scale+translation")
        else:
            raise TransformError(f"unknown model {self.model!r}")
        self.matrix = m

    @staticmethod
    def identity(model: str = "similarity") -> "Transform2D":
        return Transform2D(model, np.eye(3))

    @staticmethod
    def similarity(angle_deg: float = 0.0, scale: float = 1.0,
                   tx: float = 0.0, ty: float = 0.0,
                   center: tuple[float, float] | None = None) -> "Transform2D":
        """Rotation by angle_deg (about center if given) with uniform scale,
        followed by translation (tx, ty)."""
        th = math.radians(angle_deg)
        a = scale * math.cos(th)
        b = scale * math.sin(th)
        m = np.array([[a, -b, tx], [b, a, ty], [0.0, 0.0, 1.0]])
        if center is not None:
            cx, cy = center
            pre = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1.0]])
            post = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
            m = post @ m @ pre
        return Transform2D("similarity", m)

    def inverse(self) -> "Transform2D":
        return Transform2D(self.model, np.linalg.inv(self.matrix))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Map (n, 2) points through the transform."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        ph = np.c_[pts, np.ones(len(pts))]
        q = ph @ self.matrix.T
        return q[:, :2] / q[:, 2:3]

    @property
    def angle_deg(self) -> float:
        return math.degrees(math.atan2(self.matrix[1, 0], self.matrix[0, 0]))

    @property
    def translation(self) -> tuple[float, float]:
        return float(self.matrix[0, 2]), float(self.matrix[1, 2])


@dataclass
class AugmentationSpec:
    count: int = 10
    rotation_deg: float = 15.0  # +/- range
    shift_frac: float = 0.05    # +/- range, fraction of width/height
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.rotation_deg < 0 or self.shift_frac < 0:
            raise ValueError("ranges must be >= 0")


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Rec.601 luma: round(0.299 R + 0.587 G + 0.114 B)."""
    if img.channels != 3:
        raise ValueError(f"expected 3-channel image, got {img.channels}")
    rgb = img.pixels.astype(np.float64)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return ImageBuffer(np.clip(np.rint(luma), 0, 255).astype(np.uint8))


def warp(img: ImageBuffer, t: Transform2D, out_w: int, out_h: int) -> ImageBuffer:
    """Inverse-map bilinear warp; samples outside the source read as 0."""
    inv = np.linalg.inv(t.matrix)
    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64),
                         np.arange(out_h, dtype=np.float64))
    w = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / w
    sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / w

    h, wid = img.height, img.width
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    src = img.pixels.astype(np.float64)
    out = np.zeros((out_h, out_w, img.channels), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi < wid) & (yi >= 0) & (yi < h)
            wgt = (fx if dx else (1.0 - fx)) * (fy if dy else (1.0 - fy))
            xi_c = np.clip(xi, 0, wid - 1)
            yi_c = np.clip(yi, 0, h - 1)
            sample = src[yi_c, xi_c]  # (out_h, out_w, c)
            out += np.where(valid[:, :, None], wgt[:, :, None] * sample, 0.0)
    return ImageBuffer(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def crop(img: ImageBuffer, rect: tuple[int, int, int, int]) -> ImageBuffer:
    x, y, w, h = rect
    if w <= 0 or h <= 0:
        raise ValueError(f"rect size must be positive, got {w}x{h}")
    if x < 0 or y < 0 or x + w > img.width or y + h > img.height:
        raise ValueError(
            f"rect {rect} outside image bounds {img.width}x{img.height}")
    return ImageBuffer(img.pixels[y:y + h, x:x + w].copy())


def crop_mask(mask: Mask, rect: tuple[int, int, int, int]) -> Mask:
    x, y, w, h = rect
    if x < 0 or y < 0 or x + w > mask.width or y + h > mask.height:
        raise ValueError(f"rect {rect} outside mask bounds {mask.width}x{mask.height}")
    return Mask(mask.labels[y:y + h, x:x + w].copy(), list(mask.class_names))


def augment(img: ImageBuffer, spec: AugmentationSpec) -> list[ImageBuffer]:
    """Exactly spec.count rotated/shifted variants; the original is not included.

    Deterministic for a fixed seed: variant i uses the i-th (angle, dx, dy)
    triple from the spec's RNG stream. Rotation is about the image center.
    """
    rng = np.random.default_rng(spec.seed)
    out = []
    cx, cy = (img.width - 1) / 2.0, (img.height - 1) / 2.0
    for _ in range(spec.count):
        angle = rng.uniform(-spec.rotation_deg, spec.rotation_deg)
        dx = rng.uniform(-spec.shift_frac, spec.shift_frac) * img.width
        dy = rng.uniform(-spec.shift_frac, spec.shift_frac) * img.height
        t = Transform2D.similarity(angle_deg=angle, center=(cx, cy))
        t = Transform2D("similarity", np.array([[1, 0, dx], [0, 1, dy], [0, 0, 1.0]]) @ t.matrix)
        out.append(warp(img, t, img.width, img.height))
    return out


# ---------------------------------------------------------------------------
# Reinhard color transfer in log lab space

_RGB2LMS = np.array([
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
])
# exact inverse keeps RGB -> lab -> RGB a true round trip (the published
# 4-decimal inverse drifts by about one intensity level)
_LMS2RGB = np.linalg.inv(_RGB2LMS)
_LMS2LAB = np.diag([1 / math.sqrt(3), 1 / math.sqrt(6), 1 / math.sqrt(2)]) @ np.array([
    [1.0, 1.0, 1.0],
    [1.0, 1.0, -2.0],
    [1.0, -1.0, 0.0],
])
_LAB2LMS = np.array([
    [1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0],
    [1.0, -2.0, 0.0],
]) @ np.diag([math.sqrt(3) / 3, math.sqrt(6) / 6, math.sqrt(2) / 2])

_LOG_FLOOR = 1.0 / 255.0


def rgb_to_lab(img: ImageBuffer) -> np.ndarray:
    """(h, w, 3) float log-lab channels of an RGB buffer."""
    if img.channels != 3:
        raise ValueError(f"expected 3-channel image, got {img.channels}")
    rgb = img.pixels.astype(np.float64) / 255.0
    lms = rgb @ _RGB2LMS.T
    lms = np.log10(np.maximum(lms, _LOG_FLOOR))
    return lms @ _LMS2LAB.T


def _lab_to_rgb(lab: np.ndarray) -> ImageBuffer:
    lms = np.power(10.0, lab @ _LAB2LMS.T)
    rgb = lms @ _LMS2RGB.T
    return ImageBuffer(np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8))


def lab_stats(img: ImageBuffer) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel (mean, std) in log-lab space."""
    lab = rgb_to_lab(img)
    flat = lab.reshape(-1, 3)
    return flat.mean(axis=0), flat.std(axis=0)


def color_transfer(src: ImageBuffer, ref: ImageBuffer) -> ImageBuffer:
    """Match src's log-lab channel statistics to ref's (Reinhard transfer)."""
    for im, name in ((src, "src"), (ref, "ref")):
        if im.channels != 3:
            raise ValueError(f"{name} must be 3-channel, got {im.channels}")
        if im.width == 0 or im.height == 0:
            raise ValueError(f"{name} is empty")
    lab = rgb_to_lab(src)
    mean_s, std_s = lab_stats(src)
    mean_r, std_r = lab_stats(ref)
    out = np.empty_like(lab)
    for c in range(3):
        if std_s[c] < 1e-6:
            out[:, :, c] = mean_r[c]
        else:
            out[:, :, c] = (lab[:, :, c] - mean_s[c]) * (std_r[c] / std_s[c]) + mean_r[c]
    return _lab_to_rgb(out)


# ---------------------------------------------------------------------------
# PNG interchange

def encode_png(img: ImageBuffer) -> bytes:
    arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    pil = Image.fromarray(arr, mode="L" if img.channels == 1 else "RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> ImageBuffer:
    pil = Image.open(io.BytesIO(data))
    if pil.mode not in ("L", "RGB"):
        pil = pil.convert("RGB")
    return ImageBuffer(np.asarray(pil))


def encode_mask_png(mask: Mask) -> bytes:
    pil = Image.fromarray(mask.labels, mode="L")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_png(data: bytes, class_names: list[str]) -> Mask:
    pil = Image.open(io.BytesIO(data))
    if pil.mode != "L":
        pil = pil.convert("L")
    return Mask(np.asarray(pil), list(class_names))

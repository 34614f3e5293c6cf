"""Oriented FAST keypoints with rotation-steered binary descriptors.

Detection runs FAST-9 corners over an image pyramid, scores survivors with the
Harris response, orients each keypoint by its intensity centroid, and samples a
256-bit binary descriptor with the frozen pattern from pattern.py.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..core import ImageBuffer
from .pattern import BRIEF_PAIRS

# Bresenham circle of radius 3, clockwise from 12 o'clock, as (dx, dy)
_CIRCLE = [
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
]

_PATCH_RADIUS = 15   # intensity-centroid / descriptor patch is 31 px
_BORDER = _PATCH_RADIUS + 1

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int32)

# circular disc offsets for the orientation moment sums
_dy, _dx = np.mgrid[-_PATCH_RADIUS:_PATCH_RADIUS + 1, -_PATCH_RADIUS:_PATCH_RADIUS + 1]
_DISC = (_dx ** 2 + _dy ** 2) <= _PATCH_RADIUS ** 2
_DISC_DX = _dx[_DISC]
_DISC_DY = _dy[_DISC]


class ImageTooSmall(ValueError):
    pass


@dataclass
class Keypoint:
    x: float
    y: float
    response: float
    angle: float  # degrees
    octave: int


@dataclass
class OrbConfig:
    n_features: int = 500
    fast_threshold: int = 20
    n_levels: int = 4
    scale_factor: float = 1.2


def _fast9_mask(img: np.ndarray, threshold: float) -> np.ndarray:
    """Boolean corner map (FAST-9). img is float (h, w); border of 3 px is False."""
    h, w = img.shape
    center = img[3:h - 3, 3:w - 3]
    brighter = np.empty((16,) + center.shape, dtype=bool)
    darker = np.empty_like(brighter)
    for i, (dx, dy) in enumerate(_CIRCLE):
        shifted = img[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx]
        brighter[i] = shifted > center + threshold
        darker[i] = shifted < center - threshold
    out = np.zeros((h, w), dtype=bool)
    for flags in (brighter, darker):
        wrapped = np.concatenate([flags, flags[:8]], axis=0).astype(np.int8)
        cs = np.cumsum(wrapped, axis=0)
        padded = np.concatenate([np.zeros((1,) + center.shape, np.int8), cs], axis=0)
        run9 = padded[9:] - padded[:-9]  # (16, h', w') window sums of length 9
        out[3:h - 3, 3:w - 3] |= (run9 == 9).any(axis=0)
    return out


def _harris(img: np.ndarray, k: float = 0.04, sigma: float = 1.5) -> np.ndarray:
    ix = ndimage.sobel(img, axis=1, mode="nearest")
    iy = ndimage.sobel(img, axis=0, mode="nearest")
    sxx = ndimage.gaussian_filter(ix * ix, sigma, mode="nearest")
    syy = ndimage.gaussian_filter(iy * iy, sigma, mode="nearest")
    sxy = ndimage.gaussian_filter(ix * iy, sigma, mode="nearest")
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def _orientations(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Intensity-centroid angle (degrees) for keypoints at integer (y, x)."""
    sample = img[ys[:, None] + _DISC_DY[None, :], xs[:, None] + _DISC_DX[None, :]]
    m10 = sample @ _DISC_DX.astype(np.float64)
    m01 = sample @ _DISC_DY.astype(np.float64)
    return np.degrees(np.arctan2(m01, m10))


def _descriptors(smoothed: np.ndarray, ys: np.ndarray, xs: np.ndarray,
                 angles_deg: np.ndarray) -> np.ndarray:
    """(n, 32) packed 256-bit descriptors sampled with the steered pattern."""
    th = np.radians(angles_deg)
    c, s = np.cos(th), np.sin(th)
    p1 = BRIEF_PAIRS[:, 0:2].astype(np.float64)  # (256, 2) as (x, y)
    p2 = BRIEF_PAIRS[:, 2:4].astype(np.float64)

    def rotated(px):
        rx = c[:, None] * px[None, :, 0] - s[:, None] * px[None, :, 1]
        ry = s[:, None] * px[None, :, 0] + c[:, None] * px[None, :, 1]
        return np.rint(rx).astype(np.int64), np.rint(ry).astype(np.int64)

    r1x, r1y = rotated(p1)
    r2x, r2y = rotated(p2)
    v1 = smoothed[ys[:, None] + r1y, xs[:, None] + r1x]
    v2 = smoothed[ys[:, None] + r2y, xs[:, None] + r2x]
    bits = (v1 < v2)
    return np.packbits(bits, axis=1)


def _refine_to_level0(harris0: np.ndarray, x: float, y: float, radius: int) -> tuple[float, float]:
    h, w = harris0.shape
    xi, yi = int(round(x)), int(round(y))
    x0, x1 = max(0, xi - radius), min(w, xi + radius + 1)
    y0, y1 = max(0, yi - radius), min(h, yi + radius + 1)
    window = harris0[y0:y1, x0:x1]
    iy, ix = np.unravel_index(np.argmax(window), window.shape)
    return float(x0 + ix), float(y0 + iy)


def detect_orb(gray: ImageBuffer, n_features: int | None = None,
               config: OrbConfig | None = None) -> tuple[list[Keypoint], np.ndarray]:
    """Detect up to n_features keypoints with descriptors on a 1-channel image.

    Keypoint coordinates are reported at level-0 scale. Retention tie-breaks:
    higher Harris response, then lower y, then lower x.
    """
    cfg = config or OrbConfig()
    if n_features is None:
        n_features = cfg.n_features
    if gray.channels != 1:
        raise ValueError("detect_orb expects a single-channel image")
    if gray.width < 64 or gray.height < 64:
        raise ImageTooSmall(f"image {gray.width}x{gray.height} below 64x64 minimum")

    base = gray.pixels[:, :, 0].astype(np.float64)
    harris0 = _harris(base)
    all_kps: list[Keypoint] = []
    all_desc: list[np.ndarray] = []
    for level in range(cfg.n_levels):
        scale = cfg.scale_factor ** level
        if level == 0:
            img = base
        else:
            img = ndimage.zoom(base, 1.0 / scale, order=1, mode="nearest")
        # zoom samples on an (n_out-1)/(n_in-1) grid; use the exact per-axis
        # factors to map level coordinates back to level 0
        fy = (base.shape[0] - 1) / (img.shape[0] - 1)
        fx = (base.shape[1] - 1) / (img.shape[1] - 1)
        if min(img.shape) < 2 * _BORDER + 8:
            break
        corners = _fast9_mask(img, cfg.fast_threshold)
        if not corners.any():
            continue
        harris = harris0 if level == 0 else _harris(img)
        # 3x3 non-max suppression on the Harris score of corner pixels
        score = np.where(corners, harris, -np.inf)
        local_max = ndimage.maximum_filter(score, size=3) == score
        keep = corners & local_max
        keep[:_BORDER, :] = keep[-_BORDER:, :] = False
        keep[:, :_BORDER] = keep[:, -_BORDER:] = False
        ys, xs = np.nonzero(keep)
        if len(ys) == 0:
            continue
        angles = _orientations(img, ys, xs)
        smoothed = ndimage.uniform_filter(img, size=5, mode="nearest")
        desc = _descriptors(smoothed, ys, xs, angles)
        resp = harris[ys, xs]
        for i in range(len(ys)):
            x0, y0 = float(xs[i]) * fx, float(ys[i]) * fy
            if level > 0:
                # blur at coarse levels shifts the detected peak; snap back to
                # the strongest full-resolution corner response nearby
                x0, y0 = _refine_to_level0(harris0, x0, y0, radius=int(np.ceil(scale)))
            all_kps.append(Keypoint(
                x=x0, y=y0,
                response=float(resp[i]), angle=float(angles[i]), octave=level))
        all_desc.append(desc)

    if not all_kps:
        return [], np.zeros((0, 32), np.uint8)
    desc = np.concatenate(all_desc, axis=0)
    order = sorted(range(len(all_kps)),
                   key=lambda i: (-all_kps[i].response, all_kps[i].y, all_kps[i].x))
    order = order[:n_features]
    return [all_kps[i] for i in order], desc[order]


@dataclass
class MatchPair:
    index_a: int
    index_b: int
    hamming: int
    ratio: float


def hamming_distances(desc_a: np.ndarray, desc_b: np.ndarray) -> np.ndarray:
    """(na, nb) Hamming distance matrix between packed descriptor rows."""
    xor = desc_a[:, None, :] ^ desc_b[None, :, :]
    return _POPCOUNT[xor].sum(axis=2)


def match_descriptors(desc_a: np.ndarray, desc_b: np.ndarray,
                      ratio_max: float = 0.75) -> list[MatchPair]:
    """Mutual nearest-neighbour Hamming matches passing Lowe's ratio test."""
    if len(desc_a) == 0 or len(desc_b) == 0:
        raise ValueError("descriptor sets must be non-empty")
    d = hamming_distances(desc_a, desc_b)
    nearest_b = d.argmin(axis=1)
    nearest_a = d.argmin(axis=0)
    out = []
    for ia in range(d.shape[0]):
        ib = int(nearest_b[ia])
        if int(nearest_a[ib]) != ia:
            continue
        row = d[ia]
        best = int(row[ib])
        if d.shape[1] > 1:
            second = int(np.partition(row, 1)[1])
            ratio = 0.0 if second == 0 else best / second
        else:
            ratio = 0.0
        if ratio <= ratio_max:
            out.append(MatchPair(index_a=ia, index_b=ib, hamming=best, ratio=ratio))
    return out

"""Robust transform estimation from point correspondences (random sample
consensus with adaptive iteration count), plus closed-form similarity and
normalized-DLT homography fits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..imaging import Transform2D, TransformError


class InsufficientMatches(ValueError):
    pass


class NoConsensus(RuntimeError):
    pass


@dataclass
class RansacConfig:
    model: str = "similarity"  # "similarity" | "homography"
    inlier_threshold_px: float = 3.0
    max_iterations: int = 2000
    confidence: float = 0.995
    min_inliers: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.inlier_threshold_px <= 0:
            raise ValueError("inlier_threshold_px must be > 0")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")

    @property
    def minimal_set(self) -> int:
        return 2 if self.model == "similarity" else 4


@dataclass
class AlignmentReport:
    transform: Transform2D
    inlier_count: int
    mean_error_px: float
    matched_count: int
    detected_test: int = 0
    detected_golden: int = 0


def fit_similarity(src: np.ndarray, dst: np.ndarray) -> Transform2D:
    """Least-squares similarity (rotation + uniform scale + translation) from
    >= 2 correspondences: x' = a x - b y + tx, y' = b x + a y + ty."""
    n = len(src)
    if n < 2:
        raise InsufficientMatches("similarity needs at least 2 correspondences")
    a = np.zeros((2 * n, 4))
    rhs = np.zeros(2 * n)
    a[0::2, 0] = src[:, 0]
    a[0::2, 1] = -src[:, 1]
    a[0::2, 2] = 1.0
    a[1::2, 0] = src[:, 1]
    a[1::2, 1] = src[:, 0]
    a[1::2, 3] = 1.0
    rhs[0::2] = dst[:, 0]
    rhs[1::2] = dst[:, 1]
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    pa, pb, tx, ty = sol
    m = np.array([[pa, -pb, tx], [pb, pa, ty], [0.0, 0.0, 1.0]])
    return Transform2D("similarity", m)


def _normalize(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean() + 1e-12
    s = math.sqrt(2) / d
    t = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
    ph = np.c_[pts, np.ones(len(pts))]
    return (t @ ph.T).T[:, :2], t


def fit_homography(src: np.ndarray, dst: np.ndarray) -> Transform2D:
    """Normalized DLT from >= 4 correspondences."""
    n = len(src)
    if n < 4:
        raise InsufficientMatches("homography needs at least 4 correspondences")
    sn, ts = _normalize(src)
    dn, td = _normalize(dst)
    a = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    a[0::2] = np.c_[x, y, np.ones(n), np.zeros(n), np.zeros(n), np.zeros(n), -u * x, -u * y, -u]
    a[1::2] = np.c_[np.zeros(n), np.zeros(n), np.zeros(n), x, y, np.ones(n), -v * x, -v * y, -v]
    _, _, vt = np.linalg.svd(a)
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(h[2, 2]) < 1e-12:
        raise TransformError("degenerate homography")
    return Transform2D("homography", h / h[2, 2])


def _fit(model: str, src: np.ndarray, dst: np.ndarray) -> Transform2D:
    return fit_similarity(src, dst) if model == "similarity" else fit_homography(src, dst)


def _reprojection_errors(t: Transform2D, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    proj = t.apply(src)
    return np.sqrt(((proj - dst) ** 2).sum(axis=1))


def estimate_transform(correspondences, cfg: RansacConfig) -> AlignmentReport:
    """Consensus loop over (src, dst) point pairs; deterministic for a fixed seed.

    correspondences: sequence of ((xs, ys), (xd, yd)) or an (n, 4) array.
    The winning model is refit by least squares on its inlier set and the
    inliers are re-evaluated under the refit transform.
    """
    arr = np.asarray([(a[0], a[1], b[0], b[1]) for a, b in correspondences], dtype=np.float64) \
        if not isinstance(correspondences, np.ndarray) else np.asarray(correspondences, np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError("correspondences must be (n, 4)-shaped")
    n = len(arr)
    s = cfg.minimal_set
    if n < s:
        raise InsufficientMatches(f"{cfg.model} needs {s} correspondences, got {n}")
    src, dst = arr[:, :2], arr[:, 2:]

    rng = np.random.default_rng(cfg.seed)
    best_count = -1
    best_err = np.inf
    best_inliers = None
    needed = cfg.max_iterations
    it = 0
    while it < min(cfg.max_iterations, needed):
        it += 1
        idx = rng.choice(n, size=s, replace=False)
        try:
            t = _fit(cfg.model, src[idx], dst[idx])
        except (TransformError, np.linalg.LinAlgError):
            continue
        err = _reprojection_errors(t, src, dst)
        inliers = err < cfg.inlier_threshold_px
        count = int(inliers.sum())
        mean_err = float(err[inliers].mean()) if count else np.inf
        if count > best_count or (count == best_count and mean_err < best_err):
            best_count = count
            best_err = mean_err
            best_inliers = inliers
            w = count / n
            if w > 0:
                denom = math.log(max(1e-12, 1.0 - w ** s))
                if denom < 0:
                    needed = min(cfg.max_iterations,
                                 int(math.ceil(math.log(1.0 - cfg.confidence) / denom)))

    if best_inliers is None or best_count < max(cfg.min_inliers, s):
        raise NoConsensus(f"best consensus {max(best_count, 0)} below min_inliers {cfg.min_inliers}")

    refit = _fit(cfg.model, src[best_inliers], dst[best_inliers])
    err = _reprojection_errors(refit, src, dst)
    inliers = err < cfg.inlier_threshold_px
    count = int(inliers.sum())
    if count < cfg.min_inliers:
        raise NoConsensus(f"refit consensus {count} below min_inliers {cfg.min_inliers}")
    return AlignmentReport(
        transform=refit,
        inlier_count=count,
        mean_error_px=float(err[inliers].mean()),
        matched_count=n,
    )

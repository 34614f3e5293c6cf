"""Feature-based registration of test frames to golden images."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import ImageBuffer
from ..imaging import warp
from .orb import (
    ImageTooSmall,
    Keypoint,
    MatchPair,
    OrbConfig,
    detect_orb,
    hamming_distances,
    match_descriptors,
)
from .ransac import (
    AlignmentReport,
    InsufficientMatches,
    NoConsensus,
    RansacConfig,
    estimate_transform,
    fit_homography,
    fit_similarity,
)


class AlignmentFailed(RuntimeError):
    """Registration failure; .stage names the stage that failed."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class AlignConfig:
    orb: OrbConfig = field(default_factory=OrbConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    ratio_max: float = 0.75


def align_to_golden(test: ImageBuffer, golden: ImageBuffer,
                    cfg: AlignConfig | None = None) -> tuple[ImageBuffer, AlignmentReport]:
    """Detect, match, estimate, and warp the test frame into the golden frame."""
    from ..imaging import to_grayscale

    cfg = cfg or AlignConfig()
    gray_t = to_grayscale(test) if test.channels == 3 else test
    gray_g = to_grayscale(golden) if golden.channels == 3 else golden

    try:
        kps_t, desc_t = detect_orb(gray_t, config=cfg.orb)
        kps_g, desc_g = detect_orb(gray_g, config=cfg.orb)
    except ImageTooSmall as e:
        raise AlignmentFailed("detect", str(e)) from e
    if not kps_t or not kps_g:
        raise AlignmentFailed("detect", "no keypoints detected")

    try:
        matches = match_descriptors(desc_t, desc_g, cfg.ratio_max)
    except ValueError as e:
        raise AlignmentFailed("match", str(e)) from e
    if len(matches) < cfg.ransac.minimal_set:
        raise AlignmentFailed("match", f"only {len(matches)} matches")

    pairs = np.array([
        (kps_t[m.index_a].x, kps_t[m.index_a].y, kps_g[m.index_b].x, kps_g[m.index_b].y)
        for m in matches
    ])
    try:
        report = estimate_transform(pairs, cfg.ransac)
    except (InsufficientMatches, NoConsensus) as e:
        raise AlignmentFailed("estimate", str(e)) from e
    report.detected_test = len(kps_t)
    report.detected_golden = len(kps_g)
    aligned = warp(test, report.transform, golden.width, golden.height)
    return aligned, report

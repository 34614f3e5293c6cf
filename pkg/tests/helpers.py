import numpy as np

from aoi.core import (
    ImageBuffer,
    InspectionTask,
    Profile,
    RegionOfInterest,
    TaskKind,
)


def rand_image(rng, w=32, h=32, channels=3, lo=0, hi=256):
    return ImageBuffer(rng.integers(lo, hi, size=(h, w, channels), dtype=np.uint8))


def make_profile(n_tasks=1):
    tasks = []
    for i in range(n_tasks):
        tid = f"task-{i}"
        tasks.append(
            InspectionTask(
                id=tid,
                kind=TaskKind.TEMPLATE_PRESENCE,
                roi=RegionOfInterest(id=f"roi-{i}", view="top", rect=(10 * i, 5, 40, 30), task_ref=tid),
                params={"k": 3, "probability_threshold": 0.5},
            )
        )
    return Profile(
        id="prof-1",
        product_name="demo-board",
        views=["top"],
        golden_images={"top": "profiles/prof-1/golden/top.png"},
        tasks=tasks,
    )


def textured_image(seed, w=256, h=256, channels=3):
    """Smooth random background plus high-contrast rectangles: plenty of
    corners for feature detection, deterministic per seed."""
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    base = rng.uniform(20, 235, size=(h // 8 + 2, w // 8 + 2, channels))
    img = ndimage.zoom(base, (8, 8, 1), order=1)[:h, :w]
    for _ in range(50):
        x = int(rng.integers(4, w - 16))
        y = int(rng.integers(4, h - 16))
        ww = int(rng.integers(5, 13))
        hh = int(rng.integers(5, 13))
        img[y:y + hh, x:x + ww] = rng.uniform(0, 255, channels)
    return ImageBuffer(np.clip(img, 0, 255).astype(np.uint8))

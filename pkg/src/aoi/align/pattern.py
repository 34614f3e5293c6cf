"""Fixed 256-pair sampling pattern for the rotation-steered binary descriptor.

Generated once from a seeded Gaussian (sigma 6.2, samples rejected beyond a
13 px radius so rotated points stay inside the 31 px patch) and frozen here so
descriptors are reproducible across builds. Each row is (x1, y1, x2, y2).
"""
import numpy as np

BRIEF_PAIRS = np.array([
    (3, 6, -6, -2), (6, 6, -3, 11), (1, 7, -3, -4), (4, 0, 3, -2),
    (4, 3, 0, -5), (4, 7, -2, -3), (2, -7, 12, 2), (7, -6, -2, 8),
    (0, 3, 4, -11), (8, -5, -4, 4), (-5, 3, 7, -1), (-3, 2, 6, 8),
    (1, -3, -1, -2), (4, -1, 1, -1), (4, -3, 6, -2), (1, 6, -3, 2),
    (4, -5, 5, 1), (-4, -1, 4, -8), (2, 7, -1, 6), (0, 1, -9, -8),
    (0, -8, 3, 4), (11, 1, 10, 0), (-10, 0, -10, 1), (-4, -9, 8, 6),
    (-3, -2, -1, -8), (-7, 1, 7, -5), (7, 4, -6, -5), (-2, 11, 0, 1),
    (9, 4, 7, -7), (0, -7, 9, 9), (-6, 5, 2, -2), (-7, 7, 5, -5),
    (11, -2, 0, 6), (0, -1, -3, -8), (0, -6, 2, 2), (-7, -10, 4, -4),
    (-11, -5, 3, -2), (6, 0, 2, -1), (7, 5, 1, 0), (2, -3, -2, -2),
    (6, -7, 1, -1), (3, 11, -5, -3), (7, 0, -1, 11), (-4, 4, 5, 4),
    (-6, 2, -1, 8), (-9, 8, 1, 1), (-4, 2, 9, 3), (1, -3, -5, -8),
    (6, 11, 1, 0), (3, 2, -4, -10), (-4, 0, -2, -1), (-6, 5, -7, 8),
    (5, -6, -6, -7), (-5, 2, 0, 12), (2, -3, -9, 4), (7, 5, -11, -3),
    (0, -1, -6, 2), (-1, -1, -2, 0), (6, -4, -8, -9), (-4, 7, 6, -9),
    (2, 2, -4, 1), (-11, 2, 4, -4), (2, -3, -2, -1), (3, -6, 2, -11),
    (-2, -1, -3, -3), (0, -1, -10, -4), (8, -4, -3, 5), (-10, 7, -4, -2),
    (-2, 3, -3, 8), (-7, -5, -3, 0), (0, -1, 12, -4), (3, -4, 11, 0),
    (12, -1, -4, -1), (-11, 3, 5, 2), (1, -4, -5, 3), (-8, -10, -4, -10),
    (1, -5, 2, -5), (4, 4, 1, 4), (1, 6, -5, -6), (-3, 1, -6, -3),
    (-2, -3, 5, -5), (7, -1, 1, 9), (6, -9, 4, 3), (-7, 4, -3, -5),
    (-5, -3, -6, -4), (-9, -5, 4, -1), (6, 7, 9, 1), (-6, -1, 9, 7),
    (-3, -1, 8, 7), (3, -1, -2, 4), (7, -1, -3, -2), (-3, -3, 3, -3),
    (-3, -10, -1, -3), (-6, 3, 7, -8), (7, -5, -2, -5), (0, 9, -2, 4),
    (-2, 2, -4, 2), (-4, 5, -8, 3), (0, 3, 8, 1), (3, 4, -5, -7),
    (10, 8, -2, -2), (-2, -3, -1, 0), (-7, 0, 4, 11), (-1, -2, -1, -5),
    (0, 3, 12, 5), (2, 6, -5, -3), (-10, 1, 0, 3), (0, -1, -1, 0),
    (-4, 0, -6, -2), (-4, -4, -11, 3), (1, -2, 2, 1), (9, -3, 9, -8),
    (-10, -5, 4, 7), (3, 0, 1, -2), (-3, -4, 1, -5), (8, -2, -1, -3),
    (1, -3, 6, -1), (4, 2, -5, -7), (-10, 5, 4, -1), (-8, -1, -7, -1),
    (2, 3, -7, -9), (3, -5, 0, -3), (3, -3, 6, 7), (-2, 5, -11, -6),
    (-7, 4, -5, 5), (2, 3, -3, -7), (6, 2, -4, -5), (-3, -2, -6, -4),
    (5, 2, -1, 6), (0, 1, 9, 4), (-7, 5, 11, -6), (-3, -7, 8, -6),
    (-8, 0, -3, -3), (5, 1, -4, 0), (1, -9, 3, 0), (5, 2, -11, -3),
    (-2, 7, 6, 2), (-1, -4, -8, 5), (-10, 5, -2, -1), (-3, 1, -7, -1),
    (-2, -4, -2, 5), (-10, 0, -1, 11), (4, -1, -2, -2), (1, -11, 0, 1),
    (11, -3, -1, -10), (-10, -8, -6, -2), (-9, 5, 3, 2), (3, -6, 11, -1),
    (2, -6, 4, 1), (-6, 10, 9, 1), (-12, 0, -9, 5), (-1, 0, -6, -5),
    (2, -2, 4, 1), (-3, -8, -1, 1), (2, -6, 2, -1), (-8, 8, -1, -2),
    (-8, -5, -12, 2), (1, 0, 10, -2), (-4, -3, 6, -9), (-1, 11, -2, 7),
    (-6, 6, 2, -10), (-2, -6, 8, -1), (-2, 0, 10, 0), (0, -6, 3, -5),
    (-1, 2, -7, 1), (-6, -6, -7, -2), (-4, 4, -3, -3), (-12, 2, -1, -8),
    (5, -2, 6, 0), (4, -4, 1, 2), (7, 0, -7, 1), (-5, 0, -11, -3),
    (-3, 8, -1, -3), (-1, 4, 0, -2), (-12, 5, -2, 1), (11, -5, -2, 4),
    (-5, 0, 8, -3), (-2, 2, 5, -1), (-4, 4, -3, -6), (7, -7, -9, 0),
    (6, -10, -6, -8), (-5, -8, -11, 4), (8, 8, 3, 8), (0, 9, 6, 1),
    (6, -7, 1, 5), (5, -7, 1, -11), (2, 5, 0, 2), (0, 1, 3, -11),
    (-1, 0, -4, -1), (3, 2, 1, -4), (9, 0, -3, -7), (1, -1, -2, -6),
    (-4, -4, -1, 2), (7, -2, 4, 2), (-8, -7, 1, 4), (-2, -1, 11, -6),
    (7, -2, 4, 3), (-6, 1, 6, -3), (2, 0, 2, -10), (0, 1, -5, 2),
    (0, -2, -3, 3), (-1, -3, -5, 6), (5, 0, 10, -5), (4, 10, 0, -7),
    (2, 0, -2, 7), (-3, -6, 8, -3), (-10, -1, -3, 2), (0, 2, -3, 11),
    (-10, 4, -1, 0), (1, 2, -1, 9), (-4, -6, -9, 2), (7, 0, -1, -8),
    (2, -3, -5, 8), (-3, -1, -1, -8), (-5, -4, 3, 5), (-10, -5, 11, -3),
    (-11, -6, 6, 3), (-1, 5, -7, -1), (-6, -3, 2, -2), (-7, -3, -7, -5),
    (2, -3, 1, 9), (3, -3, 2, 2), (0, 5, -1, -6), (-3, 8, 7, 2),
    (-6, 5, -4, 8), (1, -2, -1, -7), (11, 3, -12, -2), (-1, -2, 9, 6),
    (-3, 11, 1, -6), (5, -5, -1, 9), (2, 8, 9, 2), (2, -1, -3, 0),
    (-1, -3, -2, 3), (0, 4, -10, -1), (-9, 4, -1, -3), (2, 1, -11, 2),
    (1, 8, -2, 0), (-8, 1, 12, 3), (1, 7, 4, -1), (0, 11, -7, -3),
    (-7, 10, -2, -5), (3, -6, -1, -1), (-6, 3, -2, 2), (7, 7, -8, -8),
    (-5, -9, 2, 4), (-2, 6, 3, -3), (0, 3, -3, -1), (-7, -2, -8, 4),
    (4, 0, 7, -3), (7, 1, 8, 4), (-2, -5, 11, 6), (-12, -2, 4, -3),
    (-2, 4, 5, 7), (2, -3, -3, -10), (-10, 4, 2, 5), (-1, -2, -7, 5),
], dtype=np.int64)

assert BRIEF_PAIRS.shape == (256, 4)

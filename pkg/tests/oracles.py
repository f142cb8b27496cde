"""Independent reference computations used by the tests.

Each one takes the slow, obvious route so it shares no code path with the
library beyond the inputs it is handed.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

EPS = 1e-9


def slab_sum_bruteforce(field: np.ndarray, points: np.ndarray, u: int, t: int) -> float:
    """Sum of ``field`` over every grid pixel whose centre falls in the chord slab.

    Works in absolute pixel coordinates over the whole grid.
    """
    n = len(points)
    if t == 0:
        return float(field.sum())
    e = (u + n // 2**t) % n
    (xu, yu), (xe, ye) = points[u], points[e]
    theta = math.atan2(ye - yu, xe - xu)
    c, s = math.cos(theta), math.sin(theta)
    pu, pe = xu * c + yu * s, xe * c + ye * s
    lo, hi = min(pu, pe), max(pu, pe)
    rows, cols = np.indices(field.shape)
    proj = cols * c + rows * s
    return float(field[(proj >= lo - EPS) & (proj <= hi + EPS)].sum())


def mort_bruteforce(interior: np.ndarray, complementary: np.ndarray, points: np.ndarray):
    n = len(points)
    q = int(round(math.log2(n)))
    out = np.zeros((2, q + 1, n))
    for t in range(q + 1):
        for u in range(n):
            out[0, t, u] = slab_sum_bruteforce(interior, points, u, t)
            out[1, t, u] = slab_sum_bruteforce(complementary, points, u, t)
    return out


def edt_bruteforce(inside: np.ndarray) -> np.ndarray:
    """Distance from each True pixel to the nearest False pixel (the grid is padded with False)."""
    padded = np.pad(inside, 1)
    oy, ox = np.nonzero(~padded)
    out = np.zeros(inside.shape)
    for y, x in zip(*np.nonzero(inside)):
        out[y, x] = math.sqrt(float(np.min((oy - (y + 1)) ** 2 + (ox - (x + 1)) ** 2)))
    return out


def components4(mask: np.ndarray) -> list[set]:
    """4-connected components by breadth-first flood fill."""
    seen = np.zeros(mask.shape, dtype=bool)
    comps = []
    h, w = mask.shape
    for y0, x0 in zip(*np.nonzero(mask)):
        if seen[y0, x0]:
            continue
        comp, queue = set(), deque([(y0, x0)])
        seen[y0, x0] = True
        while queue:
            y, x = queue.popleft()
            comp.add((y, x))
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] and not seen[yy, xx]:
                    seen[yy, xx] = True
                    queue.append((yy, xx))
        comps.append(comp)
    return comps


def arc_position(polyline: np.ndarray, point: np.ndarray) -> float:
    """Arc length from the first vertex to ``point``, which must lie on the closed polyline."""
    walked = 0.0
    n = len(polyline)
    for i in range(n):
        a, b = polyline[i], polyline[(i + 1) % n]
        seg = math.dist(a, b)
        if seg == 0:
            continue
        # point on segment a-b?
        cross = (b[0] - a[0]) * (point[1] - a[1]) - (b[1] - a[1]) * (point[0] - a[0])
        along = ((point[0] - a[0]) * (b[0] - a[0]) + (point[1] - a[1]) * (b[1] - a[1])) / seg
        if abs(cross) <= 1e-9 * seg and -1e-9 <= along <= seg + 1e-9:
            return walked + along
        walked += seg
    raise ValueError("point not on polyline")


def dft_magnitudes_loop(row, m: int) -> list[float]:
    n = len(row)
    out = []
    for k in range(1, m + 1):
        acc = 0j
        for i in range(1, n + 1):
            acc += row[i - 1] * complex(math.cos(2 * math.pi * i * k / n), -math.sin(2 * math.pi * i * k / n))
        out.append(abs(acc) / n)
    return out

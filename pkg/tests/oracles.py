"""Independent reference implementations used only by the tests."""

import math

import mpmath
import numpy as np
from scipy.spatial import cKDTree
from shapely.geometry import Polygon

from trustplan.geometry import Box, box_corners

mpmath.mp.dps = 50


def mp_penalty_bnd(arg, pen=100, scale=25, shift=7.5, cap=700):
    a = mpmath.mpf(arg)
    sig = 1 / (1 + mpmath.exp(-scale * a))
    z = min(a - mpmath.mpf(shift), mpmath.mpf(cap))
    return pen * (sig + mpmath.log(1 + scale * mpmath.exp(z)))


def mp_penalty_cls(arg):
    a = mpmath.mpf(arg)
    return 1 / (1 + a * a)


def mp_wrap(theta):
    t = mpmath.mpf(theta)
    two_pi = 2 * mpmath.pi
    return t - two_pi * mpmath.floor((t + mpmath.pi) / two_pi)


def perimeter_samples(box: Box, n: int) -> np.ndarray:
    """``n`` points spaced evenly along the rectangle boundary."""
    corners = np.array(box_corners(box) + [box_corners(box)[0]])
    seg = np.diff(corners, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    s = np.linspace(0.0, cum[-1], n, endpoint=False)
    idx = np.searchsorted(cum, s, side="right") - 1
    frac = (s - cum[idx]) / lengths[idx]
    # vertices are kept so the sampling error only comes from edge interiors
    return np.vstack([corners[:-1], corners[idx] + frac[:, None] * seg[idx]])


def sampled_box_distance(a: Box, b: Box, n: int = 10_000) -> float:
    """Brute-force minimum over perimeter samples; 0 when shapely says they intersect."""
    if shapely_box(a).intersects(shapely_box(b)):
        return 0.0
    pa = perimeter_samples(a, n)
    pb = perimeter_samples(b, n)
    # exhaustive nearest-sample search, accelerated by a k-d tree
    dist, _ = cKDTree(pb).query(pa)
    return float(dist.min())


def shapely_box(b: Box) -> Polygon:
    return Polygon(box_corners(b))


def random_box_pair(rng: np.random.Generator) -> tuple[Box, Box]:
    def one(center_scale):
        return Box(*rng.uniform(-center_scale, center_scale, 2), rng.uniform(-math.pi, math.pi),
                   rng.uniform(0.5, 3.0), rng.uniform(1.0, 6.0))
    return one(1.0), one(8.0)

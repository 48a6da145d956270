import numpy as np
from scipy.integrate import cumulative_trapezoid

from .conf import growthlab_setting


def bisect_monotone(classify, lo, hi, steps=None):
    """
    Vectorized bisection for monotone membership problems.

    ``classify(x)`` returns an integer array: negative where x lies left of
    the solution, positive where it lies right of it, zero on a hit.
    """
    steps = steps or growthlab_setting('BISECTION_STEPS')
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(int(steps)):
        mid = 0.5 * (lo + hi)
        side = classify(mid)
        hit = side == 0
        lo = np.where((side < 0) | hit, mid, lo)
        hi = np.where((side > 0) | hit, mid, hi)
    return 0.5 * (lo + hi)


def cumulative_integral(nodes, values, slopes=None):
    """
    Running integral from nodes[0], zero at the first node.

    With slopes at the nodes the trapezoid gets the end correction
    -h^2 (d_{k+1} - d_k) / 12 per cell, exact for cubics.
    """
    running = cumulative_trapezoid(values, nodes, initial=0.0)
    if slopes is None:
        return running
    h = np.diff(nodes)
    jump = np.diff(slopes)
    correction = np.where(np.isfinite(jump), -(h ** 2) * jump / 12.0, 0.0)
    running[1:] += np.cumsum(correction)
    return running


def uniform_nodes(lo, hi, points=None):
    points = int(points or growthlab_setting('TABULATION_POINTS'))
    return np.linspace(float(lo), float(hi), points)

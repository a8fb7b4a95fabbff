"""Brute-force grid minimum of Eve's correlation objective.

Every point of a ``resolution``^4 grid over (theta, g, h, Delta) is checked
against the constraints; no structure of the problem is exploited apart
from discarding Bell-infeasible (theta, g, h) before the Delta loop.
"""
import math

import numpy as np


def grid_minimum(S, lam, resolution=200):
    thetas = np.arange(resolution) * (2 * math.pi / resolution)
    axis = np.linspace(-1.0, 1.0, resolution)
    th, g, h = np.meshgrid(thetas, axis, axis, indexing="ij")
    c, s = np.cos(th), np.sin(th)
    bell = c * g + s * h >= S / 2
    c, s, g, h = c[bell], s[bell], g[bell], h[bell]
    if c.size == 0:
        return math.inf
    base = s * s * g * g + c * c * h * h
    cross = 2 * (2 * lam - 1) * s * c * g * h
    room = (1 - g * g) * (1 - h * h)
    gh2 = g * g * h * h
    best = math.inf
    for delta in axis:
        ok = room >= gh2 * delta * delta
        if ok.any():
            best = min(best, float((base + cross * delta)[ok].min()))
    return best

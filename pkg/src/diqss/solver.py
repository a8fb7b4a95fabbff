"""Eve's correlation bound under the random key-generation basis strategy.

Solves, for a CHSH value ``S`` and key-basis weight ``lam``::

    optimum  s^2 g^2 + c^2 h^2 + 2 (2 lam - 1) s c g h Delta
    s.t.     c g + s h >= S/2,   g^2 <= 1,   h^2 <= 1,   Delta^2 <= 1,
             (1 - g^2)(1 - h^2) >= g^2 h^2 Delta^2,   c = cos(theta), s = sin(theta)

and returns ``E_tilde = sqrt(optimum)``. ``sense="min"`` is the conservative
bound consumed by the key-rate code; ``sense="max"`` is kept for calibration.

Two reductions make the search cheap and exact in ``Delta``:

* The objective is linear in ``Delta`` and only ``|Delta| <= Delta_max(g, h)``
  constrains it, so the optimal ``Delta`` is ``+-Delta_max`` in closed form.
* For fixed ``theta`` and ``Delta`` the objective is a positive semidefinite
  quadratic form in ``(g, h)``, so shrinking ``(g, h)`` towards 0 lowers it
  while keeping every other constraint satisfied. The minimum therefore lies
  on the line ``c g + s h = S/2``, parametrized here as
  ``(g, h) = (S/2)(c, s) + u(-s, c)``.

The search is a dense deterministic grid followed by nested golden-section
refinement, so results are bit-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ._numerics import golden_section
from .errors import ParameterError, SolverError

S_MAX = 2.0 * math.sqrt(2.0)
TWO_PI = 2.0 * math.pi
INTERVAL_SLACK = 1e-9


@dataclass(frozen=True)
class SolverPoint:
    s: float
    c: float
    g: float
    h: float
    Delta: float
    objective: float

    def constraint_violations(self, S: float) -> dict:
        """Amount by which each constraint is violated (0 when satisfied)."""
        return {
            "bell": max(0.0, S / 2 - (self.c * self.g + self.s * self.h)),
            "circle": abs(self.c ** 2 + self.s ** 2 - 1.0),
            "g": max(0.0, self.g ** 2 - 1.0),
            "h": max(0.0, self.h ** 2 - 1.0),
            "Delta": max(0.0, self.Delta ** 2 - 1.0),
            "coupling": max(0.0, self.g ** 2 * self.h ** 2 * self.Delta ** 2
                            - (1 - self.g ** 2) * (1 - self.h ** 2)),
        }


def objective(s, c, g, h, Delta, lam):
    return s * s * g * g + c * c * h * h + 2.0 * (2.0 * lam - 1.0) * s * c * g * h * Delta


def delta_max(g, h):
    """Largest |Delta| allowed by Delta^2 <= 1 and the coupling constraint."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    gh = np.abs(g * h)
    slack = np.clip((1.0 - g * g) * (1.0 - h * h), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(gh > 0, np.sqrt(slack) / np.where(gh > 0, gh, 1.0), 1.0)
    return np.minimum(bound, 1.0)


def _best_delta(s, c, g, h, lam, sense):
    """Delta that optimizes the (linear-in-Delta) objective, and the value."""
    k = 2.0 * (2.0 * lam - 1.0) * s * c * g * h
    dm = delta_max(g, h)
    direction = 1.0 if sense == "max" else -1.0
    Delta = direction * np.sign(k) * dm
    return Delta, s * s * g * g + c * c * h * h + k * Delta


def _u_interval(theta: float, S: float) -> Tuple[float, float]:
    """Range of u keeping (g, h) = (S/2)(c, s) + u(-s, c) inside the unit box."""
    c, s = math.cos(theta), math.sin(theta)
    half = S / 2.0
    lo, hi = -math.inf, math.inf
    # g = half*c - u*s in [-1, 1];  h = half*s + u*c in [-1, 1]
    for base, coef in ((half * c, -s), (half * s, c)):
        if abs(coef) < 1e-15:
            if abs(base) > 1.0:
                return 1.0, -1.0
            continue
        a, b = (-1.0 - base) / coef, (1.0 - base) / coef
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if hi < lo <= hi + INTERVAL_SLACK:
        # a single feasible point (S = 2*sqrt(2)) lost to rounding
        lo = hi = 0.5 * (lo + hi)
    return lo, hi


def _line_value(theta: float, u: float, S: float, lam: float) -> float:
    """Scalar version of :func:`_on_line` used inside the refinement loops."""
    c, s = math.cos(theta), math.sin(theta)
    g = min(1.0, max(-1.0, S / 2.0 * c - u * s))
    h = min(1.0, max(-1.0, S / 2.0 * s + u * c))
    k = 2.0 * (2.0 * lam - 1.0) * s * c * g * h
    val = s * s * g * g + c * c * h * h
    if k != 0.0:
        gh = abs(g * h)
        dm = min(1.0, math.sqrt(max(0.0, (1 - g * g) * (1 - h * h))) / gh)
        val -= abs(k) * dm
    return val


def _on_line(theta, u, S, lam):
    c, s = np.cos(theta), np.sin(theta)
    g = S / 2.0 * c - u * s
    h = S / 2.0 * s + u * c
    g = np.clip(g, -1.0, 1.0)
    h = np.clip(h, -1.0, 1.0)
    Delta, val = _best_delta(s, c, g, h, lam, "min")
    return s, c, g, h, Delta, val


def _solve_min(S, lam, resolution):
    thetas = np.arange(resolution) * (TWO_PI / resolution)
    best = (math.inf, None, None)
    for theta in thetas:
        lo, hi = _u_interval(float(theta), S)
        if lo > hi:
            continue
        us = np.linspace(lo, hi, resolution)
        vals = _on_line(theta, us, S, lam)[-1]
        k = int(np.argmin(vals))
        if vals[k] < best[0]:
            best = (float(vals[k]), float(theta), float(us[k]))
    if best[1] is None:
        raise SolverError(f"no feasible point for S = {S}")

    def inner(theta):
        lo, hi = _u_interval(theta, S)
        if lo > hi:
            return math.inf, 0.0
        u, val = golden_section(lambda u: _line_value(theta, u, S, lam), lo, hi, xtol=1e-11)
        return val, u

    step = TWO_PI / resolution
    theta0 = best[1]
    theta_best, _ = golden_section(lambda t: inner(t)[0], theta0 - step, theta0 + step,
                                   xtol=1e-11)
    val, u = inner(theta_best)
    if val > best[0]:
        theta_best, u = best[1], best[2]
    s, c, g, h, Delta, val = _on_line(theta_best, u, S, lam)
    return SolverPoint(float(s), float(c), float(g), float(h), float(Delta), float(val))


def _solve_max(S, lam, resolution):
    thetas = np.arange(resolution) * (TWO_PI / resolution)
    grid = np.linspace(-1.0, 1.0, resolution)
    th, g, h = np.meshgrid(thetas, grid, grid, indexing="ij")
    c, s = np.cos(th), np.sin(th)
    Delta, vals = _best_delta(s, c, g, h, lam, "max")
    vals = np.where(c * g + s * h >= S / 2.0, vals, -math.inf)
    k = np.unravel_index(int(np.argmax(vals)), vals.shape)
    if not np.isfinite(vals[k]):
        raise SolverError(f"no feasible point for S = {S}")
    x = [float(thetas[k[0]]), float(grid[k[1]]), float(grid[k[2]])]
    best = float(vals[k])

    def neg(x):
        t, gg, hh = x
        if abs(gg) > 1 or abs(hh) > 1 or math.cos(t) * gg + math.sin(t) * hh < S / 2.0:
            return math.inf
        return -float(_best_delta(math.sin(t), math.cos(t), gg, hh, lam, "max")[1])

    widths = [TWO_PI / resolution, 2.0 / resolution, 2.0 / resolution]
    bounds = [(-math.inf, math.inf), (-1.0, 1.0), (-1.0, 1.0)]
    for _ in range(40):
        improved = False
        for i in range(3):
            lo = max(bounds[i][0], x[i] - widths[i])
            hi = min(bounds[i][1], x[i] + widths[i])

            def along(v, i=i):
                y = list(x)
                y[i] = v
                return neg(y)

            v, f = golden_section(along, lo, hi, xtol=1e-12)
            if -f > best + 1e-15:
                best, x[i], improved = -f, v, True
        widths = [w * 0.5 for w in widths]
        if not improved and max(widths) < 1e-10:
            break
    t, gg, hh = x
    Delta, val = _best_delta(math.sin(t), math.cos(t), gg, hh, lam, "max")
    return SolverPoint(math.sin(t), math.cos(t), gg, hh, float(Delta), float(val))


def eve_correlation_bound(S: float, lam: float, sense: str = "min",
                          resolution: int = 64) -> Tuple[float, SolverPoint]:
    """Return ``(E_tilde, point)`` for CHSH value ``S`` and key-basis weight ``lam``."""
    if resolution < 8:
        raise ParameterError(f"resolution must be >= 8, got {resolution}")
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lam must lie in [0, 1], got {lam!r}")
    if sense not in ("min", "max"):
        raise ParameterError(f"sense must be 'min' or 'max', got {sense!r}")
    if S > S_MAX + 1e-12:
        raise SolverError(f"S = {S} exceeds the quantum bound 2*sqrt(2); infeasible")
    if S < 2.0 - 1e-12:
        raise ParameterError(f"S must lie in [2, 2*sqrt(2)], got {S!r}")
    S = min(S, S_MAX)
    point = _solve_min(S, lam, resolution) if sense == "min" else _solve_max(S, lam, resolution)
    return min(1.0, math.sqrt(max(point.objective, 0.0))), point

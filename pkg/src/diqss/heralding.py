"""Fully-loaded efficiency of the heralded memory stage.

Every pulse interval each user independently achieves a separation event
with probability ``P_s``. Memories keep only the newest photon, and a photon
that waited ``k`` intervals survives with ``eta_M**(2k)`` (both photons of the
pair are stored). ``E_m`` is the expected number of fully loaded events per
emitted pulse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from ._numerics import golden_section
from .errors import ParameterError
from .params import ChannelParams, check_probability

# below this |ratio - 1| the geometric bracket is replaced by its limit
DEGENERATE_RATIO_TOL = 0.0


def p_success(params: ChannelParams) -> float:
    """Per-pulse separation probability of one user, 2 eta_t T (1 - T)."""
    return 2.0 * params.eta_t * params.T * (1.0 - params.T)


def _check_loaded_args(n, P_s, eta_M):
    if int(n) != n or n < 0:
        raise ParameterError(f"n must be a non-negative integer, got {n!r}")
    check_probability("P_s", P_s)
    check_probability("eta_M", eta_M)
    return int(n)


def p_loaded_oracle(n: int, P_s: float, eta_M: float) -> float:
    """Literal double sum for the probability of full loading at pulse n+1.

    One user's first success lands on pulse ``n+1``; the two others have their
    latest success on pulses ``l+1`` and ``m+1`` (``l, m <= n``) and wait
    ``n-l`` and ``n-m`` intervals. Evaluated term by term with ``0**0 = 1``,
    so ``eta_M = 0`` keeps only the same-pulse term.
    """
    n = _check_loaded_args(n, P_s, eta_M)
    surv = eta_M ** 2
    total = 0.0
    for m in range(n + 1):
        inner = 0.0
        for l in range(n + 1):
            inner += P_s * (1 - P_s) ** (n - l) * surv ** (n - l)
        total += inner * P_s * (1 - P_s) ** (n - m) * surv ** (n - m)
    return total * P_s * (1 - P_s) ** n


def _geometric_bracket(ratio: float, n: int) -> float:
    """sum_{j=0}^{n} ratio**j, accurate near ratio = 1."""
    delta = ratio - 1.0  # exact for ratio in [0.5, 2] (Sterbenz)
    if abs(delta) <= DEGENERATE_RATIO_TOL:
        return float(n + 1)
    if ratio == 0.0:
        return 1.0
    if abs(delta) < 0.5:
        return math.expm1((n + 1) * math.log1p(delta)) / delta
    return (ratio ** (n + 1) - 1.0) / delta


def p_loaded(n: int, P_s: float, eta_M: float) -> float:
    """Closed form P_s^3 (1-P_s)^n [sum_j (eta_M^2 (1-P_s))^j]^2."""
    n = _check_loaded_args(n, P_s, eta_M)
    ratio = eta_M ** 2 * (1.0 - P_s)
    return P_s ** 3 * (1.0 - P_s) ** n * _geometric_bracket(ratio, n) ** 2


@dataclass(frozen=True)
class LoadingStats:
    P_s: float
    per_interval: Tuple[float, ...]
    P_t: float
    P_w_partial: float
    P_w_final: float
    P_w: float
    E_m: float

    def as_dict(self):
        return {
            "P_s": self.P_s,
            "per_interval": list(self.per_interval),
            "P_t": self.P_t,
            "P_w_partial": self.P_w_partial,
            "P_w_final": self.P_w_final,
            "P_w": self.P_w,
            "E_m": self.E_m,
        }


def loading_stats(params: ChannelParams) -> LoadingStats:
    """Total loading probability, pulse consumption and E_m for ``params``."""
    return loading_stats_for(p_success(params), params.eta_M, params.N)


def loading_stats_for(P_s: float, eta_M: float, N: int) -> LoadingStats:
    """Loading statistics for an explicit per-pulse success probability.

    Attempts that load early (``n < N``) consume ``n+1`` pulses; every other
    attempt, loaded at the last interval or not at all, consumes ``N+1``.
    """
    per_interval = tuple(p_loaded(n, P_s, eta_M) for n in range(N + 1))
    P_t = sum(per_interval)
    P_t_before_last = sum(per_interval[:N])
    P_w_partial = sum((n + 1) * per_interval[n] for n in range(N))
    P_w_final = (N + 1) * (1.0 - P_t_before_last)
    P_w = P_w_partial + P_w_final
    return LoadingStats(
        P_s=P_s,
        per_interval=per_interval,
        P_t=P_t,
        P_w_partial=P_w_partial,
        P_w_final=P_w_final,
        P_w=P_w,
        E_m=P_t / P_w,
    )


def fully_loaded_efficiency(params: ChannelParams) -> float:
    return loading_stats(params).E_m


class TransmittanceOptimum(NamedTuple):
    T: float
    E_m: float
    flat: bool


def optimize_transmittance(params: ChannelParams, grid_step: float = 0.01) -> TransmittanceOptimum:
    """Maximize E_m over the beam-splitter transmittance.

    Scans T on an open grid over (0, 1) and polishes the best grid cell by
    golden-section search to 1e-6 in T. A vanishing objective (for example
    ``eta_t = 0``) is reported with ``flat=True`` and ``T = 0.5``.
    """
    if not 0 < grid_step <= 0.1:
        raise ParameterError(f"grid_step must be in (0, 0.1], got {grid_step!r}")

    def objective(T):
        return fully_loaded_efficiency(params.replace(T=float(T)))

    grid = np.arange(grid_step, 1.0, grid_step)
    values = np.array([objective(T) for T in grid])
    if values.max() <= 0.0:
        return TransmittanceOptimum(0.5, 0.0, True)
    k = int(np.argmax(values))
    lo = grid[k - 1] if k > 0 else grid[k] / 2
    hi = grid[k + 1] if k + 1 < grid.size else (grid[k] + 1.0) / 2
    T_best, neg = golden_section(lambda T: -objective(T), lo, hi, xtol=1e-7)
    return TransmittanceOptimum(T_best, -neg, False)

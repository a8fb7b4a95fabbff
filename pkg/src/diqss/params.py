"""Parameter bundles for the physical layer, the noise model and the protocol.

All bundles are frozen dataclasses validated on construction. Derived
quantities (the channel transmission ``eta_t`` and the key-basis weight
``lam``) are properties, never stored fields.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

from .errors import ParameterError

STRATEGIES = ("base", "postselect", "advanced")
INTERPRETATIONS = ("A", "literal")
SENSES = ("min", "max")


def check_probability(name: str, value: float) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class ChannelParams:
    """Physical-layer parameters of the heralded memory loading stage.

    Attributes:
        T: variable beam splitter transmittance.
        d: per-user photon transmission distance in km (same for all users).
        alpha: fiber loss in dB/km.
        eta_M: memory storage efficiency per photon per pulse interval.
        N: maximum number of storage pulse intervals.
        R_rep: source repetition rate in Hz.
        eta_t_override: if set, used instead of ``10**(-alpha*d/10)``.
    """

    T: float = 0.5
    d: float = 0.0
    alpha: float = 0.2
    eta_M: float = 1.0
    N: int = 0
    R_rep: float = 1e7
    eta_t_override: Optional[float] = None

    def __post_init__(self):
        check_probability("T", self.T)
        check_probability("eta_M", self.eta_M)
        if not self.d >= 0:
            raise ParameterError(f"d must be >= 0 km, got {self.d!r}")
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be > 0 dB/km, got {self.alpha!r}")
        if int(self.N) != self.N or self.N < 0:
            raise ParameterError(f"N must be a non-negative integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if not self.R_rep > 0:
            raise ParameterError(f"R_rep must be > 0 Hz, got {self.R_rep!r}")
        if self.eta_t_override is not None:
            check_probability("eta_t", self.eta_t_override)

    @property
    def eta_t(self) -> float:
        if self.eta_t_override is not None:
            return float(self.eta_t_override)
        return 10.0 ** (-self.alpha * self.d / 10.0)

    @property
    def eta_t_overridden(self) -> bool:
        return self.eta_t_override is not None

    def replace(self, **changes) -> "ChannelParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class NoiseParams:
    """White-noise fidelity ``F`` and per-photon local efficiency ``eta_l``."""

    F: float = 1.0
    eta_l: float = 1.0

    def __post_init__(self):
        check_probability("F", self.F)
        check_probability("eta_l", self.eta_l)

    def replace(self, **changes) -> "NoiseParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ProtocolParams:
    """Sifting and key-rate strategy parameters.

    ``q`` is the noise-preprocessing flip probability and is only meaningful
    for the advanced strategy; passing it with another strategy is an error.
    ``interpretation`` and ``sense`` select how the advanced-strategy entropy
    bound is evaluated (see :mod:`diqss.solver` and :func:`diqss.keyrate.noise_entropy`).
    """

    p: float = 0.5
    P_c: float = 0.5
    P_GHZ: float = 0.25
    q: Optional[float] = None
    strategy: str = "base"
    interpretation: str = "A"
    sense: str = "min"

    def __post_init__(self):
        check_probability("p", self.p)
        check_probability("P_c", self.P_c)
        check_probability("P_GHZ", self.P_GHZ)
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.interpretation not in INTERPRETATIONS:
            raise ParameterError(
                f"interpretation must be one of {INTERPRETATIONS}, got {self.interpretation!r}")
        if self.sense not in SENSES:
            raise ParameterError(f"sense must be one of {SENSES}, got {self.sense!r}")
        if self.q is not None:
            if self.strategy != "advanced":
                raise ParameterError("q is only used by the advanced strategy")
            if not 0.0 <= self.q <= 0.5:
                raise ParameterError(f"q must lie in [0, 0.5], got {self.q!r}")

    @property
    def lam(self) -> float:
        """Weight of the first key-generation basis, p^2 / (p^2 + (1-p)^2)."""
        a, b = self.p ** 2, (1.0 - self.p) ** 2
        return a / (a + b)

    @property
    def q_value(self) -> float:
        return 0.0 if self.q is None else float(self.q)

    def replace(self, **changes) -> "ProtocolParams":
        return dataclasses.replace(self, **changes)

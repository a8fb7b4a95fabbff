"""Secure key rate bounds and the practical key generation efficiency.

Three key-round strategies are supported:

``base``
    fixed key basis {A1 B1 C1}; a lost photon counts as an error.
``postselect``
    as ``base`` but a lost photon is replaced by a random bit.
``advanced``
    postselection plus noise preprocessing (Alice flips with probability
    ``q``) and a random choice between the key bases {A1 B1 C1} and
    {A2 B1 C2}; Eve's information is bounded through :mod:`diqss.solver`.

Rates are in bits per key-generation round; efficiencies in bits per second.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from . import heralding
from .errors import DomainError, ParameterError, ThresholdNotFoundError
from .params import ChannelParams, NoiseParams, ProtocolParams, check_probability
from .quantum import qber
from .solver import S_MAX, SolverPoint, eve_correlation_bound

SOLVER_RESOLUTION = 64
SPDC_GHZ_RATE = 1e-8
NO_QMA_TRANSMITTANCE = 1e-3


def binary_entropy(x):
    """Shannon entropy of a Bernoulli(x) variable in bits (0 log 0 = 0)."""
    arr = np.asarray(x, dtype=float)
    if np.any(~((arr >= 0.0) & (arr <= 1.0))):
        raise ParameterError(f"binary entropy argument must lie in [0, 1], got {x!r}")
    inside = (arr > 0.0) & (arr < 1.0)
    safe = np.where(inside, arr, 0.5)
    out = np.where(inside, -safe * np.log2(safe) - (1 - safe) * np.log2(1 - safe), 0.0)
    return float(out) if out.ndim == 0 else out


def g_base(x: float) -> float:
    """1 - h(1/2 + x/2): Eve's uncertainty for correlator ``x`` in [0, 1]."""
    return 1.0 - binary_entropy(0.5 + 0.5 * x)


def chsh_from_noise(noise: NoiseParams) -> float:
    """CHSH value of the white-noise GHZ state with local loss, 2 sqrt(2) F eta_l^3."""
    return S_MAX * noise.F * noise.eta_l ** 3


def _check_S(S):
    if S > S_MAX + 1e-12:
        raise DomainError(f"S = {S} exceeds the quantum bound 2*sqrt(2)")


def r_infinity_base(S: float, delta: float, p: float = 0.5) -> float:
    """Lower bound p^2 [g_base(sqrt(S^2/4 - 1)) - h(delta)].

    Without a Bell violation (``S <= 2``) Eve's uncertainty term is taken as 0,
    so the returned value is ``-p^2 h(delta)``.
    """
    _check_S(S)
    check_probability("delta", delta)
    eve = g_base(math.sqrt(min(1.0, S * S / 4.0 - 1.0))) if S > 2.0 else 0.0
    return p * p * (eve - binary_entropy(delta))


def noise_entropy(x: float, q: float, interpretation: str = "A") -> float:
    """Eve's uncertainty with noise preprocessing at flip probability ``q``.

    Interpretation ``"A"`` takes ``x`` as a correlator in [0, 1]::

        1 - h(1/2 + x/2) + h(1/2 + sqrt((1-2q)^2 + 4q(1-q) x^2) / 2)

    ``"literal"`` evaluates the CHSH-valued form with ``x^2/4 - 1`` in place
    of ``x^2`` and therefore needs ``x`` in [2, 2 sqrt(2)].
    """
    if not 0.0 <= q <= 0.5:
        raise ParameterError(f"q must lie in [0, 0.5], got {q!r}")
    if interpretation == "A":
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"interpretation A needs x in [0, 1], got {x!r}")
        corr2 = x * x
    elif interpretation == "literal":
        if x < 2.0 or x > S_MAX + 1e-12:
            raise DomainError(
                f"literal interpretation needs x in [2, 2*sqrt(2)] (sqrt(x^2/4 - 1) is "
                f"imaginary otherwise), got {x!r}")
        corr2 = min(1.0, x * x / 4.0 - 1.0)
    else:
        raise ParameterError(f"unknown interpretation {interpretation!r}")
    inner = math.sqrt((1 - 2 * q) ** 2 + 4 * q * (1 - q) * corr2)
    return (1.0 - binary_entropy(0.5 + math.sqrt(corr2) / 2)
            + binary_entropy(min(1.0, 0.5 + inner / 2)))


@dataclass(frozen=True)
class AdvancedDiagnostics:
    delta_ar: float
    E_tilde: float
    point: Optional[SolverPoint]
    entropy_A: float
    entropy_literal: Optional[float]
    bell_violation: bool


def r_infinity_advanced(S: float, noise: NoiseParams, proto: ProtocolParams,
                        resolution: int = SOLVER_RESOLUTION) -> Tuple[float, AdvancedDiagnostics]:
    """Lower bound (p^2 + (1-p)^2) [g(E_tilde, q) - h(delta_ar)].

    ``E_tilde`` is Eve's correlation bound for ``S`` at weight ``proto.lam``.
    Without a Bell violation ``E_tilde`` is 0, which leaves a non-positive rate.
    The entropy term follows ``proto.interpretation``; the literal form is
    undefined for every correlator below 2 and raises :class:`DomainError`.
    """
    if proto.strategy != "advanced":
        raise ParameterError("r_infinity_advanced needs strategy='advanced'")
    _check_S(S)
    q = proto.q_value
    delta_ar = qber(noise, "advanced", q)
    point = None
    if S > 2.0:
        E_tilde, point = eve_correlation_bound(S, proto.lam, proto.sense, resolution)
    else:
        E_tilde = 0.0
    entropy_A = noise_entropy(E_tilde, q, "A")
    try:
        entropy_literal = noise_entropy(E_tilde, q, "literal")
    except DomainError:
        entropy_literal = None
    diag = AdvancedDiagnostics(delta_ar, E_tilde, point, entropy_A, entropy_literal, S > 2.0)
    if proto.interpretation == "literal":
        if entropy_literal is None:
            raise DomainError(
                f"literal interpretation: E_tilde = {E_tilde:.6g} lies outside [2, 2*sqrt(2)]")
        entropy = entropy_literal
    else:
        entropy = entropy_A
    weight = proto.p ** 2 + (1 - proto.p) ** 2
    return weight * (entropy - binary_entropy(delta_ar)), diag


def secret_key_rate(noise: NoiseParams, proto: ProtocolParams,
                    resolution: int = SOLVER_RESOLUTION) -> float:
    """R_inf for the strategy selected in ``proto`` (raw, may be negative)."""
    S = chsh_from_noise(noise)
    if proto.strategy == "advanced":
        return r_infinity_advanced(S, noise, proto, resolution)[0]
    return r_infinity_base(S, qber(noise, proto.strategy), proto.p)


def practical_efficiency(E_m: float, R_inf: float, proto: ProtocolParams = ProtocolParams(),
                         R_rep: float = 1e7) -> float:
    """E_c = (1 - P_c) P_GHZ R_rep E_m R_inf in bits per second."""
    if E_m < 0 or R_inf < 0 or R_rep < 0:
        raise ParameterError("practical_efficiency needs non-negative inputs")
    return (1.0 - proto.P_c) * proto.P_GHZ * R_rep * E_m * R_inf


@dataclass
class KeyRateReport:
    S: float
    S_ABC: float
    delta: float
    E_tilde: Optional[float]
    r_111: Optional[float]
    r_212: Optional[float]
    R_inf: float
    E_m: float
    E_c: float
    strategy: str
    interpretation: str
    sense: str
    flags: list = field(default_factory=list)
    channel: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def key_rate_report(channel: ChannelParams, noise: NoiseParams,
                    proto: ProtocolParams = ProtocolParams(),
                    resolution: int = SOLVER_RESOLUTION) -> KeyRateReport:
    """Evaluate the whole chain (S, delta, R_inf, E_m, E_c) at one parameter point."""
    S = chsh_from_noise(noise)
    flags = []
    E_tilde = r_111 = None
    if proto.strategy == "advanced":
        R_inf, diag = r_infinity_advanced(S, noise, proto, resolution)
        delta, E_tilde = diag.delta_ar, diag.E_tilde
    else:
        delta = qber(noise, proto.strategy)
        R_inf = r_infinity_base(S, delta, proto.p)
        r_111 = R_inf / proto.p ** 2 if proto.p > 0 else None
    if S <= 2.0:
        flags.append("no_bell_violation")
    if R_inf <= 0.0:
        ideal = secret_key_rate(noise.replace(F=1.0), proto, resolution)
        flags.append("below_fidelity_threshold" if ideal > 0 else
                     "below_local_efficiency_threshold")
    if R_inf < 0.0:
        flags.append("key_rate_clamped")
    if channel.eta_t_overridden:
        flags.append("eta_t_overridden")
    E_m = heralding.fully_loaded_efficiency(channel)
    E_c = practical_efficiency(E_m, max(R_inf, 0.0), proto, channel.R_rep)
    return KeyRateReport(
        S=S, S_ABC=2.0 * S, delta=delta, E_tilde=E_tilde, r_111=r_111, r_212=None,
        R_inf=R_inf, E_m=E_m, E_c=E_c, strategy=proto.strategy,
        interpretation=proto.interpretation, sense=proto.sense, flags=flags,
        channel={**asdict(channel), "eta_t": channel.eta_t},
        noise=asdict(noise), protocol={**asdict(proto), "lam": proto.lam},
    )


def _bisect(f, lo, hi, xtol, what):
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise ThresholdNotFoundError(
            f"no sign change of the key rate for {what} in [{lo}, {hi}] "
            f"(values {f_lo:.3g}, {f_hi:.3g})")
    return brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


def threshold_fidelity(eta_l: float, proto: ProtocolParams = ProtocolParams(),
                       resolution: int = SOLVER_RESOLUTION) -> float:
    """Fidelity at which R_inf crosses zero for fixed local efficiency."""
    check_probability("eta_l", eta_l)
    if eta_l == 0:
        raise ParameterError("eta_l must be > 0")
    return _bisect(lambda F: secret_key_rate(NoiseParams(F, eta_l), proto, resolution),
                   0.5, 1.0, 1e-7, "fidelity")


def threshold_local_efficiency(F: float, proto: ProtocolParams = ProtocolParams(),
                               resolution: int = SOLVER_RESOLUTION) -> float:
    """Local efficiency at which R_inf crosses zero for fixed fidelity."""
    check_probability("F", F)
    if F == 0:
        raise ParameterError("F must be > 0")
    return _bisect(lambda eta: secret_key_rate(NoiseParams(F, eta), proto, resolution),
                   0.5, 1.0, 1e-7, "local efficiency")


def secure_distance(channel: ChannelParams, noise: NoiseParams,
                    proto: ProtocolParams = ProtocolParams(), target_Ec: float = 1.0,
                    resolution: int = SOLVER_RESOLUTION) -> float:
    """Distance in km at which E_c falls to ``target_Ec`` bits per second.

    The key rate does not depend on distance, so it is evaluated once and
    the search runs over E_m alone.
    """
    if not target_Ec > 0:
        raise ParameterError("target_Ec must be > 0")
    R_inf = max(secret_key_rate(noise, proto, resolution), 0.0)
    channel = channel.replace(eta_t_override=None)

    def log_ratio(d):
        E_m = heralding.fully_loaded_efficiency(channel.replace(d=d))
        E_c = practical_efficiency(E_m, R_inf, proto, channel.R_rep)
        return math.log(E_c / target_Ec) if E_c > 0 else -math.inf

    if log_ratio(0.0) < 0:
        raise ThresholdNotFoundError(f"E_c at d = 0 is already below {target_Ec} bit/s")
    hi = 50.0
    while log_ratio(hi) > 0:
        hi *= 2
        if hi > 1e5:
            raise ThresholdNotFoundError("E_c never falls below target within 1e5 km")
    return _bisect(log_ratio, 0.0, hi, 1e-4, "distance")


def baseline_efficiency(model: str, d: float, noise: NoiseParams,
                        proto: ProtocolParams = ProtocolParams(), R_rep: float = 1e7,
                        alpha: float = 0.2) -> float:
    """Approximate E_c of two reference protocols without quantum memories.

    ``spdc``
        a cascaded-SPDC GHZ source emitting a GHZ state with probability 1e-8
        per pulse; the channel loss is not heralded away, so it multiplies the
        local efficiency seen by the Bell test. The rate vanishes beyond about
        0.047 km at F = 0.98, eta_l = 0.9702.
    ``sps_no_qma``
        single-photon sources with heralding but no storage, which requires
        ``T = 1e-3``; E_m is the same-pulse triple success probability P_s^3.

    Both use the fixed-basis key rate. These are approximate baselines.
    """
    eta_t = 10.0 ** (-alpha * d / 10.0)
    base = proto.replace(strategy="base", q=None)
    if model == "spdc":
        R = secret_key_rate(noise.replace(eta_l=noise.eta_l * eta_t), base)
        return (1.0 - proto.P_c) * R_rep * SPDC_GHZ_RATE * max(R, 0.0)
    if model == "sps_no_qma":
        T = NO_QMA_TRANSMITTANCE
        P_s = 2.0 * eta_t * T * (1.0 - T)
        R = secret_key_rate(noise, base)
        return practical_efficiency(P_s ** 3, max(R, 0.0), proto, R_rep)
    raise ParameterError(f"unknown baseline model {model!r}")

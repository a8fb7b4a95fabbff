import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

import frozen
from diqss import keyrate as kr
from diqss.errors import DomainError, ParameterError, ThresholdNotFoundError
from diqss.params import ChannelParams, NoiseParams, ProtocolParams
from diqss.solver import S_MAX

prob = st.floats(0.0, 1.0, allow_nan=False)
ADV = ProtocolParams(strategy="advanced")


# --- entropy -------------------------------------------------------------------

def test_binary_entropy_examples():
    assert kr.binary_entropy(0.5) == 1.0
    assert kr.binary_entropy(0.0) == 0.0 and kr.binary_entropy(1.0) == 0.0
    # the quoted 0.45565 is 1.4e-4 off an mpmath evaluation
    assert kr.binary_entropy(0.09579) == pytest.approx(frozen.H_009579, abs=1e-14)
    assert np.allclose(kr.binary_entropy(np.array([0.0, 0.5])), [0.0, 1.0])


@pytest.mark.parametrize("x", [-0.1, 1.1, math.nan])
def test_binary_entropy_rejects_out_of_range(x):
    with pytest.raises(ParameterError):
        kr.binary_entropy(x)


@given(prob)
def test_binary_entropy_symmetric(x):
    # both arguments must describe the same pair; tiny x loses 1 - x to rounding
    assume(1.0 - (1.0 - x) == x)
    assert kr.binary_entropy(x) == pytest.approx(kr.binary_entropy(1 - x), abs=1e-15)


def test_noise_entropy_examples():
    assert kr.noise_entropy(1.0, 0.37) == pytest.approx(1.0, abs=1e-12)
    assert kr.noise_entropy(0.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DomainError):
        kr.noise_entropy(0.9, 0.1, "literal")
    with pytest.raises(DomainError):
        kr.noise_entropy(1.5, 0.1, "A")
    with pytest.raises(ParameterError):
        kr.noise_entropy(0.5, 0.6)
    with pytest.raises(ParameterError):
        kr.noise_entropy(0.5, 0.1, "B")
    # on its own domain the literal form agrees with A at the matching correlator
    S = 2.6
    assert kr.noise_entropy(S, 0.2, "literal") == pytest.approx(
        kr.noise_entropy(math.sqrt(S * S / 4 - 1), 0.2, "A"), abs=1e-14)


@given(prob, st.floats(0.0, 0.5))
def test_noise_entropy_identities(x, q):
    assert kr.noise_entropy(x, 0.0) == pytest.approx(kr.g_base(x), abs=1e-12)
    assert kr.noise_entropy(1.0, q) == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.0, 0.5))
def test_noise_entropy_non_decreasing_in_x(q):
    values = [kr.noise_entropy(x, q) for x in np.linspace(0, 1, 101)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


# --- base rates -------------------------------------------------------------------

def test_r_infinity_base_examples():
    assert kr.r_infinity_base(S_MAX, 0.0, 0.5) == 0.25
    assert kr.r_infinity_base(2.0, 0.0, 0.5) == 0.0
    noise = NoiseParams(0.98, 0.9702)
    R = kr.r_infinity_base(kr.chsh_from_noise(noise), kr.qber(noise), 0.5)
    assert R == pytest.approx(frozen.R_BASE_098_09702, rel=1e-12)
    assert R == pytest.approx(0.00955, abs=5e-5)
    assert kr.r_infinity_base(1.5, 0.1, 0.5) == pytest.approx(-0.25 * kr.binary_entropy(0.1))
    with pytest.raises(DomainError):
        kr.r_infinity_base(2.9, 0.0)


@given(prob)
def test_r_infinity_base_ideal_is_p_squared(p):
    assert kr.r_infinity_base(S_MAX, 0.0, p) == pytest.approx(p * p, abs=1e-15)


# --- advanced rates -----------------------------------------------------------------

def test_r_infinity_advanced_examples():
    ideal = NoiseParams(1.0, 1.0)
    R, diag = kr.r_infinity_advanced(S_MAX, ideal, ADV.replace(q=0.0))
    assert R == pytest.approx(0.5, abs=1e-6)
    R, diag = kr.r_infinity_advanced(S_MAX, ideal, ADV.replace(q=0.3))
    assert R == pytest.approx(0.5 * (1 - kr.binary_entropy(0.3)), abs=1e-6)
    assert diag.delta_ar == pytest.approx(0.3)
    assert diag.entropy_literal is not None or diag.E_tilde < 2


def test_r_infinity_advanced_fixture():
    # pinned output of the calibrated chain (interpretation A, min sense)
    noise = NoiseParams(0.98, 0.9702)
    R, diag = kr.r_infinity_advanced(kr.chsh_from_noise(noise), noise, ADV.replace(q=0.2))
    assert R == pytest.approx(0.05407, abs=1e-5)
    assert 0 < diag.E_tilde < 1


def test_r_infinity_advanced_literal_is_domain_error():
    noise = NoiseParams(0.98, 0.9702)
    proto = ADV.replace(q=0.1, interpretation="literal")
    with pytest.raises(DomainError):
        kr.r_infinity_advanced(kr.chsh_from_noise(noise), noise, proto)


def test_r_infinity_advanced_needs_advanced_strategy():
    with pytest.raises(ParameterError):
        kr.r_infinity_advanced(2.5, NoiseParams(), ProtocolParams())


def test_advanced_without_violation():
    noise = NoiseParams(0.6, 0.9)
    R, diag = kr.r_infinity_advanced(kr.chsh_from_noise(noise), noise, ADV.replace(q=0.1))
    assert diag.E_tilde == 0.0 and not diag.bell_violation
    assert R <= 0


@given(prob, prob, st.floats(0.0, 0.5))
def test_advanced_qber_chain(F, eta, q):
    noise = NoiseParams(F, eta)
    post = kr.qber(noise, "postselect")
    assert kr.qber(noise, "advanced", 0.0) == post
    assert kr.qber(noise, "advanced", 0.5) == pytest.approx(0.5, abs=1e-15)
    assert kr.qber(noise, "advanced", q) == pytest.approx(q + (1 - 2 * q) * post, abs=1e-15)


# --- efficiency -----------------------------------------------------------------------

def test_practical_efficiency_examples():
    assert kr.practical_efficiency(8.4e-5, 0.00955) == pytest.approx(1.0, rel=0.01)
    assert kr.practical_efficiency(8.4e-5, 0.0) == 0.0
    assert kr.practical_efficiency(0.0, 0.3) == 0.0
    with pytest.raises(ParameterError):
        kr.practical_efficiency(-1e-3, 0.1)


def test_report_ideal_point():
    report = kr.key_rate_report(ChannelParams(d=0, eta_M=1, N=0), NoiseParams(1, 1))
    assert report.E_m == pytest.approx(0.125)
    assert report.R_inf == pytest.approx(0.25)
    assert report.E_c == pytest.approx(1e7 * 0.125 * 0.25 / 8)
    assert report.flags == []


def test_report_below_fidelity_threshold():
    report = kr.key_rate_report(ChannelParams(), NoiseParams(F=0.5))
    assert report.E_c == 0
    assert "below_fidelity_threshold" in report.flags
    assert "key_rate_clamped" in report.flags
    assert report.R_inf < 0


def test_report_flags_for_efficiency_and_override():
    report = kr.key_rate_report(ChannelParams(eta_t_override=0.2), NoiseParams(1.0, 0.9))
    assert "below_local_efficiency_threshold" in report.flags
    assert "eta_t_overridden" in report.flags


def test_report_advanced_fields():
    report = kr.key_rate_report(ChannelParams(d=50), NoiseParams(0.98, 0.9702), ADV.replace(q=0.1))
    assert report.E_tilde is not None and report.r_111 is None
    assert report.strategy == "advanced" and report.sense == "min"
    assert report.as_dict()["protocol"]["lam"] == 0.5


@given(st.floats(0, 150), st.floats(0, 50), st.floats(0.9, 1.0), st.floats(0.96, 1.0),
       st.floats(0.5, 1.0), st.integers(0, 6))
@settings(max_examples=40)
def test_ec_monotone(d, dd, F, eta, eta_M, N):
    def Ec(**kw):
        params = dict(d=d, F=F, eta_l=eta, eta_M=eta_M)
        params.update(kw)
        return kr.key_rate_report(ChannelParams(d=params["d"], eta_M=params["eta_M"], N=N),
                                  NoiseParams(params["F"], params["eta_l"])).E_c

    here = Ec()
    tol = 1e-12 * max(here, 1e-300)
    assert Ec(d=d + dd) <= here + tol
    assert Ec(F=min(1.0, F + 0.01)) >= here - tol
    assert Ec(eta_l=min(1.0, eta + 0.005)) >= here - tol
    assert Ec(eta_M=min(1.0, eta_M + 0.1)) >= here - tol


# --- thresholds -------------------------------------------------------------------------

def test_local_efficiency_thresholds():
    base = kr.threshold_local_efficiency(1.0)
    post = kr.threshold_local_efficiency(1.0, ProtocolParams(strategy="postselect"))
    assert base == pytest.approx(frozen.ETA_L_STAR_BASE, abs=1e-7)
    assert post == pytest.approx(frozen.ETA_L_STAR_POSTSELECT, abs=1e-7)


def test_fidelity_threshold_strategies_agree_at_unit_efficiency():
    base = kr.threshold_fidelity(1.0)
    post = kr.threshold_fidelity(1.0, ProtocolParams(strategy="postselect"))
    assert base == pytest.approx(frozen.F_STAR_BASE, abs=1e-7)
    assert post == pytest.approx(base, abs=1e-6)


def test_fidelity_threshold_fixtures():
    assert kr.threshold_fidelity(0.99) == pytest.approx(frozen.F_STAR_BASE_ETA099, abs=1e-7)
    # eta_l = 0.9 lies below the base local-efficiency threshold: no key at any F
    with pytest.raises(ThresholdNotFoundError):
        kr.threshold_fidelity(0.9)


@pytest.mark.parametrize("solve, fixed, proto", [
    (kr.threshold_fidelity, 1.0, ProtocolParams()),
    (kr.threshold_local_efficiency, 1.0, ProtocolParams(strategy="postselect")),
    (kr.threshold_local_efficiency, 1.0, ProtocolParams(strategy="advanced", q=0.3)),
])
def test_threshold_residual_and_sign(solve, fixed, proto):
    root = solve(fixed, proto)
    if solve is kr.threshold_fidelity:
        rate = lambda x: kr.secret_key_rate(NoiseParams(x, fixed), proto)
    else:
        rate = lambda x: kr.secret_key_rate(NoiseParams(fixed, x), proto)
    assert abs(rate(root)) <= 1e-5
    assert rate(root - 1e-3) < 0 < rate(root + 1e-3)


def test_threshold_without_sign_change():
    with pytest.raises(ThresholdNotFoundError):
        kr.threshold_local_efficiency(0.5)
    with pytest.raises(ParameterError):
        kr.threshold_fidelity(0.0)


# --- distance and baselines ---------------------------------------------------------------

def test_secure_distance_anchors():
    channel = ChannelParams(eta_M=0.8, N=3)
    noise = NoiseParams(0.98, 0.9702)
    assert kr.secure_distance(channel, noise) == pytest.approx(60.77, abs=0.5)
    assert kr.secure_distance(channel.replace(N=0), noise) == pytest.approx(52.87, abs=0.5)


def test_secure_distance_errors():
    with pytest.raises(ParameterError):
        kr.secure_distance(ChannelParams(), NoiseParams(), target_Ec=0)
    with pytest.raises(ThresholdNotFoundError):
        kr.secure_distance(ChannelParams(), NoiseParams(F=0.5))


def test_spdc_baseline_range():
    noise = NoiseParams(0.98, 0.9702)
    assert kr.baseline_efficiency("spdc", 0.04, noise) > 0
    assert kr.baseline_efficiency("spdc", 0.05, noise) == 0
    assert kr.baseline_efficiency("spdc", 10, noise) == 0


def test_no_qma_baseline_far_below_qma():
    noise = NoiseParams(0.98, 0.9702)
    qma = kr.key_rate_report(ChannelParams(eta_M=0.8, N=3), noise).E_c
    assert qma / kr.baseline_efficiency("sps_no_qma", 0.0, noise) > 1e3
    with pytest.raises(ParameterError):
        kr.baseline_efficiency("laser", 0.0, noise)

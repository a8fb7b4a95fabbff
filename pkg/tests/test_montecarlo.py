import math

import numpy as np
import pytest
from scipy.stats import chisquare

from diqss import heralding, montecarlo as mc
from diqss.errors import ParameterError
from diqss.params import ChannelParams, NoiseParams, ProtocolParams

ANCHOR_NOISE = NoiseParams(0.98, 0.9702)


def within(est, ref, k=3.0):
    return abs(est.value - ref) <= k * est.se or est.value == ref


# --- streams --------------------------------------------------------------------

def test_stream_is_reproducible():
    a = mc.rng_stream(42, 0).random(1000)
    b = mc.rng_stream(42, 0).random(1000)
    assert np.array_equal(a, b)


def test_streams_are_uncorrelated():
    a = mc.rng_stream(42, 0).random(100_000)
    b = mc.rng_stream(42, 1).random(100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01


def test_stream_rejects_negative_ids():
    with pytest.raises(ParameterError):
        mc.rng_stream(-1, 0)


# --- config -----------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    {"trials": 0}, {"trials": 1.5}, {"rounds": 0}, {"seed": -1}, {"race": "relay"},
    {"P_s_override": 1.5},
])
def test_sim_config_validation(kwargs):
    with pytest.raises(ParameterError):
        mc.SimConfig(**kwargs)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("DIQSS_THREADS", "3")
    assert mc.thread_count() == 3
    monkeypatch.setenv("DIQSS_THREADS", "many")
    with pytest.raises(ParameterError):
        mc.thread_count()


# --- loading race -------------------------------------------------------------------

def test_certain_success_loads_every_pulse():
    report = mc.simulate_loading(mc.SimConfig(trials=1000, P_s_override=1.0))
    assert report.empirical_Em == (1.0, 0.0)


def test_loading_matches_analytic_lossless_memory():
    config = mc.SimConfig(ChannelParams(d=50, eta_M=1.0, N=3), trials=1_000_000, seed=5)
    report = mc.simulate_loading(config)
    assert within(report.empirical_Em, heralding.fully_loaded_efficiency(config.channel))


@pytest.mark.parametrize("N", [1, 4])
def test_loading_zero_memory_efficiency(N):
    config = mc.SimConfig(ChannelParams(d=0, eta_M=0.0, N=N), trials=200_000, seed=7)
    report = mc.simulate_loading(config)
    assert within(report.empirical_Em, heralding.fully_loaded_efficiency(config.channel))


@pytest.mark.parametrize("em, N, d", [(0.8, 3, 0), (0.6, 6, 5), (0.95, 10, 20)])
def test_loading_matches_analytic(em, N, d):
    config = mc.SimConfig(ChannelParams(d=d, eta_M=em, N=N), trials=200_000, seed=11)
    report = mc.simulate_loading(config)
    assert within(report.empirical_Em, heralding.fully_loaded_efficiency(config.channel))


def test_symmetric_race_loads_more_than_analytic():
    config = mc.SimConfig(ChannelParams(d=0, N=3), trials=100_000, seed=3, race="symmetric")
    report = mc.simulate_loading(config)
    analytic = heralding.fully_loaded_efficiency(config.channel)
    assert report.empirical_Em.z(analytic) > 20


# --- protocol rounds ------------------------------------------------------------------

def test_ideal_rounds():
    report = mc.simulate_rounds(mc.SimConfig(trials=200_000, seed=2))
    assert report.empirical_qber == (0.0, 0.0)
    assert within(report.empirical_S, 2 * math.sqrt(2))
    assert within(report.empirical_S_ABC, 4 * math.sqrt(2))


@pytest.mark.parametrize("proto", [
    ProtocolParams(),
    ProtocolParams(strategy="postselect"),
    ProtocolParams(strategy="advanced", q=0.2),
    ProtocolParams(strategy="advanced", q=0.1, p=0.7, P_c=0.3),
])
def test_rounds_match_analytic(proto):
    config = mc.SimConfig(noise=ANCHOR_NOISE, proto=proto, trials=400_000, seed=13)
    report = mc.simulate_rounds(config)
    reference = mc.analytic_reference(config)
    for name in ("empirical_qber", "empirical_S", "empirical_S_ABC", "gsm_success_rate",
                 "sift_fraction_key", "sift_fraction_test", "sift_fraction_discard"):
        assert within(getattr(report, name), reference[name]), name


def test_sift_fractions_partition_classified_rounds():
    report = mc.simulate_rounds(mc.SimConfig(noise=ANCHOR_NOISE, trials=50_000, seed=4))
    total = (report.sift_fraction_key.value + report.sift_fraction_test.value
             + report.sift_fraction_discard.value)
    assert abs(total - 1) <= 1e-12
    for value in report.as_dict().values():
        if isinstance(value, dict) and "se" in value:
            assert value["se"] >= 0


def test_default_key_fraction():
    config = mc.SimConfig(trials=100_000, seed=8)
    assert mc.analytic_reference(config)["sift_fraction_key"] == 0.125
    assert within(mc.simulate_rounds(config).sift_fraction_key, 0.125)


def test_swap_histogram_uniform():
    report = mc.simulate_rounds(mc.SimConfig(trials=1_000_000, seed=9))
    assert sum(report.swap_histogram) == 1_000_000
    assert chisquare(report.swap_histogram).pvalue > 0.001
    assert within(report.gsm_success_rate, 0.25)


def test_svetlichny_is_twice_chsh():
    report = mc.simulate_rounds(mc.SimConfig(noise=ANCHOR_NOISE, trials=400_000, seed=10))
    diff = report.empirical_S_ABC.value - 2 * report.empirical_S.value
    se = math.hypot(report.empirical_S_ABC.se, 2 * report.empirical_S.se)
    assert abs(diff) <= 3 * se


# --- determinism -------------------------------------------------------------------------

def test_report_identical_across_thread_counts(monkeypatch):
    config = mc.SimConfig(ChannelParams(d=20, eta_M=0.9, N=2), ANCHOR_NOISE,
                          trials=300_000, rounds=600_000, seed=77)
    monkeypatch.setenv("DIQSS_THREADS", "1")
    serial = mc.simulate(config).as_dict()
    monkeypatch.setenv("DIQSS_THREADS", "4")
    parallel = mc.simulate(config).as_dict()
    assert serial == parallel
    assert mc.simulate(config).as_dict() == parallel


def test_different_seeds_differ():
    a = mc.simulate_rounds(mc.SimConfig(noise=ANCHOR_NOISE, trials=10_000, seed=1))
    b = mc.simulate_rounds(mc.SimConfig(noise=ANCHOR_NOISE, trials=10_000, seed=2))
    assert a.counts != b.counts

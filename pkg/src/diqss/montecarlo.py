"""Monte Carlo oracle for the loading race and the sifted protocol rounds.

Loading race
------------
Every pulse each user achieves a separation event with probability ``P_s``;
a memory overwrites its stored photon with the newest one. The load state is
examined at the first separation event of a designated user (Charlie). The
attempt succeeds if that happens at pulse ``n+1 <= N+1``, both other users hold
a photon by then, and each of those survives its wait of ``gap`` intervals
with probability ``eta_M**(2*gap)``. Survival is drawn once, at the check.

The analytic loading probability counts exactly this event: Charlie's factor
``P_s (1-P_s)^n`` is a first success at ``n+1``, and the other users' factors
``P_s (1-P_s)^(n-l) eta_M^(2(n-l))`` are a latest success at ``l+1`` followed by
``n-l`` empty pulses. Summing over ``l`` covers every loaded history, so the
two agree term by term. ``race="symmetric"`` instead checks at the first
pulse where all three users hold a photon, which is the more natural
physical reading and loads more often.

Pulse accounting follows the analytic consumption: an attempt loaded at
``n < N`` uses ``n+1`` pulses, every other attempt uses ``N+1``.

Protocol rounds
---------------
Each round starts from fully loaded memories: a GHZ-basis swap outcome is
drawn with the probabilities derived in :mod:`diqss.quantum`, the analyzer
keeps only index-1 outcomes, the sign is corrected, white noise replaces the
state by a uniformly random GHZ state with probability ``1 - F``, each photon
is lost with probability ``1 - eta_l``, and bases and outcomes are sampled
from the exact joint distributions.

Determinism
-----------
Trials are cut into fixed-size blocks, each driven by its own Philox stream
keyed by ``(seed, block index)``. Per-block integer tallies are merged in block
order, so a report is identical for any thread count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, NamedTuple, Optional

import numpy as np

from . import heralding, quantum
from .errors import ParameterError
from .params import ChannelParams, NoiseParams, ProtocolParams

LOADING_BLOCK = 1 << 16
ROUNDS_BLOCK = 1 << 18
ROUNDS_STREAM_OFFSET = 1 << 40
_MASK64 = (1 << 64) - 1

A_BASES = ("A1", "A2")
B_BASES = ("B1", "B2", "B3")
C_BASES = ("C1", "C2")


def rng_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``(seed, stream_id)``."""
    if seed < 0 or stream_id < 0:
        raise ParameterError("seed and stream_id must be non-negative")
    key = (int(seed) & _MASK64) | ((int(stream_id) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def thread_count() -> int:
    env = os.environ.get("DIQSS_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ParameterError(f"DIQSS_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return max(1, min(4, os.cpu_count() or 1))


@dataclass(frozen=True)
class SimConfig:
    channel: ChannelParams = ChannelParams()
    noise: NoiseParams = NoiseParams()
    proto: ProtocolParams = ProtocolParams()
    trials: int = 100_000
    seed: int = 1
    rounds: Optional[int] = None
    race: str = "designated"
    P_s_override: Optional[float] = None

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ParameterError(f"trials must be a positive integer, got {self.trials!r}")
        if self.rounds is not None and (int(self.rounds) != self.rounds or self.rounds < 1):
            raise ParameterError(f"rounds must be a positive integer, got {self.rounds!r}")
        if not 0 <= self.seed <= _MASK64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        if self.race not in ("designated", "symmetric"):
            raise ParameterError(f"race must be 'designated' or 'symmetric', got {self.race!r}")
        if self.P_s_override is not None and not 0.0 <= self.P_s_override <= 1.0:
            raise ParameterError("P_s_override must lie in [0, 1]")

    @property
    def P_s(self) -> float:
        if self.P_s_override is not None:
            return float(self.P_s_override)
        return heralding.p_success(self.channel)

    @property
    def n_rounds(self) -> int:
        return self.trials if self.rounds is None else int(self.rounds)


class Estimate(NamedTuple):
    value: float
    se: float

    def z(self, reference: float) -> float:
        if self.se == 0:
            return 0.0 if self.value == reference else math.inf
        return (self.value - reference) / self.se


@dataclass
class SimReport:
    seed: int
    trials_run: int = 0
    rounds_run: int = 0
    empirical_Em: Optional[Estimate] = None
    empirical_qber: Optional[Estimate] = None
    empirical_S: Optional[Estimate] = None
    empirical_S_ABC: Optional[Estimate] = None
    gsm_success_rate: Optional[Estimate] = None
    sift_fraction_key: Optional[Estimate] = None
    sift_fraction_test: Optional[Estimate] = None
    sift_fraction_discard: Optional[Estimate] = None
    swap_histogram: Optional[list] = None
    counts: Dict[str, int] = field(default_factory=dict)

    def as_dict(self):
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple) and len(v) == 2:
                out[k] = {"value": v[0], "se": v[1]}
        return out


def _run_blocks(fn, total, block, stream_offset, seed):
    sizes = [min(block, total - start) for start in range(0, total, block)]
    jobs = [(seed, stream_offset + i, n) for i, n in enumerate(sizes)]
    workers = thread_count()
    if workers == 1 or len(jobs) == 1:
        parts = [fn(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    merged = {}
    for part in parts:
        for k, v in part.items():
            merged[k] = merged.get(k, 0) + v
    return merged


def _binomial(k: int, n: int) -> Estimate:
    if n == 0:
        return Estimate(math.nan, math.nan)
    p = k / n
    return Estimate(p, math.sqrt(p * (1 - p) / n))


# ---------------------------------------------------------------------------
# loading race

def _loading_block(config: SimConfig, P_s: float, seed: int, stream: int, n: int) -> dict:
    rng = rng_stream(seed, stream)
    N = config.channel.N
    eta2 = config.channel.eta_M ** 2
    pulses = np.arange(N + 1)
    hit = rng.random((n, N + 1, 3)) < P_s
    survival_draw = rng.random((n, 2))

    if config.race == "designated":
        trigger_ok = hit[:, :, 2].any(axis=1)
        trigger = np.argmax(hit[:, :, 2], axis=1)
    else:
        first = np.where(hit.any(axis=1), np.argmax(hit, axis=1), N + 1)
        trigger = first.max(axis=1)
        trigger_ok = trigger <= N
        trigger = np.minimum(trigger, N)

    success = trigger_ok.copy()
    others = (0, 1) if config.race == "designated" else (0, 1, 2)
    for j, u in enumerate(others):
        seen = hit[:, :, u] & (pulses[None, :] <= trigger[:, None])
        loaded = seen.any(axis=1)
        latest = N - np.argmax(seen[:, ::-1], axis=1)
        gap = np.where(loaded, trigger - latest, 0)
        if j < 2:
            draw = survival_draw[:, j]
        else:
            draw = rng.random(n)
        success &= loaded & (draw < eta2 ** gap)

    used = np.where(success & (trigger < N), trigger + 1, N + 1).astype(np.int64)
    x = success.astype(np.int64)
    return {
        "trials": n,
        "successes": int(x.sum()),
        "pulses": int(used.sum()),
        "pulses_sq": int((used * used).sum()),
        "pulses_x_success": int((used * x).sum()),
    }


def simulate_loading(config: SimConfig) -> SimReport:
    """Estimate E_m as loaded attempts per consumed pulse (ratio estimator)."""
    P_s = config.P_s
    tally = _run_blocks(lambda s, i, n: _loading_block(config, P_s, s, i, n),
                        config.trials, LOADING_BLOCK, 0, config.seed)
    n = tally["trials"]
    sx, sy = tally["successes"], tally["pulses"]
    E = sx / sy
    # delta-method variance of sum(x)/sum(y); x is 0/1 so sum(x^2) = sum(x)
    resid = sx - 2 * E * tally["pulses_x_success"] + E * E * tally["pulses_sq"]
    mean_y = sy / n
    se = math.sqrt(max(resid, 0.0) / (n * (n - 1))) / mean_y if n > 1 else math.nan
    return SimReport(seed=config.seed, trials_run=n, empirical_Em=Estimate(E, se),
                     counts=dict(tally))


# ---------------------------------------------------------------------------
# protocol rounds

def _round_tables():
    """Swap-outcome probabilities, corrected states and outcome tables."""
    outcomes = quantum.entanglement_swap(quantum.swap_input_state())
    labels = list(quantum.GHZ_LABELS)
    probs = np.zeros(8)
    corrected = np.full(8, -1)
    basis = [quantum.ghz_state(lab) for lab in labels]
    for out in outcomes:
        k = labels.index(out.label)
        probs[k] = out.probability
        if quantum.gsm_classify(out.label) == "success":
            state = out.state
            if out.label.sign == "-":
                state = quantum.phase_flip(state, 0)
            corrected[k] = int(np.argmax([state.fidelity(b) for b in basis]))
    cum_swap = np.cumsum(probs / probs.sum())
    table = np.empty((8, 2, 3, 2, 8))
    for s, st in enumerate(basis):
        for i, a in enumerate(A_BASES):
            for j, b in enumerate(B_BASES):
                for k, c in enumerate(C_BASES):
                    table[s, i, j, k] = quantum.outcome_distribution(st, a, b, c)
    cum_table = np.cumsum(table / table.sum(axis=-1, keepdims=True), axis=-1)
    return probs, cum_swap, corrected, cum_table


def _rounds_block(config: SimConfig, tables, seed: int, stream: int, n: int) -> dict:
    _, cum_swap, corrected, cum_table = tables
    rng = rng_stream(seed, stream)
    noise, proto = config.noise, config.proto
    out = {"rounds": n}

    label = np.minimum(np.searchsorted(cum_swap, rng.random(n), side="right"), 7)
    hist = np.bincount(label, minlength=8)
    for k in range(8):
        out[f"swap_{k}"] = int(hist[k])
    state = corrected[label]
    ok = state >= 0
    state = state[ok]
    m = state.size
    out["gsm_success"] = m

    noisy = rng.random(m) < 1.0 - noise.F
    state = np.where(noisy, rng.integers(0, 8, m), state)
    a_basis = (rng.random(m) >= proto.p).astype(np.int64)
    c_basis = (rng.random(m) >= proto.p).astype(np.int64)
    ub = rng.random(m)
    b_basis = np.where(ub < 1 - proto.P_c, 0, np.where(ub < 1 - proto.P_c / 2, 1, 2))
    cum = cum_table[state, a_basis, b_basis, c_basis]
    pattern = np.minimum((rng.random(m)[:, None] >= cum).sum(axis=1), 7)
    outcome = 1 - 2 * np.stack([(pattern >> 2) & 1, (pattern >> 1) & 1, pattern & 1], axis=1)
    detected = rng.random((m, 3)) < noise.eta_l
    coin = 1 - 2 * (rng.random((m, 3)) < 0.5)
    flip = rng.random(m) < proto.q_value

    key = (a_basis == 0) & (b_basis == 0) & (c_basis == 0)
    if proto.strategy == "advanced":
        key |= (a_basis == 1) & (b_basis == 0) & (c_basis == 1)
    test = b_basis > 0
    out["key"] = int(key.sum())
    out["test"] = int(test.sum())
    out["discard"] = int(m - key.sum() - test.sum())

    all_detected = detected.all(axis=1)
    if proto.strategy == "base":
        error = ~all_detected | (outcome[:, 0] != outcome[:, 1] * outcome[:, 2])
    else:
        filled = np.where(detected, outcome, coin)
        alice = np.where(flip, -filled[:, 0], filled[:, 0]) if proto.strategy == "advanced" \
            else filled[:, 0]
        error = alice != filled[:, 1] * filled[:, 2]
    out["key_errors"] = int((error & key).sum())

    value = np.where(all_detected, outcome.prod(axis=1), 0)
    for i in range(2):
        for j in (1, 2):
            for k in range(2):
                sel = test & (a_basis == i) & (b_basis == j) & (c_basis == k)
                tag = f"{A_BASES[i]}{B_BASES[j]}{C_BASES[k]}"
                out[f"n_{tag}"] = int(sel.sum())
                out[f"sum_{tag}"] = int(value[sel].sum())
                out[f"sq_{tag}"] = int(np.abs(value[sel]).sum())
    return out


def _polynomial(tally, terms) -> Estimate:
    total, var = 0.0, 0.0
    for coef, a, b, c in terms:
        tag = f"{a}{b}{c}"
        n = tally[f"n_{tag}"]
        if n == 0:
            return Estimate(math.nan, math.nan)
        mean = tally[f"sum_{tag}"] / n
        total += coef * mean
        var += (tally[f"sq_{tag}"] / n - mean * mean) / n
    return Estimate(total, math.sqrt(max(var, 0.0)))


def simulate_rounds(config: SimConfig) -> SimReport:
    """Simulate sifted protocol rounds that start from fully loaded memories."""
    tables = _round_tables()
    tally = _run_blocks(lambda s, i, n: _rounds_block(config, tables, s, i, n),
                        config.n_rounds, ROUNDS_BLOCK, ROUNDS_STREAM_OFFSET, config.seed)
    classified = tally["gsm_success"]
    return SimReport(
        seed=config.seed,
        rounds_run=tally["rounds"],
        empirical_qber=_binomial(tally["key_errors"], tally["key"]),
        empirical_S=_polynomial(tally, quantum.CHSH_TERMS),
        empirical_S_ABC=_polynomial(tally, quantum.SVETLICHNY_TERMS),
        gsm_success_rate=_binomial(classified, tally["rounds"]),
        sift_fraction_key=_binomial(tally["key"], classified),
        sift_fraction_test=_binomial(tally["test"], classified),
        sift_fraction_discard=_binomial(tally["discard"], classified),
        swap_histogram=[tally[f"swap_{k}"] for k in range(8)],
        counts=dict(tally),
    )


def simulate(config: SimConfig) -> SimReport:
    """Loading race and protocol rounds in one report."""
    loading = simulate_loading(config)
    rounds = simulate_rounds(config)
    rounds.trials_run = loading.trials_run
    rounds.empirical_Em = loading.empirical_Em
    rounds.counts = {**{f"loading_{k}": v for k, v in loading.counts.items()}, **rounds.counts}
    return rounds


def analytic_reference(config: SimConfig) -> Dict[str, float]:
    """Closed-form counterparts of every quantity in a :class:`SimReport`."""
    noise, proto = config.noise, config.proto
    probs = _round_tables()[0]
    gsm = float(sum(p for p, lab in zip(probs, quantum.GHZ_LABELS)
                    if quantum.gsm_classify(lab) == "success"))
    key_weight = proto.p ** 2
    if proto.strategy == "advanced":
        key_weight += (1 - proto.p) ** 2
    S = 2.0 * math.sqrt(2.0) * noise.F * noise.eta_l ** 3
    q = proto.q if proto.strategy == "advanced" else None
    return {
        "empirical_Em": heralding.loading_stats_for(
            config.P_s, config.channel.eta_M, config.channel.N).E_m,
        "empirical_qber": quantum.qber(noise, proto.strategy, q),
        "empirical_S": S,
        "empirical_S_ABC": 2.0 * S,
        "gsm_success_rate": gsm,
        "sift_fraction_key": (1 - proto.P_c) * key_weight,
        "sift_fraction_test": proto.P_c,
        "sift_fraction_discard": (1 - proto.P_c) * (1 - key_weight),
    }

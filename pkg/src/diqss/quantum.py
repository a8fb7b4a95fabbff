"""Finite-dimensional state algebra for up to six polarization qubits.

Conventions: ``|H> = 0`` and ``|V> = 1``; qubit 0 is the most significant bit
of the computational-basis index, so ``|HVV>`` is index 3 and ``|VHH>`` is 4.

The module derives, from explicit states and observables, the quantities the
analytic key-rate code uses as closed forms: the swap collapse onto GHZ
states, the loss-scaled CHSH and Svetlichny values of the white-noise GHZ
state, and the quantum bit error rates of the three sifting strategies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from .errors import ParameterError, StateError
from .params import NoiseParams, check_probability

ATOL = 1e-12
POSITIVITY_ATOL = 1e-10
MAX_QUBITS = 6


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector of ``num_qubits`` qubits."""

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise StateError(f"num_qubits must be in [1, {MAX_QUBITS}], got {self.num_qubits}")
        amps = np.asarray(self.amplitudes, dtype=complex).copy()
        if amps.shape != (2 ** self.num_qubits,):
            raise StateError(
                f"expected {2 ** self.num_qubits} amplitudes, got shape {amps.shape}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > ATOL:
            raise StateError(f"state is not normalized (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, amplitudes: Iterable[complex]) -> "PureState":
        amps = np.asarray(list(amplitudes), dtype=complex)
        n = int(round(math.log2(amps.size))) if amps.size else 0
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise StateError("cannot normalize the zero vector")
        return cls(n, amps / norm)

    def density(self) -> "DensityOperator":
        return DensityOperator(self.num_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))

    def fidelity(self, other: "PureState") -> float:
        """|<self|other>|^2."""
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, unit-trace, positive semidefinite matrix on ``num_qubits`` qubits."""

    num_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex).copy()
        dim = 2 ** self.num_qubits
        if m.shape != (dim, dim):
            raise StateError(f"expected a {dim}x{dim} matrix, got {m.shape}")
        if not np.allclose(m, m.conj().T, rtol=0, atol=ATOL):
            raise StateError("density operator is not Hermitian")
        if abs(np.trace(m).real - 1.0) > ATOL:
            raise StateError(f"density operator has trace {np.trace(m).real!r}")
        if np.linalg.eigvalsh(m).min() < -POSITIVITY_ATOL:
            raise StateError("density operator has a negative eigenvalue")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def expectation(self, operator: np.ndarray) -> float:
        return float(np.trace(self.matrix @ operator).real)


class GhzLabel(NamedTuple):
    """One of the eight three-qubit GHZ basis states, ``(|x> + s|not x>)/sqrt(2)``."""

    index: int
    sign: str

    def __str__(self):
        return f"GHZ{self.index}{self.sign}"


GHZ_LABELS: Tuple[GhzLabel, ...] = tuple(
    GhzLabel(i, s) for i in (1, 2, 3, 4) for s in ("+", "-"))

# basis index of the first ket of each GHZ pair: HHH, HHV, HVH, HVV
_GHZ_FIRST_KET = {1: 0b000, 2: 0b001, 3: 0b010, 4: 0b011}


def _check_label(label) -> GhzLabel:
    label = GhzLabel(*label)
    if label.index not in _GHZ_FIRST_KET or label.sign not in ("+", "-"):
        raise ParameterError(f"invalid GHZ label {label!r}")
    return label


def ghz_state(label) -> PureState:
    """Return the GHZ basis state for ``label`` (index 1..4, sign '+' or '-')."""
    label = _check_label(label)
    first = _GHZ_FIRST_KET[label.index]
    amps = np.zeros(8, dtype=complex)
    amps[first] = 1 / math.sqrt(2)
    amps[first ^ 0b111] = (1 if label.sign == "+" else -1) / math.sqrt(2)
    return PureState(3, amps)


# ---------------------------------------------------------------------------
# observables

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


@dataclass(frozen=True, eq=False)
class Observable:
    name: str
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ParameterError(f"observable {self.name} must be 2x2")
        if not np.allclose(m, m.conj().T, rtol=0, atol=ATOL):
            raise ParameterError(f"observable {self.name} is not Hermitian")
        if not np.allclose(m @ m, IDENTITY, rtol=0, atol=ATOL):
            raise ParameterError(f"observable {self.name} is not +-1 valued")

    def projector(self, outcome: int) -> np.ndarray:
        """Projector onto the ``outcome`` (+1 or -1) eigenspace."""
        return (IDENTITY + outcome * self.matrix) / 2


OBSERVABLES = {
    "A1": Observable("A1", SIGMA_X),
    "A2": Observable("A2", SIGMA_Y),
    "B1": Observable("B1", SIGMA_X),
    "B2": Observable("B2", (SIGMA_X - SIGMA_Y) / math.sqrt(2)),
    "B3": Observable("B3", (SIGMA_X + SIGMA_Y) / math.sqrt(2)),
    "C1": Observable("C1", SIGMA_X),
    "C2": Observable("C2", -SIGMA_Y),
}

ObservableLike = Union[Observable, str]


def _observable(obs: ObservableLike) -> Observable:
    if isinstance(obs, Observable):
        return obs
    try:
        return OBSERVABLES[obs]
    except KeyError:
        raise ParameterError(f"unknown observable {obs!r}") from None


def kron(*ops: np.ndarray) -> np.ndarray:
    return reduce(np.kron, ops)


# ---------------------------------------------------------------------------
# heralded separation and swapping

def separation_probability_oracle(T: float, eta_t: float) -> float:
    """Enumerate the beam-splitter paths of one user's H and V photons.

    Each photon is independently transmitted (probability ``T``) or reflected.
    A separation event needs exactly one photon in each arm and the
    transmitted one must survive the channel.
    """
    check_probability("T", T)
    check_probability("eta_t", eta_t)
    total = 0.0
    for h_transmitted in (True, False):
        for v_transmitted in (True, False):
            p = (T if h_transmitted else 1 - T) * (T if v_transmitted else 1 - T)
            if h_transmitted != v_transmitted:
                total += p * eta_t
    return total


def pair_state() -> PureState:
    """(|HV> + |VH>)/sqrt(2), the state each user stores after separation."""
    return PureState(2, np.array([0, 1, 1, 0]) / math.sqrt(2))


def swap_input_state() -> PureState:
    """Six-qubit product of three stored pairs.

    Qubit order is (A1, B1, C1, A2, B2, C2): the locally retained photons
    first, the photons sent to the central station last. Each user's pair
    spans (retained_u, sent_u).
    """
    pair = pair_state().amplitudes.reshape(2, 2)
    # tensor indices: a_r, a_m, b_r, b_m, c_r, c_m -> a_r, b_r, c_r, a_m, b_m, c_m
    full = np.einsum("ad,be,cf->abcdef", pair, pair, pair)
    return PureState(6, full.reshape(64))


class SwapOutcome(NamedTuple):
    label: GhzLabel
    probability: float
    state: PureState


def entanglement_swap(state, measured_positions: Sequence[int] = (3, 4, 5)) -> List[SwapOutcome]:
    """Project three qubits of a six-qubit state onto the GHZ basis.

    Returns every outcome with non-zero probability together with the
    normalized post-measurement state of the three retained qubits (kept in
    their original relative order). The GHZ projector acts on the measured
    qubits in the order given by ``measured_positions``.
    """
    if not isinstance(state, PureState):
        amps = np.asarray(state, dtype=complex)
        if amps.shape != (64,):
            raise StateError("entanglement_swap needs a 6-qubit state")
        state = PureState(6, amps)
    if state.num_qubits != 6:
        raise StateError("entanglement_swap needs a 6-qubit state")
    measured = [int(q) for q in measured_positions]
    if len(measured) != 3 or len(set(measured)) != 3 or not all(0 <= q < 6 for q in measured):
        raise ParameterError(f"need three distinct qubit positions in [0, 6), got {measured_positions}")
    retained = [q for q in range(6) if q not in measured]
    tensor = state.amplitudes.reshape((2,) * 6).transpose(retained + measured)
    joint = tensor.reshape(8, 8)

    outcomes = []
    for label in GHZ_LABELS:
        collapsed = joint @ ghz_state(label).amplitudes.conj()
        prob = float(np.vdot(collapsed, collapsed).real)
        if prob > ATOL:
            outcomes.append(SwapOutcome(label, prob, PureState(3, collapsed / math.sqrt(prob))))
    return outcomes


def gsm_classify(label) -> str:
    """A linear-optical GHZ analyzer only resolves the two index-1 states."""
    return "success" if _check_label(label).index == 1 else "failure"


def phase_flip(state: PureState, qubit: int = 0) -> PureState:
    """Apply sigma_z to ``qubit``."""
    ops = [SIGMA_Z if q == qubit else IDENTITY for q in range(state.num_qubits)]
    return PureState(state.num_qubits, kron(*ops) @ state.amplitudes)


# ---------------------------------------------------------------------------
# noise and correlations

def white_noise_state(F: float) -> DensityOperator:
    """F |GHZ1+><GHZ1+| + (1-F)/8 * sum of all eight GHZ projectors."""
    check_probability("F", F)
    target = ghz_state((1, "+")).density().matrix
    mixture = sum(ghz_state(lab).density().matrix for lab in GHZ_LABELS)
    return DensityOperator(3, F * target + (1 - F) / 8 * mixture)


def correlation(rho: DensityOperator, a: ObservableLike, b: ObservableLike,
                c: ObservableLike, eta_l: float) -> float:
    """Three-party correlator with non-detections scored as 0.

    A round only contributes its product of outcomes when all three photons
    are detected, so the ideal correlator is scaled by ``eta_l**3``.
    """
    check_probability("eta_l", eta_l)
    if rho.num_qubits != 3:
        raise StateError("correlation needs a 3-qubit state")
    op = kron(_observable(a).matrix, _observable(b).matrix, _observable(c).matrix)
    return eta_l ** 3 * rho.expectation(op)


# Alice-Bob CHSH with Charlie fixed to C1; Charlie's outcome multiplies
# Bob's, acting as the conditioning sign.
CHSH_TERMS: Tuple[Tuple[int, str, str, str], ...] = (
    (+1, "A1", "B2", "C1"),
    (+1, "A1", "B3", "C1"),
    (+1, "A2", "B2", "C1"),
    (-1, "A2", "B3", "C1"),
)

# Standard Svetlichny form with coefficient (-1)**floor((x+y+z)/2) over
# settings x: A1/A2, y: B2/B3, z: C1/(-C2). Since the protocol's C2 is -sigma_y
# the z = 1 coefficients are negated here.
SVETLICHNY_TERMS: Tuple[Tuple[int, str, str, str], ...] = (
    (+1, "A1", "B2", "C1"),
    (+1, "A1", "B3", "C1"),
    (+1, "A2", "B2", "C1"),
    (-1, "A2", "B3", "C1"),
    (-1, "A1", "B2", "C2"),
    (+1, "A1", "B3", "C2"),
    (+1, "A2", "B2", "C2"),
    (+1, "A2", "B3", "C2"),
)


def chsh_value(rho: DensityOperator, eta_l: float, terms=CHSH_TERMS) -> float:
    return sum(coef * correlation(rho, a, b, c, eta_l) for coef, a, b, c in terms)


def svetlichny_value(rho: DensityOperator, eta_l: float, terms=SVETLICHNY_TERMS) -> float:
    return sum(coef * correlation(rho, a, b, c, eta_l) for coef, a, b, c in terms)


def qber(noise: NoiseParams, strategy: str = "base", q: float = None) -> float:
    """Quantum bit error rate of the key rounds.

    ``base`` counts every lost photon as an error, ``postselect`` replaces a
    lost outcome by a fair coin, ``advanced`` additionally flips Alice's bit
    with probability ``q``.
    """
    eta3 = noise.eta_l ** 3
    if strategy == "base":
        if q is not None:
            raise ParameterError("q is only used by the advanced strategy")
        return (1 - noise.F) / 2 * eta3 + 1 - eta3
    if strategy == "postselect":
        if q is not None:
            raise ParameterError("q is only used by the advanced strategy")
        return (1 - noise.F) / 2 * eta3 + (1 - eta3) / 2
    if strategy == "advanced":
        q = 0.0 if q is None else float(q)
        if not 0.0 <= q <= 0.5:
            raise ParameterError(f"q must lie in [0, 0.5], got {q!r}")
        return q + (1 - 2 * q) * qber(noise, "postselect")
    raise ParameterError(f"unknown strategy {strategy!r}")


def outcome_distribution(state, a: ObservableLike, b: ObservableLike,
                         c: ObservableLike) -> np.ndarray:
    """Joint probabilities of (a, b, c) outcomes for a 3-qubit state.

    Returned as an array of 8 entries ordered by the bit pattern
    ``(a == -1, b == -1, c == -1)``, most significant first.
    """
    rho = state.density() if isinstance(state, PureState) else state
    obs = [_observable(o) for o in (a, b, c)]
    probs = np.empty(8)
    for k in range(8):
        signs = [-1 if (k >> (2 - i)) & 1 else 1 for i in range(3)]
        proj = kron(*(o.projector(s) for o, s in zip(obs, signs)))
        probs[k] = rho.expectation(proj)
    return np.clip(probs, 0.0, None)

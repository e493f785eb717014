"""Markov-modulated congestion channel.

The shared vehicular channel is in one of a few congestion states, each with
its own per-hop packet drop probability. The state is constant within a slot
and moves between slots according to a row-stochastic transition matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonErgodic

DEFAULT_DROP_RATES = (0.1, 0.35, 0.2, 0.3)
DEFAULT_SELF_TRANSITION = 0.85

_ROW_TOL = 1e-9


@dataclass(frozen=True)
class CongestionState:
    drop_rate: float
    label: str

    def __post_init__(self):
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ConfigError(f"drop_rate must be in [0, 1], got {self.drop_rate}")


@dataclass
class MarkovChannel:
    """Finite-state channel; ``transition[i, j]`` is P(next=j | current=i)."""

    states: list[CongestionState]
    transition: np.ndarray
    current_state: int = 0
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        S = len(self.states)
        if S == 0:
            raise ConfigError("channel needs at least one state")
        if P.shape != (S, S):
            raise ConfigError(f"transition matrix must be {S}x{S}, got {P.shape}")
        if np.any(P < 0) or np.any(P > 1):
            raise ConfigError("transition entries must lie in [0, 1]")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > _ROW_TOL):
            raise ConfigError("every transition row must sum to 1")
        if not 0 <= self.current_state < S:
            raise ConfigError(f"current_state {self.current_state} out of range")
        self.transition = P
        self._cum = np.cumsum(P, axis=1)
        # guard against a cumulative row ending at 1 - 1e-16
        self._cum[:, -1] = 1.0

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def drop_rates(self) -> np.ndarray:
        return np.array([s.drop_rate for s in self.states])

    @property
    def state(self) -> CongestionState:
        return self.states[self.current_state]

    def copy(self) -> "MarkovChannel":
        return MarkovChannel(list(self.states), self.transition.copy(), self.current_state)


def default_channel(
    drop_rates=DEFAULT_DROP_RATES,
    self_transition: float = DEFAULT_SELF_TRANSITION,
    initial_state: int = 0,
) -> MarkovChannel:
    """Persistent chain: ``self_transition`` on the diagonal, the rest spread evenly."""
    S = len(drop_rates)
    if S == 1:
        P = np.ones((1, 1))
    else:
        off = (1.0 - self_transition) / (S - 1)
        P = np.full((S, S), off)
        np.fill_diagonal(P, self_transition)
    states = [CongestionState(float(d), f"s{i}") for i, d in enumerate(drop_rates)]
    return MarkovChannel(states, P, initial_state)


def step(channel: MarkovChannel, rng: np.random.Generator) -> CongestionState:
    """Advance one slot in place and return the new state."""
    row = channel._cum[channel.current_state]
    channel.current_state = int(np.searchsorted(row, rng.random(), side="right"))
    return channel.states[channel.current_state]


def sample_drop(state: CongestionState, rng: np.random.Generator) -> bool:
    return drop_from_uniform(state, rng.random())


def drop_from_uniform(state: CongestionState, u: float) -> bool:
    """Drop decision for a pre-drawn uniform ``u`` in [0, 1)."""
    return u < state.drop_rate


def is_primitive(P: np.ndarray) -> bool:
    """True when some power of the support of ``P`` is strictly positive.

    Primitive is equivalent to irreducible and aperiodic; Wielandt's bound
    (S-1)^2 + 1 caps the power that needs checking.
    """
    A = (np.asarray(P) > 0).astype(np.int64)
    S = A.shape[0]
    M = A.copy()
    for _ in range((S - 1) ** 2 + 1):
        if M.all():
            return True
        M = ((M @ A) > 0).astype(np.int64)
    return bool(M.all())


def stationary_distribution(
    channel: MarkovChannel, max_iter: int = 100_000, tol: float = 1e-13
) -> np.ndarray:
    """Stationary distribution by power iteration from the uniform vector."""
    P = channel.transition
    if not is_primitive(P):
        raise NonErgodic("transition matrix is reducible or periodic")
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt
        pi = nxt
    raise NonErgodic(f"power iteration did not converge in {max_iter} iterations")


def expected_drop_rate(channel: MarkovChannel) -> float:
    return float(stationary_distribution(channel) @ channel.drop_rates)

"""Uniform replay buffer and the synthetic inputs of the uncertainty regularizer."""
from dataclasses import dataclass
from typing import List

import numpy as np

from .envs import EnvSpec, Transition

__all__ = ['Batch', 'ReplayBuffer', 'synthetic_count', 'synthetic_batch']


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self) -> int:
        return int(self.rewards.shape[0])

    def transitions(self) -> List[Transition]:
        return [Transition(self.states[i], self.actions[i], float(self.rewards[i]),
                           self.next_states[i], bool(self.terminals[i]))
                for i in range(len(self))]


class ReplayBuffer:
    """Ring storage; once full the oldest transition is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int) -> None:
        if capacity < 1:
            raise ValueError(f'Replay capacity must be >= 1, got {capacity}')
        self.capacity = int(capacity)
        self._states = np.zeros((self.capacity, state_dim))
        self._actions = np.zeros((self.capacity, action_dim))
        self._rewards = np.zeros(self.capacity)
        self._next_states = np.zeros((self.capacity, state_dim))
        self._terminals = np.zeros(self.capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        i = self.cursor
        self._states[i] = t.state
        self._actions[i] = t.action
        self._rewards[i] = t.reward
        self._next_states[i] = t.next_state
        self._terminals[i] = t.terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _gather(self, index: np.ndarray) -> Batch:
        return Batch(self._states[index], self._actions[index],
                     self._rewards[index], self._next_states[index],
                     self._terminals[index])

    def sample_batch(self, n: int, rng: np.random.Generator) -> Batch:
        """n i.i.d. uniform draws, with replacement."""
        if self.size == 0:
            raise ValueError('Cannot sample from an empty replay buffer')
        return self._gather(rng.integers(0, self.size, size=n))

    def contents(self) -> Batch:
        """Stored transitions, oldest first."""
        if self.size < self.capacity:
            index = np.arange(self.size)
        else:
            index = (self.cursor + np.arange(self.capacity)) % self.capacity
        return self._gather(index)

    def state_dict(self) -> dict:
        return {
            'states': self._states[:self.size].copy(),
            'actions': self._actions[:self.size].copy(),
            'rewards': self._rewards[:self.size].copy(),
            'next_states': self._next_states[:self.size].copy(),
            'terminals': self._terminals[:self.size].copy(),
            'cursor': self.cursor,
        }

    def load_state_dict(self, state: dict) -> None:
        size = len(state['rewards'])
        self._states[:size] = state['states']
        self._actions[:size] = state['actions']
        self._rewards[:size] = state['rewards']
        self._next_states[:size] = state['next_states']
        self._terminals[:size] = state['terminals']
        self.size = size
        self.cursor = int(state['cursor'])


def synthetic_count(rho: float, n: int) -> int:
    """M = round(rho * N), halves rounded up."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f'rho must lie in [0, 1], got {rho}')
    return max(0, int(np.floor(rho * n + 0.5)))


def synthetic_batch(spec: EnvSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    """m points uniform on the normalized cube [-1, 1]^(nS + nA)."""
    if m < 0:
        raise ValueError(f'Synthetic batch size must be >= 0, got {m}')
    return rng.uniform(-1.0, 1.0, size=(m, spec.input_dim))

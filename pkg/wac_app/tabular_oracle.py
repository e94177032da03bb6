"""Exact tabular Wasserstein Q-learning, the ground truth for the WTD rule."""
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .gaussq import (GaussianPosterior, ValueBounds, barycenter_gaussian,
                     prior_std, std_normal_quantile)

__all__ = [
    'DiscreteMdp', 'PosteriorTable', 'wtd_update', 'wql_run',
    'value_iteration', 'polynomial_lr', 'discrete_riverswim',
]


@dataclass
class DiscreteMdp:
    transitions: np.ndarray  # P[s, a, s']
    rewards: np.ndarray      # r[s, a]
    gamma: float
    terminal: np.ndarray     # terminal[s]
    initial: np.ndarray      # start distribution over states

    def __post_init__(self) -> None:
        sums = self.transitions.sum(axis=2)
        if not np.allclose(sums, 1.0, rtol=0.0, atol=1e-12):
            raise ValueError('Every P[s][a] must sum to 1')
        if self.rewards.shape != sums.shape:
            raise ValueError(
                f'Rewards shape {self.rewards.shape} does not match {sums.shape}')

    @property
    def n_states(self) -> int:
        return int(self.transitions.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.transitions.shape[1])

    def value_bounds(self) -> ValueBounds:
        return ValueBounds.from_rewards(
            float(self.rewards.min()), float(self.rewards.max()), self.gamma,
            episodic=bool(self.terminal.any()))


class PosteriorTable:
    """One Gaussian Q-posterior per (s, a), plus visit counts."""

    def __init__(self, n_states: int, n_actions: int, bounds: ValueBounds) -> None:
        self.means = np.full((n_states, n_actions), bounds.midpoint)
        self.stds = np.full((n_states, n_actions), prior_std(bounds))
        self.visits = np.zeros((n_states, n_actions), dtype=np.int64)

    def posterior(self, s: int, a: int) -> GaussianPosterior:
        return GaussianPosterior(float(self.means[s, a]), float(self.stds[s, a]))

    def upper_bounds(self, s: int, delta: float) -> np.ndarray:
        return self.means[s] + self.stds[s] * std_normal_quantile(delta)


def wtd_update(table: PosteriorTable, s: int, a: int, r: float, s_next: int,
               a_next: int, alpha_t: float, gamma: float,
               terminal: bool = False) -> GaussianPosterior:
    """Move Q(s, a) to the barycenter of itself and r + gamma * Q(s', a')."""
    if not 0.0 <= alpha_t <= 1.0:
        raise ValueError(f'Learning rate must lie in [0, 1], got {alpha_t}')
    if terminal:
        target = GaussianPosterior(r, 0.0)
    else:
        following = table.posterior(s_next, a_next)
        target = GaussianPosterior(r + gamma * following.mean,
                                   gamma * following.std)
    updated = barycenter_gaussian([(1.0 - alpha_t, table.posterior(s, a)),
                                   (alpha_t, target)])
    table.means[s, a] = updated.mean
    table.stds[s, a] = updated.std
    return updated


def polynomial_lr(exponent: float = 0.7) -> Callable[[int], float]:
    """alpha_t = (1 / (1 + visits)) ** exponent."""
    return lambda visits: (1.0 / (1.0 + visits)) ** exponent


def _optimistic_action(table: PosteriorTable, s: int, delta: float,
                       rng: np.random.Generator) -> int:
    bounds = table.upper_bounds(s, delta)
    best = np.flatnonzero(bounds == bounds.max())
    return int(rng.choice(best))


def wql_run(mdp: DiscreteMdp, episodes: int, delta: float,
            lr_schedule: Optional[Callable[[int], float]],
            rng: np.random.Generator,
            horizon: int = 20,
            exploring_starts: bool = True) -> Tuple[PosteriorTable, List[float]]:
    """Optimistic WQL: act on argmax U^delta, update with WTD every step.

    With `exploring_starts` each episode opens in a uniform state with a
    uniform action, so every pair keeps being updated; all later actions are
    optimistic. Without it episodes start from `mdp.initial`.
    """
    lr_schedule = lr_schedule or polynomial_lr()
    table = PosteriorTable(mdp.n_states, mdp.n_actions, mdp.value_bounds())
    returns = []
    for _ in range(episodes):
        if exploring_starts:
            s = int(rng.integers(mdp.n_states))
            a = int(rng.integers(mdp.n_actions))
        else:
            s = int(rng.choice(mdp.n_states, p=mdp.initial))
            a = _optimistic_action(table, s, delta, rng)
        total = 0.0
        for _ in range(horizon):
            r = float(mdp.rewards[s, a])
            s_next = int(rng.choice(mdp.n_states, p=mdp.transitions[s, a]))
            terminal = bool(mdp.terminal[s_next])
            a_next = _optimistic_action(table, s_next, delta, rng)
            wtd_update(table, s, a, r, s_next, a_next,
                       lr_schedule(int(table.visits[s, a])), mdp.gamma, terminal)
            table.visits[s, a] += 1
            total += r
            if terminal:
                break
            s, a = s_next, a_next
        returns.append(total)
    return table, returns


def value_iteration(mdp: DiscreteMdp, tolerance: float = 1e-10,
                    max_iterations: int = 1_000_000) -> np.ndarray:
    """Q* by repeated Bellman optimality backups, to sup-norm `tolerance`."""
    if not mdp.gamma < 1.0:
        raise ValueError('Value iteration needs gamma < 1')
    q = np.zeros((mdp.n_states, mdp.n_actions))
    alive = (~mdp.terminal).astype(np.float64)
    for _ in range(max_iterations):
        v = q.max(axis=1) * alive
        updated = mdp.rewards + mdp.gamma * mdp.transitions @ v
        residual = float(np.abs(updated - q).max())
        q = updated
        if residual <= tolerance * (1.0 - mdp.gamma):
            break
    return q


def discrete_riverswim(n_states: int = 5, gamma: float = 0.9) -> DiscreteMdp:
    """Classical Riverswim: 'left' (0) drifts to the small reward at the
    bank, 'right' (1) swims against the current towards the large one."""
    left, right = 0, 1
    p = np.zeros((n_states, 2, n_states))
    r = np.zeros((n_states, 2))
    for s in range(n_states):
        p[s, left, max(s - 1, 0)] = 1.0
        if s == 0:
            p[s, right, 0] = 0.6
            p[s, right, 1] = 0.4
        elif s == n_states - 1:
            p[s, right, s] = 0.6
            p[s, right, s - 1] = 0.4
        else:
            p[s, right, s - 1] = 0.05
            p[s, right, s] = 0.6
            p[s, right, s + 1] = 0.35
    r[0, left] = 5e-3
    r[n_states - 1, right] = 1.0
    initial = np.zeros(n_states)
    initial[:2] = 0.5
    return DiscreteMdp(p, r, gamma, np.zeros(n_states, dtype=bool), initial)

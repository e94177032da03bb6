"""Native LQG, continuous Riverswim and Point-maze environments.

Every environment is stateful and single-owner: `reset(rng)` starts an
episode, `step(action, rng)` advances it and returns a `Transition`.
`terminal` marks genuine task termination only; running out of horizon is
reported separately by `is_truncated()`.
"""
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
import yaml

from .config_error import ConfigError
from .constants import ENV_IDS, REWARD_KINDS
from .environment_fault_error import EnvironmentFaultError
from .log import log

__all__ = [
    'EnvSpec', 'Transition', 'Rect', 'MazeLayout', 'Environment',
    'RiverswimEnv', 'LqgEnv', 'PointEnv', 'riverswim_direction_probs',
    'riverswim_step', 'lqg_step', 'point_step', 'reset', 'normalize',
    'denormalize', 'normalize_state', 'normalize_action',
    'denormalize_action', 'load_layout', 'make_env',
]

MAZES_DIR = os.path.join(os.path.dirname(__file__), 'mazes')


@dataclass(frozen=True, eq=False)
class EnvSpec:
    name: str
    state_low: np.ndarray
    state_high: np.ndarray
    action_low: np.ndarray
    action_high: np.ndarray
    gamma: float
    horizon: int
    r_min: float
    r_max: float
    # True when some transitions end the task (goal reached).
    episodic: bool = False

    def __post_init__(self) -> None:
        for low, high, what in ((self.state_low, self.state_high, 'state'),
                                (self.action_low, self.action_high, 'action')):
            if low.shape != high.shape or np.any(low >= high):
                raise ValueError(
                    f'{self.name}: {what} bounds {low} / {high} are invalid')
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f'{self.name}: gamma must lie in [0, 1)')
        if self.horizon < 1:
            raise ValueError(f'{self.name}: horizon must be >= 1')
        if self.r_min > self.r_max:
            raise ValueError(f'{self.name}: r_min is above r_max')

    @property
    def state_dim(self) -> int:
        return int(self.state_low.size)

    @property
    def action_dim(self) -> int:
        return int(self.action_low.size)

    @property
    def input_dim(self) -> int:
        return self.state_dim + self.action_dim


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool = False


def _affine_to_cube(x: np.ndarray, low: np.ndarray, high: np.ndarray,
                    what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < low) or np.any(x > high):
        log.warning(f'{what} {x} outside [{low}, {high}], clipping')
        x = np.clip(x, low, high)
    return 2.0 * (x - low) / (high - low) - 1.0


def _affine_from_cube(z: np.ndarray, low: np.ndarray,
                      high: np.ndarray) -> np.ndarray:
    return low + (np.asarray(z, dtype=np.float64) + 1.0) * 0.5 * (high - low)


def normalize(spec: EnvSpec, state, action) -> np.ndarray:
    """Map (state, action) onto [-1, 1]^(nS + nA), clipping out-of-bounds input."""
    return np.concatenate([
        _affine_to_cube(state, spec.state_low, spec.state_high, 'state'),
        _affine_to_cube(action, spec.action_low, spec.action_high, 'action'),
    ])


def normalize_state(spec: EnvSpec, state) -> np.ndarray:
    return _affine_to_cube(state, spec.state_low, spec.state_high, 'state')


def normalize_action(spec: EnvSpec, action) -> np.ndarray:
    return _affine_to_cube(action, spec.action_low, spec.action_high, 'action')


def denormalize(spec: EnvSpec, point) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse of `normalize`."""
    point = np.asarray(point, dtype=np.float64)
    return (_affine_from_cube(point[:spec.state_dim],
                              spec.state_low, spec.state_high),
            _affine_from_cube(point[spec.state_dim:],
                              spec.action_low, spec.action_high))


def denormalize_action(spec: EnvSpec, action) -> np.ndarray:
    return _affine_from_cube(action, spec.action_low, spec.action_high)


class Environment:
    """Shared episode bookkeeping; subclasses provide `_initial` and `_advance`."""
    spec: EnvSpec

    def __init__(self) -> None:
        self.state: Optional[np.ndarray] = None
        self.t = 0
        self.done = True
        self.episode_return = 0.0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = self._initial(rng)
        self.t = 0
        self.done = False
        self.episode_return = 0.0
        return self.state.copy()

    def step(self, action, rng: np.random.Generator) -> Transition:
        if self.done or self.state is None:
            raise EnvironmentFaultError(
                f'{self.spec.name}: step() called before reset()')
        action = np.clip(np.asarray(action, dtype=np.float64).reshape(-1),
                         self.spec.action_low, self.spec.action_high)
        transition = self._advance(self.state, action, rng)
        self.state = transition.next_state.copy()
        self.t += 1
        self.episode_return += transition.reward
        self.done = transition.terminal or self.is_truncated()
        return transition

    def is_truncated(self) -> bool:
        return self.t >= self.spec.horizon

    def _initial(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _advance(self, state: np.ndarray, action: np.ndarray,
                 rng: np.random.Generator) -> Transition:
        raise NotImplementedError


def reset(env: Environment, rng: np.random.Generator) -> np.ndarray:
    return env.reset(rng)


# Riverswim.

RIVERSWIM_MAX_STATE = 25.0


def riverswim_direction_probs(action: float) -> Tuple[float, float, float]:
    """P(d=-1), P(d=0), P(d=+1) for an intended move `action` in [-1, 1]."""
    if not -1.0 <= action <= 1.0:
        raise ValueError(f'Riverswim action must lie in [-1, 1], got {action}')
    if action <= 0:
        return 0.1 - 0.9 * action, 0.9 * (action + 1.0), 0.0
    return 0.1, 0.6 + 0.3 * (1.0 - action), 0.3 * action


def riverswim_reward(state: float, action: float,
                     max_state: float = RIVERSWIM_MAX_STATE) -> float:
    if state <= 1.0:
        return 5e-4
    if state >= max_state - 1.0 and action > 0:
        return 1.0
    return 0.0


def riverswim_step(state: float, action: float, rng: np.random.Generator,
                   max_state: float = RIVERSWIM_MAX_STATE) -> Transition:
    probs = riverswim_direction_probs(action)
    direction = rng.choice((-1.0, 0.0, 1.0), p=probs)
    next_state = min(max(state + direction * abs(action), 0.0), max_state)
    return Transition(
        state=np.array([state]), action=np.array([action]),
        reward=riverswim_reward(state, action, max_state),
        next_state=np.array([next_state]), terminal=False)


class RiverswimEnv(Environment):

    def __init__(self, max_state: float = RIVERSWIM_MAX_STATE,
                 horizon: int = 100, gamma: float = 0.99) -> None:
        super().__init__()
        self.max_state = float(max_state)
        self.spec = EnvSpec(
            name=ENV_IDS.RIVERSWIM,
            state_low=np.array([0.0]), state_high=np.array([self.max_state]),
            action_low=np.array([-1.0]), action_high=np.array([1.0]),
            gamma=gamma, horizon=horizon, r_min=0.0, r_max=1.0)

    def _initial(self, rng):
        return np.array([rng.uniform(0.0, 0.5)])

    def _advance(self, state, action, rng):
        return riverswim_step(float(state[0]), float(action[0]), rng,
                              self.max_state)


# LQG.

LQG_A = LQG_B = 1.0
LQG_Q = LQG_R = 0.9


def lqg_step(state: float, action: float, rng: Optional[np.random.Generator],
             state_bound: float = 4.0, noise_variance: float = 0.5) -> Transition:
    """x' = clip(x + a + v), reward = -(Q x^2 + R a^2); no noise when rng is None."""
    noise = 0.0
    if rng is not None and noise_variance > 0:
        noise = rng.normal(0.0, math.sqrt(noise_variance))
    next_state = LQG_A * state + LQG_B * action + noise
    next_state = min(max(next_state, -state_bound), state_bound)
    return Transition(
        state=np.array([state]), action=np.array([action]),
        reward=-(LQG_Q * state ** 2 + LQG_R * action ** 2),
        next_state=np.array([next_state]), terminal=False)


class LqgEnv(Environment):

    def __init__(self, state_bound: float = 4.0, action_bound: float = 1.0,
                 noise_variance: float = 0.5, horizon: int = 100,
                 gamma: float = 0.99) -> None:
        super().__init__()
        self.state_bound = float(state_bound)
        self.noise_variance = float(noise_variance)
        self.spec = EnvSpec(
            name=ENV_IDS.LQG,
            state_low=np.array([-self.state_bound]),
            state_high=np.array([self.state_bound]),
            action_low=np.array([-action_bound]),
            action_high=np.array([action_bound]),
            gamma=gamma, horizon=horizon,
            r_min=-(LQG_Q * self.state_bound ** 2 + LQG_R * action_bound ** 2),
            r_max=0.0)

    def _initial(self, rng):
        # Episodes start on one of the two borders.
        return np.array([self.state_bound if rng.random() < 0.5
                         else -self.state_bound])

    def _advance(self, state, action, rng):
        return lqg_step(float(state[0]), float(action[0]), rng,
                        self.state_bound, self.noise_variance)


# Point mazes.


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f'Rectangle {self} must have positive size')

    @property
    def x1(self) -> float:
        return self.x + self.width

    @property
    def y1(self) -> float:
        return self.y + self.height

    def contains(self, px: float, py: float) -> bool:
        """Strict interior; a point on an edge is outside."""
        return self.x < px < self.x1 and self.y < py < self.y1


@dataclass(frozen=True)
class MazeLayout:
    name: str
    bounds: Rect
    walls: Tuple[Rect, ...]
    start_region: Rect
    goal_center: Tuple[float, float]
    goal_radius: float = 2.0

    def __post_init__(self) -> None:
        gx, gy = self.goal_center
        if any(w.contains(gx, gy) for w in self.walls):
            raise ConfigError(f'{self.name}: goal lies inside a wall')
        s, b = self.start_region, self.bounds
        if s.x < b.x or s.y < b.y or s.x1 > b.x1 or s.y1 > b.y1:
            raise ConfigError(f'{self.name}: start region leaves the bounds')

    def in_wall(self, px: float, py: float) -> bool:
        return any(w.contains(px, py) for w in self.walls)

    @property
    def diameter(self) -> float:
        return math.hypot(self.bounds.width, self.bounds.height)


def _rect(data: Any, where: str) -> Rect:
    if not isinstance(data, dict) or set(data) != {'x', 'y', 'width', 'height'}:
        raise ConfigError(
            f'{where} must map exactly x, y, width, height, got {data!r}')
    try:
        return Rect(**{k: float(v) for k, v in data.items()})
    except (TypeError, ValueError) as error:
        raise ConfigError(f'{where}: {error}') from error


def load_layout(path: str) -> MazeLayout:
    """Read and validate a maze layout YAML file."""
    with open(path) as file:
        data = yaml.safe_load(file)
    expected = {'name', 'bounds', 'walls', 'start_region', 'goal'}
    if not isinstance(data, dict) or set(data) != expected:
        raise ConfigError(
            f'{path}: layout must have exactly the keys {sorted(expected)}')
    goal = data['goal']
    if (not isinstance(goal, dict) or set(goal) != {'center', 'radius'}
            or len(goal['center']) != 2):
        raise ConfigError(f'{path}: goal must map center [x, y] and radius')
    if not isinstance(data['walls'], list):
        raise ConfigError(f'{path}: walls must be a list')
    return MazeLayout(
        name=str(data['name']),
        bounds=_rect(data['bounds'], f'{path}: bounds'),
        walls=tuple(_rect(w, f'{path}: walls[{i}]')
                    for i, w in enumerate(data['walls'])),
        start_region=_rect(data['start_region'], f'{path}: start_region'),
        goal_center=(float(goal['center'][0]), float(goal['center'][1])),
        goal_radius=float(goal['radius']))


@dataclass(frozen=True)
class PointPhysics:
    dt: float = 0.1
    force_gain: float = 1.0
    damping: float = 0.05
    max_speed: float = 2.0


def _move_axis(pos: float, other: float, delta: float, walls, low: float,
               high: float, axis: int) -> Tuple[float, bool]:
    """Move along one axis, stopping at the first wall face or the bounds."""
    target = pos + delta
    blocked = False
    for wall in walls:
        lo, hi = (wall.x, wall.x1) if axis == 0 else (wall.y, wall.y1)
        olo, ohi = (wall.y, wall.y1) if axis == 0 else (wall.x, wall.x1)
        if not olo < other < ohi:
            continue
        if delta > 0 and pos <= lo < target:
            target, blocked = lo, True
        elif delta < 0 and pos >= hi > target:
            target, blocked = hi, True
    if target < low:
        target, blocked = low, True
    elif target > high:
        target, blocked = high, True
    return target, blocked


def point_step(state, action, layout: MazeLayout, reward_kind: str,
               physics: PointPhysics = PointPhysics()) -> Transition:
    """Damped point mass; x moves first, then y, each stopped at walls."""
    x, y, vx, vy = (float(v) for v in state)
    ax, ay = (float(a) for a in action)
    decay = 1.0 - physics.dt * physics.damping
    vx = min(max(decay * vx + physics.dt * physics.force_gain * ax,
                 -physics.max_speed), physics.max_speed)
    vy = min(max(decay * vy + physics.dt * physics.force_gain * ay,
                 -physics.max_speed), physics.max_speed)
    b = layout.bounds
    x, blocked = _move_axis(x, y, physics.dt * vx, layout.walls, b.x, b.x1, 0)
    if blocked:
        vx = 0.0
    y, blocked = _move_axis(y, x, physics.dt * vy, layout.walls, b.y, b.y1, 1)
    if blocked:
        vy = 0.0
    distance = math.hypot(x - layout.goal_center[0], y - layout.goal_center[1])
    reward = -distance if reward_kind == REWARD_KINDS.DENSE else -1.0
    return Transition(
        state=np.asarray(state, dtype=np.float64).copy(),
        action=np.asarray(action, dtype=np.float64).copy(),
        reward=reward, next_state=np.array([x, y, vx, vy]),
        terminal=distance < layout.goal_radius)


class PointEnv(Environment):

    def __init__(self, layout: MazeLayout,
                 reward_kind: str = REWARD_KINDS.DENSE, horizon: int = 300,
                 gamma: float = 0.99,
                 physics: PointPhysics = PointPhysics()) -> None:
        super().__init__()
        if reward_kind not in (REWARD_KINDS.DENSE, REWARD_KINDS.SPARSE):
            raise ValueError(f'Unknown reward kind {reward_kind}')
        self.layout = layout
        self.reward_kind = reward_kind
        self.physics = physics
        b, v = layout.bounds, physics.max_speed
        r_min = -layout.diameter if reward_kind == REWARD_KINDS.DENSE else -1.0
        self.spec = EnvSpec(
            name=layout.name,
            state_low=np.array([b.x, b.y, -v, -v]),
            state_high=np.array([b.x1, b.y1, v, v]),
            action_low=np.array([-1.0, -1.0]),
            action_high=np.array([1.0, 1.0]),
            gamma=gamma, horizon=horizon, r_min=r_min,
            r_max=0.0 if reward_kind == REWARD_KINDS.DENSE else -1.0,
            episodic=True)

    def start_at(self, state) -> np.ndarray:
        """Start an episode from a chosen state, rejecting states in walls."""
        state = np.asarray(state, dtype=np.float64)
        if self.layout.in_wall(state[0], state[1]):
            raise EnvironmentFaultError(
                f'{self.layout.name}: start {state[:2]} lies inside a wall')
        self.state, self.t, self.done = state.copy(), 0, False
        self.episode_return = 0.0
        return state.copy()

    def _initial(self, rng):
        s = self.layout.start_region
        x, y = rng.uniform(s.x, s.x1), rng.uniform(s.y, s.y1)
        if self.layout.in_wall(x, y):
            raise EnvironmentFaultError(
                f'{self.layout.name}: start region overlaps a wall')
        return np.array([x, y, 0.0, 0.0])

    def _advance(self, state, action, rng):
        return point_step(state, action, self.layout, self.reward_kind,
                          self.physics)


def make_env(env_id: str, overrides: Optional[Dict[str, Any]] = None) -> Environment:
    """Build an environment by id; `overrides` go to its constructor."""
    overrides = dict(overrides or {})
    if env_id == ENV_IDS.LQG:
        return LqgEnv(**overrides)
    if env_id == ENV_IDS.RIVERSWIM:
        return RiverswimEnv(**overrides)
    if env_id in ENV_IDS.POINTS:
        layout_path = overrides.pop(
            'layout', os.path.join(MAZES_DIR, f'{env_id}.yaml'))
        physics = PointPhysics(**overrides.pop('physics', {}))
        return PointEnv(load_layout(layout_path), physics=physics, **overrides)
    raise ConfigError(f'Unknown environment {env_id}')

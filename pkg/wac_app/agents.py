"""Actor-critic agents: Wasserstein actor-critic (OE and ME), SAC and OAC.

Every agent keeps its networks on the normalized cube: states and actions
are mapped to [-1, 1] before they reach a network, policies emit squashed
actions in (-1, 1) and `train_epoch` rescales them to environment bounds.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from functools import wraps
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config_error import ConfigError
from .constants import ALGOS, ALPHA_MODES, DEFAULTS, VARIANTS
from .diff_engine import (AdamState, Head, Mlp, Tape, Var, adam_step,
                          backward, forward, forward_heads, inverse_softplus,
                          soft_update)
from .environment_fault_error import EnvironmentFaultError
from .envs import (EnvSpec, Environment, denormalize_action, normalize,
                   normalize_action, normalize_state)
from .gaussq import ValueBounds, prior_std, std_normal_quantile
from .log import log
from .non_finite_error import NonFiniteError
from .replay import Batch, ReplayBuffer, synthetic_batch, synthetic_count

__all__ = [
    'SacConfig', 'WacConfig', 'OacConfig', 'TrainingConfig',
    'DistributionalCritic', 'ScalarCritic', 'SquashedGaussianPolicy',
    'SigmaSnapshot', 'normalize_batch', 'bootstrap_targets', 'critic_targets',
    'gaussian_w2_loss', 'wac_critic_loss', 'regularized_critic_loss',
    'wac_actor_loss', 'target_actor_loss', 'sac_actor_loss', 'sac_losses',
    'oac_shifted_mean', 'oac_exploration_action', 'min_sigma',
    'Agent', 'WacAgent', 'SacAgent', 'OacAgent', 'make_agent',
    'EpochMetrics', 'EvalResult', 'train_epoch', 'evaluate',
    'save_checkpoint', 'load_checkpoint', 'finite_loss',
]

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)
CHECKPOINT_VERSION = 1


def finite_loss(func: Callable):
    """Applied to a loss builder, name it in any non-finite failure.

    The tape already refuses non-finite values; this only adds which loss
    was being built, so an aborted run says where it broke.
    """
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except NonFiniteError as error:
            raise NonFiniteError(f'{func.__name__}: {error}') from error
    return wrapper


# Configuration.


@dataclass
class SacConfig:
    alpha_mode: str = ALPHA_MODES.AUTO
    # Fixed value, or the starting value when tuned automatically.
    alpha: float = 1.0
    # None means -action_dim.
    target_entropy: Optional[float] = None
    tau: float = DEFAULTS.TAU
    gamma: float = DEFAULTS.GAMMA

    def __post_init__(self) -> None:
        error_message = self._check()
        if error_message:
            raise ConfigError(error_message)

    def _check(self) -> str:
        if self.alpha_mode not in (ALPHA_MODES.FIXED, ALPHA_MODES.AUTO):
            return f'alpha_mode must be fixed or auto, got {self.alpha_mode!r}'
        if not self.alpha > 0:
            return f'alpha must be > 0, got {self.alpha}'
        if not 0.0 <= self.tau <= 1.0:
            return f'tau must lie in [0, 1], got {self.tau}'
        if not 0.0 <= self.gamma < 1.0:
            return f'gamma must lie in [0, 1), got {self.gamma}'
        return ''


@dataclass
class WacConfig(SacConfig):
    delta: float = DEFAULTS.DELTA
    lam: float = DEFAULTS.LAMBDA
    rho: float = DEFAULTS.RHO
    variant: str = VARIANTS.OE
    shared_trunk: bool = False

    def _check(self) -> str:
        error_message = super()._check()
        if error_message:
            return error_message
        if not 0.0 < self.delta < 1.0:
            return f'delta must lie in (0, 1), got {self.delta}'
        if not self.lam >= 0.0:
            return f'lambda must be >= 0, got {self.lam}'
        if not 0.0 <= self.rho <= 1.0:
            return f'rho must lie in [0, 1], got {self.rho}'
        if self.variant not in (VARIANTS.OE, VARIANTS.ME):
            return f'variant must be OE or ME, got {self.variant!r}'
        return ''


@dataclass
class OacConfig(SacConfig):
    beta_ub: float = DEFAULTS.BETA_UB
    delta_oac: float = DEFAULTS.DELTA_OAC

    def _check(self) -> str:
        error_message = super()._check()
        if error_message:
            return error_message
        if not self.beta_ub >= 0.0:
            return f'beta_ub must be >= 0, got {self.beta_ub}'
        if not self.delta_oac >= 0.0:
            return f'delta_oac must be >= 0, got {self.delta_oac}'
        return ''


@dataclass
class TrainingConfig:
    hidden_sizes: Tuple[int, ...] = DEFAULTS.HIDDEN_SIZES
    lr: float = DEFAULTS.LR
    batch_size: int = DEFAULTS.BATCH_SIZE
    n_explore: int = DEFAULTS.N_EXPLORE
    n_train: int = DEFAULTS.N_TRAIN
    buffer_capacity: int = DEFAULTS.BUFFER_CAPACITY

    def __post_init__(self) -> None:
        self.hidden_sizes = tuple(int(w) for w in self.hidden_sizes)
        error_message = ''
        if any(w < 1 for w in self.hidden_sizes):
            error_message = f'hidden sizes must be >= 1, got {self.hidden_sizes}'
        elif not self.lr > 0:
            error_message = f'lr must be > 0, got {self.lr}'
        elif self.batch_size < 1:
            error_message = f'batch_size must be >= 1, got {self.batch_size}'
        elif self.n_explore < 1:
            error_message = f'n_explore must be >= 1, got {self.n_explore}'
        elif self.n_train < 0:
            error_message = f'n_train must be >= 0, got {self.n_train}'
        elif self.buffer_capacity < 1:
            error_message = \
                f'buffer_capacity must be >= 1, got {self.buffer_capacity}'
        if error_message:
            raise ConfigError(error_message)


# Networks.


class DistributionalCritic:
    """Gaussian Q-posterior N(mu(s, a), sigma(s, a)^2).

    The std head ends in a softplus whose bias starts at the inverse softplus
    of the prior std, so a fresh critic answers sigma0 everywhere.
    """

    def __init__(self, name: str, input_dim: int, hidden_sizes: Sequence[int],
                 sigma0: float, rng: np.random.Generator,
                 shared_trunk: bool = False, prior_mean: float = 0.0) -> None:
        self.name = name
        self.shared_trunk = shared_trunk
        layers = [input_dim, *hidden_sizes]
        mean_head = Head('mean', 1, bias_init=prior_mean)
        std_head = Head('std', 1, 'softplus',
                        bias_init=inverse_softplus(sigma0))
        if shared_trunk:
            net = Mlp(name, layers, [mean_head, std_head], rng)
            self.mean_net = self.std_net = net
        else:
            self.mean_net = Mlp(f'{name}.mean', layers, [mean_head], rng)
            self.std_net = Mlp(f'{name}.std', layers, [std_head], rng)

    @classmethod
    def from_networks(cls, name: str, mean_net: Mlp,
                      std_net: Mlp) -> 'DistributionalCritic':
        """Wrap existing networks; the same net twice means a shared trunk."""
        critic = cls.__new__(cls)
        critic.name = name
        critic.shared_trunk = mean_net is std_net
        critic.mean_net, critic.std_net = mean_net, std_net
        return critic

    def posterior(self, tape: Tape, inputs, trainable: bool = True
                  ) -> Tuple[Var, Var]:
        if self.shared_trunk:
            heads = forward_heads(self.mean_net, inputs, tape, trainable)
            return heads['mean'], heads['std']
        return (forward_heads(self.mean_net, inputs, tape, trainable)['mean'],
                forward_heads(self.std_net, inputs, tape, trainable)['std'])

    def sigma(self, tape: Tape, inputs, trainable: bool = True) -> Var:
        return forward_heads(self.std_net, inputs, tape, trainable)['std']

    def networks(self) -> List[Mlp]:
        if self.shared_trunk:
            return [self.mean_net]
        return [self.mean_net, self.std_net]

    def copy(self, name: str) -> 'DistributionalCritic':
        if self.shared_trunk:
            net = self.mean_net.copy(name)
            return DistributionalCritic.from_networks(name, net, net)
        return DistributionalCritic.from_networks(
            name, self.mean_net.copy(f'{name}.mean'),
            self.std_net.copy(f'{name}.std'))


class ScalarCritic:
    """Point-estimate Q network of SAC and OAC."""

    def __init__(self, name: str, input_dim: int, hidden_sizes: Sequence[int],
                 rng: Optional[np.random.Generator] = None,
                 net: Optional[Mlp] = None) -> None:
        self.name = name
        if net is None:
            net = Mlp(name, [input_dim, *hidden_sizes], [Head('q', 1)], rng)
        self.net = net

    def value(self, tape: Tape, inputs, trainable: bool = True) -> Var:
        return forward(self.net, inputs, tape, trainable)

    def networks(self) -> List[Mlp]:
        return [self.net]

    def copy(self, name: str) -> 'ScalarCritic':
        return ScalarCritic(name, 0, (), net=self.net.copy(name))


class SquashedGaussianPolicy:
    """tanh(N(mean(s), exp(log_std(s))^2)) with the change-of-variable term."""

    def __init__(self, name: str, state_dim: int, action_dim: int,
                 hidden_sizes: Sequence[int],
                 rng: Optional[np.random.Generator] = None,
                 net: Optional[Mlp] = None) -> None:
        if net is None:
            net = Mlp(name, [state_dim, *hidden_sizes],
                      [Head('mean', action_dim), Head('log_std', action_dim)],
                      rng)
        self.net = net
        self.action_dim = action_dim

    @property
    def name(self) -> str:
        return self.net.name

    def distribution(self, tape: Tape, states, trainable: bool = True
                     ) -> Tuple[Var, Var]:
        heads = forward_heads(self.net, states, tape, trainable)
        return heads['mean'], tape.clip(heads['log_std'], LOG_STD_MIN,
                                        LOG_STD_MAX)

    def sample(self, tape: Tape, states, rng: np.random.Generator,
               trainable: bool = True) -> Tuple[Var, Var]:
        """Reparameterized action and its log-density, shape (N, 1)."""
        mean, log_std = self.distribution(tape, states, trainable)
        noise = rng.standard_normal(mean.shape)
        pre = mean + tape.exp(log_std) * noise
        action = tape.tanh(pre)
        gaussian = tape.sum_cols((-0.5 * noise * noise - HALF_LOG_2PI) - log_std)
        # log(1 - tanh(u)^2) written without cancellation.
        squash = tape.sum_cols(2.0 * ((LOG_2 - pre) - tape.softplus(-2.0 * pre)))
        return action, gaussian - squash

    def mean_action(self, states) -> np.ndarray:
        mean, _ = self.distribution(Tape(), states, trainable=False)
        return np.tanh(mean.value)

    def copy(self, name: str) -> 'SquashedGaussianPolicy':
        return SquashedGaussianPolicy(name, 0, self.action_dim, (),
                                      net=self.net.copy(name))


@dataclass(frozen=True)
class SigmaSnapshot:
    """Frozen std networks, one per critic, taken at an epoch boundary."""
    nets: Tuple[Mlp, ...]

    @classmethod
    def take(cls, critics: Sequence[DistributionalCritic]) -> 'SigmaSnapshot':
        return cls(tuple(c.std_net.copy(f'{c.std_net.name}.old')
                         for c in critics))

    def sigma(self, index: int, tape: Tape, inputs) -> Var:
        return forward_heads(self.nets[index], inputs, tape,
                             trainable=False)['std']


def min_sigma(critics: Sequence[DistributionalCritic],
              points: np.ndarray) -> np.ndarray:
    """Smallest critic std at each normalized point."""
    tape = Tape()
    return np.min([c.sigma(tape, points, trainable=False).value[:, 0]
                   for c in critics], axis=0)


# Losses.


def normalize_batch(spec: EnvSpec, batch: Batch) -> Batch:
    return Batch(normalize_state(spec, batch.states),
                 normalize_action(spec, batch.actions),
                 batch.rewards,
                 normalize_state(spec, batch.next_states),
                 batch.terminals)


def bootstrap_targets(rewards: np.ndarray, terminals: np.ndarray,
                      next_means: np.ndarray, next_stds: np.ndarray,
                      next_log_probs: np.ndarray, alpha: float,
                      gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Target posterior N(r + gamma * (mu' - alpha log pi'), (gamma sigma')^2).

    `next_means` and `next_stds` hold one row per target critic. The mean
    comes from the critic with the smallest mean at each sample and the std
    from that same critic. Terminal samples keep only the reward.
    """
    pick = np.argmin(next_means, axis=0)
    columns = np.arange(next_means.shape[1])
    alive = 1.0 - np.asarray(terminals, dtype=np.float64)
    soft_mean = next_means[pick, columns] - alpha * next_log_probs
    target_mean = rewards + gamma * alive * soft_mean
    target_std = gamma * alive * next_stds[pick, columns]
    return target_mean, target_std


def critic_targets(batch: Batch, target_critics: Sequence[DistributionalCritic],
                   target_policy: SquashedGaussianPolicy, alpha: float,
                   gamma: float, rng: np.random.Generator
                   ) -> Tuple[np.ndarray, np.ndarray]:
    """Detached bootstrap targets for a normalized batch."""
    tape = Tape()
    actions, log_probs = target_policy.sample(tape, batch.next_states, rng,
                                              trainable=False)
    inputs = tape.concat([tape.constant(batch.next_states), actions])
    means, stds = [], []
    for critic in target_critics:
        mu, sigma = critic.posterior(tape, inputs, trainable=False)
        means.append(mu.value[:, 0])
        stds.append(sigma.value[:, 0])
    return bootstrap_targets(batch.rewards, batch.terminals, np.stack(means),
                             np.stack(stds), log_probs.value[:, 0], alpha,
                             gamma)


def gaussian_w2_loss(tape: Tape, mu: Var, sigma: Var, target_mean: np.ndarray,
                     target_std: np.ndarray) -> Var:
    """Batch mean of W2^2 between N(mu, sigma^2) and the target Gaussians."""
    target_mean = np.asarray(target_mean, dtype=np.float64).reshape(-1, 1)
    target_std = np.asarray(target_std, dtype=np.float64).reshape(-1, 1)
    return tape.mean(tape.square(mu - target_mean)
                     + tape.square(sigma - target_std))


@finite_loss
def wac_critic_loss(tape: Tape, inputs, critics: Sequence[DistributionalCritic],
                    targets: Tuple[np.ndarray, np.ndarray]) -> Var:
    target_mean, target_std = targets
    loss = None
    for critic in critics:
        mu, sigma = critic.posterior(tape, inputs)
        term = gaussian_w2_loss(tape, mu, sigma, target_mean, target_std)
        loss = term if loss is None else loss + term
    return loss


@finite_loss
def regularized_critic_loss(tape: Tape, inputs, synthetic_points: np.ndarray,
                            critics: Sequence[DistributionalCritic],
                            snapshot: SigmaSnapshot, lam: float,
                            targets: Tuple[np.ndarray, np.ndarray]) -> Var:
    """Critic loss plus lam * mean (sigma - sigma_old)^2 on synthetic points."""
    loss = wac_critic_loss(tape, inputs, critics, targets)
    if lam == 0 or len(synthetic_points) == 0:
        return loss
    for index, critic in enumerate(critics):
        drift = critic.sigma(tape, synthetic_points) \
            - snapshot.sigma(index, tape, synthetic_points)
        loss = loss + lam * tape.mean(tape.square(drift))
    return loss


def _bound_objective(tape: Tape, states, policy: SquashedGaussianPolicy,
                     alpha: float, rng: np.random.Generator,
                     bound: Callable[[Var], Var]) -> Tuple[Var, np.ndarray]:
    actions, log_prob = policy.sample(tape, states, rng)
    inputs = tape.concat([tape.constant(states), actions])
    loss = tape.mean(alpha * log_prob - bound(inputs))
    return loss, np.array(log_prob.value)


def _optimistic_objective(tape, states, critics, policy, alpha, delta, rng):
    z = std_normal_quantile(delta)

    def bound(inputs: Var) -> Var:
        result = None
        for critic in critics:
            mu, sigma = critic.posterior(tape, inputs, trainable=False)
            upper = mu + z * sigma
            result = upper if result is None else tape.minimum(result, upper)
        return result
    return _bound_objective(tape, states, policy, alpha, rng, bound)


def _mean_objective(tape, states, critics, policy, alpha, rng):

    def bound(inputs: Var) -> Var:
        result = None
        for critic in critics:
            if isinstance(critic, ScalarCritic):
                mu = critic.value(tape, inputs, trainable=False)
            else:
                mu = forward_heads(critic.mean_net, inputs, tape,
                                   trainable=False)['mean']
            result = mu if result is None else tape.minimum(result, mu)
        return result
    return _bound_objective(tape, states, policy, alpha, rng, bound)


@finite_loss
def wac_actor_loss(tape: Tape, states, critics: Sequence[DistributionalCritic],
                   policy: SquashedGaussianPolicy, alpha: float, delta: float,
                   rng: np.random.Generator) -> Var:
    """mean(alpha log pi(a|s) - min_i U^delta_i(s, a)), a ~ pi reparameterized."""
    return _optimistic_objective(tape, states, critics, policy, alpha, delta,
                                 rng)[0]


@finite_loss
def target_actor_loss(tape: Tape, states,
                      critics: Sequence[DistributionalCritic],
                      target_policy: SquashedGaussianPolicy, alpha: float,
                      rng: np.random.Generator,
                      variant: str = VARIANTS.ME) -> Var:
    """Greedy objective of the mean-estimator target policy."""
    if variant != VARIANTS.ME:
        raise ValueError(
            f'{variant} has no separate target policy to train')
    return _mean_objective(tape, states, critics, target_policy, alpha, rng)[0]


@finite_loss
def sac_actor_loss(tape: Tape, states, critics: Sequence[ScalarCritic],
                   policy: SquashedGaussianPolicy, alpha: float,
                   rng: np.random.Generator) -> Var:
    return _mean_objective(tape, states, critics, policy, alpha, rng)[0]


def _sac_terms(tape, batch, critics, target_critics, policy, alpha, gamma, rng):
    target_tape = Tape()
    next_actions, next_log_probs = policy.sample(
        target_tape, batch.next_states, rng, trainable=False)
    next_inputs = target_tape.concat(
        [target_tape.constant(batch.next_states), next_actions])
    next_q = np.min([c.value(target_tape, next_inputs, trainable=False).value[:, 0]
                     for c in target_critics], axis=0)
    alive = 1.0 - np.asarray(batch.terminals, dtype=np.float64)
    target = batch.rewards + gamma * alive * (
        next_q - alpha * next_log_probs.value[:, 0])
    target = target.reshape(-1, 1)

    inputs = np.concatenate([batch.states, batch.actions], axis=1)
    critic_loss = None
    for critic in critics:
        term = tape.mean(tape.square(critic.value(tape, inputs) - target))
        critic_loss = term if critic_loss is None else critic_loss + term
    actor_loss, log_prob = _mean_objective(tape, batch.states, critics, policy,
                                           alpha, rng)
    return critic_loss, actor_loss, log_prob


@finite_loss
def sac_losses(tape: Tape, batch: Batch, critics: Sequence[ScalarCritic],
               target_critics: Sequence[ScalarCritic],
               policy: SquashedGaussianPolicy, alpha: float, gamma: float,
               rng: np.random.Generator) -> Tuple[Var, Var]:
    """Clipped double-Q soft Bellman error and the SAC actor loss."""
    critic_loss, actor_loss, _ = _sac_terms(
        tape, batch, critics, target_critics, policy, alpha, gamma, rng)
    return critic_loss, actor_loss


def oac_shifted_mean(state, critics: Sequence[ScalarCritic],
                     policy: SquashedGaussianPolicy, beta_ub: float,
                     delta_oac: float
                     ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pre-tanh policy mean, policy std and the optimistic shifted mean.

    The shift follows grad Q_UB at the policy mean, scaled so the shifted
    Gaussian sits at KL distance `delta_oac` from the policy.
    """
    tape = Tape()
    state = np.atleast_2d(np.asarray(state, dtype=np.float64))
    mean, log_std = policy.distribution(tape, state, trainable=False)
    pre = tape.variable('pre_tanh_mean', np.array(mean.value))
    inputs = tape.concat([tape.constant(state), tape.tanh(pre)])
    q1 = critics[0].value(tape, inputs, trainable=False)
    q2 = critics[1].value(tape, inputs, trainable=False)
    upper = (q1 + q2) * 0.5 + beta_ub * (tape.abs(q1 - q2) * 0.5)
    grad = backward(tape, tape.sum(upper))['pre_tanh_mean'][0]

    mu = np.array(mean.value[0])
    std = np.exp(log_std.value[0])
    variance = std * std
    norm = math.sqrt(float(grad @ (variance * grad)))
    if norm < 1e-12:
        return mu, std, mu.copy()
    shift = math.sqrt(2.0 * delta_oac) * variance * grad / norm
    return mu, std, mu + shift


def oac_exploration_action(state, critics: Sequence[ScalarCritic],
                           policy: SquashedGaussianPolicy, beta_ub: float,
                           delta_oac: float,
                           rng: np.random.Generator) -> np.ndarray:
    _, std, shifted = oac_shifted_mean(state, critics, policy, beta_ub,
                                       delta_oac)
    return np.tanh(shifted + std * rng.standard_normal(shifted.shape))


# Agents.


class Agent:
    """State and update rule shared by every actor-critic here."""
    algo = ''

    def __init__(self, spec: EnvSpec, config: SacConfig,
                 training: TrainingConfig, rng: np.random.Generator) -> None:
        self._log = logging.getLogger(self.__class__.__name__)
        self.spec = spec
        self.config = config
        self.training = training
        self.policy = SquashedGaussianPolicy(
            'policy', spec.state_dim, spec.action_dim, training.hidden_sizes,
            rng)
        self.log_alpha = np.array([math.log(config.alpha)])
        if config.target_entropy is None:
            self.target_entropy = -float(spec.action_dim)
        else:
            self.target_entropy = float(config.target_entropy)
        self.optimizers: Dict[str, AdamState] = {
            'policy': AdamState(lr=training.lr),
            'log_alpha': AdamState(lr=training.lr),
        }
        self.critics: list = []
        self.target_critics: list = []

    def _register_critics(self) -> None:
        for critic in self.critics:
            for net in critic.networks():
                self.optimizers[net.name] = AdamState(lr=self.training.lr)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    @property
    def bootstrap_policy(self) -> SquashedGaussianPolicy:
        return self.policy

    @property
    def eval_policy(self) -> SquashedGaussianPolicy:
        return self.policy

    def networks(self) -> Dict[str, Mlp]:
        nets = {self.policy.name: self.policy.net}
        for critic in [*self.critics, *self.target_critics]:
            for net in critic.networks():
                nets[net.name] = net
        return nets

    def explore_action(self, state, rng: np.random.Generator) -> np.ndarray:
        """Normalized exploration action in (-1, 1)^nA."""
        action, _ = self.policy.sample(
            Tape(), normalize_state(self.spec, state)[None, :], rng,
            trainable=False)
        return action.value[0]

    def eval_action(self, state) -> np.ndarray:
        return self.eval_policy.mean_action(
            normalize_state(self.spec, state)[None, :])[0]

    def begin_epoch(self) -> None:
        pass

    def sigma_statistics(self, buffer: ReplayBuffer, rng: np.random.Generator,
                         n: int = 1000) -> Tuple[float, float]:
        return math.nan, math.nan

    def update(self, batch: Batch, rng: np.random.Generator) -> Dict[str, float]:
        raise NotImplementedError

    def _apply(self, grads: Dict[str, np.ndarray], nets: Sequence[Mlp]) -> None:
        for net in nets:
            adam_step(net.named_parameters(), grads, self.optimizers[net.name])

    def _update_alpha(self, log_prob: np.ndarray) -> None:
        if self.config.alpha_mode != ALPHA_MODES.AUTO:
            return
        # d/d log_alpha of -log_alpha * (log pi + target_entropy).
        grad = -float(np.mean(log_prob + self.target_entropy))
        adam_step({'log_alpha': self.log_alpha}, {'log_alpha': np.array([grad])},
                  self.optimizers['log_alpha'])

    def _soft_update_targets(self) -> None:
        for critic, target in zip(self.critics, self.target_critics):
            for online_net, target_net in zip(critic.networks(),
                                              target.networks()):
                soft_update(target_net, online_net, self.config.tau)


class WacAgent(Agent):
    """Wasserstein actor-critic with an optimistic exploration policy."""

    def __init__(self, spec: EnvSpec, config: WacConfig,
                 training: TrainingConfig, rng: np.random.Generator) -> None:
        super().__init__(spec, config, training, rng)
        self.algo = ALGOS.OE_WAC if config.variant == VARIANTS.OE \
            else ALGOS.ME_WAC
        bounds = ValueBounds.from_rewards(spec.r_min, spec.r_max, config.gamma,
                                          spec.episodic)
        self.sigma0 = prior_std(bounds)
        if not self.sigma0 > 0:
            raise ConfigError(
                f'{spec.name}: value range [{bounds.q_min}, {bounds.q_max}] '
                'is empty, the prior std would be 0')
        self.critics = [
            DistributionalCritic(f'critic{i}', spec.input_dim,
                                 training.hidden_sizes, self.sigma0, rng,
                                 config.shared_trunk, bounds.midpoint)
            for i in (1, 2)]
        self.target_critics = [c.copy(f'{c.name}.target') for c in self.critics]
        self._register_critics()
        self.target_policy: Optional[SquashedGaussianPolicy] = None
        if config.variant == VARIANTS.ME:
            self.target_policy = self.policy.copy('target_policy')
            self.optimizers['target_policy'] = AdamState(lr=training.lr)
        self.snapshot = SigmaSnapshot.take(self.critics)

    @property
    def bootstrap_policy(self) -> SquashedGaussianPolicy:
        return self.target_policy or self.policy

    @property
    def eval_policy(self) -> SquashedGaussianPolicy:
        return self.target_policy or self.policy

    def networks(self) -> Dict[str, Mlp]:
        nets = super().networks()
        if self.target_policy is not None:
            nets[self.target_policy.name] = self.target_policy.net
        return nets

    def begin_epoch(self) -> None:
        # Runs after exploration, which never touches the critics, so this is
        # the sigma the epoch started with.
        self.snapshot = SigmaSnapshot.take(self.critics)

    def sigma_statistics(self, buffer, rng, n=1000):
        if len(buffer) == 0:
            return math.nan, math.nan
        visited = normalize_batch(self.spec, buffer.sample_batch(n, rng))
        visited_points = np.concatenate([visited.states, visited.actions], axis=1)
        synthetic_points = synthetic_batch(self.spec, n, rng)
        return (float(min_sigma(self.critics, visited_points).mean()),
                float(min_sigma(self.critics, synthetic_points).mean()))

    def update(self, batch, rng):
        config = self.config
        batch = normalize_batch(self.spec, batch)
        inputs = np.concatenate([batch.states, batch.actions], axis=1)
        targets = critic_targets(batch, self.target_critics,
                                 self.bootstrap_policy, self.alpha,
                                 config.gamma, rng)
        synthetic = synthetic_batch(
            self.spec, synthetic_count(config.rho, len(batch)), rng)

        tape = Tape()
        critic_loss = regularized_critic_loss(
            tape, inputs, synthetic, self.critics, self.snapshot, config.lam,
            targets)
        self._apply(backward(tape, critic_loss),
                    [net for c in self.critics for net in c.networks()])

        tape = Tape()
        actor_loss, log_prob = _optimistic_objective(
            tape, batch.states, self.critics, self.policy, self.alpha,
            config.delta, rng)
        self._apply(backward(tape, actor_loss), [self.policy.net])
        self._update_alpha(log_prob)
        self._soft_update_targets()

        losses = {'critic_loss': float(critic_loss.value),
                  'actor_loss': float(actor_loss.value)}
        if self.target_policy is not None:
            tape = Tape()
            loss = target_actor_loss(tape, batch.states, self.critics,
                                     self.target_policy, self.alpha, rng,
                                     config.variant)
            self._apply(backward(tape, loss), [self.target_policy.net])
            losses['target_actor_loss'] = float(loss.value)
        return losses


class SacAgent(Agent):
    algo = ALGOS.SAC

    def __init__(self, spec: EnvSpec, config: SacConfig,
                 training: TrainingConfig, rng: np.random.Generator) -> None:
        super().__init__(spec, config, training, rng)
        self.critics = [ScalarCritic(f'critic{i}', spec.input_dim,
                                     training.hidden_sizes, rng)
                        for i in (1, 2)]
        self.target_critics = [c.copy(f'{c.name}.target') for c in self.critics]
        self._register_critics()

    def update(self, batch, rng):
        batch = normalize_batch(self.spec, batch)
        tape = Tape()
        critic_loss, actor_loss, log_prob = _sac_terms(
            tape, batch, self.critics, self.target_critics, self.policy,
            self.alpha, self.config.gamma, rng)
        # Both gradients are taken before either network moves.
        critic_grads = backward(tape, critic_loss)
        actor_grads = backward(tape, actor_loss)
        self._apply(critic_grads, [c.net for c in self.critics])
        self._apply(actor_grads, [self.policy.net])
        self._update_alpha(log_prob)
        self._soft_update_targets()
        return {'critic_loss': float(critic_loss.value),
                'actor_loss': float(actor_loss.value)}


class OacAgent(SacAgent):
    """SAC updates; exploration moves along the critics' upper bound."""
    algo = ALGOS.OAC

    def explore_action(self, state, rng):
        return oac_exploration_action(
            normalize_state(self.spec, state), self.critics, self.policy,
            self.config.beta_ub, self.config.delta_oac, rng)


def make_agent(algo: str, spec: EnvSpec, rng: np.random.Generator,
               config: Optional[SacConfig] = None,
               training: Optional[TrainingConfig] = None) -> Agent:
    training = training or TrainingConfig()
    if algo in ALGOS.WAC:
        variant = VARIANTS.OE if algo == ALGOS.OE_WAC else VARIANTS.ME
        config = config or WacConfig(variant=variant)
        if not isinstance(config, WacConfig) or config.variant != variant:
            raise ConfigError(f'{algo} needs a WacConfig with variant {variant}')
        return WacAgent(spec, config, training, rng)
    if algo == ALGOS.SAC:
        return SacAgent(spec, config or SacConfig(), training, rng)
    if algo == ALGOS.OAC:
        config = config or OacConfig()
        if not isinstance(config, OacConfig):
            raise ConfigError('oac needs an OacConfig')
        return OacAgent(spec, config, training, rng)
    raise ConfigError(f'Unknown algorithm {algo!r}, expected one of {ALGOS.ALL}')


# Training loop.


@dataclass
class EpochMetrics:
    # Returns of exploration episodes that ended during this epoch.
    returns: List[float] = field(default_factory=list)
    episodes_completed: int = 0
    critic_loss: float = math.nan
    actor_loss: float = math.nan
    alpha: float = math.nan
    sigma_visited_mean: float = math.nan
    sigma_synthetic_mean: float = math.nan


@dataclass
class EvalResult:
    returns: List[float]
    episodes_completed: int


def _checked_step(env: Environment, action: np.ndarray,
                  rng: np.random.Generator):
    try:
        return env.step(action, rng)
    except EnvironmentFaultError:
        raise
    except Exception as error:
        raise EnvironmentFaultError(
            f'{env.spec.name} failed at step {env.t} with action {action}: '
            f'{error}') from error


def train_epoch(agent: Agent, env: Environment, buffer: ReplayBuffer,
                rng: np.random.Generator, grid=None) -> EpochMetrics:
    """Explore, snapshot the critics' std, then run the gradient iterations."""
    training = agent.training
    metrics = EpochMetrics()
    for _ in range(training.n_explore):
        if env.done:
            env.reset(rng)
        state = env.state.copy()
        action = denormalize_action(agent.spec, agent.explore_action(state, rng))
        transition = _checked_step(env, action, rng)
        buffer.push(transition)
        if grid is not None:
            grid.record_visit(normalize(agent.spec, transition.state,
                                        transition.action))
        if env.done:
            metrics.returns.append(env.episode_return)
            metrics.episodes_completed += int(transition.terminal)

    agent.begin_epoch()
    critic_losses, actor_losses = [], []
    for _ in range(training.n_train):
        losses = agent.update(buffer.sample_batch(training.batch_size, rng), rng)
        critic_losses.append(losses['critic_loss'])
        actor_losses.append(losses['actor_loss'])
    if critic_losses:
        metrics.critic_loss = float(np.mean(critic_losses))
        metrics.actor_loss = float(np.mean(actor_losses))
    metrics.alpha = agent.alpha
    metrics.sigma_visited_mean, metrics.sigma_synthetic_mean = \
        agent.sigma_statistics(buffer, rng)
    log.debug(f'{agent.algo} on {agent.spec.name}: critic {metrics.critic_loss}'
              f', actor {metrics.actor_loss}, alpha {metrics.alpha}')
    return metrics


def evaluate(agent: Agent, env: Environment, rng: np.random.Generator,
             steps: int = DEFAULTS.EVAL_STEPS) -> EvalResult:
    """Run the evaluation policy for `steps` interactions on a fresh episode."""
    returns, completed = [], 0
    env.reset(rng)
    for _ in range(steps):
        action = denormalize_action(agent.spec, agent.eval_action(env.state))
        transition = _checked_step(env, action, rng)
        if env.done:
            returns.append(env.episode_return)
            completed += int(transition.terminal)
            env.reset(rng)
    return EvalResult(returns, completed)


# Checkpoints.


def save_checkpoint(agent: Agent, path: str,
                    rng: Optional[np.random.Generator] = None) -> None:
    """Write parameters, Adam moments, the sigma snapshot, alpha and RNG
    state to one .npz file."""
    entries, arrays = [], {}

    def put(kind: str, owner: str, name: str, value: np.ndarray) -> None:
        arrays[f'a{len(entries)}'] = value
        entries.append([kind, owner, name])

    for owner, net in agent.networks().items():
        for name, value in net.named_parameters().items():
            put('param', owner, name, value)
    for owner, state in agent.optimizers.items():
        for name, value in state.first_moment.items():
            put('adam_m', owner, name, value)
        for name, value in state.second_moment.items():
            put('adam_v', owner, name, value)
    snapshot = getattr(agent, 'snapshot', None)
    if snapshot is not None:
        for index, net in enumerate(snapshot.nets):
            for name, value in net.named_parameters().items():
                put('snapshot', str(index), name, value)
    put('log_alpha', 'agent', 'log_alpha', agent.log_alpha)
    meta = {
        'version': CHECKPOINT_VERSION,
        'algo': agent.algo,
        'entries': entries,
        'adam_steps': {o: s.step_count for o, s in agent.optimizers.items()},
        'rng': rng.bit_generator.state if rng is not None else None,
    }
    with open(path, 'wb') as file:
        np.savez(file, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(agent: Agent, path: str) -> Optional[np.random.Generator]:
    """Restore `agent` in place; returns the saved generator, if any."""
    with np.load(path) as data:
        meta = json.loads(str(data['meta']))
        if meta.get('version') != CHECKPOINT_VERSION:
            raise ConfigError(
                f'{path}: checkpoint version {meta.get("version")} is not '
                f'{CHECKPOINT_VERSION}')
        if meta['algo'] != agent.algo:
            raise ConfigError(
                f'{path}: checkpoint of {meta["algo"]} cannot load into '
                f'{agent.algo}')
        nets = agent.networks()
        for index, (kind, owner, name) in enumerate(meta['entries']):
            value = np.array(data[f'a{index}'])
            if kind == 'param':
                nets[owner].load_parameters({name: value})
            elif kind == 'adam_m':
                agent.optimizers[owner].first_moment[name] = value
            elif kind == 'adam_v':
                agent.optimizers[owner].second_moment[name] = value
            elif kind == 'snapshot':
                agent.snapshot.nets[int(owner)].load_parameters({name: value})
            elif kind == 'log_alpha':
                agent.log_alpha[...] = value
    for owner, steps in meta['adam_steps'].items():
        agent.optimizers[owner].step_count = int(steps)
    if meta['rng'] is None:
        return None
    rng = np.random.default_rng()
    rng.bit_generator.state = meta['rng']
    return rng

"""Closed-form and tabular verification suite behind `oracle-check`."""
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm

from .agents import (DistributionalCritic, ScalarCritic, SigmaSnapshot,
                     SquashedGaussianPolicy, gaussian_w2_loss,
                     regularized_critic_loss, sac_actor_loss, wac_actor_loss,
                     wac_critic_loss)
from .diff_engine import Head, Mlp, Tape, backward, check_gradients
from .envs import riverswim_direction_probs
from .gaussq import (GaussianPosterior, ValueBounds, barycenter_gaussian,
                     w2_gaussian)
from .tabular_oracle import PosteriorTable, wtd_update

__all__ = ['OracleResult', 'oracle_check', 'tabular_critic', 'sgd_wtd_step']


@dataclass
class OracleResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def _critic_pair(rng, input_dim=3, hidden=(6,)):
    return [DistributionalCritic(f'critic{i}', input_dim, hidden, 2.0, rng)
            for i in (1, 2)]


def gradient_error(rng: np.random.Generator, trials: int = 5) -> float:
    """Worst tape-vs-central-difference gap on the regularized critic loss."""
    worst = 0.0
    for _ in range(trials):
        critics = _critic_pair(rng)
        snapshot = SigmaSnapshot.take(critics)
        for critic in critics:
            for net in critic.networks():
                for value in net.params.values():
                    value += rng.normal(0.0, 0.05, value.shape)
        inputs = rng.uniform(-1, 1, (4, 3))
        synthetic = rng.uniform(-1, 1, (3, 3))
        targets = (rng.normal(size=4), rng.uniform(0.5, 2.0, 4))
        params = {}
        for critic in critics:
            for net in critic.networks():
                params.update(net.named_parameters())
        worst = max(worst, check_gradients(
            lambda tape: regularized_critic_loss(
                tape, inputs, synthetic, critics, snapshot, 0.6, targets),
            params))
    return worst


def w2_integral_error(rng: np.random.Generator, trials: int = 100) -> float:
    """Closed-form W2 against the quantile-coupling integral."""
    worst = 0.0
    for _ in range(trials):
        p = GaussianPosterior(rng.normal(0, 3), rng.uniform(0, 3))
        q = GaussianPosterior(rng.normal(0, 3), rng.uniform(0, 3))
        # Quantiles couple as mean + std * z with z ~ N(0, 1).
        value, _ = integrate.quad(
            lambda z: ((p.mean - q.mean) + (p.std - q.std) * z) ** 2
            * norm.pdf(z), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
        worst = max(worst, abs(math.sqrt(value) - w2_gaussian(p, q)))
    return worst


def barycenter_error(rng: np.random.Generator, trials: int = 100) -> float:
    """Closed-form barycenter against a numerical minimizer."""
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(2, 5))
        weights = rng.dirichlet(np.ones(k))
        weights /= weights.sum()
        items = [(float(w), GaussianPosterior(rng.normal(0, 3),
                                              rng.uniform(0, 3)))
                 for w in weights]

        def objective(x: np.ndarray) -> float:
            return sum(w * w2_gaussian(GaussianPosterior(x[0], abs(x[1])), p) ** 2
                       for w, p in items)
        found = optimize.minimize(objective, np.array([0.0, 1.0]),
                                  method='Nelder-Mead',
                                  options={'xatol': 1e-7, 'fatol': 1e-12})
        closed = barycenter_gaussian(items)
        worst = max(worst, abs(found.x[0] - closed.mean),
                    abs(abs(found.x[1]) - closed.std))
    return worst


def tabular_critic(means: np.ndarray, stds: np.ndarray) -> DistributionalCritic:
    """One-hot linear critic whose weights are the (s, a) posterior table."""
    n = means.size
    mean_net = Mlp('tabular.mean', [n], [Head('mean', 1, bias=False)],
                   np.random.default_rng(0))
    std_net = Mlp('tabular.std', [n], [Head('std', 1, bias=False)],
                  np.random.default_rng(0))
    mean_net.params['mean.w'][:, 0] = means.reshape(-1)
    std_net.params['std.w'][:, 0] = stds.reshape(-1)
    return DistributionalCritic.from_networks('tabular', mean_net, std_net)


def sgd_wtd_step(critic: DistributionalCritic, index: int, n: int,
                 target: GaussianPosterior, alpha_t: float) -> None:
    """Plain gradient step of size alpha_t / 2 on the W2^2 loss of one sample."""
    features = np.zeros((1, n))
    features[0, index] = 1.0
    tape = Tape()
    mu, sigma = critic.posterior(tape, features)
    loss = gaussian_w2_loss(tape, mu, sigma, np.array([target.mean]),
                            np.array([target.std]))
    grads = backward(tape, loss)
    for net in critic.networks():
        for key, value in net.named_parameters().items():
            value -= 0.5 * alpha_t * grads[key]


def tabular_equivalence_error(rng: np.random.Generator,
                              transitions: int = 1000) -> float:
    """Gradient steps on a one-hot critic against the closed-form WTD update."""
    n_states, n_actions, gamma = 4, 2, 0.9
    table = PosteriorTable(n_states, n_actions, ValueBounds(-5.0, 5.0))
    table.means[...] = rng.normal(0, 2, table.means.shape)
    table.stds[...] = rng.uniform(0.1, 3.0, table.stds.shape)
    critic = tabular_critic(table.means.copy(), table.stds.copy())
    worst = 0.0
    for _ in range(transitions):
        s, s_next = rng.integers(n_states, size=2)
        a, a_next = rng.integers(n_actions, size=2)
        r, alpha_t = float(rng.normal()), float(rng.uniform())
        following = table.posterior(s_next, a_next)
        target = GaussianPosterior(r + gamma * following.mean,
                                   gamma * following.std)
        sgd_wtd_step(critic, s * n_actions + a, n_states * n_actions, target,
                     alpha_t)
        wtd_update(table, s, a, r, s_next, a_next, alpha_t, gamma)
        means = critic.mean_net.params['mean.w'][:, 0]
        stds = critic.std_net.params['std.w'][:, 0]
        worst = max(worst, float(np.abs(means - table.means.reshape(-1)).max()),
                    float(np.abs(stds - table.stds.reshape(-1)).max()))
        # Keep both sides on the exact same table.
        table.means[...] = means.reshape(table.means.shape)
        table.stds[...] = stds.reshape(table.stds.shape)
    return worst


def sac_reduction_error(rng: np.random.Generator, trials: int = 10) -> float:
    """WAC actor at delta=0.5 against SAC on the same mean networks, plus
    the unregularized critic loss against the plain one."""
    worst = 0.0
    for trial in range(trials):
        critics = _critic_pair(rng)
        scalars = [ScalarCritic(c.name, 0, (), net=c.mean_net) for c in critics]
        policy = SquashedGaussianPolicy('policy', 2, 1, (6,), rng)
        states = rng.uniform(-1, 1, (8, 2))
        wac = wac_actor_loss(Tape(), states, critics, policy, 0.2, 0.5,
                             np.random.default_rng(trial))
        sac = sac_actor_loss(Tape(), states, scalars, policy, 0.2,
                             np.random.default_rng(trial))
        worst = max(worst, abs(float(wac.value) - float(sac.value)))

        inputs = rng.uniform(-1, 1, (8, 3))
        targets = (rng.normal(size=8), rng.uniform(0, 2, 8))
        plain = wac_critic_loss(Tape(), inputs, critics, targets)
        regularized = regularized_critic_loss(
            Tape(), inputs, rng.uniform(-1, 1, (5, 3)), critics,
            SigmaSnapshot.take(critics), 0.0, targets)
        worst = max(worst, abs(float(plain.value) - float(regularized.value)))
    return worst


def riverswim_error(rng: np.random.Generator) -> float:
    expected = {-1.0: (1.0, 0.0, 0.0), 0.0: (0.1, 0.9, 0.0),
                1.0: (0.1, 0.6, 0.3)}
    return max(abs(p - e)
               for action, probs in expected.items()
               for p, e in zip(riverswim_direction_probs(action), probs))


CHECKS: List[Tuple[str, Callable[[np.random.Generator], float], float]] = [
    ('gradient check', gradient_error, 1e-4),
    ('w2 closed form', w2_integral_error, 1e-6),
    ('barycenter', barycenter_error, 1e-3),
    ('tabular equivalence', tabular_equivalence_error, 1e-10),
    ('sac reduction', sac_reduction_error, 1e-12),
    ('riverswim probabilities', riverswim_error, 1e-12),
]


def oracle_check(seed: int = 0) -> List[OracleResult]:
    results = []
    for name, check, tolerance in CHECKS:
        results.append(OracleResult(name, check(np.random.default_rng(seed)),
                                    tolerance))
    return results

"""Exploration agents built on Double DQN.

``VBEAgent`` keeps an ensemble of random action-value functions (RQFs): frozen
random targets ``f*_i`` and trainable predictors ``f_i``. Each predictor is
trained by TD on the reward that makes its target the exact fixed point,

    r_i = f*_i(s, a) - gamma * f*_i(s', a'),

and the value bonus is ``max_i |f_i(s, a) - f*_i(s, a)|``. The agent acts
greedily in ``q + c * bonus``. The other agents are the baselines: VBE with a
supervised ensemble, Bootstrapped DQN with additive priors (and its k=1 case
DQN-P), value-bonus versions of RND and ACB, and epsilon-greedy Double DQN.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .approx import MLP, FeatureMap, LinearStack, make_optimizer
from .core import (AgentConfig, QLearner, ReplayBuffer, Transition, argmax_random,
                   ddqn_target, ddqn_update, make_net, select_action_epsgreedy,
                   select_action_optimistic, td_step)
from .errors import InvalidParameter

AGENT_NAMES = ("vbe", "vbe_sl", "bdqn", "dqn_p", "rnd", "acb", "ddqn_eps")


# ---------------------------------------------------------------------------
# RQF ensemble
# ---------------------------------------------------------------------------


def vbe_bonus(predicted: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Max absolute gap over the leading ensemble axis."""
    return np.max(np.abs(np.asarray(predicted) - np.asarray(targets)), axis=0)


class RQFEnsemble:
    """k frozen random targets, k predictors, and the predictors' frozen copies.

    Targets come from the same constructor (same architecture and init family)
    as the predictors but are drawn independently, so initial bonuses are
    nonzero.
    """

    def __init__(self, make, k: int, cfg: AgentConfig):
        self.targets: list[MLP] = [make() for _ in range(k)]
        nets = [make() for _ in range(k)]
        self._stacks = None
        if len(nets[0].weights) == 1:
            self._stacks = (LinearStack(nets), LinearStack(self.targets))
        self.predictors: list[QLearner] = [QLearner(n, cfg) for n in nets]

    @property
    def k(self) -> int:
        return len(self.targets)

    def gaps(self, phi: np.ndarray) -> np.ndarray:
        """Signed predictor-minus-target values, shape (k, batch, actions)."""
        if self._stacks is not None:
            return self._stacks[0](phi) - self._stacks[1](phi)
        return np.stack([p.net(phi) - t(phi) for p, t in zip(self.predictors, self.targets)])

    def bonus(self, phi: np.ndarray) -> np.ndarray:
        return np.abs(self.gaps(phi)).max(axis=0)

    def sync(self) -> None:
        for p in self.predictors:
            p.sync()


def rqf_reward(ens: RQFEnsemble, i: int, phi, a, phi_next, discount, a_next) -> np.ndarray:
    """``f*_i(s, a) - discount * f*_i(s', a')`` for each transition in a batch."""
    if not 0 <= i < ens.k:
        raise InvalidParameter(f"ensemble index {i} out of range for k={ens.k}")
    target = ens.targets[i]
    rows = np.arange(len(a))
    return target(phi)[rows, a] - np.asarray(discount) * target(phi_next)[rows, a_next]


def rqf_update(ens: RQFEnsemble, i: int, phi, a, phi_next, discount, a_next) -> float:
    """TD step of predictor i; ``a_next`` is chosen by the main value function.

    The bootstrap uses predictor i's own frozen copy at ``(s', a_next)``.
    """
    r_i = rqf_reward(ens, i, phi, a, phi_next, discount, a_next)
    pred = ens.predictors[i]
    rows = np.arange(len(a))
    targets = r_i + np.asarray(discount) * pred.frozen(phi_next)[rows, a_next]
    return td_step(pred.net, pred.opt, phi, a, targets)


def vbe_sl_update(ens: RQFEnsemble, i: int, phi, a) -> float:
    """Regress predictor i onto target i at the batch's (s, a); loss ``(f* - f)**2``."""
    if not 0 <= i < ens.k:
        raise InvalidParameter(f"ensemble index {i} out of range for k={ens.k}")
    rows = np.arange(len(a))
    targets = ens.targets[i](phi)[rows, a]
    pred = ens.predictors[i]
    return td_step(pred.net, pred.opt, phi, a, targets, scale=1.0)


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------


class Agent:
    """Double DQN with a replay buffer; subclasses choose actions and extra learning."""

    name = "agent"

    def __init__(self, cfg: AgentConfig, features: FeatureMap, n_actions: int, regime: str,
                 init_rng: np.random.Generator, rng: np.random.Generator):
        self.cfg = cfg
        self.features = features
        self.n_actions = n_actions
        self.regime = regime
        self.init_rng = init_rng
        self.rng = rng
        self.buffer = ReplayBuffer(cfg.buffer_size, features.input_dim, features)
        self.q = QLearner(self._net(init=cfg.value_init), cfg)
        self.steps = 0
        self.updates = 0

    def _net(self, n_out: int | None = None, init: str = "default") -> MLP:
        return make_net(self.regime, self.features, self.n_actions, self.init_rng, self.cfg, n_out,
                        init)

    def _batch(self):
        b = self.buffer.sample(self.cfg.batch_size, self.rng)
        return b, b.phi, b.phi_next

    def begin_episode(self) -> None:
        pass

    def bonus(self, phi: np.ndarray) -> np.ndarray:
        return np.zeros((len(phi), self.n_actions))

    def act(self, obs) -> int:
        raise NotImplementedError

    def observe(self, t: Transition) -> None:
        """Store one transition, learn from replay, and sync target networks."""
        self.buffer.add(t)
        self.learn()
        self.steps += 1
        if self.steps % self.cfg.tau == 0:
            self.sync()

    def learn(self) -> None:
        b, phi, phi_next = self._batch()
        ddqn_update(self.q, phi, b.a, b.r, phi_next, b.discount, self.rng,
                    self._target_select(phi_next))
        self.updates += 1

    def _target_select(self, phi_next):
        if self.cfg.target_policy == "optimistic":
            return self.q.net(phi_next) + self.cfg.c * self.bonus(phi_next)
        return None

    def sync(self) -> None:
        self.q.sync()


class DDQNEpsAgent(Agent):
    name = "ddqn_eps"

    def act(self, obs) -> int:
        return select_action_epsgreedy(self.q.net(self.features.encode(obs)), self.cfg.epsilon, self.rng)


class VBEAgent(Agent):
    """Double DQN acting greedily in ``q + c * max_i |f_i - f*_i|``.

    Each step makes one Double DQN update and one update of a uniformly chosen
    predictor, each on its own mini-batch. ``supervised=True`` gives VBE-SL,
    which regresses predictors directly onto their targets.
    """

    name = "vbe"

    def __init__(self, *args, supervised: bool = False, **kwargs):
        super().__init__(*args, **kwargs)
        self.supervised = supervised
        self.name = "vbe_sl" if supervised else "vbe"
        self.ensemble = RQFEnsemble(self._net, self.cfg.k, self.cfg)
        self.rqf_counts = np.zeros(self.cfg.k, dtype=np.int64)

    def bonus(self, phi):
        return self.ensemble.bonus(phi)

    def act(self, obs) -> int:
        phi = self.features.encode(obs)
        return select_action_optimistic(self.q.net(phi), self.bonus(phi), self.cfg.c, self.rng)

    def learn(self) -> None:
        super().learn()
        i = int(self.rng.integers(self.cfg.k))
        self.rqf_counts[i] += 1
        b, phi, phi_next = self._batch()
        if self.supervised:
            vbe_sl_update(self.ensemble, i, phi, b.a)
            return
        select = self._target_select(phi_next)
        a_next = argmax_random(self.q.net(phi_next) if select is None else select, self.rng)
        rqf_update(self.ensemble, i, phi, b.a, phi_next, b.discount, a_next)

    def sync(self) -> None:
        super().sync()
        self.ensemble.sync()


class BDQNAgent(Agent):
    """Ensemble of ``f_j + c * p_j`` with frozen random priors ``p_j``.

    One head is drawn uniformly per episode and followed greedily. Every head
    is trained on the same mini-batch (no data bootstrapping).
    """

    name = "bdqn"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # Head 0 reuses the base learner so DQN-P is literally BDQN with one head.
        self.heads = [self.q] + [QLearner(self._net(), self.cfg) for _ in range(self.cfg.k - 1)]
        self.priors = [self._net() for _ in range(self.cfg.k)]
        self.active = 0
        self.head_counts = np.zeros(self.cfg.k, dtype=np.int64)

    def composed(self, j: int, phi, frozen: bool = False) -> np.ndarray:
        net = self.heads[j].frozen if frozen else self.heads[j].net
        return net(phi) + self.cfg.c * self.priors[j](phi)

    def begin_episode(self) -> None:
        self.active = bdqn_episode_policy(self.cfg.k, self.rng)
        self.head_counts[self.active] += 1

    def act(self, obs) -> int:
        phi = self.features.encode(obs)
        return int(argmax_random(self.composed(self.active, phi), self.rng)[0])

    def learn(self) -> None:
        b, phi, phi_next = self._batch()
        bdqn_update(self, phi, b.a, b.r, phi_next, b.discount)
        self.updates += 1

    def sync(self) -> None:
        for h in self.heads:
            h.sync()


def bdqn_episode_policy(k: int, rng: np.random.Generator) -> int:
    if k < 1:
        raise InvalidParameter("need at least one head")
    return int(rng.integers(k))


def bdqn_update(agent: BDQNAgent, phi, a, r, phi_next, discount) -> None:
    rows = np.arange(len(a))
    c = agent.cfg.c
    for j, head in enumerate(agent.heads):
        prior_next = agent.priors[j](phi_next)
        targets = ddqn_target(head.net(phi_next) + c * prior_next,
                              head.frozen(phi_next) + c * prior_next, r, discount, agent.rng)
        # Only f_j is learned: regress f_j(s, a) onto target - c * p_j(s, a).
        td_step(head.net, head.opt, phi, a, targets - c * agent.priors[j](phi)[rows, a])


def dqnp_agent(cfg: AgentConfig, *args, **kwargs) -> BDQNAgent:
    """DQN with an additive prior: BDQN with a single head."""
    agent = BDQNAgent(replace(cfg, k=1), *args, **kwargs)
    agent.name = "dqn_p"
    return agent


class _IntrinsicAgent(Agent):
    """Learns a second, non-episodic value function on intrinsic rewards.

    That function's values are the behavioral bonus.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.head = QLearner(self._net(), self.cfg)

    def bonus(self, phi):
        return self.head.net(phi)

    def act(self, obs) -> int:
        phi = self.features.encode(obs)
        return select_action_optimistic(self.q.net(phi), self.bonus(phi), self.cfg.c, self.rng)

    def intrinsic_reward(self, phi, a, phi_next) -> np.ndarray:
        raise NotImplementedError

    def train_bonus_model(self, phi, a, phi_next) -> None:
        raise NotImplementedError

    def learn(self) -> None:
        super().learn()
        b, phi, phi_next = self._batch()
        r_int = self.intrinsic_reward(phi, b.a, phi_next)
        self.train_bonus_model(phi, b.a, phi_next)
        # Non-episodic: the intrinsic value bootstraps through episode ends.
        discount = np.full(len(b.a), self.cfg.discount)
        select = self._target_select(phi_next)
        ddqn_update(self.head, phi, b.a, r_int, phi_next, discount, self.rng, select)

    def sync(self) -> None:
        super().sync()
        self.head.sync()


class RNDAgent(_IntrinsicAgent):
    name = "rnd"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.rnd_target = self._net(self.cfg.rnd_embedding)
        self.rnd_predictor = self._net(self.cfg.rnd_embedding)
        self.rnd_opt = make_optimizer(self.cfg.optimizer, self.rnd_predictor.params,
                                      self.cfg.learning_rate)

    def intrinsic_reward(self, phi, a, phi_next):
        return rnd_bonus(self.rnd_target, self.rnd_predictor, phi_next)

    def train_bonus_model(self, phi, a, phi_next) -> None:
        rnd_regress(self.rnd_target, self.rnd_predictor, self.rnd_opt, phi_next)


def rnd_bonus(target: MLP, predictor: MLP, phi) -> np.ndarray:
    """Squared distance between predictor and frozen-target embeddings."""
    diff = predictor(phi) - target(phi)
    return np.sum(diff * diff, axis=-1)


def rnd_regress(target: MLP, predictor: MLP, opt, phi) -> float:
    diff = predictor.forward(phi) - target(phi)
    opt.step(predictor.backward(2.0 * diff / len(diff)))
    return float(np.mean(np.sum(diff * diff, axis=-1)))


class ACBAgent(_IntrinsicAgent):
    """Intrinsic reward is the max error over k regressors of random per-action targets."""

    name = "acb"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.acb_targets = [self._net() for _ in range(self.cfg.k)]
        self.acb_predictors = [QLearner(self._net(), self.cfg) for _ in range(self.cfg.k)]

    def intrinsic_reward(self, phi, a, phi_next):
        return acb_bonus(self.acb_targets, [p.net for p in self.acb_predictors], phi, a)

    def train_bonus_model(self, phi, a, phi_next) -> None:
        rows = np.arange(len(a))
        for target, pred in zip(self.acb_targets, self.acb_predictors):
            td_step(pred.net, pred.opt, phi, a, target(phi)[rows, a], scale=1.0)


def acb_bonus(targets: list[MLP], predictors: list[MLP], phi, a) -> np.ndarray:
    a = np.atleast_1d(a)
    rows = np.arange(len(a))
    errs = [np.abs(p(phi)[rows, a] - t(phi)[rows, a]) for t, p in zip(targets, predictors)]
    return np.max(errs, axis=0)


def make_agent(name: str, cfg: AgentConfig, features: FeatureMap, n_actions: int, regime: str,
               init_rng: np.random.Generator, rng: np.random.Generator) -> Agent:
    args = (cfg, features, n_actions, regime, init_rng, rng)
    if name == "vbe":
        return VBEAgent(*args)
    if name == "vbe_sl":
        return VBEAgent(*args, supervised=True)
    if name == "bdqn":
        return BDQNAgent(*args)
    if name == "dqn_p":
        return dqnp_agent(*args)
    if name == "rnd":
        return RNDAgent(*args)
    if name == "acb":
        return ACBAgent(*args)
    if name == "ddqn_eps":
        return DDQNEpsAgent(*args)
    raise InvalidParameter(f"unknown agent {name!r}")

"""Exact oracles and statistical checks for the RQF construction.

Everything tabular here is evaluated by dynamic programming on an explicit
transition table, independently of the learning code, so the agent-side
functions (``vbe_bonus``, ``rqf_update``) can be checked against it.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .approx import MLP, FeatureMap, finite_difference_grads, gradient_rel_error
from .core import AgentConfig, argmax_random, make_net
from .errors import DomainError, InvalidParameter
from .explore import RQFEnsemble, rqf_update, vbe_bonus

PROB_TOL = 1e-12


@dataclass
class TabularMDP:
    """Finite MDP with a fixed policy.

    ``P[s, a, s']`` are transition probabilities, ``discount[s, a, s']`` the
    transition-based discount (0 into a terminal), ``reward[s, a]`` the
    expected environment reward and ``policy[s, a]`` the evaluation policy.
    A scalar discount is broadcast.
    """

    P: np.ndarray
    reward: np.ndarray
    discount: np.ndarray | float
    policy: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise InvalidParameter("P must have shape (S, A, S)")
        if np.any(self.P < 0) or np.any(np.abs(self.P.sum(axis=2) - 1.0) > PROB_TOL):
            raise InvalidParameter("every transition row must be a distribution")
        self.reward = np.asarray(self.reward, dtype=float)
        self.discount = np.broadcast_to(np.asarray(self.discount, dtype=float), self.P.shape).copy()
        self.policy = np.asarray(self.policy, dtype=float)
        if self.reward.shape != self.P.shape[:2] or self.policy.shape != self.P.shape[:2]:
            raise InvalidParameter("reward and policy must have shape (S, A)")
        if np.any(self.policy < 0) or np.any(np.abs(self.policy.sum(axis=1) - 1.0) > PROB_TOL):
            raise InvalidParameter("every policy row must be a distribution")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    def next_value(self, f: np.ndarray) -> np.ndarray:
        """``E[gamma' * f(S', A') | s, a]`` with ``A' ~ policy``."""
        v = (self.policy * f).sum(axis=1)
        return np.einsum("ijk,ijk,k->ij", self.P, self.discount, v)


def random_mdp(rng: np.random.Generator, n_states: int = 5, n_actions: int = 3,
               discount: float | None = None, terminal_prob: float = 0.0,
               deterministic: bool = False) -> TabularMDP:
    """Random dense MDP; ``terminal_prob`` zeroes a random share of transition discounts."""
    if deterministic:
        P = np.zeros((n_states, n_actions, n_states))
        nxt = rng.integers(n_states, size=(n_states, n_actions))
        P[np.arange(n_states)[:, None], np.arange(n_actions)[None, :], nxt] = 1.0
    else:
        P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    gamma = rng.uniform(0.5, 0.99) if discount is None else discount
    disc = np.full(P.shape, gamma)
    if terminal_prob > 0:
        disc[rng.random(P.shape) < terminal_prob] = 0.0
    policy = rng.dirichlet(np.ones(n_actions), size=n_states)
    return TabularMDP(P, rng.normal(size=(n_states, n_actions)), disc, policy)


def dp_policy_eval(mdp: TabularMDP, rewards: np.ndarray | None = None,
                   tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Iterate the policy's Bellman operator until the sup-norm change is below ``tol``."""
    r = mdp.reward if rewards is None else np.asarray(rewards, dtype=float)
    q = np.zeros_like(r)
    for _ in range(max_iter):
        new = r + mdp.next_value(q)
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
    raise DomainError("policy evaluation did not converge; is every discount chain < 1?")


def rqf_expected_reward(mdp: TabularMDP, f: np.ndarray) -> np.ndarray:
    """Expected RQF reward ``f(s, a) - E[gamma' f(S', A')]``."""
    return f - mdp.next_value(f)


def check_fixed_point(mdp: TabularMDP, f: np.ndarray) -> float:
    """Max gap between a random target and the value of its own RQF reward."""
    q = dp_policy_eval(mdp, rqf_expected_reward(mdp, f))
    return float(np.max(np.abs(q - f)))


def telescoping_gap(mdp: TabularMDP, f: np.ndarray, rng: np.random.Generator,
                    length: int = 50) -> float:
    """One sampled trajectory: discounted RQF rewards plus discounted tail vs ``f(s0, a0)``."""
    S, A = mdp.n_states, mdp.n_actions
    s = int(rng.integers(S))
    a = int(rng.integers(A))
    start = f[s, a]
    total = 0.0
    weight = 1.0
    for _ in range(length):
        s2 = int(rng.choice(S, p=mdp.P[s, a]))
        a2 = int(rng.choice(A, p=mdp.policy[s2]))
        g = mdp.discount[s, a, s2]
        total += weight * (f[s, a] - g * f[s2, a2])
        weight *= g
        s, a = s2, a2
    return abs(total + weight * f[s, a] - start)


def bonus_decomposition(mdp: TabularMDP, targets: np.ndarray, predictors: np.ndarray) -> np.ndarray:
    """``max_i |E[gamma' (fhat_i - f_i)(S', A')] + eps_i|`` where eps_i is fhat_i's Bellman error."""
    out = []
    for f, fhat in zip(targets, predictors):
        r = rqf_expected_reward(mdp, f)
        eps = fhat - (r + mdp.next_value(fhat))
        out.append(np.abs(mdp.next_value(fhat - f) + eps))
    return np.max(out, axis=0)


def check_bonus_decomposition(mdp: TabularMDP, targets: np.ndarray, predictors: np.ndarray) -> float:
    """Gap between the agent's bonus and its decomposition, over all (s, a)."""
    targets = np.asarray(targets, dtype=float)
    predictors = np.asarray(predictors, dtype=float)
    if targets.ndim == 2:
        targets, predictors = targets[None], predictors[None]
    return float(np.max(np.abs(vbe_bonus(predictors, targets)
                               - bonus_decomposition(mdp, targets, predictors))))


# ---------------------------------------------------------------------------
# Optimistic initialization
# ---------------------------------------------------------------------------


def z_value(delta: float) -> float:
    """The z with ``Pr(X > z) = 1 - delta`` for standard normal X (negative for delta < 1/2)."""
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    return NormalDist().inv_cdf(delta)


def bonus_log_term(k: int, delta: float) -> float:
    return math.log(k / 2) - math.log(math.log(2 / delta))


def min_bonus_scale(n: int, k: int, delta: float, q_max: float, form: str = "proof") -> float:
    """Smallest bonus scale that makes initial values exceed ``q_max`` w.p. ``1 - delta``.

    ``statement`` divides by the log term; ``proof`` divides by its square
    root, which is what the argument via the max of |Gaussians| supports.
    """
    if form not in ("statement", "proof"):
        raise InvalidParameter("form must be 'statement' or 'proof'")
    if n < 1 or k < 1:
        raise DomainError("n and k must be positive")
    d = bonus_log_term(k, delta)
    if d <= 0:
        raise DomainError(f"log(k/2) - log log(2/delta) = {d:.4g} <= 0; need k > 2 log(2/delta)")
    numer = math.sqrt(n / math.pi) * (q_max - z_value(delta / 2) / math.sqrt(n))
    return numer / (d if form == "statement" else math.sqrt(d))


@dataclass(frozen=True)
class OptimismCheckConfig:
    n: int
    k: int
    delta: float
    q_max: float = 1.0
    trials: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise DomainError("delta must lie in (0, 1)")
        if 3 * math.sqrt(self.delta * (1 - self.delta) / self.trials) >= self.delta / 2:
            raise InvalidParameter("too few trials: 3 sigma binomial error must stay below delta/2")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.delta * (1 - self.delta) / self.trials)


def _unit_rows(rng, shape):
    x = rng.standard_normal(shape, dtype=np.float32)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def optimism_samples(n: int, k: int, trials: int, rng: np.random.Generator,
                     chunk: int = 2000) -> tuple[np.ndarray, np.ndarray]:
    """Initial ``q(s,a)`` and ``max_i |f*_i - f_i|`` for random linear models.

    Each trial draws fresh ``N(0, 1/n)`` weights for q, every target and every
    predictor. Unit-norm features are redrawn once per chunk: given the
    features the weights make every trial's values exactly Gaussian, so
    sharing features inside a chunk does not correlate trials.
    """
    qs, gaps = [], []
    scale = np.float32(1.0 / math.sqrt(n))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        phi = _unit_rows(rng, (n,))
        phis = _unit_rows(rng, (k, n))
        w = rng.standard_normal((m, n), dtype=np.float32) * scale
        w_star = rng.standard_normal((m, k, n), dtype=np.float32) * scale
        w_hat = rng.standard_normal((m, k, n), dtype=np.float32) * scale
        qs.append(w @ phi)
        f_star = np.einsum("mkn,kn->mk", w_star, phis)
        f_hat = np.einsum("mkn,kn->mk", w_hat, phis)
        gaps.append(np.abs(f_star - f_hat).max(axis=1))
        done += m
    return np.concatenate(qs).astype(float), np.concatenate(gaps).astype(float)


def optimism_rate(q: np.ndarray, gap: np.ndarray, c: float, q_max: float) -> float:
    return float(np.mean(q + c * gap > q_max))


def optimism_mc(cfg: OptimismCheckConfig, c: float, rng: np.random.Generator) -> float:
    """Fraction of trials where ``q + c * max_i |f*_i - f_i| > q_max``."""
    q, gap = optimism_samples(cfg.n, cfg.k, cfg.trials, rng)
    return optimism_rate(q, gap, c, cfg.q_max)


# ---------------------------------------------------------------------------
# Bonus decay under a fixed behavior policy
# ---------------------------------------------------------------------------


def chain_transitions(n_states: int, steps: int, rng: np.random.Generator,
                      discount: float = 0.9):
    """Uniform-random walk on a chain; action 1 moves right, 0 moves left (clipped)."""
    s = np.zeros(steps, dtype=np.int64)
    a = rng.integers(2, size=steps)
    s[0] = rng.integers(n_states)
    for t in range(1, steps):
        s[t] = min(max(s[t - 1] + (1 if a[t - 1] == 1 else -1), 0), n_states - 1)
    s_next = np.minimum(np.maximum(s + np.where(a == 1, 1, -1), 0), n_states - 1)
    return s, a, s_next, np.full(steps, discount)


def bonus_decay_curve(n_states: int = 5, k: int = 1, updates: int = 100_000, seed: int = 0,
                      lr: float = 0.1, batch_size: int = 32, tau: int = 4,
                      checkpoints=(), init_equal: bool = False) -> dict[int, float]:
    """Train RQF predictors with a fixed main q and uniform behavior; bonus at checkpoints.

    Returns ``{update: max bonus over all (s, a)}`` for every checkpoint and
    the final update.
    """
    rng = np.random.default_rng(seed)
    cfg = AgentConfig(k=k, optimizer="sgd", learning_rate=lr, batch_size=batch_size, tau=tau)
    features = FeatureMap.indices(n_states)
    init_rng = np.random.default_rng([seed, 1])
    ens = RQFEnsemble(lambda: make_net("tabular", features, 2, init_rng, cfg), k, cfg)
    if init_equal:
        for t, p in zip(ens.targets, ens.predictors):
            p.net.load_from(t)
            p.sync()
    q_main = rng.normal(size=(n_states, 2))
    s, a, s_next, disc = chain_transitions(n_states, 10_000, rng)
    phi_all = features.encode(np.arange(n_states)[:, None])
    a_next_all = argmax_random(q_main, rng)[s_next]
    marks = sorted(set(checkpoints) | {updates})
    out = {}
    if 0 in marks:
        out[0] = float(ens.bonus(phi_all).max())
    for step in range(1, updates + 1):
        i = int(rng.integers(k))
        idx = rng.integers(len(s), size=batch_size)
        rqf_update(ens, i, features.encode(s[idx, None]), a[idx],
                   features.encode(s_next[idx, None]), disc[idx], a_next_all[idx])
        if step % tau == 0:
            ens.sync()
        if step in marks:
            out[step] = float(ens.bonus(phi_all).max())
    return out


def check_bonus_decay(n_states: int = 5, k: int = 1, updates: int = 100_000, seed: int = 0) -> float:
    """Final max bonus after ``updates`` RQF updates."""
    return bonus_decay_curve(n_states, k, updates, seed)[updates]


def ensemble_slowdown_ratio(k: int = 1, updates: int = 4000, seeds=range(5)) -> float:
    """Bonus with 2k members after ``updates`` over bonus with k members after ``updates/2``.

    One predictor is trained per step, so doubling k halves each member's
    update rate; the ratio should be near 1.
    """
    ratios = []
    for seed in seeds:
        small = bonus_decay_curve(k=k, updates=updates // 2, seed=seed)[updates // 2]
        big = bonus_decay_curve(k=2 * k, updates=updates, seed=seed)[updates]
        ratios.append(math.log(big / small))
    return float(math.exp(np.mean(ratios)))


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def gradient_check(draws: int = 100, seed: int = 0) -> float:
    """Worst relative error of backprop vs central differences over random small MLPs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        depth = int(rng.integers(0, 3))
        sizes = [int(rng.integers(1, 6)) for _ in range(depth + 2)]
        net = MLP(sizes, rng, bias=bool(rng.integers(2)))
        x = rng.normal(size=(int(rng.integers(1, 5)), sizes[0]))
        g = rng.normal(size=(len(x), sizes[-1]))
        net.forward(x)
        worst = max(worst, gradient_rel_error(net.backward(g), finite_difference_grads(net, x, g)))
    return worst


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

OPTIMISM_GRID = [(n, k, d) for n in (64, 256) for k in (8, 20) for d in (0.05, 0.1)]


@dataclass
class CheckResult:
    name: str
    statistic: float
    threshold: float
    passed: bool
    seconds: float = 0.0
    flagged: bool = False  # failed, but informational only

    @property
    def verdict(self) -> str:
        if self.passed:
            return "pass"
        return "flagged" if self.flagged else "fail"


def fixed_point_suite(draws: int = 100, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for j in range(draws):
        mdp = random_mdp(rng, int(rng.integers(2, 11)), int(rng.integers(1, 5)),
                         terminal_prob=0.2 if j % 2 else 0.0, deterministic=j % 5 == 0)
        f = rng.normal(size=(mdp.n_states, mdp.n_actions))
        worst = max(worst, check_fixed_point(mdp, f))
    return worst


def telescoping_suite(trajectories: int = 1000, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    mdp = f = None
    for j in range(trajectories):
        if j % 10 == 0:
            mdp = random_mdp(rng, int(rng.integers(2, 11)), int(rng.integers(1, 5)),
                             terminal_prob=0.1)
            f = rng.normal(size=(mdp.n_states, mdp.n_actions))
        worst = max(worst, telescoping_gap(mdp, f, rng, int(rng.integers(1, 60))))
    return worst


def decomposition_suite(draws: int = 100, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        mdp = random_mdp(rng, int(rng.integers(2, 11)), int(rng.integers(1, 5)), terminal_prob=0.1)
        k = int(rng.integers(1, 6))
        shape = (k, mdp.n_states, mdp.n_actions)
        gap = check_bonus_decomposition(mdp, rng.normal(size=shape), rng.normal(size=shape))
        worst = max(worst, gap)
    return worst


def optimism_suite(trials: int = 100_000, seed: int = 0, q_max: float = 1.0,
                   grid=OPTIMISM_GRID) -> list[CheckResult]:
    """Monte Carlo optimism rate for both threshold forms over a (n, k, delta) grid.

    Samples are shared between the deltas of one (n, k) pair.
    """
    rng = np.random.default_rng(seed)
    results = []
    pairs = sorted({(n, k) for n, k, _ in grid})
    for n, k in pairs:
        start = time.perf_counter()
        q, gap = optimism_samples(n, k, trials, rng)
        for _, _, delta in (g for g in grid if g[:2] == (n, k)):
            cfg = OptimismCheckConfig(n, k, delta, q_max, trials)
            bound = 1 - delta - 3 * cfg.sigma
            for form in ("proof", "statement"):
                rate = optimism_rate(q, gap, min_bonus_scale(n, k, delta, q_max, form), q_max)
                results.append(CheckResult(f"optimism_{form}[n={n},k={k},delta={delta}]", rate,
                                           bound, rate >= bound, time.perf_counter() - start,
                                           flagged=form == "statement"))
    return results


def run_all(quick: bool = False) -> list[CheckResult]:
    """Every check with its acceptance threshold. ``quick`` shrinks the Monte Carlo budgets."""
    results = []

    def timed(name, fn, threshold):
        start = time.perf_counter()
        stat = fn()
        results.append(CheckResult(name, stat, threshold, stat < threshold,
                                   time.perf_counter() - start))

    timed("fixed_point_identity", fixed_point_suite, 1e-9)
    timed("telescoping", telescoping_suite, 1e-9)
    timed("bonus_decomposition", decomposition_suite, 1e-9)
    results += optimism_suite(trials=20_000 if quick else 100_000)
    timed("bonus_decay", lambda: check_bonus_decay(updates=20_000 if quick else 100_000), 1e-2)
    timed("gradient_check", gradient_check, 1e-4)
    return results


def report_csv(results: list[CheckResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "statistic", "threshold", "verdict"])
    for r in results:
        w.writerow([r.name, f"{r.statistic:.6g}", f"{r.threshold:.6g}", r.verdict])
    return buf.getvalue()

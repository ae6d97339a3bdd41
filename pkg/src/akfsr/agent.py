"""The AKF-SR agent: feature construction, information-driven action choice,
MMAE reward learning, KTD successor-feature learning and RBF adaptation."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from akfsr.errors import ConfigError
from akfsr.features import OneHotFeatures, RbfSet, build_state_action_features, rgd_update
from akfsr.reward import DEFAULT_OMEGAS, RewardFilterState, mmae_step
from akfsr.sr import SrFilterState, build_g, ktd_step

EXPLORATION_MODES = ("information", "epsilon_greedy", "greedy")


@dataclass
class AgentConfig:
    gamma: float = 0.95
    # RGD rates for RBF means / covariances
    lr_mean: float = 1e-3
    lr_cov: float = 1e-3
    adapt_rbfs: bool = True
    # reward filter
    p0: float = 10.0
    b: float = 1e-3
    f_scale: float = 0.9
    omegas: tuple = DEFAULT_OMEGAS
    # SR filter
    c0: float = 10.0
    u: float = 1e-2
    e: float | list = 1.0
    a_scale: float = 0.9
    sr_layout: str | None = None
    exploration: str = "information"
    epsilon: float = 0.1
    reward_scale: float = 1.0
    reset_bank_on_change: bool = False

    def __post_init__(self):
        self.omegas = tuple(float(o) for o in self.omegas)
        self.validate()

    def validate(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.lr_mean <= 0 or self.lr_cov <= 0:
            raise ConfigError("RGD rates must be positive")
        if self.exploration not in EXPLORATION_MODES:
            raise ConfigError(f"exploration must be one of {EXPLORATION_MODES}")
        if self.exploration == "epsilon_greedy" and not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if not self.omegas or min(self.omegas) <= 0:
            raise ConfigError("omega candidates must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["omegas"] = list(self.omegas)
        return d


class Transition(NamedTuple):
    s: object
    a: int
    r: float
    s_next: object
    a_next: int
    terminal: bool


class StepMetrics(NamedTuple):
    reward_sq_error: float
    sr_sq_error: float
    q: float


@dataclass
class EpisodeLog:
    episode_return: float
    steps: int
    reward_mse: float
    sr_mse: float
    q_loss: float
    bank_weights: list | None = None


class TrainLog(list):
    """Sequence of :class:`EpisodeLog` with columnar access."""

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self], dtype=float)


class Agent:
    def __init__(self, config: AgentConfig, features, n_actions: int, seed: int = 0):
        self.config = config
        self.features = features
        self.n_actions = n_actions
        self.n_phi = features.n_features
        self.L = self.n_phi * n_actions
        self.rng = np.random.default_rng(seed)
        self.freeze_sr = False
        self.reward = RewardFilterState.create(self.L, p0=config.p0, b=config.b, omegas=config.omegas,
                                               f_scale=config.f_scale)
        self.sr = SrFilterState.create(self.L, c0=config.c0, u=config.u, e=config.e,
                                       a_scale=config.a_scale, layout=config.sr_layout)

    def phi(self, s) -> np.ndarray:
        return self.features(s)

    def psi(self, s, a: int) -> np.ndarray:
        return build_state_action_features(self.features(s), a, self.n_actions)

    def _q_from_phi(self, v: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return v.reshape(self.n_actions, self.n_phi) @ phi

    def q_values(self, s) -> np.ndarray:
        """Q(s, b) = theta^T W psi(s, b) for every action b."""
        v = self.sr.W.T @ self.reward.theta
        return self._q_from_phi(v, self.phi(s))

    def select_action(self, s, env=None) -> int:
        mode = self.config.exploration
        if mode == "greedy":
            return int(np.argmax(self.q_values(s)))
        if mode == "epsilon_greedy":
            if self.rng.random() < self.config.epsilon:
                return int(self.rng.integers(self.n_actions))
            return int(np.argmax(self.q_values(s)))
        if env is None:
            raise ConfigError("information-driven exploration needs an environment lookahead")
        return self._information_action(s, env)

    def information_scores(self, s, env) -> np.ndarray:
        """g^T g for every action, with g = psi(s, a) - gamma psi(s', a'), s'
        from the lookahead and a' greedy on Q at s'."""
        gamma = self.config.gamma
        n = self.n_phi
        phi_s = self.phi(s)
        v = self.sr.W.T @ self.reward.theta
        scores = np.empty(self.n_actions)
        g = np.empty(self.L)
        for a in range(self.n_actions):
            phi_next = self.phi(env.lookahead(s, a))
            a_next = int(np.argmax(self._q_from_phi(v, phi_next)))
            g[:] = 0.0
            g[a * n:(a + 1) * n] = phi_s
            g[a_next * n:(a_next + 1) * n] -= gamma * phi_next
            scores[a] = g @ g
        return scores

    def _information_action(self, s, env) -> int:
        # np.argmax returns the first maximum, so ties go to the lowest index
        return int(np.argmax(self.information_scores(s, env)))

    def step(self, t: Transition) -> StepMetrics:
        """Reward filter, SR filter, then RBF adaptation on one transition.

        The returned squared errors use the estimates held before this step.
        """
        cfg = self.config
        r = cfg.reward_scale * t.r
        psi = self.psi(t.s, t.a)
        psi_next = self.psi(t.s_next, t.a_next)
        ing = build_g(psi, psi_next, cfg.gamma, t.terminal)

        reward_err = r - psi @ self.reward.theta
        sr_res = psi - self.sr.W @ ing.g
        sr_err = sr_res @ sr_res / self.L

        mmae_step(self.reward, psi, r)
        if not self.freeze_sr:
            ktd_step(self.sr, ing)
        q = self.reward.theta @ (self.sr.W @ psi)
        if (cfg.adapt_rbfs and not self.freeze_sr and isinstance(self.features, RbfSet)):
            self.features = rgd_update(self.features, t.s, psi, self.reward.theta, r,
                                       cfg.lr_mean, cfg.lr_cov)
        return StepMetrics(float(reward_err * reward_err), float(sr_err), float(q))

    def reset_reward_filter(self):
        cfg = self.config
        self.reward = RewardFilterState.create(self.L, p0=cfg.p0, b=cfg.b, omegas=cfg.omegas,
                                               f_scale=cfg.f_scale)

    def reset_sr_filter(self):
        cfg = self.config
        self.sr = SrFilterState.create(self.L, c0=cfg.c0, u=cfg.u, e=cfg.e,
                                       a_scale=cfg.a_scale, layout=cfg.sr_layout)


def run_episode(env, agent: Agent, max_steps: int | None = None,
                record_bank_weights: bool = False) -> EpisodeLog:
    """Roll out one on-policy episode, updating the agent after every transition."""
    cap = env.spec.max_episode_steps if max_steps is None else min(max_steps, env.spec.max_episode_steps)
    s = env.reset(agent.rng)
    total = 0.0
    reward_se = 0.0
    sr_se = 0.0
    steps = 0
    if cap > 0:
        a = agent.select_action(s, env)
    for _ in range(cap):
        s_next, r, terminal = env.step(a)
        a_next = 0 if terminal else agent.select_action(s_next, env)
        m = agent.step(Transition(s, a, r, s_next, a_next, terminal))
        total += r
        reward_se += m.reward_sq_error
        sr_se += m.sr_sq_error
        steps += 1
        if terminal:
            break
        s, a = s_next, a_next
    reward_mse = reward_se / steps if steps else 0.0
    sr_mse = sr_se / steps if steps else 0.0
    weights = agent.reward.bank_weights.tolist() if record_bank_weights else None
    return EpisodeLog(total, steps, reward_mse, sr_mse, reward_mse + sr_mse, weights)


def train(env, agent: Agent, n_episodes: int, max_steps: int | None = None,
          record_bank_weights: bool = False) -> TrainLog:
    log = TrainLog()
    for _ in range(n_episodes):
        log.append(run_episode(env, agent, max_steps, record_bank_weights))
    return log


def adapt_reward_change(agent: Agent, env, n_episodes: int, freeze_sr: bool = True,
                        max_steps: int | None = None) -> TrainLog:
    """Continue training on a changed reward, optionally holding the SR fixed.

    With ``freeze_sr`` only the reward filter learns; ``W``, its covariance and
    the RBFs are left untouched and Q is recomputed from the new reward weights.
    """
    if agent.config.reset_bank_on_change:
        n = len(agent.reward.omega_candidates)
        agent.reward.bank_weights = np.full(n, 1.0 / n)
    previous = agent.freeze_sr
    agent.freeze_sr = freeze_sr
    try:
        return train(env, agent, n_episodes, max_steps)
    finally:
        agent.freeze_sr = previous


def make_features(spec: dict | None, env):
    """Feature map from a layout description.

    ``{"kind": "onehot"}`` gives indicator features for a gridworld; otherwise
    an RBF grid from ``axes`` (explicit center coordinates per dimension) or
    from ``lows``/``highs``/``order``.
    """
    from akfsr.features import even_grid_rbfs, rbfs_on_grid

    spec = dict(spec or {})
    kind = spec.pop("kind", "rbf")
    if kind == "onehot":
        return OneHotFeatures(env.grid.n_states)
    if "centers" in spec:
        return RbfSet.from_dict(spec)
    include_bias = spec.get("include_bias", True)
    if "axes" in spec:
        return rbfs_on_grid(spec["axes"], spec.get("covariance"), include_bias)
    bounds = env.spec.state_bounds
    lows = spec.get("lows", [b[0] for b in bounds])
    highs = spec.get("highs", [b[1] for b in bounds])
    return even_grid_rbfs(lows, highs, spec.get("order", 3), spec.get("covariance"), include_bias)

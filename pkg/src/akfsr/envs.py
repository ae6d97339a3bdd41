"""Deterministic-dynamics control tasks with a pure one-step lookahead.

Every environment exposes ``reset(rng)``, ``step(a) -> (s_next, r, terminal)``
and ``lookahead(s, a) -> s_next``. ``lookahead`` never touches the
environment's own state and ignores any action noise. Episode time limits are
carried in ``spec.max_episode_steps`` and enforced by the training loop; they
are not reported as terminal transitions.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from akfsr.errors import InvalidParameterError, NumericError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    n_actions: int
    state_bounds: tuple
    max_episode_steps: int
    reward: str = ""


def _check_action(a, n_actions):
    if not (isinstance(a, (int, np.integer)) and 0 <= a < n_actions):
        raise InvalidParameterError(f"invalid action {a!r}")


class InvertedPendulum:
    """Pole on a cart; state ``[angle, angular velocity]``, forces ``(+50, -50, 0)``.

    The angular acceleration follows the classical cart-pole benchmark model
    and is integrated with an explicit Euler step. Reward is +1 while the pole
    stays above the horizontal; leaving it gives 0 and ends the episode.
    """

    forces = (50.0, -50.0, 0.0)

    def __init__(self, dt=0.1, gravity=9.8, pole_mass=2.0, cart_mass=8.0, length=0.5,
                 action_noise=0.0, start_std=0.1, max_episode_steps=200, max_speed=10.0):
        self.dt = dt
        self.gravity = gravity
        self.pole_mass = pole_mass
        self.cart_mass = cart_mass
        self.length = length
        self.action_noise = action_noise
        self.start_std = start_std
        self.max_speed = max_speed
        self.spec = EnvSpec("pendulum", 2, 3, ((-math.pi, math.pi), (-max_speed, max_speed)),
                            max_episode_steps, "+1 above horizontal, 0 and terminal below")
        self.state = np.zeros(2)
        self.rng = np.random.default_rng(0)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.rng = rng
        self.state = np.array([rng.normal(0.0, self.start_std), 0.0])
        return self.state.copy()

    def set_state(self, s):
        self.state = np.array(s, dtype=float)

    def _advance(self, s, force):
        theta, omega = s
        alpha = 1.0 / (self.pole_mass + self.cart_mass)
        ml = self.pole_mass * self.length
        cos = math.cos(theta)
        acc = (self.gravity * math.sin(theta) - alpha * ml * omega * omega * math.sin(2 * theta) / 2
               - alpha * cos * force) / (4 * self.length / 3 - alpha * ml * cos * cos)
        new_theta = theta + self.dt * omega
        new_omega = omega + self.dt * acc
        new_theta = min(max(new_theta, -math.pi), math.pi)
        new_omega = min(max(new_omega, -self.max_speed), self.max_speed)
        return np.array([new_theta, new_omega])

    def step(self, a):
        _check_action(a, 3)
        force = self.forces[a]
        if self.action_noise:
            force += self.rng.uniform(-self.action_noise, self.action_noise)
        self.state = self._advance(self.state, force)
        if abs(self.state[0]) > math.pi / 2:
            return self.state.copy(), 0.0, True
        return self.state.copy(), 1.0, False

    def lookahead(self, s, a) -> np.ndarray:
        _check_action(a, 3)
        return self._advance(s, self.forces[a])


class MountainCar:
    """Under-powered car in a valley; state ``[position, velocity]``.

    Actions 0, 1, 2 push left, do nothing and push right. Each step costs -1
    until the car reaches ``x >= 0.5``; the goal step itself gives 0. The left
    boundary acts as a wall that zeroes the velocity.
    """

    def __init__(self, force=0.001, gravity=0.0025, max_episode_steps=200):
        self.force = force
        self.gravity = gravity
        self.spec = EnvSpec("mountain_car", 2, 3, ((-1.2, 0.6), (-0.07, 0.07)),
                            max_episode_steps, "-1 per step, goal at x >= 0.5")
        self.state = np.array([-0.5, 0.0])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = np.array([rng.uniform(-0.6, -0.4), 0.0])
        return self.state.copy()

    def set_state(self, s):
        self.state = np.array(s, dtype=float)

    def _advance(self, s, a):
        x, v = s
        v = v + self.force * (a - 1) - self.gravity * math.cos(3 * x)
        v = min(max(v, -0.07), 0.07)
        x = x + v
        if x <= -1.2:
            x, v = -1.2, 0.0
        x = min(x, 0.6)
        return np.array([x, v])

    def step(self, a):
        _check_action(a, 3)
        self.state = self._advance(self.state, a)
        if self.state[0] >= 0.5:
            return self.state.copy(), 0.0, True
        return self.state.copy(), -1.0, False

    def lookahead(self, s, a) -> np.ndarray:
        _check_action(a, 3)
        return self._advance(s, a)


@dataclass
class GridworldSpec:
    """Finite deterministic MDP with a fixed evaluation policy.

    ``successors[a, s]`` is the next state after action ``a`` in ``s`` and
    ``rewards[s, a]`` the reward for taking it. ``policy[s]`` is the action the
    fixed policy takes in ``s``.
    """

    successors: np.ndarray
    rewards: np.ndarray
    policy: np.ndarray
    gamma: float
    start_state: int = 0
    terminal_states: tuple = ()
    max_episode_steps: int = 50
    name: str = "gridworld"

    def __post_init__(self):
        self.successors = np.atleast_2d(np.asarray(self.successors, dtype=int))
        n_actions, n_states = self.successors.shape
        rewards = np.asarray(self.rewards, dtype=float)
        if rewards.ndim == 1:
            rewards = np.repeat(rewards[:, None], n_actions, axis=1)
        if rewards.shape != (n_states, n_actions):
            raise InvalidParameterError("rewards must have shape (n_states, n_actions)")
        self.rewards = rewards
        self.policy = np.asarray(self.policy, dtype=int)
        if self.policy.shape != (n_states,):
            raise InvalidParameterError("policy needs one action per state")
        if np.any((self.successors < 0) | (self.successors >= n_states)):
            raise InvalidParameterError("successor index out of range")
        self.terminal_states = tuple(int(t) for t in self.terminal_states)

    @property
    def n_states(self) -> int:
        return self.successors.shape[1]

    @property
    def n_actions(self) -> int:
        return self.successors.shape[0]

    def policy_matrix(self) -> np.ndarray:
        P = np.zeros((self.n_states, self.n_states))
        P[np.arange(self.n_states), self.successors[self.policy, np.arange(self.n_states)]] = 1.0
        return P

    def policy_rewards(self) -> np.ndarray:
        return self.rewards[np.arange(self.n_states), self.policy]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "successors": self.successors.tolist(),
            "rewards": self.rewards.tolist(),
            "policy": self.policy.tolist(),
            "gamma": self.gamma,
            "start_state": self.start_state,
            "terminal_states": list(self.terminal_states),
            "max_episode_steps": self.max_episode_steps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridworldSpec":
        return cls(**{k: v for k, v in data.items()})

    @classmethod
    def load(cls, path) -> "GridworldSpec":
        text = Path(path).read_text()
        if str(path).endswith((".yaml", ".yml")):
            import yaml
            return cls.from_dict(yaml.safe_load(text))
        return cls.from_dict(json.loads(text))


def ring_chain(n_states: int, gamma: float, reward_state: int | None = None,
               max_episode_steps: int = 50) -> GridworldSpec:
    """Deterministic cycle 0 -> 1 -> ... -> n-1 -> 0 with a single action."""
    successors = ((np.arange(n_states) + 1) % n_states)[None, :]
    rewards = np.zeros(n_states)
    rewards[n_states - 1 if reward_state is None else reward_state] = 1.0
    return GridworldSpec(successors, rewards, np.zeros(n_states, dtype=int), gamma,
                         max_episode_steps=max_episode_steps, name=f"ring{n_states}")


def two_way_chain(n_states: int, gamma: float, goal_reward: float = 1.0,
                  max_episode_steps: int = 50) -> GridworldSpec:
    """Chain with actions left (0) and right (1), walls at both ends.

    Moving right out of the last state wraps to state 0 and pays
    ``goal_reward``; the fixed policy always moves right.
    """
    idx = np.arange(n_states)
    left = np.maximum(idx - 1, 0)
    right = (idx + 1) % n_states
    rewards = np.zeros((n_states, 2))
    rewards[n_states - 1, 1] = goal_reward
    return GridworldSpec(np.stack([left, right]), rewards, np.ones(n_states, dtype=int), gamma,
                         max_episode_steps=max_episode_steps, name=f"chain{n_states}")


def gridworld_sr_oracle(spec_or_matrix, gamma: float | None = None) -> np.ndarray:
    """Closed-form SR ``(I - gamma P)^-1`` of a fixed policy."""
    if isinstance(spec_or_matrix, GridworldSpec):
        P = spec_or_matrix.policy_matrix()
        gamma = spec_or_matrix.gamma if gamma is None else gamma
    else:
        P = np.asarray(spec_or_matrix, dtype=float)
    if gamma is None:
        raise InvalidParameterError("gamma is required with a raw transition matrix")
    if not np.allclose(P.sum(axis=1), 1.0):
        raise InvalidParameterError("transition matrix rows must sum to 1")
    n = P.shape[0]
    if gamma * np.max(np.abs(np.linalg.eigvals(P))) >= 1.0:
        raise NumericError("spectral radius of gamma * P must be below 1")
    return np.linalg.solve(np.eye(n) - gamma * P, np.eye(n))


class Gridworld:
    """Environment view of a :class:`GridworldSpec`; states are integer indices."""

    def __init__(self, spec: GridworldSpec):
        self.grid = spec
        self.spec = EnvSpec(spec.name, 1, spec.n_actions, ((0, spec.n_states - 1),),
                            spec.max_episode_steps, "table")
        self.state = spec.start_state

    def reset(self, rng: np.random.Generator | None = None) -> int:
        self.state = self.grid.start_state
        return self.state

    def set_state(self, s):
        self.state = int(s)

    def step(self, a):
        _check_action(a, self.grid.n_actions)
        s = self.state
        self.state = int(self.grid.successors[a, s])
        return self.state, float(self.grid.rewards[s, a]), self.state in self.grid.terminal_states

    def lookahead(self, s, a) -> int:
        _check_action(a, self.grid.n_actions)
        return int(self.grid.successors[a, int(s)])


@dataclass
class ScaledReward:
    """Wraps an environment and multiplies every reward by ``factor``."""

    env: object
    factor: float
    spec: EnvSpec = field(init=False)

    def __post_init__(self):
        self.spec = self.env.spec

    def reset(self, rng):
        return self.env.reset(rng)

    def step(self, a):
        s, r, terminal = self.env.step(a)
        return s, self.factor * r, terminal

    def lookahead(self, s, a):
        return self.env.lookahead(s, a)


def make_env(name: str, **params):
    try:
        return _make_env(name, **params)
    except TypeError as exc:
        raise InvalidParameterError(f"bad parameters for {name!r}: {exc}") from exc


def _make_env(name: str, **params):
    if name == "pendulum":
        return InvertedPendulum(**params)
    if name == "mountain_car":
        return MountainCar(**params)
    if name == "gridworld":
        spec = params.pop("spec", None)
        if isinstance(spec, dict):
            spec = GridworldSpec.from_dict(spec)
        if spec is None:
            spec = GridworldSpec.load(params.pop("path")) if "path" in params else ring_chain(**params)
        return Gridworld(spec)
    raise InvalidParameterError(f"unknown environment {name!r}")

"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N [PASS|FAIL]`` line (collected again in
the terminal summary) and asserts at the stated tolerance and time budget.
The long training campaigns are shared between criteria through module
fixtures, so their time budget is checked against the fixture's own timing.
"""
import math
import time

import numpy as np
import pytest

from akfsr.agent import Agent, AgentConfig, Transition
from akfsr.envs import Gridworld, GridworldSpec, InvertedPendulum, two_way_chain
from akfsr.features import EPS_PD, OneHotFeatures, RbfSet, rbfs_on_grid, rgd_update
from akfsr.harness import (ExperimentConfig, oracle_config, run_adaptation, run_experiment,
                           run_oracle_check, stability_sweep)
from akfsr.reward import DEFAULT_OMEGAS, RewardFilterState, kf_update_single, mmae_step
from akfsr.sr import SrFilterState, SrTdIngredients, ktd_step

N_RUNS = 10
N_EPISODES = 1000
WINDOW = 100
CASES = 10_000


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def pendulum_campaign():
    cfg = ExperimentConfig(env="pendulum", n_runs=N_RUNS, n_episodes=N_EPISODES)
    (series, logs), seconds = _timed(lambda: run_experiment(cfg))
    return series, logs, seconds


@pytest.fixture(scope="module")
def car_campaign():
    cfg = ExperimentConfig(env="mountain_car", n_runs=N_RUNS, n_episodes=N_EPISODES)
    (series, logs), seconds = _timed(lambda: run_experiment(cfg))
    return series, logs, seconds


def test_criterion_1_gridworld_oracle(acceptance_report):
    result, seconds = _timed(lambda: run_oracle_check(oracle_config(5, 0.9, n_episodes=300)))
    mse = result["mean_sr_mse"]
    acceptance_report(1, "gridworld SR oracle", mse <= 0.05 and seconds <= 10,
                      f"SR MSE {mse:.3g} (<= 0.05), {seconds:.1f}s (<= 10s)")


def test_criterion_2_mmae_identification(acceptance_report):
    def experiment():
        total = np.zeros(len(DEFAULT_OMEGAS))
        for seed in range(20):
            rng = np.random.default_rng(seed)
            theta_true = rng.normal(size=4)
            # static generative weights: evolution gain 1, no process noise
            state = RewardFilterState.create(4, f_scale=1.0, b=0.0)
            for _ in range(500):
                h = rng.normal(size=4)
                mmae_step(state, h, h @ theta_true + rng.normal(scale=math.sqrt(2.0)))
            total += state.bank_weights
        return total / 20

    weights, seconds = _timed(experiment)
    winner = DEFAULT_OMEGAS[int(np.argmax(weights))]
    acceptance_report(2, "MMAE identification", winner == 2.0 and seconds <= 5,
                      f"heaviest candidate {winner} (weight {weights.max():.3f}), {seconds:.2f}s (<= 5s)")


def _replay(agent, stream, factor, states):
    agent.reset_reward_filter()
    agent.freeze_sr = True
    for s, a, r, s_next, a_next, terminal in stream:
        agent.step(Transition(s, a, factor * r, s_next, a_next, terminal))
    return agent.reward.theta.copy(), np.array([agent.q_values(s) for s in states])


def _record_stream(env, agent, n_episodes):
    stream = []
    for _ in range(n_episodes):
        s = env.reset(agent.rng)
        a = agent.select_action(s, env)
        for _ in range(env.spec.max_episode_steps):
            s_next, r, terminal = env.step(a)
            a_next = 0 if terminal else agent.select_action(s_next, env)
            stream.append(Transition(s, a, r, s_next, a_next, terminal))
            agent.step(stream[-1])
            if terminal:
                break
            s, a = s_next, a_next
    return stream


def test_criterion_3_kf_linearity(acceptance_report):
    def experiment():
        worst_theta, worst_q, same_argmax = 0.0, 0.0, True
        cases = [
            (Gridworld(GridworldSpec(two_way_chain(5, 0.9).successors,
                                     np.random.default_rng(0).uniform(-1, 1, (5, 2)),
                                     np.ones(5, dtype=int), 0.9)),
             OneHotFeatures(5), range(5)),
            (InvertedPendulum(), rbfs_on_grid([[-math.pi / 4, 0, math.pi / 4], [-0.5, 0, 0.5]], 1.0),
             [np.array([t, w]) for t in np.linspace(-1.2, 1.2, 7) for w in np.linspace(-2, 2, 7)]),
        ]
        for env, features, states in cases:
            cfg = AgentConfig(gamma=0.9, omegas=(1.0,), adapt_rbfs=False)
            agent = Agent(cfg, features, env.spec.n_actions, seed=3)
            stream = _record_stream(env, agent, 10)
            theta1, q1 = _replay(agent, stream, 1.0, states)
            theta3, q3 = _replay(agent, stream, 3.0, states)
            assert np.abs(theta1).max() > 0 and np.abs(q1).max() > 0
            worst_theta = max(worst_theta, np.abs(theta3 - 3 * theta1).max() / np.abs(3 * theta1).max())
            worst_q = max(worst_q, np.abs(q3 - 3 * q1).max() / np.abs(3 * q1).max())
            same_argmax &= bool(np.array_equal(q1.argmax(axis=1), q3.argmax(axis=1)))
        return worst_theta, worst_q, same_argmax

    (err_theta, err_q, same), seconds = _timed(experiment)
    ok = err_theta <= 1e-9 and err_q <= 1e-9 and same and seconds <= 1
    acceptance_report(3, "KF linearity under reward x3", ok,
                      f"theta rel err {err_theta:.2g}, Q rel err {err_q:.2g} (<= 1e-9), "
                      f"argmax unchanged={same}, {seconds:.2f}s (<= 1s)")


def test_criterion_4_adaptation_speed(acceptance_report):
    cfg = ExperimentConfig(env="pendulum", n_runs=N_RUNS, n_episodes=N_EPISODES, kind="adapt",
                           adapt={"adapt_episodes": 100})
    result, seconds = _timed(lambda: run_adaptation(cfg))
    frozen, relearn = result["mean_frozen_episodes"], result["mean_relearn_episodes"]
    ok = frozen <= 50 and frozen < relearn and seconds <= 300
    acceptance_report(4, "adaptation speed after reward x3", ok,
                      f"frozen SR {frozen:.1f} episodes (<= 50), relearn {relearn:.1f} "
                      f"(must exceed frozen; 101 = never within 100), {seconds:.0f}s (<= 300s)")


def test_criterion_5_pendulum_learning(acceptance_report, pendulum_campaign):
    series, _, seconds = pendulum_campaign
    length = float(series.mean_steps[-WINDOW:].mean())
    ok = length >= 150 and seconds <= 900
    acceptance_report(5, "pendulum learning", ok,
                      f"mean episode length over last {WINDOW} = {length:.1f} (>= 150), "
                      f"{seconds:.0f}s (<= 900s)")


def test_criterion_6_mountain_car_learning(acceptance_report, car_campaign):
    _, logs, seconds = car_campaign
    rate = float(np.mean([np.mean(log.column("steps")[-WINDOW:] < 200) for log in logs]))
    ok = rate >= 0.6 and seconds <= 900
    acceptance_report(6, "mountain car learning", ok,
                      f"goal rate over last {WINDOW} = {rate:.2f} (>= 0.60), {seconds:.0f}s (<= 900s)")


def test_criterion_7_loss_decrease(acceptance_report, pendulum_campaign, car_campaign):
    parts, ok = [], True
    for name, (series, _, _) in (("pendulum", pendulum_campaign), ("car", car_campaign)):
        for metric in ("reward_mse", "sr_mse"):
            values = getattr(series, metric)
            first, last = values[:WINDOW].mean(), values[-WINDOW:].mean()
            ok &= bool(last < first)
            parts.append(f"{name} {metric} {first:.3g}->{last:.3g}")
    acceptance_report(7, "losses decrease over training", ok, ", ".join(parts))


def _spd(rng, n, floor=0.1):
    a = rng.normal(size=(n, n))
    return a @ a.T / n + floor * np.eye(n)


def _invariant_suite(rng):
    failures = {}

    def check(name, ok):
        failures[name] = failures.get(name, 0) + (not ok)

    for _ in range(CASES):
        n = int(rng.integers(1, 6))
        state = RewardFilterState(rng.normal(size=n), _spd(rng, n), 1e-3 * np.eye(n),
                                  np.array(DEFAULT_OMEGAS), rng.dirichlet(np.ones(11)), 0.9)
        res = mmae_step(state, rng.normal(size=n), float(rng.normal(scale=5)))
        w = res.bank_weights
        check("simplex", abs(w.sum() - 1) <= 1e-12 and w.min() >= 0)
        check("psd reward", np.array_equal(res.P, res.P.T) and np.linalg.eigvalsh(res.P).min() >= -1e-10)

    for _ in range(CASES):
        n = int(rng.integers(1, 7))
        W, g = rng.normal(size=(n, n)), rng.normal(size=n)
        lhs = np.kron(g[None, :], np.eye(n)) @ W.reshape(-1, order="F")
        check("kronecker identity", np.abs(lhs - W @ g).max() <= 1e-12 * max(1.0, np.abs(W @ g).max()))

    for _ in range(CASES):
        n = int(rng.integers(1, 5))
        P_prior, h, omega = _spd(rng, n), rng.normal(size=n), float(rng.uniform(0.1, 10))
        _, P = kf_update_single(np.zeros(n), P_prior, h, 1.0, omega)
        info = np.linalg.inv(P_prior) + np.outer(h, h) / omega
        ok = np.linalg.norm(np.linalg.inv(P) - info) <= 1e-6 * np.linalg.norm(info)
        state = SrFilterState(rng.normal(size=n * n), _spd(rng, n * n), 1e-2 * np.eye(n * n),
                              _spd(rng, n, 0.5), float(rng.uniform(0.5, 1)), "dense")
        g = rng.normal(size=n)
        H = np.kron(g[None, :], np.eye(n))
        C_prior = state.a_scale**2 * state.cov + state.U
        info = np.linalg.inv(C_prior) + H.T @ np.linalg.solve(state.E, H)
        ktd_step(state, SrTdIngredients(rng.normal(size=n), g))
        ok &= np.linalg.norm(np.linalg.inv(state.cov) - info) <= 1e-6 * np.linalg.norm(info)
        check("information form", ok)

    for _ in range(CASES):
        n = int(rng.integers(1, 7))
        dense = SrFilterState(rng.normal(size=n * n), _spd(rng, n * n), 1e-2 * np.eye(n * n),
                              _spd(rng, n, 0.5), float(rng.uniform(0.5, 1)), "dense")
        psi, g = rng.normal(size=n), rng.normal(size=n)
        H = np.kron(g[None, :], np.eye(n))
        w_prior = dense.a_scale * dense.w
        C_prior = dense.a_scale**2 * dense.cov + dense.U
        K = C_prior @ H.T @ np.linalg.inv(H @ C_prior @ H.T + dense.E)
        w_ref = w_prior + K @ (psi - H @ w_prior)
        C_ref = (np.eye(n * n) - K @ H) @ C_prior
        ktd_step(dense, SrTdIngredients(psi, g))
        ok = (np.linalg.norm(dense.w - w_ref) <= 1e-9 * np.linalg.norm(w_ref)
              and np.linalg.norm(dense.cov - C_ref) <= 1e-9 * np.linalg.norm(C_ref))
        kron = SrFilterState.create(n, c0=float(rng.uniform(0.1, 10)), u=float(rng.uniform(0, 0.1)),
                                    e=float(rng.uniform(0.1, 2)))
        reference = kron.to_dense()
        ktd_step(kron, SrTdIngredients(psi, g))
        ktd_step(reference, SrTdIngredients(psi, g))
        ok &= np.linalg.norm(kron.w - reference.w) <= 1e-9 * max(np.linalg.norm(reference.w), 1e-300)
        ok &= np.linalg.norm(kron.C - reference.cov) <= 1e-9 * np.linalg.norm(reference.cov)
        check("structured vs dense KTD", ok)
        check("psd sr", np.linalg.eigvalsh(dense.cov).min() >= -1e-8
              and np.linalg.eigvalsh(kron.cov).min() >= -1e-8)

    for _ in range(CASES):
        d, m = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        rbfs = RbfSet(rng.normal(size=(m, d)), np.stack([_spd(rng, d, 0.05) for _ in range(m)]))
        s = rng.normal(size=d)
        psi = np.concatenate([rbfs(s), np.zeros(rbfs.n_features)])
        rate = float(10 ** rng.uniform(-4, 3))
        out = rgd_update(rbfs, s, psi, rng.normal(size=psi.size), float(rng.normal()), rate, rate)
        check("rgd exclusivity", np.array_equal(out.centers, rbfs.centers)
              or np.array_equal(out.covariances, rbfs.covariances))
        check("rgd spd", np.linalg.eigvalsh(out.covariances).min() >= EPS_PD * (1 - 1e-6))
    return failures


def test_criterion_8_filter_invariants(acceptance_report):
    failures, seconds = _timed(lambda: _invariant_suite(np.random.default_rng(2024)))
    bad = {k: v for k, v in failures.items() if v}
    ok = not bad and seconds <= 30
    acceptance_report(8, "filtering invariants", ok,
                      f"{len(failures)} properties x {CASES} cases, failures={bad or 0}, "
                      f"{seconds:.1f}s (<= 30s)")


def test_criterion_9_stability_sweep(acceptance_report):
    cfg = ExperimentConfig(env="pendulum", n_runs=50, n_episodes=200, kind="stability-sweep")
    results, seconds = _timed(lambda: stability_sweep(cfg, [0.5, 1.0, 2.0]))
    parts, ok = [], seconds <= 600
    for width, series in results.items():
        tail = series.mean_steps[-50:]
        ratio = tail.std() / tail.mean()
        ok &= bool(ratio <= 0.25)
        parts.append(f"width {width:g}: std/mean {ratio:.3f}")
    acceptance_report(9, "RBF width stability", ok,
                      ", ".join(parts) + f" (<= 0.25), {seconds:.0f}s (<= 600s)")

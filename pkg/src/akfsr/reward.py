"""Kalman filter for the reward weights with an MMAE bank over the measurement noise.

The reward is modelled as ``r = h.theta + noise`` where ``h`` is the
state-action feature vector. Every filter in the bank shares one predicted
prior and differs only in its measurement-noise variance; the bank weights are
updated with the Gaussian innovation likelihood and the posteriors are fused by
moment matching.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from akfsr.errors import InvalidParameterError, NumericError

DEFAULT_OMEGAS = (0.01, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
LIKELIHOOD_FLOOR = 1e-300


@dataclass
class RewardFilterState:
    theta: np.ndarray
    P: np.ndarray
    B: np.ndarray
    omega_candidates: np.ndarray
    bank_weights: np.ndarray
    f_scale: float = 0.9

    def __post_init__(self):
        self.omega_candidates = np.asarray(self.omega_candidates, dtype=float)
        if np.any(self.omega_candidates <= 0):
            raise InvalidParameterError("measurement-noise candidates must be positive")
        if self.bank_weights.shape != self.omega_candidates.shape:
            raise InvalidParameterError("one bank weight per candidate is required")

    @classmethod
    def create(cls, n: int, p0: float = 10.0, b: float = 1e-3, omegas=DEFAULT_OMEGAS,
               f_scale: float = 0.9, theta0=None) -> "RewardFilterState":
        omegas = np.asarray(omegas, dtype=float)
        theta = np.zeros(n) if theta0 is None else np.array(theta0, dtype=float)
        return cls(
            theta=theta,
            P=p0 * np.eye(n),
            B=b * np.eye(n),
            omega_candidates=omegas,
            bank_weights=np.full(len(omegas), 1.0 / len(omegas)),
            f_scale=f_scale,
        )

    def copy(self) -> "RewardFilterState":
        return RewardFilterState(self.theta.copy(), self.P.copy(), self.B.copy(),
                                 self.omega_candidates.copy(), self.bank_weights.copy(),
                                 self.f_scale)


@dataclass
class BankUpdateResult:
    theta: np.ndarray
    P: np.ndarray
    bank_weights: np.ndarray
    residual: float
    innovation_variances: np.ndarray


def kf_predict(state: RewardFilterState):
    """Prior mean and covariance under the scaled-identity evolution model."""
    f = state.f_scale
    P_prior = f * f * state.P + state.B
    return f * state.theta, 0.5 * (P_prior + P_prior.T)


def kf_update_single(theta_prior, P_prior, h, r: float, omega: float):
    """Scalar-measurement Kalman update; returns the posterior ``(theta, P)``."""
    if omega <= 0:
        raise InvalidParameterError("measurement-noise variance must be positive")
    h = np.asarray(h, dtype=float)
    ph = P_prior @ h
    z = h @ ph + omega
    if not z > 0:
        raise NumericError(f"innovation variance {z} is not positive")
    gain = ph / z
    theta = theta_prior + gain * (r - h @ theta_prior)
    P = P_prior - np.outer(gain, h @ P_prior)
    return theta, 0.5 * (P + P.T)


def gaussian_likelihood(eps, z):
    """N(eps; 0, z), floored at 1e-300 so it never underflows to zero."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise NumericError("innovation variance must be positive")
    dens = np.exp(-0.5 * np.square(eps) / z) / np.sqrt(2.0 * np.pi * z)
    dens = np.maximum(dens, LIKELIHOOD_FLOOR)
    return float(dens) if dens.ndim == 0 else dens


def mmae_step(state: RewardFilterState, h, r: float) -> BankUpdateResult:
    """Predict once, update every mode-matched filter, reweight and fuse.

    All filters share the prior, so filter ``i`` differs from the others only
    through the scalar gain ``1/Z_i``. The per-filter posteriors are
    therefore rank-one corrections of the same prior and the fused moments are
    computed from those scalars directly. Results are written back to ``state``.
    """
    h = np.asarray(h, dtype=float)
    theta_prior, P_prior = kf_predict(state)
    ph = P_prior @ h
    hph = h @ ph
    z = hph + state.omega_candidates
    eps = r - h @ theta_prior

    lik = gaussian_likelihood(eps, z)
    weights = state.bank_weights * lik
    total = weights.sum()
    if np.all(lik <= LIKELIHOOD_FLOOR) or not np.isfinite(total) or total <= 0:
        weights = np.full(len(z), 1.0 / len(z))
    else:
        weights = weights / total

    # filter i: theta_i = theta_prior + (eps / z_i) ph, P_i = P_prior - ph ph^T / z_i
    inv_z = 1.0 / z
    mean_inv_z = weights @ inv_z
    spread = weights @ np.square(inv_z - mean_inv_z)
    theta = theta_prior + (eps * mean_inv_z) * ph
    P = P_prior - (mean_inv_z - eps * eps * spread) * np.outer(ph, ph)
    P = 0.5 * (P + P.T)

    state.theta = theta
    state.P = P
    state.bank_weights = weights
    return BankUpdateResult(theta, P, weights, float(eps), z)

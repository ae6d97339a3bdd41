"""Gaussian RBF state features, block state-action features and RBF adaptation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from akfsr.errors import InvalidParameterError

EPS_PD = 1e-8


def _precisions(covariances: np.ndarray) -> np.ndarray:
    """Inverse of every covariance, validated through a Cholesky factorisation."""
    try:
        chol = np.linalg.cholesky(covariances)
    except np.linalg.LinAlgError as exc:
        raise InvalidParameterError("RBF covariance is not positive definite") from exc
    eye = np.broadcast_to(np.eye(covariances.shape[-1]), covariances.shape)
    inv_chol = np.linalg.solve(chol, eye)
    return np.swapaxes(inv_chol, -1, -2) @ inv_chol


@dataclass
class RbfSet:
    """Centers and covariances of a bank of Gaussian radial basis functions.

    ``centers`` has shape (N, D) and ``covariances`` shape (N, D, D). When
    ``include_bias`` is set the state feature vector starts with a constant 1.
    """

    centers: np.ndarray
    covariances: np.ndarray
    include_bias: bool = True
    order: int | None = None
    precisions: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.covariances = np.asarray(self.covariances, dtype=float)
        n, d = self.centers.shape
        if self.covariances.shape != (n, d, d):
            raise InvalidParameterError(
                f"covariances shape {self.covariances.shape} does not match centers {(n, d)}"
            )
        if not np.allclose(self.covariances, np.swapaxes(self.covariances, -1, -2)):
            raise InvalidParameterError("RBF covariance is not symmetric")
        if self.precisions is None:
            self.precisions = _precisions(self.covariances)

    @property
    def n_rbf(self) -> int:
        return self.centers.shape[0]

    @property
    def state_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def n_features(self) -> int:
        return self.n_rbf + int(self.include_bias)

    def __call__(self, s) -> np.ndarray:
        return build_state_features(s, self)

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "covariances": self.covariances.tolist(),
            "include_bias": self.include_bias,
            "order": self.order,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RbfSet":
        return cls(
            centers=np.asarray(data["centers"], dtype=float),
            covariances=np.asarray(data["covariances"], dtype=float),
            include_bias=bool(data.get("include_bias", True)),
            order=data.get("order"),
        )


def rbfs_on_grid(axes: Sequence[Sequence[float]], covariance=None, include_bias=True) -> RbfSet:
    """Place one RBF at every point of the Cartesian product of ``axes``.

    The first axis varies slowest. ``covariance`` may be a scalar (times the
    identity) or a full D x D matrix; it defaults to ``2/(order-1)`` times the
    identity, where ``order`` is the number of points per axis.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    dim = len(axes)
    order = len(axes[0]) if len({len(a) for a in axes}) == 1 else None
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    if covariance is None:
        if order is None or order < 2:
            raise InvalidParameterError("default covariance needs an even grid with order >= 2")
        covariance = 2.0 / (order - 1)
    cov = np.asarray(covariance, dtype=float)
    if cov.ndim == 0:
        cov = cov * np.eye(dim)
    covariances = np.broadcast_to(cov, (len(centers), dim, dim)).copy()
    return RbfSet(centers, covariances, include_bias=include_bias, order=order)


def even_grid_rbfs(lows, highs, order: int, covariance=None, include_bias=True) -> RbfSet:
    """``order`` evenly spaced centers per state dimension over ``[lows, highs]``."""
    axes = [np.linspace(lo, hi, order) for lo, hi in zip(lows, highs)]
    return rbfs_on_grid(axes, covariance=covariance, include_bias=include_bias)


def rbf_activation(s, mu, cov) -> float:
    """exp(-0.5 (s-mu)^T cov^-1 (s-mu)) for a single basis function."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if s.shape != mu.shape or cov.shape != (s.size, s.size):
        raise InvalidParameterError("dimension mismatch between state, mean and covariance")
    if not np.allclose(cov, cov.T):
        raise InvalidParameterError("covariance is not symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise InvalidParameterError("covariance is not positive definite") from exc
    z = np.linalg.solve(chol, s - mu)
    return float(np.exp(-0.5 * z @ z))


def build_state_features(s, rbfs: RbfSet) -> np.ndarray:
    """[1, phi_1(s), ..., phi_N(s)] (bias only if ``rbfs.include_bias``)."""
    d = np.asarray(s, dtype=float) - rbfs.centers
    quad = np.einsum("nd,nde,ne->n", d, rbfs.precisions, d)
    phi = np.exp(-0.5 * quad)
    if rbfs.include_bias:
        return np.concatenate(([1.0], phi))
    return phi


def build_state_action_features(phi: np.ndarray, a: int, n_actions: int) -> np.ndarray:
    """Copy ``phi`` into block ``a`` of an otherwise zero vector of length len(phi)*n_actions."""
    if not 0 <= a < n_actions:
        raise IndexError(f"action {a} out of range for {n_actions} actions")
    n = len(phi)
    psi = np.zeros(n * n_actions)
    psi[a * n:(a + 1) * n] = phi
    return psi


def rgd_update(rbfs: RbfSet, s, psi, theta, r: float, lr_mean: float, lr_cov: float,
               eps_pd: float = EPS_PD) -> RbfSet:
    """One restricted-gradient step on the squared reward error.

    With loss ``(r - psi.theta)^2`` the step either shrinks the covariances
    (when ``sqrt(loss) * theta.psi < 0``) or moves the centers, never both.
    The scalar ``theta.psi`` multiplies every basis function's step. Covariances
    are symmetrised and their eigenvalues clamped at ``eps_pd``.
    """
    if lr_mean <= 0 or lr_cov <= 0:
        raise InvalidParameterError("RGD rates must be positive")
    psi = np.asarray(psi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    err = r - psi @ theta
    if err == 0.0:
        return rbfs
    root = abs(err)
    tq = theta @ psi
    d = np.asarray(s, dtype=float) - rbfs.centers
    pd = np.einsum("nde,ne->nd", rbfs.precisions, d)
    if root * tq < 0:
        step = 2.0 * lr_cov * root * tq
        cov = rbfs.covariances + step * pd[:, :, None] * pd[:, None, :]
        cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
        evals, evecs = np.linalg.eigh(cov)
        evals = np.maximum(evals, eps_pd)
        cov = (evecs * evals[:, None, :]) @ np.swapaxes(evecs, -1, -2)
        cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
        return RbfSet(rbfs.centers.copy(), cov, rbfs.include_bias, rbfs.order)
    step = 2.0 * lr_mean * root * tq
    return RbfSet(rbfs.centers + step * pd, rbfs.covariances.copy(), rbfs.include_bias,
                  rbfs.order, precisions=rbfs.precisions)


class OneHotFeatures:
    """Indicator features for a finite state space; states are integer indices."""

    def __init__(self, n_states: int):
        self.n_states = n_states
        self._eye = np.eye(n_states)

    @property
    def n_features(self) -> int:
        return self.n_states

    def __call__(self, s) -> np.ndarray:
        return self._eye[int(s)].copy()

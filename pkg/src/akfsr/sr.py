"""Kalman temporal-difference learning of the successor-feature matrix.

The SR weight matrix ``W`` (L x L) is estimated through its column-stacked
vector ``w = vec(W)``. A transition gives the measurement

    psi_k = (g^T kron I) w + e,    g = psi_k - gamma * psi_next,

and ``(g^T kron I) w == W g``, so the L x L^2 measurement matrix is never
formed.

Two covariance layouts are supported. ``dense`` keeps the full L^2 x L^2
matrix ``C``. ``kron`` keeps an L x L factor ``S`` with ``C = S kron I``; this
form is closed under the predict/update recursion whenever the prior, the
process noise and the measurement noise are all scaled identities (the default
configuration), and reduces a step from O(L^4) to O(L^2).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from akfsr.errors import InvalidParameterError, NumericError

MAX_DENSE_DIM = 65536


@dataclass
class SrTdIngredients:
    psi_k: np.ndarray
    g: np.ndarray


def build_g(psi_k, psi_next, gamma: float, terminal: bool) -> SrTdIngredients:
    psi_k = np.asarray(psi_k, dtype=float)
    if terminal:
        return SrTdIngredients(psi_k, psi_k.copy())
    psi_next = np.asarray(psi_next, dtype=float)
    if psi_next.shape != psi_k.shape:
        raise InvalidParameterError("feature vectors differ in length")
    return SrTdIngredients(psi_k, psi_k - gamma * psi_next)


class SrFilterState:
    """Mean ``w`` and covariance of the vectorised SR weights.

    ``cov`` holds either the full covariance (``layout == "dense"``) or the
    column factor ``S`` with ``C = S kron I`` (``layout == "kron"``). ``U`` and
    ``E`` are scalars in the ``kron`` layout and may be matrices in the
    ``dense`` one.
    """

    def __init__(self, w, cov, U, E, a_scale: float = 0.9, layout: str = "kron"):
        self.w = np.asarray(w, dtype=float)
        n = int(round(np.sqrt(self.w.size)))
        if n * n != self.w.size:
            raise InvalidParameterError("w must have a square number of entries")
        self.n = n
        self.cov = np.asarray(cov, dtype=float)
        self.a_scale = float(a_scale)
        self.layout = layout
        if layout == "kron":
            if not (np.ndim(U) == 0 and np.ndim(E) == 0):
                raise InvalidParameterError("kron layout needs scalar U and E")
            if self.cov.shape != (n, n):
                raise InvalidParameterError("kron layout needs an L x L covariance factor")
            self.U = float(U)
            self.E = float(E)
            if self.E <= 0:
                raise InvalidParameterError("E must be positive definite")
        elif layout == "dense":
            if self.w.size > MAX_DENSE_DIM:
                raise InvalidParameterError(f"L^2 = {self.w.size} exceeds the dense cap {MAX_DENSE_DIM}")
            if self.cov.shape != (n * n, n * n):
                raise InvalidParameterError("dense layout needs an L^2 x L^2 covariance")
            self.U = np.asarray(U, dtype=float) * (np.eye(n * n) if np.ndim(U) == 0 else 1.0)
            self.E = np.asarray(E, dtype=float) * (np.eye(n) if np.ndim(E) == 0 else 1.0)
            try:
                np.linalg.cholesky(self.E)
            except np.linalg.LinAlgError as exc:
                raise InvalidParameterError("E must be positive definite") from exc
        else:
            raise InvalidParameterError(f"unknown covariance layout {layout!r}")

    @classmethod
    def create(cls, n: int, c0: float = 10.0, u: float = 1e-2, e=1.0, a_scale: float = 0.9,
               layout: str | None = None) -> "SrFilterState":
        """Zero mean, ``c0 * I`` covariance. The layout defaults to ``kron`` when ``e`` is a scalar."""
        if layout is None:
            layout = "kron" if np.ndim(e) == 0 else "dense"
        if layout == "dense" and n * n > MAX_DENSE_DIM:
            raise InvalidParameterError(f"L^2 = {n * n} exceeds the dense cap {MAX_DENSE_DIM}")
        w = np.zeros(n * n)
        if layout == "kron":
            return cls(w, c0 * np.eye(n), u, e, a_scale, "kron")
        return cls(w, c0 * np.eye(n * n), u, e, a_scale, "dense")

    @property
    def W(self) -> np.ndarray:
        """Column-major view of ``w`` as an L x L matrix (shares memory)."""
        return self.w.reshape((self.n, self.n), order="F")

    @property
    def C(self) -> np.ndarray:
        """Full L^2 x L^2 covariance (materialised for the ``kron`` layout)."""
        if self.layout == "kron":
            return np.kron(self.cov, np.eye(self.n))
        return self.cov

    def to_dense(self) -> "SrFilterState":
        if self.layout == "dense":
            return self.copy()
        return SrFilterState(self.w.copy(), self.C, self.U, self.E, self.a_scale, "dense")

    def copy(self) -> "SrFilterState":
        U = self.U if np.ndim(self.U) == 0 else self.U.copy()
        E = self.E if np.ndim(self.E) == 0 else self.E.copy()
        return SrFilterState(self.w.copy(), self.cov.copy(), U, E, self.a_scale, self.layout)


def ktd_step(state: SrFilterState, ing: SrTdIngredients) -> SrFilterState:
    """Predict with ``w <- a w``, ``C <- a^2 C + U`` then update on ``psi_k``. Mutates ``state``."""
    a = state.a_scale
    n = state.n
    g = ing.g
    if state.layout == "kron":
        W = a * state.W
        S = a * a * state.cov + state.U * np.eye(n)
        sg = S @ g
        s = g @ sg + state.E
        if not s > 0:
            raise NumericError("innovation covariance is singular")
        innov = ing.psi_k - W @ g
        W += np.outer(innov / s, sg)
        S = S - np.outer(sg, sg) / s
        state.w = W.reshape(-1, order="F")
        state.cov = 0.5 * (S + S.T)
        return state

    w = a * state.w
    C = a * a * state.cov + state.U
    # C H^T: column j sums g_i * C[:, i*L + j]
    cht = np.einsum("pij,i->pj", C.reshape(n * n, n, n), g)
    S = np.einsum("ijk,i->jk", cht.reshape(n, n, n), g) + state.E
    S = 0.5 * (S + S.T)
    try:
        gain = np.linalg.solve(S, cht.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericError("innovation covariance is singular") from exc
    innov = ing.psi_k - w.reshape((n, n), order="F") @ g
    state.w = w + gain @ innov
    C = C - gain @ cht.T
    state.cov = 0.5 * (C + C.T)
    return state


def sr_vector(state: SrFilterState, psi) -> np.ndarray:
    return state.W @ np.asarray(psi, dtype=float)


def q_value(theta, state: SrFilterState, psi) -> float:
    return float(np.asarray(theta) @ sr_vector(state, psi))

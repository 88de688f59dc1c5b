"""Ensemble moments, Kalman gains and the affine conditional-mean estimator.

Ensembles are 2-D arrays of shape ``(N, n)``: row ``i`` is member ``i``.  A
state ensemble and its observation ensemble are paired by row index.

Covariances use the ``1/N`` normalization, *not* the unbiased ``1/(N-1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DomainError, NumericalError

JITTER = 1e-10
JITTER_RETRY = 1e-6


def as_ensemble(members) -> np.ndarray:
    """Coerce a list of member vectors (or a 1-D array of scalars) to ``(N, n)``."""
    E = np.asarray(members, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    if E.ndim != 2:
        raise DomainError(f"ensemble must be 2-D (N, n), got shape {E.shape}")
    if E.shape[0] == 0:
        raise DomainError("empty ensemble")
    return E


def ensemble_mean(E) -> np.ndarray:
    E = as_ensemble(E)
    return np.add.reduce(E, axis=0) / E.shape[0]


def _anomalies(E: np.ndarray) -> np.ndarray:
    return E - ensemble_mean(E)


def ensemble_cov(E) -> np.ndarray:
    """Sample covariance ``(1/N) sum_i (q_i - qbar)(q_i - qbar)^T``."""
    E = as_ensemble(E)
    if E.shape[0] < 2:
        raise DomainError("covariance needs at least 2 members")
    A = _anomalies(E)
    C = (A.T @ A) / E.shape[0]
    return 0.5 * (C + C.T)


def cross_cov(EQ, EY) -> np.ndarray:
    """Cross covariance ``(1/N) sum_i (q_i - qbar)(y_i - ybar)^T`` of shape (n, m)."""
    EQ, EY = as_ensemble(EQ), as_ensemble(EY)
    if EQ.shape[0] != EY.shape[0]:
        raise DomainError(f"member count mismatch: {EQ.shape[0]} vs {EY.shape[0]}")
    if EQ.shape[0] < 2:
        raise DomainError("cross covariance needs at least 2 members")
    return (_anomalies(EQ).T @ _anomalies(EY)) / EQ.shape[0]


def solve_spd(A, B) -> np.ndarray:
    """Solve ``(A + eps I) X = B`` for symmetric ``A`` by Cholesky.

    ``eps = 1e-10 * trace(A) / dim``; on failure the solve is retried once
    with ``1e-6 * trace(A) / dim`` before raising :class:`NumericalError`.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"A must be square, got {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise DomainError(f"shape mismatch: A {A.shape}, B {B.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise DomainError("non-finite entries in linear system")
    dim = A.shape[0]
    scale = np.trace(A) / dim
    I = np.eye(dim)
    for rel in (JITTER, JITTER_RETRY):
        try:
            factor = sla.cho_factor(A + rel * scale * I, lower=True, check_finite=False)
        except sla.LinAlgError:
            continue
        X = sla.cho_solve(factor, B, check_finite=False)
        if np.all(np.isfinite(X)):
            return X
    cond = np.linalg.cond(A) if np.all(np.isfinite(A)) else np.inf
    raise NumericalError(f"matrix not positive definite after jitter (cond ~ {cond:.3e})")


def kalman_gain_linear(H, cov_q, cov_noise) -> np.ndarray:
    """Standard gain ``C H^T (H C H^T + R)^{-1}`` for a linear observation matrix."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    C = np.atleast_2d(np.asarray(cov_q, dtype=float))
    R = np.atleast_2d(np.asarray(cov_noise, dtype=float))
    m, n = H.shape
    if C.shape != (n, n) or R.shape != (m, m):
        raise DomainError(f"inconsistent shapes H {H.shape}, C {C.shape}, R {R.shape}")
    HC = H @ C
    S = HC @ H.T + R
    S = 0.5 * (S + S.T)
    # K^T = S^{-1} H C, S symmetric
    return solve_spd(S, HC).T


def kalman_gain_generalized(EQ, EY) -> np.ndarray:
    """Ensemble estimate of ``Cov(Q, Y) Cov(Y)^{-1}``."""
    Cqy = cross_cov(EQ, EY)
    Cyy = ensemble_cov(EY)
    return solve_spd(Cyy, Cqy.T).T


@dataclass(frozen=True, eq=False)
class AffineEstimator:
    """Linear conditional-mean approximation ``y -> K y + b``."""

    gain: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.gain)) and np.all(np.isfinite(self.bias))):
            raise NumericalError("non-finite affine estimator")

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return y @ self.gain.T + self.bias

    def increment(self, y_obs, Y) -> np.ndarray:
        """``g(y_obs) - g(Y_i)`` per member, with the bias cancelled symbolically."""
        return (np.asarray(y_obs, dtype=float) - Y) @ self.gain.T


def fit_affine(EQ, EY) -> AffineEstimator:
    """Least-squares affine fit of the states on the observations.

    The gain is the generalized Kalman gain and ``b = qbar - K ybar``, so the
    fitted residuals have zero ensemble mean.
    """
    EQ, EY = as_ensemble(EQ), as_ensemble(EY)
    K = kalman_gain_generalized(EQ, EY)
    b = ensemble_mean(EQ) - K @ ensemble_mean(EY)
    return AffineEstimator(K, b)

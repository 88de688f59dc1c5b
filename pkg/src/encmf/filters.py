"""Analysis transforms: EnKF, generalized EnKF, EnCMF and ML-EnCMF.

Each transform maps a forecast state ensemble ``Q`` (N, n), its paired
forecast observation ensemble ``Y`` (N, m) and the measured data ``y_obs``
(m,) to an assimilated ensemble (N, n) with member order preserved.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DomainError, NumericalError
from .observation import NoiseModel, ObservationMap
from .stats import AffineEstimator, as_ensemble, kalman_gain_generalized


def _check_pair(Q, Y, y_obs):
    Q, Y = as_ensemble(Q), as_ensemble(Y)
    y_obs = np.atleast_1d(np.asarray(y_obs, dtype=float))
    if Q.shape[0] != Y.shape[0]:
        raise DomainError(f"ensembles not paired: {Q.shape[0]} vs {Y.shape[0]} members")
    if y_obs.shape != (Y.shape[1],):
        raise DomainError(f"observation shape {y_obs.shape} != ({Y.shape[1]},)")
    return Q, Y, y_obs


def enkf_analysis(Q, Y, y_obs, K) -> np.ndarray:
    """``q_a(i) = q_f(i) + K (y_obs - y_f(i))``."""
    Q, Y, y_obs = _check_pair(Q, Y, y_obs)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (Q.shape[1], Y.shape[1]):
        raise DomainError(f"gain shape {K.shape} != {(Q.shape[1], Y.shape[1])}")
    return Q + (y_obs - Y) @ K.T


def genkf_analysis(Q, Y, y_obs) -> np.ndarray:
    """EnKF update with the ensemble estimate of ``Cov(Q,Y) Cov(Y)^{-1}`` as gain."""
    return enkf_analysis(Q, Y, y_obs, kalman_gain_generalized(Q, Y))


def cmf_analysis(Q, Y, y_obs, cm: Callable, cm_forecast: Optional[np.ndarray] = None) -> np.ndarray:
    """``q_a(i) = q_f(i) + cm(y_obs) - cm(y_f(i))``.

    If ``cm`` exposes ``increment(y_obs, Y)`` (affine and ML models do), the
    difference is taken from it so that constant terms cancel exactly.
    ``cm_forecast`` may carry precomputed ``cm(Y)`` when it is expensive.
    """
    Q, Y, y_obs = _check_pair(Q, Y, y_obs)
    if cm_forecast is None and hasattr(cm, "increment"):
        inc = cm.increment(y_obs, Y)
    else:
        at_obs = np.atleast_1d(np.asarray(cm(y_obs), dtype=float))
        at_fc = np.asarray(cm(Y) if cm_forecast is None else cm_forecast, dtype=float)
        at_fc = at_fc.reshape(Q.shape[0], -1)
        if at_obs.shape != (Q.shape[1],) or at_fc.shape != Q.shape:
            raise DomainError("conditional mean returned the wrong dimension")
        inc = at_obs - at_fc
    if inc.shape != Q.shape:
        raise DomainError("conditional mean returned the wrong dimension")
    return Q + inc


@dataclass(eq=False)
class ConditionalMeanModel:
    """``y -> linear(y) + a * nn(y)``, with the test-split metrics that chose ``a``."""

    linear: AffineEstimator
    nn: Optional[Callable] = None
    a: int = 0
    m_ann: float = float("nan")
    m_lin: float = float("nan")
    fallback: bool = False

    def __post_init__(self):
        if self.a not in (0, 1):
            raise DomainError(f"activation flag must be 0 or 1, got {self.a}")
        if self.a == 1 and self.nn is None:
            raise DomainError("a = 1 requires a network")

    def __call__(self, y):
        out = self.linear(y)
        if self.a:
            out = out + self.nn(np.asarray(y, dtype=float))
        return out

    def increment(self, y_obs, Y):
        inc = self.linear.increment(y_obs, Y)
        if self.a:
            inc = inc + (self.nn(np.asarray(y_obs, dtype=float)[None, :]) - self.nn(Y))
        return inc


def mlencmf_analysis(Q, Y, y_obs, cm: ConditionalMeanModel) -> np.ndarray:
    """``q_a(i) = q_f(i) + K (y_obs - y_f(i)) + a (g_NN(y_obs) - g_NN(y_f(i)))``."""
    Q, Y, y_obs = _check_pair(Q, Y, y_obs)
    return enkf_analysis(Q, Y, y_obs, cm.linear.gain) if cm.a == 0 else Q + cm.increment(y_obs, Y)


# --- brute-force Bayesian oracle (self-normalized importance sampling) ---

class SirResult(NamedTuple):
    mean: np.ndarray          # (Q, n)
    second: Optional[np.ndarray]  # (Q, n, n)
    ess: np.ndarray           # (Q,)
    stderr: np.ndarray        # (Q, n) delta-method standard error of the mean


def _log_weights(prior_obs: np.ndarray, ys: np.ndarray, noise: NoiseModel) -> np.ndarray:
    if noise._diagonal:
        var = noise.variances
        if np.any(var <= 0):
            raise DomainError("degenerate noise has no density")
        # -|y-h|^2/2v = y.h/v - |h|^2/2v - |y|^2/2v; the last term is constant per row
        return ys @ (prior_obs / var).T - 0.5 * np.sum(prior_obs ** 2 / var, axis=1)
    return noise.log_density(ys[:, None, :] - prior_obs[None, :, :])


def sir_moments(prior_samples, ys, hmap: ObservationMap, noise: NoiseModel,
                second: bool = False, chunk: int = 1000) -> SirResult:
    """Posterior mean (and optionally second moment) for each row of ``ys``.

    Weights ``w_s ~ N(y - h(q_s); 0, R)`` are formed in the log domain with
    the row maximum subtracted before exponentiation.
    """
    P = as_ensemble(prior_samples)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    Hp = hmap(P)
    if ys.shape[1] != Hp.shape[1]:
        raise DomainError(f"observation dimension {ys.shape[1]} != {Hp.shape[1]}")
    nq, n = ys.shape[0], P.shape[1]
    mean = np.empty((nq, n))
    stderr = np.empty((nq, n))
    ess = np.empty(nq)
    sec = np.empty((nq, n, n)) if second else None
    outer = (P[:, :, None] * P[:, None, :]).reshape(P.shape[0], n * n) if second else None
    for a in range(0, nq, chunk):
        lw = _log_weights(Hp, ys[a:a + chunk], noise)
        top = lw.max(axis=1, keepdims=True)
        if not np.all(np.isfinite(top)):
            raise NumericalError("all importance weights vanished; rescale the log-weights")
        w = np.exp(lw - top)
        s = w.sum(axis=1, keepdims=True)
        w /= s
        mu = w @ P
        mean[a:a + chunk] = mu
        ess[a:a + chunk] = 1.0 / np.sum(w * w, axis=1)
        # delta-method variance of a self-normalized estimate: sum_s w_s^2 (q_s - mu)^2
        w2 = w * w
        stderr[a:a + chunk] = np.sqrt(np.maximum(w2 @ (P * P) - 2 * mu * (w2 @ P)
                                                 + mu * mu * w2.sum(axis=1, keepdims=True), 0.0))
        if second:
            sec[a:a + chunk] = (w @ outer).reshape(-1, n, n)
    return SirResult(mean, sec, ess, stderr)


def posterior_mean_sir(prior_samples, y, hmap, noise) -> np.ndarray:
    """Importance-sampling estimate of ``E[Q | Y = y]`` from prior samples."""
    y = np.asarray(y, dtype=float)
    single = y.ndim <= 1
    res = sir_moments(prior_samples, np.atleast_1d(y)[None, :] if single else y, hmap, noise)
    return res.mean[0] if single else res.mean


def posterior_second_moment_sir(prior_samples, y, hmap, noise) -> np.ndarray:
    """Importance-sampling estimate of ``E[Q Q^T | Y = y]``."""
    y = np.asarray(y, dtype=float)
    single = y.ndim <= 1
    res = sir_moments(prior_samples, np.atleast_1d(y)[None, :] if single else y, hmap, noise,
                      second=True)
    return res.second[0] if single else res.second


def conditional_variance_sir(prior_samples, ys, hmap, noise, chunk: int = 1000) -> np.ndarray:
    """``E[Q Q^T | y] - E[Q | y] E[Q | y]^T`` per row of ``ys``, shape (Q, n, n)."""
    res = sir_moments(prior_samples, ys, hmap, noise, second=True, chunk=chunk)
    return res.second - res.mean[:, :, None] * res.mean[:, None, :]


class SirConditionalMean:
    """Conditional-mean oracle evaluated pointwise by :func:`sir_moments`."""

    def __init__(self, prior_samples, hmap, noise, chunk: int = 1000):
        self.prior = as_ensemble(prior_samples)
        self.hmap = hmap
        self.noise = noise
        self.chunk = chunk

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim <= 1:
            return sir_moments(self.prior, np.atleast_1d(y)[None, :], self.hmap, self.noise).mean[0]
        return sir_moments(self.prior, y, self.hmap, self.noise, chunk=self.chunk).mean

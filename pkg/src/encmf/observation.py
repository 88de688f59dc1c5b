"""Observation operators and additive Gaussian observation noise."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DomainError


@dataclass(frozen=True)
class ObservationMap:
    """``h: R^n -> R^m``.

    ``kind`` is ``"identity"``, ``"selector"`` (``indices`` are 1-based and
    strictly increasing) or ``"piecewise"`` (scalar ``q if q <= 0 else q**2``).
    """

    kind: str
    n: int
    indices: tuple = field(default=())

    def __post_init__(self):
        if self.kind == "selector":
            idx = tuple(int(i) for i in self.indices)
            if not idx or any(b <= a for a, b in zip(idx, idx[1:])):
                raise DomainError("selector indices must be non-empty and strictly increasing")
            if idx[0] < 1 or idx[-1] > self.n:
                raise DomainError(f"selector indices must lie in [1, {self.n}]")
            object.__setattr__(self, "indices", idx)
        elif self.kind == "piecewise":
            if self.n != 1:
                raise DomainError("piecewise map is scalar (n = m = 1)")
        elif self.kind != "identity":
            raise DomainError(f"unknown observation map {self.kind!r}")

    @property
    def m(self) -> int:
        return len(self.indices) if self.kind == "selector" else self.n

    @property
    def is_linear(self) -> bool:
        return self.kind != "piecewise"

    def matrix(self) -> np.ndarray:
        if not self.is_linear:
            raise DomainError("nonlinear observation map has no matrix")
        if self.kind == "identity":
            return np.eye(self.n)
        H = np.zeros((self.m, self.n))
        H[np.arange(self.m), np.array(self.indices) - 1] = 1.0
        return H

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.n:
            raise DomainError(f"state dimension {q.shape[-1]} != {self.n}")
        if self.kind == "identity":
            return q.copy()
        if self.kind == "selector":
            return q[..., np.array(self.indices) - 1]
        return np.where(q <= 0.0, q, q * q)


def identity_map(n: int) -> ObservationMap:
    return ObservationMap("identity", n)


def even_selector(n: int) -> ObservationMap:
    return ObservationMap("selector", n, tuple(range(2, n + 1, 2)))


def piecewise_map() -> ObservationMap:
    return ObservationMap("piecewise", 1)


def apply_h(hmap: ObservationMap, q) -> np.ndarray:
    return hmap(q)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Zero-mean Gaussian noise with covariance ``cov`` (m x m)."""

    cov: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise DomainError(f"noise covariance must be square, got {C.shape}")
        if not np.all(np.isfinite(C)) or not np.allclose(C, C.T, rtol=1e-12, atol=0.0):
            raise DomainError("noise covariance must be finite and symmetric")
        diagonal = np.count_nonzero(C - np.diag(np.diag(C))) == 0
        if diagonal:
            if np.any(np.diag(C) < 0):
                raise DomainError("noise covariance is not positive semi-definite")
            root = np.diag(np.sqrt(np.diag(C)))
        else:
            w, V = np.linalg.eigh(C)
            if w.min() < -1e-12 * max(1.0, w.max()):
                raise DomainError("noise covariance is not positive semi-definite")
            root = V * np.sqrt(np.clip(w, 0.0, None))
        object.__setattr__(self, "cov", C)
        object.__setattr__(self, "_diagonal", diagonal)
        object.__setattr__(self, "_root", root)

    @classmethod
    def isotropic(cls, m: int, variance: float) -> "NoiseModel":
        return cls(variance * np.eye(m))

    @property
    def m(self) -> int:
        return self.cov.shape[0]

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.cov).copy()

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.m,) if size is None else (size, self.m)
        z = rng.standard_normal(shape)
        if self._diagonal:
            return z * np.sqrt(np.diag(self.cov))
        return z @ self._root.T

    def log_density(self, residual) -> np.ndarray:
        """Gaussian log-density of residuals (last axis), up to the additive constant."""
        r = np.asarray(residual, dtype=float)
        if self._diagonal:
            var = np.diag(self.cov)
            if np.any(var <= 0):
                raise DomainError("degenerate noise has no density")
            return -0.5 * np.sum(r * r / var, axis=-1)
        L = np.linalg.cholesky(self.cov)
        flat = r.reshape(-1, r.shape[-1])
        z = solve_triangular(L, flat.T, lower=True)
        return -0.5 * np.sum(z * z, axis=0).reshape(r.shape[:-1])


def sample_noise(noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    return noise.sample(rng)


def forecast_observations(EQ, hmap: ObservationMap, noise: NoiseModel,
                          rng: np.random.Generator) -> np.ndarray:
    """``y_i = h(q_i) + xi_i`` with independent draws; row ``i`` pairs with member ``i``."""
    EQ = np.asarray(EQ, dtype=float)
    HQ = hmap(EQ)
    if HQ.shape[-1] != noise.m:
        raise DomainError(f"observation dimension {HQ.shape[-1]} != noise dimension {noise.m}")
    return HQ + noise.sample(rng, size=EQ.shape[0])


# built-in observation scenarios
L63_NOISE_VARIANCE = 4.0    # N(0, 2^2 I_3), every state observed
L96_NOISE_VARIANCE = 0.5    # N(0, 0.5 I_20), even-indexed components
DEMO1D_NOISE_VARIANCE = 0.25


def scenario(model_name: str, n: int):
    """Observation map and noise of the built-in twin-experiment scenarios."""
    if model_name == "lorenz63":
        return identity_map(3), NoiseModel.isotropic(3, L63_NOISE_VARIANCE)
    if model_name == "lorenz96":
        hmap = even_selector(n)
        return hmap, NoiseModel.isotropic(hmap.m, L96_NOISE_VARIANCE)
    raise DomainError(f"no observation scenario for {model_name!r}")

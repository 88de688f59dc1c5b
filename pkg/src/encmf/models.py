"""Lorenz-63/96 dynamics and a fixed-step RK4 integrator.

All functions act on the last axis, so a whole ensemble ``(N, n)`` is
propagated in one call.  The arithmetic is elementwise, which makes the
batched result bit-identical to propagating members one at a time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError, NumericalError

BLOWUP_LIMIT = 1e6
DEFAULT_DT = 0.01


def lorenz63_rhs(q, sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 3:
        raise DomainError(f"Lorenz-63 state must have 3 components, got {q.shape[-1]}")
    if not np.all(np.isfinite(q)):
        raise DomainError("non-finite Lorenz-63 state")
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    return np.stack([sigma * (y - x), x * (rho - z) - y, x * y - beta * z], axis=-1)


def lorenz96_rhs(q, F=8.0):
    """``dq_i = (q_{i+1} - q_{i-2}) q_{i-1} - q_i + F`` with periodic indices."""
    q = np.asarray(q, dtype=float)
    if q.shape[-1] < 4:
        raise DomainError(f"Lorenz-96 needs n >= 4, got {q.shape[-1]}")
    return (np.roll(q, -1, axis=-1) - np.roll(q, 2, axis=-1)) * np.roll(q, 1, axis=-1) - q + F


def rk4_step(rhs: Callable, q, dt: float):
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    q = np.asarray(q, dtype=float)
    k1 = rhs(q)
    k2 = rhs(q + 0.5 * dt * k1)
    k3 = rhs(q + 0.5 * dt * k2)
    k4 = rhs(q + dt * k3)
    out = q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite state in RK4 step")
    return out


@dataclass(frozen=True)
class Lorenz63:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    name = "lorenz63"

    @property
    def dim(self) -> int:
        return 3

    def rhs(self, q):
        return lorenz63_rhs(q, self.sigma, self.rho, self.beta)

    def fixed_points(self):
        r = np.sqrt(self.beta * (self.rho - 1.0))
        return np.array([[0.0, 0.0, 0.0], [r, r, self.rho - 1.0], [-r, -r, self.rho - 1.0]])


@dataclass(frozen=True)
class Lorenz96:
    n: int = 40
    F: float = 8.0
    name = "lorenz96"

    def __post_init__(self):
        if self.n < 4:
            raise ConfigError(f"Lorenz-96 needs n >= 4, got {self.n}")

    @property
    def dim(self) -> int:
        return self.n

    def rhs(self, q):
        return lorenz96_rhs(q, self.F)


def make_model(name: str, **params):
    if name == "lorenz63":
        return Lorenz63(**params)
    if name == "lorenz96":
        return Lorenz96(**params)
    raise ConfigError(f"unknown model {name!r}")


def n_steps(duration: float, dt: float) -> int:
    """Number of ``dt`` steps in ``duration``; rejects non-integer multiples."""
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    k = int(round(duration / dt))
    if k < 1 or abs(k * dt - duration) > 1e-9 * max(1.0, abs(duration)):
        raise ConfigError(f"duration {duration} is not a positive integer multiple of dt={dt}")
    return k


def propagate(model, q, duration: float, dt: float = DEFAULT_DT,
              forcing: Optional[Callable] = None):
    """Integrate ``q`` (one state or an ensemble) forward by ``duration``.

    ``forcing(q, step)`` is an optional hook returning an additive
    perturbation applied after every RK4 step.
    """
    k = n_steps(duration, dt)
    q = np.asarray(q, dtype=float)
    for step in range(k):
        q = rk4_step(model.rhs, q, dt)
        if forcing is not None:
            q = q + forcing(q, step)
        if np.max(np.abs(q)) > BLOWUP_LIMIT:
            raise NumericalError(
                f"state blow-up in {getattr(model, 'name', type(model).__name__)} after {step + 1} steps (|q| > {BLOWUP_LIMIT:g})")
    return q

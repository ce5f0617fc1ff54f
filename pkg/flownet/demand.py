"""Jacobi demand processes on [0, 1].

dD = kappa * (theta(t) - D) dt + sigma * sqrt(D (1 - D)) dW

Paths come from a truncated Euler-Maruyama scheme; the controller only
needs the conditional mean, which solves m' = kappa * (theta - m).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, GridError, TimeOrderError
from .timefuncs import CoefficientFunction

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
# tolerance for "this time lies on the SDE grid"
GRID_ATOL = 1e-9


def derive_seed(master_seed: int, index: int) -> int:
    """splitmix64 mix of (master_seed, index), stable across platforms."""
    z = (int(master_seed) * 0x9E3779B97F4A7C15 + int(index) + 0x632BE59BD9B4E019) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class JacobiDemandSpec:
    node_id: str
    kappa: float
    theta: CoefficientFunction
    sigma: float
    d0: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise DomainError("mean-reversion speed kappa must be positive", node=self.node_id, kappa=self.kappa)
        if self.sigma < 0:
            raise DomainError("noise scale sigma must be non-negative", node=self.node_id, sigma=self.sigma)
        if not 0.0 <= self.d0 <= 1.0:
            raise DomainError("initial demand d0 must lie in [0, 1]", node=self.node_id, d0=self.d0)

    def theta_violations(self, t0: float, T: float) -> list[str]:
        """Range check of theta on [t0, T]: amplitude bound first, sampling if that is inconclusive."""
        if self.theta.lower_bound() >= 0.0 and self.theta.upper_bound() <= 1.0:
            return []
        sampled = np.asarray(self.theta(np.linspace(t0, T, 2001)))
        problems = []
        if sampled.min() < 0.0:
            problems.append(f"demand {self.node_id}: theta drops below 0 on [{t0}, {T}] (min {sampled.min():.6g})")
        if sampled.max() > 1.0:
            problems.append(f"demand {self.node_id}: theta exceeds 1 on [{t0}, {T}] (max {sampled.max():.6g})")
        return problems

    def with_sigma(self, sigma: float) -> "JacobiDemandSpec":
        return JacobiDemandSpec(self.node_id, self.kappa, self.theta, sigma, self.d0)


@dataclass(frozen=True)
class DemandPath:
    node_id: str
    times: np.ndarray
    values: np.ndarray

    def grid_index(self, t: float) -> int:
        return grid_index(self.times, t)

    def value_at(self, t: float) -> float:
        return float(self.values[self.grid_index(t)])


def sde_grid(t0: float, T: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise GridError("time step must be positive", dt=dt)
    if not T > t0:
        raise GridError("horizon end must exceed its start", t0=t0, T=T)
    steps = int(np.ceil((T - t0) / dt - GRID_ATOL))
    return t0 + dt * np.arange(steps + 1)


def grid_index(times: np.ndarray, t: float) -> int:
    index = int(round((t - times[0]) / (times[1] - times[0]))) if times.size > 1 else 0
    if index < 0 or index >= times.size or abs(times[index] - t) > GRID_ATOL:
        raise GridError("time does not lie on the SDE grid", t=t, dt=float(times[1] - times[0]))
    return index


def _euler_maruyama(spec: JacobiDemandSpec, times: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Truncated scheme, normals shaped (paths, steps); returns (paths, steps + 1)."""
    paths, steps = normals.shape
    values = np.empty((paths, steps + 1))
    values[:, 0] = spec.d0
    theta = np.asarray(spec.theta(times[:-1]), dtype=float)
    dts = np.diff(times)
    for j in range(steps):
        d = values[:, j]
        dt = dts[j]
        proposal = d + dt * spec.kappa * (theta[j] - d) + spec.sigma * np.sqrt(dt * d * (1.0 - d)) * normals[:, j]
        values[:, j + 1] = np.where(proposal >= 1.0, 1.0, np.where(proposal <= 0.0, 0.0, proposal))
    return values


def simulate_jacobi(spec: JacobiDemandSpec, t0: float, T: float, dt: float, rng_seed: int) -> DemandPath:
    times = sde_grid(t0, T, dt)
    normals = np.random.default_rng(rng_seed).standard_normal(times.size - 1)
    values = _euler_maruyama(spec, times, normals[np.newaxis, :])[0]
    return DemandPath(spec.node_id, times, values)


def simulate_jacobi_ensemble(spec: JacobiDemandSpec, t0: float, T: float, dt: float, seeds) -> np.ndarray:
    """One row per seed; row k equals simulate_jacobi(..., seeds[k]).values."""
    times = sde_grid(t0, T, dt)
    normals = np.stack([np.random.default_rng(seed).standard_normal(times.size - 1) for seed in seeds])
    logger.debug("simulating %s Jacobi paths for %s on %s steps", len(seeds), spec.node_id, times.size - 1)
    return _euler_maruyama(spec, times, normals)


def conditional_mean(spec: JacobiDemandSpec, t_cond, d_cond, t):
    """E[D_t | D_{t_cond} = d_cond]; broadcasts over all three arguments."""
    t_cond = np.asarray(t_cond, dtype=float)
    d_cond = np.asarray(d_cond, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < t_cond):
        raise TimeOrderError("conditional mean is only defined for t >= t_cond", node=spec.node_id)
    if np.any((d_cond < 0.0) | (d_cond > 1.0)):
        raise DomainError("conditioning demand must lie in [0, 1]", node=spec.node_id)
    decay = np.exp(-spec.kappa * (t - t_cond))
    value = d_cond * decay + spec.kappa * spec.theta.exp_weighted_integral(spec.kappa, t_cond, t)
    value = np.asarray(value, dtype=float)
    return value[()] if value.ndim == 0 else value

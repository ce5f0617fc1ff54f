"""Time-dependent coefficient functions with exact antiderivatives.

Velocities, damping factors and mean-reversion levels are all of the form
``a + sum_k b_k * sin(c_k * pi * t + phi_k)``; a piecewise-constant family
is available for coefficients that switch between levels.  Every method
accepts scalars or numpy arrays.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .exceptions import ArgumentOrderError, DomainError, NonInvertibleError

logger = logging.getLogger(__name__)

NEWTON_MAXITER = 60
# coarse grid used when the closed-form lower bound cannot prove positivity
_SAMPLE_POINTS = 257


def _scalar_or_array(value):
    value = np.asarray(value, dtype=float)
    return value[()] if value.ndim == 0 else value


class CoefficientFunction(ABC):
    """Scalar function of time with an explicit antiderivative."""

    @abstractmethod
    def __call__(self, t):
        ...

    @abstractmethod
    def antiderivative(self, t):
        ...

    @abstractmethod
    def lower_bound(self) -> float:
        """A value <= f(t) for every t."""

    @abstractmethod
    def upper_bound(self) -> float:
        ...

    @abstractmethod
    def exp_weighted_integral(self, kappa, a, b):
        """Integral of exp(-kappa*(b - s)) * f(s) over [a, b], kappa > 0."""

    def integral(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(a > b):
            raise ArgumentOrderError("integral bounds must satisfy a <= b", a=_first(a), b=_first(b))
        return _scalar_or_array(self.antiderivative(b) - self.antiderivative(a))

    def advance_by_integral(self, t_start, target, *, xtol=1e-14):
        """Return t_end with integral(t_start, t_end) == target."""
        t_start = np.asarray(t_start, dtype=float)
        target = np.asarray(target, dtype=float)
        if np.any(target < 0):
            raise DomainError("integral target must be non-negative", target=float(np.min(target)))
        t_start, target = np.broadcast_arrays(t_start, target)
        f_min, f_max = self._inversion_bounds(t_start, target, forward=True)
        level = self.antiderivative(t_start) + target
        lo = t_start + target / f_max
        hi = t_start + target / f_min
        return _scalar_or_array(self._solve_level(level, lo, hi, xtol=xtol))

    def retreat_by_integral(self, t_end, target, *, xtol=1e-14):
        """Return t_start with integral(t_start, t_end) == target."""
        t_end = np.asarray(t_end, dtype=float)
        target = np.asarray(target, dtype=float)
        if np.any(target < 0):
            raise DomainError("integral target must be non-negative", target=float(np.min(target)))
        t_end, target = np.broadcast_arrays(t_end, target)
        f_min, f_max = self._inversion_bounds(t_end, target, forward=False)
        level = self.antiderivative(t_end) - target
        lo = t_end - target / f_min
        hi = t_end - target / f_max
        return _scalar_or_array(self._solve_level(level, lo, hi, xtol=xtol))

    def _inversion_bounds(self, anchor, target, *, forward):
        f_max = self.upper_bound()
        f_min = self.lower_bound()
        if f_min > 0:
            return f_min, f_max
        # Closed-form bound is not positive: sample the reachable span instead.
        if f_max <= 0:
            raise NonInvertibleError("function is nowhere positive, antiderivative is not invertible")
        span = float(np.max(target)) / f_max if np.size(target) else 0.0
        width = max(span, 1e-3)
        lo_t = float(np.min(anchor))
        hi_t = float(np.max(anchor))
        for _ in range(64):
            grid = np.linspace(lo_t, hi_t + width, _SAMPLE_POINTS) if forward \
                else np.linspace(lo_t - width, hi_t, _SAMPLE_POINTS)
            sampled = float(np.min(self(grid)))
            if sampled <= 0:
                raise NonInvertibleError(
                    "function is not strictly positive on the search bracket",
                    t_min=float(grid[0]), t_max=float(grid[-1]), sampled_min=sampled,
                )
            if sampled * width >= float(np.max(target)):
                return sampled, f_max
            width *= 2.0
        raise NonInvertibleError("could not bracket the antiderivative inverse")

    def _solve_level(self, level, lo, hi, *, xtol):
        """Safeguarded Newton iteration for antiderivative(t) == level, t in [lo, hi]."""
        shape = np.shape(level)
        level = np.array(level, dtype=float).ravel()
        lo = np.array(lo, dtype=float).ravel()
        hi = np.array(hi, dtype=float).ravel()
        t = 0.5 * (lo + hi)
        done = hi - lo <= xtol
        tol = 8.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(level))
        for _ in range(NEWTON_MAXITER):
            if np.all(done):
                break
            residual = self.antiderivative(t) - level
            done |= np.abs(residual) <= tol
            below = residual < 0
            lo = np.where(below & ~done, t, lo)
            hi = np.where(~below & ~done, t, hi)
            slope = self(t)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = t - residual / slope
            inside = (step > lo) & (step < hi) & np.isfinite(step)
            t = np.where(done, t, np.where(inside, step, 0.5 * (lo + hi)))
            done |= hi - lo <= xtol
        pending = np.flatnonzero(~done)
        for index in pending:
            a, b, y = float(lo[index]), float(hi[index]), float(level[index])
            if self.antiderivative(a) >= y:
                t[index] = a
            elif self.antiderivative(b) <= y:
                t[index] = b
            else:
                t[index] = brentq(lambda s: self.antiderivative(s) - y, a, b, xtol=xtol)
        if pending.size:
            logger.debug("antiderivative inversion fell back to brentq for %s point(s)", pending.size)
        return t.reshape(shape)


def _first(values):
    values = np.atleast_1d(values)
    return float(values.flat[0]) if values.size else None


@dataclass(frozen=True)
class SineTerm:
    """amplitude * sin(angular_factor * pi * t + phase)."""

    amplitude: float
    angular_factor: float
    phase: float = 0.0

    @property
    def omega(self) -> float:
        return self.angular_factor * np.pi


@dataclass(frozen=True)
class TimeFunction(CoefficientFunction):
    """a + sum_k b_k sin(c_k pi t + phi_k)."""

    constant: float = 0.0
    terms: tuple[SineTerm, ...] = field(default_factory=tuple)

    @classmethod
    def const(cls, value: float) -> "TimeFunction":
        return cls(constant=float(value))

    @classmethod
    def sinusoid(cls, constant, amplitude, angular_factor, phase=0.0) -> "TimeFunction":
        return cls(constant=float(constant), terms=(SineTerm(float(amplitude), float(angular_factor), float(phase)),))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        value = np.full_like(t, self.constant)
        for term in self.terms:
            value = value + term.amplitude * np.sin(term.omega * t + term.phase)
        return _scalar_or_array(value)

    def antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        value = self.constant * t
        for term in self.terms:
            if term.omega == 0.0:
                value = value + term.amplitude * np.sin(term.phase) * t
            else:
                value = value - term.amplitude / term.omega * np.cos(term.omega * t + term.phase)
        return _scalar_or_array(value)

    def lower_bound(self) -> float:
        return self.constant + sum(self._term_range(term)[0] for term in self.terms)

    def upper_bound(self) -> float:
        return self.constant + sum(self._term_range(term)[1] for term in self.terms)

    @staticmethod
    def _term_range(term):
        if term.omega == 0.0:
            v = term.amplitude * np.sin(term.phase)
            return v, v
        return -abs(term.amplitude), abs(term.amplitude)

    def exp_weighted_integral(self, kappa, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        decay = np.exp(-kappa * (b - a))
        value = self.constant * (1.0 - decay) / kappa
        for term in self.terms:
            w = term.omega
            at_b = kappa * np.sin(w * b + term.phase) - w * np.cos(w * b + term.phase)
            at_a = kappa * np.sin(w * a + term.phase) - w * np.cos(w * a + term.phase)
            value = value + term.amplitude * (at_b - decay * at_a) / (kappa ** 2 + w ** 2)
        return _scalar_or_array(value)

    def __str__(self):
        parts = [f"{self.constant:g}"]
        for term in self.terms:
            parts.append(f"{term.amplitude:+g}*sin({term.angular_factor:g}*pi*t{term.phase:+g})")
        return " ".join(parts)


@dataclass(frozen=True)
class PiecewiseConstant(CoefficientFunction):
    """values[k] on [breakpoints[k-1], breakpoints[k]), extended to +-inf at the ends."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.breakpoints) + 1:
            raise DomainError("piecewise-constant function needs len(values) == len(breakpoints) + 1")
        if any(b >= a for a, b in zip(self.breakpoints[1:], self.breakpoints[:-1])):
            raise DomainError("breakpoints must be strictly increasing")

    @property
    def _edges(self):
        edges = np.asarray(self.breakpoints, dtype=float)
        return np.concatenate(([-np.inf], edges)), np.concatenate((edges, [np.inf]))

    def _cumulative(self):
        # antiderivative value at each breakpoint, anchored at 0 on the first breakpoint
        values = np.asarray(self.values, dtype=float)
        edges = np.asarray(self.breakpoints, dtype=float)
        if edges.size == 0:
            return edges
        return np.concatenate(([0.0], np.cumsum(values[1:-1] * np.diff(edges))))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        index = np.searchsorted(np.asarray(self.breakpoints, dtype=float), t, side="right")
        return _scalar_or_array(np.asarray(self.values, dtype=float)[index])

    def antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        values = np.asarray(self.values, dtype=float)
        edges = np.asarray(self.breakpoints, dtype=float)
        if edges.size == 0:
            return _scalar_or_array(values[0] * t)
        index = np.searchsorted(edges, t, side="right")
        anchor_index = np.maximum(index - 1, 0)
        base = self._cumulative()[anchor_index]
        return _scalar_or_array(base + values[index] * (t - edges[anchor_index]))

    def lower_bound(self) -> float:
        return float(min(self.values))

    def upper_bound(self) -> float:
        return float(max(self.values))

    def exp_weighted_integral(self, kappa, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        left, right = self._edges
        value = np.zeros(np.broadcast(a, b).shape)
        for v, l_k, r_k in zip(self.values, left, right):
            lo = np.clip(l_k, a, b)
            hi = np.clip(r_k, a, b)
            value = value + v * (np.exp(-kappa * (b - hi)) - np.exp(-kappa * (b - lo))) / kappa
        return _scalar_or_array(value)


def evaluate(f: CoefficientFunction, t):
    return f(t)


def integral(f: CoefficientFunction, a, b):
    return f.integral(a, b)


def advance_by_integral(f: CoefficientFunction, t_start, target, *, xtol=1e-14):
    return f.advance_by_integral(t_start, target, xtol=xtol)


def retreat_by_integral(f: CoefficientFunction, t_end, target, *, xtol=1e-14):
    return f.retreat_by_integral(t_end, target, xtol=xtol)

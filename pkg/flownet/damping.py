"""Nonlinear damping along characteristics.

On a characteristic the transported density obeys ``z' = -mu(t) * g_hat(z)``.
With ``g_tilde = 1 / g_hat`` and its antiderivative ``G_tilde`` the solution
is explicit: ``G_tilde(z(t_start)) = G_tilde(z(t_end)) + int mu``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, InfeasibleControlError, RangeError
from .timefuncs import CoefficientFunction

logger = logging.getLogger(__name__)

# C_n chosen so that int_0^0.1 C_n z^n dz == 1/200 for every n
DEFAULT_COEFFICIENTS = {1: 1.0, 2: 15.0, 3: 200.0, 4: 2500.0}
NORMALIZATION_UPPER = 0.1
NORMALIZATION_TARGET = 1.0 / 200.0

NONE = "none"
MONOMIAL = "monomial"


def _out(value):
    value = np.asarray(value, dtype=float)
    return value[()] if value.ndim == 0 else value


@dataclass(frozen=True)
class DampingShape:
    kind: str = NONE
    degree: int = 0
    coefficient: float = 0.0

    def __post_init__(self):
        if self.kind == NONE:
            return
        if self.kind != MONOMIAL:
            raise DomainError(f"unknown damping kind {self.kind!r}")
        if int(self.degree) != self.degree or self.degree < 1:
            raise DomainError("monomial damping needs an integer degree >= 1", degree=self.degree)
        if not self.coefficient > 0:
            raise DomainError("monomial damping needs a positive coefficient", coefficient=self.coefficient)

    @classmethod
    def none(cls) -> "DampingShape":
        return cls()

    @classmethod
    def monomial(cls, degree: int, coefficient: float | None = None) -> "DampingShape":
        if coefficient is None:
            if degree not in DEFAULT_COEFFICIENTS:
                raise DomainError("no default coefficient for this degree, pass one explicitly", degree=degree)
            coefficient = DEFAULT_COEFFICIENTS[degree]
        return cls(MONOMIAL, int(degree), float(coefficient))

    @property
    def is_none(self) -> bool:
        return self.kind == NONE

    @property
    def label(self) -> str:
        if self.is_none:
            return "none"
        return f"n{self.degree}"

    def g_hat(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < 0):
            raise DomainError("damping shape is defined for z >= 0")
        if self.is_none:
            return _out(np.zeros_like(z))
        return _out(self.coefficient * z ** self.degree)

    def G_tilde(self, z):
        """Antiderivative of 1 / g_hat, defined for z > 0."""
        self._require_monomial()
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise DomainError("G_tilde is singular at 0 and undefined below")
        n, c = self.degree, self.coefficient
        if n == 1:
            return _out(np.log(z) / c)
        return _out(z ** (1 - n) / (c * (1 - n)))

    def G_tilde_inv(self, y):
        self._require_monomial()
        y = np.asarray(y, dtype=float)
        n, c = self.degree, self.coefficient
        if n == 1:
            return _out(np.exp(c * y))
        if np.any(y >= 0):
            raise RangeError("G_tilde has range (-inf, 0) for degree >= 2", index=int(np.flatnonzero(np.atleast_1d(y) >= 0)[0]))
        return _out((c * (1 - n) * y) ** (1.0 / (1 - n)))

    def normalization_integral(self, upper: float = NORMALIZATION_UPPER) -> float:
        if self.is_none:
            return 0.0
        return self.coefficient * upper ** (self.degree + 1) / (self.degree + 1)

    def _require_monomial(self):
        if self.is_none:
            raise DomainError("an undamped shape has no G_tilde")


def g_hat(shape: DampingShape, z):
    return shape.g_hat(z)


def G_tilde(shape: DampingShape, z):
    return shape.G_tilde(z)


def G_tilde_inv(shape: DampingShape, y):
    return shape.G_tilde_inv(y)


def damping_mass(mu: CoefficientFunction, t_start, t_end):
    return mu.integral(t_start, t_end)


def _prepare(z, mass):
    z = np.asarray(z, dtype=float)
    mass = np.asarray(mass, dtype=float)
    if np.any(z < 0):
        raise DomainError("density along a characteristic must be non-negative")
    if np.any(mass < 0):
        raise DomainError("damping mass must be non-negative")
    z, mass = np.broadcast_arrays(z, mass)
    return z, mass


def backward_damp_by_mass(shape: DampingShape, z_end, mass):
    """Upstream density that decays to z_end after accumulating the given damping mass."""
    z_end, mass = _prepare(z_end, mass)
    z_start = np.array(z_end, dtype=float)
    if shape.is_none:
        return _out(z_start)
    active = (z_end > 0) & (mass > 0)
    y = shape.G_tilde(z_end[active]) + mass[active]
    y = np.atleast_1d(y)
    if shape.degree >= 2 and np.any(y >= 0):
        position = int(np.flatnonzero(y >= 0)[0])
        index = int(np.flatnonzero(active.ravel())[position])
        raise InfeasibleControlError(
            "backward damping blows up: no finite upstream density reaches the target",
            index=index,
            damping_mass=float(mass.ravel()[index]),
            z_end=float(z_end.ravel()[index]),
            shape=shape.label,
        )
    z_start[active] = shape.G_tilde_inv(y)
    return _out(z_start)


def forward_damp_by_mass(shape: DampingShape, z_start, mass):
    z_start, mass = _prepare(z_start, mass)
    z_end = np.array(z_start, dtype=float)
    if shape.is_none:
        return _out(z_end)
    active = (z_start > 0) & (mass > 0)
    z_end[active] = shape.G_tilde_inv(np.atleast_1d(shape.G_tilde(z_start[active])) - mass[active])
    return _out(z_end)


def backward_damp(shape: DampingShape, mu: CoefficientFunction, t_start, t_end, z_end):
    return backward_damp_by_mass(shape, z_end, damping_mass(mu, t_start, t_end))


def forward_damp(shape: DampingShape, mu: CoefficientFunction, t_start, t_end, z_start):
    return forward_damp_by_mass(shape, z_start, damping_mass(mu, t_start, t_end))

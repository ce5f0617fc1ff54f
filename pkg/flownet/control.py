"""Explicit optimal inflow for damped transport on a tree.

The optimal outflow at each demand node is the conditional mean demand
given the latest update.  Following characteristics backwards from the
leaves, each arc turns a required exit flux into a required entry flux:

    t_exit  = advance_by_integral(lambda_e, t_enter, length_e)
    z_exit  = F_exit / lambda_e(t_exit)
    z_enter = backward_damp(shape_e, mu_e, t_enter, t_exit, z_exit)
    F_enter = lambda_e(t_enter) * z_enter

and a junction asks for the sum of what its outgoing arcs need.  The
characteristic geometry (arrival times, damping masses) does not depend on
the demand, so it is traced once into an ``ArcPassage`` tree and reused for
every realization and every damping shape.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .damping import backward_damp_by_mass
from .demand import DemandPath, JacobiDemandSpec, conditional_mean
from .exceptions import DomainError, InfeasibleControlError, TimeOrderError, UndefinedSplitError
from .network import DEMAND, JUNCTION, TreeNetwork, path_to

logger = logging.getLogger(__name__)

Targets = Mapping[str, Callable[[np.ndarray], np.ndarray]]


# ---------------- information -----------------
@dataclass(frozen=True)
class InformationPolicy:
    """Update times and the demand observed at each of them."""

    update_times: tuple[float, ...]
    observations: Mapping[str, tuple[float, ...]]

    def __post_init__(self):
        times = np.asarray(self.update_times, dtype=float)
        if times.size == 0:
            raise DomainError("information policy needs at least one update time")
        if np.any(np.diff(times) <= 0):
            raise TimeOrderError("update times must be strictly increasing")
        for node, values in self.observations.items():
            if len(values) != times.size:
                raise DomainError("one observation per update time is required", node=node)
            if any(not 0.0 <= v <= 1.0 for v in values):
                raise DomainError("observed demand must lie in [0, 1]", node=node)

    @classmethod
    def prior(cls, specs: Mapping[str, JacobiDemandSpec], t0: float) -> "InformationPolicy":
        """A single update at t0 holding the initial demands: no new information later."""
        return cls((float(t0),), {node: (spec.d0,) for node, spec in specs.items()})

    @classmethod
    def from_paths(cls, update_times, paths: Mapping[str, DemandPath]) -> "InformationPolicy":
        """Read each path exactly at the update times (they must lie on the SDE grid)."""
        return cls(
            tuple(float(t) for t in update_times),
            {node: tuple(path.value_at(t) for t in update_times) for node, path in paths.items()},
        )

    def check_horizon(self, t0: float):
        if self.update_times[0] > t0 + 1e-12:
            raise TimeOrderError("the first update must not come after the horizon start", first=self.update_times[0], t0=t0)

    def window_of(self, t) -> np.ndarray:
        """Index of the latest update at or before t (0 before the first update)."""
        index = np.searchsorted(np.asarray(self.update_times), np.asarray(t, dtype=float), side="right") - 1
        return np.maximum(index, 0)

    def targets(self, specs: Mapping[str, JacobiDemandSpec], windows) -> Targets:
        """Conditional-mean targets; point i is conditioned on update windows[i]."""
        windows = np.asarray(windows)
        update_times = np.asarray(self.update_times, dtype=float)
        result = {}
        for node, spec in specs.items():
            t_cond = update_times[windows]
            d_cond = np.asarray(self.observations[node], dtype=float)[windows]
            result[node] = _bind_mean(spec, t_cond, d_cond)
        return result


def _bind_mean(spec, t_cond, d_cond):
    return lambda t: conditional_mean(spec, t_cond, d_cond, t)


# ---------------- characteristic geometry -----------------
@dataclass(frozen=True)
class ArcPassage:
    """Characteristics entering one arc at t_enter, with the subtree they feed."""

    arc_id: str
    head: str
    t_enter: np.ndarray
    t_exit: np.ndarray
    damping_mass: np.ndarray
    children: tuple["ArcPassage", ...] = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return int(np.size(self.t_enter))


def trace_passage(net: TreeNetwork, arc_id: str, t_enter, remaining=None, *, xtol=1e-14) -> ArcPassage:
    """Follow characteristics from t_enter through arc_id and everything below it.

    ``remaining`` is the length still to travel on this arc (defaults to the
    whole arc); warm starts use it to begin mid-arc.
    """
    net.require_valid()
    arc = net.arc(arc_id)
    t_enter = np.atleast_1d(np.asarray(t_enter, dtype=float))
    length = arc.length if remaining is None else np.asarray(remaining, dtype=float)
    t_exit = np.atleast_1d(arc.velocity.advance_by_integral(t_enter, length, xtol=xtol))
    mass = np.atleast_1d(arc.damping_factor.integral(t_enter, t_exit))
    children = tuple(trace_passage(net, child.id, t_exit, xtol=xtol) for child in net.outgoing(arc.head))
    return ArcPassage(arc.id, arc.head, t_enter, t_exit, mass, children)


def required_density(net: TreeNetwork, passage: ArcPassage, targets: Targets) -> np.ndarray:
    """Density needed at the entry of passage.arc_id so that every leaf below gets its target."""
    arc = net.arc(passage.arc_id)
    if net.kind(passage.head) == DEMAND:
        exit_flux = np.asarray(targets[passage.head](passage.t_exit), dtype=float)
        if np.any(exit_flux < 0):
            raise DomainError("target demand mean must be non-negative", node=passage.head)
    else:
        exit_flux = sum(required_flux(net, child, targets) for child in passage.children)
    z_exit = exit_flux / arc.velocity(passage.t_exit)
    try:
        return np.atleast_1d(backward_damp_by_mass(arc.damping_shape, z_exit, passage.damping_mass))
    except InfeasibleControlError as exc:
        if "arc" not in exc.details:
            index = exc.details.get("index", 0)
            exc.details.update(
                arc=arc.id,
                t_enter=float(passage.t_enter[index]),
                t_exit=float(passage.t_exit[index]),
            )
        raise


def required_flux(net: TreeNetwork, passage: ArcPassage, targets: Targets) -> np.ndarray:
    arc = net.arc(passage.arc_id)
    return arc.velocity(passage.t_enter) * required_density(net, passage, targets)


def _out(values):
    values = np.asarray(values, dtype=float)
    return float(values[0]) if values.size == 1 else values


# ---------------- operations -----------------
def arrival_times(net: TreeNetwork, path, t_in, *, xtol=1e-14) -> list:
    """Node arrival times along ``path`` (arc ids) of a unit injected at t_in."""
    net.require_valid()
    times = []
    t = np.asarray(t_in, dtype=float)
    for arc_id in path:
        arc = net.arc(arc_id)
        t = arc.velocity.advance_by_integral(t, arc.length, xtol=xtol)
        times.append(t)
    return times


def required_flux_into_arc(net: TreeNetwork, arc_id: str, t_enter, targets: Targets):
    passage = trace_passage(net, arc_id, t_enter)
    return _out(required_flux(net, passage, targets))


@dataclass(frozen=True)
class InflowProfile:
    times: np.ndarray
    values: np.ndarray
    windows: np.ndarray
    update_times: tuple[float, ...]

    def at(self, t):
        return np.interp(t, self.times, self.values)

    def update_jumps(self) -> np.ndarray:
        """|u| change across each grid step where the information window switches."""
        switch = np.flatnonzero(np.diff(self.windows) != 0)
        return np.abs(self.values[switch + 1] - self.values[switch])

    def max_update_jump(self) -> float:
        jumps = self.update_jumps()
        return float(jumps.max()) if jumps.size else 0.0


class InflowPlan:
    """Root-arc characteristics traced once on the injection grid."""

    def __init__(self, net: TreeNetwork, injection_times, *, xtol=1e-14):
        self.injection_times = np.asarray(injection_times, dtype=float)
        self.passage = trace_passage(net, net.root_arc.id, self.injection_times, xtol=xtol)

    def evaluate(self, net: TreeNetwork, specs, policy: InformationPolicy) -> InflowProfile:
        windows = policy.window_of(self.injection_times)
        try:
            values = required_flux(net, self.passage, policy.targets(specs, windows))
        except InfeasibleControlError as exc:
            index = exc.details.get("index", 0)
            exc.details["t_in"] = float(self.injection_times[index])
            raise
        logger.debug("inflow on %s injection points, range [%.6g, %.6g]",
                     values.size, float(values.min()), float(values.max()))
        return InflowProfile(self.injection_times, values, windows, policy.update_times)


def optimal_inflow_profile(net: TreeNetwork, specs, policy: InformationPolicy, injection_grid) -> InflowProfile:
    return InflowPlan(net, injection_grid).evaluate(net, specs, policy)


def _normalise(fluxes: dict, junction: str, on_zero: str) -> dict:
    total = sum(fluxes.values())
    degenerate = np.asarray(total) <= 0
    if np.any(degenerate):
        if on_zero == "raise":
            raise UndefinedSplitError("all outgoing arcs require zero flux, split is undefined", junction=junction)
        logger.warning("junction %s: zero required flux at %s time(s), splitting equally",
                       junction, int(np.sum(degenerate)))
    share = 1.0 / len(fluxes)
    safe_total = np.where(degenerate, 1.0, total)
    return {arc_id: np.where(degenerate, share, flux / safe_total) for arc_id, flux in fluxes.items()}


def distribution_params(net: TreeNetwork, junction: str, t_junction, targets: Targets, *, on_zero="equal") -> dict:
    """alpha_k = F_k / sum_j F_j with F the flux each outgoing arc requires at t_junction."""
    net.require_valid()
    if net.kind(junction) != JUNCTION:
        raise DomainError("distribution parameters exist at junctions only", node=junction)
    fluxes = {
        arc.id: required_flux(net, trace_passage(net, arc.id, t_junction), targets)
        for arc in net.outgoing(junction)
    }
    return {arc_id: _out(alpha) for arc_id, alpha in _normalise(fluxes, junction, on_zero).items()}


def injection_times_for(net: TreeNetwork, node_id: str, times, *, xtol=1e-14) -> np.ndarray:
    """Trace characteristics reaching node_id at ``times`` back to the source."""
    t = np.asarray(times, dtype=float)
    for arc_id in reversed(path_to(net, node_id)):
        arc = net.arc(arc_id)
        t = arc.velocity.retreat_by_integral(t, arc.length, xtol=xtol)
    return np.atleast_1d(t)


class SplitPlan:
    """Distribution parameters of one junction on a fixed time grid.

    Each time is traced back to its injection time, whose information window
    conditions the targets (the split follows the inflow it distributes).
    """

    def __init__(self, net: TreeNetwork, junction: str, times, *, xtol=1e-14):
        if net.kind(junction) != JUNCTION:
            raise DomainError("distribution parameters exist at junctions only", node=junction)
        self.junction = junction
        self.times = np.asarray(times, dtype=float)
        self.injection_times = injection_times_for(net, junction, self.times, xtol=xtol)
        self.passages = {
            arc.id: trace_passage(net, arc.id, self.times, xtol=xtol) for arc in net.outgoing(junction)
        }

    def evaluate(self, net: TreeNetwork, specs, policy: InformationPolicy, *, on_zero="equal") -> dict:
        targets = policy.targets(specs, policy.window_of(self.injection_times))
        fluxes = {arc_id: required_flux(net, passage, targets) for arc_id, passage in self.passages.items()}
        return _normalise(fluxes, self.junction, on_zero)


class WarmStartPlan:
    """Initial densities on one arc from backward characteristics of the first targets.

    ``remaining`` holds, per cell, the length a characteristic starting in
    that cell at t0 still travels before leaving the arc.
    """

    def __init__(self, net: TreeNetwork, arc_id: str, t0: float, remaining, *, xtol=1e-14):
        self.arc_id = arc_id
        self.t0 = float(t0)
        remaining = np.asarray(remaining, dtype=float)
        self.passage = trace_passage(net, arc_id, np.full(remaining.shape, self.t0), remaining, xtol=xtol)

    def evaluate(self, net: TreeNetwork, specs, policy: InformationPolicy) -> np.ndarray:
        windows = np.zeros(self.passage.size, dtype=int) + policy.window_of(self.t0)
        return required_density(net, self.passage, policy.targets(specs, windows))

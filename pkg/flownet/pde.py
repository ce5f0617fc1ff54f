"""Forward simulation of the network: upwind transport plus damping splitting.

Each arc has its own time grid chosen so that the Courant number
``dt_j * lambda(t_j) / dx`` equals one; the upwind update then moves every
cell exactly one cell downstream.  The damping substep
``z <- z - dt_j * mu(t_{j+1}) * g_hat(z)`` follows each transport substep.
Junctions pass ``alpha_k(t) * arriving flux`` to their outgoing arcs, the
arriving flux being linearly interpolated onto the outgoing arc's grid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .control import InflowProfile
from .exceptions import CouplingError, DomainError, GridError, NumericsError
from .network import ArcSpec, TreeNetwork, arc_order

logger = logging.getLogger(__name__)

AlphaProvider = Callable[[str, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ArcGrid:
    arc_id: str
    dx: float
    n_cells: int
    times: np.ndarray

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def remaining_lengths(self) -> np.ndarray:
        """Distance a value in cell l still travels before it is read as outflow."""
        return (self.n_cells - 1 - np.arange(self.n_cells)) * self.dx


@dataclass
class ArcState:
    step: int
    t: float
    z: np.ndarray


@dataclass(frozen=True)
class SupplySeries:
    node_id: str
    arc_id: str
    times: np.ndarray
    values: np.ndarray


@dataclass
class NetworkSimulation:
    grids: dict
    boundary: dict
    outflow: dict
    alphas: dict
    supplies: dict
    fields: dict = field(default_factory=dict)


def cell_count(length: float, dx: float) -> int:
    if not dx > 0:
        raise GridError("spatial step must be positive", dx=dx)
    ratio = length / dx
    n_cells = int(round(ratio))
    if n_cells < 1 or abs(n_cells - ratio) > 1e-9 * max(1.0, ratio):
        raise GridError("spatial step must divide the arc length", length=length, dx=dx)
    return n_cells


def build_arc_grid(arc: ArcSpec, dx: float, t0: float, T: float) -> ArcGrid:
    """t_{j+1} = t_j + dx / lambda(t_j) until the horizon end is covered."""
    n_cells = cell_count(arc.length, dx)
    times = [float(t0)]
    t = float(t0)
    while t < T:
        t = t + dx / float(arc.velocity(t))
        times.append(t)
    return ArcGrid(arc.id, dx, n_cells, np.asarray(times))


def build_grids(net: TreeNetwork, dx: float, t0: float, T: float) -> dict:
    grids = {arc.id: build_arc_grid(arc, dx, t0, T) for arc in net.arcs}
    logger.debug("arc grids: %s", {arc_id: grid.steps for arc_id, grid in grids.items()})
    return grids


def _check_courant(grid: ArcGrid, arc: ArcSpec, j: int, tolerance: float):
    dt = grid.times[j + 1] - grid.times[j]
    courant = dt * float(arc.velocity(grid.times[j])) / grid.dx
    if abs(courant - 1.0) > tolerance:
        raise GridError("time step violates CFL equality", arc=arc.id, step=j, courant=courant)
    return dt


def step_arc(state: ArcState, grid: ArcGrid, arc: ArcSpec, boundary_flux: float, *, cfl_tolerance=1e-9) -> ArcState:
    """One upwind step (an exact cell shift at Courant number one) followed by damping."""
    if boundary_flux < 0:
        raise DomainError("boundary flux must be non-negative", arc=arc.id, flux=boundary_flux)
    j = state.step
    dt = _check_courant(grid, arc, j, cfl_tolerance)
    t_next = grid.times[j + 1]
    transported = np.empty_like(state.z)
    transported[1:] = state.z[:-1]
    transported[0] = boundary_flux / float(arc.velocity(grid.times[j]))
    z = transported
    if not arc.damping_shape.is_none:
        z = transported - dt * float(arc.damping_factor(t_next)) * arc.damping_shape.g_hat(transported)
        if np.any(z < 0):
            raise NumericsError("damping substep produced a negative density", arc=arc.id, step=j)
    return ArcState(j + 1, t_next, z)


def _run_stepwise(grid, arc, boundary, z0, cfl_tolerance, record):
    state = ArcState(0, grid.times[0], np.array(z0, dtype=float))
    outflow = np.empty(grid.times.size)
    lam = np.asarray(arc.velocity(grid.times), dtype=float)
    outflow[0] = lam[0] * state.z[-1]
    snapshots = [state.z] if record else None
    for j in range(grid.steps):
        state = step_arc(state, grid, arc, float(boundary[j]), cfl_tolerance=cfl_tolerance)
        outflow[j + 1] = lam[j + 1] * state.z[-1]
        if record:
            snapshots.append(state.z)
    return outflow, (np.vstack(snapshots) if record else None)


def _run_sweep(grid, arc, boundary, z0, cfl_tolerance):
    """Same arithmetic as repeated step_arc, organised per characteristic.

    Characteristic k (k < 0: initial cell -k-1, k >= 0: injected at step k)
    is damped during steps max(k, 0) .. k + n - 1 and read out at t_{k+n}.
    """
    n, steps = grid.n_cells, grid.steps
    for j in (0, steps - 1):
        _check_courant(grid, arc, j, cfl_tolerance)
    lam = np.asarray(arc.velocity(grid.times), dtype=float)
    if np.any(boundary < 0):
        raise DomainError("boundary flux must be non-negative", arc=arc.id)
    # values ordered by k = -n .. steps - 1
    values = np.concatenate((np.asarray(z0, dtype=float)[::-1], boundary[:steps] / lam[:steps]))
    k = np.arange(-n, steps)
    if not arc.damping_shape.is_none:
        dts = np.diff(grid.times)
        mu_next = np.asarray(arc.damping_factor(grid.times[1:]), dtype=float)
        shape = arc.damping_shape
        for offset in range(n):
            j = k + offset
            active = (j >= 0) & (j < steps)
            jj = j[active]
            v = values[active]
            values[active] = v - dts[jj] * mu_next[jj] * shape.g_hat(v)
            if np.any(values[active] < 0):
                raise NumericsError("damping substep produced a negative density", arc=arc.id)
    # characteristic k is read out at step index m = k + n; m = 0 .. steps
    return lam * values[: steps + 1]


def simulate_network(
    net: TreeNetwork,
    inflow: InflowProfile,
    alpha_provider: AlphaProvider,
    initial_data: Mapping[str, np.ndarray] | None,
    t0: float,
    T: float,
    dx: float,
    *,
    grids: Mapping[str, ArcGrid] | None = None,
    record_field: bool = False,
    cfl_tolerance: float = 1e-9,
) -> NetworkSimulation:
    """Simulate every arc over the whole horizon, parents before children."""
    net.require_valid()
    grids = dict(grids) if grids is not None else build_grids(net, dx, t0, T)
    initial_data = initial_data or {}
    root = net.root_arc
    boundary, outflow, alphas, fields = {}, {}, {}, {}
    for arc in arc_order(net):
        grid = grids[arc.id]
        if arc.id == root.id:
            if not np.array_equal(inflow.times, grid.times):
                logger.debug("inflow grid differs from the root-arc grid, interpolating")
            flux = np.asarray(inflow.at(grid.times), dtype=float)
        else:
            parent = net.incoming(arc.tail)[0]
            alpha = np.asarray(alpha_provider(arc.id, grid.times), dtype=float)
            if alpha.shape != grid.times.shape or not np.all(np.isfinite(alpha)):
                raise CouplingError("distribution parameters missing for the coupling times", arc=arc.id)
            arriving = np.interp(grid.times, grids[parent.id].times, outflow[parent.id])
            alphas[arc.id] = alpha
            flux = alpha * arriving
        boundary[arc.id] = flux
        z0 = initial_data.get(arc.id)
        if z0 is None:
            z0 = np.zeros(grid.n_cells)
        elif np.shape(z0) != (grid.n_cells,):
            raise GridError("initial data does not match the arc's cell count", arc=arc.id)
        elif np.any(np.asarray(z0) < 0):
            raise DomainError("initial data must be non-negative", arc=arc.id)
        if record_field:
            outflow[arc.id], fields[arc.id] = _run_stepwise(grid, arc, flux, z0, cfl_tolerance, True)
        else:
            outflow[arc.id] = _run_sweep(grid, arc, flux, z0, cfl_tolerance)
    supplies = {}
    for node_id in net.demand_nodes:
        leaf_arc = net.incoming(node_id)[0]
        supplies[node_id] = SupplySeries(node_id, leaf_arc.id, grids[leaf_arc.id].times, outflow[leaf_arc.id])
    return NetworkSimulation(grids, boundary, outflow, alphas, supplies, fields)


def simulate_network_stepwise(net, inflow, alpha_provider, initial_data, t0, T, dx, **kwargs) -> NetworkSimulation:
    """Reference path through step_arc, keeping the full space-time field."""
    return simulate_network(net, inflow, alpha_provider, initial_data, t0, T, dx, record_field=True, **kwargs)

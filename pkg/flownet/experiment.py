"""Scenario runner: single realizations, Monte Carlo ensembles and damping comparisons.

A ``ScenarioContext`` traces all characteristic geometry of a scenario once
(root injection grid, junction coupling grids, warm-start cells, leaf arrival
times of the update times).  A run then only draws demand paths, evaluates
the conditioned targets on that geometry and sweeps the PDE.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy.integrate import trapezoid

from .control import InflowPlan, InflowProfile, InformationPolicy, SplitPlan, WarmStartPlan, arrival_times
from .demand import GRID_ATOL, DemandPath, derive_seed, simulate_jacobi
from .exceptions import DomainError, InfeasibleControlError
from .network import TreeNetwork, path_to
from .pde import NetworkSimulation, SupplySeries, build_grids, simulate_network
from .scenario import WARM, ScenarioConfig

logger = logging.getLogger(__name__)


def flownet_setting(name, default):
    return getattr(settings, "FLOWNET", {}).get(name, default)


# ---------------- results -----------------
@dataclass(frozen=True)
class ObjectiveValue:
    """Integrated squared deviation, in total and per update window."""

    node_id: str
    total: float
    edges: np.ndarray
    windows: np.ndarray


@dataclass(frozen=True)
class AlphaSeries:
    junction: str
    times: np.ndarray
    values: dict


@dataclass
class VariantResult:
    label: str
    inflow: InflowProfile
    alphas: dict
    supplies: dict
    objective: dict
    simulation: NetworkSimulation


@dataclass
class SimulationResult:
    run_index: int
    seed: int
    demands: dict
    policy: InformationPolicy
    variants: dict = field(default_factory=dict)


# ---------------- objective -----------------
def objective_estimate(demand: DemandPath, supply: SupplySeries, edges) -> ObjectiveValue:
    """Trapezoidal integral of (demand - supply)^2 over each window [edges[i], edges[i+1]].

    Supply is interpolated linearly onto the SDE grid; window ends that fall
    between grid points are added with interpolated values of both series.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2 or np.any(np.diff(edges) < 0):
        raise DomainError("objective needs at least two non-decreasing window edges")
    for name, times in (("demand", demand.times), ("supply", supply.times)):
        if edges[0] < times[0] - GRID_ATOL or edges[-1] > times[-1] + GRID_ATOL:
            raise DomainError(f"objective window lies outside the {name} series",
                              node=demand.node_id, start=edges[0], end=edges[-1])
    windows = np.zeros(edges.size - 1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        if b <= a:
            continue
        inner = demand.times[(demand.times > a) & (demand.times < b)]
        t = np.concatenate(([a], inner, [b]))
        deviation = np.interp(t, demand.times, demand.values) - np.interp(t, supply.times, supply.values)
        windows[i] = trapezoid(deviation ** 2, t)
    return ObjectiveValue(demand.node_id, float(np.sum(windows)), edges, windows)


# ---------------- Monte Carlo moments -----------------
class RunningMoments:
    """Mean and standard error of equally shaped samples, fed in run order.

    Samples are shifted by the first one and accumulated with Kahan
    compensation, so identical samples give a zero standard error exactly.
    """

    def __init__(self):
        self.count = 0
        self._shift = None
        self._sum = self._sum_c = None
        self._squares = self._squares_c = None

    def add(self, sample):
        sample = np.asarray(sample, dtype=float)
        if self._shift is None:
            self._shift = sample.copy()
            self._sum, self._sum_c = np.zeros_like(sample), np.zeros_like(sample)
            self._squares, self._squares_c = np.zeros_like(sample), np.zeros_like(sample)
        elif sample.shape != self._shift.shape:
            raise DomainError("Monte Carlo samples must share one grid", expected=self._shift.shape, got=sample.shape)
        deviation = sample - self._shift
        self._sum, self._sum_c = _kahan_add(self._sum, self._sum_c, deviation)
        self._squares, self._squares_c = _kahan_add(self._squares, self._squares_c, deviation * deviation)
        self.count += 1

    def mean(self):
        return self._shift + self._sum / self.count

    def standard_error(self):
        if self.count < 2:
            return np.zeros_like(self._shift)
        variance = (self._squares - self._sum * self._sum / self.count) / (self.count - 1)
        return np.sqrt(np.maximum(variance, 0.0) / self.count)


def _kahan_add(total, compensation, value):
    y = value - compensation
    t = total + y
    return t, (t - total) - y


@dataclass(frozen=True)
class SeriesEstimate:
    times: np.ndarray
    mean: np.ndarray
    standard_error: np.ndarray


@dataclass(frozen=True)
class ObjectiveEstimate:
    node_id: str
    mean: float
    standard_error: float
    window_means: np.ndarray


@dataclass
class VariantEnsemble:
    label: str
    inflow: SeriesEstimate
    supplies: dict
    objective: dict
    single_jump: float
    averaged_jump: float

    @property
    def jumps_smoothed(self) -> bool:
        return self.averaged_jump <= 0.5 * self.single_jump or self.single_jump == 0.0


@dataclass
class MonteCarloResult:
    runs: int
    master_seed: int
    update_times: tuple
    demands: dict
    variants: dict


@dataclass(frozen=True)
class DampingComparison:
    result: SimulationResult
    undamped_below_fraction: float | None
    ascending_fraction: float | None
    descending_fraction: float | None
    ordered_fraction: float | None


# ---------------- scenario geometry -----------------
class ScenarioContext:
    """Everything about a scenario that does not depend on the demand realization."""

    def __init__(self, config: ScenarioConfig, *, xtol=None, cfl_tolerance=None):
        self.config = config
        self.xtol = flownet_setting("ROOT_XTOL", 1e-14) if xtol is None else xtol
        self.cfl_tolerance = flownet_setting("CFL_TOLERANCE", 1e-9) if cfl_tolerance is None else cfl_tolerance
        net = config.network
        net.require_valid()
        self.networks = config.variant_networks()
        self.grids = build_grids(net, config.pde_dx, config.t0, config.T)
        root = net.root_arc
        self.inflow_plan = InflowPlan(net, self.grids[root.id].times, xtol=self.xtol)
        updates = np.asarray(config.update_times)
        self.injection_windows = np.maximum(
            np.searchsorted(updates, self.inflow_plan.injection_times, side="right") - 1, 0)
        self.split_plans = {
            arc.id: SplitPlan(net, arc.tail, self.grids[arc.id].times, xtol=self.xtol)
            for arc in net.arcs if arc.id != root.id
        }
        self.alpha_plans = {
            junction: SplitPlan(net, junction, self.grids[net.incoming(junction)[0].id].times, xtol=self.xtol)
            for junction in net.junctions
        }
        self.warm_plans = {}
        if config.initial_data == WARM:
            self.warm_plans = {
                arc.id: WarmStartPlan(net, arc.id, config.t0, self.grids[arc.id].remaining_lengths, xtol=self.xtol)
                for arc in net.arcs
            }
        self.window_edges = {leaf: self._window_edges(net, leaf) for leaf in net.demand_nodes}
        logger.debug("scenario geometry traced: %s arcs, %s variants", len(net.arcs), len(self.networks))

    def _window_edges(self, net: TreeNetwork, leaf: str) -> np.ndarray:
        arrivals = np.atleast_1d(
            arrival_times(net, path_to(net, leaf), np.asarray(self.config.update_times), xtol=self.xtol)[-1]
        )
        late = arrivals >= self.config.T
        if np.any(late):
            logger.warning("demand node %s: %s update(s) reach the node after T and get no objective window",
                           leaf, int(np.sum(late)))
        return np.concatenate((arrivals[~late], [self.config.T]))

    def evaluate_variant(self, label: str, policy: InformationPolicy, demands: dict, *,
                         record_field=False) -> VariantResult:
        config = self.config
        net = self.networks[label]
        specs = config.demands
        try:
            inflow = self.inflow_plan.evaluate(net, specs, policy)
            coupling = {
                arc_id: plan.evaluate(net, specs, policy)[arc_id] for arc_id, plan in self.split_plans.items()
            }
            initial = {arc_id: plan.evaluate(net, specs, policy) for arc_id, plan in self.warm_plans.items()}
        except InfeasibleControlError as exc:
            exc.details["variant"] = label
            raise
        simulation = simulate_network(
            net, inflow, lambda arc_id, times: coupling[arc_id], initial or None,
            config.t0, config.T, config.pde_dx,
            grids=self.grids, record_field=record_field, cfl_tolerance=self.cfl_tolerance,
        )
        alphas = {
            junction: AlphaSeries(junction, plan.times, plan.evaluate(net, specs, policy))
            for junction, plan in self.alpha_plans.items()
        }
        objective = {
            leaf: objective_estimate(demands[leaf], simulation.supplies[leaf], self.window_edges[leaf])
            for leaf in net.demand_nodes
        }
        return VariantResult(label, inflow, alphas, simulation.supplies, objective, simulation)

    def run(self, run_index: int, *, record_field=False) -> SimulationResult:
        run_seed, demands = draw_demand_paths(self.config, run_index)
        policy = InformationPolicy.from_paths(self.config.update_times, demands)
        result = SimulationResult(run_index, run_seed, demands, policy)
        for label in self.networks:
            result.variants[label] = self.evaluate_variant(label, policy, demands, record_field=record_field)
        return result


# ---------------- operations -----------------
def draw_demand_paths(config: ScenarioConfig, run_index: int) -> tuple[int, dict]:
    """Demand paths of one run; node k of run r uses derive_seed(derive_seed(master, r), k)."""
    run_seed = derive_seed(config.master_seed, run_index)
    paths = {
        node: simulate_jacobi(spec, config.t0, config.T, config.sde_dt, derive_seed(run_seed, node_index))
        for node_index, (node, spec) in enumerate(config.demands.items())
    }
    return run_seed, paths


def inflow_profiles(config: ScenarioConfig, run_index: int | None = None, *, xtol=None) -> dict:
    """Optimal inflow per variant on the root-arc grid.

    Without a run index the controller only knows the initial demands (one
    update at t0); with one it conditions on that run's demand paths.
    """
    xtol = flownet_setting("ROOT_XTOL", 1e-14) if xtol is None else xtol
    net = config.network
    root = net.root_arc
    grids = build_grids(net, config.pde_dx, config.t0, config.T)
    plan = InflowPlan(net, grids[root.id].times, xtol=xtol)
    if run_index is None:
        policy = InformationPolicy.prior(config.demands, config.t0)
    else:
        _, paths = draw_demand_paths(config, run_index)
        policy = InformationPolicy.from_paths(config.update_times, paths)
    profiles = {}
    for label, variant_net in config.variant_networks().items():
        try:
            profiles[label] = plan.evaluate(variant_net, config.demands, policy)
        except InfeasibleControlError as exc:
            exc.details["variant"] = label
            raise
    return profiles


def run_single(config: ScenarioConfig, run_index: int = 0, *, context: ScenarioContext | None = None,
               record_field=False) -> SimulationResult:
    context = context or ScenarioContext(config)
    logger.info("run %s of scenario %s: %s variant(s)", run_index, config.name or "<unnamed>", len(context.networks))
    try:
        return context.run(run_index, record_field=record_field)
    except InfeasibleControlError as exc:
        exc.details.setdefault("run_index", run_index)
        raise


@dataclass
class _RunSummary:
    demands: dict
    inflow: dict
    supplies: dict
    objective: dict


def _summarise(context: ScenarioContext, run_index: int) -> _RunSummary:
    result = run_single(context.config, run_index, context=context)
    return _RunSummary(
        demands={node: path.values for node, path in result.demands.items()},
        inflow={label: v.inflow.values for label, v in result.variants.items()},
        supplies={label: {node: s.values for node, s in v.supplies.items()} for label, v in result.variants.items()},
        objective={label: {node: (o.total, o.windows) for node, o in v.objective.items()}
                   for label, v in result.variants.items()},
    )


_WORKER_CONTEXT = None


def _init_worker(config, xtol, cfl_tolerance):
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = ScenarioContext(config, xtol=xtol, cfl_tolerance=cfl_tolerance)


def _summarise_in_worker(run_index):
    return _summarise(_WORKER_CONTEXT, run_index)


def _run_summaries(context: ScenarioContext, runs: int, workers: int):
    if workers <= 1:
        for run_index in range(runs):
            yield _summarise(context, run_index)
        return
    chunksize = max(1, runs // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(context.config, context.xtol, context.cfl_tolerance)) as executor:
        # map yields in submission order, so aggregation sees runs in index order
        yield from executor.map(_summarise_in_worker, range(runs), chunksize=chunksize)


def run_monte_carlo(config: ScenarioConfig, workers: int | None = None) -> MonteCarloResult:
    """Mean and standard error of every series over config.monte_carlo_runs realizations."""
    runs = config.monte_carlo_runs
    if runs < 2:
        raise DomainError("Monte Carlo needs at least two runs for a standard error", runs=runs)
    if workers is None:
        workers = config.workers or flownet_setting("WORKERS", 1)
    context = ScenarioContext(config)
    labels = list(context.networks)
    leaves = list(config.demands)
    demand_moments = {node: RunningMoments() for node in leaves}
    inflow_moments = {label: RunningMoments() for label in labels}
    supply_moments = {label: {node: RunningMoments() for node in leaves} for label in labels}
    total_moments = {label: {node: RunningMoments() for node in leaves} for label in labels}
    window_moments = {label: {node: RunningMoments() for node in leaves} for label in labels}
    single_jump = {}
    logger.info("Monte Carlo: %s runs, %s variant(s), %s worker(s), master seed %s",
                runs, len(labels), workers, config.master_seed)
    for run_index, summary in enumerate(_run_summaries(context, runs, workers)):
        for node in leaves:
            demand_moments[node].add(summary.demands[node])
        for label in labels:
            inflow_moments[label].add(summary.inflow[label])
            if run_index == 0:
                single_jump[label] = _max_jump(context, summary.inflow[label])
            for node in leaves:
                supply_moments[label][node].add(summary.supplies[label][node])
                total, windows = summary.objective[label][node]
                total_moments[label][node].add(total)
                window_moments[label][node].add(windows)

    sde_times = config.sde_times()
    root_times = context.grids[config.network.root_arc.id].times
    demands = {
        node: SeriesEstimate(sde_times, m.mean(), m.standard_error()) for node, m in demand_moments.items()
    }
    variants = {}
    for label in labels:
        net = context.networks[label]
        averaged = inflow_moments[label].mean()
        supplies = {}
        for node in leaves:
            leaf_times = context.grids[net.incoming(node)[0].id].times
            m = supply_moments[label][node]
            supplies[node] = SeriesEstimate(leaf_times, m.mean(), m.standard_error())
        objective = {
            node: ObjectiveEstimate(node, float(total_moments[label][node].mean()),
                                    float(total_moments[label][node].standard_error()),
                                    window_moments[label][node].mean())
            for node in leaves
        }
        ensemble = VariantEnsemble(
            label,
            SeriesEstimate(root_times, averaged, inflow_moments[label].standard_error()),
            supplies, objective, single_jump[label], _max_jump(context, averaged),
        )
        if runs > 1 and not ensemble.jumps_smoothed:
            logger.warning("variant %s: averaged inflow still jumps by %.6g at updates (single run %.6g)",
                           label, ensemble.averaged_jump, ensemble.single_jump)
        variants[label] = ensemble
    return MonteCarloResult(runs, config.master_seed, config.update_times, demands, variants)


def _max_jump(context: ScenarioContext, values) -> float:
    plan = context.inflow_plan
    profile = InflowProfile(plan.injection_times, np.asarray(values), context.injection_windows,
                            context.config.update_times)
    return profile.max_update_jump()


def compare_damping(config: ScenarioConfig, run_index: int = 0, *, context: ScenarioContext | None = None,
                    rtol: float = 1e-12) -> DampingComparison:
    """One realization under every variant plus the inflow ordering diagnostics."""
    result = run_single(config, run_index, context=context)
    shapes = {variant.label: variant.damping for variant in config.variants}
    inflows = {label: v.inflow.values for label, v in result.variants.items()}
    undamped = [label for label, shape in shapes.items() if shape.is_none]
    monomials = sorted((shape.degree, label) for label, shape in shapes.items() if not shape.is_none)

    below = None
    if undamped and monomials:
        base = inflows[undamped[0]]
        slack = rtol * np.abs(base)
        ok = np.all([inflows[label] >= base - slack for _, label in monomials], axis=0)
        below = float(np.mean(ok))

    ascending = descending = ordered = None
    if len(monomials) >= 2:
        stacked = np.vstack([inflows[label] for _, label in monomials])
        steps = np.diff(stacked, axis=0)
        slack = rtol * np.abs(stacked[:-1])
        up = np.all(steps >= -slack, axis=0)
        down = np.all(steps <= slack, axis=0)
        ascending, descending = float(np.mean(up)), float(np.mean(down))
        ordered = float(np.mean(up | down))
    logger.info("damping comparison: undamped below %s, ordered by degree %s (ascending %s, descending %s)",
                below, ordered, ascending, descending)
    return DampingComparison(result, below, ascending, descending, ordered)

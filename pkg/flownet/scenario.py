"""Scenario documents: parsing, schema checks and canonical serialisation.

A scenario is a JSON object with four sections::

    {
      "name": "...",
      "network": {"nodes": [{"id", "kind"}], "arcs": [{"id", "tail", "head", "length",
                  "velocity", "damping_factor", "damping"}]},
      "demands": [{"node", "kappa", "theta", "sigma", "d0"}],
      "numerics": {"t0", "T", "sde_dt", "pde_dx", "initial_data"},
      "experiment": {"update_times" | "update_count", "monte_carlo_runs",
                     "master_seed", "variants": [{"label", "damping"}], "workers"}
    }

Time functions are a bare number, ``{"constant", "terms": [{"amplitude",
"angular_factor", "phase"}]}`` (angular_factor multiplies pi) or
``{"breakpoints", "values"}``.  Unknown keys are rejected everywhere.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from .damping import DampingShape, MONOMIAL, NONE
from .demand import GRID_ATOL, JacobiDemandSpec, sde_grid
from .exceptions import FlownetError, InputFileError, NetworkValidationError, ScenarioError
from .network import ArcSpec, Node, TreeNetwork
from .pde import cell_count
from .timefuncs import CoefficientFunction, PiecewiseConstant, SineTerm, TimeFunction

logger = logging.getLogger(__name__)

WARM = "warm"
ZERO = "zero"
INITIAL_DATA_MODES = (WARM, ZERO)
DECLARED = "declared"


@dataclass(frozen=True)
class Variant:
    label: str
    damping: DampingShape


@dataclass(frozen=True)
class ScenarioConfig:
    network: TreeNetwork
    demands: dict
    t0: float
    T: float
    sde_dt: float
    pde_dx: float
    update_times: tuple[float, ...]
    monte_carlo_runs: int = 1
    master_seed: int = 0
    variants: tuple[Variant, ...] = field(default_factory=tuple)
    initial_data: str = WARM
    workers: int | None = None
    name: str = ""

    def variant_networks(self) -> dict:
        """label -> network with that damping shape on every arc."""
        if not self.variants:
            return {DECLARED: self.network}
        return {variant.label: self.network.with_damping(variant.damping) for variant in self.variants}

    def select_variants(self, labels) -> "ScenarioConfig":
        if not labels:
            return self
        known = {variant.label: variant for variant in self.variants}
        missing = [label for label in labels if label not in known]
        if missing:
            raise ScenarioError("unknown variant label(s)", problems={"variants": missing})
        return replace(self, variants=tuple(known[label] for label in labels))

    def with_overrides(self, *, seed=None, runs=None, workers=None) -> "ScenarioConfig":
        changes = {}
        if seed is not None:
            changes["master_seed"] = int(seed)
        if runs is not None:
            if runs < 1:
                raise ScenarioError("monte_carlo_runs must be >= 1", problems={"monte_carlo_runs": [str(runs)]})
            changes["monte_carlo_runs"] = int(runs)
        if workers is not None:
            changes["workers"] = int(workers)
        return replace(self, **changes) if changes else self

    def sde_times(self) -> np.ndarray:
        return sde_grid(self.t0, self.T, self.sde_dt)


# ---------------- reading -----------------
class _Reader:
    """Collects schema errors keyed by their location in the document."""

    def __init__(self):
        self.errors = {}

    def error(self, where, message):
        self.errors.setdefault(where, []).append(message)

    def mapping(self, value, where, required=(), optional=()):
        if not isinstance(value, dict):
            self.error(where, "must be an object")
            return None
        for key in required:
            if key not in value:
                self.error(where, f"missing key {key!r}")
        for key in value:
            if key not in required and key not in optional:
                self.error(where, f"unknown key {key!r}")
        return value

    def number(self, value, where, *, positive=False, non_negative=False, default=None):
        if value is None:
            if default is None:
                return None
            return default
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
            self.error(where, "must be a finite number")
            return default
        if positive and not value > 0:
            self.error(where, "must be positive")
        if non_negative and value < 0:
            self.error(where, "must be non-negative")
        return float(value)

    def integer(self, value, where, *, minimum=None, default=None):
        if value is None:
            return default
        if isinstance(value, bool) or not isinstance(value, int):
            self.error(where, "must be an integer")
            return default
        if minimum is not None and value < minimum:
            self.error(where, f"must be >= {minimum}")
        return value

    def text(self, value, where):
        if not isinstance(value, str) or not value:
            self.error(where, "must be a non-empty string")
            return ""
        return value

    def listing(self, value, where):
        if not isinstance(value, list):
            self.error(where, "must be a list")
            return []
        return value

    def time_function(self, value, where) -> CoefficientFunction:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return TimeFunction.const(self.number(value, where, default=0.0))
        if isinstance(value, dict) and "breakpoints" in value:
            before = len(self.errors)
            spec = self.mapping(value, where, required=("breakpoints", "values"))
            breakpoints = [self.number(b, f"{where}.breakpoints", default=0.0)
                           for b in self.listing(spec.get("breakpoints", []), f"{where}.breakpoints")]
            values = [self.number(v, f"{where}.values", default=0.0)
                      for v in self.listing(spec.get("values", []), f"{where}.values")]
            if len(self.errors) > before:
                return TimeFunction.const(0.0)
            try:
                return PiecewiseConstant(tuple(breakpoints), tuple(values))
            except FlownetError as exc:
                self.error(where, exc.message)
                return TimeFunction.const(0.0)
        spec = self.mapping(value, where, required=("constant",), optional=("terms",))
        if spec is None:
            return TimeFunction.const(0.0)
        terms = []
        for index, term in enumerate(self.listing(spec.get("terms", []), f"{where}.terms")):
            term_where = f"{where}.terms[{index}]"
            term = self.mapping(term, term_where, required=("amplitude", "angular_factor"), optional=("phase",))
            if term is None:
                continue
            terms.append(SineTerm(
                self.number(term.get("amplitude"), f"{term_where}.amplitude", default=0.0),
                self.number(term.get("angular_factor"), f"{term_where}.angular_factor", default=0.0),
                self.number(term.get("phase"), f"{term_where}.phase", default=0.0),
            ))
        return TimeFunction(self.number(spec.get("constant"), f"{where}.constant", default=0.0), tuple(terms))

    def damping(self, value, where) -> DampingShape:
        spec = self.mapping(value, where, required=("kind",), optional=("degree", "coefficient"))
        if spec is None:
            return DampingShape.none()
        kind = spec.get("kind")
        if kind == NONE:
            if "degree" in spec or "coefficient" in spec:
                self.error(where, "kind 'none' takes no degree or coefficient")
            return DampingShape.none()
        if kind != MONOMIAL:
            self.error(f"{where}.kind", f"must be {NONE!r} or {MONOMIAL!r}")
            return DampingShape.none()
        degree = self.integer(spec.get("degree"), f"{where}.degree", minimum=1)
        coefficient = self.number(spec.get("coefficient"), f"{where}.coefficient", positive=True)
        if degree is None:
            self.error(where, "monomial damping needs a degree")
            return DampingShape.none()
        try:
            return DampingShape.monomial(degree, coefficient)
        except FlownetError as exc:
            self.error(where, exc.message)
            return DampingShape.none()


def parse_scenario(document) -> ScenarioConfig:
    """Schema-check a decoded JSON document; raises ScenarioError listing every problem."""
    r = _Reader()
    top = r.mapping(document, "scenario", required=("network", "demands", "numerics"),
                    optional=("name", "experiment"))
    if top is None:
        raise ScenarioError.from_validation_error(ValidationError(r.errors))

    network_doc = r.mapping(top.get("network", {}), "network", required=("nodes", "arcs")) or {}
    nodes = []
    for index, node in enumerate(r.listing(network_doc.get("nodes", []), "network.nodes")):
        node = r.mapping(node, f"network.nodes[{index}]", required=("id", "kind"))
        if node is not None:
            nodes.append(Node(r.text(node.get("id"), f"network.nodes[{index}].id"),
                              r.text(node.get("kind"), f"network.nodes[{index}].kind")))
    arcs = []
    for index, arc in enumerate(r.listing(network_doc.get("arcs", []), "network.arcs")):
        where = f"network.arcs[{index}]"
        arc = r.mapping(arc, where, required=("id", "tail", "head", "velocity"),
                        optional=("length", "damping_factor", "damping"))
        if arc is None:
            continue
        arcs.append(ArcSpec(
            id=r.text(arc.get("id"), f"{where}.id"),
            tail=r.text(arc.get("tail"), f"{where}.tail"),
            head=r.text(arc.get("head"), f"{where}.head"),
            velocity=r.time_function(arc.get("velocity"), f"{where}.velocity"),
            damping_factor=r.time_function(arc.get("damping_factor", 0.0), f"{where}.damping_factor"),
            damping_shape=r.damping(arc.get("damping", {"kind": NONE}), f"{where}.damping"),
            length=r.number(arc.get("length"), f"{where}.length", positive=True, default=1.0),
        ))

    demands = {}
    for index, demand in enumerate(r.listing(top.get("demands", []), "demands")):
        where = f"demands[{index}]"
        demand = r.mapping(demand, where, required=("node", "kappa", "theta", "sigma", "d0"))
        if demand is None:
            continue
        node = r.text(demand.get("node"), f"{where}.node")
        if node in demands:
            r.error(where, f"demand for node {node!r} declared twice")
        try:
            demands[node] = JacobiDemandSpec(
                node,
                r.number(demand.get("kappa"), f"{where}.kappa", default=1.0),
                r.time_function(demand.get("theta"), f"{where}.theta"),
                r.number(demand.get("sigma"), f"{where}.sigma", default=0.0),
                r.number(demand.get("d0"), f"{where}.d0", default=0.0),
            )
        except FlownetError as exc:
            r.error(where, exc.message)

    numerics = r.mapping(top.get("numerics", {}), "numerics", required=("t0", "T", "sde_dt", "pde_dx"),
                         optional=("initial_data",)) or {}
    t0 = r.number(numerics.get("t0"), "numerics.t0", default=0.0)
    T = r.number(numerics.get("T"), "numerics.T", default=1.0)
    sde_dt = r.number(numerics.get("sde_dt"), "numerics.sde_dt", positive=True, default=1e-3)
    pde_dx = r.number(numerics.get("pde_dx"), "numerics.pde_dx", positive=True, default=1.0)
    if not T > t0:
        r.error("numerics.T", "must exceed t0")
    initial_data = numerics.get("initial_data", WARM)
    if initial_data not in INITIAL_DATA_MODES:
        r.error("numerics.initial_data", f"must be one of {INITIAL_DATA_MODES}")

    experiment = r.mapping(top.get("experiment", {}), "experiment",
                           optional=("update_times", "update_count", "monte_carlo_runs", "master_seed",
                                     "variants", "workers")) or {}
    if "update_times" in experiment and "update_count" in experiment:
        r.error("experiment", "give either update_times or update_count, not both")
    if "update_count" in experiment:
        count = r.integer(experiment["update_count"], "experiment.update_count", minimum=1, default=1)
        update_times = equidistant_updates(t0, T, sde_dt, count) if T > t0 and sde_dt > 0 else (t0,)
    else:
        raw = r.listing(experiment.get("update_times", [t0]), "experiment.update_times")
        update_times = tuple(r.number(t, "experiment.update_times", default=t0) for t in raw)
    variants = []
    for index, variant in enumerate(r.listing(experiment.get("variants", []), "experiment.variants")):
        where = f"experiment.variants[{index}]"
        variant = r.mapping(variant, where, required=("label", "damping"))
        if variant is not None:
            variants.append(Variant(r.text(variant.get("label"), f"{where}.label"),
                                    r.damping(variant.get("damping"), f"{where}.damping")))
    labels = [variant.label for variant in variants]
    if len(set(labels)) != len(labels):
        r.error("experiment.variants", "variant labels must be unique")

    if r.errors:
        raise ScenarioError.from_validation_error(ValidationError(r.errors))
    name = top.get("name", "")
    return ScenarioConfig(
        network=TreeNetwork(nodes, arcs),
        demands=demands,
        t0=t0, T=T, sde_dt=sde_dt, pde_dx=pde_dx,
        update_times=update_times,
        monte_carlo_runs=r.integer(experiment.get("monte_carlo_runs"), "experiment.monte_carlo_runs", minimum=1, default=1),
        master_seed=r.integer(experiment.get("master_seed"), "experiment.master_seed", minimum=0, default=0),
        variants=tuple(variants),
        initial_data=initial_data,
        workers=r.integer(experiment.get("workers"), "experiment.workers", minimum=1),
        name=name if isinstance(name, str) else "",
    )


def equidistant_updates(t0: float, T: float, dt: float, count: int) -> tuple[float, ...]:
    """count updates t0 + j (T - t0) / count, snapped to the SDE grid."""
    times = []
    for j in range(count):
        steps = round(j * (T - t0) / count / dt)
        times.append(t0 + steps * dt)
    return tuple(times)


def check_scenario(config: ScenarioConfig) -> ScenarioConfig:
    """Semantic checks that need the whole document; the network is validated here."""
    violations = config.network.validate()
    if violations:
        raise NetworkValidationError(violations)
    problems = {}
    demand_nodes = set(config.network.demand_nodes)
    for node in demand_nodes - set(config.demands):
        problems.setdefault("demands", []).append(f"demand node {node!r} has no demand process")
    for node in set(config.demands) - demand_nodes:
        problems.setdefault("demands", []).append(f"{node!r} is not a demand node of the network")
    for spec in config.demands.values():
        for message in spec.theta_violations(config.t0, config.T):
            problems.setdefault("demands", []).append(message)
    grid = config.sde_times()
    for t in config.update_times:
        on_grid = np.min(np.abs(grid - t)) <= GRID_ATOL
        if not on_grid:
            problems.setdefault("experiment.update_times", []).append(f"{t} is not on the SDE grid")
    if list(config.update_times) != sorted(set(config.update_times)):
        problems.setdefault("experiment.update_times", []).append("must be strictly increasing")
    if config.update_times and config.update_times[0] > config.t0 + GRID_ATOL:
        problems.setdefault("experiment.update_times", []).append("the first update must be at or before t0")
    for arc in config.network.arcs:
        try:
            cell_count(arc.length, config.pde_dx)
        except FlownetError as exc:
            problems.setdefault("numerics.pde_dx", []).append(f"arc {arc.id}: {exc.message}")
    if problems:
        raise ScenarioError.from_validation_error(ValidationError(problems))
    return config


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFileError(f"cannot read scenario file {path}", path=str(path), reason=str(exc)) from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("scenario file is not valid JSON",
                            problems={"scenario": [f"line {exc.lineno} column {exc.colno}: {exc.msg}"]}) from exc
    config = check_scenario(parse_scenario(document))
    logger.info("loaded scenario %s (%s arcs, %s demand nodes)", path.name,
                len(config.network.arcs), len(config.demands))
    return config


# ---------------- writing -----------------
def dump_time_function(f: CoefficientFunction):
    if isinstance(f, PiecewiseConstant):
        return {"breakpoints": list(f.breakpoints), "values": list(f.values)}
    return {
        "constant": f.constant,
        "terms": [{"amplitude": t.amplitude, "angular_factor": t.angular_factor, "phase": t.phase} for t in f.terms],
    }


def dump_damping(shape: DampingShape):
    if shape.is_none:
        return {"kind": NONE}
    return {"kind": MONOMIAL, "degree": shape.degree, "coefficient": shape.coefficient}


def dump_scenario(config: ScenarioConfig) -> dict:
    document = {
        "network": {
            "nodes": [{"id": node.id, "kind": node.kind} for node in config.network.nodes],
            "arcs": [{
                "id": arc.id, "tail": arc.tail, "head": arc.head, "length": arc.length,
                "velocity": dump_time_function(arc.velocity),
                "damping_factor": dump_time_function(arc.damping_factor),
                "damping": dump_damping(arc.damping_shape),
            } for arc in config.network.arcs],
        },
        "demands": [{
            "node": spec.node_id, "kappa": spec.kappa, "theta": dump_time_function(spec.theta),
            "sigma": spec.sigma, "d0": spec.d0,
        } for spec in config.demands.values()],
        "numerics": {"t0": config.t0, "T": config.T, "sde_dt": config.sde_dt, "pde_dx": config.pde_dx,
                     "initial_data": config.initial_data},
        "experiment": {
            "update_times": list(config.update_times),
            "monte_carlo_runs": config.monte_carlo_runs,
            "master_seed": config.master_seed,
            "variants": [{"label": v.label, "damping": dump_damping(v.damping)} for v in config.variants],
        },
    }
    if config.workers is not None:
        document["experiment"]["workers"] = config.workers
    if config.name:
        document["name"] = config.name
    return document


def config_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(dump_scenario(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

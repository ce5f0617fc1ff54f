from flownet.scenario import DECLARED, config_hash

from ._base import ScenarioCommand


class Command(ScenarioCommand):
    help = "Check a scenario file and echo its parameters."
    command_name = "validate"
    writes_output = False

    def execute_scenario(self, config, options):
        net = config.network
        self.say(f"scenario {config.name or '<unnamed>'}: ok")
        self.say(f"config hash {config_hash(config)}")
        self.say(f"horizon [{config.t0}, {config.T}]  sde_dt {config.sde_dt}  pde_dx {config.pde_dx}  "
                 f"initial data {config.initial_data}")
        self.say("nodes: " + ", ".join(f"{node.id} ({node.kind})" for node in net.nodes))
        for arc in net.arcs:
            self.say(f"arc {arc.id} {arc.tail}->{arc.head}  length {arc.length}  lambda(t) = {arc.velocity}  "
                     f"mu(t) = {arc.damping_factor}  damping {arc.damping_shape.label}")
        for spec in config.demands.values():
            self.say(f"demand {spec.node_id}  kappa {spec.kappa}  theta(t) = {spec.theta}  "
                     f"sigma {spec.sigma}  d0 {spec.d0}")
        self.say("update times: " + ", ".join(f"{t:g}" for t in config.update_times))
        self.say(f"monte carlo runs {config.monte_carlo_runs}  master seed {config.master_seed}")
        for label, variant_net in config.variant_networks().items():
            if label == DECLARED:
                self.say("variant declared: damping as given per arc")
                continue
            shape = variant_net.arcs[0].damping_shape
            extra = "" if shape.is_none else f" (C = {shape.coefficient:g})"
            self.say(f"variant {label}: {shape.label}{extra}")

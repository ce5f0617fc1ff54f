from flownet.experiment import ScenarioContext, run_single

from ._base import ScenarioCommand


class Command(ScenarioCommand):
    help = "Simulate one demand realization under every damping variant."
    command_name = "simulate"

    def add_command_arguments(self, parser):
        parser.add_argument("--run-index", type=int, dest="run_index", default=0)
        parser.add_argument("--dump-field", action="store_true", dest="dump_field",
                            help="also write the space-time density of every arc")

    def execute_scenario(self, config, options):
        context = ScenarioContext(config)
        result = run_single(config, options["run_index"], context=context, record_field=options["dump_field"])
        writer = self.get_writer(options)
        for node, path in result.demands.items():
            writer.demand(f"demand_{node}.csv", path)

        variants, nodes, windows, starts, ends, values = [], [], [], [], [], []
        for label, variant in result.variants.items():
            writer.inflow(f"inflow_{label}.csv", variant.inflow)
            for node, supply in variant.supplies.items():
                writer.supply(f"supply_{label}_{node}.csv", supply)
            for junction, alphas in variant.alphas.items():
                writer.alphas(f"alpha_{label}_{junction}.csv", alphas)
            for arc_id, field in variant.simulation.fields.items():
                writer.field(f"field_{label}_{arc_id}.csv", context.grids[arc_id], field)
            for node, objective in variant.objective.items():
                for index, value in enumerate(objective.windows):
                    variants.append(label)
                    nodes.append(node)
                    windows.append(index)
                    starts.append(objective.edges[index])
                    ends.append(objective.edges[index + 1])
                    values.append(value)
                self.say(f"{label} {node}: objective {objective.total:.6g}")
        writer.table("objective.csv", ["variant", "node", "window", "start", "end", "value"],
                     [variants, nodes, windows, starts, ends, values])
        writer.manifest(config, self.command_name, grids=context.grids, run_index=result.run_index,
                        run_seed=str(result.seed), variants=list(result.variants))

from flownet.experiment import ScenarioContext, compare_damping

from ._base import ScenarioCommand


class Command(ScenarioCommand):
    help = "One realization under every damping variant, stacked side by side."
    command_name = "compare_damping"

    def add_command_arguments(self, parser):
        parser.add_argument("--run-index", type=int, dest="run_index", default=0)

    def execute_scenario(self, config, options):
        context = ScenarioContext(config)
        comparison = compare_damping(config, options["run_index"], context=context)
        result = comparison.result
        labels = list(result.variants)
        writer = self.get_writer(options)
        first = result.variants[labels[0]]
        writer.table("inflow_variants.csv", ["window", "t_in", *labels],
                     [first.inflow.windows, first.inflow.times, *[result.variants[label].inflow.values for label in labels]])
        for node, path in result.demands.items():
            writer.demand(f"demand_{node}.csv", path)
            times = first.supplies[node].times
            writer.table(f"supply_variants_{node}.csv", ["t", *labels],
                         [times, *[result.variants[label].supplies[node].values for label in labels]])
        diagnostics = {
            "undamped_below_fraction": comparison.undamped_below_fraction,
            "degree_ascending_fraction": comparison.ascending_fraction,
            "degree_descending_fraction": comparison.descending_fraction,
            "degree_ordered_fraction": comparison.ordered_fraction,
        }
        for key, value in diagnostics.items():
            self.say(f"{key}: {'n/a' if value is None else f'{value:.4f}'}")
        writer.manifest(config, self.command_name, grids=context.grids, run_index=result.run_index,
                        variants=labels, ordering=diagnostics)

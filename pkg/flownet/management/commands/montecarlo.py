from flownet.experiment import run_monte_carlo

from ._base import ScenarioCommand


class Command(ScenarioCommand):
    help = "Average demand, supply and inflow over the configured number of realizations."
    command_name = "montecarlo"

    def execute_scenario(self, config, options):
        result = run_monte_carlo(config, workers=options["workers"])
        writer = self.get_writer(options)
        for node, estimate in result.demands.items():
            writer.estimate(f"demand_mean_{node}.csv", estimate)

        variants, nodes, means, errors = [], [], [], []
        diagnostics = {}
        for label, ensemble in result.variants.items():
            writer.estimate(f"inflow_mean_{label}.csv", ensemble.inflow)
            for node, estimate in ensemble.supplies.items():
                writer.estimate(f"supply_mean_{label}_{node}.csv", estimate)
            for node, objective in ensemble.objective.items():
                variants.append(label)
                nodes.append(node)
                means.append(objective.mean)
                errors.append(objective.standard_error)
                self.say(f"{label} {node}: objective {objective.mean:.6g} +- {objective.standard_error:.2g}")
            diagnostics[label] = {
                "single_run_max_jump": ensemble.single_jump,
                "averaged_max_jump": ensemble.averaged_jump,
                "jumps_smoothed": ensemble.jumps_smoothed,
            }
        writer.table("objective.csv", ["variant", "node", "mean", "standard_error"], [variants, nodes, means, errors])
        writer.manifest(config, self.command_name, runs=result.runs, jump_diagnostics=diagnostics)

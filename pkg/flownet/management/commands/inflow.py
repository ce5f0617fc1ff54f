from flownet.experiment import inflow_profiles

from ._base import ScenarioCommand


class Command(ScenarioCommand):
    help = "Compute the optimal inflow for every damping variant."
    command_name = "inflow"

    def add_command_arguments(self, parser):
        parser.add_argument("--run-index", type=int, dest="run_index",
                            help="condition on the demand paths of this run instead of the initial demands")

    def execute_scenario(self, config, options):
        profiles = inflow_profiles(config, options["run_index"])
        writer = self.get_writer(options)
        for label, profile in profiles.items():
            writer.inflow(f"inflow_{label}.csv", profile)
            self.say(f"{label}: u in [{profile.values.min():.6g}, {profile.values.max():.6g}] "
                     f"on {profile.times.size} injection times")
        writer.manifest(config, self.command_name, run_index=options["run_index"],
                        variants=list(profiles))

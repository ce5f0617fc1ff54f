import json
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from flownet.exceptions import FlownetError
from flownet.export import ResultWriter
from flownet.scenario import load_scenario

logger = logging.getLogger(__name__)


def _plain(text):
    return text


class ScenarioCommand(BaseCommand):
    """Loads and validates the scenario, applies flag overrides and reports FlownetError as JSON."""

    command_name = ""
    writes_output = True

    def add_arguments(self, parser):
        parser.add_argument("scenario", help="path to a scenario JSON file")
        parser.add_argument("--seed", type=int, help="override experiment.master_seed")
        parser.add_argument("--runs", type=int, help="override experiment.monte_carlo_runs")
        parser.add_argument("--variant", action="append", dest="variants", metavar="LABEL",
                            help="run only this damping variant (repeatable)")
        parser.add_argument("--workers", type=int, help="worker processes for Monte Carlo runs")
        if self.writes_output:
            parser.add_argument("--out-dir", dest="out_dir", help="directory for CSV files and the manifest")
            parser.add_argument("--timestamp", action="store_true",
                                help="record the creation time in manifest.json (output is then not byte-reproducible)")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            config = load_scenario(options["scenario"])
            config = config.with_overrides(seed=options["seed"], runs=options["runs"], workers=options["workers"])
            config = config.select_variants(options["variants"])
            self.execute_scenario(config, options)
        except FlownetError as exc:
            logger.exception("%s failed for %s", self.command_name, options["scenario"])
            self.stderr.write(json.dumps(exc.as_dict(), sort_keys=True), style_func=_plain)
            raise CommandError(exc.message, returncode=exc.exit_code) from exc

    def execute_scenario(self, config, options):
        raise NotImplementedError

    def out_dir(self, options) -> Path:
        if options.get("out_dir"):
            return Path(options["out_dir"])
        return Path(settings.FLOWNET["OUTPUT_DIR"]) / self.command_name

    def get_writer(self, options) -> ResultWriter:
        return ResultWriter(self.out_dir(options), timestamp=options.get("timestamp", False))

    def say(self, message):
        self.stdout.write(message)

import io
import logging

from django.core.management.base import BaseCommand, CommandError

from mesolab.config import EXPERIMENTS, ExperimentConfig, schema
from mesolab.exceptions import (
    ACCEPTANCE_ERROR_EXIT,
    CONFIG_ERROR_EXIT,
    ConfigurationError,
    MesolabError,
    exit_code_for,
)
from mesolab.experiments import run_experiment

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Runs a mesoscopic fluctuation experiment and writes its result table."
    requires_system_checks = []

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest="experiment", metavar="experiment")
        subparsers.required = True
        for experiment in EXPERIMENTS:
            subparser = subparsers.add_parser(experiment, help="Run the %s experiment." % experiment)
            subparser.add_argument("--config", help="Flat `key = value` configuration file.")
            subparser.add_argument("--out", help="Output path; the result goes to stdout otherwise.")
            subparser.add_argument("--seed", type=int, help="Overrides the configured seed.")
            subparser.add_argument("--threads", type=int, default=1)
            subparser.add_argument("--format", choices=("csv", "json"), default="csv")
        subparsers.add_parser("schema", help="Print the documented configuration keys.")

    def handle(self, *args, **options):
        experiment = options["experiment"]
        if experiment == "schema":
            self.stdout.write(schema())
            return

        cfg = self.load_config(options)
        try:
            result = run_experiment(experiment, cfg, threads=max(1, options["threads"]))
        except (MesolabError, ValueError) as e:
            code = exit_code_for(e) if isinstance(e, MesolabError) else CONFIG_ERROR_EXIT
            raise CommandError("{0}: {1}".format(type(e).__name__, e), returncode=code)

        self.write_result(result, cfg.output, options["format"])
        if not result.accepted:
            names = ", ".join(check.name for check in result.failed_checks)
            raise CommandError(
                "Acceptance checks failed: {0}".format(names), returncode=ACCEPTANCE_ERROR_EXIT
            )

    def load_config(self, options):
        overrides = {"seed": options["seed"], "output": options["out"]}
        try:
            if options["config"]:
                return ExperimentConfig.from_file(options["config"], **overrides)
            return ExperimentConfig.from_mapping(
                {key: value for key, value in overrides.items() if value is not None}
            )
        except ConfigurationError as e:
            raise CommandError(str(e), returncode=CONFIG_ERROR_EXIT)

    def write_result(self, result, output, format):
        if not output:
            buffer = io.StringIO()
            result.write(buffer, format)
            self.stdout.write(buffer.getvalue(), ending="")
            return
        with open(output, "w", encoding="utf-8", newline="") as stream:
            result.write(stream, format)
        logger.info("Wrote %s result to %s", result.experiment, output)
        for n, batch in sorted(result.artifacts.get("samples", {}).items()):
            stem = "{0}.samples-n{1}".format(output, n)
            with open(stem + ".csv", "w", encoding="utf-8", newline="") as stream:
                batch.write_csv(stream)
            with open(stem + ".json", "w", encoding="utf-8") as stream:
                batch.write_metadata(stream)
            logger.info("Wrote %d samples of size %d to %s.csv", batch.num_samples, n, stem)

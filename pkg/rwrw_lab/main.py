import logging
import sys
from argparse import ArgumentParser
from pathlib import Path
from typing import List, Optional

from rwrw_lab.config import ExperimentConfig, load_config, parse_config
from rwrw_lab.constants import DEFAULT_OUTPUT_DIRECTORY
from rwrw_lab.errors import (ErrAssertion, ErrConfig, ErrDomain, ErrInvariant,
                             ErrKnown, ErrResource, ErrUsage)
from rwrw_lab.experiments import (EXPERIMENTS, parameter_schemas,
                                  run_experiment)
from rwrw_lab.filesystem import find_file_in_folder
from rwrw_lab.run_manifest import SUMMARY_FILE_NAME, RunManifest
from rwrw_lab.streams import resolve_master_seed

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3


def main(cli_args: List[str]) -> int:
    parser = ArgumentParser(prog="rwrw-lab", description="Simulation and verification lab for random walks on random walks")
    parser.add_argument("--verbose", action="store_true", default=False, help="debug logging (default: %(default)s)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    sub = subparsers.add_parser("run", help="run one experiment")
    sub.add_argument("experiment", choices=sorted(EXPERIMENTS))
    sub.add_argument("--config", type=str, required=False, help="configuration file; defaults apply to everything it omits")
    sub.add_argument("--seed", type=int, required=False, help="master seed; wins over the configuration file")
    sub.add_argument("--reps", type=int, required=False)
    sub.add_argument("--workers", type=int, required=False)
    sub.add_argument("--out", type=str, default=str(DEFAULT_OUTPUT_DIRECTORY), help="output directory (default: %(default)s)")

    sub = subparsers.add_parser("list", help="list the experiments and their parameters")
    sub.add_argument("--parameters", action="store_true", default=False)

    sub = subparsers.add_parser("rerun", help="run again from a summary file and compare the outputs")
    sub.add_argument("summary", type=str, help=f"a {SUMMARY_FILE_NAME} or the directory holding it")
    sub.add_argument("--out", type=str, required=True)
    sub.add_argument("--workers", type=int, required=False)

    parsed_args = parser.parse_args(cli_args)
    logging.basicConfig(level=logging.DEBUG if parsed_args.verbose else logging.INFO)

    if parsed_args.command == "list":
        do_list(parsed_args.parameters)
        return EXIT_OK
    if parsed_args.command == "rerun":
        return do_rerun(Path(parsed_args.summary).expanduser().resolve(), Path(parsed_args.out), parsed_args.workers)

    config_path = Path(parsed_args.config).expanduser().resolve() if parsed_args.config else None
    config = load_config(config_path, parameter_schemas(), parsed_args.experiment)
    seed = resolve_master_seed(parsed_args.seed, config.execution.seed)
    config = config.with_overrides(seed=seed, reps=parsed_args.reps, workers=parsed_args.workers)
    return do_run(config, Path(parsed_args.out))


def do_list(with_parameters: bool):
    for name in sorted(EXPERIMENTS):
        entry = EXPERIMENTS[name]
        print(f"{name}: {entry.description} (default reps {entry.default_reps})")
        if with_parameters:
            for parameter in entry.parameters:
                print(f"    {parameter.describe()}")


def do_run(config: ExperimentConfig, output_directory: Path) -> int:
    logging.info(f"Running {config.name} with master seed {config.execution.seed}, output in {output_directory}")
    manifest = run_experiment(config, output_directory)

    line = manifest.summary.get("line")
    if line:
        print(line)
    failed = manifest.failed_assertions()
    if failed:
        raise ErrAssertion(failed[0].name, failed[0].detail)
    return EXIT_OK


def do_rerun(summary: Path, output_directory: Path, workers: Optional[int]) -> int:
    summary_file = find_file_in_folder(summary, SUMMARY_FILE_NAME) if summary.is_dir() else summary
    previous = RunManifest.from_file(summary_file)
    config = parse_config(previous.config, parameter_schemas()).with_overrides(seed=previous.seed, workers=workers)

    code = EXIT_OK
    try:
        do_run(config, output_directory)
    except ErrAssertion as error:
        logging.error(str(error))
        code = EXIT_ASSERTION

    current = RunManifest.from_file(output_directory / SUMMARY_FILE_NAME)
    differing = sorted(name for name in set(previous.outputs) | set(current.outputs) if previous.outputs.get(name) != current.outputs.get(name))
    if differing:
        raise ErrInvariant(f"rerun of {previous.experiment} produced different outputs: {differing}")
    logging.info(f"Rerun of {previous.experiment} reproduced {len(current.outputs)} output(s) byte for byte")
    return code


def exit_code_of(error: ErrKnown) -> int:
    if isinstance(error, (ErrAssertion, ErrInvariant)):
        return EXIT_ASSERTION
    if isinstance(error, ErrResource):
        return EXIT_RESOURCE
    if isinstance(error, (ErrConfig, ErrUsage, ErrDomain)):
        return EXIT_CONFIG
    return EXIT_ASSERTION


def cli():
    try:
        sys.exit(main(sys.argv[1:]))
    except ErrKnown as err:
        print("An error occurred.")
        print(err)
        logging.error(str(err))
        sys.exit(exit_code_of(err))


if __name__ == "__main__":
    cli()

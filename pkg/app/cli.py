"""Command-line entry point: python -m app.cli <command> ..."""

import argparse
import logging
import sys

from app.commands import graph as graph_cmd
from app.commands import passivity as passivity_cmd
from app.commands import pfc as pfc_cmd
from app.commands import scenario as scenario_cmd
from app.commands import sim as sim_cmd
from app.config import get_settings
from app.errors import PfcSyncError
from app.models.schemas import ScenarioName

logger = logging.getLogger(__name__)
settings = get_settings()


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="input JSON file")
    common.add_argument("--out", help=f"output directory (default: {settings.output_dir})")
    common.add_argument("--plot", action="store_true", help="also write static PNG plots")

    grid = common.add_argument_group("frequency grid")
    grid.add_argument("--grid-points", type=int)
    grid.add_argument("--omega-min", type=float)
    grid.add_argument("--omega-max", type=float)

    run = common.add_argument_group("simulation")
    run.add_argument("--step", type=float, help="RK4 step h [s]")
    run.add_argument("--horizon", type=float, help="horizon T [s]")
    run.add_argument("--sigma", type=float, help="coupling gain")

    design = common.add_argument_group("compensator")
    design.add_argument("--slack", type=float, help="extra gain added to each designed bound")
    design.add_argument("--dc", type=float, help="derivative / static gain d_c")
    design.add_argument("--tau", type=float, help="derivative filter time constant")
    design.add_argument("--pfc", help="none | static:NU | derivative:DC,TAU | designed[:SLACK] | PATH")

    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="pfc-sync",
        description="Passivation by parallel feedforward compensators and output synchronization over signed graphs.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    pfc = commands.add_parser("pfc", help="compensator design").add_subparsers(dest="action", required=True)
    pfc.add_parser("design", parents=[common], help="design a PFC for a plant").set_defaults(handler=pfc_cmd.design)

    passivity = commands.add_parser("passivity", help="positive-real checks").add_subparsers(
        dest="action", required=True)
    passivity.add_parser("check", parents=[common], help="positive-real verdict and margin curve").set_defaults(
        handler=passivity_cmd.check)

    graph = commands.add_parser("graph", help="signed graph analysis").add_subparsers(dest="action", required=True)
    analyze = graph.add_parser("analyze", parents=[common], help="Laplacian structure and OFP radius")
    analyze.add_argument("input_file", nargs="?", help="graph JSON (same as --input)")
    analyze.set_defaults(handler=graph_cmd.analyze)

    sim = commands.add_parser("sim", help="simulation").add_subparsers(dest="action", required=True)
    sim.add_parser("run", parents=[common], help="simulate a JSON-described loop").set_defaults(handler=sim_cmd.run)

    scenario = commands.add_parser("scenario", parents=[common], help="run a built-in scenario")
    scenario.add_argument("name", choices=[s.value for s in ScenarioName])
    scenario.set_defaults(handler=scenario_cmd.run)
    return parser


def configure_logging(args) -> None:
    level = settings.log_level
    if args.verbose:
        level = "DEBUG"
    elif args.quiet:
        level = "WARNING"
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args)
    try:
        return args.handler(args)
    except PfcSyncError as exc:
        logger.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

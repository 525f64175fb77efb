"""scenario <name>: run a built-in scenario and write its artifacts."""

import logging

from app.commands import EXIT_DIVERGED, EXIT_OK, out_dir
from app.services import codec, plots
from app.services.scenarios import ScenarioOverrides, run_scenario

logger = logging.getLogger(__name__)


def overrides_from_args(args) -> ScenarioOverrides:
    return ScenarioOverrides(
        step=args.step,
        horizon=args.horizon,
        sigma=args.sigma,
        slack=args.slack,
        d_c=args.dc,
        tau=args.tau,
        pfc=None if args.pfc is None else codec.pfc_option(args.pfc),
        omega_min=args.omega_min,
        omega_max=args.omega_max,
        grid_points=args.grid_points,
    )


def run(args) -> int:
    result = run_scenario(args.name, overrides_from_args(args))
    out = out_dir(args) / result.report.name

    for run in result.runs:
        csv = codec.write_csv(out / f"{run.key}.csv", codec.trajectory_frame(run.log, run.metrics))
        for entry in result.report.runs:
            if entry.name == run.log.name:
                entry.csv = csv.name
        if args.plot:
            plots.save_png(out / f"{run.key}.png", plots.render_trajectories(run.log, run.metrics))
    for key, curve in result.curves.items():
        codec.write_csv(out / f"{key}_margin.csv", codec.margin_frame(curve))
        if args.plot:
            plots.save_png(out / f"{key}_margin.png", plots.render_margin(curve))
    if args.plot and result.graph is not None:
        plots.save_png(out / "graph.png", plots.render_graph(result.graph))
    codec.write_json(out / "report.json", result.report)

    if result.diverged:
        logger.warning("Scenario %s: divergence guard tripped", result.report.name)
        return EXIT_DIVERGED
    return EXIT_OK

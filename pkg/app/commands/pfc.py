"""pfc design: synthesize a compensator and verify the compensated sum."""

import logging

from app.commands import EXIT_OK, grid_from_args, input_path, out_dir
from app.models.schemas import SystemSpec
from app.services import codec, plots
from app.services.lti import parallel
from app.services.passivity import check_positive_real, hermitian_margin_curve
from app.services.pfc_design import design_pfc

logger = logging.getLogger(__name__)


def design(args) -> int:
    plant = codec.system_from_spec(codec.parse_file(input_path(args), SystemSpec))
    report = design_pfc(plant, args.slack)

    compensated = parallel(plant, report.compensator)
    grid = grid_from_args(args, compensated)
    verdict = check_positive_real(compensated, grid)

    out = out_dir(args)
    codec.write_json(out / "pfc_design.json", codec.design_to_out(report, codec.verdict_to_out(verdict, len(grid))))
    codec.write_json(out / "compensator.json", codec.system_to_spec(report.compensator))
    if args.plot:
        plots.save_png(out / "compensated_margin.png", plots.render_margin(hermitian_margin_curve(compensated, grid)))

    if not verdict.is_positive_real:
        logger.warning("Compensated system is not positive real on the grid (margin %.3g)", verdict.margin)
    return EXIT_OK

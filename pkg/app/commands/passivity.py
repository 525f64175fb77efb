"""passivity check: positive-real verdict and Hermitian-margin curve."""

import logging

from app.commands import EXIT_OK, grid_from_args, input_path, out_dir
from app.models.schemas import SystemSpec
from app.services import codec, plots
from app.services.passivity import check_positive_real, hermitian_margin_curve

logger = logging.getLogger(__name__)


def check(args) -> int:
    sys = codec.system_from_spec(codec.parse_file(input_path(args), SystemSpec))
    grid = grid_from_args(args, sys)
    verdict = check_positive_real(sys, grid)
    curve = hermitian_margin_curve(sys, grid)

    out = out_dir(args)
    codec.write_json(out / "passivity_verdict.json", codec.verdict_to_out(verdict, len(grid)))
    codec.write_csv(out / "passivity_margin.csv", codec.margin_frame(curve))
    if args.plot:
        plots.save_png(out / "passivity_margin.png", plots.render_margin(curve))

    logger.info("Positive real: %s (margin %.6g at omega=%.6g, IFP index %s)",
                verdict.is_positive_real, verdict.margin, verdict.worst_frequency, verdict.ifp_index)
    return EXIT_OK

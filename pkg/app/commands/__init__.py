"""CLI command handlers; each returns a process exit code."""

from pathlib import Path

from app.config import get_settings
from app.errors import ValidationError
from app.services.lti import PoleResidueSystem
from app.services.passivity import FrequencyGrid

settings = get_settings()

EXIT_OK = 0
EXIT_DIVERGED = 4


def out_dir(args) -> Path:
    path = Path(args.out or settings.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def grid_from_args(args, sys: PoleResidueSystem) -> FrequencyGrid:
    return FrequencyGrid.build(sys, args.omega_min, args.omega_max, args.grid_points)


def input_path(args) -> str:
    path = getattr(args, "input", None) or getattr(args, "input_file", None)
    if not path:
        raise ValidationError("input: an input file is required (--input PATH)")
    return path

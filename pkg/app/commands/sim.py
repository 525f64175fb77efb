"""sim run: simulate a network or feedback pair described in JSON."""

import logging
import re

from app.commands import EXIT_DIVERGED, EXIT_OK, input_path, out_dir
from app.errors import ValidationError
from app.models.schemas import PfcKind, PfcSpec, ScenarioReport, SimulationSpec
from app.services import codec, netsim, plots

logger = logging.getLogger(__name__)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text).strip("-") or "sim"


_GRID_FLAGS = {"grid_points": "--grid-points", "omega_min": "--omega-min", "omega_max": "--omega-max"}

# override field -> (argparse dest, flag, pfc kind it applies to)
_PFC_FLAGS = {
    "slack": ("slack", "--slack", PfcKind.DESIGNED),
    "d_c": ("dc", "--dc", PfcKind.DERIVATIVE),
    "tau": ("tau", "--tau", PfcKind.DERIVATIVE),
}


def _override_pfc(pfc: PfcSpec, args) -> PfcSpec:
    update = {}
    for field, (dest, flag, kind) in _PFC_FLAGS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if pfc.kind != kind:
            raise ValidationError(f"{flag}: applies to a {kind.value} pfc, not '{pfc.kind.value}'")
        update[field] = value
    return pfc.model_copy(update=update) if update else pfc


def _apply_overrides(spec: SimulationSpec, args) -> SimulationSpec:
    for dest, flag in _GRID_FLAGS.items():
        if getattr(args, dest, None) is not None:
            raise ValidationError(f"{flag}: sim run uses no frequency grid")

    update = {
        key: value for key, value in (
            ("step", args.step), ("horizon", args.horizon), ("sigma", args.sigma),
        ) if value is not None
    }
    pfc = spec.pfc if args.pfc is None else codec.pfc_option(args.pfc)
    if isinstance(pfc, list):
        update["pfc"] = [_override_pfc(p, args) for p in pfc]
    else:
        update["pfc"] = _override_pfc(pfc, args)
    return spec.model_copy(update=update)


def run(args) -> int:
    spec = _apply_overrides(codec.parse_file(input_path(args), SimulationSpec), args)
    out = out_dir(args)
    name = _slug(spec.name)

    if spec.sweep is None:
        cfg = codec.config_from_spec(spec)
        log, metrics = netsim.simulate(cfg, spec.threshold)
        results = [(log, metrics, getattr(cfg, "sigma", None))]
    else:
        configs = [codec.config_from_spec(spec, sigma) for sigma in spec.sweep.sigma]
        pairs = netsim.run_sweep(configs, threshold=spec.threshold)
        results = [(log, metrics, sigma) for (log, metrics), sigma in zip(pairs, spec.sweep.sigma)]

    runs = []
    for log, metrics, sigma in results:
        stem = name if spec.sweep is None else f"{name}_sigma-{sigma:g}"
        csv = codec.write_csv(out / f"{stem}.csv", codec.trajectory_frame(log, metrics))
        audit = netsim.energy_audit(log) if log.storage is not None else None
        runs.append(codec.metrics_to_out(log, metrics, audit, sigma=sigma, csv=csv.name))
        if args.plot:
            plots.save_png(out / f"{stem}.png", plots.render_trajectories(log, metrics))

    if spec.sweep is None:
        codec.write_json(out / f"{name}_metrics.json", runs[0])
    else:
        codec.write_json(out / f"{name}_sweep.json", ScenarioReport(
            name=spec.name, passed=not any(r.diverged for r in runs), runs=runs))

    if any(r.diverged for r in runs):
        logger.warning("Divergence guard tripped in %d run(s)", sum(r.diverged for r in runs))
        return EXIT_DIVERGED
    return EXIT_OK

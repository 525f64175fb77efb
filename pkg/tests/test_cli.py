import json
import logging

import pandas as pd
import pytest

from app.cli import build_parser, main
from app.commands import sim as sim_cmd
from app.models.schemas import SimulationSpec
from app.services import codec
from app.services.signed_graph import directed_cycle, example4_graph, path_graph


def _write(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def _graph_payload(g):
    return codec.graph_to_spec(g).model_dump(by_alias=True)


DOUBLE_LAG = {"rational": {"num": [1.0], "den": [0.25, 1.0, 1.0]}}


def test_graph_analyze_is_reproducible(tmp_path):
    graph = _write(tmp_path / "graph.json", _graph_payload(example4_graph()))
    outputs = []
    for run in ("a", "b"):
        assert main(["graph", "analyze", graph, "--out", str(tmp_path / run)]) == 0
        outputs.append((tmp_path / run / "graph_analysis.json").read_bytes())
    assert outputs[0] == outputs[1]
    report = json.loads(outputs[0])
    assert report["ofp_radius"] == pytest.approx(0.5, abs=1e-6)
    assert report["sync_conditions_met"] is True


def test_graph_analyze_with_plot(tmp_path):
    graph = _write(tmp_path / "graph.json", _graph_payload(example4_graph()))
    assert main(["graph", "analyze", "--input", graph, "--out", str(tmp_path), "--plot"]) == 0
    assert (tmp_path / "graph.png").read_bytes()[:4] == b"\x89PNG"


def test_malformed_input_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["graph", "analyze", str(bad), "--out", str(tmp_path)]) == 2


def test_missing_input_exits_2(tmp_path):
    assert main(["passivity", "check", "--out", str(tmp_path)]) == 2


def test_passivity_check_writes_margin_csv(tmp_path):
    plant = _write(tmp_path / "plant.json", DOUBLE_LAG)
    assert main(["passivity", "check", "--input", plant, "--out", str(tmp_path), "--grid-points", "400"]) == 0
    verdict = json.loads((tmp_path / "passivity_verdict.json").read_text())
    assert verdict["positive_real"] is False
    assert verdict["ifp_index"] == pytest.approx(-0.5, abs=1e-3)
    frame = pd.read_csv(tmp_path / "passivity_margin.csv")
    assert list(frame.columns) == ["omega", "margin", "re_h", "im_h"]
    assert frame["omega"].is_monotonic_increasing


def test_pfc_design_writes_compensator(tmp_path):
    plant = _write(tmp_path / "plant.json", DOUBLE_LAG)
    assert main(["pfc", "design", "--input", plant, "--out", str(tmp_path)]) == 0
    design = json.loads((tmp_path / "pfc_design.json").read_text())
    assert design["rule"] == "siso"
    assert design["gains"][0]["gain"][0][0] == pytest.approx(2.0, abs=1e-9)
    assert design["compensated_verdict"]["positive_real"] is True
    compensator = json.loads((tmp_path / "compensator.json").read_text())
    assert compensator["chains"][0]["pole_re"] == pytest.approx(0.5)


def test_sim_not_well_posed_exits_3(tmp_path):
    agent = {"kind": "lti", "state_space": {"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]], "D": [[-0.5]]}}
    spec = _write(tmp_path / "sim.json", {"agents": [agent, agent], "graph": _graph_payload(path_graph(2))})
    assert main(["sim", "run", "--input", spec, "--out", str(tmp_path)]) == 3


def test_sim_run_single(tmp_path):
    spec = _write(tmp_path / "sim.json", {
        "name": "pd",
        "agents": [{"template": "integrator", "x0": [x]} for x in (1.0, -2.0, 3.0, 0.5)],
        "graph": _graph_payload(example4_graph()),
        "pfc": {"kind": "static", "nu": 1.0},
        "horizon": 20.0,
    })
    assert main(["sim", "run", "--input", spec, "--out", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "pd_metrics.json").read_text())
    assert metrics["final_sync_error"] < 1e-2
    assert metrics["csv"] == "pd.csv"
    assert (tmp_path / "pd.csv").exists()


def test_sim_pfc_override_diverges_with_exit_4(tmp_path):
    spec = _write(tmp_path / "sim.json", {
        "name": "pd",
        "agents": [{"template": "integrator", "x0": [x]} for x in (1.0, -2.0, 3.0, 0.5)],
        "graph": _graph_payload(example4_graph()),
        "pfc": {"kind": "static", "nu": 1.0},
    })
    assert main(["sim", "run", "--input", spec, "--out", str(tmp_path), "--pfc", "none"]) == 4


def test_sim_applies_compensator_overrides(tmp_path):
    spec = SimulationSpec.model_validate({
        "agents": [{"template": "integrator"}] * 3,
        "graph": _graph_payload(directed_cycle(3)),
        "pfc": {"kind": "derivative", "d_c": 1.0, "tau": 0.1},
    })
    args = build_parser().parse_args(["sim", "run", "--dc", "2.0", "--tau", "0.05"])
    pfc = sim_cmd._apply_overrides(spec, args).pfc
    assert (pfc.d_c, pfc.tau) == (2.0, 0.05)

    args = build_parser().parse_args(["sim", "run", "--pfc", "designed", "--slack", "0.3"])
    assert sim_cmd._apply_overrides(spec, args).pfc.slack == 0.3


@pytest.mark.parametrize("flags, flag", [
    (["--slack", "0.1"], "--slack"),
    (["--dc", "2.0"], "--dc"),
    (["--grid-points", "64"], "--grid-points"),
])
def test_sim_rejects_overrides_it_cannot_use(tmp_path, caplog, flags, flag):
    spec = _write(tmp_path / "sim.json", {
        "agents": [{"template": "integrator", "x0": [x]} for x in (1.0, -2.0, 3.0, 0.5)],
        "graph": _graph_payload(example4_graph()),
        "pfc": {"kind": "static", "nu": 1.0},
    })
    with caplog.at_level(logging.ERROR):
        assert main(["sim", "run", "--input", spec, "--out", str(tmp_path), *flags]) == 2
    assert caplog.records[-1].getMessage().startswith(flag)
    assert "\n" not in caplog.records[-1].getMessage()
    assert not list(tmp_path.glob("*.csv"))


def test_sim_sweep(tmp_path):
    spec = _write(tmp_path / "zgs.json", {
        "name": "zgs",
        "agents": [{"kind": "gradient_flow", "q": q, "b": b} for q, b in ((1, 0), (2, 1), (4, 2))],
        "graph": _graph_payload(directed_cycle(3)),
        "step": 0.01,
        "horizon": 20.0,
        "sweep": {"sigma": [1.0, 10.0]},
    })
    assert main(["sim", "run", "--input", spec, "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "zgs_sweep.json").read_text())
    assert [run["sigma"] for run in report["runs"]] == [1.0, 10.0]
    assert (tmp_path / "zgs_sigma-1.csv").exists()
    assert (tmp_path / "zgs_sigma-10.csv").exists()


def test_scenario_example2(tmp_path):
    assert main(["scenario", "example2", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "example2" / "report.json").read_text())
    assert report["passed"] is True
    assert (tmp_path / "example2" / "plant_margin.csv").exists()


def test_scenario_example4_without_pfc_exits_4(tmp_path):
    assert main(["scenario", "example4", "--pfc", "none", "--out", str(tmp_path)]) == 4
    report = json.loads((tmp_path / "example4" / "report.json").read_text())
    assert report["runs"][0]["diverged"] is True
    assert report["runs"][0]["csv"] == "pfc_none.csv"


def test_unknown_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["teleport"])
    assert info.value.code == 2

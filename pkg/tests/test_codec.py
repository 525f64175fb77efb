import json

import numpy as np
import pytest

from app.errors import ValidationError
from app.models.schemas import GraphSpec, PfcKind, SimulationSpec, SystemSpec
from app.services import codec, netsim
from app.services.lti import PoleChain, PoleResidueSystem
from app.services.signed_graph import directed_cycle, example4_graph


def _write(tmp_path, payload, name="input.json"):
    path = tmp_path / name
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload), encoding="utf-8")
    return path


# --- parsing ---

def test_parse_error_names_the_field(tmp_path):
    path = _write(tmp_path, {"n": 2, "edges": [{"from": 0, "to": 1, "weight": "heavy"}]})
    with pytest.raises(ValidationError, match="edges.0.weight"):
        codec.parse_file(path, GraphSpec)


def test_malformed_json_is_a_validation_error(tmp_path):
    with pytest.raises(ValidationError) as info:
        codec.parse_file(_write(tmp_path, "{not json"), GraphSpec)
    assert info.value.exit_code == 2


def test_missing_file(tmp_path):
    with pytest.raises(ValidationError, match="cannot read"):
        codec.parse_file(tmp_path / "absent.json", GraphSpec)


def test_network_without_graph_is_rejected(tmp_path):
    path = _write(tmp_path, {"agents": [{"template": "integrator"}]})
    with pytest.raises(ValidationError, match="graph"):
        codec.parse_file(path, SimulationSpec)


def test_system_spec_needs_one_form(tmp_path):
    with pytest.raises(ValidationError, match="dims"):
        codec.parse_file(_write(tmp_path, {"chains": []}), SystemSpec)


# --- conversions ---

def test_rational_input_is_decomposed():
    sys = codec.system_from_spec(SystemSpec.model_validate({"rational": {"num": [1], "den": [0.25, 1, 1]}}))
    assert len(sys.chains) == 1
    assert sys.chains[0].length == 2
    assert sys.chains[0].pole == pytest.approx(0.5)


def test_complex_residues_survive_the_wire_format():
    sys = PoleResidueSystem((1, 1), (PoleChain(1 + 2j, ([[0.5 - 1j]],)), PoleChain(1 - 2j, ([[0.5 + 1j]],))))
    back = codec.system_from_spec(SystemSpec.model_validate_json(codec.dumps(codec.system_to_spec(sys))))
    assert back.chain_at(1 + 2j).residues[0][0, 0] == 0.5 - 1j


def test_graph_dump_uses_edge_aliases():
    text = codec.dumps(codec.graph_to_spec(example4_graph()))
    assert '"from"' in text and '"to"' in text
    again = codec.graph_from_spec(GraphSpec.model_validate_json(text))
    np.testing.assert_array_equal(again.adjacency, example4_graph().adjacency)


def test_dumps_is_deterministic():
    from app.services.signed_graph import analyze
    first = codec.dumps(codec.analysis_to_out(analyze(example4_graph())))
    second = codec.dumps(codec.analysis_to_out(analyze(example4_graph())))
    assert first == second


def test_json_floats_parse_back_to_the_same_double():
    awkward = [0.1 + 0.2, 1.0 / 3.0, 2.0 ** -40, 123456789.12345679, -5e-324]
    plant = PoleResidueSystem((1, 1), tuple(PoleChain(1.0 + i, ([[v]],)) for i, v in enumerate(awkward)))
    report = json.loads(codec.dumps(codec.system_to_spec(plant)))
    written = [chain["residues"][0][0][0][0] for chain in report["chains"]]
    assert [float(v).hex() for v in written] == [v.hex() for v in awkward]


def test_pfc_option_forms():
    assert codec.pfc_option("none").kind == PfcKind.NONE
    assert codec.pfc_option("static:0.5").nu == 0.5
    derivative = codec.pfc_option("derivative:1,0.1")
    assert (derivative.d_c, derivative.tau) == (1.0, 0.1)
    assert codec.pfc_option("designed").slack is None
    assert codec.pfc_option("designed:0.2").slack == 0.2
    with pytest.raises(ValidationError):
        codec.pfc_option("static:heavy")
    with pytest.raises(ValidationError):
        codec.pfc_option("derivative:1")


def test_pfc_option_reads_a_compensator_file(tmp_path):
    path = _write(tmp_path, {"dims": [1, 1], "chains": [{"pole_re": 1.0, "residues": [[[2.0]]]}]})
    spec = codec.pfc_option(str(path))
    assert spec.kind == PfcKind.DYNAMIC
    assert codec.pfc_from_spec(spec, None, 1).chains[0].residues[0][0, 0] == 2.0


def test_designed_pfc_needs_a_transfer_matrix():
    spec = SimulationSpec.model_validate({
        "agents": [{"template": "integrator"}] * 3,
        "graph": codec.graph_to_spec(directed_cycle(3)).model_dump(by_alias=True),
        "pfc": {"kind": "designed"},
    })
    with pytest.raises(ValidationError, match="designed"):
        codec.config_from_spec(spec)


def test_designed_pfc_for_modified_pi_agents():
    spec = SimulationSpec.model_validate({
        "agents": [{"template": "modified_pi", "q": q} for q in (0.25, 0.5, 2.0)],
        "graph": codec.graph_to_spec(directed_cycle(3)).model_dump(by_alias=True),
        "pfc": {"kind": "designed"},
    })
    cfg = codec.config_from_spec(spec, sigma=2.0)
    assert isinstance(cfg, netsim.NetworkConfig)
    assert cfg.sigma == 2.0
    assert all(p is not None for p in cfg.pfcs)


def test_feedback_spec_builds_a_pair():
    spec = SimulationSpec.model_validate({
        "interconnection": "feedback",
        "agents": [{"kind": "integrator_static_output", "h": [0, 0, 0, 1], "x0": [1.0]}] * 2,
        "pfc": {"kind": "static", "nu": 0.5},
    })
    cfg = codec.config_from_spec(spec)
    assert isinstance(cfg, netsim.FeedbackConfig)
    assert cfg.pfc is not None
    assert cfg.forward.storage(np.array([1.0])) == pytest.approx(0.25)


def test_trajectory_frame_columns():
    agents = tuple(netsim.GradientFlowAgent(netsim.QuadraticObjective(q, b)) for q, b in ((1, 0), (2, 1), (4, 2)))
    log, metrics = netsim.simulate(netsim.NetworkConfig(agents, directed_cycle(3), step=1e-2, horizon=1.0))
    frame = codec.trajectory_frame(log, metrics)
    assert list(frame.columns) == ["t", "y1_1", "y1_2", "y1_3", "yc_1", "yc_2", "yc_3", "sync_error"]
    assert len(frame) == log.times.size
    assert frame["t"].iloc[-1] == pytest.approx(1.0)


def test_run_metrics_carry_the_index_check():
    agents = tuple(netsim.integrator_agent(x) for x in (1.0, -2.0, 3.0, 0.5))
    pfc = PoleResidueSystem((1, 1), (), [[0.2]])
    log, metrics = netsim.simulate(netsim.NetworkConfig(agents, example4_graph(), pfcs=pfc, step=1e-2, horizon=1.0))
    report = json.loads(codec.dumps(codec.metrics_to_out(log, metrics)))
    check = report["index_check"]
    assert check["ofp_radius"] == pytest.approx(0.5, abs=1e-6)
    assert check["pfc_index"] == pytest.approx(0.2)
    assert check["passed"] is False
    assert "coupling radius" in check["notice"]


def test_residue_entries_as_pairs_or_reals():
    spec = SystemSpec.model_validate({"dims": [1, 2], "chains": [
        {"pole_re": 1.0, "pole_im": 2.0, "residues": [[[[0.5, -1.0], 3.0]]]},
        {"pole_re": 1.0, "pole_im": -2.0, "residues": [[[[0.5, 1.0], 3.0]]]},
    ]})
    sys = codec.system_from_spec(spec)
    np.testing.assert_array_equal(sys.chain_at(1 + 2j).residues[0], [[0.5 - 1j, 3.0]])


def test_ragged_residue_rows_are_rejected():
    spec = SystemSpec.model_validate({"dims": [2, 2], "chains": [{"pole_re": 1.0, "residues": [[[1.0, 0.0], [1.0]]]}]})
    with pytest.raises(ValidationError, match="residues"):
        codec.system_from_spec(spec)

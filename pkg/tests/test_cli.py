import json

import numpy as np
import pytest

from quantum_feedback.cli import main
from quantum_feedback.lie import ControlSystem
from quantum_feedback.operator_algebra import matrix_to_json, pauli
from quantum_feedback.protocols import (
    Measure,
    Protocol,
    builtin_quantum_controller,
    builtin_semiclassical_flip,
    protocol_to_json,
)
from quantum_feedback.states import make_pure

SX, SZ = pauli("x").matrix, pauli("z").matrix


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def verdicts(text):
    return {v["kind"]: v for v in json.loads(text)["verdicts"]}


@pytest.fixture
def spin_system(tmp_path):
    sys = ControlSystem(
        drift=np.pi * SZ, controls=[SX], measurements=[SZ], couplings=[(SZ, SZ)]
    )
    return write(tmp_path / "spin.json", sys.to_json())


@pytest.fixture
def flip_files(tmp_path):
    proto = write(tmp_path / "flip.json", protocol_to_json(builtin_semiclassical_flip()))
    state = write(tmp_path / "state.json", make_pure([2], [0.6, 0.8]).to_json())
    down = write(tmp_path / "down.json", make_pure([2], [0, 1]).to_json())
    return proto, state, down


def test_check_spin_system(spin_system, capsys):
    code, out, err = run(["check", spin_system], capsys)
    assert code == 0
    v = verdicts(out)
    assert len(v) == 5 and all(x["answer"] for x in v.values())
    assert v["open_loop_semiclassical"]["dim_found"] == 3
    assert "controllable_quantum" in err


def test_check_drift_only(tmp_path, capsys):
    path = write(tmp_path / "d.json", ControlSystem(drift=SZ).to_json())
    code, out, _ = run(["check", path], capsys)
    assert code == 0
    v = verdicts(out)
    assert not any(x["answer"] for x in v.values())
    assert "no nontrivial measurement" in v["closed_loop_semiclassical"]["reasons"]
    assert "no nontrivial coupling" in v["controllable_quantum"]["reasons"]


def test_check_commuting_generators(tmp_path, capsys):
    i2 = np.eye(2)
    sys = ControlSystem(
        drift=np.kron(SZ, i2), controls=[np.kron(i2, SZ), np.kron(SZ, SZ)], measurements=[np.kron(SZ, i2)]
    )
    code, out, _ = run(["check", write(tmp_path / "c.json", sys.to_json())], capsys)
    v = verdicts(out)
    assert code == 0 and not v["open_loop_semiclassical"]["answer"]
    assert v["open_loop_semiclassical"]["dim_found"] == 3
    assert v["open_loop_semiclassical"]["dim_required"] == 15


def test_check_input_errors(tmp_path, capsys):
    assert main(["check", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{\"dim\": 2,")
    assert main(["check", str(bad)]) == 2
    assert "line" in capsys.readouterr().err
    obj = ControlSystem(drift=SZ).to_json()
    obj["dim"] = 3
    assert main(["check", write(tmp_path / "dim.json", obj)]) == 2
    del obj["drift"]
    assert main(["check", write(tmp_path / "nodrift.json", obj)]) == 2
    assert main(["nonsense"]) == 2


def test_check_closure_not_converged(spin_system, capsys):
    assert main(["check", spin_system, "--max-generations", "0"]) == 3


def test_tolerance_overrides(spin_system, capsys):
    code, out, _ = run(["check", spin_system, "--tol.closure", "1e-6"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["tolerances"]["closure"] == 1e-6
    assert all(v["tol_used"] == 1e-6 for v in report["verdicts"])
    assert main(["check", spin_system, "--tol.bogus=1"]) == 2
    assert main(["check", spin_system, "--tol.closure", "abc"]) == 2


def test_simulate_enumerate(flip_files, capsys):
    proto, state, down = flip_files
    code, out, _ = run(["simulate", proto, state, "--target", down], capsys)
    assert code == 0
    report = json.loads(out)
    probs = [t["probability"] for t in report["trajectories"]]
    assert probs == pytest.approx([0.36, 0.64], abs=1e-12)
    assert all(t["fidelity_to_target"] >= 1 - 1e-9 for t in report["trajectories"])
    for key in ("schema_version", "seed", "generator", "tolerances", "tool_version"):
        assert key in report


def test_simulate_sample_measurement_free(tmp_path, capsys):
    proto = write(tmp_path / "qc.json", protocol_to_json(builtin_quantum_controller()))
    state = write(tmp_path / "s.json", make_pure([2, 2], [0, 0.6, 0, 0.8]).to_json())
    finals = []
    for seed in (0, 1, 99):
        code, out, _ = run(["simulate", proto, state, "--mode", "sample", "--n", "4", "--seed", str(seed)], capsys)
        assert code == 0
        trajs = json.loads(out)["trajectories"]
        finals += [json.dumps(t["final_state"], sort_keys=True) for t in trajs]
    assert len(set(finals)) == 1


def test_simulate_byte_identical(flip_files, tmp_path, capsys):
    proto, state, _ = flip_files
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        assert main(["simulate", proto, state, "--mode", "sample", "--n", "50", "--seed", "7", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_simulate_errors(flip_files, tmp_path, capsys):
    proto, _, _ = flip_files
    two = write(tmp_path / "two.json", make_pure([2, 2], [1, 0, 0, 0]).to_json())
    assert main(["simulate", proto, two]) == 2
    assert main(["simulate", proto, flip_files[1], "--mode", "sample", "--n", "0"]) == 2
    steps = [Measure(pauli("x" if k % 2 else "z"), (0,), f"m{k}") for k in range(4)]
    deep = write(tmp_path / "deep.json", protocol_to_json(Protocol([2], steps)))
    assert main(["simulate", deep, flip_files[1], "--branch-cap", "4"]) == 4


def test_examples_default(capsys):
    code, out, err = run(["examples"], capsys)
    assert code == 0
    assert "3/3 PASS" in err
    assert all(e["passed"] for e in json.loads(out)["examples"])


def test_examples_basis_input(capsys):
    code, _, err = run(["examples", "--alpha", "1", "--beta", "0"], capsys)
    assert code == 0 and "3/3 PASS" in err


@pytest.mark.parametrize("seed", range(20))
def test_examples_random_amplitudes(seed, capsys):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
    code, _, err = run(
        ["examples", f"--alpha={a.real},{a.imag}", f"--beta={b.real},{b.imag}", "--seed", str(seed)], capsys
    )
    assert code == 0 and "3/3 PASS" in err


def test_examples_bad_amplitude(capsys):
    assert main(["examples", "--alpha", "x"]) == 2


def test_pulse_default(capsys):
    code, out, _ = run(["pulse"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["validation"]["fidelity"] >= 0.99
    assert len(report["sweep"]) == 5


def test_pulse_input_errors(capsys):
    assert main(["pulse", "--amplitude", "0", "--no-sweep"]) == 2
    assert main(["pulse", "--omega", "1", "--omega-prime", "1", "--no-sweep"]) == 2

"""Feedback protocols: a small step language and its executors.

Semiclassical feedback is written as ``Measure`` followed by ``Branch`` on the
recorded outcome. Coherent feedback uses only unitary steps, typically
``ConditionalFlip``, the gate-level model of a frequency-selective pulse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import BranchCapExceeded, DimensionError, ProtocolError, ValidationError
from .operator_algebra import (
    HermitianOperator,
    TensorSpace,
    UnitaryOperator,
    embed,
    expm_hermitian,
    matrix_from_json,
    matrix_to_json,
    pauli,
)
from .states import (
    RNG_NAME,
    QuantumState,
    _evolve,
    apply_unitary,
    choose_outcome,
    derived_rng,
    make_pure,
    measurement_distribution,
    reduced_state,
)

BRANCH_CAP = 4096
UP, DOWN = 0, 1


@dataclass(frozen=True)
class Unitary:
    u: UnitaryOperator
    targets: Tuple[int, ...]


@dataclass(frozen=True)
class ConditionalFlip:
    control: int
    control_value: int
    target: int

    def __post_init__(self):
        if self.control == self.target:
            raise ProtocolError("conditional flip needs control != target")


@dataclass(frozen=True)
class Measure:
    observable: HermitianOperator
    targets: Tuple[int, ...]
    record_key: str


@dataclass(frozen=True)
class Branch:
    """Run ``cases[k]`` when the outcome recorded under ``record_key`` had index ``k``.

    Outcomes without a case fall through with no action.
    """

    record_key: str
    cases: Mapping[int, Tuple["Step", ...]]


@dataclass(frozen=True)
class Evolve:
    """Free evolution under ``hamiltonian`` (on ``targets``, default: the whole space)."""

    hamiltonian: HermitianOperator
    duration: float
    targets: Optional[Tuple[int, ...]] = None


Step = Union[Unitary, ConditionalFlip, Measure, Branch, Evolve]


def _check_steps(steps, space: TensorSpace, available: frozenset, path: str):
    for n, step in enumerate(steps):
        where = f"{path}[{n}]"
        if isinstance(step, Unitary):
            space.check_indices(step.targets)
            if step.u.dim != space.sub_dim(step.targets):
                raise DimensionError(f"{where}: unitary dimension does not match targets")
        elif isinstance(step, ConditionalFlip):
            space.check_indices((step.control, step.target))
            if not 0 <= step.control_value < space.factor_dims[step.control]:
                raise ProtocolError(f"{where}: control value out of range")
        elif isinstance(step, Measure):
            space.check_indices(step.targets)
            if step.observable.dim != space.sub_dim(step.targets):
                raise DimensionError(f"{where}: observable dimension does not match targets")
            available = available | {step.record_key}
        elif isinstance(step, Branch):
            if step.record_key not in available:
                raise ProtocolError(
                    f"{where}: branch on '{step.record_key}' without a preceding measurement"
                )
            for k, sub in step.cases.items():
                _check_steps(sub, space, available, f"{where}.cases[{k}]")
        elif isinstance(step, Evolve):
            if step.targets is not None:
                space.check_indices(step.targets)
                d = space.sub_dim(step.targets)
            else:
                d = space.total_dim
            if step.hamiltonian.dim != d:
                raise DimensionError(f"{where}: Hamiltonian dimension does not match targets")
        else:
            raise ProtocolError(f"{where}: unknown step type {type(step).__name__}")


@dataclass(frozen=True)
class Protocol:
    space: TensorSpace
    steps: Tuple[Step, ...]
    label: str = ""

    def __post_init__(self):
        if not isinstance(self.space, TensorSpace):
            object.__setattr__(self, "space", TensorSpace(tuple(self.space)))
        object.__setattr__(self, "steps", tuple(self.steps))
        _check_steps(self.steps, self.space, frozenset(), "steps")

    @property
    def has_measurements(self) -> bool:
        def walk(steps):
            for s in steps:
                if isinstance(s, Measure):
                    return True
                if isinstance(s, Branch) and any(walk(c) for c in s.cases.values()):
                    return True
            return False

        return walk(self.steps)


@dataclass(frozen=True)
class TrajectoryResult:
    final_state: QuantumState
    records: Dict[str, Tuple[float, int]]
    probability: float
    seed_info: str = "enumerate"


def conditional_flip_unitary(space: TensorSpace, control: int, control_value: int, target: int) -> UnitaryOperator:
    """Full-space permutation flipping ``target`` iff ``control`` is in basis state ``control_value``."""
    if control == target:
        raise ProtocolError("conditional flip needs control != target")
    space.check_indices((control, target))
    if space.factor_dims[control] != 2 or space.factor_dims[target] != 2:
        raise DimensionError("conditional flips are defined for qubit factors only")
    return UnitaryOperator(embed(_cflip_local(control_value), space, (control, target)))


def _cflip_local(control_value: int) -> np.ndarray:
    p = np.zeros((2, 2))
    p[control_value, control_value] = 1
    x = np.array([[0, 1], [1, 0]])
    return np.kron(p, x) + np.kron(np.eye(2) - p, np.eye(2))


def step_unitary(step: Step, space: TensorSpace) -> Optional[Tuple[np.ndarray, Tuple[int, ...]]]:
    """Local unitary and the factors it acts on, or ``None`` for non-unitary steps."""
    if isinstance(step, Unitary):
        return np.asarray(step.u.matrix), tuple(step.targets)
    if isinstance(step, ConditionalFlip):
        if space.factor_dims[step.control] != 2 or space.factor_dims[step.target] != 2:
            raise DimensionError("conditional flips are defined for qubit factors only")
        return _cflip_local(step.control_value), (step.control, step.target)
    if isinstance(step, Evolve):
        targets = step.targets if step.targets is not None else tuple(range(space.n_factors))
        return np.asarray(expm_hermitian(step.hamiltonian, step.duration).matrix), tuple(targets)
    return None


def step_support(step: Step, space: TensorSpace) -> frozenset:
    """Factors a step can act on (for branches, the union over all cases)."""
    if isinstance(step, Unitary):
        return frozenset(step.targets)
    if isinstance(step, ConditionalFlip):
        return frozenset((step.control, step.target))
    if isinstance(step, Measure):
        return frozenset(step.targets)
    if isinstance(step, Evolve):
        return frozenset(step.targets if step.targets is not None else range(space.n_factors))
    if isinstance(step, Branch):
        out = frozenset()
        for sub in step.cases.values():
            for s in sub:
                out |= step_support(s, space)
        return out
    raise ProtocolError(f"unknown step type {type(step).__name__}")


def _apply_unitary_step(state: QuantumState, step: Step) -> QuantumState:
    u, targets = step_unitary(step, state.space)
    return _evolve(state, embed(u, state.space, targets))


def _expand(branches, steps, cap):
    """Depth-first enumeration; ``branches`` is a list of (state, records, prob)."""
    for step in steps:
        nxt = []
        for state, records, prob in branches:
            if isinstance(step, Measure):
                for o in measurement_distribution(state, step.observable, step.targets):
                    rec = dict(records)
                    rec[step.record_key] = (o.eigenvalue, o.index)
                    nxt.append((o.post_state, rec, prob * o.probability))
            elif isinstance(step, Branch):
                if step.record_key not in records:
                    raise ProtocolError(f"no record '{step.record_key}' on this path")
                case = step.cases.get(records[step.record_key][1])
                if case:
                    nxt.extend(_expand([(state, records, prob)], case, cap))
                else:
                    nxt.append((state, records, prob))
            else:
                nxt.append((_apply_unitary_step(state, step), records, prob))
            if len(nxt) > cap:
                raise BranchCapExceeded(f"more than {cap} trajectories")
        branches = nxt
    return branches


def _check_space(initial: QuantumState, p: Protocol):
    if initial.space.factor_dims != p.space.factor_dims:
        raise DimensionError(
            f"state space {initial.space.factor_dims} does not match protocol space {p.space.factor_dims}"
        )


def run_enumerate(initial: QuantumState, p: Protocol, branch_cap: int = BRANCH_CAP) -> List[TrajectoryResult]:
    _check_space(initial, p)
    out = _expand([(initial, {}, 1.0)], p.steps, branch_cap)
    return [TrajectoryResult(s, r, prob) for s, r, prob in out]


def _sample_path(state, steps, records, prob, rng, history, cache):
    # between measurements evolution is deterministic, so the state reached at a
    # step is fixed by the outcomes drawn so far; ``cache`` memoizes that work
    for step in steps:
        key = (id(step), history)
        if isinstance(step, Measure):
            if key not in cache:
                cache[key] = measurement_distribution(state, step.observable, step.targets)
            o = choose_outcome(cache[key], rng)
            records[step.record_key] = (o.eigenvalue, o.index)
            state, prob = o.post_state, prob * o.probability
            history = history + (o.index,)
        elif isinstance(step, Branch):
            if step.record_key not in records:
                raise ProtocolError(f"no record '{step.record_key}' on this path")
            case = step.cases.get(records[step.record_key][1])
            if case:
                state, prob, history = _sample_path(state, case, records, prob, rng, history, cache)
        else:
            if key not in cache:
                cache[key] = _apply_unitary_step(state, step)
            state = cache[key]
    return state, prob, history


def run_sampled(initial: QuantumState, p: Protocol, seed: int, n_trajectories: int) -> List[TrajectoryResult]:
    """Monte Carlo execution; trajectory ``i`` draws from the stream derived from ``(seed, i)``."""
    _check_space(initial, p)
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    results = []
    cache: Dict = {}
    for i in range(n_trajectories):
        records: Dict[str, Tuple[float, int]] = {}
        state, prob, _ = _sample_path(initial, p.steps, records, 1.0, derived_rng(seed, i), (), cache)
        results.append(TrajectoryResult(state, records, prob, f"{RNG_NAME} seed={seed} stream={i}"))
    return results


def run_steps(initial: QuantumState, p: Protocol) -> List[QuantumState]:
    """States after every step of a measurement-free protocol (initial state first)."""
    _check_space(initial, p)
    if p.has_measurements:
        raise ProtocolError("run_steps needs a measurement-free protocol")
    states = [initial]
    for step in p.steps:
        states.append(_apply_unitary_step(states[-1], step))
    return states


def pi_flip() -> UnitaryOperator:
    """exp(-i (pi/2) sigma_x) = -i sigma_x, the physical spin-flip pulse."""
    return expm_hermitian(pauli("x"), np.pi / 2)


def builtin_semiclassical_flip() -> Protocol:
    """Measure sigma_z; if the spin is up, flip it; if down, do nothing."""
    return Protocol(
        TensorSpace((2,)),
        (
            Measure(pauli("z"), (0,), "m"),
            Branch("m", {UP: (Unitary(pi_flip(), (0,)),)}),
        ),
        "semiclassical spin flip",
    )


def builtin_quantum_controller() -> Protocol:
    """Two selective pulses on (system, controller).

    The first copies the system's z-basis value onto the controller (controller
    flips iff system up); the second flips the system iff the controller is up.
    With the controller starting down, the system ends down and the controller
    holds the system's original state.
    """
    return Protocol(
        TensorSpace((2, 2)),
        (ConditionalFlip(0, UP, 1), ConditionalFlip(1, UP, 0)),
        "coherent quantum controller",
    )


def builtin_entanglement_transfer() -> Protocol:
    """Coherent controller on factors (0, 1) of three spins; factor 2 is never touched.

    The controller starts entangled with factor 2 rather than in a known down
    state, so a closing flip of the controller (conditioned on the system being
    up) is appended. It is a no-op in the two-spin setting, and with it the
    three pulses swap system and controller, moving the entanglement onto the
    system.
    """
    steps = builtin_quantum_controller().steps + (ConditionalFlip(0, UP, 1),)
    return Protocol(TensorSpace((2, 2, 2)), steps, "entanglement transfer")


@dataclass(frozen=True)
class StateTransferReport:
    transferred: bool
    fidelity: float
    controller_isometry: np.ndarray = field(repr=False)
    reference_dim: int = 0

    def __bool__(self) -> bool:
        return self.transferred

    def to_json(self) -> dict:
        return {
            "transferred": self.transferred,
            "fidelity": self.fidelity,
            "controller_isometry": matrix_to_json(self.controller_isometry),
        }


def verify_state_transfer(
    p: Protocol,
    system_factor: int,
    controller_factor: int,
    initial_basis: Optional[Sequence[int]] = None,
    tol: float = 1e-9,
) -> StateTransferReport:
    """Check that ``p`` moves the system's state, with its entanglement, onto the controller.

    A reference factor is prepended and maximally entangled with the system
    factor; all other factors start in the basis states ``initial_basis``
    (default: spin down, index 1). The protocol passes when the final
    reference/controller state has fidelity >= 1 - tol with
    ``sum_i |i>_ref (V|i>)_ctrl / sqrt(d)`` for the best isometry ``V``,
    which is reported.
    """
    if p.has_measurements:
        raise ProtocolError("state transfer is only defined for coherent (measurement-free) protocols")
    space = p.space
    space.check_indices((system_factor, controller_factor))
    if system_factor == controller_factor:
        raise ProtocolError("system and controller must be different factors")
    d = space.factor_dims[system_factor]
    d_c = space.factor_dims[controller_factor]
    if initial_basis is None:
        initial_basis = [min(1, dim - 1) for dim in space.factor_dims]

    big = TensorSpace((d,) + space.factor_dims)
    psi = np.zeros(big.total_dim, dtype=complex)
    for i in range(d):
        idx = [i] + list(initial_basis)
        idx[1 + system_factor] = i
        psi[np.ravel_multi_index(tuple(idx), big.factor_dims)] = 1 / np.sqrt(d)
    state = make_pure(big, psi)
    for step in p.steps:
        u, targets = step_unitary(step, space)
        state = apply_unitary(state, u, tuple(t + 1 for t in targets))

    rho = reduced_state(state, (0, controller_factor + 1)).rho
    if d_c < d:
        return StateTransferReport(False, 0.0, np.zeros((d_c, d), dtype=complex), d)

    w, v = np.linalg.eigh(rho)
    top = v[:, -1].reshape(d, d_c)
    a, _, bh = np.linalg.svd(top, full_matrices=False)
    k = a @ bh  # coefficient matrix of the closest maximally entangled state, up to 1/sqrt(d)
    phi = (k / np.sqrt(d)).ravel()
    f = float(np.clip(np.vdot(phi, rho @ phi).real, 0.0, 1.0))
    isometry = k.T  # column i is V|i>
    return StateTransferReport(f >= 1 - tol, f, isometry, d)


def step_to_json(step: Step) -> dict:
    if isinstance(step, Unitary):
        return {"type": "unitary", "matrix": matrix_to_json(step.u), "targets": list(step.targets)}
    if isinstance(step, ConditionalFlip):
        return {
            "type": "cflip",
            "control": step.control,
            "control_value": step.control_value,
            "target": step.target,
        }
    if isinstance(step, Measure):
        return {
            "type": "measure",
            "observable": matrix_to_json(step.observable),
            "targets": list(step.targets),
            "record_key": step.record_key,
        }
    if isinstance(step, Branch):
        return {
            "type": "branch",
            "record_key": step.record_key,
            "cases": {str(k): [step_to_json(s) for s in v] for k, v in sorted(step.cases.items())},
        }
    if isinstance(step, Evolve):
        out = {"type": "evolve", "hamiltonian": matrix_to_json(step.hamiltonian), "duration": step.duration}
        if step.targets is not None:
            out["targets"] = list(step.targets)
        return out
    raise ProtocolError(f"unknown step type {type(step).__name__}")


def step_from_json(obj: dict) -> Step:
    try:
        kind = obj["type"]
        if kind == "unitary":
            return Unitary(UnitaryOperator(matrix_from_json(obj["matrix"]), tol=1e-9), tuple(obj["targets"]))
        if kind == "cflip":
            return ConditionalFlip(int(obj["control"]), int(obj.get("control_value", UP)), int(obj["target"]))
        if kind == "measure":
            return Measure(
                HermitianOperator(matrix_from_json(obj["observable"]), label=obj.get("label")),
                tuple(obj["targets"]),
                str(obj["record_key"]),
            )
        if kind == "branch":
            cases = {int(k): tuple(step_from_json(s) for s in v) for k, v in obj["cases"].items()}
            return Branch(str(obj["record_key"]), cases)
        if kind == "evolve":
            targets = obj.get("targets")
            return Evolve(
                HermitianOperator(matrix_from_json(obj["hamiltonian"])),
                float(obj["duration"]),
                tuple(targets) if targets is not None else None,
            )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed step {obj!r}: missing or invalid {exc}") from None
    raise ValidationError(f"unknown step type {obj.get('type')!r}")


def protocol_to_json(p: Protocol) -> dict:
    return {
        "dims": list(p.space.factor_dims),
        "label": p.label,
        "steps": [step_to_json(s) for s in p.steps],
    }


def protocol_from_json(obj: dict) -> Protocol:
    if not isinstance(obj, dict) or "dims" not in obj or "steps" not in obj:
        raise ValidationError("protocol object needs 'dims' and 'steps'")
    return Protocol(
        TensorSpace(tuple(obj["dims"])),
        tuple(step_from_json(s) for s in obj["steps"]),
        str(obj.get("label", "")),
    )


__all__ = [
    "Unitary",
    "ConditionalFlip",
    "Measure",
    "Branch",
    "Evolve",
    "Protocol",
    "TrajectoryResult",
    "StateTransferReport",
    "conditional_flip_unitary",
    "step_unitary",
    "step_support",
    "run_enumerate",
    "run_sampled",
    "run_steps",
    "pi_flip",
    "builtin_semiclassical_flip",
    "builtin_quantum_controller",
    "builtin_entanglement_transfer",
    "verify_state_transfer",
    "protocol_to_json",
    "protocol_from_json",
]

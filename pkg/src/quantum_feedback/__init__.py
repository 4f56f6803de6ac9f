"""Controllability verdicts and exact simulation of semiclassical and coherent quantum feedback."""

__version__ = "0.1.0"

from .operator_algebra import (
    HermitianOperator,
    TensorSpace,
    UnitaryOperator,
    commutator,
    embed,
    expm_hermitian,
    hs_inner,
    kron,
    partial_trace,
    pauli,
)
from .lie import (
    ControlSystem,
    LieClosureReport,
    Verdict,
    closed_loop_controllable,
    lie_closure,
    observable_quantum,
    observable_semiclassical,
    open_loop_controllable,
    quantum_controllable,
)
from .states import (
    MeasurementOutcome,
    QuantumState,
    apply_unitary,
    entanglement_entropy,
    fidelity,
    make_pure,
    measurement_distribution,
    purity,
    sample_measurement,
)
from .protocols import (
    Protocol,
    builtin_entanglement_transfer,
    builtin_quantum_controller,
    builtin_semiclassical_flip,
    conditional_flip_unitary,
    run_enumerate,
    run_sampled,
    verify_state_transfer,
)

"""Commutator closure of operator sets and the controllability verdicts built on it.

The closure is tracked as an orthonormal (Hilbert-Schmidt) basis of traceless
Hermitian matrices. New elements are ``i[a, b]`` for ``a`` in the current basis
and ``b`` in the most recent generation, added breadth-first in a fixed order
so that a given input always produces the same report.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ClosureNotConverged, DimensionError, ValidationError
from .operator_algebra import (
    HermitianOperator,
    as_matrix,
    is_scalar_multiple_of_identity,
    matrix_from_json,
    matrix_to_json,
    traceless_part,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
NONTRIVIAL_TOL = 1e-9

VERDICT_KINDS = (
    "open_loop_semiclassical",
    "closed_loop_semiclassical",
    "observable_semiclassical",
    "controllable_quantum",
    "observable_quantum",
)


@dataclass(frozen=True)
class LieClosureReport:
    dim_found: int
    basis: Tuple[HermitianOperator, ...]
    full: bool
    generations: int
    tol_used: float
    n: int

    @property
    def target_dim(self) -> int:
        return self.n * self.n - 1


@dataclass(frozen=True)
class ControlSystem:
    """Drift Hamiltonian plus the operator sets a controller can use.

    ``couplings`` holds ``(system_op, controller_op)`` pairs; the controller
    side may have any dimension.
    """

    drift: HermitianOperator
    controls: Tuple[HermitianOperator, ...] = ()
    measurements: Tuple[HermitianOperator, ...] = ()
    couplings: Tuple[Tuple[HermitianOperator, HermitianOperator], ...] = ()

    def __post_init__(self):
        def herm(x):
            return x if isinstance(x, HermitianOperator) else HermitianOperator(x)

        object.__setattr__(self, "drift", herm(self.drift))
        object.__setattr__(self, "controls", tuple(herm(c) for c in self.controls))
        object.__setattr__(self, "measurements", tuple(herm(m) for m in self.measurements))
        object.__setattr__(
            self, "couplings", tuple((herm(s), herm(c)) for s, c in self.couplings)
        )
        n = self.dim
        for name, ops in (
            ("controls", self.controls),
            ("measurements", self.measurements),
            ("couplings", [s for s, _ in self.couplings]),
        ):
            for k, op in enumerate(ops):
                if op.dim != n:
                    raise DimensionError(f"{name}[{k}] has dimension {op.dim}, system has {n}")

    @property
    def dim(self) -> int:
        return self.drift.dim

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "drift": matrix_to_json(self.drift),
            "controls": [matrix_to_json(c) for c in self.controls],
            "measurements": [matrix_to_json(m) for m in self.measurements],
            "couplings": [
                {"system": matrix_to_json(s), "controller": matrix_to_json(c)}
                for s, c in self.couplings
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ControlSystem":
        if not isinstance(obj, dict):
            raise ValidationError("control system must be a JSON object")
        for key in ("dim", "drift"):
            if key not in obj:
                raise ValidationError(f"control system missing field '{key}'")
        try:
            couplings = [
                (matrix_from_json(c["system"]), matrix_from_json(c["controller"]))
                for c in obj.get("couplings", [])
            ]
        except (KeyError, TypeError):
            raise ValidationError("each coupling needs 'system' and 'controller' matrices") from None
        sys = cls(
            drift=matrix_from_json(obj["drift"]),
            controls=[matrix_from_json(m) for m in obj.get("controls", [])],
            measurements=[matrix_from_json(m) for m in obj.get("measurements", [])],
            couplings=couplings,
        )
        if sys.dim != int(obj["dim"]):
            raise ValidationError(f"field 'dim' = {obj['dim']} but drift is {sys.dim}x{sys.dim}")
        return sys


@dataclass(frozen=True)
class Verdict:
    kind: str
    answer: bool
    closure: LieClosureReport
    reasons: Tuple[str, ...] = ()
    notes: Tuple[str, ...] = field(default=(), compare=False)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "answer": self.answer,
            "dim_found": self.closure.dim_found,
            "dim_required": self.closure.target_dim,
            "generations": self.closure.generations,
            "reasons": list(self.reasons),
            "notes": list(self.notes),
            "tol_used": self.closure.tol_used,
        }


class _Basis:
    """Orthonormal set of flattened traceless Hermitian matrices."""

    def __init__(self, n: int, tol: float):
        self.n = n
        self.tol = tol
        self.vecs: List[np.ndarray] = []

    def try_add(self, m: np.ndarray, scale: float) -> Optional[np.ndarray]:
        """Add ``m`` if its residual exceeds ``tol * max(|m|, scale)``.

        ``scale`` is the size ``m`` would have without cancellation (the raw
        generator norm, or 1 for a commutator of unit basis elements), so
        rounding noise from commuting pairs is never mistaken for a new direction.
        """
        v = traceless_part(m).ravel()
        norm0 = max(np.linalg.norm(v), scale)
        if norm0 == 0.0:
            return None
        # two passes of modified Gram-Schmidt keep the basis orthonormal to ~eps
        for _ in range(2):
            for b in self.vecs:
                v = v - np.vdot(b, v) * b
        res = np.linalg.norm(v)
        if res <= self.tol * norm0:
            return None
        v = v / res
        # re-Hermitize: projections on Hermitian elements are real up to rounding
        mat = v.reshape(self.n, self.n)
        mat = (mat + mat.conj().T) / 2
        v = mat.ravel() / np.linalg.norm(mat)
        self.vecs.append(v)
        return mat / np.linalg.norm(mat)

    def __len__(self):
        return len(self.vecs)


def lie_closure(
    generators: Sequence,
    tol: float = DEFAULT_TOL,
    max_generations: Optional[int] = None,
) -> LieClosureReport:
    """Span of the traceless parts of ``generators`` closed under ``i[., .]``.

    Raises ``ClosureNotConverged`` if the last allowed generation still added
    new directions and the algebra is not yet full.
    """
    mats = [as_matrix(g) for g in generators]
    if not mats:
        raise ValueError("lie_closure needs at least one generator")
    n = mats[0].shape[0]
    for k, m in enumerate(mats):
        if m.shape != (n, n):
            raise DimensionError(f"generator {k} has shape {m.shape}, expected {(n, n)}")
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValidationError(f"generator {k} is not Hermitian")
    if max_generations is None:
        max_generations = n * n
    target = n * n - 1

    basis = _Basis(n, tol)
    mats_in_basis: List[np.ndarray] = []
    newest: List[np.ndarray] = []
    for m in mats:
        added = basis.try_add(m, float(np.linalg.norm(m)))
        if added is not None:
            mats_in_basis.append(added)
            newest.append(added)

    generations = 0
    converged = len(basis) == target or not newest
    while not converged and generations < max_generations:
        generations += 1
        fresh: List[np.ndarray] = []
        for a in list(mats_in_basis):
            for b in newest:
                added = basis.try_add(1j * (a @ b - b @ a), 1.0)
                if added is not None:
                    mats_in_basis.append(added)
                    fresh.append(added)
                    if len(basis) == target:
                        break
            if len(basis) == target:
                break
        newest = fresh
        converged = len(basis) == target or not fresh
        log.debug("generation %d: +%d -> dim %d", generations, len(fresh), len(basis))

    report = LieClosureReport(
        dim_found=len(basis),
        basis=tuple(HermitianOperator(m, tol=1e-8) for m in mats_in_basis),
        full=len(basis) == target,
        generations=generations,
        tol_used=tol,
        n=n,
    )
    if not converged:
        raise ClosureNotConverged(
            f"closure still growing after {max_generations} generations (dim {len(basis)})",
            report,
        )
    return report


def _nontrivial(op) -> bool:
    return not is_scalar_multiple_of_identity(op, NONTRIVIAL_TOL)


def open_loop_controllable(
    sys: ControlSystem, tol: float = DEFAULT_TOL, max_generations: Optional[int] = None
) -> Verdict:
    closure = lie_closure([sys.drift, *sys.controls], tol, max_generations)
    reasons = () if closure.full else (
        f"algebra of {{H, O_i}} has dimension {closure.dim_found} < {closure.target_dim}",
    )
    return Verdict("open_loop_semiclassical", closure.full, closure, reasons)


def closed_loop_controllable(
    sys: ControlSystem, tol: float = DEFAULT_TOL, max_generations: Optional[int] = None
) -> Verdict:
    ol = open_loop_controllable(sys, tol, max_generations)
    reasons = list(ol.reasons)
    has_measurement = any(_nontrivial(m) for m in sys.measurements)
    if not has_measurement:
        reasons.insert(0, "no nontrivial measurement")
    return Verdict(
        "closed_loop_semiclassical", has_measurement and ol.answer, ol.closure, tuple(reasons)
    )


def observable_semiclassical(
    sys: ControlSystem, tol: float = DEFAULT_TOL, max_generations: Optional[int] = None
) -> Verdict:
    cl = closed_loop_controllable(sys, tol, max_generations)
    return Verdict("observable_semiclassical", cl.answer, cl.closure, cl.reasons)


def quantum_controllable(
    sys: ControlSystem, tol: float = DEFAULT_TOL, max_generations: Optional[int] = None
) -> Verdict:
    gens = [sys.drift, *sys.controls, *(s for s, _ in sys.couplings)]
    closure = lie_closure(gens, tol, max_generations)
    reasons = []
    coupled = any(_nontrivial(s) and _nontrivial(c) for s, c in sys.couplings)
    if not coupled:
        reasons.append("no nontrivial coupling")
    if not closure.full:
        reasons.append(
            f"algebra of drift, controls and coupling system sides has dimension "
            f"{closure.dim_found} < {closure.target_dim}"
        )
    notes = ("generators: drift + controls + system side of every coupling",)
    return Verdict(
        "controllable_quantum", coupled and closure.full, closure, tuple(reasons), notes
    )


def observable_quantum(
    sys: ControlSystem, tol: float = DEFAULT_TOL, max_generations: Optional[int] = None
) -> Verdict:
    qc = quantum_controllable(sys, tol, max_generations)
    return Verdict("observable_quantum", qc.answer, qc.closure, qc.reasons, qc.notes)


def all_verdicts(
    sys: ControlSystem, tol: float = DEFAULT_TOL, max_generations: Optional[int] = None
) -> List[Verdict]:
    return [
        open_loop_controllable(sys, tol, max_generations),
        closed_loop_controllable(sys, tol, max_generations),
        observable_semiclassical(sys, tol, max_generations),
        quantum_controllable(sys, tol, max_generations),
        observable_quantum(sys, tol, max_generations),
    ]

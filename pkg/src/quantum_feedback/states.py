"""Density-matrix states, projective non-demolition measurement and state metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .errors import DimensionError, MixedStateError, ValidationError
from .operator_algebra import (
    HermitianOperator,
    TensorSpace,
    as_matrix,
    embed,
    matrix_from_json,
    matrix_to_json,
    partial_trace,
)

log = logging.getLogger(__name__)

STATE_TOL = 1e-10
EIG_FLOOR = -1e-9
EIG_CLUSTER_TOL = 1e-8
PROB_FLOOR = 1e-12
ENTROPY_EIG_CUTOFF = 1e-12

RNG_NAME = "numpy.random.PCG64"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QuantumState:
    """A density matrix on ``space``, with amplitudes kept when the state is known pure."""

    space: TensorSpace
    rho: np.ndarray
    pure_amplitudes: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.space, TensorSpace):
            object.__setattr__(self, "space", TensorSpace(tuple(self.space)))
        rho = as_matrix(self.rho)
        d = self.space.total_dim
        if rho.shape != (d, d):
            raise DimensionError(f"rho shape {rho.shape} does not match space {self.space.factor_dims}")
        if np.max(np.abs(rho - rho.conj().T)) > STATE_TOL:
            raise ValidationError("density matrix is not Hermitian")
        tr = np.trace(rho)
        if abs(tr - 1) > STATE_TOL:
            raise ValidationError(f"density matrix trace is {tr.real:.12g}, expected 1")
        if np.linalg.eigvalsh(rho).min() < EIG_FLOOR:
            raise ValidationError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "rho", _readonly(rho))
        if self.pure_amplitudes is not None:
            psi = np.asarray(self.pure_amplitudes, dtype=complex).ravel()
            if psi.shape != (d,):
                raise DimensionError(f"amplitude vector has length {psi.size}, expected {d}")
            if abs(np.vdot(psi, psi).real - 1) > STATE_TOL:
                raise ValidationError("amplitude vector is not normalized")
            if np.max(np.abs(np.outer(psi, psi.conj()) - rho)) > STATE_TOL:
                raise ValidationError("rho does not match the pure amplitudes")
            object.__setattr__(self, "pure_amplitudes", _readonly(psi))

    @property
    def is_pure(self) -> bool:
        return self.pure_amplitudes is not None or abs(purity(self) - 1) <= STATE_TOL

    def to_json(self) -> dict:
        dims = list(self.space.factor_dims)
        if self.pure_amplitudes is not None:
            return {"dims": dims, "pure": [[float(z.real), float(z.imag)] for z in self.pure_amplitudes]}
        return {"dims": dims, "rho": matrix_to_json(self.rho)}

    @classmethod
    def from_json(cls, obj: dict) -> "QuantumState":
        if not isinstance(obj, dict) or "dims" not in obj:
            raise ValidationError("state object needs a 'dims' field")
        space = TensorSpace(tuple(obj["dims"]))
        if "pure" in obj:
            try:
                amps = [complex(float(re), float(im)) for re, im in obj["pure"]]
            except (TypeError, ValueError):
                raise ValidationError("'pure' must be a list of [re, im] pairs") from None
            return make_pure(space, amps)
        if "rho" in obj:
            return make_mixed(space, matrix_from_json(obj["rho"]))
        raise ValidationError("state object needs either 'pure' or 'rho'")


@dataclass(frozen=True)
class MeasurementOutcome:
    """One eigenspace of a projective measurement.

    ``index`` counts eigenvalue clusters in descending order, including any
    that were dropped for having negligible probability, so it is stable
    across input states.
    """

    observable_label: str
    index: int
    eigenvalue: float
    probability: float
    post_state: QuantumState


def make_pure(space, amplitudes) -> QuantumState:
    if not isinstance(space, TensorSpace):
        space = TensorSpace(tuple(space))
    psi = np.asarray(amplitudes, dtype=complex).ravel()
    if psi.size != space.total_dim:
        raise DimensionError(f"got {psi.size} amplitudes for a space of dimension {space.total_dim}")
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValidationError("cannot normalize the zero vector")
    psi = psi / norm
    return QuantumState(space, np.outer(psi, psi.conj()), psi)


def make_mixed(space, rho) -> QuantumState:
    if not isinstance(space, TensorSpace):
        space = TensorSpace(tuple(space))
    return QuantumState(space, rho)


def basis_state(space, indices: Sequence[int]) -> QuantumState:
    """Product of computational basis states, one index per factor."""
    if not isinstance(space, TensorSpace):
        space = TensorSpace(tuple(space))
    psi = np.zeros(space.total_dim, dtype=complex)
    psi[np.ravel_multi_index(tuple(indices), space.factor_dims)] = 1.0
    return make_pure(space, psi)


def tensor_states(*states: QuantumState) -> QuantumState:
    dims = sum((s.space.factor_dims for s in states), ())
    space = TensorSpace(dims)
    if all(s.pure_amplitudes is not None for s in states):
        psi = states[0].pure_amplitudes
        for s in states[1:]:
            psi = np.kron(psi, s.pure_amplitudes)
        return make_pure(space, psi)
    rho = states[0].rho
    for s in states[1:]:
        rho = np.kron(rho, s.rho)
    return make_mixed(space, rho)


def _evolve(state: QuantumState, full_u: np.ndarray) -> QuantumState:
    rho = full_u @ state.rho @ full_u.conj().T
    if state.pure_amplitudes is not None:
        psi = full_u @ state.pure_amplitudes
        psi = psi / np.linalg.norm(psi)
        return QuantumState(state.space, np.outer(psi, psi.conj()), psi)
    return QuantumState(state.space, (rho + rho.conj().T) / 2)


def apply_unitary(state: QuantumState, u, targets: Iterable[int]) -> QuantumState:
    """Apply ``u`` (acting on ``targets`` in the listed order) to the state."""
    return _evolve(state, embed(u, state.space, tuple(targets)))


def reduced_state(state: QuantumState, keep: Iterable[int]) -> QuantumState:
    keep = sorted(keep)
    sub = TensorSpace(tuple(state.space.factor_dims[k] for k in keep))
    rho = partial_trace(state.rho, state.space, keep)
    return QuantumState(sub, (rho + rho.conj().T) / 2)


def _eigen_clusters(m: np.ndarray):
    """Eigenvalue clusters of ``m`` in descending order as (mean eigenvalue, eigenvectors)."""
    w, v = np.linalg.eigh(m)
    w, v = w[::-1], v[:, ::-1]
    spread = w[0] - w[-1]
    tol = EIG_CLUSTER_TOL * spread
    clusters = []
    start = 0
    for k in range(1, len(w) + 1):
        if k == len(w) or w[start] - w[k] > tol:
            clusters.append((float(np.mean(w[start:k])), v[:, start:k]))
            start = k
    return clusters


def measurement_distribution(
    state: QuantumState, m, targets: Iterable[int]
) -> List[MeasurementOutcome]:
    """All outcomes of a projective measurement of ``m`` on ``targets``, descending eigenvalue."""
    targets = tuple(targets)
    label = getattr(m, "label", None) or "M"
    op = m if isinstance(m, HermitianOperator) else HermitianOperator(m)
    d_t = state.space.sub_dim(state.space.check_indices(targets))
    if op.dim != d_t:
        raise DimensionError(f"observable dimension {op.dim} does not match targets {targets}")
    outcomes = []
    for idx, (lam, vecs) in enumerate(_eigen_clusters(op.matrix)):
        proj = embed(vecs @ vecs.conj().T, state.space, targets)
        if state.pure_amplitudes is not None:
            phi = proj @ state.pure_amplitudes
            p = float(np.vdot(phi, phi).real)
            if p <= PROB_FLOOR:
                log.debug("dropping outcome %d (eigenvalue %g), p=%g", idx, lam, p)
                continue
            post = make_pure(state.space, phi)
        else:
            prp = proj @ state.rho @ proj
            p = float(np.trace(prp).real)
            if p <= PROB_FLOOR:
                log.debug("dropping outcome %d (eigenvalue %g), p=%g", idx, lam, p)
                continue
            prp = prp / p
            post = QuantumState(state.space, (prp + prp.conj().T) / 2)
        outcomes.append(MeasurementOutcome(label, idx, lam, p, post))
    return outcomes


def derived_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for trajectory ``stream`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def sample_measurement(
    state: QuantumState, m, targets: Iterable[int], rng: np.random.Generator
) -> MeasurementOutcome:
    return choose_outcome(measurement_distribution(state, m, targets), rng)


def choose_outcome(outcomes: List[MeasurementOutcome], rng: np.random.Generator) -> MeasurementOutcome:
    """Inverse-CDF draw of one outcome using a single uniform variate."""
    u = rng.random() * sum(o.probability for o in outcomes)
    acc = 0.0
    for o in outcomes:
        acc += o.probability
        if u < acc:
            return o
    return outcomes[-1]


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(a) b sqrt(a)))**2``."""
    if a.space.total_dim != b.space.total_dim:
        raise DimensionError("fidelity needs states on spaces of equal dimension")
    if a.pure_amplitudes is not None and b.pure_amplitudes is not None:
        f = abs(np.vdot(a.pure_amplitudes, b.pure_amplitudes)) ** 2
    elif a.pure_amplitudes is not None:
        f = np.vdot(a.pure_amplitudes, b.rho @ a.pure_amplitudes).real
    elif b.pure_amplitudes is not None:
        f = np.vdot(b.pure_amplitudes, a.rho @ b.pure_amplitudes).real
    else:
        s = _psd_sqrt(a.rho)
        w = np.linalg.eigvalsh(s @ b.rho @ s)
        f = np.sum(np.sqrt(np.clip(w, 0, None))) ** 2
    return float(min(max(f, 0.0), 1.0))


def purity(state: QuantumState) -> float:
    return float(np.real(np.vdot(state.rho.conj().T.ravel(), state.rho.ravel())))


def von_neumann_entropy(rho: np.ndarray) -> float:
    w = np.linalg.eigvalsh(rho)
    w = w[w > ENTROPY_EIG_CUTOFF]
    return float(max(0.0, -np.sum(w * np.log2(w))))


def entanglement_entropy(state: QuantumState, cut: Iterable[int]) -> float:
    """Entropy in bits of the reduced state on ``cut`` for a globally pure state."""
    if abs(purity(state) - 1) > 1e-9:
        raise MixedStateError("entanglement entropy is only defined here for pure global states")
    cut = state.space.check_indices(cut)
    return von_neumann_entropy(partial_trace(state.rho, state.space, cut))

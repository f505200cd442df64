"""Exact dense simulation of a noisy medium, for small qubit counts.

Two equivalent evolutions are provided and cross-checked by tests: the
deterministic weak-fault (superoperator) evolution, and the weighted sum
over all fault paths of per-path trajectories.  Both serve as ground
truth for the cluster-factorized Monte Carlo simulator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qmath
from .medium import FaultPath, FaultSpec, Medium, iter_fault_paths
from .qmath import PROB_FLOOR, SMALL_SYSTEM, DensityMatrix

DENSE_QUBIT_CAP = 12


class DenseLimitError(RuntimeError):
    """The system is too large for dense evolution."""


@dataclass(eq=False)
class FaultChannel:
    """A general single-qubit fault as a set of Kraus operators.

    Usable by the dense evolutions only; the cluster simulator requires a
    plain collapse (FaultSpec), since a general channel does not split
    clusters.
    """

    kraus: tuple[np.ndarray, ...]

    def __post_init__(self):
        self.kraus = tuple(np.asarray(k, dtype=np.complex128) for k in self.kraus)
        total = sum(k.conj().T @ k for k in self.kraus)
        if np.abs(total - np.eye(2)).max() > qmath.ATOL:
            raise ValueError("Kraus operators are not trace preserving")


def composite_fault(faults: list[tuple[FaultSpec, float]]) -> tuple[FaultChannel, float]:
    """Combine several fault types with individual rates into one channel.

    A site faulting as F_i with probability eta_i (independently) is
    equivalent to faulting with total rate eta = sum(eta_i) as the mixture
    channel (1/eta) * sum_i eta_i F_i.
    """
    if not faults:
        raise ValueError("need at least one fault")
    etas = [float(e) for _, e in faults]
    if any(e < 0 for e in etas):
        raise ValueError("fault rates must be non-negative")
    eta = sum(etas)
    if eta > 1.0 + 1e-12:
        raise ValueError(f"total fault rate {eta} exceeds 1")
    if eta <= 0.0:
        raise ValueError("total fault rate must be positive")
    kraus = []
    for (spec, ei) in faults:
        if ei == 0.0:
            continue
        scale = np.sqrt(ei / eta)
        for _, proj in spec.observable.eigenpairs:
            kraus.append(scale * proj)
    return FaultChannel(tuple(kraus)), eta


def _fault_kraus(fault: FaultSpec | FaultChannel) -> tuple[np.ndarray, ...]:
    if isinstance(fault, FaultSpec):
        return tuple(p for _, p in fault.observable.eigenpairs)
    return fault.kraus


def weak_fault_step(
    rho: DensityMatrix, q: int, fault: FaultSpec | FaultChannel, eta: float
) -> DensityMatrix:
    """One deterministic weak fault on qubit position q: (1-eta)*rho + eta*F(rho)."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta {eta} outside [0, 1]")
    if not 0 <= q < rho.num_qubits:
        raise ValueError(f"qubit {q} out of range")
    n = rho.num_qubits
    hit = np.zeros_like(rho.matrix)
    for k in _fault_kraus(fault):
        if n <= SMALL_SYSTEM:
            ext = qmath.extend_operator(k, (q,), n)
            hit += ext @ rho.matrix @ ext.conj().T
        else:
            hit += qmath.conjugate_apply(rho.matrix, k, (q,), n)
    return DensityMatrix((1.0 - eta) * rho.matrix + eta * hit, validate=False)


class _DenseState:
    """Dense matrix over the currently-live qubits, kept in sorted order."""

    __slots__ = ("qubits", "matrix", "cap")

    def __init__(self, cap: int):
        self.qubits: tuple[int, ...] = ()
        self.matrix = np.ones((1, 1), dtype=np.complex128)
        self.cap = cap

    def positions(self, targets) -> tuple[int, ...]:
        return tuple(self.qubits.index(q) for q in targets)

    def birth(self, q: int, bit: int) -> None:
        if len(self.qubits) + 1 > self.cap:
            raise DenseLimitError(
                f"dense cap exceeded: {len(self.qubits) + 1} qubits > cap {self.cap}"
            )
        if not self.qubits:
            self.qubits = (q,)
            self.matrix = qmath.basis_state(bit)
            return
        combined = self.qubits + (q,)
        order = tuple(sorted(range(len(combined)), key=combined.__getitem__))
        mat = qmath.kron2(self.matrix, qmath.basis_state(bit))
        self.qubits = tuple(sorted(combined))
        self.matrix = qmath.permute_qubits(mat, order)

    def death(self, qs: tuple[int, ...]) -> None:
        keep = tuple(p for p, q in enumerate(self.qubits) if q not in qs)
        if not keep:
            # trace of the matrix collapses to a scalar; empty system
            self.qubits = ()
            self.matrix = np.ones((1, 1), dtype=np.complex128)
            return
        self.matrix = qmath.reduce_matrix(self.matrix, keep, len(self.qubits))
        self.qubits = tuple(q for q in self.qubits if q not in qs)

    def conjugate(self, op: np.ndarray, positions: tuple[int, ...], ext: np.ndarray | None) -> np.ndarray:
        if ext is not None:
            return ext @ self.matrix @ ext.conj().T
        return qmath.conjugate_apply(self.matrix, op, positions, len(self.qubits))


class _OpsCache:
    """Extended-operator cache shared across paths of one medium+fault."""

    __slots__ = ("medium", "kraus", "store")

    def __init__(self, medium: Medium, fault: FaultSpec | FaultChannel):
        self.medium = medium
        self.kraus = _fault_kraus(fault)
        self.store: dict = {}

    def gate_ext(self, gate_index: int, m: int, positions: tuple[int, ...]) -> np.ndarray | None:
        if m > SMALL_SYSTEM:
            return None
        key = ("g", gate_index, m, positions)
        ext = self.store.get(key)
        if ext is None:
            ext = qmath.extend_operator(self.medium.gates[gate_index].matrix, positions, m)
            self.store[key] = ext
        return ext

    def gate_projectors(self, gate_index: int, m: int, positions: tuple[int, ...]):
        """Extended eigenprojectors of a measurement-kind gate (or None list)."""
        key = ("gp", gate_index, m, positions)
        exts = self.store.get(key)
        if exts is None:
            okey = ("obs", gate_index)
            obs = self.store.get(okey)
            if obs is None:
                obs = qmath.Observable.from_hermitian(self.medium.gates[gate_index].matrix)
                self.store[okey] = obs
            if m > SMALL_SYSTEM:
                exts = [(p, None) for _, p in obs.eigenpairs]
            else:
                exts = [(p, qmath.extend_operator(p, positions, m)) for _, p in obs.eigenpairs]
            self.store[key] = exts
        return exts

    def fault_ext(self, m: int, pos: int):
        """Extended fault Kraus/projector list for one qubit position."""
        if m > SMALL_SYSTEM:
            return [(k, None) for k in self.kraus]
        key = ("f", m, pos)
        exts = self.store.get(key)
        if exts is None:
            exts = [(k, qmath.extend_operator(k, (pos,), m)) for k in self.kraus]
            self.store[key] = exts
        return exts


def _check_input(medium: Medium, input_bits: str) -> None:
    if len(input_bits) != medium.num_qubits:
        raise ValueError(
            f"input string length {len(input_bits)} does not match {medium.num_qubits} qubits"
        )
    if any(b not in "01" for b in input_bits):
        raise ValueError(f"input string {input_bits!r} must be over 0/1")


def _evolve(
    medium: Medium,
    fault: FaultSpec | FaultChannel,
    input_bits: str,
    *,
    mode: str,
    sigma: FaultPath | None = None,
    outcomes: dict[tuple[int, int], int] | None = None,
    dense_cap: int = DENSE_QUBIT_CAP,
    record=None,
    ops: _OpsCache | None = None,
) -> tuple[tuple[int, ...], np.ndarray]:
    """Shared dense step loop.

    mode "weak": deterministic weak fault on every live qubit each step.
    mode "path": unconditioned collapse exactly at sigma's events, or a
    conditioned collapse where ``outcomes`` fixes the eigenvalue index.
    """
    medium.require_valid()
    _check_input(medium, input_bits)
    if ops is None:
        ops = _OpsCache(medium, fault)
    faults_at = sigma.by_time() if sigma is not None else {}
    if outcomes is not None and not isinstance(fault, FaultSpec):
        raise ValueError("conditioned replay requires a collapse fault, not a channel")
    state = _DenseState(dense_cap)
    gate_index = {id(g): i for i, g in enumerate(medium.gates)}
    for t in range(medium.duration + 1):
        for q in medium.births_by_time.get(t, ()):
            state.birth(q, int(input_bits[q]))
        for g in medium.gates_by_time.get(t, ()):
            gi = gate_index[id(g)]
            positions = state.positions(g.targets)
            m = len(state.qubits)
            if g.kind == "unitary":
                state.matrix = state.conjugate(g.matrix, positions, ops.gate_ext(gi, m, positions))
            else:
                total = np.zeros_like(state.matrix)
                for p1q, ext in ops.gate_projectors(gi, m, positions):
                    if ext is not None:
                        total += ext @ state.matrix @ ext
                    else:
                        total += qmath.conjugate_apply(state.matrix, p1q, positions, m)
                state.matrix = total
        if record is not None:
            record("gates", t, state.qubits, state.matrix.copy())
        if mode == "weak":
            if medium.eta > 0.0:
                m = len(state.qubits)
                for pos in range(m):
                    hit = np.zeros_like(state.matrix)
                    for k1q, ext in ops.fault_ext(m, pos):
                        if ext is not None:
                            hit += ext @ state.matrix @ ext.conj().T
                        else:
                            hit += qmath.conjugate_apply(state.matrix, k1q, (pos,), m)
                    state.matrix = (1.0 - medium.eta) * state.matrix + medium.eta * hit
        else:
            for q in faults_at.get(t, ()):
                pos = state.qubits.index(q)
                m = len(state.qubits)
                exts = ops.fault_ext(m, pos)
                if outcomes is None:
                    total = np.zeros_like(state.matrix)
                    for k1q, ext in exts:
                        if ext is not None:
                            total += ext @ state.matrix @ ext.conj().T
                        else:
                            total += qmath.conjugate_apply(state.matrix, k1q, (pos,), m)
                    state.matrix = total
                else:
                    k1q, ext = exts[outcomes[(q, t)]]
                    if ext is not None:
                        cond = ext @ state.matrix @ ext.conj().T
                    else:
                        cond = qmath.conjugate_apply(state.matrix, k1q, (pos,), m)
                    prob = cond.trace().real
                    if prob < PROB_FLOOR:
                        raise ValueError(
                            f"replayed outcome at ({q}, {t}) has probability {prob:.3e}"
                        )
                    state.matrix = cond / prob
        deaths = medium.deaths_by_time.get(t, ())
        if deaths and t < medium.duration:
            state.death(deaths)
        if record is not None:
            record("step", t, state.qubits, state.matrix.copy())
    return state.qubits, state.matrix


def evolve_exact(
    medium: Medium,
    fault: FaultSpec | FaultChannel,
    input_bits: str,
    *,
    dense_cap: int = DENSE_QUBIT_CAP,
    record=None,
) -> DensityMatrix:
    """Final density matrix under the deterministic weak-fault evolution."""
    _, matrix = _evolve(medium, fault, input_bits, mode="weak", dense_cap=dense_cap, record=record)
    return DensityMatrix(matrix, validate=False)


def evolve_by_path(
    medium: Medium,
    fault: FaultSpec | FaultChannel,
    sigma: FaultPath,
    input_bits: str,
    *,
    outcomes: dict[tuple[int, int], int] | None = None,
    dense_cap: int = DENSE_QUBIT_CAP,
    record=None,
    _ops: _OpsCache | None = None,
) -> DensityMatrix:
    """Trajectory endpoint for one fixed fault path.

    Faults are unconditioned collapses unless ``outcomes`` maps each event
    to an eigenvalue index, in which case the trajectory is conditioned
    (and renormalized) on those outcomes.
    """
    for q, t in sigma.events:
        t1, t2 = medium.lifetimes[q]
        if not t1 <= t <= t2:
            raise ValueError(f"fault event ({q}, {t}) outside lifetime ({t1}, {t2})")
    _, matrix = _evolve(
        medium,
        fault,
        input_bits,
        mode="path",
        sigma=sigma,
        outcomes=outcomes,
        dense_cap=dense_cap,
        record=record,
        ops=_ops,
    )
    return DensityMatrix(matrix, validate=False)


def path_sum_exact(
    medium: Medium,
    fault: FaultSpec | FaultChannel,
    input_bits: str,
    *,
    dense_cap: int = DENSE_QUBIT_CAP,
    site_cap: int = 20,
) -> DensityMatrix:
    """Weight-averaged endpoint over all fault paths (2^V trajectories)."""
    ops = _OpsCache(medium, fault)
    total = None
    for sigma, weight in iter_fault_paths(medium, max_sites=site_cap):
        rho = evolve_by_path(
            medium, fault, sigma, input_bits, dense_cap=dense_cap, _ops=ops
        )
        total = weight * rho.matrix if total is None else total + weight * rho.matrix
    assert total is not None
    return DensityMatrix(total, validate=False)


def output_distribution_exact(
    medium: Medium,
    fault: FaultSpec | FaultChannel,
    input_bits: str,
    *,
    dense_cap: int = DENSE_QUBIT_CAP,
) -> dict[str, float]:
    """Exact distribution of basic measurements on the result qubits."""
    qubits, matrix = _evolve(medium, fault, input_bits, mode="weak", dense_cap=dense_cap)
    result = tuple(sorted(medium.result_qubits))
    if not result:
        return {"": 1.0}
    keep = tuple(qubits.index(q) for q in result)
    reduced = qmath.reduce_matrix(matrix, keep, len(qubits))
    probs = reduced.diagonal().real
    r = len(result)
    return {
        format(i, f"0{r}b"): float(p)
        for i, p in enumerate(probs)
        if p > 1e-15
    }

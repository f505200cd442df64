"""Timed quantum circuits, the collapse-fault model, and fault paths.

A medium is a circuit with per-gate time steps, per-qubit lifetimes and a
decoherence rate eta: every live qubit suffers a single-qubit collapse
fault independently with probability eta at each time step.  Within a
step the order is fixed: births, then gates, then faults, then deaths.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import qmath
from .qmath import Observable

MAX_FAN_IN = 2
PATH_SITE_CAP = 20

#: Observable of the basic 0/1 measurement: eigenvalue = bit value.
BASIC_MEASUREMENT = qmath.eigendecompose_1q(np.diag([0.0, 1.0]).astype(np.complex128))

#: Default two-qubit gate for the circuit generators: Hadamard on the first
#: (control) qubit followed by CNOT.  Entangles every computational product
#: input, which keeps cluster dynamics non-trivial.
DEFAULT_TWO_QUBIT_GATE = qmath.CNOT @ qmath.kron2(qmath.HADAMARD, qmath.IDENTITY_2)


class InvalidMediumError(ValueError):
    """Raised when an operation requires a medium that fails validation."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid medium: " + "; ".join(violations))


@dataclass(eq=False)
class GateSpec:
    """One gate application: a unitary or measurement matrix, targets, time."""

    kind: str  # "unitary" | "measurement"
    matrix: np.ndarray
    targets: tuple[int, ...]
    time: int

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        self.targets = tuple(int(t) for t in self.targets)
        self.time = int(self.time)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GateSpec)
            and self.kind == other.kind
            and self.targets == other.targets
            and self.time == other.time
            and self.matrix.shape == other.matrix.shape
            and bool(np.array_equal(self.matrix, other.matrix))
        )


@dataclass(eq=False)
class FaultSpec:
    """The collapse basis: a single-qubit observable measured at fault sites."""

    observable: Observable

    @classmethod
    def z_basis(cls) -> "FaultSpec":
        return cls(qmath.eigendecompose_1q(qmath.PAULI_Z))

    @classmethod
    def x_basis(cls) -> "FaultSpec":
        return cls(qmath.eigendecompose_1q(qmath.PAULI_X))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "FaultSpec":
        return cls(qmath.eigendecompose_1q(np.asarray(matrix, dtype=np.complex128)))

    def __eq__(self, other) -> bool:
        return isinstance(other, FaultSpec) and bool(
            np.array_equal(self.observable.matrix, other.observable.matrix)
        )


@dataclass(frozen=True)
class FaultPath:
    """Set of (qubit, time) pairs where collapse faults occur."""

    events: frozenset[tuple[int, int]]

    @classmethod
    def of(cls, events) -> "FaultPath":
        return cls(frozenset((int(q), int(t)) for q, t in events))

    def __len__(self) -> int:
        return len(self.events)

    def sorted_events(self) -> list[tuple[int, int]]:
        return sorted(self.events, key=lambda qt: (qt[1], qt[0]))

    def by_time(self) -> dict[int, list[int]]:
        """Qubits faulting at each step, sorted; same-step faults commute."""
        out: dict[int, list[int]] = {}
        for q, t in self.sorted_events():
            out.setdefault(t, []).append(q)
        return out


EMPTY_PATH = FaultPath(frozenset())


@dataclass(eq=False)
class Medium:
    """A timed circuit with qubit lifetimes and a decoherence rate."""

    num_qubits: int
    lifetimes: tuple[tuple[int, int], ...]
    gates: tuple[GateSpec, ...]
    eta: float
    result_qubits: tuple[int, ...]
    _validated: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.lifetimes = tuple((int(a), int(b)) for a, b in self.lifetimes)
        self.gates = tuple(self.gates)
        self.result_qubits = tuple(int(q) for q in self.result_qubits)
        self.eta = float(self.eta)

    @cached_property
    def duration(self) -> int:
        """Last time step T (maximum death time)."""
        return max((t2 for _, t2 in self.lifetimes), default=0)

    @cached_property
    def gates_by_time(self) -> dict[int, tuple[GateSpec, ...]]:
        out: dict[int, list[GateSpec]] = {}
        for g in self.gates:
            out.setdefault(g.time, []).append(g)
        return {t: tuple(gs) for t, gs in out.items()}

    @cached_property
    def births_by_time(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for q, (t1, _) in enumerate(self.lifetimes):
            out.setdefault(t1, []).append(q)
        return {t: tuple(qs) for t, qs in out.items()}

    @cached_property
    def deaths_by_time(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for q, (_, t2) in enumerate(self.lifetimes):
            out.setdefault(t2, []).append(q)
        return {t: tuple(qs) for t, qs in out.items()}

    @cached_property
    def _sites(self) -> tuple[tuple[int, int], ...]:
        return tuple(
            (q, t)
            for q, (t1, t2) in enumerate(self.lifetimes)
            for t in range(t1, t2 + 1)
        )

    def sites(self) -> tuple[tuple[int, int], ...]:
        """All (qubit, time) pairs where a fault can occur, in (q, t) order."""
        return self._sites

    def with_eta(self, eta: float) -> "Medium":
        """Copy of this medium with a different decoherence rate."""
        return Medium(self.num_qubits, self.lifetimes, self.gates, eta, self.result_qubits)

    def require_valid(self) -> None:
        if self._validated:
            return
        violations = validate(self)
        if violations:
            raise InvalidMediumError(violations)
        self._validated = True

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Medium)
            and self.num_qubits == other.num_qubits
            and self.lifetimes == other.lifetimes
            and self.eta == other.eta
            and self.result_qubits == other.result_qubits
            and len(self.gates) == len(other.gates)
            and all(a == b for a, b in zip(self.gates, other.gates))
        )


def validate(medium: Medium, max_fan_in: int = MAX_FAN_IN) -> list[str]:
    """Every invariant violation of the medium, as human-readable strings.

    An empty list means the medium is valid.  Violations are data, not
    exceptions: callers that need a hard failure use Medium.require_valid().
    """
    v: list[str] = []
    n = medium.num_qubits
    if n < 0:
        v.append(f"negative qubit count {n}")
    if len(medium.lifetimes) != n:
        v.append(f"{len(medium.lifetimes)} lifetimes for {n} qubits")
        return v
    if not 0.0 <= medium.eta <= 1.0:
        v.append(f"decoherence rate {medium.eta} outside [0, 1]")
    for q, (t1, t2) in enumerate(medium.lifetimes):
        if t1 < 0 or t2 < t1:
            v.append(f"qubit {q} has malformed lifetime ({t1}, {t2})")
    if n > 0 and all(t1 > 0 for t1, _ in medium.lifetimes):
        v.append("no qubit is born at time 0 (timings must start at 0)")
    T = medium.duration
    for q in medium.result_qubits:
        if not 0 <= q < n:
            v.append(f"result qubit {q} out of range")
        elif medium.lifetimes[q][1] != T:
            v.append(
                f"result qubit {q} dies at {medium.lifetimes[q][1]} before the final step {T}"
            )
    if len(set(medium.result_qubits)) != len(medium.result_qubits):
        v.append("result qubits contain duplicates")

    busy: dict[tuple[int, int], int] = {}
    for i, g in enumerate(medium.gates):
        tag = f"gate {i} ({g.kind} at t={g.time} on {g.targets})"
        if g.kind not in ("unitary", "measurement"):
            v.append(f"{tag}: unknown kind {g.kind!r}")
            continue
        k = len(g.targets)
        if k == 0 or k > max_fan_in:
            v.append(f"{tag}: fan-in {k} outside 1..{max_fan_in}")
        if len(set(g.targets)) != k:
            v.append(f"{tag}: duplicate targets")
        if g.matrix.shape != (1 << k, 1 << k):
            v.append(f"{tag}: matrix shape {g.matrix.shape} does not match fan-in {k}")
            continue
        if g.kind == "unitary" and not qmath.is_unitary(g.matrix):
            v.append(f"{tag}: matrix is not unitary")
        if g.kind == "measurement" and not qmath.is_hermitian(g.matrix):
            v.append(f"{tag}: matrix is not hermitian")
        for q in g.targets:
            if not 0 <= q < n:
                v.append(f"{tag}: target {q} out of range")
                continue
            t1, t2 = medium.lifetimes[q]
            if not t1 <= g.time <= t2:
                v.append(f"{tag}: target {q} not alive at time {g.time}")
            key = (q, g.time)
            if key in busy:
                v.append(f"{tag}: time collision with gate {busy[key]} on qubit {q}")
            else:
                busy[key] = i
        if g.time < 0:
            v.append(f"{tag}: negative time")
    return v


def fault_sites(medium: Medium) -> int:
    """Total number of (qubit, time) fault sites; lifetimes are inclusive."""
    return sum(t2 - t1 + 1 for t1, t2 in medium.lifetimes)


def path_weight(medium: Medium, sigma: FaultPath) -> float:
    """Probability of the fault path: eta^|sigma| * (1-eta)^(V-|sigma|)."""
    for q, t in sigma.events:
        if not 0 <= q < medium.num_qubits:
            raise ValueError(f"fault event on unknown qubit {q}")
        t1, t2 = medium.lifetimes[q]
        if not t1 <= t <= t2:
            raise ValueError(f"fault event ({q}, {t}) outside lifetime ({t1}, {t2})")
    v = fault_sites(medium)
    k = len(sigma)
    return medium.eta**k * (1.0 - medium.eta) ** (v - k)


def sample_fault_path(medium: Medium, rng: np.random.Generator) -> FaultPath:
    """Draw a fault path: each site is included independently with rate eta."""
    sites = medium.sites()
    if not sites:
        return EMPTY_PATH
    mask = rng.random(len(sites)) < medium.eta
    return FaultPath(frozenset(s for s, hit in zip(sites, mask) if hit))


def enumerate_fault_paths(
    medium: Medium, max_sites: int = PATH_SITE_CAP
) -> list[tuple[FaultPath, float]]:
    """All 2^V fault paths with their weights (weights sum to one)."""
    return list(iter_fault_paths(medium, max_sites=max_sites))


def iter_fault_paths(medium: Medium, max_sites: int = PATH_SITE_CAP):
    """Lazily yield (path, weight) over all subsets of fault sites."""
    sites = medium.sites()
    v = len(sites)
    if v > max_sites:
        raise ValueError(f"{v} fault sites exceed the enumeration cap of {max_sites}")
    eta = medium.eta
    for k in range(v + 1):
        w = eta**k * (1.0 - eta) ** (v - k)
        if w == 0.0:
            continue
        for combo in itertools.combinations(sites, k):
            yield FaultPath(frozenset(combo)), w


# ---------------------------------------------------------------------------
# circuit generators


def random_matching_medium(
    n: int,
    steps: int,
    eta: float,
    rng: np.random.Generator,
    gate: np.ndarray = DEFAULT_TWO_QUBIT_GATE,
) -> Medium:
    """Each step applies a uniformly random perfect matching of two-qubit gates."""
    if n < 2 or steps < 1:
        raise ValueError("need n >= 2 and steps >= 1")
    gates = []
    for t in range(steps):
        perm = rng.permutation(n)
        for i in range(n // 2):
            a, b = int(perm[2 * i]), int(perm[2 * i + 1])
            gates.append(GateSpec("unitary", gate, (a, b), t))
    return Medium(n, tuple((0, steps - 1) for _ in range(n)), tuple(gates), eta, tuple(range(n)))


def nearest_neighbor_medium(
    n: int,
    steps: int,
    eta: float,
    gate: np.ndarray = DEFAULT_TWO_QUBIT_GATE,
) -> Medium:
    """1D line: qubits pair with left/right neighbors on alternating steps."""
    if n < 2 or steps < 1:
        raise ValueError("need n >= 2 and steps >= 1")
    gates = []
    for t in range(steps):
        start = t % 2
        for a in range(start, n - 1, 2):
            gates.append(GateSpec("unitary", gate, (a, a + 1), t))
    return Medium(n, tuple((0, steps - 1) for _ in range(n)), tuple(gates), eta, tuple(range(n)))


def sequential_medium(
    n: int,
    steps: int,
    eta: float,
    rng: np.random.Generator,
    gate: np.ndarray = DEFAULT_TWO_QUBIT_GATE,
) -> Medium:
    """One two-qubit gate per step, on a uniformly random pair."""
    if n < 2 or steps < 1:
        raise ValueError("need n >= 2 and steps >= 1")
    gates = []
    for t in range(steps):
        a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
        gates.append(GateSpec("unitary", gate, (a, b), t))
    return Medium(n, tuple((0, steps - 1) for _ in range(n)), tuple(gates), eta, tuple(range(n)))


# ---------------------------------------------------------------------------
# circuit JSON format
#
# { "n": int, "eta": float, "lifetimes": [[t1, t2], ...],
#   "result_qubits": [int, ...],
#   "fault": {"observable": matrix} | absent,
#   "gates": [{"kind": "unitary"|"measurement", "time": int,
#              "targets": [int, ...], "matrix": matrix}, ...] }
#
# where a matrix is a row-major nested list and each complex entry is a
# two-element [re, im] list.


def matrix_to_json(matrix: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix)]


def matrix_from_json(data: list) -> np.ndarray:
    try:
        return np.array([[complex(re, im) for re, im in row] for row in data], dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed matrix entry: {exc}") from exc


def medium_to_dict(medium: Medium, fault: FaultSpec | None = None) -> dict:
    out = {
        "n": medium.num_qubits,
        "eta": medium.eta,
        "lifetimes": [[t1, t2] for t1, t2 in medium.lifetimes],
        "result_qubits": list(medium.result_qubits),
        "gates": [
            {
                "kind": g.kind,
                "time": g.time,
                "targets": list(g.targets),
                "matrix": matrix_to_json(g.matrix),
            }
            for g in medium.gates
        ],
    }
    if fault is not None:
        out["fault"] = {"observable": matrix_to_json(fault.observable.matrix)}
    return out


def medium_from_dict(data: dict) -> tuple[Medium, FaultSpec | None]:
    try:
        gates = tuple(
            GateSpec(g["kind"], matrix_from_json(g["matrix"]), tuple(g["targets"]), g["time"])
            for g in data.get("gates", [])
        )
        medium = Medium(
            num_qubits=int(data["n"]),
            lifetimes=tuple((int(a), int(b)) for a, b in data["lifetimes"]),
            gates=gates,
            eta=float(data["eta"]),
            result_qubits=tuple(int(q) for q in data["result_qubits"]),
        )
    except KeyError as exc:
        raise ValueError(f"circuit JSON is missing field {exc.args[0]!r}") from exc
    fault = None
    if "fault" in data:
        fault = FaultSpec.from_matrix(matrix_from_json(data["fault"]["observable"]))
    return medium, fault


def dumps_circuit(medium: Medium, fault: FaultSpec | None = None) -> str:
    return json.dumps(medium_to_dict(medium, fault), sort_keys=True, indent=2) + "\n"


def save_circuit(path: str | Path, medium: Medium, fault: FaultSpec | None = None) -> None:
    Path(path).write_text(dumps_circuit(medium, fault), encoding="utf-8")


def load_circuit(path: str | Path) -> tuple[Medium, FaultSpec | None]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return medium_from_dict(data)

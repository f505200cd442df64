"""Monte Carlo circuit simulation over a cluster-factorized density matrix.

Instead of one dense matrix over all qubits, the simulator keeps a
configuration: a partition of the live qubits into clusters, each cluster
owning its own density matrix.  Gates merge the clusters of their targets;
a collapse fault measures one qubit, splits it off as a singleton and
leaves the rest of its cluster conditioned on the drawn outcome.  The
global state is always the tensor product of the cluster matrices.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import qmath
from .medium import BASIC_MEASUREMENT, FaultPath, FaultSpec, Medium
from .qmath import PROB_FLOOR, SMALL_SYSTEM, DensityMatrix

DEFAULT_CLUSTER_CAP = 13

# probability bookkeeping drift beyond this signals a real numerical problem
DRIFT_TOL = 1e-9

_POW4 = [4**s for s in range(32)]

# shared read-only basis matrices; cluster matrices are replaced, never
# mutated in place, so singletons may alias these
_BASIS_MATS = (qmath.basis_state(0), qmath.basis_state(1))


class ClusterCapError(RuntimeError):
    """A merge would exceed the configured cluster size cap.

    This is a reported resource-exhaustion outcome, not a bug: low
    decoherence lets clusters grow until their matrices are infeasible.
    When raised from run_trial with stats collection on, ``partial_stats``
    holds the cost accounting up to the step that overflowed, so truncated
    trials remain usable as censored observations.
    """

    def __init__(self, qubits, cap, time):
        self.qubits = tuple(qubits)
        self.cap = cap
        self.time = time
        self.partial_stats: "CostStats | None" = None
        super().__init__(
            f"cluster of {len(self.qubits)} qubits at t={time} exceeds cap {cap}"
        )


class NumericalDriftError(RuntimeError):
    """Collapse outcome probabilities failed to sum to one within tolerance."""


class _Cluster:
    __slots__ = ("qubits", "matrix")

    def __init__(self, qubits: tuple[int, ...], matrix: np.ndarray):
        self.qubits = qubits
        self.matrix = matrix


class Configuration:
    """Partition of the live qubits into clusters with their matrices."""

    __slots__ = ("_clusters", "_locator", "_next_id")

    def __init__(self):
        self._clusters: dict[int, _Cluster] = {}
        self._locator: dict[int, int] = {}
        self._next_id = 0

    # -- construction ------------------------------------------------------

    def add_singleton(self, q: int, matrix: np.ndarray) -> None:
        if q in self._locator:
            raise ValueError(f"qubit {q} is already in the configuration")
        cid = self._next_id
        self._next_id += 1
        self._clusters[cid] = _Cluster((q,), matrix)
        self._locator[q] = cid

    # -- views -------------------------------------------------------------

    @property
    def clusters(self) -> list[tuple[tuple[int, ...], DensityMatrix]]:
        out = [(c.qubits, DensityMatrix(c.matrix, validate=False)) for c in self._clusters.values()]
        out.sort(key=lambda item: item[0])
        return out

    def live_qubits(self) -> list[int]:
        return sorted(self._locator)

    def num_clusters(self) -> int:
        return len(self._clusters)

    def cluster_of(self, q: int) -> tuple[tuple[int, ...], DensityMatrix]:
        c = self._clusters[self._locator[q]]
        return c.qubits, DensityMatrix(c.matrix, validate=False)

    def cluster_sizes(self) -> list[int]:
        return sorted(len(c.qubits) for c in self._clusters.values())

    def global_state(self) -> tuple[tuple[int, ...], DensityMatrix]:
        """Tensor of all clusters, permuted to ascending qubit order."""
        if not self._clusters:
            raise ValueError("empty configuration has no global state")
        parts = sorted(self._clusters.values(), key=lambda c: c.qubits)
        qubits: tuple[int, ...] = ()
        matrix = None
        for c in parts:
            qubits = qubits + c.qubits
            matrix = c.matrix if matrix is None else qmath.kron2(matrix, c.matrix)
        order = tuple(sorted(range(len(qubits)), key=qubits.__getitem__))
        if order != tuple(range(len(qubits))):
            matrix = qmath.permute_qubits(matrix, order)
        return tuple(sorted(qubits)), DensityMatrix(matrix, validate=False)

    def audit(self) -> None:
        """Debug check: clusters partition the live qubits and agree with the locator."""
        seen: set[int] = set()
        for cid, c in self._clusters.items():
            if c.matrix.shape != (1 << len(c.qubits), 1 << len(c.qubits)):
                raise AssertionError(f"cluster {cid} matrix shape mismatch")
            if tuple(sorted(c.qubits)) != c.qubits:
                raise AssertionError(f"cluster {cid} qubits not sorted")
            for q in c.qubits:
                if q in seen:
                    raise AssertionError(f"qubit {q} appears in two clusters")
                seen.add(q)
                if self._locator.get(q) != cid:
                    raise AssertionError(f"locator inconsistent for qubit {q}")
        if seen != set(self._locator):
            raise AssertionError("locator does not match cluster membership")

    # -- internal mutation -------------------------------------------------

    def _merge(self, cids: list[int], cap: int, time: int) -> _Cluster:
        total = sum(len(self._clusters[c].qubits) for c in cids)
        all_qubits = [q for c in cids for q in self._clusters[c].qubits]
        if total > cap:
            raise ClusterCapError(all_qubits, cap, time)
        if len(cids) == 2:
            a, b = self._clusters[cids[0]], self._clusters[cids[1]]
            if len(a.qubits) == 1 and len(b.qubits) == 1:
                # singleton pair: ordering the operands replaces the permutation
                if a.qubits[0] > b.qubits[0]:
                    a, b = b, a
                merged = _Cluster(a.qubits + b.qubits, qmath.kron2(a.matrix, b.matrix))
                keep = cids[0]
                del self._clusters[cids[1]]
                self._clusters[keep] = merged
                self._locator[merged.qubits[0]] = keep
                self._locator[merged.qubits[1]] = keep
                return merged
        matrix = None
        concat: tuple[int, ...] = ()
        for cid in cids:
            c = self._clusters[cid]
            concat = concat + c.qubits
            matrix = c.matrix if matrix is None else qmath.kron2(matrix, c.matrix)
        target = tuple(sorted(concat))
        perm = tuple(concat.index(q) for q in target)
        if perm != tuple(range(total)):
            ix = qmath.permutation_indices(perm)
            matrix = matrix[ix[:, None], ix[None, :]]
        keep = cids[0]
        for cid in cids[1:]:
            del self._clusters[cid]
        merged = _Cluster(target, matrix)
        self._clusters[keep] = merged
        for q in target:
            self._locator[q] = keep
        return merged

    def _split_out(self, q: int, q_matrix: np.ndarray, rest_matrix: np.ndarray) -> None:
        cid = self._locator.pop(q)
        c = self._clusters[cid]
        c.qubits = tuple(x for x in c.qubits if x != q)
        c.matrix = rest_matrix
        self.add_singleton(q, q_matrix)

    def _remove(self, q: int) -> None:
        cid = self._locator.pop(q)
        c = self._clusters[cid]
        if len(c.qubits) == 1:
            del self._clusters[cid]
            return
        pos = c.qubits.index(q)
        keep = tuple(p for p in range(len(c.qubits)) if p != pos)
        c.matrix = qmath.reduce_matrix(c.matrix, keep, len(c.qubits))
        c.qubits = tuple(x for x in c.qubits if x != q)


def init_configuration(bits: str, qubit_ids=None) -> Configuration:
    """One singleton cluster per qubit, in the |0> or |1> basis state."""
    if qubit_ids is None:
        qubit_ids = range(len(bits))
    qubit_ids = list(qubit_ids)
    if len(qubit_ids) != len(bits):
        raise ValueError(f"{len(bits)} bits for {len(qubit_ids)} qubits")
    conf = Configuration()
    for q, b in zip(qubit_ids, bits):
        if b not in "01":
            raise ValueError(f"input bit {b!r} must be 0 or 1")
        conf.add_singleton(q, qmath.basis_state(int(b)))
    return conf


class _CollapsePair:
    """One measurement branch of a single-qubit collapse basis.

    ``basis_bit`` is set when the projector is exactly a computational
    basis projector, enabling a pure-slicing fast path; otherwise the
    eigenvector scalars drive the general quadratic-form path.  ``vector``
    is None for a degenerate (identity) projector.
    """

    __slots__ = ("value", "projector", "rank", "basis_bit", "vector", "vector_conj")

    def __init__(self, value: float, projector: np.ndarray):
        self.value = value
        self.projector = projector
        self.rank = int(round(projector.trace().real))
        self.basis_bit = None
        self.vector = None
        self.vector_conj = None
        if self.rank == 1:
            for b in (0, 1):
                if abs(projector[b, b] - 1.0) < 1e-12 and abs(projector[1 - b, 1 - b]) < 1e-12:
                    self.basis_bit = b
                    break
            j = 0 if projector[0, 0].real >= projector[1, 1].real else 1
            v = projector[:, j] / np.sqrt(projector[j, j].real)
            self.vector = (complex(v[0]), complex(v[1]))
            self.vector_conj = (self.vector[0].conjugate(), self.vector[1].conjugate())


def _observable_pairs(obs: qmath.Observable) -> tuple[_CollapsePair, ...]:
    return tuple(_CollapsePair(val, p) for val, p in obs.eigenpairs)


class _SimOps:
    """Per-run cache of eigensystems and extended gate operators.

    Gate extensions depend only on (gate, cluster size, positions), never
    on the actual qubit ids, so the key space stays small and hit rates
    high across trials of the same medium.
    """

    __slots__ = ("medium", "fault_pairs", "output_pairs", "sites", "_gates", "_store")

    def __init__(self, medium: Medium, fault: FaultSpec):
        if not isinstance(fault, FaultSpec):
            raise TypeError("the cluster simulator handles collapse faults only")
        self.medium = medium
        self.fault_pairs = _observable_pairs(fault.observable)
        self.output_pairs = _observable_pairs(BASIC_MEASUREMENT)
        self.sites = medium.sites()
        self._gates = {id(g): i for i, g in enumerate(medium.gates)}
        self._store: dict = {}

    def gate_ext(self, gate, m: int, positions: tuple[int, ...]):
        """(extension, extension^dagger) of a unitary gate, or None for big clusters."""
        if m > SMALL_SYSTEM:
            return None
        key = ("g", self._gates[id(gate)], m, positions)
        pair = self._store.get(key)
        if pair is None:
            ext = qmath.extend_operator(gate.matrix, positions, m)
            pair = (ext, np.ascontiguousarray(ext.conj().T))
            self._store[key] = pair
        return pair

    def gate_pairs(self, gate, m: int, positions: tuple[int, ...]):
        """(projector, extension|None) pairs for a measurement-kind gate."""
        gi = self._gates[id(gate)]
        key = ("gp", gi, m, positions)
        pairs = self._store.get(key)
        if pairs is None:
            okey = ("obs", gi)
            obs = self._store.get(okey)
            if obs is None:
                obs = qmath.Observable.from_hermitian(gate.matrix)
                self._store[okey] = obs
            if m > SMALL_SYSTEM:
                pairs = [(p, None) for _, p in obs.eigenpairs]
            else:
                pairs = [(p, qmath.extend_operator(p, positions, m)) for _, p in obs.eigenpairs]
            self._store[key] = pairs
        return pairs


def _apply_gate_inner(conf: Configuration, gate, cap: int, ops: _SimOps | None) -> None:
    cids: list[int] = []
    for q in gate.targets:
        cid = conf._locator[q]
        if cid not in cids:
            cids.append(cid)
    cluster = conf._clusters[cids[0]] if len(cids) == 1 else conf._merge(cids, cap, gate.time)
    m = len(cluster.qubits)
    positions = tuple(cluster.qubits.index(q) for q in gate.targets)
    if gate.kind == "unitary":
        if ops is not None:
            pair = ops.gate_ext(gate, m, positions)
        elif m <= SMALL_SYSTEM:
            ext = qmath.extend_operator(gate.matrix, positions, m)
            pair = (ext, ext.conj().T)
        else:
            pair = None
        if pair is not None:
            cluster.matrix = pair[0] @ cluster.matrix @ pair[1]
        else:
            cluster.matrix = qmath.conjugate_apply(cluster.matrix, gate.matrix, positions, m)
    else:
        # measurement gate: unconditioned, keeps the cluster together
        if ops is not None:
            pairs = ops.gate_pairs(gate, m, positions)
        else:
            obs = qmath.Observable.from_hermitian(gate.matrix)
            pairs = [
                (p, qmath.extend_operator(p, positions, m) if m <= SMALL_SYSTEM else None)
                for _, p in obs.eigenpairs
            ]
        total = np.zeros_like(cluster.matrix)
        for p1q, ext in pairs:
            if ext is not None:
                total += ext @ cluster.matrix @ ext
            else:
                total += qmath.conjugate_apply(cluster.matrix, p1q, positions, m)
        cluster.matrix = total


def _quadratic_form(marginal: np.ndarray, pair: _CollapsePair) -> float:
    vc0, vc1 = pair.vector_conj
    v0, v1 = pair.vector
    m00 = complex(marginal[0, 0])
    m01 = complex(marginal[0, 1])
    m10 = complex(marginal[1, 0])
    m11 = complex(marginal[1, 1])
    return (vc0 * (m00 * v0 + m01 * v1) + vc1 * (m10 * v0 + m11 * v1)).real


def _collapse_inner(
    conf: Configuration,
    q: int,
    pairs: tuple[_CollapsePair, ...],
    rng: np.random.Generator,
) -> int:
    """Measure qubit q in the given basis, split it off, return the branch index.

    Works on the strided six-axis view of the cluster matrix, so collapsing
    never materializes extended projectors: the marginal fixes the outcome
    probabilities and one contraction with the drawn eigenvector yields the
    conditioned remainder directly.
    """
    cluster = conf._clusters[conf._locator[q]]
    mat = cluster.matrix
    m = len(cluster.qubits)
    if m == 1:
        marginal = mat
        view = None
    else:
        pos = cluster.qubits.index(q)
        left = 1 << pos
        right = 1 << (m - 1 - pos)
        view = mat.reshape(left, 2, right, left, 2, right)
        marginal = np.einsum("iajibj->ab", view)
    probs = [
        float(marginal[p.basis_bit, p.basis_bit].real)
        if p.basis_bit is not None
        else (_quadratic_form(marginal, p) if p.rank == 1 else float(marginal.trace().real))
        for p in pairs
    ]
    total = sum(probs)
    if abs(total - 1.0) > DRIFT_TOL:
        raise NumericalDriftError(f"outcome probabilities for qubit {q} sum to {total!r}")
    r = rng.random()
    acc = 0.0
    chosen = -1
    for i, p in enumerate(probs):
        if p < PROB_FLOOR:
            continue
        chosen = i
        acc += p
        if r < acc:
            break
    pair = pairs[chosen]
    prob = probs[chosen]
    if pair.rank > 1:
        # degenerate observable: the conditioned state is unchanged and the
        # qubit stays entangled, so there is nothing to split
        return chosen
    if m == 1:
        cluster.matrix = pair.projector
        return chosen
    if pair.basis_bit is not None:
        b = pair.basis_bit
        rest_matrix = view[:, b, :, :, b, :].reshape(left * right, left * right) / prob
    else:
        rest_matrix = np.einsum(
            "a,b,iajkbl->ijkl", pair.vector_conj, pair.vector, view
        ).reshape(left * right, left * right)
        rest_matrix /= prob
    conf._split_out(q, pair.projector, rest_matrix)
    return chosen


def apply_gate(conf: Configuration, gate, *, cluster_cap: int = DEFAULT_CLUSTER_CAP) -> Configuration:
    """Apply one gate, merging the target clusters; returns the mutated conf."""
    if gate.kind == "unitary" and not qmath.is_unitary(gate.matrix):
        raise ValueError("gate matrix is not unitary")
    if gate.kind == "measurement" and not qmath.is_hermitian(gate.matrix):
        raise ValueError("measurement gate matrix is not hermitian")
    _apply_gate_inner(conf, gate, cluster_cap, None)
    return conf


def apply_collapse(
    conf: Configuration, q: int, fault: FaultSpec, rng: np.random.Generator
) -> Configuration:
    """Collapse qubit q in the fault basis; returns the mutated conf."""
    if not isinstance(fault, FaultSpec):
        raise TypeError("the cluster simulator handles collapse faults only")
    _collapse_inner(conf, q, _observable_pairs(fault.observable), rng)
    return conf


# ---------------------------------------------------------------------------
# full trials


@dataclass
class CostStats:
    """Per-step size accounting of one trial.

    Index t covers time steps 0..T.  ``k[t]`` counts qubits in clusters of
    size >= 2 after the step completed, ``k_star[t]`` the same right after
    the step's gates, ``max_cluster[t]`` the step's peak cluster size and
    ``entries[t]`` the cumulative number of matrix entries written (each
    recorded configuration contributes 4^size per cluster).
    """

    k: np.ndarray
    k_star: np.ndarray
    max_cluster: np.ndarray
    entries: np.ndarray
    per_qubit: np.ndarray | None = None

    @property
    def entries_written(self) -> int:
        return int(self.entries[-1])

    @property
    def peak_cluster(self) -> int:
        return int(self.max_cluster.max()) if len(self.max_cluster) else 0


@dataclass
class TrialResult:
    output: str
    stats: CostStats | None
    fault_path: FaultPath


class TrialRecorder:
    """Hooks for observing a trial; default implementations do nothing."""

    def after_gates(self, t: int, conf: Configuration) -> None:
        pass

    def after_step(self, t: int, conf: Configuration) -> None:
        pass

    def on_collapse(self, t: int, q: int, outcome_index: int) -> None:
        pass


def _scan_sizes(conf: Configuration) -> tuple[int, int, int]:
    """(non-individual qubit count, max size, total entries) of a configuration."""
    k = 0
    biggest = 0
    entries = 0
    for c in conf._clusters.values():
        s = len(c.qubits)
        if s >= 2:
            k += s
        if s > biggest:
            biggest = s
        entries += _POW4[s]
    return k, biggest, entries


def run_trial(
    medium: Medium,
    fault: FaultSpec,
    input_bits: str,
    rng: np.random.Generator,
    *,
    fault_path: FaultPath | None = None,
    cluster_cap: int = DEFAULT_CLUSTER_CAP,
    collect_stats: bool = True,
    record_per_qubit: bool = False,
    recorder: TrialRecorder | None = None,
    ops: _SimOps | None = None,
) -> TrialResult:
    """Simulate one run of the medium and measure the result qubits.

    The trial samples a fault path (unless one is injected), then replays
    the circuit step by step: births, gates, collapses at the path's
    events, deaths.  Randomness comes only from the passed generator.
    """
    medium.require_valid()
    if len(input_bits) != medium.num_qubits:
        raise ValueError(
            f"input string length {len(input_bits)} does not match {medium.num_qubits} qubits"
        )
    if any(b not in "01" for b in input_bits):
        raise ValueError(f"input string {input_bits!r} must be over 0/1")
    if ops is None:
        ops = _SimOps(medium, fault)
    faults_at: dict[int, list[int]] = {}
    if fault_path is None:
        # same draw layout as medium.sample_fault_path: one uniform per site
        hits: list[tuple[int, int]] = []
        if ops.sites:
            mask = rng.random(len(ops.sites)) < medium.eta
            hits = [s for s, h in zip(ops.sites, mask) if h]
        sigma = FaultPath(frozenset(hits))
        for qq, tt in hits:  # sites are (q, t)-ordered, so qubits ascend per step
            faults_at.setdefault(tt, []).append(qq)
    else:
        sigma = fault_path
        faults_at = sigma.by_time()

    conf = Configuration()
    k_list: list[int] = []
    k_star_list: list[int] = []
    max_list: list[int] = []
    entries_list: list[int] = []
    per_qubit: list[list[int]] = []
    entries = 0

    def build_stats() -> CostStats:
        return CostStats(
            k=np.array(k_list, dtype=np.int64),
            k_star=np.array(k_star_list, dtype=np.int64),
            max_cluster=np.array(max_list, dtype=np.int64),
            entries=np.array(entries_list, dtype=np.int64),
            per_qubit=np.array(per_qubit, dtype=np.int64) if record_per_qubit else None,
        )

    try:
        for t in range(medium.duration + 1):
            for q in medium.births_by_time.get(t, ()):
                conf.add_singleton(q, _BASIS_MATS[input_bits[q] == "1"])
            for g in medium.gates_by_time.get(t, ()):
                _apply_gate_inner(conf, g, cluster_cap, ops)
            if recorder is not None:
                recorder.after_gates(t, conf)
            if collect_stats:
                k_star, peak, delta = _scan_sizes(conf)
                entries += delta
            for q in faults_at.get(t, ()):
                idx = _collapse_inner(conf, q, ops.fault_pairs, rng)
                if recorder is not None:
                    recorder.on_collapse(t, q, idx)
            deaths = medium.deaths_by_time.get(t, ())
            if deaths and t < medium.duration:
                for q in deaths:
                    conf._remove(q)
            if recorder is not None:
                recorder.after_step(t, conf)
            if collect_stats:
                k, post_peak, delta = _scan_sizes(conf)
                entries += delta
                k_list.append(k)
                k_star_list.append(k_star)
                max_list.append(max(peak, post_peak))
                entries_list.append(entries)
                if record_per_qubit:
                    sizes = [0] * medium.num_qubits
                    for c in conf._clusters.values():
                        for q in c.qubits:
                            sizes[q] = len(c.qubits)
                    per_qubit.append(sizes)
    except ClusterCapError as exc:
        if collect_stats:
            exc.partial_stats = build_stats()
        raise

    bits = []
    for q in sorted(medium.result_qubits):
        idx = _collapse_inner(conf, q, ops.output_pairs, rng)
        bits.append(str(int(ops.output_pairs[idx].value)))
    return TrialResult("".join(bits), build_stats() if collect_stats else None, sigma)


# ---------------------------------------------------------------------------
# sampling many trials


@dataclass
class AggregateStats:
    completed: int
    mean_entries: float
    max_cluster_hist: dict[int, int]


@dataclass
class SampleResult:
    """Empirical output distribution plus aggregated cost accounting."""

    distribution: dict[str, float]
    counts: dict[str, int]
    trials: int
    completed: int
    stats: AggregateStats | None
    per_trial: list[CostStats] | None
    cap_error: str | None

    @property
    def truncated(self) -> bool:
        return self.cap_error is not None


def tv_distance(p: dict[str, float], q: dict[str, float]) -> float:
    """Total variation distance between two distributions over strings."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


class _Substreams:
    """Per-trial generators derived from (seed, i) via Philox counter blocks.

    Trial i owns the counter block starting at i * 2^128, so streams are
    non-overlapping and reachable in O(1) regardless of evaluation order;
    one Generator object is reused to avoid per-trial construction cost.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self._bitgen = np.random.Philox(key=seed)
        self._template = self._bitgen.state
        self.generator = np.random.Generator(self._bitgen)

    def select(self, i: int) -> np.random.Generator:
        state = dict(self._template)
        inner = dict(state["state"])
        counter = np.zeros(4, dtype=np.uint64)
        counter[2] = i
        inner["counter"] = counter
        state["state"] = inner
        self._bitgen.state = state
        return self.generator


def _trial_chunk(args):
    (medium, fault, input_bits, seed, start, stop, cluster_cap, collect_stats, keep) = args
    ops = _SimOps(medium, fault)
    streams = _Substreams(seed)
    counts: dict[str, int] = {}
    entries_total = 0.0
    hist: dict[int, int] = {}
    per_trial: list[CostStats] = []
    cap_error = None
    completed = 0
    for i in range(start, stop):
        rng = streams.select(i)
        try:
            res = run_trial(
                medium,
                fault,
                input_bits,
                rng,
                cluster_cap=cluster_cap,
                collect_stats=collect_stats,
                ops=ops,
            )
        except ClusterCapError as exc:
            cap_error = f"trial {i}: {exc}"
            break
        counts[res.output] = counts.get(res.output, 0) + 1
        completed += 1
        if collect_stats:
            st = res.stats
            entries_total += st.entries_written
            peak = st.peak_cluster
            hist[peak] = hist.get(peak, 0) + 1
            if keep:
                per_trial.append(st)
    return counts, completed, entries_total, hist, per_trial, cap_error


def sample_output_distribution(
    medium: Medium,
    fault: FaultSpec,
    input_bits: str,
    trials: int,
    seed: int,
    *,
    cluster_cap: int = DEFAULT_CLUSTER_CAP,
    collect_stats: bool = True,
    keep_per_trial: bool = False,
    threads: int | None = None,
) -> SampleResult:
    """Empirical distribution over output strings from independent trials.

    Trial i draws all its randomness from a generator seeded by (seed, i),
    so results are reproducible and independent of worker scheduling.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    medium.require_valid()
    if threads is None:
        threads = os.cpu_count() or 1
    threads = max(1, min(threads, trials))

    if threads == 1:
        parts = [
            _trial_chunk(
                (medium, fault, input_bits, seed, 0, trials, cluster_cap, collect_stats, keep_per_trial)
            )
        ]
    else:
        bounds = np.linspace(0, trials, threads + 1, dtype=int)
        jobs = [
            (medium, fault, input_bits, seed, int(a), int(b), cluster_cap, collect_stats, keep_per_trial)
            for a, b in zip(bounds[:-1], bounds[1:])
            if b > a
        ]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_trial_chunk, jobs))

    counts: dict[str, int] = {}
    completed = 0
    entries_total = 0.0
    hist: dict[int, int] = {}
    per_trial: list[CostStats] = []
    cap_error = None
    for c_counts, c_done, c_entries, c_hist, c_per, c_err in parts:
        for k, v in c_counts.items():
            counts[k] = counts.get(k, 0) + v
        completed += c_done
        entries_total += c_entries
        for k, v in c_hist.items():
            hist[k] = hist.get(k, 0) + v
        per_trial.extend(c_per)
        if c_err and cap_error is None:
            cap_error = c_err
    distribution = (
        {k: v / completed for k, v in sorted(counts.items())} if completed else {}
    )
    stats = (
        AggregateStats(
            completed=completed,
            mean_entries=(entries_total / completed) if completed else 0.0,
            max_cluster_hist=dict(sorted(hist.items())),
        )
        if collect_stats
        else None
    )
    return SampleResult(
        distribution=distribution,
        counts=dict(sorted(counts.items())),
        trials=trials,
        completed=completed,
        stats=stats,
        per_trial=per_trial if keep_per_trial else None,
        cap_error=cap_error,
    )

"""Dense complex linear algebra for few-qubit density matrices.

Conventions used by the whole package:

* Basis indices are most-significant-first: the first qubit of a matrix's
  qubit sequence is the high bit of the basis index, so ``|01>`` of a
  two-qubit system is basis index 1.
* Operators are plain ``complex128`` numpy arrays; states are wrapped in
  :class:`DensityMatrix`.  All values are treated as immutable once built.
* Every target-index remapping goes through :func:`permutation_indices`,
  so there is exactly one place where the bit convention is encoded.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

ATOL = 1e-10
# Measurement outcomes with probability below this are dropped rather than
# renormalized; at double precision they contribute nothing observable and
# conditioning on them would divide by near-zero.
PROB_FLOOR = 1e-12
# Systems up to this many qubits are cheap enough that materializing an
# extended operator (two small matmuls) beats the strided tensordot path,
# whose fixed per-call overhead dominates at tiny dimensions.
SMALL_SYSTEM = 6

IDENTITY_2 = np.eye(2, dtype=np.complex128)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
    dtype=np.complex128,
)


def qubit_count(matrix: np.ndarray) -> int:
    """Number of qubits of a square matrix whose dimension is a power of two."""
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    dim = matrix.shape[0]
    n = dim.bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise ValueError(f"matrix dimension {dim} is not a power of two >= 2")
    return n


def is_hermitian(matrix: np.ndarray, atol: float = ATOL) -> bool:
    return bool(np.abs(matrix - matrix.conj().T).max() <= atol)


def is_unitary(matrix: np.ndarray, atol: float = ATOL) -> bool:
    eye = np.eye(matrix.shape[0])
    return bool(np.abs(matrix @ matrix.conj().T - eye).max() <= atol)


def kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two square matrices (lighter than np.kron)."""
    ra, ca = a.shape
    rb, cb = b.shape
    out = a[:, None, :, None] * b[None, :, None, :]
    return out.reshape(ra * rb, ca * cb)


def basis_state(bit: int) -> np.ndarray:
    """Single-qubit density matrix |bit><bit|."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    m = np.zeros((2, 2), dtype=np.complex128)
    m[bit, bit] = 1.0
    return m


class DensityMatrix:
    """Hermitian, trace-one ``2^n x 2^n`` complex matrix over n qubits.

    Hermiticity and unit trace are cheap and checked on construction;
    positive semidefiniteness needs an eigendecomposition and is only
    asserted by tests (see :func:`min_eigenvalue`).
    """

    __slots__ = ("matrix", "num_qubits")

    def __init__(self, matrix: np.ndarray, *, validate: bool = True):
        matrix = np.asarray(matrix, dtype=np.complex128)
        self.num_qubits = qubit_count(matrix)
        self.matrix = matrix
        if validate:
            if not is_hermitian(matrix):
                raise ValueError("density matrix is not hermitian")
            if abs(matrix.trace().real - 1.0) > ATOL or abs(matrix.trace().imag) > ATOL:
                raise ValueError(f"density matrix trace is {matrix.trace()}, not 1")

    def trace(self) -> float:
        return float(self.matrix.trace().real)

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue; used by tests to check positivity."""
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def allclose(self, other: "DensityMatrix | np.ndarray", atol: float = ATOL) -> bool:
        other_m = other.matrix if isinstance(other, DensityMatrix) else other
        return bool(np.abs(self.matrix - other_m).max() <= atol)

    def __repr__(self) -> str:
        return f"DensityMatrix(num_qubits={self.num_qubits})"


@lru_cache(maxsize=None)
def permutation_indices(perm: tuple[int, ...]) -> np.ndarray:
    """Basis-index map for reordering a qubit sequence.

    ``perm[j]`` is the old position of the qubit that lands at new position
    ``j``.  For a matrix ``m`` over the old order, ``m[ix, :][:, ix]`` with
    ``ix = permutation_indices(perm)`` is the matrix over the new order.
    """
    m = len(perm)
    if sorted(perm) != list(range(m)):
        raise ValueError(f"{perm!r} is not a permutation of 0..{m - 1}")
    idx = np.arange(1 << m)
    old = np.zeros(1 << m, dtype=np.intp)
    for j, pj in enumerate(perm):
        old |= ((idx >> (m - 1 - j)) & 1) << (m - 1 - pj)
    old.setflags(write=False)
    return old


def permute_qubits(matrix: np.ndarray, order: tuple[int, ...]) -> np.ndarray:
    """Reorder a matrix's qubit sequence; ``order[j]`` = old position of new qubit j."""
    ix = permutation_indices(tuple(order))
    return matrix[ix[:, None], ix[None, :]]


def extend_operator(op: np.ndarray, positions: tuple[int, ...], num_qubits: int) -> np.ndarray:
    """Materialize ``op`` acting on the given positions of a larger system.

    Only sensible for small systems (the result has ``4^num_qubits``
    entries); larger systems should go through :func:`conjugate_apply`.
    """
    k = len(positions)
    if op.shape != (1 << k, 1 << k):
        raise ValueError(f"operator shape {op.shape} does not match {k} positions")
    rest = [p for p in range(num_qubits) if p not in positions]
    big = kron2(op, np.eye(1 << len(rest), dtype=np.complex128)) if rest else op
    seq = list(positions) + rest  # current qubit order of `big`
    perm = tuple(seq.index(j) for j in range(num_qubits))
    if perm == tuple(range(num_qubits)):
        return big
    return permute_qubits(big, perm)


def conjugate_apply(
    matrix: np.ndarray, op: np.ndarray, positions: tuple[int, ...], num_qubits: int
) -> np.ndarray:
    """Compute ``O~ @ matrix @ O~†`` where ``O~`` extends ``op`` by identities.

    Works on the strided tensor view of ``matrix``, so the extended operator
    is never materialized; cost is O(4^n * 2^k) regardless of positions.
    """
    n, k = num_qubits, len(positions)
    t = matrix.reshape((2,) * (2 * n))
    op_t = op.reshape((2,) * (2 * k))
    row_axes = list(positions)
    col_axes = [n + p for p in positions]
    t = np.tensordot(op_t, t, axes=(list(range(k, 2 * k)), row_axes))
    t = np.moveaxis(t, range(k), row_axes)
    t = np.tensordot(op_t.conj(), t, axes=(list(range(k, 2 * k)), col_axes))
    t = np.moveaxis(t, range(k), col_axes)
    return t.reshape(1 << n, 1 << n)


def reduce_matrix(matrix: np.ndarray, keep: tuple[int, ...], num_qubits: int) -> np.ndarray:
    """Partial trace keeping the given positions, in the order given."""
    n = num_qubits
    traced = [p for p in range(n) if p not in keep]
    if not traced:
        return permute_qubits(matrix, tuple(keep)) if tuple(keep) != tuple(range(n)) else matrix
    kd = 1 << len(keep)
    td = 1 << len(traced)
    axes = list(keep) + traced
    t = matrix.reshape((2,) * (2 * n))
    t = t.transpose(axes + [n + a for a in axes]).reshape(kd, td, kd, td)
    return np.einsum("ikjk->ij", t)


def _check_targets(targets: tuple[int, ...], num_qubits: int) -> None:
    if len(set(targets)) != len(targets):
        raise ValueError(f"targets {targets!r} are not distinct")
    if any(t < 0 or t >= num_qubits for t in targets):
        raise ValueError(f"targets {targets!r} out of range for {num_qubits} qubits")


def tensor(a: DensityMatrix, b: DensityMatrix, *, max_qubits: int | None = None) -> DensityMatrix:
    """Tensor product; a's qubits come first in the combined order."""
    n = a.num_qubits + b.num_qubits
    if max_qubits is not None and n > max_qubits:
        raise ValueError(f"tensor product of {n} qubits exceeds the cap of {max_qubits}")
    return DensityMatrix(kron2(a.matrix, b.matrix), validate=False)


def apply_unitary(rho: DensityMatrix, u: np.ndarray, targets: tuple[int, ...]) -> DensityMatrix:
    """Conjugate ``rho`` by ``u`` extended with identities off the targets."""
    u = np.asarray(u, dtype=np.complex128)
    targets = tuple(targets)
    _check_targets(targets, rho.num_qubits)
    if u.shape != (1 << len(targets), 1 << len(targets)):
        raise ValueError(f"unitary shape {u.shape} does not match {len(targets)} targets")
    if not is_unitary(u):
        raise ValueError("matrix is not unitary")
    n = rho.num_qubits
    if n <= SMALL_SYSTEM:
        ext = extend_operator(u, targets, n)
        out = ext @ rho.matrix @ ext.conj().T
    else:
        out = conjugate_apply(rho.matrix, u, targets, n)
    return DensityMatrix(out, validate=False)


def reduce(rho: DensityMatrix, keep: tuple[int, ...]) -> DensityMatrix:
    """Reduced density matrix of the kept qubits (partial trace of the rest)."""
    keep = tuple(keep)
    if not keep:
        raise ValueError("keep set must be non-empty")
    _check_targets(keep, rho.num_qubits)
    return DensityMatrix(reduce_matrix(rho.matrix, keep, rho.num_qubits), validate=False)


class Observable:
    """Hermitian operator with its eigenvalue/projector resolution.

    ``eigenpairs`` holds ``(eigenvalue, projector)`` with pairwise distinct
    eigenvalues; a degenerate eigenspace contributes a single projector of
    rank > 1.  Projectors must be orthogonal, idempotent and complete.
    """

    __slots__ = ("matrix", "num_qubits", "eigenpairs")

    def __init__(
        self,
        matrix: np.ndarray,
        eigenpairs: list[tuple[float, np.ndarray]],
        *,
        validate: bool = True,
    ):
        self.matrix = np.asarray(matrix, dtype=np.complex128)
        self.num_qubits = qubit_count(self.matrix)
        self.eigenpairs = tuple((float(val), np.asarray(p, dtype=np.complex128)) for val, p in eigenpairs)
        if validate:
            self._validate()

    def _validate(self) -> None:
        if not is_hermitian(self.matrix):
            raise ValueError("observable matrix is not hermitian")
        vals = [val for val, _ in self.eigenpairs]
        if len(set(vals)) != len(vals):
            raise ValueError("eigenvalues are not pairwise distinct")
        dim = self.matrix.shape[0]
        total = np.zeros((dim, dim), dtype=np.complex128)
        recon = np.zeros((dim, dim), dtype=np.complex128)
        for val, p in self.eigenpairs:
            if p.shape != (dim, dim):
                raise ValueError("projector shape mismatch")
            if np.abs(p @ p - p).max() > ATOL or not is_hermitian(p):
                raise ValueError("projector is not an orthogonal projector")
            total += p
            recon += val * p
        if np.abs(total - np.eye(dim)).max() > ATOL:
            raise ValueError("projectors do not sum to identity")
        if np.abs(recon - self.matrix).max() > 1e-8:
            raise ValueError("eigenpairs do not reconstruct the observable")

    @classmethod
    def from_hermitian(cls, matrix: np.ndarray, *, degeneracy_tol: float = 1e-8) -> "Observable":
        """Build an Observable from any hermitian matrix via numpy's eigensolver.

        Eigenvalues closer than ``degeneracy_tol`` are merged into one
        projector so the eigenvalue list stays pairwise distinct.
        """
        matrix = np.asarray(matrix, dtype=np.complex128)
        if not is_hermitian(matrix):
            raise ValueError("matrix is not hermitian")
        vals, vecs = np.linalg.eigh(matrix)
        pairs: list[tuple[float, np.ndarray]] = []
        i = 0
        while i < len(vals):
            j = i
            while j + 1 < len(vals) and vals[j + 1] - vals[i] <= degeneracy_tol:
                j += 1
            block = vecs[:, i : j + 1]
            pairs.append((float(np.mean(vals[i : j + 1])), block @ block.conj().T))
            i = j + 1
        return cls(matrix, pairs)

    def __repr__(self) -> str:
        vals = ", ".join(f"{v:g}" for v, _ in self.eigenpairs)
        return f"Observable(num_qubits={self.num_qubits}, eigenvalues=[{vals}])"


def eigendecompose_1q(h: np.ndarray) -> Observable:
    """Closed-form eigendecomposition of a hermitian 2x2 matrix.

    Degenerate input (h = c*I within tolerance) yields a single eigenvalue
    with the identity projector.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {h.shape}")
    if not is_hermitian(h):
        raise ValueError("matrix is not hermitian")
    a = h[0, 0].real
    d = h[1, 1].real
    b = h[0, 1]
    if abs(b) <= ATOL and abs(a - d) <= ATOL:
        return Observable(h, [((a + d) / 2.0, IDENTITY_2.copy())])
    half_gap = np.hypot((a - d) / 2.0, abs(b))
    mean = (a + d) / 2.0
    pairs = []
    for lam in (mean + half_gap, mean - half_gap):
        v1 = np.array([b, lam - a], dtype=np.complex128)
        v2 = np.array([lam - d, np.conj(b)], dtype=np.complex128)
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        v /= np.linalg.norm(v)
        pairs.append((lam, np.outer(v, v.conj())))
    return Observable(h, pairs)


def _extended_projectors(
    obs: Observable, targets: tuple[int, ...], num_qubits: int
) -> list[tuple[float, np.ndarray | None]]:
    """Projector extensions for measuring ``obs`` on targets; None = use axes path."""
    if num_qubits <= SMALL_SYSTEM:
        return [(val, extend_operator(p, targets, num_qubits)) for val, p in obs.eigenpairs]
    return [(val, None) for val, _ in obs.eigenpairs]


def measure_conditioned(
    rho: DensityMatrix, obs: Observable, targets: tuple[int, ...]
) -> list[tuple[float, float, DensityMatrix]]:
    """All measurement outcomes as ``(eigenvalue, probability, conditioned state)``.

    Outcomes with probability below :data:`PROB_FLOOR` are omitted.
    """
    targets = tuple(targets)
    _check_targets(targets, rho.num_qubits)
    if obs.num_qubits != len(targets):
        raise ValueError("observable arity does not match number of targets")
    n = rho.num_qubits
    out = []
    for (val, p1q), (_, ext) in zip(obs.eigenpairs, _extended_projectors(obs, targets, n)):
        if ext is not None:
            cond = ext @ rho.matrix @ ext
        else:
            cond = conjugate_apply(rho.matrix, p1q, targets, n)
        prob = float(cond.trace().real)
        if prob < PROB_FLOOR:
            continue
        out.append((val, prob, DensityMatrix(cond / prob, validate=False)))
    return out


def measure_unconditioned(
    rho: DensityMatrix, obs: Observable, targets: tuple[int, ...]
) -> DensityMatrix:
    """Outcome-averaged measurement: zeroes coherences between eigenspaces."""
    targets = tuple(targets)
    _check_targets(targets, rho.num_qubits)
    if obs.num_qubits != len(targets):
        raise ValueError("observable arity does not match number of targets")
    n = rho.num_qubits
    total = np.zeros_like(rho.matrix)
    for (val, p1q), (_, ext) in zip(obs.eigenpairs, _extended_projectors(obs, targets, n)):
        if ext is not None:
            total += ext @ rho.matrix @ ext
        else:
            total += conjugate_apply(rho.matrix, p1q, targets, n)
    return DensityMatrix(total, validate=False)

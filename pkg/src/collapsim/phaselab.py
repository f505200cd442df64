"""Matrix-free cluster dynamics: merge by matchings, shatter by decoherence.

Tracks only the partition of sites into clusters, not any quantum state,
which is enough to study how cluster sizes scale with the decoherence
rate: below a critical rate a giant cluster (linear in n) survives, above
it all clusters stay logarithmic.  Also hosts the branching-process tail
experiment and the small mean-field formulas it is checked against.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

SQRT2 = float(np.sqrt(2.0))


class ClusterPartition:
    """Partition of n sites into clusters, optimized for merge + shatter.

    Cluster membership is a label array; ``find`` returns the canonical
    label of a site's cluster.  Matching steps union clusters through a
    connected-components pass, decoherence hands separated sites fresh
    labels, which is the split operation a classic union-find lacks.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("need at least one site")
        self.n = n
        self.labels = np.arange(n, dtype=np.int64)
        self._next = n
        self._dirty = False  # True when label values may have gaps
        self.t = 0

    def _compress(self) -> None:
        """Relabel clusters to 0..k-1 (presence mask + cumulative sum)."""
        if not self._dirty:
            return
        present = np.zeros(int(self.labels.max()) + 1, dtype=np.int64)
        present[self.labels] = 1
        new_ids = np.cumsum(present) - 1
        self.labels = new_ids[self.labels]
        self._next = int(self.labels.max()) + 1
        self._dirty = False

    def find(self, site: int) -> int:
        """Canonical label of the site's cluster (idempotent between steps)."""
        return int(self.labels[site])

    def merge_sites(self, sites) -> None:
        """Force the given sites into one cluster (test/setup helper)."""
        sites = np.asarray(sites, dtype=np.int64)
        if sites.size:
            self.union_pairs(np.repeat(sites[0], sites.size - 1), sites[1:])

    def union_pairs(self, a: np.ndarray, b: np.ndarray) -> None:
        """Join the clusters of each pair (a[i], b[i])."""
        if len(a) == 0:
            return
        self._compress()
        m = self._next
        la = self.labels[a]
        lb = self.labels[b]
        graph = sp.coo_matrix(
            (np.ones(len(la), dtype=np.int8), (la, lb)), shape=(m, m)
        )
        ncomp, comp = connected_components(graph, directed=False)
        self.labels = comp[self.labels]
        self._next = ncomp
        self._dirty = False  # component ids are 0..ncomp-1, all present

    def separate(self, mask: np.ndarray) -> None:
        """Make every masked site a singleton cluster."""
        k = int(mask.sum())
        if k:
            self.labels[mask] = self._next + np.arange(k, dtype=np.int64)
            self._next += k
            self._dirty = True

    def cluster_sizes(self) -> np.ndarray:
        """Sizes of all clusters (each >= 1, summing to n)."""
        self._compress()
        return np.bincount(self.labels, minlength=self._next)

    def max_cluster_size(self) -> int:
        return int(self.cluster_sizes().max())

    def num_clusters(self) -> int:
        self._compress()
        return self._next


def matching_step_random(p: ClusterPartition, rng: np.random.Generator) -> None:
    """Union clusters along a uniformly random perfect matching of sites.

    For odd n one uniformly random site stays unmatched.
    """
    if p.n < 2:
        return
    perm = rng.permutation(p.n)
    half = p.n // 2
    p.union_pairs(perm[: 2 * half : 2], perm[1 : 2 * half : 2])


def matching_step_1d(p: ClusterPartition, parity: str) -> None:
    """Union neighbor pairs on a line: (0,1),(2,3),.. or (1,2),(3,4),.."""
    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    start = 0 if parity == "even" else 1
    a = np.arange(start, p.n - 1, 2, dtype=np.int64)
    p.union_pairs(a, a + 1)


def decohere_step(p: ClusterPartition, eta: float, rng: np.random.Generator) -> None:
    """Separate each site from its cluster independently with probability eta."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta {eta} outside [0, 1]")
    p.separate(rng.random(p.n) < eta)


@dataclass
class DynamicsTrajectory:
    """Per-step records of one dynamics run."""

    t: np.ndarray
    max_cluster: np.ndarray
    num_clusters: np.ndarray

    def final_max_fraction(self, n: int) -> float:
        return float(self.max_cluster[-1]) / n


def run_dynamics(
    n: int,
    steps: int,
    eta: float,
    topology: str,
    rng: np.random.Generator,
    *,
    matching_period: int = 1,
) -> DynamicsTrajectory:
    """Alternate matching and decoherence steps, recording cluster stats.

    ``matching_period`` > 1 skips the matching on all but every period-th
    step, which models circuits whose entangling gates are sparse in time.
    """
    if n < 2 or steps < 1:
        raise ValueError("need n >= 2 and steps >= 1")
    if topology not in ("random", "1d"):
        raise ValueError(f"topology must be 'random' or '1d', got {topology!r}")
    part = ClusterPartition(n)
    ts = np.arange(steps)
    maxes = np.zeros(steps, dtype=np.int64)
    counts = np.zeros(steps, dtype=np.int64)
    matchings = 0
    for s in range(steps):
        if s % matching_period == 0:
            if topology == "random":
                matching_step_random(part, rng)
            else:
                matching_step_1d(part, "even" if matchings % 2 == 0 else "odd")
            matchings += 1
        decohere_step(part, eta, rng)
        part.t += 1
        sizes = part.cluster_sizes()
        maxes[s] = sizes.max()
        counts[s] = len(sizes)
    return DynamicsTrajectory(ts, maxes, counts)


@dataclass
class PhaseScanReport:
    """Raw trajectories and the estimated critical decoherence rate.

    ``eta_critical`` is the first grid rate whose median final max-cluster
    fraction drops below ``threshold``; None when no grid point is
    subcritical.  Raw per-trial trajectories are kept so alternative
    criteria can be applied without re-running.
    """

    topology: str
    n: int
    steps: int
    etas: np.ndarray
    trials_per_eta: int
    seed: int
    threshold: float
    matching_period: int
    # shape (len(etas), trials, steps)
    max_cluster: np.ndarray
    num_clusters: np.ndarray
    eta_critical: float | None = field(init=False)
    median_fraction: np.ndarray = field(init=False)
    phases: list[str] = field(init=False)

    def __post_init__(self):
        finals = self.max_cluster[:, :, -1] / self.n
        self.median_fraction = np.median(finals, axis=1)
        self.phases = [
            "subcritical" if frac < self.threshold else "supercritical"
            for frac in self.median_fraction
        ]
        self.eta_critical = None
        for eta, phase in zip(self.etas, self.phases):
            if phase == "subcritical":
                self.eta_critical = float(eta)
                break

    def grid_resolution(self) -> float:
        diffs = np.diff(self.etas)
        return float(diffs.min()) if len(diffs) else 0.0

    def csv_rows(self):
        """Rows (eta, trial, t, max_cluster, n_clusters) over the whole scan."""
        for ie, eta in enumerate(self.etas):
            for trial in range(self.trials_per_eta):
                for t in range(self.steps):
                    yield (
                        float(eta),
                        trial,
                        t,
                        int(self.max_cluster[ie, trial, t]),
                        int(self.num_clusters[ie, trial, t]),
                    )

    def summary_dict(self) -> dict:
        return {
            "topology": self.topology,
            "n": self.n,
            "steps": self.steps,
            "trials_per_eta": self.trials_per_eta,
            "seed": self.seed,
            "matching_period": self.matching_period,
            "criterion": (
                f"first grid eta with median final max-cluster fraction < {self.threshold}"
            ),
            "threshold": self.threshold,
            "eta_grid": [float(e) for e in self.etas],
            "median_final_fraction": [float(f) for f in self.median_fraction],
            "phases": self.phases,
            "eta_critical": self.eta_critical,
            "grid_resolution": self.grid_resolution(),
        }


def _scan_cell(args):
    n, steps, eta, topology, seed, ie, trial, matching_period = args
    rng = np.random.default_rng([seed, ie, trial])
    traj = run_dynamics(n, steps, eta, topology, rng, matching_period=matching_period)
    return ie, trial, traj.max_cluster, traj.num_clusters


def scan_transition(
    n: int,
    steps: int,
    eta_grid,
    trials_per_eta: int,
    topology: str,
    seed: int,
    *,
    threshold: float = 0.01,
    matching_period: int = 1,
    threads: int | None = None,
) -> PhaseScanReport:
    """Run the dynamics across a grid of decoherence rates and locate the transition."""
    etas = np.asarray(eta_grid, dtype=float)
    if len(etas) < 1 or np.any(np.diff(etas) <= 0):
        raise ValueError("eta grid must be strictly increasing")
    if etas[0] < 0.0 or etas[-1] > 1.0:
        raise ValueError("eta grid must lie within [0, 1]")
    if trials_per_eta < 1:
        raise ValueError("need at least one trial per eta")
    jobs = [
        (n, steps, float(eta), topology, seed, ie, trial, matching_period)
        for ie, eta in enumerate(etas)
        for trial in range(trials_per_eta)
    ]
    if threads is None:
        threads = os.cpu_count() or 1
    threads = max(1, min(threads, len(jobs)))
    if threads == 1:
        results = [_scan_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_scan_cell, jobs, chunksize=8))
    max_cluster = np.zeros((len(etas), trials_per_eta, steps), dtype=np.int64)
    num_clusters = np.zeros_like(max_cluster)
    for ie, trial, maxes, counts in results:
        max_cluster[ie, trial] = maxes
        num_clusters[ie, trial] = counts
    return PhaseScanReport(
        topology=topology,
        n=n,
        steps=steps,
        etas=etas,
        trials_per_eta=trials_per_eta,
        seed=seed,
        threshold=threshold,
        matching_period=matching_period,
        max_cluster=max_cluster,
        num_clusters=num_clusters,
    )


# ---------------------------------------------------------------------------
# mean-field formulas for one matching + survival step


def growth_factor(alpha: float, survival: float) -> float:
    """One-step multiplier of a cluster holding an alpha fraction of sites.

    Matching against a singleton environment scales the cluster by (2 -
    alpha); keeping each member with probability ``survival`` scales it by
    that factor again.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    return (2.0 - alpha) * survival


def mean_field_fixed_point(survival: float) -> float:
    """Stationary cluster fraction of the one-step growth map: 2 - 1/survival."""
    if not 0.5 < survival <= 1.0:
        raise ValueError(
            f"survival {survival} must be in (0.5, 1]; below that the fixed point is not positive"
        )
    return 2.0 - 1.0 / survival


def effective_rate(eta: float, nu: int) -> float:
    """Decoherence rate accumulated over nu steps: 1 - (1 - eta)^nu."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta {eta} outside [0, 1]")
    if nu < 1:
        raise ValueError(f"nu must be >= 1, got {nu}")
    return 1.0 - (1.0 - eta) ** nu


# ---------------------------------------------------------------------------
# branching-process tail experiment


@dataclass
class BranchingConfig:
    """Subcritical branching process with offspring tail bounded by a^-j.

    The default offspring law is geometric with ratio 1/a, truncated far in
    the tail and renormalized (which preserves the bound for a > 1).
    """

    a: float
    pmf: np.ndarray | None = None
    tree_size_cap: int = 100_000

    def __post_init__(self):
        if self.a <= 8.0:
            raise ValueError(f"tail base a must exceed 8, got {self.a}")
        if self.pmf is None:
            j = np.arange(64)
            pmf = (1.0 - 1.0 / self.a) * (1.0 / self.a) ** j
            self.pmf = pmf / pmf.sum()
        else:
            self.pmf = np.asarray(self.pmf, dtype=float)
        if np.any(self.pmf < 0) or abs(self.pmf.sum() - 1.0) > 1e-9:
            raise ValueError("offspring pmf must be non-negative and sum to one")
        bound = (1.0 / self.a) ** np.arange(len(self.pmf))
        if np.any(self.pmf > bound + 1e-12):
            raise ValueError("offspring pmf violates Pr(z=j) <= a^-j")


def _tree_sizes(cfg: BranchingConfig, count: int, rng: np.random.Generator):
    """Total sizes of independent trees, generation by generation.

    Returns (sizes, overflow) where overflow marks trees that exceeded the
    cap and were abandoned (exponentially rare for subcritical offspring).
    """
    cdf = np.cumsum(cfg.pmf)
    sizes = np.ones(count, dtype=np.int64)
    gen = np.ones(count, dtype=np.int64)
    overflow = np.zeros(count, dtype=bool)
    active = np.arange(count)
    while active.size:
        g = gen[active]
        ends = np.cumsum(g)
        draws = np.searchsorted(cdf, rng.random(int(ends[-1])), side="right")
        offspring = np.add.reduceat(draws, np.r_[0, ends[:-1]])
        sizes[active] += offspring
        gen[active] = offspring
        over = sizes[active] > cfg.tree_size_cap
        overflow[active[over]] = True
        active = active[(offspring > 0) & ~over]
    return sizes, overflow


@dataclass
class TailRow:
    i: int
    count: int
    empirical: float
    bound: float
    violated: bool


@dataclass
class BranchingReport:
    samples: int
    a: float
    rows: list[TailRow]
    overflow_pairs: int

    @property
    def violations(self) -> list[TailRow]:
        return [r for r in self.rows if r.violated]


def tail_bound(a: float, i: int) -> float:
    """Closed-form bound on Pr(L = i) for the combined size of two trees."""
    return a * (SQRT2 - 1.0) ** 2 * (8.0 / a) ** (i / 2.0)


def branching_tail_check(
    cfg: BranchingConfig, samples: int, rng: np.random.Generator
) -> BranchingReport:
    """Monte Carlo check of the two-tree size tail bound.

    Draws pairs of independent trees, forms L = 2*Ta + 2*Tb - 2 and flags
    any value with >= 100 observations whose empirical mass exceeds the
    bound by more than three binomial standard errors.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    sizes, overflow = _tree_sizes(cfg, 2 * samples, rng)
    ta = sizes[0::2]
    tb = sizes[1::2]
    bad = overflow[0::2] | overflow[1::2]
    l_values = (2 * ta + 2 * tb - 2)[~bad]
    counts = np.bincount(l_values)
    rows = []
    effective = int(l_values.size)
    for i in np.nonzero(counts)[0]:
        c = int(counts[i])
        emp = c / effective
        bound = tail_bound(cfg.a, int(i))
        se = float(np.sqrt(emp * (1.0 - emp) / effective))
        rows.append(
            TailRow(
                i=int(i),
                count=c,
                empirical=emp,
                bound=bound,
                violated=(c >= 100 and emp > bound + 3.0 * se),
            )
        )
    return BranchingReport(
        samples=samples, a=cfg.a, rows=rows, overflow_pairs=int(bad.sum())
    )

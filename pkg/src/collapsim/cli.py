"""Command-line driver: simulate, oracle, compare, phase-scan, branching-check.

Exit codes: 0 success, 1 usage or input error, 2 resource exhaustion
(cluster cap hit; partial stats are still written), 3 a requested check
failed (tolerance exceeded or bound violated).  All randomness flows from
--seed; rerunning a command with the same arguments reproduces the data
files byte for byte (the manifest's duration field is the one exception).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, clustersim, oracle, phaselab
from .clustersim import ClusterCapError
from .medium import FaultSpec, InvalidMediumError, Medium, fault_sites, load_circuit, matrix_from_json
from .oracle import DenseLimitError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RESOURCE = 2
EXIT_CHECK_FAILED = 3

EXIT_CODE_HELP = (
    "exit codes: 0 success; 1 usage/input error; 2 resource exhaustion "
    "(cluster cap, partial stats written); 3 check failed (tolerance or bound)"
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors by default; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(ValueError):
    pass


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_manifest(out_dir: Path, command: str, params: dict, seed, outputs, started: float) -> None:
    manifest = {
        "command": command,
        "parameters": params,
        "seed": seed,
        "version": __version__,
        "duration_seconds": round(time.monotonic() - started, 6),
        "outputs": sorted(outputs),
    }
    _write_json(out_dir / "manifest.json", manifest)


def _load_inputs(args) -> tuple[Medium, FaultSpec, str]:
    path = Path(args.circuit)
    if not path.exists():
        raise UsageError(f"circuit file not found: {path}")
    medium, file_fault = load_circuit(path)
    if getattr(args, "eta_override", None) is not None:
        if not 0.0 <= args.eta_override <= 1.0:
            raise UsageError(f"--eta-override {args.eta_override} outside [0, 1]")
        medium = medium.with_eta(args.eta_override)
    medium.require_valid()
    fault = _parse_fault(args.fault, file_fault)
    input_bits = args.input if args.input is not None else "0" * medium.num_qubits
    if len(input_bits) != medium.num_qubits or any(b not in "01" for b in input_bits):
        raise UsageError(
            f"--input must be a {medium.num_qubits}-bit string over 0/1, got {input_bits!r}"
        )
    return medium, fault, input_bits


def _parse_fault(flag: str | None, file_fault: FaultSpec | None) -> FaultSpec:
    if flag is None:
        return file_fault if file_fault is not None else FaultSpec.z_basis()
    if flag.upper() == "Z":
        return FaultSpec.z_basis()
    if flag.upper() == "X":
        return FaultSpec.x_basis()
    path = Path(flag)
    if not path.exists():
        raise UsageError(f"fault must be Z, X or an existing matrix file; {flag!r} not found")
    data = json.loads(path.read_text(encoding="utf-8"))
    matrix = data["observable"] if isinstance(data, dict) and "observable" in data else data
    return FaultSpec.from_matrix(matrix_from_json(matrix))


def _distribution_payload(result: clustersim.SampleResult, input_bits: str) -> dict:
    payload = {
        "input": input_bits,
        "trials": result.trials,
        "completed": result.completed,
        "distribution": result.distribution,
        "counts": result.counts,
        "cap_error": result.cap_error,
    }
    if result.stats is not None:
        payload["mean_entries"] = result.stats.mean_entries
        payload["max_cluster_histogram"] = {
            str(k): v for k, v in result.stats.max_cluster_hist.items()
        }
    return payload


def cmd_simulate(args) -> int:
    started = time.monotonic()
    medium, fault, input_bits = _load_inputs(args)
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = clustersim.sample_output_distribution(
        medium,
        fault,
        input_bits,
        args.trials,
        args.seed,
        cluster_cap=args.cluster_cap,
        keep_per_trial=True,
        threads=args.threads,
    )
    _write_json(out_dir / "distribution.json", _distribution_payload(result, input_bits))
    with (out_dir / "cost.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "t", "K", "K_star", "max_cluster", "entries_written"])
        for trial, st in enumerate(result.per_trial):
            for t in range(len(st.k)):
                writer.writerow(
                    [trial, t, int(st.k[t]), int(st.k_star[t]), int(st.max_cluster[t]), int(st.entries[t])]
                )
    _write_manifest(
        out_dir,
        "simulate",
        {
            "circuit": str(args.circuit),
            "input": input_bits,
            "trials": args.trials,
            "fault": args.fault,
            "eta_override": args.eta_override,
            "cluster_cap": args.cluster_cap,
            "threads": args.threads,
        },
        args.seed,
        ["distribution.json", "cost.csv"],
        started,
    )
    if result.cap_error is not None:
        print(f"cluster cap exhausted: {result.cap_error}", file=sys.stderr)
        print(f"partial stats for {result.completed} trials written to {out_dir}")
        return EXIT_RESOURCE
    print(f"{result.completed} trials -> {out_dir / 'distribution.json'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    started = time.monotonic()
    medium, fault, input_bits = _load_inputs(args)
    try:
        if args.mode == "exact":
            dist = oracle.output_distribution_exact(medium, fault, input_bits, dense_cap=args.dense_cap)
        else:
            v = fault_sites(medium)
            if v > args.pathsum_cap:
                raise UsageError(f"{v} fault sites exceed the path-sum cap of {args.pathsum_cap}")
            rho = oracle.path_sum_exact(
                medium, fault, input_bits, dense_cap=args.dense_cap, site_cap=args.pathsum_cap
            )
            dist = _distribution_from_state(medium, rho)
    except DenseLimitError as exc:
        raise UsageError(f"dense cap exceeded: {exc}") from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        out_dir / "distribution.json",
        {"input": input_bits, "mode": args.mode, "distribution": dist},
    )
    _write_manifest(
        out_dir,
        "oracle",
        {
            "circuit": str(args.circuit),
            "input": input_bits,
            "mode": args.mode,
            "fault": args.fault,
            "eta_override": args.eta_override,
            "dense_cap": args.dense_cap,
        },
        None,
        ["distribution.json"],
        started,
    )
    print(f"exact distribution -> {out_dir / 'distribution.json'}")
    return EXIT_OK


def _distribution_from_state(medium: Medium, rho) -> dict[str, float]:
    survivors = tuple(
        q for q, (_, t2) in enumerate(medium.lifetimes) if t2 == medium.duration
    )
    result = tuple(sorted(medium.result_qubits))
    keep = tuple(survivors.index(q) for q in result)
    from . import qmath

    reduced = qmath.reduce_matrix(rho.matrix, keep, len(survivors))
    probs = reduced.diagonal().real
    r = len(result)
    return {format(i, f"0{r}b"): float(p) for i, p in enumerate(probs) if p > 1e-15}


def cmd_compare(args) -> int:
    medium, fault, input_bits = _load_inputs(args)
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    try:
        exact = oracle.output_distribution_exact(medium, fault, input_bits, dense_cap=args.dense_cap)
    except DenseLimitError as exc:
        raise UsageError(f"dense cap exceeded: {exc}") from exc
    result = clustersim.sample_output_distribution(
        medium,
        fault,
        input_bits,
        args.trials,
        args.seed,
        cluster_cap=args.cluster_cap,
        collect_stats=False,
        threads=args.threads,
    )
    if result.cap_error is not None:
        print(f"cluster cap exhausted: {result.cap_error}", file=sys.stderr)
        return EXIT_RESOURCE
    tv = clustersim.tv_distance(result.distribution, exact)
    ok = tv <= args.tolerance
    print(
        json.dumps(
            {
                "tv_distance": tv,
                "tolerance": args.tolerance,
                "trials": args.trials,
                "ok": ok,
            },
            sort_keys=True,
        )
    )
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_phase_scan(args) -> int:
    started = time.monotonic()
    if args.eta_min > args.eta_max:
        raise UsageError(f"--eta-min {args.eta_min} exceeds --eta-max {args.eta_max}")
    if args.eta_step <= 0:
        raise UsageError("--eta-step must be positive")
    grid = np.round(np.arange(args.eta_min, args.eta_max + args.eta_step / 2, args.eta_step), 12)
    report = phaselab.scan_transition(
        args.n,
        args.steps,
        grid,
        args.trials,
        args.topology,
        args.seed,
        threshold=args.threshold,
        threads=args.threads,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "scan.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eta", "trial", "t", "max_cluster", "n_clusters"])
        writer.writerows(report.csv_rows())
    _write_json(out_dir / "summary.json", report.summary_dict())
    _write_manifest(
        out_dir,
        "phase-scan",
        {
            "topology": args.topology,
            "n": args.n,
            "steps": args.steps,
            "eta_min": args.eta_min,
            "eta_max": args.eta_max,
            "eta_step": args.eta_step,
            "trials": args.trials,
            "threshold": args.threshold,
            "threads": args.threads,
        },
        args.seed,
        ["scan.csv", "summary.json"],
        started,
    )
    if report.eta_critical is None:
        print("eta0 = not reached within the grid (all supercritical)")
    else:
        print(f"eta0 = {report.eta_critical:.4f}")
    return EXIT_OK


def cmd_branching_check(args) -> int:
    started = time.monotonic()
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    try:
        cfg = phaselab.BranchingConfig(a=args.a)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rng = np.random.default_rng(args.seed)
    report = phaselab.branching_tail_check(cfg, args.samples, rng)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "tail.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "count", "empirical", "bound", "violated"])
        for row in report.rows:
            writer.writerow([row.i, row.count, repr(row.empirical), repr(row.bound), row.violated])
    _write_json(
        out_dir / "summary.json",
        {
            "a": report.a,
            "samples": report.samples,
            "overflow_pairs": report.overflow_pairs,
            "violations": [r.i for r in report.violations],
        },
    )
    _write_manifest(
        out_dir,
        "branching-check",
        {"a": args.a, "samples": args.samples},
        args.seed,
        ["tail.csv", "summary.json"],
        started,
    )
    if report.violations:
        print(f"{len(report.violations)} tail values violate the bound", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"no violations in {len(report.rows)} tail values")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="collapsim", description=__doc__, epilog=EXIT_CODE_HELP)
    parser.add_argument("--version", action="version", version=f"collapsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_circuit_opts(p, with_seed=True):
        p.add_argument("circuit", help="circuit JSON file")
        p.add_argument("--input", default=None, help="input bit string (default: all zeros)")
        p.add_argument("--fault", default=None, help="Z, X, or a JSON observable file (default: circuit's fault, else Z)")
        p.add_argument("--eta-override", type=float, default=None, help="replace the circuit's decoherence rate")
        if with_seed:
            p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
            p.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
            p.add_argument("--cluster-cap", type=int, default=clustersim.DEFAULT_CLUSTER_CAP,
                           help="cluster size cap in qubits")

    p = sub.add_parser("simulate", help="Monte Carlo sampling of the output distribution")
    add_circuit_opts(p)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="exact dense output distribution")
    add_circuit_opts(p, with_seed=False)
    p.add_argument("--mode", choices=["exact", "pathsum"], default="exact")
    p.add_argument("--dense-cap", type=int, default=oracle.DENSE_QUBIT_CAP)
    p.add_argument("--pathsum-cap", type=int, default=20, help=argparse.SUPPRESS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="TV distance between sampled and exact distributions")
    add_circuit_opts(p)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--tolerance", type=float, required=True)
    p.add_argument("--dense-cap", type=int, default=oracle.DENSE_QUBIT_CAP)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("phase-scan", help="cluster-dynamics scan over decoherence rates")
    p.add_argument("--topology", choices=["random", "1d"], required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--eta-min", type=float, default=0.0)
    p.add_argument("--eta-max", type=float, default=1.0)
    p.add_argument("--eta-step", type=float, default=0.05)
    p.add_argument("--trials", type=int, default=20, help="trials per grid point")
    p.add_argument("--threshold", type=float, default=0.01,
                   help="giant-cluster fraction below which a rate counts as subcritical")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phase_scan)

    p = sub.add_parser("branching-check", help="Monte Carlo check of the two-tree size tail bound")
    p.add_argument("--a", type=float, required=True, help="offspring tail base (> 8)")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_branching_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, InvalidMediumError, ValueError) as exc:
        print(f"collapsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ClusterCapError as exc:
        print(f"collapsim {args.command}: cluster cap exhausted: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


def script_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    script_entry()

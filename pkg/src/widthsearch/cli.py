"""Command-line pipeline with reproducible, file-based inputs and outputs.

Every subcommand writes a single JSON document that embeds a run manifest
(subcommand, resolved flags, input digests, seed, tool version) sufficient to
replay the run byte for byte.  Exit codes: 0 success, 2 input or validation
problems, 3 computation failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import AowsRunConfig, run_aows
from .errors import ComputationError, InputError, WidthSearchError
from .greedy import greedy_trim
from .latency import (
    FitOptions,
    assemble,
    fit,
    fit_with_validation,
    flops_table,
    load_samples,
    load_table,
    plan_next,
    predict,
    predict_batch,
    record_visit,
    save_table,
    table_to_dict,
    zero_counts,
)
from .sim import load_scenario
from .smoothing import load_schedule, marginals_csv_rows
from .space import enumerate_configs, flops, load_space
from .stats import load_stats
from .viterbi import lagrangian_search

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3

# child-stream keys for fanning the CLI --seed out to the modules
SEED_STREAMS = {"device": 0, "loss": 1, "sampler": 2, "plan": 3, "split": 4}


def derive_seed(seed: int, stream: str) -> int:
    """Stable per-module child seed derived from the single CLI seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(SEED_STREAMS[stream],))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _digest(path: str | Path) -> str:
    h = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return f"sha256:{h}"


# output destinations do not affect results and would break byte-identical replay
_NON_SEMANTIC_FLAGS = ("func", "subcommand", "out", "emit_csv", "table_out")


def _manifest(args: argparse.Namespace, input_paths: list[str]) -> dict:
    flags = {
        k: v for k, v in sorted(vars(args).items())
        if k not in _NON_SEMANTIC_FLAGS and v is not None
    }
    return {
        "subcommand": args.subcommand,
        "flags": flags,
        "inputs": {p: _digest(p) for p in input_paths if p and Path(p).exists()},
        "version": __version__,
    }


def argv_from_manifest(manifest: dict, out: str | None = None) -> list[str]:
    """Reconstruct the argument vector that reproduces a recorded run."""
    argv = [manifest["subcommand"]]
    for key, value in manifest["flags"].items():
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        elif value is False:
            continue
        else:
            argv += [flag, str(value)]
    if out is not None:
        argv += ["--out", out]
    return argv


def write_json(doc: dict, path: str | None) -> None:
    """Serialize with full round-trip float precision; atomic when to a file."""
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_interior(text: str, space) -> tuple[int, ...]:
    try:
        interior = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"bad config vector {text!r}: {exc}") from exc
    try:
        return space.expand_interior(interior)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_flops(args) -> int:
    space = load_space(args.space)
    config = _parse_interior(args.config, space)
    try:
        value = flops(config, space)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    doc = {
        "manifest": _manifest(args, [args.space]),
        "config": list(config[1:-1]),
        "flops": value,
        "mflops": value / 1e6,
    }
    write_json(doc, args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    space = load_space(args.space)
    table = load_table(args.table, space)
    config = _parse_interior(args.config, space)
    doc = {
        "manifest": _manifest(args, [args.space, args.table]),
        "config": list(config[1:-1]),
        "latency_ms": predict(table, config),
    }
    write_json(doc, args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    space = load_space(args.space)
    samples = load_samples(args.samples, space)
    system = assemble(samples, space)
    opts = FitOptions(lam=args.lam, tol=args.tol, max_iters=args.max_iters)
    result = fit(system, opts, allow_partial=args.allow_partial)
    doc = {
        "manifest": _manifest(args, [args.space, args.samples]),
        "objective": result.objective,
        "iterations": result.iterations,
        "hinge_mass": result.hinge_mass,
        "n_samples": len(samples),
        "table": table_to_dict(result.table),
    }
    write_json(doc, args.out)
    if args.table_out:
        save_table(result.table, args.table_out)
    return EXIT_OK


def cmd_plan(args) -> int:
    space = load_space(args.space)
    counts_path = Path(args.counts)
    counts = zero_counts(space)
    if counts_path.exists():
        stored = json.loads(counts_path.read_text())
        try:
            for i, mat in enumerate(stored["counts"]):
                arr = np.asarray(mat, dtype=np.int64)
                if arr.shape != counts[i].shape:
                    raise ValueError(f"layer {i} count shape {arr.shape}")
                counts[i][:] = arr
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.counts}: bad counts file ({exc})") from exc
    config = plan_next(counts, space)
    record_visit(counts, config, space)
    write_json(
        {"counts": [c.tolist() for c in counts]},
        str(counts_path),
    )
    doc = {
        "manifest": _manifest(args, [args.space]),
        "config": list(config[1:-1]),
        "min_count": int(min(int(c.min()) for c in counts)),
    }
    write_json(doc, args.out)
    return EXIT_OK


def cmd_search(args) -> int:
    space = load_space(args.space)
    table = load_table(args.latency_table, space)
    stats = load_stats(args.stats, space)
    result = lagrangian_search(
        stats, table, args.target_ms, gamma_max=args.gamma_max, tol=args.tol
    )
    doc = {
        "manifest": _manifest(args, [args.space, args.latency_table, args.stats]),
        "result": result.to_dict(),
    }
    write_json(doc, args.out)
    if args.emit_csv:
        _write_csv(args.emit_csv, ["gamma", "latency_ms"], result.dual_trace)
    return EXIT_OK


def cmd_greedy(args) -> int:
    space = load_space(args.space)
    table = load_table(args.latency_table, space)
    if args.proxy == "sim":
        if not args.scenario:
            raise InputError("--proxy sim requires --scenario")
        _, oracle = load_scenario(args.scenario, space)
        proxy = oracle.proxy()
    else:
        if not args.proxy_file:
            raise InputError("--proxy file requires --proxy-file")
        lookup = {}
        for rec in json.loads(Path(args.proxy_file).read_text()):
            lookup[space.expand_interior(rec["config"])] = float(rec["error"])

        def proxy(config):
            if config not in lookup:
                raise InputError(
                    f"proxy file has no entry for config {list(config[1:-1])}"
                )
            return lookup[config]

    result = greedy_trim(proxy, table, args.target_ms, space)
    doc = {
        "manifest": _manifest(
            args,
            [args.space, args.latency_table, args.scenario or "", args.proxy_file or ""],
        ),
        "result": result.to_dict(),
        "predicted_latency_ms": predict(table, result.config),
    }
    write_json(doc, args.out)
    return EXIT_OK


def cmd_aows(args) -> int:
    space = load_space(args.space)
    table = load_table(args.latency_table, space)
    _, oracle = load_scenario(args.scenario, space)
    schedule = load_schedule(args.schedule) if args.schedule else None
    run = AowsRunConfig(
        target_ms=args.target_ms,
        warmup_epochs=args.warmup_epochs,
        total_epochs=args.total_epochs,
        samples_per_epoch=args.samples_per_epoch,
        schedule=schedule,
        gamma_max=args.gamma_max,
        gamma_tol=args.tol,
        sample_mode=args.sample_mode,
        marginal_update=args.marginal_update,
        seed=derive_seed(args.seed, "sampler"),
    )
    outcome = run_aows(run, oracle, table, space)
    doc = {
        "manifest": _manifest(
            args, [args.space, args.latency_table, args.scenario, args.schedule or ""]
        ),
        "result": outcome.result.to_dict(),
        "epochs": [
            {
                "epoch": r.epoch,
                "phase": r.phase,
                "gamma": r.gamma,
                "temperature": r.temperature,
                "entropies": list(r.entropies) if r.entropies else None,
                "mean_gap": r.mean_gap,
            }
            for r in outcome.epochs
        ],
        "true_objective": oracle.expected_gap(outcome.result.config),
    }
    write_json(doc, args.out)
    if args.emit_csv:
        from .smoothing import forward_backward
        from .viterbi import chain_energy

        energy = chain_energy(outcome.stats, table, outcome.result.gamma)
        marginals = forward_backward(energy, max(outcome.epochs[-1].temperature or 1.0, 1e-9))
        _write_csv(
            args.emit_csv,
            ["boundary", "channel", "probability"],
            marginals_csv_rows(marginals),
        )
    return EXIT_OK


def cmd_simulate(args) -> int:
    space = load_space(args.space)
    device, oracle = load_scenario(args.scenario, space)

    # benchmark the device along planned configurations, then fit
    counts = zero_counts(space)
    samples = []
    while min(int(c.min()) for c in counts) < args.benchmark_rounds:
        config = plan_next(counts, space)
        record_visit(counts, config, space)
        samples.append(device.measure(config))
    fit_result, fit_report = fit_with_validation(
        samples, space, seed=derive_seed(args.seed, "split")
    )
    table = fit_result.table

    run = AowsRunConfig(
        target_ms=args.target_ms,
        warmup_epochs=args.warmup_epochs,
        total_epochs=args.total_epochs,
        samples_per_epoch=args.samples_per_epoch,
        gamma_max=args.gamma_max,
        seed=derive_seed(args.seed, "sampler"),
    )
    ows_run = AowsRunConfig(
        target_ms=args.target_ms,
        warmup_epochs=run.total_epochs,  # uniform sampling throughout
        total_epochs=run.total_epochs,
        samples_per_epoch=args.samples_per_epoch,
        gamma_max=args.gamma_max,
        seed=derive_seed(args.seed, "sampler"),
    )

    methods = {}
    aows_out = run_aows(run, oracle, table, space)
    methods["aows"] = aows_out.result.config
    ows_out = run_aows(ows_run, oracle, table, space)
    methods["ows"] = ows_out.result.config
    greedy_out = greedy_trim(oracle.proxy(), table, args.target_ms, space)
    methods["greedy"] = greedy_out.config

    report = {}
    for name, config in methods.items():
        report[name] = {
            "config": list(config[1:-1]),
            "true_objective": oracle.expected_gap(config),
            "modeled_latency_ms": predict(table, config),
            "true_latency_ms": predict(device.truth, config),
        }
    doc = {
        "manifest": _manifest(args, [args.space, args.scenario]),
        "fit": {
            "n_samples": len(samples),
            "selected_lambda": fit_report["selected_lambda"],
            "hinge_mass": fit_result.hinge_mass,
        },
        "target_ms": args.target_ms,
        "methods": report,
    }
    write_json(doc, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="widthsearch",
        description="Latency-constrained channel width search toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        p.add_argument("--space", required=True, help="search-space JSON file")
        p.add_argument("--out", default=None, help="output JSON path (default stdout)")
        return p

    p = add("flops", cmd_flops, help="analytic FLOPs of a configuration")
    p.add_argument("--config", required=True, help="comma-separated interior channels")

    p = add("predict", cmd_predict, help="modeled latency of a configuration")
    p.add_argument("--table", required=True, help="fitted latency table JSON")
    p.add_argument("--config", required=True, help="comma-separated interior channels")

    p = add("fit", cmd_fit, help="fit the latency table from benchmark samples")
    p.add_argument("--samples", required=True, help="line-delimited benchmark records")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="monotonicity prior weight")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--allow-partial", action="store_true",
                   help="zero-fill entries no sample touches instead of failing")
    p.add_argument("--table-out", default=None, help="also write the bare table here")

    p = add("plan", cmd_plan, help="pick the next configuration to benchmark")
    p.add_argument("--counts", required=True,
                   help="visit-count file; created at zero when missing, updated in place")

    p = add("search", cmd_search, help="latency-constrained width search")
    p.add_argument("--stats", required=True, help="error statistics JSON")
    p.add_argument("--latency-table", required=True)
    p.add_argument("--target-ms", type=float, required=True)
    p.add_argument("--gamma-max", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--emit-csv", default=None, help="write the dual trace as CSV here")

    p = add("greedy", cmd_greedy, help="greedy iterative trimming baseline")
    p.add_argument("--latency-table", required=True)
    p.add_argument("--target-ms", type=float, required=True)
    p.add_argument("--proxy", choices=("sim", "file"), default="sim")
    p.add_argument("--scenario", default=None, help="scenario JSON (for --proxy sim)")
    p.add_argument("--proxy-file", default=None,
                   help="JSON list of {config, error} records (for --proxy file)")
    p.add_argument("--seed", type=int, default=0)

    p = add("aows", cmd_aows, help="adaptive width search on a synthetic scenario")
    p.add_argument("--latency-table", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--target-ms", type=float, required=True)
    p.add_argument("--warmup-epochs", type=int, default=5)
    p.add_argument("--total-epochs", type=int, default=20)
    p.add_argument("--samples-per-epoch", type=int, default=256)
    p.add_argument("--schedule", default=None, help="annealing knots JSON")
    p.add_argument("--gamma-max", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--sample-mode", choices=("independent", "joint"), default="independent")
    p.add_argument("--marginal-update", choices=("iteration", "epoch"), default="iteration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emit-csv", default=None, help="write final marginals as CSV here")

    p = add("simulate", cmd_simulate, help="benchmark, fit, and compare all methods")
    p.add_argument("--scenario", required=True)
    p.add_argument("--target-ms", type=float, required=True)
    p.add_argument("--benchmark-rounds", type=int, default=2,
                   help="plan benchmarks until every table entry is visited this often")
    p.add_argument("--warmup-epochs", type=int, default=2)
    p.add_argument("--total-epochs", type=int, default=8)
    p.add_argument("--samples-per-epoch", type=int, default=256)
    p.add_argument("--gamma-max", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())

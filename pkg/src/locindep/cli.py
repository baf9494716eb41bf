"""Command line entry point: simulate event data, run a single test, learn a
graph, reproduce the simulation studies, and run the calibration suite.

Exit codes: 0 success, 1 usage error (bad flags, unknown names, unreadable
inputs), 2 computation error. Every result JSON embeds the effective config.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

# keep dense algebra single-threaded inside worker pools; env wins if set
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np

from locindep import __version__
from locindep.core import (
    EventDataError,
    PointProcessError,
    UnknownStructureError,
)
from locindep.discovery import CAConfig, learn_graph_ca
from locindep.estimation import FitConfig
from locindep.experiments import (
    CalibrationConfig,
    LevelPowerConfig,
    ShdConfig,
    child_seed,
    run_calibration_suite,
    run_level_power,
    run_shd_experiment,
)
from locindep.fileio import (
    atomic_write_text,
    read_events,
    write_dot,
    write_events,
    write_json,
)
from locindep.litest import LITestConfig, test_local_independence
from locindep.simulate import (
    STRUCTURE_NAMES,
    RandomGraphConfig,
    SimulationConfig,
    build_benchmark_structure,
    restrict_to_observed,
    sample_random_graph,
    simulate_hawkes,
)


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors on exit code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _parse_marks(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


def _parse_orders(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


def _parse_dims(text: str) -> tuple[int, ...]:
    if ":" in text:
        lo, hi = text.split(":", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(part) for part in text.split(","))


def _add_basis_flags(sub) -> None:
    sub.add_argument("--support", type=float, default=5.0, help="kernel support length (default 5.0)")
    sub.add_argument("--num-basis", type=int, default=6, help="spline basis size (default 6)")
    sub.add_argument("--degree", type=int, default=3, help="spline degree (default 3)")
    sub.add_argument("--delta", type=float, default=0.1, help="quadrature step (default 0.1)")
    sub.add_argument("--link", default="piecewise", choices=["identity", "log", "piecewise"],
                     help="fitting link (default piecewise)")
    sub.add_argument("--kappa", type=float, default=1.0, help="roughness penalty weight (default 1.0)")


def _add_window_flags(sub) -> None:
    sub.add_argument("--t-start", type=float, default=None, help="window start (default: sidecar)")
    sub.add_argument("--t-end", type=float, default=None, help="window end (default: sidecar)")
    sub.add_argument("--d", type=int, default=None, help="number of marks (default: sidecar)")
    sub.add_argument("--jitter", type=float, default=0.0,
                     help="uniform noise added to timestamps to break ties (default 0)")


def _add_threads_flag(sub) -> None:
    sub.add_argument("--threads", type=int, default=None,
                     help="worker processes (default: LI_THREADS env var or 1)")


def build_parser() -> _Parser:
    parser = _Parser(prog="locindep", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)

    sim = subs.add_parser("simulate", help="simulate event data from a benchmark or random spec")
    group = sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--structure", help=f"benchmark structure, one of {', '.join(STRUCTURE_NAMES)}")
    group.add_argument("--random-d", type=int, help="sample a random graph spec with this many marks")
    sim.add_argument("--edge-prob", type=float, default=0.2, help="random graph edge probability (default 0.2)")
    sim.add_argument("--horizon", type=float, default=2000.0, help="observation window length (default 2000)")
    sim.add_argument("--burn-in", type=float, default=50.0, help="discarded warm-up time (default 50)")
    sim.add_argument("--seed", type=int, default=0, help="simulation seed (default 0)")
    sim.add_argument("--observed-only", action="store_true",
                     help="drop the structure's latent marks before writing")
    sim.add_argument("--graph", default=None, help="also write the true graph as JSON here")
    sim.add_argument("--out", required=True, help="output CSV path (sidecar written next to it)")
    sim.set_defaults(func=_cmd_simulate)

    tst = subs.add_parser("test", help="test one local-independence hypothesis")
    tst.add_argument("--data", required=True, help="event CSV path")
    tst.add_argument("--j", type=int, required=True, help="source mark")
    tst.add_argument("--k", type=int, required=True, help="target mark")
    tst.add_argument("--cond", type=_parse_marks, default=(),
                     help="conditioning marks, comma separated (default none)")
    tst.add_argument("--order", type=int, default=2, choices=[1, 2], help="expansion order (default 2)")
    tst.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    tst.add_argument("--no-target-history", action="store_true",
                     help="do not add the target's own history to the conditioning set")
    tst.add_argument("--wald-points", type=int, default=None,
                     help="grid size of the Wald test (default: basis size)")
    _add_basis_flags(tst)
    _add_window_flags(tst)
    tst.add_argument("--out", default=None, help="result JSON path (default: print to stdout)")
    tst.set_defaults(func=_cmd_test)

    lrn = subs.add_parser("learn", help="learn the local-independence graph")
    lrn.add_argument("--data", required=True, help="event CSV path")
    lrn.add_argument("--order", type=int, default=2, choices=[1, 2], help="expansion order (default 2)")
    lrn.add_argument("--alpha", type=float, default=0.05, help="removal threshold (default 0.05)")
    lrn.add_argument("--lmax", type=int, default=None,
                     help="largest conditioning set size (default: d - 2)")
    _add_basis_flags(lrn)
    _add_window_flags(lrn)
    lrn.add_argument("--out", required=True, help="learned graph JSON path")
    lrn.add_argument("--trace", default=None, help="also write the test-by-test trace JSON here")
    lrn.add_argument("--dot", default=None, help="also write the graph in DOT format here")
    lrn.set_defaults(func=_cmd_learn)

    exp = subs.add_parser("experiment", help="reproduce the simulation studies")
    exp_subs = exp.add_subparsers(dest="experiment", parser_class=_Parser)

    lp = exp_subs.add_parser("level-power", help="rejection rates across benchmark structures")
    lp.add_argument("--structures", default=",".join(STRUCTURE_NAMES),
                    help="comma separated structure names (default: all six)")
    lp.add_argument("--reps", type=int, default=None, help="repetitions per structure (default 200)")
    lp.add_argument("--paper-scale", action="store_true", help="use 500 repetitions")
    lp.add_argument("--horizon", type=float, default=2000.0, help="window length (default 2000)")
    lp.add_argument("--burn-in", type=float, default=50.0, help="warm-up time (default 50)")
    lp.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    lp.add_argument("--orders", type=_parse_orders, default=(1, 2),
                    help="expansion orders to compare (default 1,2)")
    lp.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    _add_basis_flags(lp)
    _add_threads_flag(lp)
    lp.add_argument("--out", required=True, help="output CSV path")
    lp.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    lp.set_defaults(func=_cmd_level_power)

    sh = exp_subs.add_parser("shd", help="graph recovery distance on random graphs")
    sh.add_argument("--dims", type=_parse_dims, default=(3, 5, 7),
                    help="dimensions, e.g. 3,5,7 or 3:7 (default 3,5,7)")
    sh.add_argument("--reps", type=int, default=None, help="graphs per dimension (default 20)")
    sh.add_argument("--paper-scale", action="store_true", help="use 60 graphs per dimension")
    sh.add_argument("--edge-prob", type=float, default=0.2, help="edge probability (default 0.2)")
    sh.add_argument("--horizon", type=float, default=2000.0, help="window length (default 2000)")
    sh.add_argument("--burn-in", type=float, default=50.0, help="warm-up time (default 50)")
    sh.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    sh.add_argument("--orders", type=_parse_orders, default=(1, 2),
                    help="expansion orders to compare (default 1,2)")
    sh.add_argument("--alpha", type=float, default=0.05, help="removal threshold (default 0.05)")
    _add_basis_flags(sh)
    _add_threads_flag(sh)
    sh.add_argument("--out", required=True, help="output CSV path")
    sh.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    sh.set_defaults(func=_cmd_shd)

    cal = subs.add_parser("calibrate", help="run the calibration checks")
    cal.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    cal.add_argument("--null-reps", type=int, default=500,
                     help="repetitions for the null uniformity check (default 500)")
    _add_threads_flag(cal)
    cal.add_argument("--out", default=None, help="output CSV path (default: print only)")
    cal.set_defaults(func=_cmd_calibrate)

    return parser


def _threads_of(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("LI_THREADS", "1"))


def _versions() -> dict:
    import scipy

    return {
        "package": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _write_manifest(out: str, command: str, config, wall_time: float) -> str:
    path = out + ".manifest.json"
    write_json(
        {
            "command": command,
            "config": dataclasses.asdict(config),
            "versions": _versions(),
            "wall_time_s": wall_time,
        },
        path,
    )
    return path


def _base_test_config(args, **extra) -> LITestConfig:
    return LITestConfig(
        support=args.support,
        num_basis=args.num_basis,
        degree=args.degree,
        delta=args.delta,
        link=args.link,
        fit=FitConfig(kappa0=args.kappa),
        **extra,
    )


def _read_data(args):
    window = None
    if args.t_start is not None or args.t_end is not None:
        if args.t_start is None or args.t_end is None:
            raise EventDataError("--t-start and --t-end must be given together")
        window = (args.t_start, args.t_end)
    return read_events(args.data, window=window, d=args.d, jitter=args.jitter)


def _cmd_simulate(args) -> int:
    if args.structure is not None:
        structure = build_benchmark_structure(args.structure)
        spec = structure.spec
        truth = spec.graph()
        names = structure.node_names
    else:
        if args.random_d < 2:
            raise EventDataError("--random-d must be at least 2")
        truth, spec = sample_random_graph(
            RandomGraphConfig(d=args.random_d, edge_prob=args.edge_prob,
                              seed=child_seed(args.seed, 0))
        )
        names = None
    sim_seed = args.seed if args.structure is not None else child_seed(args.seed, 1)
    seq = simulate_hawkes(spec, SimulationConfig(args.horizon, args.burn_in, sim_seed))
    if args.observed_only and args.structure is not None:
        seq, _ = restrict_to_observed(seq, structure.observed())
    write_events(seq, args.out)
    if args.graph is not None:
        # the generative graph over all simulated marks, latents included;
        # mark names disambiguate indices when --observed-only re-labels them
        payload = {"d": truth.d, "edges": [list(e) for e in truth.edge_list()]}
        if names is not None:
            payload["node_names"] = list(names)
            payload["latent"] = list(structure.latent)
        write_json(payload, args.graph)
    label = args.structure or f"random d={args.random_d}"
    print(f"wrote {seq.n} events ({label}, horizon {args.horizon:g}) to {args.out}")
    if names is not None:
        print("marks: " + ", ".join(f"{i}={n}" for i, n in enumerate(names)))
    return 0


def _cmd_test(args) -> int:
    seq = _read_data(args)
    config = _base_test_config(
        args,
        order=args.order,
        alpha=args.alpha,
        include_target_history=not args.no_target_history,
        wald_points=args.wald_points,
    )
    result = test_local_independence(seq, args.j, args.k, args.cond, config)
    payload = result.to_dict()
    payload["config"] = dataclasses.asdict(config)
    payload["data"] = args.data
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        atomic_write_text(args.out, text + "\n")
        print(f"p = {result.p_value:.6g} ({'reject' if result.reject else 'accept'}); wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_learn(args) -> int:
    seq = _read_data(args)
    test_config = _base_test_config(args, order=args.order, alpha=args.alpha)
    config = CAConfig(test=test_config, alpha=args.alpha, max_conditioning=args.lmax)
    graph, trace = learn_graph_ca(seq, config)
    payload = {
        "d": graph.d,
        "edges": [list(e) for e in graph.edge_list()],
        "config": dataclasses.asdict(config),
        "data": args.data,
        "tests_run": len(trace.records),
    }
    write_json(payload, args.out)
    if args.trace:
        write_json(trace.to_dict(), args.trace)
    if args.dot:
        write_dot(graph, args.dot)
    print(
        f"learned graph with {graph.n_cross_edges()} cross edges "
        f"({len(trace.records)} tests); wrote {args.out}"
    )
    return 0


def _figure_base(out: str) -> str:
    return os.path.splitext(out)[0]


def _cmd_level_power(args) -> int:
    reps = args.reps if args.reps is not None else (500 if args.paper_scale else 200)
    config = LevelPowerConfig(
        structures=tuple(args.structures.split(",")),
        repetitions=reps,
        horizon=args.horizon,
        burn_in=args.burn_in,
        seed=args.seed,
        orders=args.orders,
        alpha=args.alpha,
        test=_base_test_config(args, alpha=args.alpha),
        threads=_threads_of(args),
    )
    result = run_level_power(config)
    atomic_write_text(args.out, result.to_csv_text())
    manifest = _write_manifest(args.out, "experiment level-power", config, result.wall_time)
    print(result.to_csv_text(), end="")
    print(f"wrote {args.out} and {manifest}")
    if not args.no_figures:
        from locindep.figures import level_power_figure, pvalue_ecdf_figure

        base = _figure_base(args.out)
        level_power_figure(result, f"{base}.level_power.png")
        pvalue_ecdf_figure(result, f"{base}.pvalue_ecdf.png")
        print(f"wrote {base}.level_power.png and {base}.pvalue_ecdf.png")
    return 0


def _cmd_shd(args) -> int:
    reps = args.reps if args.reps is not None else (60 if args.paper_scale else 20)
    config = ShdConfig(
        dims=args.dims,
        repetitions=reps,
        horizon=args.horizon,
        burn_in=args.burn_in,
        seed=args.seed,
        orders=args.orders,
        alpha=args.alpha,
        edge_prob=args.edge_prob,
        test=_base_test_config(args, alpha=args.alpha),
        threads=_threads_of(args),
    )
    result = run_shd_experiment(config)
    atomic_write_text(args.out, result.to_csv_text())
    manifest = _write_manifest(args.out, "experiment shd", config, result.wall_time)
    print(result.to_csv_text(), end="")
    print(f"wrote {args.out} and {manifest}")
    if not args.no_figures:
        from locindep.figures import shd_figure

        base = _figure_base(args.out)
        shd_figure(result, f"{base}.shd.png")
        print(f"wrote {base}.shd.png")
    return 0


def _cmd_calibrate(args) -> int:
    config = CalibrationConfig(
        seed=args.seed,
        null_reps=args.null_reps,
        threads=_threads_of(args),
    )
    result = run_calibration_suite(config)
    for check in result.checks:
        status = "PASS" if check.passed else "FAIL"
        print(
            f"{status} {check.name}: {check.statistic:.6g} "
            f"{check.comparison} {check.threshold:g}"
        )
    if args.out:
        atomic_write_text(args.out, result.to_csv_text())
        _write_manifest(args.out, "calibrate", config, result.wall_time)
        print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UnknownStructureError, EventDataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PointProcessError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``wstlab <command> [options]``."""
import argparse
import logging
import sys
from collections.abc import Sequence

import polars as pl

from wstlab import __version__
from wstlab.config import (
    ConfigError,
    ExperimentConfig,
    config_from_mapping,
    config_hash,
    load_config,
)
from wstlab.environment import (
    LabelEnvironmentError,
    draw_environment,
    sample_environment_tree,
    write_environment,
)
from wstlab.experiments import (
    census_compare,
    length_sweep,
    overlap_sweep,
    rows_to_frame,
)
from wstlab.network import NetworkError, format_network, parse_graph_spec
from wstlab.output import provenance, write_table
from wstlab.resistance import (
    ResistanceError,
    ResistanceSolver,
    edge_resistances,
    foster_sum,
    kirchhoff_probabilities,
)
from wstlab.sampling import SAMPLERS, SamplingError, sequential_sample, write_trees
from wstlab.schemas import EDGE_TABLE_SCHEMA, validate_frame_schema
from wstlab.verify import UnknownSuiteError, verify
from wstlab.walks import RngStream

logger = logging.getLogger(__name__)

_SWEEP_KEYS = (
    "graph",
    "beta",
    "replicas",
    "samples",
    "radius",
    "seed",
    "out",
    "solver",
    "format",
    "workers",
    "roots_per_tree",
    "method",
    "window",
    "theorem_samples",
    "gamma",
    "K",
)


def _add_sweep_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument(
        "--graph", help="generator spec (complete:n=200) or network file"
    )
    parser.add_argument("--beta", help="comma list (0,1,10) or a:b:steps:log|lin")
    parser.add_argument("--replicas", type=int, help="environments per beta point")
    parser.add_argument("--samples", type=int, help="trees per environment")
    parser.add_argument("--radius", type=int, help="ball radius for censuses")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", help="output path (default stdout)")
    parser.add_argument("--solver", choices=["auto", "dense", "iterative"])
    parser.add_argument("--format", choices=["csv", "json"])
    parser.add_argument("--workers", type=int, help="worker processes for replicas")
    parser.add_argument("--roots-per-tree", type=int, help="census roots per tree")
    parser.add_argument("--method", choices=["auto", "wilson", "sequential"])
    parser.add_argument("--window", type=float, help="log-conductance band width")
    parser.add_argument(
        "--theorem-samples", type=int, help="Monte-Carlo tuples per census pattern"
    )
    parser.add_argument("--gamma", type=float, help="typical strength scale")
    parser.add_argument("-K", type=float, dest="K", help="typical window width")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per experiment."""
    parser = argparse.ArgumentParser(
        prog="wstlab",
        description="Weighted spanning trees, effective resistances and the "
        "random-environment model.",
    )
    parser.add_argument("--version", action="version", version=f"wstlab {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="count", default=0)
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="write a network file")
    gen.add_argument("--graph", required=True)
    gen.add_argument("--out")

    sample = commands.add_parser("sample", help="sample spanning trees")
    sample.add_argument("--graph", required=True)
    sample.add_argument("--beta", type=float, help="sample in a fresh environment")
    sample.add_argument(
        "--sampler",
        choices=["auto", "wilson", "aldous_broder", "sequential"],
        default="auto",
    )
    sample.add_argument("--count", type=int, default=1)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--expand", action="store_true", help="append u-v pairs")
    sample.add_argument("--environment-out", help="dump the environment labels here")
    sample.add_argument("--out")

    resist = commands.add_parser("resist", help="edge resistance and Kirchhoff table")
    resist.add_argument("--graph", required=True)
    resist.add_argument(
        "--solver", choices=["auto", "dense", "iterative"], default="auto"
    )
    resist.add_argument("--format", choices=["csv", "json"], default="csv")
    resist.add_argument("--out")

    for name, help_text in (
        ("overlap-sweep", "exact edge overlap per beta"),
        ("length-sweep", "expected total label length per beta"),
        ("census", "local census against the reference law and the MST"),
    ):
        _add_sweep_arguments(commands.add_parser(name, help=help_text))

    check = commands.add_parser("verify", help="run a self-check suite")
    check.add_argument(
        "suite", help="identities, oracle, markov, association, balance or all"
    )
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--samples", type=int)
    check.add_argument("--networks", type=int)
    check.add_argument("--max-n", type=int)
    check.add_argument("--format", choices=["csv", "json"], default="csv")
    check.add_argument("--out")
    return parser


def sweep_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config from ``--config`` (if given) with the flags layered on top."""
    overrides = {
        key: getattr(args, key)
        for key in _SWEEP_KEYS
        if getattr(args, key, None) is not None
    }
    if args.config:
        return load_config(args.config, **overrides)
    return config_from_mapping(overrides)


def _spec_seed(spec: str) -> int:
    for item in spec.partition(":")[2].split(","):
        key, _, value = item.partition("=")
        if key.strip() == "seed":
            return int(float(value))
    return 0


def _gen(args: argparse.Namespace) -> int:
    net = parse_graph_spec(args.graph)
    header = provenance(
        _spec_seed(args.graph),
        config_hash(ExperimentConfig(graph=args.graph)),
        command="gen",
    )
    text = format_network(net, header)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as handle:
            handle.write(text)
    return 0


def _sample(args: argparse.Namespace) -> int:
    net = parse_graph_spec(args.graph)
    rng = RngStream(args.seed)
    trees = []
    if args.beta is not None:
        env = draw_environment(net, args.beta, rng.child(0))
        if args.environment_out:
            write_environment(net, env, args.environment_out)
        method = args.sampler if args.sampler in ("wilson", "sequential") else "auto"
        for i in range(args.count):
            trees.append(
                sample_environment_tree(net, env, rng.child(1 + i), method=method)
            )
    else:
        if args.sampler == "sequential":
            trees = [
                sequential_sample(net, None, rng.child(1 + i))
                for i in range(args.count)
            ]
        else:
            sampler = SAMPLERS["wilson" if args.sampler == "auto" else args.sampler]
            trees = [sampler(net, rng.child(1 + i)) for i in range(args.count)]
    if args.out in (None, "-"):
        write_trees(trees, sys.stdout, expand=args.expand)
    else:
        with open(args.out, "w") as handle:
            write_trees(trees, handle, expand=args.expand)
    return 0


def _resist(args: argparse.Namespace) -> int:
    net = parse_graph_spec(args.graph)
    solver = ResistanceSolver(net, mode=args.solver)
    table = pl.DataFrame(
        {
            "u": net.edge_u,
            "v": net.edge_v,
            "c": net.conductance,
            "reff": edge_resistances(solver),
            "kirchhoff_p": kirchhoff_probabilities(solver),
        },
        schema=EDGE_TABLE_SCHEMA,
    )
    validate_frame_schema(table, [EDGE_TABLE_SCHEMA])
    foster = foster_sum(solver)
    header = provenance(0, foster_sum=repr(foster), n=net.n, m=net.m)
    write_table(table, args.out, args.format, header)
    logger.info("Foster sum %.12g (n - 1 = %d)", foster, net.n - 1)
    return 0


def _sweep(args: argparse.Namespace) -> int:
    config = sweep_config(args)
    net = parse_graph_spec(config.graph)
    config = config.with_default_betas(net.n)
    header = provenance(config.seed, config_hash(config), command=args.command)
    json_out = config.fmt == "json"
    if args.command == "census":
        report = census_compare(config, net)
        frames = [report.tables[beta] for beta in config.betas if beta in report.tables]
        if not frames:
            logger.error("Every census row failed")
            return 1
        write_table(pl.concat(frames), config.out, config.fmt, header)
        for row in report.rows:
            logger.info(
                "beta=%g: TV to reference %.4f, to MST %s",
                row.beta,
                row.estimate,
                row.extras.get("tv_mst"),
            )
        return 0
    sweep = overlap_sweep if args.command == "overlap-sweep" else length_sweep
    rows = sweep(config, net)
    frame = rows_to_frame(rows, include_wall_time=json_out)
    write_table(frame, config.out, config.fmt, header)
    return 1 if all(row.failed for row in rows) else 0


def _verify(args: argparse.Namespace) -> int:
    options = {
        key: value
        for key, value in (
            ("samples", args.samples),
            ("networks", args.networks),
            ("max_n", args.max_n),
        )
        if value is not None
    }
    table = verify(args.suite, seed=args.seed, **options)
    write_table(table, args.out, args.format, provenance(args.seed, suite=args.suite))
    failed = table.filter(~pl.col("passed")).height
    if failed:
        logger.warning("%d of %d checks failed", failed, table.height)
    return 1 if failed else 0


_COMMANDS = {
    "gen": _gen,
    "sample": _sample,
    "resist": _resist,
    "overlap-sweep": _sweep,
    "length-sweep": _sweep,
    "census": _sweep,
    "verify": _verify,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return the process exit code."""
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * args.verbose + 10 * args.quiet
    logging.basicConfig(
        level=max(logging.DEBUG, min(level, logging.CRITICAL)),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (
        ConfigError,
        NetworkError,
        ResistanceError,
        SamplingError,
        LabelEnvironmentError,
        UnknownSuiteError,
    ) as err:
        logger.error("%s: %s", type(err).__name__, err)
        return 2

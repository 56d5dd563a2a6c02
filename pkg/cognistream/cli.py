import argparse
import os
import sys
from typing import Callable, Dict, List, Optional, Sequence
from cognistream.config import CONFIG_ENV_VAR, EXIT_CODES
from cognistream.exceptions import CognistreamError
from cognistream.helpers import render_lines, tsv_line
from cognistream.logger import get_logger
from cognistream.stream_store import StreamStore
from cognistream.pipeline import RunConfig, CognitionPipeline
from cognistream._miner import pattern_id_of
from cognistream.dpu import build_topology, load_topology, build_world


class UsageError(Exception):
    pass


class CognistreamArgumentParser(argparse.ArgumentParser):
    """
    Reports usage errors with exit code 1 instead of argparse's 2, which is kept for data errors
    """
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = CognistreamArgumentParser(
        prog="cognistream",
        description="Schema-free cognition over raw binary streams: pattern mining, generalization, hypotheses and queries"
    )
    parser.add_argument("--store", help="Directory of the stream store (falls back to [store] path of the config)")
    parser.add_argument("--config", help=f"INI config file, falls back to ${CONFIG_ENV_VAR}")
    parser.add_argument("--log-to-file", action="store_true", help="Also write logs to logs/cognistream_logs.log")

    commands = parser.add_subparsers(dest="command", metavar="command", parser_class=CognistreamArgumentParser)
    commands.required = True

    ingest = commands.add_parser("ingest", help="Append a raw file to the stream")
    ingest.add_argument("file", help="File to append, '-' reads standard input")
    ingest.add_argument("--timestamp", type=int, help="Logical time, the last timestamp + 1 by default")
    ingest.add_argument("--tag", default="", help="Source tag of the segment")

    commands.add_parser("mine", help="Print the pattern dictionary")
    commands.add_parser("structures", help="Print the deduped structures")
    commands.add_parser("generalize", help="Print the hierarchy of notions")
    commands.add_parser("relevancy", help="Fold new windows into the relevancy table and print it")

    hypothesize = commands.add_parser("hypothesize", help="Synthesize, check, correct and prune hypotheses")
    hypothesize.add_argument("--focus", nargs="+", help="Only synthesize from templates holding these keywords")

    commands.add_parser("cycle", help="mine, structures, generalize, relevancy and hypothesize in one go")

    query = commands.add_parser("query", help="Answer keyword queries, one per line")
    query.add_argument("file", nargs="?", default="-", help="Query file, '-' reads standard input")
    refinement = query.add_mutually_exclusive_group()
    refinement.add_argument("--broaden", action="store_true", help="Accept slot co-members of every keyword")
    refinement.add_argument("--narrow", action="store_true", help="Answer each query by its highest priority request only")

    forecast = commands.add_parser("forecast", help="Forecast the class distribution under a template")
    forecast.add_argument("--template", required=True, help="node_id of the template")
    forecast.add_argument("--position", required=True, type=int, help="Slot position used as the class label")
    forecast.add_argument("--method", choices=["markov", "trend"], help="Forecasting method")
    forecast.add_argument("--alpha", type=float, help="Markov smoothing constant")

    dpu = commands.add_parser("dpu-sim", help="Simulate the processing unit matrix over the store")
    dpu.add_argument("--topology", help="Topology file (shape=, units=, ttl=), the [dpu] config section otherwise")
    dpu.add_argument("--rounds", type=int, default=32, help="Maximum number of rounds")
    dpu.add_argument("--query", help="Keywords of a query flooded from unit 0")
    dpu.add_argument("--progress", action="store_true", help="Show a progress bar")

    commands.add_parser("report", help="Print store statistics and the template table")
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    path = args.config or os.environ.get(CONFIG_ENV_VAR)
    config = RunConfig.from_file(path, store_path=args.store) if path else RunConfig(store_path=args.store)
    if config.store_path is None:
        raise UsageError("cognistream: error: no store given, use --store or a [store] path in the config")
    return config


def _pipeline(config: RunConfig, args: argparse.Namespace) -> CognitionPipeline:
    return CognitionPipeline(StreamStore(config.store_path, args.log_to_file), config, args.log_to_file)


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    with open(path, "rb") as file:
        return file.read()


def handle_ingest(args: argparse.Namespace, config: RunConfig) -> List[str]:
    store = StreamStore(config.store_path, args.log_to_file)
    last = store.last_timestamp()
    timestamp = args.timestamp if args.timestamp is not None else (0 if last is None else last + 1)
    segment_id = store.append(_read_input(args.file), timestamp, args.tag)
    return [tsv_line(segment_id, timestamp, len(store.read(segment_id).data))]


def handle_mine(args: argparse.Namespace, config: RunConfig) -> List[str]:
    return _pipeline(config, args).mine()


def handle_structures(args: argparse.Namespace, config: RunConfig) -> List[str]:
    return _pipeline(config, args).structures()


def handle_generalize(args: argparse.Namespace, config: RunConfig) -> List[str]:
    return _pipeline(config, args).generalize()


def handle_relevancy(args: argparse.Namespace, config: RunConfig) -> List[str]:
    return _pipeline(config, args).relevancy()


def handle_hypothesize(args: argparse.Namespace, config: RunConfig) -> List[str]:
    focus = getattr(args, "focus", None)
    return _pipeline(config, args).hypothesize({pattern_id_of(keyword.encode("utf-8")) for keyword in focus} if focus else None)


def handle_cycle(args: argparse.Namespace, config: RunConfig) -> List[str]:
    lines = []
    for handler in (handle_mine, handle_structures, handle_generalize, handle_relevancy, handle_hypothesize):
        lines.extend(handler(args, config))
    return lines


def handle_query(args: argparse.Namespace, config: RunConfig) -> List[str]:
    text = _read_input(args.file).decode("utf-8")
    return _pipeline(config, args).query(text.splitlines(), broaden=args.broaden, narrow=args.narrow)


def handle_forecast(args: argparse.Namespace, config: RunConfig) -> List[str]:
    return _pipeline(config, args).forecast(args.template, args.position, args.method, args.alpha)


def handle_dpu_sim(args: argparse.Namespace, config: RunConfig) -> List[str]:
    if args.topology:
        topology = load_topology(args.topology)
    else:
        topology = build_topology(config.dpu_shape, config.dpu_units, config.dpu_ttl)

    store = StreamStore(config.store_path, args.log_to_file)
    world = build_world(store, topology, config=config, logging_to_file=args.log_to_file)
    world.inject("MineRequest", {}, origin=0)
    if args.query:
        keywords = [keyword.encode("utf-8") for keyword in args.query.split()]
        world.inject("Query", {"query_id": "q0", "keywords": keywords, "broaden": False}, origin=0)

    world.run(args.rounds, progress=args.progress)
    lines = world.transcript_lines()
    if args.query:
        lines.extend(tsv_line("q0", segment_id, offset, ",".join(items)) for segment_id, offset, items in world.results("q0"))
    return lines


def handle_report(args: argparse.Namespace, config: RunConfig) -> List[str]:
    return _pipeline(config, args).report()


HANDLERS: Dict[str, Callable[[argparse.Namespace, RunConfig], List[str]]] = {
    "ingest": handle_ingest,
    "mine": handle_mine,
    "structures": handle_structures,
    "generalize": handle_generalize,
    "relevancy": handle_relevancy,
    "hypothesize": handle_hypothesize,
    "cycle": handle_cycle,
    "query": handle_query,
    "forecast": handle_forecast,
    "dpu-sim": handle_dpu_sim,
    "report": handle_report
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the cognistream command, returns the exit code

    Reports go to standard output, diagnostics to standard error. Usage errors exit with 1,
    data errors (any module error, unreadable input) with 2
    """
    logger = get_logger(__name__, "PROD", False)
    try:
        args = build_parser().parse_args(argv)
        config = load_run_config(args)
        lines = HANDLERS[args.command](args, config)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CODES["usage"]
    except CognistreamError as e:
        print(e.describe(), file=sys.stderr)
        return EXIT_CODES["data"]
    except OSError as e:
        logger.error(f"Could not read input: {e}")
        print(f"cli: {e.__class__.__name__}: {e}", file=sys.stderr)
        return EXIT_CODES["data"]

    sys.stdout.write(render_lines(lines))
    return EXIT_CODES["ok"]


if __name__ == "__main__":
    sys.exit(main())

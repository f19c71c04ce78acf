"""Command-line entry points: serve, simulate, report, engagement, export.

Exit status is 0 on success, 1 on a usage error (bad flags, missing
subcommand), and 2 on a runtime failure (unreadable files, script errors).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import uvicorn

from .agents import AgentConfig, AgentError
from .analytics import census, engagement_curve, intervals_from_log
from .api import ServiceConfig, config_from_env, create_app
from .events import EventType, ParseError, decode_log_line
from .graph import GraphError, GraphStore, loads_snapshot
from .ingest import IngestError
from .lesson import LessonError
from .simulate import (
    ScriptParseError,
    ScriptRunError,
    canonical_script,
    load_session_script,
    run_parallel,
    run_script,
)

__all__ = ["main"]

_RUNTIME_ERRORS = (
    ScriptParseError,
    ScriptRunError,
    ParseError,
    GraphError,
    IngestError,
    LessonError,
    AgentError,
    OSError,
    json.JSONDecodeError,
    ValueError,
    KeyError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting itself."""

    def error(self, message: str) -> None:
        raise UsageError(f"{self.format_usage().rstrip()}\n{self.prog}: {message}")


def _split_addr(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise UsageError(f"--addr must look like HOST:PORT, got {value!r}")
    try:
        return host, int(port)
    except ValueError:
        raise UsageError(f"--addr port must be an integer, got {port!r}") from None


def _cmd_serve(args: argparse.Namespace) -> int:
    host, port = _split_addr(args.addr)
    base = config_from_env()
    agent = base.agent
    if args.agent_mode is not None and args.agent_mode != agent.mode:
        agent = AgentConfig(
            mode=args.agent_mode,
            script_path=agent.script_path,
            remote_endpoint=agent.remote_endpoint,
        )
    config = ServiceConfig(
        data_dir=args.data or base.data_dir,
        agent=agent,
        token=base.token,
    )
    app = create_app(config)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def _write_run(result, target: Path) -> None:
    target.mkdir(parents=True, exist_ok=True)
    (target / "events.log").write_text(
        "\n".join(result.log_lines) + "\n", encoding="utf-8"
    )
    (target / "graph.snap").write_text(
        json.dumps(result.graph.export_snapshot(), separators=(",", ":")),
        encoding="utf-8",
    )
    (target / "census.txt").write_text(result.report.to_text() + "\n", encoding="utf-8")


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.parallel < 1:
        raise UsageError("--parallel must be at least 1")
    script = (
        canonical_script()
        if args.script == "canonical"
        else load_session_script(args.script)
    )
    if args.parallel > 1:
        results = run_parallel(script, args.parallel)
    else:
        session_id = (
            f"sim-{script.name}"
            if args.seed is None
            else f"sim-{script.name}-{args.seed}"
        )
        results = [run_script(script, session_id=session_id)]
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        if len(results) == 1:
            _write_run(results[0], outdir)
        else:
            for i, result in enumerate(results):
                _write_run(result, outdir / f"run-{i + 1}")
        manifest = {
            "script": script.name,
            "seed": args.seed,
            "parallel": args.parallel,
            "sessions": [r.session_id for r in results],
        }
        (outdir / "run.json").write_text(
            json.dumps(manifest, indent=1), encoding="utf-8"
        )
    print(results[0].report.to_text())
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    store = loads_snapshot(Path(args.snapshot).read_text(encoding="utf-8"))
    report = census(store)
    if args.json:
        print(json.dumps(report.to_dict(), indent=1))
    else:
        print(report.to_text())
    return 0


def _duration_from_log(lines: list[str]) -> float:
    """The video length: declared by MetadataLoad, else the latest timestamp."""
    latest = 0.0
    for line in lines:
        _, event = decode_log_line(line)
        if event.event_type is EventType.METADATA_LOAD and event.payload:
            try:
                declared = json.loads(event.payload).get("duration_s")
            except json.JSONDecodeError:
                declared = None
            if isinstance(declared, (int, float)) and declared > 0:
                return float(declared)
        for stamp in (event.video_time, event.from_time, event.to_time):
            if stamp is not None:
                latest = max(latest, float(stamp))
    if latest <= 0:
        raise ValueError("log carries no video timing to infer a duration from")
    return latest


def _cmd_engagement(args: argparse.Namespace) -> int:
    if args.bin <= 0:
        raise UsageError("--bin must be positive")
    lines = [
        line
        for line in Path(args.log).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    duration = _duration_from_log(lines)
    reconstruction = intervals_from_log(lines, duration)
    curve = engagement_curve(reconstruction.intervals, args.bin, duration)
    text = curve.to_csv()
    if args.csv:
        Path(args.csv).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {len(curve.intensities)} bins to {args.csv}")
    else:
        print(text)
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    snap_path = Path(args.data) / "graph.snap"
    document = json.loads(snap_path.read_text(encoding="utf-8"))
    store = GraphStore.import_snapshot(document)
    exported = store.export_snapshot()
    Path(args.out).write_text(
        json.dumps(exported, separators=(",", ":")), encoding="utf-8"
    )
    print(f"exported {len(exported['nodes'])} nodes, {len(exported['edges'])} edges")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="itas", description=__doc__)
    commands = parser.add_subparsers(dest="command", metavar="command", required=True)

    serve = commands.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--addr", default="127.0.0.1:8410", help="HOST:PORT to bind")
    serve.add_argument("--data", default=None, help="persistence directory")
    serve.add_argument(
        "--agent-mode", choices=("scripted", "remote"), default=None
    )
    serve.set_defaults(handler=_cmd_serve)

    simulate = commands.add_parser("simulate", help="run a scripted session")
    simulate.add_argument(
        "--script", required=True, help="script file, or 'canonical'"
    )
    simulate.add_argument("--out", default=None, help="directory for run artifacts")
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument(
        "--parallel", type=int, default=1, help="independent concurrent sessions"
    )
    simulate.set_defaults(handler=_cmd_simulate)

    report = commands.add_parser("report", help="print a snapshot's census")
    report.add_argument("--snapshot", required=True)
    report.add_argument("--json", action="store_true")
    report.set_defaults(handler=_cmd_report)

    engagement = commands.add_parser(
        "engagement", help="rebuild the viewing-intensity curve from a log"
    )
    engagement.add_argument("--log", required=True)
    engagement.add_argument("--bin", type=float, default=15.0)
    engagement.add_argument("--csv", default=None, help="write here instead of stdout")
    engagement.set_defaults(handler=_cmd_engagement)

    export = commands.add_parser("export", help="re-export a data dir's graph")
    export.add_argument("--data", required=True)
    export.add_argument("--out", required=True)
    export.set_defaults(handler=_cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except _RUNTIME_ERRORS as exc:
        print(f"itas: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

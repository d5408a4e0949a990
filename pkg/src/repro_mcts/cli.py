"""Command-line entry point: ``repro-mcts {run,replay,validate,sweep}``.

Exit codes:

    0  crash reproduced / replay matched and crashed / files valid
    1  error (bad arguments, invalid files or configuration)
    2  search or replay finished without reproducing the crash
    3  replay diverged from the recorded digests
"""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .engine import CRASH_REPRODUCED, MCTSSearch, SearchConfig
from .env import SimEnvironment, check_sim_app, format_trace, load_sim_app, parse_trace, read_json, replay_trace
from .errors import ReproError, SpecError
from .oracle import ABLATION_FLAGS, LLMOracle, OraclePair, RemoteChatClient, ScriptedOracle
from .oracle.client import DEFAULT_TEMPERATURE
from .oracle.scripted import check_scripted_spec, load_scripted_oracle
from .tree import LevelConfig, SelectionPolicy

log = logging.getLogger("repro_mcts")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_REPRODUCED = 2
EXIT_MISMATCH = 3

TRACE_FILE = "trace.txt"
MANIFEST_FILE = "manifest.json"
LOG_FILE = "iterations.jsonl"
DEFAULT_REPORT = "The app crashes."


class UsageError(ReproError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def parse_seed_range(text: str) -> list[int]:
    """``A..B`` inclusive, or a single seed."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            return list(range(int(a), int(b) + 1))
        return [int(text)]
    except ValueError:
        raise UsageError(f"bad seed range {text!r}; use A..B") from None


def parse_oracle_arg(text: str) -> tuple[str, str | None]:
    if text == "remote":
        return "remote", None
    if text.startswith("scripted:") and len(text) > len("scripted:"):
        return "scripted", text[len("scripted:") :]
    raise UsageError(f"--oracle must be scripted:<file> or remote, got {text!r}")


def build_config(args) -> SearchConfig:
    ablations = frozenset(f.strip() for f in (args.ablate or "").split(",") if f.strip())
    unknown = ablations - ABLATION_FLAGS
    if unknown:
        raise UsageError(f"unknown --ablate flags {sorted(unknown)}; choose from {sorted(ABLATION_FLAGS)}")
    levels = LevelConfig.for_k(args.k)
    if args.levels:
        values = _int_list(args.levels)
        if len(values) != 3:
            raise UsageError("--levels takes HIGH,MID,LOW")
        levels = LevelConfig(values[0], values[1], values[2], k=args.k)
    if args.thresholds:
        values = _int_list(args.thresholds)
        if len(values) != 2:
            raise UsageError("--thresholds takes LOW,HIGH")
        levels = LevelConfig(levels.high, levels.mid, levels.low, levels.k, high_threshold=values[1], low_threshold=values[0])
    return SearchConfig(
        k=args.k,
        iteration_budget=args.iterations,
        wall_clock_budget=args.budget_minutes * 60.0,
        max_depth=args.max_depth,
        levels=levels,
        policy=SelectionPolicy(temperature=args.tau, exploration=args.c, rng_seed=args.seed),
        ablations=ablations,
    )


def _write_json(path: Path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class RunInputs:
    config: SearchConfig
    app: str
    report: str
    oracle_mode: str
    oracle_path: str | None = None
    endpoint: str | None = None
    model: str | None = None
    temperature: float = DEFAULT_TEMPERATURE

    def manifest(self) -> dict:
        oracle = {"mode": self.oracle_mode}
        if self.oracle_mode == "scripted":
            oracle["path"] = self.oracle_path
        else:
            oracle.update(endpoint=self.endpoint, model=self.model, temperature=self.temperature)
        return {
            "version": 1,
            "config": self.config.to_dict(),
            "app": self.app,
            "report": self.report,
            "oracle": oracle,
            "seed": self.config.policy.rng_seed,
        }

    @classmethod
    def from_manifest(cls, m: dict) -> "RunInputs":
        o = m["oracle"]
        return cls(
            config=SearchConfig.from_dict(m["config"]),
            app=m["app"],
            report=m["report"],
            oracle_mode=o["mode"],
            oracle_path=o.get("path"),
            endpoint=o.get("endpoint"),
            model=o.get("model"),
            temperature=o.get("temperature", DEFAULT_TEMPERATURE),
        )


def execute(inputs: RunInputs, out: Path) -> int:
    app = load_sim_app(inputs.app)
    report = Path(inputs.report).read_text(encoding="utf-8")
    client = None
    if inputs.oracle_mode == "scripted":
        oracle = OraclePair.of(ScriptedOracle(load_scripted_oracle(inputs.oracle_path, app), inputs.config.policy.rng_seed))
    else:
        if not inputs.endpoint:
            raise UsageError("remote oracle needs --endpoint")
        client = RemoteChatClient(inputs.endpoint, model=inputs.model or "gpt-4o", temperature=inputs.temperature)
        oracle = OraclePair.of(LLMOracle(client))

    out.mkdir(parents=True, exist_ok=True)
    with open(out / LOG_FILE, "w", encoding="utf-8") as log_fh:

        def on_iteration(outcome):
            log_fh.write(json.dumps(outcome.to_record(), sort_keys=True) + "\n")

        search = MCTSSearch(inputs.config, SimEnvironment(app), oracle, report, app.name, on_iteration)
        trace = search.run()

    (out / TRACE_FILE).write_text(format_trace(trace.steps), encoding="utf-8")
    manifest = inputs.manifest()
    manifest["outcome"] = {
        "outcome": trace.outcome,
        "iterations_used": trace.iterations_used,
        "steps": [s.action.to_line() for s in trace.steps],
    }
    manifest["timing"] = {"wall_clock_seconds": round(trace.wall_clock_used, 3)}
    if client is not None:
        manifest["usage"] = {
            "prompt_tokens": client.usage.prompt_tokens,
            "completion_tokens": client.usage.completion_tokens,
            "requests": client.usage.requests,
        }
    _write_json(out / MANIFEST_FILE, manifest)
    print(f"{trace.outcome} after {trace.iterations_used} iterations ({len(trace.steps)} steps)")
    for s in trace.steps:
        print(f"  {s.action.to_line()}")
    return EXIT_OK if trace.outcome == CRASH_REPRODUCED else EXIT_NOT_REPRODUCED


def cmd_run(args) -> int:
    if args.manifest:
        inputs = RunInputs.from_manifest(read_json(args.manifest))
    else:
        missing = [flag for flag, v in (("--app", args.app), ("--report", args.report), ("--oracle", args.oracle)) if not v]
        if missing:
            raise UsageError(f"run needs {', '.join(missing)} (or --manifest)")
        mode, path = parse_oracle_arg(args.oracle)
        inputs = RunInputs(
            config=build_config(args),
            app=str(Path(args.app).resolve()),
            report=str(Path(args.report).resolve()),
            oracle_mode=mode,
            oracle_path=str(Path(path).resolve()) if path else None,
            endpoint=args.endpoint,
            model=args.model,
            temperature=args.temperature,
        )
    return execute(inputs, Path(args.out))


def cmd_replay(args) -> int:
    app = load_sim_app(args.app)
    steps = parse_trace(Path(args.trace).read_text(encoding="utf-8"))
    if not steps:
        print("trace has no steps", file=sys.stderr)
        return EXIT_ERROR
    result = replay_trace(SimEnvironment(app), steps)
    if not result.matched:
        print(f"mismatch at {result.message}", file=sys.stderr)
        return EXIT_MISMATCH
    print(f"replayed {result.steps_run} steps; crash {'reproduced' if result.crash else 'not reproduced'}")
    return EXIT_OK if result.crash else EXIT_NOT_REPRODUCED


def cmd_validate(args) -> int:
    if not args.app and not args.scripted_oracle:
        raise UsageError("validate needs --app and/or --scripted-oracle")
    failed = False
    app = None
    if args.app:
        data = read_json(args.app)
        issues = check_sim_app(data)
        if issues:
            failed = True
            for issue in issues:
                print(f"FAIL {args.app}: {issue}")
        else:
            app = load_sim_app(args.app)
            print(f"ok   {args.app}: sim app, {len(app.states)} states, {len(app.transitions)} transitions")
    if args.scripted_oracle:
        data = read_json(args.scripted_oracle)
        issues = check_scripted_spec(data, app)
        if issues:
            failed = True
            for issue in issues:
                print(f"FAIL {args.scripted_oracle}: {issue}")
        else:
            checked = " (cross-checked against app)" if app is not None else ""
            print(f"ok   {args.scripted_oracle}: scripted oracle{checked}")
    return EXIT_ERROR if failed else EXIT_OK


def _sweep_cell(job):
    app_path, oracle_path, report, config = job
    app = load_sim_app(app_path)
    oracle = OraclePair.of(ScriptedOracle(load_scripted_oracle(oracle_path, app), config.policy.rng_seed))
    trace = MCTSSearch(config, SimEnvironment(app), oracle, report, app.name).run()
    return config.k, config.policy.rng_seed, trace.outcome, trace.iterations_used


def sweep(app_path, oracle_path, report, seeds, ks, base: SearchConfig, jobs: int = 1) -> list[dict]:
    """Success rate and iteration stats for each k over ``seeds``."""
    cells = []
    for k in ks:
        cfg = SearchConfig(
            k=k,
            iteration_budget=base.iteration_budget,
            wall_clock_budget=base.wall_clock_budget,
            max_depth=base.max_depth,
            levels=LevelConfig.for_k(k),
            policy=base.policy,
            ablations=base.ablations,
        )
        cells.extend((str(app_path), str(oracle_path), report, cfg.with_seed(s)) for s in seeds)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_sweep_cell, cells, chunksize=8))
    else:
        results = [_sweep_cell(c) for c in cells]
    rows = []
    for k in ks:
        mine = [r for r in results if r[0] == k]
        won = [r[3] for r in mine if r[2] == CRASH_REPRODUCED]
        rows.append(
            {
                "k": k,
                "runs": len(mine),
                "reproduced": len(won),
                "success_rate": len(won) / len(mine),
                "mean_iterations": statistics.fmean(won) if won else None,
                "mean_iterations_all": statistics.fmean(r[3] for r in mine),
            }
        )
    return rows


def format_sweep(rows: list[dict]) -> str:
    lines = [f"{'k':>3} {'runs':>5} {'reproduced':>10} {'success':>8} {'mean_iter':>9}"]
    for r in rows:
        mean = "-" if r["mean_iterations"] is None else f"{r['mean_iterations']:.1f}"
        lines.append(f"{r['k']:>3} {r['runs']:>5} {r['reproduced']:>10} {r['success_rate']:>8.3f} {mean:>9}")
    return "\n".join(lines)


def cmd_sweep(args) -> int:
    mode, oracle_path = parse_oracle_arg(args.oracle)
    if mode != "scripted":
        raise UsageError("sweep only supports scripted:<file> oracles")
    seeds = parse_seed_range(args.seeds)
    if not seeds:
        raise UsageError(f"empty seed range {args.seeds!r}")
    ks = _int_list(args.k_list)
    if not ks:
        raise UsageError("empty --k-list")
    report = Path(args.report).read_text(encoding="utf-8") if args.report else DEFAULT_REPORT
    load_scripted_oracle(oracle_path, load_sim_app(args.app))
    base = SearchConfig(
        iteration_budget=args.iterations,
        wall_clock_budget=args.budget_minutes * 60.0,
        max_depth=args.max_depth,
        policy=SelectionPolicy(temperature=args.tau, exploration=args.c),
    )
    rows = sweep(args.app, oracle_path, report, seeds, ks, base, args.jobs)
    print(format_sweep(rows))
    if args.out:
        _write_json(Path(args.out), {"seeds": [seeds[0], seeds[-1]], "rows": rows})
    return EXIT_OK


def _search_args(p, with_seed=True):
    p.add_argument("--k", type=int, default=3, help="expansion width (default 3)")
    p.add_argument("--iterations", type=int, default=200, help="iteration budget (default 200)")
    p.add_argument("--budget-minutes", type=float, default=30.0, help="wall-clock budget (default 30)")
    p.add_argument("--max-depth", type=int, default=25)
    p.add_argument("--tau", type=float, default=1.8, help="softmax temperature (default 1.8)")
    p.add_argument("--c", type=float, default=1.414, help="UCB exploration constant (default 1.414)")
    if with_seed:
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="repro-mcts", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="search for a crash-reproducing action sequence")
    p.add_argument("--app", help="sim-app JSON file")
    p.add_argument("--report", help="bug report text file")
    p.add_argument("--oracle", help="scripted:<file> or remote")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--manifest", help="re-run exactly what a previous manifest.json describes")
    p.add_argument("--ablate", default="", help=f"comma-separated: {', '.join(sorted(ABLATION_FLAGS))}")
    p.add_argument("--levels", help="HIGH,MID,LOW level values (default 5,2,1 at k=3)")
    p.add_argument("--thresholds", help="LOW,HIGH raw-score band edges (default 3,8)")
    p.add_argument("--endpoint", help="chat-completions URL for --oracle remote")
    p.add_argument("--model", default="gpt-4o")
    p.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    _search_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="replay a trace file and verify its digests")
    p.add_argument("--app", required=True)
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("validate", help="check sim-app and scripted-oracle files")
    p.add_argument("--app")
    p.add_argument("--scripted-oracle")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="success rate over a seed x k grid")
    p.add_argument("--app", required=True)
    p.add_argument("--oracle", required=True, help="scripted:<file>")
    p.add_argument("--report")
    p.add_argument("--seeds", default="0..99", help="inclusive range A..B")
    p.add_argument("--k-list", default="1,2,3,4,5")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="write the table as JSON here")
    _search_args(p, with_seed=False)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ReproError, OSError) as exc:
        if isinstance(exc, SpecError):
            for issue in exc.issues:
                print(f"error: {issue}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

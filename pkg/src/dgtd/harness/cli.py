"""Command-line entry point.

Subcommands::

    dgtd gen     --states 100 --agents 5 --seed 7 --out DIR
    dgtd solve   (--preset NAME | --config FILE)
    dgtd run     (--preset NAME | --config FILE | preset NAME) [overrides]
    dgtd ode     (--preset NAME | --config FILE) --t-end T [--projected]
    dgtd preset  NAME [--show]

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 file I/O error.  Failures print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DgtdError, DivergenceError
from ..learn import SamplingMode
from ..mrp import random_mrp
from ..network import parse_graph, path as path_graph, write_edge_list
from ..textio import write_matrix
from . import runner
from .config import RunConfig
from .export import dump_json, export_metrics, summary_block
from .presets import PRESETS, get_preset

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4
OUTPUT_ENV = "DGTD_OUTPUT_DIR"

log = logging.getLogger("dgtd")


def _default_out() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "."))


def _add_source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--config", type=Path, help="RunConfig JSON (a run summary also works)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgtd", description="Distributed primal-dual GTD laboratory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a seeded random instance to disk")
    gen.add_argument("--states", type=int, required=True)
    gen.add_argument("--agents", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--gamma", type=float, default=0.5)
    gen.add_argument("--reward", default="gaussian", choices=["gaussian", "constant", "trading"])
    gen.add_argument("--graph", default=None, help="graph preset; defaults to path:AGENTS")
    gen.add_argument("--out", type=Path, default=None)

    solve = sub.add_parser("solve", help="print oracle solution as JSON")
    _add_source(solve)
    solve.add_argument("--out", type=Path, default=None)

    run = sub.add_parser("run", help="run DGTD or a single-agent baseline")
    run.add_argument("target", nargs="*", help="optional 'preset NAME'")
    _add_source(run)
    run.add_argument("--algorithm", choices=["dgtd", "gtd", "td0"], default="dgtd")
    run.add_argument("--agent", type=int, default=None, help="reward of this agent for gtd/td0 (default: central)")
    run.add_argument("--iterations", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--mode", choices=[m.value for m in SamplingMode])
    run.add_argument("--cadence", type=int)
    proj = run.add_mutually_exclusive_group()
    proj.add_argument("--no-projection", dest="projection", action="store_false", default=None)
    proj.add_argument("--projection", dest="projection", action="store_true")
    run.add_argument("--box-radius", type=float)
    run.add_argument("--format", choices=["csv", "json"], default="csv")
    run.add_argument("--out", type=Path, default=None)

    ode = sub.add_parser("ode", help="integrate the mean dynamics and write a CSV trace")
    _add_source(ode)
    ode.add_argument("--t-end", type=float, required=True)
    ode.add_argument("--step", type=float, default=None)
    ode.add_argument("--projected", action="store_true")
    ode.add_argument("--record-every", type=int, default=1)
    ode.add_argument("--out", type=Path, default=None)

    pre = sub.add_parser("preset", help="run (or show) a named preset")
    pre.add_argument("name", choices=sorted(PRESETS))
    pre.add_argument("--show", action="store_true", help="print the resolved config and exit")
    pre.add_argument("--iterations", type=int)
    pre.add_argument("--seed", type=int)
    pre.add_argument("--out", type=Path, default=None)
    return parser


def _config(args) -> RunConfig:
    if getattr(args, "config", None) is not None:
        return RunConfig.load(args.config)
    if getattr(args, "preset", None) is not None:
        return get_preset(args.preset)
    raise ConfigError("need --preset or --config")


def _override(cfg: RunConfig, args) -> RunConfig:
    for name in ("iterations", "seed", "mode", "cadence", "projection", "box_radius"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return cfg


def cmd_gen(args) -> int:
    out = args.out or _default_out()
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    mrp = random_mrp(args.states, args.agents, args.reward, args.gamma, rng)
    net = parse_graph(args.graph) if args.graph else path_graph(args.agents)
    write_matrix(out / "transition.txt", mrp.P)
    write_matrix(out / "rewards.txt", mrp.rewards)
    write_edge_list(net, out / "graph.txt")
    cfg = RunConfig(
        instance={"source": "files", "transition": "transition.txt", "rewards": "rewards.txt",
                  "seed": args.seed, "reward": args.reward},
        gamma=args.gamma,
        graph="graph.txt",
        features={"kind": "rbf", "q": min(3, args.states), "width": None, "values": "index"},
    )
    (out / "config.json").write_text(cfg.dumps() + "\n")
    print(json.dumps({"written": ["transition.txt", "rewards.txt", "graph.txt", "config.json"], "dir": str(out)}))
    return EXIT_OK


def cmd_solve(args) -> int:
    report = runner.solve_report(_config(args))
    text = dump_json(report, args.out)
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


def _write_run(series, cfg: RunConfig, notes: dict, out: Path, fmt: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    summary = summary_block(series, cfg.to_dict(), cfg.seed, notes)
    metrics_path = out / ("metrics.csv" if fmt == "csv" else "metrics.json")
    export_metrics(series, metrics_path, fmt, summary)
    dump_json(summary, out / "summary.json")
    return metrics_path


def _run_config(cfg: RunConfig, args, out: Path | None) -> int:
    algorithm = getattr(args, "algorithm", "dgtd")
    agent = getattr(args, "agent", None)
    out = out or Path(cfg.output or _default_out())
    if algorithm == "td0":
        w = runner.run_td(cfg, agent)
        out.mkdir(parents=True, exist_ok=True)
        dump_json({"algorithm": "td0", "w_final": w, "agent": agent, "seed": cfg.seed, "config": cfg.to_dict()},
                  out / "summary.json")
        print(json.dumps({"summary": str(out / "summary.json")}))
        return EXIT_OK
    if algorithm == "gtd":
        series, notes = runner.run_gtd(cfg, agent), {"algorithm": "gtd", "agent": agent}
    else:
        series, notes = runner.run_dgtd(cfg)
        notes["algorithm"] = "dgtd"
    metrics_path = _write_run(series, cfg, notes, out, getattr(args, "format", "csv"))
    last = series.records[-1]
    print(json.dumps({"metrics": str(metrics_path), "summary": str(out / "summary.json"),
                      "final_consensus_err": last.consensus_err, "final_dist_w_star": last.dist_w_star}))
    return EXIT_OK


def cmd_run(args) -> int:
    if args.target:
        if len(args.target) != 2 or args.target[0] != "preset":
            raise ConfigError(f"unexpected arguments {args.target}; use 'run preset NAME'")
        cfg = get_preset(args.target[1])
    else:
        cfg = _config(args)
    return _run_config(_override(cfg, args), args, args.out)


def cmd_ode(args) -> int:
    cfg = _config(args)
    trace = runner.ode_trace(cfg, args.t_end, args.step, args.projected, args.record_every)
    cols = list(trace)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in zip(*(trace[c] for c in cols)):
            writer.writerow([repr(float(v)) for v in row])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_preset(args) -> int:
    cfg = _override(get_preset(args.name), args)
    if args.show:
        print(cfg.dumps())
        return EXIT_OK
    return _run_config(cfg, args, args.out)


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "run": cmd_run, "ode": cmd_ode, "preset": cmd_preset}


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: --help or usage error
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DivergenceError as exc:
        return _fail(EXIT_DIVERGENCE, exc)
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except DgtdError as exc:
        return _fail(EXIT_CONFIG, exc)


def main() -> None:
    sys.exit(cli_main())

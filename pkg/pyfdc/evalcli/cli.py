"""Command line interface: `pyfdc <subcommand> [options]`."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..config import Config
from ..cutopt import NsgaConfig, calibration_table, optimize_cuts
from ..detector import DetectorGeometry
from ..edgegnn import (
    TrainConfig,
    classify_graphs,
    init_classifier,
    load_classifier,
    save_classifier,
    score_rows,
    train,
)
from ..exceptions import ValidationError
from ..graphbuild import (
    CutConfig,
    build_labeled_graphs,
    builder_metrics,
    gap_histogram,
    read_graphs,
    write_graphs,
)
from ..io import read_edge_csv, write_edge_csv
from ..simgen import SimConfig, generate_dataset, generate_event, read_events, write_events
from ..tradfind import TradConfig, run_traditional
from . import plots
from .bench import compare_iterations, run_benchmark
from .evaluate import edge_set_rows, metrics_rows, sweep_rows
from .metrics import default_grid, efficiency_at_purity

logger = logging.getLogger("pyfdc")

LOG_FORMAT = "%(asctime)s - %(name)s: %(levelname)s - %(message)s"
EXIT_VALIDATION = 2


def setup_logging(level: str) -> None:
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
    root = logging.getLogger("pyfdc")
    root.handlers[:] = [handler]
    root.setLevel(level.upper())


class Context:
    """Configuration and output directory shared by the subcommands."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = Config(args.config)
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.geom = DetectorGeometry.from_config(self.config.section("geometry"))

    def seed(self, section: str, key: str) -> int:
        if self.args.seed is not None:
            return int(self.args.seed)
        return int(self.config.section(section)[key])

    def cuts(self) -> CutConfig:
        path = getattr(self.args, "cuts", None)
        if path:
            return CutConfig.read(path)
        return CutConfig.from_config(self.config.section("cuts"))

    def truth_skip_max(self) -> int:
        ts = getattr(self.args, "truth_skip_max", None)
        return self.cuts().skip_max if ts is None else ts

    def path(self, name: str) -> Path:
        return self.out / name


def _events(paths: Sequence[str]) -> list:
    return [ev for p in paths for ev in read_events(p)]


def cmd_simulate(ctx: Context) -> None:
    sec = ctx.config.section("simulation")
    sec["rng_seed"] = ctx.seed("simulation", "rng_seed")
    cfg = SimConfig.from_config(sec)
    n = ctx.args.n_events or int(sec["n_events"])
    parts = generate_dataset(cfg, ctx.geom, n, tuple(sec["split"]))
    for name, evs in zip(("train", "val", "test"), parts):
        write_events(ctx.path(f"events_{name}.jsonl"), evs)
        logger.info("%d %s events written", len(evs), name)
    ctx.geom.write(ctx.path("geometry.txt"))


def cmd_build(ctx: Context) -> None:
    events = _events(ctx.args.events)
    cuts = ctx.cuts()
    graphs = build_labeled_graphs(events, cuts, ctx.geom)
    write_graphs(ctx.path(ctx.args.name), graphs)
    m = builder_metrics(graphs, events, ctx.truth_skip_max())
    logger.info("builder efficiency %.4f, purity %.4f", m.efficiency, m.purity)
    logger.info("missing-plane gaps: %s", gap_histogram(events))
    with open(ctx.path("builder_metrics.json"), "w") as f:
        json.dump(m.as_dict(), f, indent=2)


def cmd_train(ctx: Context) -> None:
    model = ctx.config.section("model")
    tsec = ctx.config.section("training")
    tsec["seed"] = ctx.seed("training", "seed")
    if ctx.args.epochs is not None:
        tsec["epochs"] = ctx.args.epochs
    cfg = TrainConfig.from_config(tsec)
    width = ctx.args.width or int(model["width"])
    depth = ctx.args.depth or int(model["depth"])
    n_iters = ctx.args.iters or int(model["n_iters"])
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    init = init_classifier(width, depth, n_iters, ctx.geom, rng)
    train_graphs = read_graphs(ctx.args.train)
    val_graphs = read_graphs(ctx.args.val) if ctx.args.val else []
    params, history = train(init, train_graphs, val_graphs, cfg)
    save_classifier(ctx.path(ctx.args.name), params)
    with open(ctx.path("history.json"), "w") as f:
        json.dump(history.as_dict(), f, indent=2)


def cmd_infer(ctx: Context) -> None:
    params = load_classifier(ctx.args.model)
    graphs = read_graphs(ctx.args.graphs)
    scores = classify_graphs(params, graphs, ctx.args.batch_size)
    rows = [r for g, s in zip(graphs, scores) for r in score_rows(g, s)]
    write_edge_csv(ctx.path(ctx.args.name), rows)
    logger.info("%d edge scores written", len(rows))


def cmd_baseline(ctx: Context) -> None:
    cfg = TradConfig.from_config(ctx.config.section("tradfind"))
    edges = set()
    for ev in _events(ctx.args.events):
        edges |= run_traditional(ev, ctx.geom, cfg)
    write_edge_csv(ctx.path(ctx.args.name), edge_set_rows(edges))
    logger.info("%d predicted edges written", len(edges))


def cmd_optimize_cuts(ctx: Context) -> None:
    sec = ctx.config.section("cutopt")
    sec["seed"] = ctx.seed("cutopt", "seed")
    cfg = NsgaConfig.from_config(sec)
    if ctx.args.events:
        events = _events(ctx.args.events)
    else:
        sim = SimConfig.from_config(ctx.config.section("simulation"))
        events = [generate_event(sim, ctx.geom, i) for i in range(int(sec["n_calibration"]))]
    table = calibration_table(events, ctx.geom, cfg.truth_skip_max)
    archive, chosen = optimize_cuts(table, cfg)
    archive.write_csv(ctx.path("archive.csv"))
    archive.write_history_csv(ctx.path("hypervolume.csv"))
    chosen.genome.to_cuts().write(ctx.path("cuts.txt"))
    plots.plot_pareto(archive.objectives(), ctx.path("pareto.svg"), chosen.objectives.as_tuple())
    plots.plot_hypervolume(archive.hv_history, ctx.path("hypervolume.svg"))
    logger.info(
        "chosen cuts %s: efficiency %.4f, purity %.4f",
        chosen.genome, chosen.objectives.efficiency, chosen.objectives.purity,
    )


def cmd_evaluate(ctx: Context) -> None:
    events = _events(ctx.args.events)
    ts = ctx.truth_skip_max()
    n = int(ctx.config.section("evaluation")["n_thresholds"])
    threshold = float(ctx.config.section("training")["threshold"])
    report = {}
    baseline = None
    if ctx.args.baseline:
        b = metrics_rows(read_edge_csv(ctx.args.baseline), events, ts)
        baseline = (b.efficiency, b.purity)
        report["traditional"] = b.as_dict()
    if ctx.args.scores:
        rows = read_edge_csv(ctx.args.scores)
        curve = sweep_rows(rows, events, ts, default_grid(n))
        report["gnn_at_threshold"] = metrics_rows(rows, events, ts, threshold).as_dict()
        if baseline is not None:
            report["gnn_at_traditional_purity"] = vars(efficiency_at_purity(curve, baseline[1]))
        with open(ctx.path("sweep.csv"), "w") as f:
            f.write("threshold,efficiency,purity\n")
            for t, e, p in zip(curve.thresholds, curve.efficiency, curve.purity):
                f.write(f"{t:.2f},{e!r},{p!r}\n")
        plots.plot_sweep(curve, ctx.path("sweep.svg"), baseline)
    if ctx.args.draw_event is not None:
        by_id = {ev.event_id: ev for ev in events}
        if ctx.args.draw_event not in by_id:
            raise ValidationError(f"event {ctx.args.draw_event} not found")
        ev = by_id[ctx.args.draw_event]
        g, scores = None, None
        if ctx.args.graphs:
            for cand in read_graphs(ctx.args.graphs):
                if cand.event_ids() == [ev.event_id]:
                    g = cand
            if g is not None and ctx.args.model:
                scores = classify_graphs(load_classifier(ctx.args.model), [g])[0]
        plots.plot_event(ev, ctx.geom, ctx.path(f"event_{ev.event_id}.svg"), g, scores, threshold)
    with open(ctx.path("metrics.json"), "w") as f:
        json.dump(report, f, indent=2)
    logger.info("evaluation: %s", json.dumps(report))


def cmd_bench(ctx: Context) -> None:
    sec = ctx.config.section("evaluation")
    events = _events(ctx.args.events)[: int(sec["n_bench_events"])]
    sizes = ctx.args.batch_sizes or sec["batch_sizes"]
    trials = ctx.args.trials or int(sec["trials"])
    params = load_classifier(ctx.args.model) if ctx.args.model else None
    trad = TradConfig.from_config(ctx.config.section("tradfind"))
    report = run_benchmark(events, params, ctx.cuts(), ctx.geom, sizes, trials, trad)
    report.write_csv(ctx.path("bench.csv"))
    plots.plot_timing(report, ctx.path("timing.svg"))


def cmd_ablate(ctx: Context) -> None:
    events = _events(ctx.args.events)
    graphs = read_graphs(ctx.args.graphs)
    ts = ctx.truth_skip_max()
    target = ctx.args.target_purity
    if target is None:
        cfg = TradConfig.from_config(ctx.config.section("tradfind"))
        edges = set()
        for ev in events:
            edges |= run_traditional(ev, ctx.geom, cfg)
        target = metrics_rows(edge_set_rows(edges), events, ts).purity
    result = compare_iterations(
        load_classifier(ctx.args.few), load_classifier(ctx.args.many), graphs, events,
        target, ts, trials=ctx.args.trials,
    )
    with open(ctx.path("ablation.json"), "w") as f:
        json.dump(result.as_dict(), f, indent=2)
    logger.info("inference time ratio %.2f", result.time_ratio)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="overrides the configured seed")
    p.add_argument("--config", type=Path, default=None, help="YAML configuration file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pyfdc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate train/val/test events")
    p.add_argument("--n-events", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build", help="build labeled graphs from events")
    p.add_argument("--events", nargs="+", required=True)
    p.add_argument("--cuts", default=None, help="key = value cut file")
    p.add_argument("--truth-skip-max", type=int, default=None)
    p.add_argument("--name", default="graphs.jsonl")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="train the edge classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--name", default="model.bin")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="score the edges of graphs")
    p.add_argument("--model", required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--name", default="scores.csv")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("baseline", help="run the traditional method")
    p.add_argument("--events", nargs="+", required=True)
    p.add_argument("--name", default="baseline.csv")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("optimize-cuts", help="NSGA-II search of graph-builder cuts")
    p.add_argument("--events", nargs="*", default=None, help="calibration events")
    p.set_defaults(func=cmd_optimize_cuts)

    p = sub.add_parser("evaluate", help="efficiency and purity of edge scores")
    p.add_argument("--events", nargs="+", required=True)
    p.add_argument("--scores", default=None)
    p.add_argument("--baseline", default=None)
    p.add_argument("--cuts", default=None)
    p.add_argument("--truth-skip-max", type=int, default=None)
    p.add_argument("--draw-event", type=int, default=None)
    p.add_argument("--graphs", default=None)
    p.add_argument("--model", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="time graph building and inference")
    p.add_argument("--events", nargs="+", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--cuts", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--batch-sizes", type=int, nargs="+", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="compare two message-passing iteration counts")
    p.add_argument("--few", required=True, help="checkpoint with fewer iterations")
    p.add_argument("--many", required=True, help="checkpoint with more iterations")
    p.add_argument("--graphs", required=True)
    p.add_argument("--events", nargs="+", required=True)
    p.add_argument("--cuts", default=None)
    p.add_argument("--truth-skip-max", type=int, default=None)
    p.add_argument("--target-purity", type=float, default=None)
    p.add_argument("--trials", type=int, default=3)
    p.set_defaults(func=cmd_ablate)

    for p in sub.choices.values():
        _common(p)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = Context(args)
        setup_logging(
            "DEBUG" if args.verbose else ctx.config.section("logging")["level"]
        )
        args.func(ctx)
    except ValidationError as e:
        if not logging.getLogger("pyfdc").handlers:
            setup_logging("INFO")
        logger.error(e.msg)
        return EXIT_VALIDATION
    return 0


if __name__ == "__main__":
    sys.exit(main())

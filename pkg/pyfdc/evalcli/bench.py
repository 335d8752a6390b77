"""Wall-clock benchmarks of graph building and inference, and the iteration ablation."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..detector import DetectorGeometry
from ..edgegnn import EdgeClassifierParams, classify_edges, classify_graphs, score_rows
from ..exceptions import PreconditionError
from ..graphbuild import CutConfig, EventGraph, build_batched_graph
from ..simgen import Event
from ..tradfind import TradConfig, run_traditional
from .evaluate import sweep_rows
from .metrics import MatchedPurity, efficiency_at_purity

logger = logging.getLogger(__name__)

MIN_TRIALS = 3
STAGES = ("build", "infer", "total")


@dataclass(frozen=True)
class BenchReport:
    """Per-event seconds, shaped (n_batch_sizes, trials) per stage."""

    batch_sizes: tuple[int, ...]
    trials: int
    n_events: int
    build: np.ndarray
    infer: np.ndarray
    traditional: Optional[np.ndarray] = None

    @property
    def total(self) -> np.ndarray:
        return self.build + self.infer

    def mean(self, stage: str) -> np.ndarray:
        return getattr(self, stage).mean(axis=-1)

    def spread(self, stage: str) -> np.ndarray:
        return getattr(self, stage).std(axis=-1, ddof=1)

    def write_csv(self, path: Union[Path, str]) -> None:
        """One row per (stage, batch size): mean and spread in microseconds per event."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("stage", "batch_size", "mean_us", "std_us", "trials"))
            for stage in STAGES:
                mean, std = self.mean(stage), self.spread(stage)
                for b, m, s in zip(self.batch_sizes, mean, std):
                    w.writerow((stage, b, f"{m * 1e6:.3f}", f"{s * 1e6:.3f}", self.trials))
            if self.traditional is not None:
                w.writerow(
                    ("traditional", 1, f"{self.traditional.mean() * 1e6:.3f}",
                     f"{self.traditional.std(ddof=1) * 1e6:.3f}", self.trials)
                )


def _chunks(events: Sequence[Event], size: int) -> list[Sequence[Event]]:
    return [events[i : i + size] for i in range(0, len(events), size)]


def _time_pass(
    chunks: Sequence[Sequence[Event]], params: EdgeClassifierParams, cuts: CutConfig,
    geom: DetectorGeometry,
) -> tuple[float, float]:
    t_build = t_infer = 0.0
    for chunk in chunks:
        t0 = time.perf_counter()
        g = build_batched_graph(chunk, cuts, geom)
        t1 = time.perf_counter()
        classify_edges(params, g)
        t_infer += time.perf_counter() - t1
        t_build += t1 - t0
    return t_build, t_infer


def run_benchmark(
    events: Sequence[Event],
    params: Optional[EdgeClassifierParams],
    cuts: CutConfig,
    geom: DetectorGeometry,
    batch_sizes: Sequence[int] = (1, 2, 4, 8, 16, 32, 64, 128, 256),
    trials: int = 10,
    traditional: Optional[TradConfig] = None,
) -> BenchReport:
    """Times building and inference over `events` at each batch size.

    A warm-up pass precedes the timed trials of every batch size. With
    `traditional` set, the per-event time of the traditional method is
    measured too.
    """
    if params is None:
        raise PreconditionError("run_benchmark", "missing checkpoint")
    if trials < MIN_TRIALS:
        raise PreconditionError("run_benchmark", f"need at least {MIN_TRIALS} trials, got {trials}")
    if not events:
        raise PreconditionError("run_benchmark", "no events")
    n = len(events)
    build = np.zeros((len(batch_sizes), trials))
    infer = np.zeros((len(batch_sizes), trials))
    for i, b in enumerate(batch_sizes):
        chunks = _chunks(events, b)
        _time_pass(chunks[:1], params, cuts, geom)
        for t in range(trials):
            tb, ti = _time_pass(chunks, params, cuts, geom)
            build[i, t], infer[i, t] = tb / n, ti / n
        logger.info(
            "batch %d: build %.1f us/event, infer %.1f us/event",
            b, build[i].mean() * 1e6, infer[i].mean() * 1e6,
        )
    trad = None
    if traditional is not None:
        run_traditional(events[0], geom, traditional)
        trad = np.zeros(trials)
        for t in range(trials):
            t0 = time.perf_counter()
            for ev in events:
                run_traditional(ev, geom, traditional)
            trad[t] = (time.perf_counter() - t0) / n
    return BenchReport(
        batch_sizes=tuple(int(b) for b in batch_sizes), trials=trials, n_events=n,
        build=build, infer=infer, traditional=trad,
    )


@dataclass(frozen=True)
class AblationResult:
    """Matched-purity efficiency and inference time of two iteration counts."""

    target_purity: float
    few: MatchedPurity
    many: MatchedPurity
    few_seconds: float
    many_seconds: float

    @property
    def time_ratio(self) -> float:
        return self.many_seconds / self.few_seconds if self.few_seconds > 0 else float("inf")

    def as_dict(self) -> dict:
        return {
            "target_purity": self.target_purity,
            "few": vars(self.few),
            "many": vars(self.many),
            "few_seconds": self.few_seconds,
            "many_seconds": self.many_seconds,
            "time_ratio": self.time_ratio,
        }


def _timed_scores(
    p: EdgeClassifierParams, graphs: Sequence[EventGraph], batch_size: int, trials: int
) -> tuple[list[np.ndarray], float]:
    classify_graphs(p, graphs[:1], batch_size)
    times = []
    for _ in range(trials):
        t0 = time.perf_counter()
        scores = classify_graphs(p, graphs, batch_size)
        times.append(time.perf_counter() - t0)
    return scores, float(np.median(times))


def compare_iterations(
    few: EdgeClassifierParams,
    many: EdgeClassifierParams,
    graphs: Sequence[EventGraph],
    events: Sequence[Event],
    target_purity: float,
    truth_skip_max: int = 3,
    batch_size: int = 128,
    trials: int = MIN_TRIALS,
) -> AblationResult:
    """Efficiency at `target_purity` and inference time of two trained models."""
    if trials < MIN_TRIALS:
        raise PreconditionError("compare_iterations", f"need at least {MIN_TRIALS} trials")
    out = []
    for p in (few, many):
        scores, seconds = _timed_scores(p, graphs, batch_size, trials)
        rows = [r for g, s in zip(graphs, scores) for r in score_rows(g, s)]
        curve = sweep_rows(rows, events, truth_skip_max)
        out.append((efficiency_at_purity(curve, target_purity), seconds))
        logger.info("I=%d: %.3f s inference", p.n_iters, seconds)
    return AblationResult(
        target_purity=target_purity, few=out[0][0], many=out[1][0],
        few_seconds=out[0][1], many_seconds=out[1][1],
    )

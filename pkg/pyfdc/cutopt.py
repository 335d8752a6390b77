"""NSGA-II search of graph-builder cuts maximizing (efficiency, purity)."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .detector import DetectorGeometry
from .exceptions import InvalidConfigError, PreconditionError
from .graphbuild import CutConfig, PairTable, candidate_pairs
from .simgen import Event

logger = logging.getLogger(__name__)

# (low, high) per gene: max_dxy, max_dxy_over_dz, max_abs_dphi, skip_max
GENOME_BOUNDS = np.array([[1.0, 100.0], [0.1, 50.0], [0.01, np.pi], [0.0, 6.0]])
SKIP_GENE = 3
MAX_GENOME_SKIP = 6


@dataclass(frozen=True)
class Genome:
    """One set of graph-building cuts, as searched by the optimizer.

    Each gene lies within its GENOME_BOUNDS row. The max_abs_dphi range starts
    at 0.01 rather than 0 so that every genome admits some segments.
    """

    max_dxy: float
    max_dxy_over_dz: float
    max_abs_dphi: float
    skip_max: int

    def __post_init__(self):
        values = self.as_array()
        if np.any(values < GENOME_BOUNDS[:, 0]) or np.any(values > GENOME_BOUNDS[:, 1]):
            raise PreconditionError("Genome", f"out of bounds: {values.tolist()}")
        if int(self.skip_max) != self.skip_max:
            raise PreconditionError("Genome", "skip_max must be an integer")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.max_dxy, self.max_dxy_over_dz, self.max_abs_dphi, float(self.skip_max)]
        )

    @classmethod
    def from_array(cls, a: np.ndarray) -> Genome:
        return cls(float(a[0]), float(a[1]), float(a[2]), int(round(a[3])))

    def to_cuts(self) -> CutConfig:
        return CutConfig(self.max_dxy, self.max_dxy_over_dz, self.max_abs_dphi, self.skip_max)


@dataclass(frozen=True)
class Objectives:
    efficiency: float
    purity: float

    def as_tuple(self) -> tuple[float, float]:
        return self.efficiency, self.purity


ObjLike = Union[Objectives, Sequence[float]]


def _obj(a: ObjLike) -> np.ndarray:
    return np.asarray(a.as_tuple() if isinstance(a, Objectives) else a, dtype=np.float64)


def dominates(a: ObjLike, b: ObjLike) -> bool:
    """a >= b in every objective and > in at least one (maximization)."""
    a, b = _obj(a), _obj(b)
    return bool(np.all(a >= b) and np.any(a > b))


def _dominance_matrix(P: np.ndarray) -> np.ndarray:
    ge = np.all(P[:, None, :] >= P[None, :, :], axis=2)
    gt = np.any(P[:, None, :] > P[None, :, :], axis=2)
    return ge & gt


def nondominated_sort(points: Sequence[ObjLike]) -> list[list[int]]:
    """Indices of `points` grouped in fronts, best front first."""
    if len(points) == 0:
        return []
    P = np.stack([_obj(p) for p in points])
    dom = _dominance_matrix(P)
    n_dominators = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(n_dominators == 0)
    while len(current):
        fronts.append(current.tolist())
        n_dominators = n_dominators - dom[current].sum(axis=0)
        n_dominators[current] = -1
        current = np.flatnonzero(n_dominators == 0)
    return fronts


def hypervolume(front: Sequence[ObjLike], ref: ObjLike = (0.0, 0.0)) -> float:
    """Area dominated by `front` and bounded below by `ref` (2 objectives)."""
    if len(front) == 0:
        return 0.0
    P = np.stack([_obj(p) for p in front])
    r = _obj(ref)
    if np.any(P < r):
        raise PreconditionError("hypervolume", "every point must dominate the reference")
    order = np.lexsort((-P[:, 1], -P[:, 0]))
    area, y_max = 0.0, r[1]
    for x, y in P[order]:
        if y > y_max:
            area += (x - r[0]) * (y - y_max)
            y_max = y
    return float(area)


def crowding_distance(P: np.ndarray) -> np.ndarray:
    """Crowding distance of each row of P within one front; boundaries get inf."""
    n = len(P)
    if n <= 2:
        return np.full(n, np.inf)
    dist = np.zeros(n)
    for j in range(P.shape[1]):
        order = np.argsort(P[:, j], kind="stable")
        span = P[order[-1], j] - P[order[0], j]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0.0:
            dist[order[1:-1]] += (P[order[2:], j] - P[order[:-2], j]) / span
    return dist


def rank_and_crowding(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rank = np.empty(len(P), dtype=np.int64)
    crowd = np.empty(len(P))
    for k, front in enumerate(nondominated_sort(list(P))):
        rank[front] = k
        crowd[front] = crowding_distance(P[front])
    return rank, crowd


@dataclass(frozen=True)
class NsgaConfig:
    population: int = 64
    generations: int = 15
    mutation_prob: float = 0.01
    crossover_prob: float = 0.95
    mutation_sigma_frac: float = 0.1
    truth_skip_max: int = 3
    min_efficiency: float = 0.99
    seed: int = 7

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise InvalidConfigError("population", "must be an even number >= 2")
        for name in ("mutation_prob", "crossover_prob", "min_efficiency"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfigError(name, "must be in [0, 1]")
        if self.generations < 0:
            raise InvalidConfigError("generations", "must be >= 0")

    @classmethod
    def from_config(cls, section: dict) -> NsgaConfig:
        known = {k: v for k, v in section.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def calibration_table(
    events: Sequence[Event], geom: DetectorGeometry, truth_skip_max: int = 3
) -> PairTable:
    """Pair table covering every genome window, with fixed truth segments."""
    if len(events) == 0:
        raise PreconditionError("evaluate_genome", "empty calibration set")
    return candidate_pairs(events, geom, 1 + MAX_GENOME_SKIP, truth_skip_max)


def evaluate_genome(g: Genome, calibration: PairTable) -> Objectives:
    """Builder efficiency and purity of the cuts of `g` on the calibration set."""
    m = calibration.metrics(g.to_cuts())
    return Objectives(m.efficiency, m.purity)


def random_population(n: int, rng: np.random.Generator) -> np.ndarray:
    pop = rng.uniform(GENOME_BOUNDS[:, 0], GENOME_BOUNDS[:, 1], size=(n, len(GENOME_BOUNDS)))
    pop[:, SKIP_GENE] = rng.integers(0, MAX_GENOME_SKIP + 1, size=n)
    return pop


def _tournament(rank: np.ndarray, crowd: np.ndarray, rng: np.random.Generator, n: int):
    a = rng.integers(0, len(rank), size=n)
    b = rng.integers(0, len(rank), size=n)
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] >= crowd[b]))
    return np.where(a_wins, a, b)


def _vary(parents: np.ndarray, rng: np.random.Generator, cfg: NsgaConfig) -> np.ndarray:
    """Blend crossover on real genes, uniform on skip_max, then Gaussian mutation."""
    children = parents.copy()
    lo, hi = GENOME_BOUNDS[:, 0], GENOME_BOUNDS[:, 1]
    for i in range(0, len(parents) - 1, 2):
        if rng.random() >= cfg.crossover_prob:
            continue
        a, b = parents[i], parents[i + 1]
        u = rng.random(SKIP_GENE)
        children[i, :SKIP_GENE] = u * a[:SKIP_GENE] + (1.0 - u) * b[:SKIP_GENE]
        children[i + 1, :SKIP_GENE] = (1.0 - u) * a[:SKIP_GENE] + u * b[:SKIP_GENE]
        if rng.random() < 0.5:
            children[i, SKIP_GENE], children[i + 1, SKIP_GENE] = b[SKIP_GENE], a[SKIP_GENE]
    mutate = rng.random(children.shape) < cfg.mutation_prob
    sigma = cfg.mutation_sigma_frac * (hi - lo)
    noise = rng.normal(0.0, 1.0, size=children.shape) * sigma
    step = rng.choice([-1.0, 1.0], size=len(children))
    children[:, :SKIP_GENE] += np.where(mutate[:, :SKIP_GENE], noise[:, :SKIP_GENE], 0.0)
    children[:, SKIP_GENE] += np.where(mutate[:, SKIP_GENE], step, 0.0)
    return np.clip(children, lo, hi)


def _survivors(P: np.ndarray, n: int) -> np.ndarray:
    """Indices of the n best rows of P by (front, crowding)."""
    chosen: list[int] = []
    for front in nondominated_sort(list(P)):
        if len(chosen) + len(front) <= n:
            chosen += front
            continue
        crowd = crowding_distance(P[front])
        order = np.argsort(-crowd, kind="stable")
        chosen += [front[i] for i in order[: n - len(chosen)]]
        break
    return np.array(chosen, dtype=np.int64)


Evaluator = Callable[[np.ndarray], np.ndarray]


def nsga2_generation(
    pop: np.ndarray,
    objs: np.ndarray,
    rng: np.random.Generator,
    evaluate: Evaluator,
    cfg: NsgaConfig = NsgaConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """One generation: tournament, variation, elitist survival over parents and offspring.

    Args:
        pop: (population, 4) genomes.
        objs: (population, 2) objectives of `pop`.
        evaluate: maps genome rows to objective rows.

    Returns:
        (next population, its objectives)
    """
    if len(pop) != cfg.population or len(objs) != len(pop):
        raise PreconditionError(
            "nsga2_generation", f"population of {len(pop)} rows, expected {cfg.population}"
        )
    rank, crowd = rank_and_crowding(objs)
    parents = pop[_tournament(rank, crowd, rng, len(pop))]
    children = _vary(parents, rng, cfg)
    union = np.concatenate([pop, children])
    union_objs = np.concatenate([objs, evaluate(children)])
    keep = _survivors(union_objs, cfg.population)
    return union[keep], union_objs[keep]


@dataclass
class ParetoArchive:
    """Non-dominated (genome, objectives) pairs found so far."""

    members: list[tuple[Genome, Objectives]] = field(default_factory=list)
    hv_history: list[float] = field(default_factory=list)

    def update(self, pop: np.ndarray, objs: np.ndarray) -> None:
        cand = self.members + [
            (Genome.from_array(g), Objectives(float(o[0]), float(o[1]))) for g, o in zip(pop, objs)
        ]
        seen = set()
        unique = []
        for g, o in cand:
            key = (o.as_tuple(), tuple(g.as_array().tolist()))
            if key not in seen:
                seen.add(key)
                unique.append((g, o))
        front = nondominated_sort([o for _, o in unique])[0] if unique else []
        self.members = [unique[i] for i in sorted(front)]

    def objectives(self) -> np.ndarray:
        return np.array([o.as_tuple() for _, o in self.members]).reshape(-1, 2)

    def hypervolume(self) -> float:
        return hypervolume(self.objectives())

    def write_csv(self, path: Union[Path, str]) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                ("max_dxy", "max_dxy_over_dz", "max_abs_dphi", "skip_max", "efficiency", "purity")
            )
            for g, o in self.members:
                w.writerow(
                    (repr(g.max_dxy), repr(g.max_dxy_over_dz), repr(g.max_abs_dphi),
                     g.skip_max, repr(o.efficiency), repr(o.purity))
                )

    def write_history_csv(self, path: Union[Path, str]) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("generation", "hypervolume"))
            for i, hv in enumerate(self.hv_history, start=1):
                w.writerow((i, repr(hv)))


@dataclass(frozen=True)
class Selection:
    genome: Genome
    objectives: Objectives
    reached_min_efficiency: bool


def select_genome(
    members: Sequence[tuple[Genome, Objectives]], min_efficiency: float = 0.99
) -> Selection:
    """Highest purity among members with efficiency >= `min_efficiency`.

    Falls back to the highest-efficiency member, with a warning.
    """
    if not members:
        raise PreconditionError("select_genome", "empty archive")
    ok = [m for m in members if m[1].efficiency >= min_efficiency]
    if ok:
        g, o = max(ok, key=lambda m: (m[1].purity, m[1].efficiency))
        return Selection(g, o, True)
    g, o = max(members, key=lambda m: (m[1].efficiency, m[1].purity))
    logger.warning(
        "no genome reaches efficiency %.3f; best is %.4f", min_efficiency, o.efficiency
    )
    return Selection(g, o, False)


def optimize_cuts(
    calibration: PairTable,
    cfg: NsgaConfig = NsgaConfig(),
    seed: Optional[int] = None,
) -> tuple[ParetoArchive, Selection]:
    """Runs NSGA-II for `cfg.generations` generations on a calibration pair table."""
    rng = np.random.Generator(np.random.Philox(cfg.seed if seed is None else seed))

    def evaluate(rows: np.ndarray) -> np.ndarray:
        return np.array(
            [evaluate_genome(Genome.from_array(r), calibration).as_tuple() for r in rows]
        ).reshape(-1, 2)

    pop = random_population(cfg.population, rng)
    objs = evaluate(pop)
    archive = ParetoArchive()
    archive.update(pop, objs)
    for gen in range(1, cfg.generations + 1):
        pop, objs = nsga2_generation(pop, objs, rng, evaluate, cfg)
        archive.update(pop, objs)
        archive.hv_history.append(archive.hypervolume())
        logger.info(
            "generation %d: %d archived, hypervolume %.6f",
            gen, len(archive.members), archive.hv_history[-1],
        )
    return archive, select_genome(archive.members, cfg.min_efficiency)

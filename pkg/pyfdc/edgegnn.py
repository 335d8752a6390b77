"""Edge classifier: alternating edge and node networks over a hit graph.

The input network expands the hit features (r, phi, z) to width W. Each
iteration appends the original features to the node embeddings, scores every
edge with the edge network, then updates the nodes from their own embedding
and the score-weighted sums of their upstream (left) and downstream (right)
neighbors. One more edge-network call after the last iteration gives the
returned scores.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .detector import DetectorGeometry
from .evalcli.metrics import EdgeKey, SegmentMetrics
from .exceptions import (
    CheckpointFormatError,
    InvalidConfigError,
    MissingLabelsError,
    PreconditionError,
    ShapeMismatchError,
)
from .graphbuild import EventGraph, concat_graphs, prune_redundant_edges
from .misc import Activation, Mode
from .tinynn import (
    AdamState,
    MlpCache,
    MlpParams,
    adam_step,
    as_matrix,
    bce_loss,
    init_mlp,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    save_checkpoint,
)

logger = logging.getLogger(__name__)

N_FEATURES = 3


@dataclass(frozen=True)
class FeatureScaler:
    """Affine map of (r, phi, z) onto [-1, 1] from geometry bounds."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    @classmethod
    def from_geometry(cls, geom: DetectorGeometry) -> FeatureScaler:
        return cls(
            lo=(geom.active_radius_min, -np.pi, geom.plane_z[0]),
            hi=(geom.active_radius_max, np.pi, geom.plane_z[-1]),
        )

    def transform(self, X: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return 2.0 * (X - lo) / (hi - lo) - 1.0


@dataclass
class EdgeClassifierParams:
    input_mlp: MlpParams
    edge_mlp: MlpParams
    node_mlp: MlpParams
    n_iters: int
    scaler: FeatureScaler

    def __post_init__(self):
        w = self.input_mlp.out_dim
        if self.input_mlp.in_dim != N_FEATURES:
            raise ShapeMismatchError("input_mlp", N_FEATURES, self.input_mlp.in_dim)
        if self.edge_mlp.in_dim != 2 * (w + N_FEATURES) or self.edge_mlp.out_dim != 1:
            raise ShapeMismatchError(
                "edge_mlp", (2 * (w + N_FEATURES), 1), (self.edge_mlp.in_dim, self.edge_mlp.out_dim)
            )
        if self.node_mlp.in_dim != 3 * (w + N_FEATURES) or self.node_mlp.out_dim != w:
            raise ShapeMismatchError(
                "node_mlp", (3 * (w + N_FEATURES), w), (self.node_mlp.in_dim, self.node_mlp.out_dim)
            )
        if self.n_iters < 1:
            raise InvalidConfigError("n_iters", "must be >= 1")

    @property
    def width(self) -> int:
        return self.input_mlp.out_dim

    @property
    def depth(self) -> int:
        return self.input_mlp.depth

    def mlps(self) -> list[MlpParams]:
        return [self.input_mlp, self.edge_mlp, self.node_mlp]

    def copy(self) -> EdgeClassifierParams:
        return EdgeClassifierParams(
            input_mlp=self.input_mlp.copy(),
            edge_mlp=self.edge_mlp.copy(),
            node_mlp=self.node_mlp.copy(),
            n_iters=self.n_iters,
            scaler=self.scaler,
        )


def init_classifier(
    width: int,
    depth: int,
    n_iters: int,
    geom: DetectorGeometry,
    rng: np.random.Generator,
) -> EdgeClassifierParams:
    """Randomly initialized classifier with hidden width W and MLP depth D."""
    aug = width + N_FEATURES
    return EdgeClassifierParams(
        input_mlp=init_mlp([N_FEATURES] + [width] * depth, rng),
        edge_mlp=init_mlp([2 * aug] + [width] * (depth - 1) + [1], rng, final=Activation.SIGMOID),
        node_mlp=init_mlp([3 * aug] + [width] * depth, rng),
        n_iters=n_iters,
        scaler=FeatureScaler.from_geometry(geom),
    )


def _check_edges(E: np.ndarray, n_nodes: int) -> np.ndarray:
    E = np.asarray(E, dtype=np.int64).reshape(-1, 2)
    if len(E) and (E.min() < 0 or E.max() >= n_nodes):
        raise PreconditionError("edge_network", "edge index out of range")
    return E


@dataclass
class _Run:
    """Settings of one forward pass."""

    mode: Mode = Mode.INFER
    dropout_prob: float = 0.0
    rng: Optional[np.random.Generator] = None

    def forward(self, p: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
        return mlp_forward(p, x, self.mode, self.dropout_prob, self.rng)


def input_expand(p: EdgeClassifierParams, X: np.ndarray) -> np.ndarray:
    """H0 = input_mlp(scaled X), shape (n_hits, W)."""
    return _input_expand(p, as_matrix(X, "X"), _Run())[0]


def _input_expand(p, X, run):
    if X.shape[1] != N_FEATURES:
        raise ShapeMismatchError("input_expand", (X.shape[0], N_FEATURES), X.shape)
    Xs = p.scaler.transform(X)
    H, cache = run.forward(p.input_mlp, Xs)
    return H, cache, Xs


def edge_network(p: EdgeClassifierParams, H_aug: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Score in [0, 1] of every edge from [H_aug[source]; H_aug[target]]."""
    return _edge_network(p, H_aug, _check_edges(E, len(H_aug)), _Run())[0]


def _edge_network(p, H_aug, E, run):
    inp = np.hstack([H_aug[E[:, 0]], H_aug[E[:, 1]]])
    out, cache = run.forward(p.edge_mlp, inp)
    return out[:, 0], cache


def _aggregate(H_aug: np.ndarray, alpha: np.ndarray, E: np.ndarray):
    src, dst = E[:, 0], E[:, 1]
    m_left = np.zeros_like(H_aug)
    m_right = np.zeros_like(H_aug)
    # edges are sorted by (source, target), so each node sums in ascending neighbor order
    np.add.at(m_left, dst, alpha[:, None] * H_aug[src])
    np.add.at(m_right, src, alpha[:, None] * H_aug[dst])
    return m_left, m_right


def node_network(
    p: EdgeClassifierParams, H_aug: np.ndarray, alpha: np.ndarray, E: np.ndarray
) -> np.ndarray:
    """H'[n] = node_mlp([left messages; H_aug[n]; right messages])."""
    E = _check_edges(E, len(H_aug))
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (len(E),):
        raise ShapeMismatchError("node_network", (len(E),), alpha.shape)
    return _node_network(p, H_aug, alpha, E, _Run())[0]


def _node_network(p, H_aug, alpha, E, run):
    m_left, m_right = _aggregate(H_aug, alpha, E)
    out, cache = run.forward(p.node_mlp, np.hstack([m_left, H_aug, m_right]))
    return out, cache


@dataclass
class _Tape:
    in_cache: MlpCache
    H_augs: list[np.ndarray] = field(default_factory=list)
    alphas: list[np.ndarray] = field(default_factory=list)
    edge_caches: list[MlpCache] = field(default_factory=list)
    node_caches: list[MlpCache] = field(default_factory=list)


def _classify(p: EdgeClassifierParams, X: np.ndarray, E: np.ndarray, run: _Run):
    E = _check_edges(E, len(X))
    H, in_cache, Xs = _input_expand(p, X, run)
    tape = _Tape(in_cache=in_cache)
    for _ in range(p.n_iters):
        H_aug = np.hstack([H, Xs])
        alpha, e_cache = _edge_network(p, H_aug, E, run)
        H, n_cache = _node_network(p, H_aug, alpha, E, run)
        tape.H_augs.append(H_aug)
        tape.alphas.append(alpha)
        tape.edge_caches.append(e_cache)
        tape.node_caches.append(n_cache)
    H_aug = np.hstack([H, Xs])
    alpha, e_cache = _edge_network(p, H_aug, E, run)
    tape.H_augs.append(H_aug)
    tape.edge_caches.append(e_cache)
    return alpha, tape, E


def classify_edges(
    p: EdgeClassifierParams,
    g: EventGraph,
    mode: Union[str, Mode] = Mode.INFER,
    dropout_prob: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Per-edge probability that the edge joins two hits of the same particle."""
    if g.n_nodes == 0:
        return np.zeros(0)
    run = _Run(Mode.get_from_str(mode), dropout_prob, rng)
    return _classify(p, as_matrix(g.X, "X"), g.E, run)[0]


def _add_grads(acc: Optional[MlpParams], g: MlpParams) -> MlpParams:
    if acc is None:
        return g
    for i in range(acc.depth):
        acc.weights[i] += g.weights[i]
        acc.biases[i] += g.biases[i]
    return acc


def _backward(
    p: EdgeClassifierParams, tape: _Tape, E: np.ndarray, d_alpha: np.ndarray
) -> list[MlpParams]:
    """Gradients of (input, edge, node) MLPs given the gradient on the final scores."""
    w = p.width
    src, dst = E[:, 0], E[:, 1]
    n = len(tape.H_augs[-1])

    def edge_back(cache: MlpCache, d: np.ndarray, d_H_aug: np.ndarray) -> MlpParams:
        grads, d_in = mlp_backward(cache, d[:, None])
        np.add.at(d_H_aug, src, d_in[:, : w + N_FEATURES])
        np.add.at(d_H_aug, dst, d_in[:, w + N_FEATURES :])
        return grads

    d_H_aug = np.zeros((n, w + N_FEATURES))
    g_edge = edge_back(tape.edge_caches[-1], d_alpha, d_H_aug)
    g_node = None
    d_H = d_H_aug[:, :w]
    for it in reversed(range(p.n_iters)):
        H_aug = tape.H_augs[it]
        alpha = tape.alphas[it]
        g, d_in = mlp_backward(tape.node_caches[it], d_H)
        g_node = _add_grads(g_node, g)
        aug = w + N_FEATURES
        d_left, d_self, d_right = d_in[:, :aug], d_in[:, aug : 2 * aug], d_in[:, 2 * aug :]
        d_H_aug = d_self.copy()
        np.add.at(d_H_aug, src, alpha[:, None] * d_left[dst])
        np.add.at(d_H_aug, dst, alpha[:, None] * d_right[src])
        d_a = np.einsum("ij,ij->i", d_left[dst], H_aug[src]) + np.einsum(
            "ij,ij->i", d_right[src], H_aug[dst]
        )
        g_edge = _add_grads(g_edge, edge_back(tape.edge_caches[it], d_a, d_H_aug))
        d_H = d_H_aug[:, :w]
    g_in, _ = mlp_backward(tape.in_cache, d_H)
    return [g_in, g_edge, g_node]


def loss_and_grads(
    p: EdgeClassifierParams,
    g: EventGraph,
    mode: Union[str, Mode] = Mode.TRAIN,
    dropout_prob: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, list[MlpParams]]:
    """Mean BCE of the scores of a labeled graph and its parameter gradients."""
    if g.labels is None:
        raise MissingLabelsError(0)
    run = _Run(Mode.get_from_str(mode), dropout_prob, rng)
    alpha, tape, E = _classify(p, as_matrix(g.X, "X"), g.E, run)
    loss, d_alpha = bce_loss(alpha, g.labels.astype(np.float64))
    return loss, _backward(p, tape, E, d_alpha)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 50
    patience: int = 10
    learning_rate: float = 0.001
    dropout: float = 0.05
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size", "must be >= 1")
        if self.epochs < 0:
            raise InvalidConfigError("epochs", "must be >= 0")
        if self.patience < 1:
            raise InvalidConfigError("patience", "must be >= 1")
        if self.learning_rate < 0.0:
            raise InvalidConfigError("learning_rate", "must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfigError("dropout", "must be in [0, 1)")

    @classmethod
    def from_config(cls, section: dict) -> TrainConfig:
        known = {k: v for k, v in section.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_efficiency: float
    val_purity: float


@dataclass
class TrainHistory:
    """Per-epoch losses plus the losses of the initial parameters."""

    initial_train_loss: float
    initial_val_loss: float
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def as_dict(self) -> dict:
        return {
            "initial_train_loss": self.initial_train_loss,
            "initial_val_loss": self.initial_val_loss,
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "records": [asdict(r) for r in self.records],
        }


def _batches(graphs: Sequence[EventGraph], size: int) -> list[EventGraph]:
    return [concat_graphs(graphs[i : i + size]) for i in range(0, len(graphs), size)]


def _evaluate(
    p: EdgeClassifierParams, batches: Sequence[EventGraph], threshold: float
) -> tuple[float, SegmentMetrics]:
    scores = [classify_edges(p, b) for b in batches]
    labels = [b.labels for b in batches]
    if not batches or sum(len(s) for s in scores) == 0:
        return 0.0, SegmentMetrics(0, 0, 0, 0)
    s = np.concatenate(scores)
    y = np.concatenate(labels).astype(bool)
    loss, _ = bce_loss(s, y.astype(np.float64))
    pred = s >= threshold
    m = SegmentMetrics(
        true_kept=int(np.count_nonzero(pred & y)),
        true_total=int(np.count_nonzero(y)),
        predicted_total=int(np.count_nonzero(pred)),
        predicted_true=int(np.count_nonzero(pred & y)),
    )
    return loss, m


def train(
    init: EdgeClassifierParams,
    train_graphs: Sequence[EventGraph],
    val_graphs: Sequence[EventGraph],
    cfg: TrainConfig = TrainConfig(),
) -> tuple[EdgeClassifierParams, TrainHistory]:
    """Fits the classifier with Adam on shuffled mini-batches of whole graphs.

    Returns the parameters of the epoch with the lowest validation loss (the
    training loss when there is no validation set or it has no edges). `init`
    is not modified.
    """
    for i, g in enumerate(list(train_graphs) + list(val_graphs)):
        if g.labels is None:
            raise MissingLabelsError(i)
    p = init.copy()
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    state = AdamState.for_params(p.mlps())
    val_batches = [b for b in _batches(val_graphs, cfg.batch_size) if b.n_edges > 0]
    train_eval = _batches(train_graphs, cfg.batch_size)
    if val_graphs and not val_batches:
        logger.warning("validation graphs have no edges, selecting on training loss")

    init_train, _ = _evaluate(p, train_eval, cfg.threshold)
    init_val, _ = _evaluate(p, val_batches, cfg.threshold) if val_batches else (init_train, None)
    history = TrainHistory(initial_train_loss=init_train, initial_val_loss=init_val)
    best, best_loss, since_best = p.copy(), init_val, 0

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_graphs))
        losses, weights = [], []
        for k in range(0, len(order), cfg.batch_size):
            batch = concat_graphs([train_graphs[i] for i in order[k : k + cfg.batch_size]])
            if batch.n_edges == 0:
                continue
            loss, grads = loss_and_grads(p, batch, Mode.TRAIN, cfg.dropout, rng)
            adam_step(state, p.mlps(), grads, cfg.learning_rate)
            losses.append(loss)
            weights.append(batch.n_edges)
        train_loss = float(np.average(losses, weights=weights)) if losses else 0.0
        if val_batches:
            val_loss, m = _evaluate(p, val_batches, cfg.threshold)
        else:
            val_loss, m = _evaluate(p, train_eval, cfg.threshold)
        history.records.append(
            EpochRecord(epoch, train_loss, val_loss, m.efficiency, m.purity)
        )
        logger.info(
            "epoch %d: train loss %.5f, val loss %.5f, eff %.4f, pur %.4f",
            epoch, train_loss, val_loss, m.efficiency, m.purity,
        )
        if val_loss < best_loss:
            best, best_loss, since_best = p.copy(), val_loss, 0
            history.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= cfg.patience:
                logger.warning(
                    "early stop at epoch %d, best epoch %d", epoch, history.best_epoch
                )
                history.stopped_early = True
                break
    return best, history


def classify_graphs(
    p: EdgeClassifierParams, graphs: Sequence[EventGraph], batch_size: int = 32
) -> list[np.ndarray]:
    """Scores of each graph, evaluated in batches of `batch_size` graphs."""
    out = []
    for k in range(0, len(graphs), batch_size):
        chunk = graphs[k : k + batch_size]
        scores = classify_edges(p, concat_graphs(chunk))
        bounds = np.cumsum([0] + [g.n_edges for g in chunk])
        out += [scores[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    return out


def score_rows(g: EventGraph, scores: np.ndarray) -> list[tuple[int, int, int, float]]:
    """(event_id, source_hit, target_hit, score) per edge."""
    return [(e, a, b, float(s)) for (e, a, b), s in zip(g.edge_keys(), scores)]


def predicted_edges(g: EventGraph, scores: np.ndarray, threshold: float) -> set[EdgeKey]:
    keys = g.edge_keys()
    return {keys[i] for i in np.flatnonzero(np.asarray(scores) >= threshold)}


def assemble_tracks(
    g: EventGraph, scores: np.ndarray, threshold: float, prune: bool = True
) -> list[np.ndarray]:
    """Track candidates as connected components of the kept edges.

    Returns:
        node indices of each candidate with at least two hits, in plane order.
    """
    keep = np.asarray(scores) >= threshold
    if prune:
        keep = prune_redundant_edges(g.E, keep)
    E = g.E[keep]
    if len(E) == 0:
        return []
    adj = coo_matrix(
        (np.ones(len(E)), (E[:, 0], E[:, 1])), shape=(g.n_nodes, g.n_nodes)
    )
    _, comp = connected_components(adj, directed=False)
    touched = np.unique(E.ravel())
    out = []
    for c in np.unique(comp[touched]):
        nodes = np.flatnonzero(comp == c)
        out.append(nodes[np.lexsort((g.node_hit_id[nodes], g.node_plane[nodes]))])
    return out


def save_classifier(path: Union[Path, str], p: EdgeClassifierParams) -> None:
    hyper = {
        "W": p.width,
        "D": p.depth,
        "I": p.n_iters,
        "scaler": {"lo": list(p.scaler.lo), "hi": list(p.scaler.hi)},
    }
    save_checkpoint(path, p.mlps(), hyper)


def load_classifier(path: Union[Path, str]) -> EdgeClassifierParams:
    mlps, hyper = load_checkpoint(path)
    if len(mlps) != 3:
        raise CheckpointFormatError(path, f"expected 3 networks, found {len(mlps)}")
    try:
        return EdgeClassifierParams(
            input_mlp=mlps[0],
            edge_mlp=mlps[1],
            node_mlp=mlps[2],
            n_iters=int(hyper["I"]),
            scaler=FeatureScaler(
                lo=tuple(hyper["scaler"]["lo"]), hi=tuple(hyper["scaler"]["hi"])
            ),
        )
    except (KeyError, TypeError, ShapeMismatchError, InvalidConfigError) as e:
        raise CheckpointFormatError(path, str(e)) from e

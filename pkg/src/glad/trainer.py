"""One-class training of encoder + readout candidates.

A candidate embeds graphs, pools node embeddings to a single vector and
is trained to pull that vector toward a fixed center (the mean pooled
embedding under the initial weights).  The anomaly score of a graph is
its pooled distance to the center.  A hyperparameter grid yields a pool
of candidates, each scoring every test graph.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .data import GraphDatabase
from .encoder import gin_backward, gin_forward
from .errors import DegenerateInputError, FormatError
from .numkit import GradSet, ParamSet, init_params, sgd_step
from .pooling import (KernelConfig, NystromMap, mean_pool, median_heuristic,
                      mmd_pool_batch, nystrom_fit, set_kernel_grads,
                      set_kernel_matrix)

POOLINGS = ("mean", "mmd")

CONFIG_FIELDS = ("pooling", "layers", "weight_decay", "lr", "seed",
                 "nystrom_k", "epochs", "batch_size", "d_hidden")

# Default search grids; the landmark count is swept as a multiplier on
# log(n_train), resolved by nystrom_size().
DEFAULT_GRID = {
    "mean": {"layers": [1, 2, 4], "weight_decay": [1e-5, 1e-4, 1e-3],
             "lr": [1e-4, 1e-3], "seed": [0, 1, 2]},
    "mmd": {"layers": [1, 2, 4], "weight_decay": [1e-5, 1e-4, 1e-3],
            "lr": [0.01, 0.1], "seed": [0, 1, 2],
            "nystrom_mult": [4, 8, 16]},
    "common": {"epochs": [150], "batch_size": [64], "d_hidden": [64]},
}


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of one candidate."""

    pooling: str
    layers: int = 2
    weight_decay: float = 1e-4
    lr: float = 1e-3
    seed: int = 0
    nystrom_k: int | None = None
    epochs: int = 150
    batch_size: int = 64
    d_hidden: int = 64

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, "
                             f"got {self.pooling!r}")
        if self.pooling == "mmd" and (self.nystrom_k is None
                                      or self.nystrom_k < 1):
            raise ValueError("mmd pooling needs a positive nystrom_k")
        if min(self.layers, self.epochs, self.batch_size, self.d_hidden) < 1:
            raise ValueError("layers, epochs, batch_size, d_hidden must be >= 1")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("need lr > 0 and weight_decay >= 0")

    def hyper_key(self):
        """Everything except the seed; candidates sharing it are siblings."""
        return (self.pooling, self.layers, self.weight_decay, self.lr,
                self.nystrom_k, self.epochs, self.batch_size, self.d_hidden)


@dataclass(eq=False)
class TrainedCandidate:
    """A trained scorer.  ``nystrom`` is None for the mean readout.

    On failure (non-finite loss during training) ``failed`` is set and
    ``diagnostic`` explains; such candidates never enter a pool.
    """

    config: ModelConfig
    params: ParamSet | None
    center: np.ndarray | None
    nystrom: NystromMap | None
    final_loss: float
    failed: bool = False
    diagnostic: str = ""


@dataclass(eq=False)
class CandidatePool:
    """Score matrix of all surviving candidates over one test set.

    ``scores[i, j]`` is model ``model_ids[i]`` on graph ``graph_ids[j]``.
    """

    model_ids: list
    configs: list
    scores: np.ndarray
    graph_ids: list
    dropped: list = field(default_factory=list)

    def __post_init__(self):
        if self.scores.shape != (len(self.model_ids), len(self.graph_ids)):
            raise ValueError(f"score matrix {self.scores.shape} does not "
                             f"match {len(self.model_ids)} models x "
                             f"{len(self.graph_ids)} graphs")
        if len(self.configs) != len(self.model_ids):
            raise ValueError("one config per model id required")


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------

def init_center(pooled: np.ndarray) -> np.ndarray:
    """Center of the one-class objective: mean of pooled rows."""
    return pooled.mean(axis=0)


def svdd_loss(pooled: np.ndarray, center: np.ndarray, params: ParamSet,
              weight_decay: float) -> float:
    """Mean squared center distance plus the ridge penalty
    ``weight_decay / 2 * sum ||W||_F^2``."""
    diffs = pooled - center
    data = float(np.mean(np.sum(diffs * diffs, axis=1)))
    return data + 0.5 * weight_decay * params.sq_norm()


def pooled_batch(graphs, params: ParamSet, mmd_state=None) -> np.ndarray:
    """Pooled vectors for a batch at the given parameters.

    ``mmd_state = (landmark_graphs, factor, gamma)`` selects the
    distribution readout: landmark node embeddings are recomputed at
    ``params`` while the eigen factor and bandwidth stay frozen.  With
    ``mmd_state=None`` the mean readout is used.
    """
    if mmd_state is None:
        return np.stack([mean_pool(gin_forward(g, params)) for g in graphs])
    landmark_graphs, factor, gamma = mmd_state
    emb = {}
    for g in list(graphs) + list(landmark_graphs):
        if g.graph_id not in emb:
            emb[g.graph_id] = gin_forward(g, params)
    bsets = [emb[g.graph_id] for g in graphs]
    lsets = [emb[g.graph_id] for g in landmark_graphs]
    return set_kernel_matrix(bsets, lsets, gamma) @ factor


def batch_loss(graphs, params: ParamSet, center: np.ndarray,
               weight_decay: float, mmd_state=None) -> float:
    """Full objective on a batch; the quantity training descends."""
    return svdd_loss(pooled_batch(graphs, params, mmd_state), center,
                     params, weight_decay)


def batch_gradients(graphs, params: ParamSet, center: np.ndarray,
                    mmd_state=None):
    """Data-term loss and its gradient for one batch.

    Returns ``(data_loss, grads)`` where ``grads`` excludes the ridge
    term (the optimizer applies decay itself).  For the distribution
    readout the gradient flows through every node embedding the kernel
    matrix touches, landmark graphs included.
    """
    grads = GradSet.zeros_like(params)
    n = len(graphs)
    if mmd_state is None:
        loss = 0.0
        for g in graphs:
            emb, caches = gin_forward(g, params, with_cache=True)
            diff = mean_pool(emb) - center
            loss += float(diff @ diff)
            d_out = np.tile((2.0 / (n * emb.size)) * diff, (emb.size, 1))
            gin_backward(g, params, caches, d_out, grads)
        return loss / n, grads

    landmark_graphs, factor, gamma = mmd_state
    uniq, emb, caches = {}, {}, {}
    for g in list(graphs) + list(landmark_graphs):
        if g.graph_id not in uniq:
            uniq[g.graph_id] = g
            emb[g.graph_id], caches[g.graph_id] = gin_forward(
                g, params, with_cache=True)
    bsets = [emb[g.graph_id] for g in graphs]
    lsets = [emb[g.graph_id] for g in landmark_graphs]
    k = set_kernel_matrix(bsets, lsets, gamma)
    diffs = k @ factor - center
    loss = float(np.mean(np.sum(diffs * diffs, axis=1)))
    dk = (2.0 / n) * diffs @ factor.T
    da, db = set_kernel_grads(bsets, lsets, gamma, dk)
    acc = {gid: np.zeros_like(emb[gid].vectors) for gid in uniq}
    for g, d in zip(graphs, da):
        acc[g.graph_id] += d
    for g, d in zip(landmark_graphs, db):
        acc[g.graph_id] += d
    for gid, g in uniq.items():
        gin_backward(g, params, caches[gid], acc[gid], grads)
    return loss, grads


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _refresh_map(graphs, landmark_graphs, params, rng, rank):
    """Recompute bandwidth and eigen factor at the current parameters."""
    sets = [gin_forward(g, params) for g in graphs]
    by_id = {s.graph_id: s for s in sets}
    gamma = median_heuristic(sets, rng=rng)
    lsets = [by_id[g.graph_id] for g in landmark_graphs]
    return nystrom_fit(lsets, KernelConfig(gamma=gamma), rank=rank)


def train_candidate(train_db: GraphDatabase, config: ModelConfig,
                    base_seed: int = 0) -> TrainedCandidate:
    """Train one candidate on a clean training database.

    Deterministic given ``(train_db, config, base_seed)``: weights come
    from ``init_params`` seeded with ``config.seed``; landmark choice,
    batch order and bandwidth sampling use a stream derived from
    ``(base_seed, config.seed)``.  The center is the mean pooled
    embedding under the initial weights and never moves.
    """
    if train_db.d_in is None:
        raise ValueError("training database has no derived features")
    graphs = list(train_db.graphs)
    n = len(graphs)
    params = init_params(train_db.d_in, config.d_hidden, config.layers,
                         config.seed)
    rng = np.random.default_rng(np.random.SeedSequence((base_seed, config.seed)))
    batch_size = min(config.batch_size, n)
    is_mmd = config.pooling == "mmd"

    landmark_graphs, nmap, rank = [], None, None
    if is_mmd:
        k = min(config.nystrom_k, n)
        land_idx = np.sort(rng.choice(n, size=k, replace=False))
        landmark_graphs = [graphs[i] for i in land_idx]
        nmap = _refresh_map(graphs, landmark_graphs, params, rng, rank=None)
        rank = nmap.rank
        state = (landmark_graphs, nmap.factor, nmap.config.gamma)
        pooled = pooled_batch(graphs, params, state)
    else:
        pooled = pooled_batch(graphs, params)
    center = init_center(pooled)

    def fail(msg: str) -> TrainedCandidate:
        return TrainedCandidate(config=config, params=None, center=None,
                                nystrom=None, final_loss=math.nan,
                                failed=True, diagnostic=msg)

    if not np.all(np.isfinite(center)):
        return fail("non-finite center at initialization")

    final_loss = math.nan
    for epoch in range(config.epochs):
        # Divergence shows up as inf/nan and is caught below; silence the
        # overflow warnings it produces on the way.
        with np.errstate(over="ignore", invalid="ignore"):
            if is_mmd and epoch > 0:
                try:
                    nmap = _refresh_map(graphs, landmark_graphs, params,
                                        rng, rank)
                except (DegenerateInputError, ValueError,
                        np.linalg.LinAlgError) as exc:
                    return fail(f"refresh failed in epoch {epoch}: {exc}")
            state = (landmark_graphs, nmap.factor, nmap.config.gamma) \
                if is_mmd else None
            order = rng.permutation(n)
            batch_losses = []
            for start in range(0, n, batch_size):
                batch = [graphs[i] for i in order[start:start + batch_size]]
                data_loss, grads = batch_gradients(batch, params, center,
                                                   state)
                loss = data_loss + 0.5 * config.weight_decay * params.sq_norm()
                if not math.isfinite(loss):
                    return fail(f"non-finite loss in epoch {epoch}")
                params = sgd_step(params, grads, config.lr,
                                  config.weight_decay)
                batch_losses.append(loss)
        final_loss = float(np.mean(batch_losses))

    if is_mmd:
        # Scoring snapshot: factor and bandwidth consistent with the
        # final weights, landmark embeddings stored inside the map.
        nmap = _refresh_map(graphs, landmark_graphs, params, rng, rank)
    return TrainedCandidate(config=config, params=params, center=center,
                            nystrom=nmap, final_loss=final_loss)


def score_graphs(db: GraphDatabase, candidate: TrainedCandidate) -> np.ndarray:
    """Anomaly scores: pooled distance to the candidate's center."""
    if candidate.failed:
        raise ValueError("cannot score with a failed candidate")
    sets = [gin_forward(g, candidate.params) for g in db.graphs]
    if candidate.config.pooling == "mean":
        pooled = np.stack([mean_pool(s) for s in sets])
    else:
        pooled = mmd_pool_batch(sets, candidate.nystrom)
    return np.linalg.norm(pooled - candidate.center, axis=1)


def score_graph(graph, candidate: TrainedCandidate) -> float:
    db = GraphDatabase(graphs=(graph,))
    return float(score_graphs(db, candidate)[0])


# ---------------------------------------------------------------------------
# Grids and pools
# ---------------------------------------------------------------------------

def nystrom_size(mult: float, n_train: int) -> int:
    """Landmark count rule: ``ceil(mult * ln(n_train))`` clamped to
    ``[4, n_train]``."""
    if n_train < 1:
        raise ValueError("n_train must be positive")
    raw = math.ceil(mult * math.log(n_train))
    return int(min(max(raw, 4), n_train))


def expand_grid(spec: dict, n_train: int) -> list:
    """Cartesian-expand a grid specification into configs.

    ``spec`` maps family names (``mean``, ``mmd``) to per-key value
    lists, with a ``common`` section merged into both.  The ``mmd``
    family takes either ``nystrom_k`` (absolute) or ``nystrom_mult``
    (resolved by :func:`nystrom_size`).  Expansion order is fixed:
    mean family first, keys in canonical order, values in given order.
    """
    known = {"layers", "weight_decay", "lr", "seed", "epochs",
             "batch_size", "d_hidden", "nystrom_k", "nystrom_mult"}
    common = spec.get("common", {})
    configs = []
    for family in ("mean", "mmd"):
        if family not in spec:
            continue
        merged = dict(common)
        merged.update(spec[family])
        bad = set(merged) - known
        if bad:
            raise ValueError(f"unknown grid keys {sorted(bad)}")
        if family == "mean":
            merged.pop("nystrom_k", None)
            merged.pop("nystrom_mult", None)
        elif "nystrom_k" in merged and "nystrom_mult" in merged:
            raise ValueError("give nystrom_k or nystrom_mult, not both")
        elif "nystrom_k" in merged:
            merged["nystrom_k"] = [int(min(max(int(k), 1), n_train))
                                   for k in merged["nystrom_k"]]
        elif "nystrom_mult" in merged:
            merged["nystrom_k"] = [nystrom_size(m, n_train)
                                   for m in merged.pop("nystrom_mult")]
        else:
            raise ValueError("mmd family needs nystrom_k or nystrom_mult")
        keys = [k for k in ("layers", "weight_decay", "lr", "nystrom_k",
                            "epochs", "batch_size", "d_hidden", "seed")
                if k in merged]
        for values in product(*(merged[k] for k in keys)):
            kwargs = dict(zip(keys, values))
            configs.append(ModelConfig(pooling=family, **kwargs))
    if not configs:
        raise ValueError("grid specification expands to no configurations")
    return configs


def _train_and_score(args):
    train_db, test_db, config, base_seed = args
    cand = train_candidate(train_db, config, base_seed=base_seed)
    if cand.failed:
        return None, cand.diagnostic
    return score_graphs(test_db, cand), ""


def run_grid(train_db: GraphDatabase, test_db: GraphDatabase, configs,
             workers: int = 1, base_seed: int = 0) -> CandidatePool:
    """Train every config and score the test set.

    Candidates whose training diverges are dropped and recorded in
    ``pool.dropped``.  Model ids follow grid order and stay stable in
    the presence of drops.  With ``workers > 1`` candidates train in
    separate processes; results are identical to the serial path.
    """
    tasks = [(train_db, test_db, cfg, base_seed) for cfg in configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_and_score, tasks, chunksize=1))
    else:
        results = [_train_and_score(t) for t in tasks]

    model_ids, kept_configs, rows, dropped = [], [], [], []
    for idx, (cfg, (scores, diag)) in enumerate(zip(configs, results)):
        mid = f"m{idx:03d}"
        if scores is None:
            dropped.append((mid, diag))
            continue
        model_ids.append(mid)
        kept_configs.append(cfg)
        rows.append(scores)
    if not rows:
        raise ValueError("all candidates failed during training")
    return CandidatePool(model_ids=model_ids, configs=kept_configs,
                         scores=np.stack(rows),
                         graph_ids=list(test_db.graph_ids),
                         dropped=dropped)


# ---------------------------------------------------------------------------
# Pool persistence
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else (repr(x) if isinstance(x, float) else str(x))


def save_pool(pool: CandidatePool, directory) -> None:
    """Write ``pool_configs.csv`` and ``pool_scores.csv`` (scores at nine
    significant digits, LF endings)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg_lines = ["model_id," + ",".join(CONFIG_FIELDS)]
    for mid, cfg in zip(pool.model_ids, pool.configs):
        vals = [_fmt(getattr(cfg, f)) for f in CONFIG_FIELDS]
        cfg_lines.append(",".join([mid] + vals))
    (directory / "pool_configs.csv").write_text("\n".join(cfg_lines) + "\n")

    head = "model_id," + ",".join(str(g) for g in pool.graph_ids)
    score_lines = [head]
    for mid, row in zip(pool.model_ids, pool.scores):
        score_lines.append(mid + "," + ",".join(format(x, ".9g") for x in row))
    (directory / "pool_scores.csv").write_text("\n".join(score_lines) + "\n")


def load_pool(directory) -> CandidatePool:
    """Read a pool written by :func:`save_pool`.

    Raises FormatError on header mismatches, unknown or duplicated model
    ids, or malformed numbers; messages carry line numbers.
    """
    directory = Path(directory)
    cfg_path = directory / "pool_configs.csv"
    score_path = directory / "pool_scores.csv"
    for p in (cfg_path, score_path):
        if not p.is_file():
            raise FormatError(f"missing pool file {p}")

    cfg_lines = cfg_path.read_text().splitlines()
    want_head = "model_id," + ",".join(CONFIG_FIELDS)
    if not cfg_lines or cfg_lines[0] != want_head:
        raise FormatError(f"{cfg_path.name}:1: bad header")
    configs = {}
    order = []
    for ln, line in enumerate(cfg_lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 1 + len(CONFIG_FIELDS):
            raise FormatError(f"{cfg_path.name}:{ln}: expected "
                              f"{1 + len(CONFIG_FIELDS)} columns")
        mid = parts[0]
        if mid in configs:
            raise FormatError(f"{cfg_path.name}:{ln}: duplicate model id {mid}")
        try:
            cfg = ModelConfig(
                pooling=parts[1], layers=int(parts[2]),
                weight_decay=float(parts[3]), lr=float(parts[4]),
                seed=int(parts[5]),
                nystrom_k=None if parts[6] == "" else int(parts[6]),
                epochs=int(parts[7]), batch_size=int(parts[8]),
                d_hidden=int(parts[9]))
        except ValueError as exc:
            raise FormatError(f"{cfg_path.name}:{ln}: {exc}") from None
        configs[mid] = cfg
        order.append(mid)

    score_lines = score_path.read_text().splitlines()
    if not score_lines or not score_lines[0].startswith("model_id,"):
        raise FormatError(f"{score_path.name}:1: bad header")
    graph_ids = score_lines[0].split(",")[1:]
    if len(graph_ids) != len(set(graph_ids)) or not graph_ids:
        raise FormatError(f"{score_path.name}:1: graph ids must be unique")
    rows = {}
    for ln, line in enumerate(score_lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 1 + len(graph_ids):
            raise FormatError(f"{score_path.name}:{ln}: expected "
                              f"{1 + len(graph_ids)} columns")
        mid = parts[0]
        if mid not in configs:
            raise FormatError(f"{score_path.name}:{ln}: unknown model id {mid}")
        if mid in rows:
            raise FormatError(f"{score_path.name}:{ln}: duplicate model id {mid}")
        try:
            rows[mid] = np.array([float(x) for x in parts[1:]])
        except ValueError:
            raise FormatError(f"{score_path.name}:{ln}: bad score value") from None
    missing = [m for m in order if m not in rows]
    if missing:
        raise FormatError(f"{score_path.name}: no scores for {missing[0]}")
    try:
        gids = [int(g) for g in graph_ids]
    except ValueError:
        gids = list(graph_ids)
    return CandidatePool(model_ids=order,
                         configs=[configs[m] for m in order],
                         scores=np.stack([rows[m] for m in order]),
                         graph_ids=gids)

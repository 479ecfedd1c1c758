"""Label-free model selection over a candidate pool.

All methods consume only the pool's score matrix (plus configs for the
seed-variation method).  The consensus route runs a hub/authority
recursion on min-max normalized scores: reliable models are those that
agree with the pooled opinion, and the authority vector doubles as an
ensemble anomaly ranking.  Two rank-correlation baselines are included.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, MethodError
from .metrics import midrank
from .trainer import CandidatePool

METHODS = ("hits", "hits-ens", "mc", "udr")
HITS_TOL = 1e-9
HITS_MAX_ITER = 1000


@dataclass(eq=False)
class SelectionResult:
    """Outcome of one selection method on one pool.

    ``final_scores`` is what downstream evaluation consumes: the chosen
    model's raw scores, or the authority vector for the ensemble route
    (``selected_model`` is None there).  ``reliability`` holds the
    per-model quantity the method ranked models by.
    """

    method: str
    final_scores: np.ndarray
    graph_ids: list
    reliability: np.ndarray
    selected_model: str | None = None
    selected_index: int | None = None
    authority: np.ndarray | None = None
    iterations: int = 0
    residual: float = 0.0


def normalize_rows(scores: np.ndarray) -> np.ndarray:
    """Min-max normalize each row to [0, 1]; constant rows become 0.5."""
    scores = np.asarray(scores, dtype=float)
    lo = scores.min(axis=1, keepdims=True)
    hi = scores.max(axis=1, keepdims=True)
    span = hi - lo
    flat = span[:, 0] == 0.0
    span[flat] = 1.0
    out = (scores - lo) / span
    out[flat] = 0.5
    return out


def hits(w: np.ndarray, tol: float = HITS_TOL,
         max_iter: int = HITS_MAX_ITER):
    """Hub/authority recursion ``h <- W a``, ``a <- W^T h`` with L2
    normalization after each update.

    Starts from uniform vectors and stops when neither vector moves more
    than ``tol`` in the max norm.  Returns ``(h, a, iterations,
    residual)``.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or 0 in w.shape:
        raise ValueError("need a non-empty 2-d matrix")
    m, n = w.shape
    h = np.ones(m) / np.sqrt(m)
    a = np.ones(n) / np.sqrt(n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        h_new = w @ a
        nh = np.linalg.norm(h_new)
        if nh == 0.0:
            raise DegenerateInputError("hub update collapsed to zero")
        h_new /= nh
        a_new = w.T @ h_new
        na = np.linalg.norm(a_new)
        if na == 0.0:
            raise DegenerateInputError("authority update collapsed to zero")
        a_new /= na
        residual = max(float(np.max(np.abs(h_new - h))),
                       float(np.max(np.abs(a_new - a))))
        h, a = h_new, a_new
        if residual <= tol:
            return h, a, it, residual
    return h, a, max_iter, residual


def _argmax_lowest(values: np.ndarray) -> int:
    """Index of the maximum; ties resolved to the lowest index."""
    return int(np.argmax(values))


def hits_select(pool: CandidatePool) -> SelectionResult:
    """Pick the model with the largest hub weight; report its raw scores."""
    w = normalize_rows(pool.scores)
    h, a, iters, residual = hits(w)
    best = _argmax_lowest(h)
    return SelectionResult(method="hits",
                           final_scores=pool.scores[best].copy(),
                           graph_ids=list(pool.graph_ids),
                           reliability=h, authority=a,
                           selected_model=pool.model_ids[best],
                           selected_index=best,
                           iterations=iters, residual=residual)


def hits_ens(pool: CandidatePool) -> SelectionResult:
    """Use the authority vector itself as the anomaly ranking (larger
    authority = ranked anomalous by reliable models)."""
    w = normalize_rows(pool.scores)
    h, a, iters, residual = hits(w)
    return SelectionResult(method="hits-ens",
                           final_scores=a.copy(),
                           graph_ids=list(pool.graph_ids),
                           reliability=h, authority=a,
                           iterations=iters, residual=residual)


def spearman(x, y) -> float:
    """Rank correlation (midranks + Pearson); errors on constant input."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two equal-length vectors of size >= 2")
    rx = midrank(x)
    ry = midrank(y)
    sx = rx.std()
    sy = ry.std()
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("rank correlation undefined for "
                                   "constant input")
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def _pairwise_spearman(scores: np.ndarray) -> np.ndarray:
    """All pairwise rank correlations; entries touching a constant row
    are NaN, diagonal is NaN."""
    m = scores.shape[0]
    ranks = np.stack([midrank(row) for row in scores])
    stds = ranks.std(axis=1)
    out = np.full((m, m), np.nan)
    centered = ranks - ranks.mean(axis=1, keepdims=True)
    for i in range(m):
        if stds[i] == 0.0:
            continue
        for j in range(i + 1, m):
            if stds[j] == 0.0:
                continue
            r = float(np.mean(centered[i] * centered[j]) / (stds[i] * stds[j]))
            out[i, j] = out[j, i] = r
    return out


def mc_select(pool: CandidatePool) -> SelectionResult:
    """Model consistency: reliability of a model is its mean rank
    correlation with every other model; the most agreeable model wins."""
    m = pool.scores.shape[0]
    if m < 2:
        raise MethodError("consistency selection needs at least two models")
    corr = _pairwise_spearman(pool.scores)
    reliability = np.full(m, -np.inf)
    for i in range(m):
        vals = corr[i][~np.isnan(corr[i])]
        if vals.size:
            reliability[i] = float(vals.mean())
    if not np.any(np.isfinite(reliability)):
        raise MethodError("no model pair admits a rank correlation")
    best = _argmax_lowest(reliability)
    return SelectionResult(method="mc",
                           final_scores=pool.scores[best].copy(),
                           graph_ids=list(pool.graph_ids),
                           reliability=reliability,
                           selected_model=pool.model_ids[best],
                           selected_index=best)


def udr_select(pool: CandidatePool) -> SelectionResult:
    """Seed-variation reliability: a model is scored by the median rank
    correlation with its siblings (same hyperparameters, different
    seed).  Models without siblings are ineligible."""
    m = pool.scores.shape[0]
    keys = [cfg.hyper_key() for cfg in pool.configs]
    seeds = [cfg.seed for cfg in pool.configs]
    corr = _pairwise_spearman(pool.scores)
    reliability = np.full(m, -np.inf)
    any_siblings = False
    for i in range(m):
        sib = [j for j in range(m)
               if j != i and keys[j] == keys[i] and seeds[j] != seeds[i]]
        if not sib:
            continue
        any_siblings = True
        vals = np.array([corr[i, j] for j in sib])
        vals = vals[~np.isnan(vals)]
        if vals.size:
            reliability[i] = float(np.median(vals))
    if not any_siblings:
        raise MethodError("seed-variation selection needs some "
                          "hyperparameter setting trained under "
                          "several seeds")
    if not np.any(np.isfinite(reliability)):
        raise MethodError("no sibling pair admits a rank correlation")
    best = _argmax_lowest(reliability)
    return SelectionResult(method="udr",
                           final_scores=pool.scores[best].copy(),
                           graph_ids=list(pool.graph_ids),
                           reliability=reliability,
                           selected_model=pool.model_ids[best],
                           selected_index=best)


_DISPATCH = {"hits": hits_select, "hits-ens": hits_ens,
             "mc": mc_select, "udr": udr_select}


def select(pool: CandidatePool, method: str) -> SelectionResult:
    """Run one selection method by name."""
    if method not in _DISPATCH:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    return _DISPATCH[method](pool)


def write_selection(result: SelectionResult, out_path,
                    meta_path=None) -> None:
    """Write ``graph_id,score`` rows plus a small metadata sidecar
    (method, selected model, iteration count, convergence residual)."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["graph_id,score"]
    for gid, s in zip(result.graph_ids, result.final_scores):
        lines.append(f"{gid},{format(float(s), '.9g')}")
    out_path.write_text("\n".join(lines) + "\n")
    if meta_path is None:
        meta_path = out_path.parent / "selection_meta.txt"
    meta = [f"method = {result.method}",
            f"selected_model = {result.selected_model or '-'}",
            f"iterations = {result.iterations}",
            f"residual = {format(float(result.residual), '.3e')}"]
    Path(meta_path).write_text("\n".join(meta) + "\n")

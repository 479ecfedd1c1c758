"""Graph-level readouts over node embedding sets.

Two routes: a plain mean over node vectors, and a distribution-aware
readout built from a Gaussian kernel between embedding sets (mean of all
pairwise node kernels), compressed to finite coordinates with a Nystrom
approximation anchored on landmark graphs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EmbeddingSet
from .errors import DegenerateInputError

DEFAULT_EIGEN_CUTOFF = 1e-8
DEFAULT_SAMPLE_CAP = 100_000


@dataclass(frozen=True)
class KernelConfig:
    """Resolved Gaussian kernel settings.

    ``gamma`` is the exponent coefficient in ``exp(-gamma * ||x - y||^2)``.
    ``eigen_cutoff`` discards landmark-matrix eigenvalues below
    ``eigen_cutoff * lambda_max`` when building a Nystrom map.
    """

    gamma: float
    eigen_cutoff: float = DEFAULT_EIGEN_CUTOFF

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 <= self.eigen_cutoff < 1:
            raise ValueError(f"eigen_cutoff {self.eigen_cutoff} outside [0, 1)")


@dataclass(eq=False)
class NystromMap:
    """Finite-dimensional surrogate for the set-kernel feature space.

    ``factor`` has one column per retained eigenpair; mapping a set's
    kernel row against the landmarks through ``factor`` yields coordinates
    whose inner products approximate the set kernel.
    """

    landmarks: list
    factor: np.ndarray
    config: KernelConfig

    @property
    def n_landmarks(self) -> int:
        return len(self.landmarks)

    @property
    def rank(self) -> int:
        return self.factor.shape[1]


def mean_pool(s: EmbeddingSet) -> np.ndarray:
    """Average of the node embedding vectors."""
    return s.vectors.mean(axis=0)


def _sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    xx = np.sum(x * x, axis=1)[:, None]
    yy = np.sum(y * y, axis=1)[None, :]
    return np.maximum(xx + yy - 2.0 * (x @ y.T), 0.0)


def gaussian_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """``exp(-gamma * ||x - y||^2)`` for two single vectors."""
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def _stack(sets):
    """Concatenate set vectors; returns (matrix, sizes, row offsets)."""
    sizes = np.array([s.vectors.shape[0] for s in sets], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return np.concatenate([s.vectors for s in sets], axis=0), sizes, offsets


def set_kernel_matrix(sets_a, sets_b, gamma: float) -> np.ndarray:
    """All set-kernel values between two lists of embedding sets.

    Entry (a, b) is the mean of ``exp(-gamma * ||x - y||^2)`` over all
    node pairs x in set a, y in set b.
    """
    xa, sa, oa = _stack(sets_a)
    xb, sb, ob = _stack(sets_b)
    e = np.exp(-gamma * _sq_dists(xa, xb))
    # Sum within blocks: reduce rows per set a, then columns per set b.
    rows = np.add.reduceat(e, oa[:-1], axis=0)
    blocks = np.add.reduceat(rows, ob[:-1], axis=1)
    return blocks / (sa[:, None] * sb[None, :])


def set_kernel(s_i: EmbeddingSet, s_j: EmbeddingSet, gamma: float) -> float:
    """Mean pairwise Gaussian kernel between two embedding sets."""
    return float(set_kernel_matrix([s_i], [s_j], gamma)[0, 0])


def mmd_squared(s_i: EmbeddingSet, s_j: EmbeddingSet, gamma: float) -> float:
    """Biased squared maximum mean discrepancy between two sets.

    Equals ``k(i,i) + k(j,j) - 2 k(i,j)`` with the mean-pairwise set
    kernel; zero when both sets hold identical vectors.
    """
    k = set_kernel_matrix([s_i, s_j], [s_i, s_j], gamma)
    return float(k[0, 0] + k[1, 1] - 2.0 * k[0, 1])


def set_kernel_grads(sets_a, sets_b, gamma: float, coeffs: np.ndarray):
    """Gradients of ``sum(coeffs * set_kernel_matrix(a, b))`` w.r.t. the
    node vectors of both lists.

    Returns ``(grads_a, grads_b)``: lists of arrays shaped like each
    set's vectors.  When a set object appears on both sides the caller
    must add the two contributions.
    """
    xa, sa, oa = _stack(sets_a)
    xb, sb, ob = _stack(sets_b)
    e = np.exp(-gamma * _sq_dists(xa, xb))
    # Per-node-pair coefficient: upstream / (n_a * m_b), spread to rows.
    row_set = np.repeat(np.arange(len(sets_a)), sa)
    col_set = np.repeat(np.arange(len(sets_b)), sb)
    c = coeffs[np.ix_(row_set, col_set)] / (sa[row_set][:, None] * sb[col_set][None, :])
    g = c * e
    da = -2.0 * gamma * (xa * g.sum(axis=1)[:, None] - g @ xb)
    db = -2.0 * gamma * (xb * g.sum(axis=0)[:, None] - g.T @ xa)
    grads_a = [da[oa[k]:oa[k + 1]] for k in range(len(sets_a))]
    grads_b = [db[ob[k]:ob[k + 1]] for k in range(len(sets_b))]
    return grads_a, grads_b


def median_heuristic(sets, sample_cap: int = DEFAULT_SAMPLE_CAP,
                     rng=None) -> float:
    """Bandwidth rule: ``gamma = 1 / median(squared pairwise distances)``
    over all node vectors in ``sets``.

    All distinct pairs are used when their count is at most
    ``sample_cap``; otherwise ``sample_cap`` pairs are sampled with
    ``rng`` (a fresh deterministic generator when omitted).  Falls back
    to ``gamma = 1`` when the median vanishes.
    """
    x, _, _ = _stack(sets)
    n = x.shape[0]
    if n < 2:
        return 1.0
    n_pairs = n * (n - 1) // 2
    if n_pairs <= sample_cap:
        d = _sq_dists(x, x)
        vals = d[np.triu_indices(n, k=1)]
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        i = rng.integers(0, n, size=sample_cap)
        j = rng.integers(0, n - 1, size=sample_cap)
        j = np.where(j >= i, j + 1, j)  # distinct partner
        diff = x[i] - x[j]
        vals = np.sum(diff * diff, axis=1)
    med = float(np.median(vals))
    if med <= 0.0:
        return 1.0
    return 1.0 / med


def nystrom_fit(landmarks, config: KernelConfig,
                rank: int | None = None) -> NystromMap:
    """Eigendecompose the landmark set-kernel matrix and keep the
    well-conditioned part.

    With ``rank=None`` all eigenvalues above ``eigen_cutoff * lambda_max``
    (and above zero) are retained.  With a fixed ``rank`` the top that
    many admissible eigenpairs are kept and the factor is zero-padded if
    fewer exist, so the output width never changes between refits.
    """
    if not landmarks:
        raise ValueError("need at least one landmark set")
    k = set_kernel_matrix(landmarks, landmarks, config.gamma)
    evals, evecs = np.linalg.eigh(k)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    floor = max(config.eigen_cutoff * max(evals[0], 0.0), 0.0)
    keep = evals > floor
    if not np.any(keep):
        raise DegenerateInputError("landmark kernel matrix has no admissible "
                                   "eigenvalues")
    n_keep = int(np.sum(keep)) if rank is None else min(rank, int(np.sum(keep)))
    vals = evals[:n_keep]
    vecs = evecs[:, :n_keep]
    # Deterministic eigenvector orientation: largest-magnitude entry positive.
    lead = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[lead, np.arange(n_keep)])
    signs[signs == 0] = 1.0
    factor = (vecs * signs) / np.sqrt(vals)
    if rank is not None and n_keep < rank:
        factor = np.hstack([factor, np.zeros((len(landmarks), rank - n_keep))])
    return NystromMap(landmarks=list(landmarks), factor=factor, config=config)


def mmd_pool(s: EmbeddingSet, nmap: NystromMap) -> np.ndarray:
    """Nystrom coordinates of one embedding set: its kernel row against
    the landmarks pushed through the eigen factor."""
    return mmd_pool_batch([s], nmap)[0]


def mmd_pool_batch(sets, nmap: NystromMap) -> np.ndarray:
    """Nystrom coordinates for many sets at once: (len(sets), rank)."""
    krows = set_kernel_matrix(sets, nmap.landmarks, nmap.config.gamma)
    return krows @ nmap.factor

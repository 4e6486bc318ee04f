"""Neighbourhood embedding in canonical-coefficient space and image reconstruction.

Neighbour indices are 0-based.  Within a ``NeighborSet`` neighbours are
ordered by ascending distance, then ascending index, which fixes the
pairing between weights and neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from crosslearn.errors import ConfigurationError, DimensionMismatchError, NumericError
from crosslearn.imgstack import Image, normalize_max, unpack
from crosslearn.manifold import Manifold, lift

RIDGE = 1e-9


@dataclass(frozen=True)
class NeighborSet:
    indices: np.ndarray
    values: np.ndarray  # (K,) for scalar points, (K, d) for vector points

    @property
    def k(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class EmbeddingWeights:
    w: np.ndarray


def knn(a, a_t, k: int, exclude: int | None = None) -> NeighborSet:
    """``k`` nearest training points to ``a_t``.

    ``a`` holds one training point per entry (scalars) or per column
    (vectors).  ``exclude`` drops one training index, used when the test
    point is itself a training sample.
    """
    a = np.asarray(a, dtype=float)
    a_t = np.asarray(a_t, dtype=float)
    if a.ndim == 1:
        points = a[:, None]
        dist = np.abs(a - a_t)
    else:
        points = a.T
        dist = np.linalg.norm(points - a_t.reshape(1, -1), axis=1)
    n = points.shape[0]
    available = n - (exclude is not None)
    if not 1 <= k <= available:
        raise ConfigurationError(f"K={k} neighbours requested but only {available} candidates exist")
    order = np.lexsort((np.arange(n), dist))
    if exclude is not None:
        order = order[order != exclude]
    idx = order[:k]
    values = a[idx] if a.ndim == 1 else a[:, idx].T
    return NeighborSet(idx, values)


def lle_weights(a_t, neighbors: NeighborSet) -> EmbeddingWeights:
    """Sum-to-one weights reconstructing ``a_t`` from its neighbours.

    Solves ``(G + eps I) w = 1`` with ``G`` the local Gram matrix of
    differences and ``eps = 1e-9 trace(G) / K``, then rescales so that
    the weights sum to one.  The ridge is always applied because ``G``
    has rank at most one for scalar points.
    """
    vals = np.asarray(neighbors.values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    k = vals.shape[0]
    diff = np.asarray(a_t, dtype=float).reshape(1, -1) - vals
    gram = diff @ diff.T
    trace = float(np.trace(gram))
    if trace == 0.0:
        # every neighbour coincides with the test point
        return EmbeddingWeights(np.full(k, 1.0 / k))
    eps = RIDGE * trace / k
    w = np.linalg.solve(gram + eps * np.eye(k), np.ones(k))
    total = w.sum()
    if not np.isfinite(total) or total == 0.0:
        raise NumericError("LLE weights cannot be normalized")
    return EmbeddingWeights(w / total)


def transfer(w: EmbeddingWeights, radar_neighbors: NeighborSet):
    w = np.asarray(w.w if isinstance(w, EmbeddingWeights) else w, dtype=float)
    vals = np.asarray(radar_neighbors.values, dtype=float)
    if vals.shape[0] != w.size:
        raise DimensionMismatchError(f"{w.size} weights for {vals.shape[0]} neighbours")
    out = w @ vals
    return float(out) if np.ndim(out) == 0 else out


def pseudo_inverse_row(b) -> np.ndarray:
    """Moore-Penrose inverse of the row vector ``b^T``."""
    b = np.asarray(b, dtype=float)
    nrm2 = float(b @ b)
    if nrm2 == 0.0:
        raise NumericError("degenerate canonical subspace: b_r is zero")
    return b / nrm2


def learned_coefficients(a_hat: float, p_rt, b_r) -> np.ndarray:
    """Radar manifold coefficients after adding the learned canonical update."""
    return pseudo_inverse_row(b_r) * a_hat + np.asarray(p_rt, dtype=float)


def to_image(vec, side: int) -> Image:
    """Clamp negatives, reshape and normalize a lifted image vector."""
    return normalize_max(unpack(np.maximum(vec, 0.0), side))


def reconstruct_image(a_hat: float, p_rt, cca, man: Manifold, side: int | None = None) -> Image:
    if side is None:
        side = int(np.sqrt(man.dim))
    p_tilde = learned_coefficients(a_hat, p_rt, cca.b_r)
    return to_image(lift(man, p_tilde), side)

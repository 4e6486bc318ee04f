"""Procrustes manifold alignment baseline (MFA) and its LLE extension (ML-MFA).

The alignment acts on PCA coefficients: ``k Q^T`` maps radar
coefficients into the camera frame and ``Q / k`` maps camera
coefficients back into the radar frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from crosslearn.embed import NeighborSet, knn, lle_weights, to_image, transfer
from crosslearn.errors import ConfigurationError, DimensionMismatchError, NumericError
from crosslearn.manifold import Manifold, lift


@dataclass(frozen=True)
class ProcrustesMap:
    k: float
    q: np.ndarray

    def to_camera(self, p_r):
        return self.k * (self.q.T @ np.asarray(p_r, dtype=float))

    def to_radar(self, p_s):
        return (self.q @ np.asarray(p_s, dtype=float)) / self.k


def fit_procrustes(p_r, p_s) -> ProcrustesMap:
    p_r = np.asarray(p_r, dtype=float)
    p_s = np.asarray(p_s, dtype=float)
    if p_r.shape[0] != p_s.shape[0]:
        raise ConfigurationError(f"Procrustes alignment needs n == m, got {p_r.shape[0]} and {p_s.shape[0]}")
    if p_r.shape[1] != p_s.shape[1]:
        raise DimensionMismatchError("coefficient matrices must have the same number of samples")
    u, sig, vt = np.linalg.svd(p_r @ p_s.T)
    denom = float(np.trace(p_r @ p_r.T))
    if denom == 0.0:
        raise NumericError("radar coefficients are all zero; scale is undefined")
    return ProcrustesMap(float(sig.sum()) / denom, u @ vt)


def mfa_coefficients(p_rt, pmap: ProcrustesMap) -> np.ndarray:
    return pmap.to_camera(p_rt)


def apply_mfa(p_rt, pmap: ProcrustesMap, man_r: Manifold, side: int | None = None):
    if side is None:
        side = int(np.sqrt(man_r.dim))
    return to_image(lift(man_r, mfa_coefficients(p_rt, pmap)), side)


def ml_mfa_coefficients(p_st, p_r, p_s, pmap: ProcrustesMap, k_neighbors: int, exclude: int | None = None) -> np.ndarray:
    """Radar coefficients learned for camera test point ``p_st`` in the aligned frame.

    Camera coefficients are mapped into the radar frame, the camera test
    point is reconstructed from its ``K`` nearest aligned camera training
    points, and the weights are applied to the radar coefficients of the
    same training indices.
    """
    p_r = np.asarray(p_r, dtype=float)
    aligned = pmap.to_radar(p_s)
    target = pmap.to_radar(p_st)
    nbrs = knn(aligned, target, k_neighbors, exclude=exclude)
    w = lle_weights(target, nbrs)
    radar_nbrs = NeighborSet(nbrs.indices, p_r[:, nbrs.indices].T)
    return np.asarray(transfer(w, radar_nbrs))


def ml_mfa_transfer(t: int, p_r, p_s, pmap: ProcrustesMap, k_neighbors: int, man_r: Manifold, side: int | None = None):
    """ML-MFA image for training index ``t`` used as its own test image."""
    if side is None:
        side = int(np.sqrt(man_r.dim))
    p_s = np.asarray(p_s, dtype=float)
    coeffs = ml_mfa_coefficients(p_s[:, t], p_r, p_s, pmap, k_neighbors, exclude=t)
    return to_image(lift(man_r, coeffs), side)

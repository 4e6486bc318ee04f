"""One-dimensional CCA subspace between radar and camera PCA coefficients."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from crosslearn.errors import ConfigurationError, DimensionMismatchError, RankDeficiencyError

RIDGE_SCALE = 1e-10
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class CcaSubspace:
    b_r: np.ndarray
    b_s: np.ndarray
    lambda_max: float  # top canonical correlation
    q_r: np.ndarray
    q_s: np.ndarray
    q_rs: np.ndarray
    regularized: bool = False

    @property
    def generalized_eigenvalue(self) -> float:
        """Eigenvalue of the block pencil written with a factor ``2*lambda``."""
        return 0.5 * self.lambda_max

    def pencil(self):
        n, m = self.b_r.size, self.b_s.size
        lhs = np.zeros((n + m, n + m))
        rhs = np.zeros((n + m, n + m))
        lhs[:m, :n] = self.q_rs.T
        lhs[m:, n:] = self.q_rs
        rhs[:m, n:] = self.q_s
        rhs[m:, :n] = self.q_r
        return lhs, rhs

    def residual(self) -> float:
        """Relative residual of the generalized eigenpair."""
        lhs, rhs = self.pencil()
        b = np.concatenate([self.b_r, self.b_s])
        left = lhs @ b
        return float(np.linalg.norm(left - 2.0 * self.generalized_eigenvalue * (rhs @ b)) / np.linalg.norm(left))


def _inv_sqrt(q: np.ndarray, name: str):
    evals, evecs = np.linalg.eigh(q)
    eps = 0.0
    if evals[0] <= SINGULAR_RTOL * max(evals[-1], 0.0):
        trace = float(np.trace(q))
        if not trace > 0:
            raise RankDeficiencyError(f"{name} covariance is zero; no canonical direction exists")
        eps = RIDGE_SCALE * trace / q.shape[0]
        warnings.warn(f"{name} covariance is singular; adding ridge {eps:.3g}", RuntimeWarning, stacklevel=3)
        evals = evals + eps
        if evals[0] <= 0:
            raise RankDeficiencyError(f"{name} covariance could not be regularized")
    return (evecs / np.sqrt(evals)) @ evecs.T, eps


def fit_cca(p_r, p_s) -> CcaSubspace:
    """Leading canonical pair of two centred coefficient matrices.

    The pencil is reduced to an SVD of the whitened cross-covariance
    ``Q_r^{-1/2} Q_rs Q_s^{-1/2}``; the top singular triplet gives the
    canonical correlation and, after un-whitening, basis vectors that
    satisfy ``b^T Q b = 1``.
    """
    p_r = np.asarray(p_r, dtype=float)
    p_s = np.asarray(p_s, dtype=float)
    if p_r.ndim != 2 or p_s.ndim != 2 or p_r.shape[1] != p_s.shape[1]:
        raise DimensionMismatchError("coefficient matrices must be 2-D with equal column counts")
    n_obs = p_r.shape[1]
    if n_obs < 2:
        raise ConfigurationError("CCA needs at least two paired samples")
    q_r = p_r @ p_r.T / n_obs
    q_s = p_s @ p_s.T / n_obs
    q_rs = p_r @ p_s.T / n_obs
    w_r, eps_r = _inv_sqrt(q_r, "radar")
    w_s, eps_s = _inv_sqrt(q_s, "camera")
    # keep the diagnostics consistent with the ridge actually used
    q_r = q_r + eps_r * np.eye(q_r.shape[0])
    q_s = q_s + eps_s * np.eye(q_s.shape[0])
    u, s, vt = np.linalg.svd(w_r @ q_rs @ w_s)
    b_r = w_r @ u[:, 0]
    b_s = w_s @ vt[0]
    nz = np.flatnonzero(np.abs(b_r) > 1e-14 * np.abs(b_r).max())
    if nz.size and b_r[nz[0]] < 0:
        b_r, b_s = -b_r, -b_s
    return CcaSubspace(b_r, b_s, float(s[0]), q_r, q_s, q_rs, bool(eps_r or eps_s))


def canonical_coeffs(p, b) -> np.ndarray | float:
    """``P^T b`` for a coefficient matrix, or the scalar ``p^T b`` for one vector."""
    p = np.asarray(p, dtype=float)
    b = np.asarray(b, dtype=float)
    if p.shape[0] != b.shape[0]:
        raise DimensionMismatchError(f"coefficient length {p.shape[0]} does not match basis length {b.shape[0]}")
    if p.ndim == 1:
        return float(p @ b)
    return p.T @ b

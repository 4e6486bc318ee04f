"""PCA manifolds of image stacks."""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np

from crosslearn.errors import ConfigurationError, DimensionMismatchError
from crosslearn.imgstack import ColumnMean, Stack, center, ensure_dir, load_matrix, save_matrix


@dataclass(frozen=True)
class Manifold:
    basis: np.ndarray  # dim x retained, orthonormal columns
    mean: ColumnMean
    spectrum: np.ndarray  # all min(dim, L) covariance eigenvalues, descending
    retained: int
    rank_limited: bool = False

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


def _fix_signs(u: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def fit(stack: Stack, k: int) -> Manifold:
    """Top-``k`` principal directions of the centred stack.

    The covariance is ``(1/L) Xc Xc^T``.  Its eigenvectors are taken
    from a thin SVD of the ``dim x L`` centred matrix, which costs the
    same as the ``L x L`` Gram route without squaring the condition
    number.  If ``k`` exceeds the numerical rank only rank-many
    components are kept and ``rank_limited`` is set.
    """
    n_cols = stack.count
    if n_cols < 2:
        raise ConfigurationError("PCA needs at least two images")
    if not 1 <= k <= min(stack.dim, n_cols):
        raise ConfigurationError(f"retained dimension {k} must lie in [1, {min(stack.dim, n_cols)}]")
    centred, mean = center(stack)
    u, s, _ = np.linalg.svd(centred.columns, full_matrices=False)
    spectrum = s**2 / n_cols
    tol = (s[0] if s.size else 0.0) * max(centred.columns.shape) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    retained, limited = k, False
    if k > rank:
        warnings.warn(f"requested {k} components but the centred stack has rank {rank}", RuntimeWarning, stacklevel=2)
        retained, limited = rank, True
    basis = _fix_signs(u[:, :retained]) if retained else np.zeros((stack.dim, 0))
    return Manifold(basis, mean, spectrum, retained, limited)


def _as_matrix(x):
    if isinstance(x, Stack):
        return x.columns, True
    x = np.asarray(x, dtype=float)
    return x, x.ndim == 2


def project(man: Manifold, x) -> np.ndarray:
    """Coefficients ``basis^T (x - mean)`` for one packed image or a stack."""
    data, is_matrix = _as_matrix(x)
    if data.shape[0] != man.dim:
        raise DimensionMismatchError(f"image length {data.shape[0]} does not match manifold dim {man.dim}")
    mean = man.mean.mean
    if is_matrix:
        return man.basis.T @ (data - mean[:, None])
    return man.basis.T @ (data - mean)


def lift(man: Manifold, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[0] != man.retained:
        raise DimensionMismatchError(f"expected {man.retained} coefficients, got {p.shape[0]}")
    mean = man.mean.mean
    return man.basis @ p + (mean[:, None] if p.ndim == 2 else mean)


def save(man: Manifold, folder) -> None:
    """Write ``basis.txt``, ``mean.txt`` and ``spectrum.txt`` into ``folder``."""
    ensure_dir(folder)
    save_matrix(os.path.join(folder, "basis.txt"), man.basis)
    save_matrix(os.path.join(folder, "mean.txt"), man.mean.mean[:, None])
    save_matrix(os.path.join(folder, "spectrum.txt"), man.spectrum[:, None])


def load(folder) -> Manifold:
    basis = load_matrix(os.path.join(folder, "basis.txt"))
    mean = load_matrix(os.path.join(folder, "mean.txt"))[:, 0]
    spectrum = load_matrix(os.path.join(folder, "spectrum.txt"))[:, 0]
    if mean.size != basis.shape[0]:
        raise DimensionMismatchError("manifold mean and basis lengths differ")
    return Manifold(basis, ColumnMean(mean), spectrum, basis.shape[1])

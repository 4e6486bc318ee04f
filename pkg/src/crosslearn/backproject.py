"""Back-projection of per-aperture polar reconstructions onto a Cartesian grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from crosslearn.errors import ConfigurationError, DimensionMismatchError
from crosslearn.imgstack import Image, Stack, normalize_max, unpack
from crosslearn.radarsim import RadarConfig, sensor_polar

SENTINEL = -1


@dataclass(frozen=True)
class PixelGrid:
    """Square grid in the turntable (body) frame.

    Pixel ``(side // 2, side // 2)`` is centred on ``center``; rows run
    towards ``-y`` and columns towards ``+x``.
    """

    side: int = 64
    extent: float = 2.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.side < 1 or not self.extent > 0:
            raise ConfigurationError("grid side must be >= 1 and extent > 0")

    @property
    def n_pixels(self) -> int:
        return self.side * self.side

    @property
    def pixel_size(self) -> float:
        return self.extent / self.side

    @property
    def center_pixel(self):
        return (self.side // 2, self.side // 2)

    def coords(self) -> np.ndarray:
        """World ``(x, y)`` of every pixel centre, shape ``(side, side, 2)``."""
        offs = (np.arange(self.side) - self.side // 2) * self.pixel_size
        xs = self.center[0] + offs
        ys = self.center[1] - offs
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def pixel_of(self, x: float, y: float):
        ps = self.pixel_size
        j = int(round((x - self.center[0]) / ps)) + self.side // 2
        i = int(round((self.center[1] - y) / ps)) + self.side // 2
        return i, j


@dataclass(frozen=True)
class ApertureIndexMap:
    theta_index: np.ndarray
    range_index: np.ndarray
    aperture_index: int
    range_upsample: int

    @property
    def valid(self) -> np.ndarray:
        return (self.theta_index != SENTINEL) & (self.range_index != SENTINEL)


def upsample(xhat, order: int) -> np.ndarray:
    """Linear interpolation along columns (range), rows untouched.

    The output has ``order * n_cols`` columns; column ``m`` samples the
    input at fractional position ``m / order`` and positions past the
    last input column hold its value.
    """
    if int(order) != order or order < 1:
        raise ConfigurationError("upsampling order must be a positive integer")
    xhat = np.asarray(xhat, dtype=float)
    if xhat.ndim == 1:
        xhat = xhat[None, :]
    if order == 1:
        return xhat.copy()
    n = xhat.shape[1]
    pos = np.arange(order * n) / order
    lo = np.minimum(np.floor(pos).astype(int), n - 1)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    return xhat[:, lo] * (1.0 - frac) + xhat[:, hi] * frac


def index_map(grid: PixelGrid, cfg: RadarConfig, l: int, range_upsample: int = 4) -> ApertureIndexMap:
    theta, rng = sensor_polar(grid.coords(), cfg, l)
    fine = cfg.fine_step
    k = np.rint((theta - cfg.scan_min) / fine).astype(int)
    dr = cfg.range_resolution / range_upsample
    m = np.rint((rng - cfg.range_min) / dr).astype(int)
    in_scan = (theta >= cfg.scan_min) & (theta <= cfg.scan_max) & (k >= 0) & (k < cfg.n_x)
    in_range = (m >= 0) & (m < cfg.n_range * range_upsample)
    ok = in_scan & in_range
    return ApertureIndexMap(np.where(ok, k, SENTINEL), np.where(ok, m, SENTINEL), l, range_upsample)


def backproject_aperture(xhat, imap: ApertureIndexMap) -> np.ndarray:
    """Pull the upsampled reconstruction back onto the grid, packed column-ordered.

    Out-of-view pixels are 0.  Negative reconstruction values are clipped
    to zero since the images are intensities.
    """
    up = upsample(xhat, imap.range_upsample)
    valid = imap.valid
    if valid.any():
        kmax, mmax = imap.theta_index[valid].max(), imap.range_index[valid].max()
        if kmax >= up.shape[0] or mmax >= up.shape[1]:
            raise DimensionMismatchError("index map does not fit the reconstruction dimensions")
    img = np.zeros(imap.theta_index.shape)
    img[valid] = up[imap.theta_index[valid], imap.range_index[valid]]
    np.maximum(img, 0.0, out=img)
    return img.ravel(order="F")


def composite_sum(stack: Stack) -> np.ndarray:
    cols = stack.columns
    out = np.zeros(cols.shape[0])
    # fixed left-to-right order so the result is reproducible
    for l in range(cols.shape[1]):
        out += cols[:, l]
    return out


def composite(stack: Stack, side: int | None = None) -> Image:
    if side is None:
        side = int(math.isqrt(stack.dim))
        if side * side != stack.dim:
            raise DimensionMismatchError("stack dim is not a square image; pass side explicitly")
    return normalize_max(unpack(composite_sum(stack), side))


def backproject_all(xhats, grid: PixelGrid, cfg: RadarConfig, range_upsample: int = 4, apertures=None) -> Stack:
    """Stack ``R`` whose column ``l`` is the back-projected aperture ``apertures[l]``."""
    if apertures is None:
        apertures = range(1, len(xhats) + 1)
    cols = [backproject_aperture(x, index_map(grid, cfg, l, range_upsample)) for x, l in zip(xhats, apertures)]
    return Stack(np.column_stack(cols))

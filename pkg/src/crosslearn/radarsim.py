"""Scanning-radar measurement synthesis and synthetic camera views.

The turntable geometry is emulated by keeping the sensor fixed at
``(0, -standoff)`` looking along ``+y`` and rotating the scene
counter-clockwise by ``2*pi*(l-1)/L`` about the origin for aperture
position ``l`` (1-based).  Azimuth ``theta`` is measured from the
boresight, positive towards ``+x``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from crosslearn.errors import ConfigurationError, DimensionMismatchError
from crosslearn.imgstack import Image

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class RadarConfig:
    range_resolution: float = 0.03
    angular_step: float = 0.25
    beamwidth_3db: float = 1.3
    scan_min: float = -13.0
    scan_max: float = 13.0
    aperture_count: int = 72
    standoff: float = 3.65
    noise_std: float = 0.02
    azimuth_upsample: int = 4
    # half-width of the range window centred on the standoff distance
    range_half_span: float = 1.0

    def __post_init__(self):
        positive = ("range_resolution", "angular_step", "beamwidth_3db", "standoff", "range_half_span")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.scan_min < self.scan_max:
            raise ConfigurationError("scan_min must be smaller than scan_max")
        if int(self.aperture_count) != self.aperture_count or self.aperture_count < 1:
            raise ConfigurationError("aperture_count must be a positive integer")
        if int(self.azimuth_upsample) != self.azimuth_upsample or self.azimuth_upsample < 1:
            raise ConfigurationError("azimuth_upsample must be a positive integer")
        if self.noise_std < 0:
            raise ConfigurationError("noise_std must be non-negative")
        steps = (self.scan_max - self.scan_min) / self.angular_step
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigurationError("scan range must be an integer multiple of angular_step")
        if self.standoff <= self.range_half_span:
            raise ConfigurationError("range window must not include the sensor position")

    @property
    def n_theta(self) -> int:
        return int(round((self.scan_max - self.scan_min) / self.angular_step)) + 1

    @property
    def n_x(self) -> int:
        return self.n_theta * self.azimuth_upsample

    @property
    def fine_step(self) -> float:
        """Azimuth spacing of the reconstruction grid, degrees."""
        return self.angular_step / self.azimuth_upsample

    @property
    def n_range(self) -> int:
        return 2 * int(round(self.range_half_span / self.range_resolution)) + 1

    @property
    def range_min(self) -> float:
        return self.standoff - (self.n_range // 2) * self.range_resolution

    def theta_grid(self) -> np.ndarray:
        return self.scan_min + self.fine_step * np.arange(self.n_x)

    def range_grid(self) -> np.ndarray:
        return self.range_min + self.range_resolution * np.arange(self.n_range)

    def aperture_angle(self, l: int) -> float:
        """Turntable rotation for 1-based aperture ``l``, radians."""
        if not 1 <= l <= self.aperture_count:
            raise ConfigurationError(f"aperture index {l} outside [1, {self.aperture_count}]")
        return 2.0 * math.pi * (l - 1) / self.aperture_count


@dataclass(frozen=True)
class Segment:
    start: tuple
    end: tuple
    weight: float = 1.0
    label: str = "body"
    # camera-visible brightness, independent of radar reflectivity
    albedo: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "end", tuple(float(v) for v in self.end))
        if len(self.start) != 3 or len(self.end) != 3:
            raise ConfigurationError("segment endpoints must be 3-D points")
        if self.weight < 0 or self.albedo < 0:
            raise ConfigurationError("segment weight and albedo must be non-negative")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))


@dataclass(frozen=True)
class Scene:
    segments: tuple
    extent: tuple = None

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if segs:
            pts = np.array([s.start for s in segs] + [s.end for s in segs])
            lo, hi = pts.min(axis=0), pts.max(axis=0)
        else:
            lo = hi = np.zeros(3)
        if self.extent is None:
            object.__setattr__(self, "extent", tuple((float(a), float(b)) for a, b in zip(lo, hi)))
        else:
            ext = tuple((float(a), float(b)) for a, b in self.extent)
            if any(l < a - 1e-12 or h > b + 1e-12 for (a, b), l, h in zip(ext, lo, hi)):
                raise ConfigurationError("scene extent does not enclose all segments")
            object.__setattr__(self, "extent", ext)

    @property
    def labels(self):
        return sorted({s.label for s in self.segments})

    def rotated(self, angle: float) -> "Scene":
        """Scene rotated counter-clockwise about the vertical axis."""
        c, s = math.cos(angle), math.sin(angle)

        def rot(p):
            return (c * p[0] - s * p[1], s * p[0] + c * p[1], p[2])

        return Scene(tuple(Segment(rot(g.start), rot(g.end), g.weight, g.label, g.albedo) for g in self.segments))


def point_target(weight: float = 1.0, position=(0.0, 0.0, 0.0)) -> Scene:
    return Scene((Segment(position, position, weight, "point"),))


def trolley(handle_weight: float = 0.1) -> Scene:
    """1 x 0.5 m trolley footprint with a push handle behind one end.

    The handle is a thin, weakly reflecting structure that the camera
    sees at full brightness.
    """
    hx, hy = 0.5, 0.25
    corners = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
    segs = []
    for z in (0.1, 0.45):
        for (x0, y0), (x1, y1) in zip(corners, corners[1:] + corners[:1]):
            segs.append(Segment((x0, y0, z), (x1, y1, z), 1.0, "body"))
    for x, y in corners:
        segs.append(Segment((x, y, 0.1), (x, y, 0.45), 1.0, "body"))
    # wheels
    for x, y in corners:
        segs.append(Segment((x, y, 0.0), (x, y, 0.1), 0.5, "body"))
    hxo, hz = hx + 0.15, 0.55
    for y in (-0.18, 0.18):
        segs.append(Segment((hx, y, 0.45), (hxo, y, hz), handle_weight, "handle"))
    segs.append(Segment((hxo, -0.18, hz), (hxo, 0.18, hz), handle_weight, "handle"))
    return Scene(tuple(segs))


# -- beam and measurement operator -------------------------------------------


@dataclass(frozen=True)
class BeamPattern:
    taps: np.ndarray
    spacing: float  # degrees between taps
    sigma: float  # degrees

    @property
    def center(self) -> int:
        return (len(self.taps) - 1) // 2

    def offsets(self) -> np.ndarray:
        return (np.arange(len(self.taps)) - self.center) * self.spacing

    def evaluate(self, theta):
        """Continuous (untruncated) beam gain at ``theta`` degrees."""
        theta = np.asarray(theta, dtype=float)
        return np.exp(-0.5 * (theta / self.sigma) ** 2)


def beam_pattern(cfg: RadarConfig) -> BeamPattern:
    """Gaussian two-way beam sampled on the reconstruction azimuth grid.

    The full width at half maximum equals ``cfg.beamwidth_3db``; taps are
    truncated at three standard deviations and the peak tap is 1.
    """
    if cfg.beamwidth_3db < cfg.angular_step:
        raise ConfigurationError(
            f"under-resolved beam: beamwidth {cfg.beamwidth_3db} deg is below the angular step {cfg.angular_step} deg"
        )
    sigma = cfg.beamwidth_3db * FWHM_TO_SIGMA
    spacing = cfg.fine_step
    half = int(math.floor(3.0 * sigma / spacing + 1e-12))
    offsets = spacing * np.arange(-half, half + 1)
    taps = np.exp(-0.5 * (offsets / sigma) ** 2)
    # force exact symmetry
    taps = 0.5 * (taps + taps[::-1])
    taps.setflags(write=False)
    return BeamPattern(taps, spacing, sigma)


class MeasurementOperator:
    """``A = I_{n_range} (x) (G H)`` stored through its per-range-bin block.

    Packed vectors hold one contiguous run of ``n_x`` (or ``n_theta``)
    samples per range bin.  ``forward``/``adjoint`` act on the
    ``(n_range, n_x)`` row layout used by the solver.
    """

    separable = True

    def __init__(self, block, n_range: int):
        block = np.asarray(block, dtype=float)
        if block.ndim != 2 or n_range < 1:
            raise ConfigurationError("operator block must be 2-D and n_range >= 1")
        self.block = block
        self.n_range = int(n_range)
        self.n_theta, self.n_x = block.shape

    @property
    def shape(self):
        return (self.n_theta * self.n_range, self.n_x * self.n_range)

    def matrix(self) -> np.ndarray:
        return np.kron(np.eye(self.n_range), self.block)

    def forward(self, rows: np.ndarray) -> np.ndarray:
        return rows @ self.block.T

    def adjoint(self, rows: np.ndarray) -> np.ndarray:
        return rows @ self.block

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.size != self.shape[1]:
            raise DimensionMismatchError(f"operator expects {self.shape[1]} values, got {x.size}")
        return self.forward(x.reshape(self.n_range, self.n_x)).ravel()

    def apply_adjoint(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.size != self.shape[0]:
            raise DimensionMismatchError(f"adjoint expects {self.shape[0]} values, got {y.size}")
        return self.adjoint(y.reshape(self.n_range, self.n_theta)).ravel()

    def squared_norm(self) -> float:
        return float(np.linalg.norm(self.block, 2) ** 2)

    def gram_block(self) -> np.ndarray:
        return self.block.T @ self.block


class DenseOperator(MeasurementOperator):
    """Arbitrary dense measurement matrix over the same packed layout."""

    separable = False

    def __init__(self, matrix, n_range: int):
        matrix = np.asarray(matrix, dtype=float)
        rows, cols = matrix.shape
        if rows % n_range or cols % n_range:
            raise ConfigurationError("dense operator dimensions must be multiples of n_range")
        self.full = matrix
        self.n_range = int(n_range)
        self.n_theta, self.n_x = rows // n_range, cols // n_range

    def matrix(self) -> np.ndarray:
        return self.full

    def forward(self, rows):
        return (self.full @ rows.ravel()).reshape(self.n_range, self.n_theta)

    def adjoint(self, rows):
        return (self.full.T @ rows.ravel()).reshape(self.n_range, self.n_x)

    def squared_norm(self) -> float:
        return float(np.linalg.norm(self.full, 2) ** 2)


def convolution_matrix(beam: BeamPattern, n_x: int) -> np.ndarray:
    """Zero-padded 'same' convolution of the beam taps on an ``n_x`` grid."""
    c = beam.center
    col = np.zeros(n_x)
    row = np.zeros(n_x)
    m = min(c + 1, n_x)
    col[:m] = beam.taps[c : c + m]
    row[:m] = beam.taps[c::-1][:m]
    return toeplitz(col, row)


def build_operator(beam: BeamPattern, n_x: int, n_theta: int, n_range: int) -> MeasurementOperator:
    if n_x < n_theta:
        raise ConfigurationError(f"n_x ({n_x}) must be at least n_theta ({n_theta})")
    if n_x % n_theta:
        raise ConfigurationError(f"n_x / n_theta = {n_x}/{n_theta} is not an integer subsampling ratio")
    ratio = n_x // n_theta
    gh = convolution_matrix(beam, n_x)[::ratio]
    return MeasurementOperator(gh, n_range)


def operator_for(cfg: RadarConfig) -> MeasurementOperator:
    return build_operator(beam_pattern(cfg), cfg.n_x, cfg.n_theta, cfg.n_range)


# -- scene rasterization -------------------------------------------------------


@dataclass(frozen=True)
class ReflectivityMap:
    """Azimuth x range reflectivity, shape ``(n_x, n_range)``."""

    matrix: np.ndarray
    aperture_index: int = 1

    def packed(self) -> np.ndarray:
        return np.asarray(self.matrix).ravel(order="F")

    @classmethod
    def from_packed(cls, x, n_x: int, n_range: int, aperture_index: int = 1) -> "ReflectivityMap":
        return cls(np.asarray(x, dtype=float).reshape((n_x, n_range), order="F"), aperture_index)


@dataclass(frozen=True)
class Measurement:
    aperture_index: int
    y: np.ndarray
    n_theta: int = field(default=0)

    def matrix(self) -> np.ndarray:
        """``(n_theta, n_range)`` view, one column per range bin."""
        return self.y.reshape((self.n_theta, -1), order="F")


def sensor_polar(xy, cfg: RadarConfig, l: int):
    """Azimuth (deg) and ground range (m) of body-frame points at aperture ``l``."""
    xy = np.asarray(xy, dtype=float)
    phi = cfg.aperture_angle(l)
    c, s = math.cos(phi), math.sin(phi)
    qx = c * xy[..., 0] - s * xy[..., 1]
    qy = s * xy[..., 0] + c * xy[..., 1] + cfg.standoff
    return np.degrees(np.arctan2(qx, qy)), np.hypot(qx, qy)


def _sample_segments(segments, ds: float):
    pts, owner = [], []
    for idx, seg in enumerate(segments):
        a, b = np.asarray(seg.start[:2]), np.asarray(seg.end[:2])
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / ds))) + 1
        t = np.linspace(0.0, 1.0, n)[:, None]
        pts.append(a + t * (b - a))
        owner.append(np.full(n, idx))
    if not pts:
        return np.zeros((0, 2)), np.zeros(0, dtype=int)
    return np.vstack(pts), np.concatenate(owner)


def rasterize_scene(scene: Scene, cfg: RadarConfig, l: int) -> ReflectivityMap:
    """Ground-truth reflectivity of the rotated scene on the (azimuth, range) grid.

    Each radar-reflecting segment adds its weight once to every cell it
    crosses.  Occlusion keeps, per azimuth cell, only the nearest occupied
    range bin.
    """
    out = np.zeros((cfg.n_x, cfg.n_range))
    segs = [s for s in scene.segments if s.weight > 0]
    ds = 0.25 * min(cfg.range_resolution, (cfg.standoff - cfg.range_half_span) * math.radians(cfg.fine_step))
    pts, owner = _sample_segments(segs, ds)
    if len(pts):
        theta, rng = sensor_polar(pts, cfg, l)
        k = np.rint((theta - cfg.scan_min) / cfg.fine_step).astype(int)
        j = np.rint((rng - cfg.range_min) / cfg.range_resolution).astype(int)
        ok = (k >= 0) & (k < cfg.n_x) & (j >= 0) & (j < cfg.n_range)
        k, j, owner = k[ok], j[ok], owner[ok]
        if k.size:
            nearest = np.full(cfg.n_x, np.iinfo(int).max)
            np.minimum.at(nearest, k, j)
            front = j == nearest[k]
            cells = np.unique(np.stack([owner[front], k[front], j[front]], axis=1), axis=0)
            weights = np.array([s.weight for s in segs])[cells[:, 0]]
            np.add.at(out, (cells[:, 1], cells[:, 2]), weights)
    if segs and not out.any():
        warnings.warn(f"aperture {l}: scene lies outside the radar field of view", RuntimeWarning, stacklevel=2)
    return ReflectivityMap(out, l)


def synthesize(scene: Scene, cfg: RadarConfig, l: int, seed: int = 0, operator: MeasurementOperator | None = None):
    """Noisy measurements ``y_l = A x_l + noise`` for aperture ``l``.

    Returns the measurement and the ground-truth reflectivity map.
    """
    if operator is None:
        operator = operator_for(cfg)
    if operator.shape[1] != cfg.n_x * cfg.n_range:
        raise DimensionMismatchError("operator does not match the radar configuration")
    truth = rasterize_scene(scene, cfg, l)
    y = operator.apply(truth.packed())
    if cfg.noise_std > 0:
        rng = np.random.default_rng([int(seed), int(l)])
        y = y + rng.normal(0.0, cfg.noise_std, size=y.shape)
    return Measurement(l, y, operator.n_theta), truth


# -- camera ------------------------------------------------------------------


@dataclass(frozen=True)
class CameraConfig:
    resolution: int = 96
    extent: float = 1.6  # metres spanned by the image width and height
    center_height: float = 0.3

    def __post_init__(self):
        if self.resolution < 1 or self.extent <= 0:
            raise ConfigurationError("camera resolution and extent must be positive")

    @property
    def pixel_size(self) -> float:
        return self.extent / self.resolution


def _segment_coverage(cols, rows, p0, p1):
    """Box-filtered coverage of a one-pixel-wide line (pixel units)."""
    d = p1 - p0
    length = float(np.hypot(*d))
    if length > 0:
        tx, ty = d / length
    else:
        tx, ty = 1.0, 0.0
    rx, ry = cols - p0[0], rows - p0[1]
    along = rx * tx + ry * ty
    across = np.abs(-rx * ty + ry * tx)
    cov_along = np.clip(np.minimum(along, length - along) + 0.5, 0.0, 1.0)
    cov_across = np.clip(1.0 - across, 0.0, 1.0)
    return cov_along * cov_across


def render_camera(scene: Scene, cfg: RadarConfig, l: int, camera: CameraConfig | None = None) -> Image:
    """Orthographic greyscale view of the rotated scene from the sensor.

    Image columns follow the sensor cross-range axis (``+x`` to the right),
    rows follow height (top row highest).
    """
    if camera is None:
        camera = CameraConfig()
    res, px = camera.resolution, camera.pixel_size
    phi = cfg.aperture_angle(l)
    c, s = math.cos(phi), math.sin(phi)
    cols, rows = np.meshgrid(np.arange(res, dtype=float), np.arange(res, dtype=float))
    img = np.zeros((res, res))
    top = camera.center_height + camera.extent / 2

    def to_pixel(p):
        u = c * p[0] - s * p[1]
        return np.array([(u + camera.extent / 2) / px - 0.5, (top - p[2]) / px - 0.5])

    for seg in scene.segments:
        if seg.albedo <= 0:
            continue
        cov = _segment_coverage(cols, rows, to_pixel(seg.start), to_pixel(seg.end))
        np.maximum(img, seg.albedo * cov, out=img)
    return Image(np.clip(img, 0.0, 1.0))

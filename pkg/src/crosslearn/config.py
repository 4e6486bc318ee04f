"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments.  ``segment`` may repeat; each
occurrence adds one scene segment given as
``x0 y0 z0 x1 y1 z1 weight [label [albedo]]`` and replaces the built-in
phantom.  Unknown keys are configuration errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources

from crosslearn.backproject import PixelGrid
from crosslearn.cbp import SolverOptions
from crosslearn.errors import ConfigurationError
from crosslearn.radarsim import CameraConfig, RadarConfig, Scene, Segment, point_target, trolley

PHANTOMS = ("trolley", "point")
PLUS_RULES = ("max", "mean")


@dataclass(frozen=True)
class Config:
    # radar
    range_resolution: float = 0.03
    angular_step: float = 0.25
    beamwidth_3db: float = 1.3
    scan_min: float = -13.0
    scan_max: float = 13.0
    aperture_count: int = 72
    standoff: float = 3.65
    noise_std: float = 0.02
    azimuth_upsample: int = 4
    range_half_span: float = 1.0
    # scene
    phantom: str = "trolley"
    handle_weight: float = 0.1
    segment: tuple = ()
    # camera
    cam_res: int = 96
    cam_extent: float = 1.6
    cam_center_height: float = 0.3
    # back-projection grid
    grid_side: int = 64
    grid_extent: float = 2.0
    range_upsample: int = 4
    # fused LASSO
    lambda_e: float = 0.1
    lambda_f: float = 0.1
    max_iter: int = 2000
    tol: float = 1e-6
    rho: float = 1.0
    solver: str = "fista"
    # cross-learning
    neighbors: int = 5
    pc_radar: int = 15
    pc_camera: int = 15
    plus_rule: str = "max"
    paired_neighbors: bool = False
    leave_one_out: bool = False
    aperture_arc: float = 360.0
    seed: int = 0

    def __post_init__(self):
        if self.phantom not in PHANTOMS and not self.segment:
            raise ConfigurationError(f"phantom must be one of {PHANTOMS} (or give segment lines)")
        if self.plus_rule not in PLUS_RULES:
            raise ConfigurationError(f"plus_rule must be one of {PLUS_RULES}")
        if not 0 < self.aperture_arc <= 360:
            raise ConfigurationError("aperture_arc must lie in (0, 360] degrees")
        if self.cam_res < self.grid_side:
            raise ConfigurationError("camera resolution must be at least the radar image resolution")
        if self.neighbors < 1 or self.pc_radar < 1 or self.pc_camera < 1:
            raise ConfigurationError("neighbors and principal-component counts must be positive")
        # building the sub-configs validates their own invariants
        self.radar()
        self.grid()
        self.camera()
        self.solver_options()

    def radar(self) -> RadarConfig:
        names = [f.name for f in dataclasses.fields(RadarConfig)]
        return RadarConfig(**{n: getattr(self, n) for n in names})

    def camera(self) -> CameraConfig:
        return CameraConfig(self.cam_res, self.cam_extent, self.cam_center_height)

    def grid(self) -> PixelGrid:
        return PixelGrid(self.grid_side, self.grid_extent)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(self.max_iter, self.tol, self.rho, self.solver)

    def scene(self) -> Scene:
        if self.segment:
            return Scene(tuple(_parse_segment(s) for s in self.segment))
        if self.phantom == "point":
            return point_target()
        return trolley(self.handle_weight)

    def apertures(self):
        """1-based aperture indices inside the configured arc."""
        step = 360.0 / self.aperture_count
        return [l for l in range(1, self.aperture_count + 1) if (l - 1) * step < self.aperture_arc - 1e-9]

    def replace(self, **changes) -> "Config":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "segment":
                lines.extend(f"segment = {s}" for s in value)
            else:
                lines.append(f"{f.name} = {_format(value)}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_segment(text: str) -> Segment:
    parts = text.split()
    if len(parts) < 7:
        raise ConfigurationError(f"segment needs 'x0 y0 z0 x1 y1 z1 weight [label [albedo]]', got {text!r}")
    try:
        nums = [float(p) for p in parts[:7]]
        albedo = float(parts[8]) if len(parts) > 8 else 1.0
    except ValueError:
        raise ConfigurationError(f"non-numeric segment field in {text!r}") from None
    label = parts[7] if len(parts) > 7 else "body"
    return Segment(tuple(nums[:3]), tuple(nums[3:6]), nums[6], label, albedo)


def _coerce(name: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError(raw)
            return int(value)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"invalid value for {name}: {raw!r}") from None


_TYPES = {f.name: type(f.default) for f in dataclasses.fields(Config) if f.name != "segment"}


def parse(text: str, base: Config | None = None) -> Config:
    values = {}
    segments = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "segment":
            segments.append(raw)
        elif key == "pc":
            values["pc_radar"] = values["pc_camera"] = _coerce(key, raw, int)
        elif key in _TYPES:
            values[key] = _coerce(key, raw, _TYPES[key])
        else:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
    if segments:
        values["segment"] = tuple(segments)
    base = base if base is not None else Config()
    try:
        return dataclasses.replace(base, **values)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def default_config() -> Config:
    """Defaults shipped with the package (tuned penalties included)."""
    text = resources.files("crosslearn").joinpath("default.conf").read_text()
    return parse(text, Config())


def load(path=None) -> Config:
    base = default_config()
    if path is None:
        return base
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from None
    return parse(text, base)

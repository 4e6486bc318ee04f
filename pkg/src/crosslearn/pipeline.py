"""End-to-end orchestration: simulation, CBP, back-projection, cross-learning, metrics.

Workspace layout (all matrix files use the ``imgstack`` text format)::

    config.conf                 snapshot of the effective configuration
    measurements/y_###.txt      n_theta x n_range measurements per aperture
    truth/x_###.txt             n_x x n_range ground-truth reflectivity
    camera/s_###.pgm, S.txt     camera views and the packed camera stack
    cbp/xhat_###.txt            reconstructed reflectivity per aperture
    cbp/convergence.csv         aperture,iteration,objective
    radar/R.txt                 back-projected per-aperture images (stack)
    images/<method>.txt/.pgm    method outputs
    metrics.csv, manifest.json
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from crosslearn import backproject as bp
from crosslearn import cbp, coherent, embed, manifold, mfa, radarsim
from crosslearn.config import Config
from crosslearn.errors import ConfigurationError, DimensionMismatchError, MissingArtifactError
from crosslearn.imgstack import (
    Image,
    Stack,
    ensure_dir,
    load_matrix,
    load_stack,
    normalize_max,
    pack,
    save_image,
    save_matrix,
    save_stack,
    unpack,
)

log = logging.getLogger(__name__)

METRIC_HEADER = ("method", "masked_energy", "ncc", "handle_visibility")


class Method(enum.Enum):
    CIS_SAR = "cis-sar"
    ML_CCA = "ml-cca"
    ML_CCA_PLUS = "ml-cca+"
    MFA = "mfa"
    MFA_PLUS = "mfa+"
    ML_MFA = "ml-mfa"
    ML_MFA_PLUS = "ml-mfa+"

    @property
    def is_plus(self) -> bool:
        return self.value.endswith("+")

    @property
    def learned(self) -> "Method":
        """The learned method a '+' variant fuses with CiS-SAR."""
        return Method(self.value.rstrip("+")) if self.is_plus else self

    @classmethod
    def parse(cls, name: str) -> "Method":
        # accept "ml-cca+", "ML_CCA+", "mlcca+" alike
        key = name.strip().lower().replace("_", "").replace("-", "")
        for m in cls:
            if m.value.replace("-", "") == key:
                return m
        raise ConfigurationError(f"unknown method {name!r}; choose from {[m.value for m in cls]}")


# -- fusion and metrics --------------------------------------------------------


def fuse_plus_raw(base: Image, learned: Image, rule: str = "max") -> np.ndarray:
    if base.shape != learned.shape:
        raise DimensionMismatchError(f"cannot fuse images of shape {base.shape} and {learned.shape}")
    if rule == "mean":
        return 0.5 * (base.data + learned.data)
    return np.maximum(base.data, learned.data)


def fuse_plus(base: Image, learned: Image, rule: str = "max") -> Image:
    """Combine a learned image with the CiS-SAR baseline (pixelwise max by default)."""
    return normalize_max(Image(fuse_plus_raw(base, learned, rule)))


@dataclass(frozen=True)
class MetricRecord:
    masked_energy: float
    ncc: float
    visibility: dict = field(default_factory=dict)

    @property
    def handle_visibility(self) -> float:
        return self.visibility.get("handle", float("nan"))


def metrics(img: Image, truth_mask, structures: dict | None = None) -> MetricRecord:
    """Score an image against a boolean occupancy mask.

    ``masked_energy`` is the share of squared intensity inside the mask,
    ``ncc`` the Pearson correlation between image and mask, and
    ``visibility[label]`` the maximum intensity inside each structure mask.
    """
    # C order so the reductions do not depend on how the image was produced
    data = np.ascontiguousarray(img.data if isinstance(img, Image) else img, dtype=float)
    mask = np.ascontiguousarray(truth_mask.data if isinstance(truth_mask, Image) else truth_mask, dtype=float)
    if data.shape != mask.shape:
        raise DimensionMismatchError("image and mask shapes differ")
    energy = data * data
    total = energy.sum()
    masked = float((energy * (mask > 0)).sum() / total) if total > 0 else 0.0
    ncc = 0.0
    # correlation with a constant image or mask is undefined; report 0
    if np.ptp(data) > 0 and np.ptp(mask) > 0:
        dc, mc = data - data.mean(), mask - mask.mean()
        ncc = float((dc * mc).sum() / np.sqrt((dc * dc).sum() * (mc * mc).sum()))
    vis = {}
    for label, smask in (structures or {}).items():
        smask = np.asarray(smask, dtype=bool)
        vis[label] = float(data[smask].max()) if smask.any() else 0.0
    return MetricRecord(masked, ncc, vis)


def occupancy(scene: radarsim.Scene, grid: bp.PixelGrid, labels=None) -> np.ndarray:
    """Pixels crossed by the ground-plane projection of the selected segments."""
    out = np.zeros((grid.side, grid.side), dtype=bool)
    ps = grid.pixel_size
    for seg in scene.segments:
        if seg.weight <= 0 or (labels is not None and seg.label not in labels):
            continue
        a, b = np.asarray(seg.start[:2]), np.asarray(seg.end[:2])
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / (0.25 * ps)))) + 1
        for x, y in a + np.linspace(0, 1, n)[:, None] * (b - a):
            i, j = grid.pixel_of(x, y)
            if 0 <= i < grid.side and 0 <= j < grid.side:
                out[i, j] = True
    return out


def truth_masks(scene: radarsim.Scene, grid: bp.PixelGrid, dilation: int = 1):
    """Dilated occupancy mask and per-label structure masks.

    A structure mask keeps only pixels not claimed by the dilated mask of
    any other label, so a faint part is not scored by a bright neighbour.
    """
    struct = ndimage.generate_binary_structure(2, 2)

    def dilate(m):
        return ndimage.binary_dilation(m, struct, iterations=dilation) if dilation else m

    full = dilate(occupancy(scene, grid))
    per_label = {lab: dilate(occupancy(scene, grid, {lab})) for lab in scene.labels}
    structures = {}
    for lab, m in per_label.items():
        others = np.zeros_like(m)
        for other, om in per_label.items():
            if other != lab:
                others |= om
        structures[lab] = m & ~others
    return full, structures


# -- stage functions -----------------------------------------------------------


@dataclass
class SimulationResult:
    apertures: list
    measurements: list
    truths: list
    camera: list


def simulate_all(cfg: Config) -> SimulationResult:
    radar = cfg.radar()
    scene = cfg.scene()
    camera = cfg.camera()
    op = radarsim.operator_for(radar)
    aps = cfg.apertures()
    meas, truths, cams = [], [], []
    for l in aps:
        m, x = radarsim.synthesize(scene, radar, l, cfg.seed, op)
        meas.append(m)
        truths.append(x)
        cams.append(radarsim.render_camera(scene, radar, l, camera))
    return SimulationResult(aps, meas, truths, cams)


def cbp_all(measurements, cfg: Config):
    """Fused-LASSO reconstruction of every aperture; returns (matrices, results)."""
    radar = cfg.radar()
    op = radarsim.operator_for(radar)
    opts = cfg.solver_options()
    xhats, results = [], []
    for m in measurements:
        xm, res = cbp.reconstruct_aperture(m, radar, cfg.lambda_e, cfg.lambda_f, opts, op)
        xhats.append(xm.matrix)
        results.append(res)
    stalled = [m.aperture_index for m, r in zip(measurements, results) if not r.converged]
    if stalled:
        log.warning("%d of %d apertures stopped at max_iter=%d before reaching tol", len(stalled), len(results), opts.max_iter)
    return xhats, results


@dataclass(frozen=True)
class GridPoint:
    lambda_e: float
    lambda_f: float
    rel_error: float
    iterations: float


def grid_search(cfg: Config, lambdas_e, lambdas_f, stride: int = 12):
    """Score every (lambda_e, lambda_f) pair by CBP error against the simulated truth.

    Uses every ``stride``-th aperture.  The score is the mean relative
    Frobenius error ``||xhat - x|| / ||x||``.  Returns points sorted best first.
    """
    sim = simulate_all(cfg)
    picks = list(range(0, len(sim.apertures), stride))
    meas = [sim.measurements[i] for i in picks]
    truths = [sim.truths[i].matrix for i in picks]
    points = []
    for le in lambdas_e:
        for lf in lambdas_f:
            xhats, res = cbp_all(meas, cfg.replace(lambda_e=float(le), lambda_f=float(lf)))
            err = [np.linalg.norm(xh - x) / np.linalg.norm(x) for xh, x in zip(xhats, truths)]
            points.append(GridPoint(float(le), float(lf), float(np.mean(err)), float(np.mean([r.iterations for r in res]))))
            log.info("lambda_e=%g lambda_f=%g rel_error=%.4f", le, lf, points[-1].rel_error)
    return sorted(points, key=lambda g: (g.rel_error, g.lambda_e, g.lambda_f))


def radar_stack(xhats, cfg: Config, apertures) -> Stack:
    return bp.backproject_all(xhats, cfg.grid(), cfg.radar(), cfg.range_upsample, apertures)


def camera_stack(images) -> Stack:
    return Stack.from_images(images)


# -- cross-learning ------------------------------------------------------------


@dataclass
class LearnDiagnostics:
    cca: coherent.CcaSubspace | None = None
    procrustes: mfa.ProcrustesMap | None = None
    weights: list = field(default_factory=list)  # (t, camera idx, radar idx, w, a_hat)


def _fit_models(r_train: Stack, s_train: Stack, cfg: Config):
    man_r = manifold.fit(r_train, min(cfg.pc_radar, r_train.dim, r_train.count))
    man_s = manifold.fit(s_train, min(cfg.pc_camera, s_train.dim, s_train.count))
    return man_r, man_s, manifold.project(man_r, r_train), manifold.project(man_s, s_train)


def _ml_cca_vector(cfg, man_r, p_r, p_s, cca, p_rt, p_st, exclude, diag, t):
    a_r = coherent.canonical_coeffs(p_r, cca.b_r)
    a_s = coherent.canonical_coeffs(p_s, cca.b_s)
    a_rt = coherent.canonical_coeffs(p_rt, cca.b_r)
    a_st = coherent.canonical_coeffs(p_st, cca.b_s)
    nbr_s = embed.knn(a_s, a_st, cfg.neighbors, exclude=exclude)
    w = embed.lle_weights(a_st, nbr_s)
    if cfg.paired_neighbors:
        nbr_r = embed.NeighborSet(nbr_s.indices, a_r[nbr_s.indices])
    else:
        nbr_r = embed.knn(a_r, a_rt, cfg.neighbors, exclude=exclude)
    a_hat = embed.transfer(w, nbr_r)
    diag.weights.append((t, nbr_s.indices.tolist(), nbr_r.indices.tolist(), w.w.tolist(), a_hat))
    return manifold.lift(man_r, embed.learned_coefficients(a_hat, p_rt, cca.b_r))


def learned_stack(method: Method, r_stack: Stack, s_stack: Stack, cfg: Config):
    """Per-test-image learned radar images (one packed column per ``t``).

    By default every training image is also a test image, with the test
    index excluded from its own neighbourhood.  ``leave_one_out`` refits
    the manifolds without column ``t`` for each test image.
    """
    method = method.learned
    side = cfg.grid_side
    n_t = r_stack.count
    diag = LearnDiagnostics()
    cols = []
    models = None if cfg.leave_one_out else _fit_models(r_stack, s_stack, cfg)
    for t in range(n_t):
        if cfg.leave_one_out:
            keep = [i for i in range(n_t) if i != t]
            man_r, man_s, p_r, p_s = _fit_models(Stack(r_stack.columns[:, keep]), Stack(s_stack.columns[:, keep]), cfg)
            exclude = None
        else:
            man_r, man_s, p_r, p_s = models
            exclude = t
        p_rt = manifold.project(man_r, r_stack.column(t))
        p_st = manifold.project(man_s, s_stack.column(t))
        if method is Method.ML_CCA:
            if diag.cca is None or cfg.leave_one_out:
                diag.cca = coherent.fit_cca(p_r, p_s)
            vec = _ml_cca_vector(cfg, man_r, p_r, p_s, diag.cca, p_rt, p_st, exclude, diag, t)
        elif method is Method.MFA:
            if diag.procrustes is None or cfg.leave_one_out:
                diag.procrustes = mfa.fit_procrustes(p_r, p_s)
            vec = manifold.lift(man_r, mfa.mfa_coefficients(p_rt, diag.procrustes))
        elif method is Method.ML_MFA:
            if diag.procrustes is None or cfg.leave_one_out:
                diag.procrustes = mfa.fit_procrustes(p_r, p_s)
            coeffs = mfa.ml_mfa_coefficients(p_st, p_r, p_s, diag.procrustes, cfg.neighbors, exclude)
            vec = manifold.lift(man_r, coeffs)
        else:
            raise ValueError(f"{method} is not a learned method")
        cols.append(pack(embed.to_image(vec, side)))
    return Stack(np.column_stack(cols)), diag


def method_image(method: Method, r_stack: Stack, s_stack: Stack, cfg: Config, cache: dict | None = None):
    """Output image of ``method``; ``cache`` shares learned images across '+' variants."""
    cache = {} if cache is None else cache
    side = cfg.grid_side
    if "cis" not in cache:
        cache["cis"] = bp.composite(r_stack, side)
    if method is Method.CIS_SAR:
        return cache["cis"], None
    base = method.learned
    if base not in cache:
        stack, diag = learned_stack(base, r_stack, s_stack, cfg)
        cache[base] = (bp.composite(stack, side), diag)
    img, diag = cache[base]
    if method.is_plus:
        img = fuse_plus(cache["cis"], img, cfg.plus_rule)
    return img, diag


# -- workspace I/O -------------------------------------------------------------


def _path(ws, *parts):
    return os.path.join(str(ws), *parts)


def _require(stage, path):
    if not os.path.exists(path):
        raise MissingArtifactError(stage, path)
    return path


def write_config(ws, cfg: Config):
    ensure_dir(ws)
    with open(_path(ws, "config.conf"), "w") as fh:
        fh.write(cfg.to_text())


def apertures_in(ws, subdir, prefix, stage):
    folder = _require(stage, _path(ws, subdir))
    found = sorted(int(f[len(prefix) : -4]) for f in os.listdir(folder) if f.startswith(prefix) and f.endswith(".txt"))
    if not found:
        raise MissingArtifactError(stage, _path(ws, subdir, f"{prefix}###.txt"))
    return found


def save_simulation(ws, sim: SimulationResult):
    ensure_dir(_path(ws, "measurements"))
    ensure_dir(_path(ws, "truth"))
    ensure_dir(_path(ws, "camera"))
    for l, m, x, cam in zip(sim.apertures, sim.measurements, sim.truths, sim.camera):
        save_matrix(_path(ws, "measurements", f"y_{l:03d}.txt"), m.matrix())
        save_matrix(_path(ws, "truth", f"x_{l:03d}.txt"), x.matrix)
        save_image(_path(ws, "camera", f"s_{l:03d}.pgm"), cam)
    save_stack(_path(ws, "camera", "S.txt"), camera_stack(sim.camera))


def load_measurements(ws):
    aps = apertures_in(ws, "measurements", "y_", "cbp")
    out = []
    for l in aps:
        mat = load_matrix(_path(ws, "measurements", f"y_{l:03d}.txt"))
        out.append(radarsim.Measurement(l, mat.ravel(order="F"), mat.shape[0]))
    return out


def save_cbp(ws, apertures, xhats, results):
    ensure_dir(_path(ws, "cbp"))
    for l, x in zip(apertures, xhats):
        save_matrix(_path(ws, "cbp", f"xhat_{l:03d}.txt"), x)
    with open(_path(ws, "cbp", "convergence.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["aperture", "iteration", "objective"])
        for l, res in zip(apertures, results):
            for it, obj in enumerate(res.history):
                writer.writerow([l, it, repr(obj)])


def load_xhats(ws):
    aps = apertures_in(ws, "cbp", "xhat_", "backproject")
    return aps, [load_matrix(_path(ws, "cbp", f"xhat_{l:03d}.txt")) for l in aps]


def save_method_image(ws, method: Method, img: Image):
    ensure_dir(_path(ws, "images"))
    save_matrix(_path(ws, "images", f"{method.value}.txt"), img.data)
    save_image(_path(ws, "images", f"{method.value}.pgm"), img)


def load_method_images(ws):
    folder = _require("metrics", _path(ws, "images"))
    out = {}
    for m in Method:
        p = os.path.join(folder, f"{m.value}.txt")
        if os.path.exists(p):
            out[m] = Image(load_matrix(p))
    if not out:
        raise MissingArtifactError("metrics", _path(ws, "images", "<method>.txt"))
    return out


def load_stacks(ws, apertures=None):
    """Radar and camera stacks, optionally restricted to the given aperture indices."""
    r = load_stack(_require("crosslearn", _path(ws, "radar", "R.txt")))
    s = load_stack(_require("crosslearn", _path(ws, "camera", "S.txt")))
    if r.count != s.count:
        raise DimensionMismatchError(f"radar stack has {r.count} images, camera stack {s.count}")
    if apertures is not None:
        stored = [int(v) for v in load_matrix(_require("crosslearn", _path(ws, "radar", "apertures.txt")))[:, 0]]
        if len(stored) != r.count:
            raise DimensionMismatchError("radar/apertures.txt does not match R.txt")
        keep = [i for i, l in enumerate(stored) if l in set(apertures)]
        if len(keep) < len(apertures):
            missing = sorted(set(apertures) - set(stored))
            raise MissingArtifactError("crosslearn", _path(ws, "radar", f"R.txt (apertures {missing})"))
        r, s = Stack(r.columns[:, keep]), Stack(s.columns[:, keep])
    return r, s


def save_diagnostics(ws, diag: LearnDiagnostics, dump_cca=False, dump_weights=False, dump_procrustes=False):
    if diag is None:
        return
    ddir = ensure_dir(_path(ws, "diagnostics"))
    if dump_cca and diag.cca is not None:
        save_matrix(os.path.join(ddir, "cca_b_r.txt"), diag.cca.b_r)
        save_matrix(os.path.join(ddir, "cca_b_s.txt"), diag.cca.b_s)
        save_matrix(os.path.join(ddir, "cca_lambda.txt"), np.array([[diag.cca.lambda_max]]))
    if dump_weights and diag.weights:
        with open(os.path.join(ddir, "weights.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "camera_neighbors", "radar_neighbors", "weights", "a_hat"])
            for t, ns, nr, w, a in diag.weights:
                writer.writerow([t, " ".join(map(str, ns)), " ".join(map(str, nr)), " ".join(repr(v) for v in w), repr(a)])
    if dump_procrustes and diag.procrustes is not None:
        save_matrix(os.path.join(ddir, "procrustes_k.txt"), np.array([[diag.procrustes.k]]))
        save_matrix(os.path.join(ddir, "procrustes_q.txt"), diag.procrustes.q)


def metric_table(images: dict, cfg: Config):
    full, structures = truth_masks(cfg.scene(), cfg.grid())
    rows = []
    for m in Method:
        if m in images:
            rec = metrics(images[m], full, structures)
            rows.append((m.value, rec.masked_energy, rec.ncc, rec.handle_visibility))
    return rows


def write_metric_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_HEADER)
        for name, me, ncc, hv in rows:
            writer.writerow([name, repr(float(me)), repr(float(ncc)), repr(float(hv))])


# -- drivers -------------------------------------------------------------------


def stage_simulate(cfg: Config, ws):
    write_config(ws, cfg)
    sim = simulate_all(cfg)
    save_simulation(ws, sim)
    return sim


def stage_cbp(cfg: Config, ws):
    meas = load_measurements(ws)
    xhats, results = cbp_all(meas, cfg)
    save_cbp(ws, [m.aperture_index for m in meas], xhats, results)
    return xhats, results


def stage_backproject(cfg: Config, ws):
    aps, xhats = load_xhats(ws)
    r = radar_stack(xhats, cfg, aps)
    ensure_dir(_path(ws, "radar"))
    save_stack(_path(ws, "radar", "R.txt"), r)
    save_matrix(_path(ws, "radar", "apertures.txt"), np.asarray(aps, dtype=float))
    save_method_image(ws, Method.CIS_SAR, bp.composite(r, cfg.grid_side))
    return r


def run(method: Method, ws, cfg: Config, cache=None, dumps=None):
    """Run one method on a workspace holding ``radar/R.txt`` and ``camera/S.txt``."""
    r, s = load_stacks(ws, cfg.apertures())
    img, diag = method_image(method, r, s, cfg, cache)
    save_method_image(ws, method, img)
    save_diagnostics(ws, diag, **(dumps or {}))
    return img


def stage_metrics(cfg: Config, ws):
    rows = metric_table(load_method_images(ws), cfg)
    write_metric_csv(_path(ws, "metrics.csv"), rows)
    return rows


def run_all(cfg: Config, ws, methods=None, dumps=None):
    """Every stage end-to-end; writes ``manifest.json`` and returns the metric rows."""
    methods = list(Method) if methods is None else methods
    stage_simulate(cfg, ws)
    stage_cbp(cfg, ws)
    stage_backproject(cfg, ws)
    cache = {}
    for m in methods:
        run(m, ws, cfg, cache, dumps)
    rows = stage_metrics(cfg, ws)
    manifest = {
        "config": cfg.to_text().splitlines(),
        "seed": cfg.seed,
        "outputs": {m.value: _path(ws, "images", f"{m.value}.pgm") for m in methods},
        "metrics_csv": _path(ws, "metrics.csv"),
        "metrics": [dict(zip(METRIC_HEADER, row)) for row in rows],
    }
    with open(_path(ws, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return rows


def run_in_memory(cfg: Config, methods=None):
    """Full pipeline without touching disk; returns (images, metric rows, intermediates)."""
    methods = list(Method) if methods is None else methods
    sim = simulate_all(cfg)
    xhats, results = cbp_all(sim.measurements, cfg)
    r = radar_stack(xhats, cfg, sim.apertures)
    s = camera_stack(sim.camera)
    cache = {}
    images = {m: method_image(m, r, s, cfg, cache)[0] for m in methods}
    rows = metric_table(images, cfg)
    return images, rows, {"sim": sim, "xhats": xhats, "results": results, "R": r, "S": s, "cache": cache}


__all__ = [
    "Method",
    "MetricRecord",
    "fuse_plus",
    "fuse_plus_raw",
    "metrics",
    "occupancy",
    "truth_masks",
    "simulate_all",
    "cbp_all",
    "radar_stack",
    "camera_stack",
    "learned_stack",
    "method_image",
    "run",
    "run_all",
    "run_in_memory",
    "grid_search",
    "unpack",
]

"""Analytic density-plus-color-plus-feature field with pinhole cameras.

The scene is a sum of Gaussian density blobs, each carrying a color and a
feature vector; per-point color and feature are density-weighted mixtures,
view-independent by design so multi-view color consistency holds by
construction. Rendering marches each pixel ray with midpoint quadrature and
standard alpha compositing, and also outputs the expected termination
distance, which gives exact ground-truth correspondence between views.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ImageIOError, ShapeError
from .fileio import write_flow_pfm, write_float_map, write_image, write_pfm
from .flow import FlowField
from .image import Image, bilinear_sample


@dataclass(frozen=True, eq=False)
class Blob:
    """One Gaussian density lobe with its appearance attributes."""

    center: np.ndarray
    radius: float
    peak_density: float
    color: np.ndarray
    feature: np.ndarray

    def __post_init__(self):
        center = np.array(self.center, dtype=np.float64, copy=True)
        color = np.array(self.color, dtype=np.float64, copy=True)
        feat = np.atleast_1d(np.array(self.feature, dtype=np.float64, copy=True))
        if center.shape != (3,):
            raise ConfigError(f"blob center must be a 3-vector, got shape {center.shape}")
        if color.shape != (3,):
            raise ConfigError(f"blob color must be a 3-vector, got shape {color.shape}")
        if not (self.radius > 0):
            raise ConfigError(f"blob radius must be positive, got {self.radius}")
        if self.peak_density < 0:
            raise ConfigError(f"peak density must be >= 0, got {self.peak_density}")
        for arr in (center, color, feat):
            arr.flags.writeable = False
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "color", color)
        object.__setattr__(self, "feature", feat)


@dataclass(frozen=True, eq=False)
class FieldScene:
    """A list of blobs plus a background color and the feature dimension."""

    blobs: tuple[Blob, ...]
    background_color: np.ndarray = field(default_factory=lambda: np.zeros(3))
    feature_dim: int = 8

    def __post_init__(self):
        bg = np.array(self.background_color, dtype=np.float64, copy=True)
        if bg.shape != (3,):
            raise ConfigError(f"background color must be a 3-vector, got shape {bg.shape}")
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim must be >= 1, got {self.feature_dim}")
        blobs = tuple(self.blobs)
        for blob in blobs:
            if blob.feature.shape != (self.feature_dim,):
                raise ConfigError(
                    f"blob feature has dim {blob.feature.shape[0]}, scene wants {self.feature_dim}")
        bg.flags.writeable = False
        object.__setattr__(self, "background_color", bg)
        object.__setattr__(self, "blobs", blobs)

    def _weights(self, points: np.ndarray) -> np.ndarray:
        """Per-blob Gaussian density at each query point, shape (..., n_blobs)."""
        if not self.blobs:
            return np.zeros(points.shape[:-1] + (0,))
        parts = []
        for blob in self.blobs:
            d2 = np.sum((points - blob.center) ** 2, axis=-1)
            parts.append(blob.peak_density * np.exp(-d2 / (2.0 * blob.radius ** 2)))
        return np.stack(parts, axis=-1)

    def density(self, points: np.ndarray) -> np.ndarray:
        return self._weights(points).sum(axis=-1)

    def color_at(self, points: np.ndarray) -> np.ndarray:
        """Density-weighted mixture of blob colors; zero where density vanishes."""
        w = self._weights(points)
        total = w.sum(axis=-1, keepdims=True)
        if not self.blobs:
            return np.zeros(points.shape[:-1] + (3,))
        colors = np.stack([b.color for b in self.blobs])
        return (w @ colors) / np.maximum(total, 1e-300)

    def feature_at(self, points: np.ndarray) -> np.ndarray:
        w = self._weights(points)
        total = w.sum(axis=-1, keepdims=True)
        if not self.blobs:
            return np.zeros(points.shape[:-1] + (self.feature_dim,))
        feats = np.stack([b.feature for b in self.blobs])
        return (w @ feats) / np.maximum(total, 1e-300)


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera: x right, y down, z forward, pixel centers at integers.

    orientation maps camera coordinates to world coordinates; near and far
    bound the marched segment in world units along the (unit) ray.
    """

    position: np.ndarray
    orientation: np.ndarray
    focal: float
    width: int
    height: int
    near: float = 0.1
    far: float = 10.0

    def __post_init__(self):
        pos = np.array(self.position, dtype=np.float64, copy=True)
        rot = np.array(self.orientation, dtype=np.float64, copy=True)
        if pos.shape != (3,):
            raise ConfigError(f"camera position must be a 3-vector, got shape {pos.shape}")
        if rot.shape != (3, 3):
            raise ConfigError(f"camera orientation must be 3x3, got shape {rot.shape}")
        if np.abs(rot @ rot.T - np.eye(3)).max() > 1e-9:
            raise ConfigError("camera orientation must be orthonormal")
        if not (self.focal > 0):
            raise ConfigError(f"focal length must be positive, got {self.focal}")
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"image size must be at least 1x1, got {self.width}x{self.height}")
        if not (0.0 < self.near < self.far):
            raise ConfigError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        pos.flags.writeable = False
        rot.flags.writeable = False
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", rot)

    @classmethod
    def look_at(cls, position, target, up=(0.0, 0.0, 1.0), **kwargs) -> "Camera":
        position = np.asarray(position, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - position
        norm = np.linalg.norm(forward)
        if norm == 0:
            raise ConfigError("camera position and target coincide")
        forward = forward / norm
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            raise ConfigError("view direction is parallel to the up vector")
        right = right / norm
        down = np.cross(forward, right)
        return cls(position=position, orientation=np.stack([right, down, forward], axis=1),
                   **kwargs)

    @property
    def principal_point(self) -> tuple[float, float]:
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    def ray_directions(self) -> np.ndarray:
        """Unit world-space direction for every pixel, shape (H, W, 3)."""
        cx, cy = self.principal_point
        xs = (np.arange(self.width) - cx) / self.focal
        ys = (np.arange(self.height) - cy) / self.focal
        grid_x, grid_y = np.meshgrid(xs, ys)
        dirs = np.stack([grid_x, grid_y, np.ones_like(grid_x)], axis=-1)
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        return dirs @ self.orientation.T

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """World points to pixel coordinates.

        Returns (x, y, distance from camera center, in-front mask).
        """
        rel = points - self.position
        cam = rel @ self.orientation
        z = cam[..., 2]
        in_front = z > 1e-12
        safe_z = np.where(in_front, z, 1.0)
        cx, cy = self.principal_point
        x = self.focal * cam[..., 0] / safe_z + cx
        y = self.focal * cam[..., 1] / safe_z + cy
        return x, y, np.linalg.norm(rel, axis=-1), in_front


@dataclass(frozen=True)
class RenderConfig:
    """Quadrature settings: uniform midpoint samples, optional stratified jitter."""

    samples_per_ray: int = 128
    stratified_jitter: bool = False
    jitter_seed: int = 0

    def __post_init__(self):
        if self.samples_per_ray < 2:
            raise ConfigError(f"need at least 2 samples per ray, got {self.samples_per_ray}")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Per-pixel feature vectors, shape (H, W, dim)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[2] < 1:
            raise ShapeError(f"feature map must be HxWxK, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("feature map contains NaN or Inf")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class RenderResult:
    color: Image
    feature: FeatureMap
    depth: Image
    trans: Image
    depth_valid: Image
    weight_sum: Image


def render(scene: FieldScene, camera: Camera, cfg: RenderConfig = RenderConfig()) -> RenderResult:
    """March every pixel ray through the field and composite.

    Per sample i at distance t_i with spacing delta: opacity
    alpha_i = 1 - exp(-sigma_i delta), transmittance T_i is the running
    product of (1 - alpha_j) for j < i, and the pixel accumulates
    sum_i T_i alpha_i times the sample color/feature/distance. Whatever
    transmittance survives the far plane picks up the background color.
    Depth is the alpha-weighted expected termination distance; pixels whose
    accumulated weight is ~0 are flagged invalid in depth_valid.
    """
    dirs = camera.ray_directions()
    n = cfg.samples_per_ray
    delta = (camera.far - camera.near) / n
    if cfg.stratified_jitter:
        rng = np.random.default_rng(cfg.jitter_seed)
        offsets = (np.arange(n) + rng.random((camera.height, camera.width, n))) * delta
    else:
        offsets = np.broadcast_to((np.arange(n) + 0.5) * delta,
                                  (camera.height, camera.width, n))
    ts = camera.near + offsets
    points = camera.position + ts[..., None] * dirs[:, :, None, :]

    sigma = scene.density(points)
    alpha = 1.0 - np.exp(-sigma * delta)
    one_minus = 1.0 - alpha
    running = np.cumprod(one_minus, axis=2)
    trans_before = np.concatenate(
        [np.ones_like(running[..., :1]), running[..., :-1]], axis=2)
    weights = trans_before * alpha
    trans_final = running[..., -1]

    color = (weights[..., None] * scene.color_at(points)).sum(axis=2)
    color += trans_final[..., None] * scene.background_color
    feature = (weights[..., None] * scene.feature_at(points)).sum(axis=2)
    weight_sum = weights.sum(axis=2)
    depth = (weights * ts).sum(axis=2) / np.maximum(weight_sum, 1e-12)
    return RenderResult(
        color=Image(color),
        feature=FeatureMap(feature),
        depth=Image(depth),
        trans=Image(trans_final),
        depth_valid=Image((weight_sum > 1e-6).astype(np.float64)),
        weight_sum=Image(weight_sum),
    )


def gt_flow(depth1: Image, cam1: Camera, cam2: Camera,
            depth2: Image | None = None,
            depth_valid1: Image | None = None) -> tuple[FlowField, Image]:
    """Exact correspondence from view 1 to view 2 via unprojection.

    Each pixel of view 1 is lifted along its ray by the rendered distance,
    reprojected into view 2, and the flow is the pixel displacement. The
    valid mask requires the target to land inside the frame in front of the
    camera, the source depth to be defined (depth_valid1, when given), and,
    when depth2 is given, the distances to agree within 2 percent, which
    rejects occlusions.
    """
    if (depth1.height, depth1.width) != (cam1.height, cam1.width):
        raise ShapeError(f"depth map {depth1.height}x{depth1.width} does not match "
                         f"camera {cam1.height}x{cam1.width}")
    if depth1.channels != 1:
        raise ShapeError("depth must be single channel")
    dirs = cam1.ray_directions()
    points = cam1.position + depth1.data * dirs
    x2, y2, dist2, in_front = cam2.project(points)

    grid_x, grid_y = np.meshgrid(np.arange(cam1.width), np.arange(cam1.height))
    u_x = np.where(in_front, x2 - grid_x, 0.0)
    u_y = np.where(in_front, y2 - grid_y, 0.0)

    # tolerate rounding drift for landings exactly on the frame border
    eps = 1e-9
    valid = in_front & (x2 >= -eps) & (x2 <= cam2.width - 1 + eps) \
        & (y2 >= -eps) & (y2 <= cam2.height - 1 + eps)
    if depth_valid1 is not None:
        valid &= depth_valid1.plane() > 0.5
    if depth2 is not None:
        sampled = bilinear_sample(depth2.data, np.clip(x2, 0, cam2.width - 1),
                                  np.clip(y2, 0, cam2.height - 1))[..., 0]
        valid &= np.abs(dist2 - sampled) <= 0.02 * np.maximum(dist2, 1e-12)
    u_x = np.where(valid, u_x, 0.0)
    u_y = np.where(valid, u_y, 0.0)
    return FlowField(u_x, u_y), Image(valid.astype(np.float64))


def orbit_cameras(count: int, center=(0.0, 0.0, 0.0), radius: float = 3.0,
                  height: float = 0.0, focal: float = 64.0, width: int = 32,
                  image_height: int = 32, near: float = 0.5, far: float = 8.0,
                  degrees: float = 360.0) -> list[Camera]:
    """Cameras on a circular arc around a center, all looking at it."""
    if count < 1:
        raise ConfigError(f"need at least one camera, got {count}")
    center = np.asarray(center, dtype=np.float64)
    cams = []
    for k in range(count):
        angle = math.radians(degrees) * k / max(count, 1)
        position = center + np.array([radius * math.cos(angle),
                                      radius * math.sin(angle),
                                      height])
        cams.append(Camera.look_at(position, center, focal=focal, width=width,
                                   height=image_height, near=near, far=far))
    return cams


# ---------------------------------------------------------------------------
# Scene description files and on-disk pair datasets.
# ---------------------------------------------------------------------------


def scene_to_json(scene: FieldScene) -> dict:
    return {
        "blobs": [{
            "center": blob.center.tolist(),
            "radius": blob.radius,
            "peak_density": blob.peak_density,
            "color": blob.color.tolist(),
            "feature": blob.feature.tolist(),
        } for blob in scene.blobs],
        "background_color": scene.background_color.tolist(),
        "feature_dim": scene.feature_dim,
    }


def scene_from_json(obj: dict) -> FieldScene:
    try:
        feature_dim = int(obj.get("feature_dim", 8))
        blobs = []
        for spec in obj.get("blobs", []):
            feature = spec.get("feature")
            if feature is None:
                feature = np.zeros(feature_dim)
            blobs.append(Blob(
                center=np.asarray(spec["center"], dtype=np.float64),
                radius=float(spec["radius"]),
                peak_density=float(spec.get("peak_density", 1.0)),
                color=np.asarray(spec.get("color", (1.0, 1.0, 1.0)), dtype=np.float64),
                feature=np.asarray(feature, dtype=np.float64),
            ))
        background = np.asarray(obj.get("background_color", (0.0, 0.0, 0.0)),
                                dtype=np.float64)
        return FieldScene(blobs=tuple(blobs), background_color=background,
                          feature_dim=feature_dim)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed scene description: {exc}") from exc


def cameras_from_json(obj) -> list[Camera]:
    try:
        if isinstance(obj, dict) and "orbit" in obj:
            orbit = obj["orbit"]
            return orbit_cameras(
                count=int(orbit["count"]),
                center=orbit.get("center", (0.0, 0.0, 0.0)),
                radius=float(orbit.get("radius", 3.0)),
                height=float(orbit.get("height", 0.0)),
                focal=float(orbit["focal"]),
                width=int(orbit["width"]),
                image_height=int(orbit["height_px"]),
                near=float(orbit.get("near", 0.5)),
                far=float(orbit.get("far", 8.0)),
                degrees=float(orbit.get("degrees", 360.0)),
            )
        cams = []
        for spec in obj:
            common = dict(focal=float(spec["focal"]), width=int(spec["width"]),
                          height=int(spec["height"]), near=float(spec.get("near", 0.5)),
                          far=float(spec.get("far", 8.0)))
            if "orientation" in spec:
                cams.append(Camera(position=np.asarray(spec["position"], dtype=np.float64),
                                   orientation=np.asarray(spec["orientation"], dtype=np.float64),
                                   **common))
            else:
                cams.append(Camera.look_at(spec["position"], spec["look_at"],
                                           up=spec.get("up", (0.0, 0.0, 1.0)), **common))
        return cams
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed camera description: {exc}") from exc


def load_scene_file(path) -> tuple[FieldScene, list[Camera], RenderConfig]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ImageIOError(f"no such scene file: '{path}'") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ImageIOError(f"cannot read scene file '{path}': {exc}") from exc
    scene = scene_from_json(obj)
    cameras = cameras_from_json(obj.get("cameras", []))
    render_obj = obj.get("render", {})
    cfg = RenderConfig(
        samples_per_ray=int(render_obj.get("samples_per_ray", 128)),
        stratified_jitter=bool(render_obj.get("stratified_jitter", False)),
        jitter_seed=int(render_obj.get("jitter_seed", 0)),
    )
    return scene, cameras, cfg


def _feature_filename(index: int, dim: int) -> str:
    # PFM holds only 1 or 3 channels; other widths go to the raw container.
    suffix = "feat.pfm" if dim in (1, 3) else "feat.f32"
    return f"view_{index:03d}.{suffix}"


def render_views(scene: FieldScene, cameras: list[Camera], cfg: RenderConfig,
                 out_dir) -> dict:
    """Render every camera and write color/depth/feature maps; returns the file list."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    views = []
    results = []
    for idx, cam in enumerate(cameras):
        result = render(scene, cam, cfg)
        results.append(result)
        color_name = f"view_{idx:03d}.png"
        depth_name = f"view_{idx:03d}.depth.pfm"
        feat_name = _feature_filename(idx, scene.feature_dim)
        write_image(result.color, out / color_name)
        write_pfm(out / depth_name, result.depth.plane())
        if scene.feature_dim in (1, 3):
            write_pfm(out / feat_name, result.feature.data)
        else:
            write_float_map(out / feat_name, result.feature.data)
        views.append({"index": idx, "color": color_name, "depth": depth_name,
                      "feature": feat_name})
    return {"views": views, "results": results}


def make_pair_dataset(scene: FieldScene, cameras: list[Camera], cfg: RenderConfig,
                      out_dir) -> dict:
    """Render a camera path and write ground-truth flows plus a manifest.

    Adjacent cameras form the short-term pairs; the first and last camera
    form the single long-term pair. Every flow is occlusion-checked against
    the destination depth. Returns the manifest, which is also written as
    manifest.json (pretty, key-sorted) so regeneration is byte-comparable.
    """
    if len(cameras) < 2:
        raise ConfigError(f"a pair dataset needs at least 2 cameras, got {len(cameras)}")
    out = Path(out_dir)
    rendered = render_views(scene, cameras, cfg, out)
    results = rendered["results"]

    def write_pair(src: int, dst: int) -> dict:
        flow_name = f"flow_{src:03d}_{dst:03d}.pfm"
        flow_path = out / flow_name
        if not flow_path.exists():
            flow, valid = gt_flow(results[src].depth, cameras[src], cameras[dst],
                                  depth2=results[dst].depth,
                                  depth_valid1=results[src].depth_valid)
            write_flow_pfm(flow_path, flow.u_x, flow.u_y, valid.plane())
        return {"src": src, "dst": dst, "flow": flow_name}

    short_term = [write_pair(i, i + 1) for i in range(len(cameras) - 1)]
    long_term = [write_pair(0, len(cameras) - 1)]
    manifest = {
        "feature_dim": scene.feature_dim,
        "n_views": len(cameras),
        "views": rendered["views"],
        "short_term": short_term,
        "long_term": long_term,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest

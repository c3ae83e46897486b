"""Sampling coordinates derived from history maps.

Turns a track's valid-cell mask into ego-frame BEV points and per-camera
pixel coordinates, padded to a fixed length with a boolean mask. The
features these coordinates would index are not computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .raster import GridSpec, HistoryMap, ValidMask, valid_mask
from .tracker import TrackState

_MIN_DEPTH = 1e-6

# ego (x fwd, y left, z up) -> camera (x right, y down, z along optical axis)
_EGO_TO_CAM_AXES = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


class CameraError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera; ``rotation``/``translation`` map ego points into the camera frame."""

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_size: Tuple[int, int]
    name: str = "cam"

    def __post_init__(self):
        K = np.array(self.intrinsics, dtype=float).reshape(3, 3)
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        w, h = self.image_size
        if not (K[0, 0] > 0 and K[1, 1] > 0):
            raise CameraError("focal lengths must be positive")
        if not (0 <= K[0, 2] < w and 0 <= K[1, 2] < h):
            raise CameraError("principal point outside the image")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or np.linalg.det(R) <= 0:
            raise CameraError("extrinsic rotation is not a proper rotation")
        for arr in (K, R, t):
            arr.setflags(write=False)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "image_size", (int(w), int(h)))

    @classmethod
    def mounted(
        cls,
        position: Sequence[float],
        yaw: float,
        pitch: float,
        focal: Tuple[float, float],
        principal: Tuple[float, float],
        image_size: Tuple[int, int],
        name: str = "cam",
    ) -> "CameraModel":
        """Camera at ``position`` (ego frame) facing ``yaw``, tilted down by ``pitch``."""
        cy, sy = math.cos(yaw), math.sin(yaw)
        rz_t = np.array([[cy, sy, 0.0], [-sy, cy, 0.0], [0.0, 0.0, 1.0]])
        cp, sp = math.cos(pitch), math.sin(pitch)
        rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
        R = rx @ _EGO_TO_CAM_AXES @ rz_t
        t = -R @ np.asarray(position, dtype=float)
        K = np.array([[focal[0], 0.0, principal[0]], [0.0, focal[1], principal[1]], [0.0, 0.0, 1.0]])
        return cls(K, R, t, image_size, name)

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "intrinsics": self.intrinsics.tolist(),
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "image_size": list(self.image_size),
        }


def default_cameras() -> List[CameraModel]:
    """Six-camera ring at 1.6 m height, 1600x900 images."""
    cams = []
    for i, yaw_deg in enumerate((0, 60, 120, 180, -120, -60)):
        cams.append(
            CameraModel.mounted(
                position=(0.0, 0.0, 1.6),
                yaw=math.radians(yaw_deg),
                pitch=math.radians(5.0),
                focal=(1260.0, 1260.0),
                principal=(800.0, 450.0),
                image_size=(1600, 900),
                name=f"cam{i}",
            )
        )
    return cams


def bev_samples(mask: ValidMask, spec: GridSpec) -> np.ndarray:
    """Ego-frame cell centers of every valid cell, row-major."""
    if mask.spec != spec:
        raise ValueError("mask was built for a different grid")
    if len(mask) == 0:
        return np.zeros((0, 2))
    return spec.center_of(mask.cells[:, 0], mask.cells[:, 1])


def project_to_pv(points, camera: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    """Project ground-plane points into the image.

    Returns ``(uv, visible)``; rows of ``uv`` are NaN where the point is
    behind the camera or lands outside the image.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ego = np.column_stack([pts, np.zeros(len(pts))])
    cam = ego @ camera.rotation.T + camera.translation
    depth = cam[:, 2]
    in_front = depth > _MIN_DEPTH
    safe = np.where(in_front, depth, 1.0)
    pix = cam @ camera.intrinsics.T
    u = pix[:, 0] / safe
    v = pix[:, 1] / safe
    w, h = camera.image_size
    visible = in_front & (u >= 0) & (u < w) & (v >= 0) & (v < h)
    uv = np.column_stack([u, v])
    uv[~visible] = np.nan
    return uv, visible


def backproject_to_ground(uv, camera: CameraModel) -> np.ndarray:
    """Intersect pixel rays with the ego ground plane z = 0."""
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    rays = np.column_stack([uv, np.ones(len(uv))]) @ np.linalg.inv(camera.intrinsics).T
    dirs = rays @ camera.rotation  # R^T applied per row
    origin = camera.center
    s = -origin[2] / dirs[:, 2]
    return (origin[None, :] + s[:, None] * dirs)[:, :2]


@dataclass(frozen=True)
class SampleSet:
    track_id: int
    bev_coords: np.ndarray
    pv_coords: List[np.ndarray]
    pv_visible: List[np.ndarray]
    pad_mask: np.ndarray
    camera_names: List[str]

    @property
    def l_max(self) -> int:
        return len(self.pad_mask)

    def padded_bev(self) -> np.ndarray:
        out = np.zeros((self.l_max, 2))
        out[: len(self.bev_coords)] = self.bev_coords
        return out

    def to_dict(self) -> dict:
        def clean(arr):
            return [[None if math.isnan(v) else float(v) for v in row] for row in arr]

        return {
            "track_id": self.track_id,
            "l_max": self.l_max,
            "bev": self.bev_coords.tolist(),
            "pv": {
                name: {"uv": clean(uv), "visible": vis.tolist()}
                for name, uv, vis in zip(self.camera_names, self.pv_coords, self.pv_visible)
            },
            "mask": self.pad_mask.tolist(),
        }


def _select_cells(hmap: HistoryMap, mask: ValidMask, l_max: int) -> ValidMask:
    if len(mask) <= l_max:
        return mask
    conf = hmap.grid[mask.cells[:, 0], mask.cells[:, 1]]
    # stable sort keeps row-major order among equal confidences
    order = np.argsort(-conf, kind="stable")[:l_max]
    return ValidMask(mask.cells[np.sort(order)], mask.spec)


def build_sample_set(
    track: TrackState, cameras: Sequence[CameraModel], tau_map: float = 0.5, l_max: int = 256
) -> SampleSet:
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    spec = track.history.spec
    mask = _select_cells(track.history, valid_mask(track.history, tau_map), l_max)
    bev = bev_samples(mask, spec)
    pv, vis = [], []
    for cam in cameras:
        uv, visible = project_to_pv(bev, cam)
        pv.append(uv)
        vis.append(visible)
    pad = np.zeros(l_max, dtype=bool)
    pad[: len(bev)] = True
    return SampleSet(track.track_id, bev, pv, vis, pad, [c.name for c in cameras])

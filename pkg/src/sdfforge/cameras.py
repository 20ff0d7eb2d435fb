"""Pinhole cameras and ray generation for virtual depth rendering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import as_point3


@dataclass(frozen=True)
class PinholeCamera:
    """World-to-camera pose plus intrinsics.

    Camera frame: +z looks forward, +y points down image rows, +x right.
    x_cam = rotation @ x_world + translation.
    """

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """(origin (3,), unit directions (H*W, 3)) through all pixel centers.

        Directions are row-major over the image.
        """
        u = np.arange(self.width, dtype=np.float64)
        v = np.arange(self.height, dtype=np.float64)
        uu, vv = np.meshgrid(u, v)  # (H, W)
        d_cam = np.stack(
            [
                (uu - self.cx) / self.fx,
                (vv - self.cy) / self.fy,
                np.ones_like(uu),
            ],
            axis=-1,
        ).reshape(-1, 3)
        d_cam /= np.linalg.norm(d_cam, axis=1, keepdims=True)
        d_world = d_cam @ self.rotation  # R^T applied to each row
        return self.position, d_world


def look_at_pose(eye, target=(0.0, 0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, t) looking from eye toward target.

    Up is +Y orthogonalized against the view direction (Gram-Schmidt),
    falling back to +X when the view is parallel to +Y.
    """
    eye = as_point3(eye)
    target = as_point3(target)
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    up_hint = np.array([0.0, 1.0, 0.0])
    if abs(np.dot(fwd, up_hint)) > 1.0 - 1e-6:
        up_hint = np.array([1.0, 0.0, 0.0])
    up = up_hint - np.dot(up_hint, fwd) * fwd
    up /= np.linalg.norm(up)
    y_cam = -up  # image rows grow downward
    x_cam = np.cross(y_cam, fwd)
    rotation = np.stack([x_cam, y_cam, fwd])
    return rotation, -rotation @ eye


def make_camera(eye, width: int, height: int, vfov_deg: float = 60.0,
                target=(0.0, 0.0, 0.0)) -> PinholeCamera:
    """Square-pixel look-at camera with the given vertical field of view."""
    rotation, translation = look_at_pose(eye, target)
    fy = (height / 2.0) / np.tan(np.deg2rad(vfov_deg) / 2.0)
    return PinholeCamera(
        rotation=rotation,
        translation=translation,
        fx=fy,
        fy=fy,
        cx=(width - 1) / 2.0,
        cy=(height - 1) / 2.0,
        width=width,
        height=height,
    )

"""Camera poses and the look-at translation frame.

A pose is world-to-camera: x_cam = R @ x_world + t, camera center
c = -R^T t, optical axis through c along the camera +z direction
(third row of R in world coordinates).

Training targets for translation regression are the camera-frame
coordinates of a canonical world origin, scaled so the first camera
sits at unit distance. Placing that origin at the point closest to all
optical axes makes the targets insensitive to how a camera orbits the
scene while looking at it, which is what makes them learnable; placing
it at the first camera's center does not have that property.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, DegenerateScaleError

# Threshold on the normal-matrix condition number above which the axes
# do not pin down a point (near-parallel axes).
_COND_LIMIT = 1e8


@dataclass
class CameraPose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {self.rotation.shape}")

    @property
    def center(self):
        """Camera center in world coordinates, -R^T t."""
        return -self.rotation.T @ self.translation

    @property
    def optical_axis(self):
        """Camera +z direction in world coordinates."""
        return self.rotation[2].copy()


def closest_point_to_axes(poses):
    """Least-squares intersection of the cameras' optical axes.

    Minimizes the summed squared point-to-line distances via the normal
    equations sum(I - d d^T) p = sum(I - d d^T) o. Raises
    DegenerateGeometryError when the axes are (near-)parallel and the
    normal matrix is ill conditioned.
    """
    if len(poses) < 2:
        raise ValueError("need at least two cameras")
    a = np.zeros((3, 3))
    b = np.zeros(3)
    for pose in poses:
        d = pose.optical_axis
        d = d / np.linalg.norm(d)
        proj = np.eye(3) - np.outer(d, d)
        a += proj
        b += proj @ pose.center
    if np.linalg.cond(a) > _COND_LIMIT:
        raise DegenerateGeometryError(
            "optical axes are near-parallel; no well-defined closest point"
        )
    return np.linalg.solve(a, b)


@dataclass
class SceneFrame:
    """Canonical translation frame: origin, scale, per-camera targets."""

    lookat_point: np.ndarray
    scale: float
    targets: np.ndarray


def _targets_about(poses, origin, scale):
    # Camera-frame coordinates of `origin`, scaled: s * (R_i @ origin + t_i).
    return np.array(
        [scale * (p.rotation @ origin + p.translation) for p in poses]
    )


def normalize_scene(poses):
    """Translation targets in the look-at frame.

    The world origin moves to the point closest to all optical axes and
    the scale makes the first camera's target unit length, so for an
    exactly center-facing rig the first target is [0, 0, 1].
    """
    lookat = closest_point_to_axes(poses)
    first = poses[0].rotation @ lookat + poses[0].translation
    norm = float(np.linalg.norm(first))
    if norm <= 1e-9:
        raise DegenerateScaleError("first camera sits at the look-at point")
    scale = 1.0 / norm
    return SceneFrame(
        lookat_point=lookat,
        scale=scale,
        targets=_targets_about(poses, lookat, scale),
    )


def first_camera_frame_targets(poses):
    """Targets with the origin at the first camera's center instead.

    Shares the look-at frame's scale so the two variants are comparable.
    The first camera's own target is exactly zero; targets of the other
    cameras move whenever any camera orbits the scene, which is the
    instability the look-at frame removes.
    """
    frame = normalize_scene(poses)
    return _targets_about(poses, poses[0].center, frame.scale)

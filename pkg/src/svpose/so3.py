"""Rotation utilities, deterministic SO(3) grids, and grid serialization.

Conventions
-----------
* Extrinsics are world-to-camera: x_cam = R @ x_world + t.
* Rotations are 3x3 float64 matrices everywhere in the public API;
  quaternions appear only at boundaries (grid files, scene files) and
  inside kernels.
* Quaternions are unit, (w, x, y, z) order, Hamilton product; q and -q
  denote the same rotation.
* Distance on SO(3) is the rotation angle of a^T b in radians, in
  [0, pi]. On quaternions this equals 2*arccos(|<qa, qb>|).
* The relative rotation from camera i to camera j maps camera-i
  coordinates to camera-j coordinates: R_ij = R_j @ R_i^T. It is
  unchanged when the world frame is re-rotated, which is the gauge the
  solver fixes by pinning the first camera.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._fileio import write_bytes_atomic
from .errors import FormatError

GRID_MAGIC = b"SO3G"
GRID_VERSION = 1

GENERATOR_IDS = {"super_fibonacci": 1, "random_uniform": 2}
_ID_TO_GENERATOR = {v: k for k, v in GENERATOR_IDS.items()}

# Covering radius is estimated against a fixed probe set so the value is
# a deterministic function of the grid alone.
_COVERING_SAMPLES = 10_000
_COVERING_SEED = 402653189


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("zero-norm quaternion")
    return q / n


def quat_conj(q):
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_mul(a, b):
    """Hamilton product, broadcasting over leading axes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_matrix(q):
    """Rotation matrix of a unit quaternion; broadcasts to (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def matrix_to_quat(rotation):
    """Unit quaternion (w, x, y, z) of a rotation matrix, with w >= 0."""
    m = np.asarray(rotation, dtype=np.float64)
    t = m[0, 0] + m[1, 1] + m[2, 2]
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [
                0.25 * s,
                (m[2, 1] - m[1, 2]) / s,
                (m[0, 2] - m[2, 0]) / s,
                (m[1, 0] - m[0, 1]) / s,
            ]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [
                (m[2, 1] - m[1, 2]) / s,
                0.25 * s,
                (m[0, 1] + m[1, 0]) / s,
                (m[0, 2] + m[2, 0]) / s,
            ]
        )
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [
                (m[0, 2] - m[2, 0]) / s,
                (m[0, 1] + m[1, 0]) / s,
                0.25 * s,
                (m[1, 2] + m[2, 1]) / s,
            ]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [
                (m[1, 0] - m[0, 1]) / s,
                (m[0, 2] + m[2, 0]) / s,
                (m[1, 2] + m[2, 1]) / s,
                0.25 * s,
            ]
        )
    q /= np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def axis_angle_rotation(axis, angle):
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    x, y, z = axis / n
    c, s = math.cos(angle), math.sin(angle)
    cc = 1.0 - c
    return np.array(
        [
            [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
            [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
            [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
        ]
    )


def check_rotation(rotation, tol=1e-9):
    """Raise ValueError unless `rotation` is orthonormal with det +1."""
    m = np.asarray(rotation, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {m.shape}")
    err = np.abs(m.T @ m - np.eye(3)).max()
    if err > tol:
        raise ValueError(f"matrix is not orthonormal (|R^T R - I| = {err:.3e})")
    d = np.linalg.det(m)
    if abs(d - 1.0) > tol:
        raise ValueError(f"matrix determinant is {d:.12f}, not +1")
    return m


def random_quats(rng, n):
    """n quaternions uniform on SO(3) (normalized 4d Gaussians)."""
    q = rng.standard_normal((n, 4))
    return quat_normalize(q)


def random_rotation(rng):
    return quat_to_matrix(random_quats(rng, 1)[0])


def geodesic_distance(a, b):
    """Angle of a^T b in radians; the bi-invariant metric on SO(3)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    t = float(np.trace(a.T @ b))
    c = (t - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def relative_rotation(r_i, r_j):
    """Map from camera-i coordinates to camera-j coordinates: R_j R_i^T.

    Invariant under a rotation of the world frame (extrinsics R_i -> R_i W),
    which is why both the solver objective and the evaluation metrics are
    phrased in terms of it.
    """
    return np.asarray(r_j, dtype=np.float64) @ np.asarray(r_i, dtype=np.float64).T


def super_fibonacci_quats(n):
    """Deterministic low-discrepancy sample of n unit quaternions.

    Double spiral on S^3 driven by sqrt(2) and the positive real root of
    x^4 = x + 4; seed-independent by construction.
    """
    phi = math.sqrt(2.0)
    psi = 1.533751168755204288118041
    s = np.arange(n, dtype=np.float64) + 0.5
    t = s / n
    r = np.sqrt(t)
    rr = np.sqrt(1.0 - t)
    alpha = 2.0 * math.pi * s / phi
    beta = 2.0 * math.pi * s / psi
    q = np.stack(
        [r * np.sin(alpha), r * np.cos(alpha), rr * np.sin(beta), rr * np.cos(beta)],
        axis=1,
    )
    return quat_normalize(q)


@dataclass(frozen=True)
class GridSpec:
    """Recipe that reproduces a grid bit for bit."""

    generator: str
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.generator not in GENERATOR_IDS:
            raise ValueError(f"unknown grid generator {self.generator!r}")
        if self.n < 1:
            raise ValueError("grid size must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("grid seed must fit in an unsigned 64-bit integer")


@dataclass
class SO3Grid:
    """A finite candidate set of rotations with cached derived data."""

    quats: np.ndarray
    spec: GridSpec
    _rotations: np.ndarray | None = field(default=None, repr=False)
    _covering: float | None = field(default=None, repr=False)

    @property
    def n(self):
        return self.quats.shape[0]

    @property
    def rotations(self):
        if self._rotations is None:
            self._rotations = quat_to_matrix(self.quats)
        return self._rotations

    @property
    def covering_radius(self):
        """Estimated max distance from any rotation to the grid.

        Monte-Carlo estimate over a fixed probe set, so the value is
        deterministic for a given grid and stable across runs.
        """
        if self._covering is None:
            rng = np.random.Generator(np.random.PCG64(_COVERING_SEED))
            probes = random_quats(rng, _COVERING_SAMPLES)
            worst = _kernels.min_max_abs_dot(probes, self.quats)
            self._covering = 2.0 * math.acos(min(1.0, max(0.0, worst)))
        return self._covering


def build_grid(n, generator="super_fibonacci", seed=0):
    spec = GridSpec(generator=generator, n=int(n), seed=int(seed))
    return grid_from_spec(spec)


def grid_from_spec(spec: GridSpec) -> SO3Grid:
    if spec.generator == "super_fibonacci":
        quats = super_fibonacci_quats(spec.n)
    else:
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        quats = random_quats(rng, spec.n)
    return SO3Grid(quats=np.ascontiguousarray(quats), spec=spec)


def nearest_in_grid(grid: SO3Grid, rotation):
    """Index and distance of the grid rotation closest to `rotation`.

    Ties are broken toward the lowest index.
    """
    q = matrix_to_quat(rotation)
    idx, dot = _kernels.nearest_abs_dots(q[None, :], grid.quats)
    d = 2.0 * math.acos(min(1.0, float(dot[0])))
    return int(idx[0]), d


def nearest_indices(grid: SO3Grid, quats):
    """Vector version of nearest_in_grid over an (m, 4) quaternion batch."""
    quats = np.ascontiguousarray(quats, dtype=np.float64)
    idx, _ = _kernels.nearest_abs_dots(quats, grid.quats)
    return idx


def save_grid(grid: SO3Grid, path):
    head = GRID_MAGIC + struct.pack(
        "<IIBQ",
        GRID_VERSION,
        grid.n,
        GENERATOR_IDS[grid.spec.generator],
        grid.spec.seed,
    )
    body = np.ascontiguousarray(grid.quats, dtype="<f8").tobytes()
    write_bytes_atomic(path, head + body)


def load_grid(path) -> SO3Grid:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != GRID_MAGIC:
        raise FormatError(f"{path}: not a rotation grid file")
    if len(blob) < 4 + 17:
        raise FormatError(f"{path}: truncated grid header")
    version, n, gen_id, seed = struct.unpack_from("<IIBQ", blob, 4)
    if version != GRID_VERSION:
        raise FormatError(f"{path}: unsupported grid version {version}")
    if gen_id not in _ID_TO_GENERATOR:
        raise FormatError(f"{path}: unknown generator id {gen_id}")
    body = blob[21:]
    if len(body) != n * 4 * 8:
        raise FormatError(
            f"{path}: expected {n * 32} quaternion bytes, found {len(body)}"
        )
    quats = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(n, 4)
    norms = np.linalg.norm(quats, axis=1)
    if np.abs(norms - 1.0).max() > 1e-9:
        raise FormatError(f"{path}: stored quaternions are not unit norm")
    spec = GridSpec(generator=_ID_TO_GENERATOR[gen_id], n=n, seed=seed)
    return SO3Grid(quats=np.ascontiguousarray(quats), spec=spec)

"""Pairwise relative-rotation scorers and serialized energy tables.

A scorer assigns a real score to "the relative rotation from camera i to
camera j is R". Higher is better. Scorers may be directional: when
`directional` is False, score(i, j, R) == score(j, i, R^T) is guaranteed
and callers may skip the reverse term in sums over ordered pairs.

Scores for a whole grid are evaluated through `score_quats`, which takes
a batch of candidate relative rotations as unit quaternions. Table rows
are stored float32; every accumulation happens in float64.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._fileio import write_bytes_atomic
from .errors import ConsistencyError, CorruptTableError, FormatError
from .so3 import (
    GENERATOR_IDS,
    GridSpec,
    SO3Grid,
    grid_from_spec,
    matrix_to_quat,
    nearest_in_grid,
    nearest_indices,
    quat_conj,
    quat_normalize,
    quat_to_matrix,
)

TABLE_MAGIC = b"RPET"
TABLE_VERSION = 1
_ID_TO_GENERATOR = {v: k for k, v in GENERATOR_IDS.items()}


class PairwiseScorer:
    """Base scorer; subclasses override score_quats for speed."""

    directional = True

    def score_quats(self, i, j, quats):
        """Scores for a (m, 4) batch of candidate relative rotations."""
        quats = np.asarray(quats, dtype=np.float64)
        mats = quat_to_matrix(quats)
        return np.array([self.score(i, j, m) for m in mats], dtype=np.float64)

    def score(self, i, j, rotation):
        out = self.score_quats(i, j, matrix_to_quat(rotation)[None, :])
        return float(out[0])


class ConstantScorer(PairwiseScorer):
    """Same score everywhere; an uninformative pair."""

    directional = False

    def __init__(self, value=0.0):
        self.value = float(value)

    def score_quats(self, i, j, quats):
        if i == j:
            raise ValueError("pair indices must differ")
        return np.full(np.asarray(quats).shape[0], self.value)


class SymmetricModeScorer(PairwiseScorer):
    """Squared-distance well around one or more mode rotations.

    score(i, j, R) = -kappa * min over modes m of geodesic(R, m)^2, so a
    mode scores exactly 0 and everything else is negative. Modes are
    stored per ordered pair; when only (i, j) is present, (j, i) is
    served with the transposed modes, which makes the scorer symmetric.
    Pairs with no modes at all are uninformative and score 0 everywhere.
    """

    def __init__(self, modes, kappa, directional=None):
        if kappa <= 0.0:
            raise ValueError("kappa must be positive")
        self.kappa = float(kappa)
        self.modes = {}
        for (i, j), quats in modes.items():
            if i == j:
                raise ValueError("pair indices must differ")
            q = quat_normalize(np.asarray(quats, dtype=np.float64).reshape(-1, 4))
            self.modes[(int(i), int(j))] = np.ascontiguousarray(q)
        if directional is None:
            directional = any((j, i) in self.modes for (i, j) in self.modes)
        self.directional = bool(directional)

    def mode_quats(self, i, j):
        if (i, j) in self.modes:
            return self.modes[(i, j)]
        if (j, i) in self.modes:
            return np.ascontiguousarray(quat_conj(self.modes[(j, i)]))
        return None

    def score_quats(self, i, j, quats):
        if i == j:
            raise ValueError("pair indices must differ")
        quats = np.ascontiguousarray(quats, dtype=np.float64)
        targets = self.mode_quats(i, j)
        if targets is None:
            return np.zeros(quats.shape[0])
        return -self.kappa * _kernels.min_angle_sq_to_targets(quats, targets)


@dataclass
class EnergyTable:
    """Per-pair score rows over a shared rotation grid."""

    grid_spec: GridSpec
    rows: dict

    def __post_init__(self):
        clean = {}
        for (i, j), row in self.rows.items():
            i, j = int(i), int(j)
            if i == j:
                raise ValueError("pair indices must differ")
            if not (0 <= i < 65536 and 0 <= j < 65536):
                raise ValueError("pair indices must fit in 16 bits")
            row = np.ascontiguousarray(row, dtype=np.float32)
            if row.shape != (self.grid_spec.n,):
                raise ConsistencyError(
                    f"row ({i}, {j}) has {row.shape[0]} scores, "
                    f"grid has {self.grid_spec.n}"
                )
            clean[(i, j)] = row
        self.rows = clean

    @property
    def n_cameras(self):
        if not self.rows:
            return 0
        return 1 + max(max(i, j) for i, j in self.rows)

    def save(self, path):
        head = TABLE_MAGIC + struct.pack(
            "<IBIQI",
            TABLE_VERSION,
            GENERATOR_IDS[self.grid_spec.generator],
            self.grid_spec.n,
            self.grid_spec.seed,
            len(self.rows),
        )
        parts = [head]
        for (i, j) in sorted(self.rows):
            parts.append(struct.pack("<HH", i, j))
            parts.append(
                np.ascontiguousarray(self.rows[(i, j)], dtype="<f4").tobytes()
            )
        write_bytes_atomic(path, b"".join(parts))


def load_table(path) -> EnergyTable:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != TABLE_MAGIC:
        raise FormatError(f"{path}: not an energy table file")
    if len(blob) < 4 + 21:
        raise CorruptTableError(f"{path}: truncated table header")
    version, gen_id, n, seed, n_pairs = struct.unpack_from("<IBIQI", blob, 4)
    if version != TABLE_VERSION:
        raise FormatError(f"{path}: unsupported table version {version}")
    if gen_id not in _ID_TO_GENERATOR:
        raise FormatError(f"{path}: unknown generator id {gen_id}")
    spec = GridSpec(generator=_ID_TO_GENERATOR[gen_id], n=n, seed=seed)
    off = 25
    row_bytes = n * 4
    rows = {}
    for _ in range(n_pairs):
        if off + 4 + row_bytes > len(blob):
            raise CorruptTableError(f"{path}: truncated score row")
        i, j = struct.unpack_from("<HH", blob, off)
        off += 4
        if i == j:
            raise CorruptTableError(f"{path}: pair ({i}, {j}) is degenerate")
        if (i, j) in rows:
            raise CorruptTableError(f"{path}: duplicate pair ({i}, {j})")
        rows[(i, j)] = np.frombuffer(blob, dtype="<f4", count=n, offset=off).astype(
            np.float32
        )
        off += row_bytes
    if off != len(blob):
        raise CorruptTableError(f"{path}: {len(blob) - off} trailing bytes")
    return EnergyTable(grid_spec=spec, rows=rows)


class TableScorer(PairwiseScorer):
    """Scorer backed by an EnergyTable.

    Arbitrary rotations snap to the nearest grid rotation of the table's
    grid. A pair stored in only one order is served transposed for the
    other order (symmetric semantics); the scorer is directional exactly
    when some pair is stored in both orders.
    """

    def __init__(self, table: EnergyTable, grid: SO3Grid | None = None):
        if grid is None:
            grid = grid_from_spec(table.grid_spec)
        elif grid.spec != table.grid_spec:
            raise ConsistencyError(
                f"table grid {table.grid_spec} does not match grid {grid.spec}"
            )
        self.table = table
        self.grid = grid
        self.directional = any((j, i) in table.rows for (i, j) in table.rows)

    def _row(self, i, j):
        if (i, j) in self.table.rows:
            return self.table.rows[(i, j)], False
        if (j, i) in self.table.rows:
            return self.table.rows[(j, i)], True
        raise ConsistencyError(f"table has no scores for pair ({i}, {j})")

    def score_quats(self, i, j, quats):
        if i == j:
            raise ValueError("pair indices must differ")
        quats = np.asarray(quats, dtype=np.float64)
        row, transposed = self._row(i, j)
        if transposed:
            quats = quat_conj(quats)
        idx = nearest_indices(self.grid, quats)
        return row[idx].astype(np.float64)


def score_over_grid(scorer, i, j, grid: SO3Grid):
    """Score every grid rotation as the i->j relative rotation.

    Output is index-ordered float64. A table scorer over its own grid
    returns its stored row exactly (up to the float32->float64 widening).
    """
    if i == j:
        raise ValueError("pair indices must differ")
    return np.asarray(scorer.score_quats(i, j, grid.quats), dtype=np.float64)


def nll_of(scores, gt_rotation, grid: SO3Grid):
    """Negative log likelihood of the ground-truth rotation under a row.

    The row is treated as unnormalized log probabilities over the grid;
    gt snaps to its nearest grid rotation. Uses the max-shift logsumexp,
    so any additive shift of the row cancels exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] != grid.n:
        raise ValueError(
            f"need one score per grid rotation ({grid.n}), got shape {scores.shape}"
        )
    idx, _ = nearest_in_grid(grid, gt_rotation)
    m = float(scores.max())
    lse = m + math.log(float(np.exp(scores - m).sum()))
    return -(float(scores[idx]) - lse)


def l1_translation_loss(pred, target):
    """Sum of absolute coordinate differences."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.abs(pred - target).sum())

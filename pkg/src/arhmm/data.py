"""Data ingestion, standardization, and delimited file I/O.

Sequences travel as CSV tables, one file per sequence, whose header must
match the layout's channel names exactly.  Floats are printed with 17
significant digits, so a write/read cycle is bit-exact.  Quaternion blocks
are kept on the unit sphere and sign-continuized at ingestion time.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np

from .composite import ObservationLayout, ObservationSequence, pose_gripper_layout
from .core import DataError, _readonly


def format_float(x: float) -> str:
    """17-significant-digit decimal form; round-trips any double exactly."""
    x = float(x)
    if not np.isfinite(x):
        raise ValueError("cannot format a non-finite value")
    if x == 0.0:
        x = 0.0  # normalize -0.0 so reserialization is stable
    return format(x, ".17g")


class Standardization:
    """Per-channel affine map (x - mean) / scale.

    Quaternion channels are never rescaled (mean 0, scale 1), so stored
    rotations stay on the unit sphere.
    """

    def __init__(self, mean, scale):
        mean = np.array(mean, dtype=float)
        scale = np.array(scale, dtype=float)
        if mean.shape != scale.shape or mean.ndim != 1:
            raise ValueError("mean and scale must be equal-length vectors")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(scale))):
            raise ValueError("mean and scale must be finite")
        if np.any(scale <= 0.0):
            raise ValueError("scales must be strictly positive")
        self.mean = _readonly(mean)
        self.scale = _readonly(scale)

    @classmethod
    def identity(cls, width: int) -> "Standardization":
        return cls(np.zeros(width), np.ones(width))

    @classmethod
    def fit(cls, sequences) -> "Standardization":
        """Pooled mean and standard deviation over all rows of all sequences.

        Channels inside quaternion blocks are pinned to the identity map;
        near-constant channels fall back to unit scale.
        """
        if not sequences:
            raise ValueError("need at least one sequence")
        layout = sequences[0].layout
        rows = np.concatenate([s.values for s in sequences], axis=0)
        mean = rows.mean(axis=0)
        scale = rows.std(axis=0)
        scale[scale < 1e-12] = 1.0
        for sl in layout.quaternion_slices():
            mean[sl] = 0.0
            scale[sl] = 1.0
        return cls(mean, scale)

    def apply_rows(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=float) - self.mean) / self.scale

    def invert_rows(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(rows, dtype=float) * self.scale + self.mean

    def apply(self, seq: ObservationSequence) -> ObservationSequence:
        return ObservationSequence(self.apply_rows(seq.values), seq.layout,
                                   name=seq.name)

    def to_payload(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_payload(cls, payload: dict) -> "Standardization":
        return cls(payload["mean"], payload["scale"])

    def __repr__(self):
        return f"Standardization(width={self.mean.size})"


def write_sequence_csv(path, seq: ObservationSequence) -> None:
    """One row per time step, header = layout channel names."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(seq.layout.channel_names())
        for row in seq.values:
            writer.writerow([format_float(v) for v in row])


def write_modes_csv(path, modes) -> None:
    """Mode path CSV with columns step (1-based) and mode."""
    modes = np.asarray(modes, dtype=int)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "mode"])
        for t, m in enumerate(modes, start=1):
            writer.writerow([t, int(m)])


def read_modes_csv(path) -> np.ndarray:
    """Read the mode column of a path CSV; extra columns are ignored."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or "mode" not in header:
            raise DataError(f"{path}: expected a header with a 'mode' column")
        col = header.index("mode")
        modes = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                modes.append(int(row[col]))
            except (ValueError, IndexError) as err:
                raise DataError(f"{path}: bad mode entry at line {line_no}") from err
    if not modes:
        raise DataError(f"{path}: no mode rows")
    return np.asarray(modes, dtype=int)


def sign_continuize(quats: np.ndarray) -> np.ndarray:
    """Flip quaternion signs so consecutive rows never jump covers.

    Whenever <q_t, q_{t+1}> < 0 the later row is negated; both signs encode
    the same rotation, but the emission model lives on the embedded vectors
    and needs the continuous branch.
    """
    out = np.array(quats, dtype=float)
    for t in range(1, out.shape[0]):
        if float(out[t - 1] @ out[t]) < 0.0:
            out[t] = -out[t]
    return out


def _condition_quaternions(values: np.ndarray, layout: ObservationLayout,
                           source: str) -> np.ndarray:
    """Renormalize and sign-continuize every quaternion block in place."""
    for sl in layout.quaternion_slices():
        block = values[:, sl]
        norms = np.linalg.norm(block, axis=1)
        if np.any(norms < 1e-12):
            raise DataError(f"{source}: zero-norm quaternion row")
        dev = float(np.max(np.abs(norms - 1.0)))
        if dev > 1e-3:
            warnings.warn(f"{source}: quaternion norms deviate from 1 "
                          f"by up to {dev:.3g}; renormalizing")
        # Only touch rows that actually drifted, so clean data round-trips
        # bit for bit.
        off = np.abs(norms - 1.0) > 1e-12
        block[off] = block[off] / norms[off, None]
        values[:, sl] = sign_continuize(block)
    return values


def ingest_csv(paths, layout: ObservationLayout) -> list[ObservationSequence]:
    """Load sequence CSVs against a layout.

    The header must equal the layout's channel names; any non-finite cell is
    an error naming file, row, and column.  Quaternion blocks are
    renormalized (warning when any norm is off by more than 1e-3) and
    sign-continuized.
    """
    expected = layout.channel_names()
    out = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != expected:
                raise DataError(
                    f"{path}: header {header!r} does not match the layout "
                    f"channels {expected!r}")
            rows = []
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(expected):
                    raise DataError(f"{path}: wrong column count at line {line_no}")
                parsed = np.empty(len(expected))
                for j, cell in enumerate(row):
                    try:
                        parsed[j] = float(cell)
                    except ValueError as err:
                        raise DataError(
                            f"{path}: unparseable value at line {line_no}, "
                            f"column {expected[j]}") from err
                    if not np.isfinite(parsed[j]):
                        raise DataError(
                            f"{path}: non-finite value at line {line_no}, "
                            f"column {expected[j]}")
                rows.append(parsed)
        if len(rows) < 2:
            raise DataError(f"{path}: need a starting row plus at least one step")
        values = _condition_quaternions(np.vstack(rows), layout, str(path))
        out.append(ObservationSequence(values, layout, name=Path(path).stem))
    return out


def rotation_to_quaternion(rot: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a 3x3 rotation matrix.

    Shepperd-style branch selection: the largest of the four squared
    components is computed first, so the division is always well
    conditioned.
    """
    r = np.asarray(rot, dtype=float)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > max(r[0, 0], r[1, 1], r[2, 2]):
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s,
                      (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array([(r[2, 1] - r[1, 2]) / s,
                      0.25 * s,
                      (r[0, 1] + r[1, 0]) / s,
                      (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] >= r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array([(r[0, 2] - r[2, 0]) / s,
                      (r[0, 1] + r[1, 0]) / s,
                      0.25 * s,
                      (r[1, 2] + r[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array([(r[1, 0] - r[0, 1]) / s,
                      (r[0, 2] + r[2, 0]) / s,
                      (r[1, 2] + r[2, 1]) / s,
                      0.25 * s])
    return q / np.linalg.norm(q)


# Column layout of one manipulator in a kinematics table: tool position,
# row-major rotation matrix, linear and angular velocity, gripper angle.
_ARM_COLS = 19
_POS = slice(0, 3)
_ROT = slice(3, 12)
_GRIP = 18


def ingest_jigsaw(path, arms: int = 2) -> ObservationSequence:
    """Load a whitespace-delimited surgical-kinematics table.

    Each manipulator contributes 19 columns (position 3, rotation matrix 9,
    linear velocity 3, angular velocity 3, gripper angle 1); the patient-side
    manipulators occupy the trailing columns, so the last ``19 * arms``
    columns are used and velocities are discarded.  Rotation matrices are
    validated (||R^T R - I||_inf <= 1e-2) and converted to quaternions, which
    are then sign-continuized per arm.
    """
    raw = np.loadtxt(path, ndmin=2)
    need = _ARM_COLS * arms
    if raw.shape[1] < need:
        raise DataError(f"{path}: expected at least {need} columns per row, "
                        f"got {raw.shape[1]}")
    if raw.shape[0] < 2:
        raise DataError(f"{path}: need at least two rows")
    raw = raw[:, raw.shape[1] - need:]
    layout = pose_gripper_layout(arms)
    values = np.empty((raw.shape[0], layout.width))
    for h in range(arms):
        arm = raw[:, h * _ARM_COLS:(h + 1) * _ARM_COLS]
        quats = np.empty((raw.shape[0], 4))
        for t in range(raw.shape[0]):
            rot = arm[t, _ROT].reshape(3, 3)
            err = float(np.max(np.abs(rot.T @ rot - np.eye(3))))
            if err > 1e-2:
                raise DataError(
                    f"{path}: arm {h + 1} rotation at row {t + 1} is not "
                    f"orthonormal (deviation {err:.3g})")
            quats[t] = rotation_to_quaternion(rot)
        base = 8 * h
        values[:, base:base + 3] = arm[:, _POS]
        values[:, base + 3:base + 7] = sign_continuize(quats)
        values[:, base + 7] = arm[:, _GRIP]
    return ObservationSequence(values, layout, name=Path(path).stem)

"""Observation layouts and blockwise product emissions.

A layout names the channel blocks of a flat observation row: Euclidean
blocks of any width, unit-quaternion blocks (always 4 channels, ordered
w/x/y/z), and scalar blocks.  A composite dynamics assigns one block its own
emission model and scores a full row as the sum of per-block log-densities;
the M-step hands every block the same responsibility weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cartesian import CartesianDynamics
from .core import GaussianNoise, _readonly
from .basis import LinearBasis, PolynomialBasis, basis_from_payload
from .quaternion import QuaternionDynamics

_BLOCK_KINDS = ("cartesian", "quaternion", "scalar")


@dataclass(frozen=True)
class Block:
    """One named channel group: kind is cartesian, quaternion, or scalar."""
    name: str
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in _BLOCK_KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.kind == "quaternion" and self.dim != 4:
            raise ValueError("quaternion blocks always have 4 channels")
        if self.kind == "scalar" and self.dim != 1:
            raise ValueError("scalar blocks have exactly 1 channel")
        if self.dim < 1:
            raise ValueError("block dim must be >= 1")


def _block(name: str, kind: str, dim: int | None = None) -> Block:
    if kind == "quaternion":
        return Block(name, kind, 4)
    if kind == "scalar":
        return Block(name, kind, 1)
    if dim is None:
        raise ValueError(f"cartesian block {name!r} needs a dim")
    return Block(name, kind, int(dim))


class ObservationLayout:
    """Ordered blocks making up a flat observation row."""

    def __init__(self, blocks):
        blocks = tuple(blocks)
        if not blocks:
            raise ValueError("layout needs at least one block")
        names = [b.name for b in blocks]
        if len(set(names)) != len(names):
            raise ValueError("block names must be unique")
        self.blocks = blocks
        offsets = np.concatenate([[0], np.cumsum([b.dim for b in blocks])])
        self._offsets = _readonly(offsets.astype(int))

    @property
    def width(self) -> int:
        return int(self._offsets[-1])

    def slices(self) -> list[slice]:
        return [slice(int(a), int(b))
                for a, b in zip(self._offsets[:-1], self._offsets[1:])]

    def block_slice(self, name: str) -> slice:
        for b, sl in zip(self.blocks, self.slices()):
            if b.name == name:
                return sl
        raise KeyError(name)

    def channel_names(self) -> list[str]:
        """Flat CSV header: cartesian -> name_0.., quaternion -> name_r/i/j/k,
        scalar -> bare name."""
        names = []
        for b in self.blocks:
            if b.kind == "cartesian":
                names.extend(f"{b.name}_{i}" for i in range(b.dim))
            elif b.kind == "quaternion":
                names.extend(f"{b.name}_{s}" for s in ("r", "i", "j", "k"))
            else:
                names.append(b.name)
        return names

    def quaternion_slices(self) -> list[slice]:
        return [sl for b, sl in zip(self.blocks, self.slices())
                if b.kind == "quaternion"]

    def to_payload(self) -> dict:
        out = []
        for b in self.blocks:
            entry = {"name": b.name, "kind": b.kind}
            if b.kind == "cartesian":
                entry["dim"] = b.dim
            out.append(entry)
        return {"blocks": out}

    @classmethod
    def from_payload(cls, payload: dict) -> "ObservationLayout":
        blocks = [_block(e["name"], e["kind"], e.get("dim"))
                  for e in payload["blocks"]]
        return cls(blocks)

    def __eq__(self, other):
        return (isinstance(other, ObservationLayout)
                and other.blocks == self.blocks)

    def __repr__(self):
        inner = ", ".join(f"{b.name}:{b.kind}({b.dim})" for b in self.blocks)
        return f"ObservationLayout({inner})"


def cartesian_layout(d: int, name: str = "y") -> ObservationLayout:
    return ObservationLayout([Block(name, "cartesian", d)])


def quaternion_layout(name: str = "q") -> ObservationLayout:
    return ObservationLayout([Block(name, "quaternion", 4)])


def pose_gripper_layout(arms: int) -> ObservationLayout:
    """Position + orientation + gripper blocks per arm: x*, q*, th*."""
    if arms < 1:
        raise ValueError("need at least one arm")
    blocks = []
    for h in range(1, arms + 1):
        blocks.append(Block(f"x{h}", "cartesian", 3))
        blocks.append(Block(f"q{h}", "quaternion", 4))
        blocks.append(Block(f"th{h}", "scalar", 1))
    return ObservationLayout(blocks)


class ObservationSequence:
    """A (T+1, width) observation table tied to its layout.

    Row 0 is the conditioning observation; rows 1..T are the emitted steps.
    """

    def __init__(self, values, layout: ObservationLayout, name: str = ""):
        values = np.array(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != layout.width:
            raise ValueError(
                f"values must be (T+1, {layout.width}), got {values.shape}")
        if values.shape[0] < 2:
            raise ValueError("sequence needs a conditioning row plus >= 1 step")
        if not np.all(np.isfinite(values)):
            raise ValueError("sequence values must be finite")
        self.values = _readonly(values)
        self.layout = layout
        self.name = name

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    def block_values(self, name: str) -> np.ndarray:
        return self.values[:, self.layout.block_slice(name)]

    def __repr__(self):
        return (f"ObservationSequence(name={self.name!r}, "
                f"steps={self.n_steps}, width={self.layout.width})")


class CompositeDynamics:
    """Independent per-block dynamics multiplied into one emission model.

    ``parts`` pairs one EmissionDynamics with each layout block, in order;
    the log-density of a full row transition is the sum over blocks.
    """

    def __init__(self, layout: ObservationLayout, parts):
        parts = tuple(parts)
        if len(parts) != len(layout.blocks):
            raise ValueError("need exactly one dynamics per layout block")
        for block, part in zip(layout.blocks, parts):
            if part.width != block.dim:
                raise ValueError(
                    f"dynamics width {part.width} does not match block "
                    f"{block.name!r} of dim {block.dim}")
            if block.kind == "quaternion" and not isinstance(part, QuaternionDynamics):
                raise ValueError(f"block {block.name!r} needs quaternion dynamics")
        self.layout = layout
        self.parts = parts
        self.width = layout.width

    def predict(self, y_prev) -> np.ndarray:
        y_prev = np.asarray(y_prev, dtype=float)
        out = np.empty(self.width)
        for sl, part in zip(self.layout.slices(), self.parts):
            out[sl] = part.predict(y_prev[sl])
        return out

    def log_emission_seq(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.width:
            raise ValueError(f"expected (T+1, {self.width}) values")
        total = np.zeros(values.shape[0] - 1)
        for sl, part in zip(self.layout.slices(), self.parts):
            total += part.log_emission_seq(values[:, sl])
        return total

    def log_emission(self, y_prev, y_next) -> float:
        pair = np.vstack([np.asarray(y_prev, float), np.asarray(y_next, float)])
        return float(self.log_emission_seq(pair)[0])

    def sample_next(self, y_prev, rng, with_noise: bool = True) -> np.ndarray:
        y_prev = np.asarray(y_prev, dtype=float)
        out = np.empty(self.width)
        for sl, part in zip(self.layout.slices(), self.parts):
            out[sl] = part.sample_next(y_prev[sl], rng, with_noise)
        return out

    def m_step(self, values_list, weights_list, *, diagonal: bool = False):
        """Re-estimate every block under the shared step weights."""
        new_parts = []
        for sl, part in zip(self.layout.slices(), self.parts):
            block_values = [np.asarray(v, float)[:, sl] for v in values_list]
            new_parts.append(part.m_step(block_values, weights_list,
                                         diagonal=diagonal))
        return CompositeDynamics(self.layout, new_parts)

    def to_payload(self) -> dict:
        return {"kind": "composite",
                "parts": [p.to_payload() for p in self.parts]}

    def __repr__(self):
        return f"CompositeDynamics(width={self.width}, blocks={len(self.parts)})"


def default_dynamics(layout: ObservationLayout, basis_by_block: dict | None = None,
                     noise_scale: float = 1.0):
    """Neutral starting dynamics for a layout.

    Cartesian blocks get an affine basis unless ``basis_by_block`` overrides
    them, scalar blocks default to a quadratic polynomial, quaternion blocks
    get a zero rotation.  Weights start at zero and covariances at
    ``noise_scale`` times the identity.  A single-block layout returns the
    bare block dynamics, otherwise a CompositeDynamics.
    """
    basis_by_block = dict(basis_by_block or {})
    parts = []
    for block in layout.blocks:
        if block.kind == "quaternion":
            if block.name in basis_by_block:
                raise ValueError(f"quaternion block {block.name!r} takes no basis")
            parts.append(QuaternionDynamics(np.zeros(3),
                                            noise_scale * np.eye(4)))
            continue
        basis = basis_by_block.pop(block.name, None)
        if basis is None:
            basis = (PolynomialBasis(1, 2) if block.kind == "scalar"
                     else LinearBasis(block.dim))
        if getattr(basis, "d", None) != block.dim:
            raise ValueError(
                f"basis for block {block.name!r} expects dimension "
                f"{getattr(basis, 'd', None)}, block has {block.dim}")
        weights = np.zeros((block.dim, basis.output_len))
        parts.append(CartesianDynamics(basis, weights,
                                       noise_scale * np.eye(block.dim)))
    if basis_by_block:
        unknown = ", ".join(sorted(basis_by_block))
        raise ValueError(f"basis given for unknown blocks: {unknown}")
    if len(parts) == 1:
        return parts[0]
    return CompositeDynamics(layout, parts)


def emission_from_payload(payload: dict, layout: ObservationLayout | None = None):
    """Rebuild any emission dynamics from its JSON payload."""
    kind = payload.get("kind")
    if kind == "cartesian":
        return CartesianDynamics(basis_from_payload(payload["basis"]),
                                 np.asarray(payload["omega"], dtype=float),
                                 GaussianNoise(np.asarray(payload["sigma"], dtype=float)))
    if kind == "quaternion":
        return QuaternionDynamics(np.asarray(payload["rotvec"], dtype=float),
                                  GaussianNoise(np.asarray(payload["sigma"], dtype=float)))
    if kind == "composite":
        if layout is None:
            raise ValueError("composite payloads need the layout")
        parts = [emission_from_payload(p) for p in payload["parts"]]
        return CompositeDynamics(layout, parts)
    raise ValueError(f"unknown emission kind {kind!r}")

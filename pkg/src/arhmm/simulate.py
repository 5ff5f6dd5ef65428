"""Synthetic switching-dynamics generators.

Provides a generic sampler for any ModelParams plus the three benchmark
families used by the experiments and the test suite: a planar two-mode
cubic system, sin/tanh vector fields in one to three dimensions (the
dimension sweep), and a two-mode incremental-rotation system on unit
quaternions.  All randomness flows from a single seed, so generated data is
reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import PolynomialBasis
from .cartesian import CartesianDynamics
from .composite import (ObservationSequence, cartesian_layout,
                        quaternion_layout)
from .core import ModelParams, NumericalError
from .quaternion import QuaternionDynamics


@dataclass(frozen=True)
class SimConfig:
    """Dataset-level generation settings.

    ``noise_std`` is the per-channel standard deviation of the injected
    step noise (the generating covariances are its square times identity).
    """
    seed: int = 0
    n_sequences: int = 50
    length: int = 100
    dt: float = 0.05
    noise_std: float = 5e-3

    def __post_init__(self):
        if self.n_sequences < 1 or self.length < 1:
            raise ValueError("n_sequences and length must be >= 1")
        if not (self.dt > 0.0) or not (self.noise_std > 0.0):
            raise ValueError("dt and noise_std must be positive")


def _rollout(model: ModelParams, cfg: SimConfig, y0, rng, with_noise):
    values = np.empty((cfg.length + 1, model.layout.width))
    values[0] = y0
    modes = np.empty(cfg.length, dtype=int)
    z = int(rng.choice(model.n_modes, p=model.init))
    for t in range(cfg.length):
        if t > 0:
            z = int(rng.choice(model.n_modes, p=model.trans[z]))
        modes[t] = z
        values[t + 1] = model.emissions[z].sample_next(values[t], rng, with_noise)
    return values, modes


def sample_model(model: ModelParams, cfg: SimConfig, y0, *,
                 with_noise: bool = True, rng=None):
    """Draw one sequence of ``cfg.length`` steps from a model.

    Returns ``(ObservationSequence, modes)`` where ``modes[t]`` generated
    row t+1.  Pass ``with_noise=False`` for the deterministic skeleton.
    An explicit ``rng`` overrides the config seed.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (model.layout.width,):
        raise ValueError(f"y0 must have shape ({model.layout.width},)")
    values, modes = _rollout(model, cfg, y0, rng, with_noise)
    return ObservationSequence(values, model.layout), modes


def sample_dataset(model: ModelParams, cfg: SimConfig, y0_sampler, *,
                   with_noise: bool = True):
    """Draw ``cfg.n_sequences`` independent sequences.

    ``y0_sampler(rng)`` supplies each starting observation.  Per-sequence
    generators are spawned from the config seed, so any prefix of the
    dataset is stable under changes to ``n_sequences``.
    """
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_sequences)
    seqs, paths = [], []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        seq, modes = sample_model(model, cfg, y0_sampler(rng),
                                  with_noise=with_noise, rng=rng)
        seq.name = f"seq_{i:03d}"
        seqs.append(seq)
        paths.append(modes)
    return seqs, paths


_SWITCH_INIT = np.array([0.5, 0.5])
_SWITCH_TRANS = np.array([[0.95, 0.05], [0.05, 0.95]])


def validation_field(y) -> np.ndarray:
    """Planar cubic field f(y) = ((r^2 - 1) I + J) y with J a quarter turn.

    Componentwise: f1 = y1^3 + y2^2 y1 - y1 - y2, f2 = y2^3 + y1^2 y2
    + y1 - y2.  Mode 1 integrates +f, mode 2 integrates -f.
    """
    y = np.asarray(y, dtype=float)
    y1, y2 = y[0], y[1]
    return np.array([y1 ** 3 + y2 ** 2 * y1 - y1 - y2,
                     y2 ** 3 + y1 ** 2 * y2 + y1 - y2])


def validation_model(dt: float = 0.05, noise_std: float = 5e-3) -> ModelParams:
    """Exact generating model of the planar validation system.

    The Euler step y + dt*f(y) of the cubic field lies in the degree-3
    polynomial feature span, so both modes are exact basis-function
    dynamics; no approximation is involved.
    """
    basis = PolynomialBasis(2, 3)
    # feature order: 1, y1, y2, y1^2, y1 y2, y2^2, y1^3, y1^2 y2, y1 y2^2, y2^3
    omega = np.zeros((2, basis.output_len))
    omega[0, 1] = -1.0   # f1: -y1
    omega[0, 2] = -1.0   # f1: -y2
    omega[0, 6] = 1.0    # f1: y1^3
    omega[0, 8] = 1.0    # f1: y1 y2^2
    omega[1, 1] = 1.0    # f2: +y1
    omega[1, 2] = -1.0   # f2: -y2
    omega[1, 7] = 1.0    # f2: y1^2 y2
    omega[1, 9] = 1.0    # f2: y2^3
    identity = np.zeros((2, basis.output_len))
    identity[0, 1] = 1.0
    identity[1, 2] = 1.0
    sigma = noise_std ** 2 * np.eye(2)
    layout = cartesian_layout(2)
    emissions = (CartesianDynamics(basis, identity + dt * omega, sigma),
                 CartesianDynamics(basis, identity - dt * omega, sigma))
    return ModelParams(init=_SWITCH_INIT, trans=_SWITCH_TRANS,
                       emissions=emissions, layout=layout)


# The cubic field expands radially outside the unit circle under mode 1,
# so a rare long mode-1 residence out there escapes and eventually
# overflows.  Bounded trajectories live inside r ~ 1.45 (corner starts
# included); anything beyond 2 is an escape transient, not system behavior.
_ESCAPE_RADIUS = 2.0
_MAX_REDRAWS = 100


def validation_system(cfg: SimConfig):
    """Dataset from the planar validation system; starts uniform in [-1, 1]^2.

    Sequences that escape the dynamically interesting region (a rare long
    stay in the expanding mode outside the unit circle) are redrawn from a
    fresh child seed, keeping datasets finite and fully reproducible.
    """
    model = validation_model(cfg.dt, cfg.noise_std)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_sequences)
    seqs, paths = [], []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        for _ in range(_MAX_REDRAWS):
            y0 = rng.uniform(-1.0, 1.0, size=2)
            with np.errstate(over="ignore", invalid="ignore"):
                values, modes = _rollout(model, cfg, y0, rng, True)
            if np.isfinite(values).all() and np.abs(values).max() <= _ESCAPE_RADIUS:
                break
            rng = np.random.default_rng(child.spawn(1)[0])
        else:
            raise NumericalError("validation system failed to produce a "
                                 f"bounded sequence after {_MAX_REDRAWS} draws")
        seq = ObservationSequence(values, model.layout, name=f"seq_{i:03d}")
        seqs.append(seq)
        paths.append(modes)
    return seqs, paths


def sweep_fields(dim: int):
    """The two vector fields of the d-dimensional sweep system.

    Mode 1 is a sin/tanh mixture whose character shifts with dimension.
    For d = 1,

        f(y) = 8 (tanh(0.8 y)^2 - 0.77) + 0.05 sin(2.2 y),

    an even saturating well (plus a faint sine ripple) whose mean level is
    removed, so its best affine fit over the visited range is nearly zero
    while a single squared term captures most of it.  For d = 2 and 3 each
    component saturates,

        f(y)_i = 1.5 * (-tanh(b_i y_i) + e sin(a_i y_{(i+1) mod d})),
        b = (0.9, 0.7, 0.8)[:d],  a = (1.2, 1.0, 1.1)[:d],
        e = 0.35 (d = 2), 0.15 (d = 3),

    which an affine map tracks closely over the visited range.  Mode 2 is
    the negated field pushed through a rotation: g = -R f with R a plane
    rotation by pi/6 in the first two coordinates (identity for d = 1).
    All fields are bounded and non-polynomial.
    """
    if dim not in (1, 2, 3):
        raise ValueError("the sweep systems cover d in {1, 2, 3}")
    if dim == 1:
        def f(y):
            y = np.asarray(y, dtype=float)
            return (8.0 * (np.tanh(0.8 * y) ** 2 - 0.77)
                    + 0.05 * np.sin(2.2 * y))
    else:
        b = np.array([0.9, 0.7, 0.8])[:dim]
        a = np.array([1.2, 1.0, 1.1])[:dim]
        e = 0.35 if dim == 2 else 0.15

        def f(y):
            y = np.asarray(y, dtype=float)
            return 1.5 * (-np.tanh(b * y) + e * np.sin(a * np.roll(y, -1)))

    rot = np.eye(dim)
    if dim >= 2:
        c, s = np.cos(np.pi / 6), np.sin(np.pi / 6)
        rot[0, 0], rot[0, 1], rot[1, 0], rot[1, 1] = c, -s, s, c

    def g(y):
        return -(rot @ f(y))

    return f, g


def _euler_switching(fields, dim: int, cfg: SimConfig, y0_sampler):
    """Euler-integrate a pair of fields under the shared mode chain."""
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_sequences)
    layout = cartesian_layout(dim)
    seqs, paths = [], []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        values = np.empty((cfg.length + 1, dim))
        values[0] = y0_sampler(rng)
        modes = np.empty(cfg.length, dtype=int)
        z = int(rng.choice(2, p=_SWITCH_INIT))
        for t in range(cfg.length):
            if t > 0:
                z = int(rng.choice(2, p=_SWITCH_TRANS[z]))
            modes[t] = z
            drift = fields[z](values[t])
            noise = cfg.noise_std * rng.standard_normal(dim)
            values[t + 1] = values[t] + cfg.dt * drift + noise
        seq = ObservationSequence(values, layout)
        seq.name = f"seq_{i:03d}"
        seqs.append(seq)
        paths.append(modes)
    return seqs, paths


def sweep_system(dim: int, cfg: SimConfig):
    """Dataset from the d-dimensional sweep fields; starts in [-1.5, 1.5]^d."""
    fields = sweep_fields(dim)
    return _euler_switching(fields, dim, cfg,
                            lambda rng: rng.uniform(-1.5, 1.5, size=dim))


_QUAT_ROTVECS = (np.array([0.05, -0.02, 0.01]), np.array([-0.03, 0.04, 0.02]))


def quaternion_model(noise_std: float = 5e-3) -> ModelParams:
    """Two-mode incremental-rotation model on unit quaternions."""
    sigma = noise_std ** 2 * np.eye(4)
    emissions = (QuaternionDynamics(_QUAT_ROTVECS[0], sigma),
                 QuaternionDynamics(_QUAT_ROTVECS[1], sigma))
    return ModelParams(init=_SWITCH_INIT, trans=_SWITCH_TRANS,
                       emissions=emissions, layout=quaternion_layout())


def quaternion_system(cfg: SimConfig):
    """Dataset from the quaternion model, starting at the identity rotation."""
    model = quaternion_model(cfg.noise_std)
    identity = np.array([1.0, 0.0, 0.0, 0.0])
    return sample_dataset(model, cfg, lambda rng: identity)

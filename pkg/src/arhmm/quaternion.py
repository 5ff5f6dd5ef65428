"""Autoregressive dynamics on unit quaternions.

Quaternions are plain arrays of shape (4,) ordered (w, x, y, z), i.e. the
real part first.  One mode's model applies a fixed incremental rotation,
q_next = Exp(a i + b j + c k) * q_prev, and measures the deviation as a
4-d Gaussian on the embedded difference vector.  The rotation parameters are
re-estimated by gradient descent with a backtracking line search; the
covariance update is closed form and runs first, using the incoming rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (GaussianNoise, InsufficientDataError, NumericalError,
                   _readonly, check_step_weights, floor_covariance)

# Below this angle the sin(t)/t factors switch to their Taylor series.
_SMALL_ANGLE = 1e-8

# Predictions and samples are renormalized once the norm drifts past this.
_UNIT_TOL = 1e-12


def quat_exp(rotvec) -> np.ndarray:
    """Exponential of the pure quaternion a i + b j + c k.

    Returns the unit quaternion (cos t, sin(t)/t * (a, b, c)) with
    t = ||(a, b, c)||; the sin(t)/t factor uses 1 - t^2/6 near zero.
    """
    v = np.asarray(rotvec, dtype=float)
    if v.shape != (3,):
        raise ValueError("rotation vector must have shape (3,)")
    t = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if t < _SMALL_ANGLE:
        sinc = 1.0 - t * t / 6.0
    else:
        sinc = math.sin(t) / t
    return np.array([math.cos(t), sinc * v[0], sinc * v[1], sinc * v[2]])


def quat_exp_jacobian(rotvec) -> np.ndarray:
    """(4, 3) Jacobian of quat_exp with respect to (a, b, c)."""
    v = np.asarray(rotvec, dtype=float)
    t2 = float(v @ v)
    t = math.sqrt(t2)
    if t < _SMALL_ANGLE:
        sinc = 1.0 - t2 / 6.0
        # (cos t - sinc t) / t^2, Taylor-expanded about t = 0
        curv = -1.0 / 3.0 + t2 / 30.0
    else:
        sinc = math.sin(t) / t
        curv = (math.cos(t) - sinc) / t2
    jac = np.empty((4, 3))
    jac[0, :] = -sinc * v
    jac[1:, :] = sinc * np.eye(3) + curv * np.outer(v, v)
    return jac


def quat_mul(p, q) -> np.ndarray:
    """Hamilton product p * q."""
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ])


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def left_matrix(p) -> np.ndarray:
    """Matrix L with L @ vec(q) = vec(p * q)."""
    pw, px, py, pz = p
    return np.array([
        [pw, -px, -py, -pz],
        [px, pw, -pz, py],
        [py, pz, pw, -px],
        [pz, -py, px, pw],
    ])


def right_matrix_rows(q_rows: np.ndarray) -> np.ndarray:
    """Stack of matrices R_t with R_t @ vec(p) = vec(p * q_t)."""
    q = np.asarray(q_rows, dtype=float)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    out = np.empty((q.shape[0], 4, 4))
    out[:, 0, 0], out[:, 0, 1], out[:, 0, 2], out[:, 0, 3] = w, -x, -y, -z
    out[:, 1, 0], out[:, 1, 1], out[:, 1, 2], out[:, 1, 3] = x, w, z, -y
    out[:, 2, 0], out[:, 2, 1], out[:, 2, 2], out[:, 2, 3] = y, -z, w, x
    out[:, 3, 0], out[:, 3, 1], out[:, 3, 2], out[:, 3, 3] = z, y, -x, w
    return out


def renormalize(q) -> np.ndarray:
    """Return q scaled to unit norm; raises on (near-)zero input."""
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if not np.isfinite(n) or n < 1e-12:
        raise NumericalError("cannot renormalize a zero quaternion")
    if abs(n - 1.0) <= _UNIT_TOL:
        return q
    return q / n


@dataclass(frozen=True)
class OptimizerConfig:
    """Constants of the rotation-parameter descent."""
    initial_step: float = 0.1
    grad_tol: float = 1e-8
    max_iters: int = 500
    min_step: float = 1e-18


def rotation_objective(rotvec, noise: GaussianNoise, values: np.ndarray,
                       weights: np.ndarray) -> float:
    """Weighted squared Mahalanobis misfit of a fixed incremental rotation.

    sum_t w_t * ||q_{t+1} - Exp(rotvec) * q_t||^2 under noise^{-1}; the same
    quantity the m_step minimizes over the rotation vector.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    mats = right_matrix_rows(values[:-1])
    resid = values[1:] - mats @ quat_exp(rotvec)
    solved = noise.solve(resid)
    return float(np.sum(weights * np.sum(resid * solved, axis=1)))


class QuaternionDynamics:
    """Fixed incremental rotation with embedded Gaussian deviation.

    Parameters
    ----------
    rotvec : (3,) array_like
        Rotation parameters (a, b, c) of the step map.
    noise : GaussianNoise or (4, 4) array_like
        Covariance of the embedded difference q_next - Exp(rotvec) * q_prev.
    """

    width = 4

    def __init__(self, rotvec, noise):
        rotvec = np.array(rotvec, dtype=float)
        if rotvec.shape != (3,):
            raise ValueError("rotvec must have shape (3,)")
        if not np.all(np.isfinite(rotvec)):
            raise ValueError("rotvec must be finite")
        if not isinstance(noise, GaussianNoise):
            noise = GaussianNoise(noise)
        if noise.dim != 4:
            raise ValueError("noise must be 4-dimensional")
        self.rotvec = _readonly(rotvec)
        self.noise = noise

    def predict(self, q_prev) -> np.ndarray:
        return renormalize(quat_mul(quat_exp(self.rotvec), np.asarray(q_prev, float)))

    def log_emission_seq(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 4:
            raise ValueError("expected (T+1, 4) quaternion rows")
        means = values[:-1] @ left_matrix(quat_exp(self.rotvec)).T
        return self.noise.log_density_rows(values[1:], means)

    def log_emission(self, q_prev, q_next) -> float:
        pair = np.vstack([np.asarray(q_prev, float), np.asarray(q_next, float)])
        return float(self.log_emission_seq(pair)[0])

    def sample_next(self, q_prev, rng, with_noise: bool = True) -> np.ndarray:
        mean = quat_mul(quat_exp(self.rotvec), np.asarray(q_prev, float))
        if with_noise:
            mean = mean + self.noise.sample_rows(1, rng)[0]
        return renormalize(mean)

    def m_step(self, values_list, weights_list, *, diagonal: bool = False,
               optimizer: OptimizerConfig = OptimizerConfig()):
        """Weighted re-estimation of covariance and rotation parameters.

        The covariance update is closed form and uses residuals under the
        incoming rotation; the rotation vector then minimizes the weighted
        Mahalanobis misfit under the new covariance by gradient descent with
        backtracking, warm-started from the incoming value.  The returned
        objective never exceeds the incoming one.
        """
        mats_parts, next_parts, w_parts = [], [], []
        for values, w in zip(values_list, weights_list):
            values = np.asarray(values, dtype=float)
            w = np.asarray(w, dtype=float)
            check_step_weights(values, w, 4)
            mats_parts.append(right_matrix_rows(values[:-1]))
            next_parts.append(values[1:])
            w_parts.append(w)
        if not mats_parts:
            raise ValueError("m_step needs at least one sequence")
        mats = np.concatenate(mats_parts, axis=0)
        v_next = np.concatenate(next_parts, axis=0)
        w = np.concatenate(w_parts, axis=0)
        total = float(w.sum())
        if not np.any(w > 0.0) or total <= 0.0:
            raise InsufficientDataError("mode has no responsibility mass")

        # Covariance first, under the incoming rotation.
        resid = v_next - mats @ quat_exp(self.rotvec)
        sigma = ((w[:, None] * resid).T @ resid) / total
        if diagonal:
            sigma = np.diag(np.diag(sigma))
        noise = GaussianNoise(floor_covariance(sigma))

        theta = _descend_rotation(self.rotvec, noise, mats, v_next, w, optimizer)
        return QuaternionDynamics(theta, noise)

    def to_payload(self) -> dict:
        return {"kind": "quaternion", "rotvec": self.rotvec.tolist(),
                "sigma": self.noise.covariance.tolist()}

    def __repr__(self):
        return f"QuaternionDynamics(rotvec={np.array2string(self.rotvec)})"


def _objective_grad(theta, noise, mats, v_next, w):
    eps = quat_exp(theta)
    resid = v_next - mats @ eps
    solved = noise.solve(resid)
    obj = float(np.sum(w * np.sum(resid * solved, axis=1)))
    pulled = np.einsum("tij,ti->j", mats, w[:, None] * solved)
    grad = -2.0 * quat_exp_jacobian(theta).T @ pulled
    return obj, grad


def _descend_rotation(theta0, noise, mats, v_next, w, opt: OptimizerConfig):
    """Plain gradient descent with a halving line search."""
    theta = np.array(theta0, dtype=float)
    obj, grad = _objective_grad(theta, noise, mats, v_next, w)
    if not np.isfinite(obj):
        raise NumericalError("non-finite rotation objective at the starting point")
    for _ in range(opt.max_iters):
        if float(np.max(np.abs(grad))) < opt.grad_tol:
            break
        step = opt.initial_step
        while True:
            cand = theta - step * grad
            cand_obj, cand_grad = _objective_grad(cand, noise, mats, v_next, w)
            if np.isfinite(cand_obj) and cand_obj < obj:
                theta, obj, grad = cand, cand_obj, cand_grad
                break
            step *= 0.5
            if step < opt.min_step:
                # No decrease at the smallest step: accept the best seen.
                return theta
    return theta

"""Basis-function autoregressive dynamics in Euclidean space.

One mode's observation model is y_next ~ N(Omega @ phi(y_prev), Sigma) with
phi drawn from one of the basis families.  The weighted M-step is closed
form: Sigma is re-estimated first from residuals under the incoming Omega,
then Omega solves the responsibility-weighted normal equations.
"""

from __future__ import annotations

import numpy as np

from .core import (GaussianNoise, InsufficientDataError, _readonly,
                   check_step_weights, floor_covariance)


class CartesianDynamics:
    """Gaussian autoregression through a feature map.

    Parameters
    ----------
    basis : LinearBasis | GrbfBasis | PolynomialBasis
        Feature map applied to the previous observation.
    weights : (d, basis.output_len) array_like
        Output weight matrix Omega; column 0 multiplies the constant feature,
        so with the affine basis this is [b | A].
    noise : GaussianNoise or (d, d) array_like
        Step noise covariance.
    """

    def __init__(self, basis, weights, noise):
        weights = np.array(weights, dtype=float)
        if not isinstance(noise, GaussianNoise):
            noise = GaussianNoise(noise)
        if weights.ndim != 2 or weights.shape[1] != basis.output_len:
            raise ValueError(
                f"weights must be (d, {basis.output_len}), got {weights.shape}")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        if noise.dim != weights.shape[0]:
            raise ValueError("noise dimension does not match the output dimension")
        self.basis = basis
        self.weights = _readonly(weights)
        self.noise = noise
        self.width = weights.shape[0]

    def predict(self, y_prev) -> np.ndarray:
        y_prev = np.asarray(y_prev, dtype=float)
        phi = self.basis.evaluate_rows(y_prev[None, :])[0]
        return self.weights @ phi

    def predict_rows(self, rows: np.ndarray) -> np.ndarray:
        return self.basis.evaluate_rows(rows) @ self.weights.T

    def log_emission_seq(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.width:
            raise ValueError(f"expected (T+1, {self.width}) values")
        means = self.predict_rows(values[:-1])
        return self.noise.log_density_rows(values[1:], means)

    def log_emission(self, y_prev, y_next) -> float:
        pair = np.vstack([np.asarray(y_prev, float), np.asarray(y_next, float)])
        return float(self.log_emission_seq(pair)[0])

    def sample_next(self, y_prev, rng, with_noise: bool = True) -> np.ndarray:
        mean = self.predict(y_prev)
        if not with_noise:
            return mean
        return mean + self.noise.sample_rows(1, rng)[0]

    def m_step(self, values_list, weights_list, *, diagonal: bool = False):
        """Responsibility-weighted re-estimation.

        ``values_list`` holds (T_i+1, d) sequences and ``weights_list`` the
        matching (T_i,) step weights in [0, 1].  The covariance update uses
        residuals under the *incoming* weight matrix and therefore runs
        before the weight update.  Returns a new CartesianDynamics.

        Raises
        ------
        InsufficientDataError
            If no step carries positive weight, or the weighted Gram matrix
            stays singular after one ridge retry.
        """
        phi_parts, next_parts, w_parts = [], [], []
        for values, w in zip(values_list, weights_list):
            values = np.asarray(values, dtype=float)
            w = np.asarray(w, dtype=float)
            check_step_weights(values, w, self.width)
            phi_parts.append(self.basis.evaluate_rows(values[:-1]))
            next_parts.append(values[1:])
            w_parts.append(w)
        if not phi_parts:
            raise ValueError("m_step needs at least one sequence")
        phi = np.concatenate(phi_parts, axis=0)
        y_next = np.concatenate(next_parts, axis=0)
        w = np.concatenate(w_parts, axis=0)
        total = float(w.sum())
        if not np.any(w > 0.0) or total <= 0.0:
            raise InsufficientDataError("mode has no responsibility mass")

        # Covariance first, from residuals under the incoming weights.
        resid = y_next - phi @ self.weights.T
        wr = w[:, None] * resid
        sigma = (wr.T @ resid) / total
        if diagonal:
            sigma = np.diag(np.diag(sigma))
        noise = GaussianNoise(floor_covariance(sigma))

        wp = w[:, None] * phi
        gram = wp.T @ phi
        gram = 0.5 * (gram + gram.T)
        cross = (w[:, None] * y_next).T @ phi
        omega = _solve_normal_equations(gram, cross)
        return CartesianDynamics(self.basis, omega, noise)

    def to_payload(self) -> dict:
        return {"kind": "cartesian", "basis": self.basis.to_payload(),
                "omega": self.weights.tolist(),
                "sigma": self.noise.covariance.tolist()}

    def __repr__(self):
        return (f"CartesianDynamics(d={self.width}, "
                f"basis={self.basis!r})")


def _solve_normal_equations(gram: np.ndarray, cross: np.ndarray) -> np.ndarray:
    """Solve Omega @ gram = cross for Omega via Cholesky, with a ridge retry."""
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        ridge = 1e-9 * float(np.trace(gram)) / gram.shape[0]
        if ridge <= 0.0 or not np.isfinite(ridge):
            raise InsufficientDataError(
                "singular weighted Gram matrix: insufficient effective data")
        try:
            chol = np.linalg.cholesky(gram + ridge * np.eye(gram.shape[0]))
        except np.linalg.LinAlgError as err:
            raise InsufficientDataError(
                "singular weighted Gram matrix: insufficient effective data"
            ) from err
    half = np.linalg.solve(chol, cross.T)
    return np.linalg.solve(chol.T, half).T

"""Shared probabilistic machinery.

Probability-vector and stochastic-matrix validation, Gaussian densities
evaluated through cached Cholesky factors, log-domain normalization, the
emission-dynamics interface, and the full model parameter container.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

# One simplex tolerance for the whole package: distributions must sum to one
# within this, and entries may undershoot zero by at most this much.
PROB_ATOL = 1e-12

# Covariance matrices whose smallest eigenvalue falls below this are floored
# by adding COV_EIG_FLOOR * (trace/d) * I before factorization is retried.
COV_EIG_FLOOR = 1e-9

LOG_2PI = float(np.log(2.0 * np.pi))


class NumericalError(RuntimeError):
    """An operation failed numerically (underflow, bad conditioning)."""


class InsufficientDataError(NumericalError):
    """A weighted estimation problem has too little effective data."""


class DataError(ValueError):
    """An input file or table violates the expected format."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def check_distribution(p, name: str = "distribution") -> np.ndarray:
    """Validate a probability vector; returns it as a read-only float array."""
    p = np.array(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d array")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(p < -PROB_ATOL) or np.any(p > 1.0 + PROB_ATOL):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    if abs(p.sum() - 1.0) > PROB_ATOL:
        raise ValueError(f"{name} must sum to 1 (got {p.sum()!r})")
    return _readonly(np.clip(p, 0.0, 1.0))


def check_stochastic(mat, name: str = "transition matrix") -> np.ndarray:
    """Validate a row-stochastic square matrix; returns a read-only copy."""
    mat = np.array(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    for i, row in enumerate(mat):
        check_distribution(row, name=f"{name} row {i}")
    return _readonly(np.clip(mat, 0.0, 1.0))


def floor_covariance(cov: np.ndarray) -> np.ndarray:
    """Symmetrize ``cov`` and lift its spectrum if it is nearly singular.

    If the smallest eigenvalue is below ``COV_EIG_FLOOR`` the matrix gets
    ``COV_EIG_FLOOR * (trace/d) * I`` added (unit scale when the trace is
    zero, so an all-zero update still yields a usable covariance).
    """
    cov = np.asarray(cov, dtype=float)
    cov = 0.5 * (cov + cov.T)
    d = cov.shape[0]
    try:
        eigmin = float(np.linalg.eigvalsh(cov).min())
    except np.linalg.LinAlgError:
        eigmin = -np.inf
    if not np.isfinite(eigmin) or eigmin < COV_EIG_FLOOR:
        scale = float(np.trace(cov)) / d
        if not np.isfinite(scale) or scale <= 0.0:
            scale = 1.0
        cov = cov + (COV_EIG_FLOOR * scale) * np.eye(d)
    return cov


class GaussianNoise:
    """Zero-mean Gaussian with full covariance and a cached Cholesky factor.

    Parameters
    ----------
    covariance : (d, d) array_like
        Symmetric (within 1e-12) positive-definite matrix.  Nearly singular
        input is floored via :func:`floor_covariance`; if factorization still
        fails a :class:`NumericalError` is raised.
    """

    def __init__(self, covariance):
        cov = np.array(covariance, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be square")
        if not np.all(np.isfinite(cov)):
            raise NumericalError("covariance has non-finite entries")
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise ValueError("covariance must be symmetric within 1e-12")
        cov = floor_covariance(cov)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as err:
            raise NumericalError("ill-conditioned covariance") from err
        self._cov = _readonly(cov)
        self._chol = _readonly(chol)
        self._log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))

    @property
    def dim(self) -> int:
        return self._cov.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return self._cov

    @property
    def cholesky(self) -> np.ndarray:
        """Lower-triangular factor L with L L^T = covariance."""
        return self._chol

    @property
    def log_det(self) -> float:
        return self._log_det

    def solve(self, rows: np.ndarray) -> np.ndarray:
        """Return ``covariance^{-1} @ rows.T`` transposed, via the factor."""
        half = solve_triangular(self._chol, rows.T, lower=True)
        return solve_triangular(self._chol.T, half, lower=False).T

    def log_density_rows(self, x: np.ndarray, means: np.ndarray) -> np.ndarray:
        """Log-density of each row of ``x`` under N(means[i], covariance)."""
        resid = np.atleast_2d(x) - np.atleast_2d(means)
        half = solve_triangular(self._chol, resid.T, lower=True)
        quad = np.sum(half * half, axis=0)
        return -0.5 * (self.dim * LOG_2PI + self._log_det + quad)

    def sample_rows(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.dim)) @ self._chol.T

    def __repr__(self):
        return f"GaussianNoise(dim={self.dim})"


def log_gaussian_density(x, mean, cov) -> float:
    """Log N(x | mean, cov) through a stable Cholesky factorization.

    ``cov`` may be a :class:`GaussianNoise` (reusing its cached factor) or a
    raw SPD matrix.
    """
    if not isinstance(cov, GaussianNoise):
        cov = GaussianNoise(cov)
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if x.shape != (cov.dim,) or mean.shape != (cov.dim,):
        raise ValueError("x and mean must be vectors matching the covariance dim")
    return float(cov.log_density_rows(x[None, :], mean[None, :])[0])


def normalize_log_weights(log_w):
    """Exponentiate and normalize log-weights without overflow.

    Returns ``(probs, log_norm)`` where ``log_norm`` is the log of the sum of
    the exponentiated inputs.  Raises :class:`NumericalError` when every
    weight is -inf (total probability underflow).
    """
    log_w = np.asarray(log_w, dtype=float)
    if log_w.size == 0:
        raise ValueError("empty log-weight vector")
    m = float(np.max(log_w))
    if not np.isfinite(m):
        raise NumericalError("total probability underflow in log-weight normalization")
    shifted = np.exp(log_w - m)
    total = float(shifted.sum())
    return shifted / total, m + float(np.log(total))


class EmissionDynamics:
    """Interface for one mode's conditional observation model.

    A dynamics object scores transitions ``y_prev -> y_next`` between
    consecutive observation rows of a fixed width, re-estimates itself from
    responsibility-weighted data, and can sample forward.  Instances are
    immutable; ``m_step`` returns a new object.
    """

    #: number of observation channels consumed by this dynamics
    width: int = 0

    def predict(self, y_prev: np.ndarray) -> np.ndarray:
        """Deterministic one-step prediction."""
        raise NotImplementedError

    def log_emission_seq(self, values: np.ndarray) -> np.ndarray:
        """Log-density of each step of a (T+1, width) sequence; returns (T,)."""
        raise NotImplementedError

    def log_emission(self, y_prev, y_next) -> float:
        pair = np.vstack([np.asarray(y_prev, float), np.asarray(y_next, float)])
        return float(self.log_emission_seq(pair)[0])

    def m_step(self, values_list, weights_list, *, diagonal: bool = False):
        """Weighted re-estimation; returns a new dynamics of the same kind."""
        raise NotImplementedError

    def sample_next(self, y_prev: np.ndarray, rng: np.random.Generator,
                    with_noise: bool = True) -> np.ndarray:
        raise NotImplementedError


def check_step_weights(values: np.ndarray, weights: np.ndarray, width: int) -> None:
    """Validate one (sequence, weights) pair handed to an m_step."""
    if values.ndim != 2 or values.shape[1] != width:
        raise ValueError(f"sequence must be (T+1, {width}), got {values.shape}")
    if values.shape[0] < 2:
        raise ValueError("sequence must contain at least one step")
    if weights.shape != (values.shape[0] - 1,):
        raise ValueError("weights must have one entry per step")
    if np.any(weights < -PROB_ATOL) or np.any(weights > 1.0 + PROB_ATOL):
        raise ValueError("step weights must lie in [0, 1]")


@dataclass(frozen=True)
class ModelParams:
    """Complete parameter set of a switching dynamics model.

    Fields
    ------
    init : (S,) initial mode distribution.
    trans : (S, S) row-stochastic transition matrix.
    emissions : one EmissionDynamics per mode, all of the layout's width.
    layout : ObservationLayout describing the observation channels.
    standardization : optional per-channel affine transform recorded with
        the model so raw data can be mapped into training units.
    """

    init: np.ndarray
    trans: np.ndarray
    emissions: tuple
    layout: object
    standardization: object = None

    def __post_init__(self):
        init = check_distribution(self.init, "initial distribution")
        trans = check_stochastic(self.trans, "transition matrix")
        emissions = tuple(self.emissions)
        if trans.shape[0] != init.size:
            raise ValueError("transition matrix size does not match the mode count")
        if len(emissions) != init.size:
            raise ValueError("need exactly one emission dynamics per mode")
        width = self.layout.width
        for s, dyn in enumerate(emissions):
            if dyn.width != width:
                raise ValueError(
                    f"emission {s} has width {dyn.width}, layout has {width}")
        object.__setattr__(self, "init", init)
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "emissions", emissions)

    @property
    def n_modes(self) -> int:
        return self.init.size

    def replace(self, **kw) -> "ModelParams":
        cur = dict(init=self.init, trans=self.trans, emissions=self.emissions,
                   layout=self.layout, standardization=self.standardization)
        cur.update(kw)
        return ModelParams(**cur)

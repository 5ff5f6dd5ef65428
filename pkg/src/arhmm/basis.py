"""Basis-function families for non-linear autoregressive maps.

Every family maps a d-dimensional observation to a feature vector whose
first entry is the constant 1, so a weight matrix acting on it always has an
affine part.  Three families are provided: affine features, Gaussian radial
bumps around fixed centers, and full polynomial features up to a degree.
"""

from __future__ import annotations

import numpy as np

from .core import _readonly


class LinearBasis:
    """Affine features: phi(y) = [1, y_1, ..., y_d]."""

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("input dimension must be >= 1")
        self.d = int(d)

    @property
    def output_len(self) -> int:
        return self.d + 1

    def evaluate_rows(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.d:
            raise ValueError(f"expected rows of dimension {self.d}")
        out = np.empty((rows.shape[0], self.d + 1))
        out[:, 0] = 1.0
        out[:, 1:] = rows
        return out

    def to_payload(self) -> dict:
        return {"kind": "linear", "d": self.d}

    def __eq__(self, other):
        return isinstance(other, LinearBasis) and other.d == self.d

    def __repr__(self):
        return f"LinearBasis(d={self.d})"


class GrbfBasis:
    """Constant plus isotropic Gaussian bumps.

    phi(y) = [1, exp(-||y - mu_1||^2 / w_1), ..., exp(-||y - mu_N||^2 / w_N)]

    Each width w_i scales the identity in the quadratic form, so the bumps
    are isotropic; widths must be strictly positive.
    """

    def __init__(self, centers, widths):
        centers = np.array(centers, dtype=float)
        widths = np.array(widths, dtype=float)
        if centers.ndim != 2 or centers.shape[0] < 1:
            raise ValueError("centers must be a non-empty (N, d) array")
        if widths.shape != (centers.shape[0],):
            raise ValueError("need exactly one width per center")
        if not (np.all(np.isfinite(centers)) and np.all(np.isfinite(widths))):
            raise ValueError("centers and widths must be finite")
        if np.any(widths <= 0.0):
            raise ValueError("widths must be strictly positive")
        self.centers = _readonly(centers)
        self.widths = _readonly(widths)
        self.d = centers.shape[1]

    @property
    def output_len(self) -> int:
        return self.centers.shape[0] + 1

    def evaluate_rows(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.d:
            raise ValueError(f"expected rows of dimension {self.d}")
        diff = rows[:, None, :] - self.centers[None, :, :]
        sq = np.sum(diff * diff, axis=2)
        out = np.empty((rows.shape[0], self.output_len))
        out[:, 0] = 1.0
        out[:, 1:] = np.exp(-sq / self.widths[None, :])
        return out

    def to_payload(self) -> dict:
        return {"kind": "grbf", "centers": self.centers.tolist(),
                "widths": self.widths.tolist()}

    def __eq__(self, other):
        return (isinstance(other, GrbfBasis)
                and np.array_equal(other.centers, self.centers)
                and np.array_equal(other.widths, self.widths))

    def __repr__(self):
        return f"GrbfBasis(n_centers={self.centers.shape[0]}, d={self.d})"


def _graded_exponents(d: int, degree: int):
    """Exponent tuples of all monomials in d variables up to ``degree``.

    Ordered by total degree, and within a degree block lexicographically with
    the first variable's exponent descending: for d=2, degree 2 the order is
    (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).
    """
    def block(total, nvars):
        if nvars == 1:
            yield (total,)
            return
        for head in range(total, -1, -1):
            for rest in block(total - head, nvars - 1):
                yield (head,) + rest

    return [e for deg in range(degree + 1) for e in block(deg, d)]


class PolynomialBasis:
    """All monomials of total degree <= k, graded-lexicographically ordered.

    For d=2, k=3 the feature order is
    [1, y1, y2, y1^2, y1*y2, y2^2, y1^3, y1^2*y2, y1*y2^2, y2^3].
    """

    def __init__(self, d: int, degree: int):
        if d < 1:
            raise ValueError("input dimension must be >= 1")
        if degree < 1:
            raise ValueError("degree must be >= 1")
        self.d = int(d)
        self.degree = int(degree)
        self._exponents = _readonly(np.array(_graded_exponents(self.d, self.degree),
                                             dtype=np.int64))

    @property
    def output_len(self) -> int:
        return self._exponents.shape[0]

    @property
    def exponents(self) -> np.ndarray:
        """(output_len, d) integer exponent matrix, one row per monomial."""
        return self._exponents

    def evaluate_rows(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.d:
            raise ValueError(f"expected rows of dimension {self.d}")
        return np.prod(rows[:, None, :] ** self._exponents[None, :, :], axis=2)

    def to_payload(self) -> dict:
        return {"kind": "poly", "d": self.d, "k": self.degree}

    def __eq__(self, other):
        return (isinstance(other, PolynomialBasis)
                and other.d == self.d and other.degree == self.degree)

    def __repr__(self):
        return f"PolynomialBasis(d={self.d}, degree={self.degree})"


def evaluate(family, y) -> np.ndarray:
    """Feature vector of a single observation."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("y must be a vector")
    return family.evaluate_rows(y[None, :])[0]


def output_len(family) -> int:
    return family.output_len


def basis_from_payload(payload: dict):
    """Rebuild a basis family from its JSON payload."""
    kind = payload.get("kind")
    if kind == "linear":
        return LinearBasis(payload["d"])
    if kind == "grbf":
        return GrbfBasis(payload["centers"], payload["widths"])
    if kind == "poly":
        return PolynomialBasis(payload["d"], payload["k"])
    raise ValueError(f"unknown basis kind {kind!r}")


def grbf_grid(rows: np.ndarray, per_dim: int, width_scale: float = 1.0) -> GrbfBasis:
    """Place Gaussian bumps on a uniform grid over the data bounding box.

    ``per_dim`` grid points are placed per dimension (at least 2) between the
    columnwise min and max of ``rows``.  Every width is set to
    ``2 * (width_scale * s)**2`` with ``s`` the mean grid spacing, so
    neighboring bumps overlap at about half height for ``width_scale = 1``.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValueError("need at least two data rows")
    if per_dim < 2:
        raise ValueError("per_dim must be >= 2")
    if width_scale <= 0.0:
        raise ValueError("width_scale must be positive")
    lo = rows.min(axis=0)
    hi = rows.max(axis=0)
    span = hi - lo
    if np.any(span <= 0.0):
        raise ValueError("data is degenerate along some dimension")
    axes = [np.linspace(lo[j], hi[j], per_dim) for j in range(rows.shape[1])]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    spacing = float(np.mean(span / (per_dim - 1)))
    width = 2.0 * (width_scale * spacing) ** 2
    return GrbfBasis(centers, np.full(centers.shape[0], width))

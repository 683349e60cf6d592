"""Cubic B-spline basis, interpolating spline fits and grid minimisation.

All functions here are pure: they never mutate their inputs, and the arrays
held by :class:`KnotVector` and :class:`SplineFit` are marked read-only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import overload

import numpy as np
import numpy.typing as npt
from scipy.linalg import solve_banded

from neural_globopt.exceptions import (
    DomainError,
    IllConditionedError,
    InvalidArgumentError,
    TooFewSamplesError,
)

logger = logging.getLogger(__name__)

DEGREE = 3
ORDER = DEGREE + 1
# Relative tolerance under which grid values count as tied with the minimum.
ARGMIN_TIE_TOL = 1e-12

FloatArray = npt.NDArray[np.float64]


def _frozen(values: npt.ArrayLike) -> FloatArray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class KnotVector:
    """Clamped cubic knot vector on a sub-interval of [0, 1]."""

    knots: FloatArray

    def __post_init__(self) -> None:
        knots = _frozen(self.knots)
        object.__setattr__(self, "knots", knots)

        if knots.ndim != 1 or knots.size < 2 * ORDER:
            raise InvalidArgumentError(
                f"A cubic knot vector needs at least {2 * ORDER} knots, got {knots.size}"
            )
        if not np.all(np.isfinite(knots)):
            raise InvalidArgumentError("Knots must be finite")
        if np.any(np.diff(knots) < 0):
            raise InvalidArgumentError("Knots must be non-decreasing")
        start, end = knots[0], knots[-1]
        if start < 0.0 or end > 1.0 or not start < end:
            raise InvalidArgumentError(f"Knot domain [{start}, {end}] must lie inside [0, 1]")
        if np.any(knots[:ORDER] != start) or np.any(knots[-ORDER:] != end):
            raise InvalidArgumentError("End knots must be clamped with multiplicity 4")
        interior = knots[ORDER:-ORDER]
        if np.any(interior <= start) or np.any(interior >= end):
            raise InvalidArgumentError("Interior knots must lie strictly inside the domain")

    @classmethod
    def clamped(
        cls, interior: npt.ArrayLike, start: float = 0.0, end: float = 1.0
    ) -> KnotVector:
        """Build a clamped knot vector from its interior knots."""
        inner = np.asarray(interior, dtype=np.float64).ravel()
        return cls(np.concatenate([[start] * ORDER, inner, [end] * ORDER]))

    @property
    def n_basis(self) -> int:
        return int(self.knots.size - ORDER)

    @property
    def start(self) -> float:
        return float(self.knots[0])

    @property
    def end(self) -> float:
        return float(self.knots[-1])

    def greville(self) -> FloatArray:
        """Greville abscissae, one per basis function."""
        t = self.knots
        return np.array(
            [t[i + 1 : i + ORDER].mean() for i in range(self.n_basis)], dtype=np.float64
        )


@dataclass(frozen=True)
class SplineFit:
    """Cubic spline in B-spline form fitted to ``source_n`` samples."""

    knots: KnotVector
    coeffs: FloatArray
    source_n: int

    def __post_init__(self) -> None:
        coeffs = _frozen(self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if coeffs.ndim != 1 or coeffs.size != self.knots.n_basis:
            raise InvalidArgumentError(
                f"Expected {self.knots.n_basis} coefficients, got {coeffs.size}"
            )


@dataclass(frozen=True)
class GridSpec:
    """Uniform search grid {0, 1/count, ..., 1}."""

    count: int = 2000

    def __post_init__(self) -> None:
        if self.count < 2:
            raise InvalidArgumentError(f"Grid count must be at least 2, got {self.count}")

    @property
    def step(self) -> float:
        return 1.0 / self.count

    def points(self) -> FloatArray:
        return np.arange(self.count + 1, dtype=np.float64) / self.count


ORACLE_GRID = GridSpec(2000)


def _span_indices(t: FloatArray, xs: FloatArray) -> npt.NDArray[np.intp]:
    # Spans outside the knot range fall back to the nearest non-empty span,
    # which also makes the final span right-closed.
    nonempty = np.nonzero(t[1:] > t[:-1])[0]
    idx = np.searchsorted(t, xs, side="right") - 1
    return np.clip(idx, nonempty[0], nonempty[-1])


def basis_matrix(knots: KnotVector | FloatArray, xs: npt.ArrayLike, degree: int = DEGREE) -> FloatArray:
    """Evaluate every B-spline basis function of ``degree`` at ``xs``.

    Vectorised Cox–de Boor recurrence. Returns an array of shape
    ``(len(xs), len(knots) - degree - 1)``.
    """
    t = knots.knots if isinstance(knots, KnotVector) else np.asarray(knots, dtype=np.float64)
    x = np.atleast_1d(np.asarray(xs, dtype=np.float64))

    n_spans = t.size - 1
    basis = np.zeros((x.size, n_spans), dtype=np.float64)
    basis[np.arange(x.size), _span_indices(t, x)] = 1.0

    xcol = x[:, None]
    for d in range(1, degree + 1):
        m = t.size - d - 1
        left = t[:m]
        right = t[d + 1 : d + 1 + m]
        denom_l = t[d : d + m] - left
        denom_r = right - t[1 : 1 + m]
        w_l = np.divide(
            xcol - left, denom_l, out=np.zeros((x.size, m)), where=denom_l > 0
        )
        w_r = np.divide(
            right - xcol, denom_r, out=np.zeros((x.size, m)), where=denom_r > 0
        )
        basis = w_l * basis[:, :m] + w_r * basis[:, 1 : m + 1]
    return basis


def _cox_de_boor(t: FloatArray, i: int, d: int, x: float, span: int) -> float:
    if d == 0:
        return 1.0 if i == span else 0.0
    value = 0.0
    denom = t[i + d] - t[i]
    if denom > 0:
        value += (x - t[i]) / denom * _cox_de_boor(t, i, d - 1, x, span)
    denom = t[i + d + 1] - t[i + 1]
    if denom > 0:
        value += (t[i + d + 1] - x) / denom * _cox_de_boor(t, i + 1, d - 1, x, span)
    return value


def bspline_basis(i: int, knots: KnotVector, x: float) -> float:
    """Value of the cubic basis function B_{i,3} at ``x``."""
    if not 0 <= i < knots.n_basis:
        raise InvalidArgumentError(f"Basis index {i} out of range [0, {knots.n_basis})")
    _check_domain(x)
    if x < knots.start or x > knots.end:
        return 0.0
    span = int(_span_indices(knots.knots, np.array([x]))[0])
    return float(_cox_de_boor(knots.knots, i, DEGREE, float(x), span))


def _check_domain(xs: npt.ArrayLike) -> FloatArray:
    arr = np.asarray(xs, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("Positions must lie in [0, 1]")
    return arr


def _validate_samples(xs: npt.ArrayLike, ys: npt.ArrayLike) -> tuple[FloatArray, FloatArray]:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise InvalidArgumentError("xs and ys must be 1-D arrays of equal length")
    if x.size < ORDER:
        raise TooFewSamplesError(f"A cubic spline needs at least {ORDER} samples, got {x.size}")
    if np.any(np.diff(x) <= 0):
        raise InvalidArgumentError("xs must be strictly increasing without duplicates")
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("ys must be finite")
    _check_domain(x)
    return x, y


def _not_a_knot_slopes(x: FloatArray, y: FloatArray) -> FloatArray:
    """Slopes at the samples of the not-a-knot cubic interpolant."""
    n = x.size
    dx = np.diff(x)
    slope = np.diff(y) / dx

    ab = np.zeros((3, n))
    ab[1, 1:-1] = 2.0 * (dx[:-1] + dx[1:])
    ab[0, 2:] = dx[:-1]
    ab[2, :-2] = dx[1:]
    ab[1, 0] = dx[1]
    ab[0, 1] = x[2] - x[0]
    ab[1, -1] = dx[-2]
    ab[2, -2] = x[-1] - x[-3]

    b = np.empty(n)
    b[1:-1] = 3.0 * (dx[1:] * slope[:-1] + dx[:-1] * slope[1:])
    d = x[2] - x[0]
    b[0] = ((dx[0] + 2.0 * d) * dx[1] * slope[0] + dx[0] ** 2 * slope[1]) / d
    d = x[-1] - x[-3]
    b[-1] = (dx[-1] ** 2 * slope[-2] + (2.0 * d + dx[-1]) * dx[-2] * slope[-1]) / d

    return _solve_tridiagonal(ab, b, "slope")


def _solve_tridiagonal(ab: FloatArray, b: FloatArray, what: str) -> FloatArray:
    try:
        solution = solve_banded((1, 1), ab, b, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise IllConditionedError(f"Banded {what} system could not be solved: {e}") from e
    if not np.all(np.isfinite(solution)):
        raise IllConditionedError(f"Banded {what} system produced non-finite values")
    return np.asarray(solution, dtype=np.float64)


def fit_interpolating_spline(xs: npt.ArrayLike, ys: npt.ArrayLike) -> SplineFit:
    """Fit the not-a-knot cubic spline interpolating ``(xs, ys)``.

    Every sample position becomes a knot, so the fit carries ``n + 2``
    B-spline coefficients.
    """
    x, y = _validate_samples(xs, ys)
    n = x.size
    slopes = _not_a_knot_slopes(x, y)
    knots = KnotVector.clamped(x[1:-1], start=float(x[0]), end=float(x[-1]))

    # Rows: value at x0, slope at x0, values at x1..x_{n-2}, slope and value at x_{n-1}.
    m = n + 2
    ab = np.zeros((3, m))
    rhs = np.empty(m)
    dx = np.diff(x)

    ab[1, 0] = 1.0
    rhs[0] = y[0]
    ab[2, 0] = -1.0
    ab[1, 1] = 1.0
    rhs[1] = slopes[0] * dx[0] / DEGREE

    inner = basis_matrix(knots, x[1:-1])
    for j in range(1, n - 1):
        row = j + 1
        ab[2, row - 1] = inner[j - 1, j]
        ab[1, row] = inner[j - 1, j + 1]
        ab[0, row + 1] = inner[j - 1, j + 2]
        rhs[row] = y[j]

    ab[1, n] = -1.0
    ab[0, n + 1] = 1.0
    rhs[n] = slopes[-1] * dx[-1] / DEGREE
    ab[1, n + 1] = 1.0
    rhs[n + 1] = y[-1]

    coeffs = _solve_tridiagonal(ab, rhs, "coefficient")
    fit = SplineFit(knots=knots, coeffs=coeffs, source_n=n)

    residual = np.max(np.abs(_evaluate(fit, x) - y))
    if residual > 1e-9 * max(1.0, float(np.max(np.abs(y)))):
        raise IllConditionedError(f"Interpolation residual {residual:.3e} exceeds tolerance")
    logger.debug(f"Fitted not-a-knot spline to {n} samples")
    return fit


def _evaluate(fit: SplineFit, x: FloatArray) -> FloatArray:
    return basis_matrix(fit.knots, x) @ fit.coeffs


def _derivative_form(
    t: FloatArray, coeffs: FloatArray, degree: int
) -> tuple[FloatArray, FloatArray, int]:
    width = t[degree + 1 : degree + coeffs.size] - t[1 : coeffs.size]
    dc = np.divide(
        degree * np.diff(coeffs), width, out=np.zeros(coeffs.size - 1), where=width > 0
    )
    return t[1:-1], dc, degree - 1


@overload
def spline_eval(fit: SplineFit, x: float) -> float: ...


@overload
def spline_eval(fit: SplineFit, x: FloatArray) -> FloatArray: ...


def spline_eval(fit: SplineFit, x: float | FloatArray) -> float | FloatArray:
    """Evaluate the fitted spline at one position or an array of positions."""
    arr = _check_domain(x)
    values = _evaluate(fit, np.atleast_1d(arr))
    if arr.ndim == 0:
        return float(values[0])
    return values.reshape(arr.shape)


def spline_derivative_at(fit: SplineFit, xs: npt.ArrayLike, order: int = 1) -> FloatArray:
    """Derivative of the fitted spline at each position in ``xs``."""
    if order not in (1, 2):
        raise InvalidArgumentError(f"Derivative order must be 1 or 2, got {order}")
    arr = np.atleast_1d(_check_domain(xs))
    t, c, degree = fit.knots.knots, fit.coeffs, DEGREE
    for _ in range(order):
        t, c, degree = _derivative_form(t, c, degree)
    return basis_matrix(t, arr, degree=degree) @ c


def grid_argmin(points: FloatArray, values: FloatArray) -> float:
    """Smallest grid point whose value is minimal.

    Ties are not exact: every value <= vmin + ARGMIN_TIE_TOL * max(1, |vmin|)
    counts as minimal. A flat stretch evaluated with rounding noise (a fitted
    constant, say) therefore resolves to its smallest x. Distinct minima closer
    than the tolerance also resolve to the smaller x.
    """
    vmin = float(np.min(values))
    tol = ARGMIN_TIE_TOL * max(1.0, abs(vmin))
    idx = int(np.argmax(values <= vmin + tol))
    return float(points[idx])


def spline_argmin(fit: SplineFit, grid: GridSpec = ORACLE_GRID) -> float:
    """Grid point minimising the spline; ties (see ``grid_argmin``) go to the smallest x."""
    points = grid.points()
    return grid_argmin(points, _evaluate(fit, points))

"""Clamped B-spline bases on data-driven knots.

Everything is built on open (clamped) knot vectors: boundary knots repeated
degree+1 times, interior knots at sample quantiles. A basis with `df` degrees
of freedom and degree d carries df + d + 1 knots. Design matrices evaluate
the df basis functions at given points; companion matrices evaluate their
derivatives and running integrals in the same coefficient space, so a single
coefficient vector can be read at the function level and at the derivative
level consistently.

Conventions that matter downstream:
  * right boundary is closed, the last basis function equals 1 at the domain
    maximum (evaluation there uses the last nonempty span);
  * outside the knot range the boundary polynomial piece is extended, i.e.
    evaluation clamps to the first/last nonempty span instead of zeroing out.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "Representation",
    "SplineBasis",
    "SplineFunction",
    "determine_knots",
    "design_matrix",
    "derivative_design_matrix",
    "integral_design_matrix",
    "augment",
]


class Representation(Enum):
    """What the spline coefficients parameterize for a branch function g.

    FUNCTION: the spline is g itself (degree d); g' comes from the
    derivative design matrix.
    DERIVATIVE: the spline is g' (degree d-1); g comes from the integral
    design matrix plus a free constant.
    """

    FUNCTION = "function"
    DERIVATIVE = "derivative"


@dataclass(frozen=True)
class SplineBasis:
    """A clamped B-spline basis: degree, degrees of freedom, knot vector."""

    degree: int
    df: int
    knots: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        d, df = self.degree, self.df
        if d < 0:
            raise ValueError(f"degree must be >= 0, got {d}.")
        if df < 1:
            raise ValueError(f"df must be >= 1, got {df}.")
        if t.ndim != 1 or t.size != df + d + 1:
            raise ValueError(
                f"knot vector needs df + degree + 1 = {df + d + 1} entries, got {t.size}."
            )
        if np.any(np.diff(t) < 0):
            raise ValueError("knots must be nondecreasing.")
        if t[0] >= t[-1]:
            raise ValueError("degenerate knot vector: no interior span.")
        if not (np.all(t[: d + 1] == t[0]) and np.all(t[-(d + 1):] == t[-1])):
            raise ValueError(
                f"clamped basis needs boundary knots repeated {d + 1} times."
            )
        object.__setattr__(self, "knots", t)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])


@dataclass(frozen=True)
class SplineFunction:
    """One branch function: basis, coefficients, and which level they live at.

    coeffs has df + 1 entries; coeffs[0] is the free constant, coeffs[1:]
    weight the basis functions. Under FUNCTION the constant shifts g, under
    DERIVATIVE it is the integration constant of g (g' ignores it).
    """

    basis: SplineBasis
    coeffs: np.ndarray
    representation: Representation

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if c.size != self.basis.df + 1:
            raise ValueError(
                f"need df + 1 = {self.basis.df + 1} coefficients, got {c.size}."
            )
        if not isinstance(self.representation, Representation):
            raise ValueError(f"bad representation {self.representation!r}.")
        object.__setattr__(self, "coeffs", c)

    def value(self, u) -> np.ndarray:
        c0, cs = self.coeffs[0], self.coeffs[1:]
        if self.representation is Representation.FUNCTION:
            return c0 + design_matrix(self.basis, u) @ cs
        return c0 + integral_design_matrix(self.basis, u) @ cs

    def derivative(self, u) -> np.ndarray:
        cs = self.coeffs[1:]
        if self.representation is Representation.FUNCTION:
            return derivative_design_matrix(self.basis, u) @ cs
        return design_matrix(self.basis, u) @ cs


def determine_knots(x, df: int, degree: int) -> SplineBasis:
    """Clamped knot vector from samples: quantile interior knots.

    df - degree - 1 interior knots are placed at the i/(K+1) quantiles of x
    (linear interpolation between order statistics), boundary knots at
    min(x)/max(x) with multiplicity degree + 1.
    """
    x = np.asarray(x, dtype=float).ravel()
    if df <= degree:
        raise ValueError(f"df must exceed degree, got df={df}, degree={degree}.")
    distinct = np.unique(x)
    if distinct.size < 2:
        raise ValueError("samples are all equal, no spline domain.")
    if distinct.size < df + 1:
        raise ValueError(
            f"need at least df + 1 = {df + 1} distinct samples, got {distinct.size}."
        )
    lo, hi = distinct[0], distinct[-1]
    n_interior = df - degree - 1
    if n_interior > 0:
        qs = np.arange(1, n_interior + 1) / (n_interior + 1)
        interior = np.quantile(x, qs)
        squashed = np.unique(interior).size < n_interior
        touching = interior[0] <= lo or interior[-1] >= hi
        if squashed or touching:
            warnings.warn(
                "coincident interior knots: sample distribution is too "
                "concentrated for the requested df",
                stacklevel=2,
            )
    else:
        interior = np.empty(0)
    knots = np.concatenate(
        [np.full(degree + 1, lo), interior, np.full(degree + 1, hi)]
    )
    return SplineBasis(degree=degree, df=df, knots=knots)


def _find_spans(t: np.ndarray, degree: int, u: np.ndarray) -> np.ndarray:
    """Index of the nonempty knot span owning each point.

    Points at or beyond the boundaries (and inside empty spans created by
    coincident knots) are snapped to the nearest nonempty span, which is what
    extends the boundary polynomial piece outside the domain.
    """
    lo, hi = degree, t.size - degree - 2
    nonempty = np.flatnonzero(np.diff(t) > 0)
    nonempty = nonempty[(nonempty >= lo) & (nonempty <= hi)]
    spans = np.searchsorted(t, u, side="right") - 1
    spans = np.clip(spans, lo, hi)
    idx = np.searchsorted(nonempty, spans, side="right") - 1
    return nonempty[np.clip(idx, 0, nonempty.size - 1)]


def _local_basis(t: np.ndarray, degree: int, spans: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Values of the degree+1 basis functions alive on each point's span.

    Column r of the result holds B_{span - degree + r, degree}(u). Standard
    knot-difference recursion; denominators are knot spans around a nonempty
    interval and cannot vanish.
    """
    npts = u.size
    vals = np.zeros((npts, degree + 1))
    vals[:, 0] = 1.0
    left = np.empty((npts, degree))
    right = np.empty((npts, degree))
    for j in range(1, degree + 1):
        left[:, j - 1] = u - t[spans - j + 1]
        right[:, j - 1] = t[spans + j] - u
        saved = np.zeros(npts)
        for r in range(j):
            denom = right[:, r] + left[:, j - r - 1]
            temp = vals[:, r] / denom
            vals[:, r] = saved + right[:, r] * temp
            saved = left[:, j - r - 1] * temp
        vals[:, j] = saved
    return vals


def _scatter(local: np.ndarray, spans: np.ndarray, degree: int, ncols: int) -> np.ndarray:
    out = np.zeros((spans.size, ncols))
    cols = spans[:, None] - degree + np.arange(degree + 1)[None, :]
    np.put_along_axis(out, cols, local, axis=1)
    return out


def design_matrix(basis: SplineBasis, u) -> np.ndarray:
    """S x df matrix of basis function values at the points u."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    t, d = basis.knots, basis.degree
    spans = _find_spans(t, d, u)
    local = _local_basis(t, d, spans, u)
    return _scatter(local, spans, d, basis.df)


def derivative_design_matrix(basis: SplineBasis, u) -> np.ndarray:
    """S x df matrix of first-derivative values of the basis functions.

    Uses the lower-degree recurrence B'_j = w_j B_{j,d-1} - w_{j+1} B_{j+1,d-1}
    with w_l = d / (t_{l+d} - t_l), zero where the knot span is empty. Needs
    degree >= 1.
    """
    d = basis.degree
    if d < 1:
        raise ValueError("derivative needs degree >= 1.")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    t, df = basis.knots, basis.df
    spans = _find_spans(t, d, u)
    local = _local_basis(t, d - 1, spans, u)
    # lower-degree functions indexed 0..df on the same knot vector
    lower = np.zeros((u.size, df + 1))
    cols = spans[:, None] - (d - 1) + np.arange(d)[None, :]
    np.put_along_axis(lower, cols, local, axis=1)
    gaps = t[d:] - t[: t.size - d]  # t_{l+d} - t_l for l = 0..df
    w = np.where(gaps > 0, d / np.where(gaps > 0, gaps, 1.0), 0.0)
    return lower[:, :-1] * w[:-1] - lower[:, 1:] * w[1:]


def integral_design_matrix(basis: SplineBasis, u) -> np.ndarray:
    """S x df matrix of running integrals int_{t_min}^{u} B_j.

    The antiderivative of a degree-d basis expansion is a degree-(d+1) spline
    on the knot vector padded with one extra boundary knot on each side;
    column j collects the tail sum of the higher-degree functions scaled by
    (t_{j+d+1} - t_j)/(d+1).
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    t, d, df = basis.knots, basis.degree, basis.df
    tt = np.concatenate([t[:1], t, t[-1:]])
    spans = _find_spans(tt, d + 1, u)
    local = _local_basis(tt, d + 1, spans, u)
    higher = _scatter(local, spans, d + 1, df + 1)
    dt = (t[d + 1:] - t[: df]) / (d + 1)
    # integral of B_j is dt[j] * sum of higher-degree functions with index > j
    tails = np.cumsum(higher[:, ::-1], axis=1)[:, ::-1]
    return tails[:, 1:] * dt[None, :]


def augment(mat: np.ndarray, kind: str) -> np.ndarray:
    """Prepend a constant column ("zeros" or "ones") for the free constant."""
    mat = np.asarray(mat, dtype=float)
    if kind == "zeros":
        col = np.zeros((mat.shape[0], 1))
    elif kind == "ones":
        col = np.ones((mat.shape[0], 1))
    else:
        raise ValueError(f"kind must be 'zeros' or 'ones', got {kind!r}.")
    return np.hstack([col, mat])

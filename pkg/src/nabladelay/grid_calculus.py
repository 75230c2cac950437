"""Nabla fractional calculus on uniform integer grids.

Provides the fractional Taylor monomial together with the two operators
built from it: the nabla fractional sum and the Riemann-Liouville nabla
fractional difference.  Both operators act on finitely supported grid
functions (:class:`GridSeries`) and reduce to finite weighted sums, so
everything here is exact up to floating-point rounding; no quadrature and
no gamma-function evaluation is involved.

Conventions
-----------
The backward jump on the integer grid is ``rho(k) = k - 1``.  A monomial
of order ``mu`` based at ``a`` vanishes for ``k <= a`` (the empty grid
interval), with the single exception ``mu = 0, k = a`` where it equals 1.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "GridRangeError",
    "GridSeries",
    "monomial",
    "monomial_run",
    "nabla_sum",
    "rl_difference",
]


class GridRangeError(IndexError):
    """Raised when a grid function is read outside its stored range."""


def monomial(mu: float, k: int, a: int) -> float:
    """Fractional Taylor monomial of order ``mu`` based at ``a``.

    For ``m = k - a >= 1`` the value is the rising-factorial ratio

        prod_{t=1}^{m-1} (t + mu) / t,

    which equals Gamma(m + mu) / (Gamma(m) * Gamma(mu + 1)) wherever the
    gamma functions are finite, but stays well defined for negative
    non-integer ``mu`` where the gamma form would need pole bookkeeping.
    For ``m <= 0`` the monomial is 0 except for the order-zero case
    ``monomial(0.0, a, a) == 1``.

    Parameters
    ----------
    mu : float
        Order of the monomial.
    k, a : int
        Evaluation point and base point.
    """
    m = k - a
    if m < 1:
        return 1.0 if (m == 0 and mu == 0.0) else 0.0
    value = 1.0
    for t in range(1, m):
        value *= (t + mu) / t
    return value


def monomial_run(mu: float, count: int) -> np.ndarray:
    """Monomial values for ``m = k - a = 1 .. count`` as a vector.

    Entry ``j`` holds ``monomial(mu, a + j + 1, a)``; the whole run is
    produced by the same product recurrence as :func:`monomial`, one
    multiplication per step, so it agrees with the pointwise routine to
    the last bit.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    out = np.empty(count, dtype=float)
    value = 1.0
    for m in range(1, count + 1):
        out[m - 1] = value
        value *= (m + mu) / m
    return out


class GridSeries:
    """Vector-valued function on a contiguous integer grid.

    Stores samples for grid points ``base, base + 1, ..., base + L`` as a
    float array of shape ``(L + 1, n)``.  Reading outside the stored range
    raises :class:`GridRangeError`; grid functions never extend themselves
    silently with zeros.
    """

    def __init__(self, base: int, values) -> None:
        arr = np.array(values, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("values must be a nonempty sequence of equal-length vectors")
        self.base = int(base)
        self.values = arr

    @classmethod
    def constant(cls, base: int, end: int, vector) -> "GridSeries":
        """Series holding the same vector at every point of ``[base, end]``."""
        vec = np.atleast_1d(np.asarray(vector, dtype=float))
        if end < base:
            raise ValueError("end must be >= base")
        return cls(base, np.tile(vec, (end - base + 1, 1)))

    @classmethod
    def from_function(cls, base: int, end: int, fn) -> "GridSeries":
        """Sample ``fn(k)`` (scalar or vector valued) on ``[base, end]``."""
        if end < base:
            raise ValueError("end must be >= base")
        rows = [np.atleast_1d(np.asarray(fn(k), dtype=float)) for k in range(base, end + 1)]
        return cls(base, np.vstack(rows))

    @property
    def dim(self) -> int:
        """Number of components of each sample vector."""
        return self.values.shape[1]

    @property
    def end(self) -> int:
        """Last grid point with a stored value."""
        return self.base + self.values.shape[0] - 1

    def points(self) -> range:
        """The stored grid points, in order."""
        return range(self.base, self.end + 1)

    def at(self, k: int) -> np.ndarray:
        """Value at grid point ``k`` (shape ``(n,)``)."""
        if k < self.base or k > self.end:
            raise GridRangeError(
                f"grid point {k} outside stored range [{self.base}, {self.end}]"
            )
        return self.values[k - self.base]

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"GridSeries(base={self.base}, end={self.end}, dim={self.dim})"


def _kernel_sum(order: float, a: int, z: GridSeries, k: int) -> np.ndarray:
    # Common core of both operators: sum_{s=a+1}^{k} H_order(k, s-1) z(s).
    if z.base > a + 1 or z.end < k:
        raise GridRangeError(
            f"operand stored on [{z.base}, {z.end}] does not cover [{a + 1}, {k}]"
        )
    acc = np.zeros(z.dim)
    for s in range(a + 1, k + 1):
        acc += monomial(order, k, s - 1) * z.at(s)
    return acc


def nabla_sum(alpha: float, a: int, z: GridSeries, k: int) -> np.ndarray:
    """Nabla fractional sum of order ``alpha`` based at ``a``.

    Evaluates ``sum_{s=a+1}^{k} monomial(alpha - 1, k, s - 1) z(s)``; for
    ``k <= a`` the sum is empty and the zero vector is returned.  ``z``
    must be stored at least on ``[a + 1, k]``.
    """
    if alpha <= 0:
        raise ValueError(f"fractional sum order must be positive, got {alpha}")
    if k <= a:
        return np.zeros(z.dim)
    return _kernel_sum(alpha - 1.0, a, z, k)


def rl_difference(alpha: float, a: int, z: GridSeries, k: int) -> np.ndarray:
    """Riemann-Liouville nabla fractional difference of order ``alpha``.

    Evaluates ``sum_{s=a+1}^{k} monomial(-alpha - 1, k, s - 1) z(s)`` for
    ``k >= a + 1``.  The ``s = k`` weight is exactly 1, which is what makes
    sequential solvers for implicit fractional difference equations
    possible.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"difference order must lie in (0, 1), got {alpha}")
    if k < a + 1:
        raise ValueError(f"evaluation point {k} must be >= {a + 1}")
    return _kernel_sum(-alpha - 1.0, a, z, k)

"""Shared domain types: datasets, monotone function representations, losses.

Everything downstream (oracles, mechanisms, fitters, harness) builds on the
types here. Conventions:

- Domain elements are integers. For total orders the domain is ``1..m``.
- Labels and fitted values live in ``[0, 1]``.
- A loss is Lipschitz in its first argument with a known constant, and the
  clipped loss over a value window ``[tau, theta]`` subtracts the pointwise
  best achievable inside the window, so it is nonnegative and bounded by
  ``lipschitz * (theta - tau)`` per point.
"""
from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np

# Grid resolution used for inner minima of custom losses.
CUSTOM_MIN_GRID = 1024


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class CapExceeded(RuntimeError):
    """Raised when an enumeration would exceed its configured cap."""


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype).copy()
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True)
class Dataset:
    """Multiset of (x, y) points with integer x >= 1 and y in [0, 1].

    Duplicate x values are allowed; any fitted function must give them a
    single shared value. Arrays are stored read-only.
    """

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs)
        if xs.size and not np.issubdtype(xs.dtype, np.integer):
            rounded = np.rint(xs)
            if not np.array_equal(rounded, xs):
                raise ValidationError("x values must be integers")
            xs = rounded
        xs = _frozen_array(xs, np.int64)
        ys = _frozen_array(self.ys, np.float64)
        if xs.shape != ys.shape or xs.ndim != 1:
            raise ValidationError("xs and ys must be 1-d arrays of equal length")
        if xs.size:
            if xs.min() < 1:
                raise ValidationError("x values must be >= 1")
            if ys.min() < 0.0 or ys.max() > 1.0:
                raise ValidationError("labels must lie in [0, 1]")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return int(self.xs.size)

    @classmethod
    def from_pairs(cls, pairs, domain_size: int | None = None) -> "Dataset":
        pairs = list(pairs)
        xs = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
        ds = cls(np.asarray(xs, dtype=np.int64), np.asarray(ys, dtype=np.float64))
        if domain_size is not None:
            ds.check_domain(domain_size)
        return ds

    def check_domain(self, m: int) -> None:
        if self.n and self.xs.max() > m:
            raise ValidationError(f"x value {self.xs.max()} outside domain 1..{m}")

    def sorted_by_x(self) -> "Dataset":
        order = np.argsort(self.xs, kind="stable")
        return Dataset(self.xs[order], self.ys[order])

    def pairs(self) -> list[tuple[int, float]]:
        return [(int(x), float(y)) for x, y in zip(self.xs, self.ys)]


@dataclasses.dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function on an integer domain.

    ``starts`` is strictly increasing; breakpoint i carries ``values[i]`` on
    ``[starts[i], starts[i+1])``. Values are nondecreasing and in [0, 1].
    Evaluation below the first start is an error.
    """

    starts: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        starts = _frozen_array(self.starts, np.int64)
        values = _frozen_array(self.values, np.float64)
        if starts.ndim != 1 or starts.shape != values.shape or starts.size == 0:
            raise ValidationError("need equal-length nonempty starts and values")
        if starts.size > 1 and not np.all(np.diff(starts) > 0):
            raise ValidationError("breakpoint starts must be strictly increasing")
        if np.any(np.diff(values) < -1e-12):
            raise ValidationError("step values must be nondecreasing")
        if values.min() < -1e-12 or values.max() > 1.0 + 1e-12:
            raise ValidationError("step values must lie in [0, 1]")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: float, first_start: int = 1) -> "StepFunction":
        return cls(np.array([first_start]), np.array([float(value)]))

    def __call__(self, x):
        xa = np.asarray(x)
        idx = np.searchsorted(self.starts, xa, side="right") - 1
        if np.any(idx < 0):
            raise ValidationError("evaluation below the first breakpoint")
        out = self.values[idx]
        return float(out) if np.isscalar(x) or xa.ndim == 0 else out

    def values_on(self, m: int) -> np.ndarray:
        """Values at 1..m as a dense array."""
        return self(np.arange(1, m + 1))

    def breakpoints(self) -> list[tuple[int, float]]:
        return [(int(s), float(v)) for s, v in zip(self.starts, self.values)]


@dataclasses.dataclass(frozen=True)
class PiecewiseLinearFunction:
    """Monotone piecewise-linear function given by knots on integer x.

    Between consecutive knots values interpolate linearly; outside the knot
    range the nearest knot value extends constantly. Because the domain is
    integer, placing knots on adjacent integers expresses jumps exactly.
    """

    knot_xs: np.ndarray
    knot_values: np.ndarray

    def __post_init__(self):
        xs = _frozen_array(self.knot_xs, np.int64)
        vs = _frozen_array(self.knot_values, np.float64)
        if xs.ndim != 1 or xs.shape != vs.shape or xs.size == 0:
            raise ValidationError("need equal-length nonempty knot arrays")
        if xs.size > 1 and not np.all(np.diff(xs) > 0):
            raise ValidationError("knot x values must be strictly increasing")
        if np.any(np.diff(vs) < -1e-12):
            raise ValidationError("knot values must be nondecreasing")
        if vs.min() < -1e-12 or vs.max() > 1.0 + 1e-12:
            raise ValidationError("knot values must lie in [0, 1]")
        object.__setattr__(self, "knot_xs", xs)
        object.__setattr__(self, "knot_values", vs)

    def __call__(self, x):
        xa = np.asarray(x, dtype=np.float64)
        out = np.interp(xa, self.knot_xs.astype(np.float64), self.knot_values)
        return float(out) if np.isscalar(x) or xa.ndim == 0 else out

    def values_on(self, m: int) -> np.ndarray:
        return self(np.arange(1, m + 1))

    def knots(self) -> list[tuple[int, float]]:
        return [(int(x), float(v)) for x, v in zip(self.knot_xs, self.knot_values)]


@dataclasses.dataclass(frozen=True)
class LossSpec:
    """Pointwise loss with the metadata the mechanisms need.

    ``evaluate(yhat, y)`` broadcasts over numpy arrays. ``lipschitz`` bounds
    the slope in the first argument over [0, 1]. ``distance_R`` is the loss of
    a half-unit miss for distance-based losses (used by risk accounting) and
    None otherwise.
    """

    kind: str
    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lipschitz: float
    convex: bool
    distance_R: float | None = None

    def inner_min(self, tau: float, theta: float, y) -> np.ndarray:
        """min over y' in [tau, theta] of loss(y', y), vectorized over y."""
        _check_window(tau, theta)
        ya = np.asarray(y, dtype=np.float64)
        if self.kind in ("l1", "l2sq"):
            # Convex and minimized at y' = y, so the window optimum clips y.
            return self.evaluate(np.clip(ya, tau, theta), ya)
        grid = np.linspace(tau, theta, CUSTOM_MIN_GRID)
        vals = self.evaluate(grid.reshape(-1, *([1] * ya.ndim)), ya[None, ...])
        return np.min(vals, axis=0)


def l1_loss() -> LossSpec:
    return LossSpec("l1", lambda a, b: np.abs(np.asarray(a, dtype=np.float64) - b),
                    lipschitz=1.0, convex=True, distance_R=0.5)


def l2sq_loss() -> LossSpec:
    return LossSpec("l2sq", lambda a, b: (np.asarray(a, dtype=np.float64) - b) ** 2,
                    lipschitz=2.0, convex=True, distance_R=0.25)


def custom_loss(fn: Callable[[float, float], float], lipschitz: float,
                convex: bool = False, distance_R: float | None = None,
                vectorized: bool = False) -> LossSpec:
    """Wrap a user loss. Non-vectorized callables are lifted with np.vectorize."""
    if lipschitz <= 0:
        raise ValidationError("lipschitz constant must be positive")
    evaluate = fn if vectorized else np.vectorize(fn, otypes=[np.float64])
    return LossSpec("custom", evaluate, lipschitz=float(lipschitz), convex=convex,
                    distance_R=distance_R)


@dataclasses.dataclass(frozen=True)
class PrivacyParams:
    """Pure differential privacy budget. Only delta = 0 is supported."""

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValidationError("epsilon must be positive")
        if self.delta != 0.0:
            raise ValidationError("only pure DP (delta = 0) is supported")


def _check_window(tau: float, theta: float) -> None:
    if not (tau <= theta):
        raise ValidationError(f"empty value window [{tau}, {theta}]")


def clip(values, tau: float, theta: float):
    """Clamp values into [tau, theta]; errors on an empty window."""
    _check_window(tau, theta)
    out = np.clip(np.asarray(values, dtype=np.float64), tau, theta)
    return float(out) if np.isscalar(values) else out


def clipped_loss(loss: LossSpec, tau: float, theta: float, yhat, y):
    """Loss relative to the best value available inside [tau, theta].

    Requires yhat in [tau, theta]. Nonnegative, and at most
    ``loss.lipschitz * (theta - tau)`` per point.
    """
    _check_window(tau, theta)
    yh = np.asarray(yhat, dtype=np.float64)
    if yh.size and (yh.min() < tau - 1e-12 or yh.max() > theta + 1e-12):
        raise ValidationError("prediction outside the clipping window")
    out = np.asarray(loss.evaluate(yh, np.asarray(y, dtype=np.float64)), dtype=np.float64)
    out = out - loss.inner_min(tau, theta, y)
    return float(out) if np.isscalar(yhat) and np.isscalar(y) else out


def _predict(f, xs: np.ndarray) -> np.ndarray:
    if callable(f):
        return np.asarray(f(xs), dtype=np.float64)
    raise ValidationError("function must be callable on x arrays")


def total_risk(f, data: Dataset, loss: LossSpec) -> float:
    """Unnormalized loss sum over the dataset (0 on empty data)."""
    if data.n == 0:
        return 0.0
    return float(np.sum(loss.evaluate(_predict(f, data.xs), data.ys)))


def risk(f, data: Dataset, loss: LossSpec) -> float:
    """Mean loss over the dataset; errors on empty data."""
    if data.n == 0:
        raise ValidationError("risk of an empty dataset is undefined")
    return total_risk(f, data, loss) / data.n

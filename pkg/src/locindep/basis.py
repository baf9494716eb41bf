"""Spline bases, iterated-integral feature streams, and penalized design matrices.

The intensity predictor of a target mark is expanded over lagged event effects:
first order uses F_i^m(t) = sum_{tau in N^m, tau < t} b_i(t - tau) for a compactly
supported B-spline basis (b_i) on [0, S); second order adds, for every ordered
pair of conditioning marks, the tensor-product effects whose features factor
into products F_{i1}^{m1}(t) * F_{i2}^{m2}(t) of the first-order streams.  Same-
mark pairs are symmetrized to i1 <= i2 (off-diagonal features emitted once,
doubled), which keeps the design full rank.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline

from locindep.core import (
    GridTooCoarseError,
    InvalidBasisError,
    MarkedEventSequence,
    MarkOutOfRangeError,
)

__all__ = [
    "SplineBasis",
    "TensorBasis",
    "PenaltyMatrix",
    "DesignMatrix",
    "DesignBuilder",
    "make_bspline_basis",
    "first_order_features",
    "build_design",
    "roughness_penalty",
]


@dataclass(frozen=True)
class SplineBasis:
    """Clamped B-spline basis of a given degree on [0, support).

    Every basis function vanishes outside [0, support); inside, the functions
    form a partition of unity.  Construct through :func:`make_bspline_basis`.
    """

    support: float
    num_basis: int
    degree: int
    knots: tuple[float, ...]

    @cached_property
    def _spline(self) -> BSpline:
        return BSpline(np.asarray(self.knots), np.eye(self.num_basis), self.degree)

    @cached_property
    def _spline_d2(self) -> BSpline:
        return self._spline.derivative(2)

    def evaluate(self, x) -> np.ndarray:
        """Basis values at lags x, shape (len(x), num_basis); zero outside [0, S)."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.zeros((x.size, self.num_basis))
        inside = (x >= 0.0) & (x < self.support)
        if np.any(inside):
            out[inside] = self._spline(x[inside])
        return out

    def second_derivative(self, x) -> np.ndarray:
        """Second derivatives at lags x; zero outside [0, S) and for degree < 2."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.zeros((x.size, self.num_basis))
        if self.degree < 2:
            return out
        inside = (x >= 0.0) & (x < self.support)
        if np.any(inside):
            out[inside] = self._spline_d2(x[inside])
        return out

    def _span_quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Gauss-Legendre nodes/weights, degree + 1 points per knot span (exact
        for the polynomial integrands used below)."""
        q = self.degree + 1
        ref_x, ref_w = np.polynomial.legendre.leggauss(q)
        breaks = np.unique(np.asarray(self.knots))
        nodes, weights = [], []
        for a, b in zip(breaks[:-1], breaks[1:]):
            half = 0.5 * (b - a)
            nodes.append(0.5 * (a + b) + half * ref_x)
            weights.append(half * ref_w)
        return np.concatenate(nodes), np.concatenate(weights)

    @cached_property
    def gram(self) -> np.ndarray:
        """M[i, j] = integral of b_i * b_j over the support."""
        x, w = self._span_quadrature()
        vals = self.evaluate(x)
        return (vals * w[:, None]).T @ vals

    @cached_property
    def curvature_gram(self) -> np.ndarray:
        """Omega1[i, j] = integral of b_i'' * b_j'' (zero matrix for degree < 2)."""
        if self.degree < 2:
            return np.zeros((self.num_basis, self.num_basis))
        x, w = self._span_quadrature()
        vals = self.second_derivative(x)
        return (vals * w[:, None]).T @ vals

    @cached_property
    def integrals(self) -> np.ndarray:
        """Integral of each basis function over the support."""
        x, w = self._span_quadrature()
        return w @ self.evaluate(x)

    def grid(self, n_points: int) -> np.ndarray:
        """n midpoints S * (m - 1/2) / n, m = 1..n, strictly inside the support."""
        m = np.arange(1, n_points + 1, dtype=np.float64)
        return self.support * (m - 0.5) / n_points


def make_bspline_basis(support: float, num_basis: int, degree: int = 3) -> SplineBasis:
    """Clamped B-spline basis with uniformly spaced interior knots on [0, support]."""
    if not (np.isfinite(support) and support > 0):
        raise InvalidBasisError(f"support must be positive, got {support!r}")
    if degree < 0:
        raise InvalidBasisError(f"degree must be nonnegative, got {degree}")
    if num_basis < degree + 1:
        raise InvalidBasisError(
            f"num_basis must be at least degree + 1 = {degree + 1}, got {num_basis}"
        )
    n_interior = num_basis - degree - 1
    interior = np.linspace(0.0, support, n_interior + 2)[1:-1]
    knots = np.concatenate(
        [np.zeros(degree + 1), interior, np.full(degree + 1, float(support))]
    )
    return SplineBasis(
        support=float(support),
        num_basis=int(num_basis),
        degree=int(degree),
        knots=tuple(knots.tolist()),
    )


def _symmetric_pairs(K: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(K)


def _duplication_matrix(K: int) -> np.ndarray:
    """Map symmetrized coefficients (i1 <= i2) to the full K x K coefficient grid."""
    ia, ib = _symmetric_pairs(K)
    D = np.zeros((K * K, ia.size))
    for col, (a, b) in enumerate(zip(ia, ib)):
        D[a * K + b, col] = 1.0
        D[b * K + a, col] = 1.0
    return D


@dataclass(frozen=True)
class TensorBasis:
    """Product basis over two lag axes; symmetric when both axes share a mark."""

    marginal: SplineBasis
    symmetric: bool

    @property
    def n_columns(self) -> int:
        K = self.marginal.num_basis
        return K * (K + 1) // 2 if self.symmetric else K * K

    def features(self, f_first: np.ndarray, f_second: np.ndarray | None = None) -> np.ndarray:
        """Second-order features from first-order streams.

        Cross-mark: column (i1, i2) holds F_{i1} * F_{i2}, row-major.  Same-mark:
        columns follow i1 <= i2 with off-diagonal products doubled, so that the
        coefficient of each column is the (shared) tensor coefficient.
        """
        if self.symmetric:
            if f_second is not None and f_second is not f_first:
                raise ValueError("symmetric tensor features take a single stream")
            ia, ib = _symmetric_pairs(self.marginal.num_basis)
            prod = f_first[:, ia] * f_first[:, ib]
            prod[:, ia != ib] *= 2.0
            return prod
        if f_second is None:
            raise ValueError("cross-mark tensor features need two streams")
        n, K = f_first.shape
        return (f_first[:, :, None] * f_second[:, None, :]).reshape(n, K * K)

    def penalty(self) -> np.ndarray:
        """Kronecker-sum roughness: Omega1 (x) M + M (x) Omega1, folded when symmetric."""
        omega1 = self.marginal.curvature_gram
        gram = self.marginal.gram
        full = np.kron(omega1, gram) + np.kron(gram, omega1)
        if not self.symmetric:
            return full
        D = _duplication_matrix(self.marginal.num_basis)
        return D.T @ full @ D


def first_order_features(basis: SplineBasis, event_times, eval_times) -> np.ndarray:
    """F_i(t) = sum over events tau < t of b_i(t - tau), for each t in eval_times.

    Exploits the bounded support: only events inside (t - S, t) are touched, so
    the cost is proportional to the number of (evaluation point, event) pairs in
    the window, times num_basis.
    """
    ev = np.asarray(event_times, dtype=np.float64)
    ts = np.asarray(eval_times, dtype=np.float64)
    out = np.zeros((ts.size, basis.num_basis))
    if ev.size == 0 or ts.size == 0:
        return out
    if np.any(np.diff(ev) < 0):
        ev = np.sort(ev)
    starts = np.searchsorted(ev, ts - basis.support, side="left")
    ends = np.searchsorted(ev, ts, side="left")
    counts = ends - starts
    total = int(counts.sum())
    if total == 0:
        return out
    row_idx = np.repeat(np.arange(ts.size), counts)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    ev_idx = np.arange(total) - np.repeat(offsets, counts) + np.repeat(starts, counts)
    vals = basis.evaluate(ts[row_idx] - ev[ev_idx])
    nonzero = counts > 0
    out[nonzero] = np.add.reduceat(vals, offsets[nonzero], axis=0)
    return out


@dataclass(frozen=True)
class DesignMatrix:
    """Quadrature and event rows of one penalized-likelihood design.

    Columns are organized in named blocks: "intercept", one "first:<mark>" block
    per conditioning mark, "pair:<m1>:<m2>" tensor blocks at order 2, and a
    final first-order "test:<mark>" block when a tested mark is present.
    """

    quad_x: np.ndarray
    quad_w: np.ndarray
    event_x: np.ndarray
    blocks: tuple[tuple[str, int, int], ...]
    basis: SplineBasis
    delta: float
    window: tuple[float, float]
    target: int
    order: int
    test_mark: int | None
    conditioning: tuple[int, ...]

    @property
    def p(self) -> int:
        return self.quad_x.shape[1]

    @property
    def n_events(self) -> int:
        return self.event_x.shape[0]

    def block_slice(self, name: str) -> slice:
        for bname, start, stop in self.blocks:
            if bname == name:
                return slice(start, stop)
        raise KeyError(f"no block named {name!r}; have {[b[0] for b in self.blocks]}")

    def block_names(self) -> list[str]:
        return [b[0] for b in self.blocks]

    def test_block_name(self) -> str:
        if self.test_mark is None:
            raise KeyError("design has no test block")
        return f"test:{self.test_mark}"

    def column_names(self) -> list[str]:
        names: list[str] = []
        for bname, start, stop in self.blocks:
            width = stop - start
            if width == 1:
                names.append(bname)
            else:
                names.extend(f"{bname}[{i}]" for i in range(width))
        return names


@dataclass(frozen=True)
class PenaltyMatrix:
    """Symmetric PSD roughness penalty aligned with a design's column blocks."""

    matrix: np.ndarray
    blocks: tuple[tuple[str, int, int], ...]


class DesignBuilder:
    """Caches first-order feature streams for one (sequence, basis, grid) triple.

    Grid features per mark and event-row features per (target, source) pair are
    shared across designs, which is what makes discovery sweeps affordable: the
    second-order columns are plain products of the cached streams.
    """

    def __init__(self, seq: MarkedEventSequence, basis: SplineBasis, delta: float):
        if not (np.isfinite(delta) and delta > 0):
            raise ValueError(f"delta must be positive, got {delta!r}")
        if delta > basis.support / 4.0:
            raise GridTooCoarseError(
                f"delta = {delta} too coarse for support {basis.support}; "
                "need delta <= support / 4"
            )
        self.seq = seq
        self.basis = basis
        self.delta = float(delta)
        t0, t1 = seq.window
        n_grid = int(np.ceil((t1 - t0) / self.delta - 1e-12))
        self.grid = t0 + self.delta * np.arange(n_grid)
        weights = np.full(n_grid, self.delta)
        weights[-1] = t1 - self.grid[-1]
        self.weights = weights
        self._times = [seq.times_of(m) for m in range(seq.d)]
        self._grid_feat: dict[int, np.ndarray] = {}
        self._event_feat: dict[tuple[int, int], np.ndarray] = {}

    def event_times(self, mark: int) -> np.ndarray:
        return self._times[mark]

    def grid_features(self, mark: int) -> np.ndarray:
        if mark not in self._grid_feat:
            self._grid_feat[mark] = first_order_features(
                self.basis, self._times[mark], self.grid
            )
        return self._grid_feat[mark]

    def event_features(self, target: int, source: int) -> np.ndarray:
        key = (target, source)
        if key not in self._event_feat:
            self._event_feat[key] = first_order_features(
                self.basis, self._times[source], self._times[target]
            )
        return self._event_feat[key]


def build_design(
    seq: MarkedEventSequence,
    basis: SplineBasis,
    target: int,
    conditioning=(),
    *,
    order: int = 2,
    test_mark: int | None = None,
    delta: float = 0.1,
    include_target_history: bool = True,
    builder: DesignBuilder | None = None,
) -> DesignMatrix:
    """Design matrix for the penalized intensity fit of one target mark.

    Rows are the left-point quadrature grid over the observation window plus one
    row per target event (features taken as strict left limits, so an event does
    not feed its own row).  The tested mark, when given, always enters through a
    first-order block only, regardless of the expansion order.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    marks = set(int(m) for m in conditioning)
    for m in marks | {int(target)}:
        if not 0 <= m < seq.d:
            raise MarkOutOfRangeError(f"mark {m} outside 0..{seq.d - 1}")
    if test_mark is not None:
        test_mark = int(test_mark)
        if not 0 <= test_mark < seq.d:
            raise MarkOutOfRangeError(f"mark {test_mark} outside 0..{seq.d - 1}")
        if test_mark == target:
            raise ValueError("test mark must differ from the target mark")
        if test_mark in marks:
            raise ValueError("test mark must not appear in the conditioning set")
    if include_target_history:
        marks.add(int(target))
    effective = tuple(sorted(marks))
    if builder is None:
        builder = DesignBuilder(seq, basis, delta)
    else:
        if builder.seq is not seq or builder.basis != basis or builder.delta != float(delta):
            raise ValueError("builder was created for different data or parameters")

    n_grid = builder.grid.size
    n_events = builder.event_times(target).size
    grid_cols: list[np.ndarray] = [np.ones((n_grid, 1))]
    event_cols: list[np.ndarray] = [np.ones((n_events, 1))]
    blocks: list[tuple[str, int, int]] = [("intercept", 0, 1)]
    pos = 1

    def push(name: str, g: np.ndarray, e: np.ndarray) -> None:
        nonlocal pos
        grid_cols.append(g)
        event_cols.append(e)
        blocks.append((name, pos, pos + g.shape[1]))
        pos += g.shape[1]

    for m in effective:
        push(f"first:{m}", builder.grid_features(m), builder.event_features(target, m))
    if order == 2:
        for i, m1 in enumerate(effective):
            for m2 in effective[i:]:
                tensor = TensorBasis(marginal=basis, symmetric=m1 == m2)
                if m1 == m2:
                    g = tensor.features(builder.grid_features(m1))
                    e = tensor.features(builder.event_features(target, m1))
                else:
                    g = tensor.features(builder.grid_features(m1), builder.grid_features(m2))
                    e = tensor.features(
                        builder.event_features(target, m1),
                        builder.event_features(target, m2),
                    )
                push(f"pair:{m1}:{m2}", g, e)
    if test_mark is not None:
        push(
            f"test:{test_mark}",
            builder.grid_features(test_mark),
            builder.event_features(target, test_mark),
        )

    return DesignMatrix(
        quad_x=np.hstack(grid_cols),
        quad_w=builder.weights,
        event_x=np.hstack(event_cols) if n_events else np.zeros((0, pos)),
        blocks=tuple(blocks),
        basis=basis,
        delta=float(delta),
        window=seq.window,
        target=int(target),
        order=order,
        test_mark=test_mark,
        conditioning=effective,
    )


def roughness_penalty(design: DesignMatrix) -> PenaltyMatrix:
    """Block-diagonal integrated-squared-curvature penalty for a design.

    First-order blocks (including the test block) get the univariate curvature
    Gram; tensor blocks get the Kronecker sum Omega1 (x) M + M (x) Omega1,
    folded through the symmetrization map for same-mark pairs.  The intercept
    is unpenalized.
    """
    p = design.p
    out = np.zeros((p, p))
    basis = design.basis
    omega1 = basis.curvature_gram
    for name, start, stop in design.blocks:
        sl = slice(start, stop)
        if name == "intercept":
            continue
        if name.startswith("first:") or name.startswith("test:"):
            out[sl, sl] = omega1
        elif name.startswith("pair:"):
            _, m1, m2 = name.split(":")
            tensor = TensorBasis(marginal=basis, symmetric=m1 == m2)
            out[sl, sl] = tensor.penalty()
        else:  # pragma: no cover - defensive
            raise KeyError(f"unknown block kind {name!r}")
    return PenaltyMatrix(matrix=out, blocks=design.blocks)

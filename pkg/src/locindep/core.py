"""Core types for multivariate event sequences and exponential-kernel intensities.

A marked event sequence holds the jump times of a d-variate point process on a
half-open observation window [t_start, t_end).  Intensities are parameterized
through a link: eta(lambda_t^k) = beta0_k + sum_j integral g_jk(t - s) dN^j_s,
where each g_jk is a signed exponential kernel alpha * beta * exp(-beta * s).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PointProcessError",
    "EventDataError",
    "DuplicateTimeError",
    "MarkOutOfRangeError",
    "TimeOutsideWindowError",
    "NonFiniteValueError",
    "UnknownStructureError",
    "EmptyObservedSetError",
    "ExplosionError",
    "InvalidBasisError",
    "GridTooCoarseError",
    "DimensionMismatchError",
    "NoConvergenceError",
    "SingularInformationError",
    "DegenerateCovarianceError",
    "ExperimentError",
    "NonStationaryWarning",
    "NoEventRowsWarning",
    "MarkedEventSequence",
    "DirectedGraph",
    "ExponentialKernel",
    "LinkFunction",
    "IntensityModelSpec",
    "LINK_NAMES",
    "make_link",
    "validate_events",
    "kernel_eval",
    "integrated_kernel_matrix",
    "spectral_radius",
    "true_intensity",
]


class PointProcessError(Exception):
    """Base class for errors raised by this package."""


class EventDataError(PointProcessError, ValueError):
    """Invalid event data."""


class DuplicateTimeError(EventDataError):
    """Two events share an identical time stamp."""


class MarkOutOfRangeError(EventDataError):
    """A mark falls outside 0..d-1."""


class TimeOutsideWindowError(EventDataError):
    """An event time falls outside the observation window."""


class NonFiniteValueError(EventDataError):
    """A time or mark is NaN or infinite."""


class UnknownStructureError(PointProcessError, ValueError):
    """Requested benchmark structure does not exist."""


class EmptyObservedSetError(PointProcessError, ValueError):
    """Restriction to an empty set of observed marks."""


class ExplosionError(PointProcessError, RuntimeError):
    """Simulation exceeded its event-count guard."""


class InvalidBasisError(PointProcessError, ValueError):
    """Spline basis parameters are inconsistent."""


class GridTooCoarseError(PointProcessError, ValueError):
    """Quadrature step too large relative to the basis support."""


class DimensionMismatchError(PointProcessError, ValueError):
    """Array shapes do not line up."""


class NoConvergenceError(PointProcessError, RuntimeError):
    """An iterative routine hit its iteration cap."""


class SingularInformationError(PointProcessError, RuntimeError):
    """Information matrix stayed singular after jitter escalation."""


class DegenerateCovarianceError(PointProcessError, RuntimeError):
    """Covariance sub-block of a tested coefficient block is identically zero."""


class ExperimentError(PointProcessError, RuntimeError):
    """An experiment run violated its own sanity policy."""


class NonStationaryWarning(UserWarning):
    """Simulation requested for a spec without a stationarity certificate."""


class NoEventRowsWarning(UserWarning):
    """A fit was requested on a design without target events."""


def _as_scalar_or_array(x: np.ndarray, scalar_in: bool):
    return float(x) if scalar_in else x


@dataclass(frozen=True)
class MarkedEventSequence:
    """Time-sorted events of a d-variate point process on [t_start, t_end).

    Construct through :func:`validate_events`; instances are immutable and the
    arrays are marked read-only.
    """

    times: np.ndarray
    marks: np.ndarray
    window: tuple[float, float]
    d: int

    def __post_init__(self) -> None:
        times = np.ascontiguousarray(self.times, dtype=np.float64)
        marks = np.ascontiguousarray(self.marks, dtype=np.int64)
        times.flags.writeable = False
        marks.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "window", (float(self.window[0]), float(self.window[1])))

    @property
    def n(self) -> int:
        return self.times.size

    def times_of(self, mark: int) -> np.ndarray:
        """Event times of one mark (sorted, read-only view copy)."""
        return self.times[self.marks == mark]

    def counts(self) -> np.ndarray:
        """Event count per mark."""
        return np.bincount(self.marks, minlength=self.d)


def validate_events(
    times,
    marks,
    window: tuple[float, float],
    d: int,
    *,
    sort: bool = True,
) -> MarkedEventSequence:
    """Check and package raw event data.

    Times must be finite and inside [t_start, t_end); marks must be integers in
    0..d-1.  Ties in time are rejected (exact float equality, across all marks)
    because the intensity model assumes no simultaneous jumps.
    """
    times = np.asarray(times, dtype=np.float64).ravel()
    marks_arr = np.asarray(marks).ravel()
    if times.shape != marks_arr.shape:
        raise DimensionMismatchError(
            f"times has length {times.size}, marks has length {marks_arr.size}"
        )
    if not (isinstance(d, (int, np.integer)) and d >= 1):
        raise ValueError(f"d must be a positive integer, got {d!r}")
    t0, t1 = float(window[0]), float(window[1])
    if not (np.isfinite(t0) and np.isfinite(t1) and t0 < t1):
        raise ValueError(f"window must be a finite interval, got {window!r}")
    if not np.all(np.isfinite(times)):
        raise NonFiniteValueError("event times contain NaN or infinity")
    if marks_arr.size and not np.all(np.isfinite(np.asarray(marks_arr, dtype=np.float64))):
        raise NonFiniteValueError("marks contain NaN or infinity")
    marks_int = np.asarray(marks_arr, dtype=np.int64)
    if marks_arr.size and np.any(np.asarray(marks_arr, dtype=np.float64) != marks_int):
        raise MarkOutOfRangeError("marks must be integers")
    if marks_int.size and (marks_int.min() < 0 or marks_int.max() >= d):
        raise MarkOutOfRangeError(f"marks must lie in 0..{d - 1}")
    if times.size and (times.min() < t0 or times.max() >= t1):
        raise TimeOutsideWindowError(
            f"event times must lie in [{t0}, {t1}); got range "
            f"[{times.min()}, {times.max()}]"
        )
    if sort:
        order = np.argsort(times, kind="stable")
        times = times[order]
        marks_int = marks_int[order]
    elif np.any(np.diff(times) < 0):
        raise EventDataError("times are not sorted and sort=False")
    if times.size > 1 and np.any(np.diff(times) == 0.0):
        idx = int(np.flatnonzero(np.diff(times) == 0.0)[0])
        raise DuplicateTimeError(
            f"duplicate event time {times[idx]!r}; jitter the input to break ties"
        )
    return MarkedEventSequence(times=times, marks=marks_int, window=(t0, t1), d=int(d))


@dataclass(frozen=True)
class DirectedGraph:
    """Directed graph over marks 0..d-1, self-loops allowed."""

    d: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        edges = frozenset((int(j), int(k)) for j, k in self.edges)
        for j, k in edges:
            if not (0 <= j < self.d and 0 <= k < self.d):
                raise ValueError(f"edge {(j, k)} outside 0..{self.d - 1}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def complete(cls, d: int, *, self_loops: bool = True) -> "DirectedGraph":
        edges = {(j, k) for j in range(d) for k in range(d) if self_loops or j != k}
        return cls(d=d, edges=frozenset(edges))

    @classmethod
    def from_edges(cls, d: int, edges) -> "DirectedGraph":
        return cls(d=d, edges=frozenset((int(j), int(k)) for j, k in edges))

    def has_edge(self, j: int, k: int) -> bool:
        return (j, k) in self.edges

    def parents(self, k: int) -> tuple[int, ...]:
        return tuple(sorted(j for j, kk in self.edges if kk == k))

    def without_edge(self, j: int, k: int) -> "DirectedGraph":
        return DirectedGraph(d=self.d, edges=self.edges - {(j, k)})

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def n_cross_edges(self) -> int:
        return sum(1 for j, k in self.edges if j != k)


@dataclass(frozen=True)
class ExponentialKernel:
    """Signed exponential kernel g(s) = alpha * beta * exp(-beta * s), s >= 0.

    alpha is the signed total mass (integral of g over [0, inf)), beta > 0 the
    decay rate.
    """

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be positive and finite")

    def evaluate(self, s):
        """Kernel value at lag s; zero for s < 0 (causality)."""
        arr = np.asarray(s, dtype=np.float64)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        out = np.where(
            arr >= 0.0,
            self.alpha * self.beta * np.exp(-self.beta * np.clip(arr, 0.0, None)),
            0.0,
        )
        return _as_scalar_or_array(out[0] if scalar else out, scalar)

    def integral(self) -> float:
        return float(self.alpha)


def kernel_eval(kernel: ExponentialKernel, s):
    """Evaluate a kernel at one or more lags."""
    return kernel.evaluate(s)


LINK_NAMES = ("identity", "log", "piecewise")


@dataclass(frozen=True)
class LinkFunction:
    """Link eta relating intensity to the linear predictor: eta(lambda) = x'beta.

    The inverse maps predictors to intensities.  "identity" leaves the predictor
    untouched (intensities must be kept nonnegative by the caller), "log" gives
    the exponential intensity, and "piecewise" is log-linear: the inverse is
    exp(u - 1) below u = 1 and u itself above, which is C^1 at the junction and
    keeps intensities strictly positive.
    """

    name: str

    def __post_init__(self) -> None:
        if self.name not in LINK_NAMES:
            raise ValueError(f"unknown link {self.name!r}; expected one of {LINK_NAMES}")

    def eval(self, lam):
        """eta(lambda): map an intensity to its predictor."""
        arr = np.asarray(lam, dtype=np.float64)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if self.name == "identity":
            out = arr.copy()
        elif self.name == "log":
            out = np.log(arr)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(arr >= 1.0, arr, np.log(np.clip(arr, 1e-300, None)) + 1.0)
        return _as_scalar_or_array(out[0] if scalar else out, scalar)

    def inverse(self, u):
        """eta^{-1}(u): map a predictor to an intensity."""
        arr = np.asarray(u, dtype=np.float64)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if self.name == "identity":
            out = arr.copy()
        elif self.name == "log":
            with np.errstate(over="ignore"):
                out = np.exp(arr)
        else:
            out = np.where(arr >= 1.0, arr, np.exp(np.minimum(arr, 1.0) - 1.0))
        return _as_scalar_or_array(out[0] if scalar else out, scalar)

    def inverse_deriv(self, u):
        """First derivative of eta^{-1}."""
        arr = np.asarray(u, dtype=np.float64)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if self.name == "identity":
            out = np.ones_like(arr)
        elif self.name == "log":
            with np.errstate(over="ignore"):
                out = np.exp(arr)
        else:
            out = np.where(arr >= 1.0, 1.0, np.exp(np.minimum(arr, 1.0) - 1.0))
        return _as_scalar_or_array(out[0] if scalar else out, scalar)

    def inverse_deriv2(self, u):
        """Second derivative of eta^{-1} (one-sided at the piecewise junction)."""
        arr = np.asarray(u, dtype=np.float64)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if self.name == "identity":
            out = np.zeros_like(arr)
        elif self.name == "log":
            with np.errstate(over="ignore"):
                out = np.exp(arr)
        else:
            out = np.where(arr >= 1.0, 0.0, np.exp(np.minimum(arr, 1.0) - 1.0))
        return _as_scalar_or_array(out[0] if scalar else out, scalar)


def make_link(name: str) -> LinkFunction:
    """Construct a link function by name ("identity", "log", "piecewise")."""
    return LinkFunction(name=name)


@dataclass(frozen=True)
class IntensityModelSpec:
    """Generative model: baselines, kernel table and link.

    kernels maps (source mark j, target mark k) to the kernel carrying the
    influence of j-events on the intensity of mark k.  Absent entries mean a
    structural zero; the induced graph has an edge j -> k exactly when a kernel
    is present.
    """

    d: int
    baseline: np.ndarray
    kernels: dict[tuple[int, int], ExponentialKernel] = field(default_factory=dict)
    link: LinkFunction = field(default_factory=lambda: make_link("piecewise"))

    def __post_init__(self) -> None:
        baseline = np.ascontiguousarray(self.baseline, dtype=np.float64).ravel()
        if baseline.size != self.d:
            raise DimensionMismatchError(
                f"baseline has length {baseline.size}, expected d = {self.d}"
            )
        if not np.all(np.isfinite(baseline)):
            raise NonFiniteValueError("baselines must be finite")
        baseline.flags.writeable = False
        object.__setattr__(self, "baseline", baseline)
        for (j, k), kern in self.kernels.items():
            if not (0 <= j < self.d and 0 <= k < self.d):
                raise ValueError(f"kernel index {(j, k)} outside 0..{self.d - 1}")
            if not isinstance(kern, ExponentialKernel):
                raise TypeError(f"kernel for {(j, k)} is not an ExponentialKernel")

    def kernel(self, j: int, k: int) -> ExponentialKernel | None:
        return self.kernels.get((j, k))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(alpha, beta, present) as dense (d, d) arrays, absent beta set to 1."""
        alpha = np.zeros((self.d, self.d))
        beta = np.ones((self.d, self.d))
        present = np.zeros((self.d, self.d), dtype=bool)
        for (j, k), kern in self.kernels.items():
            alpha[j, k] = kern.alpha
            beta[j, k] = kern.beta
            present[j, k] = True
        return alpha, beta, present

    def graph(self) -> DirectedGraph:
        """Structural graph: edge j -> k iff a kernel is present."""
        return DirectedGraph.from_edges(self.d, self.kernels.keys())


def integrated_kernel_matrix(spec: IntensityModelSpec) -> np.ndarray:
    """Matrix of integrated kernels; entry (j, k) is alpha_jk, zero if absent."""
    alpha, _, present = spec.arrays()
    return np.where(present, alpha, 0.0)


def spectral_radius(matrix) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteValueError("matrix entries must be finite")
    if m.shape[0] == 0:
        return 0.0
    try:
        eigs = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK cap
        raise NoConvergenceError(f"eigenvalue iteration failed: {exc}") from exc
    return float(np.max(np.abs(eigs)))


def true_intensity(spec: IntensityModelSpec, seq: MarkedEventSequence, k: int, t: float) -> float:
    """Generative intensity of mark k at time t (strict left limit).

    Events at exactly t do not contribute.  For the identity link the returned
    intensity is clamped at zero; the other links are positive by construction.
    """
    if not 0 <= k < spec.d:
        raise MarkOutOfRangeError(f"mark {k} outside 0..{spec.d - 1}")
    if seq.d != spec.d:
        raise DimensionMismatchError(f"sequence has d = {seq.d}, spec has d = {spec.d}")
    pred = float(spec.baseline[k])
    for (j, kk), kern in spec.kernels.items():
        if kk != k:
            continue
        taus = seq.times_of(j)
        taus = taus[taus < t]
        if taus.size:
            pred += float(np.sum(kern.evaluate(t - taus)))
    lam = float(spec.link.inverse(pred))
    if spec.link.name == "identity":
        lam = max(lam, 0.0)
    return lam

"""Seeded experiment drivers: rejection-rate tables across the benchmark
structures, graph-recovery distances on random graphs, and a calibration
suite backing the asymptotic approximations.

Every repetition derives its own integer seed from the root seed and its
(stream, repetition) coordinates, so results are independent of execution
order and of the worker-pool size, and aggregation is a deterministic
reduction in repetition order.
"""

from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from locindep.basis import build_design, make_bspline_basis, roughness_penalty
from locindep.core import (
    ExperimentError,
    ExponentialKernel,
    IntensityModelSpec,
    PointProcessError,
    make_link,
)
from locindep.discovery import CAConfig, learn_graph_ca, shd
from locindep.estimation import FitConfig, fit_mle, penalized_loglik, penalized_score
from locindep.litest import LITestConfig, test_local_independence
from locindep.simulate import (
    STRUCTURE_NAMES,
    RandomGraphConfig,
    SimulationConfig,
    build_benchmark_structure,
    rescaled_gaps,
    restrict_to_observed,
    sample_random_graph,
    simulate_hawkes,
)


def child_seed(root: int, *key: int) -> int:
    """Deterministic per-repetition seed from a root seed and stream coordinates."""
    ss = np.random.SeedSequence(root, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _run_tasks(fn, tasks, threads: int) -> list:
    if threads <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def binomial_se(fraction: float, n: int) -> float:
    return math.sqrt(fraction * (1.0 - fraction) / n) if n else float("nan")


def uniform_ks_distance(values) -> float:
    """KS distance of a sample from the uniform distribution on [0, 1]."""
    u = np.sort(np.asarray(values, dtype=float))
    n = u.size
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - u), np.max(u - lo)))


# --- level and power across the benchmark structures -------------------------------

@dataclass(frozen=True)
class LevelPowerConfig:
    structures: tuple[str, ...] = STRUCTURE_NAMES
    repetitions: int = 200
    horizon: float = 2000.0
    burn_in: float = 50.0
    seed: int = 0
    orders: tuple[int, ...] = (1, 2)
    alpha: float = 0.05
    test: LITestConfig = field(default_factory=LITestConfig)
    threads: int = 1
    max_failure_rate: float = 0.02

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.orders or any(o not in (1, 2) for o in self.orders):
            raise ValueError(f"orders must be a non-empty subset of (1, 2), got {self.orders!r}")
        for name in self.structures:
            build_benchmark_structure(name)


def _level_power_rep(task):
    name, rep, seed, horizon, burn_in, orders, test_cfg = task
    out = {"structure": name, "rep": rep, "seed": seed, "p_values": {}, "error": None}
    try:
        s = build_benchmark_structure(name)
        seq_full = simulate_hawkes(s.spec, SimulationConfig(horizon, burn_in, seed))
        seq, _ = restrict_to_observed(seq_full, s.observed())
        j, k, C = s.observed_hypothesis()
        builder = None
        for order in orders:
            cfg = dataclasses.replace(test_cfg, order=order)
            if builder is None:
                builder = cfg.make_builder(seq)
            res = test_local_independence(seq, j, k, C, cfg, builder=builder)
            out["p_values"][order] = res.p_value
    except (PointProcessError, np.linalg.LinAlgError) as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass(frozen=True)
class RejectionCell:
    structure: str
    order: int
    repetitions: int
    failures: int
    rejections: int
    fraction: float
    se: float


@dataclass(frozen=True)
class LevelPowerResult:
    config: LevelPowerConfig
    rows: tuple[dict, ...]
    cells: tuple[RejectionCell, ...]
    wall_time: float

    def cell(self, structure: str, order: int) -> RejectionCell:
        for c in self.cells:
            if c.structure == structure and c.order == order:
                return c
        raise KeyError(f"no cell for {structure!r} order {order}")

    def p_values(self, structure: str, order: int) -> list[float]:
        return [
            row["p_values"][order]
            for row in self.rows
            if row["structure"] == structure and row["error"] is None
        ]

    def to_csv_text(self) -> str:
        lines = ["structure,order,repetitions,failures,rejections,fraction,se"]
        for c in self.cells:
            lines.append(
                f"{c.structure},{c.order},{c.repetitions},{c.failures},"
                f"{c.rejections},{_fmt(c.fraction)},{_fmt(c.se)}"
            )
        return "\n".join(lines) + "\n"


def run_level_power(config: LevelPowerConfig | None = None) -> LevelPowerResult:
    """Rejection fractions of the source -> target test per structure and order.

    Repetitions are paired across orders: both orders see the same realization
    and share its feature cache. A repetition that fails at either order is
    excluded from both denominators and counted; failure rates above the
    configured bound abort the run.
    """
    config = config or LevelPowerConfig()
    start = time.perf_counter()
    tasks = [
        (
            name,
            rep,
            child_seed(config.seed, si, rep),
            config.horizon,
            config.burn_in,
            tuple(config.orders),
            config.test,
        )
        for si, name in enumerate(config.structures)
        for rep in range(config.repetitions)
    ]
    rows = _run_tasks(_level_power_rep, tasks, config.threads)
    cells = []
    for name in config.structures:
        sub = [r for r in rows if r["structure"] == name]
        failed = [r for r in sub if r["error"] is not None]
        if len(failed) > config.max_failure_rate * len(sub):
            raise ExperimentError(
                f"{len(failed)}/{len(sub)} repetitions failed for {name}; "
                f"first error: {failed[0]['error']}"
            )
        ok = [r for r in sub if r["error"] is None]
        for order in config.orders:
            ps = [r["p_values"][order] for r in ok]
            rejections = sum(p < config.alpha for p in ps)
            fraction = rejections / len(ps) if ps else float("nan")
            cells.append(
                RejectionCell(
                    structure=name,
                    order=order,
                    repetitions=len(sub),
                    failures=len(failed),
                    rejections=rejections,
                    fraction=fraction,
                    se=binomial_se(fraction, len(ps)),
                )
            )
    return LevelPowerResult(
        config=config,
        rows=tuple(rows),
        cells=tuple(cells),
        wall_time=time.perf_counter() - start,
    )


# --- graph recovery on random graphs --------------------------------------------------

@dataclass(frozen=True)
class ShdConfig:
    dims: tuple[int, ...] = (3, 5, 7)
    repetitions: int = 20
    horizon: float = 2000.0
    burn_in: float = 50.0
    seed: int = 0
    orders: tuple[int, ...] = (1, 2)
    alpha: float = 0.05
    edge_prob: float = 0.2
    test: LITestConfig = field(default_factory=LITestConfig)
    threads: int = 1
    max_failure_rate: float = 0.02

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if any(d < 2 for d in self.dims):
            raise ValueError(f"dims must all be >= 2, got {self.dims!r}")
        if not self.orders or any(o not in (1, 2) for o in self.orders):
            raise ValueError(f"orders must be a non-empty subset of (1, 2), got {self.orders!r}")


def _shd_rep(task):
    d, rep, seed, horizon, burn_in, orders, edge_prob, alpha, test_cfg = task
    out = {"d": d, "rep": rep, "seed": seed, "shd": {}, "true_edges": None, "error": None}
    try:
        truth, spec = sample_random_graph(
            RandomGraphConfig(d=d, edge_prob=edge_prob, seed=child_seed(seed, 0))
        )
        seq = simulate_hawkes(spec, SimulationConfig(horizon, burn_in, child_seed(seed, 1)))
        out["true_edges"] = truth.n_cross_edges()
        for order in orders:
            cfg = CAConfig(test=dataclasses.replace(test_cfg, order=order), alpha=alpha)
            graph, _ = learn_graph_ca(seq, cfg)
            out["shd"][order] = shd(graph, truth)
    except (PointProcessError, np.linalg.LinAlgError) as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass(frozen=True)
class ShdCell:
    d: int
    order: int
    repetitions: int
    failures: int
    median: float
    q25: float
    q75: float


@dataclass(frozen=True)
class ShdResult:
    config: ShdConfig
    rows: tuple[dict, ...]
    cells: tuple[ShdCell, ...]
    wall_time: float

    def cell(self, d: int, order: int) -> ShdCell:
        for c in self.cells:
            if c.d == d and c.order == order:
                return c
        raise KeyError(f"no cell for d={d} order {order}")

    def distances(self, d: int, order: int) -> list[int]:
        return [
            row["shd"][order]
            for row in self.rows
            if row["d"] == d and row["error"] is None
        ]

    def to_csv_text(self) -> str:
        lines = ["d,order,repetitions,failures,median,q25,q75"]
        for c in self.cells:
            lines.append(
                f"{c.d},{c.order},{c.repetitions},{c.failures},"
                f"{_fmt(c.median)},{_fmt(c.q25)},{_fmt(c.q75)}"
            )
        return "\n".join(lines) + "\n"


def run_shd_experiment(config: ShdConfig | None = None) -> ShdResult:
    """Distance between learned and true graphs on random specs, per dimension
    and order, with both orders learning from the same realization."""
    config = config or ShdConfig()
    start = time.perf_counter()
    tasks = [
        (
            d,
            rep,
            child_seed(config.seed, di, rep),
            config.horizon,
            config.burn_in,
            tuple(config.orders),
            config.edge_prob,
            config.alpha,
            config.test,
        )
        for di, d in enumerate(config.dims)
        for rep in range(config.repetitions)
    ]
    rows = _run_tasks(_shd_rep, tasks, config.threads)
    cells = []
    for d in config.dims:
        sub = [r for r in rows if r["d"] == d]
        failed = [r for r in sub if r["error"] is not None]
        if len(failed) > config.max_failure_rate * len(sub):
            raise ExperimentError(
                f"{len(failed)}/{len(sub)} repetitions failed for d={d}; "
                f"first error: {failed[0]['error']}"
            )
        ok = [r for r in sub if r["error"] is None]
        for order in config.orders:
            dist = np.array([r["shd"][order] for r in ok], dtype=float)
            cells.append(
                ShdCell(
                    d=d,
                    order=order,
                    repetitions=len(sub),
                    failures=len(failed),
                    median=float(np.median(dist)),
                    q25=float(np.quantile(dist, 0.25)),
                    q75=float(np.quantile(dist, 0.75)),
                )
            )
    return ShdResult(
        config=config,
        rows=tuple(rows),
        cells=tuple(cells),
        wall_time=time.perf_counter() - start,
    )


# --- calibration ------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationConfig:
    seed: int = 0
    null_reps: int = 500
    null_horizon: float = 400.0
    null_ks_bound: float = 0.08
    rescaling_seeds: int = 100
    rescaling_horizon: float = 300.0
    count_seeds: int = 200
    count_horizon: float = 400.0
    mle_seeds: int = 100
    mle_horizon: float = 500.0
    orders: tuple[int, ...] = (1, 2)
    test: LITestConfig = field(default_factory=LITestConfig)
    threads: int = 1


@dataclass(frozen=True)
class CalibrationCheck:
    name: str
    statistic: float
    threshold: float
    comparison: str  # "<" or ">"
    passed: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class CalibrationResult:
    config: CalibrationConfig
    checks: tuple[CalibrationCheck, ...]
    wall_time: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CalibrationCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(f"no check named {name!r}")

    def to_csv_text(self) -> str:
        lines = ["check,statistic,threshold,comparison,passed"]
        for c in self.checks:
            lines.append(
                f"{c.name},{_fmt(c.statistic)},{_fmt(c.threshold)},"
                f"{c.comparison},{int(c.passed)}"
            )
        return "\n".join(lines) + "\n"


def _null_pair_rep(task):
    seed, horizon, orders, test_cfg = task
    spec = IntensityModelSpec(d=2, baseline=np.array([0.3, 0.3]), link=make_link("piecewise"))
    out = {"p_values": {}, "error": None}
    try:
        seq = simulate_hawkes(spec, SimulationConfig(horizon, 0.0, seed))
        builder = None
        for order in orders:
            cfg = dataclasses.replace(test_cfg, order=order)
            if builder is None:
                builder = cfg.make_builder(seq)
            res = test_local_independence(seq, 0, 1, (), cfg, builder=builder)
            out["p_values"][order] = res.p_value
    except (PointProcessError, np.linalg.LinAlgError) as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def _check(name, statistic, threshold, comparison) -> CalibrationCheck:
    passed = statistic < threshold if comparison == "<" else statistic > threshold
    return CalibrationCheck(
        name=name,
        statistic=float(statistic),
        threshold=float(threshold),
        comparison=comparison,
        passed=bool(passed),
    )


def _gradient_fd_max_error(seed: int) -> float:
    spec = IntensityModelSpec(
        d=2,
        baseline=np.array([0.3, 0.3]),
        kernels={(0, 1): ExponentialKernel(alpha=0.4, beta=0.8)},
        link=make_link("piecewise"),
    )
    seq = simulate_hawkes(spec, SimulationConfig(60.0, 10.0, seed))
    basis = make_bspline_basis(2.0, 4, degree=2)
    design = build_design(seq, basis, target=1, conditioning=(0,), order=2, delta=0.25)
    penalty = roughness_penalty(design)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for link_name in ("identity", "log", "piecewise"):
        link = make_link(link_name)
        for _ in range(20):
            beta = 0.05 * rng.standard_normal(design.p)
            beta[design.block_slice("intercept")] = 0.4
            if link_name == "identity":
                u = design.event_x @ beta
                if u.size and u.min() < 0.05:
                    beta[design.block_slice("intercept")] += 0.05 - u.min()
            ana = penalized_score(beta, design, link, penalty, 1.0)
            num = np.zeros_like(beta)
            h = 1e-6
            for i in range(beta.size):
                e = np.zeros_like(beta)
                e[i] = h
                num[i] = (
                    penalized_loglik(beta + e, design, link, penalty, 1.0)
                    - penalized_loglik(beta - e, design, link, penalty, 1.0)
                ) / (2.0 * h)
            err = np.max(np.abs(ana - num) / np.maximum(np.abs(num), 1.0))
            worst = max(worst, float(err))
    return worst


def run_calibration_suite(config: CalibrationConfig | None = None) -> CalibrationResult:
    """Checks that back the asymptotics: null p-value uniformity, simulator
    time rescaling, simulator count law, analytic derivatives, and the
    baseline-rate estimator."""
    config = config or CalibrationConfig()
    start = time.perf_counter()
    checks: list[CalibrationCheck] = []

    # null p-values approximately uniform at both orders
    tasks = [
        (child_seed(config.seed, 0, rep), config.null_horizon, tuple(config.orders), config.test)
        for rep in range(config.null_reps)
    ]
    rows = _run_tasks(_null_pair_rep, tasks, config.threads)
    failed = [r for r in rows if r["error"] is not None]
    if len(failed) > 0.02 * len(rows):
        raise ExperimentError(f"{len(failed)}/{len(rows)} null repetitions failed")
    ok = [r for r in rows if r["error"] is None]
    for order in config.orders:
        ps = [r["p_values"][order] for r in ok]
        checks.append(
            _check(f"null-pvalue-ks-order-{order}", uniform_ks_distance(ps), config.null_ks_bound, "<")
        )

    # time rescaling of a self-exciting simulation
    self_exc = IntensityModelSpec(
        d=1,
        baseline=np.array([0.25]),
        kernels={(0, 0): ExponentialKernel(alpha=0.4, beta=0.8)},
        link=make_link("piecewise"),
    )
    gaps = []
    for rep in range(config.rescaling_seeds):
        seq = simulate_hawkes(
            self_exc,
            SimulationConfig(config.rescaling_horizon, 30.0, child_seed(config.seed, 1, rep)),
        )
        gaps.append(rescaled_gaps(self_exc, seq, 0))
    gaps = np.concatenate(gaps)
    checks.append(
        _check("time-rescaling-exp1-ks-pvalue", stats.kstest(gaps, "expon").pvalue, 0.01, ">")
    )

    # homogeneous Poisson counts within 4 sigma
    poisson = IntensityModelSpec(d=1, baseline=np.array([0.25]), link=make_link("identity"))
    mean = 0.25 * config.count_horizon
    hits = 0
    for rep in range(config.count_seeds):
        seq = simulate_hawkes(
            poisson, SimulationConfig(config.count_horizon, 0.0, child_seed(config.seed, 2, rep))
        )
        hits += abs(seq.n - mean) <= 4.0 * math.sqrt(mean)
    checks.append(_check("poisson-count-4sigma-fraction", hits / config.count_seeds, 0.99, ">"))

    # analytic score vs finite differences
    checks.append(_check("gradient-fd-max-rel-error", _gradient_fd_max_error(config.seed), 1e-5, "<"))

    # baseline-only rate estimator within 3 asymptotic SEs
    se3 = 3.0 * math.sqrt(0.25 / config.mle_horizon)
    hits = 0
    for rep in range(config.mle_seeds):
        seq = simulate_hawkes(
            poisson, SimulationConfig(config.mle_horizon, 0.0, child_seed(config.seed, 3, rep))
        )
        basis = make_bspline_basis(config.test.support, config.test.num_basis, config.test.degree)
        design = build_design(
            seq, basis, target=0, order=1, include_target_history=False, delta=config.test.delta
        )
        fit = fit_mle(
            design, make_link("identity"), roughness_penalty(design), FitConfig(kappa0=0.0)
        )
        hits += abs(float(fit.coef("intercept")[0]) - 0.25) < se3
    checks.append(_check("poisson-mle-3se-fraction", hits / config.mle_seeds, 0.95, ">"))

    return CalibrationResult(
        config=config,
        checks=tuple(checks),
        wall_time=time.perf_counter() - start,
    )

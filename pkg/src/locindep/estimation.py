"""Penalized maximum likelihood for spline intensity models, sandwich
covariance, and the grid-evaluated Wald test.

The objective is

    l(beta) = sum_events log phi(x'beta) - sum_quad w phi(x'beta)
              - kappa0 * beta' Omega beta

with phi the link inverse. For the identity, log and piecewise links the
negated Hessian decomposes into nonnegatively weighted Gram matrices plus
2*kappa0*Omega, so the objective is concave and Newton ascent with step
halving converges globally.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from locindep.basis import DesignMatrix, PenaltyMatrix
from locindep.core import (
    DegenerateCovarianceError,
    DimensionMismatchError,
    LinkFunction,
    NoEventRowsWarning,
    SingularInformationError,
)

# floor applied to the fitted intensity before it divides the K-hat integrand
INTENSITY_FLOOR = 1e-300

# relative eigenvalue cutoff below which the Wald quadratic form drops a
# direction and reduces the degrees of freedom
RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class FitConfig:
    """Knobs for the Newton solver and the roughness penalty weight."""

    kappa0: float = 1.0
    max_iter: int = 100
    grad_tol: float = 1e-8
    max_halvings: int = 30
    ridge: float = 1e-8

    def __post_init__(self) -> None:
        if not (np.isfinite(self.kappa0) and self.kappa0 >= 0):
            raise ValueError(f"kappa0 must be >= 0, got {self.kappa0!r}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter!r}")
        if not (np.isfinite(self.grad_tol) and self.grad_tol > 0):
            raise ValueError(f"grad_tol must be positive, got {self.grad_tol!r}")
        if self.max_halvings < 1:
            raise ValueError(f"max_halvings must be >= 1, got {self.max_halvings!r}")
        if not (np.isfinite(self.ridge) and self.ridge > 0):
            raise ValueError(f"ridge must be positive, got {self.ridge!r}")


def _check_shapes(beta: np.ndarray, design: DesignMatrix, penalty: PenaltyMatrix) -> None:
    if beta.shape != (design.p,):
        raise DimensionMismatchError(
            f"beta has shape {beta.shape}, design has {design.p} columns"
        )
    if penalty.matrix.shape != (design.p, design.p):
        raise DimensionMismatchError(
            f"penalty is {penalty.matrix.shape}, design has {design.p} columns"
        )


def penalized_loglik(
    beta,
    design: DesignMatrix,
    link: LinkFunction,
    penalty: PenaltyMatrix,
    kappa0: float,
) -> float:
    """Penalized log-likelihood; -inf whenever an event-row intensity is <= 0."""
    beta = np.asarray(beta, dtype=float)
    _check_shapes(beta, design, penalty)
    pen = kappa0 * float(beta @ (penalty.matrix @ beta))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        comp = float(design.quad_w @ link.inverse(design.quad_x @ beta))
        events = 0.0
        if design.n_events:
            phi = link.inverse(design.event_x @ beta)
            if np.any(phi <= 0.0):
                return -np.inf
            events = float(np.log(phi).sum())
        value = events - comp - pen
    return value if np.isfinite(value) else -np.inf


def penalized_score(
    beta,
    design: DesignMatrix,
    link: LinkFunction,
    penalty: PenaltyMatrix,
    kappa0: float,
) -> np.ndarray:
    """Gradient of the penalized log-likelihood."""
    beta = np.asarray(beta, dtype=float)
    _check_shapes(beta, design, penalty)
    uq = design.quad_x @ beta
    g = -design.quad_x.T @ (design.quad_w * link.inverse_deriv(uq))
    if design.n_events:
        ue = design.event_x @ beta
        g += design.event_x.T @ (link.inverse_deriv(ue) / link.inverse(ue))
    return g - 2.0 * kappa0 * (penalty.matrix @ beta)


def penalized_hessian(
    beta,
    design: DesignMatrix,
    link: LinkFunction,
    penalty: PenaltyMatrix,
    kappa0: float,
) -> np.ndarray:
    """Hessian of the penalized log-likelihood (negative semidefinite)."""
    beta = np.asarray(beta, dtype=float)
    _check_shapes(beta, design, penalty)
    uq = design.quad_x @ beta
    cq = design.quad_w * link.inverse_deriv2(uq)
    H = -(design.quad_x * cq[:, None]).T @ design.quad_x
    if design.n_events:
        ue = design.event_x @ beta
        phi = link.inverse(ue)
        d1 = link.inverse_deriv(ue)
        d2 = link.inverse_deriv2(ue)
        ce = (d2 * phi - d1 * d1) / (phi * phi)
        H += (design.event_x * ce[:, None]).T @ design.event_x
    H -= 2.0 * kappa0 * penalty.matrix
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class FittedIntensityModel:
    """Newton solution with sandwich covariance.

    J_hat = K_hat + 2*kappa0*Omega by construction (curvature of the
    penalized objective), and Sigma is the congruence J^{-1} K J^{-1},
    hence positive semidefinite whenever K is. ``mu`` is the first-order
    penalization shrinkage diagnostic (I - 2*kappa0*J^{-1}Omega) beta;
    under a zero null block it vanishes there, which is why the Wald
    statistic needs no centering correction.
    """

    beta: np.ndarray
    design: DesignMatrix
    penalty: PenaltyMatrix
    link: LinkFunction
    kappa0: float
    loglik: float
    K_hat: np.ndarray
    J_hat: np.ndarray
    Sigma: np.ndarray
    mu: np.ndarray
    converged: bool
    n_iter: int
    grad_norm: float
    message: str
    value_path: tuple[float, ...]

    def coef(self, block: str) -> np.ndarray:
        return self.beta[self.design.block_slice(block)].copy()

    def block_covariance(self, block: str) -> np.ndarray:
        sl = self.design.block_slice(block)
        return self.Sigma[sl, sl].copy()

    def report(self) -> dict:
        coefs = {
            name: self.beta[start:stop].tolist()
            for name, start, stop in self.design.blocks
        }
        return {
            "coefficients": coefs,
            "convergence": {
                "converged": self.converged,
                "iterations": self.n_iter,
                "gradient_norm": self.grad_norm,
                "message": self.message,
                "penalized_loglik": self.loglik,
            },
            "sigma_diagonal": np.diag(self.Sigma).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.report(), indent=2, sort_keys=True)


def _weighted_gram(X: np.ndarray, c: np.ndarray) -> np.ndarray:
    G = (X * c[:, None]).T @ X
    return 0.5 * (G + G.T)


def _solve_ascent(negH: np.ndarray, grad: np.ndarray, ridge: float) -> np.ndarray:
    """Solve (negH + jitter I) step = grad, escalating jitter until the
    solution is a strict ascent direction."""
    eye = np.eye(negH.shape[0])
    jitter = 0.0
    while True:
        try:
            step = np.linalg.solve(negH + jitter * eye if jitter else negH, grad)
            if np.all(np.isfinite(step)) and float(grad @ step) > 0.0:
                return step
        except np.linalg.LinAlgError:
            pass
        jitter = ridge if jitter == 0.0 else jitter * 100.0
        if jitter > 1e10:
            raise SingularInformationError(
                "Newton system remained unsolvable after ridge escalation"
            )


def fit_mle(
    design: DesignMatrix,
    link: LinkFunction,
    penalty: PenaltyMatrix,
    config: FitConfig | None = None,
) -> FittedIntensityModel:
    """Newton ascent on the penalized log-likelihood with step halving.

    The intercept starts at the link of the raw event rate, everything else
    at zero. Non-convergence is reported on the result rather than raised;
    the best iterate is kept either way.
    """
    config = config or FitConfig()
    if penalty.matrix.shape != (design.p, design.p):
        raise DimensionMismatchError(
            f"penalty is {penalty.matrix.shape}, design has {design.p} columns"
        )
    if design.n_events == 0:
        warnings.warn(
            "design has no event rows; fitting the compensator term only",
            NoEventRowsWarning,
            stacklevel=2,
        )
    Omega = penalty.matrix
    kappa0 = config.kappa0
    t0, t1 = design.window
    rate = max(design.n_events / (t1 - t0), 1.0 / (t1 - t0))
    beta = np.zeros(design.p)
    beta[design.block_slice("intercept")] = link.eval(rate)

    def value_at(b: np.ndarray) -> float:
        return penalized_loglik(b, design, link, penalty, kappa0)

    # quadrature and event rows share the Gram accumulation: one GEMM per
    # Newton iteration on the stacked design
    if design.n_events:
        X_all = np.vstack([design.quad_x, design.event_x])
    else:
        X_all = design.quad_x
    n_quad = design.quad_x.shape[0]

    def state(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        uq = design.quad_x @ b
        d1q = link.inverse_deriv(uq)
        d2q = link.inverse_deriv2(uq)
        r = np.empty(X_all.shape[0])
        c = np.empty(X_all.shape[0])
        r[:n_quad] = -design.quad_w * d1q
        c[:n_quad] = design.quad_w * d2q
        if design.n_events:
            ue = design.event_x @ b
            phi = link.inverse(ue)
            d1 = link.inverse_deriv(ue)
            d2 = link.inverse_deriv2(ue)
            r[n_quad:] = d1 / phi
            c[n_quad:] = (d1 * d1 - d2 * phi) / (phi * phi)
        grad = X_all.T @ r - 2.0 * kappa0 * (Omega @ b)
        negH = _weighted_gram(X_all, c) + 2.0 * kappa0 * Omega
        return grad, negH

    value = value_at(beta)
    path = [value]
    converged = False
    grad_norm = np.inf
    message = "reached max_iter"
    n_iter = 0
    for n_iter in range(1, config.max_iter + 1):
        grad, negH = state(beta)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < config.grad_tol * max(1.0, abs(value)):
            converged = True
            message = "gradient below tolerance"
            break
        step = _solve_ascent(negH, grad, config.ridge)
        t = 1.0
        new_value = -np.inf
        for _ in range(config.max_halvings):
            new_value = value_at(beta + t * step)
            if new_value > value:
                break
            t *= 0.5
        if not new_value > value:
            message = "line search made no progress"
            break
        beta = beta + t * step
        assert new_value >= value
        value = new_value
        path.append(value)

    grad_norm = float(np.linalg.norm(penalized_score(beta, design, link, penalty, kappa0)))
    if not converged and grad_norm < config.grad_tol * max(1.0, abs(value)):
        converged = True
        message = "gradient below tolerance"
    elif message == "line search made no progress":
        # once improvements fall below float64 resolution of the objective the
        # line search must stall; accept the iterate if the leftover gradient
        # is within a modest factor of the tolerance
        if grad_norm < 1e3 * config.grad_tol * max(1.0, abs(value)):
            converged = True
            message = "converged at numerical precision"

    uq = design.quad_x @ beta
    d1 = link.inverse_deriv(uq)
    # The information integrand divides by the fitted intensity. An identity
    # link fit may cross zero on sparse stretches where it is invalid as an
    # intensity; clamp the denominator at a fraction of the average event
    # rate so such stretches contribute bounded weight instead of blowing
    # up K_hat. Log and piecewise links keep the denominator positive on
    # their own and their weights cancel the division, so the clamp never
    # binds materially for them.
    rate = design.n_events / float(design.quad_w.sum())
    floor = 1e-2 * rate if rate > 0.0 else INTENSITY_FLOOR
    phi = np.maximum(link.inverse(uq), floor)
    K_hat = _weighted_gram(design.quad_x, design.quad_w * d1 * d1 / phi)
    J_hat = K_hat + 2.0 * kappa0 * Omega
    try:
        Sigma = np.linalg.solve(J_hat, np.linalg.solve(J_hat, K_hat).T).T
        mu = beta - 2.0 * kappa0 * np.linalg.solve(J_hat, Omega @ beta)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError(
            "J_hat = K_hat + 2*kappa0*Omega is singular; sandwich covariance undefined"
        ) from exc
    Sigma = 0.5 * (Sigma + Sigma.T)

    return FittedIntensityModel(
        beta=beta,
        design=design,
        penalty=penalty,
        link=link,
        kappa0=kappa0,
        loglik=value,
        K_hat=K_hat,
        J_hat=J_hat,
        Sigma=Sigma,
        mu=mu,
        converged=converged,
        n_iter=n_iter,
        grad_norm=grad_norm,
        message=message,
        value_path=tuple(path),
    )


def chi2_upper_tail(x: float, df: int) -> float:
    """Upper tail of the chi-squared distribution with df degrees of freedom."""
    if not (np.isfinite(x) and x >= 0):
        raise ValueError(f"x must be >= 0, got {x!r}")
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df!r}")
    return float(gammaincc(df / 2.0, x / 2.0))


@dataclass(frozen=True)
class WaldResult:
    """Grid Wald test outcome for one coefficient block."""

    statistic: float
    df: int
    p_value: float
    grid: np.ndarray
    values: np.ndarray
    block: str

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "block": self.block,
        }


def wald_grid_test(
    fit: FittedIntensityModel,
    block: str | None = None,
    num_points: int | None = None,
) -> WaldResult:
    """Test whether the spline function of one first-order block is zero.

    The block's function is evaluated at num_points midpoints of the basis
    support (default: one per basis function) and the quadratic form uses
    the matching sandwich sub-block. Directions whose eigenvalue falls below
    RANK_TOLERANCE times the largest are dropped and the degrees of freedom
    reduced to the numerical rank.
    """
    design = fit.design
    if block is None:
        block = design.test_block_name()
    sl = design.block_slice(block)
    basis = design.basis
    if sl.stop - sl.start != basis.num_basis:
        raise DimensionMismatchError(
            f"block {block!r} has {sl.stop - sl.start} columns; grid Wald "
            f"applies to first-order blocks of width {basis.num_basis}"
        )
    if num_points is None:
        num_points = basis.num_basis
    if num_points < 1:
        raise ValueError(f"num_points must be >= 1, got {num_points!r}")

    Sigma_sub = fit.Sigma[sl, sl]
    if not np.any(Sigma_sub):
        raise DegenerateCovarianceError(
            f"covariance sub-block for {block!r} is identically zero"
        )
    grid = basis.grid(num_points)
    B = basis.evaluate(grid)
    values = B @ fit.beta[sl]
    V = B @ Sigma_sub @ B.T
    V = 0.5 * (V + V.T)
    eigvals, eigvecs = np.linalg.eigh(V)
    keep = eigvals > RANK_TOLERANCE * max(float(eigvals.max()), 0.0)
    df = int(np.count_nonzero(keep))
    if df == 0:
        raise DegenerateCovarianceError(
            f"grid covariance for {block!r} has no positive eigenvalue"
        )
    z = eigvecs.T @ values
    statistic = float(np.sum(z[keep] ** 2 / eigvals[keep]))
    return WaldResult(
        statistic=statistic,
        df=df,
        p_value=chi2_upper_tail(statistic, df),
        grid=grid,
        values=values,
        block=block,
    )

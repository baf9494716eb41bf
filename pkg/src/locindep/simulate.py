"""Exact simulation of multivariate exponential-kernel processes by thinning.

The sampler keeps, per kernel, the decayed excitation state
e_jk(t) = sum_{tau in N^j, tau < t} beta_jk * exp(-beta_jk (t - tau)), so the
predictor of mark k is baseline_k + sum_j alpha_jk * e_jk(t).  Because positive
contributions only decay between events and negative ones only rise toward
zero, dropping the negative terms gives a piecewise-valid dominating rate; the
bound is refreshed after every accepted event and whenever it has been held
longer than 1 / min(beta).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from locindep.core import (
    DimensionMismatchError,
    DirectedGraph,
    EmptyObservedSetError,
    ExplosionError,
    ExponentialKernel,
    IntensityModelSpec,
    MarkedEventSequence,
    MarkOutOfRangeError,
    NonStationaryWarning,
    UnknownStructureError,
    integrated_kernel_matrix,
    make_link,
    spectral_radius,
    validate_events,
)

__all__ = [
    "SimulationConfig",
    "RandomGraphConfig",
    "BenchmarkStructure",
    "STRUCTURE_NAMES",
    "simulate_hawkes",
    "simulate_coupled_baseline_pair",
    "sample_random_graph",
    "build_benchmark_structure",
    "restrict_to_observed",
    "compensator_at_events",
    "rescaled_gaps",
]


@dataclass(frozen=True)
class SimulationConfig:
    """Sampler settings: window length, burn-in, seed and the explosion guard."""

    horizon: float = 2000.0
    burn_in: float = 50.0
    seed: int = 0
    max_events: int = 1_000_000

    def __post_init__(self) -> None:
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive, got {self.horizon!r}")
        if not (np.isfinite(self.burn_in) and self.burn_in >= 0):
            raise ValueError(f"burn_in must be nonnegative, got {self.burn_in!r}")
        if self.max_events < 1:
            raise ValueError("max_events must be positive")


def _check_stationarity(spec: IntensityModelSpec) -> None:
    if spec.link.name != "identity":
        return
    alpha, _, present = spec.arrays()
    if np.any(alpha[present] < 0):
        warnings.warn(
            "identity link with negative kernels: intensities are clamped at zero",
            NonStationaryWarning,
            stacklevel=3,
        )
        return
    radius = spectral_radius(integrated_kernel_matrix(spec))
    if radius >= 1.0:
        warnings.warn(
            f"integrated kernel matrix has spectral radius {radius:.3f} >= 1; "
            "the linear process has no stationary version",
            NonStationaryWarning,
            stacklevel=3,
        )


class _ThinningState:
    """Decayed excitation per kernel plus the dominating-rate bookkeeping."""

    def __init__(self, spec: IntensityModelSpec):
        self.alpha, self.beta, present = spec.arrays()
        self.alpha = np.where(present, self.alpha, 0.0)
        self.alpha_pos = np.clip(self.alpha, 0.0, None)
        self.baseline = spec.baseline
        self.link = spec.link
        self.excite = np.zeros((spec.d, spec.d))
        betas = self.beta[present]
        self.refresh = 1.0 / float(betas.min()) if betas.size else np.inf

    def decay(self, dt: float) -> None:
        if dt > 0.0:
            self.excite *= np.exp(-self.beta * dt)

    def intensities(self) -> np.ndarray:
        pred = self.baseline + np.einsum("jk,jk->k", self.alpha, self.excite)
        lam = self.link.inverse(pred)
        return np.clip(lam, 0.0, None) if self.link.name == "identity" else lam

    def bound(self) -> float:
        pred = self.baseline + np.einsum("jk,jk->k", self.alpha_pos, self.excite)
        lam = self.link.inverse(pred)
        if self.link.name == "identity":
            lam = np.clip(lam, 0.0, None)
        return float(np.sum(lam))

    def register(self, mark: int) -> None:
        self.excite[mark, :] += self.beta[mark, :] * (self.alpha[mark, :] != 0.0)


def simulate_hawkes(spec: IntensityModelSpec, config: SimulationConfig) -> MarkedEventSequence:
    """Draw one realization on [0, horizon) after a burn-in stretch.

    The burn-in starts from an empty history at -burn_in; events before time
    zero are dropped from the output.  Identical (spec, config) inputs give
    bit-identical output.  Raises ExplosionError once max_events accepted
    events (burn-in included) have been generated.
    """
    _check_stationarity(spec)
    rng = np.random.default_rng(config.seed)
    state = _ThinningState(spec)
    t = -float(config.burn_in)
    horizon = float(config.horizon)
    times: list[float] = []
    marks: list[int] = []
    n_accepted = 0

    bound = state.bound()
    bound_set_at = t
    while True:
        if bound <= 0.0:
            break  # nothing can ever fire: no baseline mass, no positive excitation
        gap = rng.exponential() / bound
        expiry = bound_set_at + state.refresh
        if t + gap > expiry and expiry < horizon:
            state.decay(expiry - t)
            t = expiry
            bound = state.bound()
            bound_set_at = t
            continue
        if t + gap >= horizon:
            break
        state.decay(gap)
        t = t + gap
        lam = state.intensities()
        total = float(np.sum(lam))
        u = rng.uniform(0.0, bound)
        if u < total:
            mark = int(np.searchsorted(np.cumsum(lam), u, side="right"))
            n_accepted += 1
            if n_accepted > config.max_events:
                raise ExplosionError(
                    f"more than {config.max_events} events accepted; "
                    "the spec is likely explosive"
                )
            if t >= 0.0:
                times.append(t)
                marks.append(mark)
            state.register(mark)
            bound = state.bound()
            bound_set_at = t

    return validate_events(times, marks, window=(0.0, horizon), d=spec.d, sort=False)


def simulate_coupled_baseline_pair(
    low: IntensityModelSpec, high: IntensityModelSpec, config: SimulationConfig
) -> tuple[MarkedEventSequence, MarkedEventSequence]:
    """Couple two runs that differ only by raised baselines.

    Both processes are thinned from one shared dominating candidate stream.
    Candidates are pre-assigned to a mark channel using the high process's
    per-mark bound, then accepted into each process by comparing one shared
    uniform against that process's intensity.  With identical nonnegative
    kernels and low.baseline <= high.baseline this keeps the accepted sets
    nested, so every mark's event count is monotone in the baseline.
    """
    if low.d != high.d:
        raise DimensionMismatchError("specs must share d")
    if low.kernels.keys() != high.kernels.keys() or any(
        low.kernels[key] != high.kernels[key] for key in low.kernels
    ):
        raise ValueError("coupled specs must share their kernel table")
    if any(kern.alpha < 0 for kern in low.kernels.values()):
        raise ValueError("coupling requires nonnegative kernels")
    if low.link != high.link:
        raise ValueError("coupled specs must share the link")
    if np.any(low.baseline > high.baseline):
        raise ValueError("low baselines must not exceed high baselines")

    rng = np.random.default_rng(config.seed)
    st_low = _ThinningState(low)
    st_high = _ThinningState(high)
    t = -float(config.burn_in)
    horizon = float(config.horizon)
    out: tuple[tuple[list[float], list[int]], tuple[list[float], list[int]]] = (
        ([], []),
        ([], []),
    )

    def per_mark_bound(state: _ThinningState) -> np.ndarray:
        pred = state.baseline + np.einsum("jk,jk->k", state.alpha_pos, state.excite)
        lam = state.link.inverse(pred)
        return np.clip(lam, 0.0, None) if state.link.name == "identity" else lam

    bound_k = per_mark_bound(st_high)
    bound = float(np.sum(bound_k))
    bound_set_at = t
    n_accepted = 0
    while bound > 0.0:
        gap = rng.exponential() / bound
        expiry = bound_set_at + st_high.refresh
        if t + gap > expiry and expiry < horizon:
            st_low.decay(expiry - t)
            st_high.decay(expiry - t)
            t = expiry
            bound_k = per_mark_bound(st_high)
            bound = float(np.sum(bound_k))
            bound_set_at = t
            continue
        if t + gap >= horizon:
            break
        st_low.decay(gap)
        st_high.decay(gap)
        t = t + gap
        # channel assignment from the shared dominating rate, then one shared
        # uniform decides acceptance for both processes
        mark = int(np.searchsorted(np.cumsum(bound_k), rng.uniform(0.0, bound), side="right"))
        v = rng.uniform(0.0, float(bound_k[mark]))
        lam_high = float(st_high.intensities()[mark])
        lam_low = float(st_low.intensities()[mark])
        accepted_high = v < lam_high
        if v < lam_low:
            if t >= 0.0:
                out[0][0].append(t)
                out[0][1].append(mark)
            st_low.register(mark)
        if accepted_high:
            n_accepted += 1
            if n_accepted > config.max_events:
                raise ExplosionError(f"more than {config.max_events} events accepted")
            if t >= 0.0:
                out[1][0].append(t)
                out[1][1].append(mark)
            st_high.register(mark)
            bound_k = per_mark_bound(st_high)
            bound = float(np.sum(bound_k))
            bound_set_at = t

    seq_low = validate_events(out[0][0], out[0][1], window=(0.0, horizon), d=low.d, sort=False)
    seq_high = validate_events(out[1][0], out[1][1], window=(0.0, horizon), d=high.d, sort=False)
    return seq_low, seq_high


@dataclass(frozen=True)
class RandomGraphConfig:
    """Erdos-Renyi style kernel tables: every cross edge present independently."""

    d: int
    edge_prob: float = 0.2
    seed: int = 0
    baseline: float = 0.25
    self_alpha: float = 0.3
    cross_alpha: float = 0.4
    negative_prob: float = 0.5
    beta: float = 0.8
    link_name: str = "piecewise"

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("d must be positive")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError("edge_prob must lie in [0, 1]")
        if not 0.0 <= self.negative_prob <= 1.0:
            raise ValueError("negative_prob must lie in [0, 1]")


def sample_random_graph(config: RandomGraphConfig) -> tuple[DirectedGraph, IntensityModelSpec]:
    """Sample a ground-truth graph plus its generative spec.

    Every node keeps a self-loop with mass self_alpha; each ordered cross pair
    gets a kernel with probability edge_prob, signed +-cross_alpha with the
    given negative probability.
    """
    rng = np.random.default_rng(config.seed)
    kernels: dict[tuple[int, int], ExponentialKernel] = {}
    for j in range(config.d):
        kernels[(j, j)] = ExponentialKernel(alpha=config.self_alpha, beta=config.beta)
    for j in range(config.d):
        for k in range(config.d):
            if j == k:
                continue
            if rng.uniform() < config.edge_prob:
                sign = -1.0 if rng.uniform() < config.negative_prob else 1.0
                kernels[(j, k)] = ExponentialKernel(
                    alpha=sign * config.cross_alpha, beta=config.beta
                )
    spec = IntensityModelSpec(
        d=config.d,
        baseline=np.full(config.d, config.baseline),
        kernels=kernels,
        link=make_link(config.link_name),
    )
    return spec.graph(), spec


@dataclass(frozen=True)
class BenchmarkStructure:
    """One named benchmark: generative spec plus the tested hypothesis.

    node_names fixes the mark order; latent marks are dropped before testing.
    source/target/conditioning give the hypothesis "source does not influence
    target given conditioning" in full-spec indices.
    """

    name: str
    spec: IntensityModelSpec
    node_names: tuple[str, ...]
    latent: tuple[int, ...]
    source: int
    target: int
    conditioning: tuple[int, ...]

    def observed(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.spec.d) if i not in self.latent)

    def observed_hypothesis(self) -> tuple[int, int, tuple[int, ...]]:
        """(source, target, conditioning) re-indexed to the observed sequence."""
        remap = {old: new for new, old in enumerate(self.observed())}
        return (
            remap[self.source],
            remap[self.target],
            tuple(remap[c] for c in self.conditioning),
        )


_SELF_ALPHA = 0.4
_BETA = 0.8
_BASELINE = 0.25

# name -> (node names, cross edges as (source name, target name, alpha), latent names)
_STRUCTURES: dict[str, tuple[tuple[str, ...], tuple[tuple[str, str, float], ...], tuple[str, ...]]] = {
    "L1": (("j", "c", "k"), (("c", "j", 0.4), ("c", "k", 0.4)), ()),
    "L2": (("j", "c", "h", "k"), (("j", "c", 0.9), ("c", "h", -0.6), ("h", "k", 0.4)), ("h",)),
    "L3": (
        ("j", "c", "h", "k"),
        (("c", "j", 0.4), ("h", "c", 0.4), ("h", "k", 0.4), ("c", "k", -0.4)),
        ("h",),
    ),
    "P1": (("j", "k"), (("j", "k", -0.6),), ()),
    "P2": (("j", "h", "k"), (("j", "h", 0.4), ("h", "k", -0.4)), ("h",)),
    "P3": (
        ("j", "c", "h", "k"),
        (("j", "c", 0.3), ("j", "h", 0.3), ("c", "k", 0.2), ("h", "k", -0.25)),
        ("h",),
    ),
}

STRUCTURE_NAMES = tuple(sorted(_STRUCTURES))


def build_benchmark_structure(name: str) -> BenchmarkStructure:
    """Construct one of the named benchmark structures (L1-L3, P1-P3).

    Every node carries a self-loop of mass 0.4 and baseline 0.25 under the
    piecewise link; kernels decay at rate 0.8.  The L structures are null cases
    (the source never influences the target once the conditioning marks are
    held), the P structures carry genuine influence.  The mark written "h" is
    latent and excluded from the observed set.
    """
    if name not in _STRUCTURES:
        raise UnknownStructureError(
            f"unknown structure {name!r}; valid names: {', '.join(STRUCTURE_NAMES)}"
        )
    node_names, cross, latent_names = _STRUCTURES[name]
    idx = {nm: i for i, nm in enumerate(node_names)}
    d = len(node_names)
    kernels = {
        (i, i): ExponentialKernel(alpha=_SELF_ALPHA, beta=_BETA) for i in range(d)
    }
    for src, dst, alpha in cross:
        kernels[(idx[src], idx[dst])] = ExponentialKernel(alpha=alpha, beta=_BETA)
    spec = IntensityModelSpec(
        d=d,
        baseline=np.full(d, _BASELINE),
        kernels=kernels,
        link=make_link("piecewise"),
    )
    return BenchmarkStructure(
        name=name,
        spec=spec,
        node_names=node_names,
        latent=tuple(idx[nm] for nm in latent_names),
        source=idx["j"],
        target=idx["k"],
        conditioning=(idx["c"],) if "c" in idx else (),
    )


def restrict_to_observed(
    seq: MarkedEventSequence, observed
) -> tuple[MarkedEventSequence, dict[int, int]]:
    """Drop unobserved marks and re-index the rest densely (order preserved)."""
    obs = sorted(set(int(m) for m in observed))
    if not obs:
        raise EmptyObservedSetError("observed set is empty")
    for m in obs:
        if not 0 <= m < seq.d:
            raise MarkOutOfRangeError(f"mark {m} outside 0..{seq.d - 1}")
    remap = {old: new for new, old in enumerate(obs)}
    keep = np.isin(seq.marks, obs)
    lookup = np.full(seq.d, -1, dtype=np.int64)
    for old, new in remap.items():
        lookup[old] = new
    restricted = MarkedEventSequence(
        times=seq.times[keep],
        marks=lookup[seq.marks[keep]],
        window=seq.window,
        d=len(obs),
    )
    return restricted, remap


def compensator_at_events(
    spec: IntensityModelSpec, seq: MarkedEventSequence, k: int, n_nodes: int = 24
) -> np.ndarray:
    """Integrated intensity of mark k evaluated at each of its event times.

    Integrates the generative intensity with per-inter-event-segment Gauss
    rules; the predictor is smooth between consecutive events of any mark, so
    the only quadrature error comes from link kinks and is negligible at the
    default node count.
    """
    if not 0 <= k < spec.d:
        raise MarkOutOfRangeError(f"mark {k} outside 0..{spec.d - 1}")
    ref_x, ref_w = np.polynomial.legendre.leggauss(n_nodes)
    alpha, beta, present = spec.arrays()
    alpha = np.where(present, alpha, 0.0)
    alpha_k = alpha[:, k]
    beta_k = beta[:, k]
    base_k = float(spec.baseline[k])
    link = spec.link
    t0, t1 = seq.window
    excite = np.zeros(seq.d)  # e_{j k}(segment start)

    def lam_at(offsets: np.ndarray) -> np.ndarray:
        decayed = excite[None, :] * np.exp(-beta_k[None, :] * offsets[:, None])
        pred = base_k + decayed @ alpha_k
        lam = link.inverse(pred)
        return np.clip(lam, 0.0, None) if link.name == "identity" else lam

    out = []
    acc = 0.0
    t_prev = t0
    for time, mark in zip(seq.times, seq.marks):
        seg = time - t_prev
        if seg > 0:
            nodes = 0.5 * seg * (ref_x + 1.0)
            acc += 0.5 * seg * float(ref_w @ lam_at(nodes))
        if mark == k:
            out.append(acc)
        excite *= np.exp(-beta_k * (time - t_prev))
        excite[mark] += beta_k[mark] * (alpha[mark, k] != 0.0)
        t_prev = time
    return np.asarray(out)


def rescaled_gaps(spec: IntensityModelSpec, seq: MarkedEventSequence, k: int) -> np.ndarray:
    """Compensator increments between consecutive k-events (unit exponential
    under the generative model, by time rescaling)."""
    lam_cum = compensator_at_events(spec, seq, k)
    return np.diff(lam_cum, prepend=0.0)

import math

import numpy as np
import pytest
from scipy import stats

from locindep.core import (
    EmptyObservedSetError,
    ExplosionError,
    ExponentialKernel,
    IntensityModelSpec,
    NonStationaryWarning,
    UnknownStructureError,
    make_link,
    true_intensity,
    validate_events,
)
from locindep.simulate import (
    STRUCTURE_NAMES,
    SimulationConfig,
    RandomGraphConfig,
    build_benchmark_structure,
    compensator_at_events,
    rescaled_gaps,
    restrict_to_observed,
    sample_random_graph,
    simulate_coupled_baseline_pair,
    simulate_hawkes,
)


def _poisson_spec(d=2, rate=0.25, link="identity"):
    return IntensityModelSpec(d=d, baseline=np.full(d, rate), link=make_link(link))


def _self_exciting(alpha=0.4, baseline=0.25, link="piecewise"):
    return IntensityModelSpec(
        d=1,
        baseline=np.array([baseline]),
        kernels={(0, 0): ExponentialKernel(alpha=alpha, beta=0.8)},
        link=make_link(link),
    )


# --- determinism and basic output shape ------------------------------------------

def test_simulation_deterministic_given_seed():
    spec = build_benchmark_structure("L1").spec
    cfg = SimulationConfig(horizon=80.0, burn_in=10.0, seed=42)
    a = simulate_hawkes(spec, cfg)
    b = simulate_hawkes(spec, cfg)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.marks, b.marks)
    c = simulate_hawkes(spec, SimulationConfig(horizon=80.0, burn_in=10.0, seed=43))
    assert not np.array_equal(a.times, c.times)


def test_simulation_window_half_open():
    spec = _poisson_spec()
    seq = simulate_hawkes(spec, SimulationConfig(horizon=50.0, burn_in=20.0, seed=1))
    assert seq.window == (0.0, 50.0)
    assert seq.n == 0 or (seq.times.min() >= 0.0 and seq.times.max() < 50.0)
    assert np.all(np.diff(seq.times) > 0.0)


# --- count laws -------------------------------------------------------------------

def test_homogeneous_poisson_counts_identity_link():
    spec = _poisson_spec(d=2, rate=0.25, link="identity")
    horizon = 400.0
    mean = 0.25 * horizon
    counts = []
    for seed in range(40):
        seq = simulate_hawkes(spec, SimulationConfig(horizon=horizon, burn_in=0.0, seed=seed))
        counts.append(seq.counts())
    counts = np.asarray(counts, dtype=float)
    # average over 80 mark-cells: SE = sqrt(mean / 80)
    assert abs(counts.mean() - mean) < 4.0 * math.sqrt(mean / counts.size)
    within = np.abs(counts - mean) <= 4.0 * math.sqrt(mean)
    assert within.mean() > 0.97


def test_homogeneous_poisson_counts_piecewise_link():
    # piecewise link maps the 0.25 baseline predictor to exp(-0.75)
    rate = math.exp(-0.75)
    horizon = 500.0
    spec = _poisson_spec(d=1, rate=0.25, link="piecewise")
    counts = [
        simulate_hawkes(spec, SimulationConfig(horizon=horizon, burn_in=0.0, seed=s)).n
        for s in range(30)
    ]
    mean = rate * horizon
    assert abs(np.mean(counts) - mean) < 4.0 * math.sqrt(mean / len(counts))


def test_self_excitation_raises_rate():
    base = _poisson_spec(d=1, rate=0.25, link="piecewise")
    excited = _self_exciting(alpha=0.6)
    n_base = np.mean(
        [simulate_hawkes(base, SimulationConfig(300.0, 30.0, seed=s)).n for s in range(15)]
    )
    n_exc = np.mean(
        [simulate_hawkes(excited, SimulationConfig(300.0, 30.0, seed=s)).n for s in range(15)]
    )
    assert n_exc > 1.15 * n_base


# --- guards and warnings -----------------------------------------------------------

def test_explosion_guard_trips():
    spec = IntensityModelSpec(
        d=1,
        baseline=np.array([0.5]),
        kernels={(0, 0): ExponentialKernel(alpha=1.4, beta=0.8)},
        link=make_link("identity"),
    )
    with pytest.warns(NonStationaryWarning):
        with pytest.raises(ExplosionError):
            simulate_hawkes(spec, SimulationConfig(horizon=5000.0, burn_in=0.0, seed=0, max_events=500))


def test_identity_negative_kernel_warns_about_clamping():
    spec = IntensityModelSpec(
        d=1,
        baseline=np.array([0.5]),
        kernels={(0, 0): ExponentialKernel(alpha=-0.5, beta=0.8)},
        link=make_link("identity"),
    )
    with pytest.warns(NonStationaryWarning, match="clamped"):
        simulate_hawkes(spec, SimulationConfig(horizon=50.0, burn_in=0.0, seed=0))


def test_piecewise_link_no_warning():
    import warnings

    spec = _self_exciting(alpha=0.9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        simulate_hawkes(spec, SimulationConfig(horizon=50.0, burn_in=0.0, seed=0))


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(horizon=-1.0)
    with pytest.raises(ValueError):
        SimulationConfig(burn_in=-0.5)


# --- monotone coupling ---------------------------------------------------------------

def test_coupled_pair_counts_monotone_in_baseline():
    kernels = {
        (0, 0): ExponentialKernel(alpha=0.4, beta=0.8),
        (1, 1): ExponentialKernel(alpha=0.3, beta=0.8),
        (0, 1): ExponentialKernel(alpha=0.5, beta=0.8),
    }
    link = make_link("piecewise")
    low = IntensityModelSpec(d=2, baseline=np.array([0.2, 0.3]), kernels=kernels, link=link)
    high = IntensityModelSpec(d=2, baseline=np.array([0.55, 0.3]), kernels=kernels, link=link)
    for seed in range(10):
        cfg = SimulationConfig(horizon=120.0, burn_in=10.0, seed=seed)
        seq_low, seq_high = simulate_coupled_baseline_pair(low, high, cfg)
        c_low, c_high = seq_low.counts(), seq_high.counts()
        assert np.all(c_high >= c_low)
        # nesting is exact: every low event appears in the high run
        assert set(zip(seq_low.times, seq_low.marks)) <= set(zip(seq_high.times, seq_high.marks))


def test_coupled_pair_validates_inputs():
    kernels = {(0, 0): ExponentialKernel(alpha=0.4, beta=0.8)}
    link = make_link("piecewise")
    low = IntensityModelSpec(d=1, baseline=np.array([0.3]), kernels=kernels, link=link)
    high_bad = IntensityModelSpec(d=1, baseline=np.array([0.2]), kernels=kernels, link=link)
    with pytest.raises(ValueError):
        simulate_coupled_baseline_pair(low, high_bad, SimulationConfig(horizon=10.0))
    neg = IntensityModelSpec(
        d=1,
        baseline=np.array([0.3]),
        kernels={(0, 0): ExponentialKernel(alpha=-0.4, beta=0.8)},
        link=link,
    )
    with pytest.raises(ValueError):
        simulate_coupled_baseline_pair(neg, neg, SimulationConfig(horizon=10.0))


# --- compensator and time rescaling ---------------------------------------------------

def test_compensator_closed_form_for_poisson():
    spec = _poisson_spec(d=1, rate=0.25, link="identity")
    seq = validate_events([1.0, 4.0, 7.5, 19.0], [0, 0, 0, 0], window=(0.0, 20.0), d=1)
    lam_cum = compensator_at_events(spec, seq, 0)
    assert np.allclose(lam_cum, 0.25 * seq.times, atol=1e-12)


def _brute_compensator(spec, seq, mark):
    # Gauss nodes per inter-event segment (interior nodes only, so left
    # limits never straddle a jump); true_intensity rebuilds from the full
    # history rather than evolving a decay state
    nodes, weights = np.polynomial.legendre.leggauss(50)
    edges = np.concatenate(([0.0], seq.times))
    ref, total = [], 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        ts = 0.5 * (b - a) * (nodes + 1.0) + a
        vals = np.array([true_intensity(spec, seq, mark, t) for t in ts])
        total += 0.5 * (b - a) * float(weights @ vals)
        ref.append(total)
    return np.asarray(ref)


def test_compensator_matches_dense_quadrature_smooth_link():
    spec = _self_exciting(alpha=0.5, link="identity")
    seq = simulate_hawkes(spec, SimulationConfig(horizon=40.0, burn_in=0.0, seed=3))
    assert seq.n >= 3
    lam_cum = compensator_at_events(spec, seq, 0)
    assert np.max(np.abs(lam_cum - _brute_compensator(spec, seq, 0))) < 1e-9


def test_compensator_matches_dense_quadrature_piecewise_link():
    # the curvature jump where the predictor crosses 1 limits fixed-node
    # quadrature on segments containing the crossing
    spec = _self_exciting(alpha=0.5)
    seq = simulate_hawkes(spec, SimulationConfig(horizon=40.0, burn_in=0.0, seed=3))
    assert seq.n >= 3
    lam_cum = compensator_at_events(spec, seq, 0)
    assert np.max(np.abs(lam_cum - _brute_compensator(spec, seq, 0))) < 5e-5


def test_time_rescaling_gaps_look_exponential():
    spec = _self_exciting(alpha=0.4)
    gaps = []
    for seed in range(5):
        seq = simulate_hawkes(spec, SimulationConfig(horizon=300.0, burn_in=30.0, seed=seed))
        gaps.append(rescaled_gaps(spec, seq, 0))
    gaps = np.concatenate(gaps)
    assert gaps.size > 300
    assert stats.kstest(gaps, "expon").pvalue > 1e-3


# --- benchmark structures ---------------------------------------------------------------

def test_structure_names_and_unknown():
    assert STRUCTURE_NAMES == ("L1", "L2", "L3", "P1", "P2", "P3")
    with pytest.raises(UnknownStructureError, match="L1"):
        build_benchmark_structure("L9")


def test_structure_l1_layout():
    s = build_benchmark_structure("L1")
    assert s.node_names == ("j", "c", "k")
    assert s.latent == ()
    assert s.spec.graph().edges == frozenset(
        {(0, 0), (1, 1), (2, 2), (1, 0), (1, 2)}
    )
    assert s.spec.kernel(1, 0).alpha == 0.4
    assert s.spec.kernel(1, 2).alpha == 0.4
    assert s.spec.kernel(0, 0).alpha == 0.4
    assert s.source == 0 and s.target == 2 and s.conditioning == (1,)
    assert s.observed_hypothesis() == (0, 2, (1,))


def test_structure_l2_latents_and_weights():
    s = build_benchmark_structure("L2")
    assert s.node_names == ("j", "c", "h", "k")
    assert s.latent == (2,)
    assert s.spec.kernel(0, 1).alpha == 0.9
    assert s.spec.kernel(1, 2).alpha == -0.6
    assert s.spec.kernel(2, 3).alpha == 0.4
    assert s.observed() == (0, 1, 3)
    assert s.observed_hypothesis() == (0, 2, (1,))


def test_structure_p_family():
    p1 = build_benchmark_structure("P1")
    assert p1.spec.d == 2 and p1.spec.kernel(0, 1).alpha == -0.6
    assert p1.observed_hypothesis() == (0, 1, ())
    p2 = build_benchmark_structure("P2")
    assert p2.latent == (1,)
    assert p2.spec.kernel(0, 1).alpha == 0.4 and p2.spec.kernel(1, 2).alpha == -0.4
    assert p2.observed_hypothesis() == (0, 1, ())
    p3 = build_benchmark_structure("P3")
    assert p3.spec.kernel(0, 1).alpha == 0.3
    assert p3.spec.kernel(0, 2).alpha == 0.3
    assert p3.spec.kernel(1, 3).alpha == 0.2
    assert p3.spec.kernel(2, 3).alpha == -0.25
    assert p3.observed_hypothesis() == (0, 2, (1,))


def test_structure_baselines_and_decays():
    for name in STRUCTURE_NAMES:
        s = build_benchmark_structure(name)
        assert np.all(s.spec.baseline == 0.25)
        assert s.spec.link.name == "piecewise"
        for kern in s.spec.kernels.values():
            assert kern.beta == 0.8
        for i in range(s.spec.d):
            assert s.spec.kernel(i, i).alpha == 0.4


# --- restriction -------------------------------------------------------------------------

def test_restrict_to_observed():
    seq = validate_events(
        [0.5, 1.0, 2.0, 3.0], [0, 2, 1, 2], window=(0.0, 5.0), d=3
    )
    restricted, remap = restrict_to_observed(seq, [0, 2])
    assert remap == {0: 0, 2: 1}
    assert restricted.d == 2
    assert np.array_equal(restricted.times, [0.5, 1.0, 3.0])
    assert np.array_equal(restricted.marks, [0, 1, 1])
    with pytest.raises(EmptyObservedSetError):
        restrict_to_observed(seq, [])


# --- random graphs ------------------------------------------------------------------------

def test_sample_random_graph_deterministic_and_well_formed():
    cfg = RandomGraphConfig(d=5, edge_prob=0.2, seed=11)
    g1, spec1 = sample_random_graph(cfg)
    g2, spec2 = sample_random_graph(cfg)
    assert g1.edges == g2.edges
    for i in range(5):
        assert spec1.kernel(i, i).alpha == 0.3
    for (j, k), kern in spec1.kernels.items():
        assert kern.beta == 0.8
        if j != k:
            assert abs(kern.alpha) == 0.4
    assert np.all(spec1.baseline == 0.25)
    assert spec1.link.name == "piecewise"


def test_sample_random_graph_edge_frequency():
    hits = 0
    trials = 0
    for seed in range(200):
        g, _ = sample_random_graph(RandomGraphConfig(d=4, edge_prob=0.2, seed=seed))
        hits += g.n_cross_edges()
        trials += 4 * 3
    freq = hits / trials
    assert 0.15 < freq < 0.25

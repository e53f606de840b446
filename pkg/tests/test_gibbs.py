"""Gibbs machinery: FFBS, conjugate updates, the chain runner, and a
detailed-balance check against a brute-force grid posterior."""
import numpy as np
import pytest

from dphmm import (DiscreteDpSpec, DiscreteEmission, GaussianDpSpec,
                   GibbsConfig, HmmParams, NormalInvGammaBase,
                   TransitionMatrix, TruncatedDirichletSpec,
                   ZeroLikelihoodError, ffbs_states, run_chain,
                   simulate, smoothing_exact)
from dphmm.gibbs import (transition_counts, symbol_counts, update_transitions,
                         update_discrete_emissions, update_mixture_emissions)
from dphmm.modelio import sample_to_record
from tests.conftest import brute_force_path_probs, random_discrete_params


@pytest.fixture
def flat_binary() -> HmmParams:
    return HmmParams(
        TransitionMatrix(np.array([[0.5, 0.5], [0.5, 0.5]]), 0.5),
        np.array([0.5, 0.5]),
        (DiscreteEmission(np.array([0.9, 0.1])), DiscreteEmission(np.array([0.2, 0.8]))))


# ---------------------------------------------------------------------------
# FFBS


def test_ffbs_single_step_bayes(flat_binary):
    rng = np.random.default_rng(0)
    R = 20_000
    hits = sum(ffbs_states(flat_binary, [0], rng)[0] == 0 for _ in range(R))
    p = 9.0 / 11.0
    assert abs(hits / R - p) <= 3 * np.sqrt(p * (1 - p) / R)


def test_ffbs_identical_emissions_prior_marginal():
    pmf = np.array([0.5, 0.5])
    params = HmmParams(TransitionMatrix(np.array([[0.8, 0.2], [0.3, 0.7]]), 0.1),
                       np.array([0.9, 0.1]),
                       (DiscreteEmission(pmf), DiscreteEmission(pmf)))
    rng = np.random.default_rng(1)
    R = 20_000
    draws = np.stack([ffbs_states(params, [0, 1, 0], rng) for _ in range(R)])
    prior = params.mu.copy()
    for t in range(3):
        emp = np.mean(draws[:, t] == 0)
        se = np.sqrt(prior[0] * (1 - prior[0]) / R)
        assert abs(emp - prior[0]) <= 3 * se
        prior = prior @ params.trans.rows


def test_ffbs_path_frequencies_match_enumeration():
    rng = np.random.default_rng(2)
    params = random_discrete_params(rng, k=2, support=2, q_floor=0.1)
    _, y = simulate(params, 3, rng)
    paths, probs = brute_force_path_probs(params, y)
    post = probs / probs.sum()
    R = 50_000
    counts = {}
    for _ in range(R):
        key = tuple(ffbs_states(params, y, rng))
        counts[key] = counts.get(key, 0) + 1
    for path, p in zip(map(tuple, paths), post):
        se = np.sqrt(p * (1 - p) / R)
        assert abs(counts.get(path, 0) / R - p) <= 3 * se + 1e-12


def test_ffbs_marginals_match_smoothing():
    rng = np.random.default_rng(3)
    params = random_discrete_params(rng, k=3, support=3, q_floor=0.05)
    _, y = simulate(params, 6, rng)
    table = smoothing_exact(params, y, 1)
    R = 30_000
    draws = np.stack([ffbs_states(params, y, rng) for _ in range(R)])
    for t in range(6):
        for i in range(3):
            p = table.marginals[t, i]
            se = np.sqrt(p * (1 - p) / R)
            assert abs(np.mean(draws[:, t] == i) - p) <= 3.5 * se + 1e-12


def test_ffbs_rejects_zero_likelihood(flat_binary):
    with pytest.raises(ZeroLikelihoodError):
        ffbs_states(flat_binary, [0, 7], 0)


# ---------------------------------------------------------------------------
# conditional updates


def test_transition_counts():
    states = np.array([0, 0, 1, 0, 1, 1])
    counts = transition_counts(states, 2)
    assert np.array_equal(counts, [[1, 2], [1, 1]])
    assert np.array_equal(transition_counts(np.array([1]), 2), np.zeros((2, 2)))


def test_update_transitions_prior_mean_with_zero_counts():
    spec = TruncatedDirichletSpec(np.ones(2), 0.15)
    rng = np.random.default_rng(4)
    draws = np.stack([update_transitions(np.zeros((2, 2), dtype=np.int64), spec, rng).rows
                      for _ in range(5000)])
    # affine image of a flat Dirichlet: mean 0.5, var scaled by (1-2q)^2
    var = (1 - 2 * 0.15) ** 2 / 12.0
    se = np.sqrt(var / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - 0.5) <= 3 * se)


def test_update_transitions_boundary_concentration():
    spec = TruncatedDirichletSpec(np.ones(2), 0.1)
    counts = np.array([[10 ** 6, 0], [0, 10 ** 6]], dtype=np.int64)
    rng = np.random.default_rng(5)
    draws = np.array([update_transitions(counts, spec, rng).rows[0, 0]
                      for _ in range(1000)])
    assert 0.88 <= draws.mean() <= 0.90
    assert draws.max() <= 0.9 + 1e-12  # floor on the complementary entry


def test_update_transitions_no_floor_is_plain_dirichlet():
    spec = TruncatedDirichletSpec(np.array([2.0, 3.0]), 0.0)
    counts = np.array([[5, 10], [0, 0]], dtype=np.int64)
    rng = np.random.default_rng(6)
    draws = np.array([update_transitions(counts, spec, rng).rows[0, 0]
                      for _ in range(20_000)])
    a, b = 2.0 + 5, 3.0 + 10
    mean = a / (a + b)
    var = a * b / ((a + b) ** 2 * (a + b + 1))
    assert abs(draws.mean() - mean) <= 3 * np.sqrt(var / draws.size)


def test_update_discrete_emissions_moments():
    spec = DiscreteDpSpec(2.0, np.array([0.5, 0.5]))
    rng = np.random.default_rng(7)
    counts = np.array([[30, 10], [0, 0]], dtype=np.int64)
    R = 10_000
    draws = np.empty((R, 2, 2))
    for r in range(R):
        f0, f1 = update_discrete_emissions(counts, spec, rng)
        draws[r, 0], draws[r, 1] = f0.pmf, f1.pmf
    total = 2.0 + 40
    mean = (2.0 * 0.5 + 30) / total
    var = mean * (1 - mean) / (total + 1)
    assert abs(draws[:, 0, 0].mean() - mean) <= 3 * np.sqrt(var / R)
    # zero-count state reproduces the prior mean
    assert abs(draws[:, 1, 0].mean() - 0.5) <= 3 * np.sqrt((1 / 12) / R)


def test_update_discrete_emissions_dominating_symbol():
    alpha = 1.0
    spec = DiscreteDpSpec(alpha, np.array([0.5, 0.5]))
    counts = np.array([[10_000, 0]], dtype=np.int64)
    rng = np.random.default_rng(8)
    draws = np.array([update_discrete_emissions(counts, spec, rng)[0].pmf[0]
                      for _ in range(2000)])
    assert draws.mean() >= 0.99


def test_update_discrete_emissions_extends_support():
    spec = DiscreteDpSpec(2.0, np.array([0.5, 0.5]))
    counts = np.array([[3, 2, 7]], dtype=np.int64)  # symbol 2 beyond the base
    rng = np.random.default_rng(9)
    pmf = update_discrete_emissions(counts, spec, rng)[0].pmf
    assert pmf.size == 3 and pmf[2] > 0


def test_update_mixture_empty_state_draws_from_prior():
    spec = GaussianDpSpec(1.0, NormalInvGammaBase(0.0, 1.0, 3.0, 2.0), truncation=8)
    current = (None,)  # unused for an empty group
    out = update_mixture_emissions([np.array([])], [None], spec, 10)
    mix = out[0]
    assert mix.n_atoms == 8 and mix.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_update_mixture_concentrates_on_constant_data():
    from dphmm import sample_dp_mixture

    spec = GaussianDpSpec(1.0, NormalInvGammaBase(0.0, 1.0, 4.0, 0.5), truncation=6)
    rng = np.random.default_rng(11)
    c = 3.0
    ys = np.full(1000, c)
    start = sample_dp_mixture(spec, rng)
    means = []
    mix = start
    for _ in range(200):
        mix = update_mixture_emissions([ys], [mix], spec, rng)[0]
        means.append(float(mix.weights @ mix.locations))
    assert abs(np.mean(means[50:]) - c) <= 0.05


def test_update_mixture_single_atom_is_conjugate_posterior():
    base = NormalInvGammaBase(1.0, 2.0, 5.0, 3.0)
    spec = GaussianDpSpec(1.0, base, truncation=1)
    rng = np.random.default_rng(12)
    ys = np.random.default_rng(0).normal(2.0, 0.5, size=40)
    n, ybar = ys.size, ys.mean()
    count = base.loc_count + n
    loc = (base.loc_count * base.loc + n * ybar) / count
    shape = base.shape + n / 2
    scale = (base.scale + 0.5 * np.sum((ys - ybar) ** 2)
             + 0.5 * base.loc_count * n * (ybar - base.loc) ** 2 / count)
    start = (None,)
    from dphmm import sample_dp_mixture

    mix = sample_dp_mixture(spec, rng)
    locs = []
    vars_ = []
    for _ in range(5000):
        mix = update_mixture_emissions([ys], [mix], spec, rng)[0]
        locs.append(mix.locations[0])
        vars_.append(mix.scales[0] ** 2)
    locs, vars_ = np.asarray(locs), np.asarray(vars_)
    assert abs(locs.mean() - loc) <= 3 * locs.std(ddof=1) / np.sqrt(locs.size)
    expect_var = scale / (shape - 1)
    assert abs(vars_.mean() - expect_var) <= 3 * vars_.std(ddof=1) / np.sqrt(vars_.size)


# ---------------------------------------------------------------------------
# chain runner


def _binary_config(**kw):
    defaults = dict(n_iter=12, burn_in=10, thin=1, seed=5,
                    transition_prior=TruncatedDirichletSpec(np.ones(2), 0.1),
                    emission_prior=DiscreteDpSpec(2.0, np.array([0.5, 0.5])))
    defaults.update(kw)
    return GibbsConfig(**defaults)


def test_run_chain_sample_arithmetic(flat_binary):
    _, y = simulate(flat_binary, 30, 0)
    assert len(run_chain(y, _binary_config(n_iter=11, burn_in=10, thin=1))) == 1
    assert len(run_chain(y, _binary_config(n_iter=13, burn_in=10, thin=3))) == 1
    assert len(run_chain(y, _binary_config(n_iter=20, burn_in=10, thin=2))) == 5


def test_run_chain_deterministic(flat_binary):
    _, y = simulate(flat_binary, 40, 1)
    cfg = _binary_config(n_iter=30, burn_in=20, thin=2, seed=9)
    a = [sample_to_record(s) for s in run_chain(y, cfg)]
    b = [sample_to_record(s) for s in run_chain(y, cfg)]
    assert a == b
    c = [sample_to_record(s) for s in run_chain(y, cfg, chain_id=1)]
    assert a != c


def test_run_chain_samples_satisfy_invariants(flat_binary):
    _, y = simulate(flat_binary, 50, 2)
    cfg = _binary_config(n_iter=40, burn_in=20, thin=2)
    for s in run_chain(y, cfg):
        Q = s.params.trans.rows
        assert Q.min() >= cfg.transition_prior.q_floor
        assert np.allclose(Q.sum(axis=1), 1.0, atol=1e-12)
        for e in s.params.emissions:
            assert abs(e.pmf.sum() - 1.0) <= 1e-12
        assert s.states.size == y.size


def test_run_chain_config_validation():
    spec = TruncatedDirichletSpec(np.ones(2), 0.1)
    dp = DiscreteDpSpec(2.0, np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        GibbsConfig(10, 10, 1, 0, spec, dp)      # burn_in == n_iter
    with pytest.raises(ValueError):
        GibbsConfig(10, 2, 0, 0, spec, dp)       # thin < 1
    with pytest.raises(ValueError):
        GibbsConfig(10, 2, 1, 0, spec, None)     # nothing to update


def test_run_chain_fixed_emissions(golden_truth):
    _, y = simulate(golden_truth, 60, 3)
    cfg = _binary_config(n_iter=30, burn_in=20, thin=2,
                         emission_prior=None,
                         fixed_emissions=golden_truth.emissions)
    for s in run_chain(y, cfg):
        assert s.params.emissions == golden_truth.emissions


# ---------------------------------------------------------------------------
# detailed balance against a grid posterior


def test_gibbs_matches_grid_posterior():
    """Empirical law of (Q00, f0(0)) under long Gibbs runs versus the exact
    posterior integrated on a parameter grid, for tiny binary data."""
    q = 0.2
    y = np.array([0, 1, 0, 0, 1])
    mu = np.array([0.5, 0.5])

    # exact posterior on a midpoint grid; flat priors on the support boxes
    G = 30
    q_grid = q + (1 - 2 * q) * (np.arange(G) + 0.5) / G
    p_grid = (np.arange(G) + 0.5) / G
    Q00, Q10, P0, P1 = np.meshgrid(q_grid, q_grid, p_grid, p_grid, indexing="ij")
    like = np.zeros_like(Q00)
    import itertools
    for path in itertools.product(range(2), repeat=y.size):
        term = np.full_like(Q00, 0.5)
        for t, (prev, cur) in enumerate(zip((None,) + path, path)):
            if t > 0:
                trans = np.where(np.equal(prev, 0),
                                 np.where(np.equal(cur, 0), Q00, 1 - Q00),
                                 np.where(np.equal(cur, 0), Q10, 1 - Q10))
                term = term * trans
            emit = np.where(np.equal(cur, 0), P0, P1)
            term = term * (emit if y[t] == 0 else 1 - emit)
        like += term
    post = like / like.sum()
    bins = 6
    fold = G // bins
    marg = post.sum(axis=(1, 3))                     # (Q00, P0)
    exact_cells = marg.reshape(bins, fold, bins, fold).sum(axis=(1, 3))

    cfg = GibbsConfig(n_iter=40_000, burn_in=2000, thin=1, seed=17,
                      transition_prior=TruncatedDirichletSpec(np.ones(2), q),
                      emission_prior=DiscreteDpSpec(2.0, np.array([0.5, 0.5])),
                      mu=mu)
    samples = run_chain(y, cfg)
    q00 = np.array([s.params.trans.rows[0, 0] for s in samples])
    f00 = np.array([s.params.emissions[0].pmf[0] for s in samples])
    qi = np.clip(((q00 - q) / (1 - 2 * q) * bins).astype(int), 0, bins - 1)
    pi = np.clip((f00 * bins).astype(int), 0, bins - 1)
    emp_cells = np.zeros((bins, bins))
    np.add.at(emp_cells, (qi, pi), 1.0)
    emp_cells /= emp_cells.sum()

    tv = 0.5 * np.abs(emp_cells - exact_cells).sum()
    assert tv <= 0.05, f"TV between Gibbs and grid posterior is {tv:.4f}"

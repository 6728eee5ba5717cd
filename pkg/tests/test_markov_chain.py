import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference as ref
from qwsearch import (
    DomainError,
    ErgodicityError,
    InterpolatedChain,
    InvalidParameterError,
    MarkovChain,
    ReversibilityError,
    SingularityError,
    discriminant,
    discriminant_derivative,
    extended_hitting_time,
    grid_walk,
    hitting_time_matrix,
    hitting_time_spectral,
    ht_derivative_check,
    interpolate,
    lazify,
    monte_carlo_hitting_time,
    random_walk_search,
    s_star,
    stationary_interpolated,
    theta,
    uniform_chain,
)
from qwsearch.chain import absorbing, stationary_distribution
from qwsearch.hitting import ode_ratio, resolvent_A

TWO = np.array([[0.5, 0.5], [0.5, 0.5]])


def random_case(seed, n_max=12):
    rng = np.random.default_rng(seed)
    P = ref.random_reversible(int(rng.integers(2, n_max + 1)), rng)
    mask = ref.random_marked(P, rng)
    return P, tuple(np.flatnonzero(mask).tolist()), mask


seeds = st.integers(0, 2**32 - 1)


# stationary distribution, laziness, absorbing and interpolated chains


def test_stationary_examples():
    assert np.allclose(stationary_distribution(np.full((4, 4), 0.25)), 0.25)
    assert np.allclose(stationary_distribution(TWO), 0.5)


def test_stationary_lazy_torus_against_power_iteration():
    P = grid_walk(4, lazy=True).P
    v = np.full(16, 1.0) / 16
    v[0] += 0.5
    v /= v.sum()
    for _ in range(2000):
        v = v @ P
    assert np.allclose(stationary_distribution(P), v, atol=1e-12)
    assert np.allclose(v, 1 / 16, atol=1e-12)


def test_stationary_rejects_non_ergodic_chains():
    with pytest.raises(ErgodicityError, match="reducible"):
        stationary_distribution(np.eye(2))
    with pytest.raises(ErgodicityError, match="periodic"):
        stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_row_sums_validated():
    with pytest.raises(InvalidParameterError):
        MarkovChain(np.array([[0.5, 0.49], [0.5, 0.5]]))


def test_lazify_examples():
    assert np.array_equal(lazify(np.eye(3)).P, np.eye(3))
    assert np.allclose(lazify(np.array([[0.0, 1.0], [1.0, 0.0]])).P, 0.5)


def test_lazify_doubles_hitting_time():
    assert hitting_time_matrix(TWO, (1,)) == pytest.approx(2.0)
    assert hitting_time_matrix(lazify(TWO), (1,)) == pytest.approx(4.0)


def test_lazify_makes_spectrum_nonnegative():
    P = grid_walk(4).P
    assert not MarkovChain(P).has_nonnegative_spectrum()
    L = lazify(P)
    assert L.has_nonnegative_spectrum()
    assert np.allclose(L.pi, MarkovChain(P).pi)


def test_absorbing_examples():
    assert np.array_equal(absorbing(TWO, (0, 1)).P, np.eye(2))
    assert np.allclose(absorbing(TWO, (1,)).P, [[0.5, 0.5], [0.0, 1.0]])
    with pytest.raises(InvalidParameterError):
        absorbing(TWO, ())


def test_interpolate_examples():
    assert np.allclose(interpolate(TWO, (1,), 0.0).matrix, TWO)
    assert np.allclose(interpolate(TWO, (1,), 1.0).matrix, absorbing(TWO, (1,)).P)
    assert np.allclose(interpolate(TWO, (1,), 0.5).matrix, [[0.5, 0.5], [0.25, 0.75]])
    with pytest.raises(InvalidParameterError):
        interpolate(TWO, (1,), 1.2)


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.0, 1.0))
def test_interpolated_block_structure(seed, s):
    P, M, mask = random_case(seed)
    Ps = interpolate(P, M, s).matrix
    assert np.allclose(Ps, ref.interpolated(P, mask, s), atol=1e-15)
    assert np.allclose(Ps.sum(axis=1), 1.0)
    assert np.array_equal(Ps[~mask], P[~mask])
    if s == 1.0:
        assert np.allclose(Ps, absorbing(P, M).P)


def test_stationary_interpolated_examples():
    assert np.allclose(stationary_interpolated(TWO, (1,), 0.0), [0.5, 0.5])
    pi = stationary_interpolated(uniform_chain(3), (2,), 0.5)
    # proportional to (1/5, 1/5, 2/5); normalised it is (1/4, 1/4, 1/2)
    assert np.allclose(pi, np.array([0.2, 0.2, 0.4]) / 0.8)
    left = ref.stationary(interpolate(uniform_chain(3), (2,), 0.5).matrix)
    assert np.allclose(pi, left)
    P = grid_walk(3).P
    assert np.allclose(stationary_interpolated(P, (1, 5), 1.0), [0, .5, 0, 0, 0, .5, 0, 0, 0])


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.0, 0.999))
def test_stationary_interpolated_is_fixed(seed, s):
    P, M, mask = random_case(seed)
    pi = stationary_interpolated(P, M, s)
    assert np.allclose(pi @ ref.interpolated(P, mask, s), pi, atol=1e-10)
    assert pi.sum() == pytest.approx(1.0)


def test_theta_examples():
    assert theta(0.2, 1.0) == pytest.approx(math.pi / 2)
    assert math.sin(theta(0.2, 0.0)) == pytest.approx(math.sqrt(0.2))
    assert math.sin(theta(1 / 3, 0.5)) == pytest.approx(math.sqrt(0.5))
    with pytest.raises(DomainError):
        theta(0.6, 0.0)
    with pytest.raises(DomainError):
        theta(0.0, 0.0)


def test_s_star_examples():
    assert s_star(1 / 3) == pytest.approx(0.5)
    assert s_star(0.25) == pytest.approx(2 / 3)
    assert s_star(0.5) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        s_star(0.6)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.5))
def test_s_star_balances_angle(p):
    assert math.sin(theta(p, s_star(p))) == pytest.approx(math.sqrt(0.5))


# discriminant and its derivative


def test_discriminant_of_symmetric_chain_is_chain():
    P = uniform_chain(5).P
    assert np.allclose(discriminant(InterpolatedChain(P, (0,), 0.0)), P)


def test_discriminant_direct_sum_at_s_1():
    assert np.allclose(discriminant(InterpolatedChain(TWO, (1,), 1.0)), [[0.5, 0.0], [0.0, 1.0]])


def test_discriminant_rejects_irreversible_chain():
    cyc = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    with pytest.raises(ReversibilityError):
        discriminant(InterpolatedChain(cyc, (0,), 0.2))


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.0, 0.99))
def test_discriminant_conjugation_identity(seed, s):
    P, M, mask = random_case(seed)
    Ps = ref.interpolated(P, mask, s)
    r = np.sqrt(ref.stationary(Ps))
    conj = (r[:, None] * Ps) / r[None, :]
    D = discriminant(InterpolatedChain(P, M, s))
    assert np.allclose(D, conj, atol=1e-10)
    assert np.allclose(D, D.T, atol=1e-14)


def test_discriminant_derivative_examples():
    assert np.array_equal(discriminant_derivative(InterpolatedChain(TWO, (), 0.3)), np.zeros((2, 2)))
    h = 1e-6
    fd = (ref.discriminant(ref.interpolated(TWO, ref.mask_of([1], 2), h)) - TWO) / h
    exact = discriminant_derivative(InterpolatedChain(TWO, (1,), 0.0))
    assert np.allclose(exact, fd, atol=1e-6)
    with pytest.raises(SingularityError):
        discriminant_derivative(InterpolatedChain(TWO, (1,), 1.0))


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([0.0, 0.25, 0.5, 0.75]))
def test_discriminant_derivative_matches_finite_difference(seed, s):
    P, M, mask = random_case(seed, 10)
    exact = discriminant_derivative(InterpolatedChain(P, M, s))
    h = 1e-6
    fd = (ref.discriminant(ref.interpolated(P, mask, s + h))
          - ref.discriminant(ref.interpolated(P, mask, s - h))) / (2 * h)
    assert np.abs(fd - exact).max() <= 1e-6 * np.abs(exact).max()
    assert np.array_equal(exact[np.ix_(~mask, ~mask)], np.zeros(((~mask).sum(),) * 2))


# hitting times


def test_hitting_time_matrix_complete_graph():
    assert hitting_time_matrix(np.full((4, 4), 0.25), (0,)) == pytest.approx(4.0)
    for n, m in ((8, 1), (16, 2), (12, 3)):
        assert hitting_time_matrix(uniform_chain(n), tuple(range(m))) == pytest.approx(n / m)


def test_hitting_time_matrix_small_cases():
    assert hitting_time_matrix(TWO, (1,)) == pytest.approx(2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert hitting_time_matrix(TWO, (0, 1)) == 0.0


def test_hitting_time_matrix_p_U_flag():
    ht = hitting_time_matrix(uniform_chain(8), (0,))
    assert hitting_time_matrix(uniform_chain(8), (0,), include_p_U=True) == pytest.approx(ht * 7 / 8)


def test_hitting_time_warns_above_half():
    with pytest.warns(UserWarning, match="p_M"):
        assert hitting_time_matrix(uniform_chain(4), (0, 1, 2)) == pytest.approx(4 / 3)


def test_hitting_time_unreachable_is_singular():
    # two disconnected components: the chain is rejected before inversion
    P = np.array([[1.0, 0, 0], [0, 0.5, 0.5], [0, 0.5, 0.5]])
    with pytest.raises((SingularityError, ErgodicityError)):
        hitting_time_matrix(P, (2,))


def test_hitting_time_spectral_examples():
    K4 = np.full((4, 4), 0.25)
    ht = hitting_time_matrix(K4, (0,))
    assert hitting_time_spectral(InterpolatedChain(K4, (0,), 1.0)) == pytest.approx(ht, rel=1e-8)
    mid = hitting_time_spectral(InterpolatedChain(K4, (0,), s_star(0.25)))
    assert mid == pytest.approx(ht / 4, rel=1e-8)
    at0 = hitting_time_spectral(InterpolatedChain(K4, (0,), 0.0))
    assert at0 == pytest.approx(0.25, rel=1e-10)
    assert at0 == pytest.approx(ref.hitting_time_spectral(K4, ref.mask_of([0], 4), 0.0), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from([0.0, 0.1, 0.5, 0.9, 0.99]))
def test_hitting_times_match_independent_formulas(seed, s):
    P, M, mask = random_case(seed, 20)
    assert hitting_time_matrix(P, M) == pytest.approx(ref.hitting_time_matrix(P, mask), rel=1e-9)
    assert hitting_time_spectral(InterpolatedChain(P, M, s)) == pytest.approx(
        ref.hitting_time_spectral(P, mask, s), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from([0.0, 0.3, 0.6, 0.9, 0.99]))
def test_sin4_identity_single_marked_vertex(seed, s):
    rng = np.random.default_rng(seed)
    P = ref.random_reversible(int(rng.integers(2, 21)), rng)
    x = int(np.argmin(ref.stationary(P)))
    ich = InterpolatedChain(P, (x,), s)
    ht = hitting_time_matrix(P, (x,))
    assert abs(hitting_time_spectral(ich) - ich.sin2_theta**2 * ht) <= 1e-8 * (1 + ht)


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from([0.0, 0.3, 0.6, 0.9, 0.99]))
def test_sin4_identity_with_extended_hitting_time(seed, s):
    P, M, _ = random_case(seed, 20)
    ich = InterpolatedChain(P, M, s)
    ht_plus = extended_hitting_time(P, M)
    assert abs(hitting_time_spectral(ich) - ich.sin2_theta**2 * ht_plus) <= 1e-8 * (1 + ht_plus)
    assert ht_plus >= hitting_time_matrix(P, M) - 1e-9


def test_multi_marked_hitting_time_can_exceed_matrix_formula():
    # two marked vertices of a path-like chain: the s -> 1 limit keeps extra weight
    rng = np.random.default_rng(7)
    gaps = []
    for _ in range(20):
        P = ref.random_reversible(10, rng)
        gaps.append(extended_hitting_time(P, (0, 9)) - hitting_time_matrix(P, (0, 9)))
    assert max(gaps) > 1e-3


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([0.0, 0.5, 0.9]))
def test_top_eigenvector_splits_into_U_and_M(seed, s):
    P, M, _ = random_case(seed)
    ich = InterpolatedChain(P, M, s)
    v = ich.spectral.vectors[:, -1]
    v = v * np.sign(v.sum())
    th = ich.theta
    assert np.linalg.norm(v - (math.cos(th) * ich.U_state + math.sin(th) * ich.M_state)) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([0.0, 0.5, 0.9]))
def test_resolvent_annihilates_top_eigenvector(seed, s):
    P, M, _ = random_case(seed)
    ich = InterpolatedChain(P, M, s)
    A = resolvent_A(ich)
    assert np.linalg.norm(A @ ich.spectral.vectors[:, -1]) <= 1e-8
    th = ich.theta
    pair = math.sin(th) * A @ ich.M_state + math.cos(th) * A @ ich.U_state
    assert np.linalg.norm(pair) <= 1e-7


def test_ht_derivative_check_two_state():
    rep = ht_derivative_check(TWO, (1,), 0.5, h=1e-5)
    assert rep["analytic"] > 0
    assert rep["relative_error"] <= 1e-4


def test_ht_derivative_check_rejects_endpoints():
    with pytest.raises(InvalidParameterError):
        ht_derivative_check(TWO, (1,), 1.0)


@pytest.mark.parametrize("s", [0.0, 0.2, 0.7, 0.95])
def test_integrated_ode_gives_sin4_ratio(s):
    P = uniform_chain(9).P
    ratio = hitting_time_spectral(InterpolatedChain(P, (0,), s)) / hitting_time_matrix(P, (0,))
    assert ode_ratio(1 / 9, s) == pytest.approx(ratio, rel=1e-9)
    assert ratio == pytest.approx(ref.sin2_theta(1 / 9, s) ** 2, rel=1e-9)


# classical baselines


def test_random_walk_search_all_marked():
    out = random_walk_search(uniform_chain(4), (0, 1, 2, 3), 10, seed=1)
    assert out.steps == 0 and out.found
    assert (out.ledger.setup_calls, out.ledger.update_calls, out.ledger.check_calls) == (1, 0, 1)


def test_random_walk_search_nothing_marked():
    out = random_walk_search(uniform_chain(4), (), 25, seed=1)
    assert not out.found
    assert out.result_label() == "no marked vertex"
    assert (out.ledger.update_calls, out.ledger.check_calls) == (25, 26)


def test_random_walk_search_mean_on_K32():
    chain = uniform_chain(32)
    rng = np.random.default_rng(5)
    steps = [random_walk_search(chain, (0,), None, seed=rng).steps for _ in range(100_000)]
    assert abs(np.mean(steps) - 32) <= 3.2


def test_monte_carlo_examples():
    est = monte_carlo_hitting_time(TWO, (1,), 20_000, seed=3)
    assert abs(est.mean - 2.0) <= 3 * est.stderr
    assert monte_carlo_hitting_time(TWO, (0, 1), 10, seed=3).mean == 0.0
    est = monte_carlo_hitting_time(np.full((4, 4), 0.25), (0,), 20_000, seed=4)
    assert abs(est.mean - 4.0) <= 3 * est.stderr


def test_monte_carlo_stationary_start_includes_p_U():
    P = uniform_chain(8)
    est = monte_carlo_hitting_time(P, (0,), 40_000, seed=8, start="stationary")
    assert abs(est.mean - hitting_time_matrix(P, (0,), include_p_U=True)) <= 3 * est.stderr


def test_monte_carlo_step_cap_is_reported():
    est = monte_carlo_hitting_time(uniform_chain(50), (0,), 200, seed=2, step_cap=5)
    assert est.flagged and est.capped > 0


@pytest.mark.parametrize("name", ["K8", "torus4", "cycle6-lazy", "random10"])
def test_monte_carlo_agrees_with_matrix_formula(name):
    rng = np.random.default_rng(11)
    P = {
        "K8": uniform_chain(8).P,
        "torus4": grid_walk(4).P,
        "cycle6-lazy": lazify(0.5 * (np.roll(np.eye(6), 1, 1) + np.roll(np.eye(6), -1, 1))).P,
        "random10": ref.random_reversible(10, rng),
    }[name]
    est = monte_carlo_hitting_time(P, (3,), 20_000, seed=12)
    assert abs(est.mean - ref.hitting_time_matrix(P, ref.mask_of([3], P.shape[0]))) <= 3 * est.stderr

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from spectrumshare.model import (
    CompetitionParams,
    InsufficientChannelsError,
    NetworkAllocState,
    StabilityWarning,
    closed_form_equilibrium,
    fairness_index,
    growth_delta,
    interior_fixed_point,
    predicted_convergence_time,
    stability_eigenvalues,
    step_network,
)

P = CompetitionParams(alpha=0.9, r=1.95, capacity=18.0)


def params(**kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StabilityWarning)
        return CompetitionParams(**kw)


# -- growth_delta ------------------------------------------------------------

def test_growth_delta_zero_share_is_absorbing():
    assert growth_delta(0.0, 5.0, 11.0, P) == 0.0


def test_growth_delta_lone_species():
    assert growth_delta(1.0, 0.0, 0.0, P) == pytest.approx(1.95 * (1 - 1 / 18), abs=1e-12)
    assert growth_delta(1.0, 0.0, 0.0, P) == pytest.approx(1.841666666, abs=1e-8)


def test_growth_delta_vanishes_at_interior_point():
    s = 18 / 4.6
    assert growth_delta(s, 1 * s, 3 * s, P) == pytest.approx(0.0, abs=1e-12)
    assert growth_delta(3.9130435, 3.9130435, 11.7391304, P) == pytest.approx(0.0, abs=1e-6)


def test_growth_delta_rejects_zero_capacity():
    with pytest.raises(ValueError):
        growth_delta(1.0, 0.0, 0.0, CompetitionParams(capacity=0.0))


@pytest.mark.parametrize("alpha", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
def test_fixed_point_grid(alpha):
    for l in range(2, 21):
        for C in range(1, 51):
            p = CompetitionParams(alpha=alpha, r=1.95, capacity=float(C))
            s = interior_fixed_point([l], C + 1, alpha)[0] / l
            assert abs(growth_delta(s, (l - 1) * s, 0.0, p)) < 1e-9


# -- params ------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    {"alpha": 0.0}, {"r": -1.0}, {"capacity": -1.0}, {"step": 0.0}, {"tolerance": 0.0}, {"max_rounds": 0},
])
def test_params_reject_invalid(kw):
    with pytest.raises(ValueError):
        CompetitionParams(**kw)


def test_params_warn_outside_stable_region():
    with pytest.warns(StabilityWarning):
        CompetitionParams(alpha=1.2)
    with pytest.warns(StabilityWarning):
        CompetitionParams(r=2.5)


def test_for_channels():
    assert CompetitionParams.for_channels(20, 2).capacity == 18.0
    with pytest.raises(InsufficientChannelsError):
        CompetitionParams.for_channels(1, 2)


def test_state_requires_matching_lengths():
    with pytest.raises(ValueError):
        NetworkAllocState("a", 2, (0.1,))
    with pytest.raises(ValueError):
        NetworkAllocState("a", 1, (-0.1,))
    assert NetworkAllocState.seeded("a", 3).total == pytest.approx(0.3)


# -- step_network ------------------------------------------------------------

def test_step_single_species_by_hand():
    state, d = step_network(NetworkAllocState.seeded("a", 1, 0.1), 0.0, P)
    assert state.sub_shares[0] == pytest.approx(0.1 + 1.95 * 0.1 * (1 - 0.1 / 18), abs=1e-12)
    assert state.sub_shares[0] == pytest.approx(0.2939167, abs=1e-7)
    assert d == pytest.approx(0.1939167, abs=1e-7)


def test_step_at_fixed_point_is_stationary():
    s = 18 / 4.6
    state = NetworkAllocState("b", 3, (s, s, s))
    new, d = step_network(state, 2 * s, P)
    assert d < P.tolerance
    assert new.sub_shares == pytest.approx(state.sub_shares, abs=1e-12)


def test_step_extinct_network_stays_extinct():
    state = NetworkAllocState("a", 4, (0.0,) * 4)
    new, d = step_network(state, 7.0, P)
    assert new == state
    assert d == 0.0


def test_step_clamps_at_zero():
    p = CompetitionParams(alpha=0.9, r=1.95, capacity=1.0)
    new, _ = step_network(NetworkAllocState("a", 2, (5.0, 5.0)), 5.0, p)
    assert new.sub_shares == (0.0, 0.0)


def test_step_uses_round_start_sibling_sums():
    state = NetworkAllocState("a", 2, (1.0, 2.0))
    new, _ = step_network(state, 3.0, P)
    expected = [s + growth_delta(s, 3.0 - s, 3.0, P) for s in (1.0, 2.0)]
    assert new.sub_shares == pytest.approx(expected, abs=1e-15)


def test_discrete_contraction_near_equilibrium():
    rng = np.random.default_rng(11)
    s_star = 18 / 4.6
    for _ in range(20):
        a = NetworkAllocState("a", 2, tuple(s_star * (1 + rng.uniform(-0.1, 0.1, 2))))
        b = NetworkAllocState("b", 3, tuple(s_star * (1 + rng.uniform(-0.1, 0.1, 3))))
        for _ in range(5000):
            ta, tb = a.total, b.total
            a, da = step_network(a, tb, P)
            b, db = step_network(b, ta, P)
            if max(da, db) < P.tolerance:
                break
        else:
            pytest.fail("perturbed state did not return")
        assert a.sub_shares + b.sub_shares == pytest.approx((s_star,) * 5, abs=1e-3)


# -- equilibria ----------------------------------------------------------------

def test_closed_form_examples():
    assert closed_form_equilibrium([2, 3], 20) == pytest.approx([7.2, 10.8])
    assert closed_form_equilibrium([1, 1], 2) == [0.0, 0.0]
    assert closed_form_equilibrium([1, 1, 1, 1], 8) == pytest.approx([1, 1, 1, 1])
    with pytest.raises(InsufficientChannelsError, match="insufficient channels"):
        closed_form_equilibrium([1, 1, 1], 2)


def test_interior_fixed_point_examples():
    assert interior_fixed_point([2, 3], 20, 0.9) == pytest.approx([7.826087, 11.7391304], abs=1e-6)
    assert interior_fixed_point([2, 1], 20, 0.9) == pytest.approx([12.8571429, 6.4285714], abs=1e-6)
    assert interior_fixed_point([2, 3], 20, 1.0) == pytest.approx([7.2, 10.8])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=1, max_size=12), st.integers(0, 60),
       st.floats(0.05, 0.95))
def test_normalized_fixed_point_matches_closed_form(reqs, extra, alpha):
    N = len(reqs) + extra
    cf = closed_form_equilibrium(reqs, N)
    fp = interior_fixed_point(reqs, N, alpha)
    assert math.fsum(cf) == pytest.approx(N - len(reqs), abs=1e-9)
    total = math.fsum(fp)
    if total > 0:
        norm = [x * (N - len(reqs)) / total for x in fp]
        assert norm == pytest.approx(cf, abs=1e-9)


# -- eigenvalues --------------------------------------------------------------

def _linearised_matrix(l, r, alpha):
    """The l x l matrix with -r/l on the diagonal and -r*alpha/l elsewhere."""
    A = np.full((l, l), -r * alpha / l)
    np.fill_diagonal(A, -r / l)
    return A


def test_eigenvalue_example():
    major, minor = stability_eigenvalues(5, P)
    assert major == pytest.approx(-1.794, abs=1e-12)
    assert minor == pytest.approx(-0.039, abs=1e-12)


@pytest.mark.parametrize("l", [1, 2, 5, 13])
@pytest.mark.parametrize("alpha,r", [(0.9, 1.95), (0.3, 0.7), (0.5, 1.2)])
def test_eigenvalues_match_numerical_spectrum(l, alpha, r):
    p = CompetitionParams(alpha=alpha, r=r, capacity=10.0)
    major, minor = stability_eigenvalues(l, p)
    eig = np.linalg.eigvalsh(_linearised_matrix(l, r, alpha))
    assert eig.min() == pytest.approx(major, abs=1e-12)
    if l > 1:
        assert np.allclose(eig[1:], minor, atol=1e-12)


def test_linearised_matrix_is_finite_difference_jacobian_at_alpha_one():
    # At alpha = 1 the C/l point is the rest point, so the matrix is exact there.
    l, r, C = 5, 1.3, 18.0
    s_star = np.full(l, C / l)

    def field(s):
        return r * s * (1 - (s + (s.sum() - s)) / C)

    h = 1e-6
    J = np.column_stack([(field(s_star + h * e) - field(s_star - h * e)) / (2 * h) for e in np.eye(l)])
    assert np.allclose(J, _linearised_matrix(l, r, 1.0), atol=1e-6)
    assert stability_eigenvalues(l, params(alpha=1.0, r=r))[1] == 0.0


def test_true_rest_point_is_stable_too():
    # Finite-difference Jacobian at C / (1 + alpha (l - 1)) has negative spectrum.
    l, r, alpha, C = 5, 1.95, 0.9, 18.0
    s_star = np.full(l, C / (1 + alpha * (l - 1)))

    def field(s):
        return r * s * (1 - (s + alpha * (s.sum() - s)) / C)

    h = 1e-6
    J = np.column_stack([(field(s_star + h * e) - field(s_star - h * e)) / (2 * h) for e in np.eye(l)])
    assert np.all(np.linalg.eigvals(J).real < 0)


def test_single_species_eigenvalue():
    assert stability_eigenvalues(1, P)[0] == pytest.approx(-1.95)


@settings(max_examples=300)
@given(st.floats(0.001, 0.999), st.floats(0.001, 50), st.integers(2, 500))
def test_eigenvalues_negative(alpha, r, l):
    major, minor = stability_eigenvalues(l, params(alpha=alpha, r=r))
    assert major < 0 and minor < 0


# -- convergence time -----------------------------------------------------------

def _integrated_time(s0, target, p, l):
    A = (l - 1) * s0

    def rhs(t, s):
        return p.r * s * (1 - (s + p.alpha * A) / p.capacity)

    def hit(t, s):
        return s[0] - target
    hit.terminal = True
    sol = solve_ivp(rhs, (0, 1000), [s0], events=hit, rtol=1e-12, atol=1e-14)
    return sol.t_events[0][0]


def test_convergence_time_example_against_quadrature():
    target = 0.99 * 17.64
    t = predicted_convergence_time(0.1, target, P, 5)
    assert t == pytest.approx(_integrated_time(0.1, target, P, 5), rel=1e-6)
    assert t == pytest.approx(5.109, abs=1e-3)


def test_convergence_time_zero_when_already_there():
    assert predicted_convergence_time(0.1, 0.1, P, 5) == 0.0


def test_convergence_time_beyond_asymptote():
    with pytest.raises(ValueError, match="asymptote"):
        predicted_convergence_time(0.1, 17.64, P, 5)


@settings(max_examples=100)
@given(st.floats(0.2, 17.0), st.floats(0.2, 17.0))
def test_convergence_time_monotone_in_target(a, b):
    lo, hi = sorted((a, b))
    assert predicted_convergence_time(0.1, lo, P, 5) <= predicted_convergence_time(0.1, hi, P, 5)


# -- fairness ----------------------------------------------------------------

def test_fairness_examples():
    assert fairness_index([2, 3], [2, 3]) == pytest.approx(1.0)
    assert fairness_index([7.2, 10.8], [2, 3]) == pytest.approx(1.0)
    assert fairness_index([9, 9], [2, 3]) == pytest.approx(0.96)
    with pytest.raises(ValueError, match="fairness undefined"):
        fairness_index([0, 0], [1, 2])


shares_reqs = st.integers(1, 12).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0, 100), min_size=n, max_size=n).filter(lambda s: sum(s) > 1e-6),
    st.lists(st.integers(1, 10), min_size=n, max_size=n),
))


@settings(max_examples=300)
@given(shares_reqs, st.floats(1e-3, 1e3))
def test_fairness_scale_invariant(sr, c):
    s, r = sr
    assert fairness_index([c * x for x in s], r) == pytest.approx(fairness_index(s, r), rel=1e-9)


@settings(max_examples=300)
@given(shares_reqs)
def test_fairness_bounded_by_one(sr):
    s, r = sr
    assert 0 < fairness_index(s, r) <= 1 + 1e-12


@settings(max_examples=200)
@given(st.lists(st.integers(1, 10), min_size=1, max_size=12), st.floats(0.01, 10))
def test_fairness_one_when_proportional(r, k):
    assert fairness_index([k * x for x in r], r) == pytest.approx(1.0, abs=1e-12)

import inspect
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectrumshare.allocation import (
    DisturbanceEvent,
    allocated_channel_count,
    clamp_channel_budgets,
    run_allocation,
)
from spectrumshare.mediator import Mediator
from spectrumshare.model import (
    CompetitionParams,
    InsufficientChannelsError,
    NetworkAllocState,
    StabilityWarning,
    closed_form_equilibrium,
    fairness_index,
    interior_fixed_point,
    step_network,
)


def _nets(reqs):
    return [NetworkAllocState.seeded(f"net{i + 1}", r) for i, r in enumerate(reqs)]


@pytest.fixture(scope="module")
def fig2_run():
    params = CompetitionParams.for_channels(20, 2)
    return run_allocation(_nets([2, 3]), params)


def test_two_networks_reach_weighted_split(fig2_run):
    report, trace = fig2_run
    assert report.converged
    assert report.normalized_totals == pytest.approx((7.2, 10.8), abs=1e-4)
    raw = interior_fixed_point([2, 3], 20, 0.9)
    assert report.raw_totals == pytest.approx(raw, abs=1e-4)
    assert trace.rows[0].round == 0 and math.isinf(trace.rows[0].max_delta)
    assert trace.rows[-1].max_delta < 1e-6
    assert len(trace) == report.rounds + 1


def test_sub_species_equal_within_network(fig2_run):
    report, _ = fig2_run
    for st_ in report.final_states:
        assert max(st_.sub_shares) - min(st_.sub_shares) < 1e-6


def test_delete_rebalances_to_equal_requirements():
    params = CompetitionParams.for_channels(20, 2)
    ev = DisturbanceEvent("delete", "net2", 3, 400)
    report, trace = run_allocation(_nets([2, 3]), params, [ev])
    assert report.converged and report.rounds > 400
    assert report.normalized_totals == pytest.approx((9.0, 9.0), abs=1e-4)
    assert report.final_states[1].requirement == 2
    row = next(r for r in trace.rows if r.round == 400)
    assert row.events == ("delete net2/3",)
    assert row.labels[1] == (1, 2)


def test_silence_then_recovery():
    params = CompetitionParams.for_channels(20, 2)
    ev = DisturbanceEvent("silence", "net2", 3, 300, 319)
    report, trace = run_allocation(_nets([2, 3]), params, [ev])
    assert report.converged and report.rounds >= 320
    by_round = {r.round: r for r in trace.rows}
    assert by_round[300].events == ("silence net2/3",)
    for rnd in range(300, 320):
        # zeroed at the start of the round, and zero stays zero under the update
        assert by_round[rnd].sub_shares[1][2] == 0.0
    assert by_round[320].events == ("release net2/3",)
    assert report.normalized_totals == pytest.approx((7.2, 10.8), abs=1e-4)


def test_no_convergence_before_last_event():
    params = CompetitionParams.for_channels(20, 2)
    ev = DisturbanceEvent("silence", "net1", 1, 5000, 5001)
    report, _ = run_allocation(_nets([2, 3]), params, [ev])
    assert report.rounds > 5002


def test_disturbance_validation():
    with pytest.raises(ValueError):
        DisturbanceEvent("silence", "net1", 1, 10)
    with pytest.raises(ValueError):
        DisturbanceEvent("delete", "net1", 0, 10)
    with pytest.raises(ValueError):
        DisturbanceEvent("explode", "net1", 1, 10)
    params = CompetitionParams.for_channels(20, 2)
    with pytest.raises(ValueError, match="unknown network"):
        run_allocation(_nets([2, 3]), params, [DisturbanceEvent("delete", "zz", 1, 3)])
    with pytest.raises(ValueError, match="only sub-species"):
        run_allocation(_nets([1, 3]), params, [DisturbanceEvent("delete", "net1", 1, 3)])


def test_all_channels_consumed_by_base_allocation():
    params = CompetitionParams.for_channels(3, 3)
    report, trace = run_allocation(_nets([1, 2, 3]), params)
    assert report.converged and report.rounds == 0
    assert report.raw_totals == (0.0, 0.0, 0.0)
    assert len(trace) == 1


def test_determinism():
    params = CompetitionParams.for_channels(30, 4)
    a = run_allocation(_nets([1, 4, 2, 5]), params)
    b = run_allocation(_nets([1, 4, 2, 5]), params)
    assert a[0] == b[0]
    assert a[1].rows == b[1].rows


def test_non_convergence_reported():
    with pytest.warns(StabilityWarning):
        params = CompetitionParams.for_channels(20, 2, r=2.5)
    report, _ = run_allocation(_nets([2, 3]), params)
    assert not report.converged and report.rounds == params.max_rounds


def test_collapse_is_not_convergence():
    params = CompetitionParams.for_channels(3, 2)
    report, trace = run_allocation([NetworkAllocState.seeded("a", 5, 2.0),
                                    NetworkAllocState.seeded("b", 5, 2.0)], params)
    assert not report.converged
    assert "collapse" in trace.rows[-1].events


class _SpyMediator(Mediator):
    def __init__(self, n):
        super().__init__(n)
        self.seen = []

    def sanitized_sum(self, network_id):
        value = super().sanitized_sum(network_id)
        self.seen.append((network_id, value))
        return value


def test_networks_only_see_sanitized_sums():
    # The update function has no parameter through which foreign per-network
    # data could flow; all foreign input is one scalar from the mediator.
    assert list(inspect.signature(step_network).parameters) == ["state", "beta", "params"]
    params = CompetitionParams.for_channels(20, 3)
    spy = _SpyMediator(20)
    for nid in ("net1", "net2", "net3"):
        spy.register(nid)
    run_allocation(_nets([1, 2, 3]), params, mediator=spy)
    assert spy.seen and all(isinstance(v, float) for _, v in spy.seen)
    for entry in spy.request_log:
        if entry.request["op"] == "get_beta":
            assert set(entry.response) == {"seq", "ok", "beta"}


def test_synchronous_rounds_use_previous_reports():
    params = CompetitionParams.for_channels(20, 2)
    states = _nets([2, 3])
    _, trace = run_allocation(states, params)
    # Recompute round 1 by hand from round 0.
    s1, _ = step_network(states[0], states[1].total, params)
    s2, _ = step_network(states[1], states[0].total, params)
    assert trace.rows[1].sub_shares == (s1.sub_shares, s2.sub_shares)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=2, max_size=6), st.integers(2, 5))
def test_randomized_fairness(reqs, per_net):
    n_channels = per_net * len(reqs)
    params = CompetitionParams.for_channels(n_channels, len(reqs))
    report, _ = run_allocation(_nets(reqs), params)
    assert report.converged
    assert fairness_index(report.normalized_totals, reqs) >= 1 - 1e-6
    np.testing.assert_allclose(report.normalized_totals, closed_form_equilibrium(reqs, n_channels), atol=1e-4)
    assert math.fsum(report.normalized_totals) == pytest.approx(params.capacity)


@pytest.mark.parametrize("share, expected", [(7.2, 8), (0.0, 1), (10.8, 11), (3.0, 4), (2.99997, 4), (2.99, 3)])
def test_allocated_channel_count(share, expected):
    assert allocated_channel_count(share) == expected


def test_allocated_channel_count_rejects_negative():
    with pytest.raises(ValueError):
        allocated_channel_count(-1.0)
    with pytest.raises(ValueError):
        allocated_channel_count(float("nan"))


def test_clamp_examples():
    assert clamp_channel_budgets([8, 12], 20) == [8, 12]
    assert clamp_channel_budgets([4, 17], 20, [3.0, 16.8]) == [3, 17]
    assert clamp_channel_budgets([1, 1], 2) == [1, 1]
    # ties go to the higher index
    assert clamp_channel_budgets([3, 3], 5, [2.5, 2.5]) == [3, 2]
    with pytest.raises(InsufficientChannelsError):
        clamp_channel_budgets([1, 1, 1], 2)
    with pytest.raises(ValueError):
        clamp_channel_budgets([0, 2], 5)


@settings(max_examples=200)
@given(st.lists(st.floats(0, 30, allow_nan=False), min_size=1, max_size=10), st.integers(0, 40))
def test_clamp_properties(shares, extra):
    n_channels = len(shares) + extra
    counts = [allocated_channel_count(s) for s in shares]
    out = clamp_channel_budgets(counts, n_channels, shares)
    assert all(1 <= o <= c for o, c in zip(out, counts))
    assert sum(out) <= n_channels
    if sum(counts) <= n_channels:
        assert out == counts
    else:
        assert sum(out) == n_channels

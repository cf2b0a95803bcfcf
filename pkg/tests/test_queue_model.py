import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alohajam.errors import DomainError, InfeasiblePolicyError, InstabilityError, OverloadWarning, TailMassWarning
from alohajam.queue_model import (
    NO_JAMMING,
    OccupancyDist,
    SideInfo,
    SystemParams,
    TruncationSpec,
    Uniform,
    Vector,
    baseline_no_jamming,
    baseline_pi20,
    certified_stationary,
    dtmc_stationary_truncated,
    jam_budget,
    occupancy_model,
    pi_n0_lower_bound,
    steady_state_sideinfo,
    steady_state_uniform,
    transition_matrix,
)
from oracles import full_lattice_occupancy

BASE = SystemParams.from_alpha(0.8, 0.5)


class TestParams:
    def test_alpha_roundtrip(self):
        assert BASE.lam == pytest.approx(0.2)
        assert BASE.alpha == pytest.approx(0.8)
        p3 = SystemParams(3, 0.1, 0.5)
        assert p3.alpha == pytest.approx(0.8)

    @pytest.mark.parametrize("args", [(1, 0.1, 0.5), (2, 0.1, 0.0), (2, 0.1, 1.0), (2, -0.1, 0.5)])
    def test_invalid(self, args):
        with pytest.raises(DomainError):
            SystemParams(*args)

    def test_unstable(self):
        with pytest.raises(InstabilityError):
            SystemParams.from_alpha(1.0, 0.5).require_stable()

    def test_policy_vectors(self):
        np.testing.assert_array_equal(Uniform(0.1).jam_vector(3), [0, 0.1, 0.1, 0.1])
        np.testing.assert_array_equal(SideInfo(0.2, 0.3).jam_vector(2), [0, 0.3, 0.2])
        np.testing.assert_array_equal(Vector((0.1, 0.2, 0.3)).jam_vector(3), [0, 0.1, 0.2, 0.3])
        with pytest.raises(DomainError):
            Vector((0.1,)).jam_vector(2)
        with pytest.raises(DomainError):
            SideInfo(0.1, 0.1).jam_vector(3)

    def test_occupancy_validation(self):
        with pytest.raises(DomainError):
            OccupancyDist(np.array([0.5, 0.6]))


class TestClosedForms:
    def test_empty_system(self):
        params = SystemParams(2, 0.0, 0.5)
        np.testing.assert_allclose(steady_state_uniform(params, 0.3).pi, [1, 0, 0])
        np.testing.assert_allclose(steady_state_sideinfo(params, 0.3, 0.2).pi, [1, 0, 0])

    def test_uniform_examples(self):
        np.testing.assert_allclose(steady_state_uniform(BASE, 0.0).pi, [0.2, 0.26667, 0.53333], atol=1e-5)
        np.testing.assert_allclose(steady_state_uniform(BASE, 0.1).pi, [0.11111, 0.17778, 0.71111], atol=1e-5)

    def test_sideinfo_collapses_to_uniform(self):
        np.testing.assert_allclose(steady_state_sideinfo(BASE, 0.1, 0.1).pi, steady_state_uniform(BASE, 0.1).pi,
                                   atol=1e-12)

    def test_sideinfo_example(self):
        np.testing.assert_allclose(steady_state_sideinfo(BASE, 0.0, 0.5).pi, [0.04, 0.32, 0.64], atol=1e-5)

    def test_infeasible(self):
        with pytest.raises(InfeasiblePolicyError):
            steady_state_uniform(BASE, 0.25)
        with pytest.raises(InfeasiblePolicyError):
            steady_state_sideinfo(BASE, 0.1, 0.7)

    def test_baseline(self):
        assert baseline_no_jamming(BASE).pi[2] == pytest.approx(0.5 * 0.64 / 0.6, abs=1e-12)
        assert baseline_pi20(BASE) == pytest.approx(0.53333, abs=1e-5)
        np.testing.assert_array_equal(baseline_no_jamming(BASE).pi, steady_state_uniform(BASE, 0.0).pi)
        assert baseline_no_jamming(SystemParams(2, 0.0, 0.5)).pi[2] == 0.0

    @pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
    @pytest.mark.parametrize("a", [0.3, 0.6, 0.9])
    def test_pi20_monotone_in_q(self, p, a):
        params = SystemParams.from_alpha(a, p)
        qs = np.linspace(0.0, 1.0 - a, 41)
        pi20 = [steady_state_uniform(params, q).pi[2] for q in qs]
        assert np.all(np.diff(pi20) >= -1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(0.02, 0.97), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_distributions_valid(self, p, a, fq, fw):
        params = SystemParams.from_alpha(a, p)
        q = fq * (1 - a)
        w = fw * (1 - a + p * a)
        for dist in (steady_state_uniform(params, q), steady_state_sideinfo(params, q, w)):
            assert np.all(dist.pi >= 0)
            assert dist.pi.sum() == pytest.approx(1.0, abs=1e-9)


class TestBudgets:
    def test_jam_budget(self):
        assert jam_budget(BASE) == pytest.approx(0.2)
        assert jam_budget(SystemParams(3, 0.1, 0.5)) == pytest.approx(0.2)
        with pytest.warns(OverloadWarning):
            assert jam_budget(SystemParams.from_alpha(1.0, 0.5)) == 0.0

    def test_pi_n0_lower_bound(self):
        assert pi_n0_lower_bound(2, 0.5, 0.2) == pytest.approx(0.2 / 0.7, abs=1e-12)
        assert pi_n0_lower_bound(2, 0.5, 0.2) == pytest.approx(0.28571, abs=1e-5)
        assert pi_n0_lower_bound(3, 0.5, 0.1) == pytest.approx(0.28571, abs=1e-5)
        assert pi_n0_lower_bound(2, 0.5, 0.0) == 0.0
        with pytest.raises(DomainError):
            pi_n0_lower_bound(3, 1.0, 0.1)
        with pytest.raises(DomainError):
            pi_n0_lower_bound(3, 0.5, -0.1)


class TestOracle:
    def test_empty(self):
        d = dtmc_stationary_truncated(SystemParams(2, 0.0, 0.5), Uniform(0.2), TruncationSpec(20))
        np.testing.assert_allclose(d.pi, [1, 0, 0], atol=1e-14)
        assert d.certified

    def test_stochastic_matrix(self):
        P, states = transition_matrix(BASE, Uniform(0.1), 30)
        np.testing.assert_allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-13)
        assert np.all(np.diff(states, axis=1) >= 0)

    @pytest.mark.parametrize("policy", [Uniform(0.0), Uniform(0.1), SideInfo(0.05, 0.3)])
    def test_matches_full_lattice_two_users(self, policy):
        d = dtmc_stationary_truncated(BASE, policy, TruncationSpec(40))
        ref = full_lattice_occupancy(2, BASE.lam, BASE.p, policy.jam_vector(2), 40)
        np.testing.assert_allclose(d.pi, ref, atol=1e-11)

    def test_matches_full_lattice_three_users(self):
        params = SystemParams(3, 0.05, 0.5)
        pol = Vector((0.1, 0.2, 0.1))
        d = dtmc_stationary_truncated(params, pol, TruncationSpec(12))
        ref = full_lattice_occupancy(3, params.lam, params.p, pol.jam_vector(3), 12)
        np.testing.assert_allclose(d.pi, ref, atol=1e-11)

    def test_sums_to_one(self):
        d = dtmc_stationary_truncated(BASE, Uniform(0.1), TruncationSpec(200))
        assert d.pi.sum() == pytest.approx(1.0, abs=1e-9)
        assert d.certified and d.tail < 1e-9

    def test_tail_warning(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error", TailMassWarning)
            with pytest.raises(TailMassWarning):
                dtmc_stationary_truncated(BASE, Uniform(0.19), TruncationSpec(5))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TailMassWarning)
            d = dtmc_stationary_truncated(BASE, Uniform(0.19), TruncationSpec(5))
        assert not d.certified

    def test_certified_grows_cap(self):
        d = certified_stationary(BASE, Uniform(0.1), TruncationSpec(40))
        assert d.certified and d.qmax > 40

    def test_truncation_spec(self):
        with pytest.raises(DomainError):
            TruncationSpec(0)
        with pytest.raises(DomainError):
            TruncationSpec(10, 1.5)

    def test_n_user_baseline_is_oracle(self):
        params = SystemParams(3, 0.1, 0.5)
        d = baseline_no_jamming(params)
        assert d.certified and d.source == "dtmc"
        assert d.pi.sum() == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("n,p,a", [(2, 0.2, 0.8), (2, 0.5, 0.8), (3, 0.2, 0.8)])
    def test_lower_bound_holds_at_heavy_load(self, n, p, a):
        params = SystemParams.from_alpha(a, p, n)
        exact = certified_stationary(params, NO_JAMMING).pi[n]
        assert pi_n0_lower_bound(n, p, params.lam) <= exact + 1e-6

    @pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
    @pytest.mark.parametrize("a", [0.3, 0.6, 0.9])
    def test_jamming_raises_all_busy_probability(self, p, a):
        params = SystemParams.from_alpha(a, p)
        base = dtmc_stationary_truncated(params, NO_JAMMING, TruncationSpec(200)).pi[2]
        for q in (0.25, 0.5, 0.75):
            d = dtmc_stationary_truncated(params, Uniform(q * (1 - a)), TruncationSpec(200))
            assert d.pi[2] >= base - 1e-6

    def test_critical_limit_for_many_users(self):
        params = SystemParams(3, 0.1, 0.5)
        d = occupancy_model(params)(Uniform(0.2))
        assert d.source == "critical-limit"
        np.testing.assert_array_equal(d.pi, [0, 0, 0, 1])

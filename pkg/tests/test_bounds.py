import json
import math
import pathlib

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from alohajam.bounds import (
    BoundsRow,
    beta_bar_n,
    bounds_row,
    composite_crossover,
    lb_n_strategy1,
    lb_n_strategy2,
    lb_n_strategy3,
    lb_strategy1,
    lb_strategy2,
    lb_strategy3,
    rate_sideinfo,
    ub_n_user,
    ub_two_user,
    vector_box,
)
from alohajam.errors import InfeasiblePolicyError, InstabilityError, UncertifiedError
from alohajam.queue_model import OccupancyDist, SystemParams, baseline_no_jamming, sideinfo_box
from oracles import z_rate_bruteforce

BASE = SystemParams.from_alpha(0.8, 0.5)
EMPTY = SystemParams(2, 0.0, 0.5)
GOLDEN = json.loads((pathlib.Path(__file__).parent / "golden" / "golden.json").read_text())


def capacity_oracle(budget, pc):
    """Constrained Z-capacity by bounded search on the joint-table mutual information."""
    if budget <= 0:
        return 0.0
    r = minimize_scalar(lambda u: -z_rate_bruteforce(u, pc), bounds=(0.0, min(budget, 1.0)), method="bounded",
                        options={"xatol": 1e-12})
    return max(-r.fun, z_rate_bruteforce(min(budget, 1.0), pc))


def ub_oracle(alpha, p):
    pibar = (1 - p) * alpha**2 / (1 - p * alpha)
    beta_bar = min(max(1 - alpha + 1 / pibar - pibar, 0.0), 1.0)
    pc = p / (2 - p)
    first = capacity_oracle(beta_bar, pc) * (1 - (1 - p) ** 2)
    second = p * (1 - p * (1 - alpha) * alpha - alpha**2) / (1 - p * alpha)
    return first + second, beta_bar


class TestStrategy1:
    def test_example(self):
        r = lb_strategy1(BASE)
        assert r.rate == pytest.approx(0.28714, abs=1e-3)
        assert r.rate == pytest.approx(capacity_oracle(0.2, 1 / 3) * 0.75, abs=1e-9)
        assert r.optimizer["q"] == pytest.approx(0.2)

    def test_empty(self):
        assert lb_strategy1(EMPTY).rate == 0.0

    def test_heavy_load(self):
        assert lb_strategy1(SystemParams.from_alpha(0.99999, 0.5)).rate < 1e-3

    def test_unstable(self):
        with pytest.raises(InstabilityError):
            lb_strategy1(SystemParams.from_alpha(1.0, 0.5))


class TestStrategy2:
    def test_example(self):
        r = lb_strategy2(BASE)
        assert r.rate == pytest.approx(0.28714, abs=1e-3)
        assert 0.0 <= r.optimizer["q"] <= 0.2

    def test_empty_keeps_saturated_activity_factor(self):
        # the rate carries (1 - p̂^2) even when no queue is ever backlogged
        r = lb_strategy2(EMPTY)
        assert r.rate == pytest.approx(0.75 * 1.0, abs=1e-9)
        assert r.optimizer["q"] == pytest.approx(0.5, abs=1e-6)

    def test_heavy_load(self):
        assert lb_strategy2(SystemParams.from_alpha(0.99999, 0.5)).rate < 1e-3

    @pytest.mark.parametrize("p", [0.01, 0.3, 0.7, 0.9])
    @pytest.mark.parametrize("a", [0.15, 0.5, 0.85])
    def test_dominates_strategy1(self, p, a):
        params = SystemParams.from_alpha(a, p)
        assert lb_strategy2(params).rate >= lb_strategy1(params).rate - 1e-9


class TestStrategy3:
    def test_sideinfo_examples(self):
        assert rate_sideinfo(BASE, 0.0, 0.0) == 0.0
        assert rate_sideinfo(BASE, 0.2, 0.0) == pytest.approx(0.28714, abs=1e-3)
        assert rate_sideinfo(BASE, 0.0, 0.5) == pytest.approx(0.16, abs=1e-3)
        assert rate_sideinfo(BASE, 0.0, 0.5) == pytest.approx(0.32 * 0.5 * 1.0, abs=1e-9)

    def test_sideinfo_box(self):
        with pytest.raises(InfeasiblePolicyError):
            rate_sideinfo(BASE, 0.3, 0.0)

    def test_optimum(self):
        r = lb_strategy3(BASE)
        gold = GOLDEN["n2_p0.5_alpha0.8"]
        assert r.rate == pytest.approx(gold["lb_strategy3"], rel=1e-6)
        assert 0.28714 - 1e-3 <= r.rate <= ub_two_user(BASE).rate
        assert r.rate >= rate_sideinfo(BASE, 0.2, 0.0) - 1e-12
        assert r.rate >= r.notes["grid_best"] - 1e-12
        qb, wb = sideinfo_box(BASE)
        assert 0 <= r.optimizer["q"] <= qb and 0 <= r.optimizer["w"] <= wb

    def test_dominates_random_candidates(self):
        params = SystemParams.from_alpha(0.6, 0.4)
        r = lb_strategy3(params).rate
        qb, wb = sideinfo_box(params)
        rng = np.random.default_rng(7)
        for q, w in rng.random((50, 2)) * (qb, wb):
            assert r >= rate_sideinfo(params, q, w) - 1e-12

    def test_empty(self):
        assert lb_strategy3(EMPTY).rate == 0.0


class TestUpperBound:
    def test_example(self):
        r = ub_two_user(BASE)
        assert r.rate == pytest.approx(0.58571, abs=1e-3)
        assert r.notes["beta_bar_raw"] == pytest.approx(1.5417, abs=1e-3)
        assert r.notes["clamped"] is True
        assert r.budget == 1.0

    @pytest.mark.parametrize("a", [0.3, 0.8, 0.95, 0.99, 0.999])
    @pytest.mark.parametrize("p", [0.2, 0.5, 0.9])
    def test_term_by_term(self, a, p):
        expected, beta_bar = ub_oracle(a, p)
        r = ub_two_user(SystemParams.from_alpha(a, p))
        assert r.rate == pytest.approx(min(expected, 1.0), abs=1e-9)
        assert r.budget == pytest.approx(beta_bar, abs=1e-12)

    def test_heavy_load_value(self):
        r = ub_two_user(SystemParams.from_alpha(0.999, 0.5))
        assert r.notes["beta_bar_raw"] == pytest.approx(0.00701, abs=1e-5)
        assert r.rate < 0.05

    def test_clamped_to_one(self):
        r = ub_two_user(SystemParams.from_alpha(0.05, 0.9))
        assert r.rate <= 1.0
        assert r.notes["unclamped_rate"] >= r.rate

    def test_dominates_lower_bounds(self):
        for p in (0.2, 0.6):
            for a in (0.2, 0.7, 0.9):
                params = SystemParams.from_alpha(a, p)
                ub = min(ub_two_user(params).rate, 1.0)
                assert lb_strategy2(params).rate <= ub + 1e-9
                assert lb_strategy3(params).rate <= ub + 1e-9


class TestManyUsers:
    def test_reduce_to_two_users(self):
        assert lb_n_strategy1(BASE).rate == pytest.approx(lb_strategy1(BASE).rate, abs=1e-3)
        assert lb_n_strategy2(BASE).rate == pytest.approx(lb_strategy2(BASE).rate, abs=1e-3)
        assert lb_n_strategy3(BASE).rate == pytest.approx(lb_strategy3(BASE).rate, abs=2e-3)

    def test_composite_crossover_two_users(self):
        pi = OccupancyDist(np.array([0.2, 0.3, 0.5]))
        assert composite_crossover(pi, 0.5) == pytest.approx(0.5 / 3)

    def test_empty(self):
        assert lb_n_strategy1(EMPTY).rate == 0.0
        assert lb_n_strategy2(EMPTY).rate == pytest.approx(lb_strategy2(EMPTY).rate, abs=1e-9)

    def test_uncertified_pi_rejected(self):
        pi = OccupancyDist(np.array([0.2, 0.3, 0.5]), certified=False, tail=1e-3, qmax=5)
        with pytest.raises(UncertifiedError):
            lb_n_strategy1(BASE, pi)

    def test_vector_box(self):
        np.testing.assert_allclose(vector_box(BASE), [0.6, 0.2])
        np.testing.assert_allclose(vector_box(SystemParams(3, 0.1, 0.5)), [0.8, 0.6, 0.2])

    def test_variant_b_first_term(self):
        r = ub_n_user(BASE)
        assert r.notes["variant_b_first"] == pytest.approx(1 - 0.53333, abs=1e-5)
        assert r.rate == min(r.notes["variant_a"], r.notes["variant_b"], 1.0)

    def test_variant_b_heavy_load(self):
        assert ub_n_user(SystemParams.from_alpha(0.999, 0.5)).notes["variant_b"] < 0.06

    def test_variant_b_light_load(self):
        r = ub_n_user(SystemParams.from_alpha(1e-4, 0.5))
        assert r.notes["variant_b_first"] == pytest.approx(1.0, abs=1e-4)

    def test_beta_bar_n_matches_two_user(self):
        base = baseline_no_jamming(BASE)
        pib = base.pi[2]
        assert beta_bar_n(BASE, base) == pytest.approx(1 - 0.8 + (base.pi[1] / 0.5) / pib)
        assert math.isinf(beta_bar_n(EMPTY, baseline_no_jamming(EMPTY)))

    def test_three_users_golden(self):
        p3 = SystemParams.from_alpha(0.8, 0.5, 3)
        gold = GOLDEN["n3_p0.5_alpha0.8"]
        s1, s2, ub = lb_n_strategy1(p3), lb_n_strategy2(p3), ub_n_user(p3)
        assert s1.rate == pytest.approx(gold["lb_n_strategy1"], rel=1e-6)
        assert s2.rate == pytest.approx(gold["lb_n_strategy2"], rel=1e-6)
        assert ub.rate == pytest.approx(gold["ub_n_user"], rel=1e-6)
        assert s2.rate >= s1.rate - 1e-9
        assert s1.rate <= ub.rate and s2.rate <= ub.rate

    @pytest.mark.slow
    def test_three_users_vector(self):
        p3 = SystemParams.from_alpha(0.8, 0.5, 3)
        s3 = lb_n_strategy3(p3)
        assert s3.rate >= lb_n_strategy1(p3).rate - 1e-9
        assert s3.rate <= ub_n_user(p3).rate
        assert np.all(np.array(s3.optimizer["qs"]) <= vector_box(p3) + 1e-12)


class TestRow:
    def test_row(self):
        row = bounds_row(2, 0.5, 0.8)
        assert isinstance(row, BoundsRow)
        assert row.lb_s1 <= row.lb_s2 + 1e-9 <= min(row.ub, 1.0) + 2e-9
        assert row.clamped is True and not row.errors

    def test_subset(self):
        row = bounds_row(2, 0.5, 0.8, ("ub",))
        assert row.lb_s1 is None and row.ub is not None

    def test_unstable_point_recorded(self):
        row = bounds_row(2, 0.5, 1.0)
        assert set(row.errors) == {"s1", "s2", "s3", "ub"}

"""Yes/no-list filtering: the calculators, the static build, dynamic updates."""

import math
import warnings
from decimal import Decimal, getcontext

import numpy as np
import pytest

from aqf.core import pack_minirun_id
from aqf.errors import ConstructionFailedError, FormatError, InvalidConfigError
from aqf.filter import AdaptiveFilter
from aqf.hashing import FilterConfig, HashStream, split
from aqf.yesno import (
    NO,
    YES,
    YesNoFilter,
    YesNoParams,
    adaptivity_budget,
    build_static,
    expected_adaptivity_bits,
    lower_bound_bits,
)
from oracles import find_colliders


class TestParams:
    def test_mu(self):
        assert YesNoParams(1000, 2000, 0.5).mu == 1.0
        assert YesNoParams(1000, 0, 0.01).mu == 0.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n=0, m=5, epsilon=0.1),
            dict(n=5, m=-1, epsilon=0.1),
            dict(n=5, m=5, epsilon=0.0),
            dict(n=5, m=5, epsilon=1.0),
            dict(n=5, m=5, epsilon=0.1, u=0),
        ],
    )
    def test_rejects_bad_shapes(self, kwargs):
        with pytest.raises(InvalidConfigError):
            YesNoParams(**kwargs)


class TestBudget:
    def test_frozen_values(self):
        # ceil(slack * n * (2 + log2 e + log2(1+mu))), worked by hand
        assert adaptivity_budget(YesNoParams(1000, 0, 0.01), slack=1.0) == 3443
        assert adaptivity_budget(YesNoParams(1000, 2000, 0.5), slack=1.0) == 4443
        assert adaptivity_budget(YesNoParams(1000, 0, 0.01), slack=1.5) == 5165

    def test_slack_below_one_is_rejected(self):
        with pytest.raises(InvalidConfigError):
            adaptivity_budget(YesNoParams(10, 10, 0.1), slack=0.99)

    def test_budget_dominates_expectation_by_a_bit_per_key(self):
        for n in (1, 10, 1000):
            for m in (0, 10, 10**6):
                for eps in (2**-9, 0.25):
                    p = YesNoParams(n, m, eps)
                    assert adaptivity_budget(p, 1.0) >= expected_adaptivity_bits(p) + n


class TestExpectedBits:
    def test_frozen_values(self):
        no_misses = YesNoParams(1000, 0, 0.5)  # mu = 0
        one_each = YesNoParams(1000, 2000, 0.5)  # mu = 1
        assert expected_adaptivity_bits(no_misses) == pytest.approx(
            2442.6950408889634, rel=1e-12
        )
        assert expected_adaptivity_bits(one_each) == pytest.approx(
            3442.6950408889634, rel=1e-12
        )


class TestLowerBound:
    def test_frozen_values(self):
        assert lower_bound_bits(YesNoParams(1000, 1000, 2**-9)) == pytest.approx(
            9002.81776375174, rel=1e-12
        )
        assert lower_bound_bits(YesNoParams(1000, 10**6, 2**-9)) == pytest.approx(
            11408.479325551051, rel=1e-12
        )
        assert lower_bound_bits(YesNoParams(100, 100, 0.5)) == pytest.approx(
            172.13475204444817, rel=1e-12
        )

    def test_against_high_precision_arithmetic(self):
        getcontext().prec = 60
        ln2 = Decimal(2).ln()
        for n, m, eps in [
            (1000, 1000, Decimal(1) / 512),
            (1000, 10**6, Decimal(1) / 512),
            (100, 100, Decimal("0.5")),
            (7, 2, Decimal("0.25")),
        ]:
            want = Decimal(n) * (max(1 / eps, Decimal(m) / n).ln() / ln2) + (
                min(eps * m, Decimal(n)) / ln2
            )
            got = lower_bound_bits(YesNoParams(n, m, float(eps)))
            assert got == pytest.approx(float(want), rel=1e-12)

    def test_large_epsilon_is_out_of_scope(self):
        with pytest.raises(InvalidConfigError):
            lower_bound_bits(YesNoParams(10, 10, 0.6))
        lower_bound_bits(YesNoParams(10, 10, 0.5))

    def test_small_universe_warns(self):
        with pytest.warns(UserWarning):
            lower_bound_bits(YesNoParams(1000, 1000, 2**-9, u=10**6))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            lower_bound_bits(YesNoParams(1000, 1000, 2**-9, u=10**11))


class TestCreate:
    def test_remainder_width_tracks_epsilon(self):
        assert YesNoFilter.create(YesNoParams(100, 0, 2**-9)).inner.cfg.r == 9
        assert YesNoFilter.create(YesNoParams(100, 0, 0.01)).inner.cfg.r == 7
        assert YesNoFilter.create(YesNoParams(100, 0, 0.6)).inner.cfg.r == 1

    def test_table_is_smallest_that_fits(self):
        p = YesNoParams(5000, 20000, 2**-6)
        f = YesNoFilter.create(p, slack=1.5, seed=3)
        need = p.n + math.ceil(f.budget_bits / f.inner.cfg.r)
        q = f.inner.cfg.q
        assert 20 * need <= 19 * (1 << q)
        assert 20 * need > 19 * (1 << (q - 1))

    def test_dynamic_reserves_room_for_the_no_list(self):
        p = YesNoParams(5000, 20000, 2**-6)
        static_q = YesNoFilter.create(p).inner.cfg.q
        dynamic_q = YesNoFilter.create(p, dynamic=True).inner.cfg.q
        assert dynamic_q > static_q

    def test_oversized_problem_is_rejected(self):
        with pytest.raises(InvalidConfigError):
            YesNoFilter.create(YesNoParams(1 << 58, 0, 2**-9))

    def test_wrapper_requires_the_tag_bit(self):
        inner = AdaptiveFilter(FilterConfig(q=8, r=4, seed=0))
        with pytest.raises(InvalidConfigError):
            YesNoFilter(inner, YesNoParams(10, 10, 0.1))


class TestStaticBuild:
    def _lists(self, n, m, rng):
        pool = rng.choice(1 << 62, size=n + m, replace=False)
        return [int(k) for k in pool[:n]], [int(k) for k in pool[n:]]

    def test_exact_on_both_lists(self):
        rng = np.random.default_rng(71)
        yes, no = self._lists(300, 3000, rng)
        f = build_static(yes, no, epsilon=2**-4, seed=5)
        assert f.inner.cfg.r == 4
        assert all(f.yn_query(y) == YES for y in yes)
        assert all(f.yn_query(z) == NO for z in no)
        # nothing from the NO list was stored
        assert len(f.inner) == 300
        assert 0 < f.consumed_adaptivity_bits < f.budget_bits

    def test_off_list_keys_stay_under_epsilon(self):
        rng = np.random.default_rng(72)
        yes, no = self._lists(300, 3000, rng)
        f = build_static(yes, no, epsilon=2**-4, seed=5)
        fresh = rng.integers(1 << 62, 1 << 63, size=20000, dtype=np.uint64)
        rate = f.inner.frozen_index().query_keys(fresh).mean()
        assert 0 < rate < 2**-4

    def test_construction_is_deterministic(self):
        rng = np.random.default_rng(73)
        yes, no = self._lists(100, 500, rng)
        a = build_static(yes, no, epsilon=2**-5, seed=9)
        b = build_static(yes, no, epsilon=2**-5, seed=9)
        assert a.inner.to_bytes() == b.inner.to_bytes()

    def test_queries_touch_no_state(self):
        rng = np.random.default_rng(74)
        yes, no = self._lists(50, 200, rng)
        f = build_static(yes, no, epsilon=2**-4, seed=1)
        blob = f.inner.to_bytes()
        accesses = f.inner.map_accesses
        for k in yes + no + [int(x) for x in rng.integers(0, 1 << 62, size=100)]:
            f.yn_query(k)
        assert f.inner.to_bytes() == blob
        assert f.inner.map_accesses == accesses

    def test_overlapping_lists_are_rejected(self):
        with pytest.raises(InvalidConfigError):
            build_static([1, 2, 3], [3, 4], epsilon=0.1)

    def test_empty_yes_list_is_rejected(self):
        with pytest.raises(InvalidConfigError):
            build_static([], [1, 2], epsilon=0.1)


class TestConstructionFailure:
    def _adversarial_lists(self, seed, q, r, depth, n):
        rng = np.random.default_rng(75)
        yes = [int(k) for k in rng.choice(1 << 62, size=n, replace=False)]
        no = [find_colliders(q, r, seed, x, depth, 1)[0] for x in yes]
        return yes, no

    def test_deep_colliders_blow_the_reserve(self):
        # epsilon 1/2 gives one-bit chunks, so ten-deep agreement is
        # cheap to mine and each NO key burns eleven slots
        seed = 7
        p = YesNoParams(20, 20, 0.5)
        probe = YesNoFilter.create(p, slack=1.0, seed=seed)
        assert (probe.inner.cfg.q, probe.inner.cfg.r) == (7, 1)
        yes, no = self._adversarial_lists(seed, 7, 1, depth=10, n=20)
        with pytest.raises(ConstructionFailedError) as info:
            build_static(yes, no, epsilon=0.5, slack=1.0, seed=seed)
        assert info.value.budget_bits == adaptivity_budget(p, 1.0)
        assert info.value.consumed_bits > info.value.budget_bits

    def test_more_slack_absorbs_the_same_lists(self):
        seed = 7
        yes, no = self._adversarial_lists(seed, 7, 1, depth=10, n=20)
        f = build_static(yes, no, epsilon=0.5, slack=3.0, seed=seed)
        assert all(f.yn_query(y) == YES for y in yes)
        assert all(f.yn_query(z) == NO for z in no)


class TestDynamic:
    def _fresh(self, n=200, m=200, epsilon=2**-6, seed=11):
        p = YesNoParams(n, m, epsilon)
        return YesNoFilter.create(p, seed=seed, dynamic=True)

    def test_mixed_inserts_answer_correctly(self):
        f = self._fresh()
        rng = np.random.default_rng(76)
        pool = rng.choice(1 << 62, size=400, replace=False)
        yes, no = [int(k) for k in pool[:200]], [int(k) for k in pool[200:]]
        for y, z in zip(yes, no):
            f.yn_insert_yes(y)
            f.yn_insert_no(z)
        assert all(f.yn_query(y) == YES for y in yes)
        assert all(f.yn_query(z) == NO for z in no)

    def test_contradicting_a_stored_key_is_refused(self):
        f = self._fresh()
        f.yn_insert_yes(42)
        with pytest.raises(InvalidConfigError):
            f.yn_insert_no(42)
        f.yn_insert_yes(42)  # same answer again is merely redundant
        assert f.yn_query(42) == YES

    def test_cross_class_collision_extends_the_stored_side(self):
        f = self._fresh(seed=12)
        cfg = f.inner.cfg
        x = 5000
        f.yn_insert_yes(x)
        z = find_colliders(cfg.q, cfg.r, cfg.seed, x, 0, 1)[0]
        f.yn_insert_no(z)
        mid = pack_minirun_id(*split(HashStream(x, cfg.seed), cfg), cfg.q)
        rank = f.inner.map.find_rank(mid, x)
        assert len(f.inner.arr.get_ext(mid, rank)) >= 1
        assert f.yn_query(x) == YES
        assert f.yn_query(z) == NO

    def test_same_class_collision_is_left_alone(self):
        f = self._fresh(seed=13)
        cfg = f.inner.cfg
        x = 6000
        f.yn_insert_yes(x)
        y = find_colliders(cfg.q, cfg.r, cfg.seed, x, 0, 1)[0]
        f.yn_insert_yes(y)
        assert f.inner.arr.ext_slot_count == 0
        assert f.yn_query(x) == YES
        assert f.yn_query(y) == YES

    def test_delete_frees_the_slot(self):
        f = self._fresh()
        f.yn_insert_no(909)
        f.yn_delete(909)
        assert len(f.inner) == 0
        assert f.yn_query(909) == NO


class TestSnapshot:
    def test_static_build_roundtrips(self, tmp_path):
        rng = np.random.default_rng(77)
        pool = rng.choice(1 << 62, size=600, replace=False)
        yes, no = [int(k) for k in pool[:100]], [int(k) for k in pool[100:]]
        f = build_static(yes, no, epsilon=2**-5, seed=21)
        path = tmp_path / "lists.aqfs"
        f.save(path)
        g = YesNoFilter.load(path, f.params, budget_bits=f.budget_bits)
        assert g.budget_bits == f.budget_bits
        assert g.space_bits() == f.space_bits()
        assert all(g.yn_query(y) == YES for y in yes)
        assert all(g.yn_query(z) == NO for z in no)

    def test_untagged_snapshot_is_refused(self, tmp_path):
        plain = AdaptiveFilter(FilterConfig(q=8, r=4, seed=0))
        plain.insert(1)
        path = tmp_path / "plain.aqfs"
        plain.save(path)
        with pytest.raises(FormatError):
            YesNoFilter.load(path, YesNoParams(1, 0, 0.1))

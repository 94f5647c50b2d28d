import itertools
import math

import mpmath
import numpy as np
import pytest

from hcedit.errors import MultipleTestingError
from hcedit.multitest import (
    CriticalValueTable,
    bh_select,
    fisher,
    hc,
    hc_plus,
    hc_values_matrix,
    null_hc_sample,
    simulate_critical_values,
)


def hc_brute_force(pvalues, gamma0=0.4):
    """Direct per-index evaluation, written independently of the library
    path: plain Python floats, explicit loop, explicit tie rule."""
    n = len(pvalues)
    ordered = sorted(pvalues)
    jmax = max(1, math.floor(n * gamma0 + 1e-9))
    best = None
    best_j = None
    for j in range(1, jmax + 1):
        if j == n:
            continue
        t = j / n
        value = math.sqrt(n) * (t - ordered[j - 1]) / math.sqrt(t * (1.0 - t))
        if best is None or value > best:
            best = value
            best_j = j
    if best is None:
        raise ValueError("empty index range")
    threshold = ordered[best_j - 1]
    selected = tuple(i for i, p in enumerate(pvalues) if p <= threshold)
    return best, best_j, threshold, selected


class TestHC:
    def test_exact_uniform_grid_is_a_zero_fixed_point(self):
        r = hc([0.2, 0.4, 0.6, 0.8, 1.0])
        assert r.hc == 0.0
        assert r.j_star == 1  # smallest rank wins the all-zero tie

    def test_hand_evaluated_example(self):
        r = hc([0.01, 0.2, 0.3, 0.5, 0.9], gamma0=0.4)
        hc1 = math.sqrt(5) * (0.2 - 0.01) / math.sqrt(0.2 * 0.8)
        hc2 = math.sqrt(5) * (0.4 - 0.2) / math.sqrt(0.4 * 0.6)
        assert hc1 > hc2
        assert r.hc == pytest.approx(hc1, abs=1e-12)
        assert r.hc == pytest.approx(1.0621, abs=5e-5)
        assert r.j_star == 1
        assert r.p_threshold == 0.01
        assert r.selected == (0,)

    def test_single_pvalue_range_is_degenerate(self):
        with pytest.raises(MultipleTestingError, match="too small"):
            hc([0.5])

    def test_empty_input(self):
        with pytest.raises(MultipleTestingError, match="no testable"):
            hc([])

    def test_out_of_range_pvalues(self):
        with pytest.raises(MultipleTestingError):
            hc([0.0, 0.5])
        with pytest.raises(MultipleTestingError):
            hc([0.5, 1.5])

    def test_threshold_ties_are_all_selected(self):
        r = hc([0.01, 0.01, 0.5, 0.9, 1.0])
        assert r.p_threshold == 0.01
        assert r.selected == (0, 1)
        assert len(r.selected) >= r.j_star

    def test_oracle_equivalence_on_small_grids(self):
        grid = [0.05, 0.35, 0.65, 0.95]
        for n in range(2, 7):
            for combo in itertools.product(grid, repeat=n):
                r = hc(list(combo))
                b_hc, b_j, b_thr, b_sel = hc_brute_force(list(combo))
                assert r.hc == pytest.approx(b_hc, abs=1e-12)
                assert r.j_star == b_j
                assert r.p_threshold == b_thr
                assert r.selected == b_sel

    def test_monotone_response_to_shrinking_any_pvalue(self):
        rng = np.random.default_rng(101)
        for _ in range(200):
            n = int(rng.integers(3, 60))
            p = rng.uniform(0.01, 1.0, size=n)
            base = hc(list(p)).hc
            i = int(rng.integers(0, n))
            q = p.copy()
            q[i] = q[i] * rng.uniform(0.1, 0.999)
            assert hc(list(q)).hc >= base - 1e-12

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        p = list(rng.uniform(0.001, 1.0, size=25))
        r = hc(p)
        perm = rng.permutation(25)
        r2 = hc([p[i] for i in perm])
        assert r2.hc == r.hc
        assert r2.p_threshold == r.p_threshold
        # selected indices map through the permutation: q[i] = p[perm[i]]
        assert sorted(int(perm[i]) for i in r2.selected) == sorted(r.selected)

    def test_gamma0_bounds_validated(self):
        with pytest.raises(MultipleTestingError):
            hc([0.1, 0.2], gamma0=0.0)
        with pytest.raises(MultipleTestingError):
            hc([0.1, 0.2], gamma0=1.0)

    def test_hc_plus_skips_tiny_order_statistics(self):
        p = [1e-6, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.7, 0.8]
        plain = hc(p)
        plus = hc_plus(p)
        assert plain.j_star == 1  # dominated by the tiny P-value
        assert plus.j_star > 1  # restricted to p > 1/n
        assert plus.hc <= plain.hc

    def test_matrix_path_matches_scalar_path(self):
        rng = np.random.default_rng(55)
        draws = rng.random((64, 37))
        vec = hc_values_matrix(draws)
        for row in range(64):
            assert vec[row] == pytest.approx(hc(list(draws[row])).hc, abs=1e-12)


class TestSimulatedCriticalValues:
    def test_determinism(self):
        a = simulate_critical_values([20, 50], [0.1, 0.05], n_sims=1000, seed=9)
        b = simulate_critical_values([20, 50], [0.1, 0.05], n_sims=1000, seed=9)
        assert a.to_json_obj() == b.to_json_obj()

    def test_alpha_one_gives_the_sample_minimum(self):
        table = simulate_critical_values([30], [1.0], n_sims=1000, seed=3)
        sample = null_hc_sample(30, 1000, seed=3)
        assert table.entries[0].threshold == pytest.approx(float(sample.min()))

    def test_thresholds_increase_as_alpha_decreases(self):
        table = simulate_critical_values([40], [0.5, 0.1, 0.05, 0.01], n_sims=2000, seed=4)
        thr = [e.threshold for e in table.entries]
        assert thr == sorted(thr)

    def test_bootstrap_ci_brackets_threshold(self):
        table = simulate_critical_values([40], [0.05], n_sims=2000, seed=4)
        e = table.entries[0]
        assert e.ci_low <= e.threshold <= e.ci_high
        assert e.ci_low < e.ci_high

    def test_minimum_simulation_count_enforced(self):
        with pytest.raises(MultipleTestingError):
            simulate_critical_values([10], [0.05], n_sims=500, seed=1)

    def test_independent_hc_evaluation_of_the_same_stream(self):
        # regenerate the exact simulation stream and rescore it with the
        # brute-force implementation
        n, n_sims, seed = 100, 1000, 12
        sample = null_hc_sample(n, n_sims, seed)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0, n)))
        draws = rng.random((n_sims, n))
        for row in range(0, n_sims, 97):
            expect, _, _, _ = hc_brute_force(list(draws[row]))
            assert sample[row] == pytest.approx(expect, abs=1e-12)

    def test_threshold_stable_across_seeds_within_ci(self):
        a = simulate_critical_values([60], [0.05], n_sims=4000, seed=1)
        b = simulate_critical_values([60], [0.05], n_sims=4000, seed=2)
        ea, eb = a.entries[0], b.entries[0]
        assert ea.ci_low - 0.05 <= eb.threshold <= ea.ci_high + 0.05

    def test_save_load_round_trip(self, tmp_path):
        table = simulate_critical_values([25], [0.05], n_sims=1000, seed=6)
        path = tmp_path / "crit.json"
        table.save(path)
        loaded = CriticalValueTable.load(path)
        assert loaded.to_json_obj() == table.to_json_obj()

    def test_lookup_prefers_exact_then_nearest_larger(self):
        table = simulate_critical_values([50, 100], [0.05], n_sims=1000, seed=8)
        assert table.lookup(100, 0.05).n == 100
        assert table.lookup(75, 0.05).n == 100  # equidistant: err larger
        assert table.lookup(60, 0.05).n == 50
        assert table.lookup(999, 0.05).n == 100
        assert table.lookup(100, 0.01) is None


class TestFisher:
    def test_all_ones(self):
        out = fisher([1.0, 1.0])
        assert out["statistic"] == 0.0
        assert out["pvalue"] == 1.0

    def test_hand_arithmetic(self):
        out = fisher([0.1, 0.01])
        assert out["statistic"] == pytest.approx(13.8155, abs=5e-5)

    def test_constructed_inverse_is_exact(self):
        out = fisher([math.exp(-0.5)])
        assert out["statistic"] == 1.0

    def test_empty_input(self):
        with pytest.raises(MultipleTestingError):
            fisher([])

    def test_chi_square_survival_accuracy_against_mpmath(self):
        mpmath.mp.dps = 40
        cases = [
            ([0.1, 0.01], 2),
            ([0.5] * 10, 10),
            ([0.001] * 50, 50),
            ([math.exp(-5.0)] * 500, 500),  # statistic 5000
            ([0.9999] * 3, 3),
        ]
        for pvals, n in cases:
            out = fisher(pvals)
            stat = out["statistic"]
            assert stat < 1e4
            expect = float(
                mpmath.gammainc(n, stat / 2.0, mpmath.inf, regularized=True)
            )
            assert out["pvalue"] == pytest.approx(expect, rel=1e-10)

    def test_permutation_invariance(self):
        p = [0.2, 0.04, 0.9, 0.6]
        assert fisher(p) == fisher(list(reversed(p)))


class TestBH:
    def test_hand_step_up_walk(self):
        got = bh_select([0.01, 0.02, 0.5, 0.9], alpha=0.1)
        assert got == {0, 1}

    def test_all_ones_select_nothing(self):
        assert bh_select([1.0, 1.0, 1.0], alpha=0.1) == set()

    def test_boundary_equality_is_inclusive(self):
        # singleton sitting exactly at alpha/n is selected
        assert bh_select([0.05], alpha=0.05) == {0}
        assert bh_select([0.025, 0.9], alpha=0.05) == {0}  # p_(1) == 1*alpha/2

    def test_permutation_invariance(self):
        p = [0.01, 0.5, 0.02, 0.9]
        sel = bh_select(p, alpha=0.1)
        assert sel == {0, 2}

    def test_alpha_validated(self):
        with pytest.raises(MultipleTestingError):
            bh_select([0.5], alpha=0.0)
        with pytest.raises(MultipleTestingError):
            bh_select([0.5], alpha=1.0)

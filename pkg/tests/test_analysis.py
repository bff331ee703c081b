import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sebd.analysis import (
    AnalysisError,
    collapse_objective,
    crossing_estimate,
    data_collapse,
    epsilon_to_fidelity,
    fidelity_to_epsilon,
    fit_tau,
    linear_epsilon_estimate,
    pair_crossings,
    tripartite_mi,
)
from sebd.mps import MatrixProductState
from sebd.oracles.tableau import Tableau


class TestFitTau:
    def test_clean_exponential(self):
        t = np.arange(40)
        fit = fit_tau(np.exp(-t / 5.0), window=(5, 30))
        assert abs(fit.tau - 5.0) < 1e-6
        assert fit.residual < 1e-10
        assert fit.n_points == 26

    def test_noisy_exponential(self):
        rng = np.random.default_rng(11)
        t = np.arange(60)
        series = 0.9 * np.exp(-t / 3.0) + rng.normal(0.0, 1e-4, size=60)
        fit = fit_tau(series, window=(0, 15))
        assert abs(fit.tau - 3.0) / 3.0 < 0.02

    def test_default_window_from_strip_length(self):
        t = np.arange(30)
        fit = fit_tau(np.exp(-t / 4.0), l_x=8)
        assert (fit.row_lo, fit.row_hi) == (8, 16)
        assert abs(fit.tau - 4.0) < 1e-6

    def test_constant_series_rejected(self):
        with pytest.raises(AnalysisError, match="unbounded"):
            fit_tau(np.full(20, 0.3), window=(2, 18))

    def test_floor_filtering_and_empty_window(self):
        series = np.concatenate([np.exp(-np.arange(10) / 2.0), np.zeros(10)])
        fit = fit_tau(series, window=(0, 19))
        assert abs(fit.tau - 2.0) < 1e-6
        with pytest.raises(AnalysisError, match="empty"):
            fit_tau(np.zeros(20), window=(0, 19))
        with pytest.raises(AnalysisError, match="outside"):
            fit_tau(np.exp(-np.arange(10) / 2.0), window=(5, 30))

    def test_times_length_mismatch(self):
        with pytest.raises(AnalysisError, match="lengths"):
            fit_tau(np.exp(-np.arange(10) / 2.0), window=(0, 9), times=np.arange(9))

    @given(scale=st.floats(min_value=0.1, max_value=10.0))
    @settings(max_examples=25, deadline=None)
    def test_time_scale_equivariance(self, scale):
        t = np.arange(30, dtype=float)
        series = np.exp(-t / 6.0)
        base = fit_tau(series, window=(0, 29))
        scaled = fit_tau(series, window=(0, 29), times=scale * t)
        assert scaled.tau == pytest.approx(scale * base.tau, rel=1e-9)


def _tableau_entropy(tab):
    return lambda sites, n: tab.entropy(sites)


class TestTripartiteMi:
    def test_product_state_zero_all_orders(self):
        psi = MatrixProductState.new_product_state(12)
        quarters = ((0, 1, 2), (3, 4, 5), (6, 7, 8))
        for n in (1.0, 2.0):
            assert abs(tripartite_mi(psi.subsystem_renyi, quarters, n=n)) < 1e-12

    def test_ghz_positive_log2(self):
        tab = Tableau(8)
        tab.h(0)
        for i in range(1, 8):
            tab.cnot(0, i)
        quarters = ((0, 1), (2, 3), (4, 5))
        i3 = tripartite_mi(_tableau_entropy(tab), quarters)
        assert i3 == pytest.approx(math.log(2.0), abs=1e-12)

    def test_permutation_symmetry(self):
        tab = Tableau(8)
        rng = np.random.default_rng(3)
        for _ in range(60):
            a, b = rng.choice(8, size=2, replace=False)
            tab.h(int(a))
            tab.s(int(b))
            tab.cnot(int(a), int(b))
        ent = _tableau_entropy(tab)
        q = ((0, 1), (2, 3), (4, 5))
        ref = tripartite_mi(ent, q)
        for perm in ((1, 0, 2), (2, 1, 0), (1, 2, 0)):
            assert tripartite_mi(ent, tuple(q[i] for i in perm)) == pytest.approx(ref, abs=1e-12)

    def test_overlap_and_arity_errors(self):
        ent = lambda sites, n: 0.0
        with pytest.raises(AnalysisError, match="overlap"):
            tripartite_mi(ent, ((0, 1), (1, 2), (3, 4)))
        with pytest.raises(AnalysisError, match="three"):
            tripartite_mi(ent, ((0, 1), (2, 3)))


def planted_points(eps_c=0.05, nu=1.3, sizes=(8, 12, 16, 24)):
    pts = []
    for ell in sizes:
        for eps in np.linspace(0.01, 0.09, 17):
            pts.append((eps, ell, math.tanh((eps - eps_c) * ell ** (1.0 / nu))))
    return pts


class TestDataCollapse:
    def test_planted_crossing_recovered(self):
        fit = data_collapse(planted_points())
        assert fit.identifiable
        assert abs(fit.eps_c - 0.05) / 0.05 < 0.05
        assert abs(fit.nu - 1.3) / 1.3 < 0.10

    def test_error_box_contains_optimum(self):
        fit = data_collapse(planted_points())
        eps_lo, eps_hi, nu_lo, nu_hi = fit.box
        assert eps_lo <= fit.eps_c <= eps_hi
        assert nu_lo <= fit.nu <= nu_hi

    def test_constant_data_non_identifiable(self):
        pts = [(e, ell, 0.7) for ell in (8, 16) for e in np.linspace(0.01, 0.09, 9)]
        fit = data_collapse(pts)
        assert not fit.identifiable
        assert fit.r_min < 1e-18

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(AnalysisError, match="three"):
            data_collapse([(0.01, 8, 0.2), (0.02, 16, 0.3)])
        with pytest.raises(AnalysisError, match="distinct"):
            data_collapse([(0.01, 8, 0.2), (0.02, 8, 0.3), (0.03, 8, 0.4)])

    def test_argmin_invariances(self):
        pts = planted_points(sizes=(8, 16))
        base = data_collapse(pts)
        rng = np.random.default_rng(0)
        shuffled = [pts[i] for i in rng.permutation(len(pts))]
        assert data_collapse(shuffled).eps_c == pytest.approx(base.eps_c, abs=1e-9)
        scaled = [(e, ell, 3.0 * y) for e, ell, y in pts]
        refit = data_collapse(scaled)
        assert refit.eps_c == pytest.approx(base.eps_c, abs=1e-9)
        assert refit.nu == pytest.approx(base.nu, abs=1e-9)
        assert refit.r_min == pytest.approx(9.0 * base.r_min, rel=1e-6)

    def test_objective_scaling(self):
        arrs = (
            np.array([0.01, 0.03, 0.05, 0.07, 0.02, 0.04, 0.06, 0.08]),
            np.array([8.0, 8.0, 8.0, 8.0, 16.0, 16.0, 16.0, 16.0]),
            np.array([0.1, 0.3, 0.6, 0.8, 0.05, 0.35, 0.75, 0.9]),
        )
        r1 = collapse_objective(arrs, 0.05, 1.3)
        r2 = collapse_objective((arrs[0], arrs[1], 2.0 * arrs[2]), 0.05, 1.3)
        assert r2 == pytest.approx(4.0 * r1, rel=1e-12)

    def test_grid_dump(self):
        fit, (eps_grid, nu_grid, r) = data_collapse(planted_points(sizes=(8, 16)), return_grid=True)
        assert r.shape == (len(eps_grid), len(nu_grid))
        assert r.min() >= 0.0
        assert fit.r_min <= r.min() + 1e-15


class TestCrossings:
    def test_planted_common_crossing(self):
        eps = np.linspace(0.01, 0.09, 33)
        curves = {ell: (eps, -np.tanh((0.05 - eps) * ell)) for ell in (8, 12, 16)}
        xs = pair_crossings(curves)
        assert len(xs) == 3
        assert all(abs(x - 0.05) < 1e-9 for x in xs)
        mean, half = crossing_estimate(curves)
        assert mean == pytest.approx(0.05, abs=1e-9)
        assert half < 1e-9

    def test_tail_noise_ignored(self):
        eps = np.linspace(0.0, 0.2, 41)
        base = {ell: np.tanh((eps - 0.05) * ell) - 1.0 for ell in (8, 16)}
        rng = np.random.default_rng(2)
        curves = {}
        for ell, y in base.items():
            y = y.copy()
            tail = eps > 0.15
            y[tail] += rng.normal(0.0, 1e-4, size=tail.sum())
            curves[ell] = (eps, y)
        xs = pair_crossings(curves)
        assert len(xs) == 1
        assert abs(xs[0] - 0.05) < 5e-3

    def test_errors(self):
        eps = np.linspace(0.0, 0.1, 11)
        with pytest.raises(AnalysisError, match="two curves"):
            pair_crossings({8: (eps, np.tanh(eps))})
        with pytest.raises(AnalysisError, match="grid"):
            pair_crossings({8: (eps, eps), 16: (eps[:-1], eps[:-1])})
        same = {8: (eps, eps + 1.0), 16: (eps, eps + 2.0)}
        with pytest.raises(AnalysisError, match="no curve crossings"):
            pair_crossings(same)


class TestFidelityConversion:
    def test_example_values(self):
        assert epsilon_to_fidelity(0.025) == pytest.approx(0.9605, abs=1e-12)
        assert linear_epsilon_estimate(0.96) == pytest.approx(0.025, abs=1e-12)
        assert epsilon_to_fidelity(0.0) == 1.0

    def test_round_trip(self):
        for eps in np.linspace(0.0, 0.2, 41):
            f = epsilon_to_fidelity(eps)
            assert abs(fidelity_to_epsilon(f) - eps) < 1e-12

    @given(eps=st.floats(min_value=0.0, max_value=0.5))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_property(self, eps):
        assert fidelity_to_epsilon(epsilon_to_fidelity(eps)) == pytest.approx(eps, abs=1e-10)

    def test_monotone_decreasing(self):
        grid = np.linspace(0.0, 0.5, 100)
        vals = [epsilon_to_fidelity(e) for e in grid]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_domain_errors(self):
        with pytest.raises(AnalysisError):
            epsilon_to_fidelity(-0.1)
        with pytest.raises(AnalysisError):
            epsilon_to_fidelity(1.5)
        with pytest.raises(AnalysisError):
            fidelity_to_epsilon(0.0)
        with pytest.raises(AnalysisError):
            fidelity_to_epsilon(1.0001)
        with pytest.raises(AnalysisError, match="invertible"):
            fidelity_to_epsilon(0.1)
        with pytest.raises(AnalysisError):
            linear_epsilon_estimate(0.0)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import affine_flow, affine_tau, const_flow, const_tau, exponent_by_quad
from stickyflow.exceptions import ArgumentError, DomainError, IterationLimitError
from stickyflow.flow import VelocityField, integrate
from stickyflow.measures import (AtomicMeasure, BLFunction, DensitySpec, density_to_atoms,
                                 dual_bl_norm, leq, tv_norm)
from stickyflow.regularized import (AbsorptionParams, MeasureTrajectory, Regularizer,
                                    apply_absorption, free_transport, regularizer_gap,
                                    sampled_regularizer_gap, solve_closed_form, solve_picard,
                                    time_grid)

ONE = VelocityField.constant(1.0)
AFFINE = VelocityField.affine(1.0, 1.0)
RATE = AbsorptionParams(1.0)
DELTA0 = AtomicMeasure.dirac(0.0)


class TestRegularizer:
    @pytest.mark.parametrize("n", [1, 2, 3, 10, 64])
    def test_shape(self, n):
        f = Regularizer(n)
        xs = np.linspace(0, 1, 1001)
        expected = np.maximum(0.0, n * (xs - (1 - 1 / n)))
        assert np.allclose(f(xs), expected, atol=1e-12)
        assert f(1.0) == 1.0
        assert np.all((f(xs) >= 0) & (f(xs) <= 1))
        assert f.bl_norm == 1 + n

    def test_piecewise_linear_representation(self):
        f = Regularizer(4)
        assert f.breakpoints == (0.0, 0.75, 1.0)
        assert f.node_values == (0.0, 0.0, 1.0)
        plain = BLFunction(f.breakpoints, f.node_values)
        xs = np.linspace(0, 1, 101)
        assert np.allclose(plain(xs), f(xs), atol=1e-14)

    @pytest.mark.parametrize("bad", [0, -1, 1.5, True])
    def test_rejects_bad_n(self, bad):
        with pytest.raises(ArgumentError):
            Regularizer(bad)


class TestAbsorptionParams:
    @pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
    def test_rate_must_be_positive(self, bad):
        with pytest.raises(DomainError):
            AbsorptionParams(bad)

    def test_degenerate_bypass(self):
        assert AbsorptionParams.degenerate().rate == 0.0


class TestApplyAbsorption:
    def test_outside_layer(self):
        assert len(apply_absorption(Regularizer(2), RATE, AtomicMeasure.dirac(0.25))) == 0

    def test_at_boundary(self):
        assert apply_absorption(Regularizer(2), RATE, AtomicMeasure.dirac(1.0)).atoms == [(1.0, -1.0)]

    def test_inside_layer(self):
        out = apply_absorption(Regularizer(2), AbsorptionParams(2.0), AtomicMeasure.dirac(0.75, 3.0))
        assert out.atoms == [(0.75, -3.0)]

    def test_norm_bound(self):
        m = AtomicMeasure([0.2, 0.8, 0.95, 1.0], [1.0, -2.0, 0.5, 1.5])
        f = Regularizer(5)
        out = apply_absorption(f, AbsorptionParams(0.7), m)
        assert dual_bl_norm(out) <= 0.7 * f.bl_norm * dual_bl_norm(m) + 1e-12


class TestRegularizerGap:
    def test_examples(self):
        assert regularizer_gap(2, 4) == 0.5
        assert regularizer_gap(3, 3) == 0.0
        assert regularizer_gap(1, 100) == pytest.approx(0.99, abs=1e-15)

    def test_order_enforced(self):
        with pytest.raises(ArgumentError):
            regularizer_gap(5, 2)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 500), st.integers(0, 500))
    def test_sampled_matches_exact(self, n, k):
        m = n + k
        assert sampled_regularizer_gap(n, m) == pytest.approx(regularizer_gap(n, m), abs=1e-12)


class TestTimeGrid:
    def test_divides(self):
        g = time_grid(1.5, 1e-3)
        assert g.size == 1501 and g[-1] == 1.5

    def test_not_divisible(self):
        with pytest.raises(ArgumentError):
            time_grid(1.0, 0.3)

    def test_trajectory_requires_uniform_grid(self):
        with pytest.raises(ArgumentError):
            MeasureTrajectory([0.0, 0.1, 0.3], [AtomicMeasure.zero()] * 3)


class TestClosedForm:
    def test_terminal_weight(self):
        traj = solve_closed_form(ONE, Regularizer(2), RATE, DELTA0, 1.0, 1e-3)
        assert traj.terminal.atoms == [(1.0, pytest.approx(math.exp(-0.25), abs=1e-12))]

    def test_before_layer_exactly_one(self):
        traj = solve_closed_form(ONE, Regularizer(2), RATE, DELTA0, 0.4, 1e-3)
        assert traj.terminal.weights[0] == 1.0

    def test_past_boundary(self):
        traj = solve_closed_form(ONE, Regularizer(2), RATE, DELTA0, 2.0, 1e-3)
        assert traj.terminal.total_mass == pytest.approx(math.exp(-1.25), abs=1e-12)

    @pytest.mark.parametrize("n", [1, 3, 7])
    @pytest.mark.parametrize("x0", [0.0, 0.35, 0.9])
    def test_exponents_match_quad(self, n, x0):
        T = 1.3
        for v, flow, tau in ((ONE, const_flow, const_tau), (AFFINE, affine_flow, affine_tau)):
            traj = solve_closed_form(v, Regularizer(n), RATE, AtomicMeasure.dirac(x0), T, 0.01)
            for t in (0.31, 0.77, 1.3):
                E = traj.info["exponents"][traj.node_index(t), 0]
                assert E == pytest.approx(exponent_by_quad(flow, tau, n, x0, t), abs=1e-9)

    def test_general_bl_function(self):
        # f = 1 on [0, 1]: every atom decays like exp(-a t)
        f = BLFunction((0.0, 1.0), (1.0, 1.0))
        traj = solve_closed_form(AFFINE, f, AbsorptionParams(0.5), AtomicMeasure([0.1, 0.6], [1, 2]), 1.0, 0.01)
        assert traj.terminal.total_mass == pytest.approx(3 * math.exp(-0.5), abs=1e-12)

    def test_rejects_signed_initial_data(self):
        with pytest.raises(DomainError):
            solve_closed_form(ONE, Regularizer(2), RATE, AtomicMeasure([0.1, 0.5], [1, -1]), 1.0, 0.1)

    def test_csv(self, tmp_path):
        traj = solve_closed_form(ONE, Regularizer(2), RATE, AtomicMeasure([0.0, 0.5], [1, 1]), 1.0, 0.5)
        path = tmp_path / "traj.csv"
        traj.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,atom_index,x,w"
        assert len(lines) == 1 + 2 + 2 + 1  # atoms merge at 1 by the end


class TestPicard:
    def test_zero_rate_is_free_transport(self):
        mu0 = AtomicMeasure([0.0, 0.4], [1.0, 2.0])
        traj = solve_picard(AFFINE, Regularizer(2), AbsorptionParams.degenerate(), mu0, 1.0, 1e-2)
        free = free_transport(AFFINE, mu0, 1.0, 1e-2)
        assert all(a == b for a, b in zip(traj.measures, free.measures))

    def test_terminal_mass(self):
        traj = solve_picard(ONE, Regularizer(2), RATE, DELTA0, 1.0, 1e-3, tol=1e-8)
        assert traj.terminal.total_mass == pytest.approx(math.exp(-0.25), abs=1e-4)

    def test_zero_initial_measure(self):
        traj = solve_picard(ONE, Regularizer(2), RATE, AtomicMeasure.zero(), 1.0, 0.1)
        assert all(len(m) == 0 for m in traj.measures)

    def test_iteration_limit_carries_residual(self):
        with pytest.raises(IterationLimitError) as info:
            solve_picard(ONE, Regularizer(2), RATE, DELTA0, 2.0, 1e-2, tol=1e-12, max_iter=3)
        assert info.value.residual > 1e-12

    @pytest.mark.parametrize("v", [ONE, AFFINE])
    @pytest.mark.parametrize("n,a", [(2, 0.5), (2, 2.0), (4, 1.0), (8, 1.0)])
    def test_agrees_with_closed_form_at_tight_tol(self, v, n, a):
        mu0 = AtomicMeasure([0.0, 0.3, 0.85], [0.5, 1.0, 0.25])
        tol = 1e-8
        table = integrate(v, mu0.positions, time_grid(1.5, 1e-3), keep_steps=True)
        pic = solve_picard(v, Regularizer(n), a, mu0, 1.5, 1e-3, tol=tol, table=table)
        cf = solve_closed_form(v, Regularizer(n), a, mu0, 1.5, 1e-3, table=table)
        bound = max(10 * tol, 1e-6 * tv_norm(mu0))
        assert max(dual_bl_norm(p - c) for p, c in zip(pic.measures, cf.measures)) <= bound

    def test_gap_to_closed_form_is_second_order_in_dt(self):
        # layer entry (0.8) and arrival (0.9) fall on nodes of every grid, so
        # the trapezoid error comes from smooth pieces only
        mu0 = AtomicMeasure([0.1], [1.0])
        gaps = []
        for dt in (4e-3, 2e-3, 1e-3):
            pic = solve_picard(ONE, Regularizer(10), 2.0, mu0, 1.2, dt, tol=1e-12)
            cf = solve_closed_form(ONE, Regularizer(10), 2.0, mu0, 1.2, dt)
            gaps.append(abs(pic.terminal.total_mass - cf.terminal.total_mass))
        ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
        assert np.all(ratios > 3.0)

    @settings(max_examples=12, deadline=None)
    @given(st.sampled_from([ONE, AFFINE, VelocityField("poly", (0.5, -1.0, 1.5))]),
           st.sampled_from([2, 4, 8, 16]), st.sampled_from([0.5, 1.0, 2.0]),
           st.lists(st.tuples(st.floats(0.0, 1.0), st.floats(0.1, 2.0)), min_size=1, max_size=4),
           st.sampled_from([1e-6, 1e-5]))
    def test_cross_solver_agreement(self, v, n, a, atoms, tol):
        mu0 = AtomicMeasure.from_atoms(atoms)
        table = integrate(v, mu0.positions, time_grid(1.0, 1e-3), keep_steps=True)
        pic = solve_picard(v, Regularizer(n), a, mu0, 1.0, 1e-3, tol=tol, table=table)
        cf = solve_closed_form(v, Regularizer(n), a, mu0, 1.0, 1e-3, table=table)
        bound = max(10 * tol, 1e-6 * tv_norm(mu0))
        assert max(dual_bl_norm(p - c) for p, c in zip(pic.measures, cf.measures)) <= bound


def _random_positive(rng, k):
    return AtomicMeasure(rng.uniform(0, 1, k), rng.uniform(0.1, 1.0, k))


class TestSolutionProperties:
    @pytest.fixture(scope="class")
    @classmethod
    def runs(cls):
        out = []
        mu_uniform = density_to_atoms(DensitySpec("uniform", 1, mass=1.0), 50)
        for v in (ONE, AFFINE):
            for a in (0.5, 2.0):
                for mu0 in (DELTA0, mu_uniform):
                    table = integrate(v, mu0.positions, time_grid(1.6, 4e-3), keep_steps=True)
                    sols = {n: solve_closed_form(v, Regularizer(n), a, mu0, 1.6, 4e-3, table=table)
                            for n in (1, 3, 4, 9)}
                    free = free_transport(v, mu0, 1.6, 4e-3, table=table)
                    out.append((v, a, mu0, sols, free))
        return out

    def test_positive(self, runs):
        for _, _, _, sols, _ in runs:
            for traj in sols.values():
                assert all(m.is_positive for m in traj.measures)

    def test_ordering_in_n(self, runs):
        for _, _, _, sols, _ in runs:
            ns = sorted(sols)
            for n, m in zip(ns, ns[1:]):
                assert all(leq(p, q) for p, q in zip(sols[n].measures, sols[m].measures))

    def test_domination(self, runs):
        for _, _, mu0, sols, free in runs:
            for traj in sols.values():
                assert all(leq(p, q) for p, q in zip(traj.measures, free.measures))
                assert all(tv_norm(m) <= tv_norm(mu0) + 1e-15 for m in traj.measures)

    def test_exponential_bound(self, runs):
        for v, _, mu0, sols, _ in runs:
            for n, traj in sols.items():
                growth = np.exp((v.lip_constant + Regularizer(n).bl_norm) * traj.times)
                assert np.all(traj.total_mass() <= tv_norm(mu0) * growth)

    @pytest.mark.parametrize("seed", range(6))
    def test_solution_map_lipschitz(self, seed):
        rng = np.random.default_rng(seed)
        v = [ONE, AFFINE][seed % 2]
        f = Regularizer([2, 5][seed % 2])
        mu, nu = _random_positive(rng, 4), _random_positive(rng, 3)
        a = AbsorptionParams(1.0)
        s1 = solve_closed_form(v, f, a, mu, 1.0, 0.05)
        s2 = solve_closed_form(v, f, a, nu, 1.0, 0.05)
        base = dual_bl_norm(mu - nu)
        for t, p, q in zip(s1.times, s1.measures, s2.measures):
            bound = math.exp((v.lip_constant + f.bl_norm) * t) * base
            assert dual_bl_norm(p - q) <= bound * (1 + 1e-6)

    def test_picard_ordering_and_positivity(self):
        trajs = {n: solve_picard(AFFINE, Regularizer(n), 1.0, DELTA0, 1.5, 1e-3) for n in (2, 4)}
        assert all(m.is_positive for m in trajs[2].measures)
        assert all(leq(p, q, tol=1e-9) for p, q in zip(trajs[2].measures, trajs[4].measures))

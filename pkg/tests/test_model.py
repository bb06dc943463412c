import itertools

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from solgate.model import (DC_AND, DC_OR, REFERENCE_POINT, V1M, V2M, V2R, V3M, V3R,
                           CircuitParams, GateSpec, ModelError, State, conductance,
                           conductance_derivative, flow, flow_vector, mass_matrix,
                           mass_matrix_inverse, memristor_drops, smooth_step,
                           smooth_step_derivative, theta_coefficients, vcvg_outputs, window_h)

volts = st.floats(-10, 10, allow_nan=False)
unit = st.floats(0, 1, allow_nan=False)


def sympy_theta(r):
    # independent oracle: solve the matching conditions symbolically
    a = sympy.symbols(f"a{r + 1}:{2 * r + 2}")
    y = sympy.Symbol("y")
    p = sum(c * y**i for c, i in zip(a, range(r + 1, 2 * r + 2)))
    eqs = [p.subs(y, 1) - 1] + [sympy.diff(p, y, ell).subs(y, 1) for ell in range(1, r + 1)]
    sol = sympy.solve(eqs, a)
    return [float(sol[c]) for c in a]


class TestTheta:
    def test_first_order(self):
        assert theta_coefficients(1) == (3.0, -2.0)

    def test_second_order(self):
        assert theta_coefficients(2) == pytest.approx((10.0, -15.0, 6.0), abs=1e-12)

    @pytest.mark.parametrize("r", range(1, 9))
    def test_matches_symbolic_solution(self, r):
        assert theta_coefficients(r) == pytest.approx(sympy_theta(r), rel=1e-12)

    @pytest.mark.parametrize("r", range(1, 9))
    def test_defining_equations(self, r):
        a = np.array(theta_coefficients(r))
        powers = np.arange(r + 1, 2 * r + 2)
        assert abs(a.sum() - 1) < 1e-12
        for ell in range(1, r + 1):
            binom = np.array([sympy.binomial(int(i), ell) for i in powers], dtype=float)
            assert abs(binom @ a) < 1e-9 * np.abs(binom * a).sum()

    @pytest.mark.parametrize("r", [0, -1, 9, 1.5])
    def test_rejects_bad_orders(self, r):
        with pytest.raises(ModelError):
            theta_coefficients(r)


class TestSmoothStep:
    c1 = theta_coefficients(1)

    def test_branches(self):
        assert smooth_step(-0.2, self.c1) == 0
        assert smooth_step(1.5, self.c1) == 1
        assert smooth_step(0.5, self.c1) == pytest.approx(0.5)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(1, 4))
    def test_range_and_monotone(self, a, b, r):
        c = theta_coefficients(r)
        lo, hi = sorted((a, b))
        s_lo, s_hi = smooth_step(lo, c), smooth_step(hi, c)
        assert 0 <= s_lo <= 1 + 1e-12 and 0 <= s_hi <= 1 + 1e-12
        assert s_lo <= s_hi + 1e-12

    @pytest.mark.parametrize("edge", [0.0, 1.0])
    def test_c1_at_edges(self, edge):
        slopes = [abs(smooth_step(edge + h, self.c1) - smooth_step(edge - h, self.c1)) / (2 * h)
                  for h in (1e-2, 1e-3, 1e-4)]
        assert slopes[0] > slopes[1] > slopes[2]
        assert slopes[2] < 1e-3
        assert smooth_step_derivative(edge, self.c1) == 0

    @given(st.floats(0.01, 0.99))
    def test_derivative_matches_difference(self, y):
        h = 1e-6
        fd = (smooth_step(y + h, self.c1) - smooth_step(y - h, self.c1)) / (2 * h)
        assert smooth_step_derivative(y, self.c1) == pytest.approx(fd, rel=1e-6, abs=1e-9)


class TestElements:
    p = CircuitParams()

    def test_window_values(self):
        assert window_h(1.0, 1.0, self.p) == pytest.approx(0.864664716763387, rel=1e-12)
        assert window_h(0.5, 0.1, self.p) == pytest.approx(0.316060279414279, rel=1e-12)

    @given(unit)
    def test_window_zero_drop(self, x):
        assert window_h(x, 0.0, self.p) == 0

    @given(unit, volts)
    def test_window_range(self, x, v):
        assert 0 <= window_h(x, v, self.p) <= 1

    @given(st.floats(0, 10))
    def test_window_pins_bounds(self, v):
        assert window_h(1.0, -v, self.p) == 0
        assert window_h(0.0, v, self.p) == 0

    def test_conductance_values(self):
        assert conductance(0.0, self.p) == pytest.approx(100.0)
        assert conductance(1.0, self.p) == pytest.approx(1.0)
        assert conductance(0.5, self.p) == pytest.approx(1.980198019801980, rel=1e-12)

    @given(unit, unit)
    def test_conductance_monotone_and_bounded(self, a, b):
        lo, hi = sorted((a, b))
        assert conductance(lo, self.p) >= conductance(hi, self.p)
        g = conductance(a, self.p)
        assert 1 / self.p.r_off - 1e-12 <= g <= 1 / self.p.r_on + 1e-9

    def test_conductance_derivative(self):
        h = 1e-7
        fd = (conductance(0.3 + h, self.p) - conductance(0.3 - h, self.p)) / (2 * h)
        assert conductance_derivative(0.3, self.p) == pytest.approx(fd, rel=1e-6)

    def test_conductance_singular(self):
        with pytest.raises(ModelError):
            conductance(-0.5, self.p)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            CircuitParams(r_on=2.0, r_off=1.0)
        with pytest.raises(ValueError):
            CircuitParams(capacitance=0.0)
        assert CircuitParams().with_ratio(1e-3).r_off == pytest.approx(10.0)


class TestGenerators:
    def test_and_rows(self, and_gate):
        v = vcvg_outputs(and_gate, 1.0, 0.0, 0.0)
        assert v[V2M] == 0 and v[V2R] == 0 and v[V3M] == 0 and v[V3R] == -1
        assert v[V1M] == 1

    def test_or_row(self, or_gate):
        assert vcvg_outputs(or_gate, -1.0, 0.0, 0.0)[V2M] == 0

    def test_dc_columns(self, and_gate, or_gate):
        np.testing.assert_array_equal(DC_OR, -DC_AND)
        np.testing.assert_array_equal(and_gate.vcvg_coeffs[:, 3], DC_AND)
        np.testing.assert_array_equal(or_gate.vcvg_coeffs[:, 3], DC_OR)
        np.testing.assert_array_equal(or_gate.orientations, -and_gate.orientations)

    @given(volts, volts, volts)
    def test_mirror(self, v1, v2, v3):
        a = vcvg_outputs(GateSpec.make("AND"), v1, v2, v3)
        o = vcvg_outputs(GateSpec.make("OR"), -v1, -v2, -v3)
        np.testing.assert_array_equal(o, -a)


class TestDrops:
    def test_reference_state(self, and_gate):
        d = memristor_drops(and_gate, State(1.0, 0.0, 0.0, np.array([1, 1, 0.75, 1, 1.0])))
        assert d[3] == -1.0
        assert d[0] == 0.0

    @given(volts, volts, volts)
    def test_or_mirror(self, v1, v2, v3):
        x = np.full(5, 0.5)
        a = memristor_drops(GateSpec.make("AND"), State(v1, v2, v3, x))
        o = memristor_drops(GateSpec.make("OR"), State(-v1, -v2, -v3, x))
        np.testing.assert_array_equal(a, o)


class TestFlow:
    def test_reference_point_is_critical(self, and_gate, params):
        d = flow(and_gate, State.reference_point(and_gate), params)
        assert np.max(np.abs(d.vector())) <= 1e-12

    @given(st.lists(unit, min_size=5, max_size=5))
    def test_logic_high_family(self, x):
        gate, p = GateSpec.make("AND"), CircuitParams()
        y = np.concatenate([[1.0, 1.0], x])
        np.testing.assert_array_equal(flow_vector(gate, p, y, 1.0), 0.0)

    def test_inconsistent_voltages_move(self, and_gate, params):
        d = flow(and_gate, State(1.0, 1.0, -1.0, np.ones(5)), params)
        assert np.max(np.abs(d.vector())) > 0

    @pytest.mark.parametrize("kind", ["AND", "OR"])
    def test_logical_equilibria_exist(self, kind, params):
        gate = GateSpec.make(kind)
        grid = np.array(list(itertools.product([0.0, 0.5, 1.0], repeat=5)))
        v1 = gate.pinned_v1
        for v2, v3 in itertools.product((1.0, -1.0), repeat=2):
            if not gate.is_consistent(v1, v2, v3):
                continue
            y = np.column_stack([np.full(len(grid), v2), np.full(len(grid), v3), grid])
            res = np.max(np.abs(flow_vector(gate, params, y, v1)), axis=1)
            assert res.min() == 0, (v1, v2, v3)

    def test_no_equilibrium_with_flipped_input(self, and_gate, params):
        # with the calibrated orientations, v1 = -1 V has no resting state
        grid = np.array(list(itertools.product([0.0, 0.5, 1.0], repeat=5)))
        y = np.column_stack([np.full(len(grid), 1.0), np.full(len(grid), -1.0), grid])
        assert np.max(np.abs(flow_vector(and_gate, params, y, -1.0)), axis=1).min() > 1.0

    def test_consistent_low_output_needs_x4_pinned(self, and_gate, params):
        y = np.array([-1.0, -1.0, 0.5, 0.5, 0.5, 0.5, 0.5])
        assert np.max(np.abs(flow_vector(and_gate, params, y, 1.0))) > 0
        y[5] = 1.0
        assert np.max(np.abs(flow_vector(and_gate, params, y, 1.0))) == 0

    @settings(max_examples=200)
    @given(volts, volts, volts, st.lists(unit, min_size=5, max_size=5))
    def test_mirror_property(self, v1, v2, v3, x):
        p = CircuitParams()
        y = np.array([v2, v3, *x])
        ym = np.array([-v2, -v3, *x])
        fa = flow_vector(GateSpec.make("AND"), p, y, v1)
        fo = flow_vector(GateSpec.make("OR"), p, ym, -v1)
        np.testing.assert_array_equal(fo[:2], -fa[:2])
        np.testing.assert_array_equal(fo[2:], fa[2:])

    @given(volts, volts, st.lists(st.sampled_from([0.0, 1.0]), min_size=5, max_size=5))
    def test_window_pinning(self, v2, v3, x):
        gate, p = GateSpec.make("AND"), CircuitParams()
        y = np.array([v2, v3, *x])
        dx = flow_vector(gate, p, y, 1.0)[2:]
        # x at a bound can only move back into the interval
        assert np.all(dx[np.array(x) == 1.0] <= 0)
        assert np.all(dx[np.array(x) == 0.0] >= 0)

    @given(st.lists(unit, min_size=5, max_size=5), volts, volts)
    def test_finite_in_domain(self, x, v2, v3):
        f = flow_vector(GateSpec.make("AND"), CircuitParams(), np.array([v2, v3, *x]), 1.0)
        assert np.all(np.isfinite(f))

    def test_mass_matrix(self, params):
        m = mass_matrix(params)
        assert np.linalg.det(m) == pytest.approx(-2 * params.capacitance**2)
        np.testing.assert_allclose(mass_matrix_inverse(params) @ m, np.eye(2), atol=1e-12)

    def test_batched_matches_single(self, and_gate, params, rng):
        y = np.column_stack([rng.uniform(-2, 2, (6, 2)), rng.uniform(0, 1, (6, 5))])
        batch = flow_vector(and_gate, params, y, 1.0)
        for i in range(6):
            np.testing.assert_array_equal(batch[i], flow_vector(and_gate, params, y[i], 1.0))

    def test_state_round_trip(self):
        s = State.from_vector(1.0, REFERENCE_POINT)
        np.testing.assert_array_equal(s.vector(), REFERENCE_POINT)

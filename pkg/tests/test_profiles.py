import math

import numpy as np
import pytest

from vortexpair.profiles import (
    GrowthConstants,
    Heaviside,
    Power,
    Profile,
    Tabulated,
    TruncatedProfile,
    growth_constants,
    has_subexponential_tail,
    make_profile,
    tail_rate_threshold,
    truncate,
)

ALL_PROFILES = [
    Heaviside(),
    Power(1.0),
    Power(2.0),
    Power(1.5),
    Tabulated(np.array([0.0, 1.0, 2.0, 5.0]), np.array([0.0, 0.5, 2.0, 2.0])),
    truncate(Power(1.0), 2.0),
    truncate(Heaviside(), 3.0),
]


class TestHeaviside:
    def test_branches(self):
        h = Heaviside()
        assert h.value(-1.0) == 0.0
        assert h.value(0.0) == 0.0
        assert h.value(1e-300) == 1.0
        assert h.value_right(0.0) == 1.0
        assert h.discontinuities() == (0.0,)
        assert h.sup_value == 1.0

    def test_primitive(self):
        h = Heaviside()
        assert h.primitive(-2.0) == 0.0
        assert h.primitive(3.5) == 3.5

    def test_conjugate_indicator(self):
        h = Heaviside()
        a = np.array([-1e-16, 0.0, 0.3, 1.0, 1.0 + 1e-15])
        out = np.asarray(h.conjugate(a))
        assert out[0] == math.inf
        assert out[1] == 0.0
        assert out[2] == 0.0
        assert out[3] == 0.0
        assert out[4] == math.inf


class TestPower:
    def test_values(self):
        assert Power(1.0).value(2.0) == 2.0
        assert Power(2.0).value(3.0) == 9.0
        assert Power(2.0).value(-1.0) == 0.0
        assert Power(1.5).value(4.0) == pytest.approx(8.0)

    def test_primitive(self):
        assert Power(1.0).primitive(2.0) == pytest.approx(2.0)
        assert Power(2.0).primitive(3.0) == pytest.approx(9.0)

    def test_conjugate_closed_form(self):
        # J(a) = p/(p+1) * a^((p+1)/p)
        assert Power(1.0).conjugate(3.0) == pytest.approx(4.5)
        assert Power(2.0).conjugate(1.0) == pytest.approx(2.0 / 3.0)
        assert Power(2.0).conjugate(4.0) == pytest.approx((2.0 / 3.0) * 8.0)
        assert Power(1.0).conjugate(-0.5) == math.inf

    def test_unbounded(self):
        assert Power(2.0).sup_value == math.inf
        assert Power(2.0).discontinuities() == ()

    def test_bad_exponent_rejected(self):
        with pytest.raises(ValueError):
            Power(0.0)
        with pytest.raises(ValueError):
            Power(math.inf)


class TestScalarArraySemantics:
    def test_scalar_in_scalar_out(self):
        out = Power(2.0).value(2.0)
        assert isinstance(out, float)

    def test_2d_shape_preserved(self):
        s = np.linspace(-1, 3, 12).reshape(3, 4)
        out = np.asarray(Heaviside().value(s))
        assert out.shape == (3, 4)

    @pytest.mark.parametrize("profile", ALL_PROFILES, ids=lambda p: p.kind + str(id(p) % 97))
    def test_vectorized_matches_scalar(self, profile):
        s = np.array([-1.0, 0.0, 0.25, 1.0, 2.0, 3.0, 10.0])
        vec = np.asarray(profile.value(s))
        for k, sk in enumerate(s):
            assert vec[k] == profile.value(float(sk))


class TestFenchel:
    """J(f(s)) + F(s) = f(s)*s on the graph; >= everywhere (Fenchel-Young)."""

    @pytest.mark.parametrize("profile", ALL_PROFILES, ids=lambda p: p.kind + str(id(p) % 97))
    def test_equality_on_graph(self, profile):
        s = np.linspace(1e-3, 8.0, 157)
        a = np.asarray(profile.value(s))
        J = np.asarray(profile.conjugate(a))
        F = np.asarray(profile.primitive(s))
        gap = np.abs(J + F - a * s)
        assert np.all(gap <= 1e-10 * (1.0 + np.abs(a * s)))

    def test_equality_on_jump_segment(self):
        # at a jump of f the whole vertical segment is subdifferential graph:
        # J(a) + F(s_jump) = a*s_jump for every a between the branches
        h = Heaviside()
        for a in (0.0, 0.25, 0.8, 1.0):
            assert h.conjugate(a) + h.primitive(0.0) == pytest.approx(0.0, abs=1e-15)
        t = truncate(Heaviside(), 5.0)
        for a in (0.0, 0.5, 1.0):
            assert t.conjugate(a) + t.primitive(0.0) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("profile", ALL_PROFILES, ids=lambda p: p.kind + str(id(p) % 97))
    def test_young_inequality(self, profile):
        rng = np.random.default_rng(23)
        s = rng.uniform(0.0, 6.0, 300)
        sup = profile.sup_value
        hi = 5.0 if math.isinf(sup) else sup
        a = rng.uniform(0.0, hi, 300)
        J = np.asarray(profile.conjugate(a))
        F = np.asarray(profile.primitive(s))
        finite = np.isfinite(J)
        assert np.all(J[finite] + F[finite] >= (a * s)[finite] - 1e-9)

    def test_grid_supremum_oracle(self):
        # brute-force Legendre transform agrees with the closed forms
        t = np.linspace(0.0, 40.0, 400001)
        for profile, a in ((Power(2.0), 1.0), (Power(1.0), 3.0), (Heaviside(), 0.7)):
            F = np.asarray(profile.primitive(t))
            brute = float(np.max(a * t - F))
            assert brute == pytest.approx(float(profile.conjugate(a)), abs=1e-7)

    def test_conjugate_infinite_beyond_sup(self):
        tab = Tabulated(np.array([0.0, 2.0]), np.array([0.0, 4.0]))
        assert tab.conjugate(4.0) < math.inf
        assert tab.conjugate(4.0 + 1e-12) == math.inf


class TestTruncation:
    def test_truncation_normative_levels(self):
        # power(1) frozen at rho=2: f_rho(3) = 2, F_rho(3) = 2 + 2*(3-2) = 4
        t = truncate(Power(1.0), 2.0)
        assert t.value(3.0) == 2.0
        assert t.primitive(3.0) == pytest.approx(4.0, rel=1e-15)
        assert t.sup_value == 2.0

    def test_identity_below_rho(self):
        t = truncate(Power(2.0), 3.0)
        s = np.linspace(0.0, 3.0, 77)
        assert np.array_equal(np.asarray(t.value(s)), np.asarray(Power(2.0).value(s)))

    def test_conjugate_matches_base_then_blows_up(self):
        t = truncate(Power(1.0), 2.0)
        assert t.conjugate(1.5) == pytest.approx(Power(1.0).conjugate(1.5))
        assert t.conjugate(2.0) == pytest.approx(2.0)
        assert t.conjugate(2.0 + 1e-9) == math.inf

    def test_jump_below_rho_survives(self):
        assert truncate(Heaviside(), 1.0).discontinuities() == (0.0,)

    def test_bad_rho_rejected(self):
        with pytest.raises(ValueError):
            truncate(Power(1.0), 0.0)

    def test_double_truncation_rejected(self):
        with pytest.raises(ValueError):
            truncate(truncate(Power(1.0), 1.0), 2.0)


class TestTabulated:
    def test_zero_node_prepended(self):
        tab = Tabulated(np.array([1.0, 2.0]), np.array([1.0, 3.0]))
        assert tab.s_nodes[0] == 0.0 and tab.f_nodes[0] == 0.0

    def test_linear_interpolation(self):
        tab = Tabulated(np.array([0.0, 2.0]), np.array([0.0, 4.0]))
        assert tab.value(1.0) == pytest.approx(2.0)
        assert tab.value(0.5) == pytest.approx(1.0)
        assert tab.value(99.0) == 4.0  # constant beyond the last node

    def test_repeated_s_encodes_jump(self):
        tab = Tabulated(np.array([1.0, 1.0, 2.0]), np.array([1.0, 2.0, 3.0]))
        assert tab.discontinuities() == (1.0,)
        assert tab.value(1.0) == 1.0       # lower branch at the jump
        assert tab.value_right(1.0) == 2.0
        assert tab.value(1.0 + 1e-12) == pytest.approx(2.0, rel=1e-9)

    def test_primitive_exact_for_piecewise_linear(self):
        tab = Tabulated(np.array([0.0, 1.0, 3.0]), np.array([0.0, 2.0, 2.0]))
        # F(1) = 1, F(3) = 1 + 2*2 = 5, F(2) = 1 + 2 = 3
        assert tab.primitive(1.0) == pytest.approx(1.0, rel=1e-15)
        assert tab.primitive(2.0) == pytest.approx(3.0, rel=1e-15)
        assert tab.primitive(3.0) == pytest.approx(5.0, rel=1e-15)
        assert tab.primitive(5.0) == pytest.approx(9.0, rel=1e-15)

    def test_conjugate_exact_for_linear_table(self):
        # a dense tabulation of f(s) = s has the closed-form conjugate a^2/2
        s = np.linspace(0.0, 10.0, 11)
        tab = Tabulated(s, s)
        for a in (0.5, 1.0, 2.5, 7.25):
            assert tab.conjugate(a) == pytest.approx(0.5 * a * a, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError, match="nondecreasing"):
            Tabulated(np.array([0.0, 2.0, 1.0]), np.array([0.0, 1.0, 2.0]))
        with pytest.raises(ValueError, match="nondecreasing"):
            Tabulated(np.array([0.0, 1.0, 2.0]), np.array([0.0, 2.0, 1.0]))
        with pytest.raises(ValueError, match="s >= 0"):
            Tabulated(np.array([-1.0, 1.0]), np.array([0.0, 1.0]))
        with pytest.raises(ValueError, match="finite"):
            Tabulated(np.array([0.0, math.inf]), np.array([0.0, 1.0]))

    def test_from_csv(self, tmp_path):
        path = tmp_path / "table.csv"
        path.write_text("s,f\n0,0\n1,0.5\n2,2\n")
        tab = Tabulated.from_csv(path)
        assert tab.value(1.0) == 0.5
        assert tab.table_path == str(path)
        assert tab.to_dict() == {"kind": "tabulated", "table_path": str(path)}

    def test_from_csv_rejects_garbage_after_data(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,0\n1,1\noops,row\n")
        with pytest.raises(ValueError, match="malformed"):
            Tabulated.from_csv(path)


class TestMakeProfile:
    def test_round_trips(self):
        for profile in (Heaviside(), Power(2.0)):
            rebuilt = make_profile(profile.to_dict())
            assert rebuilt.to_dict() == profile.to_dict()

    def test_tabulated_nodes(self):
        tab = Tabulated(np.array([0.0, 1.0]), np.array([0.0, 2.0]))
        rebuilt = make_profile(tab.to_dict())
        assert np.array_equal(rebuilt.s_nodes, tab.s_nodes)

    def test_power_requires_exponent(self):
        with pytest.raises(ValueError, match="'p'"):
            make_profile({"kind": "power"})

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown"):
            make_profile({"kind": "gaussian"})


class _ExpGrowth(Profile):
    """f(s) = e^{2s} - 1: grows too fast for any subexponential-tail rate < 2."""

    kind = "exp-test"
    sup_value = math.inf

    def _value(self, s):
        return np.where(s > 0.0, np.expm1(2.0 * np.maximum(s, 0.0)), 0.0)

    def _primitive(self, s):
        m = np.maximum(s, 0.0)
        return 0.5 * np.expm1(2.0 * m) - m


class TestGrowthDiagnostics:
    def test_power_constants_are_sharp(self):
        assert growth_constants(Power(1.0)) == GrowthConstants(0.5, 1.0)
        assert growth_constants(Power(3.0)) == GrowthConstants(0.25, 1.0)

    def test_truncated_delegates_to_base(self):
        assert growth_constants(truncate(Power(1.0), 2.0)) == GrowthConstants(0.5, 1.0)

    def test_heaviside_certified(self):
        gc = growth_constants(Heaviside())
        assert gc is not None
        s = np.linspace(0.0, 50.0, 501)
        h = Heaviside()
        F = np.asarray(h.primitive(s))
        f = np.asarray(h.value(s))
        assert np.all(F <= gc.frac * s * f + gc.offset * f + 1e-9)

    def test_tail_rate_threshold(self):
        assert tail_rate_threshold(0.5, 1.0) == pytest.approx(4.0 * math.pi)
        assert tail_rate_threshold(0.25, 2.0) == pytest.approx(math.pi)
        with pytest.raises(ValueError):
            tail_rate_threshold(0.0, 1.0)
        with pytest.raises(ValueError):
            tail_rate_threshold(0.5, -1.0)

    def test_polynomial_tail_passes(self):
        check = has_subexponential_tail(Power(2.0), rate=0.5)
        assert check.passed
        assert check.witness_value <= 1e-8

    def test_bounded_tail_passes(self):
        assert has_subexponential_tail(Heaviside(), rate=0.1).passed

    def test_fast_exponential_fails(self):
        check = has_subexponential_tail(_ExpGrowth(), rate=0.5, s_max=40.0)
        assert not check.passed
        assert check.witness_value > 1e-8

    def test_fast_exponential_passes_above_its_rate(self):
        assert has_subexponential_tail(_ExpGrowth(), rate=2.5, s_max=40.0).passed

    def test_bad_rate_rejected(self):
        with pytest.raises(ValueError):
            has_subexponential_tail(Heaviside(), rate=0.0)

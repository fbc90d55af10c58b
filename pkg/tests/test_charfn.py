import cmath
import math

import numpy as np
import pytest

from fxsvol.charfn import (
    Factor,
    HestonParams,
    JumpParams,
    SchobelZhuParams,
    TwoFactorParams,
    bates2f_cf,
    bates_jump_multiplier,
    cf_factory,
    heston_cf,
    heston_terms,
    ode_oracle_terms,
    ouou_cf,
    sz_cf,
    sz_terms,
)
from fxsvol.errors import InvariantViolation, StepUnderflow

X0 = math.log(1.30)
TAU = 0.75
RD, RF = 0.012, 0.006
FORWARD = math.exp(X0 + (RD - RF) * TAU)

HP = HestonParams(nu0=0.0082, theta=0.0143, kappa=2.07, omega=0.30, rho=-0.38)
SP = SchobelZhuParams(nu0=0.09, theta=0.11, kappa=1.4, omega=0.15, rho=-0.38)
BP = TwoFactorParams("bates2f",
                     Factor(0.0041, 0.00715, 2.07, 0.30, -0.38),
                     Factor(0.0050, 0.00600, 1.10, 0.22, 0.10))
OP = TwoFactorParams("ouou",
                     Factor(0.06, 0.08, 1.2, 0.11, 0.65),
                     Factor(0.07, 0.05, 0.8, 0.22, -0.85))

ALL_MODELS = [
    ("heston", heston_cf, HP),
    ("sz", sz_cf, SP),
    ("bates2f", bates2f_cf, BP),
    ("ouou", ouou_cf, OP),
]


class TestBasicIdentities:
    @pytest.mark.parametrize("name,cf,params", ALL_MODELS)
    def test_phi_at_zero_is_one(self, name, cf, params):
        for j in (1, 2):
            val = complex(cf(np.asarray(0.0j), X0, TAU, RD, RF, params, j=j))
            assert val == 1.0 + 0.0j

    @pytest.mark.parametrize("name,cf,params", ALL_MODELS)
    def test_martingale(self, name, cf, params):
        val = complex(cf(np.asarray(-1j), X0, TAU, RD, RF, params, j=2))
        assert abs(val - FORWARD) < 1e-8

    @pytest.mark.parametrize("name,cf,params", ALL_MODELS)
    def test_hermitian_symmetry(self, name, cf, params):
        u = np.linspace(0.05, 120.0, 60).astype(complex)
        left = cf(-u, X0, TAU, RD, RF, params, j=2)
        right = np.conj(cf(u, X0, TAU, RD, RF, params, j=2))
        assert np.max(np.abs(left - right)) < 1e-13

    @pytest.mark.parametrize("name,cf,params", ALL_MODELS)
    def test_modulus_bounded_by_one(self, name, cf, params):
        u = np.linspace(0.01, 148.0, 400).astype(complex)
        assert np.max(np.abs(cf(u, X0, TAU, RD, RF, params, j=2))) <= 1.0 + 1e-12

    def test_boundary_terms_vanish_at_tau_zero(self):
        t = heston_terms(np.asarray(1.3 + 0j), 0.0, HP, j=2, r_d=RD, r_f=RF)
        assert complex(t.A) == 0.0 and complex(t.B) == 0.0
        t = sz_terms(np.asarray(1.3 + 0j), 0.0, SP, j=2, r_d=RD, r_f=RF)
        assert abs(complex(t.A)) < 1e-15
        assert complex(t.B) == 0.0 and complex(t.C) == 0.0

    def test_continuity_of_A_in_tau(self, rng):
        # no branch-cut jumps along tau in (0, 5] at 1e-3 steps
        taus = np.arange(1e-3, 5.0, 1e-3)
        for _ in range(5):
            p = HestonParams(nu0=rng.uniform(0.004, 0.04),
                             theta=rng.uniform(0.005, 0.04),
                             kappa=rng.uniform(0.5, 5.0),
                             omega=rng.uniform(0.1, 0.8),
                             rho=rng.uniform(-0.8, 0.2))
            u = complex(rng.uniform(5.0, 60.0), 0.0)
            A = heston_terms(np.full_like(taus, u, dtype=complex), taus, p,
                             j=2, r_d=RD, r_f=RF).A
            steps = np.abs(np.diff(A))
            assert steps.max() < 0.05  # smooth: no 2*pi-scale log jumps


class TestDegenerateLimits:
    def test_black_scholes_limit(self):
        # omega -> 0 with nu0 = theta collapses to a constant-vol lognormal
        p = HestonParams(nu0=0.04, theta=0.04, kappa=2.0, omega=1e-6, rho=0.0)
        u = np.array([0.5, 1.0, 3.0, 10.0, 50.0, 148.0], dtype=complex)
        bs = np.exp(1j * u * X0 + 1j * u * (RD - RF - 0.02) * TAU
                    - u * u * 0.04 * TAU / 2.0)
        val = heston_cf(u, X0, TAU, RD, RF, p, j=2)
        assert np.max(np.abs(val - bs) / np.abs(bs)) < 1e-6

    def test_phi1_is_tilted_phi2(self):
        u = np.array([0.4, 1.7, 9.0], dtype=complex)
        phi1 = heston_cf(u, X0, TAU, RD, RF, HP, j=1)
        phi2_shift = heston_cf(u - 1j, X0, TAU, RD, RF, HP, j=2)
        phi2_mi = complex(heston_cf(np.asarray(-1j), X0, TAU, RD, RF, HP, j=2))
        assert np.max(np.abs(phi1 - phi2_shift / phi2_mi)) < 1e-12


class TestModelNesting:
    def test_sz_theta_zero_equals_mapped_heston(self):
        sp = SchobelZhuParams(nu0=0.1, theta=0.0, kappa=1.0, omega=0.2, rho=-0.4)
        hp = HestonParams(nu0=sp.nu0 ** 2, theta=sp.omega ** 2 / (2 * sp.kappa),
                          kappa=2 * sp.kappa, omega=2 * sp.omega, rho=sp.rho)
        u = np.array([0.3, 1.0, 2.5, 7.0, 20.0, 80.0], dtype=complex)
        for j in (1, 2):
            a = sz_cf(u, X0, TAU, RD, RF, sp, j=j)
            b = heston_cf(u, X0, TAU, RD, RF, hp, j=j)
            assert np.max(np.abs(a - b)) < 1e-10

    def test_symmetric_bates2f_equals_heston(self):
        f = Factor(HP.nu0 / 2, HP.theta / 2, HP.kappa, HP.omega, HP.rho)
        bp = TwoFactorParams("bates2f", f, f)
        u = np.array([0.3, 1.0, 2.5, 7.0, 20.0, 80.0], dtype=complex)
        for j in (1, 2):
            a = bates2f_cf(u, X0, TAU, RD, RF, bp, j=j)
            b = heston_cf(u, X0, TAU, RD, RF, HP, j=j)
            assert np.max(np.abs(a - b)) < 1e-10

    def test_bates2f_degenerate_second_factor_approaches_heston(self):
        f2 = Factor(1e-8, 1e-8, 2.0, 1e-8, 0.0)
        bp = TwoFactorParams("bates2f", Factor(HP.nu0, HP.theta, HP.kappa,
                                               HP.omega, HP.rho), f2)
        u = np.array([0.5, 2.0, 10.0], dtype=complex)
        a = bates2f_cf(u, X0, TAU, RD, RF, bp, j=2)
        b = heston_cf(u, X0, TAU, RD, RF, HP, j=2)
        # residual is O(nu0_2 u^2) from the vanishing factor's B term
        assert np.max(np.abs(a - b)) < 1e-6

    def test_ouou_theta_zero_equals_mapped_bates2f(self):
        f1 = Factor(0.09, 0.0, 1.2, 0.15, 0.89)
        f2 = Factor(0.07, 0.0, 0.8, 0.22, -0.85)
        op = TwoFactorParams("ouou", f1, f2)

        def mapped(f):
            return Factor(f.nu0 ** 2, f.omega ** 2 / (2 * f.kappa), 2 * f.kappa,
                          2 * f.omega, f.rho)

        bp = TwoFactorParams("bates2f", mapped(f1), mapped(f2))
        u = np.array([0.3, 1.0, 2.5, 7.0, 20.0], dtype=complex)
        a = ouou_cf(u, X0, TAU, RD, RF, op, j=2)
        b = bates2f_cf(u, X0, TAU, RD, RF, bp, j=2)
        assert np.max(np.abs(a - b)) < 1e-10

    def test_sz_ahat_variants_agree(self):
        u = np.array([0.3, 1.0, 2.5, 7.0, 20.0, 60.0], dtype=complex)
        a = sz_cf(u, X0, TAU, RD, RF, SP, j=2, ahat_form="compact")
        b = sz_cf(u, X0, TAU, RD, RF, SP, j=2, ahat_form="lordkahl")
        assert np.max(np.abs(a - b)) < 1e-12


class TestJumpMultiplier:
    def test_no_jumps(self):
        jp = JumpParams(lam=0.0, khat=-0.02, delta=0.1)
        assert complex(bates_jump_multiplier(np.asarray(1.0 + 0j), 1.0, jp)) == 1.0

    def test_tau_zero(self):
        jp = JumpParams(lam=0.5, khat=-0.02, delta=0.1)
        assert complex(bates_jump_multiplier(np.asarray(1.0 + 0j), 0.0, jp)) == 1.0

    def test_expression_oracle(self):
        # independent evaluation of the exponent with cmath
        lam, khat, delta, tau = 0.5, -0.02, 0.1, 1.0
        u = 1.0 + 0.0j
        iu = 1j * u
        a = -0.5
        expo = (lam * tau * (1 + khat) ** (a + 0.5)
                * ((1 + khat) ** iu * cmath.exp(delta ** 2 * (a * iu + iu * iu / 2))
                   - 1)
                - lam * khat * iu * tau)
        expected = cmath.exp(expo)
        got = complex(bates_jump_multiplier(np.asarray(u), tau,
                                            JumpParams(lam, khat, delta), j=2))
        assert abs(got - expected) < 1e-15

    def test_martingale_preserved(self):
        jp = JumpParams(lam=0.8, khat=-0.05, delta=0.15)
        cf = cf_factory("heston", HP, jump=jp)
        val = complex(cf(np.asarray(-1j), X0, TAU, RD, RF, j=2))
        assert abs(val - FORWARD) < 1e-8


class TestOdeOracle:
    def test_step_underflow(self):
        with pytest.raises(StepUnderflow):
            ode_oracle_terms("heston", np.asarray(1.0 + 0j), 1.0, HP, steps=999)

    def test_tau_zero_gives_zero_terms(self):
        t = ode_oracle_terms("heston", np.asarray(1.0 + 0j), 0.0, HP, steps=1000)
        assert complex(t.A) == 0.0 and complex(t.B) == 0.0

    def test_heston_terms_match(self):
        u, tau = 1.0 + 0.0j, 1.0
        ct = heston_terms(np.asarray(u), tau, HP, j=2, r_d=RD, r_f=RF)
        ot = ode_oracle_terms("heston", np.asarray(u), tau, HP, j=2, r_d=RD,
                              r_f=RF, steps=2000)
        assert abs(complex(ct.A) - complex(ot.A)) < 1e-8
        assert abs(complex(ct.B) - complex(ot.B)) < 1e-8

    def test_sz_terms_match(self):
        u, tau = 2.0 + 0.0j, 0.5
        ct = sz_terms(np.asarray(u), tau, SP, j=2, r_d=RD, r_f=RF)
        ot = ode_oracle_terms("sz", np.asarray(u), tau, SP, j=2, r_d=RD, r_f=RF,
                              steps=2000)
        for name in ("A", "B", "C"):
            assert abs(complex(getattr(ct, name)) - complex(getattr(ot, name))) < 1e-8

    def test_two_factor_oracle_drift_weight(self):
        f = BP.f1
        hp = HestonParams(f.nu0, f.theta, f.kappa, f.omega, f.rho)
        ct = heston_terms(np.asarray(1.5 + 0j), 0.8, hp, j=2, r_d=RD, r_f=RF,
                          drift_weight=0.5)
        ot = ode_oracle_terms("heston", np.asarray(1.5 + 0j), 0.8, hp, j=2,
                              r_d=RD, r_f=RF, steps=2000, drift_weight=0.5)
        assert abs(complex(ct.A) - complex(ot.A)) < 1e-8


class TestOverflowPolicy:
    def test_jump_multiplier_overflow_raises(self):
        # deep-imaginary moment probe explodes the jump exponent
        from fxsvol.errors import NumericOverflow
        jp = JumpParams(lam=1.0, khat=-0.02, delta=1.0)
        with pytest.raises(NumericOverflow):
            bates_jump_multiplier(np.asarray(-500.0j), 1.0, jp)


class TestValidation:
    def test_rejects_bad_rho(self):
        with pytest.raises(InvariantViolation):
            HestonParams(0.01, 0.01, 1.0, 0.3, -1.0)

    def test_rejects_non_positive(self):
        with pytest.raises(InvariantViolation):
            HestonParams(0.0, 0.01, 1.0, 0.3, -0.4)
        with pytest.raises(InvariantViolation):
            SchobelZhuParams(0.1, -0.1, 1.0, 0.3, -0.4)

    def test_feller_flag(self):
        assert not HP.feller_satisfied()  # 2*2.07*0.0143 = 0.0592 < 0.09
        assert HestonParams(0.01, 0.02, 3.0, 0.3, -0.4).feller_satisfied()

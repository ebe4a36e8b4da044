"""Constitutive point checks: split, degradation, history, 1D solution."""

import numpy as np
import pytest

from phasefrac.material import (
    MaterialParams,
    QuadState,
    critical_stress,
    degradation,
    elastic_tensor,
    heat_source,
    homogeneous_1d,
    peak_strain,
    split,
    stress,
    update_history,
)

PARAMS = MaterialParams(E=600.0, nu=0.2, Gc=0.13, ell=0.5, kappa=1e-7)


def rand_strain(rng, nv):
    return rng.standard_normal(nv) * 1e-2


class TestParams:
    def test_derived_moduli(self):
        assert PARAMS.K == pytest.approx(600 / (3 * (1 - 0.4)))
        assert PARAMS.mu == pytest.approx(600 / (2 * 1.2))
        assert PARAMS.lam == pytest.approx(PARAMS.K - 2 * PARAMS.mu / 3)

    @pytest.mark.parametrize(
        "bad",
        [
            dict(E=-1.0),
            dict(nu=0.5),
            dict(nu=0.6),
            dict(Gc=0.0),
            dict(ell=-0.5),
            dict(kappa=0.5),
        ],
    )
    def test_invalid_rejected(self, bad):
        kwargs = dict(E=600.0, nu=0.2, Gc=0.13, ell=0.5, kappa=1e-7)
        kwargs.update(bad)
        with pytest.raises(ValueError):
            MaterialParams(**kwargs)


class TestSplit:
    def test_hydrostatic_compression_all_negative(self):
        a = 0.01
        eps = np.array([-a, -a, -a, 0.0, 0.0, 0.0])
        res = split(eps, PARAMS)
        assert res.psi_plus == pytest.approx(0.0, abs=1e-16)
        assert res.psi_minus == pytest.approx(0.5 * PARAMS.K * (3 * a) ** 2, rel=1e-12)

    def test_pure_shear_all_positive(self):
        gamma = 0.02
        eps = np.array([0.0, 0.0, 0.0, gamma])
        res = split(eps, PARAMS)
        assert res.psi_minus == pytest.approx(0.0, abs=1e-16)
        assert res.psi_plus == pytest.approx(PARAMS.mu * gamma**2 / 2, rel=1e-12)

    def test_uniaxial_strain_tension(self):
        # direct tensor algebra oracle: eps = diag(a,0,0), a > 0
        a = 0.004
        eps = np.array([a, 0.0, 0.0, 0.0])
        res = split(eps, PARAMS)
        dev_sq = 2 * a**2 / 3  # (2a/3)^2 + 2*(a/3)^2
        assert res.psi_plus == pytest.approx(
            0.5 * PARAMS.K * a**2 + PARAMS.mu * dev_sq, rel=1e-12
        )
        # cross-check against the undamaged energy 1/2 lam a^2 + mu a^2
        total = 0.5 * PARAMS.lam * a**2 + PARAMS.mu * a**2
        assert res.psi_plus + res.psi_minus == pytest.approx(total, rel=1e-12)

    @pytest.mark.parametrize("nv", [4, 6])
    def test_energy_and_stress_consistency(self, nv):
        rng = np.random.default_rng(0)
        C0 = elastic_tensor(PARAMS, nv)
        for _ in range(10_000):
            eps = rand_strain(rng, nv)
            if nv == 4:
                eps[2] = 0.0  # plane strain slot
            res = split(eps, PARAMS)
            psi0 = 0.5 * eps @ C0 @ eps
            sig0 = C0 @ eps
            scale = max(abs(psi0), 1e-12)
            assert abs(res.psi_plus + res.psi_minus - psi0) <= 1e-10 * scale
            sscale = max(np.linalg.norm(sig0), 1e-12)
            assert (
                np.linalg.norm(res.sigma0_plus + res.sigma0_minus - sig0)
                <= 1e-10 * sscale
            )

    @pytest.mark.parametrize("nv", [4, 6])
    def test_tangents_match_finite_differences(self, nv):
        rng = np.random.default_rng(1)
        h = 1e-6
        checked = 0
        while checked < 50:
            eps = rand_strain(rng, nv)
            tr = eps[0] + eps[1] + eps[2]
            if abs(tr) < 1e-3:  # stay away from the Macaulay kink
                continue
            checked += 1
            res = split(eps, PARAMS)
            for C, pick in ((res.C0_plus, "sigma0_plus"), (res.C0_minus, "sigma0_minus")):
                fd = np.empty((nv, nv))
                for j in range(nv):
                    ep = eps.copy()
                    em = eps.copy()
                    ep[j] += h
                    em[j] -= h
                    fd[:, j] = (
                        getattr(split(ep, PARAMS), pick)
                        - getattr(split(em, PARAMS), pick)
                    ) / (2 * h)
                scale = max(np.linalg.norm(C), PARAMS.E * 1e-3)
                assert np.linalg.norm(C - fd) <= 1e-5 * scale

    def test_zero_trace_on_positive_branch(self):
        eps = np.array([0.01, -0.01, 0.0, 0.0])
        res = split(eps, PARAMS)
        # trace is zero: tangent must be the positive-branch operator
        assert res.C0_plus[0, 0] == pytest.approx(
            PARAMS.K + 2 * PARAMS.mu * (2 / 3), rel=1e-12
        )
        assert np.allclose(res.C0_minus, 0.0)


class TestDegradationAndStress:
    def test_degradation_values(self):
        assert degradation(0.0, 1e-7) == pytest.approx(1.0000001)
        assert degradation(1.0, 1e-7) == pytest.approx(1e-7)
        assert degradation(0.5, 0.0) == pytest.approx(0.25)

    def test_undamaged_limit_is_linear_elasticity(self):
        rng = np.random.default_rng(2)
        eps = rand_strain(rng, 6)
        C0 = elastic_tensor(PARAMS, 6)
        sig = stress(eps, 0.0, PARAMS)
        assert np.allclose(sig, C0 @ eps, rtol=1e-6)

    def test_compression_unaffected_by_full_damage(self):
        a = 0.01
        eps = np.array([-a, -a, -a, 0.0, 0.0, 0.0])
        sig = stress(eps, 1.0, PARAMS)
        C0 = elastic_tensor(PARAMS, 6)
        assert np.allclose(sig, C0 @ eps, rtol=1e-9)

    def test_shear_fully_degraded(self):
        eps = np.array([0.0, 0.0, 0.0, 0.02, 0.0, 0.0])
        sig = stress(eps, 1.0, PARAMS)
        assert np.linalg.norm(sig) <= 1e-6 * PARAMS.mu * 0.02


class TestHistory:
    def test_unloading_keeps_maximum(self):
        s = update_history(QuadState(H=2.0), 1.0)
        assert s.H == 2.0

    def test_loading_raises_maximum(self):
        s = update_history(QuadState(H=2.0), 3.0)
        assert s.H == 3.0

    def test_zero_stays_zero(self):
        assert update_history(QuadState(), 0.0).H == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            update_history(QuadState(), -1.0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        seq = rng.uniform(0, 10, 50)
        final = []
        for perm in (seq, seq[::-1], rng.permutation(seq)):
            s = QuadState()
            for v in perm:
                s = update_history(s, v)
            final.append(s.H)
        assert final[0] == final[1] == final[2] == seq.max()

    def test_idempotent(self):
        s = update_history(QuadState(H=4.0), 4.0)
        assert update_history(s, 4.0).H == 4.0


class TestHeatSource:
    def test_phi_zero(self):
        H = 3.0
        r, _ = heat_source(0.0, H, PARAMS)
        assert r == pytest.approx(2 * H / (PARAMS.ell * PARAMS.Gc), rel=1e-14)

    def test_root_matches_gradient_free_equilibrium(self):
        for H in (0.1, 1.0, 7.5):
            phi_star = 2 * PARAMS.ell * H / (PARAMS.Gc + 2 * PARAMS.ell * H)
            r, _ = heat_source(phi_star, H, PARAMS)
            # scale of the individual terms in r
            scale = 2 * H / (PARAMS.ell * PARAMS.Gc)
            assert abs(r) <= 1e-12 * scale
            # the same root solves Gc*phi/ell = 2(1-phi)H
            lhs = PARAMS.Gc * phi_star / PARAMS.ell
            rhs = 2 * (1 - phi_star) * H
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_derivative_always_negative(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            phi = rng.uniform(0, 1)
            H = rng.uniform(0, 100)
            _, dr = heat_source(phi, H, PARAMS)
            assert dr < 0

    def test_negative_history_rejected(self):
        with pytest.raises(ValueError):
            heat_source(0.2, -1.0, PARAMS)


class TestCriticalStress:
    def test_calibrated_value(self):
        # E = 600 MPa, Gc = 0.13 N/mm, ell = 0.5 mm
        assert critical_stress(PARAMS) == pytest.approx(4.056, abs=5e-4)
        # three significant figures against the reported 4.05 MPa
        assert critical_stress(PARAMS) == pytest.approx(4.05, rel=2.5e-3)

    def test_halving_ell_scales_by_sqrt2(self):
        fine = PARAMS.with_(ell=0.25)
        assert critical_stress(fine) == pytest.approx(
            np.sqrt(2) * critical_stress(PARAMS), rel=1e-12
        )

    def test_vanishing_toughness_limit(self):
        weak = PARAMS.with_(Gc=1e-14)
        assert critical_stress(weak) == pytest.approx(0.0, abs=1e-5)


class TestHomogeneous1D:
    def test_quarter_damage_at_peak_strain(self):
        eps = peak_strain(PARAMS)
        phi, _ = homogeneous_1d(PARAMS, eps)
        assert phi == pytest.approx(0.25, rel=1e-12)

    def test_peak_stress_equals_critical_stress(self):
        _, sigma = homogeneous_1d(PARAMS, peak_strain(PARAMS))
        assert sigma == pytest.approx(critical_stress(PARAMS), rel=1e-12)

    def test_origin(self):
        phi, sigma = homogeneous_1d(PARAMS, 0.0)
        assert phi == 0.0
        assert sigma == 0.0

    def test_numeric_maximum_matches_formula(self):
        eps = np.linspace(0, 4 * peak_strain(PARAMS), 20_000)
        _, sigma = homogeneous_1d(PARAMS, eps)
        assert sigma.max() == pytest.approx(critical_stress(PARAMS), rel=1e-3)

    def test_negative_strain_rejected(self):
        with pytest.raises(ValueError):
            homogeneous_1d(PARAMS, -0.1)

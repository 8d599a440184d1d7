"""Integrator tests: exact examples, balance residuals, synchronization."""

import math

import numpy as np
import pytest

from nudgevisc import dynamics as dyn
from nudgevisc import spectral as sp
from nudgevisc.errors import BlowUpError, ForcingError

from oracles import shear_field

ZERO_FORCING = dyn.ForcingSpec(kind="single_mode", amplitude=0.0, wavevector=(0, 2))


def make_params(**kw):
    base = dict(nu=0.08, nu_tilde=0.16, mu=8.0, n_obs=5, dt=0.01, forcing=ZERO_FORCING)
    base.update(kw)
    return dyn.SystemParams(**base)


class TestMakeForcing:
    def test_kolmogorov_shear_mode(self, grid32):
        spec = dyn.ForcingSpec(kind="single_mode", amplitude=0.7, wavevector=(0, 3))
        g = dyn.make_forcing(spec, grid32)
        expected = shear_field(grid32, amplitude=0.7, k2=3)
        assert np.max(np.abs(g.coeffs - expected.coeffs)) <= 1e-15
        assert sp.divergence_max(g) == 0.0
        # Leray projection is the identity on it
        proj = sp.leray_project(g)
        assert np.max(np.abs(proj.coeffs - g.coeffs)) <= 1e-16

    def test_zero_amplitude(self, grid32):
        g = dyn.make_forcing(ZERO_FORCING, grid32)
        assert g.max_coeff() == 0.0

    def test_band_norm_closed_form(self, grid32):
        spec = dyn.ForcingSpec(kind="band", amplitude=0.25, band=(2, 3))
        g = dyn.make_forcing(spec, grid32)
        # representatives with 4 <= |k|^2 <= 9: count lattice points (half-plane)
        count = 0
        for k1 in range(0, 4):
            for k2 in range(-3, 4):
                if k1 == 0 and k2 <= 0:
                    continue
                if 4 <= k1 * k1 + k2 * k2 <= 9:
                    count += 1
        expected = math.sqrt(count * 0.25**2 * 2.0 * math.pi**2)
        assert sp.norm_hs(g, 0.0) == pytest.approx(expected, rel=1e-13)
        assert sp.divergence_max(g) <= 1e-16

    def test_out_of_band_wavevector_rejected(self, grid8):
        spec = dyn.ForcingSpec(kind="single_mode", amplitude=1.0, wavevector=(0, 5))
        with pytest.raises(ForcingError):
            dyn.make_forcing(spec, grid8)

    def test_phase_shift_preserves_norm(self, grid32):
        a = dyn.make_forcing(
            dyn.ForcingSpec(kind="single_mode", amplitude=0.5, wavevector=(1, 2)), grid32
        )
        b = dyn.make_forcing(
            dyn.ForcingSpec(
                kind="single_mode", amplitude=0.5, wavevector=(1, 2), phase=1.1
            ),
            grid32,
        )
        assert sp.norm_hs(a, 0.0) == pytest.approx(sp.norm_hs(b, 0.0), rel=1e-14)


class TestStepReference:
    def test_exact_heat_decay_on_shear_mode(self, grid32):
        p = make_params(nu=0.12, dt=0.03)
        u0 = shear_field(grid32, amplitude=1.7)
        state = dyn.PairState(0.0, u0, u0)
        out = dyn.step_reference(state, p)
        ratio = (out.u.coeffs[0, 0, 1] / u0.coeffs[0, 0, 1]).real
        assert ratio == pytest.approx(math.exp(-0.12 * 0.03), rel=1e-15)
        assert np.array_equal(out.u_tilde.coeffs, u0.coeffs)  # observer untouched

    def test_rest_state_stays_at_rest(self, grid32):
        p = make_params()
        z = sp.zero_field(grid32)
        out = dyn.step_reference(dyn.PairState(0.0, z, z), p)
        assert out.u.max_coeff() == 0.0

    def test_energy_balance_second_order(self, grid32, rng):
        forcing = dyn.ForcingSpec(kind="single_mode", amplitude=0.05, wavevector=(0, 2))
        u0 = sp.random_divergence_free(grid32, rng, amplitude=0.4, decay=0.5)
        residuals = []
        for dt in (0.02, 0.01):
            p = make_params(forcing=forcing, dt=dt, nu=0.1)
            g = dyn.make_forcing(forcing, grid32)
            state = dyn.PairState(0.0, u0, u0)
            out = dyn.step_reference(state, p)
            fd = (sp.norm_hs(out.u, 0.0) ** 2 - sp.norm_hs(u0, 0.0) ** 2) / (2.0 * dt)
            rhs0 = -p.nu * sp.norm_hs(u0, 1.0) ** 2 + sp.inner_hs(g, u0, 0.0)
            rhs1 = -p.nu * sp.norm_hs(out.u, 1.0) ** 2 + sp.inner_hs(g, out.u, 0.0)
            residuals.append(abs(fd - 0.5 * (rhs0 + rhs1)))
        assert residuals[0] / residuals[1] == pytest.approx(4.0, rel=0.4)

    def test_divergence_and_mean_preserved(self, grid32, rng):
        forcing = dyn.ForcingSpec(kind="single_mode", amplitude=0.1, wavevector=(0, 2))
        p = make_params(forcing=forcing)
        u = sp.random_divergence_free(grid32, rng, amplitude=0.5, decay=0.3)
        state = dyn.PairState(0.0, u, u)
        for _ in range(20):
            state = dyn.step_reference(state, p)
        assert sp.divergence_max(state.u) <= 1e-12 * state.u.max_coeff()
        assert np.all(state.u.coeffs[:, 0, 0] == 0.0)


class TestStepNudged:
    def test_synchronized_pair_is_invariant(self, grid32, rng):
        forcing = dyn.ForcingSpec(kind="single_mode", amplitude=0.05, wavevector=(0, 2))
        p = make_params(forcing=forcing, nu_tilde=0.08, mu=40.0)
        u = sp.random_divergence_free(grid32, rng, amplitude=0.5, decay=0.3)
        state = dyn.PairState(0.0, u, u)
        stepper = dyn.PairStepper(grid32, p)
        for _ in range(25):
            state = stepper.step_pair(state, p.nu, p.dt)
        assert np.array_equal(state.u.coeffs, state.u_tilde.coeffs)

    def test_mu_zero_equals_reference_dynamics(self, grid32, rng):
        p = make_params(mu=0.0, nu_tilde=0.08)
        u = sp.random_divergence_free(grid32, rng, amplitude=0.5, decay=0.3)
        ut = sp.random_divergence_free(grid32, rng, amplitude=0.3, decay=0.3)
        nudged = dyn.step_nudged(dyn.PairState(0.0, u, ut), p)
        swapped = dyn.step_reference(dyn.PairState(0.0, ut, u), p)
        scale = max(swapped.u.max_coeff(), 1e-300)
        assert np.max(np.abs(nudged.u_tilde.coeffs - swapped.u.coeffs)) <= 1e-13 * scale

    def test_observed_mode_linear_factor(self, grid32):
        # u = 0, g = 0, single shear mode at |k| = 1 <= N: the discrete map is
        # exactly the integrating factor exp(-(nu_tilde |k|^2 + mu) dt).
        p = make_params(nu=0.07, nu_tilde=0.13, mu=9.0, dt=0.02, n_obs=4)
        e = shear_field(grid32)
        out = dyn.step_nudged(dyn.PairState(0.0, sp.zero_field(grid32), e), p)
        factor = (out.u_tilde.coeffs[0, 0, 1] / e.coeffs[0, 0, 1]).real
        assert factor == pytest.approx(math.exp(-(0.13 + 9.0) * 0.02), rel=1e-14)

    def test_unobserved_mode_feels_no_feedback(self, grid32):
        p = make_params(nu=0.07, nu_tilde=0.13, mu=9.0, dt=0.02, n_obs=4)
        e = shear_field(grid32, k2=5)  # |k| = 5 > N = 4
        out = dyn.step_nudged(dyn.PairState(0.0, sp.zero_field(grid32), e), p)
        factor = (out.u_tilde.coeffs[0, 0, 5] / e.coeffs[0, 0, 5]).real
        assert factor == pytest.approx(math.exp(-0.13 * 25.0 * 0.02), rel=1e-14)


class TestIntegrateWindow:
    def test_zero_length_window(self, grid32, rng):
        p = make_params()
        u = sp.random_divergence_free(grid32, rng)
        state = dyn.PairState(0.0, u, u)
        out = dyn.integrate_window(state, p, 0.0)
        assert out.t == 0.0
        assert np.array_equal(out.u.coeffs, state.u.coeffs)

    def test_composition_bit_for_bit(self, grid32, rng):
        forcing = dyn.ForcingSpec(kind="single_mode", amplitude=0.05, wavevector=(0, 2))
        p = make_params(forcing=forcing)
        u = sp.random_divergence_free(grid32, rng, amplitude=0.5, decay=0.3)
        ut = sp.random_divergence_free(grid32, rng, amplitude=0.2, decay=0.3)
        state = dyn.PairState(0.0, u, ut)
        full = dyn.integrate_window(state, p, 0.6)
        split = dyn.integrate_window(dyn.integrate_window(state, p, 0.3), p, 0.6)
        assert np.array_equal(full.u.coeffs, split.u.coeffs)
        assert np.array_equal(full.u_tilde.coeffs, split.u_tilde.coeffs)

    def test_partial_final_step_lands_exactly(self, grid32, rng):
        p = make_params(dt=0.03)
        u = sp.random_divergence_free(grid32, rng)
        out = dyn.integrate_window(dyn.PairState(0.0, u, u), p, 0.1)
        assert out.t == 0.1

    def test_sink_sees_every_step(self, grid32, rng):
        p = make_params(dt=0.01)
        u = sp.random_divergence_free(grid32, rng)
        seen = []
        dyn.integrate_window(
            dyn.PairState(0.0, u, u), p, 0.05, sink=lambda s, j, pp: seen.append((j, s.t))
        )
        assert [j for j, _ in seen] == [0, 1, 2, 3, 4, 5]

    def test_synchronization_decay_rate(self, grid32, rng):
        # nu_tilde = nu, mu and N ample: |w| decays at least at rate mu/4
        forcing = dyn.ForcingSpec(kind="single_mode", amplitude=0.0288, wavevector=(0, 2))
        p = make_params(nu=0.08, nu_tilde=0.08, mu=8.0, n_obs=8, dt=0.01, forcing=forcing)
        u0 = sp.random_divergence_free(grid32, rng, amplitude=0.4, decay=0.5)
        u_spun = dyn.spin_up(u0, p, 5.0)
        state = dyn.PairState(0.0, u_spun, sp.zero_field(grid32))
        stepper = dyn.PairStepper(grid32, p)
        ts, wn = [], []
        for j in range(1, 301):
            state = stepper.step_pair(state, p.nu_tilde, p.dt)
            ts.append(j * p.dt)
            wn.append(sp.norm_hs(state.u_tilde - state.u, 0.0))
        ts, wn = np.array(ts), np.array(wn)
        mask = wn > wn[0] * 1e-9
        slope = np.polyfit(ts[mask], np.log(wn[mask]), 1)[0]
        assert slope <= -p.mu / 4.0
        assert wn[-1] ** 2 <= 1e-20 * wn[0] ** 2  # twin-experiment floor


class TestSpinUp:
    def test_unforced_enstrophy_decays_monotonically(self, grid32, rng):
        p = make_params(nu=0.1, dt=0.02)
        u = sp.random_divergence_free(grid32, rng, amplitude=0.5, decay=0.3)
        norms = [sp.norm_hs(u, 0.0)]
        state = dyn.PairState(0.0, u, u)
        for _ in range(100):
            state = dyn.step_reference(state, p)
            norms.append(sp.norm_hs(state.u, 0.0))
        assert all(b <= a for a, b in zip(norms, norms[1:]))

    def test_gronwall_envelope_from_rest_neighborhood(self, grid32, rng):
        forcing = dyn.ForcingSpec(kind="single_mode", amplitude=0.0288, wavevector=(0, 2))
        p = make_params(nu=0.08, forcing=forcing, dt=0.02)
        g = dyn.make_forcing(forcing, grid32)
        grash = sp.norm_hs(g, 0.0) / p.nu**2
        u = sp.random_divergence_free(grid32, rng, amplitude=0.05 * p.nu * grash, decay=1.0)
        h0_sq = sp.norm_hs(u, 1.0) ** 2
        state = dyn.PairState(0.0, u, u)
        for j in range(1, 201):
            state = dyn.step_reference(state, p)
            t = j * p.dt
            envelope = (
                math.exp(-p.nu * t) * h0_sq
                + p.nu**2 * grash**2 * (1.0 - math.exp(-p.nu * t))
            )
            assert sp.norm_hs(state.u, 1.0) ** 2 <= envelope * (1 + 1e-8)

    def test_exit_inside_absorbing_ball(self, grid32, rng):
        # Kolmogorov forcing at k_f = 2 with G ~ 10
        nu = 0.1
        amp = 10.0 * nu**2 / (math.pi * math.sqrt(2.0))
        forcing = dyn.ForcingSpec(kind="single_mode", amplitude=amp, wavevector=(0, 2))
        p = make_params(nu=nu, forcing=forcing, dt=0.02)
        g = dyn.make_forcing(forcing, grid32)
        u0 = sp.random_divergence_free(grid32, rng, amplitude=0.02 * nu * 10, decay=1.0)
        out = dyn.spin_up(u0, p, 8.0)
        assert dyn.inside_absorbing_ball(out, p, g)

    def test_rejects_nonpositive_duration(self, grid32, rng):
        p = make_params()
        u = sp.random_divergence_free(grid32, rng)
        with pytest.raises(ValueError):
            dyn.spin_up(u, p, 0.0)


class TestBlowUp:
    def test_runaway_coefficients_raise(self, grid8):
        # Backwards heat equation: negative viscosity is invalid, so instead
        # drive blow-up with an absurd explicit step on a forced mode.
        p = make_params(
            nu=1e-8,
            nu_tilde=1e-8,
            mu=0.0,
            dt=50.0,
            n_obs=2,
            forcing=dyn.ForcingSpec(kind="single_mode", amplitude=1e9, wavevector=(1, 1)),
        )
        u = shear_field(grid8, amplitude=1.0)
        state = dyn.PairState(0.0, u, u)
        with pytest.raises(BlowUpError) as err:
            for _ in range(400):
                state = dyn.step_reference(state, p)
        assert err.value.t > 0.0


class TestParamsValidation:
    @pytest.mark.parametrize(
        "kw",
        [dict(nu=0.0), dict(nu_tilde=-1.0), dict(dt=0.0), dict(mu=-2.0), dict(n_obs=0)],
    )
    def test_invalid_params(self, kw):
        with pytest.raises(ValueError):
            make_params(**kw)

    def test_n_obs_vs_grid(self, grid8):
        p = make_params(n_obs=5)
        with pytest.raises(ValueError):
            p.validate_with_grid(grid8)

    def test_cfl_helper(self, grid32, rng):
        p = make_params(dt=0.1)
        u = sp.random_divergence_free(grid32, rng, amplitude=1.0)
        value = dyn.advective_cfl(dyn.PairState(0.0, u, u), p)
        assert value > 0.0

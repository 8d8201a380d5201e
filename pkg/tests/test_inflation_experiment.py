import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eulerlab import function_spaces as fs
from eulerlab import inflation_experiment as ie
from eulerlab import lagrangian_solver as ls
from eulerlab.errors import InvalidInputError, ResolutionError
from eulerlab.grid import Grid2D

PARAMS = ie.InflationParams(10.0, 4, 2.5, 1.5)


def _fd_gradient(fn, x1, x2, h=1e-6):
    return (fn(x1 + h, x2) - fn(x1 - h, x2)) / (2 * h), (fn(x1, x2 + h) - fn(x1, x2 - h)) / (2 * h)


def test_params_validation_and_derived_values():
    p = ie.InflationParams(10, 16, 2.05, 1.5, n=8)
    assert (p.lam, p.k, p.horizon) == (24.0, 576.0, 1e-3)
    assert p.prefactor == pytest.approx(1e-2 * 16 ** (-1 / 1.5))
    assert ie.InflationParams(10, 0, 2.5, 1.5).prefactor == pytest.approx(1e-2)
    for bad in [dict(M=0), dict(N=-1), dict(N=1.5), dict(r=2.0), dict(q=1.0), dict(n=0)]:
        kw = dict(M=10, N=4, r=2.5, q=1.5, n=8) | bad
        with pytest.raises(InvalidInputError):
            ie.InflationParams(**kw)


def test_bump_profile():
    assert ie.bump_phi(0.0, 0.0) == 1.0
    assert ie.bump_phi(0.25, 0.0) == 0.0 and ie.bump_phi(0.2, 0.2) == 0.0
    x1, x2 = np.array([0.1, -0.05, 0.2]), np.array([0.05, 0.12, -0.1])
    g = ie.bump_phi_gradient(x1, x2)
    assert np.allclose(g, _fd_gradient(ie.bump_phi, x1, x2), atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.3, 1.3), st.floats(-1.3, 1.3))
def test_omega0_is_odd_odd(x1, x2):
    v = ie.omega0(PARAMS, x1, x2)
    assert ie.omega0(PARAMS, -x1, x2) == -v
    assert ie.omega0(PARAMS, x1, -x2) == -v
    assert ie.omega0(PARAMS, -x1, -x2) == v


def test_omega0_peaks_and_gradient():
    for k in range(PARAMS.N + 1):
        c = 2.0**-k
        assert ie.omega0(PARAMS, c, c) == pytest.approx(PARAMS.prefactor * PARAMS.scale_amplitude(k))
    x1 = np.array([1.1, 0.55, 0.14, -0.07])
    x2 = np.array([0.9, 0.45, 0.12, 0.06])
    got = ie.omega0_gradient(PARAMS, x1, x2)
    fd = _fd_gradient(lambda a, b: ie.omega0(PARAMS, a, b), x1, x2, h=1e-7)
    assert np.allclose(got, fd, rtol=1e-5, atol=1e-8)


def test_sup_norm_bound():
    grid = Grid2D(1.5, 2048)
    vals = ie.initial_vorticity(PARAMS, grid).values
    bound = PARAMS.prefactor * max(PARAMS.scale_amplitude(k) for k in range(PARAMS.N + 1))
    assert np.max(np.abs(vals)) <= bound * (1 + 1e-12)


@pytest.mark.parametrize("N", [0, 1, 4, 16, 32])
def test_supports_disjoint(N):
    p = ie.InflationParams(10, N, 2.5, 1.5)
    assert ie.support_separation(p) > 0
    assert len(ie.support_balls(p)) == 4 * (N + 1)


def test_initial_vorticity_resolution_checks():
    with pytest.raises(ResolutionError):
        ie.initial_vorticity(ie.InflationParams(10, 32, 2.5, 1.5), Grid2D(2.0, 256))
    with pytest.raises(ResolutionError):
        ie.initial_vorticity(ie.InflationParams(10, 1, 2.5, 1.5), Grid2D(1.0, 256))


def test_mean_abs_sin_power():
    t = np.linspace(0, 2 * math.pi, 200001)[:-1]
    for p in (1.0, 2.0, 2.5, 4.0):
        assert ie.mean_abs_sin_power(p) == pytest.approx(np.mean(np.abs(np.sin(t)) ** p), rel=1e-8)
    assert ie.mean_abs_sin_power(math.inf) == 1.0


def test_bump_moments_against_grid():
    g = Grid2D(0.3, 1024)
    x1, x2 = g.coords()
    phi = ie.bump_phi(x1, x2)
    d1, d2 = ie.bump_phi_gradient(x1, x2)
    mom = ie.bump_moments(2.5)
    assert mom["phi"] == pytest.approx(fs._lp_array(phi, g.cell_area, 2.5), rel=1e-6)
    assert mom["partial"] == pytest.approx(fs._lp_array(d1, g.cell_area, 2.5), rel=1e-5)
    assert mom["gradient"] == pytest.approx(fs._lp_array(np.hypot(d1, d2), g.cell_area, 2.5), rel=1e-5)


def test_chi_and_rho():
    x, w = np.polynomial.legendre.leggauss(200)
    s = 0.5 * (x + 1)
    assert 2 * math.pi * np.sum(0.5 * w * s * ie.chi_hat(s, 0 * s)) == pytest.approx(1.0, abs=1e-12)
    assert float(ie.rho(0.0, 0.0)) == pytest.approx(2.0, abs=1e-8)
    r = np.array([0.3, 1.7, 5.2])
    assert np.allclose(ie.chi_derivative(r), (ie.chi(r + 1e-6) - ie.chi(r - 1e-6)) / 2e-6, atol=1e-7)
    y1, y2 = np.array([0.1, -0.7, 2.3]), np.array([0.4, 0.2, -1.1])
    assert np.allclose(ie.rho_gradient(y1, y2), _fd_gradient(ie.rho, y1, y2), atol=1e-6)
    assert ie.chi(np.array([100.0]))[0] == 0.0


def test_rho_hat_support():
    assert ie.rho_hat(2.0, 0.0) > 0 and ie.rho_hat(0.0, 0.0) == 0.0
    assert ie.rho_hat(3.0, 0.0) == 0.0 and ie.rho_hat(-2.5, 0.5) > 0


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_beta_parity(x1, x2):
    beta = ie.BetaSpec(12.0, 144.0, 2.5, (0.5, 0.4))
    v = float(beta(x1, x2))
    assert float(beta(-x1, x2)) == pytest.approx(v, abs=1e-15)
    assert float(beta(x1, -x2)) == pytest.approx(-v, abs=1e-15)
    assert float(beta(-x1, -x2)) == pytest.approx(-v, abs=1e-15)


def test_beta_gradient_and_validation():
    beta = ie.BetaSpec(12.0, 144.0, 2.5)
    x1, x2 = np.array([0.51, 0.47, 0.3]), np.array([0.49, 0.55, 0.6])
    assert np.allclose(beta.gradient(x1, x2), _fd_gradient(beta, x1, x2, h=1e-7), rtol=1e-5, atol=1e-7)
    with pytest.raises(InvalidInputError):
        ie.BetaSpec(0.0, 1.0, 2.5)
    with pytest.raises(InvalidInputError):
        ie.BetaSpec(1.0, 1.0, 2.0)
    with pytest.raises(InvalidInputError):
        ie.BetaSpec.from_params(PARAMS)
    with pytest.raises(ResolutionError):
        ie.perturbation_beta(beta, Grid2D(2.0, 128))


def test_fourier_identity_small_case():
    beta = ie.BetaSpec(6.0, 36.0, 2.5)
    # the envelope tail is cut by the periodic box, so the error falls with its size
    small = ie.fourier_identity_error(beta, Grid2D(2.0, 256))
    large = ie.fourier_identity_error(beta, Grid2D(4.0, 512))
    assert large < 1e-5 and large < small / 10


def test_lemma51_table_matches_direct_grid():
    table = ie.phi0_block_table(2.5)
    grid = Grid2D(2.0, 1024)
    for N in (1, 2):
        p = ie.InflationParams(10, N, 2.5, 1.5)
        row = ie.lemma51_norms(p, table)
        direct = ie.grid_norms(p, grid)
        assert row.lp == pytest.approx(direct["lp"], rel=1e-6)
        assert row.sobolev == pytest.approx(direct["sobolev"], rel=1e-3)
        assert row.besov == pytest.approx(direct["besov"], rel=1e-2)


def test_lemma51_scan_guards_and_flatness():
    with pytest.raises(InvalidInputError):
        ie.lemma51_scan(10, 2.5, 3.0, [1])
    assert ie.flatness([2.0, 1.0, 1.5]) == 2.0


def test_fit_power_law():
    x = np.geomspace(1, 100, 7)
    assert ie.fit_power_law(x, 3 * x**-0.7) == pytest.approx(-0.7)
    with pytest.raises(InvalidInputError):
        ie.fit_power_law([1.0], [1.0])


def _safe_symbol(sym):
    def m(xi1, xi2):
        r2 = xi1**2 + xi2**2
        out = sym(xi1, np.where(r2 == 0, 1.0, xi2))
        return np.where(r2 == 0, 0.0, out)

    return m


def test_modulated_norms_match_direct_fft():
    beta = ie.BetaSpec(6.0, 1000.0, 2.5, (0.5, 0.5))
    mod = ie.ModulatedBeta(beta)
    grid = Grid2D(2.0, 2048)
    fld = ie.perturbation_beta(beta, grid)
    sym = ie.symbol_grad_inverse_laplacian(1)
    direct = fs.lp_norm(fs.apply_multiplier(fld, _safe_symbol(sym)), 4.0)
    assert mod.lp(mod.envelope(sym), 4.0) == pytest.approx(direct, rel=2e-2)
    assert mod.lp(mod.envelope(lambda a, b: 1.0 + 0 * a), 2.5) == pytest.approx(fs.lp_norm(fld, 2.5), rel=2e-2)


def test_modulated_requires_separated_carrier():
    with pytest.raises(InvalidInputError):
        ie.ModulatedBeta(ie.BetaSpec(12.0, 144.0, 2.5))


def test_item2_doubling_lambda():
    r, q, p, sigma, k = 2.5, 1.5, 4.0, 0.5, 10000.0
    a = ie.lemma53_point(k, 10.0, r, q, p, sigma)
    b = ie.lemma53_point(k, 20.0, r, q, p, sigma)
    predicted = 2.0 ** (-1 + 2 / r - 2 / p) * (20.0**sigma + k**sigma) / (10.0**sigma + k**sigma)
    assert b.item2 / a.item2 == pytest.approx(predicted, rel=0.25)


def test_lemma53_scan_guards():
    with pytest.raises(InvalidInputError):
        ie.lemma53_scan(2.5, 2.5)
    with pytest.raises(InvalidInputError):
        ie.lemma53_scan(2.5, 1.5, p=1.5)
    assert len(ie.log_samples(10, 1000, 4)) == 9


def test_settings_validation():
    with pytest.raises(InvalidInputError):
        ie.SolverSettings(n_steps=0)
    with pytest.raises(InvalidInputError):
        ie.SolverSettings(seeds_per_side=4)


def test_discretization_layouts():
    s = ie.SolverSettings()
    odd = ie.omega0_discretization(PARAMS, s, ls.ODD_ODD)
    half = ie.omega0_discretization(PARAMS, s, ls.ODD_X2)
    full = ie.omega0_discretization(PARAMS, s, None)
    assert half.n_sources == 2 * odd.n_sources and full.n_sources == 4 * odd.n_sources
    q = np.array([[0.3, 0.7], [-0.2, 0.05], [1.4, -0.3]])
    u = ls.biot_savart_velocity(full, q)
    assert np.allclose(ls.biot_savart_velocity(odd, q), u, atol=1e-15)
    assert np.allclose(ls.biot_savart_velocity(half, q), u, atol=1e-15)


def test_beta_discretization_resolves_carrier():
    s = ie.SolverSettings()
    beta = ie.BetaSpec(12.0, 144.0, 2.5)
    disc = ie.beta_discretization(beta, s)
    b = disc.block("beta++")
    assert b.spacing == pytest.approx(2 * math.pi / 144 / s.beta_points_per_wavelength)
    assert b.spacing * (b.shape[0] - 1) >= 2 * s.beta_reach / beta.lam


@pytest.fixture(scope="module")
def small_run():
    p = ie.InflationParams(10, 2, 2.5, 1.5)
    return ie.run_deformation(p, ie.SolverSettings(n_steps=10, checkpoint_every=2))


def test_deformation_run(small_run):
    assert small_run.entrywise[0] == 1.0
    assert small_run.strictly_increasing()
    assert small_run.argmax_checkpoint() == len(small_run.times) - 1
    assert max(small_run.det_drift) < 1e-10
    assert small_run.times[-1] == pytest.approx(1e-3)
    assert set(small_run.series()[0]) == {"t", "max_entry", "max_operator", "max_d2_eta2", "det_drift", "energy"}


def test_select_x_star(small_run):
    state = small_run.states[-1]
    x = ie.select_x_star(state, 0.1)
    assert min(x) >= 0.1
    with pytest.raises(InvalidInputError):
        ie.select_x_star(state, 100.0)


def test_flow_gap_schedule_mismatch(small_run):
    with pytest.raises(InvalidInputError):
        ie.flow_gap(small_run.states, small_run.states[:-1], 10)
    assert ie.flow_gap(small_run.states, small_run.states, small_run.states[0].disc.n_particles) == 0.0


@pytest.fixture(scope="module")
def tiny_inflation():
    p = ie.InflationParams(10, 2, 2.5, 1.5, n=4)
    return ie.run_inflation(p, ie.SolverSettings(n_steps=2, checkpoint_every=1), Grid2D(2.0, 512))


def test_inflation_report(tiny_inflation):
    rep = tiny_inflation
    assert rep.ratio[0] == 1.0 and len(rep.ratio) == 3
    assert rep.besov_perturbed[0] > rep.besov_unperturbed[0]
    assert rep.dominance == pytest.approx(rep.stretch_beta / max(rep.stretch_omega0, rep.gap_term))
    assert rep.theta > 0
    d = rep.to_dict()
    assert d["growth"] == rep.growth and d["params"]["n"] == 4


def test_evolved_vorticity_at_zero_matches_initial_data(tiny_inflation):
    p = tiny_inflation.params
    grid = Grid2D(2.0, 512)
    state = ls.VortexState.initial(ie.omega0_discretization(p, ie.SolverSettings(), ls.ODD_X2))
    fld = ie.evolved_vorticity(state, p, None, grid)
    x1, x2 = grid.coords()
    assert np.array_equal(fld.values, ie.omega0(p, x1, x2))


def test_every_scale_contributes_to_strain_at_origin():
    # each dyadic quadruple adds a scale-invariant amount to grad u(0), so the
    # discrete strain must follow the amplitude sum for all N
    s = ie.SolverSettings()
    ratios = []
    for N in (2, 8, 32):
        p = ie.InflationParams(10.0, N, 2.05, 1.5)
        grad = ls.biot_savart_gradient(ie.omega0_discretization(p, s), [(0.0, 0.0)])[1][0, 0, 0]
        ratios.append(grad / (p.prefactor * sum(p.scale_amplitude(k) for k in range(N + 1))))
    assert ratios == pytest.approx([ratios[0]] * 3, rel=1e-10)

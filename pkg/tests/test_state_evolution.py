import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from sscodes.channel import AWGN, bsc
from sscodes.effective_noise import NoiseContext
from sscodes.state_evolution import (BracketError, MCSettings, SectionPrior, bisect_rate, decodes, denoise,
                                     denoiser_curve, free_entropy_mc, mmse_mc, mmse_mc_identity, mse_floor,
                                     posterior_weights, se_fixed_point, se_operator_u, sigma_to_gamma,
                                     threshold_gamp_u)

B2 = SectionPrior(2)
AWGN10 = AWGN(10.0)


# -- two-point oracles (B = 2, s = e_1, u = z_1 - z_2 ~ N(0, 2)) ---------------------


def _gauss2(fn):
    return integrate.quad(lambda u: np.exp(-u * u / 4) / math.sqrt(4 * math.pi) * fn(u), -40, 40,
                          epsabs=1e-13, limit=400)[0]


def mmse_b2_oracle(gamma):
    return _gauss2(lambda u: 2 * special.expit(-(gamma + math.sqrt(gamma) * u)) ** 2)


def free_entropy_b2_oracle(gamma):
    return _gauss2(lambda u: (np.logaddexp(0.0, -(gamma + math.sqrt(gamma) * u)) - math.log(2)) / math.log(2))


# -- denoiser ------------------------------------------------------------------


def test_denoiser_two_point_example():
    out = denoise(B2, [1.0, 0.0], [0.0, 0.0], 1.0)
    assert out[0] == pytest.approx(1 / (1 + math.exp(-1)), rel=1e-14)
    assert out[0] == pytest.approx(0.73106, abs=1e-5)


@pytest.mark.parametrize("B", [2, 4, 16])
def test_denoiser_limits(B, rng):
    p = SectionPrior(B)
    s = np.eye(B)[1]
    z = rng.standard_normal(B)
    assert np.allclose(denoise(p, s, z, np.inf), 1 / B)
    assert np.array_equal(denoise(p, s, z, 0.0), s)
    assert np.allclose(denoise(p, s, z, 1e6), 1 / B, atol=1e-5)
    assert np.allclose(denoise(p, s, z, 1e-3), s, atol=1e-12)


@given(st.integers(2, 8), st.floats(0.0, 50.0), st.integers(0, 2**32 - 1))
def test_posterior_is_bayes_rule(B, gamma, seed):
    r = np.random.default_rng(seed).normal(0.5, 1.0, size=B)
    p = SectionPrior(B)
    w = posterior_weights(p, r, gamma)
    # brute force: prior times Gaussian likelihood, normalised
    logl = np.array([-0.5 * gamma * np.sum((r - x) ** 2) for x in np.eye(B)])
    ref = np.exp(logl - logl.max())
    assert np.allclose(w, ref / ref.sum(), atol=1e-12)


@given(st.integers(2, 8), st.floats(0.01, 10.0), st.integers(0, 2**32 - 1))
def test_denoiser_is_permutation_equivariant(B, Sigma, seed):
    rng = np.random.default_rng(seed)
    p = SectionPrior(B)
    s = np.eye(B)[rng.integers(B)]
    z = rng.standard_normal(B)
    perm = rng.permutation(B)
    out = denoise(p, s, z, Sigma)
    assert np.allclose(denoise(p, s[perm], z[perm], Sigma), out[perm], atol=1e-13)
    assert out.sum() == pytest.approx(1.0)


def test_custom_prior_matches_one_hot():
    custom = SectionPrior(3, tuple(map(tuple, np.eye(3))), (1 / 3, 1 / 3, 1 / 3))
    r = np.array([0.3, -0.2, 0.9])
    assert np.allclose(posterior_weights(custom, r, 2.5), posterior_weights(SectionPrior(3), r, 2.5))
    assert custom.variance == pytest.approx(SectionPrior(3).variance)


def test_prior_validation():
    with pytest.raises(ValueError):
        SectionPrior(1)
    with pytest.raises(ValueError):
        SectionPrior(2, ((1.0, 0.0), (0.0, 1.0)), (0.5, 0.6))


# -- Monte Carlo estimators --------------------------------------------------------


MC = MCSettings(samples=100_000, seed=3)


@pytest.mark.parametrize("Sigma", [0.5, 1.0, 2.0])
def test_mmse_estimators_agree(Sigma):
    a, sa = mmse_mc(B2, Sigma, MC)
    b, sb = mmse_mc_identity(B2, Sigma, MC)
    assert abs(a - b) < 3 * math.hypot(sa, sb)
    oracle = mmse_b2_oracle(float(sigma_to_gamma(B2, Sigma)))
    assert abs(a - oracle) < 3 * sa


@pytest.mark.parametrize("B", [4, 8])
def test_mmse_estimators_agree_larger_sections(B):
    p = SectionPrior(B)
    a, sa = mmse_mc(p, 1.2, MC)
    b, sb = mmse_mc_identity(p, 1.2, MC)
    assert abs(a - b) < 3 * math.hypot(sa, sb)


def test_free_entropy_against_quadrature():
    # Sigma^2 / log2 B = 1 at B = 2
    val, se = free_entropy_mc(B2, 1.0, MC)
    oracle = free_entropy_b2_oracle(1.0)
    assert abs(val - oracle) < 3 * se
    curve = denoiser_curve(B2)
    assert curve.free_entropy(1.0) == pytest.approx(oracle, abs=2e-3)


def test_free_entropy_limits():
    assert free_entropy_mc(B2, 1e-3, MC)[0] == pytest.approx(-1.0, abs=1e-12)
    assert free_entropy_mc(B2, np.inf, MC)[0] == 0.0
    curve = denoiser_curve(B2)
    assert curve.free_entropy(0.0) == 0.0
    assert curve.free_entropy(1e9) == pytest.approx(-1.0, abs=2e-3)


def bpsk_information_bits(gamma):
    # (r_1 - r_2) / 2 = +-1/2 + N(0, 1 / (2 gamma)): h(mixture) - h(noise)
    var = 1 / (2 * gamma)
    dens = lambda d: 0.5 * (np.exp(-(d - 0.5) ** 2 / (2 * var)) + np.exp(-(d + 0.5) ** 2 / (2 * var))) / math.sqrt(2 * math.pi * var)
    h_mix = integrate.quad(lambda d: -dens(d) * math.log2(max(dens(d), 1e-300)), -30, 30, points=[-0.5, 0.5], limit=400)[0]
    return h_mix - 0.5 * math.log2(2 * math.pi * math.e * var)


@pytest.mark.parametrize("gamma", [0.3, 1.0, 4.0])
def test_free_entropy_is_minus_section_information(gamma):
    # with the ratio normalisation S_u log2 B is minus the section mutual information in bits
    ratio = -denoiser_curve(B2).free_entropy(gamma) * math.log2(2) / bpsk_information_bits(gamma)
    assert ratio == pytest.approx(1.0, abs=1e-2)


def test_curve_mmse_against_quadrature():
    curve = denoiser_curve(B2)
    for gamma in (0.05, 0.7, 3.3, 12.0):
        oracle = mmse_b2_oracle(gamma)
        assert abs(curve.mmse(gamma) - oracle) < 4 * curve.mmse_stderr(gamma) + 1e-5


def test_curve_is_deterministic():
    mc = MCSettings(samples=5000, knots=50, seed=11)
    a = denoiser_curve.__wrapped__(B2, mc)
    b = denoiser_curve.__wrapped__(B2, mc)
    assert np.array_equal(a.values, b.values)


# -- SE operator and fixed points ---------------------------------------------------


@pytest.mark.parametrize("B", [2, 4])
def test_operator_limits(B):
    p = SectionPrior(B)
    weak = NoiseContext(AWGN(1e-9), 1.0)
    assert se_operator_u(weak, p, 1.0)[0] == pytest.approx(1 - 1 / B, abs=1e-6)
    strong = NoiseContext(AWGN(1e9), 1e-3)
    assert se_operator_u(strong, p, 1e-9)[0] == pytest.approx(0.0, abs=1e-12)


def test_low_rate_fixed_points_coincide():
    ctx = NoiseContext(AWGN10, 0.1)
    a = se_fixed_point(ctx, B2, 0.0)
    b = se_fixed_point(ctx, B2, 1.0)
    assert a.converged and b.converged
    assert abs(a.E - b.E) < 10 * 1e-9


def test_far_above_capacity_stalls():
    fp = se_fixed_point(NoiseContext(AWGN10, 5.0), SectionPrior(4), 1.0)
    assert fp.E > 0.5


@pytest.mark.parametrize("R", [0.3, 1.0, 2.0])
def test_trajectories_are_monotone(R):
    ctx = NoiseContext(AWGN10, R)
    down = se_fixed_point(ctx, B2, 1.0).history
    up = se_fixed_point(ctx, B2, 0.0).history
    assert np.all(np.diff(down) <= 0)
    assert np.all(np.diff(up) >= 0)


def test_floor_definition():
    ctx = NoiseContext(AWGN10, 0.3)
    assert mse_floor(ctx, B2).E == se_fixed_point(ctx, B2, 0.0).E


def test_floor_vanishes_with_section_size():
    floors = [mse_floor(NoiseContext(AWGN10, 0.5), SectionPrior(B)).E for B in (2, 4, 8)]
    assert floors[0] > floors[1] > floors[2] > 0


def test_bsc_floor_golden():
    # infinite Fisher information at E = 0 makes the floor exactly zero
    assert mse_floor(NoiseContext(bsc(0.1), 0.2), SectionPrior(4)).E == 0.0


# -- thresholds -------------------------------------------------------------------


def test_bisect_rate_on_step():
    assert bisect_rate(lambda R: R < 0.37, 0.1, 0.5, 1e-6) == pytest.approx(0.37, abs=1e-6)
    assert bisect_rate(lambda R: R < 0.37, 0.6, 0.9, 1e-6) == pytest.approx(0.37, abs=1e-6)
    with pytest.raises(BracketError):
        bisect_rate(lambda R: True, 0.1, 0.5, 1e-3)
    with pytest.raises(BracketError):
        bisect_rate(lambda R: False, 0.1, 0.5, 1e-3)


def test_gamp_threshold_b8_postcondition():
    p = SectionPrior(8)
    tol = 1e-4
    R_u = threshold_gamp_u(AWGN10, p, 1.2, 1.5, tol)
    assert decodes(NoiseContext(AWGN10, R_u - 2 * tol), p)
    assert not decodes(NoiseContext(AWGN10, R_u + 2 * tol), p)


def test_no_transition_for_binary_sections():
    # B = 2 at snr = 10: SE from E = 1 reaches the floor at every rate
    with pytest.raises(BracketError):
        threshold_gamp_u(AWGN10, B2, 0.5, 2.0, 1e-2)


@pytest.mark.slow
def test_large_section_threshold_approaches_limit_from_above():
    mc = MCSettings(samples=20_000, knots=300)
    r8 = threshold_gamp_u(AWGN10, SectionPrior(8), 1.2, 1.5, 1e-3, mc=mc)
    r256 = threshold_gamp_u(AWGN10, SectionPrior(256), 0.4, 0.9, 1e-3, mc=mc)
    limit = 1 / (2 * math.log(2) * 1.1)
    assert limit < r256 < r8

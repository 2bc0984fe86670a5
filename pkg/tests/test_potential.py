import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import norm

from sscodes.channel import AWGN, CustomChannel, bec, bsc, capacity_closed_form, gamp_threshold_closed_form, \
    z_channel, z_optimal_p1
from sscodes.effective_noise import NoiseContext, effective_noise_var, fisher_mean
from sscodes.potential import (PotentialCurve, check_z_bias, free_energy_gap, large_B_curve, neg_output_entropy,
                               potential_derivative, potential_large_B, potential_u, r_pot_infinity, r_u_infinity,
                               s_pot, threshold_potential, u_pot, write_csv)
from sscodes.state_evolution import SectionPrior, se_fixed_point, se_operator_u, threshold_gamp_u

from conftest import REFERENCE

LN2 = math.log(2)
B2 = SectionPrior(2)


def bsc_neg_entropy_oracle(eps, E):
    s = math.sqrt(1 - E)

    def inner(p):
        up = (1 - eps) * norm.cdf(p / math.sqrt(E)) + eps * norm.cdf(-p / math.sqrt(E))
        return sum(q * math.log2(q) for q in (up, 1 - up) if q > 0)

    return integrate.quad(lambda p: norm.pdf(p, scale=s) * inner(p), -12 * s, 12 * s, points=[0.0],
                          epsabs=1e-14, epsrel=1e-13, limit=500)[0]


def bsc_fisher_mean_oracle(eps, E):
    s = math.sqrt(1 - E)

    def F(p):
        f = (1 - eps) * norm.cdf(p / math.sqrt(E)) + eps * norm.cdf(-p / math.sqrt(E))
        df = (1 - 2 * eps) * norm.pdf(p / math.sqrt(E)) / math.sqrt(E)
        return df * df / (f * (1 - f))

    return integrate.quad(lambda p: norm.pdf(p, scale=s) * F(p), -12 * s, 12 * s, points=[0.0],
                          epsabs=1e-14, epsrel=1e-13, limit=500)[0]


# -- channel entropy term ----------------------------------------------------------


def test_awgn_entropy_closed_form_vs_generic_quadrature():
    gauss = CustomChannel(lambda y, z: np.exp(-0.5 * (y - z) ** 2 / 0.1) / math.sqrt(2 * math.pi * 0.1),
                          y_range=lambda p, v: (p - 14 * math.sqrt(v + 0.1), p + 14 * math.sqrt(v + 0.1)))
    closed = neg_output_entropy(AWGN(10.0), 0.5)
    assert closed == pytest.approx(-0.5 * math.log2(2 * math.pi * math.e * 0.6), rel=1e-15)
    assert neg_output_entropy(gauss, 0.5) == pytest.approx(closed, abs=1e-8)


@pytest.mark.parametrize("E", [0.0, 0.05, 0.3, 0.8, 1.0])
def test_bsc_entropy_against_oracle(E):
    if E == 0.0:
        oracle = (0.9 * math.log2(0.9) + 0.1 * math.log2(0.1))
    elif E == 1.0:
        oracle = -1.0
    else:
        oracle = bsc_neg_entropy_oracle(0.1, E)
    assert neg_output_entropy(bsc(0.1), E) == pytest.approx(oracle, abs=1e-10)


@settings(max_examples=10)
@given(st.floats(0.05, 0.95))
def test_entropy_slope_is_minus_information(E):
    # d/dE of the output entropy term equals -Phi(E) / (2 ln 2)
    h = 1e-5
    for ch in REFERENCE.values():
        d = (neg_output_entropy(ch, E + h) - neg_output_entropy(ch, E - h)) / (2 * h)
        assert d == pytest.approx(-fisher_mean(ch, E) / (2 * LN2), rel=1e-5)


def test_u_pot_bsc_against_oracle():
    ctx = NoiseContext(bsc(0.1), 0.4)
    E = 0.3
    oracle = -(E * bsc_fisher_mean_oracle(0.1, E) / (2 * LN2) + bsc_neg_entropy_oracle(0.1, E)) / 0.4
    assert u_pot(ctx, E) == pytest.approx(oracle, abs=1e-6)


def test_u_pot_at_full_uncertainty(reference_channel):
    ctx = NoiseContext(reference_channel, 0.7)
    first = u_pot(ctx, 1.0) + neg_output_entropy(reference_channel, 1.0) / 0.7
    assert first == pytest.approx(-1 / (2 * LN2 * effective_noise_var(ctx, 1.0)), rel=1e-13)


def test_u_pot_domain():
    with pytest.raises(ValueError):
        u_pot(NoiseContext(AWGN(10.0), 1.0), 1.2)


# -- free entropy and potential ---------------------------------------------------------


def test_s_pot_limits():
    assert s_pot(B2, 1e-3) == pytest.approx(-1.0, abs=1e-3)
    assert s_pot(B2, np.inf) == 0.0
    assert s_pot(B2, 1e4) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("ch", list(REFERENCE.values()))
def test_potential_finite_on_grid(ch):
    F = potential_u(NoiseContext(ch, 0.3), B2, np.linspace(0, 1, 41))
    assert np.all(np.isfinite(F))


def test_derivative_formula():
    # dF/dE = (T(E) - E) Phi'(E) / (2 ln 2 R) away from fixed points
    ctx = NoiseContext(AWGN(10.0), 1.3)
    p = SectionPrior(4)
    for E in (0.2, 0.6):
        T = se_operator_u(ctx, p, E)[0]
        dPhi = -1 / (E + 0.1) ** 2
        assert potential_derivative(ctx, p, E, h=1e-5) == pytest.approx((T - E) * dPhi / (2 * LN2 * 1.3), rel=1e-3)


@pytest.mark.parametrize("B, R", [(2, 1.0), (4, 1.3), (8, 1.5)])
def test_stationary_at_fixed_points(B, R):
    p = SectionPrior(B)
    ctx = NoiseContext(AWGN(10.0), R)
    for E_init in (0.0, 1.0):
        fp = se_fixed_point(ctx, p, E_init)
        assert abs(potential_derivative(ctx, p, fp.E)) < 1e-3


def test_global_minimum_at_good_fixed_point():
    p = SectionPrior(4)
    ctx = NoiseContext(AWGN(10.0), 1.0)
    grid = np.linspace(0, 1, 101)
    F = potential_u(ctx, p, grid)
    E_star = se_fixed_point(ctx, p, 1.0).E
    assert grid[np.argmin(F)] <= 0.02
    assert potential_u(ctx, p, E_star) <= F.min() + 1e-9


# -- free energy gap and potential threshold -----------------------------------------------


def test_gap_sweep():
    gaps = [free_energy_gap(NoiseContext(bsc(0.1), R), B2).gap for R in (0.23, 0.24, 0.25, 0.26, 0.27, 0.29)]
    assert gaps[0] == np.inf
    assert all(g > 0 for g in gaps[1:5])
    assert gaps[1] > gaps[2] > gaps[3] > gaps[4]
    assert gaps[5] <= 0


def test_potential_threshold_postcondition():
    tol = 1e-3
    R_pot = threshold_potential(bsc(0.1), B2, 0.24, 0.35, tol)
    assert free_energy_gap(NoiseContext(bsc(0.1), R_pot - 2 * tol), B2).gap > 0
    assert free_energy_gap(NoiseContext(bsc(0.1), R_pot + 2 * tol), B2).gap <= 0


@pytest.mark.slow
@pytest.mark.parametrize("ch, B, hi", [(bsc(0.1), 2, 0.5), (bsc(0.1), 4, 0.5), (bec(0.5), 4, 0.5),
                                       (z_channel(0.1), 4, 0.7)])
def test_threshold_ordering(ch, B, hi):
    p = SectionPrior(B)
    R_u = threshold_gamp_u(ch, p, 0.1, hi, 1e-3)
    R_pot = threshold_potential(ch, p, R_u, hi, 1e-3)
    assert R_u <= R_pot <= capacity_closed_form(ch)


# -- large-B potential -------------------------------------------------------------------


def test_large_B_single_minimum_below_threshold():
    grid = np.linspace(0, 1, 101)
    for R in (0.1, 0.2, 0.29):
        curve = large_B_curve(NoiseContext(bsc(0.1), R), grid)
        assert curve.local_minima() == [0]
        assert curve.values[0] == 0.0


def test_large_B_equal_minima_at_capacity():
    phi = potential_large_B(NoiseContext(AWGN(10.0), capacity_closed_form(AWGN(10.0))), 1.0)
    assert abs(phi) < 1e-3


@pytest.mark.parametrize("ch", [AWGN(10.0), bsc(0.1)])
def test_large_B_global_minimum_moves_above_capacity(ch):
    phi = potential_large_B(NoiseContext(ch, 1.1 * capacity_closed_form(ch)), 1.0)
    assert phi < 0


@pytest.mark.parametrize("ch", list(REFERENCE.values()))
def test_large_B_value_at_one(ch):
    # phi(1) - phi(0) = C / R - 1 whenever R exceeds R_u^inf
    R = 1.2 * capacity_closed_form(ch)
    assert potential_large_B(NoiseContext(ch, R), 1.0) == pytest.approx(capacity_closed_form(ch) / R - 1,
                                                                         abs=1e-8)


# -- large-B thresholds ----------------------------------------------------------------------


def test_r_u_infinity_examples():
    assert r_u_infinity(AWGN(10.0)) == pytest.approx(gamp_threshold_closed_form(AWGN(10.0)), abs=1e-6)
    assert r_u_infinity(bsc(0.1)) == pytest.approx(0.29390, abs=1e-5)
    assert r_u_infinity(z_channel(0.1)) == pytest.approx(0.9 / (math.pi * LN2 * 1.1), abs=1e-6)
    assert r_u_infinity(z_channel(0.1)) == pytest.approx(0.37577, abs=1e-4)


def test_r_pot_infinity_examples():
    assert r_pot_infinity(AWGN(10.0)) == pytest.approx(1.72972, abs=1e-4)
    assert r_pot_infinity(bsc(0.1)) == pytest.approx(1 - (-(0.1 * math.log2(0.1) + 0.9 * math.log2(0.9))), abs=1e-6)
    assert r_pot_infinity(z_channel(0.1, z_optimal_p1(0.1))) > 0.75828


def test_z_bias_check():
    assert check_z_bias(0.1) < 1e-6


# -- curves and files -----------------------------------------------------------------------


def test_local_minima_and_csv(tmp_path):
    curve = PotentialCurve(np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0 / 3.0, -0.25]), 0.5, "bsc", "phi_u")
    assert curve.local_minima() == [0, 2]
    path = tmp_path / "c.csv"
    curve.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["E", "phi_u"]
    assert rows[2][1] == "0.33333333333333331"
    assert open(path, "rb").read().count(b"\r") == 0
    with pytest.raises(ValueError):
        PotentialCurve(np.array([0.0, 0.0]), np.zeros(2), 0.5, "bsc")


def test_write_csv_preamble(tmp_path):
    path = tmp_path / "p.csv"
    write_csv(path, ["a", "b"], [(1, 0.1)], preamble=["hello"])
    assert open(path).read() == "# hello\na,b\n1,0.10000000000000001\n"

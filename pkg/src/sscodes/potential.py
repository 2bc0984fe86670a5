"""Potential functions of the underlying ensemble and their large-B limits.

Units are bits throughout.  With Phi(E) = E_p F(p|E) (so Sigma(E)^-2 = Phi/R)
and Ent(E) = E_z int dy phi log2 phi:

    U_u(E)  = -(E Phi(E) / (2 ln 2) + Ent(E)) / R
    S_u     = free entropy of the section channel (see state_evolution)
    F_u     = U_u - S_u
    phi_u   = U_u - max(0, 1 - Phi(E) / (2 ln 2 R))

Two facts used for cross-checks: Ent'(E) = -Phi(E) / (2 ln 2), hence
dF_u/dE = (T_u(E) - E) Phi'(E) / (2 ln 2 R), which vanishes at fixed points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from .channel import (AWGN, Channel, ChannelError, ThresholdChannel, mutual_information, z_channel,
                      z_optimal_p1)
from .effective_noise import NoiseContext, QuadratureSpec, _threshold_terms, fisher_info, fisher_mean, \
    hermgauss, smoothed_gh
from .state_evolution import (BracketError, MCSettings, SectionPrior, bisect_rate, denoiser_curve, gamma_of_E,
                              mse_floor, same_fixed_point, se_fixed_point, sigma_to_gamma)

LN2 = np.log(2.0)


# -- the channel-entropy term ------------------------------------------------


def _xlog2x(p):
    p = np.asarray(p, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)


def _threshold_neg_entropy_at(ch: ThresholdChannel, p, E):
    """sum_y f(y|p,E) log2 f(y|p,E) for an array of p."""
    p = np.asarray(p, float)
    total = np.zeros(p.shape)
    for k in range(len(ch.outputs)):
        logf, _, _ = _threshold_terms(ch, np.full(p.shape, k), p, np.full(p.shape, E))
        with np.errstate(invalid="ignore"):
            total += np.where(np.isfinite(logf), np.exp(logf) * logf / LN2, 0.0)
    return total


def _threshold_neg_entropy(ch: ThresholdChannel, E: float, tol: float) -> float:
    if E <= 0.0:
        P = ch.input_probs()
        return float(P @ _xlog2x(ch.Wm).sum(axis=1))
    if E >= 1.0:
        return float(_threshold_neg_entropy_at(ch, np.array([0.0]), 1.0)[0])
    s = np.sqrt(1.0 - E)
    lo, hi = -12.0 * s, 12.0 * s
    pts = [t for t in ch.thresholds if lo < t < hi]

    def integrand(p):
        dens = np.exp(-0.5 * p * p / (s * s)) / (s * np.sqrt(2 * np.pi))
        return dens * float(_threshold_neg_entropy_at(ch, np.array([p]), E)[0])

    return integrate.quad(integrand, lo, hi, points=pts or None, epsabs=tol, epsrel=1e-12, limit=400)[0]


def _generic_neg_entropy(ch: Channel, E: float, quad: QuadratureSpec) -> float:
    xg, wg = hermgauss(quad.p_order)
    ps = np.sqrt(max(1.0 - E, 0.0)) * xg
    v = max(E, 0.0)
    acc = 0.0
    for p, w in zip(ps, wg):
        if ch.discrete:
            f = ch.kernel(ch.ys, p) if v == 0 else smoothed_gh(ch, ch.ys, p, v, quad.gh_order)[0]
            acc += w * float(np.sum(_xlog2x(f)))
        else:
            lo, hi = ch.y_interval(p, v)

            def integrand(y):
                f = float(smoothed_gh(ch, y, p, v, quad.gh_order)[0]) if v > 0 else float(ch.kernel(y, p))
                return f * np.log2(f) if f > 0 else 0.0

            acc += w * integrate.quad(integrand, lo, hi, epsabs=quad.y_tol, limit=400)[0]
    return acc


@lru_cache(maxsize=100_000)
def _neg_entropy_scalar(ch: Channel, E: float, quad: QuadratureSpec) -> float:
    if isinstance(ch, AWGN):
        return -0.5 * np.log2(2 * np.pi * np.e * (E + ch.noise_var))
    if isinstance(ch, ThresholdChannel):
        return _threshold_neg_entropy(ch, E, min(quad.y_tol, 1e-12))
    return _generic_neg_entropy(ch, E, quad)


def neg_output_entropy(channel: Channel, E, quad: QuadratureSpec = QuadratureSpec()):
    """E_z int dy phi(y|z,E) log2 phi(y|z,E), i.e. -H(Y|Z) of the channel
    z -> N(z sqrt(1-E), E) -> P_out.  Vectorised over E."""
    E = np.asarray(E, float)
    if np.any(E < 0) or np.any(E > 1):
        raise ValueError("E must lie in [0, 1]")
    out = np.array([_neg_entropy_scalar(channel, float(e), quad) for e in np.atleast_1d(E)])
    return float(out[0]) if E.ndim == 0 else out


def _E_times_fisher(E, Phi):
    # E * Phi(E) -> 0 as E -> 0 even where Phi diverges (like E^-1/2 for threshold maps)
    E = np.asarray(E, float)
    with np.errstate(invalid="ignore"):
        return np.where(E > 0, E * Phi, 0.0)


# -- finite-B potential -------------------------------------------------------


def u_pot(ctx: NoiseContext, E):
    """U_u(E) = -E / (2 ln2 Sigma(E)^2) - Ent(E) / R."""
    Phi = fisher_mean(ctx.channel, E, ctx.quad)
    Ent = neg_output_entropy(ctx.channel, E, ctx.quad)
    out = -(_E_times_fisher(E, Phi) / (2 * LN2) + Ent) / ctx.rate
    return float(out) if np.ndim(out) == 0 else out


def s_pot(prior: SectionPrior, Sigma, mc: MCSettings = MCSettings()):
    """S_u(Sigma) from the tabulated denoiser curve (I-MMSE integral).

    Normalised so S_u = 0 at Sigma = inf and S_u -> -1 as Sigma -> 0 for the
    one-hot prior; :func:`state_evolution.free_entropy_mc` is the direct
    log-sum-exp estimator of the same quantity.
    """
    return denoiser_curve(prior, mc).free_entropy(sigma_to_gamma(prior, Sigma))


def _s_of_E(ctx, prior, E, mc):
    return denoiser_curve(prior, mc).free_entropy(gamma_of_E(ctx, prior, E))


def potential_u(ctx: NoiseContext, prior: SectionPrior, E, mc: MCSettings = MCSettings()):
    """F_u(E) = U_u(E) - S_u(Sigma(E))."""
    out = u_pot(ctx, E) - _s_of_E(ctx, prior, E, mc)
    return float(out) if np.ndim(out) == 0 else out


def potential_derivative(ctx: NoiseContext, prior: SectionPrior, E: float, h: float = 1e-4,
                         mc: MCSettings = MCSettings()) -> float:
    """Centred finite difference of F_u (one-sided within h of the ends)."""
    lo, hi = max(E - h, 0.0), min(E + h, 1.0)
    return (potential_u(ctx, prior, hi, mc) - potential_u(ctx, prior, lo, mc)) / (hi - lo)


@dataclass(frozen=True)
class PotentialCurve:
    E_grid: np.ndarray
    values: np.ndarray
    R: float
    channel: str
    column: str = "F_u"

    def __post_init__(self):
        if np.any(np.diff(self.E_grid) <= 0):
            raise ValueError("E grid must be strictly increasing")

    def local_minima(self):
        """Indices of local minima, endpoints included."""
        v = self.values
        idx = []
        for i in range(len(v)):
            left = i == 0 or v[i] < v[i - 1]
            right = i == len(v) - 1 or v[i] < v[i + 1]
            if left and right:
                idx.append(i)
        return idx

    def write_csv(self, path):
        write_csv(path, ["E", self.column], zip(self.E_grid, self.values))


def write_csv(path, header, rows, preamble=()):
    """Header row, ``\\n`` endings, 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (int, np.integer)) or isinstance(x, str):
        return str(x)
    return f"{float(x):.17g}"


def potential_curve(ctx, prior, E_grid, mc=MCSettings(), label=None) -> PotentialCurve:
    E_grid = np.asarray(E_grid, float)
    return PotentialCurve(E_grid, potential_u(ctx, prior, E_grid, mc), ctx.rate, label or ctx.channel.kind)


# -- free energy gap and potential threshold ----------------------------------


@dataclass
class GapResult:
    gap: float
    E0: float
    E_boundary: float  # smallest probed E outside the floor's basin (nan if none)
    E_min: float  # minimiser outside the basin (nan if none)


def _basin_start(ctx, prior, grid, floor, tol, max_iter, mc):
    """Index of the first grid point whose SE probe does not return E_0.

    Basin membership is monotone in E because T_u is order preserving, so a
    binary search over the grid finds the same set as probing every point.
    """

    def outside(i):
        fp = se_fixed_point(ctx, prior, grid[i], tol, max_iter, mc)
        return not same_fixed_point(fp, floor, tol)

    if not outside(len(grid) - 1):
        return None
    lo, hi = -1, len(grid) - 1  # outside(hi) holds; lo is inside or before the grid
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if outside(mid):
            hi = mid
        else:
            lo = mid
    return hi


def free_energy_gap(ctx: NoiseContext, prior: SectionPrior, n_grid: int = 201, tol: float = 1e-9,
                    max_iter: int = 10_000, mc: MCSettings = MCSettings()) -> GapResult:
    """inf over E outside the basin of E_0 of F_u(E) - F_u(E_0); +inf if the basin is [0, 1]."""
    floor = mse_floor(ctx, prior, tol, max_iter, mc)
    grid = np.linspace(0.0, 1.0, n_grid)
    i0 = _basin_start(ctx, prior, grid, floor, tol, max_iter, mc)
    if i0 is None:
        return GapResult(np.inf, floor.E, np.nan, np.nan)
    F0 = potential_u(ctx, prior, floor.E, mc)
    Fg = potential_u(ctx, prior, grid[i0:], mc)
    j = i0 + int(np.argmin(Fg))
    a = grid[max(j - 1, i0)]
    b = grid[min(j + 1, n_grid - 1)]
    best_E, best_F = grid[j], float(Fg[j - i0])
    if b > a:
        res = optimize.minimize_scalar(lambda e: potential_u(ctx, prior, e, mc), bounds=(a, b),
                                       method="bounded", options={"xatol": 1e-8})
        if res.fun < best_F:
            best_E, best_F = float(res.x), float(res.fun)
    return GapResult(best_F - F0, floor.E, float(grid[i0]), best_E)


def threshold_potential(channel: Channel, prior: SectionPrior, r_lo: float, r_hi: float, rate_tol: float = 1e-4,
                        quad: QuadratureSpec = QuadratureSpec(), mc: MCSettings = MCSettings(),
                        n_grid: int = 201, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """R_pot: the largest rate at which the free energy gap is positive."""

    def pred(R):
        return free_energy_gap(NoiseContext(channel, R, quad), prior, n_grid, tol, max_iter, mc).gap > 0

    return bisect_rate(pred, r_lo, r_hi, rate_tol)


# -- large-B limit -----------------------------------------------------------


def potential_large_B(ctx: NoiseContext, E, shifted: bool = True):
    """phi_u(E); with ``shifted`` the value at E = 0 is subtracted."""
    E = np.asarray(E, float)

    def raw(e):
        Phi = fisher_mean(ctx.channel, e, ctx.quad)
        with np.errstate(invalid="ignore"):
            snr_term = np.where(np.isinf(Phi), -np.inf, 1.0 - Phi / (2 * LN2 * ctx.rate))
        return u_pot(ctx, e) - np.maximum(0.0, snr_term)

    out = raw(E)
    if shifted:
        out = out - raw(np.asarray(0.0))
    return float(out) if out.ndim == 0 else out


def large_B_curve(ctx, E_grid, shifted=True) -> PotentialCurve:
    E_grid = np.asarray(E_grid, float)
    return PotentialCurve(E_grid, potential_large_B(ctx, E_grid, shifted), ctx.rate, ctx.channel.kind, "phi_u")


def r_u_infinity(channel: Channel, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """F(0|1) / (2 ln 2)."""
    ctx = NoiseContext(channel, 1.0, quad)
    return float(fisher_info(ctx, 0.0, 1.0)) / (2 * LN2)


def r_pot_infinity(channel: Channel, tol: float = 1e-12) -> float:
    """H(Y) - H(Y|Z) for Z ~ N(0, 1) and Y ~ P_out(.|Z), by nested quadrature
    over z (the P(a)-weighted form lives in :func:`channel.mutual_information`)."""
    if isinstance(channel, ThresholdChannel):
        pts = list(channel.thresholds)

        def dz(fn):
            return integrate.quad(lambda z: np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi) * fn(z), -40, 40,
                                  points=pts, epsabs=tol, limit=400)[0]

        ys = channel.ys
        py = np.array([dz(lambda z, y=y: float(channel.kernel(y, z))) for y in ys])
        hy = -float(np.sum(_xlog2x(py)))
        neg_hyz = sum(dz(lambda z, y=y: float(_xlog2x(channel.kernel(y, z)))) for y in ys)
        return hy + neg_hyz
    if isinstance(channel, AWGN) or not getattr(channel, "discrete", True):
        xg, wg = hermgauss(121)

        def py(y):
            return integrate.quad(lambda z: np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi) * float(channel.kernel(y, z)),
                                  -12, 12, points=[min(max(y, -12), 12)], epsabs=tol, limit=400)[0]

        def ent_y(fn, lo, hi):
            def g(y):
                p = fn(y)
                return p * np.log2(p) if p > 0 else 0.0
            return integrate.quad(g, lo, hi, epsabs=1e-12, limit=400)[0]

        lo, hi = channel.y_interval(0.0, 1.0)
        hy = -ent_y(py, lo, hi)
        neg_hyz = 0.0
        for z, w in zip(xg, wg):
            a, b = channel.y_interval(z, 0.0)
            neg_hyz += w * ent_y(lambda y: float(channel.kernel(y, z)), a, b)
        return hy + neg_hyz
    raise ChannelError("r_pot_infinity needs a threshold or continuous channel")


def z_optimal_p1_numeric(eps: float, xtol: float = 1e-10) -> float:
    """Capacity-achieving P(+1) of the Z channel by golden-section search."""
    res = optimize.minimize_scalar(lambda p1: -mutual_information(z_channel(eps, p1)),
                                   bracket=(0.3, 0.5, 0.7), method="golden", tol=xtol)
    return float(res.x)


def check_z_bias(eps: float, atol: float = 1e-6) -> float:
    """Closed-form vs numerical p1*; returns the discrepancy, raises above ``atol``."""
    d = abs(z_optimal_p1(eps) - z_optimal_p1_numeric(eps))
    if d > atol:
        raise AssertionError(f"Z-channel bias mismatch {d:.3g} at eps={eps}")
    return d


__all__ = [
    "GapResult",
    "PotentialCurve",
    "BracketError",
    "check_z_bias",
    "free_energy_gap",
    "large_B_curve",
    "neg_output_entropy",
    "potential_curve",
    "potential_derivative",
    "potential_large_B",
    "potential_u",
    "r_pot_infinity",
    "r_u_infinity",
    "s_pot",
    "threshold_potential",
    "u_pot",
    "write_csv",
    "z_optimal_p1_numeric",
]

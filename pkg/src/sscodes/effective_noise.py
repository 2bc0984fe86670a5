"""Gaussian-smoothed kernel, its Fisher information and the effective noise.

For a channel P_out and E in [0, 1]:

    f(y|p,E)   = int du P_out(y|u) N(u|p,E)
    F(p|E)     = int dy f (d_p ln f)^2
    Sigma(E)^-2 = E_{p ~ N(0, 1-E)}[F(p|E)] / R

AWGN and threshold channels use closed forms; custom channels go through
Gauss-Hermite (u, p) and adaptive (y) quadrature.  The closed forms and the
generic path are cross-checked in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .channel import AWGN, Channel, ChannelError, CustomChannel, ThresholdChannel

E_MIN = 1e-12
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


class SingularityError(ArithmeticError):
    """The smoothed kernel vanished where its derivative did not."""


@dataclass(frozen=True)
class QuadratureSpec:
    gh_order: int = 61
    y_tol: float = 1e-10
    p_order: int = 61

    def __post_init__(self):
        if self.gh_order < 3 or self.p_order < 3:
            raise ValueError("quadrature orders must be at least 3")

    def doubled(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.gh_order, self.y_tol, 2 * self.p_order)


@dataclass(frozen=True)
class NoiseContext:
    """A channel at a given design rate (bits per channel use)."""

    channel: Channel
    rate: float
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    def with_rate(self, rate: float) -> "NoiseContext":
        return NoiseContext(self.channel, rate, self.quad)


@lru_cache(maxsize=32)
def hermgauss(n: int):
    """Nodes and weights normalised for E[h(X)], X ~ N(0, 1): X = sqrt(2) x."""
    x, w = np.polynomial.hermite.hermgauss(n)
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


def _check_E(E):
    E = np.asarray(E, dtype=float)
    if np.any(E < 0) or np.any(E > 1):
        raise ValueError("E must lie in [0, 1]")
    return E


# -- threshold channels: everything through Phi --------------------------------


def _log_interval_probs(x):
    """log P[N(0,1) in (x_{k-1}, x_k]] for standardized thresholds x (last axis)."""
    lo = np.concatenate([np.full(x.shape[:-1] + (1,), -np.inf), x], axis=-1)
    hi = np.concatenate([x, np.full(x.shape[:-1] + (1,), np.inf)], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = lo > 0
        # use whichever tail keeps the subtraction well conditioned
        a = np.where(upper, special.log_ndtr(-lo), special.log_ndtr(hi))
        b = np.where(upper, special.log_ndtr(-hi), special.log_ndtr(lo))
        out = a + np.log1p(-np.exp(b - a))
    return np.where(np.isnan(out), -np.inf, out)


def _threshold_terms(ch: ThresholdChannel, yi, p, v):
    """Return (log f, df/f, d2f/f) for output indices ``yi``."""
    yi, p, v = np.broadcast_arrays(np.asarray(yi), np.asarray(p, float), np.asarray(v, float))
    t = ch.t
    sv = np.sqrt(v)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (t - p[..., None]) / sv
        x = np.where(sv > 0, x, np.where(t - p[..., None] > 0, np.inf, -np.inf))
    logP = _log_interval_probs(x)  # (..., A)
    with np.errstate(divide="ignore"):
        logW = np.log(ch.Wm)  # (A, Y)
    logf_all = special.logsumexp(logP[..., :, None] + logW, axis=-2)  # (..., Y)
    logf = np.take_along_axis(logf_all, yi[..., None], axis=-1)[..., 0]
    J = ch.jumps[:, yi]  # (K, ...)
    J = np.moveaxis(J, 0, -1)  # (..., K)
    logphi = -0.5 * x**2 - _LOG_SQRT_2PI
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(logphi - logf[..., None])  # phi(x_k) / f
        ratio = np.where(np.isfinite(x), ratio, 0.0)
        sv0 = sv[..., 0]
        # outputs whose probability does not jump at a threshold contribute nothing,
        # even where f itself vanishes
        df_f = np.where(sv0 > 0, np.sum(np.where(J != 0, J * ratio, 0.0), axis=-1) / sv0, 0.0)
        xr = np.where(np.isfinite(x), x * ratio, 0.0)
        d2f_f = np.where(sv0 > 0, np.sum(np.where(J != 0, J * xr, 0.0), axis=-1) / (sv0**2), 0.0)
    if np.any(~np.isfinite(logf) & (np.abs(df_f) > 0)) or np.any(np.isnan(df_f)):
        raise SingularityError("smoothed kernel vanishes at an output with nonzero derivative")
    return logf, df_f, d2f_f


def _threshold_fisher(ch: ThresholdChannel, p, v):
    """F(p|v) = sum_y f (df/f)^2, broadcast over p and v."""
    p, v = np.broadcast_arrays(np.asarray(p, float), np.asarray(v, float))
    total = np.zeros(p.shape)
    for k in range(len(ch.outputs)):
        logf, g, _ = _threshold_terms(ch, np.full(p.shape, k), p, v)
        total = total + np.where(np.isfinite(logf), np.exp(logf) * g * g, 0.0)
    return total


def _threshold_fisher_mean(ch: ThresholdChannel, E, order: int):
    """E_{p ~ N(0, 1-E)} F(p|E), with the Gaussian spikes at each threshold
    folded into the Gauss-Hermite weight so small E stays exact."""
    E = np.atleast_1d(np.asarray(E, float))
    out = np.empty(E.shape)
    J = ch.jumps  # (K, Y)
    out[E <= 0.0] = np.inf if np.any(J != 0) else 0.0
    out[E >= 1.0] = float(_threshold_fisher(ch, 0.0, 1.0))
    inner = (E > 0.0) & (E < 1.0)
    if not np.any(inner):
        return out
    # below E_MIN the folded weights overflow; the value at E_MIN stands in
    e = np.maximum(E[inner], E_MIN)[:, None, None]  # (m, 1, 1)
    s2 = 1.0 - e
    t = ch.t
    xg, wg = hermgauss(order)
    tk, tl = np.meshgrid(t, t, indexing="ij")
    # N(p|t_k,e) N(p|t_l,e) N(p|0,1-e) = C_kl N(p|m_kl, v)
    v = 1.0 / (1.0 / s2 + 2.0 / e)
    m = v * (tk + tl) / e
    logC = (-np.log(2 * np.pi) + 0.5 * np.log(v / (s2 * e * e))
            - 0.5 * ((tk**2 + tl**2) / e - m**2 / v))
    p = m[..., None] + np.sqrt(v)[..., None] * xg  # (m, K, K, n)
    ev = np.broadcast_to(e[..., None], p.shape)
    acc = np.zeros(len(e))
    for y in range(J.shape[1]):
        JJ = np.outer(J[:, y], J[:, y])
        if not np.any(JJ):
            continue
        logf, _, _ = _threshold_terms(ch, np.full(p.shape, y), p, ev)
        term = np.exp(logC[..., None] - logf) * wg
        acc += np.sum(JJ[..., None] * term, axis=(1, 2, 3))
    out[inner] = acc
    return out


# -- generic quadrature path ---------------------------------------------------


def smoothed_gh(ch: Channel, y, p, v, order: int = 61):
    """(f, df, d2f) by Gauss-Hermite in u; exact for polynomial-times-Gaussian kernels."""
    y, p, v = np.broadcast_arrays(np.asarray(y, float), np.asarray(p, float), np.asarray(v, float))
    xg, wg = hermgauss(order)
    sv = np.sqrt(v)[..., None]
    u = p[..., None] + sv * xg
    P = ch.kernel(y[..., None], u)
    f = P @ wg
    with np.errstate(divide="ignore", invalid="ignore"):
        df = np.where(sv[..., 0] > 0, (P * xg) @ wg / sv[..., 0], 0.0)
        d2f = np.where(sv[..., 0] > 0, (P * (xg**2 - 1)) @ wg / v, 0.0)
    return f, df, d2f


def smoothed_adaptive(ch: Channel, y: float, p: float, v: float, tol: float = 1e-13):
    """(f, df) for one (y, p, v) by adaptive quadrature, split at the
    channel's kernel discontinuities."""
    if v <= 0:
        return float(ch.kernel(y, p)), 0.0
    s = np.sqrt(v)
    lo, hi = p - 40 * s, p + 40 * s
    if isinstance(ch, ThresholdChannel):
        bps = list(ch.thresholds)
    else:
        bps = list(getattr(ch, "breakpoints", ()))
    pts = sorted(b for b in bps if lo < b < hi)

    def dens(u):
        return np.exp(-0.5 * ((u - p) / s) ** 2) / (s * np.sqrt(2 * np.pi))

    kw = dict(points=pts or None, epsabs=tol, epsrel=1e-13, limit=400)
    f = integrate.quad(lambda u: float(ch.kernel(y, u)) * dens(u), lo, hi, **kw)[0]
    df = integrate.quad(lambda u: float(ch.kernel(y, u)) * dens(u) * (u - p) / v, lo, hi, **kw)[0]
    return f, df


def smoothed(ch: Channel, y, p, v, quad: QuadratureSpec = QuadratureSpec()):
    """(f, df/dp, d2f/dp2) of the smoothed kernel, closed form when available."""
    if isinstance(ch, AWGN):
        y, p, v = np.broadcast_arrays(np.asarray(y, float), np.asarray(p, float), np.asarray(v, float))
        s2 = v + ch.noise_var
        d = y - p
        f = np.exp(-0.5 * d * d / s2) / np.sqrt(2 * np.pi * s2)
        return f, f * d / s2, f * (d * d / s2**2 - 1 / s2)
    if isinstance(ch, ThresholdChannel):
        logf, g, h = _threshold_terms(ch, ch.output_index(y), p, v)
        f = np.exp(logf)
        return f, f * g, f * h
    return smoothed_gh(ch, y, p, v, quad.gh_order)


# -- public operations ---------------------------------------------------------


def f_marginal(ctx: NoiseContext, y, p, E):
    """Smoothed kernel f(y|p,E); equals the channel kernel at E = 0."""
    E = _check_E(E)
    if np.all(E == 0):
        return ctx.channel.kernel(y, p)
    return smoothed(ctx.channel, y, p, E, ctx.quad)[0]


def _generic_fisher(ch: Channel, p: float, v: float, quad: QuadratureSpec) -> float:
    if ch.discrete:
        ys = ch.ys
        f, df, _ = smoothed_gh(ch, ys, p, v, quad.gh_order)
        if np.any((f <= 0) & (df != 0)):
            raise SingularityError(f"f vanishes with nonzero derivative at p={p}, E={v}")
        pos = f > 0
        return float(np.sum(df[pos] ** 2 / f[pos]))
    lo, hi = ch.y_interval(p, v)

    def integrand(y):
        f, df, _ = smoothed_gh(ch, y, p, v, quad.gh_order)
        return float(df * df / f) if f > 0 else 0.0

    return integrate.quad(integrand, lo, hi, epsabs=quad.y_tol, limit=400)[0]


def fisher_info(ctx: NoiseContext, p, E):
    """Fisher information F(p|E) of the location p under f(.|p,E)."""
    E = _check_E(E)
    ch = ctx.channel
    if isinstance(ch, AWGN):
        return np.broadcast_to(1.0 / (E + ch.noise_var), np.broadcast(p, E).shape) * 1.0
    if isinstance(ch, ThresholdChannel):
        return _threshold_fisher(ch, p, E)
    pb, Eb = np.broadcast_arrays(np.asarray(p, float), E)
    out = np.array([_generic_fisher(ch, pi, ei, ctx.quad) for pi, ei in zip(pb.ravel(), Eb.ravel())])
    return out.reshape(pb.shape)


def fisher_mean(channel: Channel, E, quad: QuadratureSpec = QuadratureSpec()):
    """E_{p ~ N(0, 1-E)}[F(p|E)], vectorised over E.  Rate independent.

    Returns +inf where the information diverges (threshold channels at E = 0).
    """
    E = _check_E(E)
    scalar = E.ndim == 0
    E = np.atleast_1d(E)
    if isinstance(channel, AWGN):
        out = 1.0 / (E + channel.noise_var)
    elif isinstance(channel, ThresholdChannel):
        out = _cached_threshold_mean(channel, E, quad.p_order)
    else:
        out = np.array([_generic_fisher_mean(channel, float(e), quad) for e in E])
    return float(out[0]) if scalar else out


def _cached_threshold_mean(ch, E, order):
    if len(E) == 1:
        return np.array([_threshold_mean_scalar(ch, float(E[0]), order)])
    return _threshold_fisher_mean(ch, E, order)


@lru_cache(maxsize=200_000)
def _threshold_mean_scalar(ch, e, order):
    return float(_threshold_fisher_mean(ch, np.array([e]), order)[0])


@lru_cache(maxsize=4096)
def _generic_fisher_mean(ch, e, quad):
    if e >= 1.0:
        return _generic_fisher(ch, 0.0, 1.0, quad)
    ec = max(e, E_MIN)
    xg, wg = hermgauss(quad.p_order)
    ps = np.sqrt(1.0 - ec) * xg
    return float(sum(w * _generic_fisher(ch, p, ec, quad) for p, w in zip(ps, wg)))


def effective_noise_var(ctx: NoiseContext, E):
    """Sigma(E)^2 = R / E_p[F(p|E)]; 0 where the information diverges and
    +inf where it vanishes."""
    I = np.asarray(fisher_mean(ctx.channel, E, ctx.quad))
    with np.errstate(divide="ignore"):
        out = ctx.rate / I
    return float(out) if out.ndim == 0 else out


def g_out(ch: Channel, y, p, v, quad: QuadratureSpec = QuadratureSpec()):
    """Output score g = d_p ln f(y|p,v) and its derivative d_p g.

    Raises :class:`SingularityError` if f(y|p,v) = 0.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("g_out needs v > 0")
    if isinstance(ch, AWGN):
        s2 = v + ch.noise_var
        g = (np.asarray(y, float) - np.asarray(p, float)) / s2
        return g, np.broadcast_to(-1.0 / s2, np.shape(g)) * 1.0
    if isinstance(ch, ThresholdChannel):
        logf, g, h = _threshold_terms(ch, ch.output_index(y), p, v)
        if np.any(~np.isfinite(logf)):
            raise SingularityError("observed output has zero likelihood under the smoothed kernel")
        return g, h - g * g
    f, df, d2f = smoothed_gh(ch, y, p, v, quad.gh_order)
    if np.any(f <= 0):
        raise SingularityError("observed output has zero likelihood under the smoothed kernel")
    g = df / f
    return g, d2f / f - g * g


def lipschitz_estimate(ch: Channel, v: float, p_range=(-4.0, 4.0), n: int = 801) -> float:
    """Empirical sup_p |d_p g_out| over the output support and a p-grid."""
    p = np.linspace(*p_range, n)
    if ch.discrete:
        ys = ch.ys
    else:
        ys = np.linspace(-4.0, 4.0, 81)
    worst = 0.0
    for y in ys:
        try:
            _, dg = g_out(ch, np.full_like(p, y), p, v)
        except SingularityError:
            continue
        worst = max(worst, float(np.max(np.abs(dg))))
    return worst


__all__ = [
    "ChannelError",
    "CustomChannel",
    "E_MIN",
    "NoiseContext",
    "QuadratureSpec",
    "SingularityError",
    "effective_noise_var",
    "f_marginal",
    "fisher_info",
    "fisher_mean",
    "g_out",
    "hermgauss",
    "lipschitz_estimate",
    "smoothed",
    "smoothed_adaptive",
    "smoothed_gh",
]

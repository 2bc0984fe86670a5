"""Section prior, MMSE denoiser and the underlying state evolution.

The section-wise effective channel is ``r = s + z * tau`` with
``tau^2 = Sigma^2 / log2(B)``.  Everything below is parametrised by the
per-component SNR ``gamma = 1 / tau^2 = log2(B) / Sigma^2``.

The MMSE of the denoiser has no closed form, so it is estimated by Monte Carlo
with common random numbers: one fixed set of noise draws is reused for every
``gamma``, which makes the estimate a smooth deterministic function.  It is
tabulated once on a log-spaced ``gamma`` grid and interpolated with a cubic
spline; the spline's integral gives the free entropy ``S_u`` through the
I-MMSE relation ``dS/dgamma = -mmse / (2 ln B)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import interpolate, special

from .effective_noise import NoiseContext, fisher_mean

CHUNK = 1 << 21  # noise entries generated per chunk


@dataclass(frozen=True)
class SectionPrior:
    """Factorised prior over B-dimensional sections.

    ``support=None`` is the sparse-superposition prior: uniform over the B
    standard basis vectors.  Otherwise ``support`` is a (K, B) tuple of
    points with probabilities ``weights``.
    """

    B: int
    support: Optional[tuple] = None
    weights: Optional[tuple] = None

    def __post_init__(self):
        if self.B < 2:
            raise ValueError("section size must be at least 2")
        if self.support is not None:
            X = np.asarray(self.support, float)
            w = np.asarray(self.weights, float)
            if X.ndim != 2 or X.shape[1] != self.B or w.shape != (X.shape[0],):
                raise ValueError("support must be (K, B) with K weights")
            if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise ValueError("weights must form a probability vector")

    @classmethod
    def one_hot(cls, B: int) -> "SectionPrior":
        return cls(B)

    @property
    def is_one_hot(self) -> bool:
        return self.support is None

    @property
    def points(self) -> np.ndarray:
        return np.eye(self.B) if self.is_one_hot else np.asarray(self.support, float)

    @property
    def probs(self) -> np.ndarray:
        if self.is_one_hot:
            return np.full(self.B, 1.0 / self.B)
        return np.asarray(self.weights, float)

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    @property
    def second_moment(self) -> float:
        return float(self.probs @ np.sum(self.points**2, axis=1))

    @property
    def variance(self) -> float:
        """E||s - E s||^2, the MMSE at zero SNR (1 - 1/B for one-hot)."""
        return self.second_moment - float(self.mean @ self.mean)

    @property
    def log2B(self) -> float:
        return float(np.log2(self.B))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self.probs), size=n, p=self.probs)
        return self.points[idx]


@dataclass(frozen=True)
class MCSettings:
    """Monte-Carlo and tabulation settings for the denoiser MMSE."""

    samples: int = 200_000
    seed: int = 0
    knots: int = 600
    gamma_min: float = 1e-5
    gamma_max: float = 2000.0


def sigma_to_gamma(prior: SectionPrior, Sigma):
    Sigma = np.asarray(Sigma, dtype=float)
    with np.errstate(divide="ignore"):
        return prior.log2B / Sigma**2


def _log_posterior(prior: SectionPrior, r, gamma):
    """Unnormalised log posterior over the prior support, shape (..., K)."""
    X = prior.points
    with np.errstate(divide="ignore"):
        logp = np.log(prior.probs)
    # -||x - r||^2 / (2 tau^2), dropping the ||r||^2 term
    return logp + gamma * (r @ X.T - 0.5 * np.sum(X**2, axis=1))


def posterior_weights(prior: SectionPrior, r, gamma):
    """Posterior over support points given r = s + noise of variance 1/gamma."""
    r = np.asarray(r, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(np.isinf(gamma)):
        # noiseless: nearest support point, lowest index on ties
        d = np.sum((r[..., None, :] - prior.points) ** 2, axis=-1)
        return np.eye(len(prior.probs))[np.argmin(d, axis=-1)]
    if np.all(gamma == 0):
        return np.broadcast_to(prior.probs, r.shape[:-1] + prior.probs.shape).copy()
    g = gamma[..., None] if gamma.ndim else gamma
    return special.softmax(_log_posterior(prior, r, g), axis=-1)


def posterior_mean(prior: SectionPrior, r, gamma):
    w = posterior_weights(prior, r, gamma)
    return w if prior.is_one_hot else w @ prior.points


def denoise(prior: SectionPrior, s, z, Sigma):
    """MMSE estimate of the section s observed as s + z Sigma / sqrt(log2 B)."""
    s, z = np.asarray(s, float), np.asarray(z, float)
    if Sigma == np.inf:
        return np.broadcast_to(prior.mean, s.shape).copy()
    if Sigma == 0:
        return posterior_mean(prior, s, np.inf)
    tau = Sigma / np.sqrt(prior.log2B)
    return posterior_mean(prior, s + tau * z, 1.0 / tau**2)


# -- Monte Carlo -------------------------------------------------------------


def _chunks(prior: SectionPrior, mc: MCSettings):
    """Yield (s, z) blocks; deterministic per (seed, chunk index)."""
    rows = max(1, CHUNK // prior.B)
    done = 0
    idx = 0
    while done < mc.samples:
        n = min(rows, mc.samples - done)
        rng = np.random.default_rng([mc.seed, idx])
        z = rng.standard_normal((n, prior.B))
        if prior.is_one_hot:
            s = np.zeros((n, prior.B))
            s[:, 0] = 1.0  # symmetry: every basis vector is equivalent
        else:
            s = prior.sample(n, rng)
        yield s, z
        done += n
        idx += 1


def _mc_stats(prior: SectionPrior, gammas, mc: MCSettings, what: str):
    """Sample mean and standard error of a per-sample statistic at each gamma."""
    gammas = np.atleast_1d(np.asarray(gammas, float))
    s1 = np.zeros(gammas.shape)
    s2 = np.zeros(gammas.shape)
    n = 0
    for s, z in _chunks(prior, mc):
        n += len(s)
        for i, gm in enumerate(gammas):
            val = _per_sample(prior, s, z, gm, what)
            s1[i] += val.sum()
            s2[i] += (val * val).sum()
    mean = s1 / n
    var = np.maximum(s2 / n - mean**2, 0.0)
    return mean, np.sqrt(var / max(n - 1, 1))


def _one_hot_posterior(z, gamma):
    """Posterior for s = e_1 observed at SNR gamma: softmax(gamma e_1 + sqrt(gamma) z)."""
    a = np.sqrt(gamma) * z
    a[:, 0] += gamma
    a -= a.max(axis=1, keepdims=True)
    np.exp(a, out=a)
    a /= a.sum(axis=1, keepdims=True)
    return a


def _per_sample(prior, s, z, gamma, what):
    if prior.is_one_hot and 0 < gamma < np.inf and what != "entropy":
        g = _one_hot_posterior(z, gamma)
        if what == "mse":
            return 1.0 - 2.0 * g[:, 0] + np.einsum("ij,ij->i", g, g)
        if what == "identity":
            return 1.0 - np.einsum("ij,ij->i", g, g)
    if gamma == np.inf:
        g = posterior_mean(prior, s, np.inf)
    elif gamma == 0:
        g = np.broadcast_to(prior.mean, s.shape)
    else:
        g = posterior_mean(prior, s + z / np.sqrt(gamma), gamma)
    if what == "mse":
        return np.sum((g - s) ** 2, axis=1)
    if what == "identity":
        # orthogonality of the MMSE error: E||s - g||^2 = E||s||^2 - E||g||^2
        return np.sum(s * s, axis=1) - np.sum(g * g, axis=1)
    if what == "entropy":
        return _free_entropy_sample(prior, s, z, gamma)
    raise ValueError(what)


def _free_entropy_sample(prior, s, z, gamma):
    """log_B of int dx p0(x) theta(x)/theta(s), per sample."""
    if gamma == 0:
        return np.zeros(len(s))
    if gamma == np.inf:
        return np.full(len(s), np.log(_prob_of(prior, s)) / np.log(prior.B))
    r = s + z / np.sqrt(gamma)
    X = prior.points
    with np.errstate(divide="ignore"):
        logp = np.log(prior.probs)
    d_x = np.sum((r[:, None, :] - X[None]) ** 2, axis=-1)
    d_s = np.sum((r - s) ** 2, axis=1)
    lse = special.logsumexp(logp - 0.5 * gamma * (d_x - d_s[:, None]), axis=1)
    return lse / np.log(prior.B)


def _prob_of(prior, s):
    match = np.all(np.isclose(s[:, None, :], prior.points[None]), axis=-1)
    return match.astype(float) @ prior.probs


def mmse_mc(prior: SectionPrior, Sigma: float, mc: MCSettings = MCSettings()):
    """Direct Monte-Carlo E||g_in - s||^2 at noise Sigma: (mean, stderr)."""
    m, se = _mc_stats(prior, [float(sigma_to_gamma(prior, Sigma))], mc, "mse")
    return float(m[0]), float(se[0])


def mmse_mc_identity(prior: SectionPrior, Sigma: float, mc: MCSettings = MCSettings()):
    """Same expectation through E||s||^2 - E||g_in||^2."""
    m, se = _mc_stats(prior, [float(sigma_to_gamma(prior, Sigma))], mc, "identity")
    return float(m[0]), float(se[0])


def free_entropy_mc(prior: SectionPrior, Sigma: float, mc: MCSettings = MCSettings()):
    """Direct log-sum-exp Monte Carlo for S_u(Sigma): (mean, stderr).

    Normalised so that S_u -> 0 as Sigma -> inf and S_u -> log_B P(s) (= -1
    for the one-hot prior) as Sigma -> 0.
    """
    m, se = _mc_stats(prior, [float(sigma_to_gamma(prior, Sigma))], mc, "entropy")
    return float(m[0]), float(se[0])


@dataclass
class DenoiserCurve:
    """Tabulated mmse(gamma) with its I-MMSE integral."""

    prior: SectionPrior
    mc: MCSettings
    gammas: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    _spline: interpolate.CubicSpline = field(repr=False, default=None)
    _anti: object = field(repr=False, default=None)

    def __post_init__(self):
        self._spline = interpolate.CubicSpline(self.gammas, self.values, bc_type="natural")
        self._anti = self._spline.antiderivative()
        self._total = float(self._anti(self.gammas[-1]))

    @property
    def gamma_max(self) -> float:
        return float(self.gammas[-1])

    def mmse(self, gamma):
        gamma = np.asarray(gamma, float)
        g = np.clip(gamma, 0.0, self.gamma_max)
        # beyond the last knot the error is below double precision resolution
        out = np.where(gamma > self.gamma_max, 0.0, np.clip(self._spline(g), 0.0, None))
        return out if out.ndim else float(out)

    def mmse_stderr(self, gamma):
        gamma = np.clip(np.asarray(gamma, float), 0.0, self.gamma_max)
        out = np.interp(gamma, self.gammas, self.stderr)
        return out if out.ndim else float(out)

    def free_entropy(self, gamma):
        """S_u at per-component SNR gamma (0 at gamma = 0)."""
        gamma = np.asarray(gamma, float)
        g = np.clip(gamma, 0.0, self.gamma_max)
        out = -self._anti(g) / (2 * np.log(self.prior.B))
        out = np.where(gamma > self.gamma_max, -self._total / (2 * np.log(self.prior.B)), out)
        return out if out.ndim else float(out)

    def d_free_entropy(self, gamma):
        return -self.mmse(gamma) / (2 * np.log(self.prior.B))


@lru_cache(maxsize=64)
def denoiser_curve(prior: SectionPrior, mc: MCSettings = MCSettings()) -> DenoiserCurve:
    """Build (once per prior and settings) the tabulated MMSE curve."""
    logg = np.linspace(np.log(mc.gamma_min), np.log(mc.gamma_max), mc.knots - 1)
    gammas = np.concatenate([[0.0], np.exp(logg)])
    mean, se = _mc_stats(prior, gammas, mc, "identity")
    mean[0] = prior.variance  # exact at zero SNR
    se[0] = 0.0
    return DenoiserCurve(prior, mc, gammas, mean, se)


# -- state evolution ---------------------------------------------------------


def gamma_of_E(ctx: NoiseContext, prior: SectionPrior, E):
    """Per-component SNR of the section channel when the output MSE is E."""
    return prior.log2B * fisher_mean(ctx.channel, E, ctx.quad) / ctx.rate


def se_operator_u(ctx: NoiseContext, prior: SectionPrior, E, mc: MCSettings = MCSettings()):
    """T_u(E) and its Monte-Carlo standard error."""
    curve = denoiser_curve(prior, mc)
    g = gamma_of_E(ctx, prior, E)
    return curve.mmse(g), curve.mmse_stderr(g)


@dataclass
class FixedPoint:
    E: float
    iterations: int
    converged: bool
    history: list
    stderr: float = 0.0


def se_fixed_point(ctx: NoiseContext, prior: SectionPrior, E_init: float, tol: float = 1e-9,
                   max_iter: int = 10_000, mc: MCSettings = MCSettings()) -> FixedPoint:
    """Iterate E <- T_u(E) from ``E_init`` until the step drops below ``tol``."""
    curve = denoiser_curve(prior, mc)
    E = float(E_init)
    hist = [E]
    for t in range(1, max_iter + 1):
        E_new = float(curve.mmse(gamma_of_E(ctx, prior, min(max(E, 0.0), 1.0))))
        hist.append(E_new)
        if abs(E_new - E) < tol:
            return FixedPoint(E_new, t, True, hist, float(curve.mmse_stderr(gamma_of_E(ctx, prior, E_new))))
        E = E_new
    return FixedPoint(E, max_iter, False, hist, float(curve.mmse_stderr(gamma_of_E(ctx, prior, E))))


def mse_floor(ctx, prior, tol=1e-9, max_iter=10_000, mc=MCSettings()) -> FixedPoint:
    """E_0, the fixed point reached from E = 0."""
    return se_fixed_point(ctx, prior, 0.0, tol, max_iter, mc)


def same_fixed_point(a: FixedPoint, b: FixedPoint, tol: float = 1e-9) -> bool:
    slack = max(10 * tol, 5 * max(a.stderr, b.stderr))
    return abs(a.E - b.E) < slack


def in_basin(ctx, prior, E, tol=1e-9, max_iter=10_000, mc=MCSettings(), floor: FixedPoint = None) -> bool:
    """Whether SE started at E ends at the MSE floor."""
    floor = floor or mse_floor(ctx, prior, tol, max_iter, mc)
    return same_fixed_point(se_fixed_point(ctx, prior, E, tol, max_iter, mc), floor, tol)


def decodes(ctx, prior, tol=1e-9, max_iter=10_000, mc=MCSettings()) -> bool:
    """The GAMP-threshold predicate T_u^inf(1) = E_0."""
    return in_basin(ctx, prior, 1.0, tol, max_iter, mc)


class BracketError(RuntimeError):
    pass


def bisect_rate(pred, r_lo: float, r_hi: float, rate_tol: float, expand: int = 8) -> float:
    """Largest rate where a monotone predicate (true at small rates) holds."""
    for _ in range(expand):
        if pred(r_lo):
            break
        r_lo /= 2
    else:
        raise BracketError(f"predicate false down to rate {r_lo}")
    for _ in range(expand):
        if not pred(r_hi):
            break
        r_lo, r_hi = r_hi, 2 * r_hi
    else:
        raise BracketError(f"predicate still true at rate {r_hi}")
    while r_hi - r_lo > rate_tol:
        mid = 0.5 * (r_lo + r_hi)
        if pred(mid):
            r_lo = mid
        else:
            r_hi = mid
    return 0.5 * (r_lo + r_hi)


def threshold_gamp_u(channel, prior: SectionPrior, r_lo: float, r_hi: float, rate_tol: float = 1e-4,
                     quad=None, mc: MCSettings = MCSettings(), tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """R_u: sup of rates at which SE from E = 1 reaches the MSE floor."""
    kw = {} if quad is None else {"quad": quad}

    def pred(R):
        return decodes(NoiseContext(channel, R, **kw), prior, tol, max_iter, mc)

    return bisect_rate(pred, r_lo, r_hi, rate_tol)

"""Concrete codes: messages, coding matrices, encoding, transmission and the
GAMP decoder with scalar (underlying) or per-block (coupled) variances.

Messages are stored as the index of the non-zero entry of every section,
``msg[l] in {0..B-1}``; :func:`to_dense` gives the length-N vector.

Decoder updates, with v the average section variance 1 - ||s_hat_l||^2:

    output side  tau_p = v,   p = F s_hat - tau_p g_prev,   g, dg = g_out(y, p, tau_p)
    input side   1/tau_r = (M/L) mean(-dg),   r = s_hat + tau_r F^T g
                 s_hat_l = posterior mean of section l observed as r_l at SNR 1/tau_r

For coupled matrices the two variances become vectors over row and column
blocks, weighted by J.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import Channel
from .coupled import CouplingSpec, GeometryError
from .effective_noise import NoiseContext, QuadratureSpec, g_out
from .state_evolution import MCSettings, SectionPrior, posterior_weights, se_fixed_point


@dataclass(frozen=True)
class CodeParams:
    L: int
    B: int
    R: float

    def __post_init__(self):
        if self.L < 1 or self.B < 2 or not self.R > 0:
            raise ValueError(f"invalid code parameters L={self.L}, B={self.B}, R={self.R}")

    @property
    def N(self) -> int:
        return self.L * self.B

    @property
    def M(self) -> int:
        return math.ceil(self.L * math.log2(self.B) / self.R - 1e-9)

    @property
    def alpha(self) -> float:
        """Measurement rate M/N in the large-L limit."""
        return math.log2(self.B) / (self.B * self.R)

    @property
    def rate_actual(self) -> float:
        """L log2(B) / M, the rate after rounding M up."""
        return self.L * math.log2(self.B) / self.M


def sample_message(L: int, B: int, rng: np.random.Generator) -> np.ndarray:
    """Position of the 1 in each of L uniform one-hot sections."""
    return rng.integers(0, B, size=L)


def to_dense(msg, B: int) -> np.ndarray:
    msg = np.asarray(msg)
    s = np.zeros((len(msg), B))
    s[np.arange(len(msg)), msg] = 1.0
    return s.ravel()


def _check_coupling(params: CodeParams, coupling: CouplingSpec):
    if params.L % coupling.Gamma or params.M % coupling.Gamma:
        raise GeometryError(f"Gamma={coupling.Gamma} must divide L={params.L} and M={params.M}")


def sample_matrix(params: CodeParams, rng: np.random.Generator, coupling: Optional[CouplingSpec] = None,
                  dtype=np.float64) -> np.ndarray:
    """Dense M x N coding matrix: i.i.d. N(0, 1/L), or N(0, J_rc/L) per block."""
    M, N, L = params.M, params.N, params.L
    F = rng.standard_normal((M, N), dtype=dtype)
    if coupling is None:
        F *= dtype(1.0 / np.sqrt(L))
        return F
    _check_coupling(params, coupling)
    G = coupling.Gamma
    scale = np.sqrt(coupling.J / L).astype(dtype)
    F = F.reshape(G, M // G, G, N // G)
    F *= scale[:, None, :, None]
    return F.reshape(M, N)


def encode(F, msg, B: int) -> np.ndarray:
    """Codeword F s as the sum of the L selected columns."""
    msg = np.asarray(msg)
    if F.shape[1] != len(msg) * B:
        raise ValueError(f"matrix has {F.shape[1]} columns, message needs {len(msg) * B}")
    cols = np.arange(len(msg)) * B + msg
    return F[:, cols].sum(axis=1, dtype=np.float64)


def transmit(ch: Channel, codeword, rng: np.random.Generator):
    return ch.sample(np.asarray(codeword, float), rng)


def harden(s_hat, B: int) -> np.ndarray:
    """Argmax per section, lowest index on ties."""
    return np.argmax(np.asarray(s_hat).reshape(-1, B), axis=1)


def section_error_rate(decoded, msg) -> float:
    decoded, msg = np.asarray(decoded), np.asarray(msg)
    return float(np.mean(decoded != msg))


# -- decoder ------------------------------------------------------------------


class DecoderError(ArithmeticError):
    pass


@dataclass
class GampResult:
    s_hat: np.ndarray
    mse: list  # empirical (1/L) sum_l ||s_hat_l - s_l||^2, index t = iteration
    ser: list
    variance: list  # the decoder's own variance estimate v
    diverged: bool = False
    trajectory: list = field(default_factory=list)


def gamp_decode(F, y, ch: Channel, prior: SectionPrior, params: CodeParams, t_max: int = 25,
                msg=None, coupling: Optional[CouplingSpec] = None, onsager: bool = True,
                quad: QuadratureSpec = QuadratureSpec(), keep_trajectory: bool = False) -> GampResult:
    """Run t_max GAMP iterations.  ``msg`` (true positions) is needed only for
    the MSE/SER trace and, with ``coupling``, to fix the seed sections."""
    if not prior.is_one_hot:
        raise ValueError("the decoder implements the one-hot section prior")
    M, N, L, B = F.shape[0], F.shape[1], params.L, params.B
    if N != L * B or len(y) != M:
        raise ValueError("dimensions of F, y and params disagree")
    s_true = None if msg is None else to_dense(msg, B).reshape(L, B)

    if coupling is not None:
        _check_coupling(params, coupling)
        G = coupling.Gamma
        row_blk = np.repeat(np.arange(G), M // G)
        sec_blk = np.repeat(np.arange(G), L // G)
        seeded = coupling.seed_mask[sec_blk]
        if np.any(seeded) and s_true is None:
            raise ValueError("coupled decoding needs the message to fix the seed sections")
        Jn = coupling.J / G

    S = np.full((L, B), 1.0 / B)
    if coupling is not None:
        S[seeded] = s_true[seeded]
    g_prev = np.zeros(M)
    res = GampResult(S.ravel().copy(), [], [], [])

    def record(S, v):
        res.variance.append(float(np.mean(v)))
        if s_true is not None:
            res.mse.append(float(np.mean(np.sum((S - s_true) ** 2, axis=1))))
            res.ser.append(section_error_rate(harden(S, B), msg))
        if keep_trajectory:
            res.trajectory.append(S.ravel().copy())

    sec_var = 1.0 - np.sum(S * S, axis=1)
    record(S, sec_var)
    for t in range(1, t_max + 1):
        if coupling is None:
            tau_p = np.full(M, float(np.mean(sec_var)))
        else:
            v_c = np.bincount(sec_blk, sec_var, minlength=G) / (L // G)
            tau_p = (Jn @ v_c)[row_blk]
        tau_p = np.maximum(tau_p, 1e-300)
        p = F @ S.ravel() - (tau_p * g_prev if onsager else 0.0)
        g, dg = g_out(ch, y, p, tau_p, quad)
        if coupling is None:
            prec = (M / L) * float(np.mean(-dg))
            prec_sec = np.full(L, prec)
        else:
            mean_r = np.bincount(row_blk, -dg, minlength=G) / (M // G)
            prec_c = (M / (L * G)) * (coupling.J.T @ mean_r)
            prec_sec = prec_c[sec_blk]
        if np.any(~np.isfinite(g)) or np.any(~np.isfinite(prec_sec)):
            raise DecoderError(f"non-finite values at iteration {t}")
        prec_sec = np.maximum(prec_sec, 1e-300)
        tau_r = 1.0 / prec_sec
        R_in = S + tau_r[:, None] * (F.T @ g).reshape(L, B)
        S = posterior_weights(prior, R_in, prec_sec)
        if coupling is not None:
            S[seeded] = s_true[seeded]
        if np.any(~np.isfinite(S)):
            raise DecoderError(f"NaN in the section posteriors at iteration {t}")
        g_prev = g
        sec_var = 1.0 - np.sum(S * S, axis=1)
        record(S, sec_var)
        if res.mse and res.mse[-1] > 10:
            res.diverged = True
            break
    res.s_hat = S.ravel()
    return res


# -- GAMP versus state evolution ---------------------------------------------


@dataclass
class TrackingResult:
    rows: list  # (seed, t, mse_empirical, mse_se, ser)
    se: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    tolerance: np.ndarray
    status: str  # "pass" or "warn"

    def header(self):
        return ["seed", "t", "mse_empirical", "mse_se", "ser"]


def se_trajectory(ch: Channel, prior: SectionPrior, rate: float, t_max: int, mc: MCSettings = MCSettings(),
                  quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """SE prediction of the decoder's MSE, started where the decoder starts (E = 1 - 1/B)."""
    fp = se_fixed_point(NoiseContext(ch, rate, quad), prior, prior.variance, tol=0.0, max_iter=t_max, mc=mc)
    return np.asarray(fp.history[: t_max + 1])


def se_tracking(ch: Channel, B: int, R: float, L: int, seeds, t_max: int = 10, onsager: bool = True,
                mc: MCSettings = MCSettings(), quad: QuadratureSpec = QuadratureSpec(),
                dtype=np.float64, iters=None) -> TrackingResult:
    """Empirical GAMP MSE over seeds against the SE trajectory.

    Status is "pass" if the mean MSE is within max(0.02, 3 inter-seed sigma)
    of SE for every iteration in ``iters`` (default 1..t_max), else "warn".
    """
    params = CodeParams(L, B, R)
    prior = SectionPrior(B)
    se = se_trajectory(ch, prior, params.rate_actual, t_max, mc, quad)
    rows, runs = [], []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        msg = sample_message(L, B, rng)
        F = sample_matrix(params, rng, dtype=dtype)
        y = transmit(ch, encode(F, msg, B), rng)
        res = gamp_decode(F, y, ch, prior, params, t_max, msg, onsager=onsager, quad=quad)
        mse = np.full(t_max + 1, np.nan)
        mse[: len(res.mse)] = res.mse
        runs.append(mse)
        for t in range(t_max + 1):
            rows.append((seed, t, mse[t], se[t] if t < len(se) else np.nan, res.ser[t] if t < len(res.ser) else np.nan))
    runs = np.array(runs)
    mean = runs.mean(axis=0)
    std = runs.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros(t_max + 1)
    tolerance = np.maximum(0.02, 3 * std)
    iters = list(range(1, t_max + 1)) if iters is None else list(iters)
    ok = all(abs(mean[t] - se[t]) <= tolerance[t] for t in iters)
    return TrackingResult(rows, se, mean, std, tolerance, "pass" if ok else "warn")


__all__ = [
    "CodeParams",
    "DecoderError",
    "GampResult",
    "TrackingResult",
    "encode",
    "gamp_decode",
    "harden",
    "sample_matrix",
    "sample_message",
    "se_tracking",
    "se_trajectory",
    "section_error_rate",
    "to_dense",
    "transmit",
]

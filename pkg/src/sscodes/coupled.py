"""Spatially coupled ensembles: block variances, coupled state evolution,
saturated profiles, the shift operator and the coupled potential.

Blocks are indexed 0..Gamma-1 internally; "the first k blocks" means indices
0..k-1.  Profile entries in the first and last 3w blocks are pinned to zero,
while the decoder knows the message sections of the first and last 4w blocks
(see :mod:`codec`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .effective_noise import NoiseContext, fisher_mean
from .potential import u_pot
from .state_evolution import BracketError, MCSettings, SectionPrior, bisect_rate, denoiser_curve, mse_floor


class GeometryError(ValueError):
    """Invalid (Gamma, w) or block structure."""


class ShapeError(ValueError):
    """A profile does not have the fixed-point shape a routine expects."""


def rectangular(x):
    x = np.asarray(x, float)
    return (np.abs(x) <= 1).astype(float)


def triangular(x):
    """1 - |x|/2 on [-1, 1]: admissible with g0 = 1/2."""
    x = np.asarray(x, float)
    return np.where(np.abs(x) <= 1, 1.0 - 0.5 * np.abs(x), 0.0)


DESIGN_FUNCTIONS = {"rectangular": rectangular, "triangular": triangular}


@dataclass(frozen=True)
class CouplingSpec:
    """Coupling geometry.  ``boundary="periodic"`` with ``pinned=False`` is a
    test mode in which every row and column of J sums to Gamma, so a flat
    profile reduces exactly to the underlying system."""

    Gamma: int
    w: int
    R: float = 1.0
    design: str = "rectangular"
    boundary: str = "open"
    pinned: bool = True

    def __post_init__(self):
        if self.w < 1:
            raise GeometryError("coupling window w must be at least 1")
        if self.Gamma <= 8 * self.w:
            raise GeometryError(f"need Gamma > 8w, got Gamma={self.Gamma}, w={self.w}")
        if self.design not in DESIGN_FUNCTIONS:
            raise GeometryError(f"unknown design function {self.design!r}")
        if self.boundary not in ("open", "periodic"):
            raise GeometryError(f"unknown boundary {self.boundary!r}")

    @property
    def g_w(self):
        return DESIGN_FUNCTIONS[self.design]

    @cached_property
    def _offsets(self):
        r = np.arange(self.Gamma)
        d = r[:, None] - r[None, :]
        if self.boundary == "periodic":
            d = (d + self.Gamma // 2) % self.Gamma - self.Gamma // 2
        return d

    @cached_property
    def gamma_r(self) -> np.ndarray:
        g = self.g_w(self._offsets / self.w)
        return (2 * self.w + 1) / g.sum(axis=1)

    @cached_property
    def J(self) -> np.ndarray:
        g = self.g_w(self._offsets / self.w)
        J = self.gamma_r[:, None] * self.Gamma * g / (2 * self.w + 1)
        J.setflags(write=False)
        return J

    @property
    def R_eff(self) -> float:
        return self.R * (1 - 8 * self.w / self.Gamma)

    @cached_property
    def pin_mask(self) -> np.ndarray:
        """Profile entries held at zero: first and last 3w blocks."""
        m = np.zeros(self.Gamma, bool)
        if self.pinned:
            m[: 3 * self.w] = True
            m[self.Gamma - 3 * self.w:] = True
        return m

    @cached_property
    def seed_mask(self) -> np.ndarray:
        """Message blocks known to the decoder: first and last 4w blocks."""
        m = np.zeros(self.Gamma, bool)
        if self.pinned:
            m[: 4 * self.w] = True
            m[self.Gamma - 4 * self.w:] = True
        return m

    def to_json(self) -> str:
        return json.dumps({"Gamma": self.Gamma, "w": self.w, "g_w": self.design, "R": self.R,
                           "R_eff": self.R_eff, "boundary": self.boundary, "pinned": self.pinned})


def build_coupling(Gamma: int, w: int, g_w: str = "rectangular", R: float = 1.0, **kw) -> CouplingSpec:
    return CouplingSpec(Gamma, w, R, g_w, **kw)


# -- profiles ----------------------------------------------------------------


def _as_profile(spec: CouplingSpec, E):
    E = np.asarray(E, float)
    if E.shape != (spec.Gamma,):
        raise GeometryError(f"profile has shape {E.shape}, expected ({spec.Gamma},)")
    if np.any(E < 0) or np.any(E > 1):
        raise ValueError("profile entries must lie in [0, 1]")
    return E


def pin(spec: CouplingSpec, E):
    E = np.array(E, float)
    E[spec.pin_mask] = 0.0
    return E


def initial_profile(spec: CouplingSpec, value: float = 1.0):
    return pin(spec, np.full(spec.Gamma, value))


def effective_noise_per_block(spec: CouplingSpec, E, ctx: NoiseContext):
    """Sigma_c^2 for every column block c; 0 where the information diverges."""
    inv = _inverse_noise(spec, _as_profile(spec, E), ctx)
    with np.errstate(divide="ignore"):
        return 1.0 / inv


def _inverse_noise(spec, E, ctx):
    vals, idx = np.unique(E, return_inverse=True)
    Phi = np.asarray(fisher_mean(ctx.channel, vals, ctx.quad))[idx]
    J = spec.J
    with np.errstate(invalid="ignore"):
        contrib = np.where(J > 0, J * Phi[:, None], 0.0)
    return contrib.sum(axis=0) / (spec.Gamma * ctx.rate)


def se_operator_c(spec: CouplingSpec, ctx: NoiseContext, prior: SectionPrior, E, mc: MCSettings = MCSettings()):
    """One coupled SE step: (T_c(E), per-entry Monte-Carlo standard error)."""
    E = _as_profile(spec, E)
    curve = denoiser_curve(prior, mc)
    gamma_c = prior.log2B * _inverse_noise(spec, E, ctx)
    m = curve.mmse(gamma_c)
    se = curve.mmse_stderr(gamma_c)
    T = spec.J @ m / spec.Gamma
    T_se = spec.J @ se / spec.Gamma
    T = np.clip(T, 0.0, 1.0)
    T[spec.pin_mask] = 0.0
    T_se[spec.pin_mask] = 0.0
    return T, T_se


@dataclass
class CoupledFixedPoint:
    profile: np.ndarray
    converged: bool
    iterations: int
    history: list = field(default_factory=list)
    stderr: Optional[np.ndarray] = None


def coupled_fixed_point(spec: CouplingSpec, ctx: NoiseContext, prior: SectionPrior, tol: float = 1e-9,
                        max_iter: int = 10_000, mc: MCSettings = MCSettings(), E_init=None,
                        record: bool = False) -> CoupledFixedPoint:
    """Iterate T_c from the all-ones (pinned) profile until the sup-norm step is below tol."""
    E = initial_profile(spec) if E_init is None else pin(spec, E_init)
    hist = [E.copy()] if record else []
    se = np.zeros_like(E)
    for t in range(1, max_iter + 1):
        E_new, se = se_operator_c(spec, ctx, prior, E, mc)
        if record:
            hist.append(E_new.copy())
        if np.max(np.abs(E_new - E)) < tol:
            return CoupledFixedPoint(E_new, True, t, hist, se)
        E = E_new
    return CoupledFixedPoint(E, False, max_iter, hist, se)


def front_position(E, level: float = 0.5) -> float:
    """Left-most position where the profile reaches ``level`` (linear interpolation
    between blocks); len(E) if it never does."""
    E = np.asarray(E, float)
    above = np.nonzero(E >= level)[0]
    if len(above) == 0:
        return float(len(E))
    i = int(above[0])
    if i == 0:
        return 0.0
    return i - 1 + (level - E[i - 1]) / (E[i] - E[i - 1])


def check_degradation(E, G, atol: float = 0.0) -> str:
    """Compare profiles componentwise.

    ``"equal"``: |E - G| <= atol everywhere.  ``"strictly"``: E >= G - atol
    everywhere and E > G + atol somewhere.  ``"degraded"``: E >= G only up to
    the tolerance (never returned when atol = 0).  ``"incomparable"``
    otherwise.  Call with swapped arguments to test the reverse order.
    """
    E, G = np.asarray(E, float), np.asarray(G, float)
    if E.shape != G.shape:
        raise GeometryError("profiles differ in length")
    d = E - G
    if np.all(np.abs(d) <= atol):
        return "equal"
    if np.all(d >= -atol):
        return "strictly" if np.any(d > atol) else "degraded"
    return "incomparable"


# -- saturated profiles and the shift ----------------------------------------


def saturate_profile(E, E0: float, pin_mask=None, atol: float = 1e-12):
    """Saturated profile of a fixed-point-shaped profile.

    The input must vanish on ``pin_mask`` and rise then fall (unimodal).  The
    output equals E0 up to r*, follows the input up to its maximum, then holds
    the maximum.  r* is the last position before the maximum with E <= E0.
    """
    E = np.asarray(E, float)
    if pin_mask is not None and np.any(E[np.asarray(pin_mask)] != 0):
        raise ShapeError("profile is not null on the pinned blocks")
    r_max = int(np.argmax(E))
    if np.any(np.diff(E[: r_max + 1]) < -atol) or np.any(np.diff(E[r_max:]) > atol):
        raise ShapeError("profile is not unimodal")
    out = np.empty_like(E)
    if E[r_max] <= E0:
        out[:] = E0
        return out
    below = np.nonzero(E[: r_max + 1] <= E0)[0]
    r_star = int(below[-1]) if len(below) else -1
    out[: r_star + 1] = E0
    out[r_star + 1: r_max + 1] = E[r_star + 1: r_max + 1]
    out[r_max:] = E[r_max]
    return out


def shift(E, E0: float):
    """[S(E)]_0 = E0 and [S(E)]_r = E_{r-1}."""
    E = np.asarray(E, float)
    return np.concatenate([[E0], E[:-1]])


def potential_c(spec: CouplingSpec, ctx: NoiseContext, prior: SectionPrior, E, mc: MCSettings = MCSettings()) -> float:
    """F_c(E) = sum_r U_u(E_r) - sum_c S_u(Sigma_c(E))."""
    E = _as_profile(spec, E)
    vals, idx = np.unique(E, return_inverse=True)
    U = np.atleast_1d(u_pot(ctx, vals))[idx]
    gamma_c = prior.log2B * _inverse_noise(spec, E, ctx)
    S = denoiser_curve(prior, mc).free_entropy(gamma_c)
    return float(np.sum(U) - np.sum(S))


# -- finite-size coupled threshold -------------------------------------------


@dataclass
class SaturationReport:
    R: float
    E0: float
    coupled: CoupledFixedPoint
    decoded: bool


def coupled_decodes(spec: CouplingSpec, ctx: NoiseContext, prior: SectionPrior, tol: float = 1e-9,
                    max_iter: int = 10_000, mc: MCSettings = MCSettings()) -> SaturationReport:
    """Whether the coupled fixed point from all-ones lies below the E_0 profile (within 10 tol)."""
    E0 = mse_floor(ctx, prior, tol, max_iter, mc).E
    fp = coupled_fixed_point(spec, ctx, prior, tol, max_iter, mc)
    ok = bool(np.all(fp.profile <= E0 + 10 * tol))
    return SaturationReport(ctx.rate, E0, fp, ok)


def threshold_gamp_c(channel, prior: SectionPrior, Gamma: int, w: int, r_lo: float, r_hi: float,
                     rate_tol: float = 1e-4, design: str = "rectangular", quad=None,
                     mc: MCSettings = MCSettings(), tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """Finite-size estimate R_c(Gamma, w) by bisection on :func:`coupled_decodes`."""
    kw = {} if quad is None else {"quad": quad}

    def pred(R):
        spec = CouplingSpec(Gamma, w, R, design)
        return coupled_decodes(spec, NoiseContext(channel, R, **kw), prior, tol, max_iter, mc).decoded

    return bisect_rate(pred, r_lo, r_hi, rate_tol)


__all__ = [
    "BracketError",
    "CouplingSpec",
    "CoupledFixedPoint",
    "GeometryError",
    "SaturationReport",
    "ShapeError",
    "build_coupling",
    "check_degradation",
    "coupled_decodes",
    "coupled_fixed_point",
    "effective_noise_per_block",
    "front_position",
    "initial_profile",
    "pin",
    "potential_c",
    "saturate_profile",
    "se_operator_c",
    "shift",
    "threshold_gamp_c",
]

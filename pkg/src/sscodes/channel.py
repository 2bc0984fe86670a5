"""Effective memoryless channels P_out(y|z) = W(y|pi(z)).

Two concrete families cover the reference channels:

* :class:`AWGN` -- Gaussian noise, identity input map.
* :class:`ThresholdChannel` -- a discrete memoryless channel ``W`` whose input
  is chosen by cutting the real line at fixed thresholds.  BSC, BEC and the Z
  channel (uniform or biased) are instances, and so is any q-ary channel with a
  Gaussian-quantile map.

:class:`CustomChannel` wraps an arbitrary kernel; everything downstream then
falls back to generic quadrature.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special

#: output symbol used by the BEC for an erasure
ERASURE = 0.0


class ChannelError(ValueError):
    """Bad channel parameters, config strings or output symbols."""


def qfunc(x):
    """Gaussian tail probability Q(x) = P[N(0,1) > x]."""
    return special.ndtr(-np.asarray(x, dtype=float))


def qfunc_inv(p: float, tol: float = 1e-13) -> float:
    """Inverse of :func:`qfunc` by bracketed root finding."""
    if not 0.0 < p < 1.0:
        raise ChannelError(f"Q^-1 needs p in (0, 1), got {p}")
    return optimize.brentq(lambda x: special.ndtr(-x) - p, -40.0, 40.0, xtol=tol, rtol=4 * np.finfo(float).eps)


def h2(p):
    """Binary entropy in bits, with h2(0) = h2(1) = 0."""
    p = np.asarray(p, dtype=float)
    return special.entr(p) / np.log(2) + special.entr(1 - p) / np.log(2)


class Channel:
    """Common interface.  Subclasses are immutable."""

    kind: str = "custom"

    @property
    def discrete(self) -> bool:
        raise NotImplementedError

    def kernel(self, y, z):
        raise NotImplementedError

    def map_pi(self, z):
        raise NotImplementedError

    def sample(self, z, rng: np.random.Generator):
        raise NotImplementedError


@dataclass(frozen=True)
class AWGN(Channel):
    snr: float
    kind: str = field(default="awgn", init=False)

    def __post_init__(self):
        if not self.snr > 0:
            raise ChannelError(f"snr must be positive, got {self.snr}")

    @property
    def noise_var(self) -> float:
        return 1.0 / self.snr

    @property
    def discrete(self) -> bool:
        return False

    def kernel(self, y, z):
        y, z = np.asarray(y, float), np.asarray(z, float)
        return np.exp(-0.5 * (y - z) ** 2 / self.noise_var) / np.sqrt(2 * np.pi * self.noise_var)

    def map_pi(self, z):
        return np.asarray(z, dtype=float)

    def sample(self, z, rng):
        z = np.asarray(z, dtype=float)
        return z + np.sqrt(self.noise_var) * rng.standard_normal(z.shape)

    def y_interval(self, p: float = 0.0, v: float = 0.0, width: float = 12.0):
        """Integration range for y that holds all but ~1e-30 of f(.|p,v)."""
        s = np.sqrt(v + self.noise_var)
        return (p - width * s, p + width * s)


@dataclass(frozen=True)
class ThresholdChannel(Channel):
    """Discrete channel ``W[a, y]`` driven by a threshold input map.

    ``pi(z) = inputs[k]`` for ``z`` in ``(thresholds[k-1], thresholds[k]]``,
    with ``thresholds[-1] = -inf`` and ``thresholds[len] = +inf``.
    """

    thresholds: tuple
    inputs: tuple
    outputs: tuple
    W: tuple
    kind: str = "dmc"
    params: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.thresholds, float)
        W = np.asarray(self.W, float)
        if len(self.inputs) != len(t) + 1:
            raise ChannelError("need exactly one more input symbol than thresholds")
        if np.any(np.diff(t) <= 0):
            raise ChannelError("thresholds must be strictly increasing")
        if np.any(np.diff(np.asarray(self.outputs, float)) <= 0):
            raise ChannelError("output symbols must be strictly increasing")
        if W.shape != (len(self.inputs), len(self.outputs)):
            raise ChannelError(f"W has shape {W.shape}, expected {(len(self.inputs), len(self.outputs))}")
        if np.any(W < 0) or not np.allclose(W.sum(axis=1), 1.0, atol=1e-14):
            raise ChannelError("rows of W must be probability vectors")

    @property
    def discrete(self) -> bool:
        return True

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.thresholds, dtype=float)

    @property
    def Wm(self) -> np.ndarray:
        return np.asarray(self.W, dtype=float)

    @property
    def ys(self) -> np.ndarray:
        return np.asarray(self.outputs, dtype=float)

    def param(self, name):
        return dict(self.params)[name]

    def output_index(self, y):
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.ys, y)
        idx_c = np.clip(idx, 0, len(self.outputs) - 1)
        if np.any(self.ys[idx_c] != y):
            raise ChannelError(f"output symbol(s) outside support {self.outputs}")
        return idx_c

    def input_index(self, z):
        return np.searchsorted(self.t, np.asarray(z, dtype=float), side="left")

    def map_pi(self, z):
        return np.asarray(self.inputs, dtype=float)[self.input_index(z)]

    def input_probs(self) -> np.ndarray:
        """Distribution of pi(Z) for standard Gaussian Z."""
        cdf = np.concatenate([[0.0], special.ndtr(self.t), [1.0]])
        return np.diff(cdf)

    def kernel(self, y, z):
        return self.Wm[self.input_index(z), self.output_index(y)]

    def sample(self, z, rng):
        a = self.input_index(z)
        cum = np.cumsum(self.Wm, axis=1)[a]
        u = rng.random(np.shape(a))
        k = (u[..., None] >= cum[..., :-1]).sum(axis=-1)
        return self.ys[k]

    # differences of consecutive rows: weight of the Gaussian density at each threshold
    @property
    def jumps(self) -> np.ndarray:
        """``jumps[k, y] = W[k+1, y] - W[k, y]``, shape (n_thresholds, n_outputs)."""
        return np.diff(self.Wm, axis=0)


@dataclass(frozen=True)
class CustomChannel(Channel):
    """User-supplied kernel.

    ``kernel(y, z)`` must broadcast.  Discrete channels give ``outputs``;
    continuous ones give ``y_range`` (a callable ``(p, v) -> (lo, hi)``).
    ``breakpoints`` lists z-locations where the kernel jumps, so that the
    adaptive integrators can split there.
    """

    kernel_fn: Callable
    outputs: Optional[tuple] = None
    y_range: Optional[Callable] = None
    breakpoints: tuple = ()
    sampler: Optional[Callable] = None
    pi: Optional[Callable] = None
    kind: str = field(default="custom", init=False)

    def __post_init__(self):
        if self.outputs is None and self.y_range is None:
            raise ChannelError("custom channel needs either discrete outputs or a y_range")

    @property
    def discrete(self) -> bool:
        return self.outputs is not None

    @property
    def ys(self) -> np.ndarray:
        return np.asarray(self.outputs, dtype=float)

    def kernel(self, y, z):
        return np.asarray(self.kernel_fn(np.asarray(y, float), np.asarray(z, float)), dtype=float)

    def map_pi(self, z):
        if self.pi is None:
            return np.asarray(z, dtype=float)
        return self.pi(z)

    def sample(self, z, rng):
        if self.sampler is None:
            raise ChannelError("custom channel has no sampler")
        return self.sampler(np.asarray(z, float), rng)

    def y_interval(self, p: float = 0.0, v: float = 0.0):
        return self.y_range(p, v)


# -- constructors ------------------------------------------------------------


def bsc(eps: float) -> ThresholdChannel:
    if not 0.0 <= eps < 0.5:
        raise ChannelError(f"BSC needs eps in [0, 1/2), got {eps}")
    W = ((1 - eps, eps), (eps, 1 - eps))
    return ThresholdChannel((0.0,), (-1.0, 1.0), (-1.0, 1.0), W, "bsc", (("eps", eps),))


def bec(eps: float) -> ThresholdChannel:
    if not 0.0 <= eps <= 1.0:
        raise ChannelError(f"BEC needs eps in [0, 1], got {eps}")
    W = ((1 - eps, eps, 0.0), (0.0, eps, 1 - eps))
    return ThresholdChannel((0.0,), (-1.0, 1.0), (-1.0, ERASURE, 1.0), W, "bec", (("eps", eps),))


def z_channel(eps: float, p1: float = 0.5) -> ThresholdChannel:
    """Z channel: input -1 flips to +1 with probability ``eps``; +1 is clean.

    ``p1`` is the probability of sending +1, realised by the map
    ``pi(z) = sign(z - Q^-1(p1))``.
    """
    if not 0.0 <= eps < 1.0:
        raise ChannelError(f"Z channel needs eps in [0, 1), got {eps}")
    if not 0.0 < p1 < 1.0:
        raise ChannelError(f"Z channel needs p1 in (0, 1), got {p1}")
    t = 0.0 if p1 == 0.5 else qfunc_inv(p1)
    W = ((1 - eps, eps), (0.0, 1.0))
    return ThresholdChannel((t,), (-1.0, 1.0), (-1.0, 1.0), W, "z", (("eps", eps), ("p1", p1)))


def z_optimal_p1(eps: float) -> float:
    """Capacity-achieving P(+1) for the Z channel (closed form)."""
    if eps == 0.0:
        return 0.5
    return 1.0 - 1.0 / ((1 - eps) * (1 + 2.0 ** (h2(eps) / (1 - eps))))


def quantile_thresholds(probs: Sequence[float]) -> tuple:
    """Thresholds making pi(Z) follow ``probs`` for Z ~ N(0, 1)."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs <= 0) or abs(probs.sum() - 1) > 1e-12:
        raise ChannelError("input probabilities must be positive and sum to one")
    tails = 1.0 - np.cumsum(probs)[:-1]
    return tuple(qfunc_inv(p) for p in tails)


def dmc(W, inputs, outputs, input_probs=None, kind: str = "dmc") -> ThresholdChannel:
    """Discrete channel with a quantile map; uniform inputs by default."""
    q = len(inputs)
    probs = np.full(q, 1.0 / q) if input_probs is None else input_probs
    W = tuple(tuple(float(x) for x in row) for row in np.asarray(W, float))
    return ThresholdChannel(quantile_thresholds(probs), tuple(map(float, inputs)), tuple(map(float, outputs)), W, kind)


# -- closed forms ------------------------------------------------------------


def _require_reference(ch):
    if ch.kind not in ("awgn", "bsc", "bec", "z"):
        raise ChannelError(f"no closed form for channel kind {ch.kind!r}")


def capacity_closed_form(ch: Channel) -> float:
    """Rate in bits achieved by the channel's input map (Shannon capacity
    when the map induces the capacity-achieving input law)."""
    _require_reference(ch)
    if ch.kind == "awgn":
        return 0.5 * np.log2(1 + ch.snr)
    eps = ch.param("eps")
    if ch.kind == "bsc":
        return float(1 - h2(eps))
    if ch.kind == "bec":
        return 1.0 - eps
    p1 = ch.param("p1")
    return float(h2((1 - p1) * (1 - eps)) - (1 - p1) * h2(eps))


def gamp_threshold_closed_form(ch: Channel) -> float:
    """Large-section-size GAMP threshold of the underlying ensemble."""
    _require_reference(ch)
    if ch.kind == "awgn":
        return 1.0 / (2 * np.log(2) * (1 + 1 / ch.snr))
    eps = ch.param("eps")
    if ch.kind == "bsc":
        return (1 - 2 * eps) ** 2 / (np.pi * np.log(2))
    if ch.kind == "bec":
        return (1 - eps) / (np.pi * np.log(2))
    if ch.param("p1") != 0.5:
        raise ChannelError("closed-form GAMP threshold of the Z channel is for p1 = 1/2 only")
    return (1 - eps) / (np.pi * np.log(2) * (1 + eps))


def mutual_information(ch: Channel, tol: float = 1e-12) -> float:
    """I(pi(Z); Y) in bits for Z ~ N(0, 1), by direct numerical evaluation."""
    if isinstance(ch, ThresholdChannel):
        P = ch.input_probs()
        W = ch.Wm
        py = P @ W
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(W > 0, W / py[None, :], 1.0)
        return float(np.sum(P[:, None] * W * np.log2(ratio)))
    if isinstance(ch, AWGN):
        s2 = ch.noise_var
        lo, hi = -12 * np.sqrt(1 + s2), 12 * np.sqrt(1 + s2)

        def py(y):
            # inner Gaussian average of the kernel over the input z
            return integrate.quad(lambda z: np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi) * ch.kernel(y, z),
                                  -12, 12, points=[y], epsabs=tol, limit=200)[0]

        def integrand(y):
            p = py(y)
            return -p * np.log2(p) if p > 0 else 0.0

        hy = integrate.quad(integrand, lo, hi, epsabs=1e-11, limit=200)[0]
        hyz = 0.5 * np.log2(2 * np.pi * np.e * s2)
        return hy - hyz
    raise ChannelError("mutual_information supports AWGN and threshold channels")


# -- config strings ----------------------------------------------------------

_SPEC_RE = re.compile(r"^\s*([a-zA-Z]+)\s*(?::\s*(.*))?$")


def parse_channel(text: str) -> Channel:
    """Parse ``awgn:snr=10``, ``bsc:eps=0.1``, ``bec:eps=0.5``,
    ``z:eps=0.1,p1=0.5437`` (``p1=opt`` selects the capacity-achieving bias)."""
    m = _SPEC_RE.match(text)
    if not m:
        raise ChannelError(f"cannot parse channel spec {text!r}")
    name = m.group(1).lower()
    args = {}
    if m.group(2):
        for part in m.group(2).split(","):
            if "=" not in part:
                raise ChannelError(f"bad channel argument {part!r} in {text!r}")
            k, v = (s.strip() for s in part.split("=", 1))
            args[k] = v

    def num(key, default=None):
        if key not in args:
            if default is None:
                raise ChannelError(f"channel {name!r} needs {key}=...")
            return default
        try:
            return float(args.pop(key))
        except ValueError:
            raise ChannelError(f"{key} must be a decimal number in {text!r}") from None

    if name == "awgn":
        ch = AWGN(num("snr"))
    elif name == "bsc":
        ch = bsc(num("eps"))
    elif name == "bec":
        ch = bec(num("eps"))
    elif name == "z":
        eps = num("eps")
        if args.get("p1") == "opt":
            args.pop("p1")
            p1 = z_optimal_p1(eps)
        else:
            p1 = num("p1", 0.5)
        ch = z_channel(eps, p1)
    else:
        raise ChannelError(f"unknown channel {name!r}")
    if args:
        raise ChannelError(f"unexpected argument(s) {sorted(args)} for {name}")
    return ch


def describe(ch: Channel) -> str:
    """Inverse of :func:`parse_channel` for the reference channels."""
    if ch.kind == "awgn":
        return f"awgn:snr={ch.snr!r}"
    if ch.kind in ("bsc", "bec"):
        return f"{ch.kind}:eps={ch.param('eps')!r}"
    if ch.kind == "z":
        return f"z:eps={ch.param('eps')!r},p1={ch.param('p1')!r}"
    return ch.kind

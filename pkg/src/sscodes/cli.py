"""Command-line front end.  Every command writes data only (CSV or JSON) with
the resolved configuration embedded for provenance.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import sys

import numpy as np

from . import __version__
from . import channel as chmod
from . import codec, coupled, potential
from .effective_noise import NoiseContext, QuadratureSpec, SingularityError, fisher_mean
from .state_evolution import BracketError, MCSettings, SectionPrior, threshold_gamp_u

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


def _floats(text):
    try:
        vals = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    return vals


def _pair(text):
    vals = _floats(text)
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise argparse.ArgumentTypeError(f"expected lo,hi with lo < hi, got {text!r}")
    return tuple(vals)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--mc-samples", type=int, default=200_000)
    common.add_argument("--gh-order", type=int, default=61)
    common.add_argument("--y-tol", type=float, default=1e-10)
    common.add_argument("--se-tol", type=float, default=1e-9)
    common.add_argument("--out", default="-", help="output file ('-' for stdout)")
    common.add_argument("--config", help="JSON file with option values (command-line flags win)")

    p = argparse.ArgumentParser(prog="sscodes", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("potential-curve", parents=[common], help="F_u or large-B phi_u on an E grid")
    c.add_argument("--channel", required=True)
    c.add_argument("--rates", type=_floats, required=True)
    c.add_argument("--large-b", action="store_true", help="large-B potential phi_u (shifted to 0 at E=0)")
    c.add_argument("--B", type=int, default=2, help="section size for the finite-B potential")
    c.add_argument("--points", type=int, default=401)

    c = sub.add_parser("thresholds", parents=[common], help="capacities and large-B thresholds over a sweep")
    c.add_argument("--family", choices=["awgn", "bsc", "bec", "z"], required=True)
    c.add_argument("--values", type=_floats, required=True, help="snr (awgn) or eps values")
    c.add_argument("--B", type=int, action="append", default=[], help="also compute finite-B R_u and R_pot")
    c.add_argument("--bracket", type=_pair, default=(0.05, 1.0), help="rate bracket for finite-B thresholds")
    c.add_argument("--rate-tol", type=float, default=1e-3)

    c = sub.add_parser("sc-profile", parents=[common], help="coupled SE trajectory and saturated profile")
    _coupled_args(c)
    c.add_argument("--R", type=float, required=True)
    c.add_argument("--max-iter", type=int, default=10_000)

    c = sub.add_parser("decode", parents=[common], help="GAMP versus state evolution")
    c.add_argument("--channel", required=True)
    c.add_argument("--B", type=int, default=2)
    c.add_argument("--R", type=float, required=True)
    c.add_argument("--L", type=int, default=1024)
    c.add_argument("--seeds", type=int, default=5)
    c.add_argument("--t-max", type=int, default=10)
    c.add_argument("--no-onsager", action="store_true")

    c = sub.add_parser("threshold-sat", parents=[common], help="R_u, R_pot and R_c(Gamma, w)")
    _coupled_args(c)
    c.add_argument("--bracket", type=_pair, required=True)
    c.add_argument("--rate-tol", type=float, default=1e-3)

    sub.add_parser("selftest", parents=[common], help="closed-form golden suite")
    return p


def _coupled_args(c):
    c.add_argument("--channel", required=True)
    c.add_argument("--B", type=int, default=2)
    c.add_argument("--Gamma", type=int, default=64)
    c.add_argument("--w", type=int, default=3)
    c.add_argument("--design", choices=sorted(coupled.DESIGN_FUNCTIONS), default="rectangular")


# -- helpers -----------------------------------------------------------------


def _settings(a):
    quad = QuadratureSpec(a.gh_order, a.y_tol, a.gh_order)
    mc = MCSettings(samples=a.mc_samples, seed=a.seed)
    return quad, mc


def _provenance(a) -> dict:
    cfg = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(a).items())
           if k not in ("out", "config")}
    return {"version": __version__, "config": cfg}


class _Output:
    def __init__(self, path):
        self.path = path
        self.buf = io.StringIO()

    def close(self):
        text = self.buf.getvalue()
        if self.path == "-":
            sys.stdout.write(text)
        else:
            with open(self.path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)


def _write_csv(a, header, rows, extra=None):
    out = _Output(a.out)
    prov = _provenance(a)
    if extra:
        prov["result"] = extra
    out.buf.write("# " + json.dumps(prov, sort_keys=True) + "\n")
    out.buf.write(",".join(header) + "\n")
    for row in rows:
        out.buf.write(",".join(potential._fmt(x) for x in row) + "\n")
    out.close()


def _write_json(a, payload):
    out = _Output(a.out)
    payload = dict(payload, provenance=_provenance(a))
    out.buf.write(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    out.close()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


# -- commands ----------------------------------------------------------------


def cmd_potential_curve(a):
    if not a.rates:
        raise ConfigError("--rates must list at least one rate")
    quad, mc = _settings(a)
    ch = chmod.parse_channel(a.channel)
    E = np.linspace(0.0, 1.0, a.points)
    rows = []
    col = "phi_u" if a.large_b else "F_u"
    for R in a.rates:
        ctx = NoiseContext(ch, R, quad)
        if a.large_b:
            vals = potential.potential_large_B(ctx, E, shifted=True)
        else:
            vals = potential.potential_u(ctx, SectionPrior(a.B), E, mc)
        rows.extend((R, e, v) for e, v in zip(E, vals))
    _write_csv(a, ["R", "E", col], rows)


def _threshold_row(ch, quad):
    return {"C": chmod.capacity_closed_form(ch), "R_u_inf": potential.r_u_infinity(ch, quad),
            "R_pot_inf": potential.r_pot_infinity(ch)}


def cmd_thresholds(a):
    quad, mc = _settings(a)
    rows = []
    for val in a.values:
        if a.family == "awgn":
            ch = chmod.AWGN(val)
        elif a.family == "bsc":
            ch = chmod.bsc(val)
        elif a.family == "bec":
            ch = chmod.bec(val)
        else:
            ch = chmod.z_channel(val)
        row = {"param": val, **_threshold_row(ch, quad)}
        if a.family == "z":
            p1 = chmod.z_optimal_p1(val)
            opt = chmod.z_channel(val, p1) if p1 != 0.5 else ch
            row.update({"p1_opt": p1, "C_opt": potential.r_pot_infinity(opt),
                        "R_u_inf_opt": potential.r_u_infinity(opt, quad)})
        for B in a.B:
            prior = SectionPrior(B)
            try:
                R_u = threshold_gamp_u(ch, prior, *a.bracket, rate_tol=a.rate_tol, quad=quad, mc=mc, tol=a.se_tol)
                R_pot = potential.threshold_potential(ch, prior, R_u, a.bracket[1], a.rate_tol, quad, mc,
                                                      tol=a.se_tol)
            except BracketError as exc:
                R_u = R_pot = None
                row[f"note_B{B}"] = f"no transition in bracket: {exc}"
            row[f"R_u_B{B}"] = R_u
            row[f"R_pot_B{B}"] = R_pot
        rows.append(row)
    _write_json(a, {"family": a.family, "rows": rows})


def _plateau(profile, atol=1e-6):
    """Stalled-wave shape flag: a unimodal profile whose top is flat over at least three blocks."""
    p = np.asarray(profile)
    top = p.max()
    if top <= 0:
        return False
    near = np.nonzero(p >= top - atol)[0]
    r = int(np.argmax(p))
    unimodal = np.all(np.diff(p[: r + 1]) >= -atol) and np.all(np.diff(p[r:]) <= atol)
    return bool(unimodal and near[-1] - near[0] + 1 >= 3 and len(near) == near[-1] - near[0] + 1)


def cmd_sc_profile(a):
    quad, mc = _settings(a)
    ch = chmod.parse_channel(a.channel)
    prior = SectionPrior(a.B)
    spec = coupled.CouplingSpec(a.Gamma, a.w, a.R, a.design)
    ctx = NoiseContext(ch, a.R, quad)
    rep = coupled.coupled_decodes(spec, ctx, prior, a.se_tol, a.max_iter, mc)
    fp = coupled.coupled_fixed_point(spec, ctx, prior, a.se_tol, a.max_iter, mc, record=True)
    try:
        sat = coupled.saturate_profile(fp.profile, rep.E0, spec.pin_mask, atol=1e-9)
    except coupled.ShapeError:
        sat = None
    rows = [(t, r, E) for t, prof in enumerate(fp.history) for r, E in enumerate(prof)]
    extra = {"coupling": json.loads(spec.to_json()), "E0": rep.E0, "converged": fp.converged,
             "iterations": fp.iterations, "decoded": rep.decoded, "plateau": _plateau(fp.profile),
             "saturated": None if sat is None else [float(x) for x in sat]}
    _write_csv(a, ["t", "r", "E"], rows, _jsonable(extra))


def cmd_decode(a):
    quad, mc = _settings(a)
    ch = chmod.parse_channel(a.channel)
    seeds = [a.seed + i for i in range(a.seeds)]
    res = codec.se_tracking(ch, a.B, a.R, a.L, seeds, a.t_max, onsager=not a.no_onsager, mc=mc, quad=quad)
    extra = {"status": res.status, "mean": res.mean, "se": res.se, "tolerance": res.tolerance}
    _write_csv(a, res.header(), res.rows, _jsonable(extra))


def cmd_threshold_sat(a):
    quad, mc = _settings(a)
    ch = chmod.parse_channel(a.channel)
    prior = SectionPrior(a.B)
    lo, hi = a.bracket
    R_u = threshold_gamp_u(ch, prior, lo, hi, a.rate_tol, quad, mc, a.se_tol)
    R_pot = potential.threshold_potential(ch, prior, R_u, hi, a.rate_tol, quad, mc, tol=a.se_tol)
    R_c = coupled.threshold_gamp_c(ch, prior, a.Gamma, a.w, R_u, hi, a.rate_tol, a.design, quad, mc, a.se_tol)
    _write_json(a, {"channel": chmod.describe(ch), "B": a.B, "Gamma": a.Gamma, "w": a.w,
                    "R_u": R_u, "R_pot": R_pot, "R_c": R_c, "label": f"finite-size R_c(Gamma={a.Gamma}, w={a.w})",
                    "R_u_lt_R_c": R_c > R_u, "R_c_le_R_pot_plus_0.05": R_c <= R_pot + 0.05})


GOLDEN = [
    ("awgn:snr=10", 1.72972, 0.65577),
    ("bsc:eps=0.1", 0.53100, 0.29390),
    ("bec:eps=0.5", 0.5, 0.22961),
    ("z:eps=0.1", 0.75828, 0.37573),
]


def cmd_selftest(a):
    quad, _ = _settings(a)
    checks = []
    for text, C, Ru in GOLDEN:
        ch = chmod.parse_channel(text)
        checks.append((f"capacity {text}", abs(potential.r_pot_infinity(ch) - C) < 1e-4))
        checks.append((f"closed-form capacity {text}", abs(chmod.capacity_closed_form(ch) - C) < 1e-4))
        checks.append((f"R_u_inf {text}", abs(potential.r_u_infinity(ch, quad) - Ru) < 1e-4))
        checks.append((f"R_u_inf vs formula {text}",
                       abs(potential.r_u_infinity(ch, quad) - chmod.gamp_threshold_closed_form(ch)) < 1e-6))
        for E in (0.05, 0.5):
            a1 = fisher_mean(ch, E, quad)
            a2 = fisher_mean(ch, E, quad.doubled())
            checks.append((f"quadrature doubling {text} E={E}", abs(1 / a1 - 1 / a2) < 1e-6 * max(1, abs(1 / a1))))
    try:
        potential.check_z_bias(0.1)
        checks.append(("Z-channel p1* closed form vs search", True))
    except AssertionError:
        checks.append(("Z-channel p1* closed form vs search", False))
    ok = all(c[1] for c in checks)
    _write_json(a, {"checks": [{"name": n, "pass": p} for n, p in checks], "pass": ok})
    return 0 if ok else EXIT_NUMERIC


COMMANDS = {
    "potential-curve": cmd_potential_curve,
    "thresholds": cmd_thresholds,
    "sc-profile": cmd_sc_profile,
    "decode": cmd_decode,
    "threshold-sat": cmd_threshold_sat,
    "selftest": cmd_selftest,
}


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {known.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    cfg.pop("command", None)
    subs = next(x for x in parser._actions if isinstance(x, argparse._SubParsersAction))
    known_dests = {act.dest for sp in subs.choices.values() for act in sp._actions}
    unknown = set(cfg) - known_dests
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for sp in subs.choices.values():
        dests = {act.dest for act in sp._actions}
        sp.set_defaults(**{k: (_floats(v) if k in ("rates", "values") and isinstance(v, str) else v)
                           for k, v in cfg.items() if k in dests})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        a = parser.parse_args(argv)
        if a.mc_samples < 1 or a.gh_order < 3:
            raise ConfigError("--mc-samples must be positive and --gh-order at least 3")
        rc = COMMANDS[a.command](a)
        return rc or 0
    except (ConfigError, chmod.ChannelError, coupled.GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BracketError, SingularityError, codec.DecoderError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

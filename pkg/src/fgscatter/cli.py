"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or configuration, 3 a numerical
tolerance was not met (records are still written when available).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from . import expr, verify
from .chart import ChartError, EinsteinModel, GridMetric, TorusChart, conformal_rescale, generic_metric, integrate
from .chart import laplace_beltrami, sphere_volume
from .config import ConfigError, load_config, parse_override
from .fg import FGError, solve_fg, volume_expansion
from .gjms import InterpolationError, P_k_apply, Q_compute, c_k, eigenfunction_symbol
from .gjms import oracle_paneitz, oracle_q2, oracle_q4, oracle_yamabe
from .records import Record, write_records, write_text, sweep_csv
from .scattering import (CollarModel, ScatteringError, Warp, YukawaModel, formal_residue, residue_extract,
                         scattering_value, yukawa_S)
from .series import SeriesError

log = logging.getLogger("fgscatter")

EXIT_OK, EXIT_INVALID, EXIT_TOLERANCE = 0, 2, 3


class ToleranceFailure(Exception):
    """A computed error exceeds its tolerance; the records are kept for output."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


# --------------------------------------------------------------------------
# building inputs from a config
# --------------------------------------------------------------------------

def build_metric(cfg):
    """A GridMetric, or an EinsteinModel for ``metric.kind = "einstein"``."""
    n = cfg.n
    kind = cfg["metric.kind"]
    if kind == "einstein":
        return einstein_base(n, float(cfg["metric.lam"]))
    chart = TorusChart.cube(n, cfg["grid.resolution"])
    if kind == "generic":
        h = generic_metric(chart, cfg["metric.amplitude"], cfg["seed"])
    else:
        h = GridMetric.flat(chart)
    comps = h.components.copy()
    for key, src in sorted(cfg["metric.perturbation"].items()):
        i, j = int(key[0]) - 1, int(key[1]) - 1
        field = expr.grid_function(expr.parse_expression(src), chart.coords)
        comps[..., i, j] += field
        if i != j:
            comps[..., j, i] += field
    h = GridMetric(chart, comps)
    if kind == "conformal":
        h = conformal_rescale(h, expr.grid_function(expr.parse_expression(cfg["metric.upsilon"]), chart.coords))
    return h


def einstein_base(n: int, lam: float) -> EinsteinModel:
    """Flat torus for lam = 0, otherwise the round sphere of Ricci curvature (n-1) lam."""
    if lam < 0:
        raise ConfigError("metric.lam < 0 has no built-in compact model; use lam >= 0")
    if n < 2:
        raise ConfigError("an Einstein base needs dimension >= 2")
    if lam == 0:
        return EinsteinModel.flat_torus(n)
    return EinsteinModel(n, lam, sphere_volume(n) * lam ** (-n / 2))


def grid_test_function(cfg, h):
    if isinstance(h, EinsteinModel):
        return eigenfunction_symbol()
    return expr.grid_function(expr.parse_expression(cfg["gjms.f"]), h.chart.coords)


def _params(cfg, *prefixes):
    out = {"n": cfg.n}
    out.update(cfg.as_params(*prefixes))
    return out


def _sup(a) -> float:
    return float(np.max(np.abs(a)))


def _sup_rel(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


def _symbol_coeffs(p):
    return [float(c.real) for c in p.coeffs]


def _symbol_error(p, q) -> float:
    d = max(len(p.coeffs), len(q.coeffs))
    a = np.pad(p.coeffs, (0, d - len(p.coeffs)))
    b = np.pad(np.atleast_1d(q.coeffs), (0, d - len(np.atleast_1d(q.coeffs))))
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


def _jet(cfg, h):
    return solve_fg(h, cfg["fg.order"], cfg["tolerances.fg"])


def _check(records, cfg, key="tolerances.oracle"):
    tol = cfg[key]
    bad = [r.quantity for r in records if r.error_estimate is not None and r.error_estimate > tol]
    if bad:
        raise ToleranceFailure(f"error estimate above {key} = {tol:g} for {', '.join(bad)}", records)


# --------------------------------------------------------------------------
# subcommands; each returns a list of records
# --------------------------------------------------------------------------

def cmd_fg(cfg, args):
    h = build_metric(cfg)
    jet = _jet(cfg, h)
    checked = [v for k, v in jet.residual_norms.items()
               if k == "trace_top" or not (cfg.n % 2 == 0 and k >= cfg.n)]
    if args.jet:
        arrays = {f"h{j}": np.asarray(c) for j, c in enumerate(jet.coeffs)}
        np.savez(args.jet, **arrays)
    return [Record("fg.jet", _params(cfg, "metric", "grid", "fg"), jet.export(), max(checked),
                   {"module": "fg", "jet_file": args.jet or ""})]


def cmd_gjms(cfg, args):
    h = build_metric(cfg)
    jet = _jet(cfg, h)
    f = grid_test_function(cfg, h)
    records = []
    for k in cfg["gjms.k"]:
        p = P_k_apply(jet, f, k)
        err = None
        oracle = None
        if cfg["metric.kind"] == "flat" and not isinstance(h, EinsteinModel):
            oracle = f
            for _ in range(k):
                oracle = laplace_beltrami(h, oracle)
        elif k == 1:
            oracle = oracle_yamabe(h, f)
        elif k == 2 and cfg.n >= 3:
            oracle = oracle_paneitz(h, f)
        if isinstance(h, EinsteinModel):
            value = {"symbol_coefficients": _symbol_coeffs(p)}
            if oracle is not None:
                err = _symbol_error(p, oracle)
        else:
            value = {"sup": _sup(p), "l2": math.sqrt(integrate(h, p * p))}
            if oracle is not None:
                err = _sup_rel(p, oracle)
        records.append(Record(f"P_{k}", dict(_params(cfg, "metric", "grid", "gjms"), k=k), value, err,
                              {"module": "gjms", "oracle": err is not None}))
    _check(records, cfg)
    return records


def _q_oracle(h):
    if h.n == 2:
        return oracle_q2(h)
    if h.n == 4:
        return oracle_q4(h)
    return None


def cmd_q(cfg, args):
    if cfg.n % 2:
        raise ConfigError("Q is defined here for even dimension only")
    h = build_metric(cfg)
    jet = _jet(cfg, h)
    qr = Q_compute(jet, cfg["q.delta"], cfg["tolerances.q"])
    q = np.asarray(qr.Q)
    oracle = _q_oracle(h)
    err = None if oracle is None else _sup_rel(q, np.asarray(oracle))
    if isinstance(h, EinsteinModel):
        total = float(q) * h.volume
    else:
        total = integrate(h, q)
    value = {"sup": _sup(q), "integral": total, "interpolation_degree": qr.degree,
             "sup_error_vs_oracle": err}
    rec = Record("Q", _params(cfg, "metric", "grid", "q"), value, err, {"module": "gjms"})
    _check([rec], cfg)
    return [rec]


def cmd_volume(cfg, args):
    h = build_metric(cfg)
    jet = _jet(cfg, h)
    ve = volume_expansion(jet)
    coeffs = {str(j): (float(c) if np.ndim(c) == 0 else _sup(c)) for j, c in sorted(ve.coefficients.items())}
    records = [Record("volume.coefficients", _params(cfg, "metric", "grid", "fg"), coeffs, None,
                      {"module": "fg", "grid_values": "sup norm"})]
    if ve.L is not None:
        qr = Q_compute(jet, cfg["q.delta"], cfg["tolerances.q"])
        q = np.asarray(qr.Q)
        total = float(q) * h.volume if isinstance(h, EinsteinModel) else integrate(h, q)
        k = cfg.n // 2
        err = abs(ve.L - 2 * float(c_k(k)) * total) / (1 + abs(ve.L))
        records.append(Record("L", _params(cfg, "metric", "grid", "fg"), float(ve.L), err,
                              {"module": "fg", "oracle": "2 c_(n/2) int Q"}))
        _check(records, cfg)
    return records


def _scatter_problems(cfg):
    if cfg["scatter.model"] == "yukawa":
        return YukawaModel().problem(), [("yukawa", YukawaModel().problem())]
    n = cfg.n
    if cfg["scatter.base"] == "flat":
        base = EinsteinModel.flat_torus(n)
    else:
        base = einstein_base(n, float(cfg["metric.lam"]))
    model = CollarModel(base, Warp.from_expression(cfg["scatter.warp"]), cfg["scatter.cap"],
                        cfg["scatter.condition"])
    probs = [(model.mode_label(m), model.problem(tuple(m) if isinstance(m, list) else float(m)))
             for m in cfg["scatter.modes"]]
    return None, probs


def _half_step(problem, s0):
    """l with s0 = n/2 + l/2 for a positive integer l, else None."""
    two = 2 * complex(s0).real - problem.n
    if abs(complex(s0).imag) > 0 or abs(two - round(two)) > 1e-12 or round(two) < 1:
        return None
    return int(round(two))


def cmd_scatter(cfg, args):
    yukawa, probs = _scatter_problems(cfg)
    records, rows = [], []
    for label, prob in probs:
        for s in cfg["scatter.s"]:
            S = scattering_value(prob, s)
            err = abs(S - yukawa_S(s)) / max(1.0, abs(yukawa_S(s))) if yukawa is not None else None
            rows.append((label, s, S))
            records.append(Record("S", {"model": cfg["scatter.model"], "mode": label, "s": s}, S, err,
                                  {"module": "scattering", "oracle": "series" if err is not None else ""}))
        for s0 in cfg["scatter.residue_at"]:
            rec = residue_extract(prob, s0, cfg["contour.radius"], cfg["contour.nodes"], cfg["tolerances.contour"])
            l = _half_step(prob, s0)
            err = abs(rec.residue - formal_residue(prob, l)) if l is not None else None
            records.append(Record("residue", {"model": cfg["scatter.model"], "mode": label, "s0": s0,
                                              "radius": rec.radius, "nodes": rec.nodes},
                                  rec.residue, err, {"module": "scattering", "oracle": "formal log coefficient"}))
    if cfg["output.csv"] and rows:
        write_text(sweep_csv(rows), cfg["output.csv"])
    _check(records, cfg)
    return records


def _split_values(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip().replace("i", "j")
        try:
            v = complex(tok)
        except ValueError:
            raise ConfigError(f"cannot read {tok!r} as a number") from None
        out.append(v.real if v.imag == 0 else [v.real, v.imag])
    return out


# --------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    common.add_argument("--output", help="records path ('-' for stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fgscatter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("fg", parents=[common], help="Poincare-metric jet of a boundary metric")
    p.add_argument("--jet", help="also write the jet components to this .npz file")
    sub.add_parser("gjms", parents=[common], help="apply P_k to gjms.f")
    sub.add_parser("q", parents=[common], help="Q-curvature")
    sub.add_parser("volume", parents=[common], help="renormalized volume coefficients and L")
    p = sub.add_parser("scatter", parents=[common], help="model scattering values and residues")
    p.add_argument("--model", choices=("yukawa", "collar"))
    p.add_argument("--residue-at", help="comma-separated centres s0")
    p.add_argument("--s", help="comma-separated spectral points (e.g. 1.3,2+0.5j)")
    p.add_argument("--csv", help="write the s-sweep as CSV")
    p = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    p.add_argument("--suite", default="all", help="'all', 'fast' or a comma list such as 1,4,11")
    return parser


COMMANDS = {"fg": cmd_fg, "gjms": cmd_gjms, "q": cmd_q, "volume": cmd_volume, "scatter": cmd_scatter}


def _overrides(args):
    values = dict(parse_override(t) for t in args.set)
    if args.output is not None:
        values["output.path"] = args.output
    if getattr(args, "model", None):
        values["scatter.model"] = args.model
    if getattr(args, "residue_at", None):
        values["scatter.residue_at"] = _split_values(args.residue_at)
    if getattr(args, "s", None):
        values["scatter.s"] = _split_values(args.s)
    if getattr(args, "csv", None):
        values["output.csv"] = args.csv
    return values


def run_verify(cfg, args) -> int:
    results = verify.run_suite(verify.parse_suite(args.suite))
    text = verify.render(results)
    if cfg["output.path"] in ("", "-"):
        sys.stdout.write(text)
    else:
        sys.stdout.write("".join(r.line() + "\n" for r in results))
        write_records([r.record() for r in results], cfg["output.path"])
    return EXIT_OK if all(r.passed for r in results) else EXIT_TOLERANCE


def run_command(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = None
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "verify":
            return run_verify(cfg, args)
        records = COMMANDS[args.command](cfg, args)
        write_records(records, cfg["output.path"])
        return EXIT_OK
    except ToleranceFailure as err:
        write_records(err.records, cfg["output.path"])
        print(f"fgscatter: tolerance failure: {err}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (FGError, InterpolationError, ScatteringError) as err:
        print(f"fgscatter: tolerance failure: {err}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (ConfigError, expr.ExpressionError, ChartError, SeriesError, ValueError) as err:
        print(f"fgscatter: invalid input: {err}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as err:
        print(f"fgscatter: {err}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run_command())

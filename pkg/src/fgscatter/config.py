"""Run configuration: a TOML file flattened to dotted keys, validated against a fixed key set."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field

from .expr import ExpressionError, free_variables, parse_expression

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


METRIC_KINDS = ("flat", "conformal", "generic", "einstein")
SCATTER_MODELS = ("yukawa", "collar")
SCATTER_BASES = ("flat", "einstein")
CAP_CONDITIONS = ("dirichlet", "neumann")

# key -> default; None means "derived from other keys"
DEFAULTS = {
    "dimension": 4,
    "seed": 0,
    "grid.resolution": 16,
    "metric.kind": "generic",
    "metric.amplitude": 0.05,
    "metric.lam": 1.0,
    "metric.upsilon": "0.05*sin(y1)",
    "metric.perturbation": {},
    "fg.order": None,
    "gjms.k": None,
    "gjms.f": "cos(y1) + 0.5*sin(y2)",
    "q.delta": 1e-2,
    "scatter.model": "collar",
    "scatter.base": "einstein",
    "scatter.warp": "1 - x^2/4",
    "scatter.modes": [0.0],
    "scatter.cap": 1.0,
    "scatter.condition": "dirichlet",
    "scatter.s": [],
    "scatter.residue_at": [],
    "contour.radius": 0.05,
    "contour.nodes": 32,
    "tolerances.fg": 1e-8,
    "tolerances.q": 1e-8,
    "tolerances.oracle": 1e-6,
    "tolerances.contour": 1e-8,
    "output.path": "-",
    "output.csv": "",
}


def _flatten(table, prefix=""):
    out = {}
    for k, v in table.items():
        key = prefix + k
        # perturbation is a table of tensor components, not a namespace
        if isinstance(v, dict) and key != "metric.perturbation":
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def n(self) -> int:
        return self.values["dimension"]

    def as_params(self, *prefixes) -> dict:
        return {k: v for k, v in self.values.items() if not prefixes or k.split(".")[0] in prefixes}


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_expression(key, src, allowed):
    if not isinstance(src, str):
        raise ConfigError(f"{key} must be an expression string")
    try:
        node = parse_expression(src)
    except ExpressionError as err:
        raise ConfigError(f"{key}: {err}") from err
    extra = free_variables(node) - set(allowed)
    if extra:
        raise ConfigError(f"{key} may only use {sorted(allowed)}, got {sorted(extra)}")


def _parse_s(key, v):
    if _is_real(v):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(_is_real(t) for t in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{key} entries must be numbers or [re, im] pairs, got {v!r}")


def validate(values: dict) -> RunConfig:
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    v = dict(DEFAULTS)
    v.update(values)
    n = v["dimension"]
    if not _is_int(n) or not 1 <= n <= 4:
        raise ConfigError(f"dimension must be an integer in 1..4, got {n!r}")
    if not _is_int(v["seed"]) or v["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    r = v["grid.resolution"]
    if not _is_int(r) or r < 8 or r & (r - 1):
        raise ConfigError(f"grid.resolution must be a power of two >= 8, got {r!r}")
    if v["metric.kind"] not in METRIC_KINDS:
        raise ConfigError(f"metric.kind must be one of {METRIC_KINDS}, got {v['metric.kind']!r}")
    if not _is_real(v["metric.amplitude"]) or not 0 <= v["metric.amplitude"] < 0.5:
        raise ConfigError("metric.amplitude must lie in [0, 0.5)")
    if not _is_real(v["metric.lam"]):
        raise ConfigError("metric.lam must be a number")
    coords = [f"y{i + 1}" for i in range(n)]
    _check_expression("metric.upsilon", v["metric.upsilon"], coords)
    _check_expression("gjms.f", v["gjms.f"], coords)
    pert = v["metric.perturbation"]
    if not isinstance(pert, dict):
        raise ConfigError("metric.perturbation must be a table of components such as {\"12\" = \"...\"}")
    for comp, src in pert.items():
        if len(comp) != 2 or not all(ch.isdigit() and 1 <= int(ch) <= n for ch in comp):
            raise ConfigError(f"metric.perturbation component {comp!r} must be two indices in 1..{n}")
        _check_expression(f"metric.perturbation.{comp}", src, coords)
    max_order = n if n % 2 == 0 else 8
    if v["fg.order"] is None:
        v["fg.order"] = n if n % 2 == 0 else 4
    o = v["fg.order"]
    if not _is_int(o) or not 1 <= o <= max_order:
        raise ConfigError(f"fg.order must be an integer in 1..{max_order} for n = {n}, got {o!r}")
    if v["gjms.k"] is None:
        v["gjms.k"] = list(range(1, n // 2 + 1)) if n % 2 == 0 else [1, 2]
    ks = v["gjms.k"]
    if not isinstance(ks, list) or not all(_is_int(k) and k >= 1 for k in ks):
        raise ConfigError("gjms.k must be a list of positive integers")
    if n % 2 == 0 and any(k > n // 2 for k in ks) and v["metric.kind"] != "flat":
        raise ConfigError(f"gjms.k must be <= n/2 = {n // 2} for a curved metric")
    if any(2 * k > o for k in ks):
        raise ConfigError(f"gjms.k needs fg.order >= 2k; have fg.order = {o}")
    d = v["q.delta"]
    if not _is_real(d) or not 0 < d < 0.25:
        raise ConfigError("q.delta must lie in (0, 0.25)")
    for key, allowed in (("scatter.model", SCATTER_MODELS), ("scatter.base", SCATTER_BASES),
                         ("scatter.condition", CAP_CONDITIONS)):
        if v[key] not in allowed:
            raise ConfigError(f"{key} must be one of {allowed}, got {v[key]!r}")
    _check_expression("scatter.warp", v["scatter.warp"], ["x"])
    modes = v["scatter.modes"]
    if not isinstance(modes, list) or not modes:
        raise ConfigError("scatter.modes must be a non-empty list")
    for m in modes:
        if v["scatter.base"] == "flat":
            if not (isinstance(m, list) and len(m) == n and all(_is_int(t) for t in m)):
                raise ConfigError(f"flat-base modes are integer vectors of length {n}, got {m!r}")
        elif not _is_real(m) or m < 0:
            raise ConfigError(f"Einstein-base modes are eigenvalues mu >= 0, got {m!r}")
    if not _is_real(v["scatter.cap"]) or not 0 < v["scatter.cap"] <= 1:
        raise ConfigError("scatter.cap must lie in (0, 1]")
    for key in ("scatter.s", "scatter.residue_at"):
        if not isinstance(v[key], list):
            raise ConfigError(f"{key} must be a list")
        v[key] = [_parse_s(key, t) for t in v[key]]
    rad = v["contour.radius"]
    if not _is_real(rad) or not 0 < rad < 0.5:
        raise ConfigError("contour.radius must lie in (0, 0.5)")
    nodes = v["contour.nodes"]
    if not _is_int(nodes) or nodes < 8 or nodes & (nodes - 1) or nodes > 512:
        raise ConfigError("contour.nodes must be a power of two in 8..512")
    for key in ("tolerances.fg", "tolerances.q", "tolerances.oracle", "tolerances.contour"):
        if not _is_real(v[key]) or not 0 < v[key] < 1:
            raise ConfigError(f"{key} must lie in (0, 1)")
    for key in ("output.path", "output.csv"):
        if not isinstance(v[key], str):
            raise ConfigError(f"{key} must be a string")
    return RunConfig(v)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                values = _flatten(tomllib.load(fh))
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err.strerror}") from err
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"invalid TOML in {path}: {err}") from err
    values.update(overrides or {})
    return validate(values)


def parse_override(text: str):
    """``key=value`` with a TOML value (bare words are taken as strings)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = (t.strip() for t in text.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    # string-valued keys such as scatter.warp = 1 keep the text as written
    if isinstance(DEFAULTS.get(key), str) and not isinstance(value, str):
        value = raw
    return key, value

import pytest

from fgscatter.config import DEFAULTS, ConfigError, load_config, parse_override, validate


def test_defaults():
    cfg = validate({})
    assert cfg.n == 4 and cfg["fg.order"] == 4 and cfg["gjms.k"] == [1, 2]
    assert set(cfg.values) == set(DEFAULTS)
    odd = validate({"dimension": 3})
    assert odd["fg.order"] == 4 and odd["gjms.k"] == [1, 2]
    assert validate({"dimension": 2})["gjms.k"] == [1]


def test_toml_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('dimension = 2\n[metric]\nkind = "conformal"\n[metric.perturbation]\n"12" = "0.01*cos(y2)"\n'
                 '[scatter]\ns = [1.3, [1.0, 0.5]]\n')
    cfg = load_config(p, {"grid.resolution": 32})
    assert cfg["metric.perturbation"] == {"12": "0.01*cos(y2)"}
    assert cfg["scatter.s"] == [1.3 + 0j, 1.0 + 0.5j]
    assert cfg["grid.resolution"] == 32


@pytest.mark.parametrize("values,match", [
    ({"bogus": 1}, "unknown configuration keys"),
    ({"dimension": 5}, "dimension"),
    ({"grid.resolution": 12}, "power of two"),
    ({"metric.kind": "hyperbolic"}, "metric.kind"),
    ({"fg.order": 6}, "fg.order"),
    ({"dimension": 3, "fg.order": 9}, "fg.order"),
    ({"gjms.k": [3]}, "n/2"),
    ({"dimension": 3, "gjms.k": [3]}, "fg.order >= 2k"),
    ({"metric.upsilon": "sin(x)"}, "may only use"),
    ({"metric.upsilon": "foo(y1)"}, "unknown identifier 'foo' at offset 0"),
    ({"scatter.warp": "1 + y1"}, "may only use"),
    ({"scatter.base": "flat"}, "integer vectors"),
    ({"scatter.modes": [-1.0]}, "mu >= 0"),
    ({"scatter.cap": 0.0}, "scatter.cap"),
    ({"contour.nodes": 48}, "contour.nodes"),
    ({"scatter.s": ["a"]}, "numbers or"),
    ({"metric.perturbation": {"15": "0"}}, "two indices"),
    ({"q.delta": 0.5}, "q.delta"),
])
def test_rejections(values, match):
    with pytest.raises(ConfigError, match=match):
        validate(values)


def test_flat_k_bound_is_the_jet_order():
    # the n/2 bound is for curved metrics; the jet order still caps k
    with pytest.raises(ConfigError, match="fg.order >= 2k"):
        validate({"metric.kind": "flat", "gjms.k": [2], "dimension": 2})
    with pytest.raises(ConfigError, match="n/2"):
        validate({"metric.kind": "generic", "gjms.k": [2], "dimension": 2})


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("dimension = = 4")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_config(bad)


def test_overrides():
    assert parse_override("dimension=2") == ("dimension", 2)
    assert parse_override("scatter.modes=[0.0, 4.0]") == ("scatter.modes", [0.0, 4.0])
    assert parse_override("metric.kind=flat") == ("metric.kind", "flat")
    assert parse_override('gjms.f="sin(y1)"') == ("gjms.f", "sin(y1)")
    assert parse_override("scatter.warp=1") == ("scatter.warp", "1")
    with pytest.raises(ConfigError):
        parse_override("dimension")

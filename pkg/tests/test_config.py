import numpy as np
import pytest

from stablesplit import DensitySpec, ModelSpace, ScalarField
from stablesplit.config import (
    ConfigError,
    build_space,
    load_experiment,
    load_tols,
    parse_kv,
    read_field,
    resolve_space_config,
    sidecar_path,
    write_field,
)


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_kv_comments_and_blanks():
    kv = parse_kv("# header\n\nfamily = cylinder  # trailing\nT=12\n")
    assert kv == {"family": "cylinder", "T": "12"}


@pytest.mark.parametrize("text, path", [
    ("family cylinder\n", "config:1"),
    ("T = 1\nT = 2\n", "config.T"),
])
def test_parse_kv_errors(text, path):
    with pytest.raises(ConfigError) as info:
        parse_kv(text)
    assert info.value.path == path


def test_experiment_round_trip(tmp_path):
    p = write(tmp_path, "family = cylinder\nT = 4\nh = 0.05\nfiber_lengths = 0.8\n"
                        "density = linear_slope 0.3\nnl = linear:2\ninit = const:0.1\ntol = 1e-9\n"
                        "max_iter = 7\naxis_dirichlet = -1, 1\nseed = 5\n")
    exp = load_experiment(p)
    assert (exp.nl, exp.init, exp.tol, exp.max_iter, exp.axis_dirichlet, exp.seed) == (
        "linear:2", "const:0.1", 1e-9, 7, (-1.0, 1.0), 5)
    s = build_space(exp.space)
    assert s.shape == (161, 16)
    assert s.density.describe() == DensitySpec.linear_slope(0.3).describe()
    assert exp.echo()["axis_dirichlet"] == [-1.0, 1.0]


def test_spacing_broadcast():
    s = build_space(resolve_space_config({"family": "flat_box", "extents": "1, 1", "h": "0.1"}))
    assert s.spacing == (0.1, 0.1)


@pytest.mark.parametrize("text, path", [
    ("T = 4\nh = 0.1\n", "config.family"),
    ("family = torus\nh = 0.1\n", "config.family"),
    ("family = cylinder\nT = 4\nh = 0.1\n", "config.fiber_lengths"),
    ("family = cylinder\nT = -4\nh = 0.1\nfiber_lengths = 1\n", "config.T"),
    ("family = cylinder\nT = 4\nh = 0\nfiber_lengths = 1\n", "config.h"),
    ("family = cylinder\nT = 4\nh = 0.1\nfiber_lengths = 1\ncolour = red\n", "config.colour"),
    ("family = cylinder\nT = 4\nh = 0.1\nfiber_lengths = nan\n", "config.fiber_lengths"),
    ("family = cylinder\nT = 4\nh = 0.1\nfiber_lengths = 1\ntol = -1\n", "config.tol"),
    ("family = cylinder\nT = 4\nh = 0.1\nfiber_lengths = 1\nmax_iter = many\n", "config.max_iter"),
    ("family = cylinder\nT = 4\nh = 0.1\nfiber_lengths = 1\naxis_dirichlet = 1\n", "config.axis_dirichlet"),
    ("family = flat_box\nextents = 1, 1\nh = 0.1\nperiodic = maybe, no\n", "config.periodic"),
    ("family = cylinder\nT = 4\nh = 0.3\nfiber_lengths = 1\n", "config.T"),
])
def test_config_errors_name_the_field(tmp_path, text, path):
    with pytest.raises(ConfigError) as info:
        build_space(load_experiment(write(tmp_path, text)).space)
    assert info.value.path == path


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_experiment(tmp_path / "nope.cfg")


def test_tols_file(tmp_path):
    p = write(tmp_path, "picone_gap = 1e-6\n", "tols.txt")
    assert load_tols(p, {"picone_gap"}) == {"picone_gap": 1e-6}
    with pytest.raises(ConfigError) as info:
        load_tols(write(tmp_path, "bogus = 1\n", "t2.txt"), {"picone_gap"})
    assert info.value.path == "tols.bogus"


@pytest.mark.parametrize("space", [
    ModelSpace.cylinder(2.0, 0.1, [0.8], DensitySpec.linear_slope(-0.2)),
    ModelSpace.flat_box([1.0, 1.0], 0.25, periodic=[False, True]),
    ModelSpace.warped_product(2.0, 0.1, [1.0], [0.3, 0.05]),
    ModelSpace.weighted_line(3.0, 0.05, DensitySpec.gaussian()),
])
def test_field_round_trip_is_exact(tmp_path, space):
    rng = np.random.default_rng(1)
    u = ScalarField(space, rng.standard_normal(space.shape) * 1e3)
    path = write_field(tmp_path / "u.csv", u, {"note": "x"})
    v, extra = read_field(path)
    assert np.array_equal(v.values, u.values)
    assert v.space.describe() == space.describe()
    assert extra == {"note": "x"}


def test_read_field_errors(tmp_path):
    s = ModelSpace.cylinder(1.0, 0.1, [0.4])
    path = write_field(tmp_path / "u.csv", ScalarField(s, np.zeros(s.shape)))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ConfigError, match="rows or columns"):
        read_field(path)
    sidecar_path(path).unlink()
    with pytest.raises(ConfigError, match="missing sidecar"):
        read_field(path)


def test_custom_density_not_serializable(tmp_path):
    d = DensitySpec.custom(lambda x: 0 * x[0], lambda x: [0 * x[0]], lambda x: [[0 * x[0]]])
    s = ModelSpace.weighted_line(1.0, 0.1, d)
    with pytest.raises(ValueError, match="custom"):
        write_field(tmp_path / "u.csv", ScalarField(s, np.zeros(s.shape)))

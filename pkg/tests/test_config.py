import json

import numpy as np
import pytest

from chiral_bands.config import DEFAULTS, PRESETS, ConfigError, build, load, named_axis, resolve


def test_defaults_resolve():
    cfg = resolve({})
    assert cfg["grids"] == {"band_points": 501, "zak_points": 2001}
    assert cfg["cutoff"]["max_cells"] == 2000
    assert cfg["mode"] == "both"


def test_layering_explicit_over_preset():
    cfg = resolve({"preset": "fig4", "grids": {"band_points": 11}})
    assert cfg["grids"]["band_points"] == 11
    assert cfg["grids"]["zak_points"] == DEFAULTS["grids"]["zak_points"]
    assert cfg["quantization_axis"] == "phi0"


def test_preset_argument_overrides_file():
    assert resolve({"preset": "fig4"}, preset="fig5")["quantization_axis"] == "inplane_45"


@pytest.mark.parametrize("bad", [
    {"mode": "lossy"},
    {"grids": {"band_points": 2}},
    {"lattice": {"kind": "helix", "radius": -1}},
    {"unknown": 1},
    {"quantization_axis": [1, 0]},
    {"topology": {"manifolds": [[0]]}},
])
def test_schema_rejects(bad):
    with pytest.raises(ConfigError):
        resolve(bad)


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        resolve({"preset": "fig9"})


def test_load_errors(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    with pytest.raises(ConfigError, match="empty"):
        load(empty)
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ConfigError):
        load(broken)
    arr = tmp_path / "arr.json"
    arr.write_text("[]")
    with pytest.raises(ConfigError):
        load(arr)
    with pytest.raises(ConfigError):
        load(tmp_path / "missing.json")


def test_load_round_trip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"preset": "fig3"}))
    assert load(path)["frame_reference"] == "phi0"


def test_named_axes():
    assert np.allclose(named_axis("phi0", 3), [np.cos(2 * np.pi / 3), np.sin(2 * np.pi / 3), 0])
    assert np.allclose(named_axis([0, 2, 0], 3), [0, 2, 0])


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_build(name):
    setup = build(resolve({}, name))
    assert setup.lattice.n_sublattices == 3
    assert np.allclose(setup.lattice.quantization_axis, setup.frame.q)
    assert setup.modes == ("hermitian", "full")


def test_explicit_lattice():
    setup = build(resolve({"lattice": {"kind": "explicit", "period": 0.3, "basis": [[0, 0, 0], [0.1, 0, 0.1]]},
                           "quantization_axis": "x", "mode": "full"}))
    assert setup.lattice.n_sublattices == 2
    assert setup.modes == ("full",)

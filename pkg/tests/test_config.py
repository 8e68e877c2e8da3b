"""Schema strictness, coercion, override paths, and builder wiring."""

import pytest
import yaml

from spcavity import config
from spcavity.geometry import MaterialGrid


class TestDefaults:

    def test_dump_defaults_round_trips(self):
        text = config.dump_defaults()
        cfg = config.loads(text)
        assert cfg == config.RunConfig()

    def test_dump_defaults_lists_every_section(self):
        data = yaml.safe_load(config.dump_defaults())
        assert set(data) == {
            "version", "materials", "geometry", "fdtd", "source",
            "monitors", "emitter", "sweep",
        }

    def test_defaults_are_explicit(self):
        data = yaml.safe_load(config.dump_defaults())
        assert data["geometry"]["cavity_length_nm"] == 328.0
        assert data["materials"]["metal"]["loss_factor"] == 2000.0
        assert data["emitter"]["x_offset_nm"] is None
        assert data["sweep"]["values"] == []


class TestStrictness:

    def test_unknown_top_level_key(self):
        with pytest.raises(config.ConfigError) as err:
            config.from_dict({"geomtry": {}})
        assert "geomtry" in str(err.value)

    def test_unknown_nested_key_reports_path(self):
        with pytest.raises(config.ConfigError) as err:
            config.from_dict({"geometry": {"grove_width_nm": 20}})
        assert "geometry.grove_width_nm" in str(err.value)

    def test_unknown_deep_key_reports_path(self):
        with pytest.raises(config.ConfigError) as err:
            config.from_dict({"materials": {"metal": {"plasma": 8.8}}})
        assert "materials.metal.plasma" in str(err.value)

    def test_version_mismatch(self):
        with pytest.raises(config.ConfigError) as err:
            config.from_dict({"version": "7"})
        assert "version" in str(err.value)

    def test_integer_version_accepted(self):
        cfg = config.from_dict({"version": 1})
        assert cfg.version == "1"

    def test_wrong_type_rejected_with_path(self):
        with pytest.raises(config.ConfigError) as err:
            config.from_dict({"fdtd": {"dx_nm": "coarse"}})
        assert "fdtd.dx_nm" in str(err.value)

    def test_bool_is_not_a_number(self):
        with pytest.raises(config.ConfigError):
            config.from_dict({"fdtd": {"dx_nm": True}})

    def test_non_mapping_section(self):
        with pytest.raises(config.ConfigError):
            config.from_dict({"fdtd": [1, 2]})

    def test_bad_yaml(self):
        with pytest.raises(config.ConfigError):
            config.loads("fdtd: [unclosed")

    def test_bad_axis(self):
        with pytest.raises(config.ConfigError) as err:
            config.from_dict({"sweep": {"axis": "tilt"}})
        assert "sweep.axis" in str(err.value)

    def test_zero_workers(self):
        with pytest.raises(config.ConfigError):
            config.from_dict({"sweep": {"workers": 0}})

    def test_negative_dx(self):
        with pytest.raises(config.ConfigError):
            config.from_dict({"fdtd": {"dx_nm": -1.0}})


class TestCoercion:

    def test_yaml_values_list(self):
        cfg = config.from_dict({"sweep": {"values": [150, 200.5]}})
        assert cfg.sweep.values == (150.0, 200.5)

    def test_int_to_float(self):
        cfg = config.from_dict({"geometry": {"cavity_length_nm": 216}})
        assert cfg.geometry.cavity_length_nm == 216.0
        assert isinstance(cfg.geometry.cavity_length_nm, float)

    def test_optional_float_null(self):
        cfg = config.from_dict({"materials": {"temperature_k": None}})
        assert cfg.materials.temperature_k is None
        cfg = config.from_dict({"materials": {"temperature_k": 40}})
        assert cfg.materials.temperature_k == 40.0


class TestBuilders:

    def test_metal_from_loss_factor(self):
        cfg = config.from_dict(
            {"materials": {"metal": {"loss_factor": 50.0}}})
        assert cfg.metal().loss_factor == 50.0

    def test_temperature_overrides_loss_factor(self):
        cfg = config.from_dict({"materials": {"temperature_k": 40.0}})
        assert cfg.metal().loss_factor == pytest.approx(25.0)

    def test_device_and_grid(self):
        cfg = config.RunConfig()
        dev = cfg.device()
        assert dev.cavity_length_nm == 328.0
        grid = cfg.grid()
        assert isinstance(grid, MaterialGrid)
        assert grid.dx_nm == cfg.fdtd.dx_nm

    def test_dielectric(self):
        assert config.RunConfig().dielectric().permittivity == 12.25


class TestOverrides:

    def test_hyphenated_path(self):
        cfg = config.apply_overrides(
            config.RunConfig(), [("geometry.cavity-length-nm", "440")])
        assert cfg.geometry.cavity_length_nm == 440.0

    def test_nested_metal_override(self):
        cfg = config.apply_overrides(
            config.RunConfig(), [("materials.metal.loss-factor", "100")])
        assert cfg.materials.metal.loss_factor == 100.0

    def test_values_csv_string(self):
        cfg = config.apply_overrides(
            config.RunConfig(), [("sweep.values", "150,160,170")])
        assert cfg.sweep.values == (150.0, 160.0, 170.0)

    def test_none_string_clears_optional(self):
        cfg = config.apply_overrides(
            config.RunConfig(), [("emitter.x-offset-nm", "none")])
        assert cfg.emitter.x_offset_nm is None

    def test_unknown_override_key(self):
        with pytest.raises(config.ConfigError):
            config.apply_overrides(config.RunConfig(),
                                   [("geometry.pitch_nm", "100")])

    def test_override_still_validated(self):
        with pytest.raises(config.ConfigError):
            config.apply_overrides(config.RunConfig(),
                                   [("sweep.axis", "volume")])

    def test_overrides_do_not_mutate_original(self):
        base = config.RunConfig()
        config.apply_overrides(base, [("fdtd.dx-nm", "2")])
        assert base.fdtd.dx_nm == 4.0

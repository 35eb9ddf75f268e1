import json

import pytest

from crahnsim.config import ScenarioConfig, config_from_dict, load_config, load_config_file
from crahnsim.errors import ConfigInvalid, ConfigParse, IoError


def test_empty_document_gives_defaults():
    cfg = load_config("{}")
    assert (cfg.area_width_m, cfg.area_height_m) == (1000.0, 1000.0)
    assert cfg.num_pu == 5
    assert cfg.num_su == 50
    assert cfg.num_channels == 10
    assert cfg.net.num_services == 10
    assert len(cfg.service_names) == 10 and "gateway" in cfg.service_names


def test_zero_su_with_discovery_is_invalid():
    with pytest.raises(ConfigInvalid) as exc:
        load_config('{"num_su": 0}')
    assert exc.value.field == "num_su"


def test_zero_su_allowed_when_only_detection_runs():
    doc = {"num_su": 0, "scenarios": {"spectrum": False, "discovery": False, "response": False, "situation": False}}
    assert config_from_dict(doc).num_su == 0


def test_negative_area_is_invalid():
    with pytest.raises(ConfigInvalid) as exc:
        load_config('{"area_width_m": -1}')
    assert exc.value.field == "area_width_m"


@pytest.mark.parametrize("doc, field", [
    ('{"bogus": 1}', "bogus"),
    ('{"net": {"ttl_hops": 0}}', "net.ttl_hops"),
    ('{"spectrum": {"pu_on_fraction": 1.0}}', "spectrum.pu_on_fraction"),
    ('{"num_pu": 1.5}', "num_pu"),
    ('{"response": {"levels": 0}}', "response.levels"),
    ('{"detection": {"n_inputs": 21}}', "detection.n_inputs"),
    ('{"net": {"speed_min_mps": 6}}', "net.speed_min_mps"),
])
def test_invalid_fields_are_named(doc, field):
    with pytest.raises(ConfigInvalid) as exc:
        load_config(doc)
    assert exc.value.field == field


@pytest.mark.parametrize("doc", ["{", "[1, 2]", "not json"])
def test_malformed_documents(doc):
    with pytest.raises(ConfigParse):
        load_config(doc)


def test_missing_file_reports_path(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(IoError) as exc:
        load_config_file(missing)
    assert str(missing) in str(exc.value)


def test_partial_nested_override_keeps_other_defaults():
    cfg = load_config('{"net": {"ttl_hops": 4}}')
    assert cfg.net.ttl_hops == 4
    assert cfg.net.cache_ttl_s == 15.0


def test_json_round_trip_and_digest():
    cfg = ScenarioConfig()
    again = load_config(cfg.to_json())
    assert again == cfg
    assert again.digest() == cfg.digest()
    changed = json.loads(cfg.to_json())
    changed["master_seed"] = 2
    assert config_from_dict(changed).digest() != cfg.digest()

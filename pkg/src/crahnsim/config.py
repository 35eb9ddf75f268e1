"""Scenario configuration: JSON in, validated dataclasses out.

Every field has a default, so ``{}`` is a complete scenario (1000 x 1000 m,
5 primary users, 50 secondary users, ten 2.4 GHz channels).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigInvalid, ConfigParse, IoError

DISASTER_CLASSES = ("none", "fire", "earthquake", "flood")
SENSOR_KINDS = ("smoke", "seismic", "radar", "temperature", "weather")

SERVICE_NAMES = (
    "gateway", "medical", "shelter", "water", "food",
    "firefighting", "police", "transport", "power", "comms",
)


def _default_signatures():
    return {
        "none": [0.1, 0.1, 0.1, 0.3, 0.2],
        "fire": [0.9, 0.1, 0.1, 0.8, 0.3],
        "earthquake": [0.2, 0.9, 0.2, 0.3, 0.2],
        "flood": [0.1, 0.2, 0.9, 0.3, 0.8],
    }


@dataclass
class Scenarios:
    detection: bool = True
    spectrum: bool = True
    discovery: bool = True
    response: bool = True
    situation: bool = True


@dataclass
class NeuralConfig:
    n_hidden: int = 5
    learning_rate: float = 0.5
    max_epochs: int = 20000
    target_mse: float = 0.05
    init_scale: float = 0.5


@dataclass
class DetectionConfig:
    n_inputs: int = 5
    sensors_per_kind: int = 4
    sigma: float = 0.05
    samples_per_class: int = 100
    snapshot_interval_s: float = 1.0
    event_gap_s: list = field(default_factory=lambda: [30.0, 90.0])
    event_duration_s: list = field(default_factory=lambda: [10.0, 30.0])
    signatures: dict = field(default_factory=_default_signatures)
    site_node: int = 0
    model_path: str | None = None


@dataclass
class SpectrumConfig:
    sensing_interval_s: float = 0.1
    retune_delay_s: float = 0.05
    pu_period_s: float = 5.0
    pu_on_fraction: float = 0.4
    window_s: float = 60.0
    horizon_s: float = 5.0
    p_miss: float = 0.0
    p_false: float = 0.0
    warmup_s: float = 150.0
    warmup_points: int = 10
    trainset_stride_s: float = 5.0
    manager_target_mse: float = 0.005
    manager_max_epochs: int = 5000
    selector: str = "ann"


@dataclass
class NetConfig:
    mobility: str = "random_waypoint"
    speed_min_mps: float = 1.0
    speed_max_mps: float = 5.0
    pause_s: float = 2.0
    hop_delay_s: float = 0.01
    jitter_max_s: float = 0.05
    advert_period_s: float = 5.0
    cache_ttl_s: float = 15.0
    route_lifetime_s: float = 15.0
    ttl_hops: int = 10
    discovery_timeout_s: float = 10.0
    discovery_retries: int = 1
    num_services: int = 10
    request_interval_s: float = 60.0
    situation_interval_s: float = 120.0


@dataclass
class ResponseConfig:
    levels: int = 3
    respond_prob: float = 0.5
    response_delay_s: list = field(default_factory=lambda: [1.0, 5.0])
    wait_s: float = 10.0
    gateway_retry_s: float = 5.0


@dataclass
class ScenarioConfig:
    area_width_m: float = 1000.0
    area_height_m: float = 1000.0
    num_pu: int = 5
    num_su: int = 50
    num_channels: int = 10
    band_label: str = "2.4GHz"
    radio_range_m: float = 250.0
    sim_duration_s: float = 600.0
    master_seed: int = 1
    scenarios: Scenarios = field(default_factory=Scenarios)
    neural: NeuralConfig = field(default_factory=NeuralConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    net: NetConfig = field(default_factory=NetConfig)
    response: ResponseConfig = field(default_factory=ResponseConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    @property
    def service_names(self) -> list[str]:
        k = self.net.num_services
        return [SERVICE_NAMES[i] if i < len(SERVICE_NAMES) else f"service-{i:02d}" for i in range(k)]


def _coerce(path: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigInvalid(path, f"expected boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(path, f"expected integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid(path, f"expected number, got {value!r}")
        return float(value)
    if isinstance(default, str) or default is None:
        if value is None and default is None:
            return None
        if not isinstance(value, str):
            raise ConfigInvalid(path, f"expected string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigInvalid(path, f"expected list of {len(default)} numbers")
        return [_coerce(f"{path}[{i}]", d, v) for i, (d, v) in enumerate(zip(default, value))]
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigInvalid(path, "expected object")
        out = dict(default)
        for k, v in value.items():
            if k not in default:
                raise ConfigInvalid(f"{path}.{k}", "unknown key")
            out[k] = _coerce(f"{path}.{k}", default[k], v)
        return out
    raise ConfigInvalid(path, "unsupported field type")  # pragma: no cover


def _build(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigInvalid(prefix.rstrip(".") or "<root>", "expected object")
    obj = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for key, value in data.items():
        path = prefix + key
        if key not in names:
            raise ConfigInvalid(path, "unknown key")
        default = getattr(obj, key)
        if dataclasses.is_dataclass(default):
            setattr(obj, key, _build(type(default), value, path + "."))
        else:
            setattr(obj, key, _coerce(path, default, value))
    return obj


def _check(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigInvalid(path, message)


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    for name in ("num_pu", "num_su", "num_channels"):
        _check(getattr(cfg, name) >= 0, name, "must be >= 0")
    _check(cfg.area_width_m > 0, "area_width_m", "must be > 0")
    _check(cfg.area_height_m > 0, "area_height_m", "must be > 0")
    _check(cfg.radio_range_m > 0, "radio_range_m", "must be > 0")
    _check(cfg.sim_duration_s >= 0, "sim_duration_s", "must be >= 0")
    _check(0 <= cfg.master_seed < 2**64, "master_seed", "must be a 64-bit unsigned integer")

    sc = cfg.scenarios
    if sc.spectrum or sc.discovery or sc.response or sc.situation:
        _check(cfg.num_su >= 1, "num_su", "must be >= 1 when a protocol scenario is enabled")
    if sc.spectrum:
        _check(cfg.num_channels >= 1, "num_channels", "must be >= 1 when spectrum is enabled")

    nn = cfg.neural
    _check(nn.n_hidden >= 1, "neural.n_hidden", "must be >= 1")
    _check(nn.learning_rate > 0, "neural.learning_rate", "must be > 0")
    _check(nn.max_epochs >= 1, "neural.max_epochs", "must be >= 1")
    _check(nn.target_mse >= 0, "neural.target_mse", "must be >= 0")
    _check(nn.init_scale >= 0, "neural.init_scale", "must be >= 0")

    d = cfg.detection
    _check(d.sensors_per_kind >= 1, "detection.sensors_per_kind", "must be >= 1")
    _check(
        1 <= d.n_inputs <= d.sensors_per_kind * len(SENSOR_KINDS),
        "detection.n_inputs",
        "must be between 1 and the number of site sensors",
    )
    _check(d.sigma >= 0, "detection.sigma", "must be >= 0")
    _check(d.samples_per_class >= 1, "detection.samples_per_class", "must be >= 1")
    _check(d.snapshot_interval_s > 0, "detection.snapshot_interval_s", "must be > 0")
    _check(0 < d.event_gap_s[0] <= d.event_gap_s[1], "detection.event_gap_s", "need 0 < lo <= hi")
    _check(
        0 < d.event_duration_s[0] <= d.event_duration_s[1],
        "detection.event_duration_s",
        "need 0 < lo <= hi",
    )
    for cls, sig in d.signatures.items():
        _check(len(sig) == len(SENSOR_KINDS), f"detection.signatures.{cls}", "needs 5 values")
        _check(all(0 <= v <= 1 for v in sig), f"detection.signatures.{cls}", "values in [0, 1]")
    if sc.response or sc.detection:
        _check(
            cfg.num_su == 0 or 0 <= d.site_node < cfg.num_su,
            "detection.site_node",
            "must be a valid node id",
        )

    s = cfg.spectrum
    _check(s.sensing_interval_s >= 0.001, "spectrum.sensing_interval_s", "must be >= 1 ms")
    _check(s.retune_delay_s >= 0, "spectrum.retune_delay_s", "must be >= 0")
    _check(s.pu_period_s > 0, "spectrum.pu_period_s", "must be > 0")
    _check(0 < s.pu_on_fraction < 1, "spectrum.pu_on_fraction", "must be in (0, 1)")
    _check(s.window_s > 0, "spectrum.window_s", "must be > 0")
    _check(s.horizon_s > 0, "spectrum.horizon_s", "must be > 0")
    _check(0 <= s.p_miss <= 1, "spectrum.p_miss", "must be in [0, 1]")
    _check(0 <= s.p_false <= 1, "spectrum.p_false", "must be in [0, 1]")
    _check(s.warmup_points >= 1, "spectrum.warmup_points", "must be >= 1")
    _check(s.trainset_stride_s > 0, "spectrum.trainset_stride_s", "must be > 0")
    _check(s.manager_target_mse >= 0, "spectrum.manager_target_mse", "must be >= 0")
    _check(s.manager_max_epochs >= 1, "spectrum.manager_max_epochs", "must be >= 1")
    _check(s.selector in ("ann", "heuristic"), "spectrum.selector", "must be 'ann' or 'heuristic'")
    if sc.spectrum and s.selector == "ann":
        _check(
            s.warmup_s >= 2 * s.window_s,
            "spectrum.warmup_s",
            "warm-up trace must cover at least two windows",
        )

    n = cfg.net
    _check(n.mobility in ("random_waypoint", "static"), "net.mobility", "unknown model")
    _check(0 <= n.speed_min_mps <= n.speed_max_mps, "net.speed_min_mps", "need 0 <= min <= max")
    _check(n.speed_max_mps > 0, "net.speed_max_mps", "must be > 0")
    _check(n.pause_s >= 0, "net.pause_s", "must be >= 0")
    _check(n.hop_delay_s >= 0, "net.hop_delay_s", "must be >= 0")
    _check(n.jitter_max_s >= 0, "net.jitter_max_s", "must be >= 0")
    _check(n.advert_period_s > 0, "net.advert_period_s", "must be > 0")
    _check(n.cache_ttl_s >= 0, "net.cache_ttl_s", "must be >= 0")
    _check(n.route_lifetime_s >= 0, "net.route_lifetime_s", "must be >= 0")
    _check(n.ttl_hops >= 1, "net.ttl_hops", "must be >= 1")
    _check(n.discovery_timeout_s > 0, "net.discovery_timeout_s", "must be > 0")
    _check(n.discovery_retries >= 0, "net.discovery_retries", "must be >= 0")
    _check(n.num_services >= 0, "net.num_services", "must be >= 0")
    if sc.discovery or sc.response:
        _check(n.num_services <= cfg.num_su, "net.num_services", "must not exceed num_su")
    _check(n.request_interval_s > 0, "net.request_interval_s", "must be > 0")
    _check(n.situation_interval_s > 0, "net.situation_interval_s", "must be > 0")

    r = cfg.response
    _check(r.levels >= 1, "response.levels", "must be >= 1")
    _check(0 <= r.respond_prob <= 1, "response.respond_prob", "must be in [0, 1]")
    _check(
        0 <= r.response_delay_s[0] <= r.response_delay_s[1],
        "response.response_delay_s",
        "need 0 <= lo <= hi",
    )
    _check(r.wait_s > 0, "response.wait_s", "must be > 0")
    _check(r.gateway_retry_s > 0, "response.gateway_retry_s", "must be > 0")
    if sc.response:
        _check(n.num_services >= 1, "net.num_services", "response needs the gateway service")
    return cfg


def load_config(document: str) -> ScenarioConfig:
    """Parse a JSON scenario document; absent fields take their defaults."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"malformed config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigParse("config document must be a JSON object")
    return validate(_build(ScenarioConfig, data))


def load_config_file(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(path, exc.strerror or "cannot read config") from exc
    return load_config(text)


def config_from_dict(data: dict) -> ScenarioConfig:
    return validate(_build(ScenarioConfig, data))

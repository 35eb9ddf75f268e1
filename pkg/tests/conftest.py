import numpy as np
import pytest

from crahnsim import net as net_mod
from crahnsim.config import NetConfig
from crahnsim.engine import Simulator, rng_stream
from crahnsim.mobility import static_fleet

# (num nodes, worst forwards per request, messages after ttl) for every
# Network built anywhere in the suite; checked on each test's teardown
FLOOD_STATS: list = []


@pytest.fixture(autouse=True)
def _flood_guard(monkeypatch):
    created = []
    original = net_mod.Network.__init__

    def tracking_init(self, *args, **kwargs):
        original(self, *args, **kwargs)
        created.append(self)

    monkeypatch.setattr(net_mod.Network, "__init__", tracking_init)
    yield
    for nw in created:
        n = len(nw.nodes)
        worst = max(nw.flood_forwards.values(), default=0)
        FLOOD_STATS.append((n, worst, nw.alive_after_ttl))
        assert worst <= n, f"request forwarded {worst} times with {n} nodes"
        assert nw.alive_after_ttl == 0


def pytest_terminal_summary(terminalreporter):
    if not FLOOD_STATS:
        return
    bad = [s for s in FLOOD_STATS if s[1] > s[0] or s[2] != 0]
    worst = max(s[1] / s[0] for s in FLOOD_STATS)
    terminalreporter.write_line(
        f"flood termination over the whole suite: {len(FLOOD_STATS)} networks, "
        f"worst forwards/num_su {worst:.2f}, violations {len(bad)} -> {'PASS' if not bad else 'FAIL'}"
    )


def make_static_net(points, range_m=250.0, seed=7, **net_overrides):
    """Network over fixed node positions; zero jitter unless overridden."""
    cfg = NetConfig(jitter_max_s=0.0)
    for k, v in net_overrides.items():
        setattr(cfg, k, v)
    sim = Simulator()
    nw = net_mod.Network(sim, static_fleet(points), range_m, cfg, lambda label: rng_stream(seed, label))
    return sim, nw


def chain(k, spacing=200.0):
    return [(10.0 + i * spacing, 500.0) for i in range(k + 1)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- run output helpers -------------------------------------------------------
import csv
import json
from pathlib import Path

SMALL_RUN = {
    "num_su": 15,
    "num_pu": 4,
    "sim_duration_s": 200.0,
    "area_width_m": 600.0,
    "area_height_m": 600.0,
    "neural": {"max_epochs": 4000},
    "spectrum": {"warmup_s": 130.0, "warmup_points": 4, "manager_max_epochs": 1500},
    "net": {"request_interval_s": 20.0, "situation_interval_s": 40.0},
}


def write_config(tmp_path, doc, name="cfg.json"):
    path = Path(tmp_path) / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def read_report(out_dir):
    return {r["metric"]: r["value"] for r in read_csv(Path(out_dir) / "report.csv")}


def _mean(xs):
    return sum(xs) / len(xs) if xs else 0.0


def check_report_consistency(out_dir):
    """Recompute every aggregate in report.csv from the ledgers; returns the names checked."""
    out = Path(out_dir)
    rep = read_report(out)
    checked = []

    def same(name, value):
        assert abs(float(rep[name]) - value) <= 1e-9, (name, rep[name], value)
        checked.append(name)

    if (out / "ground_truth.csv").exists():
        truth = read_csv(out / "ground_truth.csv")
        same("disaster_events", len(truth))
        same("false_negative_rate", 1.0 - _mean([int(r["detected"]) for r in truth]) if truth else 0.0)
        windows = [(float(r["start"]), float(r["start"]) + float(r["duration"])) for r in truth]
        quiet = [r for r in read_csv(out / "verdicts.csv")
                 if not any(a <= float(r["at"]) <= b + 1e-9 for a, b in windows)]
        same("false_positive_rate", _mean([r["class"] != "none" for r in quiet]))

    if (out / "switches.csv").exists():
        sw = read_csv(out / "switches.csv")
        same("switches", len(sw))
        same("mean_switch_time_s", _mean([float(r["switching_time"]) for r in sw]))
        same("max_switch_time_s", max((float(r["switching_time"]) for r in sw), default=0.0))
        for r in read_csv(out / "switch_stats.csv"):
            mine = [float(s["switching_time"]) for s in sw if s["su_id"] == r["su_id"]]
            assert int(r["switches"]) == len(mine)
            if mine:
                assert abs(float(r["mean_switching_time"]) - _mean(mine)) <= 1e-9
        checked.append("switch_stats")

    if (out / "discovery.csv").exists():
        ds = read_csv(out / "discovery.csv")
        ok = [r for r in ds if r["outcome"] in ("local", "cache", "found")]
        done = [r for r in ds if r["outcome"] != "pending"]
        same("discoveries", len(ds))
        same("discovery_success_rate", len(ok) / len(done) if done else 0.0)
        same("mean_discovery_latency_s", _mean([float(r["latency"]) for r in ok]))
        for r in read_csv(out / "latency_stats.csv"):
            mine = [float(d["latency"]) for d in ok if d["origin"] == r["node"]]
            assert int(r["successes"]) == len(mine)
            if mine:
                assert abs(float(r["mean_latency"]) - _mean(mine)) <= 1e-9
        checked.append("latency_stats")
        same("drops_total", sum(int(r["count"]) for r in read_csv(out / "drops.csv")))
        same("max_forwards_per_request", max((int(r["forwards"]) for r in read_csv(out / "floods.csv")), default=0))

    if (out / "responses.csv").exists():
        rs = read_csv(out / "responses.csv")
        same("responses", len(rs))
        same("declared_by_personnel", sum(r["declared_by"].isdigit() for r in rs))
        same("fallback_alarms", sum(r["declared_by"] == "fallback" for r in rs))
        found = [r for r in rs if r["gateway_found_at"]]
        same("mean_time_to_gateway_s",
             _mean([float(r["gateway_found_at"]) - float(r["verdict_time"]) for r in found]))
    return checked


def dir_bytes(path):
    return {p.name: p.read_bytes() for p in sorted(Path(path).iterdir())}

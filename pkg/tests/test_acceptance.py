"""Acceptance criteria 1-9, each printing a single PASS/FAIL line."""

import time

import numpy as np
import pytest

from conftest import chain, check_report_consistency, dir_bytes, make_static_net, read_csv, read_report
from crahnsim.config import DetectionConfig, NeuralConfig, NetConfig, config_from_dict
from crahnsim.detection import DisasterClass, DisasterVerdict, GeneratorConfig, held_out_rates, synth_dataset, train_detector
from crahnsim.engine import Simulator, rng_stream
from crahnsim.experiments import run
from crahnsim.mobility import random_fleet
from crahnsim.net import Network
from crahnsim.neural import Dataset, Mlp, TrainConfig, gradient, sample_loss, train
from crahnsim.response import CallTree, PersonnelModel, ResponseCoordinator
from crahnsim.scenario import simulate
from crahnsim.situation import STATUSES, SituationRecord, encode_situation, parse_situation
from crahnsim.errors import XmlInvalidStatus


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nacceptance {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def default_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("default")
    times = []
    for name in ("first", "second"):
        t0 = time.perf_counter()
        run(None, 1, base / name)
        times.append(time.perf_counter() - t0)
    return base, times


def test_criterion_1_determinism(default_runs, verdict):
    base, times = default_runs
    a, b = dir_bytes(base / "first"), dir_bytes(base / "second")
    ok = a == b and max(times) < 60.0
    verdict(1, ok, f"default run twice: {len(a)} files byte-identical={a == b}, "
                   f"run times {times[0]:.1f}s / {times[1]:.1f}s (limit 60s)")


def test_criterion_2_gradient_check(verdict):
    rng = np.random.default_rng(20240601)
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        ni, nh, no = (int(v) for v in rng.integers(1, 7, 3))
        net = Mlp.random(ni, nh, no, rng, scale=1.0)
        x, t = rng.uniform(-1, 1, ni), rng.random(no)
        theta = net.params()
        analytic = gradient(net, x, t).flat()
        for k in range(theta.size):
            up, dn = theta.copy(), theta.copy()
            up[k] += h
            dn[k] -= h
            fd = (sample_loss(net.with_params(up), x, t) - sample_loss(net.with_params(dn), x, t)) / (2 * h)
            rel = abs(analytic[k] - fd) / max(abs(analytic[k]), abs(fd), 1e-8)
            worst = max(worst, rel)
    verdict(2, worst < 1e-4, f"100 random (net, sample) pairs, worst relative error {worst:.2e} (limit 1e-4)")


def test_criterion_3_xor(verdict):
    xor = Dataset([[0, 0], [0, 1], [1, 0], [1, 1]], [[0], [1], [1], [0]])
    results = [train(Mlp.uninitialized(2, 5, 1), xor, TrainConfig(0.5, 20000, 0.05), rng_stream(seed, "xor"))
               for seed in range(10)]
    ok = sum(r.final_mse <= 0.05 for r in results)
    epochs = [r.epochs_used for r in results]
    verdict(3, ok >= 8, f"XOR 2-5-1 reached MSE <= 0.05 for {ok}/10 seeds (need 8), epochs {min(epochs)}-{max(epochs)}")


def test_criterion_4_detection_quality(verdict):
    fnr = {1: [], 5: []}
    for n in fnr:
        gen = GeneratorConfig.from_detection(DetectionConfig(n_inputs=n))
        for seed in range(10):
            res, _ = train_detector(gen, TrainConfig.from_neural(NeuralConfig()), 5, rng_stream(seed, "detection/train"))
            held = held_out_rates(res.net, synth_dataset(gen, rng_stream(seed, "detection/heldout")))
            fnr[n].append(held["false_negative_rate"])
    m1, m5 = float(np.mean(fnr[1])), float(np.mean(fnr[5]))
    ok = max(fnr[5]) < 0.1 and m5 <= m1
    verdict(4, ok, f"held-out FNR at n=5: max {max(fnr[5]):.3f} (limit < 0.1), "
                   f"mean n=5 {m5:.3f} <= mean n=1 {m1:.3f} over 10 seeds")


def _spectrum_only(seed, interval):
    off = {"detection": False, "discovery": False, "response": False, "situation": False}
    cfg = config_from_dict({"master_seed": seed, "scenarios": off, "spectrum": {"sensing_interval_s": interval}})
    return simulate(cfg).report


def test_criterion_5_spectrum_switching(default_runs, verdict):
    base, _ = default_runs
    rep = read_report(base / "first")
    sw = [float(r["switching_time"]) for r in read_csv(base / "first" / "switches.csv")]
    deferrals = int(rep["no_idle_deferrals"])
    a_default = deferrals == 0 and len(sw) > 0 and max(sw) <= 0.15
    b = int(rep["tx_on_sensed_busy"]) == 0 and int(rep["transmissions"]) > 0

    fast, slow, a_seeds = [], [], True
    for seed in range(10):
        r1, r2 = _spectrum_only(seed, 0.1), _spectrum_only(seed, 0.2)
        fast.append(r1["mean_switch_time_s"])
        slow.append(r2["mean_switch_time_s"])
        if r1["no_idle_deferrals"] == 0:
            a_seeds &= r1["max_switch_time_s"] <= 0.15
        b &= r1["tx_on_sensed_busy"] == 0 and r2["tx_on_sensed_busy"] == 0
    per_seed = sum(s >= f for f, s in zip(fast, slow))
    c = float(np.mean(slow)) >= float(np.mean(fast)) and per_seed == 10
    verdict(5, a_default and a_seeds and b and c,
            f"(a) default run {len(sw)} switches, max {max(sw, default=0):.3f}s <= 0.15 with {deferrals} deferrals, "
            f"10 extra seeds ok={a_seeds}; (b) tx on sensed-busy channel: {rep['tx_on_sensed_busy']} "
            f"over {rep['transmissions']} transmissions; (c) mean switch time {np.mean(fast):.4f}s -> "
            f"{np.mean(slow):.4f}s when interval doubles, non-decreasing on {per_seed}/10 seeds")


def test_criterion_6_discovery_latency(default_runs, verdict):
    chain_ok = []
    for k in (1, 2, 5):
        sim, nw = make_static_net(chain(k))
        nw.set_services(k, ["gateway"], "gateway")
        d = nw.discover(0, "gateway")
        sim.run_until(30.0)
        chain_ok.append(d.outcome == "found" and d.resolved_ms - d.issued_ms == 2 * k * 10)

    sim, nw = make_static_net(chain(1))
    nw.set_services(1, ["water"])
    nw.advertise(1)
    sim.run_until(1.0)
    hit = nw.discover(0, "water")
    cache_ok = hit.outcome == "cache" and hit.latency == 0.0

    sim, nw = make_static_net(chain(3))
    sim.run_until(4.2)
    miss = nw.discover(0, "food")
    sim.run_until(60.0)
    absent_ok = miss.outcome == "not_found" and abs(miss.resolved_ms - miss.issued_ms - 20000) <= 1

    base, _ = default_runs
    rep = read_report(base / "first")
    success = float(rep["discovery_success_rate"])
    flood_ok = int(rep["max_forwards_per_request"]) <= 50 and int(rep["messages_after_ttl"]) == 0
    ok = all(chain_ok) and cache_ok and absent_ok and success >= 0.8 and flood_ok
    verdict(6, ok, f"(a) chain k=1,2,5 exact 2k*10ms: {chain_ok}; (b) cache hit latency {hit.latency}; "
                   f"(c) not_found after {(miss.resolved_ms - miss.issued_ms) / 1000:.3f}s; "
                   f"(d) default run success {success:.3f} over {rep['discoveries']} discoveries, "
                   f"max forwards {rep['max_forwards_per_request']}/50, after-ttl {rep['messages_after_ttl']}")


def _call_tree(respond_prob, delay, t_verdict):
    sim, nw = make_static_net(chain(3))
    nw.set_services(0, ["gateway"], "gateway")
    tree = CallTree((1, 2, 3))
    people = {p: PersonnelModel(p, respond_prob, delay) for p in tree.levels}
    rc = ResponseCoordinator(sim, nw.discover, 0, tree, people, rng_stream(1, "response"))
    box = []
    sim.at(t_verdict, lambda: box.append(rc.initiate(DisasterVerdict(DisasterClass.FLOOD, (0, 0, 0, 1)))))
    sim.run_until(t_verdict + 100.0)
    return box[0]


def test_criterion_7_call_tree_timing(verdict):
    silent = _call_tree(0.0, (1.0, 5.0), 12.345)
    t_gw = silent.gateway_found_at - silent.verdict_time
    fallback_ok = silent.declared_by == "fallback" and silent.declared_at == round(12.345 + t_gw + 30.0, 3)
    quick = _call_tree(1.0, (2.0, 2.0), 12.345)
    quick_ok = quick.declared_by == 1 and quick.declared_at == round(12.345 + 2.0, 3)
    verdict(7, fallback_ok and quick_ok,
            f"all-silent fallback at verdict+{silent.declared_at - silent.verdict_time:.3f}s (t_gateway {t_gw:.3f}s, "
            f"expect +30.000s); level-1 responder declared by {quick.declared_by} at "
            f"verdict+{quick.declared_at - quick.verdict_time:.3f}s (expect +2.000s)")


def test_criterion_8_xml(verdict):
    golden = ('<situation><location x="120.500" y="88.000"/><status>red</status><timestamp>42.125</timestamp>'
              '<short>help</short><detail>trapped under debris</detail></situation>')
    golden_ok = encode_situation(SituationRecord(120.5, 88.0, "red", 42.125, "help", "trapped under debris")) == golden
    rng = np.random.default_rng(8)
    alphabet = list("abcxyz XYZ019<>&\"'\t\n\r") + ["é", "火", "😀"]
    round_trips = 0
    for _ in range(1000):
        text = lambda: "".join(rng.choice(alphabet, size=int(rng.integers(0, 30))))
        rec = SituationRecord(rng.uniform(0, 1000), rng.uniform(0, 1000), STATUSES[int(rng.integers(3))],
                              rng.uniform(0, 1e5), text(), text())
        round_trips += parse_situation(encode_situation(rec)) == rec
    try:
        parse_situation(golden.replace(">red<", ">blue<"))
        blue_ok = False
    except XmlInvalidStatus:
        blue_ok = True
    verdict(8, golden_ok and round_trips == 1000 and blue_ok,
            f"golden bytes match={golden_ok}, {round_trips}/1000 random records round-trip, 'blue' rejected={blue_ok}")


def test_criterion_9_flood_termination(default_runs, verdict):
    stats = []
    base, _ = default_runs
    rep = read_report(base / "first")
    stats.append(("default run", 50, int(rep["max_forwards_per_request"]), int(rep["messages_after_ttl"])))
    for r in read_csv(base / "first" / "floods.csv"):
        assert int(r["forwards"]) <= 50

    for ttl in (1, 2, 3, 10):
        for seed in range(5):
            R = lambda s, seed=seed: rng_stream(seed, s)
            sim = Simulator()
            n = 30
            fleet = random_fleet(n, (700.0, 700.0), (1.0, 5.0), 2.0, lambda i: R(f"mobility/{i}"))
            nw = Network(sim, fleet, 250.0, NetConfig(ttl_hops=ttl), R)
            for i, svc in enumerate(["gateway", "water", "food"]):
                nw.set_services(i, [svc])
            nw.start_adverts(200.0)
            pick = R("workload")
            for t in np.sort(pick.uniform(0, 170, 60)):
                sim.at(float(t), nw.discover, int(pick.integers(n)), ["gateway", "water", "food", "absent"][int(pick.integers(4))])
            sim.run_until(200.0)
            stats.append((f"mobile ttl={ttl} seed={seed}", n, max(nw.flood_forwards.values(), default=0), nw.alive_after_ttl))

    small = config_from_dict({"num_su": 20, "sim_duration_s": 150.0, "net": {"ttl_hops": 2},
                              "scenarios": {"spectrum": False, "detection": False}})
    r = simulate(small).report
    stats.append(("small run ttl=2", 20, r["max_forwards_per_request"], r["messages_after_ttl"]))

    bad = [s for s in stats if s[2] > s[1] or s[3] != 0]
    worst = max(s[2] / s[1] for s in stats)
    verdict(9, not bad, f"{len(stats)} scenarios, worst forwards per request {worst:.2f} x num_su (limit 1.00), "
                        f"messages alive after ttl: {sum(s[3] for s in stats)}; suite-wide guard in conftest")


def test_default_report_consistent_with_ledgers(default_runs):
    base, _ = default_runs
    checked = check_report_consistency(base / "first")
    rep = read_report(base / "first")
    assert rep["num_pu"] == "5" and rep["num_su"] == "50" and rep["services_registered"] == "10"
    assert len(checked) >= 15

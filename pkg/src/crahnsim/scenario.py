"""One full simulation run: offline training, the event-driven main run,
and the CSV ledgers and report it produces.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import kernels
from .config import DISASTER_CLASSES, ScenarioConfig
from .detection import (
    ContextManager, DisasterClass, GeneratorConfig, false_negative_rate, false_positive_rate,
    held_out_rates, schedule_disasters, synth_dataset, train_detector,
)
from .engine import Simulator, rng_stream, to_ms
from .errors import IoError
from .mobility import random_fleet
from .net import Network
from .neural import Mlp, TrainConfig
from .response import CallTree, PersonnelModel, ResponseCoordinator
from .situation import STATUSES, SituationRecord
from .spectrum import (
    SpectrumLayer, build_spectrum_trainset, place_primary_users, select_channel,
    select_channel_heuristic, train_spectrum_manager, warmup_trace,
)

log = logging.getLogger(__name__)

DROP_REASONS = ("out_of_range", "not_neighbor", "no_route", "ttl_expired", "late_reply",
                "duplicate_request", "duplicate_situation")


def _t(x) -> str:
    return "" if x is None else f"{x:.3f}"


@dataclass
class Ledger:
    header: list
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()


@dataclass
class RunResult:
    config: ScenarioConfig
    report: dict
    ledgers: dict
    models: dict

    def files(self) -> dict:
        out = {"config.json": self.config.to_json()}
        for name, ledger in self.ledgers.items():
            out[f"{name}.csv"] = ledger.to_csv()
        for name, net in self.models.items():
            out[f"{name}.json"] = net.to_json()
        report = Ledger(["metric", "value"], [[k, _fmt(v)] for k, v in self.report.items()])
        out["report.csv"] = report.to_csv()
        return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _training_ledger(history) -> Ledger:
    return Ledger(["epoch", "mse"], [[i + 1, repr(float(m))] for i, m in enumerate(history)])


def _assign_roles(cfg: ScenarioConfig, rng: np.random.Generator):
    """Providers for each service and the personnel call tree, never the site node."""
    n = cfg.num_su
    site = cfg.detection.site_node
    others = [i for i in range(n) if i != site] or list(range(n))
    names = cfg.service_names
    k = min(len(names), len(others))
    providers = [int(x) for x in rng.choice(others, size=k, replace=False)] if k else []
    hosted = dict(zip(names, providers))
    pool = [i for i in others if i not in providers]
    if len(pool) < cfg.response.levels:
        pool = others
    levels = min(cfg.response.levels, len(pool))
    personnel = [int(x) for x in rng.choice(pool, size=levels, replace=False)] if levels else []
    return hosted, personnel


def simulate(cfg: ScenarioConfig) -> RunResult:
    seed = cfg.master_seed
    R = partial(rng_stream, seed)
    sc = cfg.scenarios
    duration = cfg.sim_duration_s
    area = (cfg.area_width_m, cfg.area_height_m)
    sim = Simulator()
    ledgers: dict[str, Ledger] = {}
    models: dict[str, Mlp] = {}
    report: dict = {
        "config_digest": cfg.digest(),
        "seed": seed,
        "kernel_backend": kernels.BACKEND,
        "num_pu": cfg.num_pu,
        "num_su": cfg.num_su,
        "num_channels": cfg.num_channels,
        "band_label": cfg.band_label,
        "services_registered": 0,
    }

    fleet = random_fleet(
        cfg.num_su, area, (cfg.net.speed_min_mps, cfg.net.speed_max_mps), cfg.net.pause_s,
        lambda i: R(f"mobility/{i}"), static=cfg.net.mobility == "static",
    )
    network = Network(sim, fleet, cfg.radio_range_m, cfg.net, R)

    # -- offline: spectrum manager from a warm-up trace -------------------
    spectrum = None
    if sc.spectrum:
        s = cfg.spectrum
        pus = place_primary_users(cfg.num_pu, cfg.num_channels, area, s, R("pu"))
        if s.selector == "ann":
            pts = R("spectrum/warmup").uniform((0.0, 0.0), area, (s.warmup_points, 2))
            trace = warmup_trace(pus, pts, cfg.num_channels, cfg.radio_range_m, s.warmup_s, s.sensing_interval_s)
            trainset = build_spectrum_trainset(trace, s.window_s, s.horizon_s, s.trainset_stride_s)
            tc = TrainConfig(cfg.neural.learning_rate, s.manager_max_epochs, s.manager_target_mse, cfg.neural.init_scale)
            trained = train_spectrum_manager(trainset, tc, cfg.neural.n_hidden, R("spectrum/manager-init"))
            models["spectrum_manager"] = trained.net
            ledgers["spectrum_training"] = _training_ledger(trained.history)
            selector = partial(select_channel, trained.net)
        else:
            selector = select_channel_heuristic
        error_rngs = None
        if s.p_miss > 0 or s.p_false > 0:
            error_rngs = [R(f"sense/{i}") for i in range(cfg.num_su)]
        spectrum = SpectrumLayer(sim, cfg.num_su, pus, cfg.num_channels, cfg.radio_range_m, s,
                                 fleet.positions, fleet.position, selector, error_rngs)

        def _retuned(i, ch):
            network.nodes[i].current_channel = ch

        spectrum.on_channel_change = _retuned
        spectrum.start(duration)

    # -- roles and services ----------------------------------------------
    hosted, personnel_nodes = {}, []
    if sc.discovery or sc.response:
        hosted, personnel_nodes = _assign_roles(cfg, R("roles"))
        for service, node in hosted.items():
            network.set_services(node, [service], "gateway" if service == "gateway" else "service_provider")
        for node in personnel_nodes:
            network.set_services(node, network.nodes[node].services, "personnel")
        report["services_registered"] = len(hosted)
        network.start_adverts(duration)

    # -- response escalation ---------------------------------------------
    coordinator = None
    if sc.response and personnel_nodes:
        r = cfg.response
        tree = CallTree(tuple(personnel_nodes))
        models_p = {p: PersonnelModel(p, r.respond_prob, tuple(r.response_delay_s)) for p in personnel_nodes}

        def _declared(out):
            if sc.situation:
                x, y = fleet.position(cfg.detection.site_node, sim.now)
                who = "fallback alarm" if out.declared_by == "fallback" else f"level {out.declared_by} officer"
                network.publish_situation(cfg.detection.site_node, SituationRecord(
                    x, y, "red", sim.now, "disaster", f"disaster declared by {who}"))

        coordinator = ResponseCoordinator(sim, network.discover, cfg.detection.site_node, tree, models_p,
                                          R("response"), r.wait_s, r.gateway_retry_s, on_declared=_declared)

    # -- detection ---------------------------------------------------------
    ctx_mgr, truth = None, []
    if sc.detection:
        d = cfg.detection
        gen = GeneratorConfig.from_detection(d)
        if d.model_path:
            detector = Mlp.load(d.model_path)
        else:
            trained_det, _ = train_detector(gen, TrainConfig.from_neural(cfg.neural), cfg.neural.n_hidden, R("detection/train"))
            detector = trained_det.net
            ledgers["detector_training"] = _training_ledger(trained_det.history)
        models["detector"] = detector
        held = held_out_rates(detector, synth_dataset(gen, R("detection/heldout")))
        report["detector_heldout_accuracy"] = held["accuracy"]
        report["detector_heldout_fnr"] = held["false_negative_rate"]
        truth = schedule_disasters(duration, d.event_gap_s, d.event_duration_s, R("detection/events"))
        on_alarm = coordinator.initiate if coordinator is not None else None
        ctx_mgr = ContextManager(sim, detector, gen, truth, R("detection/sensors"), d.snapshot_interval_s,
                                 d.site_node, on_alarm)
        ctx_mgr.start(duration)

    # -- discovery workload ------------------------------------------------
    if sc.discovery and hosted:
        last_issue = duration - cfg.net.discovery_timeout_s * (cfg.net.discovery_retries + 1)
        names = sorted(hosted)

        def _request(i, rng):
            own = network.nodes[i].services
            choices = [s for s in names if s not in own] or names
            network.discover(i, choices[int(rng.integers(len(choices)))])
            _next_request(i, rng)

        def _next_request(i, rng):
            t = sim.now + rng.exponential(cfg.net.request_interval_s)
            if t <= last_issue:
                sim.at(t, _request, i, rng, kind="request", target=i)

        for i in range(cfg.num_su):
            _next_request(i, R(f"workload/{i}"))

    # -- situation reports ------------------------------------------------
    published = []
    if sc.situation:
        def _post(i, rng):
            x, y = fleet.position(i, sim.now)
            status = STATUSES[int(rng.choice(3, p=[0.6, 0.3, 0.1]))]
            short = "help" if status == "red" else "status"
            rec = SituationRecord(x, y, status, sim.now, short, f"{status} report from node {i}")
            network.publish_situation(i, rec)
            published.append((i, to_ms(rec.timestamp)))
            _next_post(i, rng)

        def _next_post(i, rng):
            t = sim.now + rng.exponential(cfg.net.situation_interval_s)
            if t <= duration:
                sim.at(t, _post, i, rng, kind="situation", target=i)

        for i in range(cfg.num_su):
            _next_post(i, R(f"situation/{i}"))

    sim.run_until(duration)
    report["events_processed"] = sim.processed

    # -- ledgers and report -------------------------------------------------
    if ctx_mgr is not None:
        verdicts = ctx_mgr.verdicts
        ledgers["ground_truth"] = Ledger(
            ["class", "start", "duration", "detected"],
            [[ev.cls.label, _t(ev.start), _t(ev.duration), int(false_negative_rate([ev], verdicts) == 0.0)] for ev in truth],
        )
        ledgers["verdicts"] = Ledger(
            ["at", "class"] + [f"score_{c}" for c in DISASTER_CLASSES],
            [[_t(v.at), v.cls.label] + [repr(s) for s in v.scores] for v in verdicts],
        )
        report["disaster_events"] = len(truth)
        report["false_negative_rate"] = false_negative_rate(truth, verdicts)
        report["false_positive_rate"] = false_positive_rate(truth, verdicts)
        report["alarms_raised"] = len(coordinator.outcomes) if coordinator is not None else 0

    if spectrum is not None:
        sw = spectrum.switches
        ledgers["switches"] = Ledger(
            ["su_id", "pu_appeared_at", "resumed_at", "switching_time", "from_channel", "to_channel"],
            [[s.su_id, _t(s.pu_appeared_at), _t(s.resumed_at), _t(s.switching_time), s.from_channel, s.to_channel] for s in sw],
        )
        per_su: dict[int, list[int]] = {}
        for s in sw:
            per_su.setdefault(s.su_id, []).append(to_ms(s.resumed_at) - to_ms(s.pu_appeared_at))
        ledgers["switch_stats"] = Ledger(
            ["su_id", "switches", "mean_switching_time"],
            [[i, len(per_su.get(i, [])), repr(sum(per_su[i]) / len(per_su[i]) / 1000.0) if i in per_su else ""]
             for i in range(cfg.num_su)],
        )
        report["switches"] = len(sw)
        report["mean_switch_time_s"] = spectrum.mean_switch_time()
        report["max_switch_time_s"] = max((s.switching_time for s in sw), default=0.0)
        report["transmissions"] = spectrum.tx_count
        report["tx_on_sensed_busy"] = spectrum.tx_violations
        report["no_idle_deferrals"] = spectrum.deferrals
        report["false_alarm_vacates"] = spectrum.false_vacates

    if sc.discovery or sc.response:
        ds = network.discoveries
        ledgers["discovery"] = Ledger(
            ["origin", "service", "issued_at", "resolved_at", "latency", "hops", "outcome"],
            [[d.origin, d.service, _t(d.issued_at), _t(d.resolved_at), _t(d.latency),
              "" if d.hops is None else d.hops, d.outcome] for d in ds],
        )
        ok = [d for d in ds if d.succeeded]
        done = [d for d in ds if d.done]
        per_node: dict[int, list] = {}
        for d in ds:
            per_node.setdefault(d.origin, []).append(d)
        rows = []
        for i in range(cfg.num_su):
            mine = per_node.get(i, [])
            good = [d.resolved_ms - d.issued_ms for d in mine if d.succeeded]
            rows.append([i, len(mine), len(good), repr(sum(good) / len(good) / 1000.0) if good else ""])
        ledgers["latency_stats"] = Ledger(["node", "discoveries", "successes", "mean_latency"], rows)
        ledgers["floods"] = Ledger(
            ["origin", "request_id", "forwards"],
            [[o, rid, n] for (o, rid), n in sorted(network.flood_forwards.items())],
        )
        ledgers["drops"] = Ledger(["reason", "count"], [[k, network.drops.get(k, 0)] for k in DROP_REASONS])
        outcomes = Counter(d.outcome for d in ds)
        report["discoveries"] = len(ds)
        report["discovery_success_rate"] = len(ok) / len(done) if done else 0.0
        report["mean_discovery_latency_s"] = (
            sum(d.resolved_ms - d.issued_ms for d in ok) / len(ok) / 1000.0 if ok else 0.0
        )
        for k in ("local", "cache", "found", "not_found"):
            report[f"discovery_{k}"] = outcomes.get(k, 0)
        report["max_forwards_per_request"] = max(network.flood_forwards.values(), default=0)
        report["messages_after_ttl"] = network.alive_after_ttl
        report["messages_sent"] = network.messages_sent
        report["drops_total"] = sum(network.drops.get(k, 0) for k in DROP_REASONS)

    if coordinator is not None:
        outs = coordinator.outcomes
        ledgers["responses"] = Ledger(
            ["verdict_time", "gateway_found_at", "declared_by", "declared_at", "attempts"],
            [[_t(o.verdict_time), _t(o.gateway_found_at), "pending" if o.declared_by is None else o.declared_by,
              _t(o.declared_at), o.attempts_text] for o in outs],
        )
        report["responses"] = len(outs)
        report["declared_by_personnel"] = sum(isinstance(o.declared_by, int) for o in outs)
        report["fallback_alarms"] = sum(o.declared_by == "fallback" for o in outs)
        found = [o for o in outs if o.gateway_found_at is not None]
        report["mean_time_to_gateway_s"] = (
            sum(to_ms(o.gateway_found_at) - to_ms(o.verdict_time) for o in found) / len(found) / 1000.0 if found else 0.0
        )

    if sc.situation:
        report["situations_published"] = len(published)
        report["situation_mean_coverage"] = (
            sum(network.situation_coverage(k) for k in published) / len(published) if published else 0.0
        )

    return RunResult(cfg, report, ledgers, models)


def write_run(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(result.files().items()):
            with open(out / name, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    except OSError as exc:
        raise IoError(out, exc.strerror or "cannot write run output") from exc
    return out

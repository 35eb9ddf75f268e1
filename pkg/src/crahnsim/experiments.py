"""Entry points behind the CLI: single runs, parameter sweeps and offline
detector training."""

from __future__ import annotations

import copy
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import ScenarioConfig, config_from_dict, load_config_file
from .detection import GeneratorConfig, held_out_rates, synth_dataset, train_detector
from .engine import derive_seed, rng_stream
from .errors import ConfigInvalid, IoError
from .neural import TrainConfig
from .scenario import Ledger, RunResult, _training_ledger, simulate, write_run

SWEEP_METRICS = (
    "detector_heldout_fnr",
    "detector_heldout_accuracy",
    "false_negative_rate",
    "false_positive_rate",
    "mean_switch_time_s",
    "mean_discovery_latency_s",
    "discovery_success_rate",
)


def resolve_config(config_path=None, seed=None) -> ScenarioConfig:
    cfg = load_config_file(config_path) if config_path is not None else ScenarioConfig()
    if seed is not None:
        d = cfg.to_dict()
        d["master_seed"] = seed
        cfg = config_from_dict(d)
    return cfg


def run(config_path=None, seed=None, out_dir="out") -> RunResult:
    cfg = resolve_config(config_path, seed)
    result = simulate(cfg)
    write_run(result, out_dir)
    return result


@dataclass
class SweepSpec:
    parameter: str
    values: list
    repeats: int
    base: ScenarioConfig

    def __post_init__(self):
        if not self.values:
            raise ConfigInvalid("sweep.values", "must be non-empty")
        if isinstance(self.repeats, bool) or not isinstance(self.repeats, int) or self.repeats < 1:
            raise ConfigInvalid("sweep.repeats", "must be >= 1")
        for v in self.values:
            with_param(self.base, self.parameter, v)


def with_param(base: ScenarioConfig, path: str, value) -> ScenarioConfig:
    """Copy of ``base`` with the dotted field ``path`` set to ``value``."""
    d = copy.deepcopy(base.to_dict())
    keys = path.split(".")
    node = d
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigInvalid(path, "unknown parameter")
        node = node[k]
    if keys[-1] not in node or isinstance(node[keys[-1]], dict):
        raise ConfigInvalid(path, "unknown parameter")
    node[keys[-1]] = value
    return config_from_dict(d)


def _sweep_row(args) -> list:
    cfg_dict, value, repeat = args
    cfg = config_from_dict(cfg_dict)
    report = simulate(cfg).report
    return [value, repeat, cfg.master_seed] + [report.get(m, "") for m in SWEEP_METRICS]


def sweep(spec: SweepSpec, out_dir, jobs: int = 1) -> tuple[Ledger, Ledger]:
    """One independent run per (value, repeat).

    Seeds depend only on the repeat index, so every value sees the same
    random streams and no row depends on any other row.
    """
    tasks = []
    for v in spec.values:
        for r in range(spec.repeats):
            cfg = with_param(spec.base, spec.parameter, v)
            d = cfg.to_dict()
            d["master_seed"] = derive_seed(spec.base.master_seed, "sweep", r)
            tasks.append((d, v, r))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]

    fmt = lambda x: repr(x) if isinstance(x, float) else str(x)
    header = ["value", "repeat", "seed", *SWEEP_METRICS]
    table = Ledger(header, [[fmt(x) for x in row] for row in rows])

    summary_header = ["value", "runs"]
    for m in SWEEP_METRICS:
        summary_header += [f"{m}_mean", f"{m}_std"]
    summary = Ledger(summary_header)
    for v in spec.values:
        mine = [row for row in rows if row[0] == v]
        out = [fmt(v), len(mine)]
        for j in range(len(SWEEP_METRICS)):
            xs = [row[3 + j] for row in mine if row[3 + j] != ""]
            if xs:
                out += [repr(statistics.fmean(xs)), repr(statistics.pstdev(xs))]
            else:
                out += ["", ""]
        summary.rows.append(out)

    _write(out_dir, {"sweep.csv": table.to_csv(), "sweep_summary.csv": summary.to_csv()})
    return table, summary


def train_detector_files(cfg: ScenarioConfig, seed: int, out_dir) -> dict:
    """Train the detector offline and write model, training curve and held-out scores."""
    gen = GeneratorConfig.from_detection(cfg.detection)
    result, _ = train_detector(gen, TrainConfig.from_neural(cfg.neural), cfg.neural.n_hidden,
                               rng_stream(seed, "detection/train"))
    curve = _training_ledger(result.history)
    epochs = [row[0] for row in curve.rows]
    assert epochs == list(range(1, len(epochs) + 1)), "training report epochs out of order"
    held_data = synth_dataset(gen, rng_stream(seed, "detection/heldout"))
    held = held_out_rates(result.net, held_data)
    evaluation = Ledger(["metric", "value"], [
        ["epochs_used", result.epochs_used],
        ["final_mse", repr(float(result.final_mse))],
        ["heldout_samples", len(held_data)],
        *[[f"heldout_{k}", repr(v)] for k, v in held.items()],
    ])
    _write(out_dir, {
        "detector.json": result.net.to_json(),
        "detector_training.csv": curve.to_csv(),
        "detector_eval.csv": evaluation.to_csv(),
    })
    return {"epochs_used": result.epochs_used, "final_mse": float(result.final_mse), **held}


def _write(out_dir, files: dict):
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            with open(out / name, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    except OSError as exc:
        raise IoError(out, exc.strerror or "cannot write output") from exc


def parse_values(text: str) -> list:
    """Comma-separated JSON scalars: ``1,2,3`` or ``0.1,0.2`` or ``"ann","heuristic"``."""
    try:
        values = json.loads(f"[{text}]")
    except json.JSONDecodeError:
        values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise ConfigInvalid("sweep.values", "must be non-empty")
    return values

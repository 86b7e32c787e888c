"""Experiment suites: controller comparison, distance sweep, thrust robustness, multi-gate."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import CONTROLLERS, ScenarioConfig
from .episode import EpisodeMetrics, run_episode

log = logging.getLogger(__name__)

SUITES = ("compare", "distance-sweep", "robustness", "multigate")
DISTANCES = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
THRUST_CAPS = tuple(float(c) for c in range(12, 21))


def episode_seeds(master: int, n: int) -> list[int]:
    """Deterministic per-episode seeds spawned from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(n)]


def _job(args) -> EpisodeMetrics:
    cfg_dict, seed, log_path = args
    return run_episode(ScenarioConfig.from_dict(cfg_dict), seed, log_path)


def run_many(cfg: ScenarioConfig, seeds, out_dir: Path | None = None, label: str = "ep",
             workers: int = 1) -> list[EpisodeMetrics]:
    """Run one episode per seed, in parallel when ``workers > 1``; order follows ``seeds``."""
    jobs = []
    for s in seeds:
        path = None if out_dir is None else str(out_dir / f"{label}_{s}.csv")
        jobs.append((cfg.to_dict(), int(s), path))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    for m in results:
        log.info("%s seed=%d success=%s error=%s time=%s (%s)", label, m.seed, m.success,
                 m.traversal_error, m.traversal_time, m.reason)
    return results


def aggregate(results: list[EpisodeMetrics]) -> dict:
    """Success rate plus mean error/time over episodes that crossed the gate plane."""
    n = len(results)
    errs = [m.traversal_error for m in results if m.traversal_error is not None]
    times = [m.traversal_time for m in results if m.traversal_time is not None]
    out = {
        "episodes": n,
        "success_rate": float(sum(m.success for m in results) / n) if n else float("nan"),
        "crossed": len(errs),
        "mean_error": float(np.mean(errs)) if errs else None,
        "mean_time": float(np.mean(times)) if times else None,
    }
    n_gates = max((len(m.gates) for m in results), default=0)
    if n_gates > 1:
        per_gate = []
        for i in range(n_gates):
            gs = [m.gates[i] for m in results if len(m.gates) > i]
            ge = [g.traversal_error for g in gs if g.traversal_error is not None]
            gt = [g.traversal_time for g in gs if g.traversal_time is not None]
            per_gate.append({
                "gate": i,
                "success_rate": float(sum(g.success for g in gs) / len(gs)),
                "mean_error": float(np.mean(ge)) if ge else None,
                "mean_time": float(np.mean(gt)) if gt else None,
            })
        out["gates"] = per_gate
    return out


def _axial_start(cfg: ScenarioConfig, distance: float) -> ScenarioConfig:
    geo = cfg.gate.geometry(0)
    start = list(cfg.drone_start)
    start[0] = float(geo.pivot[0] - distance)
    return cfg.replace(drone_start=start, start_x_range=None)


def run_suite(kind: str, cfg: ScenarioConfig, seeds=None, out_dir: str | Path | None = None,
              workers: int | None = None) -> dict:
    """Run a suite and return (and optionally write) its report."""
    if kind not in SUITES:
        raise ValueError(f"unknown suite {kind!r}; choose from {SUITES}")
    seeds = list(seeds) if seeds is not None else episode_seeds(cfg.seed, cfg.num_trials)
    workers = workers or cfg.workers
    out = Path(out_dir) if out_dir is not None else None
    ep_dir = None
    if out is not None:
        ep_dir = out / "episodes"
        ep_dir.mkdir(parents=True, exist_ok=True)

    groups: list[tuple[dict, ScenarioConfig]] = []
    if kind == "compare":
        for c in CONTROLLERS:
            groups.append(({"controller": c}, cfg.replace(controller=c)))
    elif kind == "distance-sweep":
        controllers = [cfg.controller]
        if cfg.controller != "oracle-dynamics":
            controllers.append("oracle-dynamics")
        for dist in DISTANCES:
            for c in controllers:
                groups.append(({"controller": c, "distance": dist},
                               _axial_start(cfg.replace(controller=c), dist)))
    elif kind == "robustness":
        for cap in THRUST_CAPS:
            limits = {**cfg.to_dict()["limits"], "sim_c_max": cap}
            groups.append(({"controller": cfg.controller, "sim_c_max": cap},
                           cfg.replace(limits=limits)))
    else:
        gate = {**cfg.to_dict()["gate"], "count": 3}
        groups.append(({"controller": cfg.controller, "gate_count": 3}, cfg.replace(gate=gate)))

    report = {"suite": kind, "seeds": seeds, "config": cfg.to_dict(), "groups": []}
    for key, gcfg in groups:
        label = "_".join(f"{k}-{v}" for k, v in key.items())
        results = run_many(gcfg, seeds, ep_dir, label, workers)
        report["groups"].append({**key, **aggregate(results),
                                 "episodes_detail": [m.to_dict() for m in results]})
    if out is not None:
        (out / f"{kind}.json").write_text(json.dumps(report, indent=2))
    return report


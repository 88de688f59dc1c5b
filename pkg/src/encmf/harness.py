"""Twin experiments: synthesize truth and data, cycle a filter, record metrics."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .ann import fit_conditional_mean
from .config import ExperimentConfig
from .errors import ConfigError, NumericalError
from .filters import ConditionalMeanModel, enkf_analysis, genkf_analysis, mlencmf_analysis
from .metrics import RunMetrics, coverage_step, rmse_step, spread_step
from .models import make_model, propagate
from .observation import forecast_observations, scenario
from .rng import RngPolicy
from .stats import ensemble_cov, ensemble_mean, fit_affine, kalman_gain_linear

log = logging.getLogger(__name__)

RECORD_COLUMNS = ("step", "t", "rmse", "spread", "covered", "n_components", "a", "m_ann", "m_lin")


def fmt(x) -> str:
    """17-significant-digit float formatting used by every output table."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class AssimilationRecord:
    step: int
    t: float
    truth: np.ndarray
    obs: np.ndarray
    mean: np.ndarray
    rmse: float
    spread: float
    covered: int
    n_components: int
    a: int = 0
    m_ann: float = float("nan")
    m_lin: float = float("nan")
    analysis_ms: float = 0.0
    fallback: bool = False

    def row(self) -> list:
        return [self.step, self.t, self.rmse, self.spread, self.covered,
                self.n_components, self.a, self.m_ann, self.m_lin]


@dataclass
class Setup:
    """Everything a run derives from its config: dynamics, observation scenario, streams."""

    cfg: ExperimentConfig
    model: object = None
    hmap: object = None
    noise: object = None
    rng: RngPolicy = None
    warm: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_config(cls, cfg: ExperimentConfig, track_streams: bool = False) -> "Setup":
        model = make_model(cfg.model, **cfg.model_params)
        hmap, noise = scenario(cfg.model, model.dim)
        return cls(cfg, model, hmap, noise, RngPolicy(cfg.seed, track=track_streams))


def synthesize_truth_and_obs(setup: Setup):
    """Truth at ``t_k = k dt_obs`` (k = 1..K) from ``q(0) ~ N(0, I)``, and its noisy observations.

    Returns ``(times, truth (K, n), obs (K, m))``.
    """
    cfg = setup.cfg
    q = setup.rng.stream("truth-init").standard_normal(setup.model.dim)
    times, truth, obs = [], [], []
    for k in range(1, cfg.steps + 1):
        q = propagate(setup.model, q, cfg.dt_obs, cfg.dt)
        times.append(k * cfg.dt_obs)
        truth.append(q)
        obs.append(setup.hmap(q) + setup.noise.sample(setup.rng.stream("obs-noise", k)))
    return np.array(times), np.array(truth), np.array(obs)


def init_ensemble(setup: Setup) -> np.ndarray:
    """``N`` i.i.d. draws from ``N(0, I_n)``, independent of the truth draw."""
    return setup.rng.stream("ensemble-init").standard_normal((setup.cfg.n_ens, setup.model.dim))


def _fit_ml(setup: Setup, Qf, Yf, k) -> ConditionalMeanModel:
    cfg = setup.cfg
    try:
        cm = fit_conditional_mean(Qf, Yf, setup.hmap, setup.noise, cfg.train, setup.rng, step=k,
                                  warm_params=setup.warm if cfg.train.warm_start else None)
    except NumericalError as exc:
        log.warning("step %d: network training failed (%s); falling back to a = 0", k, exc)
        return ConditionalMeanModel(fit_affine(Qf, Yf), fallback=True)
    if cfg.train.warm_start:
        setup.warm = cm.nn.net.params.copy()
    if cfg.force_a != "auto":
        cm.a = int(cfg.force_a)
    return cm


def analysis(setup: Setup, Qf, Yf, y_obs, k):
    """Dispatch to the configured analysis; returns ``(Qa, cm_or_None)``."""
    name = setup.cfg.filter
    if name == "enkf":
        H = setup.hmap.matrix()
        K = kalman_gain_linear(H, ensemble_cov(Qf), setup.noise.cov)
        return enkf_analysis(Qf, Yf, y_obs, K), None
    if name == "genkf":
        return genkf_analysis(Qf, Yf, y_obs), None
    cm = _fit_ml(setup, Qf, Yf, k)
    return mlencmf_analysis(Qf, Yf, y_obs, cm), cm


def run_filter_step(setup: Setup, E, y_obs, truth, k: int):
    """One forecast/analysis cycle ending at observation time ``t_k``."""
    cfg = setup.cfg
    Qf = propagate(setup.model, E, cfg.dt_obs, cfg.dt)
    Yf = forecast_observations(Qf, setup.hmap, setup.noise, setup.rng.stream("forecast-noise", k))
    t0 = time.perf_counter()
    Qa, cm = analysis(setup, Qf, Yf, y_obs, k)
    ms = 1e3 * (time.perf_counter() - t0)
    rec = AssimilationRecord(
        step=k, t=k * cfg.dt_obs, truth=np.asarray(truth), obs=np.asarray(y_obs),
        mean=ensemble_mean(Qa), rmse=rmse_step(ensemble_mean(Qa), truth),
        spread=spread_step(Qa), covered=coverage_step(Qa, truth),
        n_components=Qa.shape[1], analysis_ms=ms,
    )
    if cm is not None:
        rec.a, rec.m_ann, rec.m_lin, rec.fallback = cm.a, cm.m_ann, cm.m_lin, cm.fallback
    return Qa, rec


class _Writer:
    """Streams records to ``records.csv``/``timings.csv`` so an aborted run keeps its rows."""

    def __init__(self, out_dir: Optional[str]):
        self.dir = Path(out_dir) if out_dir else None
        if self.dir is None:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        self._rec = open(self.dir / "records.csv", "w", newline="")
        self._tim = open(self.dir / "timings.csv", "w", newline="")
        self.rec = csv.writer(self._rec, lineterminator="\r\n")
        self.tim = csv.writer(self._tim, lineterminator="\r\n")
        self.rec.writerow(RECORD_COLUMNS)
        self.tim.writerow(("step", "analysis_ms"))

    def add(self, r: AssimilationRecord):
        if self.dir is None:
            return
        self.rec.writerow([fmt(v) for v in r.row()])
        self.tim.writerow([r.step, f"{r.analysis_ms:.3f}"])
        self._rec.flush()
        self._tim.flush()

    def close(self, summary: dict):
        if self.dir is None:
            return
        self._rec.close()
        self._tim.close()
        with open(self.dir / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class RunResult:
    metrics: RunMetrics
    records: list
    summary: dict


def run_experiment(cfg: ExperimentConfig, setup: Optional[Setup] = None) -> RunResult:
    setup = Setup.from_config(cfg) if setup is None else setup
    writer = _Writer(cfg.out_dir)
    records: list[AssimilationRecord] = []
    summary = {"config": cfg.to_dict(), "status": "running"}
    try:
        _, truth, obs = synthesize_truth_and_obs(setup)
        E = init_ensemble(setup)
        for k in range(1, cfg.steps + 1):
            E, rec = run_filter_step(setup, E, obs[k - 1], truth[k - 1], k)
            records.append(rec)
            writer.add(rec)
    except Exception as exc:
        summary.update(status="aborted", error=f"{type(exc).__name__}: {exc}",
                       completed_steps=len(records))
        writer.close(summary)
        raise
    burn = cfg.steps // 10 if cfg.burn_in else 0
    metrics = RunMetrics.from_series([r.rmse for r in records], [r.spread for r in records],
                                     [r.covered for r in records], setup.model.dim, burn_in=burn)
    summary.update(
        status="ok",
        metrics=metrics.to_dict(),
        burn_in_steps=burn,
        n_steps=len(records),
        a_active_steps=int(sum(r.a for r in records)),
        fallbacks=int(sum(r.fallback for r in records)),
    )
    writer.close(summary)
    return RunResult(metrics, records, summary)


SWEEP_AXES = {"dt_obs": "dt_obs", "n_ens": "n_ens", "m_aug": "train.M"}


def sweep(template: ExperimentConfig, axis: str, values, filters=None, out_dir=None) -> list[dict]:
    """Run every (filter, axis value) point; point ``j`` uses seed ``template.seed + j``.

    All filters at one axis value share a seed, hence the same truth and
    observations.  A failing point is reported and the sweep continues.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}")
    filters = [template.filter] if filters is None else list(filters)
    policy = RngPolicy(template.seed)
    rows = []
    for j, value in enumerate(values):
        for name in filters:
            point_dir = None
            if out_dir is not None:
                point_dir = str(Path(out_dir) / f"{name}_{axis}_{value}")
            row = {"filter": name, "axis": axis, "value": value, "seed": policy.child_seed(j)}
            try:
                cfg = template.replace(**{SWEEP_AXES[axis]: value, "filter": name,
                                          "seed": policy.child_seed(j), "out_dir": point_dir})
                res = run_experiment(cfg)
                row.update(status="ok", **res.metrics.to_dict(),
                           a_active_steps=res.summary["a_active_steps"])
            except Exception as exc:  # keep long sweeps alive
                log.error("sweep point %s=%s (%s) failed: %s", axis, value, name, exc)
                row.update(status=f"error: {type(exc).__name__}: {exc}")
            rows.append(row)
    if out_dir is not None:
        write_table(Path(out_dir) / "sweep.csv", rows)
    return rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
        return str(v)
    return fmt(v)


def write_table(path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols: list[str] = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in cols])

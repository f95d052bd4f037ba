"""Scenarios, Monte-Carlo tracking runs and report output.

A scenario JSON file looks like::

    {
      "radar": {RadarConfig fields},
      "trajectory": {"start": [x, y], "heading_deg": h, "speed": v,
                     "segments": [{"duration": s, "speed": v, "turn_rate_deg": w}, ...]},
      "n_steps": 400,                       # optional, default: total duration / T_t
      "path_gain": "fast_fading",           # or [re, im] for a constant gain
      "scatterers": [{"beta": [re, im], "range": r, "range_rate": rr, "theta_deg": t}],
      "stations": [{"position": [x, y], "boresight_deg": 0}],
      "filter": {FilterSettings fields},
      "fusion": {FusionSettings fields},
      "init": {"scale": 1.0, "vel_half_width": 0.5},
      "qam_order": 64,
      "seed": 0
    }

Every random draw is keyed on ``(seed, trial, station, step, purpose)`` so a
run is reproducible regardless of trial order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import filters as flt
from .channel import sample_path_gain, simulate_rx_cw, simulate_rx_time
from .core import C, RadarConfig, Scatterer, Scheme, Station, TargetTruth, derive, states_to_polar
from .fusion import FusionProblem, FusionSettings, atom_strata, fuse, stratified_fuse
from .waveform import assemble_pulse, fft_full_pri, gen_constellation

METHODS = tuple(flt.STEP_FUNCTIONS)

# purpose tags for seed streams
_WAVEFORM, _NOISE, _FILTER, _INIT, _GAIN, _FUSE = range(6)


def stream_seed(*key: int) -> int:
    """A 32-bit seed derived from an integer key tuple."""
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


@dataclass(frozen=True)
class Segment:
    duration: float
    speed: float
    turn_rate: float  # rad/s, positive turns counter-clockwise


def synthesize_trajectory(start, heading: float, segments: Sequence[Segment], T_t: float,
                          n_steps: int | None = None):
    """Sample a piecewise constant-turn-rate path every ``T_t`` seconds.

    Returns ``(positions, velocities)`` of shape ``(n_steps + 1, 2)``; the
    first row is the start state.  The last segment is extended if
    ``n_steps`` runs past the segment total.
    """
    if not segments:
        raise ValueError("trajectory needs at least one segment")
    total = sum(s.duration for s in segments)
    if n_steps is None:
        n_steps = int(round(total / T_t))
    ends = np.cumsum([s.duration for s in segments])
    pos = np.empty((n_steps + 1, 2))
    vel = np.empty((n_steps + 1, 2))
    p = np.asarray(start, dtype=float).copy()
    h = float(heading)
    for k in range(n_steps + 1):
        seg = segments[min(int(np.searchsorted(ends, k * T_t, side="right")), len(segments) - 1)]
        pos[k] = p
        vel[k] = seg.speed * np.array([np.cos(h), np.sin(h)])
        w = seg.turn_rate
        if abs(w) < 1e-12:
            p = p + seg.speed * T_t * np.array([np.cos(h), np.sin(h)])
        else:
            r = seg.speed / w
            p = p + r * np.array([np.sin(h + w * T_t) - np.sin(h), np.cos(h) - np.cos(h + w * T_t)])
        h += w * T_t
    return pos, vel


@dataclass
class Scenario:
    cfg: RadarConfig
    positions: np.ndarray  # (K + 1, 2)
    velocities: np.ndarray
    gains: np.ndarray  # (K + 1,) complex
    scatterers: list[Scatterer] = field(default_factory=list)
    stations: list[Station] = field(default_factory=lambda: [Station()])
    settings: flt.FilterSettings = field(default_factory=flt.FilterSettings)
    fusion: FusionSettings = field(default_factory=FusionSettings)
    init_scale: float = 1.0
    vel_half_width: float = 0.5
    qam_order: int = 64
    seed: int = 0

    def __post_init__(self):
        lim = derive(self.cfg)
        for z, st in enumerate(self.stations):
            tau, _, theta = states_to_polar(self.positions, self.velocities, self.cfg.wavelength, st)
            if tau.min() < lim.tau_min_d or tau.max() > lim.tau_max_d:
                raise ValueError(
                    f"station {z}: target range leaves [{lim.R_min_d:.1f}, {lim.R_max_d:.1f}] m"
                )
            if np.abs(theta).max() >= np.pi / 2:
                raise ValueError(f"station {z}: target leaves the array's forward sector")

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0] - 1

    def truth(self, k: int) -> TargetTruth:
        return TargetTruth(self.positions[k], self.velocities[k], self.gains[k])

    def initial_state(self) -> np.ndarray:
        return np.concatenate([self.positions[0], self.velocities[0]])

    def snapshot(self, k: int, trial: int, z: int = 0) -> flt.Snapshot:
        """Received data of station ``z`` at step ``k``, in the domain the filters consume."""
        cfg, st = self.cfg, self.stations[z]
        c = gen_constellation(cfg, self.qam_order, stream_seed(self.seed, trial, z, k, _WAVEFORM))
        noise_seed = stream_seed(self.seed, trial, z, k, _NOISE)
        truth = self.truth(k)
        if cfg.scheme is Scheme.CW:
            y = simulate_rx_cw(c, truth, self.scatterers, cfg, noise_seed, st)
            return flt.Snapshot(y, c, "cw", st)
        s = assemble_pulse(c, cfg)
        y = simulate_rx_time(s, truth, self.scatterers, cfg, noise_seed, st)
        return flt.Snapshot(np.fft.fft(y, axis=1), fft_full_pri(s, cfg), "freq", st)

    def replace(self, **changes) -> "Scenario":
        from dataclasses import replace

        return replace(self, **changes)


def _scatterers(items, cfg: RadarConfig) -> list[Scatterer]:
    out = []
    for it in items:
        beta = complex(*it["beta"]) if isinstance(it["beta"], (list, tuple)) else complex(it["beta"])
        out.append(Scatterer(
            beta=beta,
            tau=2.0 * it["range"] / C,
            nu=-2.0 * it.get("range_rate", 0.0) / cfg.wavelength,
            theta=math.radians(it["theta_deg"]),
        ))
    return out


def build_scenario(spec, **overrides) -> Scenario:
    """Scenario from a JSON file path or an already-parsed dict.

    ``overrides`` may replace ``radar`` fields (``radar={...}``),
    ``filter`` fields (``filter={...}``), ``n_steps``, ``seed`` and so on.
    """
    if not isinstance(spec, dict):
        spec = json.loads(Path(spec).read_text())
    spec = {**spec}
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(spec.get(key), dict):
            spec[key] = {**spec[key], **val}
        else:
            spec[key] = val
    cfg = RadarConfig.from_dict(spec["radar"])
    tr = spec["trajectory"]
    segments = [Segment(s["duration"], s["speed"], math.radians(s.get("turn_rate_deg", 0.0)))
                for s in tr["segments"]]
    pos, vel = synthesize_trajectory(tr["start"], math.radians(tr.get("heading_deg", 0.0)),
                                     segments, cfg.T_t, spec.get("n_steps"))
    seed = int(spec.get("seed", 0))
    gain_spec = spec.get("path_gain", "fast_fading")
    if gain_spec == "fast_fading":
        gains = np.array([sample_path_gain(stream_seed(seed, _GAIN), k) for k in range(len(pos))])
    else:
        gains = np.full(len(pos), complex(*gain_spec))
    stations = [Station(np.asarray(s["position"], float), math.radians(s.get("boresight_deg", 0.0)))
                for s in spec.get("stations", [{"position": [0.0, 0.0]}])]
    init = spec.get("init", {})
    return Scenario(
        cfg=cfg,
        positions=pos,
        velocities=vel,
        gains=gains,
        scatterers=_scatterers(spec.get("scatterers", []), cfg),
        stations=stations,
        settings=flt.FilterSettings(**spec.get("filter", {})),
        fusion=FusionSettings(**spec.get("fusion", {})),
        init_scale=float(init.get("scale", 1.0)),
        vel_half_width=float(init.get("vel_half_width", 0.5)),
        qam_order=int(spec.get("qam_order", 64)),
        seed=seed,
    )


# -- runs -------------------------------------------------------------------


@dataclass
class RunReport:
    method: str
    truth: np.ndarray  # (K, 2), steps 1..K
    estimates: np.ndarray  # (trials, K, 2)
    step_seconds: np.ndarray  # (trials, K)
    degenerate_steps: int = 0
    label: str = ""

    @property
    def sq_err(self) -> np.ndarray:
        return np.sum((self.estimates - self.truth[None]) ** 2, axis=-1)

    @property
    def mse(self) -> float:
        return float(self.sq_err.mean()) if self.sq_err.size else float("nan")

    @property
    def mse_per_trial(self) -> np.ndarray:
        return self.sq_err.mean(axis=1)

    @property
    def ms_per_step(self) -> float:
        return 1e3 * float(self.step_seconds.mean()) if self.step_seconds.size else float("nan")

    @property
    def trials(self) -> int:
        return self.estimates.shape[0]


def initial_cloud(scenario: Scenario, trial: int, method: str, station: int = 0) -> flt.ParticleCloud:
    """Uniform box around the true initial state sized by the tracking gate."""
    s = scenario.settings
    rng = np.random.default_rng(stream_seed(scenario.seed, trial, station, _INIT))
    center = scenario.initial_state()
    half = flt.gate_half_widths(center[:2], scenario.cfg, scenario.vel_half_width,
                                scenario.stations[station])
    half[:2] *= scenario.init_scale
    cloud = flt.init_cloud(center, half, s.n_par, rng)
    if method in ("pf_sltr_a", "rbpf_sltr_a"):
        # both baselines start from the true initial gain
        cloud = cloud.replace(beta=np.full(s.n_par, scenario.gains[0], dtype=complex))
        if method == "rbpf_sltr_a":
            cloud = cloud.replace(beta_var=np.full(s.n_par, 0.01))
    return cloud


def _guarded_step(step_fn, cloud, snap, cfg, settings, rng):
    """Run one filter step; a degenerate update keeps the prior with uniform weights."""
    try:
        return step_fn(cloud, snap, cfg, settings, rng), False
    except (flt.DegenerateUpdateError, FloatingPointError):
        prior = flt.cv_propagate(cloud, cfg.T_t, settings, rng)
        return prior.replace(weights=np.full(prior.n, 1.0 / prior.n)), True


def run_tracking(scenario: Scenario, method: str = "pf_sltr", trials: int = 1,
                 first_trial: int = 0) -> RunReport:
    """Monte-Carlo tracking with one station; wall time covers the filter step only."""
    if method not in flt.STEP_FUNCTIONS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    step_fn = flt.STEP_FUNCTIONS[method]
    cfg, K = scenario.cfg, scenario.n_steps
    est = np.empty((trials, K, 2))
    secs = np.empty((trials, K))
    bad = 0
    for t in range(trials):
        trial = first_trial + t
        rng = np.random.default_rng(stream_seed(scenario.seed, trial, 0, _FILTER))
        cloud = initial_cloud(scenario, trial, method)
        for k in range(1, K + 1):
            snap = scenario.snapshot(k, trial)
            t0 = time.perf_counter()
            cloud, degenerate = _guarded_step(step_fn, cloud, snap, cfg, scenario.settings, rng)
            secs[t, k - 1] = time.perf_counter() - t0
            bad += degenerate
            est[t, k - 1] = cloud.mean_position()
    return RunReport(method, scenario.positions[1:], est, secs, bad)


def fuse_clouds(clouds: Sequence[flt.ParticleCloud], settings: FusionSettings, n_out: int,
                seed: int) -> flt.ParticleCloud:
    if len(clouds) == 1:
        return clouds[0]
    if settings.method == "stratified":
        return stratified_fuse(clouds, n_out, seed)
    problem = FusionProblem.from_clouds(clouds, settings)
    if settings.proposal == "uniform":
        if settings.dims is not None:
            raise ValueError("uniform proposals need every state coordinate fused")
        fused, _ = fuse(problem, n_out, seed)
        return fused
    if settings.proposal == "atoms":
        states = atom_strata(clouds, n_out, seed)
    else:
        states = stratified_fuse(clouds, n_out, seed).states
    dims = list(settings.dims) if settings.dims is not None else slice(None)
    weighted, _ = fuse(problem, n_out, seed, points=states[:, dims])
    return flt.ParticleCloud(states=states, weights=weighted.weights, k=clouds[0].k)


def run_multipoint(scenario: Scenario, Z: int, trials: int = 1, first_trial: int = 0,
                   fusion: FusionSettings | None = None) -> RunReport:
    """PF-SLTR at ``Z`` stations with centralised fusion after every step.

    Each station filters its own snapshot starting from the common fused
    prior; the fused cloud is the estimate and the next prior everywhere.
    With ``Z = 1`` no fusion happens and the run equals :func:`run_tracking`.
    """
    if not 1 <= Z <= len(scenario.stations):
        raise ValueError(f"scenario defines {len(scenario.stations)} stations, asked for {Z}")
    fusion = fusion or scenario.fusion
    cfg, K, s = scenario.cfg, scenario.n_steps, scenario.settings
    est = np.empty((trials, K, 2))
    secs = np.empty((trials, K))
    bad = 0
    for t in range(trials):
        trial = first_trial + t
        # station 0 streams match run_tracking so Z=1 reproduces it exactly
        rngs = [np.random.default_rng(stream_seed(scenario.seed, trial, z, _FILTER)) for z in range(Z)]
        cloud = initial_cloud(scenario, trial, "pf_sltr")
        for k in range(1, K + 1):
            snaps = [scenario.snapshot(k, trial, z) for z in range(Z)]
            t0 = time.perf_counter()
            posts = []
            for z in range(Z):
                post, degenerate = _guarded_step(flt.pf_sltr_step, cloud, snaps[z], cfg, s, rngs[z])
                posts.append(post)
                bad += degenerate
            cloud = fuse_clouds(posts, fusion, s.n_par, stream_seed(scenario.seed, trial, k, _FUSE))
            secs[t, k - 1] = time.perf_counter() - t0
            est[t, k - 1] = cloud.mean_position()
    return RunReport("pf_sltr", scenario.positions[1:], est, secs, bad, label=f"Z={Z}")


# -- output -----------------------------------------------------------------

CSV_COLUMNS = ("step", "k", "sq_err", "est_x", "est_y", "true_x", "true_y")


def report_csv(report: RunReport, trial: int = 0) -> str:
    """Per-step rows of one trial; ``step`` counts rows, ``k`` is the tracking time index."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    if report.estimates.size:
        err = report.sq_err[trial]
        for i in range(report.truth.shape[0]):
            e, tr = report.estimates[trial, i], report.truth[i]
            w.writerow([i, i + 1, repr(float(err[i])), repr(float(e[0])), repr(float(e[1])),
                        repr(float(tr[0])), repr(float(tr[1]))])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [{k: (int(v) if k in ("step", "k") else float(v)) for k, v in r.items()} for r in rows]


def summary_table(reports: Sequence[RunReport]) -> str:
    """Plain-text table of MSE (m^2) and mean step time (ms) per run."""
    head = f"{'run':<16} {'MSE (m^2)':>12} {'Time (ms)':>10} {'trials':>6} {'degenerate':>10}"
    lines = [head, "-" * len(head)]
    for r in reports:
        name = r.label or r.method
        lines.append(f"{name:<16} {r.mse:>12.4f} {r.ms_per_step:>10.2f} {r.trials:>6d} "
                     f"{r.degenerate_steps:>10d}")
    return "\n".join(lines)


def emit_report(report: RunReport, out_dir: str | Path | None = None, fmt: str = "csv") -> str:
    """Write one CSV per trial under ``out_dir`` (``fmt="csv"``) or return the summary table."""
    if fmt == "table":
        return summary_table([report])
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    if out_dir is None:
        return report_csv(report, 0)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = (report.label or report.method).replace("=", "").replace(" ", "_")
    for t in range(max(report.trials, 1)):
        (out / f"{name}_trial{t}.csv").write_text(report_csv(report, t) if report.trials else
                                                 ",".join(CSV_COLUMNS) + "\n")
    (out / f"{name}_summary.txt").write_text(summary_table([report]) + "\n")
    return str(out)

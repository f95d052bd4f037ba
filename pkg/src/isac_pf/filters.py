"""Particle filters for signal-level tracking.

The state of every particle is ``[x, y, vx, vy]``.  Four filters share the
same constant-velocity propagation and resampling machinery:

* :func:`pf_sltr_step` -- Gibbs-posterior filter driven by the matched-filter
  cost, no path-gain state.
* :func:`pf_iltr_step` -- grid-search measurement extraction followed by a
  bootstrap filter with Gaussian measurement noise.
* :func:`pf_sltr_a_step` -- path gain augmented into the state, exact
  complex-Gaussian likelihood.
* :func:`rbpf_sltr_a_step` -- path gain marginalised with per-particle scalar
  Kalman filters.

The measurement passed to a step is a :class:`Snapshot`: the received cube
in the domain the cost works in, plus the matching transmit reference.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import costs
from .core import C, ORIGIN, RadarConfig, Station, states_to_polar, steering


class DegenerateUpdateError(RuntimeError):
    """Every posterior weight vanished."""


@dataclass
class ParticleCloud:
    """Weighted particles; optional per-particle path-gain terms for the baselines."""

    states: np.ndarray
    weights: np.ndarray
    k: int = 0
    beta: np.ndarray | None = None
    beta_var: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def n(self) -> int:
        return self.weights.size

    def replace(self, **changes) -> "ParticleCloud":
        return dataclasses.replace(self, **changes)

    def take(self, idx: np.ndarray) -> "ParticleCloud":
        n = idx.size
        return self.replace(
            states=self.states[idx],
            weights=np.full(n, 1.0 / n),
            beta=None if self.beta is None else self.beta[idx],
            beta_var=None if self.beta_var is None else self.beta_var[idx],
        )

    def mean_position(self) -> np.ndarray:
        return self.weights @ self.states[:, :2]


@dataclass
class FilterSettings:
    n_par: int = 200
    n_thres: float | None = None  # defaults to n_par / 2
    xi: float = 1.0
    q_a: float = 1.0  # white-acceleration intensity, m^2/s^3
    seed: int = 0
    beta_walk_std: float = 0.1  # PF-SLTR-A random walk, per component
    q_beta: float = 0.02  # RBPF random-walk variance of the complex gain
    n_tg: int = 30  # PF-ILTR grid points per axis
    use_doppler: bool | None = None  # None: only when N_p > 1

    def __post_init__(self):
        if self.n_thres is None:
            self.n_thres = self.n_par / 2
        if self.xi < 0:
            raise ValueError("xi must be non-negative")

    def doppler_enabled(self, cfg: RadarConfig) -> bool:
        return cfg.N_p > 1 if self.use_doppler is None else self.use_doppler


@dataclass
class Snapshot:
    """Received data ``y`` and transmit reference ``tx`` for one tracking step.

    ``domain`` is ``"cw"`` (``y``: ``(N_p, M, N_c, N_r)``, ``tx``: the
    constellation cube), ``"freq"`` (full-PRI spectra) or ``"time"``.
    """

    y: np.ndarray
    tx: np.ndarray
    domain: str
    station: Station = field(default_factory=lambda: ORIGIN)

    def matched_filter(self, phis: np.ndarray, cfg: RadarConfig) -> np.ndarray:
        if self.domain == "cw":
            return costs.mf_cw(self.y, self.tx, phis, cfg)
        if self.domain == "freq":
            return costs.mf_freq(self.y, self.tx, phis, cfg)
        if self.domain == "time":
            return costs.mf_time(self.y, self.tx, phis, cfg)
        raise ValueError(f"unknown domain {self.domain!r}")

    def gibbs_cost(self, phis: np.ndarray, cfg: RadarConfig) -> np.ndarray:
        power = np.abs(self.matched_filter(phis, cfg)) ** 2
        with np.errstate(divide="ignore"):
            return -np.log(power)

    def bin_width(self, cfg: RadarConfig) -> float:
        return cfg.delta_f if self.domain == "cw" else cfg.B / self.y.shape[1]

    def noise_variance(self, cfg: RadarConfig) -> float:
        # the full-PRI DFT is unnormalised, so bin noise grows by N_cr
        return cfg.sigma2_cn * (self.y.shape[1] if self.domain == "freq" else 1)

    def model_energy(self, phis: np.ndarray, cfg: RadarConfig) -> np.ndarray:
        """``||g(phi)||^2`` of the unit-gain signal model per hypothesis."""
        tx = self.tx.reshape(-1, self.tx.shape[-1])
        a = steering(phis[:, 2], cfg.N_t)
        # time domain: exact while the delayed pulse stays inside the PRI
        return cfg.N_r * np.sum(np.abs(tx @ a.conj().T) ** 2, axis=0)


# -- generic particle machinery ---------------------------------------------


def cv_noise_cov(T: float, q_a: float) -> np.ndarray:
    """Per-axis covariance of (position, velocity) under white acceleration."""
    return q_a * np.array([[T**3 / 3.0, T**2 / 2.0], [T**2 / 2.0, T]])


def cv_propagate(cloud: ParticleCloud, T_t: float, settings: FilterSettings,
                 rng: np.random.Generator) -> ParticleCloud:
    """Constant-velocity prediction; weights carried over untouched."""
    x = cloud.states.copy()
    x[:, 0:2] += T_t * x[:, 2:4]
    if settings.q_a > 0:
        chol = np.linalg.cholesky(cv_noise_cov(T_t, settings.q_a))
        w = rng.standard_normal((cloud.n, 2, 2)) @ chol.T  # (N, axis, [pos, vel])
        x[:, 0:2] += w[:, :, 0]
        x[:, 2:4] += w[:, :, 1]
    return cloud.replace(states=x, k=cloud.k + 1)


def log_normalize(log_w: np.ndarray) -> np.ndarray:
    finite = np.isfinite(log_w)
    if not finite.any():
        raise DegenerateUpdateError("all particle weights vanished")
    shifted = np.where(finite, log_w - log_w[finite].max(), -np.inf)
    w = np.exp(shifted)
    return w / w.sum()


def gibbs_update(cloud: ParticleCloud, costs_: np.ndarray, xi: float) -> ParticleCloud:
    """``u_i ∝ eta_i * exp(-xi * h_i)``; infinite costs get zero weight."""
    if xi == 0:
        return cloud.replace(weights=cloud.weights.copy())
    costs_ = np.asarray(costs_, dtype=float)
    with np.errstate(divide="ignore"):
        log_w = np.log(cloud.weights) - xi * costs_
    log_w[np.isnan(log_w)] = -np.inf
    return cloud.replace(weights=log_normalize(log_w))


def ess(weights) -> float:
    w = weights.weights if isinstance(weights, ParticleCloud) else np.asarray(weights)
    return 1.0 / np.sum(w**2)


def systematic_indices(weights: np.ndarray, offset: float, n_out: int | None = None) -> np.ndarray:
    """Indices drawn at ``(offset + j) / n`` positions of the weight CDF."""
    n = weights.size if n_out is None else n_out
    positions = (offset + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right")


def systematic_resample(cloud: ParticleCloud, rng: np.random.Generator | int) -> ParticleCloud:
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return cloud.take(systematic_indices(cloud.weights, rng.uniform()))


def maybe_resample(cloud: ParticleCloud, settings: FilterSettings, rng) -> ParticleCloud:
    if ess(cloud) < settings.n_thres:
        return systematic_resample(cloud, rng)
    return cloud


def entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def entropy_power(alpha, xi: float) -> np.ndarray:
    """``alpha**xi`` renormalised; ``0**0`` is taken as 1."""
    alpha = np.asarray(alpha, dtype=float)
    if xi == 0:
        powered = np.ones_like(alpha)
    else:
        powered = np.where(alpha > 0, alpha**xi, 0.0)
    return powered / powered.sum()


def particle_polar(states: np.ndarray, cfg: RadarConfig, station: Station = ORIGIN) -> np.ndarray:
    """``(N, 3)`` array of ``(tau, nu, theta)`` per particle."""
    tau, nu, theta = states_to_polar(states[:, 0:2], states[:, 2:4], cfg.wavelength, station)
    return np.column_stack([tau, nu, theta])


def init_cloud(center: np.ndarray, half_widths: np.ndarray, n: int,
               rng: np.random.Generator) -> ParticleCloud:
    """Uniform box of ``n`` particles around ``center`` (state-space half widths)."""
    states = center + rng.uniform(-1.0, 1.0, size=(n, center.size)) * half_widths
    return ParticleCloud(states=states, weights=np.full(n, 1.0 / n))


def gate_half_widths(position: np.ndarray, cfg: RadarConfig, vel_half_width: float,
                     station: Station = ORIGIN) -> np.ndarray:
    """Cartesian half widths of the tracking gate around ``position``.

    Range spans one resolution cell, bearing spans ``2/N_tr`` in sine space.
    """
    rel = position - station.position
    r = np.hypot(*rel)
    bearing = np.arctan2(rel[1], rel[0])
    theta = bearing - station.boresight
    dr = C / (2.0 * cfg.B)
    dtheta = (2.0 / cfg.N_tr) / max(np.cos(theta), 1e-3)
    radial = np.array([np.cos(bearing), np.sin(bearing)])
    tangent = np.array([-np.sin(bearing), np.cos(bearing)])
    extent = np.abs(radial) * dr + np.abs(tangent) * r * dtheta
    return np.concatenate([extent, [vel_half_width, vel_half_width]])


# -- PF-SLTR ------------------------------------------------------------------


def _mask_doppler(phis: np.ndarray, cfg: RadarConfig, settings: FilterSettings) -> np.ndarray:
    if not settings.doppler_enabled(cfg):
        phis = phis.copy()
        phis[:, 1] = 0.0
    return phis


def pf_sltr_step(cloud: ParticleCloud, snap: Snapshot, cfg: RadarConfig, settings: FilterSettings,
                 rng: np.random.Generator, propagate: bool = True) -> ParticleCloud:
    """One iteration of the Gibbs-posterior particle filter.

    Propagate, map particles to ``(tau, nu, theta)``, weight by
    ``exp(-xi * h)`` with ``h = -ln|mf|^2``, then resample when the effective
    sample size drops below ``n_thres``.
    """
    prior = cv_propagate(cloud, cfg.T_t, settings, rng) if propagate else cloud
    phis = _mask_doppler(particle_polar(prior.states, cfg, snap.station), cfg, settings)
    post = gibbs_update(prior, snap.gibbs_cost(phis, cfg), settings.xi)
    return maybe_resample(post, settings, rng)


# -- PF-ILTR ------------------------------------------------------------------


def gate_grid(gate: costs.TrackingGate, n_tg: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Axes of an ``n_tg``-per-axis grid; bearings are uniform in sine space."""
    taus = np.linspace(*gate.tau, n_tg)
    nus = np.linspace(*gate.nu, n_tg)
    sins = np.linspace(np.sin(gate.theta[0]), np.sin(gate.theta[1]), n_tg)
    return taus, nus, np.arcsin(sins)


def extract_measurement(snap: Snapshot, center: costs.Hypothesis, cfg: RadarConfig, n_tg: int,
                        use_doppler: bool = True):
    """Grid-search peak of ``|mf|^2`` over the tracking gate around ``center``.

    Returns the peak hypothesis and the gate used.  The grid has ``n_tg``
    nodes per axis; without Doppler processing the Doppler axis collapses to
    the single value ``nu = 0``.
    """
    if n_tg < 2:
        raise ValueError("n_tg must be >= 2")
    gate = tracking_gate_clipped(center, cfg)
    taus, nus, thetas = gate_grid(gate, n_tg)
    if not use_doppler:
        nus = np.zeros(1)
    if snap.domain in ("cw", "freq"):
        power = np.abs(costs.mf_grid(snap.y, snap.tx, taus, nus, thetas, cfg, snap.bin_width(cfg))) ** 2
        a, b, c = np.unravel_index(int(np.argmax(power)), power.shape)
        best = (taus[a], nus[b], thetas[c])
    else:
        grid = np.stack(np.meshgrid(taus, nus, thetas, indexing="ij"), axis=-1).reshape(-1, 3)
        power = np.abs(snap.matched_filter(grid, cfg)) ** 2
        best = grid[int(np.argmax(power))]
    return costs.Hypothesis(*map(float, best)), gate


def tracking_gate_clipped(center: costs.Hypothesis, cfg: RadarConfig) -> costs.TrackingGate:
    gate = costs.tracking_gate(center, cfg)
    tau_lo = max(gate.tau[0], 0.0)
    tau_hi = max(gate.tau[1], tau_lo + 1e-15)
    nyq = 0.5 / cfg.T_r
    nu_lo = max(gate.nu[0], -nyq)
    nu_hi = min(gate.nu[1], nyq)
    return costs.TrackingGate(tau=(tau_lo, tau_hi), nu=(nu_lo, nu_hi), theta=gate.theta)


def pf_iltr_step(cloud: ParticleCloud, snap: Snapshot, cfg: RadarConfig, settings: FilterSettings,
                 rng: np.random.Generator) -> ParticleCloud:
    """Information-level baseline: grid-search measurement, then a bootstrap update.

    Measurement noise std devs are the range cell ``1/B``, the Doppler cell
    ``1/T_i`` and the bearing grid spacing.
    """
    prior = cv_propagate(cloud, cfg.T_t, settings, rng)
    mean_state = prior.weights @ prior.states
    center = costs.Hypothesis(*particle_polar(mean_state[None, :], cfg, snap.station)[0])
    meas, gate = extract_measurement(snap, center, cfg, settings.n_tg, settings.doppler_enabled(cfg))
    phis = particle_polar(prior.states, cfg, snap.station)
    sigma_tau = 1.0 / cfg.B
    sigma_theta = (gate.theta[1] - gate.theta[0]) / settings.n_tg
    d_theta = (phis[:, 2] - meas.theta + np.pi) % (2 * np.pi) - np.pi
    log_lik = -0.5 * ((phis[:, 0] - meas.tau) / sigma_tau) ** 2 - 0.5 * (d_theta / sigma_theta) ** 2
    if settings.doppler_enabled(cfg):
        log_lik += -0.5 * ((phis[:, 1] - meas.nu) * cfg.T_i) ** 2
    post = gibbs_update(prior, -log_lik, 1.0)
    return maybe_resample(post, settings, rng)


# -- path-gain-augmented baselines ---------------------------------------------


def _gain_statistics(snap: Snapshot, phis: np.ndarray, cfg: RadarConfig):
    """Matched filter ``rho = y^H g``, model energy ``||g||^2`` and ``||y||^2``."""
    rho = snap.matched_filter(phis, cfg)
    energy = snap.model_energy(phis, cfg)
    y2 = np.vdot(snap.y, snap.y).real
    return rho, energy, y2


def pf_sltr_a_step(cloud: ParticleCloud, snap: Snapshot, cfg: RadarConfig, settings: FilterSettings,
                   rng: np.random.Generator) -> ParticleCloud:
    """Augmented-state filter with the complex-Gaussian likelihood.

    ``log q = -||y - beta g(phi)||^2 / sigma^2`` with
    ``||y - beta g||^2 = ||y||^2 - 2 Re(beta rho) + |beta|^2 ||g||^2``.
    """
    if cloud.beta is None:
        raise ValueError("PF-SLTR-A needs per-particle path gains")
    prior = cv_propagate(cloud, cfg.T_t, settings, rng)
    walk = settings.beta_walk_std * (rng.standard_normal(prior.n) + 1j * rng.standard_normal(prior.n))
    beta = prior.beta + walk
    phis = _mask_doppler(particle_polar(prior.states, cfg, snap.station), cfg, settings)
    rho, energy, y2 = _gain_statistics(snap, phis, cfg)
    resid = y2 - 2.0 * np.real(beta * rho) + np.abs(beta) ** 2 * energy
    cost = resid / snap.noise_variance(cfg)
    post = gibbs_update(prior.replace(beta=beta), cost, 1.0)
    return maybe_resample(post, settings, rng)


def rbpf_sltr_a_step(cloud: ParticleCloud, snap: Snapshot, cfg: RadarConfig, settings: FilterSettings,
                     rng: np.random.Generator) -> ParticleCloud:
    """Rao-Blackwellised filter: scalar complex Kalman filter on the gain per particle.

    Model ``y = beta g(phi) + n`` with ``beta`` a random walk of variance
    ``q_beta``; the weight is the marginal likelihood under the predicted
    gain distribution.
    """
    if cloud.beta is None or cloud.beta_var is None:
        raise ValueError("RBPF-SLTR-A needs per-particle gain mean and variance")
    prior = cv_propagate(cloud, cfg.T_t, settings, rng)
    m = prior.beta
    P = prior.beta_var + settings.q_beta
    s2 = snap.noise_variance(cfg)
    phis = _mask_doppler(particle_polar(prior.states, cfg, snap.station), cfg, settings)
    rho, G, y2 = _gain_statistics(snap, phis, cfg)
    S = s2 + P * G  # innovation scale along g
    if np.any(~(S > 0)):
        raise FloatingPointError("non-positive innovation covariance")
    r2 = y2 - 2.0 * np.real(m * rho) + np.abs(m) ** 2 * G  # ||y - m g||^2
    g_r = np.conj(rho) - m * G  # g^H (y - m g)
    n_obs = snap.y.size
    log_lik = (
        -n_obs * np.log(np.pi * s2)
        - np.log1p(P * G / s2)
        - r2 / s2
        + (P / s2) * np.abs(g_r) ** 2 / S
    )
    m_post = m + P * g_r / S
    P_post = P * s2 / S
    post = gibbs_update(prior.replace(beta=m_post, beta_var=P_post), -log_lik, 1.0)
    return maybe_resample(post, settings, rng)


STEP_FUNCTIONS = {
    "pf_sltr": pf_sltr_step,
    "pf_iltr": pf_iltr_step,
    "pf_sltr_a": pf_sltr_a_step,
    "rbpf_sltr_a": rbpf_sltr_a_step,
}

"""Radar configuration, derived timing, array steering and target geometry.

All times are in seconds, frequencies in Hz, distances in metres.  The
station sits at the origin with its uniform linear array along the y axis,
so boresight is +x and bearings are measured counter-clockwise from it.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

C = 299_792_458.0


class ConfigError(ValueError):
    """Raised when a radar configuration violates its timing constraints."""


class Scheme(str, Enum):
    PULSED = "pulsed"
    CW = "cw"


def round_half_away(x: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    # 1e-9 guards against 51.2 being stored as 51.19999999
    return int(math.copysign(math.floor(abs(x) + 0.5 + 1e-9), x))


@dataclass(frozen=True)
class RadarConfig:
    """System and waveform constants of a MIMO-OFDM pulse-Doppler station.

    ``T_o`` defaults to ``N_c / B``; ``T_r`` defaults to the pulse duration,
    which is mandatory in CW mode.
    """

    f_c: float
    B: float
    P_t: float
    N_t: int
    N_r: int
    T_t: float
    N_p: int
    T_c: float
    M: int
    N_c: int
    scheme: Scheme = Scheme.CW
    snr_db: float = -10.0
    T_r: float | None = None
    T_o: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.T_o is None:
            object.__setattr__(self, "T_o", self.N_c / self.B)
        elif not math.isclose(self.T_o, self.N_c / self.B, rel_tol=1e-9):
            raise ConfigError(f"T_o={self.T_o} inconsistent with N_c/B={self.N_c / self.B}")
        if self.T_r is None:
            object.__setattr__(self, "T_r", self.T_p)
        for name in ("N_t", "N_r", "N_p", "M", "N_c"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.B <= 0 or self.f_c <= 0 or self.P_t <= 0:
            raise ConfigError("B, f_c and P_t must be positive")
        if self.L_cp >= self.N_c:
            raise ConfigError("cyclic prefix must be shorter than the OFDM symbol")
        tol = 1e-12 * self.T_t
        if self.T_p > self.T_r + tol:
            raise ConfigError(f"pulse duration {self.T_p} exceeds PRI {self.T_r}")
        if self.T_r > self.T_i + tol or self.T_i > self.T_t + tol:
            raise ConfigError("require T_r <= T_i <= T_t")
        if self.scheme is Scheme.CW and not math.isclose(self.T_r, self.T_p, rel_tol=1e-9):
            raise ConfigError("CW scheme requires T_r == T_p")
        if self.L_ss > self.L:
            raise ConfigError("pulse samples exceed the PRI")

    # -- derived timing ----------------------------------------------------
    @property
    def wavelength(self) -> float:
        return C / self.f_c

    @property
    def T_s(self) -> float:
        return 1.0 / self.B

    @property
    def T_p(self) -> float:
        return self.M * (self.T_c + self.T_o)

    @property
    def T_i(self) -> float:
        return self.N_p * self.T_r

    @property
    def f_r(self) -> float:
        return 1.0 / self.T_r

    @property
    def delta_f(self) -> float:
        return 1.0 / self.T_o

    @property
    def L_cp(self) -> int:
        return round_half_away(self.T_c / self.T_s)

    @property
    def L(self) -> int:
        if self.scheme is Scheme.CW:
            return self.L_ss
        return round_half_away(self.T_r / self.T_s)

    @property
    def L_ss(self) -> int:
        # sample-exact pulse length; equals round(T_p/T_s) when T_c/T_s is integral
        return self.M * (self.L_cp + self.N_c)

    @property
    def N_cr(self) -> int:
        return self.L if self.scheme is Scheme.PULSED else self.N_c

    @property
    def N_tr(self) -> int:
        return max(self.N_t, self.N_r)

    @property
    def sigma2_cn(self) -> float:
        return self.P_t * 10.0 ** (-self.snr_db / 10.0)

    # -- (de)serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scheme"] = self.scheme.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RadarConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown RadarConfig fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "RadarConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "RadarConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DerivedLimits:
    R_max_d: float
    R_min_d: float
    nu_min_ua: float
    nu_max_ua: float
    range_resolution: float
    doppler_resolution: float
    L: int
    L_ss: int
    N_cr: int

    @property
    def tau_max_d(self) -> float:
        return 2.0 * self.R_max_d / C

    @property
    def tau_min_d(self) -> float:
        return 2.0 * self.R_min_d / C


def derive(cfg: RadarConfig) -> DerivedLimits:
    """Detectable range/Doppler window and grid sizes implied by ``cfg``.

    Pulsed mode assumes time-division duplexing, so echoes arriving while
    the pulse is still on air are blind.  CW ranging is bounded by the
    cyclic prefix.
    """
    if cfg.scheme is Scheme.PULSED:
        tau_max = cfg.T_r - cfg.T_p
        tau_min = cfg.T_p
        if tau_max < tau_min:
            raise ConfigError("pulsed mode needs T_r >= 2 T_p for a non-empty range window")
    else:
        tau_max = cfg.T_c
        tau_min = 0.0
    return DerivedLimits(
        R_max_d=C * tau_max / 2.0,
        R_min_d=C * tau_min / 2.0,
        nu_min_ua=-cfg.f_r / 2.0,
        nu_max_ua=cfg.f_r / 2.0,
        range_resolution=C / (2.0 * cfg.B),
        doppler_resolution=1.0 / cfg.T_i,
        L=cfg.L,
        L_ss=cfg.L_ss,
        N_cr=cfg.N_cr,
    )


def steering(theta, n_elems: int) -> np.ndarray:
    """Half-wavelength ULA steering vector(s).

    ``theta`` may be a scalar (returns shape ``(n_elems,)``) or an array of
    shape ``(H,)`` (returns ``(H, n_elems)``).
    """
    if n_elems < 1:
        raise ValueError("n_elems must be >= 1")
    theta = np.asarray(theta, dtype=float)
    t = np.arange(n_elems)
    return np.exp(-1j * np.pi * np.multiply.outer(np.sin(theta), t))


@dataclass(frozen=True)
class TargetTruth:
    position: np.ndarray
    velocity: np.ndarray
    beta: complex = 1.0 + 0.0j

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))


@dataclass(frozen=True)
class Scatterer:
    beta: complex
    tau: float
    nu: float
    theta: float


@dataclass(frozen=True)
class Station:
    """A station pose: array centre and boresight direction (rad from +x)."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(2))
    boresight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


ORIGIN = Station()


def states_to_polar(pos, vel, wavelength: float, station: Station = ORIGIN):
    """Vectorised Cartesian -> (tau, nu, theta) for arrays of shape (..., 2).

    An approaching target has positive Doppler.
    """
    rel = np.asarray(pos, dtype=float) - station.position
    vel = np.asarray(vel, dtype=float)
    rng = np.hypot(rel[..., 0], rel[..., 1])
    range_rate = np.einsum("...i,...i->...", rel, vel) / rng
    tau = 2.0 * rng / C
    nu = -2.0 * range_rate / wavelength
    theta = np.arctan2(rel[..., 1], rel[..., 0]) - station.boresight
    theta = (theta + np.pi) % (2 * np.pi) - np.pi
    return tau, nu, theta


def cartesian_to_polar(truth: TargetTruth, cfg: RadarConfig, station: Station = ORIGIN):
    """Round-trip delay, Doppler and bearing of ``truth`` seen from ``station``."""
    if np.hypot(*(truth.position - station.position)) == 0.0:
        raise ValueError("target at the station position has no defined bearing")
    tau, nu, theta = states_to_polar(truth.position, truth.velocity, cfg.wavelength, station)
    return float(tau), float(nu), float(theta)


def polar_to_cartesian(tau, theta, station: Station = ORIGIN) -> np.ndarray:
    """Position from round-trip delay and bearing; inverse of the range/bearing map."""
    tau = np.asarray(tau, dtype=float)
    theta = np.asarray(theta, dtype=float) + station.boresight
    r = C * tau / 2.0
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1) + station.position

"""Narrowband MIMO radar channel: target + scatterer echoes plus receiver noise."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    ORIGIN,
    RadarConfig,
    Scatterer,
    Scheme,
    Station,
    TargetTruth,
    cartesian_to_polar,
    derive,
    round_half_away,
    steering,
)
from .waveform import block_rng


def complex_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with ``E|n|^2 = variance``."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _paths(truth: TargetTruth | None, scatterers: Sequence[Scatterer], cfg, station):
    out = []
    if truth is not None:
        tau, nu, theta = cartesian_to_polar(truth, cfg, station)
        out.append((complex(truth.beta), tau, nu, theta))
    out.extend((complex(sc.beta), sc.tau, sc.nu, sc.theta) for sc in scatterers)
    return out


def check_target_window(truth: TargetTruth, cfg: RadarConfig, station: Station = ORIGIN) -> None:
    tau, _, _ = cartesian_to_polar(truth, cfg, station)
    lim = derive(cfg)
    eps = 1e-12
    if not (lim.tau_min_d - eps <= tau <= lim.tau_max_d + eps):
        raise ValueError(
            f"target delay {tau:.4e}s outside detectable window "
            f"[{lim.tau_min_d:.4e}, {lim.tau_max_d:.4e}]"
        )


def simulate_rx_time(
    s: np.ndarray,
    truth: TargetTruth | None,
    scatterers: Sequence[Scatterer],
    cfg: RadarConfig,
    seed: int | None = 0,
    station: Station = ORIGIN,
) -> np.ndarray:
    """Fast-time snapshots ``y_p(l)`` of shape ``(N_p, L, N_r)``.

    Delays are quantised to ``round(tau / T_s)`` samples; samples shifted in
    from before the PRI start read as zero.  ``seed=None`` gives a
    noise-free cube.
    """
    if truth is not None:
        check_target_window(truth, cfg, station)
    n_p, n_l, _ = s.shape
    y = np.zeros((n_p, n_l, cfg.N_r), dtype=complex)
    pulse_idx = np.arange(n_p)
    for beta, tau, nu, theta in _paths(truth, scatterers, cfg, station):
        q = round_half_away(tau / cfg.T_s)
        if not 0 <= q < n_l:
            raise ValueError(f"path delay {tau:.4e}s outside the PRI")
        a = steering(theta, cfg.N_t)
        b = steering(theta, cfg.N_r)
        stream = s @ a.conj()  # a^H s_p(l), (N_p, L)
        shifted = np.zeros_like(stream)
        shifted[:, q:] = stream[:, : n_l - q]
        doppler = np.exp(2j * np.pi * nu * pulse_idx * cfg.T_r)
        y += beta * (shifted * doppler[:, None])[..., None] * b
    if seed is not None:
        for p in range(n_p):
            y[p] += complex_noise(block_rng(seed, p), (n_l, cfg.N_r), cfg.sigma2_cn)
    return y


def simulate_rx_cw(
    c: np.ndarray,
    truth: TargetTruth | None,
    scatterers: Sequence[Scatterer],
    cfg: RadarConfig,
    seed: int | None = 0,
    station: Station = ORIGIN,
) -> np.ndarray:
    """Per-symbol frequency-domain snapshots after CP removal, ``(N_p, M, N_c, N_r)``.

    The delay phase ramp uses the exact (unquantised) delay.  Every path must
    fall inside the cyclic prefix or circularity breaks.
    """
    if cfg.scheme is not Scheme.CW:
        raise ValueError("simulate_rx_cw requires the CW scheme")
    n_p, n_m, n_c, _ = c.shape
    ybar = np.zeros((n_p, n_m, n_c, cfg.N_r), dtype=complex)
    n = np.arange(n_c)
    p = np.arange(n_p)
    for beta, tau, nu, theta in _paths(truth, scatterers, cfg, station):
        if tau < 0 or tau > cfg.T_c * (1 + 1e-12):
            raise ValueError(f"path delay {tau:.4e}s exceeds the cyclic prefix {cfg.T_c:.4e}s")
        a = steering(theta, cfg.N_t)
        b = steering(theta, cfg.N_r)
        ramp = np.exp(-2j * np.pi * n * cfg.delta_f * tau)
        doppler = np.exp(2j * np.pi * p * cfg.T_r * nu)
        stream = (c @ a.conj()) * ramp * doppler[:, None, None]
        ybar += beta * stream[..., None] * b
    if seed is not None:
        for pi in range(n_p):
            for m in range(n_m):
                ybar[pi, m] += complex_noise(block_rng(seed, pi, m), (n_c, cfg.N_r), cfg.sigma2_cn)
    return ybar


def sample_path_gain(seed: int, k: int) -> complex:
    """Fast-fading gain: magnitude uniform on [0.8, 1.0], phase 2*pi*N(0, 1)."""
    rng = block_rng(seed, k)
    r1 = rng.uniform()
    r2 = rng.standard_normal()
    return complex((0.9 + 0.1 * (2.0 * r1 - 1.0)) * np.exp(2j * np.pi * r2))


_MAGIC = b"SNAPCUBE"


def dump_cube(path: str | Path, cube: np.ndarray) -> None:
    """Little-endian dump: magic, ndim (u32), dims (u64 each), interleaved re/im float64."""
    cube = np.ascontiguousarray(cube, dtype="<c16")
    header = _MAGIC + struct.pack("<I", cube.ndim) + struct.pack(f"<{cube.ndim}Q", *cube.shape)
    Path(path).write_bytes(header + cube.tobytes())


def load_cube(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError("not a snapshot cube file")
    (ndim,) = struct.unpack_from("<I", raw, 8)
    shape = struct.unpack_from(f"<{ndim}Q", raw, 12)
    offset = 12 + 8 * ndim
    return np.frombuffer(raw, dtype="<c16", offset=offset).reshape(shape).copy()

"""MIMO-OFDM transmit waveforms.

Array layouts (antenna axis last):

* constellation cube ``c``: ``(N_p, M, N_c, N_t)``
* time-domain pulse train ``s``: ``(N_p, L, N_t)``
* full-PRI spectrum ``sbar``: ``(N_p, N_cr, N_t)``

OFDM symbols are synthesised with a unitary inverse DFT (``sqrt(N_c) * ifft``)
so every time sample carries the per-antenna power ``P_t``; the matching
demodulator is :func:`ofdm_demodulate`.  Radar-side DFTs of whole PRIs are
plain ``np.fft.fft`` (no ``1/N``), see :func:`fft_full_pri`.
"""

from __future__ import annotations

import math

import numpy as np

from .core import RadarConfig, Scheme


def qam_alphabet(order: int) -> np.ndarray:
    """Square QAM points normalised to unit average energy."""
    side = math.isqrt(order)
    if order < 4 or side * side != order:
        raise ValueError(f"QAM order must be a perfect square >= 4, got {order}")
    levels = 2 * np.arange(side) - (side - 1)
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    return pts / np.sqrt(2.0 * (order - 1) / 3.0)


def block_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one ``(seed, *key)`` block."""
    return np.random.default_rng([seed, *key])


def gen_constellation(cfg: RadarConfig, qam_order: int = 64, seed: int = 0) -> np.ndarray:
    """Random QAM symbols, i.i.d. over pulses, symbols, subcarriers and antennas."""
    alphabet = qam_alphabet(qam_order) * np.sqrt(cfg.P_t)
    c = np.empty((cfg.N_p, cfg.M, cfg.N_c, cfg.N_t), dtype=complex)
    for p in range(cfg.N_p):
        for m in range(cfg.M):
            idx = block_rng(seed, p, m).integers(0, alphabet.size, size=(cfg.N_c, cfg.N_t))
            c[p, m] = alphabet[idx]
    return c


def ofdm_symbols(c: np.ndarray, n_cp: int) -> np.ndarray:
    """CP-appended time symbols, shape ``(..., n_cp + N_c, N_t)`` along the subcarrier axis -2."""
    n_c = c.shape[-2]
    if n_cp >= n_c:
        raise ValueError("cyclic prefix must be shorter than the OFDM symbol")
    x = np.fft.ifft(c, axis=-2) * np.sqrt(n_c)
    return np.concatenate([x[..., n_c - n_cp:, :], x], axis=-2)


def assemble_pulse(c: np.ndarray, cfg: RadarConfig) -> np.ndarray:
    """Pulse train ``s_p(l)``: ``M`` back-to-back CP-OFDM symbols then silence."""
    n_p, m_sym, n_c, n_t = c.shape
    if (n_p, m_sym, n_c, n_t) != (cfg.N_p, cfg.M, cfg.N_c, cfg.N_t):
        raise ValueError(f"constellation shape {c.shape} does not match config")
    blocks = ofdm_symbols(c, cfg.L_cp)  # (N_p, M, L_cp + N_c, N_t)
    s = np.zeros((n_p, cfg.L, n_t), dtype=complex)
    s[:, : cfg.L_ss] = blocks.reshape(n_p, cfg.L_ss, n_t)
    return s


def fft_full_pri(s: np.ndarray, cfg: RadarConfig) -> np.ndarray:
    """Spectrum of each complete PRI record, CPs and silent slot included."""
    if cfg.scheme is not Scheme.PULSED:
        raise ValueError("full-PRI FFT is a pulsed-mode operation; CW uses the constellation cube")
    return np.fft.fft(s, axis=1)


def ofdm_demodulate(y: np.ndarray, cfg: RadarConfig) -> np.ndarray:
    """Strip CPs and take the unitary DFT of each symbol.

    ``y`` has shape ``(N_p, L, N)``; returns ``(N_p, M, N_c, N)``.
    """
    n_p, _, n_ant = y.shape
    blocks = y[:, : cfg.L_ss].reshape(n_p, cfg.M, cfg.L_cp + cfg.N_c, n_ant)
    return np.fft.fft(blocks[:, :, cfg.L_cp:], axis=2) / np.sqrt(cfg.N_c)


def spatial_correlation(x: np.ndarray) -> np.ndarray:
    """Empirical ``E[x x^H]`` over all leading axes of an ``(..., N)`` array."""
    flat = x.reshape(-1, x.shape[-1])
    return flat.T @ flat.conj() / flat.shape[0]

"""Gibbs cost functions built on MIMO matched filters.

Every matched filter accepts either a single :class:`Hypothesis` (returns a
complex scalar) or an ``(H, 3)`` array of ``(tau, nu, theta)`` rows (returns
an ``(H,)`` array).  Batched evaluation is chunked to bound memory.

Data layouts follow :mod:`isac_pf.waveform`: antenna axis last.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RadarConfig, round_half_away, steering
from .waveform import spatial_correlation

_CHUNK = 512


@dataclass(frozen=True)
class Hypothesis:
    tau: float
    nu: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.tau, self.nu, self.theta])


def _unpack(phi):
    if isinstance(phi, Hypothesis):
        return phi.as_array()[None, :], True
    arr = np.asarray(phi, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def _chunked(fn, phis: np.ndarray) -> np.ndarray:
    out = np.empty(phis.shape[0], dtype=complex)
    for start in range(0, phis.shape[0], _CHUNK):
        sl = slice(start, start + _CHUNK)
        out[sl] = fn(phis[sl, 0], phis[sl, 1], phis[sl, 2])
    return out


def _beams(ydata, tx, theta, cfg):
    """``conj(b^H y) * (a^H s)`` per hypothesis, shape ``(H, *data_axes)``."""
    b = steering(theta, cfg.N_r)  # (H, N_r)
    a = steering(theta, cfg.N_t)
    rx = np.tensordot(ydata, b.conj(), axes=([-1], [1]))  # (..., H): b^H y
    txb = np.tensordot(tx, a.conj(), axes=([-1], [1]))  # (..., H): a^H s
    return np.moveaxis(rx.conj(), -1, 0), np.moveaxis(txb, -1, 0)


def mf_time(y: np.ndarray, s: np.ndarray, phi, cfg: RadarConfig):
    """Time-domain MIMO matched filter.

    ``sum_p sum_l y_p(l)^H b a^H s_p(l - round(tau/T_s)) exp(j 2 pi p T_r nu)``
    for ``y`` of shape ``(N_p, L, N_r)`` and ``s`` of shape ``(N_p, L, N_t)``.
    """
    phis, scalar = _unpack(phi)
    n_p, n_l, _ = y.shape
    pulses = np.arange(n_p)
    lag = np.arange(n_l)

    def kernel(tau, nu, theta):
        ry, ts = _beams(y, s, theta, cfg)  # (H, N_p, L) each
        q = np.array([round_half_away(t / cfg.T_s) for t in tau])
        src = lag[None, :] - q[:, None]  # (H, L)
        valid = (src >= 0) & (src < n_l)
        shifted = np.take_along_axis(ts, np.clip(src, 0, n_l - 1)[:, None, :], axis=2)
        shifted *= valid[:, None, :]
        per_pulse = np.einsum("hpl,hpl->hp", ry, shifted)
        doppler = np.exp(2j * np.pi * np.outer(nu, pulses) * cfg.T_r)
        return np.einsum("hp,hp->h", per_pulse, doppler)

    out = _chunked(kernel, phis)
    return out[0] if scalar else out


def _mf_spectral(ybar, xbar, phi, cfg, bin_width):
    """Shared kernel for ``(N_p, [M,] N, antennas)`` spectra with delay ramp over N."""
    phis, scalar = _unpack(phi)
    if ybar.ndim == 3:
        ybar = ybar[:, None]
        xbar = xbar[:, None]
    n_p, _, n_bins, _ = ybar.shape
    bins = np.arange(n_bins)
    pulses = np.arange(n_p)

    def kernel(tau, nu, theta):
        ry, tx = _beams(ybar, xbar, theta, cfg)  # (H, N_p, M, N)
        per_bin = np.einsum("hpmn,hpmn->hpn", ry, tx)
        ramp = np.exp(-2j * np.pi * np.outer(tau, bins) * bin_width)
        doppler = np.exp(2j * np.pi * np.outer(nu, pulses) * cfg.T_r)
        return np.einsum("hpn,hn,hp->h", per_bin, ramp, doppler)

    out = _chunked(kernel, phis)
    return out[0] if scalar else out


def mf_freq(ybar: np.ndarray, sbar: np.ndarray, phi, cfg: RadarConfig):
    """Frequency-domain matched filter over full-PRI spectra ``(N_p, N_cr, antennas)``.

    Bin width is ``B / N_cr`` and the delay enters as a continuous phase ramp.
    Under the unnormalised forward DFT this equals ``N_cr`` times
    :func:`mf_time` whenever the echo is a circular shift of the transmit record.
    """
    n_cr = sbar.shape[1]
    return _mf_spectral(ybar, sbar, phi, cfg, cfg.B / n_cr)


def mf_cw(ybar: np.ndarray, c: np.ndarray, phi, cfg: RadarConfig):
    """CW matched filter summed over pulses, OFDM symbols and subcarriers."""
    return _mf_spectral(ybar, c, phi, cfg, cfg.delta_f)


def _neg_log_power(mf):
    power = np.abs(mf) ** 2
    with np.errstate(divide="ignore"):
        return -np.log(power)


def h3(y, s, phi, cfg):
    """``-ln |mf_time|^2``; ``+inf`` where the filter output vanishes."""
    return _neg_log_power(mf_time(y, s, phi, cfg))


def h4(ybar, sbar, phi, cfg):
    return _neg_log_power(mf_freq(ybar, sbar, phi, cfg))


def h4_cw(ybar, c, phi, cfg):
    return _neg_log_power(mf_cw(ybar, c, phi, cfg))


def _ls_denominator(tx, theta, cfg, n_samples, rs_mode):
    """``N_r * N_p * n_samples * a^H R_s a`` for each hypothesis bearing."""
    n_p = tx.shape[0]
    if rs_mode == "white":
        den = np.full(np.shape(theta), cfg.P_t * cfg.N_t * cfg.N_r * n_p * n_samples)
    elif rs_mode == "empirical":
        rs = spatial_correlation(tx)
        a = steering(theta, cfg.N_t)
        quad = np.real(np.einsum("...i,ij,...j->...", a.conj(), rs, a))
        den = cfg.N_r * n_p * n_samples * quad
    else:
        raise ValueError(f"unknown rs_mode {rs_mode!r}")
    if np.any(den <= 0):
        raise ZeroDivisionError("degenerate transmit correlation: a^H R_s a = 0")
    return den


def h1(y, s, phi, cfg, rs_mode: str = "white"):
    """Least-squares residual with the complex gain profiled out (time domain).

    ``rs_mode="empirical"`` estimates ``R_s`` from the first ``L_ss`` samples
    of every pulse; the closed form is then exact as long as the delayed
    pulse stays inside the PRI.
    """
    phis, scalar = _unpack(phi)
    mf = np.atleast_1d(mf_time(y, s, phis, cfg))
    den = _ls_denominator(s[:, : cfg.L_ss], phis[:, 2], cfg, cfg.L_ss, rs_mode)
    out = np.vdot(y, y).real - np.abs(mf) ** 2 / den
    return out[0] if scalar else out


def h2(ybar, sbar, phi, cfg, rs_mode: str = "white"):
    """Frequency-domain counterpart of :func:`h1` over ``N_cr`` bins."""
    phis, scalar = _unpack(phi)
    mf = np.atleast_1d(mf_freq(ybar, sbar, phis, cfg))
    den = _ls_denominator(sbar, phis[:, 2], cfg, sbar.shape[1], rs_mode)
    out = np.vdot(ybar, ybar).real - np.abs(mf) ** 2 / den
    return out[0] if scalar else out


def h2_cw(ybar, c, phi, cfg, rs_mode: str = "white"):
    """CW variant of :func:`h2`: one scalar gain shared by all pulses and symbols."""
    phis, scalar = _unpack(phi)
    mf = np.atleast_1d(mf_cw(ybar, c, phis, cfg))
    n_p, n_m, n_c, _ = c.shape
    den = _ls_denominator(c.reshape(n_p, n_m * n_c, -1), phis[:, 2], cfg, n_m * n_c, rs_mode)
    out = np.vdot(ybar, ybar).real - np.abs(mf) ** 2 / den
    return out[0] if scalar else out


@dataclass(frozen=True)
class TrackingGate:
    tau: tuple[float, float]
    nu: tuple[float, float]
    theta: tuple[float, float]

    def contains(self, phi: Hypothesis) -> bool:
        return (
            self.tau[0] <= phi.tau <= self.tau[1]
            and self.nu[0] <= phi.nu <= self.nu[1]
            and self.theta[0] <= phi.theta <= self.theta[1]
        )


def tracking_gate(phi0: Hypothesis, cfg: RadarConfig) -> TrackingGate:
    """Region around ``phi0`` bounded by the first Dirichlet nulls on every axis."""
    half_sin = 2.0 / cfg.N_tr
    s0 = np.sin(phi0.theta)
    lo = np.arcsin(np.clip(s0 - half_sin, -1.0, 1.0))
    hi = np.arcsin(np.clip(s0 + half_sin, -1.0, 1.0))
    return TrackingGate(
        tau=(phi0.tau - 1.0 / cfg.B, phi0.tau + 1.0 / cfg.B),
        nu=(phi0.nu - 1.0 / cfg.T_i, phi0.nu + 1.0 / cfg.T_i),
        theta=(float(lo), float(hi)),
    )


def dirichlet(x, n: int):
    """``|sin(pi x) / sin(pi x / n)|`` with removable singularities filled by ``n``."""
    x = np.asarray(x, dtype=float)
    den = np.sin(np.pi * x / n)
    singular = np.abs(den) < 1e-12
    safe = np.where(singular, 1.0, den)
    return np.where(singular, float(n), np.abs(np.sin(np.pi * x) / safe))


def expected_ambiguity_magnitude(phi, phi0: Hypothesis, cfg: RadarConfig, beta0: complex = 1.0,
                                 n_cr: int | None = None):
    """Magnitude of the expected frequency-domain matched filter (white R_s, no scatterers)."""
    phis, scalar = _unpack(phi)
    n_cr = cfg.N_cr if n_cr is None else n_cr
    tau, nu, theta = phis.T
    dsin = np.sin(theta) - np.sin(phi0.theta)
    val = (
        abs(beta0)
        * cfg.P_t
        * dirichlet(0.5 * cfg.N_t * dsin, cfg.N_t)
        * dirichlet(-0.5 * cfg.N_r * dsin, cfg.N_r)
        * dirichlet(cfg.B * (phi0.tau - tau), n_cr)
        * dirichlet(cfg.N_p * cfg.T_r * (nu - phi0.nu), cfg.N_p)
    )
    return val[0] if scalar else val


def mf_grid(ybar: np.ndarray, xbar: np.ndarray, taus, nus, thetas, cfg: RadarConfig,
            bin_width: float) -> np.ndarray:
    """Spectral matched filter on a separable ``(tau, nu, theta)`` grid.

    Same value as :func:`mf_freq` / :func:`mf_cw` at every node, shape
    ``(len(taus), len(nus), len(thetas))``.  Beamforming is done once per
    bearing, which makes dense gate searches cheap.
    """
    if ybar.ndim == 3:
        ybar = ybar[:, None]
        xbar = xbar[:, None]
    n_p, _, n_bins, _ = ybar.shape
    ry, tx = _beams(ybar, xbar, np.asarray(thetas, dtype=float), cfg)  # (T, N_p, M, N)
    per_bin = np.einsum("hpmn,hpmn->hpn", ry, tx)
    ramp = np.exp(-2j * np.pi * np.outer(taus, np.arange(n_bins)) * bin_width)  # (tau, N)
    doppler = np.exp(2j * np.pi * np.outer(nus, np.arange(n_p)) * cfg.T_r)  # (nu, N_p)
    return np.einsum("hpn,an,bp->abh", per_bin, ramp, doppler, optimize=True)

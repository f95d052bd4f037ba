"""Brute-force references shared by the unit and acceptance tests."""

import numpy as np

from isac_pf.core import round_half_away, steering


def _ls_residual(y: np.ndarray, g: np.ndarray) -> float:
    """``min_gamma ||y - gamma g||^2`` solved as a generic least-squares problem."""
    A = g.reshape(-1, 1)
    b = y.reshape(-1)
    gamma, *_ = np.linalg.lstsq(A, b, rcond=None)
    r = b - A @ gamma
    return float(np.vdot(r, r).real)


def time_model(s, phi, cfg):
    """Unit-gain echo ``b a^H s_p(l - q) e^{j 2 pi p T_r nu}``, shape ``(N_p, L, N_r)``."""
    tau, nu, theta = phi
    a = steering(theta, cfg.N_t)
    b = steering(theta, cfg.N_r)
    q = round_half_away(tau / cfg.T_s)
    n_p, n_l, _ = s.shape
    shifted = np.zeros((n_p, n_l), dtype=complex)
    ts = s @ a.conj()
    for p in range(n_p):
        for l in range(n_l):
            if 0 <= l - q < n_l:
                shifted[p, l] = ts[p, l - q]
    dop = np.exp(2j * np.pi * np.arange(n_p) * cfg.T_r * nu)
    return (shifted * dop[:, None])[..., None] * b


def freq_model(sbar, phi, cfg):
    tau, nu, theta = phi
    a = steering(theta, cfg.N_t)
    b = steering(theta, cfg.N_r)
    n_p, n_cr, _ = sbar.shape
    ramp = np.exp(-2j * np.pi * np.arange(n_cr) * tau * cfg.B / n_cr)
    dop = np.exp(2j * np.pi * np.arange(n_p) * cfg.T_r * nu)
    return ((sbar @ a.conj()) * ramp * dop[:, None])[..., None] * b


def ls_time(y, s, phi, cfg) -> float:
    return _ls_residual(y, time_model(s, phi, cfg))


def ls_freq(ybar, sbar, phi, cfg) -> float:
    return _ls_residual(ybar, freq_model(sbar, phi, cfg))


def mf_time_loop(y, s, phi, cfg) -> complex:
    """Literal quadruple sum for the time-domain matched filter."""
    g = time_model(s, phi, cfg)
    total = 0j
    for idx in np.ndindex(*y.shape[:2]):
        total += np.vdot(y[idx], g[idx])
    return total


def bootstrap_weights(prev_w, states, z, R):
    """Textbook bootstrap-filter update with a Gaussian likelihood ``N(z; H x, R)``."""
    Rinv = np.linalg.inv(R)
    lik = np.empty(len(prev_w))
    for i, x in enumerate(states):
        d = z - x[:2]
        lik[i] = np.exp(-0.5 * d @ Rinv @ d)
    w = prev_w * lik
    return w / w.sum()

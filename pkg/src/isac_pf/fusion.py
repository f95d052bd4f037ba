"""Fusion of particle posteriors with different supports.

Finds the maximum-entropy density ``g`` on a box ``X`` that stays close, in
order-1 Wasserstein distance, to every station's particle cloud::

    g*(x) = exp(-1 - v - kappa * sum_z min_i (||x - x_zi|| - gamma_zi))

The dual variables ``(v, gamma)`` maximise the concave objective
``kappa * sum u_zi gamma_zi - v - int_X g``.  Integrals are estimated by
Monte-Carlo over a fixed uniform sample of ``X``.  For every ``gamma`` the
scalar ``v`` is set in closed form so that ``g`` integrates to one; the
remaining ascent is over ``gamma`` only.

Distances are Euclidean after dividing every axis by the pooled atom
standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .filters import ParticleCloud, systematic_indices


class FusionError(RuntimeError):
    """Fused weights underflowed or the problem is malformed."""


@dataclass
class FusionSettings:
    method: str = "dual"  # or "stratified"
    # where fused particles come from: "uniform" over X, "stratified" (weight-resampled
    # draws per cloud) or "atoms" (a random share of each cloud's atoms, weights ignored)
    proposal: str = "uniform"
    kappa: float = 5.0
    n_mci: int = 4000
    step: float = 1.0
    max_iter: int = 100
    tol: float = 1e-3
    inflate: float = 0.1
    standardize: bool = True
    dims: tuple[int, ...] | None = None  # state coordinates fused; None means all

    def __post_init__(self):
        if self.dims is not None:
            self.dims = tuple(int(d) for d in self.dims)
        if self.method not in ("dual", "stratified"):
            raise ValueError(f"unknown fusion method {self.method!r}")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.proposal not in ("uniform", "stratified", "atoms"):
            raise ValueError(f"unknown proposal {self.proposal!r}")


@dataclass
class FusionProblem:
    """Atoms ``x_zi`` with weights ``u_zi`` for ``Z`` stations, plus the box ``X``.

    ``lo``/``hi``/``scale`` are in state units; all internal geometry is in
    scaled coordinates ``x / scale``.
    """

    atoms: list[np.ndarray]
    weights: list[np.ndarray]
    kappa: float
    lo: np.ndarray
    hi: np.ndarray
    scale: np.ndarray
    n_mci: int = 4000
    step: float = 1.0
    max_iter: int = 100
    tol: float = 1e-3

    def __post_init__(self):
        if len(self.atoms) != len(self.weights) or not self.atoms:
            raise FusionError("need matching, non-empty atom and weight lists")
        for x, u in zip(self.atoms, self.weights):
            if x.shape[0] != u.size:
                raise FusionError("atom/weight count mismatch")
            if not math.isclose(u.sum(), 1.0, abs_tol=1e-9):
                raise FusionError("cloud weights must sum to one")
            if np.any(x < self.lo - 1e-12) or np.any(x > self.hi + 1e-12):
                raise FusionError("atoms must lie inside the region")

    @classmethod
    def from_clouds(cls, clouds: Sequence[ParticleCloud], settings: FusionSettings | None = None,
                    **overrides) -> "FusionProblem":
        s = settings or FusionSettings()
        dims = slice(None) if s.dims is None else list(s.dims)
        atoms = [np.asarray(c.states, dtype=float)[:, dims] for c in clouds]
        return cls.from_atoms(atoms, [c.weights for c in clouds], kappa=s.kappa, n_mci=s.n_mci,
                              step=s.step, max_iter=s.max_iter, tol=s.tol, inflate=s.inflate,
                              standardize=s.standardize, **overrides)

    @classmethod
    def from_atoms(cls, atoms, weights, kappa: float, inflate: float = 0.1,
                   standardize: bool = True, **kw) -> "FusionProblem":
        """Problem over the given clouds; repeated atoms are merged first.

        Resampled clouds carry exact copies, which would tie in the
        partition and leave empty cells.
        """
        merged = [merge_duplicates(np.atleast_2d(np.asarray(x, dtype=float)), np.asarray(u, dtype=float))
                  for x, u in zip(atoms, weights)]
        atoms = [m[0] for m in merged]
        weights = [m[1] for m in merged]
        pooled = np.vstack(atoms)
        lo, hi = pooled.min(axis=0), pooled.max(axis=0)
        span = hi - lo
        span = np.where(span > 0, span, 1.0)
        lo, hi = lo - inflate * span, hi + inflate * span
        scale = pooled.std(axis=0) if standardize else np.ones(pooled.shape[1])
        scale = np.where(scale > 0, scale, 1.0)
        return cls(atoms=atoms, weights=weights, kappa=kappa, lo=lo, hi=hi, scale=scale, **kw)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def n_stations(self) -> int:
        return len(self.atoms)

    @property
    def volume(self) -> float:
        """Volume of ``X`` in scaled coordinates."""
        return float(np.prod((self.hi - self.lo) / self.scale))

    def sample_region(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lo + rng.uniform(size=(n, self.dim)) * (self.hi - self.lo)

    def distances(self, x: np.ndarray) -> list[np.ndarray]:
        """Scaled distances from every point to every atom, one ``(n, N_z)`` block per station."""
        xs = x / self.scale
        out = []
        for atoms in self.atoms:
            diff = xs[:, None, :] - (atoms / self.scale)[None, :, :]
            out.append(np.sqrt(np.einsum("nid,nid->ni", diff, diff)))
        return out


def merge_duplicates(x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique atoms (first-occurrence order) with summed weights."""
    uniq, first, inverse = np.unique(x, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    w = np.bincount(rank[inverse.ravel()], weights=u, minlength=order.size)
    return uniq[order], w


@dataclass
class DualSolution:
    v: float
    gamma: list[np.ndarray]
    objective: float = float("nan")
    grad_norm: float = float("nan")
    n_iter: int = 0
    converged: bool = False
    history: list[float] = field(default_factory=list)


def _assign(dists: list[np.ndarray], gamma: list[np.ndarray]):
    """Cell index per station (lowest index wins ties) and the summed potentials."""
    cells, total = [], 0.0
    for d, g in zip(dists, gamma):
        shifted = d - g
        idx = np.argmin(shifted, axis=1)
        cells.append(idx)
        total = total + np.take_along_axis(shifted, idx[:, None], axis=1)[:, 0]
    return cells, total


def partition_index(x, z: int, dual: DualSolution, problem: FusionProblem):
    """Cell ``argmin_i ||x - x_zi|| - gamma_zi`` of station ``z``; ties go to the lowest index."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    d = problem.distances(pts)[z]
    idx = np.argmin(d - dual.gamma[z], axis=1)
    return int(idx[0]) if np.ndim(x) == 1 else idx


def log_g_star(x, dual: DualSolution, problem: FusionProblem) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    _, total = _assign(problem.distances(pts), dual.gamma)
    return -1.0 - dual.v - problem.kappa * total


def g_star(x, dual: DualSolution, problem: FusionProblem):
    """Fused density (per unit scaled volume) at one point or an ``(n, d)`` batch."""
    out = np.exp(log_g_star(x, dual, problem))
    return float(out[0]) if np.ndim(x) == 1 else out


class _Evaluator:
    """Dual objective and gradient on a fixed Monte-Carlo sample of ``X``."""

    def __init__(self, problem: FusionProblem, rng: np.random.Generator):
        self.p = problem
        self.dists = problem.distances(problem.sample_region(problem.n_mci, rng))
        self.log_vol = math.log(problem.volume)

    def __call__(self, gamma):
        p = self.p
        cells, total = _assign(self.dists, gamma)
        log_terms = -p.kappa * total
        log_int = self.log_vol + logsumexp(log_terms) - math.log(log_terms.size)
        v = log_int - 1.0  # makes int g = 1
        share = np.exp(log_terms - logsumexp(log_terms))
        mass = [np.bincount(c, weights=share, minlength=u.size) for c, u in zip(cells, p.weights)]
        obj = p.kappa * sum(float(u @ g) for u, g in zip(p.weights, gamma)) - v - 1.0
        resid = [u - m for u, m in zip(p.weights, mass)]
        return v, obj, resid


def solve_dual(problem: FusionProblem, seed: int = 0) -> DualSolution:
    """Ascent on the dual with ``v`` eliminated in closed form.

    The ``gamma`` update is the gradient ``kappa * (u - mass)`` divided by
    its diagonal curvature estimate ``kappa**2 * u``; the step halves
    whenever the objective would decrease and doubles (up to ``step``)
    after every accepted move.  Convergence is declared when
    the gradient infinity-norm drops below ``tol``.
    """
    z_count = problem.n_stations
    if problem.kappa == 0:
        v = math.log(problem.volume) - 1.0
        return DualSolution(v=v, gamma=[np.zeros(u.size) for u in problem.weights],
                            objective=-v - 1.0, grad_norm=0.0, converged=True)
    if problem.n_mci < 1000:
        raise FusionError("n_mci must be at least 1000")
    ev = _Evaluator(problem, np.random.default_rng(seed))
    kappa = problem.kappa
    floor = [np.maximum(u, 0.1 / u.size) for u in problem.weights]
    gamma = [np.zeros(u.size) for u in problem.weights]
    v, obj, resid = ev(gamma)
    step = problem.step
    history = [obj]
    grad_norm = kappa * max(np.abs(r).max() for r in resid)
    it = 0
    while grad_norm >= problem.tol and it < problem.max_iter and step > 1e-8:
        it += 1
        trial = [g + step * r / (kappa * f) for g, r, f in zip(gamma, resid, floor)]
        v_t, obj_t, resid_t = ev(trial)
        if obj_t < obj:
            step *= 0.5
            continue
        gamma, v, obj, resid = trial, v_t, obj_t, resid_t
        step = min(2.0 * step, problem.step)
        grad_norm = kappa * max(np.abs(r).max() for r in resid)
        history.append(obj)
    assert len(gamma) == z_count
    return DualSolution(v=v, gamma=gamma, objective=obj, grad_norm=grad_norm, n_iter=it,
                        converged=grad_norm < problem.tol, history=history)


def dual_objective(dual: DualSolution, problem: FusionProblem, n: int, seed: int):
    """Monte-Carlo estimate of the dual objective and its standard error."""
    g, _, _ = _fresh_density(dual, problem, n, seed)
    vol = problem.volume
    lin = problem.kappa * sum(float(u @ gm) for u, gm in zip(problem.weights, dual.gamma))
    return lin - dual.v - vol * g.mean(), vol * g.std(ddof=1) / math.sqrt(n)


def primal_objective(dual: DualSolution, problem: FusionProblem, n: int, seed: int):
    """``-H(g) + kappa * sum_z W(g, q_z)`` with the cell map as transport plan.

    Returns the estimate and its standard error.  The cell map is the
    optimal plan only when cell masses equal the atom weights, so this is a
    primal value at stationarity.
    """
    g, total, dists_cells = _fresh_density(dual, problem, n, seed)
    log_g = -1.0 - dual.v - problem.kappa * total
    transport = sum(dists_cells)
    vals = problem.volume * g * (log_g + problem.kappa * transport)
    return vals.mean(), vals.std(ddof=1) / math.sqrt(n)


def _fresh_density(dual, problem, n, seed):
    pts = problem.sample_region(n, np.random.default_rng(seed))
    dists = problem.distances(pts)
    cells, total = _assign(dists, dual.gamma)
    g = np.exp(-1.0 - dual.v - problem.kappa * total)
    chosen = [np.take_along_axis(d, c[:, None], axis=1)[:, 0] for d, c in zip(dists, cells)]
    return g, total, chosen


def cell_masses(dual: DualSolution, problem: FusionProblem, n: int, seed: int):
    """Monte-Carlo mass of ``g*`` on every cell, with standard errors, per station."""
    pts = problem.sample_region(n, np.random.default_rng(seed))
    dists = problem.distances(pts)
    cells, total = _assign(dists, dual.gamma)
    g = problem.volume * np.exp(-1.0 - dual.v - problem.kappa * total)
    out = []
    for c, u in zip(cells, problem.weights):
        onehot = np.zeros((n, u.size))
        onehot[np.arange(n), c] = g
        out.append((onehot.mean(axis=0), onehot.std(axis=0, ddof=1) / math.sqrt(n)))
    return out


def fuse(problem: FusionProblem, n_out: int, seed: int = 0, dual: DualSolution | None = None,
         points: np.ndarray | None = None) -> tuple[ParticleCloud, DualSolution]:
    """Fused particles weighted by ``g*``.

    ``points`` defaults to ``n_out`` uniform draws over ``X``; any other
    particle set inside ``X`` (for example stratified draws from the input
    clouds) is weighted the same way.
    """
    if dual is None:
        dual = solve_dual(problem, seed)
    if points is None:
        pts = problem.sample_region(n_out, np.random.default_rng([seed, 1]))
    else:
        pts = np.asarray(points, dtype=float)
    log_w = log_g_star(pts, dual, problem)
    if not np.isfinite(log_w).any():
        raise FusionError("all fused weights underflowed")
    w = np.exp(log_w - log_w.max())
    total = w.sum()
    if not total > 0:
        raise FusionError("all fused weights underflowed")
    return ParticleCloud(states=pts, weights=w / total), dual


def stratified_fuse(clouds: Sequence[ParticleCloud], n_out: int, seed: int = 0) -> ParticleCloud:
    """Pool ``ceil(n_out / Z)`` systematic draws from each cloud, trimmed to ``n_out``."""
    rng = np.random.default_rng(seed)
    per = math.ceil(n_out / len(clouds))
    states = [c.states[systematic_indices(c.weights, rng.uniform(), per)] for c in clouds]
    pooled = np.vstack(states)
    pooled = pooled[np.sort(rng.permutation(pooled.shape[0])[:n_out])]
    return ParticleCloud(states=pooled, weights=np.full(n_out, 1.0 / n_out))


def atom_strata(clouds: Sequence[ParticleCloud], n_out: int, seed: int = 0) -> np.ndarray:
    """``ceil(n_out / Z)`` atoms picked at random (without replacement) from each cloud.

    Unlike :func:`stratified_fuse` the picks ignore the weights, so no
    resampling noise enters; the fused weights come from ``g*`` alone.
    """
    rng = np.random.default_rng(seed)
    per = math.ceil(n_out / len(clouds))
    picks = []
    for c in clouds:
        if per > c.n:
            raise FusionError("cloud has fewer atoms than its stratum")
        picks.append(c.states[np.sort(rng.permutation(c.n)[:per])])
    pooled = np.vstack(picks)
    return pooled[np.sort(rng.permutation(pooled.shape[0])[:n_out])]

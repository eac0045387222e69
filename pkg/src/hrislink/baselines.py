"""Classical reference optimizers for the HRIS downlink.

The centerpiece is a monotone alternating optimizer ("ao-surrogate" in all
outputs): water-filling for the precoder given the surface, per-element
phase coordinate ascent given the precoder, and a one-shot greedy selection
of the active elements in dynamic mode. Every accepted move is re-scored
with the plain SE evaluator, so the SE trace of a restart is non-decreasing
by construction, also in floating point.

Water-filling operates on the whitened channel G = L^{-1} H_eff with
R_n = L L^H; the mode gains are the squared singular values of G.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import numerics
from .channel import ChannelSet, SystemConfig
from .env import (
    HrisConfig,
    default_fixed_set,
    effective_channel,
    make_hris_config,
    noise_covariance,
    spectral_efficiency,
    _uniform_precoder,
)

__all__ = [
    "AoSettings",
    "AoResult",
    "DegenerateChannelWarning",
    "waterfill_precoder",
    "phase_coordinate_ascent",
    "greedy_active_selection",
    "ao_optimize",
    "random_baseline",
]

LOG2 = np.log(2.0)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class DegenerateChannelWarning(RuntimeWarning):
    """Whitened channel was numerically rank zero; uniform power used."""


@dataclass(frozen=True)
class AoSettings:
    max_sweeps: int = 20      # phase sweeps per restart (including the first)
    se_tol: float = 1e-3      # bps/Hz improvement threshold to keep sweeping
    phase_grid: int = 64      # candidate phases per element
    restarts: int = 4         # random phase initializations
    refine: bool = True       # golden-section refinement around the grid best

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.phase_grid < 2:
            raise ValueError("phase_grid must be >= 2")
        if self.se_tol <= 0:
            raise ValueError("se_tol must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


def _waterfill_powers(gains: np.ndarray, p_total: float) -> np.ndarray:
    """Allocate p_i = max(0, mu - 1/g_i) with sum p = p_total.

    mu is found by bisection (tolerance 1e-10 * p_total on the power sum),
    then polished in closed form on the resulting active set so the KKT
    conditions hold to machine precision.
    """
    inv = np.where(gains > 0, 1.0 / np.maximum(gains, 1e-300), np.inf)
    if not np.any(np.isfinite(inv)):
        raise ValueError("no usable modes")

    def alloc(mu):
        return np.maximum(0.0, mu - inv)

    lo, hi = 0.0, p_total + float(np.min(inv)) + 1.0
    while np.sum(alloc(hi)) < p_total:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = np.sum(alloc(mid))
        if abs(s - p_total) <= 1e-10 * p_total:
            lo = hi = mid
            break
        if s < p_total:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)

    # Closed-form polish: iterate in case the exact mu moves the active set.
    active = alloc(mu) > 0
    for _ in range(gains.size):
        if not np.any(active):
            active = inv == np.min(inv)
        mu = (p_total + np.sum(inv[active])) / np.count_nonzero(active)
        new_active = mu - inv > 0
        if np.array_equal(new_active, active):
            break
        active = new_active
    p = np.where(active, np.maximum(0.0, mu - inv), 0.0)
    return p


def waterfill_precoder(h: HrisConfig, ch: ChannelSet,
                       cfg: SystemConfig) -> np.ndarray:
    """Capacity-optimal precoder for a fixed surface configuration.

    Whitens the effective channel by the noise Cholesky factor, allocates
    power over the n_streams strongest right singular directions by
    water-filling, and returns F = V[:, :n_streams] diag(sqrt(p)).
    """
    heff = effective_channel(h, ch)
    rn = noise_covariance(h, ch, cfg)
    chol = np.linalg.cholesky(rn)
    g = scipy.linalg.solve_triangular(chol, heff, lower=True)
    _, s, v = numerics.svd(g)
    if np.all(s < 1e-14):
        warnings.warn("whitened channel is numerically zero; "
                      "falling back to uniform power",
                      DegenerateChannelWarning, stacklevel=2)
        return _uniform_precoder(cfg)
    ns = cfg.n_streams
    p = _waterfill_powers(s[:ns] ** 2, cfg.max_bs_power)
    return v[:, :ns] * np.sqrt(p)[None, :]


class _PhaseSweepScorer:
    """Batched SE evaluation over candidate phases of one element.

    For a fixed active set the noise covariance does not depend on any
    phase (|alpha_n| is phase-invariant), so its Cholesky factor is
    computed once per sweep.
    """

    def __init__(self, f: np.ndarray, h: HrisConfig, ch: ChannelSet,
                 cfg: SystemConfig):
        self.f = f
        self.ch = ch
        self.cfg = cfg
        self.amps = h.amplitudes
        self.alpha = h.amplitudes * np.exp(1j * h.phases)
        self.chol = np.linalg.cholesky(noise_covariance(h, ch, cfg))
        self.base = ch.h_direct + (ch.h_ris_rx * self.alpha[None, :]) @ ch.h_tx_ris
        self.eye = np.eye(cfg.n_rx, dtype=np.complex128)

    def se_for_phases(self, n: int, phases: np.ndarray) -> np.ndarray:
        """SE at each candidate phase of element n (others unchanged)."""
        outer = np.outer(self.ch.h_ris_rx[:, n], self.ch.h_tx_ris[n, :])
        without = self.base - self.alpha[n] * outer
        alpha_cand = self.amps[n] * np.exp(1j * np.asarray(phases))
        heff = without[None] + alpha_cand[:, None, None] * outer[None]
        g = np.linalg.solve(self.chol[None], heff @ self.f[None])
        m = self.eye[None] + g @ np.conj(np.swapaxes(g, 1, 2))
        diag = np.real(np.diagonal(np.linalg.cholesky(m), axis1=1, axis2=2))
        return 2.0 * np.sum(np.log(diag), axis=1) / LOG2

    def commit(self, n: int, phase: float) -> None:
        outer = np.outer(self.ch.h_ris_rx[:, n], self.ch.h_tx_ris[n, :])
        new_alpha = self.amps[n] * np.exp(1j * phase)
        self.base = self.base + (new_alpha - self.alpha[n]) * outer
        self.alpha = self.alpha.copy()
        self.alpha[n] = new_alpha


def _golden_refine(score_fn, lo: float, hi: float, tol: float = 1e-4):
    """Golden-section max on [lo, hi]; returns the best point evaluated."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = score_fn(c)
    fd = score_fn(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = score_fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = score_fn(d)
        x, fx = (c, fc) if fc >= fd else (d, fd)
        if fx > best_f:
            best_x, best_f = x, fx
    return best_x, best_f


def phase_coordinate_ascent(f: np.ndarray, h: HrisConfig, ch: ChannelSet,
                            cfg: SystemConfig,
                            s: AoSettings = AoSettings()) -> HrisConfig:
    """One coordinate-ascent sweep over all element phases.

    Each element is scored on a uniform grid of s.phase_grid candidate
    phases (plus the incumbent), optionally refined by golden section
    around the grid best to 1e-4 rad. A move is accepted only if the plain
    SE evaluator confirms strict improvement, so SE never decreases.
    """
    phases = h.phases.copy()
    current = make_hris_config(phases, h.active_set, cfg)
    se_now = spectral_efficiency(f, current, ch, cfg)
    scorer = _PhaseSweepScorer(f, current, ch, cfg)
    grid = np.linspace(0.0, 2.0 * np.pi, s.phase_grid, endpoint=False)

    for n in range(cfg.n_ris):
        cand = np.concatenate([[phases[n]], grid])
        scores = scorer.se_for_phases(n, cand)
        best = int(np.argmax(scores))
        prop_phase, prop_se = float(cand[best]), float(scores[best])
        if s.refine:
            delta = 2.0 * np.pi / s.phase_grid
            x, fx = _golden_refine(
                lambda p: float(scorer.se_for_phases(n, np.array([p]))[0]),
                prop_phase - delta, prop_phase + delta)
            if fx > prop_se:
                prop_phase, prop_se = x, fx
        trial = phases.copy()
        trial[n] = prop_phase
        cand_cfg = make_hris_config(trial, h.active_set, cfg)
        se_cand = spectral_efficiency(f, cand_cfg, ch, cfg)
        if se_cand > se_now:
            phases = cand_cfg.phases
            se_now = se_cand
            scorer.commit(n, float(cand_cfg.phases[n]))
    return make_hris_config(phases, h.active_set, cfg)


def greedy_active_selection(f: np.ndarray, h: HrisConfig, ch: ChannelSet,
                            cfg: SystemConfig, k: int) -> np.ndarray:
    """Greedily activate k elements, one at a time, maximizing SE.

    Starts from all-passive with h's phases; ties go to the lowest index.
    """
    if k > cfg.n_ris:
        raise ValueError("k must be <= n_ris")
    active: list = []
    for _ in range(k):
        best_n, best_se = -1, -np.inf
        for n in range(cfg.n_ris):
            if n in active:
                continue
            cand = make_hris_config(h.phases, active + [n], cfg)
            se = spectral_efficiency(f, cand, ch, cfg)
            if se > best_se:
                best_n, best_se = n, se
        active.append(best_n)
    return np.array(sorted(active), dtype=int)


@dataclass
class AoResult:
    precoder: np.ndarray
    hris: HrisConfig
    se: float
    n_sweeps: int        # phase sweeps used by the winning restart
    traces: list         # per-restart SE trace (each non-decreasing)


def ao_optimize(ch: ChannelSet, cfg: SystemConfig, mode: str = "dynamic",
                s: AoSettings = AoSettings(), rng=0,
                fixed_active_set=None) -> AoResult:
    """Alternating optimization surrogate with random restarts.

    Per restart: random phases, water-fill, one phase sweep; in dynamic
    mode the K active elements are then chosen once by greedy selection.
    From there water-filling and phase sweeps alternate until the SE gain
    drops below se_tol or max_sweeps is reached. The recorded trace starts
    once the active set is final, so it is non-decreasing by construction.
    """
    rng = np.random.default_rng(rng)
    if mode not in ("passive", "fixed", "dynamic"):
        raise ValueError("mode must be passive, fixed or dynamic")
    if mode == "fixed" and fixed_active_set is None:
        fixed_active_set = default_fixed_set(cfg.n_ris, cfg.n_active)

    best = None
    traces = []
    for _ in range(s.restarts):
        phases = rng.uniform(0.0, 2.0 * np.pi, cfg.n_ris)
        active0 = fixed_active_set if mode == "fixed" else []
        h = make_hris_config(phases, active0, cfg)
        f = waterfill_precoder(h, ch, cfg)
        h = phase_coordinate_ascent(f, h, ch, cfg, s)
        sweeps = 1
        if mode == "dynamic" and cfg.n_active > 0:
            f = waterfill_precoder(h, ch, cfg)
            chosen = greedy_active_selection(f, h, ch, cfg, cfg.n_active)
            h = make_hris_config(h.phases, chosen, cfg)
        f = waterfill_precoder(h, ch, cfg)
        se = spectral_efficiency(f, h, ch, cfg)
        trace = [se]
        while sweeps < s.max_sweeps:
            h = phase_coordinate_ascent(f, h, ch, cfg, s)
            sweeps += 1
            f_new = waterfill_precoder(h, ch, cfg)
            se_new = spectral_efficiency(f_new, h, ch, cfg)
            # Water-filling is optimal for fixed h; keep the incumbent on
            # floating-point ties so the trace cannot dip.
            if se_new >= se:
                f, se = f_new, se_new
            trace.append(se)
            if trace[-1] - trace[-2] < s.se_tol:
                break
        traces.append(trace)
        if best is None or se > best.se:
            best = AoResult(f, h, se, sweeps, traces)
    best.traces = traces
    return best


def random_baseline(ch: ChannelSet, cfg: SystemConfig, mode: str = "dynamic",
                    rng=0, fixed_active_set=None):
    """Random phases, mode-dependent active set, water-filled precoder.

    Draws phases before the active set, so with a shared seed the phases
    match ao_optimize's first restart initialization.
    """
    rng = np.random.default_rng(rng)
    phases = rng.uniform(0.0, 2.0 * np.pi, cfg.n_ris)
    if mode == "passive":
        active = []
    elif mode == "fixed":
        active = (default_fixed_set(cfg.n_ris, cfg.n_active)
                  if fixed_active_set is None else fixed_active_set)
    elif mode == "dynamic":
        active = rng.choice(cfg.n_ris, size=cfg.n_active, replace=False)
    else:
        raise ValueError("mode must be passive, fixed or dynamic")
    h = make_hris_config(phases, active, cfg)
    f = waterfill_precoder(h, ch, cfg)
    return f, h, spectral_efficiency(f, h, ch, cfg)

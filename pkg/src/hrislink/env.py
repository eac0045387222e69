"""System model and RL environment for the HRIS-assisted downlink.

Core quantities:
  effective channel   H_eff = H_d + H_r @ Theta @ H_t
  noise covariance    R_n = sigma2 * (I + (1 + eta) * H_r Theta_A Theta_A^H H_r^H)
  spectral efficiency log2 det(I + H_eff F F^H H_eff^H R_n^{-1})   [bps/Hz]

The SE is evaluated in whitened form, log2 det(I + G G^H) with
G = L^{-1} H_eff F and R_n = L L^H, which keeps the argument Hermitian PSD
by construction.

The RL view: the state is the flattened CSI (per-link normalized), the raw
action carries the precoder Re/Im parts, per-element selection logits and
per-element phase logits, and the reward is the SE of the decoded
configuration. Each step sees a fresh i.i.d. channel realization.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import (ChannelSet, GeometryParams, SystemConfig, action_dim,
                      draw_channel, state_dim)
from . import numerics

__all__ = [
    "HrisConfig",
    "EnvStep",
    "ZeroPrecoderWarning",
    "make_hris_config",
    "default_fixed_set",
    "theta_matrix",
    "effective_channel",
    "noise_covariance",
    "spectral_efficiency",
    "encode_state",
    "decode_action",
    "env_step",
    "HrisEnv",
]

LOG2 = np.log(2.0)

MODES = ("passive", "fixed", "dynamic")


class ZeroPrecoderWarning(RuntimeWarning):
    """Raw precoder block was exactly zero; a uniform fallback was used."""


@dataclass(frozen=True)
class HrisConfig:
    """Per-element reflection state of the surface.

    amplitudes[n] is amp_factor on active elements and 1 elsewhere; phases
    are in [0, 2*pi). active_set is a sorted integer index array.
    """
    phases: np.ndarray
    amplitudes: np.ndarray
    active_set: np.ndarray


@dataclass(frozen=True)
class EnvStep:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray


def make_hris_config(phases, active_set, cfg: SystemConfig) -> HrisConfig:
    """Build an HrisConfig with amplitudes fixed by element type."""
    phases = np.mod(np.asarray(phases, dtype=float), 2.0 * np.pi)
    if phases.shape != (cfg.n_ris,):
        raise ValueError(f"expected {cfg.n_ris} phases, got {phases.shape}")
    active = np.asarray(sorted(int(i) for i in active_set), dtype=int)
    if active.size and (active[0] < 0 or active[-1] >= cfg.n_ris):
        raise ValueError("active indices out of range")
    if np.unique(active).size != active.size:
        raise ValueError("active indices must be unique")
    amplitudes = np.ones(cfg.n_ris)
    amplitudes[active] = cfg.amp_factor
    return HrisConfig(phases, amplitudes, active)


def default_fixed_set(n_ris: int, k: int) -> np.ndarray:
    """K elements evenly spaced across the array: floor(i*N/K)."""
    return np.array([(i * n_ris) // k for i in range(k)], dtype=int)


def theta_matrix(h: HrisConfig):
    """Diagonal coefficient matrix Theta and its active-only part Theta_A."""
    diag = h.amplitudes * np.exp(1j * h.phases)
    mask = np.zeros(h.phases.shape[0])
    mask[h.active_set] = 1.0
    return np.diag(diag), np.diag(mask * diag)


def effective_channel(h: HrisConfig, ch: ChannelSet) -> np.ndarray:
    """H_eff = H_d + H_r Theta H_t (Theta applied as column scaling)."""
    diag = h.amplitudes * np.exp(1j * h.phases)
    return ch.h_direct + (ch.h_ris_rx * diag[None, :]) @ ch.h_tx_ris


def noise_covariance(h: HrisConfig, ch: ChannelSet,
                     cfg: SystemConfig) -> np.ndarray:
    """Covariance of receiver noise plus HRIS-amplified noise; Hermitian PD."""
    n_rx = cfg.n_rx
    rn = np.eye(n_rx, dtype=np.complex128)
    if h.active_set.size:
        cols = ch.h_ris_rx[:, h.active_set] * (
            h.amplitudes[h.active_set] * np.exp(1j * h.phases[h.active_set]))
        rn = rn + (1.0 + cfg.residual_si) * (cols @ cols.conj().T)
    return cfg.noise_power * rn


def spectral_efficiency(f: np.ndarray, h: HrisConfig, ch: ChannelSet,
                        cfg: SystemConfig) -> float:
    """Achievable rate in bps/Hz for precoder f under reflection state h."""
    heff = effective_channel(h, ch)
    rn = noise_covariance(h, ch, cfg)
    chol = np.linalg.cholesky(rn)
    g = scipy.linalg.solve_triangular(chol, heff @ f, lower=True)
    m = np.eye(cfg.n_rx, dtype=np.complex128) + g @ g.conj().T
    return numerics.hermitian_logdet(m) / LOG2


def encode_state(ch: ChannelSet) -> np.ndarray:
    """Flatten the CSI into a real vector, each link scaled by 1/sqrt(beta).

    The scaling is invertible (betas are config-known), so the encoding
    loses no information; it only brings the entries to O(1).
    """
    beta_d, beta_t, beta_r = ch.betas
    return np.concatenate([
        numerics.vectorize_reim(ch.h_direct) / np.sqrt(beta_d),
        numerics.vectorize_reim(ch.h_tx_ris) / np.sqrt(beta_t),
        numerics.vectorize_reim(ch.h_ris_rx) / np.sqrt(beta_r),
    ])


def _vec_reim_batch(m: np.ndarray) -> np.ndarray:
    # (B, p, q) -> (B, 2*p*q) with column-major vec per sample
    b = m.shape[0]
    v = np.swapaxes(m, 1, 2).reshape(b, -1)
    return np.concatenate([v.real, v.imag], axis=1)


def encode_states(batch: ChannelSet) -> np.ndarray:
    """Vectorized encode_state over a batched ChannelSet -> (B, D_s)."""
    beta_d, beta_t, beta_r = batch.betas
    return np.concatenate([
        _vec_reim_batch(batch.h_direct) / np.sqrt(beta_d),
        _vec_reim_batch(batch.h_tx_ris) / np.sqrt(beta_t),
        _vec_reim_batch(batch.h_ris_rx) / np.sqrt(beta_r),
    ], axis=1)


def _uniform_precoder(cfg: SystemConfig) -> np.ndarray:
    p_entry = cfg.max_bs_power / (cfg.n_tx * cfg.n_streams)
    return np.full((cfg.n_tx, cfg.n_streams), np.sqrt(p_entry),
                   dtype=np.complex128)


def _top_k_stable(logits: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, ties broken by lowest index."""
    order = np.argsort(-logits, kind="stable")
    return np.sort(order[:k])


def decode_action(raw, cfg: SystemConfig, mode: str = "dynamic",
                  fixed_active_set=None):
    """Map a raw action vector onto a feasible (precoder, HrisConfig) pair.

    Layout of `raw`: [vec(Re F); vec(Im F); selection logits (N); phase
    logits (N)]. The precoder is projected onto the power boundary
    ||F||_F^2 = P_max (full power is never suboptimal here because the
    noise covariance does not depend on F). Selection logits pick the K
    active elements in dynamic mode; phases map through pi*(tanh(u)+1).
    """
    raw = np.asarray(raw, dtype=float)
    d_a = action_dim(cfg)
    if raw.shape != (d_a,):
        raise ValueError(f"expected action of length {d_a}, got {raw.shape}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")

    n_f = cfg.n_tx * cfg.n_streams
    f_re = raw[:n_f].reshape(cfg.n_tx, cfg.n_streams, order="F")
    f_im = raw[n_f:2 * n_f].reshape(cfg.n_tx, cfg.n_streams, order="F")
    f_tilde = f_re + 1j * f_im
    fro = np.linalg.norm(f_tilde)
    if fro == 0.0:
        warnings.warn("zero raw precoder; using uniform-power fallback",
                      ZeroPrecoderWarning, stacklevel=2)
        f = _uniform_precoder(cfg)
    else:
        f = f_tilde * (np.sqrt(cfg.max_bs_power) / fro)

    logits = raw[2 * n_f:2 * n_f + cfg.n_ris]
    u = raw[2 * n_f + cfg.n_ris:]
    phases = np.pi * (np.tanh(u) + 1.0)

    if mode == "dynamic":
        active = _top_k_stable(logits, cfg.n_active)
    elif mode == "fixed":
        if fixed_active_set is None:
            raise ValueError("fixed mode requires fixed_active_set")
        active = np.asarray(sorted(fixed_active_set), dtype=int)
        if active.size != cfg.n_active:
            raise ValueError("fixed_active_set size must equal n_active")
    else:
        active = np.array([], dtype=int)

    return f, make_hris_config(phases, active, cfg)


def decode_actions_batch(raw: np.ndarray, cfg: SystemConfig, mode: str,
                         fixed_active_set=None):
    """Vectorized decode over (B, D_a) raw actions.

    Returns (f, alpha, act_mask): precoders (B, n_tx, n_streams), complex
    diagonal coefficients (B, N), and a boolean active mask (B, N).
    Agrees elementwise with decode_action applied row by row.
    """
    raw = np.asarray(raw, dtype=float)
    b = raw.shape[0]
    n_f = cfg.n_tx * cfg.n_streams
    n = cfg.n_ris

    f_re = raw[:, :n_f].reshape(b, cfg.n_streams, cfg.n_tx).swapaxes(1, 2)
    f_im = raw[:, n_f:2 * n_f].reshape(b, cfg.n_streams, cfg.n_tx).swapaxes(1, 2)
    f = f_re + 1j * f_im
    fro = np.linalg.norm(f.reshape(b, -1), axis=1)
    zero = fro == 0.0
    if np.any(zero):
        warnings.warn("zero raw precoder in batch; using uniform-power fallback",
                      ZeroPrecoderWarning, stacklevel=2)
        f[zero] = _uniform_precoder(cfg)[None]
        fro[zero] = np.sqrt(cfg.max_bs_power)
    f = f * (np.sqrt(cfg.max_bs_power) / fro)[:, None, None]

    logits = raw[:, 2 * n_f:2 * n_f + n]
    phases = np.pi * (np.tanh(raw[:, 2 * n_f + n:]) + 1.0)

    act_mask = np.zeros((b, n), dtype=bool)
    if mode == "dynamic":
        if cfg.n_active > 0:
            order = np.argsort(-logits, axis=1, kind="stable")
            rows = np.arange(b)[:, None]
            act_mask[rows, order[:, :cfg.n_active]] = True
    elif mode == "fixed":
        idx = np.asarray(sorted(fixed_active_set), dtype=int)
        act_mask[:, idx] = True
    elif mode != "passive":
        raise ValueError(f"mode must be one of {MODES}")

    amps = np.where(act_mask, cfg.amp_factor, 1.0)
    alpha = amps * np.exp(1j * phases)
    return f, alpha, act_mask


def spectral_efficiency_batch(f: np.ndarray, alpha: np.ndarray,
                              act_mask: np.ndarray, ch: ChannelSet,
                              cfg: SystemConfig) -> np.ndarray:
    """Vectorized SE over batched precoders/coefficients/channels -> (B,)."""
    heff = ch.h_direct + (ch.h_ris_rx * alpha[:, None, :]) @ ch.h_tx_ris
    alpha_a = np.where(act_mask, alpha, 0.0)
    cols = ch.h_ris_rx * alpha_a[:, None, :]
    eye = np.eye(cfg.n_rx, dtype=np.complex128)
    rn = cfg.noise_power * (
        eye[None] + (1.0 + cfg.residual_si)
        * (cols @ np.conj(np.swapaxes(cols, 1, 2))))
    chol = np.linalg.cholesky(rn)
    g = np.linalg.solve(chol, heff @ f)
    m = eye[None] + g @ np.conj(np.swapaxes(g, 1, 2))
    diag = np.real(np.diagonal(np.linalg.cholesky(m), axis1=1, axis2=2))
    return 2.0 * np.sum(np.log(diag), axis=1) / LOG2


def env_step(raw_action, ch: ChannelSet, next_seed, cfg: SystemConfig,
             geo: GeometryParams, mode: str = "dynamic",
             fixed_active_set=None) -> EnvStep:
    """One transition: decode, score, and draw the next i.i.d. realization."""
    state = encode_state(ch)
    raw_action = np.asarray(raw_action, dtype=float)
    f, h = decode_action(raw_action, cfg, mode, fixed_active_set)
    reward = spectral_efficiency(f, h, ch, cfg)
    next_state = encode_state(draw_channel(cfg, geo, next_seed))
    return EnvStep(state, raw_action, reward, next_state)


class HrisEnv:
    """Stateful wrapper over the pure step function.

    Channel realizations are keyed by (seed, step index), so two instances
    with the same construction arguments produce identical trajectories for
    identical action sequences.
    """

    def __init__(self, cfg: SystemConfig, geo: GeometryParams,
                 mode: str = "dynamic", fixed_active_set=None, seed: int = 0):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode == "fixed" and fixed_active_set is None:
            fixed_active_set = default_fixed_set(cfg.n_ris, cfg.n_active)
        self.cfg = cfg
        self.geo = geo
        self.mode = mode
        self.fixed_active_set = fixed_active_set
        self.seed = seed
        self._t = 0
        self._chan = None

    @property
    def state_dim(self) -> int:
        return state_dim(self.cfg)

    @property
    def action_dim(self) -> int:
        return action_dim(self.cfg)

    def channel_seed(self, t: int):
        return (int(self.seed), int(t))

    def reset(self) -> np.ndarray:
        self._t = 0
        self._chan = draw_channel(self.cfg, self.geo, self.channel_seed(0))
        return encode_state(self._chan)

    def step(self, raw_action) -> EnvStep:
        if self._chan is None:
            self.reset()
        out = env_step(raw_action, self._chan, self.channel_seed(self._t + 1),
                       self.cfg, self.geo, self.mode, self.fixed_active_set)
        self._t += 1
        self._chan = draw_channel(self.cfg, self.geo,
                                  self.channel_seed(self._t))
        return out

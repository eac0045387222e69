"""Channel generation: geometry, path loss, and Rician fading draws.

Large-scale fading follows beta(d) = beta0 * (d/d0)^(-eps). Small-scale
fading is Rician per link: a deterministic line-of-sight outer product of
half-wavelength ULA steering vectors plus an i.i.d. CN(0, 1) component,
mixed by the link's Rician factor. kappa = 0 gives pure NLoS (Rayleigh),
kappa = inf pure LoS.

All randomness flows through numpy Generators seeded explicitly, so a draw
is a pure function of (config, geometry, seed).
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SystemConfig",
    "GeometryParams",
    "ChannelSet",
    "db_to_linear",
    "dbm_to_watts",
    "noise_power_watts",
    "path_loss",
    "steering_vector",
    "draw_channel",
    "draw_channels",
    "state_dim",
    "action_dim",
]


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def noise_power_watts(psd_dbm_per_hz: float = -169.0,
                      bandwidth_hz: float = 20e6,
                      noise_figure_db: float = 10.0) -> float:
    """Receiver noise power sigma^2 in watts from PSD, bandwidth and NF."""
    sigma2_dbm = psd_dbm_per_hz + 10.0 * math.log10(bandwidth_hz) + noise_figure_db
    return dbm_to_watts(sigma2_dbm)


@dataclass(frozen=True)
class SystemConfig:
    """Dimensions and link-budget scalars of one downlink scenario.

    All powers are linear watts; amp_factor and residual_si are linear
    ratios. dB <-> linear conversion happens only when a config is built.
    """
    n_tx: int = 4                # BS antennas
    n_rx: int = 2                # user antennas
    n_streams: int = 2           # data streams, <= min(n_tx, n_rx)
    n_ris: int = 50              # HRIS elements
    n_active: int = 4            # active elements K <= n_ris
    max_bs_power: float = 10.0   # W (40 dBm)
    amp_factor: float = 10.0     # active-element amplitude gain, >= 1
    noise_power: float = field(default_factory=noise_power_watts)  # W
    residual_si: float = field(default_factory=lambda: db_to_linear(1.0))

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1 or self.n_ris < 1:
            raise ValueError("antenna and element counts must be >= 1")
        if not (1 <= self.n_streams <= min(self.n_tx, self.n_rx)):
            raise ValueError("need 1 <= n_streams <= min(n_tx, n_rx)")
        if not (0 <= self.n_active <= self.n_ris):
            raise ValueError("need 0 <= n_active <= n_ris")
        if self.max_bs_power <= 0 or self.noise_power <= 0:
            raise ValueError("powers must be > 0")
        if self.amp_factor < 1.0:
            raise ValueError("amp_factor must be >= 1")
        if self.residual_si < 0.0:
            raise ValueError("residual_si must be >= 0")


@dataclass(frozen=True)
class GeometryParams:
    """Node positions and propagation constants.

    exponents and rician_k are ordered (BS-user, BS-HRIS, HRIS-user).
    A Rician factor may be math.inf for a pure-LoS link.
    """
    bs_pos: tuple = (0.0, 0.0)       # m
    ris_pos: tuple = (50.0, 0.0)     # m
    user_pos: tuple = (45.0, 2.0)    # m
    beta0_db: float = -30.0          # reference path loss at d0
    d0: float = 1.0                  # m
    exponents: tuple = (3.5, 2.2, 2.0)
    rician_k: tuple = (0.0, 1.0, math.inf)

    def __post_init__(self):
        if self.d0 <= 0:
            raise ValueError("d0 must be > 0")
        if any(e <= 0 for e in self.exponents):
            raise ValueError("path-loss exponents must be > 0")
        if any(k < 0 for k in self.rician_k):
            raise ValueError("Rician factors must be >= 0 (inf allowed)")
        for a, b in (("bs_pos", "ris_pos"), ("bs_pos", "user_pos"),
                     ("ris_pos", "user_pos")):
            if _dist(getattr(self, a), getattr(self, b)) <= 0:
                raise ValueError(f"{a} and {b} must not coincide")

    # Link distances (m)
    def dist_bs_user(self) -> float:
        return _dist(self.bs_pos, self.user_pos)

    def dist_bs_ris(self) -> float:
        return _dist(self.bs_pos, self.ris_pos)

    def dist_ris_user(self) -> float:
        return _dist(self.ris_pos, self.user_pos)

    def link_gains(self) -> tuple:
        """(beta_d, beta_t, beta_r): linear per-entry power gain of each link."""
        return (
            path_loss(self.dist_bs_user(), self.exponents[0], self),
            path_loss(self.dist_bs_ris(), self.exponents[1], self),
            path_loss(self.dist_ris_user(), self.exponents[2], self),
        )


def _dist(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


@dataclass(frozen=True)
class ChannelSet:
    """One realization of the three links plus their large-scale gains.

    h_direct:  n_rx x n_tx   (BS -> user)
    h_tx_ris:  n_ris x n_tx  (BS -> HRIS)
    h_ris_rx:  n_rx x n_ris  (HRIS -> user)
    betas:     (beta_d, beta_t, beta_r), carried so state encoding can
               normalize each block without re-deriving the geometry.
    """
    h_direct: np.ndarray
    h_tx_ris: np.ndarray
    h_ris_rx: np.ndarray
    betas: tuple


def path_loss(d: float, exponent: float, geo: GeometryParams) -> float:
    """Linear power gain beta(d) = beta0 * (d/d0)^(-exponent)."""
    if d <= 0:
        raise ValueError("distance must be > 0")
    return db_to_linear(geo.beta0_db) * (d / geo.d0) ** (-exponent)


def steering_vector(n_elements: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA steering vector, entry k = exp(j*pi*k*sin(angle))."""
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    k = np.arange(n_elements)
    return np.exp(1j * np.pi * k * math.sin(angle))


def _azimuth(src, dst) -> float:
    return math.atan2(dst[1] - src[1], dst[0] - src[0])


def _los_matrix(n_rx: int, n_tx: int, rx_pos, tx_pos) -> np.ndarray:
    """Rank-1 LoS outer product a_rx(angle_rx) a_tx(angle_tx)^H.

    Arrays are modelled as ULAs; each node sees the link at the azimuth of
    the straight line towards the other node.
    """
    a_rx = steering_vector(n_rx, _azimuth(rx_pos, tx_pos))
    a_tx = steering_vector(n_tx, _azimuth(tx_pos, rx_pos))
    return np.outer(a_rx, a_tx.conj())


def _draw_link(rng: np.random.Generator, count: int, n_rx: int, n_tx: int,
               beta: float, kappa: float, los: np.ndarray) -> np.ndarray:
    """count stacked draws of sqrt(beta) * (LoS/NLoS Rician mixture)."""
    if math.isinf(kappa):
        small = np.broadcast_to(los, (count, n_rx, n_tx)).copy()
    else:
        w = rng.standard_normal((count, n_rx, n_tx))
        w = w + 1j * rng.standard_normal((count, n_rx, n_tx))
        nlos = w / math.sqrt(2.0)
        if kappa == 0.0:
            small = nlos
        else:
            small = (math.sqrt(kappa / (1.0 + kappa)) * los
                     + math.sqrt(1.0 / (1.0 + kappa)) * nlos)
    return math.sqrt(beta) * small


def draw_channels(cfg: SystemConfig, geo: GeometryParams, seed,
                  count: int) -> ChannelSet:
    """Draw `count` i.i.d. realizations of all three links, stacked.

    Returns a ChannelSet whose matrices have a leading batch axis of length
    `count`. The draw is a pure function of (cfg, geo, seed, count); it does
    not depend on n_active, so evaluations with different active-set sizes
    can be paired on identical realizations.
    """
    rng = np.random.default_rng(seed)
    beta_d, beta_t, beta_r = geo.link_gains()
    los_d = _los_matrix(cfg.n_rx, cfg.n_tx, geo.user_pos, geo.bs_pos)
    los_t = _los_matrix(cfg.n_ris, cfg.n_tx, geo.ris_pos, geo.bs_pos)
    los_r = _los_matrix(cfg.n_rx, cfg.n_ris, geo.user_pos, geo.ris_pos)
    kd, kt, kr = geo.rician_k
    h_d = _draw_link(rng, count, cfg.n_rx, cfg.n_tx, beta_d, kd, los_d)
    h_t = _draw_link(rng, count, cfg.n_ris, cfg.n_tx, beta_t, kt, los_t)
    h_r = _draw_link(rng, count, cfg.n_rx, cfg.n_ris, beta_r, kr, los_r)
    return ChannelSet(h_d, h_t, h_r, (beta_d, beta_t, beta_r))


def draw_channel(cfg: SystemConfig, geo: GeometryParams, seed) -> ChannelSet:
    """Draw one realization (pure in (cfg, geo, seed))."""
    batch = draw_channels(cfg, geo, seed, 1)
    return ChannelSet(batch.h_direct[0], batch.h_tx_ris[0], batch.h_ris_rx[0],
                      batch.betas)


def channel_at(batch: ChannelSet, i: int) -> ChannelSet:
    """View of realization i of a batched ChannelSet."""
    return ChannelSet(batch.h_direct[i], batch.h_tx_ris[i], batch.h_ris_rx[i],
                      batch.betas)


def state_dim(cfg: SystemConfig) -> int:
    """Length of the flattened-CSI state vector."""
    return 2 * (cfg.n_rx * cfg.n_tx + cfg.n_ris * cfg.n_tx
                + cfg.n_rx * cfg.n_ris)


def action_dim(cfg: SystemConfig) -> int:
    """Length of the raw action vector: precoder Re/Im + amplitudes + phases."""
    return 2 * cfg.n_tx * cfg.n_streams + 2 * cfg.n_ris

"""Scenario geometry, path loss, and fading for a two-cell RIS-assisted network.

Two base stations share one reflecting surface placed at the cell edge.  All
downstream code consumes the per-(BS, MS) cascade matrices ``D`` and direct
vectors ``h_d``; the split of the large-scale gain between the two reflected
hops is unobservable once ``D`` is formed.
"""

from dataclasses import dataclass, field

import numpy as np

PATH_LOSS_REF = 10.0 ** (-3.53)
PATH_LOSS_EXPONENT = 3.76

# Minimum horizontal BS-MS distance when dropping users, in meters.
MIN_DROP_DISTANCE_M = 10.0

# Cell-edge drops place the MS within this horizontal radius of the surface.
EDGE_DROP_RADIUS_M = 40.0


@dataclass(frozen=True)
class SystemConstants:
    """System-level constants; defaults follow the reference two-cell setup."""

    carrier_freq_hz: float = 3e9
    bandwidth_hz: float = 20e6
    noise_density_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    ris_amplitude: float = 1.0      # reflection loss rho, common to all elements
    bs_antennas: int = 64           # N_B per BS
    ris_elements: int = 64          # N_R
    users: int = 20                 # K across both cells
    inter_site_distance_m: float = 300.0
    bs_height_m: float = 25.0
    ris_height_m: float = 40.0
    ms_height_m: float = 1.5
    max_bs_power_w: float = 10.0    # per-BS downlink budget

    def __post_init__(self):
        if min(self.bs_antennas, self.ris_elements, self.users) < 1:
            raise ValueError("antenna/element/user counts must be >= 1")
        if not 0.0 < self.ris_amplitude <= 1.0:
            raise ValueError("ris_amplitude must lie in (0, 1]")
        if min(self.inter_site_distance_m, self.bs_height_m, self.ris_height_m,
               self.ms_height_m) <= 0.0:
            raise ValueError("distances and heights must be positive")
        if self.bandwidth_hz <= 0.0:
            raise ValueError("bandwidth must be positive")


@dataclass
class RisConfig:
    """Reflection amplitude and one phase per element, radians in [-pi, pi]."""

    rho: float
    phases: np.ndarray

    def __post_init__(self):
        self.phases = np.atleast_1d(np.asarray(self.phases, dtype=float))

    def canonical(self) -> "RisConfig":
        """Wrap every phase into [-pi, pi] (2*pi-periodic, objective unchanged)."""
        wrapped = np.angle(np.exp(1j * self.phases))
        return RisConfig(self.rho, wrapped)

    def vector(self) -> np.ndarray:
        """Complex reflection coefficients rho * exp(j*phase)."""
        return self.rho * np.exp(1j * self.phases)


@dataclass
class Scenario:
    """Geometry and large-scale coefficients of one network drop."""

    bs_positions: np.ndarray     # (2, 3) meters
    ris_position: np.ndarray     # (3,) meters
    ms_positions: np.ndarray     # (K, 3) meters
    beta_reflected: np.ndarray   # (2, K) linear gain of the BS-RIS-MS path
    beta_direct: np.ndarray      # (2, K) linear gain of the BS-MS path
    association: np.ndarray = field(default=None)  # (2, K) in {0,1}

    def __post_init__(self):
        k = self.ms_positions.shape[0]
        if self.association is None:
            self.association = np.zeros((2, k), dtype=int)
        if np.any(self.beta_reflected <= 0) or np.any(self.beta_direct <= 0):
            raise ValueError("large-scale gains must be strictly positive")
        if np.any(self.beta_reflected > 1) or np.any(self.beta_direct > 1):
            raise ValueError("large-scale gains must not exceed 1")

    @property
    def num_users(self) -> int:
        return self.ms_positions.shape[0]


@dataclass
class ChannelSet:
    """One fading realization for both BSs.

    ``ris_bs`` and ``ms_ris`` hold unit-variance fast fading; the large-scale
    gain of the reflected path is folded into ``cascade`` and the direct path
    loss into ``direct``.
    """

    ris_bs: np.ndarray    # (2, N_B, N_R) fast fading RIS -> BS
    ms_ris: np.ndarray    # (K, N_R) fast fading MS -> RIS
    direct: np.ndarray    # (2, K, N_B) direct channels, path loss included
    cascade: np.ndarray   # (2, K, N_B, N_R) cascade matrices D

    @property
    def num_users(self) -> int:
        return self.ms_ris.shape[0]


def path_loss(distance_m: float) -> float:
    """Distance-based power attenuation 10^-3.53 / d^3.76.

    For the reflected path apply this to the summed hop length
    d(BS, RIS) + d(RIS, MS); see :func:`reflected_path_loss`.
    """
    distance_m = np.asarray(distance_m, dtype=float)
    if np.any(distance_m <= 0):
        raise ValueError("path_loss requires a positive distance")
    return PATH_LOSS_REF / distance_m ** PATH_LOSS_EXPONENT


def reflected_path_loss(d_bs_ris_m: float, d_ris_ms_m: float) -> float:
    """Attenuation of the BS -> RIS -> MS path, single power law on the summed length."""
    return path_loss(np.asarray(d_bs_ris_m, dtype=float) + np.asarray(d_ris_ms_m, dtype=float))


def noise_power(constants: SystemConstants) -> float:
    """Thermal noise power in watts over the full bandwidth, noise figure included."""
    dbm = (constants.noise_density_dbm_hz
           + 10.0 * np.log10(constants.bandwidth_hz)
           + constants.noise_figure_db)
    return float(10.0 ** ((dbm - 30.0) / 10.0))


def generate_scenario(constants: SystemConstants, rng_seed,
                      cell_edge_users: bool = False) -> Scenario:
    """Drop MSs in the two cells and fill the large-scale gains.

    The two BSs sit on the x axis, the RIS halfway between them at its own
    height.  User k belongs to cell (k mod 2); by default its horizontal
    position is uniform on a disc of radius half the inter-site distance
    around the cell's BS, at least MIN_DROP_DISTANCE_M away from it.  With
    ``cell_edge_users`` the drop is instead uniform within
    EDGE_DROP_RADIUS_M of the surface, on the serving cell's side, which is
    the placement the surface is deployed for.  Association starts empty.
    """
    rng = np.random.default_rng(rng_seed)
    d = constants.inter_site_distance_m
    bs = np.array([[0.0, 0.0, constants.bs_height_m],
                   [d, 0.0, constants.bs_height_m]])
    ris = np.array([d / 2.0, 0.0, constants.ris_height_m])

    k = constants.users
    radius = d / 2.0
    ms = np.empty((k, 3))
    for idx in range(k):
        cell = idx % 2
        while True:
            if cell_edge_users:
                r = EDGE_DROP_RADIUS_M * np.sqrt(rng.uniform())
                theta = rng.uniform(0.0, 2.0 * np.pi)
                xy = ris[:2] + [r * np.cos(theta), r * np.sin(theta)]
            else:
                r = radius * np.sqrt(rng.uniform())
                theta = rng.uniform(0.0, 2.0 * np.pi)
                xy = bs[cell, :2] + [r * np.cos(theta), r * np.sin(theta)]
            horiz = np.linalg.norm(xy - bs[cell, :2])
            if MIN_DROP_DISTANCE_M <= horiz <= radius:
                break
        ms[idx] = [xy[0], xy[1], constants.ms_height_m]

    d_bs_ms = np.linalg.norm(bs[:, None, :] - ms[None, :, :], axis=2)   # (2, K)
    d_bs_ris = np.linalg.norm(bs - ris, axis=1)                         # (2,)
    d_ris_ms = np.linalg.norm(ms - ris, axis=1)                         # (K,)

    return Scenario(
        bs_positions=bs,
        ris_position=ris,
        ms_positions=ms,
        beta_reflected=reflected_path_loss(d_bs_ris[:, None], d_ris_ms[None, :]),
        beta_direct=path_loss(d_bs_ms),
    )


def _crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    """i.i.d. CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_fading(scenario: Scenario, constants: SystemConstants,
                  rng: np.random.Generator) -> ChannelSet:
    """Draw one Rayleigh realization and form the cascade matrices.

    D[i, k](m, n) = H_i(m, n) * sqrt(beta_reflected[i, k]) * h_k(n), so that
    H_i Phi (sqrt(beta) h_k) = D[i, k] phi for every RIS configuration.
    """
    n_b = constants.bs_antennas
    n_r = constants.ris_elements
    k = scenario.num_users

    ris_bs = _crandn(rng, 2, n_b, n_r)
    ms_ris = _crandn(rng, k, n_r)
    direct = (np.sqrt(scenario.beta_direct)[:, :, None]
              * _crandn(rng, 2, k, n_b))

    # per-(BS, MS) scaled copy of the user fading, then elementwise product
    scaled_users = np.sqrt(scenario.beta_reflected)[:, :, None] * ms_ris[None, :, :]
    cascade = ris_bs[:, None, :, :] * scaled_users[:, :, None, :]

    return ChannelSet(ris_bs=ris_bs, ms_ris=ms_ris, direct=direct, cascade=cascade)


def composite_channel(cascade: np.ndarray, direct: np.ndarray,
                      cfg: RisConfig) -> np.ndarray:
    """Composite channel D @ phi + h_d for one (BS, MS) pair."""
    cascade = np.asarray(cascade)
    direct = np.asarray(direct)
    phi = cfg.vector()
    if cascade.shape != (direct.shape[0], phi.shape[0]):
        raise ValueError(
            f"dimension mismatch: cascade {cascade.shape}, direct {direct.shape}, "
            f"phases {phi.shape}")
    return cascade @ phi + direct

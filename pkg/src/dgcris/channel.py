"""Scenario configuration and random channel generation.

All powers are linear milliwatts. Conversions from dB/dBm happen only at the
CLI/config boundary (see :func:`dbm_to_mw`).

Random numbers come from numpy's PCG64 bit generator seeded through a
``SeedSequence`` whose entropy is the scenario seed and whose spawn key is
``(trial_index, stream)``. Stream 0 draws channels, stream 1 draws the
initial RIS phases. The construction is platform independent, so a given
``(seed, trial_index)`` always reproduces the same realization.
"""

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

CHANNEL_STREAM = 0
PHASE_STREAM = 1

REFLECTIVE = "reflective"
TRANSMISSIVE = "transmissive"


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_mw(p_dbm):
    """dBm -> mW. -80 dBm gives 1e-8 mW."""
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def mw_to_dbm(p_mw):
    return 10.0 * np.log10(p_mw)


def trial_rng(seed: int, trial_index: int, stream: int = CHANNEL_STREAM) -> np.random.Generator:
    """Generator for one (seed, trial, stream) triple."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial_index), int(stream)))
    return np.random.Generator(np.random.PCG64(ss))


def square_grid(num_cells: int) -> tuple[int, int]:
    """Most square ``rows x cols`` factorization of ``num_cells`` (rows <= cols)."""
    rows = int(np.floor(np.sqrt(num_cells)))
    while num_cells % rows:
        rows -= 1
    return rows, num_cells // rows


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters.

    Defaults follow the 36-cell evaluation setup: N = K = 6, three users on
    each side of the surface, P = 38 dBm, sigma^2 = -80 dBm, zeta0 = -30 dB
    at d0 = 1 m, d_BI = 100 m, d_IU = 10 m. The pathloss exponents and the
    Rician factor are not reported for that setup; 2.2 / 2.8 / 2 are used.
    """

    num_bs_antennas: int = 6
    num_users: int = 6
    num_reflective: int = 3
    num_cells: int = 36
    num_groups: int = 12
    grid_rows: int = 6
    grid_cols: int = 6
    transmit_power_mw: float = float(10 ** 3.8)
    noise_power_mw: float | tuple[float, ...] = 1e-8
    ref_gain: float = 1e-3
    ref_distance: float = 1.0
    dist_bs_ris: float = 100.0
    dist_ris_user: float = 10.0
    pathloss_exp_bi: float = 2.2
    pathloss_exp_iu: float = 2.8
    rician_factor: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("num_bs_antennas", "num_users", "num_cells", "num_groups",
                     "grid_rows", "grid_cols"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0 <= self.num_reflective <= self.num_users:
            raise ValueError("num_reflective must lie in [0, num_users]")
        if self.num_groups > self.num_cells:
            raise ValueError("num_groups must not exceed num_cells")
        if self.grid_rows * self.grid_cols != self.num_cells:
            raise ValueError(
                f"grid {self.grid_rows}x{self.grid_cols} does not hold {self.num_cells} cells")
        for name in ("transmit_power_mw", "ref_gain", "ref_distance", "dist_bs_ris",
                     "dist_ris_user", "pathloss_exp_bi", "pathloss_exp_iu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if np.any(self.noise_powers() <= 0):
            raise ValueError("noise_power_mw must be positive")
        if self.rician_factor < 0:
            raise ValueError("rician_factor must be nonnegative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def num_transmissive(self) -> int:
        return self.num_users - self.num_reflective

    def noise_powers(self) -> np.ndarray:
        """Per-user noise power in mW, length K."""
        sigma2 = np.asarray(self.noise_power_mw, dtype=float)
        if sigma2.ndim == 0:
            return np.full(self.num_users, float(sigma2))
        if sigma2.shape != (self.num_users,):
            raise ValueError("noise_power_mw must be a scalar or have one entry per user")
        return sigma2.copy()

    def user_sides(self) -> list[str]:
        return [REFLECTIVE] * self.num_reflective + [TRANSMISSIVE] * self.num_transmissive

    def with_cells(self, num_cells: int, num_groups: int | None = None) -> "SystemConfig":
        """Copy with a new cell count laid out on the most square grid."""
        rows, cols = square_grid(num_cells)
        return replace(self, num_cells=num_cells, grid_rows=rows, grid_cols=cols,
                       num_groups=self.num_groups if num_groups is None else num_groups)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """One channel realization.

    ``bs_ris`` is the M x N BS-RIS matrix, ``ris_user`` is K x M with row k
    holding h_k (so ``ris_user[k].conj()`` is h_k^H).
    """

    bs_ris: np.ndarray
    ris_user: np.ndarray
    user_side: tuple[str, ...] = field(default=())

    @property
    def num_users(self) -> int:
        return self.ris_user.shape[0]

    @property
    def num_cells(self) -> int:
        return self.bs_ris.shape[0]

    def reflective_mask(self) -> np.ndarray:
        return np.array([s == REFLECTIVE for s in self.user_side], dtype=bool)

    def __eq__(self, other):
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return (np.array_equal(self.bs_ris, other.bs_ris)
                and np.array_equal(self.ris_user, other.ris_user)
                and self.user_side == other.user_side)


def pathloss(d: float, exponent: float, ref_gain: float, ref_distance: float) -> float:
    """Distance-dependent large-scale gain ``ref_gain * (d / ref_distance) ** -exponent``."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    if not ref_distance > 0 or not ref_gain > 0:
        raise ValueError("reference distance and gain must be positive")
    return float(ref_gain * (d / ref_distance) ** (-exponent))


def ula_steering(length: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA response, unit-modulus entries."""
    return np.exp(1j * np.pi * np.arange(length) * np.sin(angle))


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    # unit-variance circularly symmetric complex Gaussian
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def draw_rician(rows: int, cols: int, kappa: float, gain: float,
                rng: np.random.Generator) -> np.ndarray:
    """Rician matrix with rank-one ULA line-of-sight part.

    The LoS angles are drawn first (uniform on [0, 2pi)), then the NLoS
    entries, so the draw order is fixed for reproducibility.
    """
    if kappa < 0:
        raise ValueError("Rician factor must be nonnegative")
    if not gain > 0:
        raise ValueError("gain must be positive")
    theta, psi = rng.uniform(0.0, 2.0 * np.pi, size=2)
    los = np.outer(ula_steering(rows, theta), ula_steering(cols, psi).conj())
    nlos = _cn(rng, (rows, cols))
    if kappa == 0:
        return np.sqrt(gain) * nlos
    return np.sqrt(gain) * (np.sqrt(kappa / (1.0 + kappa)) * los
                            + np.sqrt(1.0 / (1.0 + kappa)) * nlos)


def draw_rayleigh(length: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    if not gain > 0:
        raise ValueError("gain must be positive")
    return np.sqrt(gain) * _cn(rng, length)


def generate_channels(config: SystemConfig, trial_index: int) -> ChannelSet:
    rng = trial_rng(config.seed, trial_index, CHANNEL_STREAM)
    gain_bi = pathloss(config.dist_bs_ris, config.pathloss_exp_bi,
                       config.ref_gain, config.ref_distance)
    gain_iu = pathloss(config.dist_ris_user, config.pathloss_exp_iu,
                       config.ref_gain, config.ref_distance)
    bs_ris = draw_rician(config.num_cells, config.num_bs_antennas,
                         config.rician_factor, gain_bi, rng)
    ris_user = np.stack([draw_rayleigh(config.num_cells, gain_iu, rng)
                         for _ in range(config.num_users)])
    return ChannelSet(bs_ris=bs_ris, ris_user=ris_user,
                      user_side=tuple(config.user_sides()))


def sides_from_counts(num_users: int, num_reflective: int) -> tuple[str, ...]:
    return tuple([REFLECTIVE] * num_reflective + [TRANSMISSIVE] * (num_users - num_reflective))


def make_channel_set(bs_ris, ris_user, user_side: Sequence[str]) -> ChannelSet:
    """Wrap user-supplied arrays (used by tests and small hand-built cases)."""
    bs_ris = np.atleast_2d(np.asarray(bs_ris, dtype=complex))
    ris_user = np.atleast_2d(np.asarray(ris_user, dtype=complex))
    if ris_user.shape[1] != bs_ris.shape[0]:
        raise ValueError("ris_user rows must have one entry per RIS cell")
    if len(user_side) != ris_user.shape[0]:
        raise ValueError("one side label per user required")
    return ChannelSet(bs_ris=bs_ris, ris_user=ris_user, user_side=tuple(user_side))

"""Seeded toy world with the structure of the ensemble simulations: one
continent per hemisphere, shared seasonal climate, and several fire
ensemble members that differ only in their internal variability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import CLIMATE_FEATURES, EnsembleMember, LandMask

TEST_MEMBER = 4


@dataclass(frozen=True)
class SynthConfig:
    lat_count: int = 12
    lon_count: int = 16
    months: int = 120
    members: int = 5
    seed: int = 0
    phase_offset: int = 6
    noise: float = 0.05
    persistence: float = 0.9
    steepness: float = 3.0

    def __post_init__(self):
        if self.months < 12 or self.months % 12:
            raise ValueError("months must be a positive multiple of 12")
        if self.members < 2:
            raise ValueError("need at least two ensemble members")
        if self.lat_count < 4 or self.lon_count < 4:
            raise ValueError("grid must be at least 4 x 4")


@dataclass(frozen=True)
class SynthWorld:
    mask: LandMask
    climate: dict            # variable -> (N, months)
    members: list            # EnsembleMember
    hemisphere: np.ndarray   # +1 north, -1 south, per node
    region: np.ndarray       # region id per node
    vegetated: np.ndarray    # False on desert nodes (fire identically 0)

    def member(self, ident: int) -> EnsembleMember:
        for m in self.members:
            if m.id == ident:
                return m
        raise KeyError(ident)


def _continents(lat: int, lon: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows, cols = np.mgrid[0:lat, 0:lon].astype(np.float64)
    half = lat / 2.0
    ry, rx = 0.42 * half, 0.32 * lon
    north = ((rows - 0.5 * half + 0.25) / ry) ** 2 + ((cols - 0.35 * lon) / rx) ** 2 <= 1.0
    south = ((rows - 1.5 * half + 0.25) / ry) ** 2 + ((cols - 0.65 * lon) / rx) ** 2 <= 1.0
    # desert: eastern tip of the northern continent
    desert = north & (cols >= 0.35 * lon + 0.55 * rx)
    return north | south, north, desert


def generate(config: SynthConfig = SynthConfig()) -> SynthWorld:
    """Build mask, four climate series and ``config.members`` fire members.

    All series are in [0, 1]. With ``noise = 0`` every series is exactly
    periodic with period 12.
    """
    rng = np.random.default_rng(config.seed)
    land, north, desert = _continents(config.lat_count, config.lon_count)
    mask = LandMask.from_array(land)
    cells = mask.node_to_cell
    n = mask.node_count
    hemi = np.where(north[cells[:, 0], cells[:, 1]], 1, -1)
    vegetated = ~desert[cells[:, 0], cells[:, 1]]
    # west/east halves of each continent are separate anomaly regions
    west = cells[:, 1] < np.where(hemi > 0, 0.35, 0.65) * config.lon_count
    region = (hemi < 0).astype(int) * 2 + (~west).astype(int)

    t = np.arange(config.months)
    peak = np.where(hemi > 0, 6, 6 + config.phase_offset)            # July north
    phase = (t[None, :] - peak[:, None]) % 12                     # exact period 12
    season = np.cos(2 * np.pi * phase / 12.0)                        # (N, months)
    amp = {"T": 0.35, "Hum": -0.3, "R": -0.3, "L": 0.3}
    climate = {}
    for name in CLIMATE_FEATURES:
        noise = config.noise * rng.standard_normal((n, config.months))
        climate[name] = np.clip(0.5 + amp[name] * season + noise, 0.0, 1.0)
    drive = climate["T"] + climate["L"] - climate["Hum"] - climate["R"]

    members = []
    n_regions = int(region.max()) + 1
    for ident in range(1, config.members + 1):
        shocks = rng.standard_normal((n_regions, config.months))
        anomaly = np.zeros_like(shocks)
        for k in range(1, config.months):
            anomaly[:, k] = config.persistence * anomaly[:, k - 1] + shocks[:, k]
        anomaly *= 4.0 * config.noise
        logits = config.steepness * (drive - 0.6) + anomaly[region]
        fire = 1.0 / (1.0 + np.exp(-logits))
        fire += config.noise * rng.standard_normal((n, config.months))
        fire = np.clip(fire, 0.0, 1.0) * vegetated[:, None]
        role = "test" if ident == TEST_MEMBER else "train"
        members.append(EnsembleMember(ident, fire, role))
    return SynthWorld(mask, climate, members, hemi, region, vegetated)

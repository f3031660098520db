"""Vehicle-satellite link geometry and received-power arithmetic.

All powers are dBm, gains dBi, distances km unless a suffix says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

SPEED_OF_LIGHT_M_S = 299_792_458.0


@dataclass(frozen=True)
class OrbitGeometry:
    """Spherical-Earth geometry between a ground vehicle and a LEO satellite."""

    earth_radius_km: float = 6378.0
    orbit_height_km: float = 780.0
    elevation_deg: float = 75.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.earth_radius_km) and self.earth_radius_km > 0):
            raise ValueError(f"earth radius must be positive, got {self.earth_radius_km}")
        if not (math.isfinite(self.orbit_height_km) and self.orbit_height_km > 0):
            raise ValueError(f"orbit height must be positive, got {self.orbit_height_km}")
        if not (0.0 < self.elevation_deg <= 90.0):
            raise ValueError(
                f"elevation must lie in (0, 90] degrees, got {self.elevation_deg}"
            )


@dataclass(frozen=True)
class LinkBudget:
    """Transmit-side and noise parameters of one satellite hop."""

    tx_power_dbm: float = 15.0
    tx_gain_dbi: float = 10.0
    rx_gain_dbi: float = 0.0
    carrier_hz: float = 868e6
    noise_power_dbm: float = -134.33
    geometry: OrbitGeometry = field(default_factory=OrbitGeometry)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.carrier_hz) and self.carrier_hz > 0):
            raise ValueError(f"carrier frequency must be positive, got {self.carrier_hz}")
        for name in ("tx_power_dbm", "tx_gain_dbi", "rx_gain_dbi", "noise_power_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT_M_S / self.carrier_hz

    def with_tx_power(self, tx_power_dbm: float) -> "LinkBudget":
        return replace(self, tx_power_dbm=tx_power_dbm)


def slant_range(geometry: OrbitGeometry, formula: str = "corrected") -> float:
    """Line-of-sight ground-to-satellite distance in km.

    ``corrected`` evaluates the spherical-Earth slant range
    sqrt((H+R)^2 - (R cos a)^2) - R sin a, factored so that at zenith
    (a = 90 deg) the result is exactly the orbit height for integer inputs.
    ``as_printed`` keeps an alternative form whose ratio under the root is
    (H+R)/H instead of (H+R)/R; it produces ranges three orders of magnitude
    too long for LEO altitudes and exists only so that audits can reproduce
    the uncorrected arithmetic.
    """
    alpha = math.radians(geometry.elevation_deg)
    r = geometry.earth_radius_km
    h = geometry.orbit_height_km
    if formula == "corrected":
        return math.sqrt((h + r) ** 2 - (r * math.cos(alpha)) ** 2) - r * math.sin(alpha)
    if formula == "as_printed":
        ratio = (h + r) / h
        return r * (math.sqrt(ratio**2 - math.cos(alpha) ** 2) - math.sin(alpha))
    raise ValueError(f"unknown slant-range formula: {formula!r}")


def free_space_path_loss_db(distance_km: float, wavelength_m: float) -> float:
    """20 log10(4 pi d / lambda) with d converted to metres."""
    if not (math.isfinite(distance_km) and distance_km > 0):
        raise ValueError(f"distance must be positive, got {distance_km}")
    if not (math.isfinite(wavelength_m) and wavelength_m > 0):
        raise ValueError(f"wavelength must be positive, got {wavelength_m}")
    return 20.0 * math.log10(4.0 * math.pi * distance_km * 1000.0 / wavelength_m)


def friis_received_power(link: LinkBudget, distance_km: float) -> float:
    """Received power in dBm after free-space spreading over ``distance_km``."""
    path_db = free_space_path_loss_db(distance_km, link.wavelength_m)
    return link.tx_power_dbm + link.tx_gain_dbi + link.rx_gain_dbi - path_db


def receive_snr(link: LinkBudget, formula: str = "corrected") -> float:
    """Post-spreading SNR in dB at the satellite for the configured geometry."""
    d = slant_range(link.geometry, formula)
    return friis_received_power(link, d) - link.noise_power_dbm

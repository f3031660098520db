"""Rayleigh block-fading channel with additive white Gaussian noise.

One fading draw covers one transmitted block (all latent symbols of one
image); noise is drawn per symbol. The semantic path uses a real-valued
fading magnitude, the modem path uses the complex circular coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

# |h| below this is treated as an erased block by the equalizer.
H_FLOOR = 1e-3

FADING_KINDS = ("real_magnitude", "complex")

Fade = Union[float, complex]


@dataclass(frozen=True)
class ChannelRealization:
    """One block's channel state: fading coefficient and noise variance."""

    h: Fade
    sigma2: float
    seed_state: object = None


def sample_fading(rng: np.random.Generator, kind: str = "real_magnitude") -> Fade:
    """Draw one unit-mean-square fading coefficient.

    ``real_magnitude``: Rayleigh amplitude with E[h^2] = 1 (scale 1/sqrt 2).
    ``complex``: circularly symmetric CN(0, 1).
    """
    if kind == "real_magnitude":
        return float(rng.rayleigh(scale=1.0 / math.sqrt(2.0)))
    if kind == "complex":
        re, im = rng.standard_normal(2)
        return complex(re, im) / math.sqrt(2.0)
    raise ValueError(f"unknown fading kind: {kind!r}")


def noise_variance_from_snr(snr_db: float, signal_power: float = 1.0) -> float:
    """sigma^2 such that signal_power / sigma^2 matches ``snr_db``."""
    if not signal_power > 0:
        raise ValueError(f"signal power must be positive, got {signal_power}")
    if math.isnan(snr_db):
        raise ValueError("snr_db must not be NaN")
    return signal_power / 10.0 ** (snr_db / 10.0)


def transmit(
    x: np.ndarray,
    h: Fade,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """y = h x + n with n white Gaussian of total variance ``sigma2``.

    Real inputs get real noise N(0, sigma2); complex inputs (or a complex h)
    get circular noise with sigma2/2 per quadrature.
    """
    x = np.asarray(x)
    if sigma2 < 0 or not math.isfinite(sigma2):
        raise ValueError(f"noise variance must be finite and >= 0, got {sigma2}")
    if not np.all(np.isfinite(x)):
        raise ValueError("transmit input contains non-finite values")
    if np.iscomplexobj(x) or isinstance(h, complex):
        noise = (
            rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
        ) * math.sqrt(sigma2 / 2.0)
    else:
        noise = rng.standard_normal(x.shape) * math.sqrt(sigma2)
    return h * x + noise


def equalize(
    y: np.ndarray, h: Fade, h_floor: float = H_FLOOR
) -> tuple[np.ndarray, bool]:
    """Divide out a known fading coefficient.

    Returns (x_hat, fade_erased). When |h| <= h_floor the block is flagged
    erased and returned undivided; dividing by a vanishing h would only
    amplify noise into garbage.
    """
    y = np.asarray(y)
    if abs(h) <= h_floor:
        return y.copy(), True
    return y / h, False

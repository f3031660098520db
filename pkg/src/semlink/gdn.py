"""Generalized divisive normalization for the convolutional codec.

The forward form divides each channel by the square root of a learned
positive combination of all channels' squared activations; the inverse form
multiplies by it. Parameters are reparameterized through an offset softplus
so beta stays strictly positive and gamma nonnegative no matter what the
optimizer does.
"""

from __future__ import annotations

import torch
from torch import nn

BETA_FLOOR = 1e-6
# softplus cannot emit exact zero; off-diagonal gamma starts here instead.
GAMMA_OFF_DIAGONAL_INIT = 1e-4


def _channel_norm(x: torch.Tensor, beta: torch.Tensor, gamma: torch.Tensor) -> torch.Tensor:
    """sqrt(beta_c + sum_k gamma_{c,k} x_k^2) at every spatial position."""
    if beta.ndim != 1 or gamma.shape != (beta.shape[0], beta.shape[0]):
        raise ValueError(
            f"beta must be (C,) and gamma (C, C); got {tuple(beta.shape)} "
            f"and {tuple(gamma.shape)}"
        )
    if bool((beta <= 0).any()):
        raise ValueError("beta must be strictly positive")
    if bool((gamma < 0).any()):
        raise ValueError("gamma must be nonnegative")
    unbatched = x.ndim == 3
    if unbatched:
        x = x.unsqueeze(0)
    if x.ndim != 4 or x.shape[1] != beta.shape[0]:
        raise ValueError(
            f"expected (N, {beta.shape[0]}, H, W) or ({beta.shape[0]}, H, W) input, "
            f"got {tuple(x.shape)}"
        )
    mixed = torch.einsum("ck,nkhw->nchw", gamma, x * x)
    norm = torch.sqrt(beta.view(1, -1, 1, 1) + mixed)
    return norm.squeeze(0) if unbatched else norm


def gdn_forward(x: torch.Tensor, beta: torch.Tensor, gamma: torch.Tensor) -> torch.Tensor:
    """y_c = x_c / sqrt(beta_c + sum_k gamma_{c,k} x_k^2)."""
    return x / _channel_norm(x, beta, gamma)


def igdn_forward(x: torch.Tensor, beta: torch.Tensor, gamma: torch.Tensor) -> torch.Tensor:
    """y_c = x_c * sqrt(beta_c + sum_k gamma_{c,k} x_k^2)."""
    return x * _channel_norm(x, beta, gamma)


def _inverse_softplus(y: torch.Tensor) -> torch.Tensor:
    # softplus(x) = log(1 + e^x)  =>  x = log(e^y - 1)
    return torch.log(torch.expm1(y))


class GDN(nn.Module):
    """Divisive normalization block with learned beta/gamma.

    Raw parameters live in softplus space: beta = BETA_FLOOR + softplus(raw),
    gamma = softplus(raw), so the forward constraints hold for every
    optimizer state. gamma starts near 0.1 * identity, beta at 1.
    """

    def __init__(self, channels: int, beta_init: float = 1.0, gamma_init: float = 0.1):
        super().__init__()
        if channels < 1:
            raise ValueError(f"channels must be >= 1, got {channels}")
        if beta_init <= BETA_FLOOR:
            raise ValueError(f"beta_init must exceed {BETA_FLOOR}, got {beta_init}")
        if gamma_init <= 0:
            raise ValueError(f"gamma_init must be positive, got {gamma_init}")
        beta_target = torch.full((channels,), float(beta_init) - BETA_FLOOR)
        gamma_target = torch.full((channels, channels), GAMMA_OFF_DIAGONAL_INIT)
        gamma_target.fill_diagonal_(float(gamma_init))
        self.raw_beta = nn.Parameter(_inverse_softplus(beta_target))
        self.raw_gamma = nn.Parameter(_inverse_softplus(gamma_target))

    @property
    def beta(self) -> torch.Tensor:
        return BETA_FLOOR + nn.functional.softplus(self.raw_beta)

    @property
    def gamma(self) -> torch.Tensor:
        return nn.functional.softplus(self.raw_gamma)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return gdn_forward(x, self.beta, self.gamma)

    def extra_repr(self) -> str:
        return f"channels={self.raw_beta.shape[0]}"


class IGDN(GDN):
    """Same parameterization as GDN, applied multiplicatively."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return igdn_forward(x, self.beta, self.gamma)

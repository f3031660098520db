"""Finite-difference checks for every differentiable building block.

Analytic gradients come from autograd; the reference side is plain float64
central differences on sampled entries, so a silent autograd misuse (a
detached tensor, an in-place clobber) cannot hide behind itself.
"""

import numpy as np
import pytest
import torch
from torch import nn

from semlink.codec import build_codec, loss_ce, loss_mse, one_hot, power_normalize
from semlink.gdn import GDN, IGDN

from helpers import torch_fd_check

TOL = 1e-4


def as_leaf(array):
    return torch.from_numpy(np.asarray(array, dtype=np.float64)).requires_grad_(True)


class TestLayerGradients:
    def test_conv2d(self, rng):
        conv = nn.Conv2d(2, 3, 5, stride=2, padding=2).double()
        x = as_leaf(rng.standard_normal((1, 2, 9, 9)))
        w = torch.from_numpy(rng.standard_normal((1, 3, 5, 5)))
        loss_fn = lambda: (conv(x) * w).sum()
        worst = torch_fd_check(loss_fn, [x, conv.weight, conv.bias])
        assert worst <= TOL

    def test_conv_transpose2d(self, rng):
        deconv = nn.ConvTranspose2d(
            3, 2, 5, stride=2, padding=2, output_padding=1
        ).double()
        y = as_leaf(rng.standard_normal((1, 3, 4, 4)))
        w = torch.from_numpy(rng.standard_normal((1, 2, 8, 8)))
        loss_fn = lambda: (deconv(y) * w).sum()
        worst = torch_fd_check(loss_fn, [y, deconv.weight, deconv.bias])
        assert worst <= TOL

    @pytest.mark.parametrize("block_cls", [GDN, IGDN])
    def test_divisive_normalization(self, rng, block_cls):
        block = block_cls(channels=3).double()
        x = as_leaf(rng.standard_normal((1, 3, 4, 4)))
        w = torch.from_numpy(rng.standard_normal((1, 3, 4, 4)))
        loss_fn = lambda: (block(x) * w).sum()
        worst = torch_fd_check(loss_fn, [x, block.raw_beta, block.raw_gamma])
        assert worst <= TOL

    def test_fully_connected(self, rng):
        fc = nn.Linear(18, 7).double()
        x = as_leaf(rng.standard_normal((2, 18)))
        w = torch.from_numpy(rng.standard_normal((2, 7)))
        loss_fn = lambda: (torch.relu(fc(x)) * w).sum()
        worst = torch_fd_check(loss_fn, [x, fc.weight, fc.bias])
        assert worst <= TOL

    def test_power_normalize(self, rng):
        x = as_leaf(rng.standard_normal((2, 4, 3, 3)))
        w = torch.from_numpy(rng.standard_normal((2, 4, 3, 3)))
        loss_fn = lambda: (power_normalize(x) * w).sum()
        assert torch_fd_check(loss_fn, [x]) <= TOL

    def test_mse_loss(self, rng):
        s = torch.from_numpy(rng.random((2, 1, 6, 6)))
        s_hat = as_leaf(rng.random((2, 1, 6, 6)))
        loss_fn = lambda: loss_mse(s, s_hat)
        assert torch_fd_check(loss_fn, [s_hat]) <= TOL

    def test_ce_loss(self, rng):
        onehot = one_hot(torch.tensor([1, 3]), num_classes=5).double()
        # interior probabilities, away from the clamp floor
        p_hat = as_leaf(rng.uniform(0.05, 0.95, size=(2, 5)))
        loss_fn = lambda: loss_ce(onehot, p_hat)
        assert torch_fd_check(loss_fn, [p_hat]) <= TOL


class TestThroughChannelGradient:
    def test_full_pipeline(self, rng):
        """Image -> encoder -> power norm -> faded noisy channel -> both heads."""
        codec = build_codec(16, "both", seed=21)
        for mod in codec.modules():
            mod.double()
        x = torch.from_numpy(rng.random((1, 1, 34, 34)))
        target = one_hot(torch.tensor([4])).double()
        h = 0.83
        noise = torch.from_numpy(0.3 * rng.standard_normal((1, 16, 3, 3)))

        def loss_fn():
            latent = power_normalize(codec.encoder(x))
            received = h * latent + noise
            recon = codec.recon_decoder(received)
            probs = codec.class_head(received)
            return loss_mse(x, recon) + loss_ce(target, probs)

        checked = [
            codec.encoder.stages[0].weight,
            codec.encoder.stages[1].raw_gamma,
            codec.encoder.stages[6].weight,
            codec.recon_decoder.stages[0].weight,
            codec.recon_decoder.stages[7].raw_beta,
            codec.class_head.fc1.weight,
            codec.class_head.fc2.bias,
        ]
        worst = torch_fd_check(loss_fn, checked, n_samples=4)
        assert worst <= TOL

    def test_channel_slope_is_fading_coefficient(self, rng):
        """d(received)/d(latent) equals h when noise is additive."""
        latent = as_leaf(rng.standard_normal((1, 8, 3, 3)))
        h = 0.64
        noise = torch.from_numpy(rng.standard_normal((1, 8, 3, 3)))
        (h * latent + noise).sum().backward()
        torch.testing.assert_close(
            latent.grad, torch.full_like(latent.grad, h), rtol=0, atol=1e-12
        )

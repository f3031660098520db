"""Channel-in-the-loop training for the semantic codec.

Every batch is encoded, power-normalized, pushed through a freshly sampled
fading-plus-noise realization (one fading coefficient per image), and
decoded by the task heads; the loss gradient flows back through the channel
with h and the noise treated as constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from . import channel as ch
from .codec import (
    SemanticCodec,
    TASKS,
    build_codec,
    loss_ce,
    loss_mse,
    one_hot,
    power_normalize,
)
from .data import Dataset
from .link_budget import LinkBudget, receive_snr

FADING_CHOICES = ("real_magnitude", "none")


class TrainingDiverged(RuntimeError):
    """Raised when the loss leaves the reals; carries epoch/batch context."""


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    # None -> use link.tx_power_dbm as the training transmit power.
    tx_power_dbm: float | None = None
    # Direct SNR in dB, bypassing the link budget; math.inf -> noiseless.
    snr_db_override: float | None = None
    fading: str = "real_magnitude"
    equalize_received: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.fading not in FADING_CHOICES:
            raise ValueError(f"fading must be one of {FADING_CHOICES}, got {self.fading!r}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None


def training_sigma2(cfg: TrainConfig, link: LinkBudget) -> float:
    """Noise variance implied by the config: either the link budget at the
    training transmit power, or a direct SNR override."""
    if cfg.snr_db_override is not None:
        snr_db = cfg.snr_db_override
        if snr_db == math.inf:
            return 0.0
    else:
        lb = link if cfg.tx_power_dbm is None else link.with_tx_power(cfg.tx_power_dbm)
        snr_db = receive_snr(lb)
    return ch.noise_variance_from_snr(snr_db, signal_power=1.0)


def apply_channel(
    latent: torch.Tensor,
    sigma2: float,
    rng: np.random.Generator,
    fading: str = "real_magnitude",
    equalize: bool = False,
) -> torch.Tensor:
    """One fading draw per sample, Gaussian noise per element; h and noise
    enter as constants so the gradient w.r.t. the latent is exactly h."""
    n = latent.shape[0]
    if fading == "real_magnitude":
        h = rng.rayleigh(scale=1.0 / math.sqrt(2.0), size=(n, 1, 1, 1))
    elif fading == "none":
        h = np.ones((n, 1, 1, 1))
    else:
        raise ValueError(f"fading must be one of {FADING_CHOICES}, got {fading!r}")
    h_t = torch.from_numpy(h.astype(np.float32))
    y = h_t * latent
    if sigma2 > 0.0:
        noise = rng.standard_normal(latent.shape) * math.sqrt(sigma2)
        y = y + torch.from_numpy(noise.astype(np.float32))
    if equalize:
        y = y / torch.clamp(h_t, min=ch.H_FLOOR)
    return y


def forward_pass(
    codec: SemanticCodec,
    images: torch.Tensor,
    task: str,
    sigma2: float,
    rng: np.random.Generator,
    fading: str = "real_magnitude",
    equalize: bool = False,
) -> dict:
    """Encode -> channel -> active decoders. Returns whatever heads ran."""
    latent = power_normalize(codec.encoder(images))
    received = apply_channel(latent, sigma2, rng, fading=fading, equalize=equalize)
    out: dict = {"latent": latent, "received": received}
    if task in ("reconstruct", "both"):
        out["recon"] = codec.recon_decoder(received)
    if task in ("classify", "both"):
        out["probs"] = codec.class_head(received)
    return out


def batch_loss(out: dict, images: torch.Tensor, onehot: torch.Tensor | None, task: str) -> torch.Tensor:
    total = None
    if task in ("reconstruct", "both"):
        total = loss_mse(images, out["recon"])
    if task in ("classify", "both"):
        ce = loss_ce(onehot, out["probs"])
        total = ce if total is None else total + ce
    return total


def _dataset_tensors(dataset: Dataset) -> tuple[torch.Tensor, torch.Tensor]:
    images = torch.from_numpy(dataset.images().astype(np.float32)).unsqueeze(1)
    labels = torch.from_numpy(dataset.labels())
    return images, labels


def evaluate_loss(
    codec: SemanticCodec,
    dataset: Dataset,
    task: str,
    sigma2: float,
    rng: np.random.Generator,
    fading: str = "real_magnitude",
    equalize: bool = False,
    batch_size: int = 256,
) -> float:
    """Loss over a dataset under fresh channel realizations, no grad."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    images, labels = _dataset_tensors(dataset)
    onehot = one_hot(labels)
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            xb = images[start : start + batch_size]
            ob = onehot[start : start + batch_size]
            out = forward_pass(codec, xb, task, sigma2, rng, fading, equalize)
            loss = batch_loss(out, xb, ob, task)
            total += float(loss) * len(xb)
            count += len(xb)
    return total / count


def train(
    train_set: Dataset,
    val_set: Dataset | None,
    task: str,
    cfg: TrainConfig,
    link: LinkBudget,
    code_size: int,
) -> tuple[SemanticCodec, list[EpochStats]]:
    """Train a codec for ``task`` at one configured transmit power.

    Fresh fading and noise are drawn for every image in every batch; h and
    noise are constants in the backward pass. Aborts on a non-finite loss.
    Same config and data give bit-identical parameters.
    """
    cfg.validate()
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    if len(train_set) == 0:
        raise ValueError("cannot train on an empty dataset")

    sigma2 = training_sigma2(cfg, link)
    codec = build_codec(code_size, task, seed=cfg.seed)
    images, labels = _dataset_tensors(train_set)
    onehot = one_hot(labels)

    seeds = np.random.SeedSequence(cfg.seed)
    shuffle_rng, channel_rng, val_rng = (
        np.random.default_rng(s) for s in seeds.spawn(3)
    )

    optimizer = torch.optim.Adam(codec.parameters(), lr=cfg.learning_rate)
    history: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        perm = shuffle_rng.permutation(len(train_set))
        epoch_loss, seen = 0.0, 0
        for start in range(0, len(perm), cfg.batch_size):
            idx = torch.from_numpy(perm[start : start + cfg.batch_size])
            xb = images[idx]
            ob = onehot[idx]
            out = forward_pass(
                codec, xb, task, sigma2, channel_rng, cfg.fading, cfg.equalize_received
            )
            loss = batch_loss(out, xb, ob, task)
            if not bool(torch.isfinite(loss)):
                raise TrainingDiverged(
                    f"non-finite loss {float(loss.detach())} at epoch {epoch}, "
                    f"batch {start // cfg.batch_size}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach()) * len(idx)
            seen += len(idx)
        train_loss = epoch_loss / seen
        val_loss = None
        if val_set is not None and len(val_set) > 0:
            val_loss = evaluate_loss(
                codec, val_set, task, sigma2, val_rng, cfg.fading, cfg.equalize_received
            )
        history.append(EpochStats(epoch, train_loss, val_loss))

    codec.meta.update(
        {
            "epochs_trained": cfg.epochs,
            "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate,
            "train_sigma2": sigma2,
            "tx_power_dbm": (
                cfg.tx_power_dbm if cfg.tx_power_dbm is not None else link.tx_power_dbm
            ),
            "snr_db_override": cfg.snr_db_override,
            "fading": cfg.fading,
            "equalize_received": cfg.equalize_received,
            "history": [
                {"epoch": s.epoch, "train_loss": s.train_loss, "val_loss": s.val_loss}
                for s in history
            ],
        }
    )
    return codec, history

"""Convolutional semantic codec: encoder, task decoders, losses, checkpoints.

The encoder maps a 34x34 grayscale sign to an l x 3 x 3 latent through four
stride-2 convolutions (widths 32, 64, 128, l), each followed by divisive
normalization; the latent is power-normalized to unit mean square before
transmission. The reconstruction decoder mirrors the encoder with
transposed convolutions and inverse normalization, ending in a sigmoid; the
classification head flattens the received latent through two fully
connected layers into a 17-way softmax.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import IMAGE_SIZE, NUM_CLASSES
from .gdn import GDN, IGDN

KERNEL = 5
STRIDE = 2
PADDING = 2
ENCODER_WIDTHS = (32, 64, 128)
LATENT_GRID = 3
CODE_SIZES = (16, 32, 64, 128)
FC_WIDTH = 128
CE_PROB_FLOOR = 1e-12
TASKS = ("reconstruct", "classify", "both")

CHECKPOINT_FORMAT_VERSION = 1


def latent_dim(code_size: int) -> int:
    return code_size * LATENT_GRID * LATENT_GRID


class ConvEncoder(nn.Module):
    """Four conv+GDN stages: (1, 34, 34) -> (l, 3, 3), pre power normalization."""

    def __init__(self, code_size: int):
        super().__init__()
        if code_size < 1:
            raise ValueError(f"code size must be >= 1, got {code_size}")
        widths = (1,) + ENCODER_WIDTHS + (code_size,)
        stages = []
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            stages.append(nn.Conv2d(c_in, c_out, KERNEL, stride=STRIDE, padding=PADDING))
            stages.append(GDN(c_out))
        self.stages = nn.Sequential(*stages)
        self.code_size = code_size

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (N, 1, H, W) input, got {tuple(x.shape)}")
        if x.shape[2] != IMAGE_SIZE or x.shape[3] != IMAGE_SIZE:
            raise ValueError(
                f"expected {IMAGE_SIZE}x{IMAGE_SIZE} images, got {x.shape[2]}x{x.shape[3]}"
            )
        return self.stages(x)


class ReconDecoder(nn.Module):
    """Four transposed-conv+IGDN stages back to (1, 34, 34), sigmoid output."""

    # output_padding per stage for the 3 -> 5 -> 9 -> 17 -> 34 chain
    _OUTPUT_PADDING = (0, 0, 0, 1)

    def __init__(self, code_size: int):
        super().__init__()
        widths = (code_size,) + tuple(reversed(ENCODER_WIDTHS)) + (1,)
        stages = []
        for i, (c_in, c_out) in enumerate(zip(widths[:-1], widths[1:])):
            stages.append(
                nn.ConvTranspose2d(
                    c_in,
                    c_out,
                    KERNEL,
                    stride=STRIDE,
                    padding=PADDING,
                    output_padding=self._OUTPUT_PADDING[i],
                )
            )
            stages.append(IGDN(c_out))
        self.stages = nn.Sequential(*stages)
        self.code_size = code_size

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        if y.ndim != 4 or y.shape[1:] != (self.code_size, LATENT_GRID, LATENT_GRID):
            raise ValueError(
                f"expected (N, {self.code_size}, {LATENT_GRID}, {LATENT_GRID}) "
                f"latent, got {tuple(y.shape)}"
            )
        return torch.sigmoid(self.stages(y))


class ClassifierHead(nn.Module):
    """Flatten -> FC(128) -> ReLU -> FC(17) -> softmax over the received latent."""

    def __init__(self, code_size: int):
        super().__init__()
        self.fc1 = nn.Linear(latent_dim(code_size), FC_WIDTH)
        self.fc2 = nn.Linear(FC_WIDTH, NUM_CLASSES)
        self.code_size = code_size

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        if y.ndim != 4 or y.shape[1:] != (self.code_size, LATENT_GRID, LATENT_GRID):
            raise ValueError(
                f"expected (N, {self.code_size}, {LATENT_GRID}, {LATENT_GRID}) "
                f"latent, got {tuple(y.shape)}"
            )
        hidden = torch.relu(self.fc1(y.flatten(1)))
        return torch.softmax(self.fc2(hidden), dim=1)


@dataclass
class SemanticCodec:
    """A trained (or fresh) encoder plus whichever task decoders exist."""

    encoder: ConvEncoder
    recon_decoder: ReconDecoder | None
    class_head: ClassifierHead | None
    code_size: int
    task: str
    meta: dict = field(default_factory=dict)

    def modules(self) -> list[nn.Module]:
        mods: list[nn.Module] = [self.encoder]
        if self.recon_decoder is not None:
            mods.append(self.recon_decoder)
        if self.class_head is not None:
            mods.append(self.class_head)
        return mods

    def parameters(self):
        for mod in self.modules():
            yield from mod.parameters()

    def eval(self) -> "SemanticCodec":
        for mod in self.modules():
            mod.eval()
        return self


@dataclass(frozen=True)
class LatentCode:
    """Power-normalized latent: (l, 3, 3) values with unit mean square."""

    values: np.ndarray
    power: float


def build_codec(code_size: int, task: str, seed: int = 0) -> SemanticCodec:
    """Fresh codec with torch's fan-in uniform initialization under ``seed``."""
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    if code_size < 1:
        raise ValueError(f"code size must be >= 1, got {code_size}")
    torch.manual_seed(seed)
    encoder = ConvEncoder(code_size)
    recon = ReconDecoder(code_size) if task in ("reconstruct", "both") else None
    head = ClassifierHead(code_size) if task in ("classify", "both") else None
    return SemanticCodec(
        encoder=encoder,
        recon_decoder=recon,
        class_head=head,
        code_size=code_size,
        task=task,
        meta={"seed": int(seed), "epochs_trained": 0, "history": []},
    )


def power_normalize(x: torch.Tensor) -> torch.Tensor:
    """Scale each sample so its mean square is 1; all-zero samples are an error."""
    unbatched = x.ndim == 3
    if unbatched:
        x = x.unsqueeze(0)
    mean_sq = x.pow(2).mean(dim=tuple(range(1, x.ndim)), keepdim=True)
    if bool((mean_sq == 0).any()):
        raise ValueError("cannot power-normalize an all-zero code")
    out = x / torch.sqrt(mean_sq)
    return out.squeeze(0) if unbatched else out


def _to_image_tensor(pixels: np.ndarray) -> torch.Tensor:
    arr = np.asarray(pixels, dtype=np.float32)
    if arr.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"expected a {IMAGE_SIZE}x{IMAGE_SIZE} image, got {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image pixels must lie in [0, 1]")
    return torch.from_numpy(arr).reshape(1, 1, IMAGE_SIZE, IMAGE_SIZE)


def encode(pixels: np.ndarray, codec: SemanticCodec) -> LatentCode:
    """34x34 [0,1] image -> unit-power (l, 3, 3) latent."""
    with torch.no_grad():
        latent = power_normalize(codec.encoder(_to_image_tensor(pixels)))
    values = latent.squeeze(0).numpy()
    return LatentCode(values=values, power=float(np.mean(values**2)))


def _to_latent_tensor(y, code_size: int) -> torch.Tensor:
    if isinstance(y, LatentCode):
        y = y.values
    arr = np.asarray(y, dtype=np.float32)
    if arr.shape != (code_size, LATENT_GRID, LATENT_GRID):
        raise ValueError(
            f"expected a ({code_size}, {LATENT_GRID}, {LATENT_GRID}) latent, "
            f"got {arr.shape}"
        )
    return torch.from_numpy(arr).unsqueeze(0)


def decode_reconstruct(y, codec: SemanticCodec) -> np.ndarray:
    """Received latent -> 34x34 image in [0, 1]."""
    if codec.recon_decoder is None:
        raise ValueError(
            f"codec trained for {codec.task!r} has no reconstruction decoder"
        )
    with torch.no_grad():
        out = codec.recon_decoder(_to_latent_tensor(y, codec.code_size))
    return out.squeeze(0).squeeze(0).numpy().astype(np.float64)


def decode_classify(y, codec: SemanticCodec) -> np.ndarray:
    """Received latent -> 17-way probability vector."""
    if codec.class_head is None:
        raise ValueError(f"codec trained for {codec.task!r} has no classifier head")
    with torch.no_grad():
        probs = codec.class_head(_to_latent_tensor(y, codec.code_size))
    return probs.squeeze(0).numpy().astype(np.float64)


def loss_mse(s: torch.Tensor, s_hat: torch.Tensor) -> torch.Tensor:
    """Mean over batch and pixels of squared reconstruction error."""
    s = torch.as_tensor(s)
    s_hat = torch.as_tensor(s_hat)
    if s.shape != s_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(s.shape)} vs {tuple(s_hat.shape)}")
    return (s - s_hat).pow(2).mean()


def loss_ce(p_true_onehot: torch.Tensor, p_hat: torch.Tensor) -> torch.Tensor:
    """Mean over batch of -log(predicted probability at the true class).

    ``p_hat`` is post-softmax; probabilities are floored at 1e-12 before the
    log so a confidently wrong prediction cannot produce log(0).
    """
    onehot = torch.as_tensor(p_true_onehot)
    p_hat = torch.as_tensor(p_hat)
    if onehot.shape != p_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(onehot.shape)} vs {tuple(p_hat.shape)}")
    if onehot.ndim != 2:
        raise ValueError(f"expected (N, C) inputs, got ndim={onehot.ndim}")
    is_binary = bool(((onehot == 0) | (onehot == 1)).all())
    rows_sum_1 = bool((onehot.sum(dim=1) == 1).all())
    if not (is_binary and rows_sum_1):
        raise ValueError("p_true_onehot must be exact one-hot rows")
    picked = (p_hat * onehot).sum(dim=1)
    return -torch.log(torch.clamp(picked, min=CE_PROB_FLOOR)).mean()


def one_hot(labels: torch.Tensor, num_classes: int = NUM_CLASSES) -> torch.Tensor:
    return torch.nn.functional.one_hot(
        torch.as_tensor(labels, dtype=torch.long), num_classes
    ).to(torch.float32)


def save_checkpoint(codec: SemanticCodec, path) -> Path:
    """Single-file archive: named weight arrays plus a JSON metadata record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {}
    parts = {"encoder": codec.encoder}
    if codec.recon_decoder is not None:
        parts["recon_decoder"] = codec.recon_decoder
    if codec.class_head is not None:
        parts["class_head"] = codec.class_head
    for part_name, module in parts.items():
        for key, tensor in module.state_dict().items():
            arrays[f"{part_name}.{key}"] = tensor.detach().numpy()
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "code_size": codec.code_size,
        "task": codec.task,
        **{k: v for k, v in codec.meta.items()},
    }
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8
    ).copy()
    np.savez(path, **arrays)
    return path


def load_checkpoint(path, expect_code_size: int | None = None) -> SemanticCodec:
    """Rebuild a codec from an archive; bitwise inverse of save_checkpoint."""
    path = Path(path)
    try:
        with np.load(path) as archive:
            arrays = {k: archive[k] for k in archive.files}
    except Exception as exc:
        raise ValueError(f"unreadable checkpoint {path}: {exc}") from exc
    if "__meta__" not in arrays:
        raise ValueError(f"checkpoint {path} has no metadata record")
    meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
    version = meta.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"checkpoint format {version} unsupported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    code_size = int(meta["code_size"])
    task = meta["task"]
    if expect_code_size is not None and code_size != expect_code_size:
        raise ValueError(
            f"checkpoint has code size {code_size}, expected {expect_code_size}"
        )
    codec = build_codec(code_size, task, seed=int(meta.get("seed", 0)))
    codec.meta = {
        k: v for k, v in meta.items() if k not in ("format_version", "code_size", "task")
    }
    parts = {"encoder": codec.encoder}
    if codec.recon_decoder is not None:
        parts["recon_decoder"] = codec.recon_decoder
    if codec.class_head is not None:
        parts["class_head"] = codec.class_head
    for part_name, module in parts.items():
        state = {}
        prefix = f"{part_name}."
        for key, arr in arrays.items():
            if key.startswith(prefix):
                state[key[len(prefix) :]] = torch.from_numpy(arr.copy())
        missing = set(module.state_dict()) - set(state)
        if missing:
            raise ValueError(f"checkpoint {path} is missing {part_name} weights: {sorted(missing)[:3]}")
        module.load_state_dict(state)
    return codec

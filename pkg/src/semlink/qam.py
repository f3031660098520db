"""Gray-coded 16-QAM modem and the conventional image-transmission chain.

Bit-exact conventions (tests depend on them):
  * a nibble's first two bits choose the I level, the last two the Q level;
  * per axis the Gray order (00, 01, 11, 10) maps to (-3, -1, +1, +3)/sqrt(10);
  * hard decisions pick the nearest constellation point, ties resolved
    toward the lowest 4-bit label;
  * trailing zero-padding to a whole number of nibbles is recorded in the
    symbol block and stripped on demodulation.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.special import erfc

from . import channel as ch
from .data import IMAGE_SIZE, SignImage
from .link_budget import LinkBudget, receive_snr

BITS_PER_SYMBOL = 4
RAW8_BITS = IMAGE_SIZE * IMAGE_SIZE * 8
JPEG_QUALITY = 75

# Gray-ordered amplitude per 2-bit value: 00->-3, 01->-1, 11->+1, 10->+3.
_LEVEL_OF_PAIR = np.array([-3.0, -1.0, 3.0, 1.0])
_AMPLITUDE_SCALE = 1.0 / math.sqrt(10.0)

# Constellation indexed by nibble value (MSB-first bits b3 b2 b1 b0:
# b3 b2 -> I, b1 b0 -> Q).
CONSTELLATION = np.array(
    [
        (_LEVEL_OF_PAIR[n >> 2] + 1j * _LEVEL_OF_PAIR[n & 3]) * _AMPLITUDE_SCALE
        for n in range(16)
    ]
)


@dataclass
class BitStream:
    """Ordered 0/1 payload plus the source representation that produced it."""

    bits: np.ndarray
    origin: str

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 1:
            raise ValueError(f"bits must be a 1-D sequence, got shape {self.bits.shape}")
        if self.bits.size and not np.all((self.bits == 0) | (self.bits == 1)):
            raise ValueError("bits must contain only 0 and 1")
        if self.origin not in ("raw8", "jpeg"):
            raise ValueError(f"origin must be raw8 or jpeg, got {self.origin!r}")
        if self.origin == "raw8" and self.bits.size != RAW8_BITS:
            raise ValueError(
                f"raw8 streams carry exactly {RAW8_BITS} bits, got {self.bits.size}"
            )
        if self.origin == "jpeg" and self.bits.size % 8 != 0:
            raise ValueError(f"jpeg streams are byte-aligned, got {self.bits.size} bits")


@dataclass
class SymbolBlock:
    """Unit-average-energy complex symbols plus padding bookkeeping."""

    symbols: np.ndarray
    pad_bits: int = 0
    bits_per_symbol: int = BITS_PER_SYMBOL


@dataclass
class ReceivedImage:
    """Outcome of one conventional transmission: pixels plus block flags."""

    pixels: np.ndarray
    label: int
    fade_erased: bool
    decode_failed: bool
    payload_bits: int
    source_id: str = ""


def source_encode(img, mode: str = "raw8") -> BitStream:
    """Image -> bitstream: 8-bit row-major pixels (raw8) or a baseline JPEG
    file at quality 75, bit-unpacked MSB first."""
    pixels = img.pixels if isinstance(img, SignImage) else np.asarray(img, dtype=np.float64)
    if pixels.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"expected a {IMAGE_SIZE}x{IMAGE_SIZE} image, got {pixels.shape}")
    quantized = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    if mode == "raw8":
        return BitStream(np.unpackbits(quantized.reshape(-1)), "raw8")
    if mode == "jpeg":
        buf = io.BytesIO()
        Image.fromarray(quantized, mode="L").save(buf, format="JPEG", quality=JPEG_QUALITY)
        return BitStream(np.unpackbits(np.frombuffer(buf.getvalue(), dtype=np.uint8)), "jpeg")
    raise ValueError(f"unknown source mode: {mode!r}")


def raw8_decode(bits: np.ndarray) -> np.ndarray:
    """Inverse of raw8 source_encode: bits -> 34x34 [0, 1] pixels."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size != RAW8_BITS:
        raise ValueError(f"raw8 payload must be {RAW8_BITS} bits, got {bits.size}")
    return np.packbits(bits).astype(np.float64).reshape(IMAGE_SIZE, IMAGE_SIZE) / 255.0


def jpeg_decode(bits: np.ndarray) -> np.ndarray | None:
    """bits -> pixels if the JPEG stream survived, else None."""
    payload = np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()
    try:
        with Image.open(io.BytesIO(payload)) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64)
    except Exception:
        return None
    if arr.shape != (IMAGE_SIZE, IMAGE_SIZE):
        return None
    return arr / 255.0


def qam16_modulate(stream: BitStream) -> SymbolBlock:
    """Nibble-wise Gray mapping onto the unit-energy 16-point grid."""
    bits = stream.bits
    pad = (-bits.size) % BITS_PER_SYMBOL
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    nibbles = (
        (bits[0::4].astype(np.intp) << 3)
        | (bits[1::4].astype(np.intp) << 2)
        | (bits[2::4].astype(np.intp) << 1)
        | bits[3::4].astype(np.intp)
    )
    return SymbolBlock(symbols=CONSTELLATION[nibbles], pad_bits=pad)


def qam16_demodulate(block: SymbolBlock) -> np.ndarray:
    """Nearest-point hard decisions -> bits, padding stripped.

    Equidistant ties go to the lowest nibble value (argmin first hit over
    the nibble-ordered constellation).
    """
    symbols = np.asarray(block.symbols)
    d2 = np.abs(symbols[:, None] - CONSTELLATION[None, :]) ** 2
    nibbles = d2.argmin(axis=1)
    bits = np.zeros(symbols.size * BITS_PER_SYMBOL, dtype=np.uint8)
    bits[0::4] = (nibbles >> 3) & 1
    bits[1::4] = (nibbles >> 2) & 1
    bits[2::4] = (nibbles >> 1) & 1
    bits[3::4] = nibbles & 1
    if block.pad_bits:
        bits = bits[: -block.pad_bits]
    return bits


def symbol_error_rate_awgn(snr_db: float) -> float:
    """Closed-form 16-QAM symbol error probability in AWGN.

    Per axis P = 1.5 Q(sqrt(snr/5)); SER = 1 - (1 - P)^2 with
    Q(x) = erfc(x / sqrt 2) / 2.
    """
    gamma = 10.0 ** (snr_db / 10.0)
    q = 0.5 * erfc(math.sqrt(gamma / 5.0) / math.sqrt(2.0))
    per_axis = 1.5 * q
    return 1.0 - (1.0 - per_axis) ** 2


def baseline_transmit(
    img,
    link: LinkBudget,
    mode: str,
    rng: np.random.Generator,
) -> ReceivedImage:
    """Full conventional chain: source-code, modulate, fade, equalize,
    demodulate, source-decode.

    raw8 always yields pixels (however noisy); a corrupt jpeg stream yields
    an all-zero image with decode_failed set. A fading draw below the
    equalizer floor flags the block fade-erased and leaves it unequalized.
    """
    label = img.label if isinstance(img, SignImage) else -1
    source_id = img.source_id if isinstance(img, SignImage) else ""
    stream = source_encode(img, mode)
    block = qam16_modulate(stream)
    snr_db = receive_snr(link)
    sigma2 = ch.noise_variance_from_snr(snr_db, signal_power=1.0)
    h = ch.sample_fading(rng, kind="complex")
    y = ch.transmit(block.symbols, h, sigma2, rng)
    y_eq, fade_erased = ch.equalize(y, h)
    bits = qam16_demodulate(SymbolBlock(y_eq, pad_bits=block.pad_bits))
    decode_failed = False
    if mode == "raw8":
        pixels = raw8_decode(bits)
    else:
        decoded = jpeg_decode(bits)
        if decoded is None:
            pixels = np.zeros((IMAGE_SIZE, IMAGE_SIZE))
            decode_failed = True
        else:
            pixels = np.clip(decoded, 0.0, 1.0)
    return ReceivedImage(
        pixels=pixels,
        label=label,
        fade_erased=fade_erased,
        decode_failed=decode_failed,
        payload_bits=int(stream.bits.size),
        source_id=source_id,
    )


def received_to_dataset(received: list[ReceivedImage], class_names=None):
    """Wrap received images as a dataset for baseline classifier training."""
    from .data import CLASS_NAMES, Dataset

    items = [
        SignImage(r.pixels, r.label, source_id=r.source_id or f"received_{i:05d}")
        for i, r in enumerate(received)
    ]
    return Dataset(items=items, class_names=class_names or CLASS_NAMES, split_tag="received")

"""Performance metrics: SSIM, classification scores, the joint task
objective, and per-image transmission byte accounting."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

STANDARD_CODE_SIZES = (16, 32, 64, 128)
RAW8_PAYLOAD_BYTES = 1156.0
DEFAULT_BASELINE_BYTES = 1300.0


def ssim(
    s: np.ndarray,
    s_hat: np.ndarray,
    range_l: float = 1.0,
    k1: float = 0.01,
    k2: float = 0.03,
    window: str = "global",
) -> float:
    """Structural similarity between two equal-shape grayscale images.

    ``global`` computes one SSIM value from whole-image means, population
    variances, and covariance. ``sliding`` averages an 11x11 Gaussian
    (sigma 1.5) local SSIM map. Stabilizers are c1=(k1*L)^2, c2=(k2*L)^2
    with L the dynamic range of the pixel values.
    """
    a = np.asarray(s, dtype=np.float64)
    b = np.asarray(s_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if not range_l > 0:
        raise ValueError(f"range_l must be positive, got {range_l}")
    c1 = (k1 * range_l) ** 2
    c2 = (k2 * range_l) ** 2
    if window == "global":
        mu_a, mu_b = a.mean(), b.mean()
        var_a, var_b = a.var(), b.var()
        cov = ((a - mu_a) * (b - mu_b)).mean()
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        return float(num / den)
    if window == "sliding":
        # 11-tap Gaussian window: sigma 1.5, radius 5.
        blur = lambda x: gaussian_filter(x, sigma=1.5, truncate=10.0 / 3.0)
        mu_a, mu_b = blur(a), blur(b)
        var_a = blur(a * a) - mu_a**2
        var_b = blur(b * b) - mu_b**2
        cov = blur(a * b) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        return float((num / den).mean())
    raise ValueError(f"unknown ssim window: {window!r}")


@dataclass(frozen=True)
class PerClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    """Accuracy, confusion matrix (rows true, cols predicted), per-class
    precision/recall/F1, and their macro averages.

    Zero-division convention: a class with no predicted positives gets
    precision 0, a class with no true samples gets recall 0.
    """

    accuracy: float
    confusion: np.ndarray
    per_class: tuple[PerClassMetrics, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float

    @property
    def num_classes(self) -> int:
        return len(self.per_class)


def classification_report(
    true_labels, predicted, num_classes: int | None = None
) -> ClassificationReport:
    """Score hard labels or probability rows against the ground truth.

    ``predicted`` may be an (N,) label vector or an (N, C) probability
    matrix; probabilities are argmaxed (first index wins ties).
    """
    y = np.asarray(true_labels)
    p = np.asarray(predicted)
    if p.ndim == 2:
        if len(y) != p.shape[0]:
            raise ValueError(f"length mismatch: {len(y)} labels, {p.shape[0]} rows")
        if num_classes is None:
            num_classes = p.shape[1]
        pred = p.argmax(axis=1)
    elif p.ndim == 1:
        if len(y) != len(p):
            raise ValueError(f"length mismatch: {len(y)} labels, {len(p)} predictions")
        pred = p.astype(np.int64)
    else:
        raise ValueError(f"predicted must be 1-D labels or 2-D probabilities, got ndim={p.ndim}")
    if num_classes is None:
        num_classes = int(max(y.max(initial=0), pred.max(initial=0))) + 1
    y = y.astype(np.int64)
    if len(y) == 0:
        raise ValueError("cannot score an empty label set")
    if y.min() < 0 or y.max() >= num_classes or pred.min() < 0 or pred.max() >= num_classes:
        raise ValueError(f"labels outside [0, {num_classes})")

    confusion = np.bincount(
        y * num_classes + pred, minlength=num_classes * num_classes
    ).reshape(num_classes, num_classes)
    support = confusion.sum(axis=1)
    predicted_pos = confusion.sum(axis=0)
    tp = np.diag(confusion)

    per_class = []
    for c in range(num_classes):
        prec = tp[c] / predicted_pos[c] if predicted_pos[c] > 0 else 0.0
        rec = tp[c] / support[c] if support[c] > 0 else 0.0
        f1 = 2.0 * prec * rec / (prec + rec) if (prec + rec) > 0 else 0.0
        per_class.append(PerClassMetrics(float(prec), float(rec), float(f1), int(support[c])))

    return ClassificationReport(
        accuracy=float(tp.sum() / len(y)),
        confusion=confusion,
        per_class=tuple(per_class),
        macro_precision=float(np.mean([m.precision for m in per_class])),
        macro_recall=float(np.mean([m.recall for m in per_class])),
        macro_f1=float(np.mean([m.f1 for m in per_class])),
    )


@dataclass(frozen=True)
class P1Objective:
    """Joint task objective: classification-miss term plus the absolute
    pixel-difference term on the 0-255 scale, and their sum."""

    total: float
    class_term: float
    pixel_term: float


def p1_objective(
    true_class_probs,
    originals,
    reconstructions,
    pixel_scale: float = 255.0,
) -> P1Objective:
    """Sum over a dataset of (1 - p_hat_true) plus summed |s - s_hat| with
    pixels rescaled by ``pixel_scale`` (inputs are [0, 1] images)."""
    if true_class_probs is None or originals is None or reconstructions is None:
        raise ValueError("objective needs the classifier and reconstruction outputs")
    p = np.asarray(true_class_probs, dtype=np.float64)
    s = np.asarray(originals, dtype=np.float64)
    s_hat = np.asarray(reconstructions, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"true-class probabilities must be 1-D, got shape {p.shape}")
    if s.shape != s_hat.shape:
        raise ValueError(f"image stacks differ in shape: {s.shape} vs {s_hat.shape}")
    if s.ndim < 1 or s.shape[0] != p.shape[0]:
        raise ValueError(
            f"{p.shape[0]} probabilities but {s.shape[0] if s.ndim else 0} image pairs"
        )
    if np.any(p < -1e-9) or np.any(p > 1.0 + 1e-9):
        raise ValueError("true-class probabilities must lie in [0, 1]")
    class_term = float(np.sum(1.0 - np.clip(p, 0.0, 1.0)))
    pixel_term = float(np.sum(np.abs(s - s_hat)) * pixel_scale)
    return P1Objective(class_term + pixel_term, class_term, pixel_term)


@dataclass(frozen=True)
class ByteAccount:
    """Per-image transmitted payload of one scheme and its saving relative
    to the configured source-coded baseline."""

    scheme: str
    payload_bytes_per_image: float
    savings_vs_baseline: float


def byte_account(
    scheme: str,
    code_size: int | None = None,
    measured_jpeg_mean_bytes: float | None = None,
    quant_bits: int = 8,
    baseline_bytes: float = DEFAULT_BASELINE_BYTES,
    allow_nonstandard_codes: bool = False,
) -> ByteAccount:
    """Payload bytes per image and savings vs the baseline payload.

    semantic: the l x 3 x 3 latent at ``quant_bits`` per value (9l bytes at
    8 bits). qam16_raw8: 1156 bytes of quantized pixels. qam16_jpeg: the
    measured corpus mean when given, else the configured baseline size.
    """
    if not baseline_bytes > 0:
        raise ValueError(f"baseline payload must be positive, got {baseline_bytes}")
    if scheme == "semantic":
        if code_size is None:
            raise ValueError("semantic accounting needs a code size")
        if quant_bits < 1:
            raise ValueError(f"quant_bits must be >= 1, got {quant_bits}")
        if code_size not in STANDARD_CODE_SIZES and not allow_nonstandard_codes:
            raise ValueError(
                f"code size {code_size} outside {STANDARD_CODE_SIZES}; "
                "pass allow_nonstandard_codes=True to account for it anyway"
            )
        payload = code_size * 9.0 * quant_bits / 8.0
        name = f"semantic({code_size})"
    elif scheme == "qam16_raw8":
        payload = RAW8_PAYLOAD_BYTES
        name = scheme
    elif scheme == "qam16_jpeg":
        payload = (
            float(measured_jpeg_mean_bytes)
            if measured_jpeg_mean_bytes is not None
            else float(baseline_bytes)
        )
        if payload < 0:
            raise ValueError(f"measured payload must be >= 0, got {payload}")
        name = scheme
    else:
        raise ValueError(f"unknown scheme: {scheme!r}")
    return ByteAccount(name, float(payload), 1.0 - payload / baseline_bytes)


def write_classification_csv(
    report: ClassificationReport, path, class_names=None
) -> Path:
    """One CSV row per class (precision/recall/F1/support) plus macro and
    accuracy footer rows."""
    path = Path(path)
    names = (
        list(class_names)
        if class_names is not None
        else [f"class_{c:02d}" for c in range(report.num_classes)]
    )
    if len(names) != report.num_classes:
        raise ValueError(
            f"{len(names)} class names for {report.num_classes} classes"
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "precision", "recall", "f1", "support"])
        for name, m in zip(names, report.per_class):
            writer.writerow([name, f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f1:.6f}", m.support])
        writer.writerow(
            ["macro", f"{report.macro_precision:.6f}", f"{report.macro_recall:.6f}", f"{report.macro_f1:.6f}", sum(m.support for m in report.per_class)]
        )
        writer.writerow(["accuracy", f"{report.accuracy:.6f}", "", "", ""])
    return path

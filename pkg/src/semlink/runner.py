"""Experiment orchestration behind the CLI: dataset preparation, training,
power/code sweeps, conventional-baseline runs, reports and plots.

Grid points are evaluated with independent RNG streams derived from
(master_seed, grid_index), so results do not depend on evaluation order and
every CSV row can be recomputed from checkpoints plus recorded seeds.
"""

from __future__ import annotations

import csv
import json
import pickle
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from . import channel as ch
from .baseline import predict_labels, train_baseline_classifier
from .codec import SemanticCodec, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig
from .data import Dataset, load_dataset, split, synth_generate, write_dataset
from .link_budget import receive_snr
from .metrics import (
    byte_account,
    classification_report,
    p1_objective,
    ssim,
    write_classification_csv,
)
from .qam import baseline_transmit, received_to_dataset, source_encode
from .training import apply_channel, train

SWEEP_CSV_COLUMNS = [
    "scheme",
    "classifier",
    "code_size",
    "tx_power_dbm",
    "n_images",
    "n_mc",
    "mean_ssim",
    "accuracy",
    "macro_f1",
    "p1_total",
    "p1_class_term",
    "p1_pixel_term",
    "payload_bytes",
    "savings_vs_baseline",
    "fade_count",
    "decode_failed_count",
    "wall_clock_s",
    "seed",
]


def resolve_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, Dataset]:
    """Build or load the corpus and apply the configured deterministic split."""
    d = cfg.data
    if d.source == "synthetic":
        full = synth_generate(d.n_per_class, seed=d.seed)
    else:
        manifest = Path(d.manifest)
        if not manifest.exists():
            raise ConfigError(f"data.manifest not found: {manifest}")
        full = load_dataset(manifest, root=d.root or None)
    return split(full, tuple(int(s) for s in d.split), seed=d.seed)


def checkpoint_path(out_dir: Path, task: str, code_size: int) -> Path:
    return out_dir / "checkpoints" / f"{task}_code{code_size:03d}.npz"


def _write_history_csv(path: Path, history) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            writer.writerow([row.epoch, f"{row.train_loss:.8f}",
                             "" if row.val_loss is None else f"{row.val_loss:.8f}"])


def cmd_prepare_data(cfg: ExperimentConfig) -> Path:
    """Materialize the configured corpus as PNGs + manifest under the output dir."""
    out = cfg.resolved_output_dir() / "dataset"
    train_set, val_set, test_set = resolve_datasets(cfg)
    merged = Dataset(
        items=train_set.items + val_set.items + test_set.items,
        class_names=train_set.class_names,
    )
    manifest = write_dataset(merged, out)
    splits = {
        "train": len(train_set),
        "val": len(val_set),
        "test": len(test_set),
        "seed": cfg.data.seed,
    }
    with open(out / "splits.json", "w") as fh:
        json.dump(splits, fh, indent=2)
    return manifest


def cmd_train(cfg: ExperimentConfig) -> list[Path]:
    """Train one codec per (task, code_size) in the sweep config and persist
    checkpoints plus epoch histories. Already-written checkpoints survive a
    later failure; the failure itself is recorded next to them."""
    out = cfg.resolved_output_dir()
    train_set, val_set, _ = resolve_datasets(cfg)
    written: list[Path] = []
    for task in cfg.sweep.tasks:
        for code_size in cfg.sweep.code_sizes:
            try:
                codec, history = train(
                    train_set, val_set, task, cfg.training, cfg.link, int(code_size)
                )
                path = checkpoint_path(out, task, int(code_size))
                save_checkpoint(codec, path)
                _write_history_csv(
                    out / "checkpoints" / f"{task}_code{int(code_size):03d}_history.csv",
                    history,
                )
                written.append(path)
            except Exception as exc:
                marker = out / "checkpoints" / "failure_marker.json"
                marker.parent.mkdir(parents=True, exist_ok=True)
                with open(marker, "w") as fh:
                    json.dump(
                        {"task": task, "code_size": int(code_size), "error": str(exc)},
                        fh,
                        indent=2,
                    )
                raise
    return written


@dataclass
class GridEval:
    """Aggregates of one semantic grid-point evaluation."""

    mean_ssim: float | None
    report: object | None
    p1: object | None
    fade_count: int
    true_labels: np.ndarray | None
    predicted: np.ndarray | None


def evaluate_semantic_grid_point(
    recon_codec: SemanticCodec | None,
    classify_codec: SemanticCodec | None,
    test_set: Dataset,
    tx_power_dbm: float,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> GridEval:
    """Run n_mc channel realizations per test image through the available
    heads and aggregate SSIM / classification / joint-objective metrics."""
    link = cfg.link.with_tx_power(float(tx_power_dbm))
    sigma2 = ch.noise_variance_from_snr(receive_snr(link), signal_power=1.0)
    originals = test_set.images()
    images = torch.from_numpy(originals.astype(np.float32)).unsqueeze(1)
    labels = test_set.labels()
    n = len(test_set)

    ssim_sum, fade_count = 0.0, 0
    all_true, all_pred = [], []
    p1_totals, p1_class, p1_pixel = [], [], []
    with torch.no_grad():
        latents = {}
        if recon_codec is not None:
            latents["recon"] = _normalized_latent(recon_codec, images)
        if classify_codec is not None:
            latents["classify"] = _normalized_latent(classify_codec, images)
        for _ in range(cfg.sweep.n_mc):
            h = rng.rayleigh(scale=1.0 / np.sqrt(2.0), size=(n, 1, 1, 1))
            fade_count += int((h <= ch.H_FLOOR).sum())
            recon_np = probs_np = None
            if recon_codec is not None:
                y = _receive(latents["recon"], h, sigma2, rng, recon_codec)
                recon = recon_codec.recon_decoder(y)
                recon_np = recon.squeeze(1).numpy().astype(np.float64)
                for i in range(n):
                    ssim_sum += ssim(
                        test_set.items[i].pixels,
                        recon_np[i],
                        window=cfg.sweep.ssim_window,
                    )
            if classify_codec is not None:
                y = _receive(latents["classify"], h, sigma2, rng, classify_codec)
                probs = classify_codec.class_head(y)
                probs_np = probs.numpy().astype(np.float64)
                all_true.append(labels)
                all_pred.append(probs_np.argmax(axis=1))
            if recon_np is not None and probs_np is not None:
                p1 = p1_objective(
                    probs_np[np.arange(n), labels], originals, recon_np
                )
                p1_totals.append(p1.total)
                p1_class.append(p1.class_term)
                p1_pixel.append(p1.pixel_term)

    mean_ssim = (
        ssim_sum / (n * cfg.sweep.n_mc) if recon_codec is not None else None
    )
    report = None
    true_cat = pred_cat = None
    if classify_codec is not None:
        true_cat = np.concatenate(all_true)
        pred_cat = np.concatenate(all_pred)
        report = classification_report(true_cat, pred_cat, num_classes=len(test_set.class_names))
    p1_summary = None
    if p1_totals:
        p1_summary = (
            float(np.mean(p1_totals)),
            float(np.mean(p1_class)),
            float(np.mean(p1_pixel)),
        )
    return GridEval(mean_ssim, report, p1_summary, fade_count, true_cat, pred_cat)


def _normalized_latent(codec: SemanticCodec, images: torch.Tensor) -> torch.Tensor:
    from .codec import power_normalize

    return power_normalize(codec.encoder(images))


def _receive(latent, h, sigma2, rng, codec: SemanticCodec) -> torch.Tensor:
    """Re-apply the channel exactly as the codec saw it in training
    (equalized or raw, per the checkpoint's own metadata)."""
    equalize = bool(codec.meta.get("equalize_received", False))
    h_t = torch.from_numpy(h.astype(np.float32))
    y = h_t * latent
    if sigma2 > 0.0:
        noise = rng.standard_normal(tuple(latent.shape)) * np.sqrt(sigma2)
        y = y + torch.from_numpy(noise.astype(np.float32))
    if equalize:
        y = y / torch.clamp(h_t, min=ch.H_FLOOR)
    return y


def _blank_row() -> dict:
    return {col: "" for col in SWEEP_CSV_COLUMNS}


def _merge_rows(csv_path: Path, rows: list[dict], owned) -> None:
    """Rewrite the sweep CSV, replacing rows owned by the calling command
    (matched by ``owned`` on the scheme column) so reruns stay idempotent."""
    kept: list[dict] = []
    if csv_path.exists():
        kept = [r for r in read_sweep_csv(csv_path) if not owned(r.get("scheme", ""))]
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(kept)
        writer.writerows(rows)


def _fmt(value, digits: int = 6):
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return value


def cmd_sweep(cfg: ExperimentConfig) -> Path:
    """Evaluate every (code_size, tx_power) grid point of the trained
    semantic models over the test split; write sweep.csv, per-grid-point
    classification CSVs, and the comparison plots."""
    out = cfg.resolved_output_dir()
    missing = []
    codecs: dict[tuple[str, int], SemanticCodec] = {}
    for task in cfg.sweep.tasks:
        for code_size in cfg.sweep.code_sizes:
            path = checkpoint_path(out, task, int(code_size))
            if not path.exists():
                missing.append(f"({task}, code {code_size}) -> {path}")
            else:
                codecs[(task, int(code_size))] = load_checkpoint(path).eval()
    if missing:
        raise ConfigError(
            "sweep needs a checkpoint for every (task, code_size); missing: "
            + "; ".join(missing)
        )

    _, _, test_set = resolve_datasets(cfg)
    rows = []
    grid_index = 0
    for code_size in cfg.sweep.code_sizes:
        code_size = int(code_size)
        recon_codec = codecs.get(("reconstruct", code_size)) or codecs.get(("both", code_size))
        classify_codec = codecs.get(("classify", code_size)) or codecs.get(("both", code_size))
        account = byte_account(
            "semantic",
            code_size=code_size,
            quant_bits=cfg.bytes.quant_bits,
            baseline_bytes=cfg.bytes.baseline_bytes,
            allow_nonstandard_codes=cfg.sweep.allow_nonstandard_codes,
        )
        for tx_power in cfg.sweep.tx_powers_dbm:
            seed_seq = np.random.SeedSequence([cfg.sweep.master_seed, grid_index])
            rng = np.random.default_rng(seed_seq)
            started = time.time()
            result = evaluate_semantic_grid_point(
                recon_codec, classify_codec, test_set, float(tx_power), cfg, rng
            )
            elapsed = time.time() - started
            row = _blank_row()
            row.update(
                scheme=f"semantic({code_size})",
                classifier="semantic",
                code_size=code_size,
                tx_power_dbm=_fmt(float(tx_power), 2),
                n_images=len(test_set),
                n_mc=cfg.sweep.n_mc,
                mean_ssim=_fmt(result.mean_ssim),
                payload_bytes=_fmt(account.payload_bytes_per_image, 1),
                savings_vs_baseline=_fmt(account.savings_vs_baseline),
                fade_count=result.fade_count,
                decode_failed_count=0,
                wall_clock_s=_fmt(elapsed, 3),
                seed=f"{cfg.sweep.master_seed}:{grid_index}",
            )
            if result.report is not None:
                row.update(
                    accuracy=_fmt(result.report.accuracy),
                    macro_f1=_fmt(result.report.macro_f1),
                )
                write_classification_csv(
                    result.report,
                    out / "reports" / f"semantic_code{code_size:03d}_pt{float(tx_power):+05.1f}.csv",
                    class_names=test_set.class_names,
                )
            if result.p1 is not None:
                row.update(
                    p1_total=_fmt(result.p1[0], 2),
                    p1_class_term=_fmt(result.p1[1], 2),
                    p1_pixel_term=_fmt(result.p1[2], 2),
                )
            rows.append(row)
            grid_index += 1

    csv_path = out / "sweep.csv"
    _merge_rows(csv_path, rows, owned=lambda s: s.startswith("semantic("))
    write_plots(cfg)
    return csv_path


def cmd_baseline(cfg: ExperimentConfig) -> Path:
    """Train the conventional classifiers on received images at the
    configured training power, evaluate the conventional chain across the
    sweep powers, and append rows to sweep.csv."""
    out = cfg.resolved_output_dir()
    train_set, _, test_set = resolve_datasets(cfg)
    rng_root = np.random.SeedSequence([cfg.baseline.seed])
    train_stream, eval_stream = rng_root.spawn(2)

    train_link = cfg.link.with_tx_power(cfg.baseline.train_tx_power_dbm)
    classifiers = {}
    for mode in cfg.baseline.modes:
        rng = np.random.default_rng(train_stream.spawn(1)[0])
        received_train = [
            baseline_transmit(item, train_link, mode, rng) for item in train_set.items
        ]
        corpus = received_to_dataset(received_train, class_names=train_set.class_names)
        if cfg.baseline.save_corpora:
            write_dataset(corpus, out / "corpora" / f"train_{mode}")
        for kind in cfg.baseline.classifiers:
            clf = train_baseline_classifier(kind, corpus, seed=cfg.baseline.seed)
            classifiers[(mode, kind)] = clf
            clf_path = out / "baselines" / f"{mode}_{kind}.pkl"
            clf_path.parent.mkdir(parents=True, exist_ok=True)
            with open(clf_path, "wb") as fh:
                pickle.dump(clf, fh)

    rows = []
    grid_index = 0
    originals = test_set.images()
    labels = test_set.labels()
    for mode in cfg.baseline.modes:
        if cfg.bytes.measure_jpeg and mode == "jpeg":
            sizes = [source_encode(it, "jpeg").bits.size / 8 for it in test_set.items]
            account = byte_account(
                "qam16_jpeg",
                measured_jpeg_mean_bytes=float(np.mean(sizes)),
                baseline_bytes=cfg.bytes.baseline_bytes,
            )
        else:
            account = byte_account(
                f"qam16_{mode}", baseline_bytes=cfg.bytes.baseline_bytes
            )
        for tx_power in cfg.sweep.tx_powers_dbm:
            seed_seq = np.random.SeedSequence([cfg.baseline.seed, 1000 + grid_index])
            rng = np.random.default_rng(seed_seq)
            started = time.time()
            link = cfg.link.with_tx_power(float(tx_power))
            received_all = []
            for _ in range(cfg.baseline.n_mc):
                received_all.extend(
                    baseline_transmit(item, link, mode, rng) for item in test_set.items
                )
            n_total = len(received_all)
            ssim_mean = float(
                np.mean(
                    [
                        ssim(
                            originals[i % len(test_set)],
                            r.pixels,
                            window=cfg.sweep.ssim_window,
                        )
                        for i, r in enumerate(received_all)
                    ]
                )
            )
            fade_count = sum(r.fade_erased for r in received_all)
            failed_count = sum(r.decode_failed for r in received_all)
            elapsed = time.time() - started

            row = _blank_row()
            row.update(
                scheme=f"qam16_{mode}",
                classifier="none",
                code_size="",
                tx_power_dbm=_fmt(float(tx_power), 2),
                n_images=len(test_set),
                n_mc=cfg.baseline.n_mc,
                mean_ssim=_fmt(ssim_mean),
                payload_bytes=_fmt(account.payload_bytes_per_image, 1),
                savings_vs_baseline=_fmt(account.savings_vs_baseline),
                fade_count=fade_count,
                decode_failed_count=failed_count,
                wall_clock_s=_fmt(elapsed, 3),
                seed=f"{cfg.baseline.seed}:{1000 + grid_index}",
            )
            rows.append(row)

            received_corpus = received_to_dataset(
                received_all, class_names=test_set.class_names
            )
            true_rep = np.tile(labels, cfg.baseline.n_mc)
            for kind in cfg.baseline.classifiers:
                clf = classifiers[(mode, kind)]
                pred = predict_labels(clf, received_corpus)
                report = classification_report(
                    true_rep, pred, num_classes=len(test_set.class_names)
                )
                write_classification_csv(
                    report,
                    out
                    / "reports"
                    / f"qam16_{mode}_{kind}_pt{float(tx_power):+05.1f}.csv",
                    class_names=test_set.class_names,
                )
                crow = _blank_row()
                crow.update(
                    scheme=f"qam16_{mode}",
                    classifier=kind,
                    code_size="",
                    tx_power_dbm=_fmt(float(tx_power), 2),
                    n_images=len(test_set),
                    n_mc=cfg.baseline.n_mc,
                    accuracy=_fmt(report.accuracy),
                    macro_f1=_fmt(report.macro_f1),
                    payload_bytes=_fmt(account.payload_bytes_per_image, 1),
                    savings_vs_baseline=_fmt(account.savings_vs_baseline),
                    fade_count=fade_count,
                    decode_failed_count=failed_count,
                    wall_clock_s="",
                    seed=f"{cfg.baseline.seed}:{1000 + grid_index}",
                )
                rows.append(crow)
            grid_index += 1

    csv_path = out / "sweep.csv"
    _merge_rows(csv_path, rows, owned=lambda s: s.startswith("qam16_"))
    return csv_path


def read_sweep_csv(csv_path: Path) -> list[dict]:
    with open(csv_path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_plots(cfg: ExperimentConfig) -> list[Path]:
    """Accuracy-vs-power, SSIM-vs-power, and payload bar charts (SVG + PNG),
    drawn from sweep.csv so plots are never the source of truth."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = cfg.resolved_output_dir()
    csv_path = out / "sweep.csv"
    if not csv_path.exists():
        return []
    rows = read_sweep_csv(csv_path)
    plots_dir = out / "plots"
    plots_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def series_for(metric):
        series: dict[str, list[tuple[float, float]]] = {}
        for row in rows:
            if not row.get(metric):
                continue
            key = row["scheme"]
            if row["classifier"] not in ("", "none", "semantic"):
                key = f"{row['scheme']}+{row['classifier']}"
            series.setdefault(key, []).append(
                (float(row["tx_power_dbm"]), float(row[metric]))
            )
        return {k: sorted(v) for k, v in series.items()}

    for metric, ylabel, stem in (
        ("accuracy", "classification accuracy", "accuracy_vs_power"),
        ("mean_ssim", "mean SSIM", "ssim_vs_power"),
    ):
        series = series_for(metric)
        if not series:
            continue
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for name in sorted(series):
            points = series[name]
            ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=name)
        ax.set_xlabel("transmit power (dBm)")
        ax.set_ylabel(ylabel)
        ax.set_ylim(0.0, 1.05)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        for ext in ("svg", "png"):
            p = plots_dir / f"{stem}.{ext}"
            fig.savefig(p)
            written.append(p)
        plt.close(fig)

    payloads: dict[str, float] = {}
    for row in rows:
        if row.get("payload_bytes"):
            payloads.setdefault(row["scheme"], float(row["payload_bytes"]))
    if payloads:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        names = sorted(payloads)
        ax.bar(names, [payloads[n] for n in names], color="tab:blue")
        ax.set_ylabel("payload bytes per image")
        ax.tick_params(axis="x", rotation=30)
        fig.tight_layout()
        for ext in ("svg", "png"):
            p = plots_dir / f"bytes_bar.{ext}"
            fig.savefig(p)
            written.append(p)
        plt.close(fig)
    return written


def cmd_report(cfg: ExperimentConfig) -> Path:
    """Summarize sweep.csv into summary.json and refresh the plots."""
    out = cfg.resolved_output_dir()
    csv_path = out / "sweep.csv"
    if not csv_path.exists():
        raise ConfigError(f"no sweep results at {csv_path}; run sweep/baseline first")
    rows = read_sweep_csv(csv_path)
    summary = {
        "n_rows": len(rows),
        "schemes": sorted({r["scheme"] for r in rows}),
        "config": {
            "output_dir": str(out),
            "link": asdict(cfg.link),
            "sweep": asdict(cfg.sweep),
            "baseline": asdict(cfg.baseline),
            "bytes": asdict(cfg.bytes),
        },
        "best_accuracy": {},
        "best_ssim": {},
    }
    for row in rows:
        key = row["scheme"] + (
            f"+{row['classifier']}" if row["classifier"] not in ("", "none", "semantic") else ""
        )
        if row.get("accuracy"):
            acc = float(row["accuracy"])
            cur = summary["best_accuracy"].get(key)
            if cur is None or acc > cur["accuracy"]:
                summary["best_accuracy"][key] = {
                    "accuracy": acc,
                    "tx_power_dbm": float(row["tx_power_dbm"]),
                }
        if row.get("mean_ssim"):
            s = float(row["mean_ssim"])
            cur = summary["best_ssim"].get(key)
            if cur is None or s > cur["mean_ssim"]:
                summary["best_ssim"][key] = {
                    "mean_ssim": s,
                    "tx_power_dbm": float(row["tx_power_dbm"]),
                }
    path = out / "summary.json"
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
    write_plots(cfg)
    return path

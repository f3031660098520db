#!/usr/bin/env python3
"""Physical-layer sanity curves, no training involved.

Writes two charts plus a printed link-budget table:
  ser_vs_snr      closed-form 16-QAM SER against Monte-Carlo points
  link_budget     received power / SNR across elevation angles

    python scripts/physical_layer_curves.py --out runs/phy
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from semlink.channel import noise_variance_from_snr
from semlink.link_budget import (
    LinkBudget,
    friis_received_power,
    receive_snr,
    slant_range,
)
from semlink.qam import CONSTELLATION, symbol_error_rate_awgn


def mc_ser(snr_db: float, n_symbols: int, rng: np.random.Generator) -> float:
    sigma2 = noise_variance_from_snr(snr_db, signal_power=1.0)
    errors, remaining = 0, n_symbols
    while remaining:
        n = min(100_000, remaining)
        idx = rng.integers(0, 16, size=n)
        noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(sigma2 / 2.0)
        received = CONSTELLATION[idx] + noise
        d2 = np.abs(received[:, None] - CONSTELLATION[None, :]) ** 2
        errors += int((d2.argmin(axis=1) != idx).sum())
        remaining -= n
    return errors / n_symbols


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/phy", help="output directory")
    parser.add_argument("--mc-symbols", type=int, default=200_000)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    snr_grid = np.linspace(0.0, 22.0, 45)
    closed = [symbol_error_rate_awgn(s) for s in snr_grid]
    mc_points = [(s, mc_ser(s, args.mc_symbols, rng)) for s in range(0, 21, 2)]

    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    ax.semilogy(snr_grid, closed, label="closed form")
    xs = [p[0] for p in mc_points if p[1] > 0]
    ys = [p[1] for p in mc_points if p[1] > 0]
    ax.semilogy(xs, ys, "o", mfc="none", label=f"Monte Carlo ({args.mc_symbols} symbols)")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("16-QAM symbol error rate")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "ser_vs_snr.png")
    fig.savefig(out / "ser_vs_snr.svg")
    plt.close(fig)

    base = LinkBudget()
    elevations = np.arange(10.0, 91.0, 2.0)
    distances, powers, snrs = [], [], []
    for elev in elevations:
        link = replace(base, geometry=replace(base.geometry, elevation_deg=float(elev)))
        d = slant_range(link.geometry)
        distances.append(d)
        powers.append(friis_received_power(link, d))
        snrs.append(receive_snr(link))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.0))
    ax1.plot(elevations, distances)
    ax1.set_xlabel("elevation (deg)")
    ax1.set_ylabel("slant range (km)")
    ax1.grid(True, alpha=0.3)
    ax2.plot(elevations, snrs)
    ax2.set_xlabel("elevation (deg)")
    ax2.set_ylabel("receive SNR (dB)")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out / "link_budget.png")
    fig.savefig(out / "link_budget.svg")
    plt.close(fig)

    print(f"carrier wavelength: {base.wavelength_m:.4f} m")
    print(f"{'elev':>5} {'slant km':>10} {'P_r dBm':>9} {'SNR dB':>7}")
    for elev in (15.0, 30.0, 45.0, 60.0, 75.0, 90.0):
        link = replace(base, geometry=replace(base.geometry, elevation_deg=elev))
        d = slant_range(link.geometry)
        print(
            f"{elev:5.0f} {d:10.1f} {friis_received_power(link, d):9.2f} "
            f"{receive_snr(link):7.2f}"
        )
    print(f"charts in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

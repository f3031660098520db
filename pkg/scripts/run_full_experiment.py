#!/usr/bin/env python3
"""Drive the whole pipeline end to end: corpus, training, power sweep,
conventional baseline, report.

Equivalent to running the five CLI subcommands in order against one config,
kept as a script so a single nohup survives the multi-hour full run.

    python scripts/run_full_experiment.py --output runs/full
    python scripts/run_full_experiment.py --quick --output runs/smoke

--quick shrinks the corpus, epochs, and grid to a few minutes of CPU for
pipeline debugging; its numbers mean nothing.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from semlink.config import (
    BaselineRunConfig,
    DataConfig,
    ExperimentConfig,
    SweepConfig,
    load_config,
    with_output_dir,
)
from semlink.runner import (
    cmd_baseline,
    cmd_prepare_data,
    cmd_report,
    cmd_sweep,
    cmd_train,
)
from semlink.training import TrainConfig


def quick_config(output_dir: str) -> ExperimentConfig:
    cfg = ExperimentConfig(
        data=DataConfig(n_per_class=6, split=(72, 12, 18), seed=7),
        training=TrainConfig(epochs=3, batch_size=16, seed=5),
        sweep=SweepConfig(
            code_sizes=(16, 32),
            tasks=("reconstruct", "classify"),
            tx_powers_dbm=(0.0, 9.0, 21.0),
            n_mc=3,
            master_seed=2024,
        ),
        baseline=BaselineRunConfig(n_mc=3),
        output_dir=output_dir,
    )
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", "-c", default=None, help="TOML config (defaults when omitted)")
    parser.add_argument("--output", "-o", default=None, help="override output directory")
    parser.add_argument("--quick", action="store_true", help="minutes-scale smoke run")
    parser.add_argument("--skip-training", action="store_true",
                        help="reuse checkpoints already in the output dir")
    args = parser.parse_args(argv)

    if args.quick:
        if args.config:
            parser.error("--quick and --config are mutually exclusive")
        cfg = quick_config(args.output or "runs/quick")
    else:
        cfg = load_config(args.config)
        if args.output:
            cfg = with_output_dir(cfg, args.output)
            cfg.validate()

    out = cfg.resolved_output_dir()
    print(f"output dir: {out}")
    stages = [("prepare-data", cmd_prepare_data)]
    if not args.skip_training:
        stages.append(("train", cmd_train))
    stages += [("sweep", cmd_sweep), ("baseline", cmd_baseline), ("report", cmd_report)]

    for name, command in stages:
        started = time.time()
        print(f"[{name}] ...", flush=True)
        result = command(cfg)
        print(f"[{name}] done in {time.time() - started:.1f} s -> {result}", flush=True)

    print(f"sweep table: {out / 'sweep.csv'}")
    print(f"plots:       {out / 'plots'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Two-stage control against fixed-rank variants under a tight delay budget.

The budget is set to the average-channel cost of one dense rank-1 payload, so
every configuration must sparsify. The two-stage mode picks its rank offline;
the fixed-rank variants rely on online ratio control alone.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from fedlora import channel, control
from fedlora.cli import write_outputs
from fedlora.config import ExperimentConfig
from fedlora.linalg import rng_stream
from fedlora.simulate import run


def make_config(mode: str, seed: int, d_th: float) -> ExperimentConfig:
    return ExperimentConfig(
        d=32, ell=32, r_true=8, n_clients=20, k_per_round=5, rounds=300,
        epochs=3, eta=0.01, zeta=1e-3, batch=16, samples_per_client=32,
        shards=1, n_groups=5, hetero_scale=2.0, noise_std=0.01, r_max=16,
        mc_channel_draws=200, o_min=0.02, v_weight=1e-4, d_th=d_th,
        W=0.1, H=1370.0, bandwidth_total=1e4, mode=mode, seed=seed)


def delay_budget() -> float:
    cfg = make_config("tsfa", 0, 1.0)
    distances = rng_stream(0, 1).uniform(cfg.dist_min, cfg.dist_max,
                                         cfg.n_clients)
    mean_g = channel.mean_gains(0, distances, cfg.pathloss_exp, cfg.noise_var,
                                n_draws=cfg.mc_channel_draws)
    a = control.average_delay_coeff(mean_g, cfg.bits_per_param, cfg.d, cfg.ell,
                                    cfg.bandwidth_total)
    return a * cfg.k_per_round / cfg.n_clients


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/rank_study")
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--fixed-ranks", default="1,4,16",
                        help="comma-separated ranks for the one-stage runs")
    args = parser.parse_args()

    d_th = delay_budget()
    print(f"per-round delay budget {d_th:.4f}s")
    modes = ["tsfa"] + [f"osfa:{r}" for r in args.fixed_ranks.split(",")]
    out_root = Path(args.out)
    for mode in modes:
        losses, ranks = [], []
        for seed in range(args.seeds):
            result = run(make_config(mode, seed, d_th))
            write_outputs(result, out_root / mode.replace(":", "_")
                          / f"seed{seed}")
            losses.append(result.summary["final_loss"]
                          if result.error is None else np.inf)
            ranks.append(result.summary["chosen_rank"])
        print(f"{mode:8s} rank(s) {sorted(set(ranks))} "
              f"mean final loss {float(np.mean(losses)):.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

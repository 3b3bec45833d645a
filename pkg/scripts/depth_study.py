#!/usr/bin/env python3
"""Effect of the unroll depth L on the warm-started and trained network."""

from dataclasses import replace

from _common import base_parser, setup, write_rows
from damasnet.config import write_config
from damasnet.metrics import benchmark
from damasnet.net import init_params, predict
from damasnet.train import evaluate_loss, make_dataset, train_loop


def main():
    p = base_parser(__doc__)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--depths", type=int, nargs="+", default=[1, 3, 5, 10])
    args = p.parse_args()
    cfg, geometry, grid, steering = setup(args)
    data = make_dataset(args.samples, cfg.scene, grid, geometry, 1, cfg.seed)
    rows = []
    for L in args.depths:
        tc = replace(cfg.train, L=L)
        res = train_loop(data, steering, tc)
        truths = [[pos for pos, _ in s.source_truth] for s in res.val_set]
        csms = [s.csm for s in res.val_set]
        init = init_params(steering, rng_seed=tc.rng_seed, L=L)
        _, s0 = benchmark("init", lambda c: predict(c, steering, init), csms, grid, truths)
        _, s1 = benchmark("trained", lambda c: predict(c, steering, res.params), csms, grid, truths)
        rows.append({
            "L": L,
            "val_loss_init": evaluate_loss(res.val_set, steering, init),
            "val_loss_trained": res.history[-1]["val_loss"],
            "delta_L_init": s0["mean_delta_l"],
            "delta_L_trained": s1["mean_delta_l"],
            "forward_s": s1["mean_time"],
        })
    write_rows(f"{args.out}/depth_study.csv", rows)
    write_config(cfg, args.out)


if __name__ == "__main__":
    main()

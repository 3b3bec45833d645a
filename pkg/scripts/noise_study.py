#!/usr/bin/env python3
"""Noise robustness: score DAS, DAMAS-FISTA and a network trained on clean data
on the same validation layouts re-simulated at several SNRs."""

from _common import base_parser, setup, write_rows
from damasnet.config import write_config
from damasnet.metrics import benchmark
from damasnet.net import predict
from damasnet.solvers import damas_fista, das
from damasnet.train import make_dataset, train_loop, with_noise


def main():
    p = base_parser(__doc__)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--snr", type=float, nargs="+", default=[float("inf"), 10.0, 0.0, -10.0])
    args = p.parse_args()
    cfg, geometry, grid, steering = setup(args)
    data = make_dataset(args.samples, cfg.scene, grid, geometry, 1, cfg.seed)
    res = train_loop(data, steering, cfg.train)
    rows = []
    for snr in args.snr:
        val = with_noise(res.val_set, cfg.scene, grid, geometry, snr) if snr != float("inf") else res.val_set
        truths = [[pos for pos, _ in s.source_truth] for s in val]
        for name, fn in {
            "DAS": lambda c: das(c, steering).values,
            "DAMAS-FISTA": lambda c: damas_fista(das(c, steering), steering, cfg.solver.eps, cfg.solver.max_iter).map.values,
            "DAMAS-FISTA-Net": lambda c: predict(c, steering, res.params),
        }.items():
            _, s = benchmark(name, fn, [v.csm for v in val], grid, truths)
            rows.append({"snr_db": snr, "method": name, "R3": s["mean_renyi"], "delta_L": s["mean_delta_l"]})
    write_rows(f"{args.out}/noise_study.csv", rows)
    write_config(cfg, args.out)


if __name__ == "__main__":
    main()

"""End-to-end acceptance checks at desk scale (N=21 grid, 56-mic spiral).

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts the same condition.
"""

import time

import numpy as np
import pytest

from damasnet.metrics import evaluate_map, location_bias, renyi_entropy
from damasnet.net import forward, init_params, pre_imaging_layer, predict, with_solver_momentum
from damasnet.solvers import (
    FistaState,
    damas_fista,
    damas_gauss_seidel,
    das,
    fista_nnls,
    fista_step,
    gauss_seidel_nnls,
    momentum_schedule,
    objective,
)
from damasnet.spectra import Csm
from damasnet.train import SceneTemplate, TrainConfig, make_dataset, split, train_loop, with_noise

from conftest import random_psd, record_criterion
from oracles import converged_instances, gradient_check, small_network_case

ON_GRID = SceneTemplate(on_grid=True)
# solver settings shared with the CLI defaults
FISTA_EPS, FISTA_MAX = 1e-3, 1000
GS_SWEEPS, GS_TOL = 1000, 1e-4


def _peak_bias(values, grid, truth):
    return evaluate_map("", values, grid, truth)


@pytest.fixture(scope="module")
def trained(desk_grid, geometry, desk_steering):
    data = make_dataset(200, ON_GRID, desk_grid, geometry, 1, rng_seed=0)
    cfg = TrainConfig(epochs=30, rng_seed=0)
    t0 = time.perf_counter()
    res = train_loop(data, desk_steering, cfg)
    return res, time.perf_counter() - t0


def _net_delta_l(params, samples, grid, steering):
    reps = [_peak_bias(predict(s.csm, steering, params), grid, [p for p, _ in s.source_truth]) for s in samples]
    return float(np.mean([r.delta_l for r in reps])), sum(r.unmatched for r in reps)


def test_c1_solver_oracle_equivalence():
    t0 = time.perf_counter()
    # Instances are DAMAS systems built from real steering on grids with
    # N^2 <= 25. Candidates whose projected-gradient oracle has not converged
    # (it disagrees with an active-set NNLS solve) cannot act as a reference
    # and are replaced.
    # Family 1: noise-free b = A x_true, where Gauss-Seidel and least squares
    # share a minimizer; the optimum is ~0, so gaps are scaled by 0.5 ||b||^2.
    inst, f_or, drop1 = converged_instances(50, seed=2024, consistent=True)
    gap_f = gap_g = 0.0
    for (A, b, lip), fo in zip(inst, f_or):
        scale = max(fo, 0.5 * b @ b)
        xf, _, _ = fista_nnls(A, b, lip, eps=1e-10, max_iter=100_000)
        xg, _, _ = gauss_seidel_nnls(A, b, sweeps=100_000, tol=1e-12)
        gap_f = max(gap_f, abs(objective(A, xf, b) - fo) / scale)
        gap_g = max(gap_g, abs(objective(A, xg, b) - fo) / scale)
    # Family 2: strictly positive optimum; FISTA against the oracle value itself.
    hard, f_hard, drop2 = converged_instances(50, seed=2025, consistent=False)
    gap_h = 0.0
    for (A, b, lip), fo in zip(hard, f_hard):
        x, _, _ = fista_nnls(A, b, lip, eps=1e-12, max_iter=100_000)
        gap_h = max(gap_h, abs(objective(A, x, b) - fo) / fo)
    dt = time.perf_counter() - t0
    ok = gap_f <= 1e-6 and gap_g <= 1e-4 and gap_h <= 1e-6 and dt < 30
    record_criterion(
        1, ok,
        f"FISTA gap {gap_f:.1e} (<=1e-6), GS gap {gap_g:.1e} (<=1e-4) on 50 consistent systems; "
        f"FISTA rel. gap {gap_h:.1e} on 50 positive-residual systems; "
        f"{drop1}+{drop2} candidates replaced (oracle unconverged); {dt:.1f}s (<30s)",
    )
    assert ok


def test_c2_gradient_check():
    t0 = time.perf_counter()
    st, p, C, gt = small_network_case(seed=11, L=2)
    worst, details = gradient_check(st, p, C, gt, sampled=20, seed=11)
    bad = [d for d in details if not d[4]]
    dt = time.perf_counter() - t0
    ok = not bad and dt < 60
    record_criterion(2, ok, f"{len(details)} entries, {len(bad)} outside 1e-4 rel / 1e-6 abs, worst rel {worst:.1e}; {dt:.2f}s (<60s)")
    assert ok


def test_c3_warm_start_identities(desk_steering, rng):
    p = init_params(desk_steering, rng_seed=0)
    err_a = 0.0
    for _ in range(20):
        C = Csm(random_psd(rng, desk_steering.M, rank=int(rng.integers(1, 8))), 2000.0)
        err_a = max(err_a, np.max(np.abs(pre_imaging_layer(C, p) - das(C, desk_steering).values)))
    q = with_solver_momentum(p, momentum_schedule(p.L))
    err_b = 0.0
    for _ in range(5):
        C = Csm(random_psd(rng, desk_steering.M, rank=2), 2000.0)
        out, _ = forward(C, desk_steering, q)
        b = das(C, desk_steering).values
        s = FistaState.zeros(b.size)
        for _ in range(q.L):
            s = fista_step(s, desk_steering.A, b, desk_steering.lipschitz)
        err_b = max(err_b, np.max(np.abs(out.values - s.x_curr)))
    ok = err_a <= 1e-10 and err_b <= 1e-9
    record_criterion(3, ok, f"(a) pre-imaging vs DAS max diff {err_a:.1e} (<=1e-10); (b) forward vs {q.L} FISTA steps {err_b:.1e} (<=1e-9)")
    assert ok


def test_c4_method_quality(desk_grid, geometry, desk_steering):
    t0 = time.perf_counter()
    samples = make_dataset(10, ON_GRID, desk_grid, geometry, 1, rng_seed=1)
    R = {"das": [], "damas": [], "damas-fista": []}
    dl = {k: [] for k in R}
    for s in samples:
        truth = [p for p, _ in s.source_truth]
        b = das(s.csm, desk_steering, desk_grid)
        maps = {
            "das": b.values,
            "damas": damas_gauss_seidel(b, desk_steering, GS_SWEEPS, GS_TOL).map.values,
            "damas-fista": damas_fista(b, desk_steering, FISTA_EPS, FISTA_MAX).map.values,
        }
        for k, v in maps.items():
            rep = _peak_bias(v, desk_grid, truth)
            R[k].append(rep.renyi)
            dl[k].append(rep.delta_l)
    dt = time.perf_counter() - t0
    exact = all(d == 0.0 for v in dl.values() for d in v)
    mean = {k: float(np.mean(v)) for k, v in R.items()}
    # the ordering is judged on the per-method averages, as a summary row reports them
    order = mean["damas-fista"] < mean["damas"] < mean["das"]
    per_scene = sum(f < g < d for f, g, d in zip(R["damas-fista"], R["damas"], R["das"]))
    gap = mean["das"] - mean["damas-fista"]
    ok = exact and order and gap >= 3.0 and dt < 300
    record_criterion(
        4, ok,
        f"dL all zero: {exact}; mean R(3) DF/DAMAS/DAS = {mean['damas-fista']:.2f}/{mean['damas']:.2f}/"
        f"{mean['das']:.2f} bits, ordering {order} ({per_scene}/{len(samples)} scenes individually); "
        f"DAS-DF gap {gap:.2f} bits (>=3 required); {dt:.0f}s",
    )
    assert ok


def test_c5_timing_order(trained, desk_grid, geometry, desk_steering):
    res, _ = trained
    params = res.params
    s = res.val_set[0]

    def median_time(fn, reps):
        ts = []
        for _ in range(reps):
            t0 = time.perf_counter()
            fn()
            ts.append(time.perf_counter() - t0)
        return float(np.median(ts))

    t_net = median_time(lambda: predict(s.csm, desk_steering, params), 20)
    t_df = median_time(lambda: damas_fista(das(s.csm, desk_steering), desk_steering, FISTA_EPS, FISTA_MAX), 10)
    t_gs = median_time(lambda: damas_gauss_seidel(das(s.csm, desk_steering), desk_steering, GS_SWEEPS, GS_TOL), 3)
    ok = t_net < t_df < t_gs and 10 * t_net <= t_gs
    record_criterion(5, ok, f"net {t_net * 1e3:.2f} ms < DF {t_df * 1e3:.2f} ms < DAMAS {t_gs * 1e3:.0f} ms; DAMAS/net = {t_gs / t_net:.0f}x (>=10x)")
    assert ok


def test_c6_training_efficacy(trained, desk_grid, desk_steering):
    res, dt = trained
    v0, vL = res.history[0]["val_loss"], res.history[-1]["val_loss"]
    dl, unmatched = _net_delta_l(res.params, res.val_set, desk_grid, desk_steering)
    ok = vL < 0.2 * v0 and dl <= desk_grid.spacing and unmatched == 0 and dt < 1800
    record_criterion(
        6, ok,
        f"val loss {v0:.4f} -> {vL:.4f} (ratio {vL / v0:.3f}, <0.2 required); val dL {dl:.4f} m "
        f"(<= {desk_grid.spacing:.2f} m), {unmatched} unmatched; train {dt:.0f}s",
    )
    assert ok


def test_c7_noise_robustness(trained, desk_grid, geometry, desk_steering):
    res, _ = trained
    val = res.val_set
    clean, _ = _net_delta_l(res.params, val, desk_grid, desk_steering)
    parts, ok = [], True
    for snr in (10.0, 0.0):
        noisy = with_noise(val, ON_GRID, desk_grid, geometry, snr)
        das_dl = max(_peak_bias(das(s.csm, desk_steering).values, desk_grid, [p for p, _ in s.source_truth]).delta_l for s in noisy)
        net_dl, unmatched = _net_delta_l(res.params, noisy, desk_grid, desk_steering)
        good = das_dl == 0.0 and net_dl - clean <= desk_grid.spacing and unmatched == 0
        ok &= good
        parts.append(f"{snr:+.0f} dB: DAS max dL {das_dl:.3f}, net dL {net_dl:.4f} (clean {clean:.4f})")
    record_criterion(7, ok, "; ".join(parts))
    assert ok


def test_c8_two_source_generalization(trained, desk_grid, geometry, desk_steering):
    res, _ = trained
    two = make_dataset(200, ON_GRID, desk_grid, geometry, 2, rng_seed=7)
    _, val = split(two, 0.7, 0)
    dl, unmatched = _net_delta_l(res.params, val, desk_grid, desk_steering)
    ok = dl <= 2 * desk_grid.spacing and unmatched == 0
    record_criterion(8, ok, f"net trained on one-point data: two-point val dL {dl:.4f} m (<= {2 * desk_grid.spacing:.2f} m), {unmatched} unmatched truths")
    assert ok


def test_c9_metric_identities():
    one_hot = np.zeros(16)
    one_hot[5] = 1.0
    B = np.random.default_rng(9).uniform(0, 1, 16)
    checks = {
        "R(one-hot)=0": renyi_entropy(one_hot) == 0.0,
        "R(2B)=R(B)-1": abs(renyi_entropy(2 * B) - (renyi_entropy(B) - 1)) < 1e-12,
        "bias identity": location_bias([(0.1, 0.2, 2.5)], [(0.1, 0.2, 2.5)]) == 0.0,
        "bias offset": abs(location_bias([(0.1, 0.2, 2.5)], [(0.1, 0.1, 2.5)]) - 0.1) < 1e-15,
        "bias crossed": abs(location_bias([(1, 0, 0), (0, 0, 0)], [(0, 0, 0), (1, 0, 0)])) == 0.0,
    }
    ok = all(checks.values())
    record_criterion(9, ok, ", ".join(f"{k}: {'ok' if v else 'no'}" for k, v in checks.items()))
    assert ok

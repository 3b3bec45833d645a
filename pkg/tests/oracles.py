"""Independent reference computations shared by the test modules."""

import numpy as np

from damasnet.scene import make_spiral_array
from damasnet.steering import build_steering, make_grid


def projected_gradient(A, b, lipschitz, iterations=100_000):
    """Plain projected gradient descent on 0.5||Ax - b||^2, x >= 0."""
    AtA, Atb = A.T @ A, A.T @ b
    x = np.zeros(b.size)
    for _ in range(iterations):
        x = np.maximum(x - (AtA @ x - Atb) / lipschitz, 0.0)
    return x


def projected_gradient_batch(As, bs, lipschitz, iterations=100_000):
    """Same iteration run on a stack of equally sized problems at once."""
    As, bs = np.asarray(As), np.asarray(bs)
    AtA = np.einsum("kij,kil->kjl", As, As)
    Atb = np.einsum("kij,ki->kj", As, bs)
    step = 1.0 / np.asarray(lipschitz)[:, None]
    x = np.zeros_like(bs)
    for _ in range(iterations):
        x = np.maximum(x - step * (np.einsum("kij,kj->ki", AtA, x) - Atb), 0.0)
    return x


def damas_instances(count, seed, consistent=True, min_residual=1e-2):
    """Small DAMAS systems from real steering on grids with N^2 <= 25.

    Consistent instances use b = A x_true with sparse x_true >= 0 (noise-free,
    incoherent sources on the grid). Inconsistent ones perturb b so that the
    least-squares optimum keeps at least `min_residual` of ||b||^2 / 2.
    """
    from scipy.optimize import nnls

    rng = np.random.default_rng(seed)
    geo = make_spiral_array()
    out = []
    while len(out) < count:
        n = int(rng.integers(2, 6))
        st = build_steering(make_grid(n, rng.uniform(0.3, 1.5), 2.5), geo, rng.uniform(1000, 4000), 343.0)
        A, N = st.A, st.A.shape[0]
        if consistent:
            x = np.where(rng.uniform(size=N) < 0.3, rng.uniform(0.1, 1.0, N), 0.0)
            x[rng.integers(N)] = rng.uniform(0.1, 1.0)
            b = A @ x
        else:
            b = np.maximum(A @ rng.uniform(0, 1, N) + rng.normal(0, 0.5, N), 0.0)
            xs, _ = nnls(A, b)
            r = A @ xs - b
            if r @ r < min_residual * (b @ b):
                continue
        out.append((A, b, st.lipschitz))
    return out


def oracle_objectives(instances, iterations=100_000):
    """Projected-gradient oracle objective per instance, batched by size."""
    f = np.empty(len(instances))
    sizes = {}
    for i, (A, _, _) in enumerate(instances):
        sizes.setdefault(A.shape[0], []).append(i)
    for idx in sizes.values():
        As = [instances[i][0] for i in idx]
        bs = [instances[i][1] for i in idx]
        ls = [instances[i][2] for i in idx]
        xs = projected_gradient_batch(As, bs, ls, iterations)
        for i, x in zip(idx, xs):
            A, b, _ = instances[i]
            r = A @ x - b
            f[i] = 0.5 * r @ r
    return f


def small_network_case(seed=0, L=2):
    """Random N=5 grid, M=3 array, depth-L network with every path active."""
    from damasnet.net import init_params
    from damasnet.scene import ArrayGeometry

    rng = np.random.default_rng(seed)
    geo = ArrayGeometry(np.column_stack([rng.uniform(-0.3, 0.3, (3, 2)), np.zeros(3)]))
    st = build_steering(make_grid(5, 0.8, 2.0), geo, 2000.0, 343.0)
    p = init_params(st, rng_seed=seed, L=L)
    p.iota += rng.uniform(-0.2, 0.2, L)
    p.rho *= rng.uniform(0.5, 1.5, L)
    p.tau += rng.uniform(-0.2, 0.2, L)
    p.mu = rng.uniform(0.2, 0.8, L)
    p.eta = np.array([0.9, 0.7])
    p.fc_bias = rng.uniform(-0.01, 0.05, 25)
    X = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    C = X @ X.conj().T / 3
    gt = np.zeros(25)
    gt[rng.integers(25)] = 1.0
    return st, p, C, gt


def central_difference(f, params, name, index, rel_step=1e-6):
    arr = getattr(params, name)
    flat = arr.reshape(-1)
    old = flat[index]
    h = rel_step * max(abs(old), 1.0)
    flat[index] = old + h
    up = f(params)
    flat[index] = old - h
    down = f(params)
    flat[index] = old
    return (up - down) / (2 * h)


def gradient_check(st, p, C, gt, sampled=20, seed=0):
    """Worst relative error between analytic and finite-difference gradients.

    Scalars are checked exhaustively; W_re, W_im and fc_weight on `sampled`
    random entries each; fc_bias in full. Returns (worst, details).
    """
    from damasnet.net import forward, predict
    from damasnet.train import backward, loss

    rng = np.random.default_rng(seed)
    _, trace = forward(C, st, p)
    grads = backward(trace, C, st, p, gt)
    f = lambda q: loss(predict(C, st, q), gt)  # noqa: E731
    worst, details = 0.0, []
    for name, arr in p.arrays().items():
        if name in ("W_re", "W_im", "fc_weight"):
            idx = rng.choice(arr.size, size=min(sampled, arr.size), replace=False)
        else:
            idx = range(arr.size)
        g = getattr(grads, name).reshape(-1)
        for i in idx:
            fd = central_difference(f, p, name, int(i))
            err = abs(g[i] - fd) / max(abs(fd), abs(g[i]), 1e-2)
            ok = abs(g[i] - fd) <= max(1e-4 * abs(fd), 1e-6)
            worst = max(worst, err)
            details.append((name, int(i), float(g[i]), float(fd), ok))
    return worst, details


def oracle_converged(instances, f_oracle, rtol=1e-8):
    """Mask of instances whose oracle objective matches an active-set NNLS solve.

    The tolerance is relative to ``max(f_oracle, 0.5 ||b||^2)``, the same scale
    used when comparing solvers against the oracle.
    """
    from scipy.optimize import nnls

    ok = []
    for (A, b, _), fo in zip(instances, f_oracle):
        x, _ = nnls(A, b)
        r = A @ x - b
        ok.append(abs(fo - 0.5 * r @ r) <= rtol * max(fo, 0.5 * b @ b))
    return np.array(ok)


def converged_instances(count, seed, consistent, spare=20):
    """`count` instances whose oracle is verified, plus how many were dropped."""
    cand = damas_instances(count + spare, seed, consistent)
    f = oracle_objectives(cand)
    keep = np.flatnonzero(oracle_converged(cand, f))[:count]
    if keep.size < count:
        raise RuntimeError("too few instances with a converged oracle")
    return [cand[i] for i in keep], f[keep], int(keep[-1] + 1 - count)

"""Time the numba and numpy convolution kernels against each other.

    python3 benchmarks/bench_kernels.py [--repeat N]

Covers the raw im2col/col2im pair at the desk and canonical geometries and a
full encoder forward+backward pass with each backend switched in.
"""

import argparse
import timeit

import numpy as np

from padkit import _accel
from padkit import numcore as nc
from padkit import policynet as pn
from padkit.numcore import _kernels

# (batch, channels, size, kernel, stride, padding)
GEOMETRIES = {
    "desk k4s2": (32, 9, 40, 4, 2, 1),
    "desk k3s1": (32, 16, 10, 3, 1, 1),
    "canonical k3s2": (8, 9, 84, 3, 2, 1),
    "canonical k3s1": (8, 32, 42, 3, 1, 1),
}


def bench_raw(repeat: int) -> None:
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (n, c, size, k, s, p) in GEOMETRIES.items():
        x = rng.random((n, c, size, size)).astype(np.float32)
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        ho = nc.conv_output_size(size, k, s, p)
        cols = _kernels.im2col_numpy(xp, k, k, s, ho, ho)
        assert np.array_equal(cols, _kernels.im2col_numba(xp, k, k, s, ho, ho))
        _kernels.col2im_numba(cols, xp.shape, k, k, s, ho, ho)  # compile outside the timing
        for op, fns in (
            ("im2col", (lambda: _kernels.im2col_numpy(xp, k, k, s, ho, ho), lambda: _kernels.im2col_numba(xp, k, k, s, ho, ho))),
            ("col2im", (lambda: _kernels.col2im_numpy(cols, xp.shape, k, k, s, ho, ho), lambda: _kernels.col2im_numba(cols, xp.shape, k, k, s, ho, ho))),
        ):
            t_np, t_nb = (min(timeit.repeat(f, number=1, repeat=repeat)) * 1e3 for f in fns)
            print(f"{op + ' ' + name:<28}{t_np:>10.2f}{t_nb:>10.2f}{t_np / t_nb:>8.1f}x")


def bench_encoder(repeat: int) -> None:
    cfg = pn.desk_profile()
    params = pn.build(cfg, 0)
    x = np.random.default_rng(1).random((32, cfg.in_channels, cfg.crop_size, cfg.crop_size)).astype(np.float32)

    def step():
        for t in params.theta_e.values():
            t.grad = None
        nc.mean(pn.encode(x, params, cfg)).backward()

    out = {}
    saved = _accel.USE_NUMBA
    try:
        for flag in (False, True):
            _accel.USE_NUMBA = flag
            step()
            out[flag] = min(timeit.repeat(step, number=1, repeat=repeat)) * 1e3
    finally:
        _accel.USE_NUMBA = saved
    print(f"{'encoder fwd+bwd (desk, 32)':<28}{out[False]:>10.2f}{out[True]:>10.2f}{out[False] / out[True]:>8.1f}x")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    bench_raw(args.repeat)
    bench_encoder(args.repeat)


if __name__ == "__main__":
    main()

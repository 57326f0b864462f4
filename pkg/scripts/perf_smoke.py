"""Time the blocked forward pass against the naive oracle on one shape."""
import argparse
import time

import numpy as np

from dilconv import ConvParams, conv1d_forward, naive_forward, pack_weights_forward


def best_of(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--batch", type=int, default=2)
    ap.add_argument("--channels", type=int, default=15)
    ap.add_argument("--filter-size", type=int, default=51)
    ap.add_argument("--dilation", type=int, default=8)
    ap.add_argument("--width", type=int, default=60000, help="output width Q")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args()

    c = args.channels
    p = ConvParams(c, c, args.filter_size, args.dilation)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (args.batch, c, args.width + p.receptive))
    x = x.astype(np.float32)
    w = rng.uniform(-1, 1, (c, c, p.s)).astype(np.float32)
    pw = pack_weights_forward(w)
    conv1d_forward(x, pw, p, threads=args.threads)  # compile
    fast = best_of(lambda: conv1d_forward(x, pw, p, threads=args.threads), args.reps)
    naive = best_of(lambda: naive_forward(x, w, p), 1)
    flops = 2.0 * args.batch * c * c * p.s * args.width
    print(f"blocked {fast:.3f}s ({flops / fast / 1e9:.2f} GFLOP/s), naive {naive:.3f}s, "
          f"speedup {naive / fast:.1f}x")


if __name__ == "__main__":
    main()

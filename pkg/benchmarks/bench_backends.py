#!/usr/bin/env python3
"""Time the numba kernels against the numpy fallback on one image.

Both backends must agree bit for bit; the script aborts if they do not.

    python benchmarks/bench_backends.py --image corpus/lena.pgm --pred gap al32 --repeat 5
"""
import argparse
import time

import numpy as np

from rrbe.codec import build_schedule, encode, recover_image
from rrbe.cipher import KeyMaterial, KeyRole
from rrbe.image import load_pgm
from rrbe.kernels import get_backend
from rrbe.room import _kernel_coefs, analyze

KERNELS = ("predict", "walk", "recover")


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(img, pred, q, w, repeat):
    rng = np.random.default_rng(1)
    nonce = rng.bytes(12)
    K_e = KeyMaterial(KeyRole.CONTENT_OWNER, rng.bytes(16), nonce)
    an = analyze(img, pred, q, w)
    marked = encode(img, np.zeros(0, np.uint8), pred, q, w, K_e, analysis=an)
    r = an.grid.region
    coefs, cell = _kernel_coefs(an.table)
    src = np.ascontiguousarray(img, dtype=np.int64)
    header, _ = build_schedule(an.labels, an.grid)
    blocks = np.ascontiguousarray(marked.pixels.reshape(-1)[an.grid.pixel_index()])
    mask = np.zeros(3 * an.grid.K, np.uint8)

    rows = []
    results = {}
    for name in ("numba", "numpy"):
        be = get_backend(name)
        jobs = {
            "predict": lambda: be.predict_region(src, an.kind.kernel_code, coefs, cell,
                                                 r.r0, r.r1, r.c0, r.c1),
            "walk": lambda: be.walk_labels(blocks, header.start_block, header.start_code, mask)[0],
            "recover": lambda: recover_image(marked, K_e, backend=be),
        }
        for kernel in KERNELS:
            jobs[kernel]()  # warm-up (includes JIT compilation for numba)
            t, out = best_of(jobs[kernel], repeat)
            results[name, kernel] = np.asarray(out)
            rows.append((name, kernel, t))
    for kernel in KERNELS:
        if not np.array_equal(results["numba", kernel], results["numpy", kernel]):
            raise SystemExit(f"backends disagree on {kernel} ({pred})")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--image", default="corpus/lena.pgm")
    ap.add_argument("--pred", nargs="+", default=["gap", "al32"])
    ap.add_argument("--block", default="2x4")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    q, w = (int(v) for v in args.block.split("x"))
    img = load_pgm(args.image)
    print(f"{'pred':6s} {'kernel':8s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for pred in args.pred:
        t = {(b, k): s for b, k, s in run(img, pred, q, w, args.repeat)}
        for kernel in KERNELS:
            nb, npy = t["numba", kernel], t["numpy", kernel]
            print(f"{pred:6s} {kernel:8s} {nb * 1e3:10.2f} {npy * 1e3:10.2f} {npy / nb:8.1f}x")


if __name__ == "__main__":
    main()

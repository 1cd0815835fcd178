"""Compare the compiled and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--size 256] [--repeat 5] [--json out.json]

Each kernel is checked for identical output before it is timed.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from vnskit import kernels


def cases(size, rng):
    mask = np.zeros((size, size), bool)
    yy, xx = np.mgrid[:size, :size]
    mask[(yy - size / 2) ** 2 + (xx - size / 3) ** 2 < (size / 3) ** 2] = True
    mask ^= rng.random((size, size)) < 0.02
    q = rng.integers(0, 16, (size, size))
    stack = rng.random((64, 32 * 32)) < 0.4
    d = max(1, round(0.02 * np.hypot(size, size)))
    return {
        "contour": lambda k: k.contour(mask),
        f"boundary_band(d={d})": lambda k: k.boundary_band(mask, d),
        "glcm_counts(16 levels)": lambda k: k.glcm_counts(q, mask, 16, ((0, 1), (1, 0))),
        "pairwise_iou(64x64 masks)": lambda k: k.pairwise_iou(stack, stack),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)

    backends = {"python": kernels.python_kernels}
    if kernels.compiled_kernels is None:
        print("compiled backend unavailable; timing the numpy fallback only", file=sys.stderr)
    else:
        backends["cython"] = kernels.compiled_kernels

    rows = []
    for name, fn in cases(args.size, np.random.default_rng(0)).items():
        outs = {b: fn(k) for b, k in backends.items()}
        ref = outs["python"]
        agree = all(np.array_equal(o, ref) for o in outs.values())
        row = {"kernel": name, "agree": agree}
        for b, k in backends.items():
            row[b] = min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) * 1e3
        rows.append(row)

    head = f"{'kernel':<28}{'python ms':>12}{'cython ms':>12}{'speedup':>10}  agree"
    print(head)
    print("-" * len(head))
    for r in rows:
        cy = r.get("cython")
        speed = f"{r['python'] / cy:9.1f}x" if cy else f"{'-':>10}"
        cy_s = f"{cy:12.3f}" if cy else f"{'-':>12}"
        print(f"{r['kernel']:<28}{r['python']:12.3f}{cy_s}{speed}  {r['agree']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"size": args.size, "rows": rows}, fh, indent=2)
    return 0 if all(r["agree"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())

"""Compare the compiled and numpy contraction kernels on model spectra.

Times ``KSoSModel.fourier_coefficients`` at the unique frequencies of a
Bessel sample, once per backend, and checks that both give the same
numbers. Usage::

    python benchmarks/bench_coefficients.py [--samples N] [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from certopt import _backend
from certopt.harmonic import BesselSpectrumDistribution
from certopt.model import KSoSModel

SHAPES = ((2, (1, 8, 2)), (2, (2, 16, 4)), (3, (8, 32, 4)), (5, (4, 16, 4)))


def timed(model, freqs, backend, repeat):
    original = _backend.BACKEND
    _backend.BACKEND = backend
    try:
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            out = model.fourier_coefficients(freqs)
            best = min(best, time.perf_counter() - t0)
    finally:
        _backend.BACKEND = original
    return best, out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--samples", type=int, default=10**5)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _backend.BACKEND != "cython":
        raise SystemExit("compiled kernel unavailable; build with `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(args.seed)
    print(f"{'d':>2} {'shape':>9} {'pairs':>6} {'freqs':>6} {'cython s':>9} {'numpy s':>9} {'speedup':>8} {'max diff':>9}")
    for dim, (b, s, r) in SHAPES:
        model = KSoSModel(rng.random((b, s, dim)), rng.standard_normal((b, r, s)), 1.0)
        freqs = BesselSpectrumDistribution(model.scale).sample(args.samples, args.seed).freqs
        t_c, out_c = timed(model, freqs, "cython", args.repeat)
        t_p, out_p = timed(model, freqs, "python", args.repeat)
        diff = float(np.abs(out_c - out_p).max() / np.abs(out_c).max())
        pairs = b * s * (s + 1) // 2
        print(f"{dim:>2} {b}x{s}x{r:<3} {pairs:>6} {len(freqs):>6} {t_c:>9.4f} {t_p:>9.4f} {t_p / t_c:>8.2f} {diff:>9.1e}")


if __name__ == "__main__":
    main()

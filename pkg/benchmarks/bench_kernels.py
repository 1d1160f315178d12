"""Compare the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--kernel NAME ...]

Each kernel runs on identical inputs in both backends. The table reports the
best-of-N wall time per call and the speedup, and the script exits non-zero if
the two backends disagree.
"""
import argparse
import sys
import timeit

import numpy as np

from spiralbw import _kernels
from spiralbw.lg_modes import LGMode, gauss_legendre
from spiralbw.qstate import product_labels, random_density
from spiralbw.tomography import _phis, _t_from_rho, simulate_run
from spiralbw.measurement import ZERO_NOISE


def _cases():
    rng = np.random.default_rng(7)
    rho = random_density(4, rng, labels=product_labels([0, 2], [0, 2]))
    run = simulate_run(rho, ZERO_NOISE, 1000.0, infinite=True)
    phis = _phis(run)
    t = _t_from_rho(rho.matrix)
    counts = run.counts
    herm = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    herm = herm + herm.conj().T
    r, w = gauss_legendre(256, 0.0, 30.0)
    rows = np.array(
        [(abs(m.l), m.waist, m.log_norm, 1.0) for m in (LGMode(10), LGMode(-10), LGMode(3), LGMode(-3))],
        dtype=np.float64,
    )
    means = rng.uniform(0.0, 200.0, size=2000)

    def quad(x):
        return float(np.sum((x - np.arange(x.size)) ** 2))

    x0 = np.zeros(6)
    return {
        "poisson_sample": (lambda k: k.poisson_sample(means, 11, 0), 5),
        "jacobi_eigh": (lambda k: k.jacobi_eigh(herm)[0], 20),
        "overlap_sum": (lambda k: k.overlap_sum(r, w, rows), 200),
        "tomo_probabilities": (lambda k: k.tomo_probabilities(t, phis), 500),
        "tomo_nll": (lambda k: k.tomo_nll(t, phis, counts, 1.0, 0.0, True), 500),
        "nelder_mead": (lambda k: k.nelder_mead(quad, x0, quad(x0), 1e-10, 5000, None)[0], 3),
    }


def _same(a, b):
    if isinstance(a, (tuple, list)):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a), np.asarray(b), rtol=1e-12, atol=1e-12)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--kernel", action="append", help="run only these kernels")
    args = parser.parse_args(argv)
    if _kernels.compiled is None:
        print("compiled extension not available; build it with `pip install -e . --no-build-isolation`")
        return 1
    cases = _cases()
    names = args.kernel or list(cases)
    print(f"{'kernel':<20}{'python (us)':>14}{'compiled (us)':>16}{'speedup':>10}  agree")
    mismatches = 0
    for name in names:
        fn, number = cases[name]
        agree = _same(fn(_kernels.fallback), fn(_kernels.compiled))
        mismatches += not agree
        times = []
        for mod in (_kernels.fallback, _kernels.compiled):
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            times.append(best * 1e6)
        print(f"{name:<20}{times[0]:>14.1f}{times[1]:>16.2f}{times[0] / times[1]:>9.1f}x  {agree}")
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())

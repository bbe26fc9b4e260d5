"""Time the hot kernels on both backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N time per call for the compiled and pure-Python
kernels and the speedup. The fit objective is one trajectory over the 16
bundled survey dates; the sampler draws 10^4 trinomial surveys.
"""
import argparse
import timeit

import numpy as np

from surveyband import _pykernels
from surveyband.io import bundled_surveys
from surveyband.pipeline import sample_dataset, survey_grid

try:
    from surveyband import _ckernels
except ImportError:
    _ckernels = None


def cases(surveys):
    grid = survey_grid(surveys)
    observed = np.ascontiguousarray(sample_dataset(surveys, 0, 1))
    a0 = np.ascontiguousarray(observed[0])
    upper = np.array([1e-3, -2e-3, 5e-4])
    theta = np.ascontiguousarray(surveys[0].theta)
    uniforms = np.random.default_rng(0).random((10_000, 2))
    return {
        "integrate (16 dates, h=0.005)": lambda k: k.integrate(a0, upper, grid, 0.005),
        "max_statistic (fit objective)": lambda k: k.max_statistic(a0, upper, grid, 0.005, observed),
        "chi2_sf (dof 15)": lambda k: k.chi2_sf(12.3, 15.0),
        "multinomial_batch (10^4 x n=1800)": lambda k: k.multinomial_batch(1800, theta, uniforms),
    }


def best_time(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = [_pykernels] + ([_ckernels] if _ckernels is not None else [])
    print(f"{'kernel':36s} " + " ".join(f"{b.BACKEND:>12s}" for b in backends) + "   speedup")
    for name, call in cases(bundled_surveys()).items():
        times = [best_time(lambda b=b: call(b), args.repeat) for b in backends]
        cols = " ".join(f"{t * 1e6:10.1f}us" for t in times)
        speed = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else "       -"
        print(f"{name:36s} {cols} {speed}")
    if _ckernels is None:
        print("compiled kernels not built; only the pure-Python backend was timed")


if __name__ == "__main__":
    main()

"""Corrector size, residual and bi-Lipschitz ratios of x -> x + u(t, x) against the interval length."""

import argparse

import numpy as np

from stochflow import presets
from stochflow.errors import IntervalTooLongError
from stochflow.fields import DiffusionSpec
from stochflow.grids import GridField
from stochflow.zvonkin import bilipschitz_check, sample_pairs, solve_corrector


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--amplitude", type=float, default=2.0)
    ap.add_argument("--nodes", type=int, default=512)
    ap.add_argument("--n-times", type=int, default=100)
    args = ap.parse_args()

    b = presets.gaussian_bump(1, args.amplitude)
    sigma = DiffusionSpec.scalar(2.0**0.5, 1)
    grid = GridField([-10.0], [10.0], np.zeros((1, args.nodes)))
    print(f"{'s0':>8} {'iter':>5} {'Lip u':>8} {'residual':>9} {'min':>7} {'max':>7}")
    for s0 in (0.8, 0.4, 0.2, 0.1, 0.05, 0.025):
        try:
            sol = solve_corrector(b, sigma, 0.0, s0, grid, args.n_times)
        except IntervalTooLongError as exc:
            print(f"{s0:8.3f}  too long: {exc}")
            continue
        lo, hi = bilipschitz_check(sol, sample_pairs(sol, 4000))
        print(f"{s0:8.3f} {sol.iterations:5d} {sol.lipschitz_u():8.4f} {sol.residual:9.2e} {lo:7.4f} {hi:7.4f}")


if __name__ == "__main__":
    main()

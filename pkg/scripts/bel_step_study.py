"""BEL against common-noise finite differences on the OU system as the time step shrinks.

The finite difference differentiates the Euler chain, so the two differ by O(dt).
"""

import argparse

import numpy as np

from stochflow import defaults, presets
from stochflow.fields import DiffusionSpec
from stochflow.paths import TimeGrid, generate
from stochflow.solver import euler_maruyama
from stochflow.variational import bel_gradient, fd_gradient_mc, jacobian_flow


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-paths", type=int, default=100_000)
    ap.add_argument("--x0", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=defaults.SEED)
    ap.add_argument("--steps", type=int, nargs="+", default=[25, 50, 100, 200, 400])
    args = ap.parse_args()

    f = presets.named_function("sin")
    b, s = presets.ou(1), DiffusionSpec.scalar(2.0**0.5, 1)
    print(f"{'dt':>8} {'bel':>10} {'se':>8} {'fd':>10} {'se':>8} {'z':>7}")
    for n in args.steps:
        noise = generate(args.seed, args.n_paths, 1, TimeGrid(0.0, 1.0, n))
        paths = euler_maruyama([args.x0], b, s, noise)
        bel = bel_gradient(paths, jacobian_flow(paths, b, s, noise), s, f, noise)
        fd = fd_gradient_mc([args.x0], b, s, f, noise, defaults.MC_FD_STEP)
        z = (bel.estimate[0] - fd.estimate[0]) / np.hypot(bel.std_error[0], fd.std_error[0])
        print(f"{1 / n:8.4f} {bel.estimate[0]:10.5f} {bel.std_error[0]:8.5f} "
              f"{fd.estimate[0]:10.5f} {fd.std_error[0]:8.5f} {z:+7.2f}")


if __name__ == "__main__":
    main()

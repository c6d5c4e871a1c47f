"""Independent reference computations used to derive expected values."""

import math

import numpy as np

M0, M1 = 0xD2511F53, 0xCD9E8D57
W0, W1 = 0x9E3779B9, 0xBB67AE85
MASK = 0xFFFFFFFF


def philox_reference(ctr, key, rounds=10):
    """Plain-integer Philox4x32."""
    c0, c1, c2, c3 = ctr
    k0, k1 = key
    for r in range(rounds):
        p0, p1 = M0 * c0, M1 * c2
        c0, c1, c2, c3 = (p1 >> 32) ^ c1 ^ k0, p1 & MASK, (p0 >> 32) ^ c3 ^ k1, p0 & MASK
        if r < rounds - 1:
            k0, k1 = (k0 + W0) & MASK, (k1 + W1) & MASK
    return c0, c1, c2, c3


def normal_reference(seed, path, step, comp):
    words = philox_reference((step // 4, comp, path & MASK, path >> 32), (seed & MASK, seed >> 32))
    j = step % 4
    a, b = words[2 * (j // 2)], words[2 * (j // 2) + 1]
    u1, u2 = (a + 0.5) * 2.0**-32, (b + 0.5) * 2.0**-32
    rad = math.sqrt(-2.0 * math.log(u1))
    return rad * (math.cos(2 * math.pi * u2) if j % 2 == 0 else math.sin(2 * math.pi * u2))


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def gaussian_density(x, cov):
    """Density of N(0, cov) at rows of x."""
    cov = np.atleast_2d(cov)
    d = cov.shape[0]
    inv = np.linalg.inv(cov)
    q = np.einsum("ni,ij,nj->n", x, inv, x)
    return np.exp(-0.5 * q) / math.sqrt((2 * math.pi) ** d * np.linalg.det(cov))


def ou_moments(x0, rate, scale, t):
    """Mean and variance of dX = -rate X dt + scale dW at time t."""
    mean = x0 * math.exp(-rate * t)
    var = scale**2 * (1 - math.exp(-2 * rate * t)) / (2 * rate)
    return mean, var


def euler_ou_moments(x0, rate, scale, t, steps):
    """Exact mean and variance of the Euler-Maruyama chain for the OU process."""
    dt = t / steps
    a = 1 - rate * dt
    mean = x0 * a**steps
    var = scale**2 * dt * sum(a ** (2 * k) for k in range(steps))
    return mean, var

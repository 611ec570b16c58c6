"""Test-local numerical oracles, deliberately independent of the package's
numeric routes: plain axis-aligned tensor Gauss-Hermite (no rotation, no
panels), own Gaussian density formula, numpy's default generator for Monte
Carlo (the package samples with Philox)."""

import numpy as np
from scipy.special import roots_hermitenorm


def gh_rule(order):
    x, w = roots_hermitenorm(order)
    return x, w / np.sqrt(2.0 * np.pi)


def gauss_density_3d(kx, ky, kw, sigma):
    q = (kx / sigma[0]) ** 2 + (ky / sigma[1]) ** 2 + (kw / sigma[2]) ** 2
    norm = (2.0 * np.pi) ** 1.5 * sigma[0] * sigma[1] * sigma[2]
    return np.exp(-0.5 * q) / norm


def gh_nodes_3d(sigma, order):
    """Flattened tensor nodes (kx, ky, kw) and weights for E under N(0, sigma^2)."""
    x, w = gh_rule(order)
    k1, k2, k3 = np.meshgrid(x * sigma[0], x * sigma[1], x * sigma[2], indexing="ij")
    ww = w[:, None, None] * w[None, :, None] * w[None, None, :]
    return k1.ravel(), k2.ravel(), k3.ravel(), ww.ravel()


def gaussian_expect_3d(f, sigma, order=24):
    """E[f(kx, ky, kw)] under the centered Gaussian with per-axis sigma."""
    k1, k2, k3, w = gh_nodes_3d(sigma, order)
    return float(np.sum(w * f(k1, k2, k3)))


def fisher_mc_oracle(v, sigma, theta, n, seed):
    """Monte Carlo E[v^2 sin^2(w) / (1 - v^2 cos^2(w)) * k_i k_j] with standard errors.

    Uses numpy's default PCG64 stream, a different generator family from
    the package sampler. Returns (matrix, se_matrix).
    """
    rng = np.random.default_rng(seed)
    k = rng.standard_normal((n, 3)) * np.asarray(sigma)[None, :]
    w = k @ np.asarray(theta)
    c = np.cos(w)
    s = np.sin(w)
    den = 1.0 - (v * c) ** 2
    g = np.where(den > 0.0, (v * s) ** 2 / np.where(den > 0.0, den, 1.0), 1.0)
    f = np.empty((3, 3))
    se = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            terms = g * k[:, i] * k[:, j]
            f[i, j] = terms.mean()
            se[i, j] = terms.std() / np.sqrt(n)
    return f, se


def central_diff(fun, x, h):
    """Central-difference gradient of scalar fun at 3-vector x."""
    g = np.empty(3)
    for i in range(3):
        xp = np.array(x, dtype=float)
        xm = np.array(x, dtype=float)
        xp[i] += h
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g

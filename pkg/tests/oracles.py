"""Brute-force oracle machinery shared by module and acceptance tests.

The grid posterior is built as the normalized pointwise product of the
likelihood and the prior, independently of the sampler's closed-form
updates, then compared against binned empirical draws by total variation.
"""

import numpy as np

from linkpattern.gibbs import FactorHyperState, HyperPriors
from linkpattern.model import LatentFactors, reconstruct_entries
from linkpattern.tensor import RelationalTensor

# D=1 instance with every row/column/relation partially observed.
TRIPLES = [(0, 1, 0, 1), (0, 2, 0, 0), (1, 0, 0, 1), (2, 1, 0, 1),
           (0, 1, 1, 0), (2, 0, 1, 1), (1, 2, 1, 0)]


def conjugacy_instance():
    factors = LatentFactors(np.array([[0.5], [-0.3], [0.8]]),
                            np.array([[1.0], [0.4], [-0.6]]),
                            np.array([[0.7], [-1.1]]), alpha=2.0)
    tensor = RelationalTensor.build(3, 2, TRIPLES)
    priors = HyperPriors.default(1, gamma_shape=5.0, gamma_scale=1.0)
    hyper = FactorHyperState(np.array([0.2]), np.array([[1.5]]))
    return factors, tensor, priors, hyper


def tv_binned(draws, logpdf, n_bins=40):
    """Total variation between binned draws and a grid posterior."""
    draws = np.asarray(draws, dtype=np.float64)
    lo, hi = draws.min(), draws.max()
    pad = 0.05 * (hi - lo)
    edges = np.linspace(lo - pad, hi + pad, n_bins + 1)
    empirical, _ = np.histogram(draws, bins=edges)
    empirical = empirical / empirical.sum()
    grid = np.linspace(edges[0], edges[-1], 16001)
    log_density = logpdf(grid)
    log_density = log_density - log_density.max()
    density = np.exp(log_density)
    mass = np.concatenate([[0.0], np.cumsum((density[1:] + density[:-1])
                                            * 0.5 * np.diff(grid))])
    mass /= mass[-1]
    expected = np.diff(np.interp(edges, grid, mass))
    return 0.5 * float(np.abs(empirical - expected).sum())


def alpha_log_posterior(factors, tensor, priors):
    ii, jj, tt, yy = tensor.entry_arrays()
    resid = yy - reconstruct_entries(factors, ii, jj, tt)
    sse = float(resid @ resid)
    n = yy.size

    def logpdf(a):
        a = np.maximum(a, 1e-300)
        prior = (priors.gamma_shape - 1.0) * np.log(a) - a / priors.gamma_scale
        return prior + 0.5 * n * np.log(a) - 0.5 * a * sse
    return logpdf


def row_log_posterior(hyper, alpha, designs, targets):
    """Scalar-factor conditional: Gaussian prior times per-entry likelihoods."""
    designs = np.asarray(designs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)

    def logpdf(x):
        out = -0.5 * hyper.precision[0, 0] * (x - hyper.mu[0]) ** 2
        for q, y in zip(designs, targets):
            out = out - 0.5 * alpha * (y - x * q) ** 2
        return out
    return logpdf


def grid_posterior_mean(logpdf, lo, hi, n=20001):
    grid = np.linspace(lo, hi, n)
    log_density = logpdf(grid)
    density = np.exp(log_density - log_density.max())
    density /= np.trapezoid(density, grid)
    return float(np.trapezoid(grid * density, grid))


def u_row_designs(factors, tensor, i):
    return ([factors.V[j, 0] * factors.R[t, 0] for (a, j, t, _v) in TRIPLES if a == i],
            [v for (a, _j, _t, v) in TRIPLES if a == i])


def v_row_designs(factors, tensor, j):
    return ([factors.U[i, 0] * factors.R[t, 0] for (i, b, t, _v) in TRIPLES if b == j],
            [v for (_i, b, _t, v) in TRIPLES if b == j])


def r_row_designs(factors, tensor, t):
    return ([factors.U[i, 0] * factors.V[j, 0] for (i, j, c, _v) in TRIPLES if c == t],
            [v for (_i, _j, c, v) in TRIPLES if c == t])

"""Hierarchical Bayesian inference by blocked Gibbs sampling.

The model places a Gamma prior on the noise precision and Gaussian priors
with Gaussian-Wishart hyperpriors on the rows of each factor matrix.  All
conditionals are conjugate under the identity link, so one sweep draws, in
order: the noise precision, the (mean, precision) hyperparameters of U, V
and R, then the rows of U, the rows of V given the new U, and the rows of
R given the new U and V.  Predictions average the per-draw model means
over the retained samples.

Conjugacy requires the identity link, so sweeps always use it internally;
per-sample predictive means are clamped into [0, 1] at reporting time.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .exceptions import ConfigError, DimensionMismatchError, NotPositiveDefiniteError
from .model import (LatentFactors, ModelConfig, log_likelihood, predict_entries,
                    reconstruct_entries)
from .rng import substream
from .tensor import RelationalTensor

_JITTER_RETRIES = 3


@dataclass
class HyperPriors:
    """Fixed top-level hyperparameters of the hierarchical model.

    gamma_shape/gamma_scale parameterize the Gamma prior on the noise
    precision (shape-scale convention).  (mu0, kappa0, w0, nu0) are the
    Gaussian-Wishart hyperprior for the object-factor rows; kappa_t
    replaces kappa0 for the relation-factor rows.
    """

    mu0: np.ndarray
    w0: np.ndarray
    nu0: float
    gamma_shape: float = 5.0
    gamma_scale: float = 1.0
    kappa0: float = 2.0
    kappa_t: float = 1.0

    def __post_init__(self):
        self.mu0 = np.asarray(self.mu0, dtype=np.float64)
        self.w0 = np.asarray(self.w0, dtype=np.float64)
        d = self.mu0.shape[0]
        if self.mu0.ndim != 1 or self.w0.shape != (d, d):
            raise DimensionMismatchError(
                f"mu0 {self.mu0.shape} and w0 {self.w0.shape} are inconsistent")
        if self.nu0 < d:
            raise ValueError(f"nu0 must be >= {d}, got {self.nu0}")
        if min(self.gamma_shape, self.gamma_scale, self.kappa0, self.kappa_t) <= 0:
            raise ValueError("gamma_shape, gamma_scale, kappa0, kappa_t must be positive")
        if not np.allclose(self.w0, self.w0.T):
            raise ValueError("w0 must be symmetric")
        try:
            np.linalg.cholesky(self.w0)
        except np.linalg.LinAlgError:
            raise ValueError("w0 must be positive-definite") from None

    @property
    def rank(self) -> int:
        return self.mu0.shape[0]

    @classmethod
    def default(cls, rank: int, **overrides) -> "HyperPriors":
        """Untuned defaults: mu0 = 0, w0 = I, nu0 = rank, shape 5, scale 1,
        kappa0 = 2, kappa_t = 1."""
        base = dict(mu0=np.zeros(rank), w0=np.eye(rank), nu0=float(rank))
        base.update(overrides)
        return cls(**base)


@dataclass
class FactorHyperState:
    """Sampled (mean, precision) of one factor's row prior."""

    mu: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.precision = np.asarray(self.precision, dtype=np.float64)
        d = self.mu.shape[0]
        if self.precision.shape != (d, d):
            raise DimensionMismatchError(
                f"mu {self.mu.shape} and precision {self.precision.shape} are inconsistent")


@dataclass
class ChainConfig:
    """Gibbs chain settings.

    ``init_factors=None`` starts from small random factors; passing a
    fitted :class:`LatentFactors` warm-starts the chain from it.
    Retained draws number ``(num_samples - burn_in) // thin``.
    """

    num_samples: int = 300
    burn_in: int = 50
    thin: int = 1
    seed: int = 0
    init_factors: Optional[LatentFactors] = None

    def __post_init__(self):
        if self.num_samples < 1:
            raise ConfigError("num_samples must be positive")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be nonnegative")
        if self.thin < 1:
            raise ConfigError("thin must be positive")
        if self.retained_count < 1:
            raise ConfigError(
                f"no retained draws: num_samples={self.num_samples}, "
                f"burn_in={self.burn_in}, thin={self.thin}")

    @property
    def retained_count(self) -> int:
        return (self.num_samples - self.burn_in) // self.thin


@dataclass
class SampleSet:
    """Ordered retained posterior draws plus per-sweep diagnostics."""

    draws: list = field(default_factory=list)
    log_likelihoods: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.draws)


@dataclass
class GibbsState:
    """Full sampler state: model factors and per-factor hyper states."""

    factors: LatentFactors
    hyper_u: FactorHyperState
    hyper_v: FactorHyperState
    hyper_r: FactorHyperState


def _chol_jitter(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retrying with a scaled diagonal jitter."""
    sym = 0.5 * (mat + mat.T)
    try:
        return np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        pass
    d = mat.shape[0]
    jitter = 1e-10 * max(np.trace(sym) / d, 1.0)
    for _ in range(_JITTER_RETRIES):
        try:
            return np.linalg.cholesky(sym + jitter * np.eye(d))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NotPositiveDefiniteError(
        f"matrix not positive-definite after {_JITTER_RETRIES} jitter retries")


def _sample_wishart(rng: np.random.Generator, scale: np.ndarray, df: float) -> np.ndarray:
    """Wishart draw via the Bartlett decomposition."""
    d = scale.shape[0]
    L = _chol_jitter(scale)
    A = np.zeros((d, d))
    A[np.diag_indices(d)] = np.sqrt(rng.chisquare(df - np.arange(d)))
    if d > 1:
        A[np.tril_indices(d, -1)] = rng.standard_normal(d * (d - 1) // 2)
    M = L @ A
    return M @ M.T


def _sample_mvn_from_precision(rng: np.random.Generator, mean: np.ndarray,
                               prec_chol: np.ndarray) -> np.ndarray:
    """Draw from N(mean, P^-1) given the lower Cholesky factor of P."""
    z = rng.standard_normal(mean.shape[0])
    return mean + solve_triangular(prec_chol, z, trans="T", lower=True)


def gaussian_wishart_posterior(rows: np.ndarray, priors: HyperPriors, kappa: float):
    """Posterior Gaussian-Wishart parameters given factor rows.

    Returns ``(mu_star, kappa_star, nu_star, w_star)`` where the Wishart
    scale ``w_star`` already incorporates the scatter and mean-shift terms.
    """
    rows = np.asarray(rows, dtype=np.float64)
    m = rows.shape[0]
    if m < 1:
        raise ValueError("need at least one row")
    mean = rows.mean(axis=0)
    centered = rows - mean
    scatter = centered.T @ centered
    kappa_star = kappa + m
    nu_star = priors.nu0 + m
    mu_star = (kappa * priors.mu0 + m * mean) / kappa_star
    shift = mean - priors.mu0
    w_inv = np.linalg.inv(priors.w0) + scatter + (kappa * m / kappa_star) * np.outer(shift, shift)
    w_star = np.linalg.inv(0.5 * (w_inv + w_inv.T))
    return mu_star, kappa_star, nu_star, 0.5 * (w_star + w_star.T)


def sample_factor_hypers(rows: np.ndarray, priors: HyperPriors, kappa: float,
                         rng: np.random.Generator) -> FactorHyperState:
    """Draw (mu, precision) for one factor from its Gaussian-Wishart conditional."""
    mu_star, kappa_star, nu_star, w_star = gaussian_wishart_posterior(rows, priors, kappa)
    precision = _sample_wishart(rng, w_star, nu_star)
    chol = _chol_jitter(kappa_star * precision)
    mu = _sample_mvn_from_precision(rng, mu_star, chol)
    return FactorHyperState(mu, precision)


def sample_alpha(factors: LatentFactors, tensor: RelationalTensor,
                 priors: HyperPriors, rng: np.random.Generator) -> float:
    """Draw the noise precision from its Gamma conditional.

    Shape gains half the observation count; the scale update adds half the
    identity-link squared error to the inverse scale.  With no data the
    posterior is the prior.
    """
    ii, jj, tt, yy = tensor.entry_arrays()
    shape = priors.gamma_shape + 0.5 * yy.size
    if yy.size:
        resid = yy - reconstruct_entries(factors, ii, jj, tt)
        scale = 1.0 / (1.0 / priors.gamma_scale + 0.5 * float(np.dot(resid, resid)))
    else:
        scale = priors.gamma_scale
    return float(rng.gamma(shape, scale))


class ObservationGroups:
    """Observed entries grouped by each axis for per-row conditionals.

    Sorting happens once per tensor; each group is a contiguous segment of
    the reordered coordinate arrays.
    """

    def __init__(self, tensor: RelationalTensor):
        ii, jj, tt, yy = tensor.entry_arrays()
        self.by_i = _AxisGroups(ii, jj, tt, yy, tensor.n_objects)
        self.by_j = _AxisGroups(jj, ii, tt, yy, tensor.n_objects)
        self.by_t = _AxisGroups(tt, ii, jj, yy, tensor.n_relations)


class _AxisGroups:
    def __init__(self, axis, other1, other2, yy, n_groups):
        order = np.argsort(axis, kind="stable")
        self.n_groups = n_groups
        self.o1 = other1[order]
        self.o2 = other2[order]
        self.y = yy[order]
        counts = np.bincount(axis, minlength=n_groups)
        self.offsets = np.concatenate([[0], np.cumsum(counts)])

    def segment(self, k: int) -> slice:
        return slice(self.offsets[k], self.offsets[k + 1])


def _draw_factor_rows(groups: _AxisGroups, left: np.ndarray, right: np.ndarray,
                      hyper: FactorHyperState, alpha: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Draw every row of one factor from its Gaussian conditional.

    Row k sees design vectors ``left[o1] * right[o2]`` over its observed
    entries; rows with no observations fall back to the hyperprior.
    """
    d = left.shape[1]
    prior_term = hyper.precision @ hyper.mu
    prior_chol = _chol_jitter(hyper.precision)
    out = np.empty((groups.n_groups, d))
    for k in range(groups.n_groups):
        seg = groups.segment(k)
        if seg.start == seg.stop:
            out[k] = _sample_mvn_from_precision(rng, hyper.mu, prior_chol)
            continue
        design = left[groups.o1[seg]] * right[groups.o2[seg]]
        lam_star = hyper.precision + alpha * design.T @ design
        b = prior_term + alpha * design.T @ groups.y[seg]
        chol = _chol_jitter(lam_star)
        mu_star = cho_solve((chol, True), b)
        out[k] = _sample_mvn_from_precision(rng, mu_star, chol)
    return out


def sample_u_rows(factors: LatentFactors, tensor: RelationalTensor,
                  hyper_u: FactorHyperState, rng: np.random.Generator,
                  groups: Optional[ObservationGroups] = None) -> np.ndarray:
    """Draw a new sender-factor matrix U row by row."""
    groups = groups if groups is not None else ObservationGroups(tensor)
    return _draw_factor_rows(groups.by_i, factors.V, factors.R, hyper_u,
                             factors.alpha, rng)


def sample_v_rows(factors: LatentFactors, tensor: RelationalTensor,
                  hyper_v: FactorHyperState, rng: np.random.Generator,
                  groups: Optional[ObservationGroups] = None) -> np.ndarray:
    """Draw a new receiver-factor matrix V; U's update with i and j swapped."""
    groups = groups if groups is not None else ObservationGroups(tensor)
    return _draw_factor_rows(groups.by_j, factors.U, factors.R, hyper_v,
                             factors.alpha, rng)


def sample_r_rows(factors: LatentFactors, tensor: RelationalTensor,
                  hyper_r: FactorHyperState, rng: np.random.Generator,
                  groups: Optional[ObservationGroups] = None) -> np.ndarray:
    """Draw a new relation-factor matrix R.

    The per-relation precision accumulates the elementwise products
    (U_i o V_j)(U_i o V_j)^T over the relation's observed entries.
    """
    groups = groups if groups is not None else ObservationGroups(tensor)
    return _draw_factor_rows(groups.by_t, factors.U, factors.V, hyper_r,
                             factors.alpha, rng)


def gibbs_sweep(state: GibbsState, tensor: RelationalTensor, priors: HyperPriors,
                rng: np.random.Generator, groups: Optional[ObservationGroups] = None,
                sample_relations: bool = True) -> GibbsState:
    """One full sweep updating every block exactly once.

    Order: noise precision, then the hyperparameters of U, V and R, then
    the rows of U, then V conditioned on the new U, then R conditioned on
    the new U and V.  With ``sample_relations=False`` the relation factor
    and its hyperparameters are left untouched (frozen-R mode).
    """
    groups = groups if groups is not None else ObservationGroups(tensor)
    f = state.factors
    alpha = sample_alpha(f, tensor, priors, rng)
    hyper_u = sample_factor_hypers(f.U, priors, priors.kappa0, rng)
    hyper_v = sample_factor_hypers(f.V, priors, priors.kappa0, rng)
    hyper_r = (sample_factor_hypers(f.R, priors, priors.kappa_t, rng)
               if sample_relations else state.hyper_r)

    current = LatentFactors(f.U, f.V, f.R, alpha)
    new_u = sample_u_rows(current, tensor, hyper_u, rng, groups)
    current = LatentFactors(new_u, f.V, f.R, alpha)
    new_v = sample_v_rows(current, tensor, hyper_v, rng, groups)
    current = LatentFactors(new_u, new_v, f.R, alpha)
    if sample_relations:
        new_r = sample_r_rows(current, tensor, hyper_r, rng, groups)
    else:
        new_r = f.R
    return GibbsState(LatentFactors(new_u, new_v, new_r, alpha),
                      hyper_u, hyper_v, hyper_r)


def run_chain(tensor: RelationalTensor, model_config: ModelConfig,
              priors: HyperPriors, config: ChainConfig,
              frozen_relations: Optional[np.ndarray] = None) -> SampleSet:
    """Run one Gibbs chain and return the retained draws.

    Sweeps use the identity link regardless of ``model_config.use_logistic``
    (conjugacy requires it); the flag only affects downstream prediction.
    ``frozen_relations`` fixes R to the given T x D matrix and excludes it
    from sampling (used by the per-slice baseline).  Deterministic for a
    fixed config.
    """
    d = model_config.rank
    if priors.rank != d:
        raise DimensionMismatchError(
            f"hyperprior rank {priors.rank} does not match model rank {d}")
    n, T = tensor.n_objects, tensor.n_relations
    rng = substream(config.seed, "chain")
    sample_relations = frozen_relations is None

    if config.init_factors is not None:
        f0 = config.init_factors
        if f0.n_objects != n or f0.rank != d or (sample_relations and f0.n_relations != T):
            raise DimensionMismatchError("init_factors do not match tensor/model dimensions")
        u0, v0 = f0.U.copy(), f0.V.copy()
        r0 = f0.R.copy() if sample_relations else np.asarray(frozen_relations, dtype=np.float64)
        alpha0 = f0.alpha
    else:
        u0 = 0.1 * rng.standard_normal((n, d))
        v0 = 0.1 * rng.standard_normal((n, d))
        if sample_relations:
            r0 = 0.1 * rng.standard_normal((T, d))
        else:
            r0 = np.asarray(frozen_relations, dtype=np.float64)
        alpha0 = 1.0
    if r0.shape != (T, d):
        raise DimensionMismatchError(f"relation factor shape {r0.shape}, expected {(T, d)}")

    placeholder = FactorHyperState(priors.mu0.copy(), np.eye(d))
    state = GibbsState(LatentFactors(u0, v0, r0, alpha0),
                       placeholder, placeholder, placeholder)
    groups = ObservationGroups(tensor)
    identity_cfg = ModelConfig(rank=d, use_logistic=False)

    samples = SampleSet()
    for sweep in range(config.num_samples):
        state = gibbs_sweep(state, tensor, priors, rng, groups, sample_relations)
        samples.log_likelihoods.append(
            log_likelihood(state.factors, tensor, identity_cfg))
        if sweep >= config.burn_in and (sweep - config.burn_in + 1) % config.thin == 0:
            samples.draws.append(state.factors)
    return samples


def predictive_scores(samples: SampleSet, ii, jj, tt,
                      model_config: ModelConfig) -> np.ndarray:
    """Monte-Carlo predictive mean over retained draws for coordinate arrays.

    Each draw's prediction is clamped into [0, 1] before averaging, so the
    result is a valid score even under the identity link.
    """
    if len(samples) == 0:
        raise ValueError("empty sample set")
    total = np.zeros(len(np.atleast_1d(ii)), dtype=np.float64)
    for factors in samples.draws:
        total += np.clip(predict_entries(factors, ii, jj, tt, model_config), 0.0, 1.0)
    return total / len(samples)


def predictive_mean(samples: SampleSet, key, model_config: ModelConfig) -> np.ndarray:
    """Length-T predictive score vector for one ordered pair."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    i, j = key
    T = samples.draws[0].n_relations
    return predictive_scores(samples, np.full(T, i), np.full(T, j), np.arange(T),
                             model_config)

"""MAP estimation by Polak-Ribiere nonlinear conjugate gradient.

Minimizes the regularized weighted squared error over the observed
entries:

    E = 1/2 sum_obs (y - m)^2
        + gamma_u/2 ||U||_F^2 + gamma_v/2 ||V||_F^2 + gamma_r/2 ||R||_F^2

with m the model mean under the configured link.  All three factor blocks
are optimized jointly as one flattened variable; the direction update uses
beta = max(0, beta_PR) with periodic restarts to steepest descent, and an
Armijo backtracking line search.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DivergenceError, StallError
from .model import LatentFactors, ModelConfig, logistic, reconstruct_entries
from .rng import substream
from .tensor import RelationalTensor

logger = logging.getLogger(__name__)

# Line search steps below this are treated as a stall.
STEP_FLOOR = 1e-16


def _scatter_rows(index, weighted, n_rows):
    """Sum the rows of ``weighted`` into ``n_rows`` bins given by ``index``.

    bincount keeps summation deterministic (input order per bin) and is far
    faster than ufunc.at on large coordinate lists.
    """
    out = np.empty((n_rows, weighted.shape[1]))
    for d in range(weighted.shape[1]):
        out[:, d] = np.bincount(index, weights=weighted[:, d], minlength=n_rows)
    return out


@dataclass
class MapConfig:
    """Optimizer settings.

    gamma_* are the ridge weights on U, V and R (prior-to-noise precision
    ratios).  The line search is Armijo backtracking.
    """

    gamma_u: float = 0.01
    gamma_v: float = 0.01
    gamma_r: float = 0.01
    max_iterations: int = 500
    rel_tolerance: float = 1e-6
    initial_step: float = 1.0
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if min(self.gamma_u, self.gamma_v, self.gamma_r) < 0:
            raise ValueError("regularization weights must be nonnegative")
        if not 0 < self.shrink < 1:
            raise ValueError(f"shrink factor must be in (0,1), got {self.shrink}")
        if not 0 < self.sufficient_decrease < 1:
            raise ValueError(
                f"sufficient-decrease constant must be in (0,1), got {self.sufficient_decrease}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.rel_tolerance <= 0 or self.init_scale <= 0 or self.initial_step <= 0:
            raise ValueError("rel_tolerance, init_scale and initial_step must be positive")


@dataclass
class OptTrace:
    """Per-iteration record of an optimization run.

    ``objectives[0]`` is the initial objective; each subsequent element is
    the value after an accepted step, so the sequence is non-increasing.
    """

    objectives: list = field(default_factory=list)
    gradient_norms: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    termination: str = ""

    @property
    def iterations(self) -> int:
        return len(self.step_sizes)


def objective(factors: LatentFactors, tensor: RelationalTensor,
              model_config: ModelConfig, map_config: MapConfig) -> float:
    """Regularized weighted squared error at ``factors``."""
    ii, jj, tt, yy = tensor.entry_arrays()
    s = reconstruct_entries(factors, ii, jj, tt)
    m = logistic(s) if model_config.use_logistic else s
    resid = yy - m
    value = 0.5 * float(np.dot(resid, resid))
    value += 0.5 * map_config.gamma_u * float(np.sum(factors.U ** 2))
    value += 0.5 * map_config.gamma_v * float(np.sum(factors.V ** 2))
    value += 0.5 * map_config.gamma_r * float(np.sum(factors.R ** 2))
    return value


def gradients(factors: LatentFactors, tensor: RelationalTensor,
              model_config: ModelConfig, map_config: MapConfig):
    """Exact gradient of :func:`objective` w.r.t. (U, V, R).

    With residual e = y - m and link derivative l (1 for the identity
    link, g(s)(1-g(s)) for the logistic), row i of dU accumulates
    -e * l * (V_j o R_t) over the observed entries of row i, plus the
    ridge term; dV and dR are symmetric.
    """
    ii, jj, tt, yy = tensor.entry_arrays()
    U, V, R = factors.U, factors.V, factors.R
    s = reconstruct_entries(factors, ii, jj, tt)
    if model_config.use_logistic:
        g = logistic(s)
        w = -(yy - g) * g * (1.0 - g)
    else:
        w = -(yy - s)
    dU = map_config.gamma_u * U.copy()
    dV = map_config.gamma_v * V.copy()
    dR = map_config.gamma_r * R.copy()
    if yy.size:
        dU += _scatter_rows(ii, w[:, None] * (V[jj] * R[tt]), U.shape[0])
        dV += _scatter_rows(jj, w[:, None] * (U[ii] * R[tt]), V.shape[0])
        dR += _scatter_rows(tt, w[:, None] * (U[ii] * V[jj]), R.shape[0])
    return dU, dV, dR


def _backtrack(slope: float, objective_at, f_current: float, config: MapConfig) -> float:
    """Armijo backtracking in the step domain; ``objective_at(step) -> value``."""
    if slope >= 0:
        raise StallError(f"not a descent direction (slope {slope:.3e})")
    step = config.initial_step
    while step >= STEP_FLOOR:
        if objective_at(step) <= f_current + config.sufficient_decrease * step * slope:
            return step
        step *= config.shrink
    raise StallError(f"line search step underflowed below {STEP_FLOOR}")


def line_search(current: np.ndarray, direction: np.ndarray, grad: np.ndarray,
                f_current: float, evaluate, config: MapConfig) -> float:
    """Armijo backtracking along ``direction`` from ``current``.

    ``evaluate`` maps a flat parameter vector to the objective value.  The
    direction must be a descent direction; callers reset to steepest
    descent before calling when it is not.  Raises :class:`StallError`
    when the step underflows without satisfying sufficient decrease.
    """
    slope = float(np.dot(grad, direction))
    return _backtrack(slope, lambda step: evaluate(current + step * direction),
                      f_current, config)


class _Packed:
    """Flatten/unflatten (U, V, R) to one vector for joint CG."""

    def __init__(self, n_objects, n_relations, rank):
        self.n = n_objects
        self.t = n_relations
        self.d = rank
        self._u_end = self.n * self.d
        self._v_end = 2 * self.n * self.d

    def pack(self, U, V, R) -> np.ndarray:
        return np.concatenate([U.ravel(), V.ravel(), R.ravel()])

    def unpack(self, x: np.ndarray):
        U = x[:self._u_end].reshape(self.n, self.d)
        V = x[self._u_end:self._v_end].reshape(self.n, self.d)
        R = x[self._v_end:].reshape(self.t, self.d)
        return U, V, R


def fit_map(tensor: RelationalTensor, model_config: ModelConfig,
            map_config: MapConfig):
    """Fit factors by MAP with Polak-Ribiere CG.

    Returns ``(factors, trace)``.  Deterministic for a fixed seed: the
    initialization, summation order and line search are all fixed.
    Terminates when the relative objective decrease drops below
    ``rel_tolerance``, on stall, or at ``max_iterations``.
    """
    if tensor.observed_count == 0:
        raise ValueError("cannot fit an empty tensor")
    n, T, d = tensor.n_objects, tensor.n_relations, model_config.rank
    rng = substream(map_config.seed, "map-init")
    U0 = map_config.init_scale * rng.standard_normal((n, d))
    V0 = map_config.init_scale * rng.standard_normal((n, d))
    R0 = map_config.init_scale * rng.standard_normal((T, d))

    packed = _Packed(n, T, d)
    ii, jj, tt, yy = tensor.entry_arrays()
    gammas = (map_config.gamma_u, map_config.gamma_v, map_config.gamma_r)

    def f_and_g(x):
        U, V, R = packed.unpack(x)
        s = np.einsum("nd,nd->n", U[ii] * V[jj], R[tt])
        if model_config.use_logistic:
            g = logistic(s)
            resid = yy - g
            w = -resid * g * (1.0 - g)
        else:
            resid = yy - s
            w = -resid
        value = 0.5 * float(np.dot(resid, resid))
        value += 0.5 * (gammas[0] * float(np.sum(U * U))
                        + gammas[1] * float(np.sum(V * V))
                        + gammas[2] * float(np.sum(R * R)))
        dU = gammas[0] * U + _scatter_rows(ii, w[:, None] * (V[jj] * R[tt]), n)
        dV = gammas[1] * V + _scatter_rows(jj, w[:, None] * (U[ii] * R[tt]), n)
        dR = gammas[2] * R + _scatter_rows(tt, w[:, None] * (U[ii] * V[jj]), T)
        return value, packed.pack(dU, dV, dR)

    def directional_objective(x, direction):
        """Objective along x + step * direction as a cheap function of step.

        The CP reconstruction is cubic in the step and the ridge term
        quadratic, so the per-entry polynomial coefficients are gathered
        once per line search and each trial costs three fused passes.
        """
        U, V, R = packed.unpack(x)
        DU, DV, DR = packed.unpack(direction)
        au, av, ar = U[ii], V[jj], R[tt]
        du, dv, dr = DU[ii], DV[jj], DR[tt]
        k0 = (au * av * ar).sum(axis=1)
        k1 = (du * av * ar + au * dv * ar + au * av * dr).sum(axis=1)
        k2 = (du * dv * ar + du * av * dr + au * dv * dr).sum(axis=1)
        k3 = (du * dv * dr).sum(axis=1)
        r0 = 0.5 * (gammas[0] * float(np.sum(U * U)) + gammas[1] * float(np.sum(V * V))
                    + gammas[2] * float(np.sum(R * R)))
        r1 = (gammas[0] * float(np.sum(U * DU)) + gammas[1] * float(np.sum(V * DV))
              + gammas[2] * float(np.sum(R * DR)))
        r2 = 0.5 * (gammas[0] * float(np.sum(DU * DU)) + gammas[1] * float(np.sum(DV * DV))
                    + gammas[2] * float(np.sum(DR * DR)))

        def at(step):
            s = k0 + step * (k1 + step * (k2 + step * k3))
            m = logistic(s) if model_config.use_logistic else s
            resid = yy - m
            return (0.5 * float(np.dot(resid, resid))
                    + r0 + step * (r1 + step * r2))
        return at

    x = packed.pack(U0, V0, R0)
    f, grad = f_and_g(x)
    trace = OptTrace(objectives=[f])
    direction = -grad
    restart_every = (n + T) * d

    for iteration in range(map_config.max_iterations):
        if np.dot(grad, direction) >= 0:
            direction = -grad
        try:
            along = directional_objective(x, direction)
            step = _backtrack(float(np.dot(grad, direction)), along, along(0.0), map_config)
        except StallError:
            if np.array_equal(direction, -grad):
                trace.termination = "stalled"
                break
            direction = -grad  # restart CG and retry once from steepest descent
            try:
                along = directional_objective(x, direction)
                step = _backtrack(float(np.dot(grad, direction)), along, along(0.0), map_config)
            except StallError:
                trace.termination = "stalled"
                break
        x_trial = x + step * direction
        f_new, grad_new = f_and_g(x_trial)
        if not np.isfinite(f_new):
            raise DivergenceError(
                f"objective became non-finite at iteration {iteration}", iteration=iteration)
        if f_new > f:
            # progress below float resolution between the directional and
            # direct evaluations; keep the previous iterate
            trace.termination = "converged"
            break
        x = x_trial
        trace.objectives.append(f_new)
        trace.gradient_norms.append(float(np.linalg.norm(grad_new)))
        trace.step_sizes.append(step)

        rel_decrease = (f - f_new) / max(abs(f), 1e-300)
        converged = rel_decrease < map_config.rel_tolerance
        if (iteration + 1) % restart_every == 0:
            beta = 0.0
        else:
            beta = max(0.0, float(np.dot(grad_new, grad_new - grad) / np.dot(grad, grad)))
        direction = -grad_new + beta * direction
        f, grad = f_new, grad_new
        if converged:
            trace.termination = "converged"
            break
    if not trace.termination:
        trace.termination = "max_iterations"
    logger.debug("fit_map: %s after %d iterations, objective %.6g",
                 trace.termination, trace.iterations, f)

    U, V, R = packed.unpack(x)
    return LatentFactors(U.copy(), V.copy(), R.copy(), alpha=1.0), trace

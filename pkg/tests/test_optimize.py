import numpy as np
import pytest

from linkpattern.exceptions import StallError
from linkpattern.model import LatentFactors, ModelConfig, log_likelihood
from linkpattern.optimize import MapConfig, fit_map, gradients, line_search, objective
from linkpattern.tensor import RelationalTensor

IDENTITY = ModelConfig(1, use_logistic=False)
LOGISTIC = ModelConfig(1, use_logistic=True)


def factors_from_rows(u, v, r, alpha=1.0):
    return LatentFactors(np.asarray(u, float), np.asarray(v, float), np.asarray(r, float), alpha)


def zero_gamma(**kw):
    return MapConfig(gamma_u=0.0, gamma_v=0.0, gamma_r=0.0, **kw)


def test_objective_examples():
    one = RelationalTensor.build(1, 1, [(0, 0, 0, 1)])
    zero = factors_from_rows([[0.0]], [[0.0]], [[0.0]])
    assert objective(zero, one, IDENTITY, zero_gamma()) == pytest.approx(0.5)
    assert objective(zero, one, LOGISTIC, zero_gamma()) == pytest.approx(0.125)

    empty = RelationalTensor.build(1, 1, [])
    f = factors_from_rows([[3.0, 4.0]], [[0.0, 0.0]], [[0.0, 0.0]])
    cfg = MapConfig(gamma_u=1.0, gamma_v=0.0, gamma_r=0.0)
    assert objective(f, empty, ModelConfig(2, use_logistic=False), cfg) == pytest.approx(12.5)


def test_objective_regularizer_scaling_on_empty_data():
    empty = RelationalTensor.build(2, 2, [])
    rng = np.random.default_rng(1)
    f = LatentFactors(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)),
                      rng.normal(size=(2, 2)), 1.0)
    cfg = ModelConfig(2, use_logistic=False)
    base = objective(f, empty, cfg, MapConfig(gamma_u=0.3, gamma_v=0.2, gamma_r=0.1))
    tripled = objective(f, empty, cfg, MapConfig(gamma_u=0.9, gamma_v=0.6, gamma_r=0.3))
    assert tripled == pytest.approx(3.0 * base)


def test_gradients_empty_tensor():
    empty = RelationalTensor.build(2, 1, [])
    rng = np.random.default_rng(2)
    f = LatentFactors(rng.normal(size=(2, 1)), rng.normal(size=(2, 1)),
                      rng.normal(size=(1, 1)), 1.0)
    dU, dV, dR = gradients(f, empty, IDENTITY, zero_gamma())
    assert not dU.any() and not dV.any() and not dR.any()
    dU, dV, dR = gradients(f, empty, IDENTITY, MapConfig(gamma_u=2.0, gamma_v=0.0, gamma_r=0.0))
    assert np.allclose(dU, 2.0 * f.U)
    assert not dV.any() and not dR.any()


def finite_difference_gradients(factors, tensor, model_cfg, map_cfg, h=1e-6):
    blocks = []
    for name in ("U", "V", "R"):
        mat = getattr(factors, name)
        grad = np.zeros_like(mat)
        for idx in np.ndindex(mat.shape):
            for sign in (1.0, -1.0):
                bumped = factors.copy()
                getattr(bumped, name)[idx] += sign * h
                grad[idx] += sign * objective(bumped, tensor, model_cfg, map_cfg)
        blocks.append(grad / (2.0 * h))
    return tuple(blocks)


def random_instance(seed, n=3, t=2, d=2, fill=0.8):
    rng = np.random.default_rng(seed)
    triples = [(i, j, k, int(rng.random() < 0.5))
               for i in range(n) for j in range(n) for k in range(t)
               if rng.random() < fill]
    tensor = RelationalTensor.build(n, t, triples)
    factors = LatentFactors(rng.normal(0, 0.7, (n, d)), rng.normal(0, 0.7, (n, d)),
                            rng.normal(0, 0.7, (t, d)), 1.0)
    return tensor, factors


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, b in zip(analytic, numeric):
        scale = max(1.0, float(np.max(np.abs(b))))
        worst = max(worst, float(np.max(np.abs(a - b))) / scale)
    return worst


@pytest.mark.parametrize("use_logistic", [False, True])
def test_gradients_match_central_differences(use_logistic):
    model_cfg = ModelConfig(2, use_logistic=use_logistic)
    map_cfg = MapConfig(gamma_u=0.05, gamma_v=0.02, gamma_r=0.08)
    tensor, factors = random_instance(seed=5)
    analytic = gradients(factors, tensor, model_cfg, map_cfg)
    numeric = finite_difference_gradients(factors, tensor, model_cfg, map_cfg)
    assert max_rel_error(analytic, numeric) <= 1e-5


def test_line_search_quadratic_accepts():
    current = np.array([2.0])
    grad = np.array([4.0])
    step = line_search(current, -grad, grad, 4.0, lambda x: float(x @ x), MapConfig())
    assert step > 0
    assert float((current - step * grad)[0] ** 2) < 4.0


def test_line_search_rejects_ascent_direction():
    current = np.array([2.0])
    grad = np.array([4.0])
    with pytest.raises(StallError):
        line_search(current, grad, grad, 4.0, lambda x: float(x @ x), MapConfig())


def planted_rank1_tensor():
    u = np.array([1.0, 1.0, 0.0, 1.0, 0.0])
    v = np.array([1.0, 0.0, 1.0, 1.0, 1.0])
    r = np.array([1.0, 1.0])
    y = np.einsum("i,j,t->ijt", u, v, r)
    triples = [(i, j, t, int(y[i, j, t])) for i in range(5) for j in range(5) for t in range(2)]
    return RelationalTensor.build(5, 2, triples)


def test_fit_map_recovers_planted_rank1():
    tensor = planted_rank1_tensor()
    factors, trace = fit_map(tensor, ModelConfig(1, use_logistic=False),
                             zero_gamma(seed=0, max_iterations=3000, rel_tolerance=1e-14))
    assert trace.objectives[-1] <= 1e-6
    assert objective(factors, tensor, ModelConfig(1, use_logistic=False),
                     zero_gamma()) <= 1e-6


def test_fit_map_descends_on_all_zero_data():
    triples = [(i, j, 0, 0) for i in range(3) for j in range(3)]
    tensor = RelationalTensor.build(3, 1, triples)
    _factors, trace = fit_map(tensor, IDENTITY, MapConfig(seed=1, max_iterations=50))
    assert trace.objectives[-1] <= trace.objectives[0]
    assert all(b <= a for a, b in zip(trace.objectives, trace.objectives[1:]))


def test_fit_map_deterministic_trace():
    tensor, _ = random_instance(seed=9, n=4, t=2)
    cfg = MapConfig(seed=7, max_iterations=60)
    f1, t1 = fit_map(tensor, LOGISTIC, cfg)
    f2, t2 = fit_map(tensor, LOGISTIC, cfg)
    assert t1.objectives == t2.objectives
    assert t1.gradient_norms == t2.gradient_norms
    assert t1.step_sizes == t2.step_sizes
    assert np.array_equal(f1.U, f2.U) and np.array_equal(f1.V, f2.V) and np.array_equal(f1.R, f2.R)


def test_fit_map_trace_monotone_and_consistent():
    tensor, _ = random_instance(seed=11, n=4, t=3)
    model_cfg = ModelConfig(2, use_logistic=True)
    map_cfg = MapConfig(seed=3, max_iterations=80)
    factors, trace = fit_map(tensor, model_cfg, map_cfg)
    assert all(b <= a for a, b in zip(trace.objectives, trace.objectives[1:]))
    assert trace.objectives[-1] == pytest.approx(
        objective(factors, tensor, ModelConfig(2, use_logistic=True), map_cfg))
    assert trace.termination in {"converged", "max_iterations", "stalled"}


def test_map_objective_matches_negative_log_posterior_argmin():
    # with fixed alpha and gamma = prior-to-noise ratios, the objective and
    # the negative log posterior rank candidate factors identically
    tensor, _ = random_instance(seed=13, n=3, t=2)
    alpha = 2.3
    gamma = 0.07
    alpha_prior = gamma * alpha
    model_cfg = ModelConfig(2, use_logistic=False)
    map_cfg = MapConfig(gamma_u=gamma, gamma_v=gamma, gamma_r=gamma)

    def log_posterior(factors):
        with_alpha = LatentFactors(factors.U, factors.V, factors.R, alpha)
        value = log_likelihood(with_alpha, tensor, model_cfg)
        for block in (factors.U, factors.V, factors.R):
            value -= 0.5 * alpha_prior * float(np.sum(block ** 2))
        return value

    rng = np.random.default_rng(17)
    candidates = [LatentFactors(rng.normal(0, 0.8, (3, 2)), rng.normal(0, 0.8, (3, 2)),
                                rng.normal(0, 0.8, (2, 2)), 1.0) for _ in range(12)]
    objectives = [objective(f, tensor, model_cfg, map_cfg) for f in candidates]
    posteriors = [log_posterior(f) for f in candidates]
    assert int(np.argmin(objectives)) == int(np.argmax(posteriors))


def test_fit_map_rejects_empty_tensor():
    with pytest.raises(ValueError):
        fit_map(RelationalTensor.build(2, 1, []), IDENTITY, MapConfig())

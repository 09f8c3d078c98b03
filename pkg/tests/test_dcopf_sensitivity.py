from dataclasses import replace

import numpy as np
import pytest

from dcopf import DcParams, solve_dcopf
from dcopf_sensitivity import (ParamGradient, KktFactorizationError, linearize_kkt, adjoint_gradient,
                               forward_sensitivity)
from conftest import build_random_case

TOL = 1e-9


def linearize(case, params, pd=None):
    sol = solve_dcopf(case, params, tol=TOL, pd=pd)
    return sol, linearize_kkt(case, params, sol)


def unit(case, gs=None, b=None):
    d_gs, d_b = np.zeros(case.n_bus), np.zeros(case.n_branch)
    if gs is not None:
        d_gs[gs] = 1.0
    if b is not None:
        d_b[b] = 1.0
    return ParamGradient(d_gs=d_gs, d_b=d_b)


def test_two_bus_closed_forms(case2):
    _, lin = linearize(case2, DcParams.nominal(case2))
    assert not lin.regularized
    # stacked order: pg, pf, va0, va1
    np.testing.assert_allclose(forward_sensitivity(lin, unit(case2, gs=0)), [1.0, 0.0, 0.0, 0.0], atol=1e-7)
    np.testing.assert_allclose(forward_sensitivity(lin, unit(case2, gs=1)), [1.0, 1.0, 0.0, -0.1], atol=1e-7)
    np.testing.assert_allclose(forward_sensitivity(lin, unit(case2, b=0)), [0.0, 0.0, 0.0, -0.01], atol=1e-7)


def test_adjoint_of_the_angle_gives_susceptance_derivative(case2):
    _, lin = linearize(case2, DcParams.nominal(case2))
    grad = adjoint_gradient(lin, np.array([0.0, 0.0, 0.0, 1.0]))
    np.testing.assert_allclose(grad.d_gs, [0.0, -0.1], atol=1e-7)
    np.testing.assert_allclose(grad.d_b, [-0.01], atol=1e-7)


def test_zero_cotangent_gives_zero_gradient(case2):
    _, lin = linearize(case2, DcParams.nominal(case2))
    grad = adjoint_gradient(lin, np.zeros(4))
    assert not np.any(grad.as_vector())


def test_cotangent_shape_is_checked(case2):
    _, lin = linearize(case2, DcParams.nominal(case2))
    with pytest.raises(ValueError):
        adjoint_gradient(lin, np.zeros(3))
    with pytest.raises(ValueError):
        forward_sensitivity(lin, ParamGradient(d_gs=np.zeros(3), d_b=np.zeros(1)))


def test_binding_generator_limit_freezes_output(case2):
    case = replace(case2, generators=(replace(case2.generators[0], pg_max=0.6),))
    _, lin = linearize(case, DcParams.nominal(case))
    assert lin.n_active >= 1
    # the extra demand is shed, so neither pg nor the flow move
    np.testing.assert_allclose(forward_sensitivity(lin, unit(case, gs=1))[:2], [0.0, 0.0], atol=1e-7)


def test_generator_just_inside_its_limit_is_not_treated_as_binding(case2):
    case = replace(case2, generators=(replace(case2.generators[0], pg_max=1.0 + 1e-3),))
    params = DcParams.nominal(case)
    sol = solve_dcopf(case, params, tol=TOL)
    lin = linearize_kkt(case, params, sol, eps_active=1e-2)
    assert not lin.active_hi[lin.index.pg][0]
    np.testing.assert_allclose(forward_sensitivity(lin, unit(case, gs=1))[:2], [1.0, 1.0], atol=1e-7)


def test_binding_limit_is_detected_by_its_multiplier(case2):
    case = replace(case2, generators=(replace(case2.generators[0], pg_max=0.6),))
    _, lin = linearize(case, DcParams.nominal(case))
    assert lin.active_hi[lin.index.pg][0]
    # shedding at the unloaded bus is pinned to zero
    assert lin.active_lo[lin.index.phi][0]


def test_param_gradient_vector_round_trip():
    grad = ParamGradient(d_gs=np.array([1.0, 2.0]), d_b=np.array([3.0]))
    again = ParamGradient.from_vector(grad.as_vector(), 2)
    np.testing.assert_array_equal(again.d_gs, grad.d_gs)
    np.testing.assert_array_equal(again.d_b, grad.d_b)


def test_equal_cost_tie_falls_back_to_regularized_solve(case2):
    gen = case2.generators[0]
    case = replace(case2, generators=(gen, replace(gen, pg_max=2.0)))
    _, lin = linearize(case, DcParams.nominal(case))
    assert lin.regularized
    grad = adjoint_gradient(lin, np.ones(lin.index.n_primal))
    assert np.all(np.isfinite(grad.as_vector()))


def test_factorization_error_carries_condition():
    err = KktFactorizationError("non-finite KKT solve", 1e15)
    assert err.condition == 1e15
    assert isinstance(err, RuntimeError)


@pytest.mark.parametrize('seed', range(8))
def test_adjoint_and_forward_are_transposes(seed):
    rng = np.random.default_rng(100 + seed)
    case = build_random_case(rng, 6, radial=False)
    _, lin = linearize(case, DcParams.nominal(case))
    w = rng.normal(size=lin.index.n_primal)
    v = ParamGradient(d_gs=rng.normal(size=case.n_bus), d_b=rng.normal(size=case.n_branch))
    lhs = w @ forward_sensitivity(lin, v)
    rhs = adjoint_gradient(lin, w).as_vector() @ v.as_vector()
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize('seed', range(100))
def test_sensitivities_match_central_differences(seed):
    rng = np.random.default_rng(200 + seed)
    case = build_random_case(rng, int(rng.integers(3, 8)), radial=bool(seed % 2))
    params = DcParams.nominal(case)
    sol, lin = linearize(case, params)
    if lin.regularized:
        pytest.skip('degenerate draw')

    direction = ParamGradient(d_gs=rng.normal(size=case.n_bus) * 0.1,
                              d_b=rng.normal(size=case.n_branch) * np.abs(params.b) * 0.01)
    h = 1e-3

    def stacked(sign):
        shifted = DcParams(gs=params.gs + sign * h * direction.d_gs, b=params.b + sign * h * direction.d_b)
        return solve_dcopf(case, shifted, tol=TOL).stacked()

    numeric = (stacked(1.0) - stacked(-1.0)) / (2.0 * h)
    analytic = forward_sensitivity(lin, direction)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-5)

    w = rng.normal(size=lin.index.n_primal)
    assert adjoint_gradient(lin, w).as_vector() @ direction.as_vector() == \
        pytest.approx(w @ numeric, rel=1e-4, abs=1e-5)

from dataclasses import replace

import numpy as np
import pytest

from dcopf import DcParams, LpSolveError, build_dcopf, solve_dcopf, dual_objective, check_dcopf_kkt
from lp_solver import LpStatus
from conftest import build_random_case
from grid_case import Bus, Branch, Generator, Load, GridCase, validate_case, default_shed_cost

TOL = 1e-9


def test_two_bus_hand_solution(case2):
    sol = solve_dcopf(case2, DcParams.nominal(case2), tol=TOL)
    np.testing.assert_allclose(sol.pg, [1.0], atol=1e-7)
    np.testing.assert_allclose(sol.pf, [1.0], atol=1e-7)
    np.testing.assert_allclose(sol.va, [0.0, -0.1], atol=1e-7)
    np.testing.assert_allclose(sol.phi, [0.0, 0.0], atol=1e-7)
    assert sol.objective == pytest.approx(1.0, abs=1e-7)
    np.testing.assert_allclose(sol.lambda_p, [1.0, 1.0], atol=1e-6)
    np.testing.assert_allclose(sol.stacked(), [1.0, 1.0, 0.0, -0.1], atol=1e-7)


def test_zero_demand_gives_flat_solution(case2):
    sol = solve_dcopf(case2, DcParams.nominal(case2), tol=TOL, pd=np.zeros(1))
    np.testing.assert_allclose(sol.stacked(), 0.0, atol=1e-7)
    assert sol.objective == pytest.approx(0.0, abs=1e-7)


def test_shortfall_is_shed_at_the_load_bus(case2):
    case = replace(case2, generators=(replace(case2.generators[0], pg_max=0.6),))
    sol = solve_dcopf(case, DcParams.nominal(case), tol=TOL)
    np.testing.assert_allclose(sol.pg, [0.6], atol=1e-7)
    np.testing.assert_allclose(sol.phi, [0.0, 0.4], atol=1e-7)
    assert sol.objective == pytest.approx(0.6 + 0.4 * case.shed_cost, rel=1e-8)
    assert sol.lambda_p[1] == pytest.approx(case.shed_cost, rel=1e-6)
    assert sol.mu_pg_hi[0] == pytest.approx(case.shed_cost - 1.0, rel=1e-6)


def three_bus_chain(pg_max):
    """Generator at bus 0, nothing at bus 1, a 1.0 p.u. load at bus 2."""
    buses = tuple(Bus(bus_id=i + 1, kind=3 if i == 0 else 1, gs=0.0, bs=0.0, vm_min=0.9, vm_max=1.1)
                  for i in range(3))
    branches = tuple(Branch(from_bus=f, to_bus=t, r=0.0, x=0.1, b_charge=0.0, s_max=5.0,
                            dva_min=-0.5, dva_max=0.5) for f, t in ((0, 1), (1, 2)))
    generators = (Generator(bus=0, pg_min=0.0, pg_max=pg_max, qg_min=-3.0, qg_max=3.0, cost=1.0),)
    return validate_case(GridCase(name='chain3', base_mva=100.0, buses=buses, branches=branches,
                                  generators=generators, loads=(Load(bus=2, pd_ref=1.0, qd_ref=0.0),),
                                  ref_bus=0, shed_cost=default_shed_cost(generators)))


def test_shedding_stays_at_the_bus_that_has_the_load():
    case = three_bus_chain(pg_max=0.6)
    sol = solve_dcopf(case, DcParams.nominal(case), tol=TOL)
    np.testing.assert_allclose(sol.pg, [0.6], atol=1e-7)
    np.testing.assert_allclose(sol.phi, [0.0, 0.0, 0.4], atol=1e-7)
    np.testing.assert_allclose(sol.pf, [0.6, 0.6], atol=1e-7)
    np.testing.assert_allclose(sol.va, [0.0, -0.06, -0.12], atol=1e-7)
    assert sol.objective == pytest.approx(0.6 + 0.4 * case.shed_cost, rel=1e-8)


def test_shedding_at_an_unloaded_bus_is_capped_by_its_shunt_demand():
    case = three_bus_chain(pg_max=0.6)
    params = DcParams(gs=np.array([0.0, 0.2, 0.0]), b=case.b_dc.copy())
    lp, idx = build_dcopf(case, params)
    np.testing.assert_allclose(lp.ub[idx.phi], [0.0, 0.2, 1.0])

    sol = solve_dcopf(case, params, tol=TOL)
    np.testing.assert_allclose(sol.pg, [0.6], atol=1e-7)
    assert sol.phi[0] == pytest.approx(0.0, abs=1e-7)
    assert sol.phi[1] <= 0.2 + 1e-7
    assert sol.phi.sum() == pytest.approx(0.6, abs=1e-7)
    assert dual_objective(case, params, sol) == pytest.approx(sol.objective, rel=1e-7, abs=1e-7)


def test_thermal_limit_binds(case2):
    case = replace(case2, branches=(replace(case2.branches[0], s_max=0.5),))
    sol = solve_dcopf(case, DcParams.nominal(case), tol=TOL)
    np.testing.assert_allclose(sol.pf, [0.5], atol=1e-7)
    np.testing.assert_allclose(sol.phi, [0.0, 0.5], atol=1e-7)
    assert sol.mu_pf_hi[0] == pytest.approx(case.shed_cost - 1.0, rel=1e-6)


def test_angle_difference_limit_binds(case2):
    case = replace(case2, branches=(replace(case2.branches[0], dva_min=-0.05, dva_max=0.05),))
    sol = solve_dcopf(case, DcParams.nominal(case), tol=TOL)
    np.testing.assert_allclose(sol.pf, [0.5], atol=1e-7)
    assert sol.va[0] - sol.va[1] == pytest.approx(0.05, abs=1e-7)
    assert sol.mu_theta_hi[0] > 1.0


def test_shunt_conductance_adds_demand(case2):
    params = DcParams(gs=np.array([0.0, 0.2]), b=case2.b_dc.copy())
    sol = solve_dcopf(case2, params, tol=TOL)
    np.testing.assert_allclose(sol.pg, [1.2], atol=1e-7)
    np.testing.assert_allclose(sol.va, [0.0, -0.12], atol=1e-7)


def test_strong_duality_on_two_bus(case2):
    params = DcParams.nominal(case2)
    sol = solve_dcopf(case2, params, tol=TOL)
    assert dual_objective(case2, params, sol) == pytest.approx(sol.objective, rel=1e-7, abs=1e-7)


@pytest.mark.parametrize('bad', [
    dict(gs=np.zeros(3)),
    dict(b=np.zeros(1)),
    dict(gs=np.array([np.nan, 0.0])),
])
def test_invalid_params_are_rejected(case2, bad):
    params = replace(DcParams.nominal(case2), **bad)
    with pytest.raises(ValueError):
        build_dcopf(case2, params)


def test_wrong_load_vector_is_rejected(case2):
    with pytest.raises(ValueError):
        solve_dcopf(case2, DcParams.nominal(case2), pd=np.ones(2))


def test_solver_failure_is_raised(case2, monkeypatch):
    import dcopf
    from lp_solver import LpSolution

    def fail(lp, tol):
        n = lp.n_var
        return LpSolution(x=np.zeros(n), lambda_eq=np.zeros(lp.n_eq), mu_lo=np.zeros(n), mu_hi=np.zeros(n),
                          objective=0.0, status=LpStatus.ITER_LIMIT, message='iter_limit after 200 iterations')
    monkeypatch.setattr(dcopf, 'solve_lp', fail)
    with pytest.raises(LpSolveError) as err:
        solve_dcopf(case2, DcParams.nominal(case2))
    assert err.value.status == LpStatus.ITER_LIMIT


def test_lp_layout_matches_index_map(case14):
    lp, idx = build_dcopf(case14, DcParams.nominal(case14))
    assert lp.n_var == idx.n_var == 2 * case14.n_bus + 2 * case14.n_branch + case14.n_gen
    assert lp.n_eq == idx.n_row == case14.n_bus + 2 * case14.n_branch + 1
    np.testing.assert_allclose(lp.c[idx.pg], case14.cost)
    assert np.all(lp.c[idx.phi] == case14.shed_cost)
    bus_pd, _ = case14.bus_loads(case14.pd_ref, None)
    assert np.all(lp.lb[idx.phi] == 0.0)
    np.testing.assert_allclose(lp.ub[idx.phi], np.maximum(bus_pd + DcParams.nominal(case14).gs, 0.0))
    assert np.any(lp.ub[idx.phi] == 0.0)


def test_case14_balances_total_demand(case14):
    sol = solve_dcopf(case14, DcParams.nominal(case14), tol=TOL)
    assert sol.pg.sum() + sol.phi.sum() == pytest.approx(case14.pd_ref.sum(), rel=1e-8)
    assert check_dcopf_kkt(sol, 1e-7).passed


def test_random_instances_satisfy_kkt_and_duality():
    rng = np.random.default_rng(11)
    for trial in range(200):
        case = build_random_case(rng, int(rng.integers(2, 31)), radial=bool(trial % 2), s_max=rng.uniform(0.3, 3.0))
        params = replace(DcParams.nominal(case), gs=rng.uniform(0.0, 0.05, size=case.n_bus))
        pd = case.pd_ref * rng.uniform(0.5, 1.5, size=case.n_load)
        sol = solve_dcopf(case, params, tol=TOL, pd=pd)
        report = check_dcopf_kkt(sol, 1e-6)
        assert report.passed, f"trial {trial}: {report}"
        assert dual_objective(case, params, sol) == pytest.approx(sol.objective, rel=1e-6, abs=1e-6)
        assert sol.pg.sum() + sol.phi.sum() == pytest.approx(pd.sum() + params.gs.sum(), rel=1e-7, abs=1e-8)

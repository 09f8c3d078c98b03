import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import minimize

from acopf import (AcOpfFailure, PowerFlowDivergence, PowerFlowSetpoints, ac_flow_equations,
                   check_ac_feasibility, solve_ac_powerflow, solve_acopf)
from dcopf import DcParams, solve_dcopf
from grid_case import Generator
from conftest import build_random_case

AC_TOL = 1e-7


def with_pv_load_bus(case):
    buses = (case.buses[0], replace(case.buses[1], kind=2))
    return replace(case, buses=buses)


def test_zero_load_power_flow_stays_at_flat_start(case2):
    sol = solve_ac_powerflow(case2, pd=np.zeros(1), qd=np.zeros(1))
    assert sol.iterations == 0
    np.testing.assert_allclose(sol.vm, [1.0, 1.0])
    np.testing.assert_allclose(sol.va, [0.0, 0.0])


def test_pv_power_flow_matches_closed_form(case2):
    case = with_pv_load_bus(case2)
    sol = solve_ac_powerflow(case)
    # P2 = 10 sin(va2) with unit voltages
    assert sol.va[1] == pytest.approx(-math.asin(0.1), abs=1e-8)
    assert sol.pg[0] == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(sol.vm, [1.0, 1.0])


def test_power_flow_diverges_beyond_transfer_limit(case2):
    case = with_pv_load_bus(case2)
    with pytest.raises(PowerFlowDivergence) as err:
        solve_ac_powerflow(case, pd=np.array([11.0]), qd=np.zeros(1))
    assert err.value.mismatch > 0


def test_flow_equations_reject_nonpositive_voltage(case2):
    with pytest.raises(ValueError):
        ac_flow_equations(case2, np.array([1.0, 0.0]), np.zeros(2))


def test_lossless_two_bus_opf_has_no_losses(case2):
    sol = solve_acopf(case2, tol=AC_TOL)
    assert sol.pg[0] == pytest.approx(1.0, abs=1e-5)
    assert sol.pf[0] == pytest.approx(1.0, abs=1e-5)
    assert sol.pt[0] == pytest.approx(-1.0, abs=1e-5)
    assert sol.objective == pytest.approx(1.0, abs=1e-5)
    assert 10.0 * sol.vm[0] * sol.vm[1] * math.sin(sol.va[0] - sol.va[1]) == pytest.approx(1.0, abs=1e-5)
    assert check_ac_feasibility(case2, sol, 1e-6).passed


def test_load_override_is_respected(case2):
    sol = solve_acopf(case2, tol=AC_TOL, pd=np.array([0.5]), qd=np.zeros(1))
    assert sol.pg[0] == pytest.approx(0.5, abs=1e-5)
    np.testing.assert_allclose(sol.pd, [0.5])


def lossy_reference(case):
    """Minimum generation on the lossy two-bus line by direct constrained search."""
    ys = 1.0 / complex(0.01, 0.1)
    Y = np.array([[ys, -ys], [-ys, ys]])

    def injections(z):
        V = np.array([z[0], z[1] * np.exp(1j * z[2])])
        return V * np.conj(Y @ V)

    constraints = [
        {'type': 'eq', 'fun': lambda z: injections(z)[1].real + 1.0},
        {'type': 'eq', 'fun': lambda z: injections(z)[1].imag},
        {'type': 'ineq', 'fun': lambda z: 1.0 - abs(injections(z)[0].imag)},
    ]
    result = minimize(lambda z: injections(z)[0].real, x0=[1.0, 1.0, -0.1], method='SLSQP',
                      bounds=[(0.9, 1.1), (0.9, 1.1), (-math.pi / 6, math.pi / 6)],
                      constraints=constraints, options={'ftol': 1e-12, 'maxiter': 500})
    assert result.success, result.message
    return result.fun


def test_lossy_two_bus_matches_direct_search(case2_lossy):
    sol = solve_acopf(case2_lossy, tol=AC_TOL)
    expected = lossy_reference(case2_lossy)
    assert expected > 1.0
    assert sol.pg[0] == pytest.approx(expected, abs=1e-5)
    assert sol.pf[0] + sol.pt[0] > 0  # real losses on the line
    assert check_ac_feasibility(case2_lossy, sol, 1e-6).passed


def test_thermal_limit_binds_with_local_backup(case2):
    backup = Generator(bus=1, pg_min=0.0, pg_max=2.0, qg_min=-1.0, qg_max=1.0, cost=2.0)
    case = replace(case2, generators=case2.generators + (backup,),
                   branches=(replace(case2.branches[0], s_max=0.5),))
    sol = solve_acopf(case, tol=AC_TOL)
    assert math.hypot(sol.pf[0], sol.qf[0]) == pytest.approx(0.5, abs=1e-4)
    assert sol.pg.sum() == pytest.approx(1.0, abs=1e-5)
    assert sol.pg[1] >= 0.5 - 1e-4
    assert check_ac_feasibility(case, sol, 1e-6).passed


def test_unservable_load_raises_failure(case2):
    with pytest.raises(AcOpfFailure):
        solve_acopf(case2, tol=AC_TOL, pd=np.array([5.0]), qd=np.zeros(1), maxiter=60)


def test_power_flow_reproduces_opf_operating_point(case2_lossy):
    opf = solve_acopf(case2_lossy, tol=AC_TOL)
    pf = solve_ac_powerflow(case2_lossy, PowerFlowSetpoints.from_solution(opf))
    np.testing.assert_allclose(pf.va, opf.va, atol=1e-5)
    np.testing.assert_allclose(pf.vm, opf.vm, atol=1e-5)
    assert pf.pg[0] == pytest.approx(opf.pg[0], abs=1e-5)


def test_feasibility_check_flags_mismatch(case2):
    sol = solve_acopf(case2, tol=AC_TOL)
    sol.pg = sol.pg + 0.1
    report = check_ac_feasibility(case2, sol, 1e-6)
    assert not report.passed
    assert 'p_balance' in report.failing()


def test_case14_solution_is_feasible(case14):
    sol = solve_acopf(case14, tol=1e-6)
    report = check_ac_feasibility(case14, sol, 1e-5)
    assert report.passed, str(report)
    assert sol.pg.sum() > case14.pd_ref.sum()
    assert abs(sol.va[case14.ref_bus]) < 1e-8


@pytest.mark.parametrize('seed', range(20))
def test_lossless_radial_network_matches_dc_dispatch(seed):
    rng = np.random.default_rng(300 + seed)
    case = build_random_case(rng, 5, radial=True, lossless=True)
    ac = solve_acopf(case, tol=AC_TOL)
    dc = solve_dcopf(case, DcParams.nominal(case), tol=1e-9)
    np.testing.assert_allclose(ac.pg, dc.pg, atol=1e-5)
    np.testing.assert_allclose(ac.pf, dc.pf, atol=1e-5)
    np.testing.assert_allclose(ac.pf, -ac.pt, atol=1e-6)

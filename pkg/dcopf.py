#!/usr/bin/env python3
"""
DC Optimal Power Flow

Builds the DC-OPF linear program for a GridCase under adjustable nodal shunt
conductances and branch susceptances, solves it with the interior-point LP
solver, and maps primal values and multipliers back to grid elements.

LP layout (variables):  [pg | pf | va | phi | dva]
LP layout (rows):       [balance (bus) | flow (branch) | angle (branch) | ref]

    balance_i:  sum pg - sum pf_out + sum pf_in + phi_i = sum pd_i + gs_i
    flow_e:     pf_e + b_e va_i - b_e va_j = 0
    angle_e:    va_i - va_j - dva_e = 0,   dva_e in [dva_min, dva_max]
    ref:        va_ref = 0
    shed:       0 <= phi_i <= max(0, sum pd_i + gs_i)
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Any

import numpy as np
import scipy.sparse as sps

from grid_case import GridCase
from lp_solver import (LinearProgram, LpSolution, LpStatus, ResidualReport, DEFAULT_TOL,
                       solve_lp, check_kkt)

logger = logging.getLogger(__name__)


class LpSolveError(RuntimeError):
    """DC-OPF LP did not reach an optimal solution."""

    def __init__(self, message: str, status: Optional[LpStatus] = None):
        self.status = status
        super().__init__(message)


@dataclass(frozen=True)
class DcParams:
    """Adjustable DC-OPF data: nodal shunt conductances and branch susceptances."""
    gs: np.ndarray
    b: np.ndarray

    @classmethod
    def nominal(cls, case: GridCase) -> 'DcParams':
        return cls(gs=case.gs.copy(), b=case.b_dc.copy())

    def validate(self, case: GridCase) -> 'DcParams':
        gs = np.asarray(self.gs, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if gs.shape != (case.n_bus,):
            raise ValueError(f"gs has shape {gs.shape}, expected ({case.n_bus},)")
        if b.shape != (case.n_branch,):
            raise ValueError(f"b has shape {b.shape}, expected ({case.n_branch},)")
        if not (np.all(np.isfinite(gs)) and np.all(np.isfinite(b))):
            raise ValueError("DC parameters must be finite")
        if np.any(b == 0.0):
            raise ValueError(f"branch susceptance is zero at branch {int(np.argmin(np.abs(b))) + 1}")
        return self


@dataclass(frozen=True)
class IndexMap:
    """Variable and row offsets of the DC-OPF LP."""
    n_bus: int
    n_branch: int
    n_gen: int

    @property
    def pg(self) -> slice:
        return slice(0, self.n_gen)

    @property
    def pf(self) -> slice:
        return slice(self.pg.stop, self.pg.stop + self.n_branch)

    @property
    def va(self) -> slice:
        return slice(self.pf.stop, self.pf.stop + self.n_bus)

    @property
    def phi(self) -> slice:
        return slice(self.va.stop, self.va.stop + self.n_bus)

    @property
    def dva(self) -> slice:
        return slice(self.phi.stop, self.phi.stop + self.n_branch)

    @property
    def n_var(self) -> int:
        return self.dva.stop

    @property
    def balance_rows(self) -> slice:
        return slice(0, self.n_bus)

    @property
    def flow_rows(self) -> slice:
        return slice(self.n_bus, self.n_bus + self.n_branch)

    @property
    def angle_rows(self) -> slice:
        return slice(self.flow_rows.stop, self.flow_rows.stop + self.n_branch)

    @property
    def ref_row(self) -> int:
        return self.angle_rows.stop

    @property
    def n_row(self) -> int:
        return self.ref_row + 1

    @property
    def n_primal(self) -> int:
        """Length of the stacked (pg, pf, va) vector used by losses."""
        return self.n_gen + self.n_branch + self.n_bus


@dataclass
class DcSolution:
    pg: np.ndarray
    pf: np.ndarray
    va: np.ndarray
    phi: np.ndarray
    lambda_p: np.ndarray
    lambda_pf: np.ndarray
    lambda_theta: np.ndarray
    lambda_ref: float
    mu_theta_lo: np.ndarray
    mu_theta_hi: np.ndarray
    mu_pg_lo: np.ndarray
    mu_pg_hi: np.ndarray
    mu_pf_lo: np.ndarray
    mu_pf_hi: np.ndarray
    mu_phi: np.ndarray
    mu_phi_hi: np.ndarray
    objective: float
    pd: np.ndarray
    lp: LinearProgram = field(repr=False)
    lp_solution: LpSolution = field(repr=False)
    index: IndexMap = field(repr=False)

    def stacked(self) -> np.ndarray:
        """Primal vector [pg; pf; va] compared against AC targets."""
        return np.concatenate([self.pg, self.pf, self.va])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'objective': self.objective,
            'pg': self.pg.tolist(),
            'pf': self.pf.tolist(),
            'va': self.va.tolist(),
            'phi': self.phi.tolist(),
            'lambda_p': self.lambda_p.tolist(),
            'lambda_pf': self.lambda_pf.tolist(),
            'iterations': self.lp_solution.iterations,
        }


def build_dcopf(case: GridCase, params: DcParams, pd: Optional[np.ndarray] = None):
    """Assemble the DC-OPF LP; returns (LinearProgram, IndexMap)."""
    params.validate(case)
    pd = case.pd_ref if pd is None else np.asarray(pd, dtype=float)
    if pd.shape != (case.n_load,):
        raise ValueError(f"pd has shape {pd.shape}, expected ({case.n_load},)")

    idx = IndexMap(n_bus=case.n_bus, n_branch=case.n_branch, n_gen=case.n_gen)
    nb, nl, ng = case.n_bus, case.n_branch, case.n_gen
    f, t = case.from_idx, case.to_idx
    lines = np.arange(nl)
    b = np.asarray(params.b, dtype=float)

    rows, cols, vals = [], [], []

    def put(r, c, v):
        rows.append(np.asarray(r, dtype=int))
        cols.append(np.asarray(c, dtype=int))
        vals.append(np.broadcast_to(np.asarray(v, dtype=float), np.shape(c)).ravel())

    # balance rows
    put(case.gen_bus, idx.pg.start + np.arange(ng), 1.0)
    put(f, idx.pf.start + lines, -1.0)
    put(t, idx.pf.start + lines, 1.0)
    put(np.arange(nb), idx.phi.start + np.arange(nb), 1.0)
    # flow rows
    flow = idx.flow_rows.start + lines
    put(flow, idx.pf.start + lines, 1.0)
    put(flow, idx.va.start + f, b)
    put(flow, idx.va.start + t, -b)
    # angle-difference rows
    angle = idx.angle_rows.start + lines
    put(angle, idx.va.start + f, 1.0)
    put(angle, idx.va.start + t, -1.0)
    put(angle, idx.dva.start + lines, -1.0)
    # reference row
    put(np.array([idx.ref_row]), np.array([idx.va.start + case.ref_bus]), 1.0)

    A = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(idx.n_row, idx.n_var))

    rhs = np.zeros(idx.n_row)
    bus_pd, _ = case.bus_loads(pd, None)
    rhs[idx.balance_rows] = bus_pd + np.asarray(params.gs, dtype=float)

    cost = np.zeros(idx.n_var)
    cost[idx.pg] = case.cost
    cost[idx.phi] = case.shed_cost

    s_max = np.array([br.s_max for br in case.branches])
    lb = np.full(idx.n_var, -np.inf)
    ub = np.full(idx.n_var, np.inf)
    lb[idx.pg] = [g.pg_min for g in case.generators]
    ub[idx.pg] = [g.pg_max for g in case.generators]
    lb[idx.pf] = -s_max
    ub[idx.pf] = s_max
    lb[idx.phi] = 0.0
    ub[idx.phi] = np.maximum(rhs[idx.balance_rows], 0.0)
    lb[idx.dva] = [br.dva_min for br in case.branches]
    ub[idx.dva] = [br.dva_max for br in case.branches]

    return LinearProgram(c=cost, A_eq=A, b_eq=rhs, lb=lb, ub=ub), idx


def solve_dcopf(case: GridCase, params: DcParams, tol: float = DEFAULT_TOL,
                pd: Optional[np.ndarray] = None) -> DcSolution:
    """Solve the DC-OPF and map the LP solution onto grid elements."""
    lp, idx = build_dcopf(case, params, pd)
    sol = solve_lp(lp, tol=tol)
    if sol.status == LpStatus.INFEASIBLE:
        logger.error(f"{case.name}: DC-OPF reported infeasible although shedding is available")
        raise LpSolveError("DC-OPF infeasible despite load shedding", sol.status)
    if not sol.optimal:
        raise LpSolveError(f"DC-OPF LP not solved: {sol.message}", sol.status)

    x = sol.x
    return DcSolution(
        pg=x[idx.pg].copy(), pf=x[idx.pf].copy(), va=x[idx.va].copy(), phi=x[idx.phi].copy(),
        lambda_p=sol.lambda_eq[idx.balance_rows].copy(),
        lambda_pf=sol.lambda_eq[idx.flow_rows].copy(),
        lambda_theta=sol.lambda_eq[idx.angle_rows].copy(),
        lambda_ref=float(sol.lambda_eq[idx.ref_row]),
        mu_theta_lo=sol.mu_lo[idx.dva].copy(), mu_theta_hi=sol.mu_hi[idx.dva].copy(),
        mu_pg_lo=sol.mu_lo[idx.pg].copy(), mu_pg_hi=sol.mu_hi[idx.pg].copy(),
        mu_pf_lo=sol.mu_lo[idx.pf].copy(), mu_pf_hi=sol.mu_hi[idx.pf].copy(),
        mu_phi=sol.mu_lo[idx.phi].copy(), mu_phi_hi=sol.mu_hi[idx.phi].copy(),
        objective=sol.objective,
        pd=(case.pd_ref if pd is None else np.asarray(pd, dtype=float)).copy(),
        lp=lp, lp_solution=sol, index=idx,
    )


def dual_objective(case: GridCase, params: DcParams, sol: DcSolution) -> float:
    """Objective of the LP dual, evaluated from grid-level multipliers."""
    bus_pd, _ = case.bus_loads(sol.pd, None)
    s_max = np.array([br.s_max for br in case.branches])
    pg_min = np.array([g.pg_min for g in case.generators])
    pg_max = np.array([g.pg_max for g in case.generators])
    dva_min = np.array([br.dva_min for br in case.branches])
    dva_max = np.array([br.dva_max for br in case.branches])
    return float(
        sol.lambda_p @ (bus_pd + np.asarray(params.gs, dtype=float))
        + pg_min @ sol.mu_pg_lo - pg_max @ sol.mu_pg_hi
        - s_max @ sol.mu_pf_lo - s_max @ sol.mu_pf_hi
        + dva_min @ sol.mu_theta_lo - dva_max @ sol.mu_theta_hi
        - np.maximum(bus_pd + np.asarray(params.gs, dtype=float), 0.0) @ sol.mu_phi_hi
    )


def check_dcopf_kkt(sol: DcSolution, tol: float) -> ResidualReport:
    """KKT residual report of the LP backing a DC-OPF solution."""
    return check_kkt(sol.lp, sol.lp_solution, tol)

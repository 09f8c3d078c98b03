#!/usr/bin/env python3
"""
DC-OPF Sensitivities

Implicit differentiation of the DC-OPF solution map with respect to the
adjustable shunt conductances gs and branch susceptances b. Complementarity
is reduced to equalities on the active bounds, which leaves the square system

    F(x, lambda, nu; gs, b) = [ A^T lambda + E^T nu - c ]
                              [ A x - b_eq(gs)          ] = 0
                              [ E x - x_bound           ]

with symmetric Jacobian K = [[0, A^T, E^T], [A, 0, 0], [E, 0, 0]].
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from grid_case import GridCase
from dcopf import DcParams, DcSolution, IndexMap

logger = logging.getLogger(__name__)

DEFAULT_EPS_ACTIVE = 1e-6
CONDITION_LIMIT = 1e12
TIKHONOV_DAMP = 1e-8


class KktFactorizationError(RuntimeError):
    """Reduced KKT system could not be solved even with regularization."""

    def __init__(self, message: str, condition: float = np.inf):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


@dataclass
class ParamGradient:
    """Vector over (gs, b), used both for gradients and for directions."""
    d_gs: np.ndarray
    d_b: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.d_gs, self.d_b])

    @classmethod
    def from_vector(cls, vec: np.ndarray, n_bus: int) -> 'ParamGradient':
        vec = np.asarray(vec, dtype=float)
        return cls(d_gs=vec[:n_bus].copy(), d_b=vec[n_bus:].copy())


@dataclass
class KktLinearization:
    index: IndexMap
    K: sps.csc_matrix
    param_jacobian: sps.csc_matrix
    active_lo: np.ndarray
    active_hi: np.ndarray
    condition: float
    residual: float
    regularized: bool
    _lu: Optional[object] = field(default=None, repr=False)

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active_lo | self.active_hi))

    def solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        if self._lu is not None:
            out = self._lu.solve(rhs, trans='T' if transpose else 'N')
        else:
            matrix = self.K.T if transpose else self.K
            out = spla.lsqr(matrix, rhs, damp=TIKHONOV_DAMP, atol=1e-14, btol=1e-14,
                            iter_lim=20 * self.K.shape[0])[0]
        if not np.all(np.isfinite(out)):
            raise KktFactorizationError("non-finite KKT solve", self.condition)
        return out


def linearize_kkt(case: GridCase, params: DcParams, sol: DcSolution,
                  eps_active: float = DEFAULT_EPS_ACTIVE) -> KktLinearization:
    """Active-set reduction and factorization of the DC-OPF KKT Jacobian."""
    params.validate(case)
    lp, lps, idx = sol.lp, sol.lp_solution, sol.index
    x = lps.x
    n, m = lp.n_var, lp.n_eq

    fixed = np.isfinite(lp.lb) & (lp.lb == lp.ub)
    slack_lo = x - lp.lb
    slack_hi = lp.ub - x
    # a bound binds when it is within eps and its multiplier dominates the slack
    active_lo = fixed | (np.isfinite(lp.lb) & (slack_lo <= eps_active) & (slack_lo < lps.mu_lo))
    active_hi = np.isfinite(lp.ub) & (slack_hi <= eps_active) & (slack_hi < lps.mu_hi) & ~active_lo
    active = np.flatnonzero(active_lo | active_hi)
    n_act = len(active)
    E = sps.csr_matrix((np.ones(n_act), (np.arange(n_act), active)), shape=(n_act, n))

    A = lp.A_eq.tocsr()
    size = n + m + n_act
    a_coo, e_coo = A.tocoo(), E.tocoo()
    K = sps.csc_matrix((
        np.concatenate([a_coo.data, a_coo.data, e_coo.data, e_coo.data]),
        (np.concatenate([a_coo.col, n + a_coo.row, e_coo.col, n + m + e_coo.row]),
         np.concatenate([n + a_coo.row, a_coo.col, n + m + e_coo.row, e_coo.col]))),
        shape=(size, size))

    # a shedding cap max(0, pd + gs) that binds moves with gs
    phi_pos = active - idx.phi.start
    at_cap = active_hi[active] & (phi_pos >= 0) & (phi_pos < idx.n_bus)
    shed_rows, shed_buses = n + m + np.flatnonzero(at_cap), phi_pos[at_cap]

    nu = (lps.mu_lo - lps.mu_hi)[active]
    bound = np.where(active_lo[active], lp.lb[active], lp.ub[active])
    residual = max(
        np.linalg.norm(A.T @ lps.lambda_eq + E.T @ nu - lp.c, np.inf) / (1.0 + np.linalg.norm(lp.c, np.inf)),
        np.linalg.norm(A @ x - lp.b_eq, np.inf),
        np.linalg.norm(x[active] - bound, np.inf) if n_act else 0.0,
    )

    lu, condition = _factorize(K)
    regularized = lu is None
    if regularized:
        logger.warning(f"{case.name}: reduced KKT system ill-conditioned "
                       f"(estimate {condition:.3e}, {n_act} active bounds); using regularized solve")

    return KktLinearization(
        index=idx, K=K, param_jacobian=_param_jacobian(case, sol, n, size, shed_rows, shed_buses),
        active_lo=active_lo, active_hi=active_hi, condition=condition,
        residual=float(residual), regularized=regularized, _lu=lu)


def _factorize(K: sps.csc_matrix):
    """Sparse LU of K with a 1-norm condition estimate; None when singular."""
    try:
        lu = spla.splu(K, permc_spec='MMD_AT_PLUS_A')
    except RuntimeError:
        return None, np.inf
    size = K.shape[0]
    inverse = spla.LinearOperator(
        (size, size), dtype=float,
        matvec=lambda v: lu.solve(np.asarray(v, dtype=float).ravel()),
        rmatvec=lambda v: lu.solve(np.asarray(v, dtype=float).ravel(), trans='T'))
    try:
        with np.errstate(all='ignore'):
            condition = float(spla.onenormest(inverse) * spla.norm(K, 1))
    except (ValueError, ArithmeticError):
        condition = np.inf
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        return None, condition
    return lu, condition


def _param_jacobian(case: GridCase, sol: DcSolution, n: int, size: int,
                    shed_rows: np.ndarray, shed_buses: np.ndarray) -> sps.csc_matrix:
    """dF/d(gs, b) as a sparse (size x (n_bus + n_branch)) matrix."""
    idx = sol.index
    nb, nl = case.n_bus, case.n_branch
    f, t = case.from_idx, case.to_idx
    lines = np.arange(nl)
    lam_flow = sol.lambda_pf
    angle_diff = sol.va[f] - sol.va[t]

    rows = np.concatenate([
        n + idx.balance_rows.start + np.arange(nb),   # b_eq depends on gs
        idx.va.start + f,                             # (dA/db)^T lambda
        idx.va.start + t,
        n + idx.flow_rows.start + lines,              # (dA/db) x
        shed_rows,                                    # binding shedding caps
    ])
    cols = np.concatenate([np.arange(nb), nb + lines, nb + lines, nb + lines, shed_buses])
    vals = np.concatenate([-np.ones(nb), lam_flow, -lam_flow, angle_diff, -np.ones(len(shed_rows))])
    return sps.csc_matrix((vals, (rows, cols)), shape=(size, nb + nl))


def _scatter_primal(lin: KktLinearization, dL_dprimal: np.ndarray) -> np.ndarray:
    idx = lin.index
    vec = np.asarray(dL_dprimal, dtype=float)
    if vec.shape != (idx.n_primal,):
        raise ValueError(f"dL_dprimal has shape {vec.shape}, expected ({idx.n_primal},)")
    rhs = np.zeros(lin.K.shape[0])
    rhs[idx.pg] = vec[:idx.n_gen]
    rhs[idx.pf] = vec[idx.n_gen:idx.n_gen + idx.n_branch]
    rhs[idx.va] = vec[idx.n_gen + idx.n_branch:]
    return rhs


def _gather_primal(lin: KktLinearization, dz: np.ndarray) -> np.ndarray:
    idx = lin.index
    return np.concatenate([dz[idx.pg], dz[idx.pf], dz[idx.va]])


def adjoint_gradient(lin: KktLinearization, dL_dprimal: np.ndarray) -> ParamGradient:
    """Loss gradient w.r.t. (gs, b) given dL/d[pg; pf; va]."""
    rhs = _scatter_primal(lin, dL_dprimal)
    if not np.any(rhs):
        return ParamGradient(d_gs=np.zeros(lin.index.n_bus), d_b=np.zeros(lin.index.n_branch))
    w = lin.solve(rhs, transpose=True)
    grad = -(lin.param_jacobian.T @ w)
    return ParamGradient.from_vector(grad, lin.index.n_bus)


def forward_sensitivity(lin: KktLinearization, d_params: ParamGradient) -> np.ndarray:
    """Directional derivative of [pg; pf; va] along a (gs, b) direction."""
    idx = lin.index
    d_gs = np.asarray(d_params.d_gs, dtype=float)
    d_b = np.asarray(d_params.d_b, dtype=float)
    if d_gs.shape != (idx.n_bus,) or d_b.shape != (idx.n_branch,):
        raise ValueError("direction does not match the case dimensions")
    rhs = lin.param_jacobian @ np.concatenate([d_gs, d_b])
    if not np.any(rhs):
        return np.zeros(idx.n_primal)
    dz = -lin.solve(rhs)
    return _gather_primal(lin, dz)

#!/usr/bin/env python3
"""
Linear Programming Solver

Homogeneous self-dual primal-dual interior-point method with Mehrotra
predictor-corrector steps for problems of the form

    minimize    c^T x
    subject to  A_eq x = b_eq,   lb <= x <= ub

Returns interior (strictly complementary) multipliers under the convention
c = A_eq^T lambda + mu_lo - mu_hi with mu_lo, mu_hi >= 0.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Tuple

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAXITER = 200
REGULARIZATION = 1e-10
STEP_FRACTION = 0.99995


class LpStatus(str, Enum):
    OPTIMAL = 'optimal'
    INFEASIBLE = 'infeasible'
    UNBOUNDED = 'unbounded'
    ITER_LIMIT = 'iter_limit'
    NUMERICAL_ERROR = 'numerical_error'


@dataclass
class LinearProgram:
    """Equality-constrained LP with variable bounds (+/-inf allowed)."""
    c: np.ndarray
    A_eq: sps.csr_matrix
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.A_eq = sps.csr_matrix(self.A_eq, dtype=float)
        n = self.c.shape[0]
        if self.A_eq.shape != (self.b_eq.shape[0], n):
            raise ValueError(f"A_eq shape {self.A_eq.shape} does not match "
                             f"{self.b_eq.shape[0]} rows x {n} variables")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bound vectors must have one entry per variable")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ValueError("bounds must not be NaN")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b_eq))):
            raise ValueError("c and b_eq must be finite")
        if np.any(self.lb > self.ub):
            bad = int(np.argmax(self.lb > self.ub))
            raise ValueError(f"lb > ub for variable {bad}")

    @property
    def n_var(self) -> int:
        return self.c.shape[0]

    @property
    def n_eq(self) -> int:
        return self.b_eq.shape[0]


@dataclass
class LpSolution:
    x: np.ndarray
    lambda_eq: np.ndarray
    mu_lo: np.ndarray
    mu_hi: np.ndarray
    objective: float
    status: LpStatus
    iterations: int = 0
    message: str = ''

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


@dataclass
class ResidualReport:
    """Largest residual per named block; passes when every block is within tol."""
    residuals: Dict[str, float]
    tol: float
    details: Dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(value <= self.tol for value in self.residuals.values())

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def failing(self) -> Dict[str, float]:
        return {k: v for k, v in self.residuals.items() if v > self.tol}

    def __str__(self) -> str:
        parts = ', '.join(f"{k}={v:.3e}" for k, v in self.residuals.items())
        return f"{'PASS' if self.passed else 'FAIL'} (tol {self.tol:.1e}): {parts}"


# ---------------------------------------------------------------------------
# Standard-form conversion
# ---------------------------------------------------------------------------

@dataclass
class _StandardForm:
    """min c^T u s.t. A u = b, u >= 0, plus the bookkeeping to map back."""
    A: sps.csc_matrix
    b: np.ndarray
    c: np.ndarray
    kept_rows: np.ndarray
    fixed: np.ndarray
    # per original free-standing variable: kind and standard-form column(s)
    kind: np.ndarray          # 0 fixed, 1 lower, 2 box, 3 upper, 4 free
    col: np.ndarray           # primary standard column
    aux: np.ndarray           # box slack column / negative part of a free variable
    box_row: np.ndarray       # standard row holding u + w = ub - lb


_FIXED, _LOWER, _BOX, _UPPER, _FREE = range(5)


def _to_standard_form(lp: LinearProgram, tol: float) -> Tuple[_StandardForm, bool]:
    """Presolve (fixed variables, empty rows) and shift/split into u >= 0 form.

    Returns the standard form and a flag that is False when presolve already
    proved the problem infeasible.
    """
    n = lp.n_var
    lb, ub = lp.lb, lp.ub
    A = lp.A_eq.tocsc()
    fixed = np.isfinite(lb) & (lb == ub)
    b = lp.b_eq - A[:, fixed] @ lb[fixed] if np.any(fixed) else lp.b_eq.copy()

    free_cols = np.flatnonzero(~fixed)
    A_free = A[:, free_cols]
    row_nnz = np.diff(A_free.tocsr().indptr)
    empty = row_nnz == 0
    feasible = not np.any(np.abs(b[empty]) > tol * (1.0 + np.abs(b[empty])))
    kept_rows = np.flatnonzero(~empty)

    kind = np.full(n, _FIXED, dtype=int)
    col = np.full(n, -1, dtype=int)
    aux = np.full(n, -1, dtype=int)
    box_row = np.full(n, -1, dtype=int)

    columns, costs = [], []
    b_std = b[kept_rows].copy()
    A_rows = A[kept_rows, :].tocsc()
    box_entries = []
    for j in free_cols:
        a_j = A_rows[:, j]
        lo_finite, hi_finite = np.isfinite(lb[j]), np.isfinite(ub[j])
        if lo_finite:
            if lb[j] != 0.0:
                b_std -= a_j.toarray().ravel() * lb[j]
            kind[j] = _BOX if hi_finite else _LOWER
            col[j] = len(columns)
            columns.append(a_j)
            costs.append(lp.c[j])
            if hi_finite:
                box_entries.append(j)
        elif hi_finite:
            b_std -= a_j.toarray().ravel() * ub[j]
            kind[j] = _UPPER
            col[j] = len(columns)
            columns.append(-a_j)
            costs.append(-lp.c[j])
        else:
            kind[j] = _FREE
            col[j] = len(columns)
            columns.append(a_j)
            costs.append(lp.c[j])
            aux[j] = len(columns)
            columns.append(-a_j)
            costs.append(-lp.c[j])

    m_eq = len(kept_rows)
    n_main = len(columns)
    n_box = len(box_entries)
    main = sps.hstack(columns, format='csc') if columns else sps.csc_matrix((m_eq, 0))
    if n_box:
        rows = np.arange(n_box)
        sel = sps.csc_matrix((np.ones(n_box), (rows, col[box_entries])), shape=(n_box, n_main))
        box_block = sps.hstack([sel, sps.identity(n_box, format='csc')], format='csc')
        if m_eq:
            A_std = sps.vstack([sps.hstack([main, sps.csc_matrix((m_eq, n_box))], format='csc'), box_block],
                               format='csc')
        else:
            A_std = box_block
        b_std = np.r_[b_std, ub[box_entries] - lb[box_entries]]
        aux[box_entries] = n_main + rows
        box_row[box_entries] = m_eq + rows
        costs.extend([0.0] * n_box)
    else:
        A_std = main
    form = _StandardForm(A=A_std, b=b_std, c=np.asarray(costs, dtype=float),
                         kept_rows=kept_rows, fixed=fixed, kind=kind, col=col,
                         aux=aux, box_row=box_row)
    return form, feasible


def _objective_offset(lp: LinearProgram, form: _StandardForm) -> float:
    """Constant c^T x at u = 0, so that c^T x = c_std^T u + offset."""
    anchor = np.zeros(lp.n_var)
    lower = np.isin(form.kind, (_FIXED, _LOWER, _BOX))
    upper = form.kind == _UPPER
    anchor[lower] = lp.lb[lower]
    anchor[upper] = lp.ub[upper]
    return float(lp.c @ anchor)


# ---------------------------------------------------------------------------
# Homogeneous self-dual iterations
# ---------------------------------------------------------------------------

BlockSolve = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def _augmented_solver(A: sps.csc_matrix, h: np.ndarray) -> BlockSolve:
    """Factorize [[-H - rI, A^T], [A, rI]] once; return a two-block solve."""
    m, n = A.shape
    K = sps.bmat([[-sps.diags(h + REGULARIZATION), A.T],
                  [A, REGULARIZATION * sps.identity(m)]], format='csc')
    try:
        lu = spla.splu(K, permc_spec='MMD_AT_PLUS_A')
    except RuntimeError:
        lu = None
        logger.debug("augmented system singular, using least squares")

    def solve(r1: np.ndarray, r2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        rhs = np.r_[r1, r2]
        sol = lu.solve(rhs) if lu is not None else None
        if sol is None or not np.all(np.isfinite(sol)):
            sol = spla.lsqr(K, rhs, atol=1e-14, btol=1e-14, iter_lim=10 * (m + n))[0]
        return sol[:n], sol[n:]

    return solve


def _step_length(x, d_x, z, d_z, tau, d_tau, kappa, d_kappa, alpha0):
    i_x = d_x < 0
    i_z = d_z < 0
    alpha_x = alpha0 * np.min(x[i_x] / -d_x[i_x]) if np.any(i_x) else 1.0
    alpha_z = alpha0 * np.min(z[i_z] / -d_z[i_z]) if np.any(i_z) else 1.0
    alpha_tau = alpha0 * tau / -d_tau if d_tau < 0 else 1.0
    alpha_kappa = alpha0 * kappa / -d_kappa if d_kappa < 0 else 1.0
    return min(1.0, alpha_x, alpha_z, alpha_tau, alpha_kappa)


def _search_direction(A, b, c, x, y, z, tau, kappa):
    """Mehrotra predictor-corrector direction for the self-dual embedding."""
    n = len(x)
    r_p = b * tau - A @ x
    r_d = c * tau - A.T @ y - z
    r_g = c @ x - b @ y + kappa
    mu = (x @ z + tau * kappa) / (n + 1)

    solve = _augmented_solver(A, z / x)
    p, q = solve(c, b)

    gamma = 0.0
    d_x = d_z = np.zeros(n)
    d_tau = d_kappa = 0.0
    d_y = np.zeros_like(y)
    for corrector in (False, True):
        eta = 1.0 - gamma
        rhat_xs = gamma * mu - x * z
        rhat_tk = gamma * mu - tau * kappa
        if corrector:
            rhat_xs = rhat_xs - d_x * d_z
            rhat_tk = rhat_tk - d_tau * d_kappa
        u, v = solve(eta * r_d - rhat_xs / x, eta * r_p)
        d_tau = ((eta * r_g + rhat_tk / tau - (-c @ u + b @ v)) /
                 (kappa / tau + (-c @ p + b @ q)))
        d_x = u + p * d_tau
        d_y = v + q * d_tau
        d_z = (rhat_xs - z * d_x) / x
        d_kappa = (rhat_tk - kappa * d_tau) / tau
        alpha = _step_length(x, d_x, z, d_z, tau, d_tau, kappa, d_kappa, 1.0)
        gamma = (1.0 - alpha) ** 2 * min(0.1, 1.0 - alpha)
    return d_x, d_y, d_z, d_tau, d_kappa


def _solve_hsd(A, b, c, tol, maxiter, b_scale=1.0, c_scale=1.0, offset=0.0):
    """Run the self-dual iterations on a scaled standard-form problem.

    Optimality is tested on the unscaled iterate: residuals and the duality
    gap are measured in the units of the original LP, whose objective is
    c^T u * b_scale * c_scale + offset.
    """
    m, n = A.shape
    x, z = np.ones(n), np.ones(n)
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0

    def residual_norms(x, y, z, tau, kappa):
        return (np.linalg.norm(b * tau - A @ x),
                np.linalg.norm(c * tau - A.T @ y - z),
                np.linalg.norm(kappa + c @ x - b @ y),
                (x @ z + tau * kappa) / (n + 1))

    rp0, rd0, rg0, mu0 = residual_norms(x, y, z, tau, kappa)
    b_norm = 1.0 + b_scale * np.linalg.norm(b, np.inf)
    c_norm = 1.0 + c_scale * np.linalg.norm(c, np.inf)
    obj_scale = b_scale * c_scale

    status = LpStatus.ITER_LIMIT
    iteration = 0
    while True:
        xh, yh, zh = x / tau, y / tau, z / tau
        obj = obj_scale * (c @ xh)
        primal = b_scale * np.linalg.norm(b - A @ xh, np.inf) / b_norm
        dual = c_scale * np.linalg.norm(c - A.T @ yh - zh, np.inf) / c_norm
        gap = abs(obj - obj_scale * (b @ yh)) / (1.0 + abs(obj + offset))
        if primal <= tol and dual <= tol and gap <= tol:
            status = LpStatus.OPTIMAL
            break

        rp, rd, rg, mu = residual_norms(x, y, z, tau, kappa)
        rho_p, rho_d = rp / max(1.0, rp0), rd / max(1.0, rd0)
        rho_g, rho_mu = rg / max(1.0, rg0), mu / mu0
        inf1 = rho_p < tol and rho_d < tol and rho_g < tol and tau < tol * max(1.0, kappa)
        inf2 = rho_mu < tol and tau < tol * min(1.0, kappa)
        if inf1 or inf2:
            status = LpStatus.INFEASIBLE if b @ y > tol else LpStatus.UNBOUNDED
            break
        if iteration >= maxiter:
            break

        iteration += 1
        try:
            with np.errstate(divide='raise', invalid='raise', over='raise'):
                d_x, d_y, d_z, d_tau, d_kappa = _search_direction(A, b, c, x, y, z, tau, kappa)
                alpha = _step_length(x, d_x, z, d_z, tau, d_tau, kappa, d_kappa, STEP_FRACTION)
                x = x + alpha * d_x
                y = y + alpha * d_y
                z = z + alpha * d_z
                tau = tau + alpha * d_tau
                kappa = kappa + alpha * d_kappa
        except (FloatingPointError, ZeroDivisionError, ValueError, RuntimeError) as e:
            logger.debug(f"interior-point breakdown at iteration {iteration}: {e}")
            status = LpStatus.NUMERICAL_ERROR
            break
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z)) and np.isfinite(tau)):
            status = LpStatus.NUMERICAL_ERROR
            break
    return x / tau, y / tau, z / tau, status, iteration


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def solve_lp(lp: LinearProgram, tol: float = DEFAULT_TOL, maxiter: int = DEFAULT_MAXITER) -> LpSolution:
    """Solve an LP; the returned status tells whether the solution is optimal."""
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    n = lp.n_var
    form, feasible = _to_standard_form(lp, tol)
    if not feasible:
        return _empty_solution(lp, LpStatus.INFEASIBLE, "presolve found an infeasible empty row")

    A, b, c = form.A, form.b, form.c
    if A.shape[1] == 0:
        u, y_std, z_std, status, iterations = np.zeros(0), np.zeros(A.shape[0]), np.zeros(0), LpStatus.OPTIMAL, 0
        if np.linalg.norm(b, np.inf) > tol:
            status = LpStatus.INFEASIBLE
    else:
        b_scale = max(1.0, np.linalg.norm(b, np.inf))
        c_scale = max(1.0, np.linalg.norm(c, np.inf))
        u, y_std, z_std, status, iterations = _solve_hsd(A, b / b_scale, c / c_scale, tol, maxiter,
                                                         b_scale, c_scale, _objective_offset(lp, form))
        u, y_std, z_std = u * b_scale, y_std * c_scale, z_std * c_scale

    x = np.empty(n)
    mu_lo = np.zeros(n)
    mu_hi = np.zeros(n)
    kind, col, aux = form.kind, form.col, form.aux
    for j in range(n):
        k = kind[j]
        if k == _FIXED:
            x[j] = lp.lb[j]
        elif k == _LOWER:
            x[j] = lp.lb[j] + u[col[j]]
            mu_lo[j] = z_std[col[j]]
        elif k == _BOX:
            x[j] = lp.lb[j] + u[col[j]]
            mu_lo[j] = z_std[col[j]]
            mu_hi[j] = z_std[aux[j]]
        elif k == _UPPER:
            x[j] = lp.ub[j] - u[col[j]]
            mu_hi[j] = z_std[col[j]]
        else:
            x[j] = u[col[j]] - u[aux[j]]

    lambda_eq = np.zeros(lp.n_eq)
    lambda_eq[form.kept_rows] = y_std[:len(form.kept_rows)]
    if np.any(form.fixed):
        reduced = lp.c[form.fixed] - lp.A_eq.tocsc()[:, form.fixed].T @ lambda_eq
        mu_lo[form.fixed] = np.maximum(reduced, 0.0)
        mu_hi[form.fixed] = np.maximum(-reduced, 0.0)

    objective = float(lp.c @ x)
    message = f"{status.value} after {iterations} iterations"
    logger.debug(f"LP {lp.n_eq}x{n}: {message}, objective {objective:.10g}")
    return LpSolution(x=x, lambda_eq=lambda_eq, mu_lo=mu_lo, mu_hi=mu_hi,
                      objective=objective, status=status, iterations=iterations,
                      message=message)


def _empty_solution(lp: LinearProgram, status: LpStatus, message: str) -> LpSolution:
    n = lp.n_var
    return LpSolution(x=np.full(n, np.nan), lambda_eq=np.zeros(lp.n_eq), mu_lo=np.zeros(n),
                      mu_hi=np.zeros(n), objective=np.nan, status=status, message=message)


def lp_dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    """b^T lambda + lb^T mu_lo - ub^T mu_hi over finite bounds."""
    lo = np.isfinite(lp.lb)
    hi = np.isfinite(lp.ub)
    return float(lp.b_eq @ sol.lambda_eq + lp.lb[lo] @ sol.mu_lo[lo] - lp.ub[hi] @ sol.mu_hi[hi])


def check_kkt(lp: LinearProgram, sol: LpSolution, tol: float) -> ResidualReport:
    """Scaled residuals of the four KKT blocks at an LP solution."""
    n = lp.n_var
    for name, vec, size in (('x', sol.x, n), ('mu_lo', sol.mu_lo, n), ('mu_hi', sol.mu_hi, n),
                            ('lambda_eq', sol.lambda_eq, lp.n_eq)):
        if vec.shape != (size,):
            raise ValueError(f"solution {name} has shape {vec.shape}, expected ({size},)")

    lo = np.isfinite(lp.lb)
    hi = np.isfinite(lp.ub)
    b_scale = 1.0 + (np.linalg.norm(lp.b_eq, np.inf) if lp.n_eq else 0.0)
    c_scale = 1.0 + np.linalg.norm(lp.c, np.inf)
    obj_scale = 1.0 + abs(float(lp.c @ sol.x))

    eq_residual = np.linalg.norm(lp.A_eq @ sol.x - lp.b_eq, np.inf) / b_scale if lp.n_eq else 0.0
    lo_violation = np.max((lp.lb[lo] - sol.x[lo]) / (1.0 + np.abs(lp.lb[lo])), initial=0.0)
    hi_violation = np.max((sol.x[hi] - lp.ub[hi]) / (1.0 + np.abs(lp.ub[hi])), initial=0.0)
    primal = max(eq_residual, lo_violation, hi_violation, 0.0)

    grad = lp.c - lp.A_eq.T @ sol.lambda_eq - sol.mu_lo + sol.mu_hi
    stationarity = np.linalg.norm(grad, np.inf) / c_scale

    negative = max(np.max(-sol.mu_lo, initial=0.0), np.max(-sol.mu_hi, initial=0.0))
    orphan = max(np.max(np.abs(sol.mu_lo[~lo]), initial=0.0),
                 np.max(np.abs(sol.mu_hi[~hi]), initial=0.0))
    dual = max(negative, orphan) / c_scale

    comp_lo = np.max(np.abs(sol.mu_lo[lo] * (sol.x[lo] - lp.lb[lo])), initial=0.0)
    comp_hi = np.max(np.abs(sol.mu_hi[hi] * (lp.ub[hi] - sol.x[hi])), initial=0.0)
    complementarity = max(comp_lo, comp_hi) / obj_scale

    return ResidualReport(
        residuals={
            'primal_feasibility': float(primal),
            'stationarity': float(stationarity),
            'dual_feasibility': float(dual),
            'complementarity': float(complementarity),
        },
        tol=tol,
    )

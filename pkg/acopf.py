#!/usr/bin/env python3
"""
AC Optimal Power Flow and AC Power Flow

Polar-coordinate AC-OPF solved by a primal-dual log-barrier interior-point
method (slack variables on every inequality, Newton steps on the reduced KKT
system, fraction-to-boundary rule), and a Newton-Raphson AC power flow.

Decision vector of the OPF:  x = [va (bus) | vm (bus) | pg (gen) | qg (gen)]
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Any

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from grid_case import GridCase
from lp_solver import ResidualReport

logger = logging.getLogger(__name__)

PF_TOL = 1e-8
PF_MAXITER = 30
OPF_TOL = 1e-6
OPF_MAXITER = 150
STEP_FRACTION = 0.99995
BARRIER_REDUCTION = 0.1


class PowerFlowDivergence(RuntimeError):
    """Newton power flow did not reach the mismatch tolerance."""

    def __init__(self, message: str, mismatch: float, iterations: int):
        self.mismatch = mismatch
        self.iterations = iterations
        super().__init__(f"{message} (mismatch {mismatch:.3e} after {iterations} iterations)")


class AcOpfFailure(RuntimeError):
    """Interior-point AC-OPF stopped without meeting its convergence criteria."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, float]] = None):
        self.diagnostics = diagnostics or {}
        detail = ', '.join(f"{k}={v:.3e}" for k, v in self.diagnostics.items())
        super().__init__(f"{message} ({detail})" if detail else message)


@dataclass
class AcSolution:
    pg: np.ndarray
    qg: np.ndarray
    vm: np.ndarray
    va: np.ndarray
    pf: np.ndarray
    qf: np.ndarray
    pt: np.ndarray
    qt: np.ndarray
    objective: float
    kkt_residual: float
    pd: np.ndarray = field(repr=False, default=None)
    qd: np.ndarray = field(repr=False, default=None)
    iterations: int = 0

    def stacked(self) -> np.ndarray:
        """Target vector [pg; pf; va]."""
        return np.concatenate([self.pg, self.pf, self.va])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'objective': self.objective,
            'kkt_residual': self.kkt_residual,
            'iterations': self.iterations,
            'pg': self.pg.tolist(), 'qg': self.qg.tolist(),
            'vm': self.vm.tolist(), 'va': self.va.tolist(),
            'pf': self.pf.tolist(), 'qf': self.qf.tolist(),
            'pt': self.pt.tolist(), 'qt': self.qt.tolist(),
        }


# ---------------------------------------------------------------------------
# Network equations and derivatives
# ---------------------------------------------------------------------------

def _voltage(vm: np.ndarray, va: np.ndarray) -> np.ndarray:
    return vm * np.exp(1j * va)


def _branch_incidence(case: GridCase) -> Tuple[sps.csr_matrix, sps.csr_matrix]:
    nl, nb = case.n_branch, case.n_bus
    rows = np.arange(nl)
    cf = sps.csr_matrix((np.ones(nl), (rows, case.from_idx)), shape=(nl, nb))
    ct = sps.csr_matrix((np.ones(nl), (rows, case.to_idx)), shape=(nl, nb))
    return cf, ct


def ac_flow_equations(case: GridCase, vm: np.ndarray, va: np.ndarray):
    """Branch flows (pf, qf, pt, qt) and net nodal injections (p_inj, q_inj).

    The injections include the shunt terms gs*vm^2 and -bs*vm^2, so at a
    power-flow solution p_inj = Cg pg - pd and q_inj = Cg qg - qd per bus.
    """
    vm = np.asarray(vm, dtype=float)
    va = np.asarray(va, dtype=float)
    if np.any(vm <= 0):
        raise ValueError("voltage magnitudes must be positive")
    ybus, yf, yt = case.admittance
    V = _voltage(vm, va)
    sf = V[case.from_idx] * np.conj(yf @ V)
    st = V[case.to_idx] * np.conj(yt @ V)
    sbus = V * np.conj(ybus @ V)
    return sf.real, sf.imag, st.real, st.imag, sbus.real, sbus.imag


def _power_jacobians(C: sps.spmatrix, Y: sps.spmatrix, V: np.ndarray):
    """dS/dva and dS/dvm for S = diag(C V) conj(Y V)."""
    current = Y @ V
    vnorm = V / np.abs(V)
    diag_ic = sps.diags(np.conj(current))
    diag_cv = sps.diags(C @ V)
    ds_dva = 1j * (diag_ic @ C @ sps.diags(V) - diag_cv @ Y.conj() @ sps.diags(np.conj(V)))
    ds_dvm = diag_ic @ C @ sps.diags(vnorm) + diag_cv @ (Y @ sps.diags(vnorm)).conj()
    return sps.csr_matrix(ds_dva), sps.csr_matrix(ds_dvm)


def _re(mat: sps.spmatrix) -> sps.csr_matrix:
    mat = sps.csr_matrix(mat)
    return sps.csr_matrix((mat.data.real, mat.indices, mat.indptr), shape=mat.shape)


def _im(mat: sps.spmatrix) -> sps.csr_matrix:
    mat = sps.csr_matrix(mat)
    return sps.csr_matrix((mat.data.imag, mat.indices, mat.indptr), shape=mat.shape)


def _quadratic_hessian(M: sps.spmatrix, vm: np.ndarray, va: np.ndarray):
    """Hessian blocks (aa, av, vv) of Re(sum_ik V_i M_ik conj(V_k)) in polar coordinates."""
    rot = np.exp(1j * va)
    T = sps.diags(rot) @ sps.csr_matrix(M) @ sps.diags(np.conj(rot))
    P = _re(T)
    Q = -_im(T)
    R = sps.diags(vm) @ P @ sps.diags(vm)
    row_sum = np.asarray(R.sum(axis=1)).ravel()
    col_sum = np.asarray(R.sum(axis=0)).ravel()
    h_aa = R + R.T - sps.diags(row_sum + col_sum)
    h_av = sps.diags(Q @ vm - Q.T @ vm) + sps.diags(vm) @ (Q - Q.T)
    h_vv = P + P.T
    return h_aa, h_av, h_vv


# ---------------------------------------------------------------------------
# Newton power flow
# ---------------------------------------------------------------------------

@dataclass
class PowerFlowSetpoints:
    """Generator dispatch and voltage setpoints for a power-flow run."""
    pg: np.ndarray
    qg: np.ndarray
    vm: np.ndarray

    @classmethod
    def from_case(cls, case: GridCase) -> 'PowerFlowSetpoints':
        vm = np.array([b.vm_set for b in case.buses], dtype=float)
        for gen in case.generators:
            vm[gen.bus] = gen.vg_set
        return cls(pg=np.array([g.pg_set for g in case.generators], dtype=float),
                   qg=np.array([g.qg_set for g in case.generators], dtype=float),
                   vm=vm)

    @classmethod
    def from_solution(cls, sol: AcSolution) -> 'PowerFlowSetpoints':
        return cls(pg=sol.pg.copy(), qg=sol.qg.copy(), vm=sol.vm.copy())


def solve_ac_powerflow(case: GridCase, setpoints: Optional[PowerFlowSetpoints] = None,
                       tol: float = PF_TOL, maxiter: int = PF_MAXITER,
                       pd: Optional[np.ndarray] = None,
                       qd: Optional[np.ndarray] = None) -> AcSolution:
    """Newton-Raphson power flow with the case's PV/PQ classification."""
    setpoints = setpoints or PowerFlowSetpoints.from_case(case)
    pd = case.pd_ref if pd is None else np.asarray(pd, dtype=float)
    qd = case.qd_ref if qd is None else np.asarray(qd, dtype=float)
    ybus = case.admittance[0]
    nb = case.n_bus
    identity = sps.identity(nb, format='csr')

    kinds = np.array([b.kind for b in case.buses])
    ref = case.ref_bus
    pv = np.flatnonzero(kinds == 2)
    pq = np.flatnonzero(kinds == 1)
    pvpq = np.r_[pv, pq]
    n_angle = len(pvpq)
    unknowns = np.r_[pvpq, nb + pq]

    vm = np.ones(nb)
    vm[ref] = setpoints.vm[ref]
    vm[pv] = setpoints.vm[pv]
    va = np.zeros(nb)
    bus_pd, bus_qd = case.bus_loads(pd, qd)
    sbus_sched = case.gen_incidence @ (setpoints.pg + 1j * setpoints.qg) - (bus_pd + 1j * bus_qd)

    iteration = 0
    while True:
        V = _voltage(vm, va)
        mismatch = V * np.conj(ybus @ V) - sbus_sched
        F = np.r_[mismatch[pvpq].real, mismatch[pq].imag]
        norm = float(np.linalg.norm(F, np.inf)) if F.size else 0.0
        if not np.isfinite(norm):
            raise PowerFlowDivergence("power flow diverged", norm, iteration)
        if norm <= tol:
            break
        if iteration >= maxiter:
            raise PowerFlowDivergence("power flow did not converge", norm, iteration)
        iteration += 1

        ds_dva, ds_dvm = _power_jacobians(identity, ybus, V)
        full = sps.bmat([[_re(ds_dva), _re(ds_dvm)], [_im(ds_dva), _im(ds_dvm)]], format='csr')
        J = full[unknowns][:, unknowns].tocsc()
        try:
            dx = spla.splu(J).solve(-F)
        except RuntimeError:
            raise PowerFlowDivergence("singular power-flow Jacobian", norm, iteration)
        va[pvpq] += dx[:n_angle]
        vm[pq] += dx[n_angle:]
        if np.any(vm <= 0):
            raise PowerFlowDivergence("voltage collapse", norm, iteration)

    V = _voltage(vm, va)
    sbus = V * np.conj(ybus @ V)
    pg = setpoints.pg.copy()
    qg = setpoints.qg.copy()
    for bus in np.r_[ref, pv]:
        gens = np.flatnonzero(case.gen_bus == bus)
        if gens.size == 0:
            continue
        q_needed = sbus[bus].imag + bus_qd[bus]
        qg[gens] = q_needed / gens.size
        if bus == ref:
            pg[gens[0]] = sbus[bus].real + bus_pd[bus] - pg[gens[1:]].sum()

    pf, qf, pt, qt, _, _ = ac_flow_equations(case, vm, va)
    logger.debug(f"{case.name}: power flow converged in {iteration} iterations (mismatch {norm:.2e})")
    return AcSolution(pg=pg, qg=qg, vm=vm, va=va, pf=pf, qf=qf, pt=pt, qt=qt,
                      objective=float('nan'), kkt_residual=norm, pd=pd.copy(), qd=qd.copy(),
                      iterations=iteration)


# ---------------------------------------------------------------------------
# Interior-point AC-OPF
# ---------------------------------------------------------------------------

class AcOpfSolver:
    """Primal-dual interior-point AC-OPF for one case and one load vector."""

    def __init__(self, case: GridCase, pd: Optional[np.ndarray] = None,
                 qd: Optional[np.ndarray] = None, tol: float = OPF_TOL,
                 maxiter: int = OPF_MAXITER):
        self.case = case
        self.tol = tol
        self.maxiter = maxiter
        self.pd = case.pd_ref.copy() if pd is None else np.asarray(pd, dtype=float)
        self.qd = case.qd_ref.copy() if qd is None else np.asarray(qd, dtype=float)
        self.bus_pd, self.bus_qd = case.bus_loads(self.pd, self.qd)

        nb, ng, nl = case.n_bus, case.n_gen, case.n_branch
        self.nb, self.ng, self.nl = nb, ng, nl
        self.nx = 2 * nb + 2 * ng
        self.va = slice(0, nb)
        self.vm = slice(nb, 2 * nb)
        self.pg = slice(2 * nb, 2 * nb + ng)
        self.qg = slice(2 * nb + ng, self.nx)

        self.ybus, self.yf, self.yt = case.admittance
        self.cf, self.ct = _branch_incidence(case)
        self.identity = sps.identity(nb, format='csr')
        self.cg = case.gen_incidence

        self.cost_scale = 1.0 / max(1.0, float(np.max(np.abs(case.cost), initial=0.0)))
        self.s_max_sq = np.array([br.s_max for br in case.branches]) ** 2
        self.dva_min = np.array([br.dva_min for br in case.branches])
        self.dva_max = np.array([br.dva_max for br in case.branches])
        self.vm_min = np.array([b.vm_min for b in case.buses])
        self.vm_max = np.array([b.vm_max for b in case.buses])
        self.pg_min = np.array([g.pg_min for g in case.generators])
        self.pg_max = np.array([g.pg_max for g in case.generators])
        self.qg_min = np.array([g.qg_min for g in case.generators])
        self.qg_max = np.array([g.qg_max for g in case.generators])
        self._linear_h = self._linear_constraints()

    def _linear_constraints(self) -> Tuple[sps.csr_matrix, np.ndarray]:
        """Rows A x - u <= 0 for angle differences and variable bounds."""
        nb, ng, nx = self.nb, self.ng, self.nx
        angle = sps.hstack([self.cf - self.ct, sps.csr_matrix((self.nl, nx - nb))], format='csr')

        def select(block: slice, size: int) -> sps.csr_matrix:
            return sps.csr_matrix((np.ones(size), (np.arange(size), np.arange(block.start, block.stop))),
                                  shape=(size, nx))

        vm_sel, pg_sel, qg_sel = select(self.vm, nb), select(self.pg, ng), select(self.qg, ng)
        A = sps.vstack([angle, -angle, vm_sel, -vm_sel, pg_sel, -pg_sel, qg_sel, -qg_sel], format='csr')
        u = np.r_[self.dva_max, -self.dva_min, self.vm_max, -self.vm_min,
                  self.pg_max, -self.pg_min, self.qg_max, -self.qg_min]
        return A, u

    def initial_point(self) -> np.ndarray:
        x = np.zeros(self.nx)
        x[self.vm] = 0.5 * (self.vm_min + self.vm_max)
        x[self.pg] = 0.5 * (self.pg_min + self.pg_max)
        x[self.qg] = 0.5 * (self.qg_min + self.qg_max)
        return x

    def evaluate(self, x: np.ndarray) -> Dict[str, Any]:
        """Objective, constraints and their first derivatives at x."""
        va, vm = x[self.va], x[self.vm]
        V = _voltage(vm, va)
        case = self.case
        cost = self.cost_scale * case.cost
        f = float(cost @ x[self.pg])
        df = np.zeros(self.nx)
        df[self.pg] = cost

        sbus = V * np.conj(self.ybus @ V)
        dsb_dva, dsb_dvm = _power_jacobians(self.identity, self.ybus, V)
        zeros_g = sps.csr_matrix((self.nb, self.ng))
        ref_row = sps.csr_matrix(([1.0], ([0], [case.ref_bus])), shape=(1, self.nx))
        g = np.r_[sbus.real - self.cg @ x[self.pg] + self.bus_pd,
                  sbus.imag - self.cg @ x[self.qg] + self.bus_qd,
                  va[case.ref_bus]]
        Jg = sps.vstack([
            sps.hstack([_re(dsb_dva), _re(dsb_dvm), -self.cg, zeros_g]),
            sps.hstack([_im(dsb_dva), _im(dsb_dvm), zeros_g, -self.cg]),
            ref_row,
        ], format='csr')

        sf = V[case.from_idx] * np.conj(self.yf @ V)
        st = V[case.to_idx] * np.conj(self.yt @ V)
        dsf_dva, dsf_dvm = _power_jacobians(self.cf, self.yf, V)
        dst_dva, dst_dvm = _power_jacobians(self.ct, self.yt, V)
        flow_pad = sps.csr_matrix((self.nl, 2 * self.ng))

        def flow_jacobian(s, ds_dva, ds_dvm):
            dp = sps.hstack([_re(ds_dva), _re(ds_dvm)])
            dq = sps.hstack([_im(ds_dva), _im(ds_dvm)])
            return sps.hstack([2 * (sps.diags(s.real) @ dp + sps.diags(s.imag) @ dq), flow_pad]), dp, dq

        jf, dpf, dqf = flow_jacobian(sf, dsf_dva, dsf_dvm)
        jt, dpt, dqt = flow_jacobian(st, dst_dva, dst_dvm)
        A_lin, u_lin = self._linear_h
        h = np.r_[np.abs(sf) ** 2 - self.s_max_sq, np.abs(st) ** 2 - self.s_max_sq, A_lin @ x - u_lin]
        Jh = sps.vstack([jf, jt, A_lin], format='csr')

        return {'f': f, 'df': df, 'g': g, 'Jg': Jg, 'h': h, 'Jh': Jh, 'V': V,
                'sf': sf, 'st': st, 'dpf': dpf, 'dqf': dqf, 'dpt': dpt, 'dqt': dqt}

    def lagrangian_hessian(self, x: np.ndarray, ev: Dict[str, Any], lam: np.ndarray,
                           mu: np.ndarray) -> sps.csr_matrix:
        """Hessian of lam^T g + mu^T h w.r.t. x (the cost is linear)."""
        nb, nl = self.nb, self.nl
        va, vm = x[self.va], x[self.vm]
        lam_p, lam_q = lam[:nb], lam[nb:2 * nb]
        mu_f, mu_t = mu[:nl], mu[nl:2 * nl]
        sf, st = ev['sf'], ev['st']

        kappa_bus = lam_p - 1j * lam_q
        M = sps.diags(kappa_bus) @ self.ybus.conj()
        kappa_f = 2.0 * mu_f * (sf.real - 1j * sf.imag)
        kappa_t = 2.0 * mu_t * (st.real - 1j * st.imag)
        M = M + self.cf.T @ sps.diags(kappa_f) @ self.yf.conj() + self.ct.T @ sps.diags(kappa_t) @ self.yt.conj()
        h_aa, h_av, h_vv = _quadratic_hessian(M, vm, va)
        H = sps.bmat([[h_aa, h_av], [h_av.T, h_vv]], format='csr')

        for mult, dp, dq in ((mu_f, ev['dpf'], ev['dqf']), (mu_t, ev['dpt'], ev['dqt'])):
            weight = sps.diags(2.0 * mult)
            H = H + dp.T @ weight @ dp + dq.T @ weight @ dq

        pad = sps.csr_matrix((2 * nb, 2 * self.ng))
        return sps.bmat([[H, pad], [pad.T, sps.csr_matrix((2 * self.ng, 2 * self.ng))]], format='csr')

    def _newton_step(self, M: sps.csr_matrix, Jg: sps.csr_matrix, N: np.ndarray,
                     g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        neq = Jg.shape[0]
        rhs = -np.r_[N, g]
        for reg in (0.0, 1e-8, 1e-6):
            K = sps.bmat([[M + reg * sps.identity(self.nx), Jg.T],
                          [Jg, -reg * sps.identity(neq) if reg else None]], format='csc')
            try:
                sol = spla.splu(K).solve(rhs)
            except RuntimeError:
                continue
            if np.all(np.isfinite(sol)):
                return sol[:self.nx], sol[self.nx:]
        K = sps.bmat([[M, Jg.T], [Jg, None]], format='csc')
        sol = spla.lsqr(K, rhs, atol=1e-14, btol=1e-14)[0]
        return sol[:self.nx], sol[self.nx:]

    def solve(self) -> AcSolution:
        tol = self.tol
        x = self.initial_point()
        ev = self.evaluate(x)
        h, g = ev['h'], ev['g']
        niq, neq = h.size, g.size

        gamma = 1.0
        s = np.where(h < -1.0, -h, 1.0)
        z = np.ones(niq)
        lam = np.zeros(neq)
        f0 = ev['f']

        def conditions(x, ev, lam, z, s, f_prev):
            lx = ev['df'] + ev['Jg'].T @ lam + ev['Jh'].T @ z
            x_norm = np.linalg.norm(x, np.inf)
            feas = max(np.linalg.norm(ev['g'], np.inf), np.max(ev['h'], initial=0.0)) / (1.0 + x_norm)
            grad = np.linalg.norm(lx, np.inf) / (1.0 + max(np.linalg.norm(lam, np.inf),
                                                           np.linalg.norm(z, np.inf)))
            comp = (s @ z) / (1.0 + x_norm)
            cost = abs(ev['f'] - f_prev) / (1.0 + abs(f_prev))
            return lx, feas, grad, comp, cost

        lx, feas, grad, comp, cost_change = conditions(x, ev, lam, z, s, f0)
        iteration = 0
        converged = False
        while iteration < self.maxiter:
            iteration += 1
            Lxx = self.lagrangian_hessian(x, ev, lam, z)
            Jh = ev['Jh']
            s_inv = 1.0 / s
            M = Lxx + Jh.T @ sps.diags(z * s_inv) @ Jh
            N = lx + Jh.T @ (s_inv * (z * h + gamma))
            dx, dlam = self._newton_step(M, ev['Jg'], N, g)
            ds = -h - s - Jh @ dx
            dz = -z + s_inv * (gamma - z * ds)

            neg_s, neg_z = ds < 0, dz < 0
            alpha_p = min(STEP_FRACTION * np.min(s[neg_s] / -ds[neg_s]), 1.0) if np.any(neg_s) else 1.0
            alpha_d = min(STEP_FRACTION * np.min(z[neg_z] / -dz[neg_z]), 1.0) if np.any(neg_z) else 1.0
            x = x + alpha_p * dx
            s = s + alpha_p * ds
            lam = lam + alpha_d * dlam
            z = z + alpha_d * dz
            gamma = min(gamma, BARRIER_REDUCTION * (s @ z) / niq) if niq else 0.0

            f_prev = ev['f']
            if np.any(x[self.vm] <= 0) or not np.all(np.isfinite(x)):
                raise AcOpfFailure("interior-point iterate left the domain",
                                   {'iterations': iteration, 'feascond': feas, 'gradcond': grad})
            ev = self.evaluate(x)
            h, g = ev['h'], ev['g']
            lx, feas, grad, comp, cost_change = conditions(x, ev, lam, z, s, f_prev)
            logger.debug(f"acopf it {iteration}: feas {feas:.2e} grad {grad:.2e} "
                         f"comp {comp:.2e} cost {cost_change:.2e} alpha {alpha_p:.3f}/{alpha_d:.3f}")
            if not all(np.isfinite(v) for v in (feas, grad, comp)):
                raise AcOpfFailure("numerical failure in interior-point iteration",
                                   {'iterations': iteration})
            if feas < tol and grad < tol and comp < tol and cost_change < tol:
                converged = True
                break

        if not converged:
            raise AcOpfFailure("AC-OPF iteration limit reached",
                               {'iterations': iteration, 'feascond': feas,
                                'gradcond': grad, 'compcond': comp})

        vm, va = x[self.vm], x[self.va]
        pf, qf, pt, qt, _, _ = ac_flow_equations(self.case, vm, va)
        pg = x[self.pg].copy()
        return AcSolution(
            pg=pg, qg=x[self.qg].copy(), vm=vm.copy(), va=va.copy(),
            pf=pf, qf=qf, pt=pt, qt=qt,
            objective=float(self.case.cost @ pg),
            kkt_residual=float(max(feas, grad, comp)),
            pd=self.pd.copy(), qd=self.qd.copy(), iterations=iteration)


def solve_acopf(case: GridCase, tol: float = OPF_TOL, pd: Optional[np.ndarray] = None,
                qd: Optional[np.ndarray] = None, maxiter: int = OPF_MAXITER) -> AcSolution:
    """Solve the AC-OPF from a flat start; raises AcOpfFailure on non-convergence."""
    return AcOpfSolver(case, pd=pd, qd=qd, tol=tol, maxiter=maxiter).solve()


def check_ac_feasibility(case: GridCase, sol: AcSolution, tol: float) -> ResidualReport:
    """Largest violation of each AC-OPF constraint group at a solution."""
    pd = case.pd_ref if sol.pd is None else sol.pd
    qd = case.qd_ref if sol.qd is None else sol.qd
    bus_pd, bus_qd = case.bus_loads(pd, qd)
    pf, qf, pt, qt, p_inj, q_inj = ac_flow_equations(case, sol.vm, sol.va)

    s_max_sq = np.array([br.s_max for br in case.branches]) ** 2
    dva = sol.va[case.from_idx] - sol.va[case.to_idx]
    dva_min = np.array([br.dva_min for br in case.branches])
    dva_max = np.array([br.dva_max for br in case.branches])
    vm_min = np.array([b.vm_min for b in case.buses])
    vm_max = np.array([b.vm_max for b in case.buses])

    def bound_violation(value, lo, hi):
        return float(np.max(np.r_[lo - value, value - hi, 0.0]))

    gens = case.generators
    residuals = {
        'p_balance': float(np.max(np.abs(p_inj - (case.gen_incidence @ sol.pg - bus_pd)), initial=0.0)),
        'q_balance': float(np.max(np.abs(q_inj - (case.gen_incidence @ sol.qg - bus_qd)), initial=0.0)),
        'ref_angle': float(abs(sol.va[case.ref_bus])),
        'branch_flows': float(np.max(np.abs(np.r_[pf - sol.pf, qf - sol.qf, pt - sol.pt, qt - sol.qt]),
                                     initial=0.0)),
        'thermal_from': float(np.max(np.r_[pf ** 2 + qf ** 2 - s_max_sq, 0.0])),
        'thermal_to': float(np.max(np.r_[pt ** 2 + qt ** 2 - s_max_sq, 0.0])),
        'angle_difference': bound_violation(dva, dva_min, dva_max),
        'vm_bounds': bound_violation(sol.vm, vm_min, vm_max),
        'pg_bounds': bound_violation(sol.pg, np.array([g.pg_min for g in gens]),
                                     np.array([g.pg_max for g in gens])),
        'qg_bounds': bound_violation(sol.qg, np.array([g.qg_min for g in gens]),
                                     np.array([g.qg_max for g in gens])),
    }
    return ResidualReport(residuals=residuals, tol=tol)

"""Dense convex QP solver.

Primal-dual path-following interior point with a Mehrotra predictor-corrector
step. The reduced KKT system is symmetric quasi-definite and is factorized once
per iteration with static regularization on both diagonal blocks, so LPs
(Q = 0) and QPs are handled uniformly. Duals are first-class outputs: the
differentiable layer consumes them.

Standard form:  min 1/2 x'Qx + c'x  s.t.  Ax = b,  Gx <= h.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, NumericalBreakdown

# static quasi-definite regularization applied to both KKT diagonal blocks
KKT_REG = 1e-8

# infeasibility is declared when the primal residual stalls above this while
# the complementarity measure keeps shrinking (see _classify_failure)
PRIMAL_STALL_TOL = 1e-6


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


@dataclass
class QpProblem:
    """min 1/2 x'quad x + lin'x  s.t.  eq_mat x = eq_rhs,  ineq_mat x <= ineq_rhs."""

    quad: np.ndarray
    lin: np.ndarray
    eq_mat: np.ndarray
    eq_rhs: np.ndarray
    ineq_mat: np.ndarray
    ineq_rhs: np.ndarray

    def __post_init__(self):
        self.quad = np.atleast_2d(np.asarray(self.quad, dtype=float))
        self.lin = np.asarray(self.lin, dtype=float).ravel()
        n = self.lin.size
        self.eq_mat = np.asarray(self.eq_mat, dtype=float).reshape(-1, n)
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=float).ravel()
        self.ineq_mat = np.asarray(self.ineq_mat, dtype=float).reshape(-1, n)
        self.ineq_rhs = np.asarray(self.ineq_rhs, dtype=float).ravel()

        if self.quad.shape != (n, n):
            raise DimensionMismatch(f"quad is {self.quad.shape}, expected {(n, n)}")
        if self.eq_rhs.size != self.eq_mat.shape[0]:
            raise DimensionMismatch("eq_rhs length does not match eq_mat rows")
        if self.ineq_rhs.size != self.ineq_mat.shape[0]:
            raise DimensionMismatch("ineq_rhs length does not match ineq_mat rows")
        if n and not np.allclose(self.quad, self.quad.T, atol=1e-12, rtol=0.0):
            raise DimensionMismatch("quad must be symmetric (within 1e-12)")
        self.quad = 0.5 * (self.quad + self.quad.T)

    @property
    def n(self) -> int:
        return self.lin.size

    @property
    def m_eq(self) -> int:
        return self.eq_mat.shape[0]

    @property
    def m_ineq(self) -> int:
        return self.ineq_mat.shape[0]


@dataclass
class QpSolution:
    x: np.ndarray
    lam: np.ndarray  # equality duals
    mu: np.ndarray  # inequality duals, >= 0 at optimality
    objective: float
    status: SolveStatus
    iterations: int


def kkt_residuals(problem: QpProblem, x, lam, mu) -> dict[str, float]:
    """Max-norm KKT residuals of a candidate primal-dual point."""
    r_stat = problem.quad @ x + problem.lin
    if problem.m_eq:
        r_stat += problem.eq_mat.T @ lam
    slack = np.zeros(0)
    if problem.m_ineq:
        r_stat += problem.ineq_mat.T @ mu
        slack = problem.ineq_mat @ x - problem.ineq_rhs
    return {
        "stationarity": float(np.abs(r_stat).max(initial=0.0)),
        "eq": float(np.abs(problem.eq_mat @ x - problem.eq_rhs).max(initial=0.0)),
        "ineq": float(slack.max(initial=0.0)),
        "comp": float(np.abs(mu * slack).max(initial=0.0)),
        "dual_sign": float((-mu).max(initial=0.0)),
    }


def _objective(problem: QpProblem, x: np.ndarray) -> float:
    return float(0.5 * x @ problem.quad @ x + problem.lin @ x)


def dual_objective(problem: QpProblem, x, lam, mu) -> float:
    val = -0.5 * x @ problem.quad @ x
    if problem.m_eq:
        val -= problem.eq_rhs @ lam
    if problem.m_ineq:
        val -= problem.ineq_rhs @ mu
    return float(val)


# ----------------------------------------------------------------- edge cases


def _solve_unconstrained(problem: QpProblem, tol: float) -> QpSolution:
    x, *_ = np.linalg.lstsq(problem.quad, -problem.lin, rcond=None)
    resid = np.abs(problem.quad @ x + problem.lin).max(initial=0.0)
    status = SolveStatus.OPTIMAL if resid <= tol * (1.0 + np.abs(problem.lin).max(initial=0.0)) \
        else SolveStatus.UNBOUNDED
    return QpSolution(x=x, lam=np.zeros(0), mu=np.zeros(0),
                      objective=_objective(problem, x), status=status, iterations=0)


def _solve_equality_only(problem: QpProblem, tol: float) -> QpSolution:
    n, me = problem.n, problem.m_eq
    K = np.zeros((n + me, n + me))
    K[:n, :n] = problem.quad + KKT_REG * np.eye(n)
    K[:n, n:] = problem.eq_mat.T
    K[n:, :n] = problem.eq_mat
    K[n:, n:] = -KKT_REG * np.eye(me)
    rhs = np.concatenate([-problem.lin, problem.eq_rhs])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    x, lam = sol[:n], sol[n:]
    # one refinement pass against the unregularized system
    r = np.concatenate([
        problem.quad @ x + problem.lin + problem.eq_mat.T @ lam,
        problem.eq_mat @ x - problem.eq_rhs,
    ])
    corr, *_ = np.linalg.lstsq(K, -r, rcond=None)
    x, lam = x + corr[:n], lam + corr[n:]

    res = kkt_residuals(problem, x, lam, np.zeros(0))
    scale = 1.0 + max(np.abs(problem.lin).max(initial=0.0),
                      np.abs(problem.eq_rhs).max(initial=0.0))
    if res["eq"] > tol * scale:
        status = SolveStatus.INFEASIBLE
    elif res["stationarity"] > tol * scale:
        status = SolveStatus.UNBOUNDED
    else:
        status = SolveStatus.OPTIMAL
    return QpSolution(x=x, lam=lam, mu=np.zeros(0),
                      objective=_objective(problem, x), status=status, iterations=1)


# -------------------------------------------------------------- main algorithm


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    """Largest alpha in (0, 1] with v + alpha*dv >= 0, given v > 0."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def _classify_failure(best, pobj_hist, dobj_hist, tol, allow_phase1, problem) -> SolveStatus:
    """Decide between INFEASIBLE / UNBOUNDED / MAX_ITER after a failed main loop."""
    res = best["res"]
    obj_ref = 1.0 + abs(pobj_hist[0])
    dobj_ref = 1.0 + abs(dobj_hist[0])
    if pobj_hist[-1] < -1e7 * obj_ref:
        return SolveStatus.UNBOUNDED
    if dobj_hist[-1] > 1e7 * dobj_ref and res["primal"] > PRIMAL_STALL_TOL:
        return SolveStatus.INFEASIBLE
    if res["primal"] > max(PRIMAL_STALL_TOL, tol) and res["comp"] <= 1e-6 * (1.0 + res["comp0"]):
        return SolveStatus.INFEASIBLE
    if allow_phase1 and res["primal"] > max(PRIMAL_STALL_TOL, tol):
        t_star = _phase1_min_violation(problem)
        if t_star is not None:
            if t_star > 1e-7:
                return SolveStatus.INFEASIBLE
    return SolveStatus.MAX_ITER


def _phase1_min_violation(problem: QpProblem) -> float | None:
    """Minimum uniform constraint violation t; > 0 certifies infeasibility.

    min t  s.t.  Gx - t <= h,  |Ax - b| <= t (as two inequalities),  t >= -1.
    Always strictly feasible, so the IPM resolves it reliably.
    """
    n, me, mi = problem.n, problem.m_eq, problem.m_ineq
    ones_mi = np.ones((mi, 1))
    ones_me = np.ones((me, 1))
    G = np.block([
        [problem.ineq_mat, -ones_mi],
        [problem.eq_mat, -ones_me],
        [-problem.eq_mat, -ones_me],
        [np.zeros((1, n)), -np.ones((1, 1))],
    ])
    h = np.concatenate([problem.ineq_rhs, problem.eq_rhs, -problem.eq_rhs, [1.0]])
    c = np.zeros(n + 1)
    c[-1] = 1.0
    aux = QpProblem(quad=np.zeros((n + 1, n + 1)), lin=c,
                    eq_mat=np.zeros((0, n + 1)), eq_rhs=np.zeros(0),
                    ineq_mat=G, ineq_rhs=h)
    sol = solve_qp(aux, tol=1e-9, max_iter=100, _allow_phase1=False)
    if sol.status is not SolveStatus.OPTIMAL:
        return None
    return float(sol.x[-1])


def solve_qp(problem: QpProblem, tol: float = 1e-8, max_iter: int = 200,
             *, _allow_phase1: bool = True) -> QpSolution:
    """Solve a convex QP to the given absolute KKT tolerance.

    At OPTIMAL the returned point satisfies (max-norm, absolute): stationarity,
    primal residuals, per-constraint complementarity products <= tol, and
    mu >= -tol. INFEASIBLE/UNBOUNDED follow from objective divergence, a primal
    stall with vanishing complementarity, or a phase-I certificate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n, me, mi = problem.n, problem.m_eq, problem.m_ineq
    if mi == 0 and me == 0:
        return _solve_unconstrained(problem, tol)
    if mi == 0:
        return _solve_equality_only(problem, tol)

    Q, c = problem.quad, problem.lin
    A, b = problem.eq_mat, problem.eq_rhs
    G, h = problem.ineq_mat, problem.ineq_rhs

    # starting point: regularized equality least squares for x, unit slacks/duals
    K0 = np.zeros((n + me, n + me))
    K0[:n, :n] = Q + np.eye(n)
    K0[:n, n:] = A.T
    K0[n:, :n] = A
    K0[n:, n:] = -KKT_REG * np.eye(me)
    try:
        sol0 = np.linalg.solve(K0, np.concatenate([-c, b]))
    except np.linalg.LinAlgError:
        sol0 = np.zeros(n + me)
    x = sol0[:n]
    lam = np.zeros(me)
    s_raw = h - G @ x
    shift = max(0.0, float(-s_raw.min(initial=0.0)))
    s = s_raw + shift + 1.0
    mu = np.ones(mi)

    pobj_hist: list[float] = []
    dobj_hist: list[float] = []
    best = None
    stall_count = 0
    comp0 = float(np.max(mu * s))
    iters_done = 0

    idx_x = slice(0, n)
    idx_l = slice(n, n + me)
    idx_m = slice(n + me, n + me + mi)

    for it in range(1, max_iter + 1):
        iters_done = it
        r_d = Q @ x + c + G.T @ mu + (A.T @ lam if me else 0.0)
        r_p = A @ x - b if me else np.zeros(0)
        r_i = G @ x + s - h
        comp_vec = mu * s
        gap = float(comp_vec.mean())

        res = {
            "stat": float(np.abs(r_d).max(initial=0.0)),
            "primal": float(max(np.abs(r_p).max(initial=0.0), np.abs(r_i).max(initial=0.0))),
            "comp": float(comp_vec.max(initial=0.0)),
            "comp0": comp0,
        }
        score = max(res["stat"], res["primal"], res["comp"])
        pobj_hist.append(_objective(problem, x))
        dobj_hist.append(dual_objective(problem, x, lam, mu))

        if best is None or score < best["score"] * 0.9:
            if best is None or score < best["score"]:
                best = {"score": score, "x": x.copy(), "lam": lam.copy(),
                        "mu": mu.copy(), "res": res, "it": it}
            stall_count = 0
        else:
            if score < best["score"]:
                best = {"score": score, "x": x.copy(), "lam": lam.copy(),
                        "mu": mu.copy(), "res": res, "it": it}
            stall_count += 1

        if res["stat"] <= tol and res["primal"] <= tol and res["comp"] <= tol:
            return QpSolution(x=x, lam=lam, mu=mu, objective=pobj_hist[-1],
                              status=SolveStatus.OPTIMAL, iterations=it)

        # objective divergence: certify infeasible/unbounded early
        if it >= 6:
            if pobj_hist[-1] < -1e7 * (1.0 + abs(pobj_hist[0])):
                return QpSolution(x=x, lam=lam, mu=mu, objective=pobj_hist[-1],
                                  status=SolveStatus.UNBOUNDED, iterations=it)
            if dobj_hist[-1] > 1e7 * (1.0 + abs(dobj_hist[0])) and res["primal"] > PRIMAL_STALL_TOL:
                return QpSolution(x=x, lam=lam, mu=mu, objective=pobj_hist[-1],
                                  status=SolveStatus.INFEASIBLE, iterations=it)
        if stall_count >= 8:
            break

        # reduced KKT: [Q A' G'; A 0 0; G 0 -diag(s/mu)], quasi-definite regularized
        d = s / np.maximum(mu, 1e-300)
        reg = KKT_REG
        for attempt in range(4):
            K = np.zeros((n + me + mi, n + me + mi))
            K[idx_x, idx_x] = Q + reg * np.eye(n)
            if me:
                K[idx_x, idx_l] = A.T
                K[idx_l, idx_x] = A
                K[idx_l, idx_l] = -reg * np.eye(me)
            K[idx_x, idx_m] = G.T
            K[idx_m, idx_x] = G
            K[idx_m, idx_m] = -np.diag(d + reg)
            try:
                lu = sla.lu_factor(K)
                break
            except (np.linalg.LinAlgError, ValueError):
                reg *= 100.0
        else:
            raise NumericalBreakdown("KKT factorization failed after regularization bumps")

        # predictor (affine scaling) step
        rhs = np.concatenate([-r_d, -r_p, -r_i + s])
        step = sla.lu_solve(lu, rhs)
        dx_a, dl_a, dm_a = step[idx_x], step[idx_l], step[idx_m]
        ds_a = -s - d * dm_a
        alpha_a = min(_max_step(s, ds_a), _max_step(mu, dm_a))
        gap_a = float((s + alpha_a * ds_a) @ (mu + alpha_a * dm_a)) / mi
        sigma = (max(gap_a, 0.0) / max(gap, 1e-300)) ** 3
        sigma = min(max(sigma, 1e-8), 1.0)

        # corrector with Mehrotra second-order term
        r_c = comp_vec + ds_a * dm_a - sigma * gap
        rhs = np.concatenate([-r_d, -r_p, -r_i + r_c / np.maximum(mu, 1e-300)])
        step = sla.lu_solve(lu, rhs)
        dx, dl, dm = step[idx_x], step[idx_l], step[idx_m]
        ds = -(r_c / np.maximum(mu, 1e-300)) - d * dm

        alpha = 0.995 * min(_max_step(s, ds), _max_step(mu, dm))
        alpha = min(alpha, 1.0)
        x = x + alpha * dx
        lam = lam + alpha * dl
        mu = np.maximum(mu + alpha * dm, 1e-300)
        s = np.maximum(s + alpha * ds, 1e-300)

    # main loop ended without meeting tol: report the best iterate honestly
    bx, blam, bmu = best["x"], best["lam"], best["mu"]
    bres = best["res"]
    if bres["stat"] <= tol and bres["primal"] <= tol and bres["comp"] <= tol:
        return QpSolution(x=bx, lam=blam, mu=bmu, objective=_objective(problem, bx),
                          status=SolveStatus.OPTIMAL, iterations=iters_done)
    status = _classify_failure(best, pobj_hist, dobj_hist, tol, _allow_phase1, problem)
    return QpSolution(x=bx, lam=blam, mu=bmu, objective=_objective(problem, bx),
                      status=status, iterations=iters_done)

"""Dispatch problems: economic dispatch, DC-OPF with line statuses, exact DC-OTS.

All three share the QP engine. The DC-OPF builder implements the z-scaled
formulation (susceptances and flow bounds multiplied elementwise by the line
status vector), so a binary z and a relaxed z go through identical code.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleDemand, NoIncumbent
from .network import Network
from .qp import QpProblem, QpSolution, SolveStatus, solve_qp

INTEGRALITY_TOL = 1e-6


class SwitchKind(enum.Enum):
    RELAXED = "relaxed"
    BINARY = "binary"


@dataclass(frozen=True)
class SwitchVector:
    """Per-line statuses: relaxed values in [0, 1] or binary values in {0, 1}."""

    values: np.ndarray
    kind: SwitchKind

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        object.__setattr__(self, "values", v)
        v.flags.writeable = False
        if self.kind is SwitchKind.BINARY:
            if not np.all((v == 0.0) | (v == 1.0)):
                raise ValueError("binary switch vector must contain only 0 and 1")
        else:
            if np.any(v < 0.0) or np.any(v > 1.0):
                raise ValueError("relaxed switch vector must lie in [0, 1]")

    @staticmethod
    def all_closed(n_line: int) -> "SwitchVector":
        return SwitchVector(np.ones(n_line), SwitchKind.BINARY)

    @staticmethod
    def binary(values) -> "SwitchVector":
        return SwitchVector(np.asarray(values, dtype=float), SwitchKind.BINARY)

    @staticmethod
    def relaxed(values) -> "SwitchVector":
        return SwitchVector(np.asarray(values, dtype=float), SwitchKind.RELAXED)


@dataclass
class DispatchSolution:
    p_g: np.ndarray
    theta: np.ndarray
    objective: float  # $/h, includes constant cost terms
    lam: np.ndarray  # equality duals (balance rows then reference row)
    mu: np.ndarray  # inequality duals in canonical row order (see DcopfLayout)
    status: SolveStatus


@dataclass
class OtsSolution:
    z: SwitchVector
    dispatch: DispatchSolution
    objective: float
    nodes_explored: int
    proved_optimal: bool


# ------------------------------------------------------------ economic dispatch


def solve_ed(net: Network, demand: np.ndarray, *, tol: float = 1e-9) -> DispatchSolution:
    """Cost minimization with only the aggregate power balance and gen limits."""
    demand = np.asarray(demand, dtype=float)
    total = float(demand.sum())
    if total < net.gen_min.sum() - 1e-9 or total > net.gen_max.sum() + 1e-9:
        raise InfeasibleDemand(
            f"total demand {total:.6g} p.u. outside aggregate range "
            f"[{net.gen_min.sum():.6g}, {net.gen_max.sum():.6g}]"
        )
    ng = net.n_gen
    problem = QpProblem(
        quad=np.diag(2.0 * net.cost.c2),
        lin=net.cost.c1.copy(),
        eq_mat=np.ones((1, ng)),
        eq_rhs=np.array([total]),
        ineq_mat=np.vstack([np.eye(ng), -np.eye(ng)]),
        ineq_rhs=np.concatenate([net.gen_max, -net.gen_min]),
    )
    sol = solve_qp(problem, tol=tol)
    return DispatchSolution(
        p_g=sol.x.copy(),
        theta=np.zeros(net.n_bus),
        objective=net.cost.evaluate(sol.x),
        lam=sol.lam,
        mu=sol.mu,
        status=sol.status,
    )


# ------------------------------------------------------------------ DC-OPF


@dataclass(frozen=True)
class DcopfLayout:
    """Row/column bookkeeping for the z-scaled DC-OPF in standard form.

    Variables are x = (p_g, theta). Equality rows: one balance row per bus,
    then the reference-angle row. Inequality rows for the built problem:
    flow upper then flow lower for each *active* line (z > 0; lines with z = 0
    contribute nothing and their vacuous rows are omitted), then generator
    upper/lower boxes, then angle upper/lower boxes. Canonical (full-length)
    dual vectors use the same ordering with all n_line flow rows present.
    """

    n_gen: int
    n_bus: int
    n_line: int
    active_lines: np.ndarray

    @property
    def n(self) -> int:
        return self.n_gen + self.n_bus

    @property
    def n_active(self) -> int:
        return int(self.active_lines.size)

    @property
    def m_eq(self) -> int:
        return self.n_bus + 1

    @property
    def m_ineq(self) -> int:
        return 2 * self.n_active + 2 * self.n_gen + 2 * self.n_bus

    @property
    def sl_pg(self) -> slice:
        return slice(0, self.n_gen)

    @property
    def sl_theta(self) -> slice:
        return slice(self.n_gen, self.n_gen + self.n_bus)

    def built_flow_rows(self) -> tuple[slice, slice]:
        a = self.n_active
        return slice(0, a), slice(a, 2 * a)

    def expand_mu(self, mu_built: np.ndarray) -> np.ndarray:
        """Map built-problem inequality duals to canonical full-line-set order."""
        a = self.n_active
        rest = 2 * self.n_gen + 2 * self.n_bus
        out = np.zeros(2 * self.n_line + rest)
        out[self.active_lines] = mu_built[:a]
        out[self.n_line + self.active_lines] = mu_built[a:2 * a]
        out[2 * self.n_line:] = mu_built[2 * a:]
        return out


def dcopf_layout(net: Network, z: SwitchVector) -> DcopfLayout:
    active = np.flatnonzero(z.values > 0.0)
    return DcopfLayout(n_gen=net.n_gen, n_bus=net.n_bus, n_line=net.n_line,
                       active_lines=active)


def build_dcopf(net: Network, demand: np.ndarray, z: SwitchVector,
                *, gen_quad_reg: float = 0.0) -> QpProblem:
    """Standard-form QP for DC-OPF at line statuses z (relaxed or binary).

    With z all ones this is the plain DC-OPF. A line with z_k = 0 drops out of
    the balance equation and its flow rows (which degenerate to 0 <= 0) are
    omitted. gen_quad_reg adds an extra quadratic term on generator outputs;
    the trainer uses it to smooth purely linear costs.
    """
    demand = np.asarray(demand, dtype=float)
    lay = dcopf_layout(net, z)
    ng, nb = net.n_gen, net.n_bus
    n = lay.n
    act = lay.active_lines
    zb = z.values[act] * net.susceptance[act]  # scaled susceptances, active lines
    C_act = net.branch_incidence[act]

    quad = np.zeros((n, n))
    quad[lay.sl_pg, lay.sl_pg] = np.diag(2.0 * (net.cost.c2 + gen_quad_reg))
    lin = np.zeros(n)
    lin[lay.sl_pg] = net.cost.c1

    # balance: M p_g - C' diag(z*b) C theta = demand; then theta_ref = 0
    eq = np.zeros((nb + 1, n))
    eq[:nb, lay.sl_pg] = net.gen_incidence
    eq[:nb, lay.sl_theta] = -(C_act.T * zb) @ C_act
    eq[nb, lay.sl_theta.start + net.ref_bus] = 1.0
    eq_rhs = np.concatenate([demand, [0.0]])

    mi = lay.m_ineq
    G = np.zeros((mi, n))
    h = np.empty(mi)
    a = lay.n_active
    flow_expr = zb[:, None] * C_act  # rows: z_k b_k C_k
    G[0:a, lay.sl_theta] = flow_expr
    h[0:a] = z.values[act] * net.flow_max[act]
    G[a:2 * a, lay.sl_theta] = -flow_expr
    h[a:2 * a] = -z.values[act] * net.flow_min[act]
    r = 2 * a
    G[r:r + ng, lay.sl_pg] = np.eye(ng)
    h[r:r + ng] = net.gen_max
    G[r + ng:r + 2 * ng, lay.sl_pg] = -np.eye(ng)
    h[r + ng:r + 2 * ng] = -net.gen_min
    r += 2 * ng
    G[r:r + nb, lay.sl_theta] = np.eye(nb)
    h[r:r + nb] = net.theta_max
    G[r + nb:r + 2 * nb, lay.sl_theta] = -np.eye(nb)
    h[r + nb:r + 2 * nb] = -net.theta_min

    return QpProblem(quad=quad, lin=lin, eq_mat=eq, eq_rhs=eq_rhs,
                     ineq_mat=G, ineq_rhs=h)


def solve_dcopf(net: Network, demand: np.ndarray, z: SwitchVector,
                *, tol: float = 1e-9, gen_quad_reg: float = 0.0) -> DispatchSolution:
    """Solve DC-OPF at the given line statuses; duals kept in canonical order."""
    problem = build_dcopf(net, demand, z, gen_quad_reg=gen_quad_reg)
    lay = dcopf_layout(net, z)
    sol = solve_qp(problem, tol=tol)
    p_g = sol.x[lay.sl_pg].copy()
    return DispatchSolution(
        p_g=p_g,
        theta=sol.x[lay.sl_theta].copy(),
        objective=net.cost.evaluate(p_g),
        lam=sol.lam,
        mu=lay.expand_mu(sol.mu) if sol.status is SolveStatus.OPTIMAL else sol.mu,
        status=sol.status,
    )


def line_flows(net: Network, theta: np.ndarray, z: SwitchVector | None = None) -> np.ndarray:
    """Per-line flows z*b*(C theta); z defaults to all closed."""
    zv = np.ones(net.n_line) if z is None else z.values
    return zv * net.susceptance * (net.branch_incidence @ theta)


def constraint_residuals(net: Network, demand: np.ndarray, z: SwitchVector,
                         p_g: np.ndarray, theta: np.ndarray) -> dict[str, float]:
    """Independent feasibility check of a (z, dispatch) pair; max violations.

    Evaluates the switching-problem constraints directly from the network
    arrays, without going through the QP solver.
    """
    demand = np.asarray(demand, dtype=float)
    flows = line_flows(net, theta, z)
    injection = net.gen_incidence @ p_g - demand
    balance = injection - net.branch_incidence.T @ flows
    res = {
        "balance": float(np.abs(balance).max(initial=0.0)),
        "flow": float(np.maximum(flows - z.values * net.flow_max,
                                 z.values * net.flow_min - flows).max(initial=0.0)),
        "gen": float(np.maximum(p_g - net.gen_max, net.gen_min - p_g).max(initial=0.0)),
        "angle": float(np.maximum(theta - net.theta_max, net.theta_min - theta).max(initial=0.0)),
        "ref": float(abs(theta[net.ref_bus])),
    }
    res["max_violation"] = max(res.values())
    return res


# ------------------------------------------------------------------ exact OTS


class OtsMode(enum.Enum):
    BRANCH_AND_BOUND = "bb"
    EXHAUSTIVE = "exhaustive"


@dataclass
class OtsBudget:
    time_limit: float | None = None  # seconds
    node_limit: int | None = None
    max_open: int | None = None  # optional cardinality cap on opened lines


def big_m_values(net: Network) -> np.ndarray:
    """Per-line big-M from the endpoint angle boxes: |b_l| * worst angle spread."""
    frm = np.argmax(net.branch_incidence, axis=1)
    to = np.argmin(net.branch_incidence, axis=1)
    spread = np.maximum(net.theta_max[frm] - net.theta_min[to],
                        net.theta_max[to] - net.theta_min[frm])
    return np.abs(net.susceptance) * spread


@dataclass(frozen=True)
class _NodeLayout:
    """Variable/row layout of the big-M relaxation at one search node."""

    n_gen: int
    n_bus: int
    free: np.ndarray  # line indices still relaxed
    closed: np.ndarray  # fixed z = 1
    # x = (p_g, theta, f_free, z_free)

    @property
    def n_free(self) -> int:
        return int(self.free.size)

    @property
    def sl_f(self) -> slice:
        s = self.n_gen + self.n_bus
        return slice(s, s + self.n_free)

    @property
    def sl_z(self) -> slice:
        s = self.n_gen + self.n_bus + self.n_free
        return slice(s, s + self.n_free)


def _build_bigm_relaxation(net: Network, demand: np.ndarray, fixed: np.ndarray,
                           max_open: int | None) -> tuple[QpProblem, _NodeLayout]:
    """Big-M relaxation with z in [0, 1] on unbranched lines.

    Lines fixed closed are substituted back to pure angle form (f = b*C*theta);
    lines fixed open are removed entirely; each free line keeps an explicit
    flow variable f with |f - b*(C theta)| <= M (1 - z) and z-scaled flow bounds.
    """
    lay = _NodeLayout(
        n_gen=net.n_gen, n_bus=net.n_bus,
        free=np.flatnonzero(fixed < 0),
        closed=np.flatnonzero(fixed == 1),
    )
    ng, nb, nf = net.n_gen, net.n_bus, lay.n_free
    n = ng + nb + 2 * nf
    sl_pg = slice(0, ng)
    sl_th = slice(ng, ng + nb)
    M = big_m_values(net)

    quad = np.zeros((n, n))
    quad[sl_pg, sl_pg] = np.diag(2.0 * net.cost.c2)
    lin = np.zeros(n)
    lin[sl_pg] = net.cost.c1

    C_cl = net.branch_incidence[lay.closed]
    b_cl = net.susceptance[lay.closed]
    C_fr = net.branch_incidence[lay.free]
    b_fr = net.susceptance[lay.free]

    eq = np.zeros((nb + 1, n))
    eq[:nb, sl_pg] = net.gen_incidence
    if lay.closed.size:
        eq[:nb, sl_th] = -(C_cl.T * b_cl) @ C_cl
    if nf:
        eq[:nb, lay.sl_f] = -C_fr.T
    eq[nb, sl_th.start + net.ref_bus] = 1.0
    eq_rhs = np.concatenate([np.asarray(demand, dtype=float), [0.0]])

    rows = []
    rhs = []

    def add(row, val):
        rows.append(row)
        rhs.append(val)

    # fixed-closed lines: plain flow box on theta
    for i, k in enumerate(lay.closed):
        row = np.zeros(n)
        row[sl_th] = b_cl[i] * C_cl[i]
        add(row.copy(), net.flow_max[k])
        add(-row, -net.flow_min[k])
    # free lines: big-M link, z-scaled flow box, z box
    for i, k in enumerate(lay.free):
        bCth = np.zeros(n)
        bCth[sl_th] = b_fr[i] * C_fr[i]
        e_f = np.zeros(n)
        e_f[lay.sl_f.start + i] = 1.0
        e_z = np.zeros(n)
        e_z[lay.sl_z.start + i] = 1.0
        add(e_f - bCth + M[k] * e_z, M[k])
        add(-e_f + bCth + M[k] * e_z, M[k])
        add(e_f - net.flow_max[k] * e_z, 0.0)
        add(-e_f + net.flow_min[k] * e_z, 0.0)
        add(e_z.copy(), 1.0)
        add(-e_z, 0.0)
    # generator and angle boxes
    for j in range(ng):
        e = np.zeros(n)
        e[j] = 1.0
        add(e.copy(), net.gen_max[j])
        add(-e, -net.gen_min[j])
    for i in range(nb):
        e = np.zeros(n)
        e[sl_th.start + i] = 1.0
        add(e.copy(), net.theta_max[i])
        add(-e, -net.theta_min[i])
    # optional cardinality cap: (# already open) + sum(1 - z_free) <= max_open
    if max_open is not None and nf:
        n_open_fixed = int(np.sum(fixed == 0))
        row = np.zeros(n)
        row[lay.sl_z] = -1.0
        add(row, float(max_open - n_open_fixed - nf))

    problem = QpProblem(quad=quad, lin=lin, eq_mat=eq, eq_rhs=eq_rhs,
                        ineq_mat=np.array(rows), ineq_rhs=np.array(rhs))
    return problem, lay


@dataclass
class _Node:
    fixed: np.ndarray
    bound: float
    order: int


def _solve_binary(net, demand, z_bits, tol):
    return solve_dcopf(net, demand, SwitchVector.binary(z_bits), tol=tol)


def solve_ots_exact(net: Network, demand: np.ndarray,
                    mode: OtsMode = OtsMode.BRANCH_AND_BOUND,
                    budget: OtsBudget | None = None,
                    *, tol: float = 1e-9) -> OtsSolution:
    """Globally solve the switching problem over binary line statuses.

    EXHAUSTIVE enumerates all 2^n_line topologies (the oracle). BRANCH_AND_BOUND
    searches the big-M relaxation tree: branch on the fractional status closest
    to 0.5 (ties to the lowest index), depth-first diving with best-bound
    selection on backtrack. Returns proved_optimal = False if the budget
    expires first; the incumbent is seeded with the all-closed topology.
    """
    budget = budget or OtsBudget()
    demand = np.asarray(demand, dtype=float)
    t0 = time.perf_counter()

    def out_of_time() -> bool:
        return budget.time_limit is not None and time.perf_counter() - t0 >= budget.time_limit

    seed = solve_dcopf(net, demand, SwitchVector.all_closed(net.n_line), tol=tol)
    if seed.status is not SolveStatus.OPTIMAL:
        raise NoIncumbent(f"all-closed DC-OPF is {seed.status.value}; cannot seed the search")
    best_z = np.ones(net.n_line)
    best_sol = seed
    nodes = 0
    proved = True

    if mode is OtsMode.EXHAUSTIVE:
        L = net.n_line
        for mask in range(2 ** L):
            if out_of_time():
                proved = False
                break
            bits = np.array([(mask >> k) & 1 for k in range(L)], dtype=float)
            if budget.max_open is not None and L - bits.sum() > budget.max_open:
                continue
            if budget.node_limit is not None and nodes >= budget.node_limit:
                proved = False
                break
            sol = _solve_binary(net, demand, bits, tol)
            nodes += 1
            if sol.status is SolveStatus.OPTIMAL and sol.objective < best_sol.objective - 1e-12:
                best_z, best_sol = bits, sol
        return OtsSolution(z=SwitchVector.binary(best_z), dispatch=best_sol,
                           objective=best_sol.objective, nodes_explored=nodes,
                           proved_optimal=proved)

    # ------------------------------------------------------- branch and bound
    inc_obj = best_sol.objective
    prune_eps = 1e-7 * (1.0 + abs(inc_obj))
    root = _Node(fixed=np.full(net.n_line, -1, dtype=np.int8), bound=-np.inf, order=0)
    open_nodes: list[_Node] = [root]
    dive_stack: list[_Node] = []
    next_order = 1

    while open_nodes or dive_stack:
        if out_of_time() or (budget.node_limit is not None and nodes >= budget.node_limit):
            proved = False
            break
        if dive_stack:
            node = dive_stack.pop()
        else:
            i_best = min(range(len(open_nodes)),
                         key=lambda i: (open_nodes[i].bound, open_nodes[i].order))
            node = open_nodes.pop(i_best)
        if node.bound >= inc_obj - prune_eps:
            continue

        problem, lay = _build_bigm_relaxation(net, demand, node.fixed, budget.max_open)
        rel = solve_qp(problem, tol=tol)
        nodes += 1
        if rel.status in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED):
            continue
        if rel.status is SolveStatus.OPTIMAL:
            bound = rel.objective + float(net.cost.c0.sum())
            if bound >= inc_obj - prune_eps:
                continue
            z_rel = rel.x[lay.sl_z]
        else:
            # solver gave no usable bound: keep searching below this node
            bound = node.bound
            z_rel = np.full(lay.n_free, 0.5)

        frac = np.abs(z_rel - np.round(z_rel)) > INTEGRALITY_TOL
        if lay.n_free == 0 or not np.any(frac):
            bits = node.fixed.astype(float)
            if lay.n_free:
                bits[lay.free] = np.round(z_rel)
            sol = _solve_binary(net, demand, bits, tol)
            nodes += 1
            if sol.status is SolveStatus.OPTIMAL and sol.objective < inc_obj - 1e-12:
                inc_obj = sol.objective
                best_z, best_sol = bits, sol
                prune_eps = 1e-7 * (1.0 + abs(inc_obj))
            continue

        cand = lay.free[frac]
        scores = np.abs(z_rel[frac] - 0.5)
        branch_line = int(cand[np.argmin(scores)])
        z_at = float(z_rel[list(lay.free).index(branch_line)])
        first = 1 if z_at >= 0.5 else 0
        for value in (1 - first, first):  # dive child pushed last
            child = _Node(fixed=node.fixed.copy(), bound=bound, order=next_order)
            child.fixed[branch_line] = value
            next_order += 1
            if value == first:
                dive_stack.append(child)
            else:
                open_nodes.append(child)

    return OtsSolution(z=SwitchVector.binary(best_z), dispatch=best_sol,
                       objective=best_sol.objective, nodes_explored=nodes,
                       proved_optimal=proved)

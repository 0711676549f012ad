"""Per-unit algebraic grid model: incidence matrices, susceptances, bounds, costs."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

import numpy as np

from .errors import DuplicateRefBus, NonpositiveThetaBound, NoRefBus, UnsupportedCostModel
from .matpower import RawCase


@dataclass(frozen=True)
class CostFunction:
    """Polynomial generation cost in per-unit power: C(p) = sum c2 p^2 + c1 p + c0 [$ / h]."""

    c2: np.ndarray
    c1: np.ndarray
    c0: np.ndarray

    def evaluate(self, p_g: np.ndarray) -> float:
        return float(np.dot(self.c2, p_g * p_g) + np.dot(self.c1, p_g) + self.c0.sum())

    def marginal(self, p_g: np.ndarray) -> np.ndarray:
        return 2.0 * self.c2 * p_g + self.c1

    @property
    def is_linear(self) -> bool:
        return bool(np.all(self.c2 == 0.0))


@dataclass(frozen=True)
class Network:
    """Immutable per-unit grid model. All power quantities are p.u. on base_mva."""

    n_bus: int
    n_gen: int
    n_line: int
    branch_incidence: np.ndarray  # (n_line, n_bus), +1 at from bus, -1 at to bus
    gen_incidence: np.ndarray  # (n_bus, n_gen), one 1 per column
    susceptance: np.ndarray  # (n_line,), 1/x
    flow_max: np.ndarray  # (n_line,)
    flow_min: np.ndarray  # (n_line,), -flow_max by default
    gen_max: np.ndarray  # (n_gen,)
    gen_min: np.ndarray  # (n_gen,)
    theta_max: np.ndarray  # (n_bus,), rad
    theta_min: np.ndarray  # (n_bus,), rad
    ref_bus: int
    cost: CostFunction
    nominal_demand: np.ndarray  # (n_bus,)
    base_mva: float
    bus_ids: tuple[int, ...]  # original MATPOWER bus numbers, in model order

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v.flags.writeable = False
        for arr in (self.cost.c2, self.cost.c1, self.cost.c0):
            arr.flags.writeable = False


def build_network(case: RawCase, theta_bound: float, *,
                  unlimited_rate_factor: float = 10.0) -> Network:
    """Convert a RawCase to per-unit form with a global symmetric angle bound.

    rate_a = 0 (MATPOWER 'unlimited') maps to unlimited_rate_factor times the
    total nominal demand in MW, so every flow bound is finite.
    """
    if theta_bound <= 0:
        raise NonpositiveThetaBound(f"theta bound must be > 0, got {theta_bound}")

    ref_candidates = [i for i, b in enumerate(case.bus_rows) if b.bus_type == 3]
    if not ref_candidates:
        raise NoRefBus("case has no type-3 (reference) bus")
    if len(ref_candidates) > 1:
        ids = [case.bus_rows[i].bus_id for i in ref_candidates]
        raise DuplicateRefBus(f"multiple type-3 buses: {ids}")
    ref = ref_candidates[0]

    base = case.base_mva
    n_bus = len(case.bus_rows)
    n_gen = len(case.gen_rows)
    n_line = len(case.branch_rows)
    index_of = {b.bus_id: i for i, b in enumerate(case.bus_rows)}

    demand = np.array([b.pd for b in case.bus_rows], dtype=float) / base

    gen_inc = np.zeros((n_bus, n_gen))
    gen_max = np.empty(n_gen)
    gen_min = np.empty(n_gen)
    for j, g in enumerate(case.gen_rows):
        gen_inc[index_of[g.bus_id], j] = 1.0
        gen_max[j] = g.pmax / base
        gen_min[j] = g.pmin / base

    total_pd_mw = float(sum(b.pd for b in case.bus_rows))
    default_cap_mw = unlimited_rate_factor * max(total_pd_mw, base)

    branch_inc = np.zeros((n_line, n_bus))
    susceptance = np.empty(n_line)
    flow_max = np.empty(n_line)
    for k, br in enumerate(case.branch_rows):
        branch_inc[k, index_of[br.from_bus]] = 1.0
        branch_inc[k, index_of[br.to_bus]] = -1.0
        susceptance[k] = 1.0 / br.x
        rate = br.rate_a if br.rate_a > 0 else default_cap_mw
        flow_max[k] = rate / base

    # rescale the MW cost polynomial so that C_pu(p) == C_mw(p * base)
    c2 = np.zeros(n_gen)
    c1 = np.zeros(n_gen)
    c0 = np.zeros(n_gen)
    for j, row in enumerate(case.gencost_rows):
        if row.n_coeff == 3:
            c2[j] = row.coeffs[0] * base * base
            c1[j] = row.coeffs[1] * base
            c0[j] = row.coeffs[2]
        else:
            c1[j] = row.coeffs[0] * base
            c0[j] = row.coeffs[1]
    if np.any(c2 < 0):
        raise UnsupportedCostModel("negative quadratic cost coefficient (non-convex)")

    return Network(
        n_bus=n_bus,
        n_gen=n_gen,
        n_line=n_line,
        branch_incidence=branch_inc,
        gen_incidence=gen_inc,
        susceptance=susceptance,
        flow_max=flow_max,
        flow_min=-flow_max.copy(),
        gen_max=gen_max,
        gen_min=gen_min,
        theta_max=np.full(n_bus, theta_bound),
        theta_min=np.full(n_bus, -theta_bound),
        ref_bus=ref,
        cost=CostFunction(c2=c2, c1=c1, c0=c0),
        nominal_demand=demand,
        base_mva=base,
        bus_ids=tuple(b.bus_id for b in case.bus_rows),
    )


def fingerprint(net: Network) -> str:
    """Stable content hash of a Network, used to bind datasets to their grid."""
    h = hashlib.sha256()
    h.update(f"{net.n_bus},{net.n_gen},{net.n_line},{net.ref_bus},{net.base_mva!r}".encode())
    for arr in (net.branch_incidence, net.gen_incidence, net.susceptance,
                net.flow_max, net.flow_min, net.gen_max, net.gen_min,
                net.theta_max, net.theta_min, net.nominal_demand,
                net.cost.c2, net.cost.c1, net.cost.c0):
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()

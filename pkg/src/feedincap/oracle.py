"""Closed-form reference engine for the expansion question.

The MILP in formulation.py prices its way to the answer; this module gets
there directly. For a fixed expansion factor the feed-in cap has a closed
form per node and hour (curtailment_rule), injections follow, and the
linearized network mapping turns them into flows and voltages that are
checked against their bounds. Because injections are nondecreasing in the
expansion factor, feasibility is an interval whenever the unexpanded grid is
feasible, and the maximum factor falls out of a bisection.

Everything here is vectorized over hours, so full-year studies stay cheap.
The module shares the node aggregation and the network model with the MILP
builder but none of its constraint machinery, which is what makes it a
usable cross-check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .formulation import (
    NodeAggregates,
    PlanResult,
    Scenario,
    build_problem,
    curtailment_rule,
    node_aggregates,
)
from .grid import Grid
from .milp import SolverConfig, solve_lp
from .network import LinearNetworkModel, build_linear_model, evaluate_linear


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str          # thermal | v_high | v_low
    element: str       # line id or bus id
    hour: int          # grid hour index
    amount: float      # MW beyond s_max, or p.u.^2 beyond the band


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    scal: float
    violations: tuple[Violation, ...]   # capped listing, worst kept implicitly
    n_violations: int
    worst_thermal_mw: float
    worst_voltage_pu2: float


@dataclass(frozen=True)
class ScalSearch:
    status: str                          # ok | infeasible_at_zero
    scal_star: float | None
    evaluations: int
    hit_domain_max: bool
    report_zero: FeasibilityReport


@dataclass
class RuleState:
    """One evaluation of the feed-in rule for every resolved hour."""

    hours: tuple[int, ...]
    bus_order: tuple[str, ...]          # all buses, grid order
    scal: float
    available_mw: np.ndarray            # (H, N) eligible availability
    produced_mw: np.ndarray             # (H, N) eligible production after the cap
    curtailed_mw: np.ndarray            # (H, N)
    nonelig_mw: np.ndarray              # (H, N)
    alpha: np.ndarray                   # (H, N) bool, cap active
    injection_p: np.ndarray             # (H, N) net MW, generation positive
    injection_q: np.ndarray             # (H, N) net Mvar


def _rule_state(agg: NodeAggregates, fl: float, scal: float) -> RuleState:
    avail = agg.avail_const + agg.avail_coef * scal
    cap = agg.cap_const + agg.cap_coef * scal
    produced, curtailed = curtailment_rule(avail, cap[None, :], fl, agg.residual)
    alpha = (avail - fl * cap[None, :] - agg.residual) > 0.0
    inj_p = produced + agg.nonelig_prod - agg.demand_p
    inj_q = -agg.demand_q
    return RuleState(
        hours=agg.hours, bus_order=agg.bus_order, scal=scal,
        available_mw=avail, produced_mw=produced, curtailed_mw=curtailed,
        nonelig_mw=agg.nonelig_prod, alpha=alpha,
        injection_p=inj_p, injection_q=inj_q,
    )


def rule_injections(grid: Grid, scenario: Scenario, scal: float,
                    hours: tuple[int, ...] | None = None) -> RuleState:
    """Apply the feed-in rule at a fixed expansion factor; no optimization."""
    if scal < 0:
        raise OracleError("scal must be >= 0")
    agg = node_aggregates(grid, scenario, hours)
    return _rule_state(agg, scenario.fl, scal)


def _network_arrays(state: RuleState, model: LinearNetworkModel,
                    agg: NodeAggregates) -> tuple[np.ndarray, np.ndarray]:
    pos = {bid: i for i, bid in enumerate(agg.bus_order)}
    cols = [pos[bid] for bid in model.bus_order]
    flows, v2 = evaluate_linear(model, state.injection_p[:, cols],
                                state.injection_q[:, cols])
    return np.atleast_2d(flows), np.atleast_2d(v2)


def feasible_at(grid: Grid, scenario: Scenario, scal: float,
                cfg: SolverConfig | None = None, *,
                agg: NodeAggregates | None = None,
                model: LinearNetworkModel | None = None,
                max_listed: int = 50) -> FeasibilityReport:
    """Check every thermal and voltage bound at a fixed expansion factor."""
    cfg = cfg or SolverConfig()
    tol = cfg.feasibility_tol
    agg = agg if agg is not None else node_aggregates(grid, scenario)
    model = model or build_linear_model(grid)
    state = _rule_state(agg, scenario.fl, scal)
    flows, v2 = _network_arrays(state, model, agg)

    s_max = np.array([ln.s_max for ln in grid.lines])
    vmax2 = np.array([grid.bus(b).vmax**2 for b in model.bus_order])
    vmin2 = np.array([grid.bus(b).vmin**2 for b in model.bus_order])

    over_t = np.abs(flows) - s_max[None, :]
    over_hi = v2 - vmax2[None, :]
    over_lo = vmin2[None, :] - v2

    listed: list[Violation] = []
    n_total = 0
    for k, h in enumerate(agg.hours):
        for l in np.nonzero(over_t[k] > tol)[0]:
            n_total += 1
            if len(listed) < max_listed:
                listed.append(Violation("thermal", model.line_order[l], h,
                                        float(over_t[k, l])))
        for i in np.nonzero(over_hi[k] > tol)[0]:
            n_total += 1
            if len(listed) < max_listed:
                listed.append(Violation("v_high", model.bus_order[i], h,
                                        float(over_hi[k, i])))
        for i in np.nonzero(over_lo[k] > tol)[0]:
            n_total += 1
            if len(listed) < max_listed:
                listed.append(Violation("v_low", model.bus_order[i], h,
                                        float(over_lo[k, i])))

    return FeasibilityReport(
        feasible=n_total == 0,
        scal=scal,
        violations=tuple(listed),
        n_violations=n_total,
        worst_thermal_mw=float(np.max(over_t, initial=-np.inf)),
        worst_voltage_pu2=float(max(np.max(over_hi, initial=-np.inf),
                                    np.max(over_lo, initial=-np.inf))),
    )


def max_scal_bisection(grid: Grid, scenario: Scenario,
                       cfg: SolverConfig | None = None, tol: float = 1e-4, *,
                       model: LinearNetworkModel | None = None) -> ScalSearch:
    """Largest expansion factor whose whole prefix [0, s] stays feasible.

    Feasibility is monotone once the unexpanded grid passes (injections only
    grow with scal, and so do exports on every line and every voltage), so a
    plain bisection is exact to tol. A grid already violating a bound with no
    expansion at all gets the infeasible_at_zero marker instead of a number.
    """
    cfg = cfg or SolverConfig()
    agg = node_aggregates(grid, scenario)
    model = model or build_linear_model(grid)
    evals = 0

    def check(s: float) -> FeasibilityReport:
        nonlocal evals
        evals += 1
        return feasible_at(grid, scenario, s, cfg, agg=agg, model=model)

    at_zero = check(0.0)
    if not at_zero.feasible:
        return ScalSearch("infeasible_at_zero", None, evals, False, at_zero)
    if check(cfg.scal_max).feasible:
        return ScalSearch("ok", cfg.scal_max, evals, True, at_zero)
    lo, hi = 0.0, cfg.scal_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if check(mid).feasible:
            lo = mid
        else:
            hi = mid
    return ScalSearch("ok", lo, evals, False, at_zero)


@dataclass(frozen=True)
class EnumerationResult:
    status: str
    scal: float | None
    objective: float | None
    x: np.ndarray | None
    n_assignments: int
    n_feasible: int


def enumerate_alpha(grid: Grid, scenario: Scenario,
                    cfg: SolverConfig | None = None, *,
                    fix_scal: float | None = None,
                    max_free: int = 20) -> EnumerationResult:
    """Brute-force the MILP: one LP per assignment of the free triggers.

    Exponential by design; refuses more than max_free free binaries. The
    pre-fixing inside build_problem already removes every trigger whose
    premise cannot change sign, so only genuinely ambiguous node-hours are
    enumerated.
    """
    inst = build_problem(grid, scenario, cfg, fix_scal=fix_scal)
    lp = inst.lp
    free = [j for j in inst.binaries if lp.lb[j] < lp.ub[j]]
    if len(free) > max_free:
        raise OracleError(
            f"{len(free)} free binaries exceed the enumeration guard of {max_free}")
    base_lb = list(lp.lb)
    base_ub = list(lp.ub)
    best_obj = None
    best_x = None
    n_feas = 0
    n_tried = 0
    for bits in itertools.product((0.0, 1.0), repeat=len(free)):
        n_tried += 1
        for j, v in zip(free, bits):
            lp.lb[j] = v
            lp.ub[j] = v
        sol = solve_lp(lp, inst.cfg)
        if sol.status == "optimal":
            n_feas += 1
            if best_obj is None or sol.objective < best_obj - 1e-12:
                best_obj = sol.objective
                best_x = sol.x.copy()
    lp.lb[:] = base_lb
    lp.ub[:] = base_ub
    if best_obj is None:
        return EnumerationResult("infeasible", None, None, None, n_tried, 0)
    return EnumerationResult("optimal", float(best_x[inst.scal_idx]), best_obj,
                             best_x, n_tried, n_feas)


# ---------------------------------------------------------------------------
# plan assembly without the MILP


def oracle_plan(grid: Grid, scenario: Scenario, cfg: SolverConfig | None = None,
                *, scal: float | None = None, tol: float = 1e-4,
                model: LinearNetworkModel | None = None) -> PlanResult:
    """PlanResult-shaped answer from the closed-form path.

    When scal is omitted it comes from the bisection. Unit-level production
    splits node curtailment pro rata by availability; node totals, flows and
    voltages are the quantities that are actually pinned down.
    """
    cfg = cfg or SolverConfig()
    model = model or build_linear_model(grid)
    status = "optimal"
    if scal is None:
        search = max_scal_bisection(grid, scenario, cfg, tol, model=model)
        if search.status != "ok":
            raise OracleError("no feasible expansion: grid violates bounds at scal=0")
        scal = search.scal_star
    agg = node_aggregates(grid, scenario)
    state = _rule_state(agg, scenario.fl, scal)
    flows, v2 = _network_arrays(state, model, agg)
    hours = agg.hours
    H = len(hours)
    pos = {bid: i for i, bid in enumerate(agg.bus_order)}
    elig_kinds = scenario.eligible_kinds() | {"pv_candidate"}

    production: dict[str, np.ndarray] = {}
    curtail: dict[str, np.ndarray] = {}
    avail: dict[str, np.ndarray] = {}
    for g in grid.gens:
        cf = np.array([g.profile[h] for h in hours])
        if g.kind in elig_kinds:
            base = g.p_max * scal if g.kind == "pv_candidate" else g.p_max
            a_g = base * cf
            i = pos[g.bus]
            node_av = state.available_mw[:, i]
            share = np.divide(a_g, node_av, out=np.zeros(H), where=node_av > 0)
            curtail[g.id] = state.curtailed_mw[:, i] * share
            production[g.id] = a_g - curtail[g.id]
            avail[g.id] = a_g
        else:
            production[g.id] = g.p_max * cf
            curtail[g.id] = np.zeros(H)
            avail[g.id] = g.p_max * cf

    net = state.injection_p.sum(axis=1)           # lossless: slack picks this up
    net_q = state.injection_q.sum(axis=1)
    imports = np.maximum(0.0, -net)
    exports = np.maximum(0.0, net)
    q_imp = np.maximum(0.0, -net_q)
    q_exp = np.maximum(0.0, net_q)
    dh = grid.hour_duration_h
    c = scenario.costs
    objective = float(np.sum(dh * (c.import_eur_mwh * (imports + q_imp)
                                   - c.export_eur_mwh * (exports + q_exp))))

    cols = [pos[bid] for bid in model.bus_order]
    alpha = {}
    for k in range(H):
        for i, bid in enumerate(agg.bus_order):
            if agg.cap_const[i] + agg.cap_coef[i] > 0.0:
                alpha[(k, bid)] = float(state.alpha[k, i])

    return PlanResult(
        status=status,
        engine="oracle",
        scal=float(scal),
        added_capacity_mw=float(scal) * agg.candidate_base_total,
        objective_eur=objective,
        hours=hours,
        hour_duration_h=dh,
        bus_order=model.bus_order,
        line_order=model.line_order,
        production_mw=production,
        curtailment_mw=curtail,
        available_mw=avail,
        alpha=alpha,
        injections_mw=state.injection_p[:, cols],
        flows_mw=flows,
        voltages_pu2=v2,
        imports_mw=imports,
        exports_mw=exports,
        unserved_mwh=0.0,
        surplus_mwh=0.0,
    )


@dataclass
class AnnualResult:
    """Hourly series and totals at a fixed expansion factor over all hours."""

    scal: float
    hour_duration_h: float
    available_mw: np.ndarray      # (H,) eligible + non-eligible availability
    generated_mw: np.ndarray      # (H,) total production
    curtailed_mw: np.ndarray      # (H,)
    net_export_mw: np.ndarray     # (H,) negative means import
    demand_mw: np.ndarray         # (H,)
    violation_hours: int
    available_mwh: float
    generated_mwh: float
    curtailed_mwh: float
    imports_mwh: float
    exports_mwh: float
    demand_mwh: float

    @property
    def curtailed_share(self) -> float:
        return self.curtailed_mwh / self.available_mwh if self.available_mwh > 0 else 0.0


def annual_simulate(grid: Grid, scenario: Scenario, scal: float,
                    cfg: SolverConfig | None = None, *,
                    model: LinearNetworkModel | None = None) -> AnnualResult:
    """Run the feed-in rule over every grid hour at a fixed expansion factor.

    The scenario's hour selection is ignored on purpose: this is the
    full-series accounting pass. The energy identity generated + curtailed =
    available holds by construction of the rule.
    """
    if scal < 0:
        raise OracleError("scal must be >= 0")
    cfg = cfg or SolverConfig()
    model = model or build_linear_model(grid)
    all_hours = tuple(range(grid.hour_count))
    agg = node_aggregates(grid, scenario, all_hours)
    state = _rule_state(agg, scenario.fl, scal)
    flows, v2 = _network_arrays(state, model, agg)

    s_max = np.array([ln.s_max for ln in grid.lines])
    vmax2 = np.array([grid.bus(b).vmax**2 for b in model.bus_order])
    vmin2 = np.array([grid.bus(b).vmin**2 for b in model.bus_order])
    tol = cfg.feasibility_tol
    bad_hour = ((np.abs(flows) - s_max[None, :] > tol).any(axis=1)
                | (v2 - vmax2[None, :] > tol).any(axis=1)
                | (vmin2[None, :] - v2 > tol).any(axis=1))

    avail_total = state.available_mw.sum(axis=1) + state.nonelig_mw.sum(axis=1)
    gen_total = state.produced_mw.sum(axis=1) + state.nonelig_mw.sum(axis=1)
    curt_total = state.curtailed_mw.sum(axis=1)
    demand = agg.demand_p.sum(axis=1)
    net = state.injection_p.sum(axis=1)
    dh = grid.hour_duration_h

    return AnnualResult(
        scal=float(scal),
        hour_duration_h=dh,
        available_mw=avail_total,
        generated_mw=gen_total,
        curtailed_mw=curt_total,
        net_export_mw=net,
        demand_mw=demand,
        violation_hours=int(bad_hour.sum()),
        available_mwh=float(avail_total.sum() * dh),
        generated_mwh=float(gen_total.sum() * dh),
        curtailed_mwh=float(curt_total.sum() * dh),
        imports_mwh=float(np.maximum(0.0, -net).sum() * dh),
        exports_mwh=float(np.maximum(0.0, net).sum() * dh),
        demand_mwh=float(demand.sum() * dh),
    )

"""Builds the expansion-planning MILP and decodes its solutions.

One continuous variable `scal` scales every candidate PV unit uniformly; the
objective prices grid exchange at the slack bus (imports cost, exports earn)
plus heavy penalties on per-node balance slacks, so the optimizer pushes
`scal` up until a network limit binds.

The feed-in cap works per node and hour on the "eligible" units (candidates
under case "a"; candidates plus all existing PV under case "b"): whenever
eligible availability net of concurrent residual demand would exceed FL times
the eligible installed capacity, a binary trigger flips and production is
pinned to exactly that cap plus the residual-demand credit. Residual demand
is what is left of local consumption after non-eligible generation at the
node (wind, hydro, fossil, and under case "a" all existing PV) has covered
its share.

Network limits enter as affine rows in the injections (see network.py), so
the model carries no flow or voltage variables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, PV_KINDS
from .milp import (
    INF,
    LinearProgram,
    MILPSolution,
    MILProblem,
    SolverConfig,
    compute_big_m,
)
from .network import LinearNetworkModel, build_linear_model, evaluate_linear


class FormulationError(ValueError):
    pass


@dataclass(frozen=True)
class Costs:
    """Exchange prices and slack penalties, EUR per MWh."""

    import_eur_mwh: float = 200.0
    export_eur_mwh: float = 200.0
    unserved_eur_mwh: float = 100_000.0   # per-node demand left unserved (P or Q)
    surplus_eur_mwh: float = 200_000.0    # per-node generation that cannot leave

    def scaled(self, k: float) -> "Costs":
        return Costs(self.import_eur_mwh * k, self.export_eur_mwh * k,
                     self.unserved_eur_mwh * k, self.surplus_eur_mwh * k)


@dataclass(frozen=True)
class Scenario:
    """One planning case: feed-in limit, eligibility case, demand scaling.

    case "a": only candidate (new) PV may be curtailed.
    case "b": candidates and all existing PV may be curtailed.
    hours: explicit grid hour indices; None resolves per mode (snapshot picks
    the worst-case hour, annual takes the full series).
    """

    fl: float = 1.0
    case: str = "a"
    demand_multiplier: float = 1.0
    hours: tuple[int, ...] | None = None
    costs: Costs = field(default_factory=Costs)
    mode: str = "snapshot"

    def __post_init__(self) -> None:
        if not 0.0 < self.fl <= 1.0:
            raise FormulationError(f"fl must lie in (0, 1], got {self.fl}")
        if self.case not in ("a", "b"):
            raise FormulationError(f"case must be 'a' or 'b', got {self.case!r}")
        if self.demand_multiplier < 0:
            raise FormulationError("demand_multiplier must be >= 0")
        if self.mode not in ("snapshot", "annual"):
            raise FormulationError(f"mode must be snapshot or annual, got {self.mode!r}")
        if self.hours is not None and len(self.hours) == 0:
            raise FormulationError("hours must be None or non-empty")
        for c in (self.costs.import_eur_mwh, self.costs.export_eur_mwh,
                  self.costs.unserved_eur_mwh, self.costs.surplus_eur_mwh):
            if c < 0:
                raise FormulationError("cost values must be >= 0")

    def eligible_kinds(self) -> frozenset[str]:
        if self.case == "a":
            return frozenset({"pv_candidate"})
        return PV_KINDS


def scenario_to_json(sc: Scenario) -> str:
    doc = {
        "fl": sc.fl,
        "case": sc.case,
        "demand_multiplier": sc.demand_multiplier,
        "hours": None if sc.hours is None else list(sc.hours),
        "mode": sc.mode,
        "costs": {
            "import_eur_mwh": sc.costs.import_eur_mwh,
            "export_eur_mwh": sc.costs.export_eur_mwh,
            "unserved_eur_mwh": sc.costs.unserved_eur_mwh,
            "surplus_eur_mwh": sc.costs.surplus_eur_mwh,
        },
    }
    return json.dumps(doc, indent=1)


def scenario_from_json(text: str | dict) -> Scenario:
    doc = json.loads(text) if isinstance(text, str) else text
    if not isinstance(doc, dict):
        raise FormulationError("scenario document must be an object")
    costs = doc.get("costs", {})
    return Scenario(
        fl=float(doc.get("fl", 1.0)),
        case=str(doc.get("case", "a")),
        demand_multiplier=float(doc.get("demand_multiplier", 1.0)),
        hours=None if doc.get("hours") is None else tuple(int(h) for h in doc["hours"]),
        mode=str(doc.get("mode", "snapshot")),
        costs=Costs(
            import_eur_mwh=float(costs.get("import_eur_mwh", 200.0)),
            export_eur_mwh=float(costs.get("export_eur_mwh", 200.0)),
            unserved_eur_mwh=float(costs.get("unserved_eur_mwh", 100_000.0)),
            surplus_eur_mwh=float(costs.get("surplus_eur_mwh", 200_000.0)),
        ),
    )


# ---------------------------------------------------------------------------
# per-node aggregates


@dataclass(frozen=True)
class NodeAggregates:
    """Hour-by-bus arrays the rule, the oracle and the MILP all share.

    Availability and capacity of eligible PV are affine in scal:
    avail = avail_const + avail_coef * scal, cap = cap_const + cap_coef * scal
    (candidates sit in the coef parts, case-"b" existing PV in the consts).
    residual is the demand left after non-eligible generation at the node.
    """

    hours: tuple[int, ...]
    bus_order: tuple[str, ...]           # every bus, grid order (slack included)
    slack_pos: int
    avail_const: np.ndarray              # (H, N)
    avail_coef: np.ndarray               # (H, N)
    cap_const: np.ndarray                # (N,)
    cap_coef: np.ndarray                 # (N,)
    nonelig_prod: np.ndarray             # (H, N)
    demand_p: np.ndarray                 # (H, N), multiplier applied
    demand_q: np.ndarray                 # (H, N)
    residual: np.ndarray                 # (H, N)
    candidate_base_total: float          # sum of candidate base capacities, MW


def worst_case_hour(grid: Grid, scenario: Scenario) -> int:
    """Hour maximizing total availability minus total demand (scal = 1)."""
    best_h, best_v = 0, -INF
    for h in range(grid.hour_count):
        avail = sum(g.p_max * g.profile[h] for g in grid.gens)
        dem = scenario.demand_multiplier * sum(b.demand_p[h] for b in grid.buses)
        if avail - dem > best_v + 1e-15:
            best_v = avail - dem
            best_h = h
    return best_h


def resolve_hours(grid: Grid, scenario: Scenario) -> tuple[int, ...]:
    if scenario.hours is not None:
        bad = [h for h in scenario.hours if not 0 <= h < grid.hour_count]
        if bad:
            raise FormulationError(f"scenario hours out of range: {bad[:5]}")
        return tuple(scenario.hours)
    if scenario.mode == "snapshot":
        return (worst_case_hour(grid, scenario),)
    return tuple(range(grid.hour_count))


def node_aggregates(grid: Grid, scenario: Scenario,
                    hours: tuple[int, ...] | None = None) -> NodeAggregates:
    hours = hours if hours is not None else resolve_hours(grid, scenario)
    bus_order = tuple(b.id for b in grid.buses)
    pos = {bid: i for i, bid in enumerate(bus_order)}
    H, N = len(hours), len(bus_order)
    elig = scenario.eligible_kinds()

    avail_const = np.zeros((H, N))
    avail_coef = np.zeros((H, N))
    cap_const = np.zeros(N)
    cap_coef = np.zeros(N)
    nonelig = np.zeros((H, N))
    cand_total = 0.0
    for g in grid.gens:
        i = pos[g.bus]
        cf = np.array([g.profile[h] for h in hours])
        if g.kind == "pv_candidate":
            avail_coef[:, i] += g.p_max * cf
            cap_coef[i] += g.p_max
            cand_total += g.p_max
        elif g.kind in elig:
            avail_const[:, i] += g.p_max * cf
            cap_const[i] += g.p_max
        else:
            nonelig[:, i] += g.p_max * cf

    mult = scenario.demand_multiplier
    dp = np.array([[b.demand_p[h] for b in grid.buses] for h in hours]) * mult
    dq = np.array([[b.demand_q[h] for b in grid.buses] for h in hours]) * mult
    residual = np.maximum(0.0, dp - nonelig)
    slack_pos = next(i for i, b in enumerate(grid.buses) if b.is_slack)

    return NodeAggregates(
        hours=tuple(hours),
        bus_order=bus_order,
        slack_pos=slack_pos,
        avail_const=avail_const,
        avail_coef=avail_coef,
        cap_const=cap_const,
        cap_coef=cap_coef,
        nonelig_prod=nonelig,
        demand_p=dp,
        demand_q=dq,
        residual=residual,
        candidate_base_total=cand_total,
    )


def residual_demand(grid: Grid, scenario: Scenario, hour: int, bus_id: str) -> float:
    """Demand at the bus left uncovered by its non-eligible generation, MW."""
    agg = node_aggregates(grid, scenario, (hour,))
    return float(agg.residual[0, agg.bus_order.index(bus_id)])


def curtailment_rule(avail, cap, fl, residual):
    """Closed form of the per-node feed-in cap; numpy-broadcastable.

    Returns (produced, curtailed): curtailment removes exactly the part of
    eligible availability above fl * cap once the local residual demand has
    been credited.
    """
    curtailed = np.maximum(0.0, np.asarray(avail) - fl * np.asarray(cap) - residual)
    return np.asarray(avail) - curtailed, curtailed


# ---------------------------------------------------------------------------
# MILP assembly


@dataclass
class ProblemInstance:
    """The assembled MILP plus every index map needed to decode a solution."""

    grid: Grid
    scenario: Scenario
    cfg: SolverConfig
    hours: tuple[int, ...]
    model: LinearNetworkModel
    agg: NodeAggregates
    lp: LinearProgram
    binaries: tuple[int, ...]
    scal_idx: int
    fix_scal: float | None
    # (hour index into hours, gen id) -> variable index
    p_idx: dict[tuple[int, str], int]
    sp_idx: dict[tuple[int, str], int]
    alpha_idx: dict[tuple[int, str], int]        # (hour index, bus id)
    imp_idx: dict[int, int]
    exp_idx: dict[int, int]
    qimp_idx: dict[int, int]
    qexp_idx: dict[int, int]
    pns_idx: dict[tuple[int, int], int]          # (hour index, bus pos)
    eps_idx: dict[tuple[int, int], int]
    qns_idx: dict[tuple[int, int], int]
    eqs_idx: dict[tuple[int, int], int]
    big_m: dict[tuple[int, str], float]

    @property
    def mip(self) -> MILProblem:
        return MILProblem(self.lp, self.binaries)


def build_problem(grid: Grid, scenario: Scenario, cfg: SolverConfig | None = None,
                  *, fix_scal: float | None = None,
                  model: LinearNetworkModel | None = None) -> ProblemInstance:
    """Assemble the MILP for the resolved scenario hours.

    fix_scal pins the expansion factor (plain operation at today's build-out,
    or `simulate --scal`); otherwise scal ranges over [0, cfg.scal_max].
    Binary triggers are created only where eligible capacity exists, and are
    pre-fixed by interval analysis of the trigger premise over the scal
    domain whenever its sign cannot change.
    """
    cfg = cfg or SolverConfig()
    if scenario.mode == "annual" and fix_scal is None:
        raise FormulationError(
            "annual mode has no monolithic MILP; fix scal or use the oracle decomposition")
    hours = resolve_hours(grid, scenario)
    agg = node_aggregates(grid, scenario, hours)
    model = model or build_linear_model(grid)
    elig_kinds = scenario.eligible_kinds()
    H = len(hours)
    pos = {bid: i for i, bid in enumerate(agg.bus_order)}
    nonslack_pos = [pos[bid] for bid in model.bus_order]
    dh = grid.hour_duration_h
    costs = scenario.costs

    if fix_scal is not None and fix_scal < 0:
        raise FormulationError("fix_scal must be >= 0")
    s_lo = 0.0 if fix_scal is None else float(fix_scal)
    s_hi = cfg.scal_max if fix_scal is None else float(fix_scal)

    # generous but finite exchange bound; keeps odd cost vectors bounded
    avail_hi = float(np.max(np.sum(agg.avail_const + agg.avail_coef * s_hi
                                   + agg.nonelig_prod, axis=1), initial=0.0))
    exch_cap = avail_hi + float(np.max(np.sum(agg.demand_p, axis=1), initial=0.0)) + 1.0

    lp = LinearProgram()
    scal_idx = lp.add_var("scal", s_lo, s_hi, obj=0.0)

    elig_units = [g for g in grid.gens if g.kind in elig_kinds or g.kind == "pv_candidate"]
    elig_at: dict[str, list] = {}
    for g in elig_units:
        elig_at.setdefault(g.bus, []).append(g)
    elig_nodes = [bid for bid in agg.bus_order
                  if agg.cap_const[pos[bid]] + agg.cap_coef[pos[bid]] > 0.0]

    p_idx: dict[tuple[int, str], int] = {}
    sp_idx: dict[tuple[int, str], int] = {}
    alpha_idx: dict[tuple[int, str], int] = {}
    imp_idx: dict[int, int] = {}
    exp_idx: dict[int, int] = {}
    qimp_idx: dict[int, int] = {}
    qexp_idx: dict[int, int] = {}
    pns_idx: dict[tuple[int, int], int] = {}
    eps_idx: dict[tuple[int, int], int] = {}
    qns_idx: dict[tuple[int, int], int] = {}
    eqs_idx: dict[tuple[int, int], int] = {}
    big_m: dict[tuple[int, str], float] = {}
    binaries: list[int] = []

    for k in range(H):
        imp_idx[k] = lp.add_var(f"pimp[{k}]", 0.0, exch_cap, obj=costs.import_eur_mwh * dh)
        exp_idx[k] = lp.add_var(f"pexp[{k}]", 0.0, exch_cap, obj=-costs.export_eur_mwh * dh)
        qimp_idx[k] = lp.add_var(f"qimp[{k}]", 0.0, exch_cap, obj=costs.import_eur_mwh * dh)
        qexp_idx[k] = lp.add_var(f"qexp[{k}]", 0.0, exch_cap, obj=-costs.export_eur_mwh * dh)
        for g in elig_units:
            p_idx[(k, g.id)] = lp.add_var(f"p[{k},{g.id}]", 0.0, INF)
            sp_idx[(k, g.id)] = lp.add_var(f"sp[{k},{g.id}]", 0.0, INF)
        for i, bid in enumerate(agg.bus_order):
            pns_idx[(k, i)] = lp.add_var(f"pns[{k},{bid}]", 0.0,
                                         max(0.0, agg.demand_p[k, i]),
                                         obj=costs.unserved_eur_mwh * dh)
            eps_idx[(k, i)] = lp.add_var(f"eps[{k},{bid}]", 0.0, INF,
                                         obj=costs.surplus_eur_mwh * dh)
            qns_idx[(k, i)] = lp.add_var(f"qns[{k},{bid}]", 0.0,
                                         max(0.0, agg.demand_q[k, i]),
                                         obj=costs.unserved_eur_mwh * dh)
            eqs_idx[(k, i)] = lp.add_var(f"eqs[{k},{bid}]", 0.0, INF,
                                         obj=costs.surplus_eur_mwh * dh)
        for bid in elig_nodes:
            i = pos[bid]
            m_val = compute_big_m(
                float(agg.avail_const[k, i] + agg.avail_coef[k, i] * cfg.scal_max),
                scenario.fl * float(agg.cap_const[i] + agg.cap_coef[i] * cfg.scal_max),
                float(agg.residual[k, i]),
            )
            big_m[(k, bid)] = m_val
            # trigger premise over the admissible scal interval
            slope = float(agg.avail_coef[k, i] - scenario.fl * agg.cap_coef[i])
            inter = float(agg.avail_const[k, i] - scenario.fl * agg.cap_const[i]
                          - agg.residual[k, i])
            p_ends = (inter + slope * s_lo, inter + slope * s_hi)
            if min(p_ends) > 0.0:
                a_lo, a_hi = 1.0, 1.0      # cap always exceeded: trigger on
            elif max(p_ends) < 0.0:
                a_lo, a_hi = 0.0, 0.0      # cap unreachable: trigger off
            else:
                a_lo, a_hi = 0.0, 1.0
            j = lp.add_var(f"curt_on[{k},{bid}]", a_lo, a_hi)
            alpha_idx[(k, bid)] = j
            binaries.append(j)

    eps_mw = cfg.epsilon_mw
    for k in range(H):
        for g in elig_units:
            if g.kind == "pv_candidate":
                lp.add_row({p_idx[(k, g.id)]: 1.0, sp_idx[(k, g.id)]: 1.0,
                            scal_idx: -g.p_max * g.profile[hours[k]]},
                           "==", 0.0, name=f"avail[{k},{g.id}]")
            else:
                lp.add_row({p_idx[(k, g.id)]: 1.0, sp_idx[(k, g.id)]: 1.0},
                           "==", g.p_max * g.profile[hours[k]],
                           name=f"avail[{k},{g.id}]")

        for bid in elig_nodes:
            i = pos[bid]
            m_val = big_m[(k, bid)]
            a_j = alpha_idx[(k, bid)]
            fl = scenario.fl
            cap_c, cap_k = float(agg.cap_const[i]), float(agg.cap_coef[i])
            av_c, av_k = float(agg.avail_const[k, i]), float(agg.avail_coef[k, i])
            res = float(agg.residual[k, i])
            units = elig_at.get(bid, [])
            p_sum = {p_idx[(k, g.id)]: 1.0 for g in units}
            sp_sum = {sp_idx[(k, g.id)]: 1.0 for g in units}

            lp.add_row({scal_idx: av_k - fl * cap_k, a_j: -(m_val + eps_mw)},
                       "<=", fl * cap_c - av_c + res - eps_mw,
                       name=f"trigger[{k},{bid}]")
            row5 = dict(p_sum)
            row5[scal_idx] = row5.get(scal_idx, 0.0) - fl * cap_k
            row5[a_j] = m_val
            lp.add_row(row5, "<=", m_val + fl * cap_c + res, name=f"pin_hi[{k},{bid}]")
            row6 = dict(p_sum)
            row6[scal_idx] = row6.get(scal_idx, 0.0) - fl * cap_k
            row6[a_j] = -m_val
            lp.add_row(row6, ">=", -m_val + fl * cap_c + res, name=f"pin_lo[{k},{bid}]")
            row7 = dict(sp_sum)
            row7[a_j] = -m_val
            lp.add_row(row7, "<=", 0.0, name=f"spill[{k},{bid}]")

        # system balance, lossless
        bal_p = {p_idx[(k, g.id)]: 1.0 for g in elig_units}
        bal_p[imp_idx[k]] = 1.0
        bal_p[exp_idx[k]] = -1.0
        for i in range(len(agg.bus_order)):
            bal_p[pns_idx[(k, i)]] = 1.0
            bal_p[eps_idx[(k, i)]] = -1.0
        lp.add_row(bal_p, "==",
                   float(np.sum(agg.demand_p[k]) - np.sum(agg.nonelig_prod[k])),
                   name=f"balance_p[{k}]")
        bal_q = {qimp_idx[k]: 1.0, qexp_idx[k]: -1.0}
        for i in range(len(agg.bus_order)):
            bal_q[qns_idx[(k, i)]] = 1.0
            bal_q[eqs_idx[(k, i)]] = -1.0
        lp.add_row(bal_q, "==", float(np.sum(agg.demand_q[k])), name=f"balance_q[{k}]")

        # network rows: injections are affine in the hour's variables
        inj_const = agg.nonelig_prod[k] - agg.demand_p[k]

        def p_injection_terms(j_pos: int) -> dict[int, float]:
            bid = agg.bus_order[j_pos]
            terms = {p_idx[(k, g.id)]: 1.0 for g in elig_at.get(bid, [])}
            terms[pns_idx[(k, j_pos)]] = 1.0
            terms[eps_idx[(k, j_pos)]] = -1.0
            return terms

        for l, line in enumerate(grid.lines):
            coeffs: dict[int, float] = {}
            const = 0.0
            for nsl, j_pos in enumerate(nonslack_pos):
                a = model.flow_map[l, nsl]
                if a == 0.0:
                    continue
                const += a * inj_const[j_pos]
                for var, c in p_injection_terms(j_pos).items():
                    coeffs[var] = coeffs.get(var, 0.0) + a * c
            lp.add_row(coeffs, "<=", line.s_max - const, name=f"thermal_hi[{k},{line.id}]")
            lp.add_row(coeffs, ">=", -line.s_max - const, name=f"thermal_lo[{k},{line.id}]")

        vs2 = model.slack_voltage**2
        for nsl_i, bid in enumerate(model.bus_order):
            bus = grid.bus(bid)
            coeffs = {}
            const = vs2
            for nsl_j, j_pos in enumerate(nonslack_pos):
                kp = model.voltage_map_p[nsl_i, nsl_j]
                kq = model.voltage_map_q[nsl_i, nsl_j]
                if kp != 0.0:
                    const += kp * inj_const[j_pos]
                    for var, c in p_injection_terms(j_pos).items():
                        coeffs[var] = coeffs.get(var, 0.0) + kp * c
                if kq != 0.0:
                    const += kq * (-agg.demand_q[k, j_pos])
                    coeffs[qns_idx[(k, j_pos)]] = coeffs.get(qns_idx[(k, j_pos)], 0.0) + kq
                    coeffs[eqs_idx[(k, j_pos)]] = coeffs.get(eqs_idx[(k, j_pos)], 0.0) - kq
            lp.add_row(coeffs, "<=", bus.vmax**2 - const, name=f"v_hi[{k},{bid}]")
            lp.add_row(coeffs, ">=", bus.vmin**2 - const, name=f"v_lo[{k},{bid}]")

    return ProblemInstance(
        grid=grid, scenario=scenario, cfg=cfg, hours=hours, model=model, agg=agg,
        lp=lp, binaries=tuple(binaries), scal_idx=scal_idx, fix_scal=fix_scal,
        p_idx=p_idx, sp_idx=sp_idx, alpha_idx=alpha_idx,
        imp_idx=imp_idx, exp_idx=exp_idx, qimp_idx=qimp_idx, qexp_idx=qexp_idx,
        pns_idx=pns_idx, eps_idx=eps_idx, qns_idx=qns_idx, eqs_idx=eqs_idx,
        big_m=big_m,
    )


# ---------------------------------------------------------------------------
# solution decoding


@dataclass
class PlanResult:
    status: str
    engine: str
    scal: float
    added_capacity_mw: float
    objective_eur: float | None
    hours: tuple[int, ...]
    hour_duration_h: float
    bus_order: tuple[str, ...]          # non-slack, network order
    line_order: tuple[str, ...]
    production_mw: dict[str, np.ndarray]    # gen id -> (H,)
    curtailment_mw: dict[str, np.ndarray]
    available_mw: dict[str, np.ndarray]
    alpha: dict[tuple[int, str], float]
    injections_mw: np.ndarray           # (H, N) non-slack
    flows_mw: np.ndarray                # (H, L)
    voltages_pu2: np.ndarray            # (H, N) squared p.u.
    imports_mw: np.ndarray              # (H,)
    exports_mw: np.ndarray
    unserved_mwh: float
    surplus_mwh: float

    @property
    def slack_activity(self) -> float:
        return self.unserved_mwh + self.surplus_mwh

    @property
    def net_export_mwh(self) -> float:
        return float((self.exports_mw - self.imports_mw).sum() * self.hour_duration_h)


def extract_solution(instance: ProblemInstance, sol: MILPSolution) -> PlanResult:
    """Decode a MILP solution and cross-check the embedded network rows.

    Flows and voltages are recomputed from the decoded injections through
    evaluate_linear and must agree with the LP's own constraint activities to
    1e-6; a mismatch means the builder and the physics disagree and raises.
    """
    grid, agg, model = instance.grid, instance.agg, instance.model
    if sol.status != "optimal" or sol.x is None:
        nan = float("nan")
        empty = np.zeros((0, 0))
        return PlanResult(
            status=sol.status, engine="milp", scal=nan, added_capacity_mw=nan,
            objective_eur=None, hours=instance.hours,
            hour_duration_h=grid.hour_duration_h, bus_order=model.bus_order,
            line_order=model.line_order, production_mw={}, curtailment_mw={},
            available_mw={}, alpha={}, injections_mw=empty, flows_mw=empty,
            voltages_pu2=empty, imports_mw=np.zeros(0), exports_mw=np.zeros(0),
            unserved_mwh=0.0, surplus_mwh=0.0)
    x = sol.x
    hours = instance.hours
    H = len(hours)
    pos = {bid: i for i, bid in enumerate(agg.bus_order)}
    scal = float(x[instance.scal_idx])

    production: dict[str, np.ndarray] = {}
    curtail: dict[str, np.ndarray] = {}
    avail: dict[str, np.ndarray] = {}
    elig_ids = set()
    for g in grid.gens:
        cf = np.array([g.profile[h] for h in hours])
        if (0, g.id) in instance.p_idx:
            elig_ids.add(g.id)
            production[g.id] = np.array([x[instance.p_idx[(k, g.id)]] for k in range(H)])
            curtail[g.id] = np.array([x[instance.sp_idx[(k, g.id)]] for k in range(H)])
            base = g.p_max * scal if g.kind == "pv_candidate" else g.p_max
            avail[g.id] = base * cf
        else:
            production[g.id] = g.p_max * cf
            curtail[g.id] = np.zeros(H)
            avail[g.id] = g.p_max * cf

    inj = np.zeros((H, len(model.bus_order)))
    inj_q = np.zeros_like(inj)
    for nsl, bid in enumerate(model.bus_order):
        i = pos[bid]
        gen_sum = np.zeros(H)
        for g in grid.gens:
            if g.bus == bid:
                gen_sum += production[g.id]
        for k in range(H):
            gen_sum[k] += x[instance.pns_idx[(k, i)]] - x[instance.eps_idx[(k, i)]]
            inj_q[k, nsl] = (x[instance.qns_idx[(k, i)]] - x[instance.eqs_idx[(k, i)]]
                             - agg.demand_q[k, i])
        inj[:, nsl] = gen_sum - agg.demand_p[:, i]

    flows, v2 = evaluate_linear(model, inj, inj_q)
    flows = np.atleast_2d(flows)
    v2 = np.atleast_2d(v2)

    # agreement check against the LP's own thermal/voltage row activities
    acts = instance.lp.activities(x)
    names = {row.name: idx for idx, row in enumerate(instance.lp.rows)}
    worst = 0.0
    for k in range(H):
        for l, line in enumerate(grid.lines):
            row = instance.lp.rows[names[f"thermal_hi[{k},{line.id}]"]]
            const = line.s_max - row.rhs
            worst = max(worst, abs(acts[names[row.name]] + const - flows[k, l]))
        for nsl, bid in enumerate(model.bus_order):
            row = instance.lp.rows[names[f"v_hi[{k},{bid}]"]]
            const = grid.bus(bid).vmax**2 - row.rhs
            worst = max(worst, abs(acts[names[row.name]] + const - v2[k, nsl]))
    if worst > 1e-6:
        raise FormulationError(
            f"decoded network state deviates from LP rows by {worst:.3e}")

    dh = grid.hour_duration_h
    unserved = (sum(x[j] for j in instance.pns_idx.values())
                + sum(x[j] for j in instance.qns_idx.values())) * dh
    surplus = (sum(x[j] for j in instance.eps_idx.values())
               + sum(x[j] for j in instance.eqs_idx.values())) * dh

    return PlanResult(
        status="optimal",
        engine="milp",
        scal=scal,
        added_capacity_mw=scal * agg.candidate_base_total,
        objective_eur=sol.objective,
        hours=hours,
        hour_duration_h=dh,
        bus_order=model.bus_order,
        line_order=model.line_order,
        production_mw=production,
        curtailment_mw=curtail,
        available_mw=avail,
        alpha={key: float(x[j]) for key, j in instance.alpha_idx.items()},
        injections_mw=inj,
        flows_mw=flows,
        voltages_pu2=v2,
        imports_mw=np.array([x[instance.imp_idx[k]] for k in range(H)]),
        exports_mw=np.array([x[instance.exp_idx[k]] for k in range(H)]),
        unserved_mwh=float(unserved),
        surplus_mwh=float(surplus),
    )

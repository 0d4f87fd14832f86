"""Scenario sweeps, energy accounting, bottleneck ranking, report files.

A sweep runs the expansion question over a grid of cells (feed-in limit x
eligibility case x demand multiplier) and collects per-cell capacity and
energy results plus the binding network element. Reports are written as a
flat CSV, a full JSON document, and an SVG bar chart; all three are
deterministic byte for byte for identical inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .formulation import (
    Costs,
    PlanResult,
    Scenario,
    build_problem,
    extract_solution,
)
from .grid import Grid
from .milp import SolverConfig, solve_milp
from .oracle import AnnualResult, annual_simulate, max_scal_bisection, oracle_plan


class AnalysisError(ValueError):
    pass


CSV_COLUMNS = ("fl", "case", "demand_multiplier", "scal_star",
               "added_capacity_mw", "generated_mwh", "curtailed_mwh",
               "curtailed_share", "binding_elements")

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SweepSpec:
    fl_values: tuple[float, ...] = (1.0, 0.9, 0.8, 0.7)
    cases: tuple[str, ...] = ("a", "b")
    demand_multipliers: tuple[float, ...] = (1.0, 1.1, 1.2)
    mode: str = "snapshot"
    engine: str = "oracle"              # oracle | milp | both
    bisection_tol: float = 1e-4
    costs: Costs = field(default_factory=Costs)

    def __post_init__(self) -> None:
        if self.engine not in ("oracle", "milp", "both"):
            raise AnalysisError(f"unknown engine {self.engine!r}")
        if self.mode not in ("snapshot", "annual"):
            raise AnalysisError(f"unknown mode {self.mode!r}")
        if self.mode == "annual" and self.engine != "oracle":
            raise AnalysisError("annual sweeps decompose hour by hour; only the "
                                "oracle engine supports them")

    def scenarios(self):
        for fl in self.fl_values:
            for case in self.cases:
                for mult in self.demand_multipliers:
                    yield Scenario(fl=fl, case=case, demand_multiplier=mult,
                                   costs=self.costs, mode=self.mode)


# ---------------------------------------------------------------------------
# energy accounting


class EnergyBalanceError(AssertionError):
    pass


@dataclass(frozen=True)
class EnergyAccount:
    """Totals in MWh with the conservation identity enforced on creation."""

    available_mwh: float
    generated_mwh: float
    curtailed_mwh: float
    imports_mwh: float
    exports_mwh: float
    demand_mwh: float | None = None

    def __post_init__(self) -> None:
        gap = abs(self.generated_mwh + self.curtailed_mwh - self.available_mwh)
        if gap > 1e-9 * max(1.0, abs(self.available_mwh)):
            raise EnergyBalanceError(
                f"generated + curtailed != available (gap {gap:.3e} MWh)")

    @property
    def curtailed_share(self) -> float:
        if self.available_mwh <= 0:
            return 0.0
        return self.curtailed_mwh / self.available_mwh


def energy_account(plan: PlanResult) -> EnergyAccount:
    dh = plan.hour_duration_h
    avail = sum(float(v.sum()) for v in plan.available_mw.values()) * dh
    gen = sum(float(v.sum()) for v in plan.production_mw.values()) * dh
    curt = sum(float(v.sum()) for v in plan.curtailment_mw.values()) * dh
    return EnergyAccount(
        available_mwh=avail, generated_mwh=gen, curtailed_mwh=curt,
        imports_mwh=float(plan.imports_mw.sum()) * dh,
        exports_mwh=float(plan.exports_mw.sum()) * dh,
    )


def annual_account(sim: AnnualResult) -> EnergyAccount:
    return EnergyAccount(
        available_mwh=sim.available_mwh,
        generated_mwh=sim.generated_mwh,
        curtailed_mwh=sim.curtailed_mwh,
        imports_mwh=sim.imports_mwh,
        exports_mwh=sim.exports_mwh,
        demand_mwh=sim.demand_mwh,
    )


# ---------------------------------------------------------------------------
# bottlenecks

THERMAL_BINDING_FRAC = 1.0 - 1e-3      # |flow| at or above this share binds
VOLTAGE_BINDING_PU2 = 1e-4             # squared-voltage distance that binds


@dataclass(frozen=True)
class BindingElement:
    kind: str          # thermal | v_high | v_low
    element: str
    hour: int
    margin: float      # distance left to the bound (can be ~0 or negative)

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.element}"


@dataclass(frozen=True)
class BindingReport:
    binding: tuple[BindingElement, ...]
    min_thermal_headroom_mw: float
    min_voltage_headroom_pu2: float
    worst_line: str
    worst_bus: str

    def labels(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for b in self.binding:
            seen.setdefault(b.label)
        return tuple(seen)


def find_bottlenecks(plan: PlanResult, grid: Grid) -> BindingReport:
    """Which elements stop further expansion at the plan's operating point."""
    s_max = np.array([ln.s_max for ln in grid.lines])
    vmax2 = np.array([grid.bus(b).vmax**2 for b in plan.bus_order])
    vmin2 = np.array([grid.bus(b).vmin**2 for b in plan.bus_order])
    flows = np.atleast_2d(plan.flows_mw)
    v2 = np.atleast_2d(plan.voltages_pu2)

    t_head = s_max[None, :] - np.abs(flows)
    hi_head = vmax2[None, :] - v2
    lo_head = v2 - vmin2[None, :]

    binding: list[BindingElement] = []
    for k, h in enumerate(plan.hours):
        for l in np.nonzero(np.abs(flows[k]) >= THERMAL_BINDING_FRAC * s_max)[0]:
            binding.append(BindingElement("thermal", plan.line_order[l], h,
                                          float(t_head[k, l])))
        for i in np.nonzero(hi_head[k] <= VOLTAGE_BINDING_PU2)[0]:
            binding.append(BindingElement("v_high", plan.bus_order[i], h,
                                          float(hi_head[k, i])))
        for i in np.nonzero(lo_head[k] <= VOLTAGE_BINDING_PU2)[0]:
            binding.append(BindingElement("v_low", plan.bus_order[i], h,
                                          float(lo_head[k, i])))

    worst_l = int(np.unravel_index(np.argmin(t_head), t_head.shape)[1])
    v_head = np.minimum(hi_head, lo_head)
    worst_b = int(np.unravel_index(np.argmin(v_head), v_head.shape)[1])
    return BindingReport(
        binding=tuple(binding),
        min_thermal_headroom_mw=float(t_head.min()),
        min_voltage_headroom_pu2=float(v_head.min()),
        worst_line=plan.line_order[worst_l],
        worst_bus=plan.bus_order[worst_b],
    )


# ---------------------------------------------------------------------------
# the sweep itself


@dataclass
class CellResult:
    fl: float
    case: str
    demand_multiplier: float
    status: str                         # ok | infeasible_at_zero | error
    engine: str
    scal_star: float | None = None
    added_capacity_mw: float | None = None
    account: EnergyAccount | None = None
    binding: BindingReport | None = None
    oracle_scal: float | None = None
    milp_scal: float | None = None
    deviation: float | None = None
    error: str | None = None

    @property
    def key(self) -> tuple:
        return (-self.fl, self.case, self.demand_multiplier)


@dataclass
class SweepResult:
    spec: SweepSpec
    cells: list[CellResult]

    @property
    def failed_cells(self) -> list[CellResult]:
        return [c for c in self.cells if c.status == "error"]


def _run_cell(grid: Grid, scenario: Scenario, spec: SweepSpec,
              cfg: SolverConfig, model) -> CellResult:
    cell = CellResult(fl=scenario.fl, case=scenario.case,
                      demand_multiplier=scenario.demand_multiplier,
                      status="ok", engine=spec.engine)
    if spec.engine in ("oracle", "both"):
        search = max_scal_bisection(grid, scenario, cfg, spec.bisection_tol,
                                    model=model)
        if search.status != "ok":
            cell.status = "infeasible_at_zero"
            return cell
        cell.oracle_scal = search.scal_star
    if spec.engine in ("milp", "both"):
        inst = build_problem(grid, scenario, cfg, model=model)
        sol = solve_milp(inst.mip, cfg)
        if sol.status != "optimal":
            cell.status = "error"
            cell.error = f"milp returned {sol.status}"
            return cell
        plan_m = extract_solution(inst, sol)
        if plan_m.slack_activity > 1e-6:
            cell.status = "infeasible_at_zero"
            return cell
        cell.milp_scal = plan_m.scal
    if spec.engine == "both":
        cell.deviation = abs(cell.oracle_scal - cell.milp_scal)

    # reporting quantities come from the closed-form path at the agreed
    # factor; for the pure milp engine that factor is the milp's own
    scal = cell.milp_scal if spec.engine == "milp" else cell.oracle_scal
    cell.scal_star = scal
    if scenario.mode == "annual":
        sim = annual_simulate(grid, scenario, scal, cfg, model=model)
        cell.account = annual_account(sim)
        plan = oracle_plan(grid, scenario, cfg, scal=scal, model=model)
    else:
        plan = oracle_plan(grid, scenario, cfg, scal=scal, model=model)
        cell.account = energy_account(plan)
    cell.added_capacity_mw = plan.added_capacity_mw
    cell.binding = find_bottlenecks(plan, grid)
    return cell


def run_sweep(grid: Grid, spec: SweepSpec | None = None,
              cfg: SolverConfig | None = None) -> SweepResult:
    """Evaluate every sweep cell; cell failures are captured, not raised."""
    from .network import build_linear_model

    spec = spec or SweepSpec()
    cfg = cfg or SolverConfig()
    model = build_linear_model(grid)
    cells = []
    for scenario in spec.scenarios():
        try:
            cells.append(_run_cell(grid, scenario, spec, cfg, model))
        except Exception as exc:                      # cell isolation
            cells.append(CellResult(
                fl=scenario.fl, case=scenario.case,
                demand_multiplier=scenario.demand_multiplier,
                status="error", engine=spec.engine, error=str(exc)))
    cells.sort(key=lambda c: c.key)
    return SweepResult(spec=spec, cells=cells)


def check_monotonicity(result: SweepResult, slack: float | None = None) -> list[str]:
    """Orderings every sweep must satisfy; returns human-readable violations.

    Larger feed-in limits can only shrink the answer, added demand can only
    grow it, and widening eligibility from case a to case b can only help.
    Infeasible-at-zero cells rank below every feasible value.
    """
    if slack is None:
        slack = 2.0 * result.spec.bisection_tol + 1e-9
    val: dict[tuple, float] = {}
    for c in result.cells:
        if c.status == "error":
            continue
        val[(c.fl, c.case, c.demand_multiplier)] = (
            -1.0 if c.status == "infeasible_at_zero" else c.scal_star)
    bad = []
    for (fl, case, mult), s in val.items():
        for (fl2, case2, mult2), s2 in val.items():
            if case == case2 and mult == mult2 and fl2 > fl + 1e-12:
                if s2 > s + slack:
                    bad.append(f"fl {fl2} beats fl {fl} at case {case}, x{mult}: "
                               f"{s2:.6f} > {s:.6f}")
            if fl == fl2 and case == case2 and mult2 > mult + 1e-12:
                if s2 < s - slack:
                    bad.append(f"demand x{mult2} under x{mult} at fl {fl}, case {case}: "
                               f"{s2:.6f} < {s:.6f}")
            if fl == fl2 and mult == mult2 and case == "a" and case2 == "b":
                if s2 < s - slack:
                    bad.append(f"case b under case a at fl {fl}, x{mult}: "
                               f"{s2:.6f} < {s:.6f}")
    return bad


# ---------------------------------------------------------------------------
# report files


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(result: SweepResult, outdir, formats=("csv", "json", "svg"),
                stem: str = "sweep") -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        p = outdir / f"{stem}.csv"
        lines = [",".join(CSV_COLUMNS)]
        for c in result.cells:
            acc = c.account
            lines.append(",".join([
                _csv_cell(c.fl), c.case, _csv_cell(c.demand_multiplier),
                _csv_cell(c.scal_star), _csv_cell(c.added_capacity_mw),
                _csv_cell(acc.generated_mwh if acc else None),
                _csv_cell(acc.curtailed_mwh if acc else None),
                _csv_cell(acc.curtailed_share if acc else None),
                ";".join(c.binding.labels()) if c.binding else c.status,
            ]))
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(p)
    if "json" in formats:
        p = outdir / f"{stem}.json"
        doc = {
            "schema_version": SCHEMA_VERSION,
            "engine": result.spec.engine,
            "mode": result.spec.mode,
            "fl_values": list(result.spec.fl_values),
            "cases": list(result.spec.cases),
            "demand_multipliers": list(result.spec.demand_multipliers),
            "cells": [_cell_doc(c) for c in result.cells],
        }
        p.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                     encoding="utf-8")
        written.append(p)
    if "svg" in formats:
        p = outdir / f"{stem}.svg"
        p.write_text(_capacity_chart(result), encoding="utf-8")
        written.append(p)
    return written


def _cell_doc(c: CellResult) -> dict:
    doc = {
        "fl": c.fl, "case": c.case, "demand_multiplier": c.demand_multiplier,
        "status": c.status, "engine": c.engine,
        "scal_star": c.scal_star, "added_capacity_mw": c.added_capacity_mw,
        "oracle_scal": c.oracle_scal, "milp_scal": c.milp_scal,
        "deviation": c.deviation, "error": c.error,
    }
    if c.account:
        doc["energy"] = {
            "available_mwh": c.account.available_mwh,
            "generated_mwh": c.account.generated_mwh,
            "curtailed_mwh": c.account.curtailed_mwh,
            "curtailed_share": c.account.curtailed_share,
            "imports_mwh": c.account.imports_mwh,
            "exports_mwh": c.account.exports_mwh,
        }
    if c.binding:
        doc["binding"] = {
            "elements": [
                {"kind": b.kind, "element": b.element, "hour": b.hour,
                 "margin": b.margin} for b in c.binding.binding
            ],
            "min_thermal_headroom_mw": c.binding.min_thermal_headroom_mw,
            "min_voltage_headroom_pu2": c.binding.min_voltage_headroom_pu2,
            "worst_line": c.binding.worst_line,
            "worst_bus": c.binding.worst_bus,
        }
    return doc


_CASE_FILL = {"a": "#2a6f97", "b": "#e07a1f"}


def _capacity_chart(result: SweepResult) -> str:
    """Grouped bars of added capacity per feed-in limit; pure string SVG."""
    w, h = 640, 360
    ml, mr, mt, mb = 60, 16, 28, 46
    cells = [c for c in result.cells if c.added_capacity_mw is not None]
    fls = sorted({c.fl for c in result.cells}, reverse=True)
    combos = sorted({(c.case, c.demand_multiplier) for c in result.cells})
    peak = max((c.added_capacity_mw for c in cells), default=1.0) or 1.0

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
           f'viewBox="0 0 {w} {h}">',
           f'<rect width="{w}" height="{h}" fill="#ffffff"/>',
           f'<text x="{ml}" y="18" font-family="sans-serif" font-size="13">'
           f'Added capacity (MW) by feed-in limit</text>']
    plot_w = w - ml - mr
    plot_h = h - mt - mb
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = mt + plot_h * (1 - frac)
        out.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{w - mr}" y2="{y:.1f}" '
                   f'stroke="#dddddd"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 4:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{peak * frac:.2f}</text>')
    group_w = plot_w / max(1, len(fls))
    bar_w = group_w * 0.8 / max(1, len(combos))
    lookup = {(c.fl, c.case, c.demand_multiplier): c for c in result.cells}
    for gi, fl in enumerate(fls):
        x0 = ml + gi * group_w + group_w * 0.1
        for bi, (case, mult) in enumerate(combos):
            c = lookup.get((fl, case, mult))
            val = c.added_capacity_mw if c and c.added_capacity_mw is not None else 0.0
            bh = plot_h * (val / peak)
            x = x0 + bi * bar_w
            y = mt + plot_h - bh
            op = max(0.4, 1.0 - 0.25 * sorted({m for _, m in combos}).index(mult))
            out.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w * 0.92:.1f}" '
                       f'height="{bh:.1f}" fill="{_CASE_FILL.get(case, "#888888")}" '
                       f'fill-opacity="{op:.2f}"/>')
        out.append(f'<text x="{x0 + group_w * 0.4:.1f}" y="{h - mb + 16}" '
                   f'text-anchor="middle" font-family="sans-serif" font-size="11">'
                   f'FL {fl:g}</text>')
    lx = ml
    for case in sorted({c for c, _ in combos}):
        out.append(f'<rect x="{lx}" y="{h - 18}" width="12" height="10" '
                   f'fill="{_CASE_FILL.get(case, "#888888")}"/>')
        out.append(f'<text x="{lx + 16}" y="{h - 9}" font-family="sans-serif" '
                   f'font-size="11">case {case}</text>')
        lx += 90
    out.append(f'<text x="{lx}" y="{h - 9}" font-family="sans-serif" '
               f'font-size="11">lighter = higher demand multiplier</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

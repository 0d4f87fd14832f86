from dataclasses import replace

import numpy as np
import pytest

from feedincap.formulation import Scenario
from feedincap.fixtures import example_grid_7kwp
from feedincap.grid import GenUnit, Grid
from feedincap.milp import SolverConfig
from feedincap.oracle import (
    OracleError,
    annual_simulate,
    enumerate_alpha,
    feasible_at,
    max_scal_bisection,
    oracle_plan,
    rule_injections,
)

from util import random_radial, two_bus


def test_rule_injection_is_negated_demand_without_generation():
    grid = two_bus(demand_mw=0.8, p_max=0.4)
    state = rule_injections(grid, Scenario(fl=0.7), 0.0)
    i = state.bus_order.index("n1")
    assert state.injection_p[0, i] == pytest.approx(-0.8)
    assert np.all(state.curtailed_mw == 0.0)


def test_rule_injection_reference_point():
    grid = example_grid_7kwp()
    state = rule_injections(grid, Scenario(fl=0.7), 1.0)
    i = state.bus_order.index("n001")
    assert state.injection_p[0, i] == pytest.approx(4.9e-3, abs=1e-12)
    assert state.curtailed_mw[0, i] == pytest.approx(0.7e-3, abs=1e-12)
    assert bool(state.alpha[0, i]) is True


def test_rule_rejects_negative_scal():
    with pytest.raises(OracleError):
        rule_injections(two_bus(), Scenario(), -0.1)


def test_injections_nondecreasing_in_scal():
    rng = np.random.default_rng(23)
    for _ in range(8):
        grid = random_radial(rng, n_bus=7, hours=2)
        scenario = Scenario(fl=float(rng.choice([1.0, 0.8, 0.7])),
                            case=str(rng.choice(["a", "b"])), hours=(0, 1))
        prev = None
        for s in np.linspace(0.0, 3.0, 7):
            state = rule_injections(grid, scenario, float(s))
            if prev is not None:
                assert np.all(state.injection_p >= prev - 1e-12)
            prev = state.injection_p


# -- feasible_at -------------------------------------------------------------


def test_fixture_healthy_at_zero(rural):
    report = feasible_at(rural, Scenario(fl=0.7), 0.0)
    assert report.feasible
    assert report.violations == ()
    assert report.n_violations == 0


def test_thermal_violation_magnitude():
    report = feasible_at(two_bus(), Scenario(fl=1.0), 6.0)
    assert not report.feasible
    assert report.n_violations == 1
    v = report.violations[0]
    assert v.kind == "thermal" and v.element == "sub-n1"
    assert v.amount == pytest.approx(1.0, abs=1e-9)
    assert report.worst_thermal_mw == pytest.approx(1.0, abs=1e-9)


def test_preloaded_grid_infeasible_at_zero(hybrid):
    # with demand halved, the standing PV alone pushes voltage past the cap
    scenario = Scenario(fl=1.0, case="a", demand_multiplier=0.5)
    assert not feasible_at(hybrid, scenario, 0.0).feasible
    search = max_scal_bisection(hybrid, scenario)
    assert search.status == "infeasible_at_zero"
    assert search.scal_star is None
    assert not search.report_zero.feasible


def test_violation_listing_capped():
    grid = two_bus(profile=(1.0, 1.0, 1.0))
    report = feasible_at(grid, Scenario(fl=1.0, hours=(0, 1, 2)), 50.0,
                         max_listed=2)
    assert report.n_violations >= 3
    assert len(report.violations) == 2


# -- bisection ---------------------------------------------------------------


def test_bisection_saturates_without_limits():
    grid = two_bus(s_max=float("inf"), vmin=0.01, vmax=100.0)
    cfg = SolverConfig(scal_max=1000.0)
    search = max_scal_bisection(grid, Scenario(fl=0.7), cfg)
    assert search.status == "ok"
    assert search.hit_domain_max
    assert search.scal_star == 1000.0


def test_bisection_closed_form():
    search = max_scal_bisection(two_bus(), Scenario(fl=0.7), tol=1e-6)
    assert search.status == "ok"
    assert search.scal_star == pytest.approx(5.0 / 0.7, abs=1e-5)
    assert not search.hit_domain_max


def test_interval_feasibility_sampled():
    rng = np.random.default_rng(31)
    cfg = SolverConfig()
    done = 0
    while done < 6:
        grid = random_radial(rng, n_bus=6, hours=1)
        scenario = Scenario(fl=0.8, case="b")
        search = max_scal_bisection(grid, scenario, cfg, tol=1e-5)
        if search.status != "ok" or search.hit_domain_max:
            continue
        done += 1
        star = search.scal_star
        for frac in (0.25, 0.5, 0.9):
            assert feasible_at(grid, scenario, frac * star, cfg).feasible
        assert not feasible_at(grid, scenario, star + 1e-3, cfg).feasible


# -- enumeration -------------------------------------------------------------


def test_enumerate_single_lp_when_nothing_free():
    grid = example_grid_7kwp()
    res = enumerate_alpha(grid, Scenario(fl=0.7), fix_scal=1.0)
    assert res.status == "optimal"
    assert res.n_assignments == 1
    # exporting 4.9 kW for one hour at 200 EUR/MWh
    assert res.objective == pytest.approx(-0.98, abs=1e-9)


def test_enumerate_guard():
    rng = np.random.default_rng(2)
    grid = random_radial(rng, n_bus=9, hours=3)
    with pytest.raises(OracleError, match="guard"):
        enumerate_alpha(grid, Scenario(fl=0.7, case="b", hours=(0, 1, 2)),
                        max_free=0)


def test_enumerate_restores_bounds():
    grid = two_bus()
    from feedincap.formulation import build_problem
    cfg = SolverConfig()
    inst = build_problem(grid, Scenario(fl=0.7), cfg)
    before = (list(inst.lp.lb), list(inst.lp.ub))
    enumerate_alpha(grid, Scenario(fl=0.7), cfg)
    assert (list(inst.lp.lb), list(inst.lp.ub)) == before


# -- oracle_plan -------------------------------------------------------------


def test_oracle_plan_reference_point():
    grid = example_grid_7kwp()
    plan = oracle_plan(grid, Scenario(fl=0.7), scal=1.0)
    assert plan.engine == "oracle"
    gid = next(g.id for g in grid.gens if g.kind == "pv_candidate")
    assert plan.curtailment_mw[gid][0] == pytest.approx(0.7e-3, abs=1e-12)
    assert plan.exports_mw[0] == pytest.approx(4.9e-3, abs=1e-12)
    assert plan.objective_eur == pytest.approx(-0.98, abs=1e-9)


def test_oracle_plan_prorata_split():
    grid = two_bus(p_max=2.0)
    grid = Grid(grid.base_mva, grid.base_kv, grid.buses, grid.lines,
                grid.gens + (GenUnit("g2", "n1", "pv_existing_scalable",
                                     6.0, (1.0,)),))
    plan = oracle_plan(grid, Scenario(fl=0.5, case="b"), scal=1.0)
    # node: avail 8, cap 8, fl 0.5 -> curtail 4 split 1:3 across the units
    assert plan.curtailment_mw["g1"][0] == pytest.approx(1.0)
    assert plan.curtailment_mw["g2"][0] == pytest.approx(3.0)
    assert plan.production_mw["g1"][0] + plan.production_mw["g2"][0] == \
        pytest.approx(4.0)


def test_oracle_plan_infeasible_at_zero_raises(hybrid):
    with pytest.raises(OracleError, match="scal=0"):
        oracle_plan(hybrid, Scenario(fl=1.0, demand_multiplier=0.5))


# -- annual ------------------------------------------------------------------


def test_annual_zero_scal_no_existing_pv():
    grid = two_bus(profile=(0.1, 0.6, 1.0, 0.2))
    sim = annual_simulate(grid, Scenario(fl=0.7), 0.0)
    assert np.all(sim.curtailed_mw == 0.0)
    assert sim.generated_mwh == 0.0
    assert sim.violation_hours == 0


def test_annual_single_peak_hour_curtailment():
    base = example_grid_7kwp()
    cand = next(g for g in base.gens if g.kind == "pv_candidate")
    buses = tuple(
        replace(b, demand_p=(0.0, 1.4e-3, 0.0), demand_q=(0.0, 0.0, 0.0))
        for b in base.buses)
    gens = (replace(cand, profile=(0.0, 1.0, 0.0)),)
    grid = Grid(base.base_mva, base.base_kv, buses, base.lines, gens)
    sim = annual_simulate(grid, Scenario(fl=0.7), 1.0)
    assert sim.curtailed_mwh == pytest.approx(0.7e-3, abs=1e-12)
    assert sim.generated_mwh == pytest.approx(6.3e-3, abs=1e-12)


def test_annual_energy_identity(lv):
    sim = annual_simulate(lv, Scenario(fl=0.7, case="b"), 0.5)
    gap = abs(sim.generated_mwh + sim.curtailed_mwh - sim.available_mwh)
    assert gap <= 1e-9 * max(1.0, sim.available_mwh)


def test_annual_counts_violation_hours():
    grid = two_bus(profile=(1.0, 0.4))
    sim = annual_simulate(grid, Scenario(fl=1.0, hours=(0,)), 8.0)
    # flow is 8 MW in the full-sun hour, 3.2 MW in the other; limit is 5
    assert sim.violation_hours == 1

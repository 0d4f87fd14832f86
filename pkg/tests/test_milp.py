import numpy as np
import pytest

from feedincap.milp import (
    INF,
    LinearProgram,
    MILProblem,
    SolverConfig,
    compute_big_m,
    dump_lp,
    solve_lp,
    solve_milp,
)


def test_lp_single_var_at_bound():
    lp = LinearProgram()
    lp.add_var("x", lb=0.0, ub=3.0, obj=-1.0)
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(3.0)
    assert sol.objective == pytest.approx(-3.0)


def test_lp_infeasible():
    lp = LinearProgram()
    x = lp.add_var("x", lb=-INF, ub=INF, obj=1.0)
    lp.add_row({x: 1.0}, ">=", 1.0)
    lp.add_row({x: 1.0}, "<=", 0.0)
    assert solve_lp(lp).status == "infeasible"


def test_lp_face_optimum():
    lp = LinearProgram()
    x = lp.add_var("x", obj=-1.0)
    y = lp.add_var("y", obj=-1.0)
    lp.add_row({x: 1.0, y: 1.0}, "<=", 1.0)
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-1.0)
    assert sol.x[0] + sol.x[1] == pytest.approx(1.0)


def test_lp_unbounded():
    lp = LinearProgram()
    lp.add_var("x", lb=0.0, ub=INF, obj=-1.0)
    assert solve_lp(lp).status == "unbounded"


def test_lp_equality_row():
    lp = LinearProgram()
    x = lp.add_var("x", obj=2.0)
    y = lp.add_var("y", obj=3.0)
    lp.add_row({x: 1.0, y: 1.0}, "==", 4.0)
    lp.add_row({x: 1.0, y: -1.0}, "<=", 2.0)
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    # cheapest split puts everything on x, limited by x - y <= 2
    assert sol.x[0] == pytest.approx(3.0)
    assert sol.x[1] == pytest.approx(1.0)


def test_lp_objective_constant_carried():
    lp = LinearProgram()
    lp.add_var("x", lb=1.0, ub=1.0, obj=1.0)
    lp.obj_const = 10.0
    assert solve_lp(lp).objective == pytest.approx(11.0)


def test_lp_rejects_bad_rows():
    lp = LinearProgram()
    x = lp.add_var("x")
    with pytest.raises(ValueError):
        lp.add_row({x: 1.0}, "!=", 0.0)
    with pytest.raises(ValueError):
        lp.add_row({x + 7: 1.0}, "<=", 0.0)
    with pytest.raises(ValueError):
        lp.add_var("bad", lb=2.0, ub=1.0)


def _random_lp(rng: np.random.Generator, ensure_feasible: bool = False) -> LinearProgram:
    lp = LinearProgram()
    n = int(rng.integers(2, 7))
    for j in range(n):
        lp.add_var(f"x{j}", lb=0.0, ub=float(rng.uniform(0.5, 5.0)),
                   obj=float(rng.normal()))
    x0 = rng.uniform(lp.lb, lp.ub)
    for _ in range(int(rng.integers(1, 6))):
        cols = rng.choice(n, size=min(n, int(rng.integers(1, 4))), replace=False)
        coeffs = {int(j): float(rng.normal()) for j in cols}
        sense = ("<=", ">=", "==")[int(rng.integers(0, 3))]
        if ensure_feasible:
            at_x0 = sum(c * x0[j] for j, c in coeffs.items())
            slack = float(rng.uniform(0.0, 1.0))
            rhs = {"<=": at_x0 + slack, ">=": at_x0 - slack, "==": at_x0}[sense]
        else:
            rhs = float(rng.normal())
        lp.add_row(coeffs, sense, rhs)
    return lp


def test_lp_against_scipy():
    scipy_opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(11)
    checked = 0
    for k in range(60):
        lp = _random_lp(rng, ensure_feasible=k % 2 == 0)
        sol = solve_lp(lp)
        a_ub, b_ub, a_eq, b_eq = [], [], [], []
        for row in lp.rows:
            dense = np.zeros(lp.n_vars)
            for j, c in zip(row.idx, row.coef):
                dense[j] = c
            if row.sense == "<=":
                a_ub.append(dense), b_ub.append(row.rhs)
            elif row.sense == ">=":
                a_ub.append(-dense), b_ub.append(-row.rhs)
            else:
                a_eq.append(dense), b_eq.append(row.rhs)
        ref = scipy_opt.linprog(
            np.array(lp.obj), A_ub=np.array(a_ub) if a_ub else None,
            b_ub=np.array(b_ub) if b_ub else None,
            A_eq=np.array(a_eq) if a_eq else None,
            b_eq=np.array(b_eq) if b_eq else None,
            bounds=list(zip(lp.lb, lp.ub)), method="highs")
        if ref.status == 0:
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(ref.fun, abs=1e-6)
            checked += 1
        elif ref.status == 2:
            assert sol.status == "infeasible"
    assert checked >= 20


def test_lp_determinism():
    rng = np.random.default_rng(4)
    lp = _random_lp(rng, ensure_feasible=True)
    a = solve_lp(lp)
    b = solve_lp(lp)
    assert a.status == b.status == "optimal"
    assert a.x.tobytes() == b.x.tobytes()


# -- MILP --------------------------------------------------------------------


def test_milp_fixed_binaries_reduce_to_lp():
    lp = LinearProgram()
    b = lp.add_var("b", lb=1.0, ub=1.0, obj=-2.0)
    x = lp.add_var("x", lb=0.0, ub=4.0, obj=-1.0)
    lp.add_row({b: 1.0, x: 1.0}, "<=", 3.0)
    ref = solve_lp(lp)
    sol = solve_milp(MILProblem(lp, binaries=(b,)))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(ref.objective)
    assert sol.nodes <= 1


def test_milp_rounding_forced():
    lp = LinearProgram()
    b = lp.add_var("b", lb=0.0, ub=1.0, obj=-1.0)
    lp.add_row({b: 1.0}, "<=", 0.5)
    sol = solve_milp(MILProblem(lp, binaries=(b,)))
    assert sol.status == "optimal"
    assert sol.x[b] == pytest.approx(0.0, abs=1e-9)
    assert sol.objective == pytest.approx(0.0, abs=1e-9)


def test_milp_knapsack():
    lp = LinearProgram()
    a = lp.add_var("a", ub=1.0, obj=-5.0)
    b = lp.add_var("b", ub=1.0, obj=-4.0)
    c = lp.add_var("c", ub=1.0, obj=-3.0)
    lp.add_row({a: 2.0, b: 3.0, c: 1.0}, "<=", 3.0)
    sol = solve_milp(MILProblem(lp, binaries=(a, b, c)))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-8.0)
    assert sol.x[a] == pytest.approx(1.0) and sol.x[c] == pytest.approx(1.0)


def test_milp_infeasible():
    lp = LinearProgram()
    b = lp.add_var("b", ub=1.0)
    lp.add_row({b: 1.0}, ">=", 0.3)
    lp.add_row({b: 1.0}, "<=", 0.7)
    sol = solve_milp(MILProblem(lp, binaries=(b,)))
    assert sol.status == "infeasible"


def test_milp_node_limit_reported():
    rng = np.random.default_rng(9)
    lp = LinearProgram()
    idx = [lp.add_var(f"b{j}", ub=1.0, obj=float(-rng.uniform(1, 2)))
           for j in range(12)]
    lp.add_row({j: float(rng.uniform(1, 3)) for j in idx}, "<=", 7.0)
    cfg = SolverConfig(node_limit=1)
    sol = solve_milp(MILProblem(lp, binaries=tuple(idx)), cfg)
    assert sol.status in ("node_limit", "optimal")
    full = solve_milp(MILProblem(lp, binaries=tuple(idx)))
    assert full.status == "optimal"
    if sol.status == "node_limit":
        assert sol.gap >= 0.0


def test_milp_determinism():
    rng = np.random.default_rng(21)
    lp = LinearProgram()
    idx = [lp.add_var(f"b{j}", ub=1.0, obj=float(-rng.uniform(0.5, 2)))
           for j in range(8)]
    y = lp.add_var("y", ub=10.0, obj=-0.1)
    lp.add_row({**{j: float(rng.uniform(0.5, 2)) for j in idx}, y: 1.0}, "<=", 6.0)
    mip = MILProblem(lp, binaries=tuple(idx))
    a = solve_milp(mip)
    b = solve_milp(mip)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.objective == b.objective


# -- big-M -------------------------------------------------------------------


def test_big_m_no_eligible_capacity():
    assert compute_big_m(0.0, 0.0, 1.4) == pytest.approx(1.4 + 1.0)


def test_big_m_formula():
    # candidate B = 1 MW, CF = 1, FL = 0.7, SCAL_MAX = 10
    assert compute_big_m(10.0, 0.7 * 10.0, 0.0) == pytest.approx(18.0)


def test_big_m_rejects_negative():
    with pytest.raises(ValueError):
        compute_big_m(-1.0, 0.0, 0.0)


def test_big_m_covers_relaxed_rows():
    # For any scal <= SCAL_MAX and any production split, a deactivated
    # indicator row must have nonnegative slack.
    rng = np.random.default_rng(5)
    smax = 1000.0
    for _ in range(200):
        av0, av1, cap0, cap1, resid = rng.uniform(0.0, 3.0, 5)
        fl = rng.uniform(0.1, 1.0)
        m = compute_big_m(av0 + av1 * smax, fl * (cap0 + cap1 * smax), resid)
        s = rng.uniform(0.0, smax)
        avail = av0 + av1 * s
        flcap = fl * (cap0 + cap1 * s)
        prod = rng.uniform(0.0, avail)
        assert avail - flcap - resid <= m                 # trigger, alpha = 1
        assert abs(prod - flcap - resid) <= m             # pins, alpha = 0
        assert avail - prod <= m                          # spill, alpha = 1


def test_dump_lp_stable():
    lp = LinearProgram()
    x = lp.add_var("x", ub=3.0, obj=-1.0)
    b = lp.add_var("b", ub=1.0, obj=0.5)
    lp.add_row({x: 1.0, b: -2.0}, "<=", 1.5, name="cap")
    text = dump_lp(MILProblem(lp, binaries=(b,)))
    assert text == dump_lp(MILProblem(lp, binaries=(b,)))
    assert "cap" in text and "b" in text

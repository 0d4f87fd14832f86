"""Dense LP and MILP solving.

solve_lp is a bounded-variable revised simplex: two phases, Dantzig pricing
with lowest-index tie-breaks, and a Bland fallback after a degenerate streak
so cycling cannot occur. The basis inverse is updated with elementary row
operations and refactorized periodically. Everything is double precision
numpy with a fixed operation order, so two runs on the same input produce
bit-identical results.

solve_milp is best-first branch and bound over binary variables: branch on
the most fractional binary (ties to the lowest variable index), children
inherit the parent LP objective as their bound, and near-integral incumbents
are re-solved once with the binaries pinned so the reported point satisfies
the indicator constraints exactly.

Problem sizes here are desk scale (hundreds to a few thousand rows); dense
linear algebra is deliberate.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

INF = float("inf")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
NODE_LIMIT = "node_limit"
NUMERICAL = "numerical"


@dataclass
class SolverConfig:
    feasibility_tol: float = 1e-7
    optimality_tol: float = 1e-7
    integrality_tol: float = 1e-6
    epsilon_mw: float = 1e-6         # strict-inequality margin for indicator triggers
    big_m_policy: str = "auto"       # per node-hour via compute_big_m
    scal_max: float = 1000.0
    node_limit: int = 100_000
    time_limit_s: float | None = None   # None keeps runs reproducible
    iteration_limit: int = 0            # 0 = scale with problem size
    refactor_every: int = 128
    bland_after: int = 40


@dataclass
class _Row:
    idx: tuple[int, ...]
    coef: tuple[float, ...]
    sense: str      # "<=", ">=", "=="
    rhs: float
    name: str


@dataclass
class LinearProgram:
    """Column-oriented LP container; variables are added before rows."""

    obj: list[float] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    rows: list[_Row] = field(default_factory=list)
    obj_const: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.obj)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                obj: float = 0.0) -> int:
        if lb > ub:
            raise ValueError(f"variable {name}: lb {lb} > ub {ub}")
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        return len(self.obj) - 1

    def add_row(self, coeffs: dict[int, float], sense: str, rhs: float,
                name: str = "") -> int:
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad sense {sense!r}")
        items = sorted(coeffs.items())
        for j, _ in items:
            if not 0 <= j < self.n_vars:
                raise ValueError(f"row {name!r} references unknown variable {j}")
        self.rows.append(_Row(
            idx=tuple(j for j, _ in items),
            coef=tuple(float(v) for _, v in items),
            sense=sense,
            rhs=float(rhs),
            name=name or f"r{len(self.rows)}",
        ))
        return len(self.rows) - 1

    def activities(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(len(self.rows))
        for i, row in enumerate(self.rows):
            out[i] = sum(c * x[j] for j, c in zip(row.idx, row.coef))
        return out


@dataclass
class MILProblem:
    lp: LinearProgram
    binaries: tuple[int, ...] = ()


@dataclass
class LPSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    duals: np.ndarray | None
    reduced_costs: np.ndarray | None
    iterations: int


@dataclass
class MILPSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    gap: float
    nodes: int
    lp_iterations: int


def compute_big_m(avail_at_scal_max: float, fl_cap_at_scal_max: float,
                  residual: float) -> float:
    """Constraint-specific big-M for one node-hour's indicator rows.

    The bound covers both directions of the production-pinning rows and the
    trigger row itself over the whole scal domain, so a relaxed row can never
    bind: M >= avail and M >= FL*cap + R at the largest admissible scal.
    """
    if min(avail_at_scal_max, fl_cap_at_scal_max, residual) < 0:
        raise ValueError("big-M inputs must be nonnegative")
    return avail_at_scal_max + fl_cap_at_scal_max + residual + 1.0


# ---------------------------------------------------------------------------
# standard form + simplex core


class _StandardForm:
    """Ax = b with bounds, slack column per row; built once per problem."""

    def __init__(self, lp: LinearProgram):
        m, n = lp.n_rows, lp.n_vars
        self.m, self.n = m, n
        A = np.zeros((m, n + m))
        b = np.zeros(m)
        slack_lb = np.zeros(m)
        slack_ub = np.zeros(m)
        for i, row in enumerate(lp.rows):
            for j, cval in zip(row.idx, row.coef):
                A[i, j] += cval
            b[i] = row.rhs
            A[i, n + i] = 1.0
            if row.sense == "<=":
                slack_lb[i], slack_ub[i] = 0.0, INF
            elif row.sense == ">=":
                slack_lb[i], slack_ub[i] = -INF, 0.0
            else:
                slack_lb[i], slack_ub[i] = 0.0, 0.0
        self.A = A
        self.b = b
        self.c = np.concatenate([np.asarray(lp.obj, dtype=float), np.zeros(m)])
        self.lb_base = np.concatenate([np.asarray(lp.lb, dtype=float), slack_lb])
        self.ub_base = np.concatenate([np.asarray(lp.ub, dtype=float), slack_ub])
        self.obj_const = lp.obj_const


class _SimplexState:
    def __init__(self, sf: _StandardForm, lb: np.ndarray, ub: np.ndarray):
        m = sf.m
        self.sf = sf
        self.lb = lb
        self.ub = ub
        self.x = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        self.basis = np.arange(sf.n, sf.n + m)
        self.in_basis = np.zeros(sf.A.shape[1], dtype=bool)
        self.in_basis[self.basis] = True
        self.B_inv = np.eye(m)
        self.iterations = 0

    def reconcile(self) -> None:
        # Recompute basic values from nonbasic ones; kills accumulated drift.
        nb_mask = ~self.in_basis
        rhs = self.sf.b - self.sf.A[:, nb_mask] @ self.x[nb_mask]
        self.x[self.basis] = self.B_inv @ rhs

    def refactor(self) -> bool:
        B = self.sf.A[:, self.basis]
        try:
            self.B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return False
        self.reconcile()
        return True


def _iterate(st: _SimplexState, c: np.ndarray, cfg: SolverConfig,
             iter_cap: int) -> str:
    """Run simplex to optimality for the given objective. Returns a status."""
    sf = st.sf
    tol = cfg.optimality_tol
    piv_tol = 1e-9
    degen_streak = 0
    bland = False
    since_refactor = 0

    while True:
        if st.iterations >= iter_cap:
            return ITERATION_LIMIT
        if sf.m:
            y = st.B_inv.T @ c[st.basis]
            d = c - sf.A.T @ y
        else:
            d = c.copy()

        # nonbasic vars sit at lb, ub, or 0 (free); classify by actual value
        nb = ~st.in_basis & (st.ub - st.lb > 0)   # fixed vars can never improve
        score = np.zeros_like(d)
        lb_side = nb & (st.x <= st.lb + 1e-30) & np.isfinite(st.lb)
        ub_side = nb & ~lb_side & (st.x >= st.ub - 1e-30) & np.isfinite(st.ub)
        free_side = nb & ~lb_side & ~ub_side
        score[lb_side] = d[lb_side]
        score[ub_side] = -d[ub_side]
        score[free_side] = -np.abs(d[free_side])
        score[~nb] = 0.0

        eligible = np.flatnonzero(score < -tol)
        if eligible.size == 0:
            return OPTIMAL
        if bland:
            j_in = int(eligible[0])
        else:
            j_in = int(eligible[np.argmin(score[eligible])])
        sigma = 1.0
        if ub_side[j_in] or (free_side[j_in] and d[j_in] > 0):
            sigma = -1.0

        w = st.B_inv @ sf.A[:, j_in] if sf.m else np.zeros(0)
        step = sigma * w

        # ratio test over basic vars
        t_best = INF
        r_block = -1
        bvals = st.x[st.basis]
        for i in range(sf.m):
            si = step[i]
            if si > piv_tol:
                bound = st.lb[st.basis[i]]
                if not np.isfinite(bound):
                    continue
                t_i = max(0.0, (bvals[i] - bound) / si)
            elif si < -piv_tol:
                bound = st.ub[st.basis[i]]
                if not np.isfinite(bound):
                    continue
                t_i = max(0.0, (bvals[i] - bound) / si)
            else:
                continue
            if t_i < t_best - 1e-12 or (
                t_i < t_best + 1e-12
                and (r_block < 0 or st.basis[i] < st.basis[r_block])
            ):
                t_best = t_i
                r_block = i

        span = st.ub[j_in] - st.lb[j_in]
        flip = np.isfinite(span) and span < t_best

        if not flip and r_block < 0:
            return UNBOUNDED

        st.iterations += 1
        since_refactor += 1
        if flip:
            t = span
            st.x[st.basis] = bvals - t * step
            st.x[j_in] = st.ub[j_in] if sigma > 0 else st.lb[j_in]
        else:
            t = t_best
            st.x[st.basis] = bvals - t * step
            st.x[j_in] = st.x[j_in] + sigma * t
            leave = int(st.basis[r_block])
            # pin the leaving variable to the bound it reached
            st.x[leave] = st.lb[leave] if step[r_block] > 0 else st.ub[leave]
            st.in_basis[leave] = False
            st.in_basis[j_in] = True
            st.basis[r_block] = j_in
            piv = w[r_block]
            if abs(piv) < piv_tol:
                if not st.refactor():
                    return NUMERICAL
            else:
                brow = st.B_inv[r_block] / piv
                st.B_inv -= np.outer(w, brow)
                st.B_inv[r_block] = brow

        if t <= 1e-11:
            degen_streak += 1
            if degen_streak > cfg.bland_after:
                bland = True
        else:
            degen_streak = 0
            bland = False

        if since_refactor >= cfg.refactor_every:
            since_refactor = 0
            if not st.refactor():
                return NUMERICAL


def _solve_standard(sf: _StandardForm, lb: np.ndarray, ub: np.ndarray,
                    cfg: SolverConfig) -> LPSolution:
    m, n = sf.m, sf.n
    iter_cap = cfg.iteration_limit or (2000 + 60 * (m + n))

    st = _SimplexState(sf, lb.copy(), ub.copy())
    st.reconcile()

    # Phase 1: absorb bound violations of the initial (slack) basis into
    # one-signed artificial columns and minimize their total magnitude.
    viol_rows = []
    for i in range(m):
        v = st.x[st.basis[i]]
        if v > ub[st.basis[i]] + cfg.feasibility_tol:
            viol_rows.append((i, +1.0))
        elif v < lb[st.basis[i]] - cfg.feasibility_tol:
            viol_rows.append((i, -1.0))

    if viol_rows:
        n_art = len(viol_rows)
        A = np.zeros((m, sf.A.shape[1] + n_art))
        A[:, : sf.A.shape[1]] = sf.A
        c1 = np.zeros(A.shape[1])
        lb1 = np.concatenate([st.lb, np.zeros(n_art)])
        ub1 = np.concatenate([st.ub, np.zeros(n_art)])
        x1 = np.concatenate([st.x, np.zeros(n_art)])
        sf1 = _StandardForm.__new__(_StandardForm)
        sf1.m, sf1.n = m, n
        sf1.A, sf1.b, sf1.obj_const = A, sf.b, sf.obj_const
        sf1.c = np.concatenate([sf.c, np.zeros(n_art)])
        for k, (i, sign) in enumerate(viol_rows):
            col = sf.A.shape[1] + k
            A[i, col] = 1.0
            c1[col] = sign
            if sign > 0:
                lb1[col], ub1[col] = 0.0, INF
            else:
                lb1[col], ub1[col] = -INF, 0.0
            slack = st.basis[i]
            pin = ub[slack] if sign > 0 else lb[slack]
            x1[slack] = pin
            x1[col] = st.x[slack] - pin

        st1 = _SimplexState.__new__(_SimplexState)
        st1.sf = sf1
        st1.lb, st1.ub = lb1, ub1
        st1.x = x1
        st1.basis = st.basis.copy()
        st1.in_basis = np.zeros(A.shape[1], dtype=bool)
        st1.in_basis[st1.basis] = True
        st1.B_inv = np.eye(m)
        st1.iterations = 0
        for k, (i, _) in enumerate(viol_rows):
            art = sf.A.shape[1] + k
            st1.in_basis[st1.basis[i]] = False
            st1.basis[i] = art
            st1.in_basis[art] = True
        st1.reconcile()

        status = _iterate(st1, c1, cfg, iter_cap)
        if status in (NUMERICAL, ITERATION_LIMIT):
            return LPSolution(status, None, None, None, None, st1.iterations)
        if status == UNBOUNDED:
            return LPSolution(NUMERICAL, None, None, None, None, st1.iterations)
        infeas = float(c1 @ st1.x)
        if infeas > cfg.feasibility_tol * max(1.0, float(np.abs(sf.b).max(initial=0.0))):
            return LPSolution(INFEASIBLE, None, None, None, None, st1.iterations)
        # lock artificials at zero and continue with the real objective
        art_cols = np.arange(sf.A.shape[1], sf.A.shape[1] + n_art)
        st1.lb[art_cols] = 0.0
        st1.ub[art_cols] = 0.0
        st1.x[art_cols] = np.where(np.abs(st1.x[art_cols]) < 1e-9, 0.0, st1.x[art_cols])
        st = st1
        sf_run = sf1
    else:
        sf_run = sf

    status = _iterate(st, sf_run.c, cfg, iter_cap)
    if status in (NUMERICAL, ITERATION_LIMIT, UNBOUNDED):
        if status == UNBOUNDED:
            return LPSolution(UNBOUNDED, None, None, None, None, st.iterations)
        return LPSolution(status, None, None, None, None, st.iterations)

    st.refactor()
    x = st.x[:n].copy()
    if m:
        y = st.B_inv.T @ sf_run.c[st.basis]
        d = sf_run.c - sf_run.A.T @ y
    else:
        y = np.zeros(0)
        d = sf_run.c.copy()
    obj = float(sf.c[:n] @ x + sf.obj_const)
    return LPSolution(OPTIMAL, x, obj, y.copy(), d[:n].copy(), st.iterations)


def solve_lp(lp: LinearProgram, cfg: SolverConfig | None = None) -> LPSolution:
    """Solve the LP to optimality. Deterministic for identical input."""
    cfg = cfg or SolverConfig()
    sf = _StandardForm(lp)
    return _solve_standard(sf, sf.lb_base, sf.ub_base, cfg)


# ---------------------------------------------------------------------------
# branch and bound


def _most_fractional(x: np.ndarray, binaries: tuple[int, ...],
                     lb: np.ndarray, ub: np.ndarray, tol: float) -> int:
    best_j = -1
    best_f = tol
    for j in binaries:
        if ub[j] - lb[j] < 0.5:       # fixed by bounds
            continue
        f = min(x[j], 1.0 - x[j])
        if f > best_f + 1e-15:
            best_f = f
            best_j = j
    return best_j


def solve_milp(mip: MILProblem, cfg: SolverConfig | None = None) -> MILPSolution:
    """Best-first branch and bound over the binary variables."""
    cfg = cfg or SolverConfig()
    lp = mip.lp
    for j in mip.binaries:
        if lp.lb[j] < -1e-12 or lp.ub[j] > 1 + 1e-12:
            raise ValueError(f"binary variable {lp.names[j]} must have bounds within [0, 1]")

    sf = _StandardForm(lp)
    binaries = tuple(sorted(mip.binaries))
    total_iters = 0
    nodes = 0
    incumbent_x: np.ndarray | None = None
    incumbent_obj = INF
    seq = 0
    # heap entries: (bound, seq, lb patch, ub patch)
    heap: list[tuple[float, int, tuple[tuple[int, float], ...], tuple[tuple[int, float], ...]]] = [
        (-INF, 0, (), ())
    ]

    def bounds_with(patch_lb, patch_ub):
        lb = sf.lb_base.copy()
        ub = sf.ub_base.copy()
        for j, v in patch_lb:
            lb[j] = v
        for j, v in patch_ub:
            ub[j] = v
        return lb, ub

    status_out = OPTIMAL
    while heap:
        bound, _, patch_lb, patch_ub = heapq.heappop(heap)
        if bound >= incumbent_obj - 1e-9:
            continue
        if nodes >= cfg.node_limit:
            status_out = NODE_LIMIT
            break
        nodes += 1
        lb, ub = bounds_with(patch_lb, patch_ub)
        sol = _solve_standard(sf, lb, ub, cfg)
        total_iters += sol.iterations
        if sol.status == INFEASIBLE:
            continue
        if sol.status == UNBOUNDED:
            return MILPSolution(UNBOUNDED, None, None, INF, nodes, total_iters)
        if sol.status != OPTIMAL:
            return MILPSolution(sol.status, None, None, INF, nodes, total_iters)
        if sol.objective >= incumbent_obj - 1e-9:
            continue

        j_branch = _most_fractional(sol.x, binaries, lb, ub, cfg.integrality_tol)
        if j_branch < 0:
            # Near-integral: pin binaries to rounded values and re-solve so the
            # incumbent satisfies the indicator logic exactly.
            lb2, ub2 = lb.copy(), ub.copy()
            for j in binaries:
                v = round(float(sol.x[j]))
                lb2[j] = ub2[j] = float(v)
            polished = _solve_standard(sf, lb2, ub2, cfg)
            total_iters += polished.iterations
            if polished.status == OPTIMAL and polished.objective < incumbent_obj - 1e-9:
                incumbent_obj = polished.objective
                incumbent_x = polished.x
            elif polished.status != OPTIMAL:
                # rounding killed feasibility; force explicit branching on the
                # first free binary to make progress
                for j in binaries:
                    if ub[j] - lb[j] >= 0.5:
                        j_branch = j
                        break
                if j_branch < 0:
                    continue
            else:
                continue
        if j_branch >= 0:
            seq += 1
            heapq.heappush(heap, (sol.objective, seq,
                                  patch_lb, patch_ub + ((j_branch, 0.0),)))
            seq += 1
            heapq.heappush(heap, (sol.objective, seq,
                                  patch_lb + ((j_branch, 1.0),), patch_ub))

    if incumbent_x is None:
        if status_out == NODE_LIMIT:
            return MILPSolution(NODE_LIMIT, None, None, INF, nodes, total_iters)
        return MILPSolution(INFEASIBLE, None, None, INF, nodes, total_iters)
    remaining = min((b for b, *_ in heap), default=incumbent_obj)
    gap = max(0.0, incumbent_obj - min(remaining, incumbent_obj))
    return MILPSolution(status_out, incumbent_x, incumbent_obj, gap, nodes, total_iters)


# ---------------------------------------------------------------------------
# debug dump


def _fmt(v: float) -> str:
    return repr(float(v))


def dump_lp(problem: LinearProgram | MILProblem) -> str:
    """Plain-text dump (objective, rows, bounds, binaries); bit-exact."""
    if isinstance(problem, MILProblem):
        lp, binaries = problem.lp, problem.binaries
    else:
        lp, binaries = problem, ()
    out = ["Minimize"]
    terms = [f"{'+' if c >= 0 else '-'} {_fmt(abs(c))} {lp.names[j]}"
             for j, c in enumerate(lp.obj) if c != 0.0]
    out.append(" obj: " + (" ".join(terms) if terms else "0"))
    if lp.obj_const:
        out.append(f" const: {_fmt(lp.obj_const)}")
    out.append("Subject To")
    for row in lp.rows:
        body = " ".join(
            f"{'+' if c >= 0 else '-'} {_fmt(abs(c))} {lp.names[j]}"
            for j, c in zip(row.idx, row.coef)
        )
        out.append(f" {row.name}: {body} {row.sense} {_fmt(row.rhs)}")
    out.append("Bounds")
    for j in range(lp.n_vars):
        out.append(f" {_fmt(lp.lb[j])} <= {lp.names[j]} <= {_fmt(lp.ub[j])}")
    if binaries:
        out.append("Binaries")
        out.append(" " + " ".join(lp.names[j] for j in sorted(binaries)))
    out.append("End")
    return "\n".join(out) + "\n"

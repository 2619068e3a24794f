"""Linear programs with integrality marks, a dense two-phase simplex,
branch-and-bound, and CPLEX-style .lp file round-trip.

Sized for desk-scale scheduling instances (a few hundred to a few
thousand columns).  Larger models should be exported with
:func:`write_lp` and handed to an external solver.
"""

from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITER_LIMIT = "iter_limit"

LE, GE, EQ = "<=", ">=", "="

FEAS_TOL = 1e-7
INT_TOL = 1e-6
PIVOT_TOL = 1e-9
DUAL_TOL = 1e-9

_AT_LOWER, _AT_UPPER, _FREE, _BASIC = 0, 1, 2, 3


class ModelError(ValueError):
    """Malformed model definition."""


@dataclass
class Column:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    obj: float = 0.0
    integer: bool = False


@dataclass
class Row:
    name: str
    coeffs: list  # list of (column index, coefficient)
    sense: str
    rhs: float


class MilpModel:
    """Minimization LP/MILP in row-column form."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.columns: list[Column] = []
        self.rows: list[Row] = []
        self._col_index: dict[str, int] = {}

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def add_column(self, name, lb=0.0, ub=math.inf, obj=0.0, integer=False) -> int:
        if name in self._col_index:
            raise ModelError(f"duplicate column name {name!r}")
        if math.isnan(lb) or math.isnan(ub) or not math.isfinite(obj):
            raise ModelError(f"column {name!r} has invalid bounds or objective")
        if lb > ub:
            raise ModelError(f"column {name!r} has lb {lb} > ub {ub}")
        self.columns.append(Column(name, float(lb), float(ub), float(obj), bool(integer)))
        self._col_index[name] = len(self.columns) - 1
        return len(self.columns) - 1

    def column_index(self, name: str) -> int:
        return self._col_index[name]

    def add_row(self, name, coeffs, sense, rhs) -> int:
        if sense not in (LE, GE, EQ):
            raise ModelError(f"row {name!r}: unknown sense {sense!r}")
        if not math.isfinite(rhs):
            raise ModelError(f"row {name!r}: non-finite rhs")
        merged: dict[int, float] = {}
        for j, v in coeffs:
            if not (0 <= j < len(self.columns)):
                raise ModelError(f"row {name!r} references unknown column {j}")
            if not math.isfinite(v):
                raise ModelError(f"row {name!r}: non-finite coefficient")
            merged[j] = merged.get(j, 0.0) + float(v)
        self.rows.append(Row(name, sorted(merged.items()), sense, float(rhs)))
        return len(self.rows) - 1

    def integer_columns(self) -> list[int]:
        return [j for j, c in enumerate(self.columns) if c.integer]

    def row_activity(self, row: Row, x: np.ndarray) -> float:
        return float(sum(v * x[j] for j, v in row.coeffs))

    def check_feasible(self, x, tol=FEAS_TOL) -> list[str]:
        """Names of rows/bounds violated beyond ``tol``."""
        bad = []
        for j, c in enumerate(self.columns):
            if x[j] < c.lb - tol or x[j] > c.ub + tol:
                bad.append(f"bound:{c.name}")
        for r in self.rows:
            a = self.row_activity(r, x)
            if r.sense == LE and a > r.rhs + tol:
                bad.append(r.name)
            elif r.sense == GE and a < r.rhs - tol:
                bad.append(r.name)
            elif r.sense == EQ and abs(a - r.rhs) > tol:
                bad.append(r.name)
        return bad

    def objective_value(self, x) -> float:
        return float(sum(c.obj * x[j] for j, c in enumerate(self.columns)))


@dataclass
class MilpResult:
    status: str
    objective: float
    x: np.ndarray | None
    node_count: int = 0
    simplex_iterations: int = 0
    gap: float = 0.0
    dual_gap: float = 0.0


def result_assignment(model: MilpModel, result: MilpResult) -> dict:
    """Column-name keyed view of a solution vector."""
    if result.x is None:
        return {}
    return {c.name: float(result.x[j]) for j, c in enumerate(model.columns)}


# ----------------------------------------------------------------------
# Simplex core
# ----------------------------------------------------------------------

class _SimplexData:
    """Dense standard form Ax = b with bounds, shared across B&B nodes."""

    def __init__(self, model: MilpModel):
        m, n = model.n_rows, model.n_cols
        n_slack = sum(1 for r in model.rows if r.sense != EQ)
        ntot = n + n_slack + m  # structural + slack + artificial
        A = np.zeros((m, ntot))
        b = np.empty(m) if m else np.zeros(0)
        lb = np.full(ntot, 0.0)
        ub = np.full(ntot, math.inf)
        c = np.zeros(ntot)
        for j, col in enumerate(model.columns):
            lb[j], ub[j], c[j] = col.lb, col.ub, col.obj
        k = n
        for i, r in enumerate(model.rows):
            for j, v in r.coeffs:
                A[i, j] = v
            b[i] = r.rhs
            if r.sense == LE:
                A[i, k] = 1.0
                k += 1
            elif r.sense == GE:
                A[i, k] = -1.0
                k += 1
        self.art0 = n + n_slack
        self.m, self.n, self.ntot = m, n, ntot
        self.A, self.b, self.lb, self.ub, self.c = A, b, lb, ub, c
        self.b_scale = 1.0 + float(np.abs(b).max(initial=0.0))


class _Tableau:
    """Bounded-variable simplex state; supports warm re-solves after
    bound changes via the dual simplex."""

    def __init__(self, data: _SimplexData, lb_over=None, ub_over=None,
                 iter_limit=50000):
        self.data = data
        self.iter_limit = iter_limit
        self.iters = 0
        self._iter_start = 0
        self.lb = data.lb.copy()
        self.ub = data.ub.copy()
        if lb_over is not None:
            self.lb[: data.n] = lb_over
        if ub_over is not None:
            self.ub[: data.n] = ub_over
        self.solved = False

    # -- setup ---------------------------------------------------------

    def _start_basis(self):
        data = self.data
        m, ntot, art0 = data.m, data.ntot, data.art0
        lb, ub = self.lb, self.ub
        # Re-open artificials (a previous solve locks them for phase 2).
        lb[art0:] = 0.0
        ub[art0:] = math.inf
        status = np.empty(ntot, dtype=np.int8)
        x_nb = np.zeros(ntot)
        finite_lb = np.isfinite(lb[:art0])
        finite_ub = np.isfinite(ub[:art0])
        for j in range(art0):
            if finite_lb[j]:
                status[j], x_nb[j] = _AT_LOWER, lb[j]
            elif finite_ub[j]:
                status[j], x_nb[j] = _AT_UPPER, ub[j]
            else:
                status[j], x_nb[j] = _FREE, 0.0
        r = data.b - data.A[:, :art0] @ x_nb[:art0]
        sigma = np.where(r >= 0.0, 1.0, -1.0)
        T = np.empty((m + 2, ntot))
        T[:m] = data.A * sigma[:, None]
        T[:m, art0:] = 0.0
        T[np.arange(m), art0 + np.arange(m)] = 1.0
        c1 = np.zeros(ntot)
        c1[art0:] = 1.0
        c2 = data.c.copy()
        T[m] = c1 - T[:m].sum(axis=0)
        T[m + 1] = c2
        self.T, self.sigma = T, sigma
        self.status, self.x_nb = status, x_nb
        self.basis = np.arange(art0, ntot)
        status[art0:] = _BASIC
        self.x_b = np.abs(r)
        self.vrange = ub - lb

    def _recompute_xb(self):
        data = self.data
        nonbasic = np.nonzero(self.status[: data.art0] != _BASIC)[0]
        rhs = data.b.copy()
        if nonbasic.size:
            rhs -= data.A[:, nonbasic] @ self.x_nb[nonbasic]
        binv = self.T[: data.m, data.art0:] * self.sigma[None, :]
        self.x_b = binv @ rhs

    def _pivot(self, rpiv, q):
        T = self.T
        piv = T[rpiv, q]
        T[rpiv] /= piv
        factor = T[:, q].copy()
        factor[rpiv] = 0.0
        nz = np.nonzero(np.abs(factor) > 1e-13)[0]
        if nz.size * 3 < T.shape[0]:
            T[nz] -= np.outer(factor[nz], T[rpiv])
        else:
            T -= np.outer(factor, T[rpiv])
        T[rpiv, q] = 1.0

    # -- primal simplex -------------------------------------------------

    def _primal(self, crow):
        """Run primal pivots against reduced-cost row ``crow``.
        Returns OPTIMAL (no eligible entering column), UNBOUNDED, ITER_LIMIT."""
        data = self.data
        m = data.m
        T, status, lb, ub = self.T, self.status, self.lb, self.ub
        x_nb, vrange, basis = self.x_nb, self.vrange, self.basis
        bland = False
        degen_run = 0
        while True:
            if self.iters - self._iter_start >= self.iter_limit:
                return ITER_LIMIT
            d = T[crow]
            movable = vrange > PIVOT_TOL
            elig = (((status == _AT_LOWER) & movable & (d < -DUAL_TOL))
                    | ((status == _AT_UPPER) & movable & (d > DUAL_TOL))
                    | ((status == _FREE) & (np.abs(d) > DUAL_TOL)))
            if not elig.any():
                return OPTIMAL
            cand = np.nonzero(elig)[0]
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = -1.0 if (status[q] == _AT_UPPER
                                 or (status[q] == _FREE and d[q] > 0)) else 1.0
            col = T[:m, q]
            step_col = direction * col
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.full(m, math.inf)
                dec = step_col > PIVOT_TOL
                ratio[dec] = (self.x_b[dec] - lb[basis[dec]]) / step_col[dec]
                inc = step_col < -PIVOT_TOL
                ratio[inc] = (ub[basis[inc]] - self.x_b[inc]) / (-step_col[inc])
            np.maximum(ratio, 0.0, out=ratio)
            bound_step = vrange[q] if status[q] != _FREE else math.inf
            rmin = float(ratio.min()) if m else math.inf
            delta = min(rmin, bound_step)
            if not math.isfinite(delta):
                return UNBOUNDED
            self.iters += 1
            if delta <= 1e-12:
                degen_run += 1
                if degen_run > 100:
                    bland = True
            else:
                degen_run = 0
                bland = False
            if bound_step < rmin - 1e-12:
                self.x_b -= step_col * delta
                if status[q] == _AT_LOWER:
                    status[q], x_nb[q] = _AT_UPPER, ub[q]
                else:
                    status[q], x_nb[q] = _AT_LOWER, lb[q]
                continue
            tie = np.nonzero(ratio <= delta + 1e-12)[0]
            if bland:
                rpiv = int(tie[np.argmin(basis[tie])])
            else:
                rpiv = int(tie[np.argmax(np.abs(col[tie]))])
            leaving = int(basis[rpiv])
            self.x_b -= step_col * delta
            enter_val = x_nb[q] + direction * delta
            if step_col[rpiv] > 0:
                status[leaving], x_nb[leaving] = _AT_LOWER, lb[leaving]
            else:
                status[leaving], x_nb[leaving] = _AT_UPPER, ub[leaving]
            self._pivot(rpiv, q)
            basis[rpiv] = q
            status[q] = _BASIC
            self.x_b[rpiv] = enter_val
            if self.iters % 256 == 0:
                self._recompute_xb()

    # -- dual simplex ----------------------------------------------------

    def _dual(self):
        """Restore primal feasibility after bound changes, keeping the
        phase-2 reduced costs dual feasible.  Returns OPTIMAL, INFEASIBLE
        or ITER_LIMIT (caller should then re-solve from scratch)."""
        data = self.data
        m = data.m
        T, status, basis = self.T, self.status, self.basis
        lb, ub, x_nb = self.lb, self.ub, self.x_nb
        tol = FEAS_TOL * data.b_scale
        budget = self.iters + 2 * m + 400
        while True:
            if self.iters >= budget or self.iters - self._iter_start >= self.iter_limit:
                return ITER_LIMIT
            lo_b = lb[basis]
            up_b = ub[basis]
            below = lo_b - self.x_b
            above = self.x_b - up_b
            viol = np.maximum(below, above)
            rpiv = int(np.argmax(viol)) if m else -1
            if rpiv < 0 or viol[rpiv] <= tol:
                return OPTIMAL
            under = below[rpiv] >= above[rpiv]
            row = T[rpiv]
            d = T[m + 1]
            # Entering candidates keep the leaving variable moving back
            # toward its violated bound.
            if under:
                can = (((status == _AT_LOWER) & (row < -PIVOT_TOL))
                       | ((status == _AT_UPPER) & (row > PIVOT_TOL))
                       | ((status == _FREE) & (np.abs(row) > PIVOT_TOL)))
            else:
                can = (((status == _AT_LOWER) & (row > PIVOT_TOL))
                       | ((status == _AT_UPPER) & (row < -PIVOT_TOL))
                       | ((status == _FREE) & (np.abs(row) > PIVOT_TOL)))
            can &= (self.vrange > PIVOT_TOL) | (status == _FREE)
            cand = np.nonzero(can)[0]
            if cand.size == 0:
                return INFEASIBLE
            ratios = np.abs(d[cand] / row[cand])
            k = int(np.argmin(ratios))
            best = ratios[k]
            close = cand[np.abs(ratios - best) <= best * 1e-9 + 1e-12]
            q = int(close[np.argmax(np.abs(row[close]))])
            leaving = int(basis[rpiv])
            if under:
                status[leaving], x_nb[leaving] = _AT_LOWER, lb[leaving]
            else:
                status[leaving], x_nb[leaving] = _AT_UPPER, ub[leaving]
            self._pivot(rpiv, q)
            basis[rpiv] = q
            status[q] = _BASIC
            self.iters += 1
            self._recompute_xb()

    # -- driver ----------------------------------------------------------

    def solve(self):
        """Two-phase solve from scratch."""
        data = self.data
        self._iter_start = self.iters
        if np.any(self.lb[: data.n] > self.ub[: data.n] + 1e-12):
            self.solved = False
            return INFEASIBLE
        self._start_basis()
        st = self._primal(data.m)
        if st == ITER_LIMIT:
            return ITER_LIMIT
        if st == UNBOUNDED:
            return INFEASIBLE  # phase-1 objective is bounded below; treat as numeric failure
        art_basic = self.basis >= data.art0
        infeas = float(self.x_b[art_basic].sum()) if art_basic.any() else 0.0
        if infeas > FEAS_TOL * data.b_scale:
            self.solved = False
            return INFEASIBLE
        # Lock artificials at zero for phase 2.
        self.lb[data.art0:] = 0.0
        self.ub[data.art0:] = 0.0
        self.vrange[data.art0:] = 0.0
        self.x_nb[data.art0:] = 0.0
        st = self._primal(data.m + 1)
        self.solved = st == OPTIMAL
        return st

    def resolve_bounds(self, changes):
        """Re-optimize after changing structural bounds; ``changes`` maps
        column index -> (lb, ub).  Falls back to a fresh solve on trouble."""
        if not self.solved:
            raise RuntimeError("resolve_bounds requires a previously solved tableau")
        data = self.data
        self._iter_start = self.iters
        for j, (lo, hi) in changes.items():
            self.lb[j], self.ub[j] = lo, hi
            self.vrange[j] = hi - lo
            if self.status[j] == _AT_LOWER:
                self.x_nb[j] = lo
            elif self.status[j] == _AT_UPPER:
                self.x_nb[j] = hi
        if np.any(self.lb[: data.n] > self.ub[: data.n] + 1e-12):
            self.solved = False
            return INFEASIBLE
        # Bound flips restore dual feasibility for nonbasic columns whose
        # reduced cost has the wrong sign for their current bound side.
        d = self.T[data.m + 1]
        flip_up = ((self.status == _AT_LOWER) & (d < -DUAL_TOL)
                   & np.isfinite(self.ub))
        flip_dn = ((self.status == _AT_UPPER) & (d > DUAL_TOL)
                   & np.isfinite(self.lb))
        self.status[flip_up] = _AT_UPPER
        self.x_nb[flip_up] = self.ub[flip_up]
        self.status[flip_dn] = _AT_LOWER
        self.x_nb[flip_dn] = self.lb[flip_dn]
        self._recompute_xb()
        st = self._dual()
        if st == OPTIMAL:
            # Bound changes can also disturb dual feasibility of nonbasic
            # columns whose status side flipped; clean up with primal.
            st = self._primal(data.m + 1)
        if st in (ITER_LIMIT,):
            return self.solve()
        self.solved = st == OPTIMAL
        return st if st != UNBOUNDED else UNBOUNDED

    def extract(self):
        """(x_structural, objective, dual_gap) for the current optimal basis."""
        data = self.data
        self._recompute_xb()
        x = self.x_nb.copy()
        x[self.basis] = self.x_b
        obj = float(data.c[: data.n] @ x[: data.n])
        y = data.c[self.basis] @ (self.T[: data.m, data.art0:] * self.sigma[None, :])
        d_all = np.concatenate([
            data.c[: data.art0] - y @ data.A[:, : data.art0],
            -(y * self.sigma),
        ])
        nonbasic = self.status != _BASIC
        dual_obj = float(y @ data.b + d_all[nonbasic] @ x[nonbasic])
        return x[: data.n], obj, abs(obj - dual_obj)


def _solve_simplex(data: _SimplexData, lb_over=None, ub_over=None, iter_limit=50000):
    """Two-phase bounded-variable simplex.

    Returns (status, x_structural, objective, iterations, dual_gap).
    """
    tab = _Tableau(data, lb_over, ub_over, iter_limit)
    st = tab.solve()
    if st == OPTIMAL:
        x, obj, dgap = tab.extract()
        return OPTIMAL, x, obj, tab.iters, dgap
    if st == UNBOUNDED:
        return UNBOUNDED, None, -math.inf, tab.iters, 0.0
    if st == ITER_LIMIT:
        return ITER_LIMIT, None, math.inf, tab.iters, 0.0
    return INFEASIBLE, None, math.inf, tab.iters, 0.0


def solve_lp(model: MilpModel, lb=None, ub=None, iter_limit=50000) -> MilpResult:
    """Solve the LP relaxation (integrality ignored)."""
    data = _SimplexData(model)
    status, x, obj, iters, dgap = _solve_simplex(data, lb, ub, iter_limit)
    return MilpResult(status, obj, x, 0, iters, 0.0 if status == OPTIMAL else math.inf, dgap)


# ----------------------------------------------------------------------
# Branch and bound
# ----------------------------------------------------------------------

def _fractional(x, int_cols):
    frac = [(abs(x[j] - round(x[j])), j) for j in int_cols]
    worst = max(frac, default=(0.0, -1))
    return [j for f, j in frac if f > INT_TOL], worst[1] if worst[0] > INT_TOL else -1


def solve_milp(model: MilpModel, gap_tol=1e-6, node_limit=200_000,
               iter_limit=50000) -> MilpResult:
    """Best-bound branch-and-bound with depth-first dives.

    Branches on the most fractional integral column; the incumbent is
    re-verified against the model rows before acceptance.  Returns the
    incumbent with a proven relative gap of at most ``gap_tol`` (status
    ``iter_limit`` carries the best incumbent and gap when the node limit
    is exhausted).
    """
    data = _SimplexData(model)
    int_cols = model.integer_columns()
    lb0 = np.array([c.lb for c in model.columns])
    ub0 = np.array([c.ub for c in model.columns])
    for j in int_cols:
        lb0[j] = math.ceil(lb0[j] - INT_TOL)
        ub0[j] = math.floor(ub0[j] + INT_TOL)

    best_x = None
    best_obj = math.inf
    nodes = 0
    heap: list = []
    tie = 0
    hit_limit = False
    tab = _Tableau(data, lb0, ub0, iter_limit)

    def push(bound, clb, cub):
        nonlocal tie
        heapq.heappush(heap, (bound, tie, clb, cub))
        tie += 1

    def accept(x, obj):
        nonlocal best_x, best_obj
        if obj >= best_obj - 1e-12:
            return
        cand = x.copy()
        for j in int_cols:
            cand[j] = round(cand[j])
        if not model.check_feasible(cand, FEAS_TOL * 10):
            best_x = cand
            best_obj = model.objective_value(cand)

    def node_solve(clb, cub):
        """Warm re-solve against the node bounds, falling back to a fresh
        factorization when the previous basis is unusable."""
        if tab.solved:
            changes = {}
            for j in np.nonzero((tab.lb[: data.n] != clb) | (tab.ub[: data.n] != cub))[0]:
                changes[int(j)] = (clb[j], cub[j])
            return tab.resolve_bounds(changes)
        tab.lb[: data.n] = clb
        tab.ub[: data.n] = cub
        return tab.solve()

    def rounding_heuristic(x):
        hlb, hub = lb0.copy(), ub0.copy()
        for j in int_cols:
            v = float(min(max(round(x[j]), lb0[j]), ub0[j]))
            hlb[j] = hub[j] = v
        st, hx, hobj, _, _ = _solve_simplex(data, hlb, hub, iter_limit)
        if st == OPTIMAL:
            accept(hx, hobj)

    current = (-math.inf, lb0, ub0)
    root_unbounded = False
    while current is not None or heap:
        if current is None:
            bound, _, clb, cub = heapq.heappop(heap)
            current = (bound, clb, cub)
        bound, clb, cub = current
        current = None
        cutoff = best_obj - gap_tol * max(1.0, abs(best_obj))
        if bound >= cutoff:
            continue
        if nodes >= node_limit:
            push(bound, clb, cub)
            hit_limit = True
            break
        nodes += 1
        st = node_solve(clb, cub)
        if st == ITER_LIMIT:
            push(bound, clb, cub)
            hit_limit = True
            break
        if st == UNBOUNDED:
            if nodes == 1:
                root_unbounded = True
                break
            continue
        if st != OPTIMAL:
            continue
        x, obj, _ = tab.extract()
        if obj >= cutoff:
            continue
        frac, jbr = _fractional(x, int_cols)
        if not frac:
            accept(x, obj)
            continue
        if nodes == 1:
            rounding_heuristic(x)
        v = x[jbr]
        dn_lb, dn_ub = clb.copy(), cub.copy()
        dn_ub[jbr] = math.floor(v)
        up_lb, up_ub = clb.copy(), cub.copy()
        up_lb[jbr] = math.ceil(v)
        if v - math.floor(v) <= 0.5:
            first, second = (obj, dn_lb, dn_ub), (obj, up_lb, up_ub)
        else:
            first, second = (obj, up_lb, up_ub), (obj, dn_lb, dn_ub)
        push(*second)
        current = first
    total_iters = tab.iters

    if root_unbounded:
        return MilpResult(UNBOUNDED, -math.inf, None, nodes, total_iters, math.inf)
    open_bounds = [h[0] for h in heap]
    gap = 0.0
    if best_x is not None and open_bounds:
        gap = max(0.0, (best_obj - min(open_bounds)) / max(1.0, abs(best_obj)))
    if hit_limit:
        return MilpResult(ITER_LIMIT, best_obj, best_x, nodes, total_iters,
                          gap if best_x is not None else math.inf)
    if best_x is None:
        return MilpResult(INFEASIBLE, math.inf, None, nodes, total_iters, math.inf)
    return MilpResult(OPTIMAL, best_obj, best_x, nodes, total_iters, gap)


# ----------------------------------------------------------------------
# CPLEX-style LP file writer / reader
# ----------------------------------------------------------------------

_NAME_RE = re.compile(r"[^A-Za-z0-9_]")


def _sanitize(name: str) -> str:
    out = _NAME_RE.sub("_", name)
    if not out or out[0].isdigit() or out[0] in "eE.":
        out = "x_" + out
    return out


def _num(v: float) -> str:
    return f"{v:.17g}"


def write_lp(model: MilpModel, path):
    """Write the model in CPLEX LP text format.

    Every column gets an explicit Bounds line (in column order, so the
    reader can reconstruct the exact column ordering).
    """
    names = [_sanitize(c.name) for c in model.columns]
    if len(set(names)) != len(names):
        raise ModelError("column names collide after LP-format sanitization")
    lines = [f"\\ Problem name: {_sanitize(model.name)}", "Minimize"]

    def terms(coeffs):
        toks = []
        for j, v in coeffs:
            toks.append("-" if v < 0 else "+")
            toks.append(_num(abs(v)))
            toks.append(names[j])
        return toks

    def emit(prefix, toks, out):
        line = prefix
        for t in toks:
            if len(line) + len(t) + 1 > 220:
                out.append(line)
                line = "   " + t
            else:
                line += " " + t
        out.append(line)

    obj = [(j, c.obj) for j, c in enumerate(model.columns) if c.obj != 0.0]
    if not obj:
        obj = [(0, 0.0)] if model.columns else []
    emit(" obj:", terms(obj), lines)
    lines.append("Subject To")
    rnames = set()
    for r in model.rows:
        rn = _sanitize(r.name)
        if rn in rnames:
            raise ModelError("row names collide after LP-format sanitization")
        rnames.add(rn)
        if not r.coeffs:
            raise ModelError(f"row {r.name!r} has no coefficients")
        toks = terms(r.coeffs) + [r.sense if r.sense != EQ else "=", _num(r.rhs)]
        emit(f" {rn}:", toks, lines)
    lines.append("Bounds")
    for j, c in enumerate(model.columns):
        lo, hi = c.lb, c.ub
        if math.isinf(lo) and math.isinf(hi):
            lines.append(f" {names[j]} free")
        elif lo == hi:
            lines.append(f" {names[j]} = {_num(lo)}")
        elif math.isinf(lo):
            lines.append(f" -inf <= {names[j]} <= {_num(hi)}")
        elif math.isinf(hi):
            lines.append(f" {names[j]} >= {_num(lo)}")
        else:
            lines.append(f" {_num(lo)} <= {names[j]} <= {_num(hi)}")
    binaries = [names[j] for j, c in enumerate(model.columns)
                if c.integer and c.lb >= 0 and c.ub <= 1]
    generals = [names[j] for j, c in enumerate(model.columns)
                if c.integer and names[j] not in set(binaries)]
    if binaries:
        lines.append("Binaries")
        for i in range(0, len(binaries), 12):
            lines.append(" " + " ".join(binaries[i:i + 12]))
    if generals:
        lines.append("Generals")
        for i in range(0, len(generals), 12):
            lines.append(" " + " ".join(generals[i:i + 12]))
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


_SECTION_RE = re.compile(
    r"^(minimize|maximize|subject to|such that|st|s\.t\.|bounds|binaries|binary|"
    r"generals|general|end)\s*$",
    re.IGNORECASE,
)


def _parse_expr(tokens):
    """Parse '+ c x - c y ...' into [(name, coef), ...]; coefficient and
    leading sign optional."""
    out = []
    sign = 1.0
    coef = None
    for tok in tokens:
        if tok == "+":
            sign, coef = 1.0, None
        elif tok == "-":
            sign, coef = -1.0, None
        else:
            try:
                v = float(tok)
            except ValueError:
                out.append((tok, sign * (1.0 if coef is None else coef)))
                sign, coef = 1.0, None
            else:
                coef = v if coef is None else coef * v
    return out


def read_lp(path) -> MilpModel:
    """Minimal reader for the subset of the LP format written by
    :func:`write_lp` (round-trip support)."""
    with open(path, encoding="utf-8") as fh:
        raw = fh.read()
    model_name = "model"
    body_lines = []
    for line in raw.splitlines():
        if line.lstrip().startswith("\\"):
            m = re.search(r"Problem name:\s*(\S+)", line)
            if m:
                model_name = m.group(1)
            continue
        body_lines.append(line)

    sections: dict[str, list[str]] = {}
    cur = None
    for line in body_lines:
        key = line.strip().lower()
        m = _SECTION_RE.match(key)
        if m:
            word = m.group(1).lower()
            if word in ("subject to", "such that", "st", "s.t."):
                word = "subject to"
            if word in ("binary",):
                word = "binaries"
            if word in ("general",):
                word = "generals"
            cur = word
            sections.setdefault(cur, [])
            continue
        if cur and line.strip():
            sections[cur].append(line)
    if "maximize" in sections:
        raise ModelError("only minimization models are supported")
    if "minimize" not in sections or "bounds" not in sections:
        raise ModelError("LP file lacks a Minimize or Bounds section")

    def split_named(lines):
        """Group continuation lines into 'name: tokens' chunks."""
        chunks = []
        for line in lines:
            if ":" in line and re.match(r"\s*[A-Za-z0-9_.]+\s*:", line):
                nm, rest = line.split(":", 1)
                chunks.append((nm.strip(), rest.split()))
            else:
                if not chunks:
                    raise ModelError("expression continuation before any name")
                chunks[-1][1].extend(line.split())
        return chunks

    obj_chunks = split_named(sections["minimize"])
    obj_terms: dict[str, float] = {}
    for _, toks in obj_chunks:
        for nm, v in _parse_expr(toks):
            obj_terms[nm] = obj_terms.get(nm, 0.0) + v

    bounds: list[tuple[str, float, float]] = []
    for line in sections["bounds"]:
        toks = line.split()
        if len(toks) == 2 and toks[1].lower() == "free":
            bounds.append((toks[0], -math.inf, math.inf))
        elif len(toks) == 3 and toks[1] == "=":
            v = float(toks[2])
            bounds.append((toks[0], v, v))
        elif len(toks) == 3 and toks[1] == ">=":
            bounds.append((toks[0], float(toks[2]), math.inf))
        elif len(toks) == 3 and toks[1] == "<=":
            bounds.append((toks[0], -math.inf, float(toks[2])))
        elif len(toks) == 5 and toks[1] == "<=" and toks[3] == "<=":
            bounds.append((toks[2], float(toks[0]), float(toks[4])))
        else:
            raise ModelError(f"unsupported bounds line: {line.strip()!r}")

    integers = set()
    binaries = set()
    for key, bag in (("binaries", binaries), ("generals", integers)):
        for line in sections.get(key, []):
            bag.update(line.split())

    model = MilpModel(model_name)
    for nm, lo, hi in bounds:
        if nm in binaries:
            lo = max(lo, 0.0)
            hi = min(hi, 1.0)
        model.add_column(nm, lo, hi, obj_terms.get(nm, 0.0),
                         integer=nm in integers or nm in binaries)
    known = set(model._col_index)
    extra = set(obj_terms) - known
    if extra:
        raise ModelError(f"objective references columns missing from Bounds: {sorted(extra)}")

    for rname, toks in split_named(sections.get("subject to", [])):
        sense = None
        for s in (LE, GE, "="):
            if s in toks:
                sense = s
                break
        if sense is None:
            raise ModelError(f"row {rname!r} has no sense")
        k = toks.index(sense)
        rhs = float(toks[k + 1])
        coeffs = []
        for nm, v in _parse_expr(toks[:k]):
            if nm not in model._col_index:
                raise ModelError(f"row {rname!r} references unknown column {nm!r}")
            coeffs.append((model.column_index(nm), v))
        model.add_row(rname, coeffs, EQ if sense == "=" else sense, rhs)
    return model

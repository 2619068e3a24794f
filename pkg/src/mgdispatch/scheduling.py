"""Day-ahead scheduling of an isolated microgrid as a MILP.

The dispatchable fleet (microturbine units plus one battery) must cover
the revised equivalent load at minimum cost: fuel, startup, spinning
reserve and interruptible-load subsidies.  Reserve adequacy against the
equivalent-load forecast-error distribution is a chance constraint at
confidence ``alpha``; two deterministic transformations are provided:

* ``bigm`` replicates the 0-1 indicator construction with a big-M
  sandwich, one binary per grid point of the error sequence;
* ``quantile`` collapses the same constraint to one linear reserve row
  per period using the sequence quantile (far fewer binaries, provably
  the same optimum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .milp import EQ, GE, LE, OPTIMAL, MilpModel, MilpResult, solve_milp
from .sequences import ProbSeq, expectation, reserve_quantile

MODES = ("bigm", "quantile")
COST_MATCH_TOL = 1e-6
POWER_TOL = 1e-6
SOC_TOL = 1e-9


class ScheduleError(ValueError):
    """Invalid or infeasible-by-construction problem."""


class SolutionError(RuntimeError):
    """Solver output failed independent re-validation."""


@dataclass(frozen=True)
class MtUnit:
    """One microturbine type: fixed/marginal fuel cost, limits, startup and
    reserve prices, and how many identical units exist."""

    psi: float          # $/h while committed
    xi: float           # $/kWh marginal
    p_min: float        # kW
    p_max: float        # kW
    tau: float          # $ per startup
    varsigma_r: float   # $/kWh spinning reserve
    count: int = 1

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ScheduleError(f"need 0 <= p_min <= p_max, got [{self.p_min}, {self.p_max}]")
        if min(self.psi, self.xi, self.tau, self.varsigma_r) < 0:
            raise ScheduleError("unit costs must be non-negative")
        if self.count < 1:
            raise ScheduleError("unit count must be >= 1")


@dataclass(frozen=True)
class EssParams:
    p_ch_max: float
    p_dc_max: float
    s_min: float
    s_max: float
    eta_ch: float
    eta_dc: float
    s_star: float

    def __post_init__(self):
        if not (0 < self.eta_ch <= 1 and 0 < self.eta_dc <= 1):
            raise ScheduleError("efficiencies must lie in (0, 1]")
        if not self.s_min <= self.s_star <= self.s_max:
            raise ScheduleError("need s_min <= s_star <= s_max")
        if min(self.p_ch_max, self.p_dc_max) < 0:
            raise ScheduleError("ESS power limits must be non-negative")


# Microturbine fleet and battery of the bundled case study.
DEFAULT_FLEET = (
    MtUnit(psi=1.2, xi=0.35, p_min=5.0, p_max=30.0, tau=1.6, varsigma_r=0.04, count=2),
    MtUnit(psi=1.0, xi=0.26, p_min=10.0, p_max=65.0, tau=3.5, varsigma_r=0.04, count=1),
)
DEFAULT_ESS = EssParams(p_ch_max=40.0, p_dc_max=40.0, s_min=32.0, s_max=160.0,
                        eta_ch=0.9, eta_dc=0.9, s_star=96.0)


@dataclass
class ScheduleProblem:
    el_revised: np.ndarray            # revised equivalent load per period, kW
    el_err_seq: list                  # ProbSeq per period
    alpha: float
    units: tuple = DEFAULT_FLEET
    ess: EssParams = DEFAULT_ESS
    cnload: np.ndarray | None = None  # exogenous controllable load, kW
    kappa: float = 0.1                # interruption subsidy, $/kWh
    rho: float = 0.1                  # interruptible fraction of the EL
    big_phi: float | None = None      # auto when None
    mode: str = "quantile"
    u0: tuple | None = None           # initial commitment per expanded unit
    forbid_simultaneous_ess: bool = False

    def __post_init__(self):
        self.el_revised = np.asarray(self.el_revised, dtype=float)
        self.T = len(self.el_revised)
        if self.T < 1:
            raise ScheduleError("need at least one period")
        if len(self.el_err_seq) != self.T:
            raise ScheduleError("one error sequence per period required")
        if not 0.0 < self.alpha <= 1.0:
            raise ScheduleError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.rho <= 1.0:
            raise ScheduleError(f"rho must lie in [0, 1], got {self.rho}")
        if self.mode not in MODES:
            raise ScheduleError(f"mode must be one of {MODES}")
        if self.cnload is None:
            self.cnload = np.zeros(self.T)
        else:
            self.cnload = np.asarray(self.cnload, dtype=float)
            if len(self.cnload) != self.T:
                raise ScheduleError("cnload length must match the horizon")
        if self.big_phi is not None and self.big_phi <= 0:
            raise ScheduleError("big_phi must be positive")

    def expanded_units(self) -> list[MtUnit]:
        """One entry per physical unit, type order preserved."""
        return [u for u in self.units for _ in range(u.count)]


def equivalent_load(load_fc, wt_fc, pv_fc, e_load, e_wt, e_pv) -> np.ndarray:
    """Revised equivalent load: revised load minus revised WT and PV.

    Each component is revised (forecast minus expected error, clamped at
    zero) before combining, so the result can still be negative when
    renewables exceed demand.
    """
    arrays = [np.asarray(a, dtype=float) for a in (load_fc, wt_fc, pv_fc)]
    errs = [np.asarray(a, dtype=float) for a in (e_load, e_wt, e_pv)]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays + errs):
        raise ScheduleError("forecast and error arrays must share one length")
    rl, rw, rp = (np.maximum(a - e, 0.0) for a, e in zip(arrays, errs))
    return rl - rw - rp


def _auto_big_phi(problem: ScheduleProblem) -> float:
    cap = sum(u.p_max * u.count for u in problem.units) + problem.ess.p_dc_max
    width = max(s.step * (len(s) - 1) for s in problem.el_err_seq)
    return 10.0 * (cap + width)


def _check_dispatchable(problem: ScheduleProblem):
    """Period-wise power-balance screening before any solve."""
    cap = sum(u.p_max * u.count for u in problem.units) + problem.ess.p_dc_max
    for t in range(problem.T):
        demand = problem.el_revised[t] + problem.cnload[t]
        ie_cap = max(0.0, problem.rho * problem.el_revised[t])
        if demand - ie_cap > cap + 1e-9:
            raise ScheduleError(
                f"period {t + 1}: demand {demand:.3f} kW exceeds total generation "
                f"and discharge capability {cap:.3f} kW"
            )
        if demand < -problem.ess.p_ch_max - 1e-9:
            raise ScheduleError(
                f"period {t + 1}: renewable excess {-demand:.3f} kW exceeds "
                f"charging capability {problem.ess.p_ch_max:.3f} kW"
            )


@dataclass
class BuiltModel:
    milp: MilpModel
    problem: ScheduleProblem
    mode: str
    idx: dict                 # (kind, ...) -> column index
    expectations: np.ndarray  # E(sigma_EL) per period
    reserve_targets: np.ndarray | None  # quantile mode only


def _build_common(problem: ScheduleProblem, mode: str) -> BuiltModel:
    _check_dispatchable(problem)
    units = problem.expanded_units()
    ess = problem.ess
    T = problem.T
    u0 = problem.u0 or tuple(0 for _ in units)
    if len(u0) != len(units):
        raise ScheduleError("u0 must list one initial state per expanded unit")

    m = MilpModel(f"dispatch_{mode}")
    idx: dict = {}

    def col(key, *args, **kw):
        idx[key] = m.add_column(*args, **kw)
        return idx[key]

    for t in range(1, T + 1):
        ie_cap = max(0.0, problem.rho * problem.el_revised[t - 1])
        for g, u in enumerate(units):
            col(("p", g, t), f"pmt_{g}_{t}", 0.0, u.p_max, u.xi)
            col(("r", g, t), f"rmt_{g}_{t}", 0.0, u.p_max, u.varsigma_r)
            col(("u", g, t), f"u_{g}_{t}", 0.0, 1.0, u.psi, integer=True)
            col(("s", g, t), f"su_{g}_{t}", 0.0, 1.0, u.tau, integer=True)
        col(("ch", t), f"pch_{t}", 0.0, ess.p_ch_max)
        col(("dc", t), f"pdc_{t}", 0.0, ess.p_dc_max)
        if t < T:
            col(("soc", t), f"soc_{t}", ess.s_min, ess.s_max)
        else:
            col(("soc", t), f"soc_{t}", ess.s_star, ess.s_star)
        col(("ress", t), f"ress_{t}", 0.0, ess.p_dc_max)
        col(("ie", t), f"pie_{t}", 0.0, ie_cap, problem.kappa)
        if problem.forbid_simultaneous_ess:
            col(("y", t), f"essmode_{t}", 0.0, 1.0, 0.0, integer=True)

    for t in range(1, T + 1):
        m.add_row(
            f"balance_{t}",
            [(idx[("p", g, t)], 1.0) for g in range(len(units))]
            + [(idx[("dc", t)], 1.0), (idx[("ch", t)], -1.0), (idx[("ie", t)], 1.0)],
            EQ,
            problem.el_revised[t - 1] + problem.cnload[t - 1],
        )
        for g, u in enumerate(units):
            m.add_row(f"cap_{g}_{t}",
                      [(idx[("p", g, t)], 1.0), (idx[("u", g, t)], -u.p_max)], LE, 0.0)
            m.add_row(f"minout_{g}_{t}",
                      [(idx[("p", g, t)], 1.0), (idx[("u", g, t)], -u.p_min)], GE, 0.0)
            m.add_row(f"headroom_{g}_{t}",
                      [(idx[("p", g, t)], 1.0), (idx[("r", g, t)], 1.0),
                       (idx[("u", g, t)], -u.p_max)], LE, 0.0)
            if t == 1:
                m.add_row(f"startup_{g}_{t}",
                          [(idx[("s", g, t)], 1.0), (idx[("u", g, t)], -1.0)],
                          GE, -float(u0[g]))
            else:
                m.add_row(f"startup_{g}_{t}",
                          [(idx[("s", g, t)], 1.0), (idx[("u", g, t)], -1.0),
                           (idx[("u", g, t - 1)], 1.0)], GE, 0.0)

        # Battery energy recursion (soc_t is the stored energy at the END of
        # period t; s_star is the level entering period 1 and required at the end).
        flow = [(idx[("soc", t)], 1.0),
                (idx[("ch", t)], -ess.eta_ch), (idx[("dc", t)], 1.0 / ess.eta_dc)]
        if t == 1:
            m.add_row(f"socflow_{t}", flow, EQ, ess.s_star)
        else:
            m.add_row(f"socflow_{t}", [(idx[("soc", t - 1)], -1.0)] + flow, EQ, 0.0)

        # ESS reserve limited by energy above the floor at the start of the
        # period and by unused discharge capability.
        if t == 1:
            m.add_row(f"resssoc_{t}", [(idx[("ress", t)], 1.0)], LE,
                      ess.eta_dc * (ess.s_star - ess.s_min))
        else:
            m.add_row(f"resssoc_{t}",
                      [(idx[("ress", t)], 1.0), (idx[("soc", t - 1)], -ess.eta_dc)],
                      LE, -ess.eta_dc * ess.s_min)
        m.add_row(f"ressdc_{t}", [(idx[("ress", t)], 1.0), (idx[("dc", t)], 1.0)],
                  LE, ess.p_dc_max)

        if problem.forbid_simultaneous_ess:
            m.add_row(f"chmode_{t}",
                      [(idx[("ch", t)], 1.0), (idx[("y", t)], -ess.p_ch_max)], LE, 0.0)
            m.add_row(f"dcmode_{t}",
                      [(idx[("dc", t)], 1.0), (idx[("y", t)], ess.p_dc_max)],
                      LE, ess.p_dc_max)

    # Identical units inside a type are interchangeable; ordering their
    # commitment prunes symmetric branches.
    g = 0
    for u in problem.units:
        for k in range(u.count - 1):
            for t in range(1, T + 1):
                m.add_row(f"sym_{g + k}_{t}",
                          [(idx[("u", g + k, t)], 1.0), (idx[("u", g + k + 1, t)], -1.0)],
                          GE, 0.0)
        g += u.count

    exps = np.array([expectation(s) for s in problem.el_err_seq])
    return BuiltModel(m, problem, mode, idx, exps, None)


def build_bigm_model(problem: ScheduleProblem) -> BuiltModel:
    """Chance constraint as 0-1 indicators with a big-M sandwich.

    For every grid value of the period's error sequence, a binary marks
    whether the committed reserve covers that outcome; the probability-
    weighted sum of the marks must reach ``alpha``.
    """
    built = _build_common(problem, "bigm")
    m, idx = built.milp, built.idx
    units = problem.expanded_units()
    phi = problem.big_phi if problem.big_phi is not None else _auto_big_phi(problem)
    for t in range(1, problem.T + 1):
        seq: ProbSeq = problem.el_err_seq[t - 1]
        e_t = built.expectations[t - 1]
        reserve = [(idx[("r", g, t)], 1.0) for g in range(len(units))] \
            + [(idx[("ress", t)], 1.0)]
        w_cols = []
        for i, v_i in enumerate(seq.values):
            w = m.add_column(f"w_{i}_{t}", 0.0, 1.0, 0.0, integer=True)
            idx[("w", i, t)] = w
            w_cols.append((w, float(seq.probs[i])))
            # (G + v_i - E)/phi <= w <= 1 + (G + v_i - E)/phi
            m.add_row(f"wlo_{i}_{t}", [(w, phi)] + [(c, -1.0) for c, _ in reserve],
                      GE, v_i - e_t)
            m.add_row(f"whi_{i}_{t}", [(w, phi)] + [(c, -1.0) for c, _ in reserve],
                      LE, phi + v_i - e_t)
        m.add_row(f"chance_{t}", w_cols, GE, problem.alpha)
    return built


def build_quantile_model(problem: ScheduleProblem) -> BuiltModel:
    """Chance constraint reduced to one linear reserve row per period.

    The indicator thresholds are monotone along the error grid, so the
    chance constraint holds exactly when total reserve reaches the
    grid quantile ``E(sigma) - q_{1-alpha}``.
    """
    built = _build_common(problem, "quantile")
    m, idx = built.milp, built.idx
    units = problem.expanded_units()
    targets = np.array([reserve_quantile(s, problem.alpha) for s in problem.el_err_seq])
    built.reserve_targets = targets
    for t in range(1, problem.T + 1):
        m.add_row(
            f"reserve_{t}",
            [(idx[("r", g, t)], 1.0) for g in range(len(units))]
            + [(idx[("ress", t)], 1.0)],
            GE, float(targets[t - 1]),
        )
    return built


def build_model(problem: ScheduleProblem) -> BuiltModel:
    return build_bigm_model(problem) if problem.mode == "bigm" \
        else build_quantile_model(problem)


# ----------------------------------------------------------------------
# Solution extraction and validation
# ----------------------------------------------------------------------

@dataclass
class ScheduleSolution:
    on: np.ndarray          # (n_units, T) 0/1
    startup: np.ndarray     # (n_units, T) 0/1
    p_mt: np.ndarray        # (n_units, T) kW
    r_mt: np.ndarray        # (n_units, T) kW
    p_ch: np.ndarray        # (T,) kW
    p_dc: np.ndarray        # (T,) kW
    soc: np.ndarray         # (T+1,) kWh, soc[0] = s_star
    ress: np.ndarray        # (T,) kW
    p_ie: np.ndarray        # (T,) kW
    total_cost: float
    cost_breakdown: dict
    alpha: float
    mode: str

    def reserve_total(self) -> np.ndarray:
        return self.r_mt.sum(axis=0) + self.ress

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "mode": self.mode,
            "total_cost": self.total_cost,
            "cost_breakdown": self.cost_breakdown,
            "on": self.on.tolist(),
            "startup": self.startup.tolist(),
            "p_mt_kw": self.p_mt.tolist(),
            "r_mt_kw": self.r_mt.tolist(),
            "p_ch_kw": self.p_ch.tolist(),
            "p_dc_kw": self.p_dc.tolist(),
            "soc_kwh": self.soc.tolist(),
            "ess_reserve_kw": self.ress.tolist(),
            "interrupted_kw": self.p_ie.tolist(),
        }


def _recompute_cost(problem: ScheduleProblem, sol: ScheduleSolution) -> dict:
    units = problem.expanded_units()
    fuel = startup = reserve = 0.0
    for g, u in enumerate(units):
        fuel += float(np.sum(sol.on[g] * u.psi + sol.p_mt[g] * u.xi))
        startup += float(np.sum(sol.startup[g] * u.tau))
        reserve += float(np.sum(sol.r_mt[g] * u.varsigma_r))
    subsidy = float(np.sum(sol.p_ie) * problem.kappa)
    return {
        "fuel": fuel,
        "startup": startup,
        "reserve": reserve,
        "subsidy": subsidy,
        "total": fuel + startup + reserve + subsidy,
    }


def extract_solution(built: BuiltModel, result: MilpResult) -> ScheduleSolution:
    """Map solver columns back to named dispatch quantities.

    The total cost is recomputed from first principles and must match the
    solver objective within ``COST_MATCH_TOL``.
    """
    if result.status != OPTIMAL or result.x is None:
        raise SolutionError(f"no usable solution: solver status {result.status!r}")
    problem = built.problem
    units = problem.expanded_units()
    T, n = problem.T, len(units)
    x = result.x
    idx = built.idx

    def grid(kind):
        return np.array([[x[idx[(kind, g, t)]] for t in range(1, T + 1)]
                         for g in range(n)])

    def series(kind):
        return np.array([x[idx[(kind, t)]] for t in range(1, T + 1)])

    on, su = grid("u"), grid("s")
    for name, arr in (("commitment", on), ("startup", su)):
        if np.abs(arr - np.rint(arr)).max() > 1e-6:
            raise SolutionError(f"{name} variables are not integral")
    on = np.rint(on)
    su = np.rint(su)
    soc = np.concatenate([[problem.ess.s_star], series("soc")])
    sol = ScheduleSolution(
        on=on, startup=su, p_mt=grid("p"), r_mt=grid("r"),
        p_ch=series("ch"), p_dc=series("dc"), soc=soc,
        ress=series("ress"), p_ie=series("ie"),
        total_cost=float(result.objective),
        cost_breakdown={}, alpha=problem.alpha, mode=built.mode,
    )
    breakdown = _recompute_cost(problem, sol)
    if abs(breakdown["total"] - result.objective) > COST_MATCH_TOL:
        raise SolutionError(
            f"recomputed cost {breakdown['total']!r} does not match solver "
            f"objective {result.objective!r}"
        )
    sol.cost_breakdown = breakdown
    validate_solution(problem, sol)
    return sol


def validate_solution(problem: ScheduleProblem, sol: ScheduleSolution,
                      power_tol: float = POWER_TOL, soc_tol: float = SOC_TOL):
    """Independent re-validation of every physical constraint.

    Raises :class:`SolutionError` listing the first violation found.
    Checks power balance, unit limits, startup linking, the battery energy
    replay with terminal condition, reserve headroom and the chance
    constraint at the problem's confidence level.
    """
    units = problem.expanded_units()
    ess = problem.ess
    T = problem.T
    u0 = problem.u0 or tuple(0 for _ in units)

    def fail(msg):
        raise SolutionError(msg)

    for g, u in enumerate(units):
        for t in range(T):
            on = sol.on[g, t]
            if on not in (0.0, 1.0) or sol.startup[g, t] not in (0.0, 1.0):
                fail(f"unit {g} period {t + 1}: non-binary commitment")
            p, r = sol.p_mt[g, t], sol.r_mt[g, t]
            if p < on * u.p_min - power_tol or p > on * u.p_max + power_tol:
                fail(f"unit {g} period {t + 1}: output {p} outside commitment limits")
            if r < -power_tol or p + r > on * u.p_max + power_tol:
                fail(f"unit {g} period {t + 1}: reserve {r} exceeds headroom")
            prev = u0[g] if t == 0 else sol.on[g, t - 1]
            if sol.startup[g, t] < sol.on[g, t] - prev - 1e-9:
                fail(f"unit {g} period {t + 1}: startup not linked to commitment")

    balance = (sol.p_mt.sum(axis=0) + sol.p_dc - sol.p_ch + sol.p_ie
               - problem.el_revised - problem.cnload)
    worst = float(np.abs(balance).max())
    if worst > power_tol:
        fail(f"power balance violated by {worst} kW")

    ie_cap = np.maximum(0.0, problem.rho * problem.el_revised)
    if np.any(sol.p_ie > ie_cap + power_tol) or np.any(sol.p_ie < -power_tol):
        fail("interrupted load outside its allowed fraction")

    if np.any(sol.p_ch < -power_tol) or np.any(sol.p_ch > ess.p_ch_max + power_tol):
        fail("charging power outside limits")
    if np.any(sol.p_dc < -power_tol) or np.any(sol.p_dc > ess.p_dc_max + power_tol):
        fail("discharging power outside limits")

    soc = ess.s_star
    for t in range(T):
        soc = soc + ess.eta_ch * sol.p_ch[t] - sol.p_dc[t] / ess.eta_dc
        if abs(soc - sol.soc[t + 1]) > soc_tol:
            fail(f"period {t + 1}: stored-energy replay drifts by {abs(soc - sol.soc[t + 1])}")
        if soc < ess.s_min - 1e-6 or soc > ess.s_max + 1e-6:
            fail(f"period {t + 1}: stored energy {soc} outside capacity limits")
    if abs(sol.soc[0] - ess.s_star) > soc_tol or abs(sol.soc[T] - ess.s_star) > 1e-6:
        fail("battery does not start and end at the required level")

    for t in range(T):
        start_soc = sol.soc[t]
        cap_energy = ess.eta_dc * (start_soc - ess.s_min)
        cap_power = ess.p_dc_max - sol.p_dc[t]
        if sol.ress[t] > min(cap_energy, cap_power) + power_tol or sol.ress[t] < -power_tol:
            fail(f"period {t + 1}: ESS reserve {sol.ress[t]} exceeds its capability")

    totals = sol.reserve_total()
    for t in range(T):
        seq: ProbSeq = problem.el_err_seq[t]
        e_t = expectation(seq)
        covered = float(seq.probs[seq.values >= e_t - totals[t] - 1e-9].sum())
        if covered < problem.alpha - 1e-9:
            fail(f"period {t + 1}: reserve covers probability {covered} < alpha")


def solve_schedule(problem: ScheduleProblem, gap_tol: float = 0.0,
                   node_limit: int = 200_000) -> tuple[ScheduleSolution, BuiltModel, MilpResult]:
    built = build_model(problem)
    result = solve_milp(built.milp, gap_tol=gap_tol, node_limit=node_limit)
    if result.status != OPTIMAL:
        raise ScheduleError(f"scheduling MILP ended with status {result.status!r}")
    return extract_solution(built, result), built, result


def monte_carlo_coverage(problem: ScheduleProblem, sol: ScheduleSolution,
                         n_draws: int = 10_000, seed: int = 0) -> np.ndarray:
    """Empirical per-period probability that the committed reserve covers
    ``E(sigma) - sigma`` under resampling of the error sequence."""
    rng = np.random.default_rng(seed)
    totals = sol.reserve_total()
    out = np.empty(problem.T)
    for t in range(problem.T):
        seq: ProbSeq = problem.el_err_seq[t]
        draws = rng.choice(seq.values, size=n_draws, p=seq.probs)
        out[t] = float(np.mean(totals[t] + 1e-9 >= expectation(seq) - draws))
    return out

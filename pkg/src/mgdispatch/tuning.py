"""Sequential hyperparameter search over architecture, learning rates,
replay parameters and the reward-function choice.

Two strategies share one interface: pure random sampling, and a
sequential model-based loop that fits a Gaussian-process surrogate
(squared-exponential kernel, median-heuristic length scale) on completed
trials and suggests the expected-improvement maximizer over a random
candidate pool.  Both minimize the per-trial objective (test MAPE for
the forecasting use)."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .forecast import train_subseries

WARMUP_FLOOR = 5
CANDIDATE_POOL = 512


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def sample(self, rng):
        return self.choices[rng.integers(len(self.choices))]

    def width(self) -> int:
        return len(self.choices)

    def encode(self, value) -> list[float]:
        out = [0.0] * len(self.choices)
        out[self.choices.index(value)] = 1.0
        return out


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def sample(self, rng):
        return float(rng.uniform(self.lo, self.hi))

    def width(self) -> int:
        return 1

    def encode(self, value) -> list[float]:
        if self.hi == self.lo:
            return [0.0]
        return [(value - self.lo) / (self.hi - self.lo)]


@dataclass(frozen=True)
class LogUniform:
    lo: float
    hi: float

    def sample(self, rng):
        return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))

    def width(self) -> int:
        return 1

    def encode(self, value) -> list[float]:
        if self.hi == self.lo:
            return [0.0]
        return [(math.log(value) - math.log(self.lo))
                / (math.log(self.hi) - math.log(self.lo))]


def ddpg_search_space() -> dict:
    """Default space for the forecasting agent."""
    return {
        "hidden_width": Categorical((16, 32, 64, 128)),
        "depth": Categorical((1, 2, 3)),
        "hidden_activation": Categorical(("relu", "tanh", "sigmoid")),
        "lr_actor": LogUniform(1e-4, 1e-2),
        "lr_critic": LogUniform(1e-4, 1e-2),
        "gamma": Uniform(0.90, 0.999),
        "varsigma": LogUniform(1e-3, 1e-1),
        "iota": Uniform(0.0, 1.0),
        "beta": Uniform(0.0, 1.0),
        "batch_size": Categorical((32, 64, 128)),
        "buffer_capacity": Categorical((2000, 10000, 50000)),
        "reward_fn": Categorical(("neg_abs_err", "neg_mae", "neg_mse",
                                  "neg_mape", "neg_rmse", "r2")),
    }


def sample_point(space: dict, rng) -> dict:
    return {name: dim.sample(rng) for name, dim in space.items()}


def encode_point(space: dict, point: dict) -> np.ndarray:
    parts = []
    for name, dim in space.items():
        parts.extend(dim.encode(point[name]))
    return np.array(parts)


def point_in_space(space: dict, point: dict) -> bool:
    for name, dim in space.items():
        v = point[name]
        if isinstance(dim, Categorical):
            if v not in dim.choices:
                return False
        elif not (dim.lo - 1e-12 <= v <= dim.hi + 1e-12):
            return False
    return True


@dataclass
class Trial:
    hyper: dict
    objective: float
    status: str  # "ok" | "diverged"
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "hyperparameters": self.hyper,
            "objective": None if not math.isfinite(self.objective) else self.objective,
            "status": self.status,
            "wall_time": self.wall_time,
        }


@dataclass
class TunerState:
    budget: int
    strategy: str = "smbo"  # "random" | "smbo"
    seed: int = 0
    history: list = field(default_factory=list)

    @property
    def warmup(self) -> int:
        return max(WARMUP_FLOOR, self.budget // 10)


def _gp_ei_suggest(space, trials, rng):
    """Expected-improvement argmax over a random candidate pool."""
    ok = [t for t in trials if t.status == "ok"]
    X = np.stack([encode_point(space, t.hyper) for t in ok])
    y = np.array([t.objective for t in ok])
    y_mean, y_std = y.mean(), y.std()
    if y_std <= 0:
        y_std = 1.0
    ys = (y - y_mean) / y_std

    d2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    nonzero = d2[d2 > 1e-12]
    ell2 = float(np.median(nonzero)) if nonzero.size else 1.0
    K = np.exp(-0.5 * d2 / ell2) + 1e-6 * np.eye(len(X))
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return sample_point(space, rng)
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, ys))

    cands = [sample_point(space, rng) for _ in range(CANDIDATE_POOL)]
    Xc = np.stack([encode_point(space, c) for c in cands])
    d2c = np.sum((Xc[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    Kc = np.exp(-0.5 * d2c / ell2)
    mu = Kc @ alpha
    v = np.linalg.solve(L, Kc.T)
    var = np.maximum(1.0 - np.sum(v * v, axis=0), 1e-12)
    sd = np.sqrt(var)
    best = ys.min()
    imp = best - mu
    z = imp / sd
    ei = imp * ndtr(z) + sd * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return cands[int(np.argmax(ei))]


def suggest(state: TunerState, space: dict, rng) -> dict:
    """Next point to evaluate.  Random strategy and the model-based warm-up
    consume the generator identically, so short budgets coincide exactly."""
    if len(state.history) >= state.budget:
        raise SearchError("search budget exhausted")
    ok_trials = [t for t in state.history if t.status == "ok"]
    if state.strategy == "random" or len(state.history) < state.warmup or len(ok_trials) < 2:
        return sample_point(space, rng)
    if state.strategy != "smbo":
        raise SearchError(f"unknown strategy {state.strategy!r}")
    return _gp_ei_suggest(space, state.history, rng)


def minimize(objective, space: dict, budget: int, strategy: str = "smbo",
             seed: int = 0) -> tuple[Trial, list]:
    """Generic search loop: evaluate ``objective(point, trial_seed)`` for
    ``budget`` suggestions and return (best trial, full history).

    The objective returns a finite float, or ``math.inf`` /
    a non-finite value to mark a diverged trial; diverged trials are
    excluded from both the surrogate fit and best-trial selection.
    """
    if budget < 1:
        raise SearchError("budget must be at least 1")
    state = TunerState(budget=budget, strategy=strategy, seed=seed)
    rng = np.random.default_rng(seed)
    trial_seeds = np.random.SeedSequence(seed).generate_state(budget)
    for k in range(budget):
        point = suggest(state, space, rng)
        t0 = time.perf_counter()
        value = objective(point, int(trial_seeds[k]))
        elapsed = time.perf_counter() - t0
        if value is None or not math.isfinite(value):
            state.history.append(Trial(point, math.inf, "diverged", elapsed))
        else:
            state.history.append(Trial(point, float(value), "ok", elapsed))
    ok = [t for t in state.history if t.status == "ok"]
    if not ok:
        raise SearchError("no viable configuration: every trial diverged")
    best = min(ok, key=lambda t: t.objective)
    return best, state.history


def run_search(split, space: dict | None = None, budget: int = 10, seed: int = 0,
               strategy: str = "smbo", episodes: int | None = None):
    """Hyperparameter search over forecasting agents for one sub-series.

    Returns (best trial, history, best fitted forecaster).  The best agent
    is kept from its original trial, so re-running with the same seed
    reproduces both the selection and the model.
    """
    space = space or ddpg_search_space()
    kept: dict = {}

    def objective(point, trial_seed):
        result = train_subseries(split, point, seed=trial_seed, episodes=episodes)
        if result.diverged:
            return math.inf
        key = tuple(sorted((k, repr(v)) for k, v in point.items()))
        if not kept or result.test_mape < kept["mape"]:
            kept.update(mape=result.test_mape, forecaster=result.forecaster, key=key)
        return result.test_mape

    best, history = minimize(objective, space, budget, strategy, seed)
    return best, history, kept["forecaster"]

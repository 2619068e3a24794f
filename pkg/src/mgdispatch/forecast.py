"""One-step-ahead forecasting with a DDPG agent and rank-based
prioritized experience replay.

Each hour-of-day sub-series gets its own agent: the state is the 7-day
history window, the action is the normalized prediction for day 8,
and the reward comes from a configurable pool of error-based metrics.
The environment transition is exogenous (the next state comes from the
data regardless of the action), which makes the agent a regression model
trained by reinforcement-learning machinery.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import mlp
from .data import SplitDataset
from .errormodel import metrics, MetricsError

REWARD_FNS = ("neg_abs_err", "neg_mae", "neg_mse", "neg_mape", "neg_rmse", "r2")


class TrialDiverged(RuntimeError):
    """Training produced non-finite parameters or losses."""


# ----------------------------------------------------------------------
# Reward pool
# ----------------------------------------------------------------------

class RewardTracker:
    """Episode-scoped reward evaluation.

    Aggregate rewards (everything except ``neg_abs_err``) are computed over
    the episode so far, current step included.  Steps where the aggregate is
    undefined (first R2 step, zero actuals for MAPE) fall back to the plain
    negative absolute error; zero actuals are excluded from the running
    MAPE average.
    """

    def __init__(self, kind: str):
        if kind not in REWARD_FNS:
            raise ValueError(f"unknown reward function {kind!r}")
        self.kind = kind
        self.reset()

    def reset(self):
        self.n = 0
        self.sum_abs = 0.0
        self.sum_sq = 0.0
        self.sum_ape = 0.0
        self.n_ape = 0
        self.sum_a = 0.0
        self.sum_a_sq = 0.0

    def step(self, actual: float, predicted: float) -> float:
        err = actual - predicted
        self.n += 1
        self.sum_abs += abs(err)
        self.sum_sq += err * err
        self.sum_a += actual
        self.sum_a_sq += actual * actual
        if actual != 0.0:
            self.sum_ape += abs(err / actual)
            self.n_ape += 1
        kind = self.kind
        if kind == "neg_abs_err":
            return -abs(err)
        if kind == "neg_mae":
            return -self.sum_abs / self.n
        if kind == "neg_mse":
            return -self.sum_sq / self.n
        if kind == "neg_rmse":
            return -math.sqrt(self.sum_sq / self.n)
        if kind == "neg_mape":
            if actual == 0.0 or self.n_ape == 0:
                return -abs(err)
            return -self.sum_ape / self.n_ape
        # r2: needs non-constant actuals so far
        sst = self.sum_a_sq - self.sum_a * self.sum_a / self.n
        if sst <= 1e-12:
            return -abs(err)
        return 1.0 - self.sum_sq / sst


# ----------------------------------------------------------------------
# Prioritized replay
# ----------------------------------------------------------------------

@dataclass
class Transition:
    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray


class PerBuffer:
    """Rank-based prioritized replay over preallocated arrays.

    Priorities are absolute TD-errors; sampling probability follows
    ``P(j) = D_j^iota / sum(D^iota)`` with ``D_j = 1/rank(j)`` and rank 1
    the largest priority.  New transitions get the current maximum priority
    and rank 1 (recency wins ties); when full, the oldest slot is recycled.
    The full rank ordering is re-sorted every ``resort_every`` insertions;
    in between, ranks of existing entries may be stale, which keeps
    insertion cheap.
    """

    def __init__(self, capacity: int, iota: float = 0.5, beta: float = 0.5,
                 resort_every: int = 64):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if iota < 0 or not 0.0 <= beta <= 1.0:
            raise ValueError("need iota >= 0 and beta in [0, 1]")
        self.capacity = capacity
        self.iota = iota
        self.beta = beta
        self.resort_every = resort_every
        self.size = 0
        self.states = None
        self.next_states = None
        self.actions = np.empty(capacity)
        self.rewards = np.empty(capacity)
        self.priorities = np.empty(capacity)
        self._insert_ids = np.empty(capacity, dtype=np.int64)
        self._ranks = np.empty(capacity, dtype=np.int64)
        self._next_slot = 0
        self._insert_counter = 0
        self._since_sort = 0

    def __len__(self):
        return self.size

    def transition(self, j: int) -> Transition:
        return Transition(self.states[j].copy(), float(self.actions[j]),
                          float(self.rewards[j]), self.next_states[j].copy())

    def _resort(self):
        n = self.size
        order = np.lexsort((-self._insert_ids[:n], -self.priorities[:n]))
        self._ranks[:n][order] = np.arange(1, n + 1)
        self._since_sort = 0

    def add(self, transition: Transition):
        state = np.asarray(transition.state, dtype=float)
        if self.states is None:
            self.states = np.empty((self.capacity, state.shape[0]))
            self.next_states = np.empty((self.capacity, state.shape[0]))
        prio = float(self.priorities[: self.size].max()) if self.size else 1.0
        self._insert_counter += 1
        if self.size < self.capacity:
            slot = self.size
            self.size += 1
            self._ranks[: self.size - 1] += 1
        else:
            slot = self._next_slot
            self._next_slot = (slot + 1) % self.capacity
            evicted_rank = self._ranks[slot]
            n = self.size
            self._ranks[:n][self._ranks[:n] > evicted_rank] -= 1
            self._ranks[:n] += 1
        self.states[slot] = state
        self.next_states[slot] = transition.next_state
        self.actions[slot] = transition.action
        self.rewards[slot] = transition.reward
        self.priorities[slot] = prio
        self._insert_ids[slot] = self._insert_counter
        self._ranks[slot] = 1
        self._since_sort += 1
        if self._since_sort >= self.resort_every:
            self._resort()

    def sample_probabilities(self) -> np.ndarray:
        """P(j) per stored entry, aligned with the storage order."""
        if not self.size:
            raise ValueError("empty buffer")
        if self.iota == 0.0:
            return np.full(self.size, 1.0 / self.size)
        d = self._ranks[: self.size] ** -float(self.iota)
        return d / d.sum()

    def importance_weights(self, indices) -> np.ndarray:
        """W_j = 1 / (S^beta * P(j)^beta) with S the buffer capacity."""
        p = self.sample_probabilities()[np.asarray(indices, dtype=int)]
        return 1.0 / (self.capacity ** self.beta * p ** self.beta)

    def importance_weight(self, j: int) -> float:
        return float(self.importance_weights([j])[0])

    def sample(self, n: int, rng) -> np.ndarray:
        """Sample ``n`` indices with replacement according to P."""
        return rng.choice(self.size, size=n, p=self.sample_probabilities())

    def update_priorities(self, indices, abs_td):
        self.priorities[np.asarray(indices, dtype=int)] = np.abs(abs_td)


# ----------------------------------------------------------------------
# Agent
# ----------------------------------------------------------------------

class DdpgForecaster(BaseEstimator, RegressorMixin):
    """DDPG agent trained as a one-step forecaster on normalized windows.

    Follows the scikit-learn estimator protocol: hyperparameters in the
    constructor, state on ``fit``, predictions via ``predict``.  Inputs are
    expected in the normalized range produced by
    :func:`mgdispatch.data.build_windows`.
    """

    def __init__(self, hidden_width=32, depth=2, hidden_activation="relu",
                 lr_actor=1e-3, lr_critic=1e-3, gamma=0.95, varsigma=0.01,
                 iota=0.5, beta=0.5, batch_size=32, buffer_capacity=2000,
                 reward_fn="neg_abs_err", episodes=60, noise_scale=0.1,
                 noise_decay=0.999, resort_every=64, random_state=None):
        self.hidden_width = hidden_width
        self.depth = depth
        self.hidden_activation = hidden_activation
        self.lr_actor = lr_actor
        self.lr_critic = lr_critic
        self.gamma = gamma
        self.varsigma = varsigma
        self.iota = iota
        self.beta = beta
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.reward_fn = reward_fn
        self.episodes = episodes
        self.noise_scale = noise_scale
        self.noise_decay = noise_decay
        self.resort_every = resort_every
        self.random_state = random_state

    # -- setup ----------------------------------------------------------

    def _init_networks(self, n_features: int):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch size cannot exceed buffer capacity")
        rng = np.random.default_rng(self.random_state)
        hidden = [self.hidden_width] * self.depth
        acts = [self.hidden_activation] * self.depth
        self.actor_ = mlp.Mlp.init([n_features] + hidden + [1], acts + ["sigmoid"], rng)
        self.critic_ = mlp.Mlp.init([n_features + 1] + hidden + [1], acts + ["identity"], rng)
        self.target_actor_ = self.actor_.copy()
        self.target_critic_ = self.critic_.copy()
        self.opt_actor_ = mlp.Adam(self.actor_, self.lr_actor)
        self.opt_critic_ = mlp.Adam(self.critic_, self.lr_critic)
        self.buffer_ = PerBuffer(self.buffer_capacity, self.iota, self.beta,
                                 self.resort_every)
        self.n_features_in_ = n_features
        self._rng = rng
        self._noise_std = self.noise_scale

    # -- core update ----------------------------------------------------

    def train_step(self):
        """One prioritized mini-batch update of critic, actor and targets.

        Returns (mean absolute TD-error, importance-weighted critic loss).
        Priorities of the sampled transitions are refreshed with TD-errors
        from the pre-update critic.
        """
        buf = self.buffer_
        n = self.batch_size
        if len(buf) < n:
            raise ValueError("buffer holds fewer transitions than one batch")
        idx = buf.sample(n, self._rng)
        S = buf.states[idx]
        A = buf.actions[idx][:, None]
        R = buf.rewards[idx]
        S2 = buf.next_states[idx]

        a2 = self.target_actor_.forward(S2)
        q2 = self.target_critic_.forward(np.hstack([S2, a2]))[:, 0]
        target = R + self.gamma * q2
        sa = np.hstack([S, A])
        critic_trace = self.critic_.forward_trace(sa)
        td = target - critic_trace[-1][:, 0]
        w = buf.importance_weights(idx)
        loss = float(np.mean(w * td * td))
        if not math.isfinite(loss):
            raise TrialDiverged(f"non-finite critic loss (batch of {n})")

        upstream = (-2.0 * w * td / n)[:, None]
        grads, _ = mlp.backward(self.critic_, sa, upstream, trace=critic_trace)
        self.opt_critic_.step(self.critic_, grads)

        # Deterministic policy gradient: ascend Q(s, pi(s)) through the
        # freshly updated critic.
        actor_trace = self.actor_.forward_trace(S)
        sa_pi = np.hstack([S, actor_trace[-1]])
        _, dq_dsa = mlp.backward(self.critic_, sa_pi, np.full((n, 1), 1.0 / n))
        dq_da = dq_dsa[:, -1:]
        actor_grads, _ = mlp.backward(self.actor_, S, dq_da, trace=actor_trace)
        actor_grads = [(-dw, -db) for dw, db in actor_grads]
        self.opt_actor_.step(self.actor_, actor_grads)

        buf.update_priorities(idx, np.abs(td))
        mlp.soft_update(self.target_critic_, self.critic_, self.varsigma)
        mlp.soft_update(self.target_actor_, self.actor_, self.varsigma)
        return float(np.mean(np.abs(td))), loss

    # -- estimator API ----------------------------------------------------

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != X.shape[0]:
            raise ValueError("X and y lengths differ")
        self._init_networks(X.shape[1])
        tracker = RewardTracker(self.reward_fn)
        n = X.shape[0]
        for episode in range(self.episodes):
            tracker.reset()
            for i in range(n):
                state = X[i]
                action = float(self.actor_.forward(state)[0])
                action += self._noise_std * float(self._rng.standard_normal())
                action = min(max(action, 0.0), 1.0)
                self._noise_std *= self.noise_decay
                reward = tracker.step(float(y[i]), action)
                next_state = X[i + 1] if i + 1 < n else X[0]
                self.buffer_.add(Transition(state.copy(), action, reward,
                                            next_state.copy()))
                if len(self.buffer_) > self.batch_size:
                    self.train_step()
            if not (self.actor_.params_finite() and self.critic_.params_finite()):
                raise TrialDiverged(f"non-finite parameters after episode {episode}")
        return self

    def predict(self, X):
        check_is_fitted(self, "actor_")
        X = check_array(X, dtype=float)
        return np.clip(self.actor_.forward(X)[:, 0], 0.0, 1.0)


# ----------------------------------------------------------------------
# Sub-series training and day-ahead assembly
# ----------------------------------------------------------------------

@dataclass
class SubseriesResult:
    forecaster: DdpgForecaster | None
    test_mape: float
    diverged: bool
    hyper: dict
    seed: int


def _test_mape(forecaster, split: SplitDataset) -> float:
    pred = split.denormalize(forecaster.predict(split.X_test))
    actual = split.denormalize(split.y_test)
    return metrics(actual, np.maximum(pred, 0.0)).mape


def train_subseries(split: SplitDataset, hyper: dict | None = None,
                    seed: int = 0, episodes: int | None = None) -> SubseriesResult:
    """Train one agent on a sub-series dataset; divergence becomes a failed
    result instead of an exception."""
    hyper = dict(hyper or {})
    if episodes is not None:
        hyper["episodes"] = episodes
    forecaster = DdpgForecaster(random_state=seed, **hyper)
    try:
        forecaster.fit(split.X_train, split.y_train)
        mape = _test_mape(forecaster, split)
    except TrialDiverged:
        return SubseriesResult(None, math.inf, True, hyper, seed)
    if not math.isfinite(mape):
        return SubseriesResult(None, math.inf, True, hyper, seed)
    return SubseriesResult(forecaster, mape, False, hyper, seed)


def persistence_mape(split: SplitDataset) -> float:
    """Baseline: predict day 8 as a copy of day 7."""
    pred = split.denormalize(split.X_test[:, -1])
    actual = split.denormalize(split.y_test)
    return metrics(actual, pred).mape


@dataclass
class HourModel:
    """Per-hour entry of a trained bundle: a DDPG actor or a constant."""

    kind: str  # "ddpg" | "constant"
    norm_min: float = 0.0
    norm_max: float = 1.0
    actor: mlp.Mlp | None = None
    value: float = 0.0
    test_mape: float = math.nan
    hyper: dict = field(default_factory=dict)
    seed: int = 0
    reward_fn: str = ""

    def predict_kw(self, history_kw) -> float:
        if self.kind == "constant":
            return max(self.value, 0.0)
        h = (np.asarray(history_kw, dtype=float) - self.norm_min) / \
            (self.norm_max - self.norm_min)
        a = float(np.clip(self.actor.forward(h)[0], 0.0, 1.0))
        return max(self.norm_min + a * (self.norm_max - self.norm_min), 0.0)

    @property
    def identifier(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.value:g}"
        return f"ddpg:reward={self.reward_fn or 'n/a'}"


@dataclass
class ForecastResult:
    values_kw: np.ndarray  # 24 entries, hour order
    model_ids: list[str]


def forecast_day(hour_models, recent_histories) -> ForecastResult:
    """One single-step prediction per hour from true 7-day histories.

    ``recent_histories`` is a (24, window) matrix of kW values; predictions
    are denormalized and clamped at zero.  No prediction is fed back as an
    input.
    """
    if len(hour_models) != 24:
        raise ValueError(f"need 24 hour models, got {len(hour_models)}")
    recent = np.asarray(recent_histories, dtype=float)
    if recent.shape[0] != 24:
        raise ValueError("recent_histories must have one row per hour")
    values = np.array([hm.predict_kw(recent[h]) for h, hm in enumerate(hour_models)])
    return ForecastResult(values, [hm.identifier for hm in hour_models])


class ForecastBundle:
    """Trained per-hour models for one source, with disk round-trip.

    The directory layout is one actor checkpoint JSON per trained hour
    (``hour_NN.json``) plus ``manifest.json`` recording hyperparameters,
    seeds, reward functions, normalization constants and test MAPE per hour.
    Constant hours (e.g. PV at night) live in the manifest only.
    """

    def __init__(self, source: str, hour_models):
        if len(hour_models) != 24:
            raise ValueError("bundle needs exactly 24 hour models")
        self.source = source
        self.hour_models = list(hour_models)

    def forecast(self, recent_histories) -> ForecastResult:
        return forecast_day(self.hour_models, recent_histories)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {"source": self.source, "hours": []}
        for h, hm in enumerate(self.hour_models):
            entry = {
                "hour": h,
                "kind": hm.kind,
                "norm_min": hm.norm_min,
                "norm_max": hm.norm_max,
                "test_mape": None if math.isnan(hm.test_mape) else hm.test_mape,
                "hyper": hm.hyper,
                "seed": hm.seed,
                "reward_fn": hm.reward_fn,
            }
            if hm.kind == "constant":
                entry["value"] = hm.value
            else:
                mlp.save_checkpoint(hm.actor, directory / f"hour_{h:02d}.json")
            manifest["hours"].append(entry)
        with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1)

    @classmethod
    def load(cls, directory) -> "ForecastBundle":
        directory = Path(directory)
        with open(directory / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        models = []
        for entry in manifest["hours"]:
            hm = HourModel(
                kind=entry["kind"], norm_min=entry["norm_min"],
                norm_max=entry["norm_max"],
                test_mape=math.nan if entry["test_mape"] is None else entry["test_mape"],
                hyper=entry.get("hyper", {}), seed=entry.get("seed", 0),
                reward_fn=entry.get("reward_fn", ""),
            )
            if hm.kind == "constant":
                hm.value = entry["value"]
            else:
                hm.actor = mlp.load_checkpoint(directory / f"hour_{entry['hour']:02d}.json")
            models.append(hm)
        return cls(manifest["source"], models)

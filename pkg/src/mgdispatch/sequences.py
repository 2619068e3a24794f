"""Discrete probability sequences on a uniform value grid.

A sequence assigns probability mass to the grid points
``origin + i * step`` and sums to one.  Independent forecast-error
distributions are discretized into such sequences and combined with
addition-type and subtraction-type convolutions; the resulting
equivalent-load error sequence drives the spinning-reserve sizing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

PROB_SUM_TOL = 1e-9
STEP_MATCH_TOL = 1e-12


class SequenceError(ValueError):
    """Invalid probabilistic sequence or incompatible operands."""


@dataclass(frozen=True)
class ProbSeq:
    """Probability mass function on the grid ``origin + i * step``, kW."""

    origin: float
    step: float
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if not math.isfinite(self.origin):
            raise SequenceError("sequence origin must be finite")
        if not (self.step > 0.0 and math.isfinite(self.step)):
            raise SequenceError(f"sequence step must be positive, got {self.step}")
        if probs.ndim != 1 or probs.size == 0:
            raise SequenceError("probs must be a non-empty 1-d array")
        if not np.all(np.isfinite(probs)):
            raise SequenceError("probs contain non-finite entries")
        if np.any(probs < -1e-15):
            raise SequenceError("probs contain negative entries")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise SequenceError(f"probs must sum to 1 within {PROB_SUM_TOL}, got {total!r}")

    def __len__(self):
        return self.probs.size

    @property
    def values(self) -> np.ndarray:
        """Grid values carried by each index, kW."""
        return self.origin + self.step * np.arange(self.probs.size)

    @property
    def support_max(self) -> float:
        return self.origin + self.step * (self.probs.size - 1)

    @classmethod
    def delta(cls, value: float, step: float) -> "ProbSeq":
        """Point mass at ``value``."""
        return cls(value, step, np.array([1.0]))

    @classmethod
    def from_samples(cls, samples, step: float) -> "ProbSeq":
        """Empirical sequence: samples binned to the nearest grid point."""
        samples = np.asarray(samples, dtype=float)
        if samples.size == 0:
            raise SequenceError("cannot build a sequence from zero samples")
        if not np.all(np.isfinite(samples)):
            raise SequenceError("samples contain non-finite entries")
        origin = step * math.floor(samples.min() / step + 0.5)
        idx = np.rint((samples - origin) / step).astype(int)
        if idx.min() < 0:
            origin += step * idx.min()
            idx = idx - idx.min()
        counts = np.bincount(idx)
        return cls(origin, step, counts / samples.size)

    def to_dict(self) -> dict:
        return {
            "origin_kw": self.origin,
            "step_kw": self.step,
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProbSeq":
        return cls(float(d["origin_kw"]), float(d["step_kw"]), np.asarray(d["probs"], dtype=float))


def _check_steps(a: ProbSeq, b: ProbSeq):
    if abs(a.step - b.step) > STEP_MATCH_TOL * max(a.step, b.step):
        raise SequenceError(f"step mismatch: {a.step} vs {b.step}")


def discretize(pdf, support: tuple[float, float], step: float) -> ProbSeq:
    """Discretize a density on ``support`` into a sequence with the given step.

    Cell 0 integrates ``[lo, lo + step/2]``, interior cell i integrates
    ``[lo + i*step - step/2, lo + i*step + step/2]`` and the last cell stops
    at the support's upper end.  Mass outside the support is truncated and
    the result renormalized.
    """
    lo, hi = float(support[0]), float(support[1])
    if not (hi > lo):
        raise SequenceError(f"support must have positive width, got [{lo}, {hi}]")
    if step <= 0:
        raise SequenceError("step must be positive")
    n = max(1, int(math.ceil((hi - lo) / step - 1e-9)))
    masses = np.empty(n + 1)
    for i in range(n + 1):
        a = lo if i == 0 else lo + i * step - step / 2.0
        b = min(lo + i * step + step / 2.0, hi) if i < n else min(lo + n * step, hi)
        if b <= a:
            masses[i] = 0.0
            continue
        masses[i], _ = quad(pdf, a, b, limit=200)
    total = masses.sum()
    if total <= 0.0:
        raise SequenceError("density has zero total mass on the given support")
    return ProbSeq(lo, step, masses / total)


def atc(a: ProbSeq, b: ProbSeq) -> ProbSeq:
    """Addition-type convolution: distribution of the sum of two
    independent discretized variables."""
    _check_steps(a, b)
    return ProbSeq(a.origin + b.origin, a.step, np.convolve(a.probs, b.probs))


def stc_full(d: ProbSeq, c: ProbSeq) -> ProbSeq:
    """Subtraction-type convolution over the full signed support:
    distribution of ``D - C`` for independent D, C."""
    _check_steps(d, c)
    origin = d.origin - (c.origin + c.step * (len(c) - 1))
    return ProbSeq(origin, d.step, np.convolve(d.probs, c.probs[::-1]))


def stc_truncated(d: ProbSeq, c: ProbSeq) -> ProbSeq:
    """Index-space subtraction-type convolution with every non-positive
    outcome folded into index 0.

    Requires both operands to be anchored at origin 0, matching the
    index-form definition; :func:`stc_full` is the signed-support variant.
    """
    _check_steps(d, c)
    if abs(d.origin) > STEP_MATCH_TOL or abs(c.origin) > STEP_MATCH_TOL:
        raise SequenceError("stc_truncated operates in index space: origins must be 0")
    full = np.convolve(d.probs, c.probs[::-1])
    out = np.empty(len(d))
    out[0] = full[: len(c)].sum()
    out[1:] = full[len(c):]
    return ProbSeq(0.0, d.step, out)


def expectation(s: ProbSeq) -> float:
    """Value-weighted mean of the sequence, kW."""
    return float(np.dot(s.values, s.probs))


def reserve_quantile(s: ProbSeq, alpha: float) -> float:
    """Smallest reserve R such that ``P{R >= E(sigma) - sigma} >= alpha``.

    The cutoff is the largest grid value whose inclusive upper-tail mass
    still reaches ``alpha`` (weak inequality).
    """
    if not (0.0 < alpha <= 1.0):
        raise SequenceError(f"alpha must lie in (0, 1], got {alpha}")
    tail = np.cumsum(s.probs[::-1])[::-1]
    ok = np.nonzero(tail >= alpha - 1e-9)[0]
    cutoff = s.origin + s.step * ok[-1]
    return expectation(s) - cutoff


def choose_step(width: float, max_cells: int = 200) -> float:
    """Pick a 1-2-5 grid step so a support of ``width`` needs at most
    ``max_cells`` cells."""
    if width <= 0:
        raise SequenceError("support width must be positive")
    raw = width / max_cells
    decade = 10.0 ** math.floor(math.log10(raw))
    for m in (1.0, 2.0, 5.0, 10.0):
        cand = m * decade
        if cand >= raw * (1 - 1e-12):
            return cand
    raise AssertionError("unreachable")

"""Stochastic learning automaton with the linear reward-penalty (L_R-P) scheme.

The probability vector is an immutable value; ``reward`` and ``penalize``
return a new vector.  Step sizes can be fixed or computed from traffic
indices and hop counts with :func:`compute_alpha` / :func:`compute_beta`.
"""

from __future__ import annotations

import math
import random
import warnings
from collections import Counter
from dataclasses import dataclass, field

SUM_TOL = 1e-9
RENORM_TOL = 1e-12
DAMPING_FLOOR = -1e12


class DegenerateUpdateWarning(UserWarning):
    """Penalty requested on a single-action automaton (nothing to move mass to)."""


@dataclass
class Diagnostics:
    counts: Counter = field(default_factory=Counter)

    def bump(self, key: str) -> None:
        self.counts[key] += 1

    def __getitem__(self, key: str) -> int:
        return self.counts[key]


@dataclass(frozen=True)
class ProbabilityVector:
    entries: tuple[float, ...]

    def __post_init__(self):
        if len(self.entries) < 1:
            raise ValueError("probability vector needs at least one entry")
        lo = min(self.entries)
        hi = max(self.entries)
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"entries outside [0, 1]: {self.entries}")
        if abs(math.fsum(self.entries) - 1.0) > SUM_TOL:
            raise ValueError(f"entries do not sum to 1: {self.entries}")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> float:
        return self.entries[i]

    def argmax(self) -> int:
        return max(range(len(self.entries)), key=self.entries.__getitem__)

    @classmethod
    def from_weights(cls, weights) -> ProbabilityVector:
        total = math.fsum(weights)
        if total <= 0:
            raise ValueError("weights must have a positive sum")
        return cls(_normalized([w / total for w in weights]))


@dataclass(frozen=True)
class AutomatonConfig:
    alpha1: float = 0.05
    alpha2: float = 0.05
    delta: float = 1.0
    gamma: float = 0.1
    eta: float = 1.0
    xi: float = 1.0
    c1: float = 0.0
    c2: float = 0.0
    clamp_min: float = 0.01
    clamp_max: float = 0.9

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not math.isfinite(value):
                raise ValueError(f"automaton parameter {name} must be finite, got {value}")
        if not 0 < self.clamp_min <= self.clamp_max <= 1:
            raise ValueError(
                f"need 0 < clamp_min <= clamp_max <= 1, got ({self.clamp_min}, {self.clamp_max})"
            )


@dataclass(frozen=True)
class StationaryEnvironment:
    reward_probs: tuple[float, ...]

    def __post_init__(self):
        if not self.reward_probs:
            raise ValueError("environment needs at least one action")
        if any(not 0.0 <= p <= 1.0 for p in self.reward_probs):
            raise ValueError(f"reward probabilities outside [0, 1]: {self.reward_probs}")


def _normalized(values: list[float]) -> tuple[float, ...]:
    total = math.fsum(values)
    if abs(total - 1.0) > RENORM_TOL:
        values = [v / total for v in values]
    if min(values) < 0.0 or max(values) > 1.0:
        values = [min(1.0, max(0.0, v)) for v in values]
    return tuple(values)


def _trusted(values: list[float]) -> ProbabilityVector:
    """Normalize update output and wrap it without re-validating.

    Hot path of every reward/penalty, so ``_normalized`` is inlined.
    """
    total = math.fsum(values)
    if abs(total - 1.0) > RENORM_TOL:
        values = [v / total for v in values]
    if min(values) < 0.0 or max(values) > 1.0:
        values = [min(1.0, max(0.0, v)) for v in values]
    pv = _new_pv(ProbabilityVector)
    pv.__dict__["entries"] = tuple(values)
    return pv


_new_pv = object.__new__


def init_uniform(r: int) -> ProbabilityVector:
    if r < 1:
        raise ValueError(f"action count must be >= 1, got {r}")
    return ProbabilityVector(_normalized([1.0 / r] * r))


def select_action(pv: ProbabilityVector, rng: random.Random) -> int:
    """Sample an index from ``pv`` using exactly one uniform draw."""
    u = rng.random()
    acc = 0.0
    last_positive = 0
    for i, p in enumerate(pv.entries):
        if p > 0.0:
            acc += p
            last_positive = i
            if u < acc:
                return i
    # u landed in the rounding sliver above the float sum
    return last_positive


def _check_step(name: str, step: float) -> None:
    if not 0.0 <= step <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {step}")


def reward(pv: ProbabilityVector, i: int, alpha: float) -> ProbabilityVector:
    if not 0.0 <= alpha <= 1.0:
        _check_step("alpha", alpha)
    p = pv.entries
    if not 0 <= i < len(p):
        raise IndexError(f"action {i} out of range for {len(p)} actions")
    keep = 1.0 - alpha
    new = [keep * pj for pj in p]
    new[i] = p[i] + alpha * (1.0 - p[i])
    return _trusted(new)


def penalize(pv: ProbabilityVector, i: int, beta: float) -> ProbabilityVector:
    if not 0.0 <= beta <= 1.0:
        _check_step("beta", beta)
    p = pv.entries
    r = len(p)
    if not 0 <= i < r:
        raise IndexError(f"action {i} out of range for {r} actions")
    if r == 1:
        warnings.warn("penalty on a single-action automaton is a no-op", DegenerateUpdateWarning)
        return pv
    keep = 1.0 - beta
    share = beta / (r - 1)
    new = [share + keep * pj for pj in p]
    new[i] = keep * p[i]
    return _trusted(new)


def damping_f(max_hop: float, num_hop: float, gamma: float) -> float:
    try:
        value = max_hop - math.exp(gamma * num_hop)
    except OverflowError:
        return DAMPING_FLOOR
    return max(value, DAMPING_FLOOR)


def log_modulation_g(max_hop: float, xi: float) -> float:
    return xi * math.log(max_hop + 1.0)


def deviation_h(avg_ti: float, ti: float, eta: float) -> float:
    return eta * (avg_ti - ti) ** 2


def _clamp(x: float, cfg: AutomatonConfig) -> float:
    return min(cfg.clamp_max, max(cfg.clamp_min, x))


def compute_alpha(
    ti: float,
    num_hop: float,
    max_hop: float,
    max_ti: float,
    cfg: AutomatonConfig,
    diag: Diagnostics | None = None,
) -> float:
    """Reward step from the sender's traffic index and hop position."""
    denom = cfg.delta * max_ti + log_modulation_g(max_hop, cfg.xi)
    if denom == 0.0:
        if diag is not None:
            diag.bump("alpha_zero_denominator")
        return cfg.clamp_max
    numer = cfg.delta * ti + damping_f(max_hop, num_hop, cfg.gamma)
    return _clamp(cfg.alpha1 + numer / denom + cfg.c1, cfg)


def compute_beta(
    avg_ti: float,
    ti: float,
    num_hop: float,
    max_hop: float,
    cfg: AutomatonConfig,
    diag: Diagnostics | None = None,
) -> float:
    """Penalty step; grows with the sender's deviation from the set average."""
    denom = cfg.delta * avg_ti + log_modulation_g(max_hop, cfg.xi)
    if denom == 0.0:
        if diag is not None:
            diag.bump("beta_zero_denominator")
        return cfg.clamp_max
    numer = cfg.delta * deviation_h(avg_ti, ti, cfg.eta) + num_hop
    return _clamp(cfg.alpha2 + numer / denom + cfg.c2, cfg)


def run_stationary_trial(
    env: StationaryEnvironment,
    alpha: float,
    beta: float,
    iterations: int,
    rng: random.Random,
    sample_every: int = 100,
) -> tuple[ProbabilityVector, list[int]]:
    """Drive a uniform automaton against a fixed-probability environment.

    Each iteration draws one uniform for the action and one for the
    environment's verdict.  Returns the terminal vector and the argmax
    action recorded every ``sample_every`` iterations (and at the end).
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    _check_step("alpha", alpha)
    _check_step("beta", beta)
    pv = init_uniform(len(env.reward_probs))
    trace: list[int] = []
    for n in range(1, iterations + 1):
        a = select_action(pv, rng)
        if rng.random() < env.reward_probs[a]:
            pv = reward(pv, a, alpha)
        elif len(pv) > 1:
            pv = penalize(pv, a, beta)
        if n % sample_every == 0 or n == iterations:
            trace.append(pv.argmax())
    return pv, trace

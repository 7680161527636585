"""Reveal-game environment replaying pre-computed learning curves.

Actions never change the underlying curves; they only pay budget to reveal
train/valid scores. Rewards come from the hidden test curves: each step pays
out the change in the predicted-best algorithm's test score, weighted by the
remaining normalized budget. The accumulated reward over an episode equals
the area under the predicted-best test performance plotted against
normalized time, minus the baseline (see ``accumulated_alc``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from .curvestore import LearningCurve, MetaDataset, query_curve

REVEAL_MODES = ("full", "last_point_only")


@dataclass(frozen=True)
class Action:
    """One query: train algorithm ``algo`` for ``delta`` more budget and
    nominate ``predicted_best`` as the current best algorithm."""

    algo: int
    delta: float
    predicted_best: int

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.algo < 0 or self.predicted_best < 0:
            raise ValueError("algorithm indices must be nonnegative")


@dataclass(frozen=True)
class Observation:
    """Everything the agent may see. Carries no test-curve value.

    ``revealed_train`` / ``revealed_valid`` hold per-algorithm append-only
    tuples of (cumulative cost, score) pairs in reveal order.
    """

    dataset_id: int
    meta_features: Mapping[str, float]
    hyperparameters: tuple[Mapping[str, Any], ...]
    total_budget: float
    remaining: float
    t_tilde: float
    spent: tuple[float, ...]
    revealed_train: tuple[tuple[tuple[float, float], ...], ...]
    revealed_valid: tuple[tuple[tuple[float, float], ...], ...]
    last_action: Action | None = None

    @property
    def n_algorithms(self) -> int:
        return len(self.spent)

    def as_dict(self) -> dict[str, Any]:
        """JSON-ready view; used by trajectory dumps and leak scans."""
        return {
            "dataset_id": self.dataset_id,
            "meta_features": dict(self.meta_features),
            "hyperparameters": [dict(h) for h in self.hyperparameters],
            "total_budget": self.total_budget,
            "remaining": self.remaining,
            "t_tilde": self.t_tilde,
            "spent": list(self.spent),
            "revealed_train": [[list(p) for p in algo] for algo in self.revealed_train],
            "revealed_valid": [[list(p) for p in algo] for algo in self.revealed_valid],
            "last_action": None
            if self.last_action is None
            else {
                "algo": self.last_action.algo,
                "delta": self.last_action.delta,
                "predicted_best": self.last_action.predicted_best,
            },
        }


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    charged: float


@dataclass(frozen=True)
class RewardConfig:
    """Reward shaping knobs: time-warp scale sigma and the score credited
    before anything has been revealed."""

    sigma: float
    baseline_score: float = 0.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def normalized_time(spent: float, total: float, sigma: float) -> float:
    """Log-warped budget fraction: log(1 + spent/sigma) / log(1 + total/sigma).

    Exactly 0.0 at spent=0 and 1.0 at spent=total; strictly increasing in
    spent. Small sigma emphasizes the early part of the episode.
    """
    if not total > 0:
        raise ValueError("total must be positive")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if spent < 0 or spent > total:
        raise ValueError("spent must lie in [0, total]")
    return math.log1p(spent / sigma) / math.log1p(total / sigma)


def reward(prev_best_test: float, new_best_test: float, t_tilde: float) -> float:
    """Test-score improvement of the nominated best, weighted by budget left.

    No clamping: a worse nomination yields negative reward.
    """
    if t_tilde < 0 or t_tilde > 1:
        raise ValueError("t_tilde must lie in [0, 1]")
    return (new_best_test - prev_best_test) * (1.0 - t_tilde)


def accumulated_alc(rewards: list[float]) -> float:
    """Episode score: exact float sum of the per-step rewards.

    Equals the integral over normalized time of the piecewise-constant
    predicted-best test performance, minus the baseline score.
    """
    return math.fsum(rewards)


def step_integral(trace: list[tuple[float, float]]) -> float:
    """Area under a left-hold step function over normalized time [0, 1].

    ``trace`` holds (t_tilde, value) knots with increasing t_tilde starting
    at 0; the last value extends to t_tilde = 1.
    """
    if not trace or trace[0][0] != 0.0:
        raise ValueError("trace must start at t_tilde = 0")
    terms = []
    for (t0, v0), (t1, _) in zip(trace, trace[1:]):
        terms.append(v0 * (t1 - t0))
    t_last, v_last = trace[-1]
    terms.append(v_last * (1.0 - t_last))
    return math.fsum(terms)


class ReplayEnv:
    """One episode of the reveal game on one dataset.

    Single-writer: one caller mutates one instance. Many instances may share
    the same MetaDataset read-only.
    """

    def __init__(
        self,
        md: MetaDataset,
        dataset_id: int,
        cfg: RewardConfig | None = None,
        reveal_mode: str = "full",
    ) -> None:
        if reveal_mode not in REVEAL_MODES:
            raise ValueError(f"unknown reveal_mode {reveal_mode!r}")
        self.md = md
        self.dataset = md.dataset(dataset_id)
        self.dataset_id = dataset_id
        # Default sigma is a tenth of the budget: strong early-time emphasis.
        self.cfg = cfg if cfg is not None else RewardConfig(
            sigma=self.dataset.total_budget / 10.0,
            baseline_score=md.baseline_score,
        )
        self.reveal_mode = reveal_mode
        self._train = [md.curve(dataset_id, a.id, "train") for a in md.algorithms]
        self._valid = [md.curve(dataset_id, a.id, "valid") for a in md.algorithms]
        self._hidden = [md.curve(dataset_id, a.id, "test") for a in md.algorithms]
        self.reset()

    # -- lifecycle -------------------------------------------------------

    def reset(self) -> Observation:
        """Start (or restart) the episode; returns the initial observation."""
        n = self.md.n_algorithms
        self._spent = [0.0] * n
        self._remaining = self.dataset.total_budget
        self._prev_best = self.cfg.baseline_score
        self._revealed_train: list[list[tuple[float, float]]] = [[] for _ in range(n)]
        self._revealed_valid: list[list[tuple[float, float]]] = [[] for _ in range(n)]
        self._rewards: list[float] = []
        self._charges: list[float] = []
        self._log: list[dict[str, Any]] = []
        self._trace: list[tuple[float, float]] = [(0.0, self.cfg.baseline_score)]
        self._done = False
        self._last_action: Action | None = None
        return self.observation()

    def observation(self) -> Observation:
        return Observation(
            dataset_id=self.dataset_id,
            meta_features=dict(self.dataset.meta_features),
            hyperparameters=tuple(dict(a.hyperparameters) for a in self.md.algorithms),
            total_budget=self.dataset.total_budget,
            remaining=self._remaining,
            t_tilde=self.t_tilde,
            spent=tuple(self._spent),
            revealed_train=tuple(tuple(r) for r in self._revealed_train),
            revealed_valid=tuple(tuple(r) for r in self._revealed_valid),
            last_action=self._last_action,
        )

    # -- stepping --------------------------------------------------------

    def step(self, action: Action) -> StepResult:
        """Charge the increment, reveal train/valid points, pay the reward."""
        if self._done:
            raise RuntimeError("episode is done")
        n = self.md.n_algorithms
        if not 0 <= action.algo < n:
            raise ValueError(f"algo index {action.algo} out of range [0, {n})")
        if not 0 <= action.predicted_best < n:
            raise ValueError(f"predicted_best index {action.predicted_best} out of range [0, {n})")
        if action.delta <= 0:
            raise ValueError("delta must be positive")

        j = action.algo
        # Overshoot truncation: never charge past the remaining budget.
        effective = min(action.delta, self._remaining)
        snapped_to: float | None = None
        if self.md.curve_kind == "size_indexed":
            # Snap down to the largest anchor reachable within the paid
            # increment so queries land on the shared grid; an increment
            # shorter than one grid step stays off-grid and reveals the
            # left-hold value.
            tau = self._spent[j]
            for c in reversed(self._train[j].costs):
                if tau < c <= tau + effective:
                    snapped_to = c
                    break
            if snapped_to is not None:
                effective = snapped_to - tau

        # Keep the remaining-budget recurrence exact: recomputing the charge
        # as a difference of consecutive remainders makes the per-step
        # charges telescope to exactly T_i (Fast2Sum: remaining - new is
        # representable whenever 0 <= effective <= remaining).
        new_remaining = self._remaining - effective
        charged = self._remaining - new_remaining
        self._remaining = new_remaining
        if snapped_to is not None:
            self._spent[j] = snapped_to
        else:
            self._spent[j] += charged
        self._done = self._remaining == 0.0

        baseline = self.cfg.baseline_score
        if self.reveal_mode == "last_point_only":
            tr = self._train[j].final_score
            va = self._valid[j].final_score
        else:
            tr = query_curve(self._train[j], self._spent[j], baseline)
            va = query_curve(self._valid[j], self._spent[j], baseline)
        self._revealed_train[j].append((self._spent[j], tr))
        self._revealed_valid[j].append((self._spent[j], va))

        # Reward uses normalized time after charging: improvements only
        # count once paid for.
        t_tilde = self.t_tilde
        jstar = action.predicted_best
        new_best = query_curve(self._hidden[jstar], self._spent[jstar], baseline)
        r = reward(self._prev_best, new_best, t_tilde)
        self._prev_best = new_best

        self._rewards.append(r)
        self._charges.append(charged)
        self._trace.append((t_tilde, new_best))
        self._last_action = action
        self._log.append(
            {
                "t": len(self._rewards),
                "algo": j,
                "delta": action.delta,
                "charged": charged,
                "t_tilde": t_tilde,
                "reward": r,
                "revealed_train": tr,
                "revealed_valid": va,
                "predicted_best": jstar,
            }
        )
        return StepResult(self.observation(), r, self._done, charged)

    # -- episode accounting ------------------------------------------------

    @property
    def done(self) -> bool:
        return self._done

    @property
    def remaining(self) -> float:
        return self._remaining

    @property
    def t_tilde(self) -> float:
        spent = self.dataset.total_budget - self._remaining
        return normalized_time(spent, self.dataset.total_budget, self.cfg.sigma)

    @property
    def rewards(self) -> tuple[float, ...]:
        return tuple(self._rewards)

    @property
    def charges(self) -> tuple[float, ...]:
        return tuple(self._charges)

    @property
    def alc(self) -> float:
        return accumulated_alc(self._rewards)

    @property
    def best_test_trace(self) -> tuple[tuple[float, float], ...]:
        """(t_tilde, predicted-best test score) knots, starting at the
        baseline. Scoring-side only: never exposed through observations."""
        return tuple(self._trace)

    @property
    def fixed_time_score(self) -> float:
        """Highest predicted-best test score reported during the episode."""
        if len(self._trace) == 1:
            return self.cfg.baseline_score
        return max(v for _, v in self._trace[1:])

    @property
    def step_log(self) -> list[dict[str, Any]]:
        return [dict(rec) for rec in self._log]

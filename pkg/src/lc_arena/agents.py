"""Agent interface and the five baseline policies.

Agents only ever see Observations (no test scores). Every agent is
reproducible: reseeding with the same value reproduces the same episode on
the same environment.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist
from typing import Any, Mapping, Sequence

import numpy as np

from .curvestore import MetaDataset, final_rank
from .env import Action, Observation, ReplayEnv
from .synthgen import power_law
from .valuenet import (
    Mlp,
    OptimizerState,
    backward_batch,
    copy_params,
    forward,
    init_mlp,
    init_optimizer,
    load_checkpoint,
    opt_step,
    save_checkpoint,
)

SeedLike = int | np.random.SeedSequence


def _seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def make_rng(seed: SeedLike) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_seed_sequence(seed)))


def predicted_best(obs: Observation) -> int:
    """Argmax over each algorithm's latest revealed valid score.

    Lowest index wins ties; 0 when nothing has been revealed yet.
    """
    best = 0
    best_score = -math.inf
    for j, reveals in enumerate(obs.revealed_valid):
        if reveals and reveals[-1][1] > best_score:
            best, best_score = j, reveals[-1][1]
    return best


class Agent:
    """Base policy. Subclasses override act (and meta_train if they learn)."""

    name = "agent"
    requires_meta_train = False
    internal_runs = 1

    def __init__(self, seed: SeedLike = 0) -> None:
        self.reseed(seed)

    def reseed(self, seed: SeedLike) -> None:
        seq = _seed_sequence(seed)
        self._base_seed = int(seq.generate_state(1)[0])
        self._rng = make_rng(seq)

    def clone(self) -> "Agent":
        return copy.deepcopy(self)

    @property
    def is_meta_trained(self) -> bool:
        return not self.requires_meta_train

    def meta_train(self, md: MetaDataset) -> dict[str, Any]:
        """Learn from the full curves of the meta-train datasets. No-op here."""
        return {"agent": self.name, "meta_trained": False}

    def reset(self, obs: Observation) -> None:
        """Hook called once with the initial observation of each episode."""

    def act(self, obs: Observation) -> Action:
        raise NotImplementedError


# -- random search ---------------------------------------------------------


def randsearch_act(
    obs: Observation,
    rng: np.random.Generator,
    delta_min: float,
    delta_max: float,
) -> Action:
    """Uniform algorithm, uniform increment in [delta_min, delta_max]."""
    if delta_min > delta_max:
        raise ValueError("delta_min must not exceed delta_max")
    algo = int(rng.integers(obs.n_algorithms))
    delta = float(rng.uniform(delta_min, delta_max))
    return Action(algo=algo, delta=delta, predicted_best=predicted_best(obs))


class RandSearchAgent(Agent):
    """Uniform random queries; increments default to [T/50, T/5]."""

    name = "rand_search"
    internal_runs = 5

    def __init__(
        self,
        delta_min: float | None = None,
        delta_max: float | None = None,
        seed: SeedLike = 0,
    ) -> None:
        self.delta_min = delta_min
        self.delta_max = delta_max
        super().__init__(seed)

    def act(self, obs: Observation) -> Action:
        lo = obs.total_budget / 50.0 if self.delta_min is None else self.delta_min
        hi = obs.total_budget / 5.0 if self.delta_max is None else self.delta_max
        return randsearch_act(obs, self._rng, lo, hi)


# -- best on samples -------------------------------------------------------


def bos_act(obs: Observation, alpha: float) -> Action:
    """Probe every algorithm with alpha, then commit everything to the
    valid-score leader."""
    n = obs.n_algorithms
    if alpha * n >= obs.total_budget:
        raise ValueError("probe budget alpha * n_algorithms must stay below the total budget")
    for j in range(n):
        if not obs.revealed_valid[j]:
            return Action(algo=j, delta=alpha, predicted_best=predicted_best(obs))
    j = predicted_best(obs)
    return Action(algo=j, delta=obs.remaining, predicted_best=j)


class BosAgent(Agent):
    """Best-on-samples: equal probes, then all-in on the probe winner.

    alpha defaults to T / (5 * n_algorithms).
    """

    name = "bos"

    def __init__(self, alpha: float | None = None, seed: SeedLike = 0) -> None:
        self.alpha = alpha
        super().__init__(seed)

    def act(self, obs: Observation) -> Action:
        alpha = self.alpha
        if alpha is None:
            alpha = obs.total_budget / (5.0 * obs.n_algorithms)
        return bos_act(obs, alpha)


# -- average rank ----------------------------------------------------------


def avgrank_meta_train(md: MetaDataset) -> list[float]:
    """Mean final-valid-score rank per algorithm over the meta-train split."""
    if not md.meta_train:
        raise ValueError("meta_train split is empty")
    sums = [0.0] * md.n_algorithms
    for did in md.meta_train:
        for aid, rank in enumerate(final_rank(md, did, split="valid")):
            sums[aid] += rank
    return [s / len(md.meta_train) for s in sums]


class AvgRankAgent(Agent):
    """Plays the best-average-rank algorithm for the whole budget."""

    name = "avg_rank"
    requires_meta_train = True

    def __init__(self, seed: SeedLike = 0) -> None:
        self.avg_ranks: list[float] | None = None
        self.selected: int | None = None
        super().__init__(seed)

    @property
    def is_meta_trained(self) -> bool:
        return self.selected is not None

    def meta_train(self, md: MetaDataset) -> dict[str, Any]:
        self.avg_ranks = avgrank_meta_train(md)
        best = min(self.avg_ranks)
        self.selected = self.avg_ranks.index(best)
        return {"agent": self.name, "meta_trained": True,
                "avg_ranks": list(self.avg_ranks), "selected": self.selected}

    def act(self, obs: Observation) -> Action:
        if self.selected is None:
            raise RuntimeError("avg_rank requires meta-training before acting")
        return Action(algo=self.selected, delta=obs.remaining, predicted_best=self.selected)

    def save(self, path) -> None:
        if self.selected is None:
            raise RuntimeError("no ranking to save")
        payload = {"schema": 1, "agent": self.name,
                   "avg_ranks": self.avg_ranks, "selected": self.selected}
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")

    def load(self, path) -> None:
        payload = json.loads(Path(path).read_text())
        if payload.get("agent") != self.name:
            raise ValueError(f"checkpoint holds {payload.get('agent')!r}, not an average ranking")
        self.avg_ranks = [float(r) for r in payload["avg_ranks"]]
        self.selected = int(payload["selected"])


# -- freeze-thaw -----------------------------------------------------------


@dataclass(frozen=True)
class FreezeThawState:
    """Per-arm Gaussian beliefs about performance at the next increment."""

    means: tuple[float, ...]
    variances: tuple[float, ...]
    observations: tuple[tuple[tuple[float, float], ...], ...]

    def __post_init__(self) -> None:
        if any(v < 0 for v in self.variances):
            raise ValueError("variances must be nonnegative")


def fit_curve_model(
    points: Sequence[tuple[float, float]],
    at_cost: float,
    total_budget: float,
    baseline: float = 0.0,
    prior_var: float = 0.25,
    bounds: tuple[float, float] = (0.0, 1.0),
) -> tuple[float, float]:
    """Gaussian predictive of one arm's score at ``at_cost``.

    Fits the saturating power-law family by least squares over (p0, pmax)
    on a fixed (s, k) grid; with under two points falls back to the latest
    observation. Unobserved arms get a wide prior around the baseline.
    Variance combines fit residuals with a prior term shrinking as 1/(n+1).
    """
    n = len(points)
    var_floor = 1e-4
    if n == 0:
        return baseline, prior_var
    costs = np.array([c for c, _ in points], dtype=float)
    ys = np.array([y for _, y in points], dtype=float)
    lo, hi = bounds
    if n <= 2 or np.all(costs == costs[0]):
        mean = float(ys[-1])
        resid = float(np.var(ys)) if n > 1 else 0.0
        return float(np.clip(mean, lo, hi)), resid + prior_var / (n + 1) + var_floor

    best_sse = math.inf
    best_pred = float(ys[-1])
    for s_frac in (0.01, 0.03, 0.08, 0.2, 0.5):
        s = total_budget * s_frac
        for k in (0.5, 1.0, 1.8, 3.0):
            g = (1.0 + costs / s) ** (-k)
            design = np.stack([g, 1.0 - g], axis=1)
            coef, _, _, _ = np.linalg.lstsq(design, ys, rcond=None)
            sse = float(np.sum((design @ coef - ys) ** 2))
            if sse < best_sse:
                best_sse = sse
                p0, pmax = float(coef[0]), float(coef[1])
                best_pred = power_law(at_cost, p0, pmax, k, s)
    resid_var = best_sse / n
    mean = float(np.clip(best_pred, lo, hi))
    return mean, resid_var + prior_var / (n + 1) + var_floor


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def entropy_search_gain(
    means: Sequence[float],
    sds: Sequence[float],
    rng: np.random.Generator,
    n_samples: int = 2048,
    n_quantiles: int = 33,
) -> np.ndarray:
    """Expected reduction in entropy of the argmax distribution per arm.

    Monte Carlo over per-arm Gaussians for the argmax distribution; the
    fantasized observation of each arm is integrated over a midpoint
    quantile grid of its own predictive. Observing an arm pins its value,
    so conditioning replaces that arm's samples with the fantasy.
    """
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    n = len(means)
    if n == 1:
        return np.zeros(1)
    m = n_samples
    samples = means + sds * rng.standard_normal((m, n))
    order = np.argsort(samples, axis=1)
    top1 = order[:, -1]
    top2 = order[:, -2]
    rows = np.arange(m)
    top1_val = samples[rows, top1]
    top2_val = samples[rows, top2]
    h0 = _entropy(np.bincount(top1, minlength=n) / m)

    nd = NormalDist()
    zq = np.array([nd.inv_cdf((i + 0.5) / n_quantiles) for i in range(n_quantiles)])
    gains = np.empty(n)
    for j in range(n):
        other_val = np.where(top1 == j, top2_val, top1_val)
        other_idx = np.where(top1 == j, top2, top1)
        h_cond = 0.0
        for y in means[j] + sds[j] * zq:
            winners = np.where(y > other_val, j, other_idx)
            h_cond += _entropy(np.bincount(winners, minlength=n) / m)
        gains[j] = h0 - h_cond / n_quantiles
    return gains


def freezethaw_act(
    state: FreezeThawState,
    obs: Observation,
    delta_fix: float,
    rng: np.random.Generator,
    n_samples: int = 2048,
    n_quantiles: int = 33,
    tie_tol: float = 0.01,
) -> Action:
    """Query the arm with the highest information gain about the argmax."""
    gains = entropy_search_gain(
        state.means, [math.sqrt(v) for v in state.variances], rng, n_samples, n_quantiles
    )
    cutoff = float(gains.max()) - tie_tol
    algo = next(j for j in range(len(gains)) if gains[j] >= cutoff)
    return Action(algo=algo, delta=delta_fix, predicted_best=predicted_best(obs))


class FreezeThawAgent(Agent):
    """Per-arm curve fits plus Monte Carlo entropy search.

    delta_fix defaults to T/20; arms without observations use a wide prior
    centered on the baseline score.
    """

    name = "freeze_thaw"

    def __init__(
        self,
        delta_fix: float | None = None,
        prior_var: float = 0.25,
        baseline: float = 0.0,
        bounds: tuple[float, float] = (0.0, 1.0),
        n_samples: int = 2048,
        n_quantiles: int = 33,
        tie_tol: float = 0.01,
        seed: SeedLike = 0,
    ) -> None:
        self.delta_fix = delta_fix
        self.prior_var = prior_var
        self.baseline = baseline
        self.bounds = bounds
        self.n_samples = n_samples
        self.n_quantiles = n_quantiles
        self.tie_tol = tie_tol
        super().__init__(seed)

    def state_from(self, obs: Observation, delta_fix: float) -> FreezeThawState:
        means = []
        variances = []
        for j in range(obs.n_algorithms):
            at = min(obs.spent[j] + delta_fix, obs.total_budget)
            mean, var = fit_curve_model(
                obs.revealed_valid[j],
                at_cost=at,
                total_budget=obs.total_budget,
                baseline=self.baseline,
                prior_var=self.prior_var,
                bounds=self.bounds,
            )
            means.append(mean)
            variances.append(var)
        return FreezeThawState(
            means=tuple(means),
            variances=tuple(variances),
            observations=obs.revealed_valid,
        )

    def act(self, obs: Observation) -> Action:
        delta_fix = obs.total_budget / 20.0 if self.delta_fix is None else self.delta_fix
        state = self.state_from(obs, delta_fix)
        return freezethaw_act(
            state, obs, delta_fix, self._rng,
            n_samples=self.n_samples, n_quantiles=self.n_quantiles, tie_tol=self.tie_tol,
        )


# -- double DQN ------------------------------------------------------------


@dataclass
class DdqnConfig:
    """Network, replay, and schedule knobs for the DDQN baseline."""

    hidden_sizes: tuple[int, ...] = (64, 64)
    gamma: float = 0.99
    replay_capacity: int = 4096
    batch_size: int = 64
    target_sync: int = 100
    eps_start: float = 1.0
    eps_end: float = 0.05
    eval_epsilon: float = 0.05
    probe_fraction: float = 0.02
    lr: float = 1e-3
    train_episodes: int = 200
    baseline: float = 0.0
    reveal_mode: str = "full"

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay_capacity must be at least batch_size")
        if not self.probe_fraction > 0:
            raise ValueError("probe_fraction must be positive")


def ddqn_encode(obs: Observation, baseline: float = 0.0) -> np.ndarray:
    """State features: per algorithm (latest valid, best valid, spent
    fraction, trained flag), then (t_tilde, remaining fraction)."""
    t = obs.total_budget
    parts = []
    for j in range(obs.n_algorithms):
        reveals = obs.revealed_valid[j]
        if reveals:
            scores = [s for _, s in reveals]
            parts += [reveals[-1][1], max(scores), obs.spent[j] / t, 1.0]
        else:
            parts += [baseline, baseline, obs.spent[j] / t, 0.0]
    parts += [obs.t_tilde, obs.remaining / t]
    return np.array(parts, dtype=float)


def ddqn_state_size(n_algorithms: int) -> int:
    return 4 * n_algorithms + 2


def ddqn_act(
    net: Mlp,
    state: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
    spent: Sequence[float],
    delta0: float,
    predicted: int,
) -> Action:
    """Epsilon-greedy arm choice with budget doubling: request delta equal
    to the arm's spent budget (delta0 for untouched arms)."""
    n = net.n_out
    if rng.uniform() < epsilon:
        algo = int(rng.integers(n))
    else:
        algo = int(np.argmax(forward(net, state)))
    tau = spent[algo]
    delta = delta0 if tau == 0 else tau
    return Action(algo=algo, delta=delta, predicted_best=predicted)


def ddqn_targets(
    online: Mlp,
    target: Mlp,
    rewards: np.ndarray,
    next_states: np.ndarray,
    dones: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Double estimator: online net picks the argmax, target net scores it.

    Terminal transitions use y = r.
    """
    q_online = forward(online, next_states)
    best = np.argmax(q_online, axis=1)
    q_target = forward(target, next_states)[np.arange(len(best)), best]
    return rewards + gamma * q_target * (1.0 - dones.astype(float))


def ddqn_train_step(
    online: Mlp,
    target: Mlp,
    opt: OptimizerState,
    batch: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    gamma: float,
) -> float:
    """One squared-error optimizer step on the double-estimator targets."""
    states, actions, rewards, next_states, dones = batch
    y = ddqn_targets(online, target, rewards, next_states, dones, gamma)
    loss, grads = backward_batch(online, states, actions, y)
    opt_step(online, grads, opt)
    return loss


class ReplayBuffer:
    """Fixed-capacity ring of (s, a, r, s', done) transitions."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._data: list[tuple[np.ndarray, int, float, np.ndarray, bool]] = []
        self._pos = 0

    def __len__(self) -> int:
        return len(self._data)

    def push(self, state: np.ndarray, action: int, reward: float,
             next_state: np.ndarray, done: bool) -> None:
        item = (state, action, reward, next_state, done)
        if len(self._data) < self.capacity:
            self._data.append(item)
        else:
            self._data[self._pos] = item
        self._pos = (self._pos + 1) % self.capacity

    def sample(self, k: int, rng: np.random.Generator):
        idx = rng.integers(len(self._data), size=k)
        states = np.stack([self._data[i][0] for i in idx])
        actions = np.array([self._data[i][1] for i in idx], dtype=int)
        rewards = np.array([self._data[i][2] for i in idx], dtype=float)
        next_states = np.stack([self._data[i][3] for i in idx])
        dones = np.array([self._data[i][4] for i in idx], dtype=bool)
        return states, actions, rewards, next_states, dones


class DdqnAgent(Agent):
    """Double DQN over arm choices with budget doubling.

    Meta-training replays episodes over the meta-train datasets with a
    linearly decaying epsilon (1.0 down to eps_end over the first half of
    the episodes) and a periodically synced target network.
    """

    name = "ddqn"
    requires_meta_train = True

    def __init__(self, cfg: DdqnConfig | None = None, seed: SeedLike = 0) -> None:
        self.cfg = cfg if cfg is not None else DdqnConfig()
        self.online: Mlp | None = None
        self.target: Mlp | None = None
        self.train_losses: list[float] = []
        self._trained = False
        super().__init__(seed)

    @property
    def is_meta_trained(self) -> bool:
        return self._trained

    def _ensure_net(self, n_algorithms: int) -> None:
        size_in = ddqn_state_size(n_algorithms)
        if self.online is None:
            sizes = (size_in, *self.cfg.hidden_sizes, n_algorithms)
            self.online = init_mlp(sizes, seed=self._base_seed)
            self.target = copy_params(self.online)
        elif self.online.n_in != size_in:
            raise ValueError("network input size does not match the algorithm count")

    def _delta0(self, total_budget: float) -> float:
        return self.cfg.probe_fraction * total_budget

    def meta_train(self, md: MetaDataset) -> dict[str, Any]:
        if not md.meta_train:
            raise ValueError("meta_train split is empty")
        cfg = self.cfg
        self._ensure_net(md.n_algorithms)
        opt = init_optimizer(self.online, lr=cfg.lr)
        replay = ReplayBuffer(cfg.replay_capacity)
        self.train_losses = []
        rng = self._rng
        train_ids = list(md.meta_train)
        episodes = cfg.train_episodes
        half = max(1, episodes // 2)
        opt_steps = 0
        for ep in range(episodes):
            frac = min(1.0, ep / half)
            eps = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
            did = train_ids[int(rng.integers(len(train_ids)))]
            env = ReplayEnv(md, did, reveal_mode=cfg.reveal_mode)
            obs = env.reset()
            state = ddqn_encode(obs, cfg.baseline)
            while not env.done:
                action = ddqn_act(
                    self.online, state, eps, rng, obs.spent,
                    self._delta0(obs.total_budget), predicted_best(obs),
                )
                result = env.step(action)
                obs = result.observation
                next_state = ddqn_encode(obs, cfg.baseline)
                replay.push(state, action.algo, result.reward, next_state, result.done)
                state = next_state
                if len(replay) >= cfg.batch_size:
                    batch = replay.sample(cfg.batch_size, rng)
                    loss = ddqn_train_step(self.online, self.target, opt, batch, cfg.gamma)
                    self.train_losses.append(loss)
                    opt_steps += 1
                    if opt_steps % cfg.target_sync == 0:
                        self.target = copy_params(self.online)
        self._trained = True
        return {
            "agent": self.name,
            "meta_trained": True,
            "episodes": episodes,
            "opt_steps": opt_steps,
            "final_loss": self.train_losses[-1] if self.train_losses else None,
        }

    def save(self, path) -> None:
        if self.online is None:
            raise RuntimeError("no network to save")
        save_checkpoint(self.online, path)

    def load(self, path) -> None:
        self.online = load_checkpoint(path)
        self.target = copy_params(self.online)
        self._trained = True

    def reset(self, obs: Observation) -> None:
        self._ensure_net(obs.n_algorithms)

    def act(self, obs: Observation) -> Action:
        self._ensure_net(obs.n_algorithms)
        state = ddqn_encode(obs, self.cfg.baseline)
        return ddqn_act(
            self.online, state, self.cfg.eval_epsilon, self._rng, obs.spent,
            self._delta0(obs.total_budget), predicted_best(obs),
        )


AGENT_CLASSES: Mapping[str, type[Agent]] = {
    "ddqn": DdqnAgent,
    "freeze_thaw": FreezeThawAgent,
    "avg_rank": AvgRankAgent,
    "bos": BosAgent,
    "rand_search": RandSearchAgent,
}


def make_agent(name: str, seed: SeedLike = 0, params: Mapping[str, Any] | None = None) -> Agent:
    """Instantiate a named agent; params map onto the constructor."""
    if name not in AGENT_CLASSES:
        raise ValueError(f"unknown agent {name!r}; choose from {sorted(AGENT_CLASSES)}")
    params = dict(params or {})
    if name == "ddqn":
        cfg_fields = {f for f in DdqnConfig.__dataclass_fields__}
        cfg_kwargs = {k: params.pop(k) for k in list(params) if k in cfg_fields}
        if "hidden_sizes" in cfg_kwargs:
            cfg_kwargs["hidden_sizes"] = tuple(cfg_kwargs["hidden_sizes"])
        return DdqnAgent(cfg=DdqnConfig(**cfg_kwargs), seed=seed, **params)
    if name == "freeze_thaw" and "bounds" in params:
        params["bounds"] = tuple(params["bounds"])
    return AGENT_CLASSES[name](seed=seed, **params)

"""Shared fixtures and independent oracles.

The oracles in this file re-derive expected values from first principles
(plain loops, math.fsum, statistics.NormalDist) instead of calling the
code paths they are used to check, so each comparison pits two separate
implementations of the same contract against each other.
"""

from __future__ import annotations

import math
from statistics import NormalDist
from typing import Any, Iterator

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lc_arena.curvestore import (
    AlgorithmSpec,
    DatasetSpec,
    LearningCurve,
    MetaDataset,
)
from lc_arena.valuenet import Mlp, backward_batch, forward

settings.register_profile(
    "repo", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


# -- independent episode oracle ---------------------------------------------


class OracleEpisode:
    """From-scratch replay of the reveal game's scoring rules.

    Tracks spent budget, snapping, normalized time, and rewards with plain
    Python loops (log instead of log1p, linear anchor scans instead of
    bisect) and scores the episode as the step-function integral of the
    predicted-best test performance rather than a sum of rewards.
    """

    def __init__(
        self,
        md: MetaDataset,
        dataset_id: int,
        sigma: float | None = None,
        baseline: float = 0.0,
    ) -> None:
        ds = md.datasets[dataset_id]
        self.total = ds.total_budget
        self.sigma = self.total / 10.0 if sigma is None else sigma
        self.baseline = baseline
        n = len(md.algorithms)
        self.test = [md.curves[(dataset_id, a, "test")] for a in range(n)]
        self.grids = None
        if md.curve_kind == "size_indexed":
            self.grids = [md.curves[(dataset_id, a, "train")].costs for a in range(n)]
        self.spent = [0.0] * n
        self.remaining = self.total
        self.prev = baseline
        self.trace: list[tuple[float, float]] = [(0.0, baseline)]
        self.rewards: list[float] = []
        self.charges: list[float] = []

    def _lookup(self, curve: LearningCurve, cost: float) -> float:
        score = self.baseline
        for c, s in zip(curve.costs, curve.scores):
            if c <= cost:
                score = s
            else:
                break
        return score

    def _nt(self, spent_total: float) -> float:
        return math.log(1.0 + spent_total / self.sigma) / math.log(
            1.0 + self.total / self.sigma
        )

    def step(self, algo: int, delta: float, jstar: int) -> float:
        eff = min(delta, self.remaining)
        snap = None
        if self.grids is not None:
            for c in self.grids[algo]:
                if self.spent[algo] < c <= self.spent[algo] + eff:
                    snap = c
        if snap is not None:
            eff = snap - self.spent[algo]
        new_rem = self.remaining - eff
        charged = self.remaining - new_rem
        self.remaining = new_rem
        self.spent[algo] = snap if snap is not None else self.spent[algo] + charged
        t = self._nt(self.total - self.remaining)
        new_best = self._lookup(self.test[jstar], self.spent[jstar])
        r = (new_best - self.prev) * (1.0 - t)
        self.prev = new_best
        self.rewards.append(r)
        self.charges.append(charged)
        self.trace.append((t, new_best))
        return r

    def alc_integral(self) -> float:
        """Area under the left-hold trace on [0, 1], minus the baseline."""
        terms = []
        for (t0, v0), (t1, _) in zip(self.trace, self.trace[1:]):
            terms.append(v0 * (t1 - t0))
        t_last, v_last = self.trace[-1]
        terms.append(v_last * (1.0 - t_last))
        return math.fsum(terms) - self.trace[0][1]


def oracle_query(
    costs: tuple[float, ...], scores: tuple[float, ...], cost: float, baseline: float = 0.0
) -> float:
    """Linear-scan left-hold lookup."""
    score = baseline
    for c, s in zip(costs, scores):
        if c <= cost:
            score = s
        else:
            break
    return score


# -- exhaustive entropy-gain oracle (two arms) -------------------------------


def bernoulli_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log(p) + (1.0 - p) * math.log(1.0 - p))


def exact_entropy_gain_two_arms(
    mu_j: float, sd_j: float, mu_o: float, sd_o: float, step: float = 0.001
) -> float:
    """Expected argmax-entropy reduction from observing arm j, by quadrature.

    Two independent Gaussian arms: before observing, P(j wins) has a closed
    form; after fantasizing arm j's value y, the other arm wins with
    probability 1 - Phi((y - mu_o) / sd_o). Integrates over arm j's density
    on a midpoint grid spanning +-6 standard deviations.
    """
    p_j_wins = 1.0 - NormalDist(mu_j - mu_o, math.hypot(sd_j, sd_o)).cdf(0.0)
    h0 = bernoulli_entropy(p_j_wins)
    own = NormalDist(mu_j, sd_j)
    other = NormalDist(mu_o, sd_o)
    lo, hi = mu_j - 6.0 * sd_j, mu_j + 6.0 * sd_j
    n = int(round((hi - lo) / step))
    total = 0.0
    wsum = 0.0
    for i in range(n):
        y = lo + (i + 0.5) * step
        w = own.pdf(y) * step
        total += w * bernoulli_entropy(other.cdf(y))
        wsum += w
    return h0 - total / wsum


# -- finite-difference gradient oracle ---------------------------------------


def selected_output_loss(net: Mlp, xs: np.ndarray, idx: np.ndarray, tgt: np.ndarray) -> float:
    q = forward(net, xs)
    err = q[np.arange(len(idx)), idx] - tgt
    return float(np.mean(err**2))


def max_rel_grad_err(
    net: Mlp, xs: np.ndarray, idx: np.ndarray, tgt: np.ndarray, h: float = 1e-5
) -> float:
    """Worst relative disagreement between analytic and central-difference
    gradients over every parameter."""
    _, grads = backward_batch(net, xs, idx, tgt)
    worst = 0.0
    for params, gparams in ((net.weights, grads.weights), (net.biases, grads.biases)):
        for p, g in zip(params, gparams):
            flat_p = p.ravel()
            flat_g = g.ravel()
            for i in range(flat_p.size):
                orig = flat_p[i]
                flat_p[i] = orig + h
                lp = selected_output_loss(net, xs, idx, tgt)
                flat_p[i] = orig - h
                lm = selected_output_loss(net, xs, idx, tgt)
                flat_p[i] = orig
                numeric = (lp - lm) / (2.0 * h)
                denom = max(abs(numeric) + abs(flat_g[i]), 1e-6)
                worst = max(worst, abs(numeric - flat_g[i]) / denom)
    return worst


def min_abs_preactivation(net: Mlp, xs: np.ndarray) -> float:
    """Smallest |hidden preactivation| over a batch; used to stay away from
    rectifier kinks when finite-differencing."""
    a = xs
    smallest = math.inf
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        if l < len(net.weights) - 1:
            smallest = min(smallest, float(np.min(np.abs(z))))
            a = np.maximum(z, 0.0)
        else:
            a = z
    return smallest


# -- handmade meta-dataset fixtures ------------------------------------------


def one_algo_md() -> MetaDataset:
    """One dataset, one algorithm, T=2, single anchor at cost 1."""
    curves = {
        (0, 0, "train"): LearningCurve((1.0,), (0.55,)),
        (0, 0, "valid"): LearningCurve((1.0,), (0.5,)),
        (0, 0, "test"): LearningCurve((1.0,), (0.6,)),
    }
    return MetaDataset(
        datasets=[DatasetSpec(0, "single", 2.0, {})],
        algorithms=[AlgorithmSpec(0, "mlp", {"width": 8})],
        curves=curves,
        meta_train=(),
        meta_test=(0,),
    )


def bos_md() -> MetaDataset:
    """Three algorithms, T=10, probe scores [0.3, 0.6, 0.4] at cost 1.

    Test scores use distinctive digit patterns so leak scans can tell them
    apart from every train/valid value.
    """
    valid = [
        ((1.0, 10.0), (0.3, 0.45)),
        ((1.0, 10.0), (0.6, 0.75)),
        ((1.0, 10.0), (0.4, 0.55)),
    ]
    test = [
        ((1.0, 10.0), (0.31731, 0.46242)),
        ((1.0, 10.0), (0.61683, 0.76159)),
        ((1.0, 10.0), (0.41421, 0.56418)),
    ]
    train = [
        ((1.0, 10.0), (0.29, 0.44)),
        ((1.0, 10.0), (0.59, 0.74)),
        ((1.0, 10.0), (0.39, 0.54)),
    ]
    families = ("grad_boost", "mlp", "svm")
    curves = {}
    for a in range(3):
        for split, rows in (("train", train), ("valid", valid), ("test", test)):
            curves[(0, a, split)] = LearningCurve(*rows[a])
    return MetaDataset(
        datasets=[DatasetSpec(0, "bos-fixture", 10.0, {"n_examples": 1000.0})],
        algorithms=[
            AlgorithmSpec(a, families[a], {"p": float(a)}) for a in range(3)
        ],
        curves=curves,
        meta_train=(),
        meta_test=(0,),
    )


def avgrank_md() -> MetaDataset:
    """Three algorithms, datasets 0-1 meta-train, dataset 2 meta-test.

    Final valid scores give per-dataset ranks [1,2,3] and [2,1,3], so the
    average ranks are [1.5, 1.5, 3.0] with the tie broken toward algorithm 0.
    """
    valid_finals = {0: (0.9, 0.5, 0.1), 1: (0.5, 0.9, 0.1), 2: (0.6, 0.7, 0.2)}
    curves = {}
    for d in range(3):
        for a in range(3):
            vf = valid_finals[d][a]
            curves[(d, a, "train")] = LearningCurve(
                (2.0, 10.0), (max(vf - 0.08, 0.0), max(vf - 0.04, 0.0))
            )
            curves[(d, a, "valid")] = LearningCurve((2.0, 10.0), (max(vf - 0.05, 0.0), vf))
            curves[(d, a, "test")] = LearningCurve(
                (2.0, 10.0), (0.111 + 0.1 * a + 0.01 * d, 0.151 + 0.1 * a + 0.01 * d)
            )
    return MetaDataset(
        datasets=[DatasetSpec(d, f"ar-{d}", 10.0, {}) for d in range(3)],
        algorithms=[AlgorithmSpec(a, "mlp", {"w": 10.0 + a}) for a in range(3)],
        curves=curves,
        meta_train=(0, 1),
        meta_test=(2,),
    )


def size_indexed_md() -> MetaDataset:
    """Two algorithms on the shared grid (1, 2, 4, 8) with T=8."""
    grid = (1.0, 2.0, 4.0, 8.0)
    scores = {
        0: {
            "train": (0.18, 0.33, 0.48, 0.6),
            "valid": (0.2, 0.35, 0.5, 0.62),
            "test": (0.21371, 0.36787, 0.51111, 0.63212),
        },
        1: {
            "train": (0.13, 0.23, 0.33, 0.43),
            "valid": (0.15, 0.25, 0.35, 0.45),
            "test": (0.16655, 0.26424, 0.36561, 0.46321),
        },
    }
    curves = {
        (0, a, split): LearningCurve(grid, scores[a][split], kind="size_indexed")
        for a in range(2)
        for split in ("train", "valid", "test")
    }
    return MetaDataset(
        datasets=[DatasetSpec(0, "grid", 8.0, {})],
        algorithms=[AlgorithmSpec(a, "svm", {"c": 1.0 + a}) for a in range(2)],
        curves=curves,
        meta_train=(),
        meta_test=(0,),
        curve_kind="size_indexed",
    )


def flat_md(n_algorithms: int = 4, total_budget: float = 100.0) -> MetaDataset:
    """Minimal n-algorithm fixture for policy unit tests."""
    curves = {}
    for a in range(n_algorithms):
        for split, off in (("train", 0.0), ("valid", 0.003), ("test", 0.007)):
            curves[(0, a, split)] = LearningCurve(
                (1.0, total_budget), (0.1 + 0.01 * a + off, 0.2 + 0.01 * a + off)
            )
    return MetaDataset(
        datasets=[DatasetSpec(0, "flat", total_budget, {})],
        algorithms=[AlgorithmSpec(a, "mlp", {"w": float(a)}) for a in range(n_algorithms)],
        curves=curves,
        meta_train=(),
        meta_test=(0,),
    )


# -- observation leak scanning ------------------------------------------------


def iter_floats(obj: Any) -> Iterator[float]:
    if isinstance(obj, bool):
        return
    if isinstance(obj, (int, float)):
        yield float(obj)
    elif isinstance(obj, dict):
        for v in obj.values():
            yield from iter_floats(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            yield from iter_floats(v)


def iter_keys(obj: Any) -> Iterator[str]:
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield str(k)
            yield from iter_keys(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            yield from iter_keys(v)


def distinctive_test_scores(md: MetaDataset) -> set[float]:
    """Test-split scores that appear nowhere in train/valid data, the
    baseline, or the clamp endpoints; any of these inside a serialized
    observation would prove a hidden-score leak."""
    visible = {
        s
        for (_, _, split), curve in md.curves.items()
        if split in ("train", "valid")
        for s in curve.scores
    }
    visible |= {0.0, 1.0, md.baseline_score}
    hidden = {
        s
        for (_, _, split), curve in md.curves.items()
        if split == "test"
        for s in curve.scores
    }
    return hidden - visible


def assert_observation_clean(obs_dict: dict[str, Any], hidden: set[float]) -> None:
    leaked = set(iter_floats(obs_dict)) & hidden
    assert not leaked, f"hidden test scores leaked into an observation: {sorted(leaked)}"
    bad_keys = [k for k in iter_keys(obs_dict) if "test" in k.lower()]
    assert not bad_keys, f"observation keys reference the test split: {bad_keys}"


# -- acceptance verdict plumbing ----------------------------------------------

ACCEPTANCE_RESULTS: list[tuple[int, str, bool]] = []


@pytest.fixture
def verdict():
    """Records and prints one pass/fail line per acceptance criterion."""

    def _verdict(num: int, slug: str, failures: list[str]) -> None:
        ok = not failures
        ACCEPTANCE_RESULTS.append((num, slug, ok))
        line = f"criterion {num:02d} {slug}: {'PASS' if ok else 'FAIL'}"
        print(line)
        assert ok, f"{line}; failures: {failures}"

    return _verdict


def pytest_terminal_summary(terminalreporter) -> None:
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, slug, ok in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(
            f"criterion {num:02d} {slug}: {'PASS' if ok else 'FAIL'}"
        )

"""Seeded synthetic meta-dataset generation.

Curves follow a saturating power law: score(tau) = pmax - (pmax - p0) *
(1 + tau/s)^(-k), plus truncated Gaussian noise per anchor, clamped to the
score range. Each algorithm's latent quality and speed are monotone
functions of its hyperparameters, so similar hyperparameters give similar
curves across datasets (the signal meta-learning agents exploit).

Scenarios:
  generic            independent quality/speed, mild crossings
  non_crossing       per-dataset shared shape, scores totally ordered at
                     every anchor (no two test curves ever cross)
  frequent_crossing  speed anti-correlated with quality, so strong
                     algorithms start slow and overtake late
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curvestore import (
    AlgorithmSpec,
    CurveKey,
    DatasetSpec,
    LearningCurve,
    MetaDataset,
    query_curve,
)

SCENARIOS = ("generic", "non_crossing", "frequent_crossing")

# Substream tags: every random quantity hangs off SeedSequence([seed, tag,
# ids...]) so generation order never matters.
_TAG_ALGO = 1
_TAG_DATASET = 2
_TAG_PAIR = 3
_TAG_NOISE = 4
_TAG_SPLIT = 5

_SPLIT_IDX = {"train": 0, "valid": 1, "test": 2}
# Per-split noise multipliers; valid and test share the mean curve, so they
# correlate even with independent noise draws.
_NOISE_SCALE = {"train": 1.0, "valid": 1.0, "test": 0.75}
_FAMILIES = ("grad_boost", "mlp", "svm", "rand_forest")


def power_law(tau: float, p0: float, pmax: float, k: float, s: float) -> float:
    """Saturating curve family: p0 at tau=0, approaching pmax as tau grows."""
    return pmax - (pmax - p0) * (1.0 + tau / s) ** (-k)


@dataclass(frozen=True)
class CurveFamilyParams:
    """Parameters of one mean learning curve."""

    p0: float
    pmax: float
    k: float
    s: float
    noise_sd: float = 0.0
    crossing: bool = False

    def __post_init__(self) -> None:
        if not self.p0 <= self.pmax:
            raise ValueError("p0 must not exceed pmax")
        if not (self.k > 0 and self.s > 0):
            raise ValueError("k and s must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")

    def mean(self, tau: float) -> float:
        return power_law(tau, self.p0, self.pmax, self.k, self.s)


@dataclass(frozen=True)
class GenSpec:
    """Full recipe for one synthetic meta-dataset; seed determines output."""

    n_datasets: int
    n_algorithms: int
    curve_kind: str = "time_indexed"
    n_anchors: int = 12
    total_budget: float = 100.0
    seed: int = 0
    scenario: str = "generic"
    noise_sd: float = 0.015
    meta_train_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.n_datasets < 1 or self.n_algorithms < 1 or self.n_anchors < 1:
            raise ValueError("counts must be at least 1")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if not self.total_budget > 0:
            raise ValueError("total_budget must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if not 0 < self.meta_train_fraction < 1:
            raise ValueError("meta_train_fraction must lie in (0, 1)")


def _rng(spec: GenSpec, tag: int, *ids: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, tag, *ids])))


def _algo_latents(spec: GenSpec, aid: int) -> tuple[float, float, float]:
    """(quality, speed, extra) in [0,1]; speed is anti-correlated with
    quality in the frequent_crossing scenario."""
    rng = _rng(spec, _TAG_ALGO, aid)
    quality = float(rng.uniform())
    speed = float(rng.uniform())
    extra = float(rng.uniform())
    if spec.scenario == "frequent_crossing":
        speed = float(np.clip(1.0 - quality + 0.2 * (rng.uniform() - 0.5), 0.0, 1.0))
    return quality, speed, extra


def _hyperparameters(family: str, quality: float, speed: float, extra: float) -> dict:
    """Express the latents as named hyperparameters, monotone per field."""
    if family == "grad_boost":
        return {
            "n_estimators": int(round(20.0 * 25.0**quality)),
            "learning_rate": 0.01 * 50.0**speed,
            "subsample": 0.5 + 0.5 * extra,
        }
    if family == "mlp":
        return {
            "width": int(round(16.0 * 64.0**quality)),
            "learning_rate": 1e-4 * 1000.0**speed,
            "dropout": 0.6 * extra,
        }
    if family == "svm":
        return {
            "c": 0.1 * 10000.0**quality,
            "gamma": 1e-4 * 10000.0**speed,
            "tol": 1e-5 * 1000.0**extra,
        }
    return {
        "n_trees": int(round(20.0 * 40.0**quality)),
        "max_feature_frac": 0.1 + 0.9 * speed,
        "min_leaf": int(round(1.0 + 9.0 * extra)),
    }


def _meta_features(rng: np.random.Generator) -> dict[str, float]:
    return {
        "n_examples": float(round(10.0 ** rng.uniform(3.0, 6.0))),
        "n_features": float(round(10.0 ** rng.uniform(1.0, 4.0))),
        "n_classes": float(rng.integers(2, 101)),
        "sparsity": float(rng.uniform(0.0, 1.0)),
    }


def _anchor_grid(spec: GenSpec, rng: np.random.Generator) -> tuple[float, ...]:
    """Geometric grid shared by every curve of one dataset; ends exactly at
    the total budget so a fully spent episode sees the final anchor."""
    t = spec.total_budget
    if spec.n_anchors == 1:
        return (t,)
    if spec.scenario == "non_crossing":
        f0 = 0.01
    else:
        f0 = float(rng.uniform(0.006, 0.015))
    grid = np.geomspace(f0 * t, t, spec.n_anchors)
    grid[-1] = t
    return tuple(float(c) for c in grid)


def _split_scores(
    spec: GenSpec,
    mean: np.ndarray,
    did: int,
    aid: int,
    split: str,
) -> tuple[float, ...]:
    sd = spec.noise_sd * _NOISE_SCALE[split]
    if spec.scenario == "non_crossing":
        # Ordering must hold exactly on valid and test; train keeps a little
        # noise so the splits are not all identical.
        sd = spec.noise_sd * (0.5 if split == "train" else 0.0)
    scores = mean.copy()
    if sd > 0:
        rng = _rng(spec, _TAG_NOISE, did, aid, _SPLIT_IDX[split])
        scores = scores + np.clip(rng.normal(0.0, sd, size=len(scores)), -2.0 * sd, 2.0 * sd)
    return tuple(float(v) for v in np.clip(scores, 0.0, 1.0))


def generate(spec: GenSpec) -> MetaDataset:
    """Build a validated meta-dataset deterministically from the generation settings."""
    algorithms = []
    latents = []
    for aid in range(spec.n_algorithms):
        quality, speed, extra = _algo_latents(spec, aid)
        latents.append((quality, speed))
        family = _FAMILIES[aid % len(_FAMILIES)]
        algorithms.append(
            AlgorithmSpec(id=aid, family=family,
                          hyperparameters=_hyperparameters(family, quality, speed, extra))
        )

    datasets = []
    curves: dict[CurveKey, LearningCurve] = {}
    t = spec.total_budget
    for did in range(spec.n_datasets):
        drng = _rng(spec, _TAG_DATASET, did)
        meta = _meta_features(drng)
        lo = float(drng.uniform(0.05, 0.25))
        hi = float(drng.uniform(0.7, 0.95))
        grid = _anchor_grid(spec, drng)
        garr = np.asarray(grid)
        # Shared shape for the ordered scenario: one (k, s) per dataset.
        shared_k = float(drng.uniform(1.2, 2.5))
        shared_s = t * float(drng.uniform(0.03, 0.15))
        datasets.append(DatasetSpec(id=did, name=f"synth-{did:03d}",
                                    total_budget=t, meta_features=meta))

        for aid in range(spec.n_algorithms):
            quality, speed = latents[aid]
            prng = _rng(spec, _TAG_PAIR, did, aid)
            q = float(np.clip(0.8 * quality + 0.2 * prng.uniform(), 0.0, 1.0))
            if spec.scenario == "non_crossing":
                # Pointwise order: shared decay g(tau) and both endpoints
                # increasing in q make curves totally ordered at every tau.
                g = (1.0 + garr / shared_s) ** (-shared_k)
                p0 = lo + (hi - lo) * (0.05 + 0.25 * q)
                pmax = lo + (hi - lo) * (0.35 + 0.6 * q)
                mean = p0 * g + pmax * (1.0 - g)
            else:
                pmax = lo + (hi - lo) * (0.3 + 0.7 * q)
                frac0 = 0.08 + 0.55 * speed * float(prng.uniform(0.7, 1.0))
                p0 = lo + (pmax - lo) * frac0
                k = (1.2 + 2.5 * speed) * float(prng.uniform(0.85, 1.15))
                s = t * (0.008 + 0.25 * (1.0 - speed) ** 2 * float(prng.uniform(0.7, 1.3)))
                params = CurveFamilyParams(p0=p0, pmax=pmax, k=k, s=s,
                                           noise_sd=spec.noise_sd, crossing=speed < quality)
                mean = np.array([params.mean(c) for c in garr])
            for split in ("train", "valid", "test"):
                curves[(did, aid, split)] = LearningCurve(
                    costs=grid,
                    scores=_split_scores(spec, mean, did, aid, split),
                    kind=spec.curve_kind,
                )

    srng = _rng(spec, _TAG_SPLIT)
    perm = [int(i) for i in srng.permutation(spec.n_datasets)]
    if spec.n_datasets == 1:
        n_train = 1
    else:
        n_train = min(max(1, round(spec.n_datasets * spec.meta_train_fraction)),
                      spec.n_datasets - 1)
    meta_train = tuple(sorted(perm[:n_train]))
    meta_test = tuple(sorted(perm[n_train:]))

    return MetaDataset(
        datasets=datasets,
        algorithms=algorithms,
        curves=curves,
        meta_train=meta_train,
        meta_test=meta_test,
        score_min=0.0,
        score_max=1.0,
        baseline_score=0.0,
        curve_kind=spec.curve_kind,
    )


def crossing_count(md: MetaDataset, dataset_id: int) -> int:
    """Count strict order flips between test curves of one dataset.

    For every algorithm pair the two curves are read (left-hold) on the
    union of their anchor costs at or past both first anchors; each sign
    change of the difference across an adjacent grid interval counts once.
    """
    md.dataset(dataset_id)
    n = md.n_algorithms
    total = 0
    curves = [md.curve(dataset_id, aid, "test") for aid in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            ca, cb = curves[a], curves[b]
            start = max(ca.costs[0], cb.costs[0])
            grid = sorted({c for c in ca.costs + cb.costs if c >= start})
            signs = []
            for c in grid:
                d = query_curve(ca, c) - query_curve(cb, c)
                signs.append(0 if d == 0 else (1 if d > 0 else -1))
            for s0, s1 in zip(signs, signs[1:]):
                if s0 * s1 < 0:
                    total += 1
    return total

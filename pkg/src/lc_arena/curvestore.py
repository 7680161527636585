"""Learning-curve data model, left-hold interpolation, and the on-disk meta-dataset format.

A meta-dataset is a directory with one ``manifest.json`` plus a curve
directory holding one CSV per (dataset, algorithm, split). All floats are
written with shortest round-trip precision, so save -> load is bit-exact.
"""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

SPLITS = ("train", "valid", "test")
CURVE_KINDS = ("time_indexed", "size_indexed")

CurveKey = tuple[int, int, str]


class ManifestError(ValueError):
    """A manifest, curve file, or meta-dataset invariant is broken."""


def _key_name(dataset_id: int, algo_id: int, split: str) -> str:
    return f"(dataset {dataset_id}, algorithm {algo_id}, split '{split}')"


@dataclass(frozen=True)
class LearningCurve:
    """Performance anchors of one algorithm on one dataset split.

    Costs are abstract budget units (seconds or data-fraction based, both
    map onto the same axis) and must be strictly increasing.
    """

    costs: tuple[float, ...]
    scores: tuple[float, ...]
    kind: str = "time_indexed"

    def __post_init__(self) -> None:
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if len(self.costs) != len(self.scores):
            raise ValueError("costs and scores must have equal length")
        if not self.costs:
            raise ValueError("a learning curve needs at least one anchor")
        if self.costs[0] < 0:
            raise ValueError("anchor costs must be nonnegative")
        if any(b <= a for a, b in zip(self.costs, self.costs[1:])):
            raise ValueError("anchor costs must be strictly increasing")

    @property
    def anchors(self) -> tuple[tuple[float, float], ...]:
        return tuple(zip(self.costs, self.scores))

    @property
    def final_score(self) -> float:
        return self.scores[-1]

    def query(self, cost: float, baseline: float = 0.0) -> float:
        return query_curve(self, cost, baseline)


def query_curve(curve: LearningCurve, cost: float, baseline: float = 0.0) -> float:
    """Left-hold lookup: score of the last anchor at or below ``cost``.

    Below the first anchor no evaluation has happened yet, so the
    meta-dataset's baseline score is returned. Total on cost >= 0.
    """
    if cost < 0:
        raise ValueError("cost must be nonnegative")
    idx = bisect_right(curve.costs, cost)
    if idx == 0:
        return baseline
    return curve.scores[idx - 1]


@dataclass(frozen=True)
class AlgorithmSpec:
    """One candidate algorithm: a family label plus its hyperparameters."""

    id: int
    family: str
    hyperparameters: Mapping[str, float | int | str] = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetSpec:
    """One task: meta-features and the total budget granted per episode."""

    id: int
    name: str
    total_budget: float
    meta_features: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.total_budget > 0:
            raise ValueError(f"dataset {self.id}: total_budget must be positive")
        for k, v in self.meta_features.items():
            if not math.isfinite(float(v)):
                raise ValueError(f"dataset {self.id}: meta-feature {k!r} is not finite")


@dataclass
class MetaDataset:
    """Datasets x algorithms x {train, valid, test} curves plus the meta split.

    Immutable after construction; safe to share read-only across episode
    workers.
    """

    datasets: list[DatasetSpec]
    algorithms: list[AlgorithmSpec]
    curves: dict[CurveKey, LearningCurve]
    meta_train: tuple[int, ...]
    meta_test: tuple[int, ...]
    score_min: float = 0.0
    score_max: float = 1.0
    baseline_score: float = 0.0
    curve_kind: str = "time_indexed"

    def __post_init__(self) -> None:
        self.validate()

    # -- access helpers -------------------------------------------------

    @property
    def n_datasets(self) -> int:
        return len(self.datasets)

    @property
    def n_algorithms(self) -> int:
        return len(self.algorithms)

    def dataset(self, dataset_id: int) -> DatasetSpec:
        if not 0 <= dataset_id < len(self.datasets):
            raise KeyError(f"unknown dataset id {dataset_id}")
        return self.datasets[dataset_id]

    def curve(self, dataset_id: int, algo_id: int, split: str) -> LearningCurve:
        try:
            return self.curves[(dataset_id, algo_id, split)]
        except KeyError:
            raise KeyError(f"no curve for {_key_name(dataset_id, algo_id, split)}") from None

    def iter_keys(self) -> Iterator[CurveKey]:
        for d in self.datasets:
            for a in self.algorithms:
                for split in SPLITS:
                    yield (d.id, a.id, split)

    # -- invariants ------------------------------------------------------

    def validate(self) -> None:
        if self.curve_kind not in CURVE_KINDS:
            raise ManifestError(f"unknown curve_kind {self.curve_kind!r}")
        if not self.score_min < self.score_max:
            raise ManifestError("score_min must be below score_max")
        if [d.id for d in self.datasets] != list(range(len(self.datasets))):
            raise ManifestError("dataset ids must be 0..n_datasets-1 in order")
        if [a.id for a in self.algorithms] != list(range(len(self.algorithms))):
            raise ManifestError("algorithm ids must be 0..n_algorithms-1 in order")

        ids = set(range(len(self.datasets)))
        train, test = set(self.meta_train), set(self.meta_test)
        if train & test:
            raise ManifestError(f"meta_train and meta_test overlap: {sorted(train & test)}")
        if train | test != ids:
            raise ManifestError("meta split must partition the dataset ids")

        expected = set(self.iter_keys())
        have = set(self.curves)
        for key in sorted(expected - have):
            raise ManifestError(f"missing curve for {_key_name(*key)}")
        for key in sorted(have - expected):
            raise ManifestError(f"unexpected curve key {_key_name(*key)}")

        for key, curve in self.curves.items():
            if curve.kind != self.curve_kind:
                raise ManifestError(f"curve kind mismatch for {_key_name(*key)}")
            for s in curve.scores:
                if not self.score_min <= s <= self.score_max:
                    raise ManifestError(
                        f"score {s!r} outside [{self.score_min}, {self.score_max}] "
                        f"for {_key_name(*key)}"
                    )

        # Size-indexed curves are defined on one shared anchor grid per
        # dataset, so budget increments snap to the same legal grid for
        # every algorithm.
        if self.curve_kind == "size_indexed":
            for d in self.datasets:
                grid = self.curves[(d.id, 0, "train")].costs
                for a in self.algorithms:
                    for split in SPLITS:
                        c = self.curves[(d.id, a.id, split)]
                        if c.costs != grid:
                            raise ManifestError(
                                f"size-indexed anchor grid mismatch for "
                                f"{_key_name(d.id, a.id, split)}"
                            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MetaDataset):
            return NotImplemented
        return (
            self.datasets == other.datasets
            and self.algorithms == other.algorithms
            and self.curves == other.curves
            and self.meta_train == other.meta_train
            and self.meta_test == other.meta_test
            and self.score_min == other.score_min
            and self.score_max == other.score_max
            and self.baseline_score == other.baseline_score
            and self.curve_kind == other.curve_kind
        )


def final_rank(md: MetaDataset, dataset_id: int, split: str = "test") -> list[int]:
    """Rank algorithms by their last anchor score on ``split`` (1 = best).

    Ties break toward the lower algorithm id. Returns ranks indexed by
    algorithm id.
    """
    md.dataset(dataset_id)
    order = sorted(
        range(md.n_algorithms),
        key=lambda aid: (-md.curve(dataset_id, aid, split).final_score, aid),
    )
    ranks = [0] * md.n_algorithms
    for pos, aid in enumerate(order):
        ranks[aid] = pos + 1
    return ranks


def best_final_algorithm(md: MetaDataset, dataset_id: int, split: str = "test") -> int:
    """Algorithm id holding rank 1 at the end of its curve."""
    return final_rank(md, dataset_id, split).index(1)


# -- serialization -------------------------------------------------------


def _curve_file(dataset_id: int, algo_id: int, split: str) -> str:
    return f"d{dataset_id}_a{algo_id}_{split}.csv"


def _resolve_manifest(path: str | Path) -> Path:
    p = Path(path)
    if p.is_dir() or p.suffix != ".json":
        return p / "manifest.json"
    return p


def save_metadataset(md: MetaDataset, path: str | Path, curves_dirname: str = "curves") -> Path:
    """Write ``manifest.json`` plus one CSV per curve; returns the manifest path."""
    manifest_path = _resolve_manifest(path)
    root = manifest_path.parent
    curves_dir = root / curves_dirname
    curves_dir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "score_min": md.score_min,
        "score_max": md.score_max,
        "baseline_score": md.baseline_score,
        "curve_kind": md.curve_kind,
        "datasets": [
            {
                "id": d.id,
                "name": d.name,
                "total_budget": d.total_budget,
                "meta_features": dict(d.meta_features),
            }
            for d in md.datasets
        ],
        "algorithms": [
            {"id": a.id, "family": a.family, "hyperparameters": dict(a.hyperparameters)}
            for a in md.algorithms
        ],
        "split": {"meta_train": list(md.meta_train), "meta_test": list(md.meta_test)},
        "curves": curves_dirname,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    for (did, aid, split), curve in sorted(md.curves.items()):
        with (curves_dir / _curve_file(did, aid, split)).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cost", "score"])
            for cost, score in curve.anchors:
                writer.writerow([repr(float(cost)), repr(float(score))])
    return manifest_path


def _load_curve(path: Path, kind: str, key: CurveKey) -> LearningCurve:
    if not path.exists():
        raise ManifestError(f"missing curve file for {_key_name(*key)}: {path.name}")
    costs: list[float] = []
    scores: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["cost", "score"]:
            raise ManifestError(f"bad header in curve file for {_key_name(*key)}")
        for row in reader:
            if len(row) != 2:
                raise ManifestError(f"malformed row {row!r} in curve for {_key_name(*key)}")
            costs.append(float(row[0]))
            scores.append(float(row[1]))
    try:
        return LearningCurve(tuple(costs), tuple(scores), kind=kind)
    except ValueError as exc:
        raise ManifestError(f"invalid curve for {_key_name(*key)}: {exc}") from exc


def load_metadataset(path: str | Path) -> MetaDataset:
    """Load and validate a meta-dataset from its manifest (or directory)."""
    manifest_path = _resolve_manifest(path)
    if not manifest_path.exists():
        raise ManifestError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"malformed manifest {manifest_path}: {exc}") from exc

    required = {"score_min", "score_max", "baseline_score", "curve_kind",
                "datasets", "algorithms", "split", "curves"}
    missing = required - set(manifest)
    if missing:
        raise ManifestError(f"manifest missing fields: {sorted(missing)}")

    kind = manifest["curve_kind"]
    datasets = [
        DatasetSpec(
            id=int(d["id"]),
            name=str(d["name"]),
            total_budget=float(d["total_budget"]),
            meta_features={k: float(v) for k, v in d.get("meta_features", {}).items()},
        )
        for d in manifest["datasets"]
    ]
    algorithms = [
        AlgorithmSpec(
            id=int(a["id"]),
            family=str(a["family"]),
            hyperparameters=dict(a.get("hyperparameters", {})),
        )
        for a in manifest["algorithms"]
    ]

    curves_dir = manifest_path.parent / manifest["curves"]
    curves: dict[CurveKey, LearningCurve] = {}
    for d in datasets:
        for a in algorithms:
            for split in SPLITS:
                key = (d.id, a.id, split)
                curves[key] = _load_curve(curves_dir / _curve_file(*key), kind, key)

    try:
        return MetaDataset(
            datasets=datasets,
            algorithms=algorithms,
            curves=curves,
            meta_train=tuple(int(i) for i in manifest["split"]["meta_train"]),
            meta_test=tuple(int(i) for i in manifest["split"]["meta_test"]),
            score_min=float(manifest["score_min"]),
            score_max=float(manifest["score_max"]),
            baseline_score=float(manifest["baseline_score"]),
            curve_kind=kind,
        )
    except ManifestError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"invalid manifest {manifest_path}: {exc}") from exc

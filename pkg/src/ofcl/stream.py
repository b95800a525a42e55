"""Synthetic open-world task streams and episode file I/O.

A stream is a base episode with ample samples followed by N-way K-shot
episodes. Each episode's test set covers every class trained so far plus,
crucially, samples of the *next* task's classes: those are the open samples,
so ground truth for unknown-detection metrics exists without leaking labels
into training.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import GenerationError, ParseError, UsageError
from .geometry import seeded_rng

_MAGIC = "ofcl-episode v1"
_MANIFEST_MAGIC = "ofcl-manifest v1"

# stream tag for sample generation
_STREAM_STREAM = 2

# rejection-sampling attempts per class mean before giving up
_MAX_MEAN_DRAWS = 500


@dataclass(frozen=True)
class StreamSpec:
    input_dim: int = 16
    num_base_classes: int = 6
    base_samples_per_class: int = 50
    num_tasks: int = 3  # incremental tasks after the base task
    n_way: int = 3
    k_shot: int = 5
    test_per_class: int = 20
    cluster_separation: float = 3.0
    cluster_spread: float = 0.5
    seed: int = 7

    def __post_init__(self):
        counts = (
            self.input_dim,
            self.num_base_classes,
            self.base_samples_per_class,
            self.n_way,
            self.k_shot,
            self.test_per_class,
        )
        if any(c < 1 for c in counts):
            raise UsageError("all stream counts must be at least 1")
        if self.num_tasks < 0:
            raise UsageError("num_tasks must be non-negative")
        if self.cluster_separation <= 0 or self.cluster_spread <= 0:
            raise UsageError("separation and spread must be positive")

    def num_classes(self) -> int:
        return self.num_base_classes + self.num_tasks * self.n_way


@dataclass
class Episode:
    """One task's train split plus its (possibly open-contaminated) test split."""

    task_index: int
    train: list  # (input vector, class id) pairs, N-way K-shot layout
    test: list  # (input vector, class id) pairs; ids may be untrained classes
    train_class_ids: list  # classes introduced by this episode


def class_schedule(spec: StreamSpec) -> list[list[int]]:
    """Class ids per episode: base classes first, then n_way per task."""
    schedule = [list(range(spec.num_base_classes))]
    nxt = spec.num_base_classes
    for _ in range(spec.num_tasks):
        schedule.append(list(range(nxt, nxt + spec.n_way)))
        nxt += spec.n_way
    return schedule


def _class_means(spec: StreamSpec, rng) -> np.ndarray:
    """Class means on a sphere, rejection-sampled to pairwise separation."""
    radius = 2.0 * spec.cluster_separation
    means = []
    for c in range(spec.num_classes()):
        for _ in range(_MAX_MEAN_DRAWS):
            v = rng.normal(size=spec.input_dim)
            norm = np.linalg.norm(v)
            if norm == 0.0:
                continue
            v = v / norm * radius
            if all(np.linalg.norm(v - m) >= spec.cluster_separation for m in means):
                means.append(v)
                break
        else:
            raise GenerationError(
                f"could not place class mean {c} at separation "
                f"{spec.cluster_separation}; try a smaller cluster_separation"
            )
    return np.stack(means)


def generate(spec: StreamSpec) -> list[Episode]:
    """Materialize the full stream; a pure function of the spec (seed included)."""
    rng = seeded_rng(spec.seed, _STREAM_STREAM)
    means = _class_means(spec, rng)
    schedule = class_schedule(spec)

    def draw(cid, count):
        return means[cid] + rng.normal(0.0, spec.cluster_spread, size=(count, spec.input_dim))

    episodes = []
    for t, classes in enumerate(schedule):
        per_class = spec.base_samples_per_class if t == 0 else spec.k_shot
        train = []
        for cid in classes:
            for row in draw(cid, per_class):
                train.append((row, cid))
        test = []
        trained_so_far = [c for s in schedule[: t + 1] for c in s]
        for cid in trained_so_far:
            for row in draw(cid, spec.test_per_class):
                test.append((row, cid))
        if t + 1 < len(schedule):
            for cid in schedule[t + 1]:  # next task's classes: the opens
                for row in draw(cid, spec.test_per_class):
                    test.append((row, cid))
        episodes.append(Episode(t, train, test, list(classes)))
    return episodes


# -- episode files ---------------------------------------------------------


def dumps_episode(ep: Episode) -> str:
    dim = len(ep.train[0][0]) if ep.train else (len(ep.test[0][0]) if ep.test else 0)
    lines = [
        _MAGIC,
        f"task {ep.task_index}",
        f"dim {dim}",
        f"train {len(ep.train)}",
        f"test {len(ep.test)}",
    ]
    for split, rows in (("train", ep.train), ("test", ep.test)):
        for vec, cid in rows:
            coords = ",".join(repr(float(v)) for v in vec)
            lines.append(f"{split},{cid},{coords}")
    return "\n".join(lines) + "\n"


def write_episode(path, ep: Episode) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_episode(ep))


def loads_episode(text: str) -> Episode:
    lines = text.splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ParseError("bad or missing episode magic line", line=1)
    try:
        task = int(lines[1].split()[1])
        dim = int(lines[2].split()[1])
        n_train = int(lines[3].split()[1])
        n_test = int(lines[4].split()[1])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed episode header: {exc}", line=2) from exc
    train, test = [], []
    for lineno, raw in enumerate(lines[5:], start=6):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if parts[0] not in ("train", "test"):
            raise ParseError(f"row must start with train or test, got {parts[0]!r}", line=lineno)
        if len(parts) != 2 + dim:
            raise ParseError(
                f"row has {len(parts) - 2} values, header declared dim {dim}", line=lineno
            )
        try:
            cid = int(parts[1])
            vec = np.array([float(p) for p in parts[2:]])
        except ValueError as exc:
            raise ParseError(f"bad number in row: {exc}", line=lineno) from exc
        (train if parts[0] == "train" else test).append((vec, cid))
    if len(train) != n_train:
        raise ParseError(
            f"header declared {n_train} train rows, found {len(train)}", line=len(lines)
        )
    if len(test) != n_test:
        raise ParseError(
            f"header declared {n_test} test rows, found {len(test)}", line=len(lines)
        )
    return Episode(task, train, test, sorted({cid for _, cid in train}))


def read_episode(path) -> Episode:
    with open(path) as fh:
        return loads_episode(fh.read())


# -- manifest ----------------------------------------------------------------


def episode_filename(task: int) -> str:
    return f"episode_task_{task:03d}.txt"


def write_stream(directory, episodes) -> str:
    """Write one file per episode plus the ordered manifest; returns its path."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for ep in episodes:
        name = episode_filename(ep.task_index)
        write_episode(os.path.join(directory, name), ep)
        names.append((ep.task_index, name))
    manifest = os.path.join(directory, "manifest.txt")
    with open(manifest, "w", newline="\n") as fh:
        fh.write(_MANIFEST_MAGIC + "\n")
        for task, name in names:
            fh.write(f"{task} {name}\n")
    return manifest


def read_stream(manifest_path) -> list[Episode]:
    """Load every episode listed in a manifest, in listed order."""
    with open(manifest_path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MANIFEST_MAGIC:
        raise ParseError("bad or missing manifest magic line", line=1)
    base = os.path.dirname(os.path.abspath(manifest_path))
    episodes = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != 2:
            raise ParseError("manifest rows are '<task> <filename>'", line=lineno)
        try:
            task = int(parts[0])
        except ValueError as exc:
            raise ParseError(f"bad task index: {exc}", line=lineno) from exc
        ep = read_episode(os.path.join(base, parts[1]))
        if ep.task_index != task:
            raise ParseError(
                f"manifest says task {task} but file holds task {ep.task_index}",
                line=lineno,
            )
        episodes.append(ep)
    return episodes

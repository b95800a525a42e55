"""Adaptive knowledge space: known and pseudo hyperspheres plus promotion.

Detected unknowns are clustered by density reachability, each cluster becomes
a pseudo-labeled hypersphere, and a pseudo sphere is promoted (removed and
logged) when a newly trained known sphere overlaps it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .boundaries import (
    Detection,
    Hypersphere,
    MarginConfig,
    compute_centroid,
    detect_batch,
    fallback_radius,
    init_radius,
)
from .errors import ParseError, UsageError
from .geometry import distance

_MAGIC = "ofcl-knowledge-space v1"


@dataclass(frozen=True)
class ClusterParams:
    """Density-reachability parameters: neighborhood radius and minimum size."""

    epsilon: float
    min_pts: int

    def __post_init__(self):
        if self.epsilon <= 0:
            raise UsageError("epsilon must be positive")
        if self.min_pts < 1:
            raise UsageError("min_pts must be at least 1")


@dataclass(frozen=True)
class Promotion:
    pseudo_id: int
    absorbed_into: int
    task: int


class KnowledgeSpace:
    """The growing set of hyperspheres plus the promotion log.

    Known labels are non-negative class ids; pseudo labels are negative
    integers (rendered as ``open-<n>``), a namespace that never collides
    with real classes.
    """

    def __init__(self):
        self.spheres: list[Hypersphere] = []
        self.next_pseudo_id = 1
        self.promotion_log: list[Promotion] = []

    def __len__(self) -> int:
        return len(self.spheres)

    def labels(self) -> set[int]:
        return {s.label for s in self.spheres}

    def known_spheres(self) -> list[Hypersphere]:
        return [s for s in self.spheres if s.provenance == "known"]

    def pseudo_spheres(self) -> list[Hypersphere]:
        return [s for s in self.spheres if s.provenance == "pseudo"]

    def classify(self, x) -> Detection:
        """Open detection over the union of known and pseudo spheres."""
        return self.classify_batch(np.asarray(x, dtype=float)[None, :])[0]

    def classify_batch(self, xs) -> list[Detection]:
        return detect_batch(self.spheres, xs)

    def promotion_map(self) -> dict[int, int]:
        return {p.pseudo_id: p.absorbed_into for p in self.promotion_log}


def cluster_unknowns(points, params: ClusterParams):
    """Density-based grouping of detected unknowns.

    Returns (groups, noise): groups is a list of ascending index lists in
    cluster-creation order, noise the ascending list of unclustered indices.
    Together they partition range(len(points)). Empty input yields ([], []).
    """
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        return [], []
    labels = kernels.dbscan_labels(points, params.epsilon, params.min_pts)
    groups = [
        [int(i) for i in np.flatnonzero(labels == c)]
        for c in range(int(labels.max()) + 1)
    ]
    noise = [int(i) for i in np.flatnonzero(labels == -1)]
    return groups, noise


def absorb_unknowns(space: KnowledgeSpace, groups, points, task: int, cfg: MarginConfig):
    """Turn each cluster of unknowns into a pseudo-labeled hypersphere.

    Centroid is the group mean; the radius applies the quantile rule against
    all points outside the group, falling back to twice the mean member
    distance when the group covers everything. Noise points are discarded.
    Returns the appended spheres.
    """
    points = np.asarray(points, dtype=float)
    created = []
    for group in groups:
        members = points[list(group)]
        centroid = compute_centroid(members)
        outside = np.delete(points, list(group), axis=0)
        if outside.size:
            radius = init_radius(centroid, outside, cfg)
        else:
            radius = fallback_radius(centroid, members)
        label = -space.next_pseudo_id
        space.next_pseudo_id += 1
        sphere = Hypersphere(label, centroid, radius, task, "pseudo")
        space.spheres.append(sphere)
        created.append(sphere)
    return created


def promote(space: KnowledgeSpace, new_known, task: int) -> list[Promotion]:
    """Fold newly trained known spheres in, absorbing overlapped pseudos.

    A pseudo sphere P is promoted when some new sphere S satisfies the strict
    overlap test dist(c_P, c_S) < r_P + r_S; among several, the nearest
    centroid wins (ties toward the lower label). All promoted pseudos are
    removed and logged, then the new spheres are appended.
    """
    new_known = list(new_known)
    for s in new_known:
        if s.provenance != "known":
            raise UsageError(f"promote expects known spheres, got {s.provenance!r}")
    existing = space.labels()
    incoming = [s.label for s in new_known]
    if len(set(incoming)) != len(incoming) or existing & set(incoming):
        raise UsageError(f"label collision when adding {sorted(incoming)}")

    applied = []
    removed = set()
    for p in space.pseudo_spheres():
        best = None
        best_d = None
        for s in new_known:
            d = distance(p.centroid, s.centroid)
            if d < p.radius + s.radius:
                if best is None or d < best_d or (d == best_d and s.label < best.label):
                    best, best_d = s, d
        if best is not None:
            applied.append(Promotion(p.label, best.label, task))
            removed.add(p.label)
    if removed:
        space.spheres = [s for s in space.spheres if s.label not in removed]
    space.spheres.extend(new_known)
    space.promotion_log.extend(applied)
    return applied


# -- dump format ---------------------------------------------------------


def render_label(label: int | None) -> str:
    """Human-facing label: pseudo ids show as open-<n>, None as unknown."""
    if label is None:
        return "unknown"
    if label < 0:
        return f"open-{-label}"
    return str(label)


def dumps_knowledge(space: KnowledgeSpace) -> str:
    dim = space.spheres[0].centroid.shape[0] if space.spheres else 0
    lines = [_MAGIC, f"dim {dim}", f"next_pseudo_id {space.next_pseudo_id}"]
    for s in space.spheres:
        coords = " ".join(repr(float(v)) for v in s.centroid)
        lines.append(
            f"sphere {s.provenance} {s.label} {s.task_of_origin} {repr(float(s.radius))} {coords}"
        )
    for p in space.promotion_log:
        lines.append(f"promotion {p.pseudo_id} {p.absorbed_into} {p.task}")
    return "\n".join(lines) + "\n"


def dump_knowledge(space: KnowledgeSpace, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_knowledge(space))


def loads_knowledge(text: str) -> KnowledgeSpace:
    lines = text.splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ParseError("bad or missing knowledge-space magic line", line=1)
    try:
        dim = int(lines[1].split()[1])
        next_pseudo = int(lines[2].split()[1])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed knowledge-space header: {exc}", line=2) from exc
    space = KnowledgeSpace()
    space.next_pseudo_id = next_pseudo
    for lineno, raw in enumerate(lines[3:], start=4):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "sphere":
            if len(parts) != 5 + dim:
                raise ParseError(
                    f"sphere record needs provenance, label, task, radius and {dim} coordinates",
                    line=lineno,
                )
            try:
                provenance = parts[1]
                label = int(parts[2])
                task = int(parts[3])
                radius = float(parts[4])
                centroid = np.array([float(p) for p in parts[5:]])
            except ValueError as exc:
                raise ParseError(f"bad number in sphere record: {exc}", line=lineno) from exc
            try:
                space.spheres.append(Hypersphere(label, centroid, radius, task, provenance))
            except UsageError as exc:
                raise ParseError(str(exc), line=lineno) from exc
        elif parts[0] == "promotion":
            if len(parts) != 4:
                raise ParseError("promotion record needs pseudo, class, task", line=lineno)
            try:
                space.promotion_log.append(
                    Promotion(int(parts[1]), int(parts[2]), int(parts[3]))
                )
            except ValueError as exc:
                raise ParseError(f"bad number in promotion record: {exc}", line=lineno) from exc
        else:
            raise ParseError(f"unknown record type {parts[0]!r}", line=lineno)
    return space


def load_knowledge(path) -> KnowledgeSpace:
    with open(path) as fh:
        return loads_knowledge(fh.read())

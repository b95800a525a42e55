"""Frozen feature backbone and augmented-feature construction.

The backbone maps raw input vectors to unit-norm embeddings (projection,
tanh, L2 normalization); it never trains. Hyperspheres live in this raw
embedding space, while the classifier consumes the token-augmented
concatenation built by :func:`augmented_feature`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, UsageError
from .geometry import seeded_rng

BACKBONE_KINDS = ("identity", "projection")

# stream tag for backbone weight draws (see geometry.seeded_rng)
_BACKBONE_STREAM = 1


@dataclass(frozen=True)
class Backbone:
    """Frozen feature extractor; ``weights`` is None for the identity kind."""

    kind: str
    input_dim: int
    output_dim: int
    seed: int
    weights: np.ndarray | None = field(repr=False, default=None)


def make_backbone(kind: str, input_dim: int, output_dim: int, seed: int) -> Backbone:
    if kind not in BACKBONE_KINDS:
        raise UsageError(f"backbone kind must be one of {BACKBONE_KINDS}, got {kind!r}")
    if input_dim < 1 or output_dim < 1:
        raise UsageError("backbone dimensions must be positive")
    if kind == "identity":
        if input_dim != output_dim:
            raise UsageError("identity backbone requires input_dim == output_dim")
        return Backbone(kind, input_dim, output_dim, seed, None)
    # small-gain projection: keeps tanh near its linear range for inputs of
    # norm up to ~10, so the squashing bounds features without collapsing
    # the angular geometry the hyperspheres depend on
    rng = seeded_rng(seed, _BACKBONE_STREAM)
    weights = rng.normal(0.0, 0.2 / np.sqrt(input_dim), size=(input_dim, output_dim))
    return Backbone(kind, input_dim, output_dim, seed, weights)


def extract(backbone: Backbone, x) -> np.ndarray:
    """Embed one raw sample: project (or pass through), tanh, L2 normalize."""
    return extract_batch(backbone, np.asarray(x, dtype=float)[None, :])[0]


def extract_batch(backbone: Backbone, xs) -> np.ndarray:
    """Vectorized :func:`extract` over the rows of ``xs``."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != backbone.input_dim:
        raise UsageError(
            f"expected samples of dimension {backbone.input_dim}, got shape {xs.shape}"
        )
    z = xs if backbone.kind == "identity" else xs @ backbone.weights
    z = np.tanh(z)
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateInputError(f"sample {bad} embeds to the zero vector")
    return z / norms[:, None]


def query(backbone: Backbone, x) -> np.ndarray:
    """Key-space query for token selection; identical to :func:`extract`.

    Token keys live in the same embedding space as the features, so the
    frozen extractor doubles as the query function.
    """
    return extract(backbone, x)


def augmented_feature(h, token_values, expected_count: int | None = None) -> np.ndarray:
    """Concatenate an embedding with mean-pooled token values, in order.

    Each entry of ``token_values`` is a (token_length, dim) matrix; its rows
    are mean-pooled to one dim-vector before concatenation, giving an output
    of length dim * (1 + len(token_values)).
    """
    h = np.asarray(h, dtype=float)
    if expected_count is not None and len(token_values) != expected_count:
        raise UsageError(
            f"expected {expected_count} tokens, got {len(token_values)}"
        )
    parts = [h]
    for v in token_values:
        pooled = np.asarray(v, dtype=float).mean(axis=0)
        if pooled.shape != h.shape:
            raise UsageError(
                f"token dimension {pooled.shape} does not match embedding {h.shape}"
            )
        parts.append(pooled)
    return np.concatenate(parts)

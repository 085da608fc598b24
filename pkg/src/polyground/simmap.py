"""Dense cosine-similarity maps and spatial resampling.

A similarity map scores every patch of a visual feature map against one
text embedding. Maps can be bilinearly upsampled (half-pixel-center
convention, fixed here so results are bit-reproducible across
implementations) when metrics are wanted at a higher comparison
resolution; binary masks use nearest-neighbor replication, which leaves
IoU between mask pairs exactly unchanged for integer scale factors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .corpusio import FeatureMap, TextEmbedding

logger = logging.getLogger(__name__)

CLAMP_SLACK = 1e-6


@dataclass(frozen=True)
class SimilarityMap:
    """H x W grid of cosine similarities in [-1, 1] for one (image, language, concept)."""

    image_id: str
    language: str
    concept: str
    grid: np.ndarray = field(repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 2:
            raise ValueError(f"similarity grid must be rank 2, got shape {grid.shape}")
        if not np.all(np.isfinite(grid)):
            raise ValueError("similarity grid has non-finite entries")
        if grid.min() < -1.0 - CLAMP_SLACK or grid.max() > 1.0 + CLAMP_SLACK:
            raise ValueError(
                f"similarity values outside [-1, 1] beyond slack: "
                f"range [{grid.min()}, {grid.max()}]"
            )
        object.__setattr__(self, "grid", np.clip(grid, -1.0, 1.0))

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape


def cosine_similarity_map(features: FeatureMap, text: TextEmbedding) -> SimilarityMap:
    """Pointwise cosine similarity between every patch vector and the text vector.

    Patches with zero norm (dead patches) get similarity 0 rather than
    poisoning the map; their count is logged as a warning.
    """
    if features.embed_dim != text.vector.shape[0]:
        raise ValueError(
            f"embedding dim mismatch: features d={features.embed_dim}, "
            f"text d={text.vector.shape[0]}"
        )
    tvec = text.vector
    tnorm = np.linalg.norm(tvec)
    if not tnorm > 0:
        raise ValueError("text vector has zero norm")

    data = features.data
    dots = data @ tvec
    pnorms = np.linalg.norm(data, axis=-1)
    dead = pnorms == 0
    n_dead = int(np.count_nonzero(dead))
    if n_dead:
        logger.warning(
            "%d zero-norm patch vector(s) in image %r mapped to similarity 0",
            n_dead,
            features.image_id,
        )
    denom = np.where(dead, 1.0, pnorms * tnorm)
    grid = np.where(dead, 0.0, dots / denom)
    return SimilarityMap(
        image_id=features.image_id,
        language=text.language,
        concept=text.concept,
        grid=grid,
    )


def bilinear_upsample(grid, target_h: int, target_w: int) -> np.ndarray:
    """Resample a 2D grid to (target_h, target_w) with half-pixel centers.

    Output cell (i, j) samples the input at
    ``((i + 0.5) * H / target_h - 0.5, (j + 0.5) * W / target_w - 0.5)``
    with sample coordinates clamped to the input extent, so every output
    value is a convex combination of the four surrounding input values.
    """
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected 2D grid, got shape {arr.shape}")
    h, w = arr.shape
    if h < 1 or w < 1 or target_h < 1 or target_w < 1:
        raise ValueError("grid and target dims must be >= 1")

    ys = (np.arange(target_h) + 0.5) * (h / target_h) - 0.5
    xs = (np.arange(target_w) + 0.5) * (w / target_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)

    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]

    top = arr[np.ix_(y0, x0)] * (1 - fx) + arr[np.ix_(y0, x1)] * fx
    bot = arr[np.ix_(y1, x0)] * (1 - fx) + arr[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def nearest_upsample_mask(mask, target_h: int, target_w: int) -> np.ndarray:
    """Replicate each mask cell into a block; requires integer scale factors."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"expected 2D mask, got shape {arr.shape}")
    h, w = arr.shape
    if target_h % h != 0 or target_w % w != 0:
        raise ValueError(
            f"target dims {target_h}x{target_w} must be integer multiples of {h}x{w}"
        )
    return np.repeat(np.repeat(arr, target_h // h, axis=0), target_w // w, axis=1)

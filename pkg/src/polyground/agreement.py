"""Cluster-mask extraction and the four cross-language agreement metrics.

Agreement between two similarity maps of the same (image, concept) is
scored with:

* cluster-mask IoU: overlap of region-grown high-similarity supports;
* top-percentile IoU: overlap of each map's own top-p% cells;
* Spearman rank correlation over all spatial locations;
* peak ratio: max of the probe map over max of the reference map, which
  separates weak activation (ratio << 1) from activation in the wrong
  place (ratio ~ 1 with low IoU).

The region-growing procedure is fixed exactly (see
:func:`extract_cluster_mask`) so two independent implementations produce
bitwise-identical masks.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, TransformerMixin

from .simmap import SimilarityMap, bilinear_upsample
from .validation import check_grid, check_mask, check_same_shape

DEFAULT_PERCENTILES = (90, 95, 99)
REF_PEAK_EPS = 1e-6

FLAG_BOTH_MASKS_EMPTY = "both_masks_empty"
FLAG_REF_PEAK_NONPOSITIVE = "ref_peak_nonpositive"
FLAG_CONSTANT_MAP = "constant_map"

# 8-neighborhood for seed detection, 4-neighborhood for growth.
_NEIGHBORS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
_NEIGHBORS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class ClusterParams:
    """Region-growing parameters.

    ``rel_threshold`` is relative to each cluster's own seed value by
    default (``scope="seed"``); ``scope="global"`` thresholds against the
    map's global maximum instead, for sensitivity analysis.
    """

    rel_threshold: float = 0.8
    min_size: int = 3
    scope: str = "seed"

    def __post_init__(self):
        if not 0.0 < self.rel_threshold <= 1.0:
            raise ValueError(f"rel_threshold must be in (0, 1], got {self.rel_threshold}")
        if self.min_size < 1:
            raise ValueError(f"min_size must be >= 1, got {self.min_size}")
        if self.scope not in ("seed", "global"):
            raise ValueError(f"scope must be 'seed' or 'global', got {self.scope!r}")


@dataclass(frozen=True)
class ClusterMask:
    """Binary spatial support: the union of accepted clusters."""

    grid: np.ndarray = field(repr=False)
    cluster_count: int = 0
    params: ClusterParams = ClusterParams()

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=bool))

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.grid))


def _local_maxima(grid: np.ndarray) -> np.ndarray:
    """Cells whose value is >= all existing 8-neighbors (non-strict, so
    plateaus produce seeds)."""
    h, w = grid.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = grid
    is_max = np.ones((h, w), dtype=bool)
    for dr, dc in _NEIGHBORS_8:
        is_max &= grid >= padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
    return is_max


def extract_cluster_mask(sim_map, params: ClusterParams | None = None) -> ClusterMask:
    """Region-grow high-similarity clusters into a binary mask.

    Procedure, fully determined:

    1. A cell is a local maximum if its value is >= all existing
       8-neighbors.
    2. Local maxima are processed in descending value order, ties broken
       by row-major index. Only positive seeds spawn growth: a
       nonpositive seed cannot satisfy its own relative threshold, and a
       flat zero background must not claim the grid.
    3. From each still-unclaimed seed, breadth-first growth over
       4-connected unclaimed cells whose value is >= rel_threshold times
       the seed value (or the global maximum under ``scope="global"``).
       Cells are claimed by the first cluster that reaches them, and stay
       claimed even if that cluster is later discarded.
    4. Clusters smaller than ``min_size`` are discarded.
    5. The mask is the union of surviving clusters.
    """
    params = params or ClusterParams()
    grid = check_grid(sim_map, "similarity map")
    h, w = grid.shape

    maxima = _local_maxima(grid)
    flat = grid.ravel()
    seed_idx = np.flatnonzero(maxima.ravel() & (flat > 0))
    # Primary key: descending value; secondary: ascending row-major index.
    seed_idx = seed_idx[np.lexsort((seed_idx, -flat[seed_idx]))]

    global_max = flat.max() if seed_idx.size else 0.0
    claimed = np.full((h, w), -1, dtype=np.int32)
    mask = np.zeros((h, w), dtype=bool)
    n_clusters = 0

    for cluster_id, idx in enumerate(seed_idx):
        r0, c0 = divmod(int(idx), w)
        if claimed[r0, c0] >= 0:
            continue
        ref = global_max if params.scope == "global" else grid[r0, c0]
        threshold = params.rel_threshold * ref
        if grid[r0, c0] < threshold:
            continue
        cells = [(r0, c0)]
        claimed[r0, c0] = cluster_id
        queue = deque(cells)
        while queue:
            r, c = queue.popleft()
            for dr, dc in _NEIGHBORS_4:
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and claimed[rr, cc] < 0 and grid[rr, cc] >= threshold:
                    claimed[rr, cc] = cluster_id
                    cells.append((rr, cc))
                    queue.append((rr, cc))
        if len(cells) >= params.min_size:
            rows, cols = zip(*cells)
            mask[rows, cols] = True
            n_clusters += 1

    return ClusterMask(grid=mask, cluster_count=n_clusters, params=params)


class ClusterMaskExtractor(BaseEstimator, TransformerMixin):
    """Estimator-style wrapper around :func:`extract_cluster_mask`.

    ``transform`` accepts a single H x W similarity grid or a stack of
    shape (n, H, W) and returns boolean mask(s) of the same shape, so the
    extractor drops into scikit-learn style pipelines and parameter
    searches.
    """

    def __init__(self, rel_threshold: float = 0.8, min_size: int = 3, scope: str = "seed"):
        self.rel_threshold = rel_threshold
        self.min_size = min_size
        self.scope = scope

    def _params(self) -> ClusterParams:
        return ClusterParams(
            rel_threshold=self.rel_threshold, min_size=self.min_size, scope=self.scope
        )

    def fit(self, X=None, y=None):
        self._params()  # validate
        return self

    def transform(self, X):
        params = self._params()
        arr = np.asarray(getattr(X, "grid", X), dtype=np.float64)
        if arr.ndim == 2:
            return extract_cluster_mask(arr, params).grid
        if arr.ndim == 3:
            return np.stack([extract_cluster_mask(m, params).grid for m in arr])
        raise ValueError(f"expected a 2D grid or a 3D stack, got shape {arr.shape}")


def mask_iou(a, b) -> float | None:
    """Intersection-over-union of two binary masks.

    Returns None when both masks are empty: either constant convention
    would bias language aggregates, so the undefined case is excluded
    from aggregation and counted via :data:`FLAG_BOTH_MASKS_EMPTY`.
    """
    ga = check_mask(a, "mask a")
    gb = check_mask(b, "mask b")
    check_same_shape(ga, gb, "masks")
    union = int(np.count_nonzero(ga | gb))
    if union == 0:
        return None
    inter = int(np.count_nonzero(ga & gb))
    return inter / union


def top_percentile_mask(sim_map, p) -> np.ndarray:
    """Threshold a map at its own p-th percentile (nearest-rank, ties
    kept inclusively, at least one cell)."""
    if not 0 < p < 100:
        raise ValueError(f"percentile must be in (0, 100), got {p}")
    grid = check_grid(sim_map, "similarity map")
    n = grid.size
    # n * (100 - p) / 100 evaluates exactly for integral p; the epsilon
    # guards the floor against float round-off for fractional p.
    k = max(1, int(np.floor(n * (100.0 - float(p)) / 100.0 + 1e-9)))
    threshold = np.partition(grid.ravel(), n - k)[n - k]
    return grid >= threshold


def top_percentile_iou(map_a, map_b, p) -> float:
    """IoU of the two maps' own top-percentile masks (never both empty)."""
    ga = check_grid(map_a, "map a")
    gb = check_grid(map_b, "map b")
    check_same_shape(ga, gb, "maps")
    iou = mask_iou(top_percentile_mask(ga, p), top_percentile_mask(gb, p))
    assert iou is not None  # k >= 1 guarantees nonempty masks
    return iou


def _rank_correlation(ra: np.ndarray, rb: np.ndarray) -> float:
    """Pearson correlation of two rank vectors, kept exact on the small
    integer sums typical of ranks (corrcoef's separate std path rounds)."""
    da = ra - ra.mean()
    db = rb - rb.mean()
    rho = float(np.dot(da, db) / np.sqrt(np.dot(da, da) * np.dot(db, db)))
    return float(np.clip(rho, -1.0, 1.0))


def spearman_rho(map_a, map_b) -> float | None:
    """Spearman rank correlation over flattened maps (average ranks on
    ties); None when either map is constant."""
    ga = check_grid(map_a, "map a")
    gb = check_grid(map_b, "map b")
    check_same_shape(ga, gb, "maps")
    if ga.size < 2:
        raise ValueError("Spearman requires at least 2 cells")
    a = ga.ravel()
    b = gb.ravel()
    if np.all(a == a[0]) or np.all(b == b[0]):
        return None
    return _rank_correlation(
        rankdata(a, method="average"), rankdata(b, method="average")
    )


def peak_ratio(map_l, map_ref) -> float | None:
    """max(probe) / max(reference); None when the reference peak is not
    meaningfully positive."""
    gl = check_grid(map_l, "probe map")
    gr = check_grid(map_ref, "reference map")
    check_same_shape(gl, gr, "maps")
    ref_peak = gr.max()
    if ref_peak <= REF_PEAK_EPS:
        return None
    return float(gl.max() / ref_peak)


@dataclass(frozen=True)
class MetricRecord:
    """Per (image, concept, language) agreement metrics against the reference.

    Undefined values are None and always carry an explanatory flag.
    """

    image_id: str
    concept: str
    language: str
    iou_cluster: float | None
    iou_top: dict[int, float]
    spearman: float | None
    peak_ratio: float | None
    flags: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "flags", frozenset(self.flags))
        required = {
            FLAG_BOTH_MASKS_EMPTY: self.iou_cluster,
            FLAG_CONSTANT_MAP: self.spearman,
            FLAG_REF_PEAK_NONPOSITIVE: self.peak_ratio,
        }
        for flag, value in required.items():
            if value is None and flag not in self.flags:
                raise ValueError(f"undefined metric requires flag {flag!r}")

    def value(self, metric: str) -> float | None:
        if metric.startswith("iou_p"):
            return self.iou_top.get(int(metric[len("iou_p") :]))
        return getattr(self, metric)


class PairScorer:
    """Scores probe maps against one fixed reference map.

    Precomputes the reference-side cluster mask, percentile masks and
    ranks once, since a single reference is typically compared against
    every probe language of the same (image, concept).

    ``resolution="patch"`` (default) computes everything on the native
    grid. ``resolution="upsampled"`` bilinearly upsamples both maps to
    ``comparison_size`` squared for the Spearman and top-percentile
    metrics; cluster masks are always extracted at patch resolution
    (mask IoU is invariant under identical nearest-neighbor upsampling),
    and the peak ratio always uses raw patch maxima, which interpolation
    would attenuate.
    """

    def __init__(
        self,
        reference: SimilarityMap,
        params: ClusterParams | None = None,
        percentiles: tuple[int, ...] = DEFAULT_PERCENTILES,
        resolution: str = "patch",
        comparison_size: int = 224,
    ):
        if resolution not in ("patch", "upsampled"):
            raise ValueError(f"resolution must be 'patch' or 'upsampled', got {resolution!r}")
        self.reference = reference
        self.params = params or ClusterParams()
        self.percentiles = tuple(int(p) for p in percentiles)
        self.resolution = resolution
        self.comparison_size = comparison_size

        self._ref_mask = extract_cluster_mask(reference, self.params).grid
        grid_r = reference.grid
        if resolution == "upsampled":
            grid_r = bilinear_upsample(grid_r, comparison_size, comparison_size)
        self._ref_grid = grid_r
        self._ref_peak = float(reference.grid.max())
        self._ref_constant = bool(np.all(grid_r == grid_r.ravel()[0]))
        self._ref_pct_masks = {p: top_percentile_mask(grid_r, p) for p in self.percentiles}
        self._ref_ranks = None if self._ref_constant else rankdata(grid_r.ravel(), method="average")

    def score(self, probe: SimilarityMap) -> MetricRecord:
        reference = self.reference
        if probe.image_id != reference.image_id or probe.concept != reference.concept:
            raise ValueError(
                f"maps must describe the same (image, concept): "
                f"({probe.image_id}, {probe.concept}) vs "
                f"({reference.image_id}, {reference.concept})"
            )
        if probe.grid.shape != reference.grid.shape:
            raise ValueError(
                f"grid shape mismatch: {probe.grid.shape} vs {reference.grid.shape}"
            )
        flags = set()

        probe_mask = extract_cluster_mask(probe, self.params).grid
        iou_cluster = mask_iou(probe_mask, self._ref_mask)
        if iou_cluster is None:
            flags.add(FLAG_BOTH_MASKS_EMPTY)

        grid_p = probe.grid
        if self.resolution == "upsampled":
            grid_p = bilinear_upsample(grid_p, self.comparison_size, self.comparison_size)
        probe_constant = bool(np.all(grid_p == grid_p.ravel()[0]))
        if probe_constant or self._ref_constant:
            flags.add(FLAG_CONSTANT_MAP)

        iou_top = {}
        for p in self.percentiles:
            iou = mask_iou(top_percentile_mask(grid_p, p), self._ref_pct_masks[p])
            assert iou is not None  # percentile masks are never empty
            iou_top[p] = iou

        if probe_constant or self._ref_constant:
            rho = None
        else:
            ranks_p = rankdata(grid_p.ravel(), method="average")
            rho = _rank_correlation(ranks_p, self._ref_ranks)

        if self._ref_peak <= REF_PEAK_EPS:
            eta = None
            flags.add(FLAG_REF_PEAK_NONPOSITIVE)
        else:
            eta = float(probe.grid.max() / self._ref_peak)

        return MetricRecord(
            image_id=probe.image_id,
            concept=probe.concept,
            language=probe.language,
            iou_cluster=iou_cluster,
            iou_top=iou_top,
            spearman=rho,
            peak_ratio=eta,
            flags=frozenset(flags),
        )


def score_maps(
    probe: SimilarityMap,
    reference: SimilarityMap,
    params: ClusterParams | None = None,
    percentiles: tuple[int, ...] = DEFAULT_PERCENTILES,
    resolution: str = "patch",
    comparison_size: int = 224,
) -> MetricRecord:
    """Score one probe map against the reference map of the same (image, concept)."""
    scorer = PairScorer(reference, params, percentiles, resolution, comparison_size)
    return scorer.score(probe)


def score_pair(
    features,
    text_probe,
    text_reference,
    params: ClusterParams | None = None,
    **kwargs,
) -> MetricRecord:
    """Compute both similarity maps from shared visual features, then score them."""
    from .simmap import cosine_similarity_map

    probe = cosine_similarity_map(features, text_probe)
    reference = cosine_similarity_map(features, text_reference)
    return score_maps(probe, reference, params, **kwargs)

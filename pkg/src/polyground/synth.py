"""Synthetic similarity maps with known ground truth.

Gaussian-blob generators construct the two failure regimes that the peak
ratio separates, with exact expectations:

* :func:`misalignment_pair` displaces the probe blob (peak preserved,
  spatial support moved: peak ratio ~ 1, cluster IoU low);
* :func:`collapse_pair` scales the probe amplitude (peak ratio equals
  the ratio exactly when background and noise are zero).

:func:`synth_corpus` plants a controlled high-resource vs low-resource
agreement gap and pushes every generated map through the real metric
pipeline, which gives the statistical protocol a corpus whose expected
outcome is known. The displacement needed for a requested gap comes from
an empirical offset-to-IoU calibration sweep; the sweep for the default
geometry ships as a frozen fixture and is regenerated by
:func:`sweep_offset_iou`.

All draws come from a named, versioned generator (PCG64 stream, Gaussian
noise via the Box-Muller transform of uniform draws) so runs are
bit-reproducible from the seed alone.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .agreement import (
    DEFAULT_PERCENTILES,
    ClusterParams,
    MetricRecord,
    PairScorer,
    extract_cluster_mask,
    mask_iou,
)
from .corpusio import BackboneInfo, LanguageEntry, Manifest
from .simmap import SimilarityMap

logger = logging.getLogger(__name__)

GENERATOR_SPEC = "pcg64+box-muller/v1"

CALIBRATION_RESOURCE = "offset_iou_calibration.json"

# Default corpus languages: reference + 9 high-resource + 3 low-resource.
DEFAULT_LANGUAGES = (
    LanguageEntry("en", "reference"),
    LanguageEntry("ca", "high"),
    LanguageEntry("de", "high"),
    LanguageEntry("es", "high"),
    LanguageEntry("fr", "high"),
    LanguageEntry("it", "high"),
    LanguageEntry("pt", "high"),
    LanguageEntry("ru", "high"),
    LanguageEntry("zh-CN", "high"),
    LanguageEntry("zh-TW", "high"),
    LanguageEntry("ar", "low"),
    LanguageEntry("eu", "low"),
    LanguageEntry("lb", "low"),
)

DEFAULT_CONCEPTS = (
    "car",
    "truck",
    "bus",
    "person",
    "pedestrian",
    "traffic_light",
    "traffic_sign",
    "bicycle",
    "motorcycle",
    "road",
    "building",
)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic Gaussian-blob similarity map."""

    grid_h: int = 16
    grid_w: int = 16
    blob_center: tuple[float, float] = (7.5, 7.5)
    blob_sigma: float = 1.5
    amplitude: float = 0.9
    background: float = 0.0
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.grid_h < 1 or self.grid_w < 1:
            raise ValueError("grid dims must be >= 1")
        if not 0.0 <= self.amplitude <= 1.0:
            raise ValueError(f"amplitude must be in [0, 1], got {self.amplitude}")
        if self.amplitude + self.background > 1.0:
            raise ValueError(
                f"amplitude + background must be <= 1, got {self.amplitude + self.background}"
            )
        if self.blob_sigma <= 0:
            raise ValueError("blob_sigma must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        r, c = self.blob_center
        if not (0 <= r <= self.grid_h - 1 and 0 <= c <= self.grid_w - 1):
            raise ValueError(f"blob center {self.blob_center} outside grid")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def gaussian_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """Standard normal draws via Box-Muller over the PCG64 uniform stream.

    Fixed as a plain transform of uniforms (rather than the library's
    ziggurat sampler) so other implementations of the generator spec can
    reproduce the stream bit-for-bit.
    """
    pairs = (n + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1]: keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n]


def _blob(h, w, center, sigma, amplitude, background) -> np.ndarray:
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    dist_sq = (rows - center[0]) ** 2 + (cols - center[1]) ** 2
    return background + amplitude * np.exp(-dist_sq / (2.0 * sigma**2))


def _noise_field(rng, h, w, noise_sigma) -> np.ndarray:
    if noise_sigma == 0:
        return np.zeros((h, w))
    return noise_sigma * gaussian_noise(rng, h * w).reshape(h, w)


def gaussian_map(
    spec: SynthSpec,
    image_id: str = "synthetic",
    language: str = "",
    concept: str = "",
) -> SimilarityMap:
    """One Gaussian-blob map: background + blob + seeded noise, clamped to [-1, 1]."""
    rng = _rng(spec.seed)
    grid = _blob(
        spec.grid_h, spec.grid_w, spec.blob_center, spec.blob_sigma, spec.amplitude, spec.background
    )
    grid = grid + _noise_field(rng, spec.grid_h, spec.grid_w, spec.noise_sigma)
    return SimilarityMap(
        image_id=image_id, language=language, concept=concept, grid=np.clip(grid, -1.0, 1.0)
    )


def _displaced(spec: SynthSpec, offset) -> tuple[float, float]:
    if np.isscalar(offset):
        offset = (0.0, float(offset))
    r = spec.blob_center[0] + offset[0]
    c = spec.blob_center[1] + offset[1]
    if not (0 <= r <= spec.grid_h - 1 and 0 <= c <= spec.grid_w - 1):
        raise ValueError(f"displaced center ({r}, {c}) outside grid")
    return (r, c)


def misalignment_pair(spec: SynthSpec, offset) -> tuple[SimilarityMap, SimilarityMap]:
    """(reference, probe) with the probe blob displaced by ``offset`` cells.

    ``offset`` is a scalar (displacement along the column axis) or a
    (rows, cols) pair. The two maps share one noise field, so with zero
    offset they are identical: the pair isolates pure spatial
    misalignment at preserved peak activation.
    """
    probe_center = _displaced(spec, offset)
    rng = _rng(spec.seed)
    noise = _noise_field(rng, spec.grid_h, spec.grid_w, spec.noise_sigma)
    ref_grid = (
        _blob(spec.grid_h, spec.grid_w, spec.blob_center, spec.blob_sigma, spec.amplitude, spec.background)
        + noise
    )
    probe_grid = (
        _blob(spec.grid_h, spec.grid_w, probe_center, spec.blob_sigma, spec.amplitude, spec.background)
        + noise
    )
    ref = SimilarityMap("synthetic", "ref", "synthetic", np.clip(ref_grid, -1.0, 1.0))
    probe = SimilarityMap("synthetic", "probe", "synthetic", np.clip(probe_grid, -1.0, 1.0))
    return ref, probe


def collapse_pair(spec: SynthSpec, amp_ratio: float) -> tuple[SimilarityMap, SimilarityMap]:
    """(reference, probe) with the probe amplitude scaled by ``amp_ratio``.

    With zero background and noise the probe peak is exactly
    ``amp_ratio`` times the reference peak, whatever the blob center.
    """
    if not 0.0 < amp_ratio < 1.0:
        raise ValueError(f"amp_ratio must be in (0, 1), got {amp_ratio}")
    rng = _rng(spec.seed)
    noise = _noise_field(rng, spec.grid_h, spec.grid_w, spec.noise_sigma)
    ref_grid = (
        _blob(spec.grid_h, spec.grid_w, spec.blob_center, spec.blob_sigma, spec.amplitude, spec.background)
        + noise
    )
    probe_grid = (
        _blob(
            spec.grid_h,
            spec.grid_w,
            spec.blob_center,
            spec.blob_sigma,
            spec.amplitude * amp_ratio,
            spec.background,
        )
        + noise
    )
    ref = SimilarityMap("synthetic", "ref", "synthetic", np.clip(ref_grid, -1.0, 1.0))
    probe = SimilarityMap("synthetic", "probe", "synthetic", np.clip(probe_grid, -1.0, 1.0))
    return ref, probe


def build_synth_manifest(
    n_images: int,
    concepts=None,
    languages=None,
    grid_h: int = 20,
    grid_w: int = 20,
    backbone: str = "synthetic",
    embed_dim: int | None = None,
) -> Manifest:
    if isinstance(concepts, int):
        concepts = tuple(DEFAULT_CONCEPTS[:concepts]) if concepts <= len(DEFAULT_CONCEPTS) else tuple(
            f"concept{i:03d}" for i in range(concepts)
        )
    elif concepts is None:
        concepts = DEFAULT_CONCEPTS
    languages = tuple(languages) if languages is not None else DEFAULT_LANGUAGES
    reference = next(l.code for l in languages if l.resource_class == "reference")
    if embed_dim is None:
        # one channel per (language, concept) plus the norm-filler channel
        embed_dim = len(languages) * len(concepts) + 1
    return Manifest(
        images=tuple(f"img{i:05d}" for i in range(n_images)),
        concepts=tuple(concepts),
        languages=languages,
        reference_language=reference,
        backbone=BackboneInfo(name=backbone, visual_params_m=0.0),
        grid_h=grid_h,
        grid_w=grid_w,
        embed_dim=embed_dim,
    )


@dataclass(frozen=True)
class SynthCorpusConfig:
    """Geometry and displacement plan for a planted-gap corpus.

    The negative default background keeps off-blob cells nonpositive, so
    cluster masks grow from the planted blob only and the offset-to-IoU
    curve spans its full range instead of being flattened by
    noise-seeded junk clusters.
    """

    planted_gap: float = 0.0
    noise_sigma: float = 0.05
    blob_sigma: float = 2.0
    amplitude: float = 0.9
    background: float = -0.1
    base_offset: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.planted_gap < 0:
            raise ValueError("planted_gap must be >= 0")


def _margin(config: SynthCorpusConfig, delta_lr: float) -> float:
    return max(2.0 * config.blob_sigma, delta_lr) + 0.5


def _check_feasible(manifest: Manifest, config: SynthCorpusConfig, delta_lr: float) -> float:
    margin = _margin(config, delta_lr)
    if manifest.grid_h - 1 <= 2 * margin or manifest.grid_w - 1 <= 2 * margin:
        raise ValueError(
            f"infeasible gap for grid size: displacement {delta_lr:.2f} needs margin "
            f"{margin:.2f} on a {manifest.grid_h}x{manifest.grid_w} grid"
        )
    return margin


def iter_synth_blocks(
    manifest: Manifest,
    config: SynthCorpusConfig,
    params: ClusterParams | None = None,
):
    """Yield (reference_map, [probe_map per non-reference language]) per block.

    Draw order is fixed (block center, reference noise, then per language
    in manifest order: direction angle, probe noise) so corpora are
    bit-reproducible from the seed.
    """
    params = params or ClusterParams()
    delta_hr = config.base_offset
    if config.planted_gap > 0:
        delta_lr = offset_for_gap(config, params, grid=(manifest.grid_h, manifest.grid_w))
    else:
        delta_lr = delta_hr
    margin = _check_feasible(manifest, config, delta_lr)

    low = set(manifest.languages_by_class("low"))
    rng = _rng(config.seed)
    h, w = manifest.grid_h, manifest.grid_w

    for image_id in manifest.images:
        for concept in manifest.concepts:
            center = (
                rng.uniform(margin, h - 1 - margin),
                rng.uniform(margin, w - 1 - margin),
            )
            ref_grid = _blob(h, w, center, config.blob_sigma, config.amplitude, config.background)
            ref_grid = ref_grid + _noise_field(rng, h, w, config.noise_sigma)
            reference = SimilarityMap(
                image_id, manifest.reference_language, concept, np.clip(ref_grid, -1, 1)
            )
            probes = []
            for lang in manifest.non_reference_languages():
                delta = delta_lr if lang in low else delta_hr
                angle = rng.uniform(0.0, 2.0 * np.pi)
                probe_center = (
                    center[0] + delta * np.cos(angle),
                    center[1] + delta * np.sin(angle),
                )
                grid = _blob(h, w, probe_center, config.blob_sigma, config.amplitude, config.background)
                grid = grid + _noise_field(rng, h, w, config.noise_sigma)
                probes.append(SimilarityMap(image_id, lang, concept, np.clip(grid, -1, 1)))
            yield reference, probes


def synth_corpus(
    n_images: int,
    concepts=None,
    languages=None,
    planted_gap: float = 0.0,
    noise_sigma: float = 0.05,
    seed: int = 0,
    grid_h: int = 20,
    grid_w: int = 20,
    params: ClusterParams | None = None,
    percentiles=DEFAULT_PERCENTILES,
    **config_kwargs,
) -> tuple[Manifest, list[MetricRecord]]:
    """Generate a planted-gap corpus and score it through the real pipeline.

    High-resource languages get the base displacement, low-resource
    languages the larger displacement the calibration maps to the
    requested expected cluster-IoU gap. Returns the manifest and one
    MetricRecord per (image, concept, non-reference language).
    """
    manifest = build_synth_manifest(n_images, concepts, languages, grid_h, grid_w)
    config = SynthCorpusConfig(
        planted_gap=planted_gap, noise_sigma=noise_sigma, seed=seed, **config_kwargs
    )
    params = params or ClusterParams()
    records = []
    for reference, probes in iter_synth_blocks(manifest, config, params):
        scorer = PairScorer(reference, params, percentiles)
        records.extend(scorer.score(probe) for probe in probes)
    return manifest, records


def _feature_tensor(channel_grids: dict[int, np.ndarray], n_channels: int, h: int, w: int) -> np.ndarray:
    """Pack per-(language, concept) target maps into one unit-norm feature
    tensor whose cosine against the matching basis text vector reproduces
    each map up to a fixed positive scale (all four metrics are invariant
    to that scale)."""
    scale = 1.0 / math.sqrt(n_channels + 1)
    tensor = np.zeros((h, w, n_channels + 1))
    for channel, grid in channel_grids.items():
        tensor[:, :, channel] = scale * grid
    tensor[:, :, -1] = np.sqrt(np.maximum(0.0, 1.0 - (tensor[:, :, :-1] ** 2).sum(axis=-1)))
    return tensor


def write_synth_corpus(
    root,
    manifest: Manifest,
    config: SynthCorpusConfig,
    params: ClusterParams | None = None,
    emit: str = "simmaps",
) -> None:
    """Write a synthetic corpus to disk in the standard corpus layout.

    ``emit="simmaps"`` writes similarity maps only. ``emit="features"``
    additionally writes a feature tensor per image and one basis text
    vector per (language, concept), constructed so that the cosine
    pipeline reproduces the generated maps up to a common positive scale.
    """
    from .corpusio import save_manifest, simmap_path, text_path, feature_path, write_tensor

    if emit not in ("simmaps", "features"):
        raise ValueError(f"emit must be 'simmaps' or 'features', got {emit!r}")
    root = Path(root)
    backbone = manifest.backbone.name
    lang_index = {l.code: i for i, l in enumerate(manifest.languages)}
    concept_index = {c: i for i, c in enumerate(manifest.concepts)}
    n_concepts = len(manifest.concepts)
    n_channels = len(manifest.languages) * n_concepts

    if emit == "features":
        for lang in lang_index:
            for concept in concept_index:
                vec = np.zeros(n_channels + 1, dtype=np.float32)
                vec[lang_index[lang] * n_concepts + concept_index[concept]] = 1.0
                write_tensor(text_path(root, backbone, lang, concept), vec)

    pending_image = None
    pending: dict[int, np.ndarray] = {}

    def flush():
        if pending_image is not None and emit == "features":
            tensor = _feature_tensor(pending, n_channels, manifest.grid_h, manifest.grid_w)
            write_tensor(feature_path(root, backbone, pending_image), tensor.astype(np.float32))

    for reference, probes in iter_synth_blocks(manifest, config, params):
        if reference.image_id != pending_image:
            flush()
            pending_image = reference.image_id
            pending = {}
        for sim in [reference] + probes:
            write_tensor(
                simmap_path(root, backbone, sim.language, sim.concept, sim.image_id),
                sim.grid.astype(np.float32),
            )
            if emit == "features":
                channel = lang_index[sim.language] * n_concepts + concept_index[sim.concept]
                pending[channel] = sim.grid
    flush()
    save_manifest(manifest, root / "manifest.json")


def sweep_offset_iou(
    offsets,
    config: SynthCorpusConfig,
    params: ClusterParams | None = None,
    n_trials: int = 400,
    grid_h: int = 20,
    grid_w: int = 20,
    seed: int = 20240801,
) -> dict:
    """Pilot sweep mapping displacement to expected cluster-mask IoU.

    Reproduces the corpus construction exactly (random center, random
    direction, independent noise on both maps) at each offset magnitude
    and averages defined IoU values. The shipped calibration fixture for
    the default geometry is a frozen output of this function.
    """
    params = params or ClusterParams()
    rng = _rng(seed)
    margin = max(2.0 * config.blob_sigma, max(offsets)) + 0.5
    if grid_h - 1 <= 2 * margin or grid_w - 1 <= 2 * margin:
        raise ValueError("grid too small for requested sweep offsets")

    mean_iou = []
    for offset in offsets:
        total, defined = 0.0, 0
        for _ in range(n_trials):
            center = (
                rng.uniform(margin, grid_h - 1 - margin),
                rng.uniform(margin, grid_w - 1 - margin),
            )
            ref = _blob(grid_h, grid_w, center, config.blob_sigma, config.amplitude, config.background)
            ref = ref + _noise_field(rng, grid_h, grid_w, config.noise_sigma)
            angle = rng.uniform(0.0, 2.0 * np.pi)
            probe_center = (
                center[0] + offset * np.cos(angle),
                center[1] + offset * np.sin(angle),
            )
            probe = _blob(
                grid_h, grid_w, probe_center, config.blob_sigma, config.amplitude, config.background
            )
            probe = probe + _noise_field(rng, grid_h, grid_w, config.noise_sigma)
            iou = mask_iou(
                extract_cluster_mask(np.clip(ref, -1, 1), params).grid,
                extract_cluster_mask(np.clip(probe, -1, 1), params).grid,
            )
            if iou is not None:
                total += iou
                defined += 1
        mean_iou.append(total / defined if defined else float("nan"))

    return {
        "generator": GENERATOR_SPEC,
        "grid": [grid_h, grid_w],
        "blob_sigma": config.blob_sigma,
        "amplitude": config.amplitude,
        "background": config.background,
        "noise_sigma": config.noise_sigma,
        "rel_threshold": params.rel_threshold,
        "min_size": params.min_size,
        "n_trials": n_trials,
        "seed": seed,
        "offsets": list(offsets),
        "mean_iou": mean_iou,
    }


def _load_calibration() -> dict:
    with resources.files("polyground.data").joinpath(CALIBRATION_RESOURCE).open() as fh:
        return json.load(fh)


def _calibration_matches(table: dict, config: SynthCorpusConfig, params: ClusterParams, grid) -> bool:
    return (
        table["grid"] == list(grid)
        and math.isclose(table["blob_sigma"], config.blob_sigma)
        and math.isclose(table["amplitude"], config.amplitude)
        and math.isclose(table["background"], config.background)
        and math.isclose(table["noise_sigma"], config.noise_sigma)
        and math.isclose(table["rel_threshold"], params.rel_threshold)
        and table["min_size"] == params.min_size
    )


@lru_cache(maxsize=64)
def offset_for_gap(
    config: SynthCorpusConfig,
    params: ClusterParams | None = None,
    grid: tuple[int, int] = (20, 20),
) -> float:
    """Displacement whose expected IoU sits ``planted_gap`` below the base
    offset's, by inverse interpolation of the calibration curve.

    Cached per (config, params, grid): a mismatched geometry triggers a
    fresh pilot sweep, which should run once per process, not per corpus.
    """
    params = params or ClusterParams()
    table = _load_calibration()
    if not _calibration_matches(table, config, params, grid):
        logger.info("calibration fixture does not match geometry; running pilot sweep")
        table = sweep_offset_iou(
            [i * 0.25 for i in range(17)], config, params, n_trials=400,
            grid_h=grid[0], grid_w=grid[1],
        )
    offsets = np.asarray(table["offsets"])
    # Enforce a non-increasing curve before inverting: Monte-Carlo noise can
    # break monotonicity between adjacent sweep points.
    ious = np.minimum.accumulate(np.asarray(table["mean_iou"]))

    base_iou = float(np.interp(config.base_offset, offsets, ious))
    target = base_iou - config.planted_gap
    if target < ious.min():
        raise ValueError(
            f"infeasible gap for grid size: target IoU {target:.3f} below the "
            f"calibration minimum {ious.min():.3f}"
        )
    return float(np.interp(target, ious[::-1], offsets[::-1]))

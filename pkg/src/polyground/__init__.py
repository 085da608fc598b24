"""Cross-language dense visual grounding agreement analysis.

Compare dense similarity maps produced for the same image under
different query languages: extract high-similarity cluster masks, score
agreement against a reference language with four metrics, run a
nonparametric statistical protocol over the results, and convert GPU
power traces into energy-per-query figures.
"""

from .agreement import (
    ClusterMask,
    ClusterMaskExtractor,
    ClusterParams,
    MetricRecord,
    PairScorer,
    extract_cluster_mask,
    mask_iou,
    peak_ratio,
    score_maps,
    score_pair,
    spearman_rho,
    top_percentile_iou,
    top_percentile_mask,
)
from .corpusio import (
    BackboneInfo,
    FeatureMap,
    LanguageEntry,
    Manifest,
    TextEmbedding,
    load_manifest,
    read_tensor,
    save_manifest,
    write_tensor,
)
from .energy import EnergyReport, PowerTrace, build_report, e_per_1k, integrate_energy, parse_power_csv
from .records import read_records_csv, write_records_csv
from .simmap import SimilarityMap, bilinear_upsample, cosine_similarity_map, nearest_upsample_mask
from .stats import (
    PairedSeries,
    ProtocolReport,
    TestResult,
    friedman,
    hr_lr_pairing,
    mann_whitney_u,
    run_protocol,
    wilcoxon_signed_rank,
)
from .synth import SynthSpec, collapse_pair, gaussian_map, misalignment_pair, synth_corpus

__version__ = "0.1.0"

"""Command-line pipeline over the corpus layout.

Subcommands map onto the pipeline stages::

    synth    generate a synthetic corpus with a planted HR/LR gap
    simmap   compute similarity maps from features + text embeddings
    cluster  extract cluster masks from similarity maps
    score    compute per-(image, concept, language) metric records
    stats    run the statistical protocol over a records CSV
    energy   convert a power trace CSV into an energy report
    report   aggregate records into summary/plot tables

A JSON config file (``--config``) can provide defaults for corpus root,
backbones, cluster parameters, percentiles and stats cutoffs; explicit
flags win over config values.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpusio, records as records_io, report as report_mod
from .agreement import DEFAULT_PERCENTILES, ClusterParams, PairScorer, extract_cluster_mask
from .energy import PowerTrace, build_report, parse_power_csv, save_report
from .simmap import SimilarityMap, cosine_similarity_map
from .stats import run_protocol
from .synth import SynthCorpusConfig, build_synth_manifest, write_synth_corpus

logger = logging.getLogger("polyground")


class CliError(Exception):
    """Fatal condition with a user-facing diagnostic."""


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _setting(args, config: dict, name: str, default):
    value = getattr(args, name.replace(".", "_"), None)
    if value is not None:
        return value
    node = config
    for part in name.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _cluster_params(args, config) -> ClusterParams:
    return ClusterParams(
        rel_threshold=float(_setting(args, config, "cluster.rel_threshold", 0.8)),
        min_size=int(_setting(args, config, "cluster.min_size", 3)),
        scope=_setting(args, config, "cluster.scope", "seed"),
    )


def _resolve_backbone(args, config, manifest) -> str:
    backbone = _setting(args, config, "backbone", None)
    if backbone is None:
        return manifest.backbone.name
    return backbone


def _corpus_manifest(corpus) -> corpusio.Manifest:
    manifest_path = Path(corpus) / "manifest.json"
    if not manifest_path.exists():
        raise CliError(f"no manifest at {manifest_path}")
    return corpusio.load_manifest(manifest_path)


def _load_simmap(corpus, backbone, language, concept, image_id) -> SimilarityMap:
    path = corpusio.simmap_path(corpus, backbone, language, concept, image_id)
    if not path.exists():
        raise CliError(f"missing similarity map {path}")
    return SimilarityMap(image_id, language, concept, corpusio.read_tensor(path))


def cmd_synth(args, config) -> int:
    # generator settings come from flags, falling back to the config's
    # "synth" section (JSON synth specs), then to the built-in defaults
    grid = _setting(args, config, "synth.grid", (20, 20))
    manifest = build_synth_manifest(
        n_images=int(_setting(args, config, "synth.images", 210)),
        concepts=_setting(args, config, "synth.concepts", 11),
        grid_h=int(grid[0]),
        grid_w=int(grid[1]),
        backbone=_setting(args, config, "backbone", None) or "synthetic",
    )
    spec_fields = {
        name: _setting(args, config, f"synth.{name}", None)
        for name in (
            "planted_gap",
            "noise_sigma",
            "blob_sigma",
            "amplitude",
            "background",
            "base_offset",
            "seed",
        )
    }
    synth_config = SynthCorpusConfig(
        **{name: value for name, value in spec_fields.items() if value is not None}
    )
    emit = _setting(args, config, "synth.emit", "simmaps")
    write_synth_corpus(args.out, manifest, synth_config, _cluster_params(args, config), emit=emit)
    logger.info(
        "wrote synthetic corpus: %d images x %d concepts x %d languages at %s",
        len(manifest.images),
        len(manifest.concepts),
        len(manifest.languages),
        args.out,
    )
    return 0


def cmd_simmap(args, config) -> int:
    corpus = _setting(args, config, "corpus", None)
    if corpus is None:
        raise CliError("simmap requires --corpus")
    manifest = _corpus_manifest(corpus)
    backbone = _resolve_backbone(args, config, manifest)
    n_written = 0
    for image_id in manifest.images:
        features = corpusio.load_feature_map(corpus, backbone, image_id)
        features.check_against(manifest)
        for entry in manifest.languages:
            for concept in manifest.concepts:
                text = corpusio.load_text_embedding(corpus, backbone, entry.code, concept)
                sim = cosine_similarity_map(features, text)
                corpusio.write_tensor(
                    corpusio.simmap_path(corpus, backbone, entry.code, concept, image_id),
                    sim.grid.astype(np.float32),
                )
                n_written += 1
    logger.info("wrote %d similarity maps", n_written)
    return 0


def cmd_cluster(args, config) -> int:
    corpus = _setting(args, config, "corpus", None)
    if corpus is None:
        raise CliError("cluster requires --corpus")
    manifest = _corpus_manifest(corpus)
    backbone = _resolve_backbone(args, config, manifest)
    params = _cluster_params(args, config)
    out_dir = Path(args.out)
    rows = []
    for entry in manifest.languages:
        for concept in manifest.concepts:
            for image_id in manifest.images:
                sim = _load_simmap(corpus, backbone, entry.code, concept, image_id)
                mask = extract_cluster_mask(sim, params)
                corpusio.write_tensor(
                    out_dir / "masks" / backbone / entry.code / concept / f"{image_id}.tns",
                    mask.grid.astype(np.float32),
                )
                rows.append([backbone, entry.code, concept, image_id, mask.cluster_count, mask.size])
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "clusters.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["backbone", "language", "concept", "image_id", "cluster_count", "mask_size"])
        writer.writerows(rows)
    logger.info("wrote %d cluster masks under %s", len(rows), out_dir)
    return 0


def _score_from_simmaps(corpus, manifest, backbone, params, percentiles, resolution):
    for image_id in manifest.images:
        for concept in manifest.concepts:
            reference = _load_simmap(
                corpus, backbone, manifest.reference_language, concept, image_id
            )
            scorer = PairScorer(reference, params, percentiles, resolution)
            for language in manifest.non_reference_languages():
                probe = _load_simmap(corpus, backbone, language, concept, image_id)
                yield scorer.score(probe)


def _score_from_features(corpus, manifest, backbone, params, percentiles, resolution):
    for image_id in manifest.images:
        features = corpusio.load_feature_map(corpus, backbone, image_id)
        features.check_against(manifest)
        for concept in manifest.concepts:
            text_ref = corpusio.load_text_embedding(
                corpus, backbone, manifest.reference_language, concept
            )
            reference = cosine_similarity_map(features, text_ref)
            scorer = PairScorer(reference, params, percentiles, resolution)
            for language in manifest.non_reference_languages():
                text = corpusio.load_text_embedding(corpus, backbone, language, concept)
                yield scorer.score(cosine_similarity_map(features, text))


def cmd_score(args, config) -> int:
    corpus = _setting(args, config, "corpus", None)
    if corpus is None:
        raise CliError("score requires --corpus")
    manifest = _corpus_manifest(corpus)
    backbone = _resolve_backbone(args, config, manifest)
    params = _cluster_params(args, config)
    percentiles = tuple(int(p) for p in _setting(args, config, "percentiles", DEFAULT_PERCENTILES))

    source = args.source
    if source == "auto":
        has_simmaps = (Path(corpus) / "simmaps" / backbone).is_dir()
        source = "simmaps" if has_simmaps else "features"
    scorer_iter = {
        "simmaps": _score_from_simmaps,
        "features": _score_from_features,
    }[source](corpus, manifest, backbone, params, percentiles, args.resolution)

    records = list(scorer_iter)
    records_io.write_records_csv(args.out, records, backbone, append=args.append)
    logger.info("scored %d records from %s -> %s", len(records), source, args.out)
    return 0


def cmd_stats(args, config) -> int:
    by_backbone = records_io.read_records_csv(args.records)
    if not by_backbone:
        raise CliError("no records")
    manifest = corpusio.load_manifest(args.manifest)
    metrics = (
        [args.metric]
        if args.metric not in (None, "all")
        else report_mod.metric_names(next(iter(by_backbone.values())))
    )
    payload = {}
    for backbone, records in sorted(by_backbone.items()):
        payload[backbone] = {}
        for metric in metrics:
            protocol = run_protocol(
                records,
                manifest,
                metric,
                wilcoxon_exact_max_n=int(
                    _setting(args, config, "stats.wilcoxon_exact_max_n", 20)
                ),
                mw_exact_max_nm=int(_setting(args, config, "stats.mw_exact_max_nm", 400)),
            )
            payload[backbone][metric] = protocol.to_dict()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    logger.info("wrote protocol report for %d backbone(s) -> %s", len(payload), out)
    return 0


def cmd_energy(args, config) -> int:
    trace = parse_power_csv(args.trace)
    if trace.gaps:
        logger.warning("trace has %d gap(s) exceeding 10x the nominal period", len(trace.gaps))
    if args.baseline_watts:
        trace = PowerTrace(
            times_s=trace.times_s,
            watts=np.maximum(trace.watts - args.baseline_watts, 0.0),
            gaps=trace.gaps,
        )
    energy_report = build_report(trace, args.queries)
    if args.out:
        save_report(energy_report, args.out)
    print(json.dumps(energy_report.to_dict(), indent=2))
    return 0


def cmd_report(args, config) -> int:
    by_backbone = records_io.read_records_csv(args.records)
    if not by_backbone or not any(by_backbone.values()):
        raise CliError("no records")
    manifest = corpusio.load_manifest(args.manifest)
    out_dir = Path(args.out)

    for backbone, records in sorted(by_backbone.items()):
        backbone_dir = out_dir / backbone
        summary = report_mod.summarize(records, manifest)
        report_mod.write_summary(summary, backbone_dir)
        report_mod.write_per_concept_csv(
            report_mod.per_concept_table(records), backbone_dir / "per_concept_iou.csv"
        )
        report_mod.write_scatter_csv(
            report_mod.mechanism_scatter(records), backbone_dir / "mechanism_scatter.csv"
        )

    if args.records_large:
        large = records_io.read_records_csv(args.records_large)
        base_records = next(iter(by_backbone.values()))
        large_records = next(iter(large.values())) if large else None
        if not large_records:
            raise CliError("no records in --records-large")
        shifts = report_mod.scale_shift(base_records, large_records)
        report_mod.write_scale_shift_csv(shifts, out_dir / "scale_shift.csv")

    logger.info("wrote report tables under %s", out_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyground",
        description="Cross-language dense grounding agreement pipeline",
    )
    parser.add_argument("--config", help="JSON config with pipeline defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic planted-gap corpus")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--images", type=int, dest="synth_images")
    p.add_argument("--concepts", type=int, dest="synth_concepts")
    p.add_argument("--planted-gap", type=float, dest="synth_planted_gap")
    p.add_argument("--noise", type=float, dest="synth_noise_sigma")
    p.add_argument("--seed", type=int, dest="synth_seed")
    p.add_argument("--grid", type=int, nargs=2, dest="synth_grid", metavar=("H", "W"))
    p.add_argument("--backbone")
    p.add_argument("--emit", choices=("simmaps", "features"), dest="synth_emit")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simmap", help="compute similarity maps from features + text")
    p.add_argument("--corpus")
    p.add_argument("--backbone")
    p.set_defaults(func=cmd_simmap)

    p = sub.add_parser("cluster", help="extract cluster masks from similarity maps")
    p.add_argument("--corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--backbone")
    p.add_argument("--rel-threshold", type=float, dest="cluster_rel_threshold")
    p.add_argument("--min-size", type=int, dest="cluster_min_size")
    p.add_argument("--scope", choices=("seed", "global"), dest="cluster_scope")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("score", help="compute metric records against the reference language")
    p.add_argument("--corpus")
    p.add_argument("--out", required=True, help="records CSV path")
    p.add_argument("--backbone")
    p.add_argument("--resolution", choices=("patch", "upsampled"), default="patch")
    p.add_argument("--from", dest="source", choices=("auto", "simmaps", "features"), default="auto")
    p.add_argument("--append", action="store_true", help="append to an existing records CSV")
    p.add_argument("--rel-threshold", type=float, dest="cluster_rel_threshold")
    p.add_argument("--min-size", type=int, dest="cluster_min_size")
    p.add_argument("--scope", choices=("seed", "global"), dest="cluster_scope")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("stats", help="run the statistical protocol over records")
    p.add_argument("--records", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metric", help="metric name, or 'all' (default)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("energy", help="convert a power trace to an energy report")
    p.add_argument("--trace", required=True)
    p.add_argument("--queries", type=int, required=True)
    p.add_argument("--out")
    p.add_argument(
        "--baseline-watts",
        type=float,
        default=0.0,
        help="subtract an idle baseline before integrating (default: off)",
    )
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("report", help="aggregate records into summary tables")
    p.add_argument("--records", required=True)
    p.add_argument("--records-large", help="second records CSV for the scale-shift table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

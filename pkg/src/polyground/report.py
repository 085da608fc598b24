"""Aggregation of metric records into summary tables and plot data.

Everything here is a deterministic fold over records: per-language
means/medians with defined/flagged bookkeeping, pooled high- vs
low-resource means and their gap, the per-language shift between two
backbones, a concept x language matrix, and the peak-ratio vs
cluster-IoU scatter that separates weak activation from misplaced
activation. Outputs are plain CSV/JSON for any plotting tool; means are
taken over defined values only, mirroring the exclusion convention of
the metric layer.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agreement import MetricRecord
from .corpusio import Manifest

METRIC_FLAG_MAP = {
    "iou_cluster": "both_masks_empty",
    "spearman": "constant_map",
    "peak_ratio": "ref_peak_nonpositive",
}


def metric_names(records: list[MetricRecord]) -> list[str]:
    percentiles = sorted(records[0].iou_top) if records else []
    return ["iou_cluster"] + [f"iou_p{p}" for p in percentiles] + ["spearman", "peak_ratio"]


@dataclass(frozen=True)
class LanguageSummary:
    language: str
    resource_class: str
    n_records: int
    mean: dict[str, float | None]
    median: dict[str, float | None]
    count_defined: dict[str, int]
    count_flagged: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "language": self.language,
            "resource_class": self.resource_class,
            "n_records": self.n_records,
            "mean": self.mean,
            "median": self.median,
            "count_defined": self.count_defined,
            "count_flagged": self.count_flagged,
        }


@dataclass(frozen=True)
class SummaryTable:
    metrics: tuple[str, ...]
    per_language: tuple[LanguageSummary, ...]
    group_mean: dict[str, dict[str, float | None]]  # resource class -> metric -> pooled mean
    hr_lr_gap: dict[str, float | None]

    def to_dict(self) -> dict:
        return {
            "metrics": list(self.metrics),
            "per_language": [s.to_dict() for s in self.per_language],
            "group_mean": self.group_mean,
            "hr_lr_gap": self.hr_lr_gap,
        }


def _mean_or_none(values: list[float]) -> float | None:
    # sort before summing so the result is bitwise independent of record order
    return float(np.mean(np.sort(values))) if values else None


def summarize(records: list[MetricRecord], manifest: Manifest) -> SummaryTable:
    """Per-language means/medians plus pooled HR/LR means and their gap."""
    if not records:
        raise ValueError("no records to summarize")
    metrics = tuple(metric_names(records))
    classes = {l.code: l.resource_class for l in manifest.languages}

    by_language: dict[str, list[MetricRecord]] = {}
    for rec in records:
        if rec.language not in classes:
            raise ValueError(f"record language {rec.language!r} not in manifest")
        by_language.setdefault(rec.language, []).append(rec)

    summaries = []
    for language in sorted(by_language):
        recs = by_language[language]
        mean, median, defined = {}, {}, {}
        for metric in metrics:
            values = [v for rec in recs if (v := rec.value(metric)) is not None]
            defined[metric] = len(values)
            mean[metric] = _mean_or_none(values)
            median[metric] = float(np.median(values)) if values else None
        flagged: dict[str, int] = {}
        for rec in recs:
            for flag in rec.flags:
                flagged[flag] = flagged.get(flag, 0) + 1
        summaries.append(
            LanguageSummary(
                language=language,
                resource_class=classes[language],
                n_records=len(recs),
                mean=mean,
                median=median,
                count_defined=defined,
                count_flagged=flagged,
            )
        )

    group_mean: dict[str, dict[str, float | None]] = {}
    for group in ("high", "low"):
        langs = set(manifest.languages_by_class(group))
        pooled: dict[str, float | None] = {}
        for metric in metrics:
            values = [
                v
                for rec in records
                if rec.language in langs and (v := rec.value(metric)) is not None
            ]
            pooled[metric] = _mean_or_none(values)
        group_mean[group] = pooled

    hr_lr_gap = {}
    for metric in metrics:
        hi, lo = group_mean["high"][metric], group_mean["low"][metric]
        hr_lr_gap[metric] = None if hi is None or lo is None else hi - lo

    return SummaryTable(
        metrics=metrics,
        per_language=tuple(summaries),
        group_mean=group_mean,
        hr_lr_gap=hr_lr_gap,
    )


@dataclass(frozen=True)
class ScaleShift:
    language: str
    delta_iou: float


def scale_shift(
    records_base: list[MetricRecord], records_large: list[MetricRecord]
) -> list[ScaleShift]:
    """Per-language change in mean cluster-mask IoU between two backbones."""

    def language_means(records):
        values: dict[str, list[float]] = {}
        for rec in records:
            if rec.iou_cluster is not None:
                values.setdefault(rec.language, []).append(rec.iou_cluster)
        return {lang: float(np.mean(v)) for lang, v in values.items()}

    base = language_means(records_base)
    large = language_means(records_large)
    shared = sorted(set(base) & set(large))
    if not shared:
        raise ValueError("no overlapping languages between the two record sets")
    return [ScaleShift(language=lang, delta_iou=large[lang] - base[lang]) for lang in shared]


def per_concept_table(records: list[MetricRecord]) -> dict:
    """Mean cluster-mask IoU per (concept, language); missing cells stay
    missing rather than zero, and flag counts are preserved."""
    if not records:
        raise ValueError("no records to tabulate")
    cells: dict[tuple[str, str], dict] = {}
    for rec in records:
        key = (rec.concept, rec.language)
        cell = cells.setdefault(key, {"values": [], "n": 0, "flagged": 0})
        cell["n"] += 1
        if rec.iou_cluster is not None:
            cell["values"].append(rec.iou_cluster)
        if rec.flags:
            cell["flagged"] += 1

    concepts = sorted({c for c, _ in cells})
    languages = sorted({l for _, l in cells})
    table = {
        concept: {
            lang: (
                {
                    "mean_iou_cluster": _mean_or_none(cells[(concept, lang)]["values"]),
                    "n": cells[(concept, lang)]["n"],
                    "flagged": cells[(concept, lang)]["flagged"],
                }
                if (concept, lang) in cells
                else None
            )
            for lang in languages
        }
        for concept in concepts
    }
    return {"concepts": concepts, "languages": languages, "cells": table}


def mechanism_scatter(records: list[MetricRecord]) -> list[dict]:
    """Per-language (mean peak ratio, mean cluster IoU) pairs; flagged
    undefined values are excluded from their own metric only."""
    etas: dict[str, list[float]] = {}
    ious: dict[str, list[float]] = {}
    for rec in records:
        if rec.peak_ratio is not None:
            etas.setdefault(rec.language, []).append(rec.peak_ratio)
        if rec.iou_cluster is not None:
            ious.setdefault(rec.language, []).append(rec.iou_cluster)
    return [
        {
            "language": lang,
            "mean_peak_ratio": _mean_or_none(etas.get(lang, [])),
            "mean_iou_cluster": _mean_or_none(ious.get(lang, [])),
        }
        for lang in sorted(set(etas) | set(ious))
    ]


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _cell(value):
    return "" if value is None else repr(float(value))


def write_summary(summary: SummaryTable, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(), fh, indent=2)
        fh.write("\n")

    header = ["language", "resource_class", "n_records"]
    header += [f"mean_{m}" for m in summary.metrics]
    header += [f"defined_{m}" for m in summary.metrics]
    rows = []
    for lang in summary.per_language:
        rows.append(
            [lang.language, lang.resource_class, lang.n_records]
            + [_cell(lang.mean[m]) for m in summary.metrics]
            + [lang.count_defined[m] for m in summary.metrics]
        )
    _write_csv(out_dir / "language_summary.csv", header, rows)


def write_per_concept_csv(table: dict, path) -> None:
    header = ["concept"] + table["languages"]
    rows = []
    for concept in table["concepts"]:
        row = [concept]
        for lang in table["languages"]:
            cell = table["cells"][concept][lang]
            row.append("" if cell is None else _cell(cell["mean_iou_cluster"]))
        rows.append(row)
    _write_csv(path, header, rows)


def write_scatter_csv(points: list[dict], path) -> None:
    rows = [
        [p["language"], _cell(p["mean_peak_ratio"]), _cell(p["mean_iou_cluster"])]
        for p in points
    ]
    _write_csv(path, ["language", "mean_peak_ratio", "mean_iou_cluster"], rows)


def write_scale_shift_csv(shifts: list[ScaleShift], path) -> None:
    _write_csv(
        path,
        ["language", "delta_iou"],
        [[s.language, _cell(s.delta_iou)] for s in shifts],
    )

"""CSV serialization for metric records.

One row per (backbone, image, concept, language); undefined metric values
serialize as empty fields and their flags ride in the last column,
semicolon-separated, so nothing is silently imputed on re-ingestion.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .agreement import DEFAULT_PERCENTILES, MetricRecord

BASE_COLUMNS = ("backbone", "image_id", "concept", "language")
TAIL_COLUMNS = ("spearman", "peak_ratio", "flags")


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _parse(text: str) -> float | None:
    return None if text == "" else float(text)


def records_header(percentiles=DEFAULT_PERCENTILES) -> list[str]:
    return (
        list(BASE_COLUMNS)
        + ["iou_cluster"]
        + [f"iou_p{p}" for p in percentiles]
        + list(TAIL_COLUMNS)
    )


def write_records_csv(path, records: list[MetricRecord], backbone: str, append: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    percentiles = tuple(sorted(records[0].iou_top)) if records else DEFAULT_PERCENTILES
    exists = path.exists() and path.stat().st_size > 0
    mode = "a" if append and exists else "w"
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(records_header(percentiles))
        for rec in records:
            writer.writerow(
                [backbone, rec.image_id, rec.concept, rec.language, _fmt(rec.iou_cluster)]
                + [_fmt(rec.iou_top.get(p)) for p in percentiles]
                + [_fmt(rec.spearman), _fmt(rec.peak_ratio), ";".join(sorted(rec.flags))]
            )


def read_records_csv(path) -> dict[str, list[MetricRecord]]:
    """Read a records CSV back into per-backbone record lists."""
    by_backbone: dict[str, list[MetricRecord]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return by_backbone
        idx = {name: i for i, name in enumerate(header)}
        percentiles = [int(name[len("iou_p") :]) for name in header if name.startswith("iou_p")]
        for row in reader:
            if not row:
                continue
            iou_top = {}
            for p in percentiles:
                value = _parse(row[idx[f"iou_p{p}"]])
                if value is not None:
                    iou_top[p] = value
            flags_text = row[idx["flags"]]
            rec = MetricRecord(
                image_id=row[idx["image_id"]],
                concept=row[idx["concept"]],
                language=row[idx["language"]],
                iou_cluster=_parse(row[idx["iou_cluster"]]),
                iou_top=iou_top,
                spearman=_parse(row[idx["spearman"]]),
                peak_ratio=_parse(row[idx["peak_ratio"]]),
                flags=frozenset(flags_text.split(";")) if flags_text else frozenset(),
            )
            by_backbone.setdefault(row[idx["backbone"]], []).append(rec)
    return by_backbone

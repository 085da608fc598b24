"""On-disk corpus: binary tensor files plus a JSON manifest.

A corpus is a directory tree of small binary tensor files (dense visual
feature maps, per-language text embeddings, similarity maps) described by a
single ``manifest.json``. The tensor format is fixed bit-exactly so that
producers written in other ecosystems interoperate with this reader without
a shared library:

    8 bytes   magic ``GLNSTNS1``
    1 byte    rank (1..3), unsigned
    12 bytes  three little-endian u32 dims (unused trailing dims = 1)
    payload   row-major IEEE-754 32-bit little-endian floats

Layout under a corpus root::

    manifest.json
    features/<backbone>/<image_id>.tns
    text/<backbone>/<lang>/<concept>.tns
    simmaps/<backbone>/<lang>/<concept>/<image_id>.tns
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"GLNSTNS1"
HEADER_SIZE = len(MAGIC) + 1 + 12
MAX_RANK = 3

RESOURCE_CLASSES = ("high", "low", "reference")


class TensorFormatError(ValueError):
    """Raised when a tensor file does not conform to the binary format."""


class ManifestError(ValueError):
    """Raised when a manifest violates the corpus schema."""


def write_tensor(path, tensor) -> None:
    """Write a rank-1..3 real tensor to ``path`` in the corpus format.

    The payload is stored as float32; callers that need the stored bits
    back exactly should pass float32 data. All entries must be finite.
    """
    arr = np.asarray(tensor)
    if arr.ndim < 1 or arr.ndim > MAX_RANK:
        raise TensorFormatError(f"tensor rank must be 1..{MAX_RANK}, got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise TensorFormatError(f"tensor dims must each be >= 1, got {arr.shape}")
    arr = arr.astype(np.float32, copy=False)
    if not np.all(np.isfinite(arr)):
        raise TensorFormatError("tensor contains non-finite entries")

    dims = list(arr.shape) + [1] * (MAX_RANK - arr.ndim)
    header = MAGIC + struct.pack("<B3I", arr.ndim, *dims)
    payload = np.ascontiguousarray(arr).tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_tensor(path) -> np.ndarray:
    """Read a tensor file written by :func:`write_tensor` (exact inverse).

    Returns a float32 array with the stored bits; downstream numerics
    promote to float64 where it matters.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise TensorFormatError(f"{path}: file shorter than header")
    if raw[: len(MAGIC)] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {raw[:len(MAGIC)]!r}")
    rank, d0, d1, d2 = struct.unpack("<B3I", raw[len(MAGIC) : HEADER_SIZE])
    if rank < 1 or rank > MAX_RANK:
        raise TensorFormatError(f"{path}: invalid rank {rank}")
    dims = (d0, d1, d2)
    if any(d < 1 for d in dims):
        raise TensorFormatError(f"{path}: zero dimension in header {dims}")
    if any(d != 1 for d in dims[rank:]):
        raise TensorFormatError(f"{path}: unused dims must be 1, got {dims}")
    n_elem = d0 * d1 * d2
    if n_elem > 2**32:
        raise TensorFormatError(f"{path}: declared element count {n_elem} overflows")
    expected = n_elem * 4
    got = len(raw) - HEADER_SIZE
    if got != expected:
        kind = "truncated" if got < expected else "trailing bytes in"
        raise TensorFormatError(f"{path}: {kind} payload ({got} bytes, expected {expected})")
    flat = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE, count=n_elem)
    return flat.reshape(dims[:rank]).astype(np.float32, copy=True)


@dataclass(frozen=True)
class LanguageEntry:
    code: str
    resource_class: str

    def __post_init__(self):
        if not self.code:
            raise ManifestError("language code must be non-empty")
        if self.resource_class not in RESOURCE_CLASSES:
            raise ManifestError(
                f"resource_class must be one of {RESOURCE_CLASSES}, "
                f"got {self.resource_class!r} for {self.code!r}"
            )


@dataclass(frozen=True)
class BackboneInfo:
    name: str
    visual_params_m: float = 0.0

    def __post_init__(self):
        if not self.name:
            raise ManifestError("backbone name must be non-empty")


@dataclass(frozen=True)
class Manifest:
    """Corpus description: images, concepts, languages, grid geometry."""

    images: tuple[str, ...]
    concepts: tuple[str, ...]
    languages: tuple[LanguageEntry, ...]
    reference_language: str
    backbone: BackboneInfo
    grid_h: int
    grid_w: int
    embed_dim: int

    def __post_init__(self):
        for name, items in (("images", self.images), ("concepts", self.concepts)):
            if len(set(items)) != len(items):
                dupes = sorted({x for x in items if list(items).count(x) > 1})
                raise ManifestError(f"duplicate {name}: {dupes}")
        codes = [lang.code for lang in self.languages]
        if len(set(codes)) != len(codes):
            raise ManifestError("duplicate language codes")
        ref_entries = [lang for lang in self.languages if lang.code == self.reference_language]
        if len(ref_entries) != 1:
            raise ManifestError(
                f"reference language {self.reference_language!r} must appear exactly once"
            )
        for lang in self.languages:
            is_ref = lang.code == self.reference_language
            if is_ref != (lang.resource_class == "reference"):
                raise ManifestError(
                    f"{lang.code!r}: resource_class 'reference' is reserved for "
                    f"the reference language and required on it"
                )
        if self.grid_h < 1 or self.grid_w < 1:
            raise ManifestError(f"grid dims must be >= 1, got {self.grid_h}x{self.grid_w}")
        if self.embed_dim < 1:
            raise ManifestError(f"embed_dim must be >= 1, got {self.embed_dim}")

    @property
    def paired_observations(self) -> int:
        """Number of (image, concept) comparison units: |images| x |concepts|."""
        return len(self.images) * len(self.concepts)

    def non_reference_languages(self) -> list[str]:
        return [l.code for l in self.languages if l.code != self.reference_language]

    def languages_by_class(self, resource_class: str) -> list[str]:
        return [l.code for l in self.languages if l.resource_class == resource_class]

    def to_dict(self) -> dict:
        return {
            "images": list(self.images),
            "concepts": list(self.concepts),
            "languages": [
                {"code": l.code, "resource_class": l.resource_class} for l in self.languages
            ],
            "reference_language": self.reference_language,
            "backbone": {
                "name": self.backbone.name,
                "visual_params_m": self.backbone.visual_params_m,
            },
            "grid": {"h": self.grid_h, "w": self.grid_w},
            "embed_dim": self.embed_dim,
        }


def manifest_from_dict(doc: dict) -> Manifest:
    try:
        languages = tuple(
            LanguageEntry(code=entry["code"], resource_class=entry["resource_class"])
            for entry in doc["languages"]
        )
        backbone = BackboneInfo(
            name=doc["backbone"]["name"],
            visual_params_m=float(doc["backbone"].get("visual_params_m", 0.0)),
        )
        return Manifest(
            images=tuple(doc["images"]),
            concepts=tuple(doc["concepts"]),
            languages=languages,
            reference_language=doc["reference_language"],
            backbone=backbone,
            grid_h=int(doc["grid"]["h"]),
            grid_w=int(doc["grid"]["w"]),
            embed_dim=int(doc["embed_dim"]),
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"manifest missing or malformed field: {exc}") from exc


def load_manifest(path) -> Manifest:
    """Load and validate a manifest JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return manifest_from_dict(doc)


def save_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class FeatureMap:
    """Dense visual feature tensor for one image: grid_h x grid_w x embed_dim.

    Shared across languages; only the text side varies between languages.
    """

    image_id: str
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be rank 3, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"feature map {self.image_id!r} has non-finite entries")
        norms = np.linalg.norm(arr, axis=-1)
        if not np.any(norms > 0):
            raise ValueError(f"feature map {self.image_id!r} is entirely zero")
        object.__setattr__(self, "data", arr)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.data.shape[2]

    def check_against(self, manifest: Manifest) -> None:
        expected = (manifest.grid_h, manifest.grid_w, manifest.embed_dim)
        if self.data.shape != expected:
            raise ValueError(
                f"feature map {self.image_id!r} shape {self.data.shape} "
                f"does not match manifest {expected}"
            )


@dataclass(frozen=True)
class TextEmbedding:
    """One text-side embedding vector for a (language, concept) pair."""

    language: str
    concept: str
    vector: np.ndarray = field(repr=False)

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1:
            raise ValueError(f"text embedding must be rank 1, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValueError(
                f"text embedding ({self.language}, {self.concept}) has non-finite entries"
            )
        if not np.linalg.norm(vec) > 0:
            raise ValueError(f"text embedding ({self.language}, {self.concept}) has zero norm")
        object.__setattr__(self, "vector", vec)


def feature_path(root, backbone: str, image_id: str) -> Path:
    return Path(root) / "features" / backbone / f"{image_id}.tns"


def text_path(root, backbone: str, language: str, concept: str) -> Path:
    return Path(root) / "text" / backbone / language / f"{concept}.tns"


def simmap_path(root, backbone: str, language: str, concept: str, image_id: str) -> Path:
    return Path(root) / "simmaps" / backbone / language / concept / f"{image_id}.tns"


def load_feature_map(root, backbone: str, image_id: str) -> FeatureMap:
    return FeatureMap(image_id=image_id, data=read_tensor(feature_path(root, backbone, image_id)))


def load_text_embedding(root, backbone: str, language: str, concept: str) -> TextEmbedding:
    vec = read_tensor(text_path(root, backbone, language, concept))
    return TextEmbedding(language=language, concept=concept, vector=vec)

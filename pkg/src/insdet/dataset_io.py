"""On-disk contracts: annotation schema, feature files, dataset layout.

Two neutral formats cross the process boundary:

* Annotation documents: JSON with ``images``, ``instances``, ``annotations``
  and optional ``detections`` / ``proposals`` arrays. Boxes are stored as
  ``[x, y, width, height]`` and converted to half-open corners on read.
* Feature files: a fixed binary layout for embedding interchange —
  magic ``IDFV``, u32 version, u32 dim, u64 count, a length-prefixed UTF-8
  id table, then count x dim little-endian float32 values, row-major.

Readers are total on their documented error domains: every malformed input
raises ``SchemaError`` or ``FeatureFileError`` carrying a machine-readable
``code`` rather than crashing.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import BoundingBox
from .matching import FeatureVector

SCHEMA_VERSION = 1
FEATURE_MAGIC = b"IDFV"
FEATURE_VERSION = 1
SCENE_TAGS = ("easy", "hard")
EXPECTED_VIEWS = 24
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
LOSSLESS_SUFFIXES = (".png", ".bmp", ".tif", ".tiff")


class SchemaError(ValueError):
    """Annotation-document violation; ``code`` identifies the rejection."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class FeatureFileError(ValueError):
    """Feature-file violation; ``code`` identifies the rejection."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Annotation documents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImageRecord:
    id: str
    file: str
    width: int
    height: int
    scene_tag: str = "easy"


@dataclass(frozen=True)
class InstanceRecord:
    id: str
    name: str = ""


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    instance_id: str
    box: BoundingBox
    visible_fraction: float | None = None


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    instance_id: str
    box: BoundingBox
    score: float


@dataclass(frozen=True)
class ProposalRecord:
    image_id: str
    proposal_id: str
    box: BoundingBox
    mask_file: str | None = None
    square_crop: BoundingBox | None = None


@dataclass
class AnnotationSet:
    images: list[ImageRecord] = field(default_factory=list)
    instances: list[InstanceRecord] = field(default_factory=list)
    annotations: list[AnnotationRecord] = field(default_factory=list)
    detections: list[DetectionRecord] = field(default_factory=list)
    proposals: list[ProposalRecord] = field(default_factory=list)

    def image_ids(self) -> set[str]:
        return {im.id for im in self.images}

    def instance_ids(self) -> set[str]:
        return {inst.id for inst in self.instances}


def _bbox_from_xywh(raw, where: str) -> BoundingBox:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 4):
        raise SchemaError("bad_bbox", f"{where}: bbox must be [x, y, w, h], got {raw!r}")
    x, y, w, h = (float(v) for v in raw)
    if w <= 0 or h <= 0:
        raise SchemaError("bad_bbox", f"{where}: non-positive bbox size {raw!r}")
    try:
        return BoundingBox.from_xywh(x, y, w, h)
    except ValueError as exc:
        raise SchemaError("bad_bbox", f"{where}: {exc}") from exc


def _bbox_to_xywh(box: BoundingBox) -> list[float]:
    return [float(v) for v in box.to_xywh()]


def _require(entry: dict, key: str, where: str):
    if key not in entry:
        raise SchemaError("missing_field", f"{where}: missing field {key!r}")
    return entry[key]


def annotation_set_from_dict(doc: dict) -> AnnotationSet:
    """Parse and validate an annotation document."""
    if not isinstance(doc, dict):
        raise SchemaError("bad_document", "annotation document must be a JSON object")
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise SchemaError(
            "version_mismatch", f"unsupported schema version {version!r}, expected {SCHEMA_VERSION}"
        )
    out = AnnotationSet()

    seen_images: set[str] = set()
    for entry in doc.get("images", []):
        image_id = str(_require(entry, "id", "images"))
        if image_id in seen_images:
            raise SchemaError("duplicate_id", f"duplicate image id {image_id!r}")
        seen_images.add(image_id)
        tag = entry.get("scene_tag", "easy")
        if tag not in SCENE_TAGS:
            raise SchemaError("bad_scene_tag", f"image {image_id!r}: unknown scene tag {tag!r}")
        width = int(_require(entry, "width", f"image {image_id!r}"))
        height = int(_require(entry, "height", f"image {image_id!r}"))
        if width <= 0 or height <= 0:
            raise SchemaError("bad_image_size", f"image {image_id!r}: {width}x{height}")
        out.images.append(ImageRecord(image_id, str(entry.get("file", "")), width, height, tag))

    seen_instances: set[str] = set()
    for entry in doc.get("instances", []):
        inst_id = str(_require(entry, "id", "instances"))
        if inst_id in seen_instances:
            raise SchemaError("duplicate_id", f"duplicate instance id {inst_id!r}")
        seen_instances.add(inst_id)
        out.instances.append(InstanceRecord(inst_id, str(entry.get("name", ""))))

    def check_ids(image_id: str, instance_id: str | None, where: str):
        if image_id not in seen_images:
            raise SchemaError("unknown_id", f"{where}: unknown image id {image_id!r}")
        if instance_id is not None and instance_id not in seen_instances:
            raise SchemaError("unknown_id", f"{where}: unknown instance id {instance_id!r}")

    for k, entry in enumerate(doc.get("annotations", [])):
        where = f"annotations[{k}]"
        image_id = str(_require(entry, "image_id", where))
        instance_id = str(_require(entry, "instance_id", where))
        check_ids(image_id, instance_id, where)
        box = _bbox_from_xywh(_require(entry, "bbox", where), where)
        fraction = entry.get("visible_fraction")
        if fraction is not None:
            fraction = float(fraction)
            if not 0.0 < fraction <= 1.0:
                raise SchemaError("bad_visible_fraction", f"{where}: {fraction}")
        out.annotations.append(AnnotationRecord(image_id, instance_id, box, fraction))

    for k, entry in enumerate(doc.get("detections", [])):
        where = f"detections[{k}]"
        image_id = str(_require(entry, "image_id", where))
        instance_id = str(_require(entry, "instance_id", where))
        check_ids(image_id, instance_id, where)
        box = _bbox_from_xywh(_require(entry, "bbox", where), where)
        score = float(_require(entry, "score", where))
        if not np.isfinite(score):
            raise SchemaError("bad_score", f"{where}: non-finite score")
        out.detections.append(DetectionRecord(image_id, instance_id, box, score))

    for k, entry in enumerate(doc.get("proposals", [])):
        where = f"proposals[{k}]"
        image_id = str(_require(entry, "image_id", where))
        check_ids(image_id, None, where)
        proposal_id = str(_require(entry, "proposal_id", where))
        box = _bbox_from_xywh(_require(entry, "bbox", where), where)
        crop = entry.get("square_crop")
        crop_box = _bbox_from_xywh(crop, where) if crop is not None else None
        mask_file = entry.get("mask_file")
        out.proposals.append(
            ProposalRecord(image_id, proposal_id, box, mask_file, crop_box)
        )
    return out


def annotation_set_to_dict(records: AnnotationSet) -> dict:
    doc: dict = {
        "version": SCHEMA_VERSION,
        "images": [
            {
                "id": im.id,
                "file": im.file,
                "width": im.width,
                "height": im.height,
                "scene_tag": im.scene_tag,
            }
            for im in records.images
        ],
        "instances": [{"id": inst.id, "name": inst.name} for inst in records.instances],
        "annotations": [
            {
                "image_id": a.image_id,
                "instance_id": a.instance_id,
                "bbox": _bbox_to_xywh(a.box),
                **({"visible_fraction": a.visible_fraction} if a.visible_fraction is not None else {}),
            }
            for a in records.annotations
        ],
    }
    if records.detections:
        doc["detections"] = [
            {
                "image_id": d.image_id,
                "instance_id": d.instance_id,
                "bbox": _bbox_to_xywh(d.box),
                "score": d.score,
            }
            for d in records.detections
        ]
    if records.proposals:
        doc["proposals"] = [
            {
                "image_id": p.image_id,
                "proposal_id": p.proposal_id,
                "bbox": _bbox_to_xywh(p.box),
                **({"mask_file": p.mask_file} if p.mask_file is not None else {}),
                **({"square_crop": _bbox_to_xywh(p.square_crop)} if p.square_crop is not None else {}),
            }
            for p in records.proposals
        ]
    return doc


def read_annotations(path: str | Path) -> AnnotationSet:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError("bad_json", f"{path}: {exc}") from exc
    return annotation_set_from_dict(doc)


def write_annotations(path: str | Path, records: AnnotationSet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(annotation_set_to_dict(records), indent=2, sort_keys=True)
    path.write_text(payload + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Feature files
# ---------------------------------------------------------------------------

def write_feature_file(path: str | Path, vectors: list[FeatureVector]) -> None:
    if not vectors:
        raise FeatureFileError("empty_file", "refusing to write a feature file with no vectors")
    dim = vectors[0].dim
    ids = [v.source_id for v in vectors]
    if len(set(ids)) != len(ids):
        raise FeatureFileError("duplicate_id", "duplicate vector ids")
    for v in vectors:
        if v.dim != dim:
            raise FeatureFileError(
                "dim_mismatch", f"vector {v.source_id!r} has dim {v.dim}, expected {dim}"
            )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIQ", FEATURE_VERSION, dim, len(vectors)))
        for vid in ids:
            raw = vid.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        payload = np.stack([v.values for v in vectors]).astype("<f4")
        fh.write(payload.tobytes(order="C"))


def read_feature_file(path: str | Path) -> list[FeatureVector]:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 4 or blob[:4] != FEATURE_MAGIC:
        raise FeatureFileError("bad_magic", f"{path}: not a feature file")
    if len(blob) < 4 + 16:
        raise FeatureFileError("truncated_header", f"{path}: truncated header")
    version, dim, count = struct.unpack_from("<IIQ", blob, 4)
    if version != FEATURE_VERSION:
        raise FeatureFileError(
            "version_mismatch", f"{path}: version {version}, expected {FEATURE_VERSION}"
        )
    if dim == 0 or count == 0:
        raise FeatureFileError("empty_file", f"{path}: zero dim or count")
    offset = 20
    ids = []
    for _ in range(count):
        if offset + 4 > len(blob):
            raise FeatureFileError("truncated_id_table", f"{path}: truncated id table")
        (n,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        if offset + n > len(blob):
            raise FeatureFileError("truncated_id_table", f"{path}: truncated id table")
        ids.append(blob[offset : offset + n].decode("utf-8"))
        offset += n
    if len(set(ids)) != len(ids):
        raise FeatureFileError("duplicate_id", f"{path}: duplicate vector ids")
    expected = count * dim * 4
    if len(blob) - offset != expected:
        raise FeatureFileError(
            "payload_length_mismatch",
            f"{path}: payload length mismatch, expected {expected} bytes, "
            f"found {len(blob) - offset}",
        )
    payload = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=offset)
    payload = payload.reshape(count, dim)
    if not np.isfinite(payload).all():
        raise FeatureFileError("non_finite_value", f"{path}: non-finite feature values")
    out = []
    for vid, row in zip(ids, payload):
        try:
            out.append(FeatureVector(vid, row.copy()))
        except ValueError as exc:
            raise FeatureFileError("zero_vector", f"{path}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Image helpers
# ---------------------------------------------------------------------------

def load_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def load_rgba(path: str | Path) -> np.ndarray:
    if Path(path).suffix.lower() not in LOSSLESS_SUFFIXES:
        raise SchemaError("lossy_asset", f"{path}: assets must use a lossless format")
    with Image.open(path) as im:
        return np.asarray(im.convert("RGBA"))


def load_mask(path: str | Path) -> np.ndarray:
    """Binary mask from a 1-bit or 8-bit grayscale lossless file."""
    if Path(path).suffix.lower() not in LOSSLESS_SUFFIXES:
        raise SchemaError("lossy_mask", f"{path}: masks must use a lossless format")
    with Image.open(path) as im:
        if im.mode not in ("1", "L"):
            raise SchemaError("bad_mask_mode", f"{path}: mask mode {im.mode!r}, expected 1 or L")
        return np.asarray(im.convert("L")) > 0


def save_rgb_png(path: str | Path, image: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def save_mask_png(path: str | Path, mask: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    arr = (np.asarray(mask, dtype=bool) * np.uint8(255))
    Image.fromarray(arr, mode="L").save(path, format="PNG")


# ---------------------------------------------------------------------------
# Dataset layout
# ---------------------------------------------------------------------------

@dataclass
class DatasetLayout:
    objects_root: Path
    backgrounds_root: Path
    scenes_root: Path
    views: dict[str, list[Path]]  # instance id -> profile image files
    backgrounds: list[Path]
    scene_images: list[Path]
    scene_tags: dict[str, str]
    warnings: list[str] = field(default_factory=list)

    @property
    def catalog(self) -> list[str]:
        return sorted(self.views)


def _image_files(root: Path) -> list[Path]:
    return sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def scan_dataset(
    root: str | Path,
    manifest: dict | None = None,
    expected_views: int = EXPECTED_VIEWS,
) -> DatasetLayout:
    """Validate a dataset tree and collect its catalogs.

    The default layout is ``objects/<instance_id>/*.png``, ``backgrounds/*``
    and ``scenes/*`` with a ``scenes/annotations.json`` carrying scene tags.
    ``manifest`` may override the three subtree names to adapt to a release
    whose directory naming differs.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    manifest = manifest or {}
    objects_root = root / manifest.get("objects", "objects")
    backgrounds_root = root / manifest.get("backgrounds", "backgrounds")
    scenes_root = root / manifest.get("scenes", "scenes")
    for sub in (objects_root, backgrounds_root, scenes_root):
        if not sub.is_dir():
            raise FileNotFoundError(f"missing dataset subtree: {sub}")

    warnings: list[str] = []
    views: dict[str, list[Path]] = {}
    for inst_dir in sorted(p for p in objects_root.iterdir() if p.is_dir()):
        files = _image_files(inst_dir)
        if not files:
            raise SchemaError("empty_instance", f"instance {inst_dir.name!r} has no profile views")
        if len(files) != expected_views:
            warnings.append(
                f"instance {inst_dir.name!r} has {len(files)} views (expected {expected_views})"
            )
        for f in files:
            try:
                with Image.open(f) as im:
                    im.size
            except Exception as exc:
                raise SchemaError("unreadable_image", f"{f}: {exc}") from exc
        views[inst_dir.name] = files
    if not views:
        raise SchemaError("empty_catalog", f"no instances under {objects_root}")

    backgrounds = _image_files(backgrounds_root)
    scene_images = _image_files(scenes_root)
    scene_tags: dict[str, str] = {}
    gt_path = scenes_root / "annotations.json"
    if gt_path.exists():
        records = read_annotations(gt_path)
        scene_tags = {im.id: im.scene_tag for im in records.images}
    else:
        warnings.append(f"no ground-truth annotations at {gt_path}")
    return DatasetLayout(
        objects_root,
        backgrounds_root,
        scenes_root,
        views,
        backgrounds,
        scene_images,
        scene_tags,
        warnings,
    )

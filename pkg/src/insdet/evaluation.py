"""Detection evaluation: AP and AR families with scene and size breakdowns.

Conventions, fixed here and relied on by every report:

* Matching at one IoU threshold is greedy: detections in score order (ties by
  input position) claim the unmatched ground truth of the same instance and
  image with the highest IoU at or above the threshold.
* AP uses ceiling interpolation sampled at 101 evenly spaced recall points;
  classes without ground truth are excluded from class means.
* The headline AP averages the 10 IoU thresholds 0.50:0.05:0.95.
* AR keeps the top-k detections per image regardless of instance label,
  computes per-image recall at each grid threshold, averages the grid, then
  averages images that carry ground truth. The default grid follows the
  stated protocol (0.50:0.05:1.00, 11 points); a COCO-compatible 10-point
  grid is available for interoperability.
* Size breakdowns ignore detections matched to out-of-band ground truth
  (neither TP nor FP); scene breakdowns restrict to the tagged images.
* Empty subsets score 0.0 so every report cell is a number in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundingBox, SizeTag, iou, size_tag

AP_IOU_GRID = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
AR_GRID_LITERAL = tuple(round(0.5 + 0.05 * i, 2) for i in range(11))
AR_GRID_COCO = AP_IOU_GRID
RECALL_POINTS = np.arange(101) / 100.0

SCENE_TAGS = ("easy", "hard")
BREAKDOWN_KEYS = ("avg", "hard", "easy", "small", "medium", "large")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    instance_id: str
    box: BoundingBox
    scene_tag: str = "easy"

    def __post_init__(self):
        if self.scene_tag not in SCENE_TAGS:
            raise ValueError(f"unknown scene tag {self.scene_tag!r}")

    @property
    def size(self) -> SizeTag:
        return size_tag(self.box)


@dataclass(frozen=True)
class Detection:
    image_id: str
    instance_id: str
    box: BoundingBox
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"non-finite detection score: {self.score!r}")


@dataclass
class EvalReport:
    """All metrics in [0, 1]; multiply by 100 at the reporting interface."""

    ap: dict[str, float]
    ap50: float
    ap75: float
    ar: dict[str, dict[str, float]]  # "max10"/"max100" -> breakdown key -> value
    ar_grid: str
    pr_curves: dict[str, dict] = field(default_factory=dict)

    def flat(self) -> dict[str, float]:
        out = {f"ap_{k}": v for k, v in self.ap.items()}
        out["ap50"] = self.ap50
        out["ap75"] = self.ap75
        for max_k, row in self.ar.items():
            for k, v in row.items():
                out[f"ar_{max_k}_{k}"] = v
        return out


def _check_ids(dets: list[Detection], gts: list[GroundTruth], catalog: set[str]) -> None:
    bad = sorted({d.instance_id for d in dets} - catalog)
    if bad:
        raise ValueError(f"detections reference unknown instance ids: {bad}")
    bad = sorted({g.instance_id for g in gts} - catalog)
    if bad:
        raise ValueError(f"ground truth references unknown instance ids: {bad}")
    tags: dict[str, str] = {}
    for g in gts:
        prev = tags.setdefault(g.image_id, g.scene_tag)
        if prev != g.scene_tag:
            raise ValueError(f"conflicting scene tags for image {g.image_id!r}")


def match_at_iou(
    dets: list[tuple[int, Detection]],
    gts: list[GroundTruth],
    t: float,
    ignored: set[int] | None = None,
) -> tuple[list[tuple[float, int, bool]], int]:
    """Label one class's detections TP/FP against its ground truth at IoU >= t.

    ``dets`` carries (input_position, detection) for tie-breaking; ``ignored``
    holds indices into ``gts`` that are outside the evaluated subset.
    Detections matched to ignored ground truth are omitted from the returned
    stream. Returns (sorted [(score, position, is_tp)], non-ignored GT count).
    """
    if not 0.0 < t <= 1.0:
        raise ValueError(f"IoU threshold must lie in (0, 1], got {t}")
    ignored = ignored or set()
    gt_by_image: dict[str, list[int]] = {}
    for k, g in enumerate(gts):
        gt_by_image.setdefault(g.image_id, []).append(k)

    order = sorted(dets, key=lambda item: (-item[1].score, item[0]))
    taken: set[int] = set()
    stream: list[tuple[float, int, bool]] = []
    for pos, det in order:
        best_k, best_iou, best_ignored = -1, 0.0, False
        for k in gt_by_image.get(det.image_id, ()):
            if k in taken:
                continue
            v = iou(det.box, gts[k].box)
            if v < t:
                continue
            is_ign = k in ignored
            # prefer any countable ground truth over ignored, then higher IoU
            better = (
                best_k < 0
                or (best_ignored and not is_ign)
                or (best_ignored == is_ign and v > best_iou)
            )
            if better:
                best_k, best_iou, best_ignored = k, v, is_ign
        if best_k >= 0:
            taken.add(best_k)
            if best_ignored:
                continue
            stream.append((det.score, pos, True))
        else:
            stream.append((det.score, pos, False))
    num_gt = len(gts) - sum(1 for k in range(len(gts)) if k in ignored)
    return stream, num_gt


def average_precision(stream: list[tuple[float, int, bool]], num_gt: int) -> float | None:
    """101-point interpolated AP of one class; None when the class has no GT."""
    if num_gt == 0:
        return None
    if not stream:
        return 0.0
    labels = np.array([tp for _, _, tp in sorted(stream, key=lambda s: (-s[0], s[1]))])
    tp_cum = np.cumsum(labels)
    recall = tp_cum / num_gt
    precision = tp_cum / np.arange(1, labels.size + 1)
    # ceiling interpolation: precision at recall r is the best precision at
    # any operating point reaching recall >= r
    prec_ceil = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < recall.size, prec_ceil[np.minimum(idx, recall.size - 1)], 0.0)
    return float(sampled.mean())


def _class_streams(
    dets: list[Detection],
    gts: list[GroundTruth],
    t: float,
    size_band: SizeTag | None = None,
) -> list[tuple[str, list[tuple[float, int, bool]], int]]:
    """Per-class matched streams, optionally ignoring GT outside a size band."""
    by_class_det: dict[str, list[tuple[int, Detection]]] = {}
    for pos, d in enumerate(dets):
        by_class_det.setdefault(d.instance_id, []).append((pos, d))
    by_class_gt: dict[str, list[GroundTruth]] = {}
    for g in gts:
        by_class_gt.setdefault(g.instance_id, []).append(g)

    out = []
    for cls in sorted(set(by_class_det) | set(by_class_gt)):
        cls_gts = by_class_gt.get(cls, [])
        ignored = (
            {k for k, g in enumerate(cls_gts) if g.size != size_band}
            if size_band is not None
            else set()
        )
        stream, num_gt = match_at_iou(by_class_det.get(cls, []), cls_gts, t, ignored)
        out.append((cls, stream, num_gt))
    return out


def _mean_ap(
    dets: list[Detection],
    gts: list[GroundTruth],
    t: float,
    size_band: SizeTag | None = None,
) -> float:
    aps = [
        ap
        for _, stream, num_gt in _class_streams(dets, gts, t, size_band)
        if (ap := average_precision(stream, num_gt)) is not None
    ]
    return float(np.mean(aps)) if aps else 0.0


def _scene_subset(
    dets: list[Detection], gts: list[GroundTruth], tag: str
) -> tuple[list[Detection], list[GroundTruth]]:
    images = {g.image_id for g in gts if g.scene_tag == tag}
    return [d for d in dets if d.image_id in images], [g for g in gts if g.image_id in images]


def coco_ap(
    dets: list[Detection],
    gts: list[GroundTruth],
    catalog: set[str] | None = None,
) -> tuple[dict[str, float], float, float]:
    """AP breakdown table plus AP50/AP75.

    ``avg`` means over the 10-threshold grid; ``hard``/``easy`` restrict to
    the tagged images; ``small``/``medium``/``large`` keep only same-band
    ground truth countable and ignore detections matched outside the band.
    """
    _check_ids(dets, gts, catalog if catalog is not None else {g.instance_id for g in gts})
    table: dict[str, float] = {}
    table["avg"] = float(np.mean([_mean_ap(dets, gts, t) for t in AP_IOU_GRID]))
    for tag in ("hard", "easy"):
        sd, sg = _scene_subset(dets, gts, tag)
        table[tag] = float(np.mean([_mean_ap(sd, sg, t) for t in AP_IOU_GRID]))
    for band in SizeTag:
        table[band.value] = float(
            np.mean([_mean_ap(dets, gts, t, size_band=band) for t in AP_IOU_GRID])
        )
    ap50 = _mean_ap(dets, gts, 0.5)
    ap75 = _mean_ap(dets, gts, 0.75)
    return table, ap50, ap75


def _image_recall(dets: list[tuple[int, Detection]], gt_boxes: list[BoundingBox], t: float) -> float:
    """Class-agnostic greedy recall of one image at one IoU threshold."""
    taken: set[int] = set()
    for _, det in sorted(dets, key=lambda item: (-item[1].score, item[0])):
        best_k, best_iou = -1, 0.0
        for k, box in enumerate(gt_boxes):
            if k in taken:
                continue
            v = iou(det.box, box)
            if v >= t and v > best_iou:
                best_k, best_iou = k, v
        if best_k >= 0:
            taken.add(best_k)
    return len(taken) / len(gt_boxes)


def average_recall(
    dets: list[Detection],
    gts: list[GroundTruth],
    max_k: int,
    grid: tuple[float, ...] = AR_GRID_LITERAL,
    size_band: SizeTag | None = None,
) -> float:
    """AR@max_k: per-image top-k recall averaged over the grid, then images."""
    if max_k < 1:
        raise ValueError(f"max_k must be >= 1, got {max_k}")
    det_by_image: dict[str, list[tuple[int, Detection]]] = {}
    for pos, d in enumerate(dets):
        det_by_image.setdefault(d.image_id, []).append((pos, d))
    gt_by_image: dict[str, list[GroundTruth]] = {}
    for g in gts:
        gt_by_image.setdefault(g.image_id, []).append(g)

    per_image = []
    for image_id, image_gts in sorted(gt_by_image.items()):
        boxes = [g.box for g in image_gts if size_band is None or g.size == size_band]
        if not boxes:
            continue
        kept = sorted(det_by_image.get(image_id, []), key=lambda item: (-item[1].score, item[0]))
        kept = kept[:max_k]
        per_image.append(float(np.mean([_image_recall(kept, boxes, t) for t in grid])))
    return float(np.mean(per_image)) if per_image else 0.0


def pr_curve(
    dets: list[Detection],
    gts: list[GroundTruth],
    t: float = 0.5,
) -> dict[str, dict]:
    """Raw and interpolated precision-recall series at one IoU threshold.

    Returns per-instance staircases (anchored at (0, 1), one point per ranked
    detection) plus the class-mean interpolated curve whose average equals the
    AP at ``t``. A class with no detections contributes the single
    conventional point (0, 1).
    """
    curves: dict[str, dict] = {"instances": {}, "mean": {}}
    interp_rows = []
    for cls, stream, num_gt in _class_streams(dets, gts, t):
        ranked = sorted(stream, key=lambda s: (-s[0], s[1]))
        recall, precision = [0.0], [1.0]
        tp = 0
        for n, (_, _, is_tp) in enumerate(ranked, start=1):
            tp += int(is_tp)
            recall.append(tp / num_gt if num_gt else 0.0)
            precision.append(tp / n)
        curves["instances"][cls] = {"recall": recall, "precision": precision}
        if num_gt:
            ap = average_precision(stream, num_gt)
            curves["instances"][cls]["ap"] = ap
            labels = np.array([s[2] for s in ranked])
            if labels.size:
                tp_cum = np.cumsum(labels)
                rec = tp_cum / num_gt
                prec = tp_cum / np.arange(1, labels.size + 1)
                ceil = np.maximum.accumulate(prec[::-1])[::-1]
                idx = np.searchsorted(rec, RECALL_POINTS, side="left")
                row = np.where(idx < rec.size, ceil[np.minimum(idx, rec.size - 1)], 0.0)
            else:
                row = np.zeros_like(RECALL_POINTS)
            interp_rows.append(row)
    mean_prec = np.mean(interp_rows, axis=0) if interp_rows else np.ones_like(RECALL_POINTS)
    curves["mean"] = {
        "recall": [float(r) for r in RECALL_POINTS],
        "precision": [float(p) for p in mean_prec],
    }
    return curves


def evaluate(
    dets: list[Detection],
    gts: list[GroundTruth],
    catalog: set[str] | None = None,
    ar_grid: str = "literal",
    max_ks: tuple[int, ...] = (10, 100),
    with_pr: bool = True,
) -> EvalReport:
    """Full report: AP table, AP50/75, AR table per max_k, PR curves."""
    if ar_grid not in ("literal", "coco"):
        raise ValueError(f"unknown AR grid {ar_grid!r}")
    grid = AR_GRID_LITERAL if ar_grid == "literal" else AR_GRID_COCO
    ap_table, ap50, ap75 = coco_ap(dets, gts, catalog)
    ar: dict[str, dict[str, float]] = {}
    for k in max_ks:
        row = {"avg": average_recall(dets, gts, k, grid)}
        for tag in ("hard", "easy"):
            sd, sg = _scene_subset(dets, gts, tag)
            row[tag] = average_recall(sd, sg, k, grid)
        for band in SizeTag:
            row[band.value] = average_recall(dets, gts, k, grid, size_band=band)
        ar[f"max{k}"] = row
    return EvalReport(
        ap=ap_table,
        ap50=ap50,
        ap75=ap75,
        ar=ar,
        ar_grid=ar_grid,
        pr_curves=pr_curve(dets, gts) if with_pr else {},
    )

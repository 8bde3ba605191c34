"""Shared fixtures: synthetic RGBA assets, backgrounds, random micro-instances."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from insdet.evaluation import Detection, GroundTruth
from insdet.geometry import BoundingBox
from insdet.synth import ForegroundAsset


def make_disk_asset(instance_id: str, view_index: int, side: int = 96, seed: int = 0) -> ForegroundAsset:
    """Opaque disk (or rounded rect) on a transparent square crop."""
    rng = np.random.default_rng(seed)
    rgba = np.zeros((side, side, 4), dtype=np.uint8)
    yy, xx = np.mgrid[0:side, 0:side]
    cy, cx = side / 2.0, side / 2.0
    if seed % 2 == 0:
        r = side * 0.42
        inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    else:
        h, w = side * 0.38, side * 0.45
        inside = (np.abs(yy - cy) <= h) & (np.abs(xx - cx) <= w)
    color = rng.integers(60, 255, size=3)
    rgba[..., :3] = color
    rgba[..., 3] = np.where(inside, 255, 0)
    return ForegroundAsset(instance_id, view_index, rgba)


def make_background(height: int, width: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 255, size=(8, 8, 3), dtype=np.uint8)
    import cv2

    return cv2.resize(base, (width, height), interpolation=cv2.INTER_LINEAR)


@pytest.fixture(scope="session")
def asset_catalog() -> list[ForegroundAsset]:
    assets = []
    for k in range(4):
        for view in range(3):
            assets.append(make_disk_asset(f"obj_{k:03d}", view, seed=k * 3 + view))
    return assets


@pytest.fixture(scope="session")
def background() -> np.ndarray:
    return make_background(240, 320, seed=7)


def random_box(rng, span: float = 600.0) -> BoundingBox:
    x0 = rng.uniform(0, span)
    y0 = rng.uniform(0, span)
    w = rng.uniform(3.0, 500.0)
    h = rng.uniform(3.0, 500.0)
    return BoundingBox(x0, y0, x0 + w, y0 + h)


def random_micro_instance(rng, max_images=5, max_classes=4, max_dets=10, max_gts=6):
    """A random evaluation problem in both library and oracle formats.

    Detections are jittered copies of ground-truth boxes plus pure noise, so
    the matcher sees realistic mixtures of near-hits and misses.
    """
    n_images = int(rng.integers(1, max_images + 1))
    n_classes = int(rng.integers(1, max_classes + 1))
    images = [f"im{i}" for i in range(n_images)]
    tags = {im: ("hard" if rng.random() < 0.5 else "easy") for im in images}
    classes = [f"c{j}" for j in range(n_classes)]

    gts, o_gts = [], []
    for _ in range(int(rng.integers(0, max_gts + 1))):
        im = images[int(rng.integers(0, n_images))]
        cls = classes[int(rng.integers(0, n_classes))]
        box = random_box(rng)
        gts.append(GroundTruth(im, cls, box, tags[im]))
        o_gts.append({"image": im, "cls": cls, "box": box.as_tuple(), "tag": tags[im]})

    dets, o_dets = [], []
    n_dets = int(rng.integers(0, max_dets + 1))
    for pos in range(n_dets):
        im = images[int(rng.integers(0, n_images))]
        cls = classes[int(rng.integers(0, n_classes))]
        if o_gts and rng.random() < 0.7:
            src = o_gts[int(rng.integers(0, len(o_gts)))]
            im = src["image"] if rng.random() < 0.8 else im
            cls = src["cls"] if rng.random() < 0.7 else cls
            x0, y0, x1, y1 = src["box"]
            jitter = rng.uniform(-0.25, 0.25, size=4) * min(x1 - x0, y1 - y0)
            box = BoundingBox(
                max(0.0, x0 + jitter[0]),
                max(0.0, y0 + jitter[1]),
                max(0.0, x0 + jitter[0]) + (x1 - x0) * rng.uniform(0.6, 1.4),
                max(0.0, y0 + jitter[1]) + (y1 - y0) * rng.uniform(0.6, 1.4),
            )
        else:
            box = random_box(rng)
        score = float(rng.uniform(0.01, 1.0))
        dets.append(Detection(im, cls, box, score))
        o_dets.append({"image": im, "cls": cls, "box": box.as_tuple(), "score": score, "pos": pos})
    return dets, gts, o_dets, o_gts, set(classes)

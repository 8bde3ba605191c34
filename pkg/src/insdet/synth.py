"""Cut-paste scene synthesis: placement sampling, blending, dataset emission.

Every scene is a pure function of (config, seed): placements are drawn from a
seeded PCG64 stream, one child stream per scene, so datasets are reproducible
bit-for-bit across runs and platforms. Foreground assets are RGBA crops whose
alpha carries the instance mask; pasting scales them relative to a canonical
crop side and softens only the alpha transition band (the foreground content
away from the boundary is untouched by the blur modes).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import cv2
import numpy as np
import yaml

from .dataset_io import (
    AnnotationRecord,
    AnnotationSet,
    ImageRecord,
    InstanceRecord,
    load_rgb,
    load_rgba,
    save_rgb_png,
    write_annotations,
)
from .geometry import BoundingBox

BLEND_MODES = ("gaussian", "motion", "box", "naive")
OPAQUE_THRESHOLD = 128  # alpha at or above this counts as opaque


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    count_min: int = 25
    count_max: int = 35
    scale_min: float = 0.15
    scale_max: float = 0.5
    aspect_jitter_min: float = 0.85
    aspect_jitter_max: float = 1.18
    blend_modes: tuple[str, ...] = BLEND_MODES
    gaussian_sigma: float = 2.0
    box_kernel: int = 5
    motion_length: int = 7
    min_visible_fraction: float = 0.05
    output_width: int = 1024
    output_height: int = 768
    asset_base_size: int = 256
    require_center_inside: bool = True

    def validate(self) -> "SynthConfig":
        if self.count_min < 0 or self.count_min > self.count_max:
            raise ConfigError(f"bad object count range [{self.count_min}, {self.count_max}]")
        if not 0 < self.scale_min <= self.scale_max:
            raise ConfigError(f"bad scale range [{self.scale_min}, {self.scale_max}]")
        if not 0 < self.aspect_jitter_min <= self.aspect_jitter_max:
            raise ConfigError(
                f"bad aspect jitter range [{self.aspect_jitter_min}, {self.aspect_jitter_max}]"
            )
        if not self.blend_modes:
            raise ConfigError("no blend modes enabled")
        unknown = set(self.blend_modes) - set(BLEND_MODES)
        if unknown:
            raise ConfigError(f"unknown blend modes: {sorted(unknown)}")
        if self.output_width < 1 or self.output_height < 1 or self.asset_base_size < 1:
            raise ConfigError("output and asset sizes must be positive")
        if not 0 <= self.min_visible_fraction <= 1:
            raise ConfigError(f"bad min_visible_fraction {self.min_visible_fraction}")
        if self.gaussian_sigma < 0 or self.box_kernel < 1 or self.motion_length < 1:
            raise ConfigError("blur parameters must be non-negative")
        return self

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "SynthConfig":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a key-value tree")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys: {sorted(unknown)}")
        if "blend_modes" in raw:
            raw["blend_modes"] = tuple(raw["blend_modes"])
        cfg = cls(**raw)
        if overrides:
            cfg = replace(cfg, **overrides)
        return cfg.validate()

    def to_dict(self) -> dict:
        out = {f: getattr(self, f) for f in self.__dataclass_fields__}
        out["blend_modes"] = list(self.blend_modes)
        return out


@dataclass(frozen=True)
class ForegroundAsset:
    """One profile view of one instance; alpha is the segmentation mask."""

    instance_id: str
    view_index: int
    rgba: np.ndarray  # (h, w, 4) uint8

    def __post_init__(self):
        arr = np.asarray(self.rgba, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise ValueError(f"asset must be (h, w, 4) RGBA, got {arr.shape}")
        if not (arr[..., 3] >= OPAQUE_THRESHOLD).any():
            raise ValueError(
                f"asset {self.instance_id}/{self.view_index} has no opaque pixels"
            )
        object.__setattr__(self, "rgba", arr)

    @property
    def key(self) -> tuple[str, int]:
        return (self.instance_id, self.view_index)


@dataclass(frozen=True)
class Placement:
    asset_ref: tuple[str, int]  # (instance_id, view_index)
    scale: float
    aspect_jitter: float
    center_x: float
    center_y: float
    blend_mode: str
    motion_angle: float | None = None  # degrees; sampled only for motion blur


@dataclass
class SynthScene:
    image: np.ndarray  # (H, W, 3) uint8
    annotations: list[tuple[str, BoundingBox, float]]  # (instance_id, box, visible_fraction)
    seed: int
    background_id: str
    placements: list[Placement] = field(default_factory=list)


def load_asset_catalog(objects_root: str | Path) -> list[ForegroundAsset]:
    """Load RGBA profile views laid out as ``<objects_root>/<instance_id>/*``."""
    objects_root = Path(objects_root)
    assets = []
    for inst_dir in sorted(p for p in objects_root.iterdir() if p.is_dir()):
        files = sorted(p for p in inst_dir.iterdir() if p.suffix.lower() == ".png")
        for view_index, f in enumerate(files):
            assets.append(ForegroundAsset(inst_dir.name, view_index, load_rgba(f).copy()))
    if not assets:
        raise ConfigError(f"no foreground assets under {objects_root}")
    return assets


def _target_size(config: SynthConfig, scale: float, jitter: float) -> tuple[int, int]:
    th = int(round(config.asset_base_size * scale))
    tw = int(round(config.asset_base_size * scale * jitter))
    if th < 1 or tw < 1:
        raise ValueError(f"degenerate scale: {scale} (target {tw}x{th})")
    return tw, th


def sample_placements(
    config: SynthConfig,
    assets: list[ForegroundAsset],
    rng_seed: int,
) -> list[Placement]:
    """Draw N placements (N uniform in the count range) from one seeded stream."""
    config.validate()
    if not assets:
        raise ConfigError("empty asset catalog")
    rng = np.random.default_rng(rng_seed)
    n = int(rng.integers(config.count_min, config.count_max + 1))
    width, height = float(config.output_width), float(config.output_height)
    placements = []
    for _ in range(n):
        asset = assets[int(rng.integers(0, len(assets)))]
        scale = float(rng.uniform(config.scale_min, config.scale_max))
        jitter = float(rng.uniform(config.aspect_jitter_min, config.aspect_jitter_max))
        tw, th = _target_size(config, scale, jitter)
        if config.require_center_inside:
            cx = float(rng.uniform(0.0, width))
            cy = float(rng.uniform(0.0, height))
        else:
            cx = float(rng.uniform(-tw / 2.0, width + tw / 2.0))
            cy = float(rng.uniform(-th / 2.0, height + th / 2.0))
        mode = config.blend_modes[int(rng.integers(0, len(config.blend_modes)))]
        angle = float(rng.uniform(0.0, 180.0)) if mode == "motion" else None
        placements.append(Placement(asset.key, scale, jitter, cx, cy, mode, angle))
    return placements


def _motion_kernel(length: int, angle_deg: float) -> np.ndarray:
    size = length if length % 2 == 1 else length + 1
    kernel = np.zeros((size, size), dtype=np.float32)
    c = (size - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    dx, dy = np.cos(theta), np.sin(theta)
    for t in np.linspace(-c, c, 2 * size + 1):
        x = int(round(c + t * dx))
        y = int(round(c + t * dy))
        kernel[y, x] = 1.0
    return kernel / kernel.sum()


def _soften_alpha(hard: np.ndarray, placement: Placement, config: SynthConfig) -> np.ndarray:
    """Soft alpha in [0, 1]; only the boundary band of the hard mask changes."""
    hardf = hard.astype(np.float32)
    mode = placement.blend_mode
    if mode == "naive":
        return hardf
    if mode == "gaussian":
        if config.gaussian_sigma <= 0:
            return hardf
        return np.clip(cv2.GaussianBlur(hardf, (0, 0), config.gaussian_sigma), 0.0, 1.0)
    if mode == "box":
        k = config.box_kernel
        if k <= 1:
            return hardf
        return np.clip(cv2.blur(hardf, (k, k)), 0.0, 1.0)
    if mode == "motion":
        angle = placement.motion_angle if placement.motion_angle is not None else 0.0
        kernel = _motion_kernel(config.motion_length, angle)
        return np.clip(cv2.filter2D(hardf, -1, kernel, borderType=cv2.BORDER_REFLECT101), 0.0, 1.0)
    raise ConfigError(f"unknown blend mode {mode!r}")


def _paste(
    image: np.ndarray,
    asset: ForegroundAsset,
    placement: Placement,
    config: SynthConfig,
) -> tuple[tuple[int, int], np.ndarray]:
    """Composite one placement in place.

    Returns the canvas offset of the pasted patch and the patch's clipped
    opaque (hard) mask, which defines the annotation footprint.
    """
    tw, th = _target_size(config, placement.scale, placement.aspect_jitter)
    scaled = cv2.resize(asset.rgba, (tw, th), interpolation=cv2.INTER_LINEAR)
    hard = scaled[..., 3] >= OPAQUE_THRESHOLD

    height, width = image.shape[:2]
    x0 = int(round(placement.center_x - tw / 2.0))
    y0 = int(round(placement.center_y - th / 2.0))
    sx0, sy0 = max(0, x0), max(0, y0)
    sx1, sy1 = min(width, x0 + tw), min(height, y0 + th)
    if sx0 >= sx1 or sy0 >= sy1:
        return (sy0, sx0), np.zeros((0, 0), dtype=bool)

    px0, py0 = sx0 - x0, sy0 - y0
    patch = scaled[py0 : py0 + (sy1 - sy0), px0 : px0 + (sx1 - sx0)]
    hard_clip = hard[py0 : py0 + (sy1 - sy0), px0 : px0 + (sx1 - sx0)]
    alpha = _soften_alpha(hard, placement, config)[
        py0 : py0 + (sy1 - sy0), px0 : px0 + (sx1 - sx0)
    ]

    region = image[sy0:sy1, sx0:sx1]
    if placement.blend_mode == "naive":
        region[hard_clip] = patch[..., :3][hard_clip]
    else:
        a = alpha[..., None]
        blended = a * patch[..., :3].astype(np.float32) + (1.0 - a) * region.astype(np.float32)
        region[:] = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    return (sy0, sx0), hard_clip


def blend(
    background: np.ndarray,
    asset: ForegroundAsset,
    placement: Placement,
    config: SynthConfig | None = None,
) -> np.ndarray:
    """Composite one asset onto a copy of the background."""
    config = config or SynthConfig()
    out = np.asarray(background, dtype=np.uint8).copy()
    _paste(out, asset, placement, config)
    return out


def compose_scene(
    config: SynthConfig,
    assets: list[ForegroundAsset],
    background: np.ndarray,
    rng_seed: int,
    background_id: str = "",
) -> SynthScene:
    """Paste sampled placements in order; later placements occlude earlier ones.

    Annotation boxes are the tight boxes of each placement's own opaque
    footprint clipped to the canvas (occlusion does not shrink them);
    ``visible_fraction`` records how much of that footprint survives the
    paste order, and annotations below the configured fraction are dropped.
    """
    config.validate()
    placements = sample_placements(config, assets, rng_seed)
    by_key = {a.key: a for a in assets}

    canvas = np.asarray(background, dtype=np.uint8)
    if canvas.shape[:2] != (config.output_height, config.output_width):
        canvas = cv2.resize(
            canvas, (config.output_width, config.output_height), interpolation=cv2.INTER_AREA
        )
    image = canvas.copy()
    owner = np.full(image.shape[:2], -1, dtype=np.int32)

    footprints = []
    for idx, placement in enumerate(placements):
        (oy, ox), hard = _paste(image, by_key[placement.asset_ref], placement, config)
        if hard.size and hard.any():
            owner[oy : oy + hard.shape[0], ox : ox + hard.shape[1]][hard] = idx
            ys, xs = np.nonzero(hard)
            box = BoundingBox(
                float(ox + xs.min()),
                float(oy + ys.min()),
                float(ox + xs.max() + 1),
                float(oy + ys.max() + 1),
            )
            footprints.append((idx, placement, box, int(hard.sum())))

    visible_counts = np.bincount(owner[owner >= 0].ravel(), minlength=len(placements))
    annotations = []
    for idx, placement, box, total in footprints:
        fraction = float(visible_counts[idx]) / total
        if fraction < config.min_visible_fraction or fraction <= 0.0:
            continue
        annotations.append((placement.asset_ref[0], box, fraction))
    return SynthScene(image, annotations, rng_seed, background_id, placements)


def scene_seeds(master_seed: int, count: int) -> list[int]:
    """Per-scene child seeds derived from the master seed."""
    return [int(s) for s in np.random.SeedSequence(master_seed).generate_state(count, np.uint64)]


def _render_scene(
    index: int,
    seed: int,
    config: SynthConfig,
    assets: list[ForegroundAsset],
    backgrounds: list[Path],
    scenes_dir: Path,
) -> dict:
    rng = np.random.default_rng(seed)
    bg_index = int(rng.integers(0, len(backgrounds)))
    inner_seed = int(rng.integers(0, 2**63))
    background_id = backgrounds[bg_index].stem
    scene = compose_scene(config, assets, load_rgb(backgrounds[bg_index]), inner_seed, background_id)
    scene_id = f"scene_{index:05d}"
    file_name = f"{scene_id}.png"
    save_rgb_png(scenes_dir / file_name, scene.image)
    return {
        "scene_id": scene_id,
        "file": file_name,
        "seed": seed,
        "background_id": background_id,
        "annotations": scene.annotations,
    }


def generate_dataset(
    config: SynthConfig,
    assets: list[ForegroundAsset],
    backgrounds: list[Path],
    count: int,
    out_dir: str | Path,
    master_seed: int = 0,
    workers: int = 1,
) -> dict:
    """Write ``count`` scenes, one annotation file, and a per-scene manifest.

    Returns the manifest: master seed plus (scene id, seed, background id)
    per scene. Reruns with the same (config, master_seed) are byte-identical.
    """
    config.validate()
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    if not backgrounds:
        raise ConfigError("no background images")
    out_dir = Path(out_dir)
    scenes_dir = out_dir / "scenes"
    try:
        scenes_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {scenes_dir}: {exc}") from exc

    seeds = scene_seeds(master_seed, count)
    jobs = [(i, seeds[i]) for i in range(count)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    lambda job: _render_scene(job[0], job[1], config, assets, backgrounds, scenes_dir),
                    jobs,
                )
            )
    else:
        results = [_render_scene(i, s, config, assets, backgrounds, scenes_dir) for i, s in jobs]

    records = AnnotationSet()
    records.instances = [
        InstanceRecord(iid, iid) for iid in sorted({a.instance_id for a in assets})
    ]
    for res in results:
        records.images.append(
            ImageRecord(
                res["scene_id"], res["file"], config.output_width, config.output_height, "easy"
            )
        )
        for instance_id, box, fraction in res["annotations"]:
            records.annotations.append(
                AnnotationRecord(res["scene_id"], instance_id, box, round(fraction, 6))
            )
    write_annotations(out_dir / "annotations.json", records)

    manifest = {
        "master_seed": master_seed,
        "count": count,
        "scenes": [
            {"scene_id": r["scene_id"], "seed": r["seed"], "background_id": r["background_id"]}
            for r in results
        ],
    }
    with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for row in manifest["scenes"]:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest

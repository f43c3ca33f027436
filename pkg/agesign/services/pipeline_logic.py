# services/pipeline_logic.py
"""Полная цепочка для кадра: углы → предобработка → окружность → глиф → MLP."""
import asyncio
import logging
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, Field

from agesign.database.models import CorpusManifest, Split
from agesign.errors import EmptySplitError, VisionStageError
from agesign.services.circle_detect_logic import (
    Circle,
    EdgePointSet,
    HoughParams,
    PointSource,
    ce_fit,
    cht_unknown_radius,
    default_hough_params,
    object_edge_points,
    points_from_mask,
)
from agesign.services.classify_logic import (
    Detection,
    FeatureVector,
    MlpModel,
    SignClass,
    binarize_badge,
    classify,
    extract_features,
    glyph_crop,
)
from agesign.services.preprocess_logic import EdgeParams, PreprocessStages, default_min_area, preprocess_crop
from agesign.services.raster_logic import (
    ColorImage,
    Corner,
    CropRegion,
    GrayImage,
    crop,
    corner_regions,
    load_pnm,
    replicate_gray,
    to_grayscale,
)
from agesign.services.synth_logic import text_mask
from agesign.utils.logger import log_corner_conflict

logger = logging.getLogger(__name__)

OUTLINE_COLOR = (0, 255, 0)
CROSSHAIR_COLOR = (255, 0, 0)
LABEL_COLOR = (255, 255, 0)
CROSSHAIR_HALF = 6
LABEL_HEIGHT = 14


class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    detector: Literal["cht", "ce"] = "ce"
    corner_fraction_w: float = Field(0.25, gt=0, le=1)
    corner_fraction_h: float = Field(0.25, gt=0, le=1)
    edge: EdgeParams = EdgeParams(min_magnitude=50)
    # None: диапазон радиусов от размера вырезки
    hough: Optional[HoughParams] = None
    # точки для CE; CHT голосует краевыми пикселями объекта
    point_source: PointSource = "boundary"
    model_path: str = "model.bin"
    reject_threshold: float = Field(0.5, ge=0, le=1)
    sampling_period: float = Field(4.0, gt=0)
    sign_duration: float = Field(10.0, gt=0)
    min_area_fraction: float = Field(0.005, gt=0, lt=1)


@dataclass(frozen=True)
class CornerAnalysis:
    """Окружность (в координатах вырезки) и признаки глифа одного угла."""
    circle: Circle
    features: FeatureVector
    detect_elapsed: float


@dataclass(frozen=True)
class FrameResult:
    left: Detection
    right: Detection
    decision: Detection

    @property
    def detections(self) -> Tuple[Detection, Detection]:
        return self.left, self.right


def find_circle(gray: GrayImage, cfg: PipelineConfig,
                stages: Optional[PreprocessStages] = None) -> Circle:
    """Предобработка и выбранный детектор; ошибки этапов не перехватываются."""
    min_area = default_min_area(gray.width, gray.height, cfg.min_area_fraction)
    stages = preprocess_crop(gray, cfg.edge, min_area, stages)
    candidate = stages.candidate
    if cfg.detector == "ce":
        if cfg.point_source == "boundary":
            points = EdgePointSet.from_points(candidate.boundary)
        else:
            points = points_from_mask(candidate.mask, cfg.point_source)
        return ce_fit(points).circle
    hough = cfg.hough or default_hough_params(gray.width, gray.height)
    return cht_unknown_radius(object_edge_points(stages.edges, candidate.mask), hough, gray.width, gray.height)


def analyze_corner(gray: GrayImage, cfg: PipelineConfig,
                   stages: Optional[PreprocessStages] = None) -> CornerAnalysis:
    started = time.perf_counter()
    circle = find_circle(gray, cfg, stages)
    detect_elapsed = time.perf_counter() - started
    features = extract_features(glyph_crop(binarize_badge(gray, circle), circle))
    return CornerAnalysis(circle=circle, features=features, detect_elapsed=detect_elapsed)


def detect_corner(gray: GrayImage, region: CropRegion, cfg: PipelineConfig, model: MlpModel,
                  stages: Optional[PreprocessStages] = None) -> Detection:
    """Детекция в одной угловой вырезке; ошибки зрения дают N/C."""
    started = time.perf_counter()
    try:
        analysis = analyze_corner(gray, cfg, stages)
    except VisionStageError as e:
        elapsed = time.perf_counter() - started
        logger.debug(f"🔍 Угол {region.corner.value if region.corner else '?'}: N/C ({type(e).__name__}: {e})")
        return Detection(label=SignClass.NC, corner=region.corner, elapsed=elapsed, detect_elapsed=elapsed)

    label, activations = classify(model, analysis.features, cfg.reject_threshold)
    return Detection(
        label=label,
        circle=analysis.circle.shifted(region.x, region.y),
        corner=region.corner,
        activations=tuple(float(a) for a in activations),
        elapsed=time.perf_counter() - started,
        detect_elapsed=analysis.detect_elapsed,
    )


def decide_frame(left: Detection, right: Detection) -> Detection:
    """Кадр считается знаком, только если ровно один угол не N/C."""
    signs = [d for d in (left, right) if d.label is not SignClass.NC]
    elapsed = left.elapsed + right.elapsed
    if len(signs) == 1:
        return signs[0].model_copy(update={"elapsed": elapsed})
    if len(signs) == 2:
        log_corner_conflict(left, right)
    return Detection(label=SignClass.NC, elapsed=elapsed,
                     detect_elapsed=left.detect_elapsed + right.detect_elapsed)


def process_frame(frame: ColorImage, cfg: PipelineConfig, model: MlpModel,
                  debug: Optional[Dict[Corner, PreprocessStages]] = None) -> FrameResult:
    """Оба угла обрабатываются независимо; debug, если передан, получает этапы по углам."""
    gray = to_grayscale(frame)
    detections = []
    for region in corner_regions(frame.width, frame.height, cfg.corner_fraction_w, cfg.corner_fraction_h):
        corner_gray = crop(gray, region)
        stages = None
        if debug is not None:
            stages = debug.setdefault(region.corner, PreprocessStages(gray=corner_gray))
        detections.append(detect_corner(corner_gray, region, cfg, model, stages))
    left, right = detections
    return FrameResult(left=left, right=right, decision=decide_frame(left, right))


async def load_frame(path: str) -> ColorImage:
    image = await load_pnm(path)
    if isinstance(image, GrayImage):
        return replicate_gray(image)
    return image


# ==== Обучающая выборка ====

async def build_training_set(
    manifest: CorpusManifest,
    split: Split,
    cfg: PipelineConfig,
) -> List[Tuple[FeatureVector, np.ndarray]]:
    """Признаки из угла со знаком для кадров со знаком, из обоих углов для N/C.

    Углы, где цепочка не дошла до признаков, пропускаются.
    """
    records = manifest.select(split)
    if not records:
        raise EmptySplitError(f"В корпусе нет кадров выборки {split}")

    dataset: List[Tuple[FeatureVector, np.ndarray]] = []
    skipped = 0
    for record in records:
        frame = await load_frame(os.path.join(manifest.root, record.path))
        samples = await asyncio.to_thread(frame_samples, frame, record.label, record.corner, cfg)
        if not samples:
            skipped += 1
        dataset.extend(samples)

    logger.info(f"📚 Выборка {split}: {len(dataset)} примеров из {len(records)} кадров, пропущено {skipped}")
    return dataset


def frame_samples(frame: ColorImage, label: SignClass, corner: Optional[Corner],
                  cfg: PipelineConfig) -> List[Tuple[FeatureVector, np.ndarray]]:
    """Размеченные признаки одного кадра: угол знака или оба угла для N/C."""
    gray = to_grayscale(frame)
    samples = []
    for region in corner_regions(frame.width, frame.height, cfg.corner_fraction_w, cfg.corner_fraction_h):
        if label is not SignClass.NC and region.corner is not corner:
            continue
        try:
            analysis = analyze_corner(crop(gray, region), cfg)
        except VisionStageError as e:
            logger.debug(f"🔍 {label.value} ({region.corner.value}): угол пропущен, {type(e).__name__}")
            continue
        samples.append((analysis.features, label.one_hot()))
    return samples


# ==== Аннотация ====

def annotate_output(frame: ColorImage, detection: Detection) -> ColorImage:
    """Контур окружности, перекрестие в центре и метка класса штриховыми глифами."""
    if detection.label is SignClass.NC or detection.circle is None:
        return ColorImage(frame.pixels)

    circle = detection.circle
    pixels = np.array(frame.pixels)
    height, width = pixels.shape[:2]

    # контур: пиксели на расстоянии r0 ± 0.5 от центра
    x_lo, x_hi = max(0, int(np.floor(circle.a0 - circle.r0 - 1))), min(width, int(np.ceil(circle.a0 + circle.r0 + 2)))
    y_lo, y_hi = max(0, int(np.floor(circle.b0 - circle.r0 - 1))), min(height, int(np.ceil(circle.b0 + circle.r0 + 2)))
    if x_lo < x_hi and y_lo < y_hi:
        ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
        ring = np.abs(np.hypot(xs - circle.a0, ys - circle.b0) - circle.r0) <= 0.5
        pixels[y_lo:y_hi, x_lo:x_hi][ring] = OUTLINE_COLOR

    image = Image.fromarray(pixels)
    draw = ImageDraw.Draw(image)
    cx, cy = int(round(circle.a0)), int(round(circle.b0))
    draw.line([(cx - CROSSHAIR_HALF, cy), (cx + CROSSHAIR_HALF, cy)], fill=CROSSHAIR_COLOR, width=1)
    draw.line([(cx, cy - CROSSHAIR_HALF), (cx, cy + CROSSHAIR_HALF)], fill=CROSSHAIR_COLOR, width=1)
    pixels = np.array(image)

    label = text_mask(detection.label.value, LABEL_HEIGHT)
    label_h, label_w = label.shape
    # справа от окружности, а если не помещается, то слева
    x0 = int(np.ceil(circle.a0 + circle.r0)) + 4
    if x0 + label_w > width:
        x0 = int(np.floor(circle.a0 - circle.r0)) - 4 - label_w
    y0 = max(0, int(np.floor(circle.b0 - circle.r0)))
    x0 = min(max(0, x0), max(0, width - label_w))
    window = pixels[y0:y0 + label_h, x0:x0 + label_w]
    window[label[:window.shape[0], :window.shape[1]]] = LABEL_COLOR
    return ColorImage(pixels)

# services/preprocess_logic.py
"""Предобработка угловой вырезки: Собель, порог, заливка, разметка, выбор объекта."""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from agesign.errors import EmptyMaskError, ImageTooSmallError, NoCandidateError
from agesign.services.raster_logic import BinaryImage, GrayImage

logger = logging.getLogger(__name__)

SOBEL_X = np.array([[-1, 0, 1],
                    [-2, 0, 2],
                    [-1, 0, 1]], dtype=np.int32)
SOBEL_Y = SOBEL_X.T.copy()

# Фон заливаем по 4-связности, объекты размечаем по 8-связности
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)
EIGHT_CONNECTED = ndimage.generate_binary_structure(2, 2)


class EdgeParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    threshold_fraction: float = Field(0.2, gt=0, le=1)
    # абсолютный нижний порог модуля градиента
    min_magnitude: int = Field(0, ge=0, le=255)


@dataclass(frozen=True)
class LabeledComponents:
    labels: np.ndarray
    areas: Dict[int, int]
    count: int


@dataclass(frozen=True)
class CandidateObject:
    mask: BinaryImage
    area: int
    # (x_min, y_min, x_max, y_max) включительно
    bbox: Tuple[int, int, int, int]
    boundary: List[Tuple[int, int]]


@dataclass
class PreprocessStages:
    """Промежуточные результаты для отладочного дампа."""
    gray: GrayImage
    magnitude: Optional[GrayImage] = None
    edges: Optional[BinaryImage] = None
    filled: Optional[BinaryImage] = None
    components: Optional[LabeledComponents] = None
    candidate: Optional[CandidateObject] = None

    def images(self) -> Dict[str, object]:
        """Посчитанные этапы по именам, в порядке конвейера."""
        stages = (
            ("gray", self.gray),
            ("sobel", self.magnitude),
            ("edges", self.edges),
            ("filled", self.filled),
            ("object", self.candidate.mask if self.candidate else None),
        )
        return {name: value for name, value in stages if value is not None}


def _correlate3(pixels: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Корреляция 3x3 во внутренней области; рамка в 1 пиксель остаётся нулевой."""
    h, w = pixels.shape
    out = np.zeros((h, w), dtype=np.int32)
    for (dy, dx), weight in np.ndenumerate(kernel):
        if weight:
            out[1:-1, 1:-1] += int(weight) * pixels[dy:h - 2 + dy, dx:w - 2 + dx]
    return out


def sobel_magnitude(img: GrayImage) -> GrayImage:
    if img.width < 3 or img.height < 3:
        raise ImageTooSmallError(f"Собель требует минимум 3x3, получено {img.width}x{img.height}")
    pixels = img.pixels.astype(np.int32)
    gx = _correlate3(pixels, SOBEL_X)
    gy = _correlate3(pixels, SOBEL_Y)
    magnitude = np.minimum(255.0, np.rint(np.hypot(gx, gy)))
    return GrayImage(magnitude.astype(np.uint8))


def threshold_edges(mag: GrayImage, params: EdgeParams) -> BinaryImage:
    peak = int(mag.pixels.max())
    if peak == 0:
        return BinaryImage(np.zeros(mag.pixels.shape, dtype=bool))
    threshold = max(params.threshold_fraction * peak, params.min_magnitude)
    return BinaryImage(mag.pixels >= threshold)


def fill_holes(edges: BinaryImage) -> BinaryImage:
    """Все фоновые пиксели, недостижимые от рамки по 4-связности, становятся объектом."""
    background = ~edges.pixels
    labels, _ = ndimage.label(background, structure=FOUR_CONNECTED)
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    holes = background & ~np.isin(labels, border[border > 0])
    return BinaryImage(edges.pixels | holes)


def label_components(filled: BinaryImage) -> LabeledComponents:
    labels, count = ndimage.label(filled.pixels, structure=EIGHT_CONNECTED)
    counts = np.bincount(labels.ravel(), minlength=count + 1)
    areas = dict(enumerate(counts[1:].tolist(), start=1))
    labels.setflags(write=False)
    return LabeledComponents(labels=labels, areas=areas, count=int(count))


def largest_object(components: LabeledComponents, min_area: int) -> CandidateObject:
    if components.count == 0:
        raise NoCandidateError("В вырезке нет ни одного объекта")
    areas = np.fromiter(components.areas.values(), dtype=np.int64, count=components.count)
    # argmax возвращает первый максимум, то есть наименьшую метку
    best = int(np.argmax(areas)) + 1
    area = int(areas[best - 1])
    if area < min_area:
        raise NoCandidateError(f"Наибольший объект {area} px меньше порога {min_area} px")

    mask = BinaryImage(components.labels == best)
    ys, xs = np.nonzero(mask.pixels)
    bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
    return CandidateObject(mask=mask, area=area, bbox=bbox, boundary=boundary_of(mask))


def boundary_of(mask: BinaryImage) -> List[Tuple[int, int]]:
    """Пиксели объекта с фоновым 4-соседом или на рамке, в порядке строк."""
    if mask.count == 0:
        raise EmptyMaskError("Пустая маска не имеет границы")
    interior = ndimage.binary_erosion(mask.pixels, structure=FOUR_CONNECTED, border_value=0)
    rows, cols = np.nonzero(mask.pixels & ~interior)
    return [(int(x), int(y)) for y, x in zip(rows, cols)]


def default_min_area(width: int, height: int, fraction: float = 0.005) -> int:
    return max(1, int(round(fraction * width * height)))


def preprocess_crop(
    gray: GrayImage,
    params: EdgeParams,
    min_area: int,
    stages: Optional[PreprocessStages] = None,
) -> PreprocessStages:
    """Собель → порог → заливка → разметка → наибольший объект.

    Если передан stages, он заполняется по ходу работы, так что после
    NoCandidateError у вызывающего остаются уже посчитанные этапы.
    """
    if stages is None:
        stages = PreprocessStages(gray=gray)
    stages.magnitude = sobel_magnitude(gray)
    stages.edges = threshold_edges(stages.magnitude, params)
    stages.filled = fill_holes(stages.edges)
    stages.components = label_components(stages.filled)
    stages.candidate = largest_object(stages.components, min_area)
    return stages

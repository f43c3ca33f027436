# services/circle_detect_logic.py
"""Два детектора окружности: преобразование Хафа (CHT) и МНК-оценка (CE).

CHT голосует в аккумуляторе (a, b) или (r, b, a), CE решает систему 3x3
нормальных уравнений для ошибки E = Σ[(x−a0)² + (y−b0)² − r0²]².
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from skimage.draw import circle_perimeter

from agesign.errors import (
    EmptyPointSetError,
    EmptyRadiusRangeError,
    NegativeRadicandError,
    SingularSystemError,
)
from agesign.services.preprocess_logic import boundary_of
from agesign.services.raster_logic import BinaryImage

logger = logging.getLogger(__name__)

MIN_SIGN_RADIUS = 8
PIVOT_TOLERANCE = 1e-9

PointSource = Literal["boundary", "filled"]


class Circle(BaseModel):
    model_config = ConfigDict(frozen=True)

    a0: float
    b0: float
    r0: float = Field(gt=0)

    def shifted(self, dx: float, dy: float) -> "Circle":
        return Circle(a0=self.a0 + dx, b0=self.b0 + dy, r0=self.r0)


class HoughParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    r_min: int = Field(MIN_SIGN_RADIUS, gt=0)
    r_max: int = Field(72, gt=0)
    r_step: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_range(self):
        if self.r_min > self.r_max:
            raise ValueError(f"r_min={self.r_min} больше r_max={self.r_max}")
        return self

    @property
    def radii(self) -> np.ndarray:
        return np.arange(self.r_min, self.r_max + 1, self.r_step)


class FitReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    circle: Circle
    residual: float = Field(ge=0)
    z: float


@dataclass(frozen=True, eq=False)
class EdgePointSet:
    """Точки (x, y); дубликаты отбрасываются с сохранением порядка."""
    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(points) == 0:
            raise EmptyPointSetError("Пустой набор точек")
        _, first = np.unique(points, axis=0, return_index=True)
        points = points[np.sort(first)]
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> "EdgePointSet":
        return cls(np.array(list(points), dtype=np.float64))

    @property
    def n(self) -> int:
        return int(len(self.points))

    @property
    def xs(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.points[:, 1]


def points_from_mask(mask: BinaryImage, source: PointSource = "boundary") -> EdgePointSet:
    """Точки для детектора: граница объекта или все его пиксели."""
    if source == "boundary":
        return EdgePointSet.from_points(boundary_of(mask))
    rows, cols = np.nonzero(mask.pixels)
    if len(rows) == 0:
        raise EmptyPointSetError("Пустая маска")
    return EdgePointSet(np.column_stack([cols, rows]))


def object_edge_points(edges: BinaryImage, mask: BinaryImage) -> EdgePointSet:
    """Краевые пиксели Собеля внутри выбранного объекта: геометрическое пространство CHT."""
    rows, cols = np.nonzero(edges.pixels & mask.pixels)
    if len(rows) == 0:
        raise EmptyPointSetError("В объекте нет краевых пикселей")
    return EdgePointSet(np.column_stack([cols, rows]))


def default_hough_params(crop_width: int, crop_height: int) -> HoughParams:
    r_max = min(crop_width, crop_height) // 2
    if r_max < MIN_SIGN_RADIUS:
        raise EmptyRadiusRangeError(
            f"Вырезка {crop_width}x{crop_height} слишком мала для радиусов от {MIN_SIGN_RADIUS}"
        )
    return HoughParams(r_min=MIN_SIGN_RADIUS, r_max=r_max)


# ==== CHT ====

def _perimeter_offsets(radius: int) -> Tuple[np.ndarray, np.ndarray]:
    """Смещения (dx, dy) растровой окружности по алгоритму средней точки."""
    rr, cc = circle_perimeter(0, 0, int(radius))
    offsets = np.unique(np.column_stack([cc, rr]), axis=0)
    return offsets[:, 0], offsets[:, 1]


def _vote_slice(xs: np.ndarray, ys: np.ndarray, radius: int, acc_width: int, acc_height: int) -> np.ndarray:
    dx, dy = _perimeter_offsets(radius)
    a = (xs[:, None] + dx[None, :]).ravel()
    b = (ys[:, None] + dy[None, :]).ravel()
    inside = (a >= 0) & (a < acc_width) & (b >= 0) & (b < acc_height)
    votes = np.bincount(b[inside] * acc_width + a[inside], minlength=acc_width * acc_height)
    return votes.reshape(acc_height, acc_width).astype(np.int32)


def hough_accumulator(points: EdgePointSet, radii: Sequence[int], acc_width: int, acc_height: int) -> np.ndarray:
    """Объём голосов формы (len(radii), acc_height, acc_width)."""
    xs = np.rint(points.xs).astype(np.int64)
    ys = np.rint(points.ys).astype(np.int64)
    volume = np.zeros((len(radii), acc_height, acc_width), dtype=np.int32)
    # срезы по радиусу независимы, порядок суммирования внутри среза фиксирован
    for index, radius in enumerate(radii):
        volume[index] = _vote_slice(xs, ys, int(radius), acc_width, acc_height)
    return volume


def cht_known_radius(points: EdgePointSet, r: int, acc_width: int, acc_height: int) -> Circle:
    if points is None or points.n == 0:
        raise EmptyPointSetError("Пустой набор точек")
    if r <= 0:
        raise ValueError(f"Радиус должен быть положительным, получено {r}")
    acc = hough_accumulator(points, [r], acc_width, acc_height)[0]
    # плоский argmax даёт наименьшую пару (b, a) среди максимумов
    b, a = np.unravel_index(int(np.argmax(acc)), acc.shape)
    return Circle(a0=float(a), b0=float(b), r0=float(r))


def cht_unknown_radius(points: EdgePointSet, params: HoughParams, acc_width: int, acc_height: int) -> Circle:
    if points is None or points.n == 0:
        raise EmptyPointSetError("Пустой набор точек")
    radii = params.radii
    if len(radii) == 0:
        raise EmptyRadiusRangeError("Пустой диапазон радиусов")
    volume = hough_accumulator(points, radii, acc_width, acc_height)
    index, b, a = np.unravel_index(int(np.argmax(volume)), volume.shape)
    circle = Circle(a0=float(a), b0=float(b), r0=float(radii[index]))
    logger.debug(f"⭕ CHT: {circle} ({int(volume[index, b, a])} голосов, {len(radii)} радиусов)")
    return circle


# ==== CE ====

def circle_error(points: np.ndarray, a0: float, b0: float, r0: float) -> float:
    """Функция ошибки E для набора точек (n, 2)."""
    points = np.asarray(points, dtype=np.float64)
    residuals = (points[:, 0] - a0) ** 2 + (points[:, 1] - b0) ** 2 - r0 ** 2
    return float(np.sum(residuals ** 2))


def ce_fit(points: EdgePointSet) -> FitReport:
    if points is None or points.n == 0:
        raise EmptyPointSetError("Пустой набор точек")
    if points.n < 3:
        raise SingularSystemError(f"Для оценки окружности нужно минимум 3 точки, получено {points.n}")

    # моменты считаем от среднего, чтобы суммы кубов не теряли точность
    mx, my = float(points.xs.mean()), float(points.ys.mean())
    x = points.xs - mx
    y = points.ys - my
    n = float(points.n)

    sx, sy = x.sum(), y.sum()
    sxx, sxy, syy = (x * x).sum(), (x * y).sum(), (y * y).sum()
    matrix = np.array([
        [2 * sxx, 2 * sxy, -sx],
        [2 * sxy, 2 * syy, -sy],
        [2 * sx, 2 * sy, -n],
    ])
    rhs = np.array([
        (x ** 3 + x * y ** 2).sum(),
        (x ** 2 * y + y ** 3).sum(),
        (x ** 2 + y ** 2).sum(),
    ])

    scale = float(np.abs(matrix).max())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(matrix, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if scale == 0.0 or pivots.min() < PIVOT_TOLERANCE * scale:
        raise SingularSystemError("Система вырождена: точки на одной прямой")

    ac, bc, zc = lu_solve((lu, piv), rhs, check_finite=False)
    radicand = ac ** 2 + bc ** 2 - zc
    if not radicand > 0:
        raise NegativeRadicandError(f"a0² + b0² − z = {radicand:.3g} ≤ 0")

    r0 = float(np.sqrt(radicand))
    a0, b0 = float(ac + mx), float(bc + my)
    residual = circle_error(np.column_stack([x, y]), ac, bc, r0)
    z = a0 ** 2 + b0 ** 2 - r0 ** 2
    return FitReport(circle=Circle(a0=a0, b0=b0, r0=r0), residual=residual, z=z)


def centroid_note(points: EdgePointSet) -> Tuple[float, float]:
    """Центр тяжести набора: к нему сводится CE на залитом объекте."""
    if points is None or points.n == 0:
        raise EmptyPointSetError("Пустой набор точек")
    return float(points.xs.mean()), float(points.ys.mean())

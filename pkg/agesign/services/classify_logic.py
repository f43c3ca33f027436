# services/classify_logic.py
"""Классификация знака: вырезка глифа, построчные признаки и MLP 80 → 15 → 4."""
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import aiofiles
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit
from skimage.filters import threshold_otsu
from skimage.morphology import skeletonize

from agesign.errors import (
    BadMagicError,
    DegenerateCircleError,
    EmptyDatasetError,
    ModelFormatError,
    NonFiniteLossError,
    ShapeMismatchError,
    TruncatedModelError,
)
from agesign.services.circle_detect_logic import Circle
from agesign.services.raster_logic import BinaryImage, Corner, GrayImage

logger = logging.getLogger(__name__)

GLYPH_ROWS = 80
GLYPH_COLS = 40
HIDDEN_CELLS = 15
MODEL_SIZES = (GLYPH_ROWS, HIDDEN_CELLS, 4)
MIN_GLYPH_RADIUS = 4.0
# Окно цифры: круг GLYPH_REACH·r0 в полосе |x − a0| ≤ r0/2, кольцо и малые «1», «+» в него не входят
GLYPH_REACH = 0.78
# рамка цифры занимает столько строк вырезки
GLYPH_SPAN_ROWS = 48
SPAN_TOLERANCE = 0.25
MIN_GLYPH_CONTRAST = 48.0

MODEL_MAGIC = b"AGESIGN-MLP"
MODEL_VERSION = 1
_HEADER = struct.Struct("<11sHIII")


class SignClass(str, Enum):
    AGE_7 = "7+"
    AGE_13 = "13+"
    AGE_18 = "18+"
    NC = "N/C"

    @property
    def index(self) -> int:
        return list(SignClass).index(self)

    @property
    def tag(self) -> str:
        return {"7+": "7plus", "13+": "13plus", "18+": "18plus", "N/C": "NC"}[self.value]

    @classmethod
    def from_index(cls, index: int) -> "SignClass":
        return list(cls)[index]

    @classmethod
    def signs(cls) -> Tuple["SignClass", ...]:
        return cls.AGE_7, cls.AGE_13, cls.AGE_18

    def one_hot(self) -> np.ndarray:
        target = np.zeros(len(SignClass))
        target[self.index] = 1.0
        return target


@dataclass(frozen=True, eq=False)
class FeatureVector:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).ravel()
        if counts.shape != (GLYPH_ROWS,):
            raise ValueError(f"Вектор признаков должен иметь длину {GLYPH_ROWS}, получено {counts.shape}")
        if counts.min() < 0 or counts.max() > GLYPH_COLS:
            raise ValueError(f"Признаки должны лежать в [0, {GLYPH_COLS}]")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        return isinstance(other, FeatureVector) and np.array_equal(self.counts, other.counts)

    def scaled(self) -> np.ndarray:
        return self.counts / float(GLYPH_COLS)


@dataclass(frozen=True)
class GlyphCrop:
    mask: BinaryImage
    polarity_inverted: bool = False

    def __post_init__(self):
        if (self.mask.height, self.mask.width) != (GLYPH_ROWS, GLYPH_COLS):
            raise ValueError(f"Вырезка глифа должна быть {GLYPH_ROWS}x{GLYPH_COLS}")


@dataclass(frozen=True, eq=False)
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("w1", "b1", "w2", "b2"):
            value = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if not np.all(np.isfinite(value)):
                raise ValueError(f"Веса {name} содержат нечисловые значения")
            value.setflags(write=False)
            arrays[name] = value
        hidden, inputs = arrays["w1"].shape
        outputs = arrays["w2"].shape[0]
        if arrays["b1"].shape != (hidden,) or arrays["w2"].shape != (outputs, hidden) or arrays["b2"].shape != (outputs,):
            raise ValueError("Несогласованные размеры слоёв MLP")
        for name, value in arrays.items():
            object.__setattr__(self, name, value)

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return int(self.w1.shape[1]), int(self.w1.shape[0]), int(self.w2.shape[0])

    def __eq__(self, other):
        return isinstance(other, MlpModel) and all(
            np.array_equal(getattr(self, name), getattr(other, name)) for name in ("w1", "b1", "w2", "b2")
        )


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.5, gt=0)
    max_epochs: int = Field(5000, ge=1)
    target_mse: float = Field(0.01, gt=0)
    # останов требует ещё верной метки у всех примеров при этом пороге; 0 отключает
    fit_threshold: float = Field(0.5, ge=0, le=1)
    rng_seed: int = 0
    init_range: float = Field(0.5, gt=0)


class Detection(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: SignClass
    circle: Optional[Circle] = None
    corner: Optional[Corner] = None
    activations: Tuple[float, ...] = ()
    elapsed: float = Field(0.0, ge=0)
    # предобработка + поиск окружности, без классификации
    detect_elapsed: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def check_label(self):
        if self.activations and self.label is not SignClass.NC:
            if SignClass.from_index(int(np.argmax(self.activations))) is not self.label:
                raise ValueError("Метка не совпадает с argmax выходов сети")
        return self


# ==== Вырезка глифа ====

def _in_window(dx, dy, r0: float) -> np.ndarray:
    return (dx ** 2 + dy ** 2 <= (GLYPH_REACH * r0) ** 2) & (np.abs(dx) <= r0 / 2)


def glyph_window(height: int, width: int, circle: Circle) -> np.ndarray:
    """Маска окна цифры на изображении height x width."""
    ys, xs = np.ogrid[0:height, 0:width]
    return _in_window(xs - circle.a0, ys - circle.b0, circle.r0)


def binarize_badge(gray: GrayImage, circle: Circle) -> BinaryImage:
    """Порог Оцу по пикселям окна цифры; светлые пиксели True.

    Если в окне нет двух различимых уровней (сплошной диск, только шум),
    возвращается пустая маска.
    """
    empty = BinaryImage(np.zeros(gray.pixels.shape, dtype=bool))
    values = gray.pixels[glyph_window(gray.height, gray.width, circle)]
    if values.size == 0 or values.min() == values.max():
        return empty
    threshold = threshold_otsu(values)
    dark, light = values[values <= threshold], values[values > threshold]
    if dark.size == 0 or light.size == 0 or light.mean() - dark.mean() < MIN_GLYPH_CONTRAST:
        logger.debug(f"🔲 В окне цифры нет контраста (порог {threshold:.1f})")
        return empty
    return BinaryImage(gray.pixels > threshold)


def normalize_polarity(crop: BinaryImage) -> Tuple[BinaryImage, bool]:
    """Если левый столбец в основном белый, фон светлый и маска инвертируется."""
    left = crop.pixels[:, 0]
    if np.count_nonzero(left) * 2 > left.size:
        return BinaryImage(~crop.pixels), True
    return crop, False


def thin(mask: BinaryImage) -> BinaryImage:
    # копия: пиксели BinaryImage только для чтения
    return BinaryImage(skeletonize(np.array(mask.pixels), method="zhang"))


def _registration(marks: np.ndarray, circle: Circle) -> Tuple[float, float, float]:
    """Центр выборки (x, y) в координатах, где пиксель p занимает [p, p + 1), и шаг.

    Рамка цифры растягивается на GLYPH_SPAN_ROWS строк; если цифры нет или
    её высота не согласуется с r0, вырезка строится по окружности.
    """
    fallback = (circle.a0 + 0.5, circle.b0 + 0.5, circle.r0 / GLYPH_COLS)
    rows = np.flatnonzero(marks.any(axis=1))
    if rows.size == 0:
        return fallback
    cols = np.flatnonzero(marks.any(axis=0))
    step = (rows[-1] - rows[0] + 1) / GLYPH_SPAN_ROWS
    if abs(step * GLYPH_COLS - circle.r0) > SPAN_TOLERANCE * circle.r0:
        return fallback
    return (cols[0] + cols[-1] + 1) / 2, (rows[0] + rows[-1] + 1) / 2, float(step)


def glyph_crop(mask: BinaryImage, circle: Circle) -> GlyphCrop:
    """Вырезка 80x40 вокруг цифры, нормализация полярности и утончение.

    Окно 80x40 соответствует прямоугольнику 2r0 x r0. Выборка за пределами
    маски даёт нули, всё вне окна цифры заполняется цветом фона диска.
    """
    if circle.r0 < MIN_GLYPH_RADIUS:
        raise DegenerateCircleError(f"Радиус {circle.r0:.1f} px слишком мал для вырезки глифа")
    if not (0 <= circle.a0 < mask.width and 0 <= circle.b0 < mask.height):
        raise DegenerateCircleError("Центр окружности вне изображения")

    window = glyph_window(mask.height, mask.width, circle)
    inside = mask.pixels[window]
    majority = bool(np.count_nonzero(inside) * 2 > inside.size)
    marks = window & (mask.pixels != majority)
    base_x, base_y, step = _registration(marks, circle)

    us = base_x + (np.arange(GLYPH_COLS) - (GLYPH_COLS - 1) / 2) * step
    vs = base_y + (np.arange(GLYPH_ROWS) - (GLYPH_ROWS - 1) / 2) * step
    cols, rows = np.floor(us).astype(np.intp), np.floor(vs).astype(np.intp)
    valid = ((rows >= 0) & (rows < mask.height))[:, None] & ((cols >= 0) & (cols < mask.width))[None, :]
    picked = mask.pixels[np.clip(rows, 0, mask.height - 1)[:, None], np.clip(cols, 0, mask.width - 1)[None, :]]

    in_window = _in_window(us[None, :] - 0.5 - circle.a0, vs[:, None] - 0.5 - circle.b0, circle.r0)
    filled = np.where(in_window, picked & valid, majority)
    normalized, inverted = normalize_polarity(BinaryImage(filled))
    return GlyphCrop(mask=thin(normalized), polarity_inverted=inverted)


def extract_features(crop: GlyphCrop) -> FeatureVector:
    """Число чёрных пикселей слева от первого белого в каждой строке."""
    pixels = crop.mask.pixels
    first_white = np.argmax(pixels, axis=1)
    return FeatureVector(np.where(pixels.any(axis=1), first_white, GLYPH_COLS))


# ==== MLP ====

def neuron(x: Sequence[float], w: Sequence[float], b: float) -> float:
    """Выход одной ячейки: y = f(Σ wᵢxᵢ + b), f: логистическая функция."""
    return float(expit(np.dot(np.asarray(w, dtype=np.float64), np.asarray(x, dtype=np.float64)) + b))


def init_model(sizes: Sequence[int] = MODEL_SIZES, rng: Optional[np.random.Generator] = None,
               init_range: float = 0.5) -> MlpModel:
    rng = rng if rng is not None else np.random.default_rng(0)
    inputs, hidden, outputs = sizes
    return MlpModel(
        w1=rng.uniform(-init_range, init_range, (hidden, inputs)),
        b1=rng.uniform(-init_range, init_range, hidden),
        w2=rng.uniform(-init_range, init_range, (outputs, hidden)),
        b2=rng.uniform(-init_range, init_range, outputs),
    )


def forward_batch(model: MlpModel, inputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Скрытый слой и выходы для матрицы входов (N, n_in)."""
    hidden = expit(inputs @ model.w1.T + model.b1)
    outputs = expit(hidden @ model.w2.T + model.b2)
    return hidden, outputs


def mlp_forward(model: MlpModel, x: FeatureVector) -> np.ndarray:
    _, outputs = forward_batch(model, x.scaled()[None, :])
    return outputs[0]


def mse_loss(model: MlpModel, inputs: np.ndarray, targets: np.ndarray) -> float:
    _, outputs = forward_batch(model, inputs)
    return float(np.mean((outputs - targets) ** 2))


def mlp_gradients(model: MlpModel, inputs: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, ...]:
    """Градиенты mse_loss по (w1, b1, w2, b2) обратным распространением."""
    hidden, outputs = forward_batch(model, inputs)
    d_out = 2.0 * (outputs - targets) / outputs.size
    d_z2 = d_out * outputs * (1.0 - outputs)
    grad_w2 = d_z2.T @ hidden
    grad_b2 = d_z2.sum(axis=0)
    d_z1 = (d_z2 @ model.w2) * hidden * (1.0 - hidden)
    grad_w1 = d_z1.T @ inputs
    grad_b1 = d_z1.sum(axis=0)
    return grad_w1, grad_b1, grad_w2, grad_b2


def fits_all(outputs: np.ndarray, targets: np.ndarray, threshold: float) -> bool:
    """Все примеры получают свою метку по правилу decide_label; последний выход означает отказ."""
    if threshold <= 0:
        return True
    predicted = np.argmax(outputs, axis=1)
    predicted[outputs.max(axis=1) < threshold] = outputs.shape[1] - 1
    return bool(np.all(predicted == np.argmax(targets, axis=1)))


def train_arrays(inputs: np.ndarray, targets: np.ndarray, cfg: TrainConfig,
                 sizes: Optional[Sequence[int]] = None) -> Tuple[MlpModel, List[float]]:
    """Полнопакетный градиентный спуск по MSE до target_mse (и fit_threshold) или max_epochs."""
    if len(inputs) == 0:
        raise EmptyDatasetError("Пустая обучающая выборка")
    sizes = sizes or (inputs.shape[1], HIDDEN_CELLS, targets.shape[1])
    model = init_model(sizes, np.random.default_rng(cfg.rng_seed), cfg.init_range)
    w1, b1, w2, b2 = (np.array(p) for p in (model.w1, model.b1, model.w2, model.b2))

    def snapshot(epoch) -> MlpModel:
        if not all(np.all(np.isfinite(p)) for p in (w1, b1, w2, b2)):
            raise NonFiniteLossError(f"Веса разошлись на эпохе {epoch}")
        return MlpModel(w1, b1, w2, b2)

    curve: List[float] = []
    for epoch in range(cfg.max_epochs):
        current = snapshot(epoch)
        _, outputs = forward_batch(current, inputs)
        mse = float(np.mean((outputs - targets) ** 2))
        if not np.isfinite(mse):
            raise NonFiniteLossError(f"MSE разошлась на эпохе {epoch}")
        curve.append(mse)
        if mse <= cfg.target_mse and fits_all(outputs, targets, cfg.fit_threshold):
            break
        grad_w1, grad_b1, grad_w2, grad_b2 = mlp_gradients(current, inputs, targets)
        w1 -= cfg.learning_rate * grad_w1
        b1 -= cfg.learning_rate * grad_b1
        w2 -= cfg.learning_rate * grad_w2
        b2 -= cfg.learning_rate * grad_b2
    else:
        # последняя итерация обновила веса, фиксируем итоговую ошибку
        current = snapshot(cfg.max_epochs)
        mse = mse_loss(current, inputs, targets)
        if not np.isfinite(mse):
            raise NonFiniteLossError("MSE разошлась после последней эпохи")
        curve.append(mse)

    logger.debug(f"🧠 Обучение: {len(curve)} точек кривой, итоговая MSE {curve[-1]:.5f}")
    return current, curve


def mlp_train(dataset: Sequence[Tuple[FeatureVector, np.ndarray]], cfg: TrainConfig) -> Tuple[MlpModel, List[float]]:
    if not dataset:
        raise EmptyDatasetError("Пустая обучающая выборка")
    inputs = np.stack([features.scaled() for features, _ in dataset])
    targets = np.stack([np.asarray(target, dtype=np.float64) for _, target in dataset])
    if targets.shape[1] != len(SignClass) or not np.all(np.isin(targets, (0.0, 1.0))) \
            or not np.all(targets.sum(axis=1) == 1.0):
        raise ValueError("Цели должны быть one-hot по четырём классам")
    return train_arrays(inputs, targets, cfg, MODEL_SIZES)


def decide_label(activations: Sequence[float], reject_threshold: float = 0.5) -> SignClass:
    activations = np.asarray(activations, dtype=np.float64)
    if activations.max() < reject_threshold:
        return SignClass.NC
    return SignClass.from_index(int(np.argmax(activations)))


def classify(model: MlpModel, x: FeatureVector, reject_threshold: float = 0.5) -> Tuple[SignClass, np.ndarray]:
    activations = mlp_forward(model, x)
    return decide_label(activations, reject_threshold), activations


# ==== Файл модели ====

def save_model(model: MlpModel) -> bytes:
    inputs, hidden, outputs = model.sizes
    header = _HEADER.pack(MODEL_MAGIC, MODEL_VERSION, inputs, hidden, outputs)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in (model.w1, model.b1, model.w2, model.b2))
    return header + body


def load_model(data: bytes, expected_sizes: Optional[Sequence[int]] = MODEL_SIZES) -> MlpModel:
    if len(data) < len(MODEL_MAGIC):
        raise TruncatedModelError("Файл модели короче сигнатуры")
    if data[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise BadMagicError("Неверная сигнатура файла модели")
    if len(data) < _HEADER.size:
        raise TruncatedModelError("Заголовок файла модели обрезан")
    _, version, inputs, hidden, outputs = _HEADER.unpack_from(data)
    if version != MODEL_VERSION:
        raise ModelFormatError(f"Неизвестная версия формата модели {version}")
    if expected_sizes is not None and (inputs, hidden, outputs) != tuple(expected_sizes):
        raise ShapeMismatchError(f"Модель {inputs}→{hidden}→{outputs}, ожидалась {'→'.join(map(str, expected_sizes))}")

    shapes = [(hidden, inputs), (hidden,), (outputs, hidden), (outputs,)]
    needed = sum(int(np.prod(shape)) for shape in shapes) * 8
    body = data[_HEADER.size:]
    if len(body) < needed:
        raise TruncatedModelError(f"Ожидалось {needed} байт весов, получено {len(body)}")

    arrays, offset = [], 0
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape))
        offset += count * 8
    return MlpModel(*arrays)


async def save_model_file(path, model: MlpModel) -> None:
    async with aiofiles.open(path, "wb") as f:
        await f.write(save_model(model))


async def load_model_file(path, expected_sizes: Optional[Sequence[int]] = MODEL_SIZES) -> MlpModel:
    async with aiofiles.open(path, "rb") as f:
        data = await f.read()
    return load_model(data, expected_sizes)

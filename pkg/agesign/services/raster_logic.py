# services/raster_logic.py
"""Растровые контейнеры, перевод в оттенки серого, вырезка углов и PGM/PPM.

Координаты везде: строки сверху вниз, начало в левом верхнем углу,
x: столбец, y: строка.
"""
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import aiofiles
import numpy as np

from agesign.errors import (
    MalformedHeaderError,
    RegionOutOfBoundsError,
    TruncatedPayloadError,
    UnsupportedFormatError,
    UnsupportedMaxvalError,
    ZeroSizeRegionError,
)

logger = logging.getLogger(__name__)

# BT.601
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    data = np.array(array, dtype=dtype, copy=True, order="C")
    data.setflags(write=False)
    return data


@dataclass(frozen=True, eq=False)
class _Raster:
    pixels: np.ndarray

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def __eq__(self, other):
        return type(self) is type(other) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((type(self).__name__, self.pixels.shape, self.pixels.tobytes()))


@dataclass(frozen=True, eq=False)
class ColorImage(_Raster):
    """RGB, uint8, форма (height, width, 3)"""

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError(f"ColorImage ожидает форму (h, w, 3), получено {pixels.shape}")
        object.__setattr__(self, "pixels", _frozen(pixels, np.uint8))


@dataclass(frozen=True, eq=False)
class GrayImage(_Raster):
    """Яркость, uint8, форма (height, width)"""

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2 or pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError(f"GrayImage ожидает форму (h, w), получено {pixels.shape}")
        object.__setattr__(self, "pixels", _frozen(pixels, np.uint8))


@dataclass(frozen=True, eq=False)
class BinaryImage(_Raster):
    """True: передний план (белый)"""

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2 or pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError(f"BinaryImage ожидает форму (h, w), получено {pixels.shape}")
        object.__setattr__(self, "pixels", _frozen(pixels, bool))

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.pixels))


Image = Union[ColorImage, GrayImage, BinaryImage]


class Corner(str, Enum):
    UPPER_LEFT = "upper-left"
    UPPER_RIGHT = "upper-right"


@dataclass(frozen=True)
class CropRegion:
    x: int
    y: int
    width: int
    height: int
    corner: Optional[Corner] = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ZeroSizeRegionError(f"Пустая область {self.width}x{self.height}")
        if self.corner is not None and self.y != 0:
            raise ValueError("Угловая область должна начинаться с верхней строки кадра")
        if self.corner is Corner.UPPER_LEFT and self.x != 0:
            raise ValueError("Левая угловая область должна начинаться с x = 0")

    def validate_for(self, width: int, height: int) -> None:
        """Проверяет, что область целиком внутри кадра и метка угла согласована."""
        if self.x < 0 or self.y < 0 or self.x + self.width > width or self.y + self.height > height:
            raise RegionOutOfBoundsError(
                f"Область {self.width}x{self.height} в ({self.x}, {self.y}) вне кадра {width}x{height}"
            )
        if self.corner is Corner.UPPER_RIGHT and self.x + self.width != width:
            raise RegionOutOfBoundsError("Правая угловая область должна доходить до правого края кадра")

    def compose(self, inner: "CropRegion") -> "CropRegion":
        """Область inner (в координатах этой вырезки) в координатах родителя."""
        if inner.x < 0 or inner.y < 0 or inner.x + inner.width > self.width or inner.y + inner.height > self.height:
            raise RegionOutOfBoundsError("Вложенная область выходит за пределы внешней")
        return CropRegion(self.x + inner.x, self.y + inner.y, inner.width, inner.height)


def to_grayscale(img: ColorImage) -> GrayImage:
    luma = np.rint(img.pixels.astype(np.float64) @ LUMA_WEIGHTS)
    return GrayImage(np.clip(luma, 0, 255).astype(np.uint8))


def replicate_gray(img: GrayImage) -> ColorImage:
    return ColorImage(np.repeat(img.pixels[:, :, None], 3, axis=2))


def crop(img: Image, region: CropRegion) -> Image:
    region.validate_for(img.width, img.height)
    sub = img.pixels[region.y:region.y + region.height, region.x:region.x + region.width]
    return type(img)(sub)


def corner_regions(
    frame_width: int,
    frame_height: int,
    fraction_w: float = 0.25,
    fraction_h: float = 0.25,
) -> Tuple[CropRegion, CropRegion]:
    """Левая и правая верхние области размера ⌊fraction·W⌋ × ⌊fraction·H⌋."""
    if not (0 < fraction_w <= 1 and 0 < fraction_h <= 1):
        raise ZeroSizeRegionError(f"Доли вырезки должны быть в (0, 1], получено {fraction_w}, {fraction_h}")
    width = int(np.floor(fraction_w * frame_width))
    height = int(np.floor(fraction_h * frame_height))
    if width < 1 or height < 1:
        raise ZeroSizeRegionError(f"Угловая область {width}x{height} пуста")
    left = CropRegion(0, 0, width, height, Corner.UPPER_LEFT)
    right = CropRegion(frame_width - width, 0, width, height, Corner.UPPER_RIGHT)
    return left, right


# ==== PGM / PPM ====

_TOKEN = re.compile(rb"\S+")


def _next_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    """Следующий токен заголовка, пропуская пробелы и комментарии '#'."""
    while pos < len(data):
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        else:
            match = _TOKEN.match(data, pos)
            return match.group(0), match.end()
    raise MalformedHeaderError("Заголовок PNM оборвался")


def read_pnm(data: bytes) -> Union[ColorImage, GrayImage]:
    """Бинарные P5 (серый) и P6 (цвет) с maxval 255."""
    magic, pos = _next_token(data, 0)
    if magic not in (b"P5", b"P6"):
        if re.fullmatch(rb"P[1-7]", magic):
            raise UnsupportedFormatError(f"Формат {magic.decode()} не поддерживается")
        raise MalformedHeaderError(f"Неизвестная сигнатура {magic[:8]!r}")

    fields = []
    for _ in range(3):
        token, pos = _next_token(data, pos)
        if not token.isdigit():
            raise MalformedHeaderError(f"Ожидалось число в заголовке, получено {token[:16]!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"Недопустимый размер {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"Поддерживается только maxval 255, получено {maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MalformedHeaderError("После maxval должен идти один пробельный символ")
    pos += 1

    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise TruncatedPayloadError(f"Ожидалось {expected} байт данных, получено {len(payload)}")

    pixels = np.frombuffer(payload, dtype=np.uint8)
    if channels == 3:
        return ColorImage(pixels.reshape(height, width, 3))
    return GrayImage(pixels.reshape(height, width))


def write_pnm(img: Union[ColorImage, GrayImage, BinaryImage]) -> bytes:
    if isinstance(img, ColorImage):
        magic, pixels = b"P6", img.pixels
    elif isinstance(img, BinaryImage):
        # бинарные маски сохраняем как серые 0/255
        magic, pixels = b"P5", img.pixels.astype(np.uint8) * 255
    else:
        magic, pixels = b"P5", img.pixels
    header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


async def load_pnm(path) -> Union[ColorImage, GrayImage]:
    async with aiofiles.open(path, "rb") as f:
        data = await f.read()
    return read_pnm(data)


async def save_pnm(path, img) -> None:
    async with aiofiles.open(path, "wb") as f:
        await f.write(write_pnm(img))

# services/synth_logic.py
"""Синтетический корпус: знаки 7+/13+/18+ в кадрах 720x576 и расписания вещания.

Все случайные величины кадра выводятся из (seed, index), поэтому корпус
целиком определяется своими параметрами.
"""
import asyncio
import logging
import os
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, Field, model_validator

from agesign.database.models import CorpusManifest, ManifestRecord, ScheduleRecord
from agesign.database.queries import MANIFEST_NAME, SCHEDULE_NAME, save_manifest, save_schedule
from agesign.errors import BadgeOutOfCornerError, BadgeTooSmallError, CorpusIOError, InvalidCountsError
from agesign.services.circle_detect_logic import Circle
from agesign.services.classify_logic import GLYPH_COLS, GLYPH_ROWS, SignClass, glyph_window, thin
from agesign.services.raster_logic import BinaryImage, ColorImage, Corner, corner_regions, save_pnm
from agesign.utils.logger import log_corpus_written

logger = logging.getLogger(__name__)

FRAME_WIDTH = 720
FRAME_HEIGHT = 576
MIN_BADGE_RADIUS = 12
# зазор между знаком и краем угловой области
CORNER_MARGIN = 6
REFERENCE_RADIUS = 40

WHITE = (240, 240, 240)
CLASS_COLORS = {
    SignClass.AGE_7: (30, 130, 50),
    SignClass.AGE_13: (200, 90, 0),
    SignClass.AGE_18: (200, 30, 30),
}
BACKGROUNDS = ("flat", "gradient", "seeded-noise", "checker")
POLARITIES = ("positive", "negative")
CORNERS = (Corner.UPPER_LEFT, Corner.UPPER_RIGHT)

Background = Literal["flat", "gradient", "seeded-noise", "checker"]
Polarity = Literal["positive", "negative"]

# Штриховые глифы в единичном квадрате: u вправо, v вниз
GLYPH_STROKES: Dict[str, List[List[Tuple[float, float]]]] = {
    "7": [[(0.0, 0.0), (1.0, 0.0), (0.35, 1.0)]],
    "3": [[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)], [(0.25, 0.5), (1.0, 0.5)]],
    "8": [[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)], [(0.0, 0.5), (1.0, 0.5)]],
    "1": [[(0.2, 0.2), (0.6, 0.0), (0.6, 1.0)]],
    "+": [[(0.0, 0.5), (1.0, 0.5)], [(0.5, 0.15), (0.5, 0.85)]],
}
BIG_GLYPH = {SignClass.AGE_7: "7", SignClass.AGE_13: "3", SignClass.AGE_18: "8"}
LEADING_GLYPH = {SignClass.AGE_13: "1", SignClass.AGE_18: "1"}


class BadgeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: SignClass
    radius: float = Field(gt=0)
    # центр в координатах угловой области
    center: Tuple[float, float]
    polarity: Polarity = "positive"
    ring_thickness: Optional[int] = Field(None, ge=1)
    stroke_width: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def check_label(self):
        if self.label is SignClass.NC:
            raise ValueError("У знака должна быть возрастная метка")
        return self

    @property
    def ring(self) -> int:
        return self.ring_thickness or max(3, int(round(0.08 * self.radius)))

    @property
    def stroke(self) -> int:
        return self.stroke_width or max(2, int(round(0.1 * self.radius)))

    @property
    def small_stroke(self) -> int:
        return max(2, int(round(0.07 * self.radius)))


class DistractorSpec(BaseModel):
    """Круг без цифр или квадрат в рамке для кадров N/C."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["ring", "square"]
    radius: float = Field(ge=MIN_BADGE_RADIUS)
    center: Tuple[float, float]
    color: Tuple[int, int, int] = CLASS_COLORS[SignClass.AGE_7]


class FrameSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int = FRAME_WIDTH
    height: int = FRAME_HEIGHT
    background: Background = "flat"
    base_level: float = Field(165.0, ge=140, le=190)
    badge: Optional[BadgeSpec] = None
    distractor: Optional[DistractorSpec] = None
    corner: Optional[Corner] = None
    noise_sigma: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def check_frame(self):
        if (self.width, self.height) != (FRAME_WIDTH, FRAME_HEIGHT):
            raise ValueError(f"Кадр вещания должен быть {FRAME_WIDTH}x{FRAME_HEIGHT}")
        if self.badge is not None and self.distractor is not None:
            raise ValueError("В кадре либо знак, либо отвлекающая фигура")
        if (self.badge is not None or self.distractor is not None) and self.corner is None:
            raise ValueError("Для знака нужен угол")
        return self


class FrameTruth(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: SignClass
    # в координатах кадра
    circle: Optional[Circle] = None
    corner: Optional[Corner] = None
    kind: Literal["sign", "ring", "square", "empty"] = "empty"


class PlannedFrame(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    split: Literal["train", "eval"]
    kind: Literal["sign", "ring", "square", "empty"]
    spec: FrameSpec


class ScheduledFrame(BaseModel):
    model_config = ConfigDict(frozen=True)

    timestamp: float = Field(ge=0)
    spec: FrameSpec
    truth: FrameTruth


# ==== Глифы ====

def draw_glyph(draw: ImageDraw.ImageDraw, char: str, x0: float, y0: float, width: float, height: float,
               stroke: int, fill) -> None:
    for polyline in GLYPH_STROKES[char]:
        points = [(x0 + u * width, y0 + v * height) for u, v in polyline]
        draw.line(points, fill=fill, width=stroke, joint="curve")


def text_mask(text: str, height: int, stroke: int = 2) -> np.ndarray:
    """Маска строки из штриховых глифов; неизвестные символы пропускаются."""
    chars = [c for c in text if c in GLYPH_STROKES]
    glyph_w = max(2, int(round(0.6 * height)))
    gap = max(1, int(round(0.25 * height)))
    pad = stroke
    width = max(1, len(chars) * (glyph_w + gap) - gap + 2 * pad)
    canvas = Image.new("L", (width, height + 2 * pad), 0)
    draw = ImageDraw.Draw(canvas)
    for i, char in enumerate(chars):
        draw_glyph(draw, char, pad + i * (glyph_w + gap), pad, glyph_w, height, stroke, 255)
    return np.asarray(canvas) > 0


def _glyph_layer(spec: BadgeSpec, width: int, height: int) -> np.ndarray:
    cx, cy = spec.center
    r = spec.radius
    canvas = Image.new("L", (width, height), 0)
    draw = ImageDraw.Draw(canvas)
    draw_glyph(draw, BIG_GLYPH[spec.label], cx - 0.35 * r, cy - 0.55 * r, 0.7 * r, 1.1 * r, spec.stroke, 255)
    small_w, small_h = 0.2 * r, 0.36 * r
    if spec.label in LEADING_GLYPH:
        draw_glyph(draw, LEADING_GLYPH[spec.label], cx - 0.82 * r, cy - small_h / 2, small_w, small_h,
                   spec.small_stroke, 255)
    draw_glyph(draw, "+", cx + 0.62 * r, cy - small_h / 2, small_w, small_h, spec.small_stroke, 255)
    return np.asarray(canvas) > 0


def _paint_badge(spec: BadgeSpec, width: int, height: int) -> Tuple[np.ndarray, np.ndarray]:
    """Диск знака и его белые пиксели (кольцо и цифры или их дополнение)."""
    cx, cy = spec.center
    ys, xs = np.mgrid[0:height, 0:width]
    distance = np.hypot(xs - cx, ys - cy)
    disc = distance <= spec.radius
    inner = distance <= spec.radius - spec.ring
    marks = (disc & ~inner) | (_glyph_layer(spec, width, height) & inner)
    white = marks if spec.polarity == "positive" else disc & ~marks
    return disc, white


def _check_fits(center: Tuple[float, float], radius: float, width: int, height: int) -> None:
    cx, cy = center
    if cx - radius < 0 or cy - radius < 0 or cx + radius > width - 1 or cy + radius > height - 1:
        raise BadgeOutOfCornerError(
            f"Фигура радиуса {radius:.1f} с центром ({cx:.1f}, {cy:.1f}) не помещается в {width}x{height}"
        )


def badge_layers(spec: BadgeSpec, width: int, height: int) -> Tuple[np.ndarray, np.ndarray]:
    if spec.radius < MIN_BADGE_RADIUS:
        raise BadgeTooSmallError(f"Радиус {spec.radius:.1f} меньше {MIN_BADGE_RADIUS}")
    _check_fits(spec.center, spec.radius, width, height)
    return _paint_badge(spec, width, height)


def render_badge(spec: BadgeSpec, canvas: Tuple[int, int] = (180, 144)) -> Tuple[BinaryImage, Circle]:
    """Белые пиксели знака на холсте canvas = (ширина, высота) и его окружность."""
    _, white = badge_layers(spec, *canvas)
    return BinaryImage(white), Circle(a0=spec.center[0], b0=spec.center[1], r0=spec.radius)


def render_reference_glyph(label: SignClass) -> BinaryImage:
    """Эталонная вырезка 80x40: окно цифры позитивного знака радиуса 40, утончённое.

    При этом радиусе рамка цифры как раз занимает GLYPH_SPAN_ROWS строк.
    """
    circle = Circle(a0=(GLYPH_COLS - 1) / 2, b0=(GLYPH_ROWS - 1) / 2, r0=REFERENCE_RADIUS)
    spec = BadgeSpec(label=label, radius=REFERENCE_RADIUS, center=(circle.a0, circle.b0))
    _, white = _paint_badge(spec, GLYPH_COLS, GLYPH_ROWS)
    return thin(BinaryImage(white & glyph_window(GLYPH_ROWS, GLYPH_COLS, circle)))


# ==== Кадр ====

def _background(spec: FrameSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.height, spec.width
    base = spec.base_level + rng.uniform(-8, 8, 3)
    pixels = np.broadcast_to(base, (h, w, 3)).astype(np.float64)
    if spec.background == "gradient":
        pixels = pixels + np.linspace(-15, 15, w)[None, :, None]
    elif spec.background == "seeded-noise":
        blocks = rng.uniform(-4, 4, (-(-h // 8), -(-w // 8)))
        pixels = pixels + np.kron(blocks, np.ones((8, 8)))[:h, :w, None]
    elif spec.background == "checker":
        ys, xs = np.mgrid[0:h, 0:w]
        pixels = pixels + (((ys // 16 + xs // 16) % 2) * 8.0 - 4.0)[:, :, None]
    return pixels


def _paint_distractor(spec: DistractorSpec, width: int, height: int) -> Tuple[np.ndarray, np.ndarray]:
    cx, cy = spec.center
    thickness = max(3, int(round(0.08 * spec.radius)))
    ys, xs = np.mgrid[0:height, 0:width]
    if spec.kind == "ring":
        distance = np.hypot(xs - cx, ys - cy)
        shape = distance <= spec.radius
        frame = shape & (distance > spec.radius - thickness)
    else:
        reach = np.maximum(np.abs(xs - cx), np.abs(ys - cy))
        shape = reach <= spec.radius
        frame = shape & (reach > spec.radius - thickness)
    return shape, frame


def render_frame(spec: FrameSpec) -> Tuple[ColorImage, FrameTruth]:
    rng = np.random.default_rng(spec.seed)
    pixels = _background(spec, rng)

    if spec.badge is not None or spec.distractor is not None:
        left, right = corner_regions(spec.width, spec.height)
        region = left if spec.corner is Corner.UPPER_LEFT else right
        sub = pixels[region.y:region.y + region.height, region.x:region.x + region.width]
        if spec.badge is not None:
            shape, white = badge_layers(spec.badge, region.width, region.height)
            color = CLASS_COLORS[spec.badge.label]
        else:
            _check_fits(spec.distractor.center, spec.distractor.radius, region.width, region.height)
            shape, white = _paint_distractor(spec.distractor, region.width, region.height)
            color = spec.distractor.color
        sub[shape] = color
        sub[white] = WHITE

    if spec.noise_sigma > 0:
        pixels = pixels + rng.normal(0.0, spec.noise_sigma, pixels.shape)
    return ColorImage(np.clip(np.rint(pixels), 0, 255).astype(np.uint8)), frame_truth(spec)


# ==== Корпус ====

def _corner_size() -> Tuple[int, int]:
    left, _ = corner_regions(FRAME_WIDTH, FRAME_HEIGHT)
    return left.width, left.height


def _check_radius_range(radius_range: Tuple[float, float]) -> None:
    lo, hi = radius_range
    if lo < MIN_BADGE_RADIUS:
        raise BadgeTooSmallError(f"Минимальный радиус {lo} меньше {MIN_BADGE_RADIUS}")
    width, height = _corner_size()
    if hi < lo or hi + CORNER_MARGIN > min(width, height) / 2:
        raise BadgeOutOfCornerError(f"Диапазон радиусов {radius_range} не помещается в угол {width}x{height}")


def _place(rng: np.random.Generator, radius: float) -> Tuple[float, float]:
    width, height = _corner_size()
    margin = radius + CORNER_MARGIN
    return float(rng.uniform(margin, width - margin)), float(rng.uniform(margin, height - margin))


def _frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def plan_corpus(
    train_counts: Sequence[int] = (18, 18, 18),
    eval_counts: Sequence[int] = (43, 27, 41),
    train_negatives: int = 18,
    eval_negatives: int = 18,
    radius_range: Tuple[float, float] = (24, 48),
    noise_levels: Sequence[float] = (0, 4, 8),
    seed: int = 0,
) -> List[PlannedFrame]:
    """План корпуса без рендеринга: полярность, угол и фон чередуются, радиус стратифицирован."""
    for counts in (train_counts, eval_counts):
        if len(counts) != 3 or min(counts) < 1:
            raise InvalidCountsError(f"Нужно по крайней мере по одному кадру каждого класса, получено {counts}")
    if train_negatives < 0 or eval_negatives < 0:
        raise InvalidCountsError("Число негативных кадров не может быть отрицательным")
    if not noise_levels:
        raise InvalidCountsError("Пустой список уровней шума")
    _check_radius_range(radius_range)
    lo, hi = radius_range

    plan: List[PlannedFrame] = []
    index = 0
    for split, counts, negatives in (("train", train_counts, train_negatives),
                                     ("eval", eval_counts, eval_negatives)):
        for label, count in zip(SignClass.signs(), counts):
            for i in range(count):
                rng = _frame_rng(seed, index)
                radius = lo + (hi - lo) * (i + rng.uniform()) / count
                badge = BadgeSpec(label=label, radius=radius, center=_place(rng, radius),
                                  polarity=POLARITIES[i % 2])
                spec = FrameSpec(
                    background=BACKGROUNDS[(i + i // 4) % len(BACKGROUNDS)],
                    base_level=rng.uniform(150, 180),
                    badge=badge,
                    corner=CORNERS[(i // 2) % 2],
                    noise_sigma=noise_levels[i % len(noise_levels)],
                    seed=int(rng.integers(0, 2 ** 31 - 1)),
                )
                plan.append(PlannedFrame(index=index, split=split, kind="sign", spec=spec))
                index += 1

        for j in range(negatives):
            rng = _frame_rng(seed, index)
            kind = ("ring", "square", "empty")[j % 3]
            distractor = None
            if kind != "empty":
                radius = float(rng.uniform(lo, hi))
                color = CLASS_COLORS[SignClass.signs()[int(rng.integers(3))]]
                distractor = DistractorSpec(kind=kind, radius=radius, center=_place(rng, radius), color=color)
            spec = FrameSpec(
                background=BACKGROUNDS[j % len(BACKGROUNDS)],
                base_level=rng.uniform(150, 180),
                distractor=distractor,
                corner=CORNERS[j % 2] if distractor else None,
                noise_sigma=noise_levels[j % len(noise_levels)],
                seed=int(rng.integers(0, 2 ** 31 - 1)),
            )
            plan.append(PlannedFrame(index=index, split=split, kind=kind, spec=spec))
            index += 1
    return plan


def manifest_record(planned: PlannedFrame, truth: FrameTruth, path: str) -> ManifestRecord:
    circle = truth.circle
    badge = planned.spec.badge
    return ManifestRecord(
        path=path,
        label=truth.label,
        a0=circle.a0 if circle else None,
        b0=circle.b0 if circle else None,
        r0=circle.r0 if circle else None,
        corner=truth.corner,
        seed=planned.spec.seed,
        split=planned.split,
        kind=planned.kind,
        polarity=badge.polarity if badge else None,
        background=planned.spec.background,
        noise_sigma=planned.spec.noise_sigma,
    )


async def generate_corpus(out_dir: str, workers: int = 4, **plan_kwargs) -> CorpusManifest:
    """Рендерит план в out_dir/frames/*.ppm и пишет out_dir/manifest.jsonl."""
    plan = plan_corpus(**plan_kwargs)
    try:
        os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)
    except OSError as e:
        raise CorpusIOError(f"Не удалось создать каталог корпуса {out_dir}: {e}") from e

    semaphore = asyncio.Semaphore(max(1, workers))

    async def _write(planned: PlannedFrame) -> ManifestRecord:
        async with semaphore:
            image, truth = await asyncio.to_thread(render_frame, planned.spec)
            path = f"frames/{planned.split}_{planned.index:04d}.ppm"
            try:
                await save_pnm(os.path.join(out_dir, path), image)
            except OSError as e:
                raise CorpusIOError(f"Не удалось записать кадр {path}: {e}") from e
            return manifest_record(planned, truth, path)

    records = await asyncio.gather(*(_write(planned) for planned in plan))
    manifest = CorpusManifest(root=out_dir, records=list(records))
    await save_manifest(manifest)
    log_corpus_written(
        os.path.join(out_dir, MANIFEST_NAME),
        len(manifest.select("train")),
        len(manifest.select("eval")),
    )
    return manifest


# ==== Расписание вещания ====

def build_schedule(
    duration: float = 120.0,
    frame_interval: float = 1.0,
    window_starts: Sequence[float] = (15.0, 50.0, 90.0),
    sign_duration: float = 10.0,
    radius_range: Tuple[float, float] = (28, 44),
    noise_sigma: float = 4.0,
    seed: int = 0,
) -> List[ScheduledFrame]:
    """Кадры через frame_interval; в окнах [start, start + sign_duration) виден знак.

    Кадр внутри окна или паузы не меняется, как статичная плашка в эфире.
    """
    if duration <= 0 or frame_interval <= 0 or sign_duration <= 0:
        raise InvalidCountsError("Длительность, шаг кадров и длительность знака должны быть положительными")
    starts = sorted(window_starts)
    for a, b in zip(starts, starts[1:]):
        if b < a + sign_duration:
            raise InvalidCountsError(f"Окна знаков пересекаются: {a} и {b}")
    if starts and (starts[0] < 0 or starts[-1] + sign_duration > duration):
        raise InvalidCountsError("Окна знаков выходят за пределы расписания")
    _check_radius_range(radius_range)
    lo, hi = radius_range

    window_specs: List[FrameSpec] = []
    for k, _ in enumerate(starts):
        rng = _frame_rng(seed, k)
        radius = float(rng.uniform(lo, hi))
        badge = BadgeSpec(label=SignClass.signs()[k % 3], radius=radius, center=_place(rng, radius),
                          polarity=POLARITIES[k % 2])
        window_specs.append(FrameSpec(
            background=BACKGROUNDS[k % len(BACKGROUNDS)], base_level=rng.uniform(150, 180), badge=badge,
            corner=CORNERS[k % 2], noise_sigma=noise_sigma, seed=int(rng.integers(0, 2 ** 31 - 1)),
        ))
    gap_specs: List[FrameSpec] = []
    for g in range(len(starts) + 1):
        rng = _frame_rng(seed, 1000 + g)
        gap_specs.append(FrameSpec(
            background=BACKGROUNDS[g % len(BACKGROUNDS)], base_level=rng.uniform(150, 180),
            noise_sigma=noise_sigma, seed=int(rng.integers(0, 2 ** 31 - 1)),
        ))

    schedule: List[ScheduledFrame] = []
    for step in range(int(np.ceil(duration / frame_interval))):
        t = step * frame_interval
        if t >= duration:
            break
        started = sum(1 for s in starts if s <= t)
        window = started - 1
        if window >= 0 and t < starts[window] + sign_duration:
            spec = window_specs[window]
        else:
            spec = gap_specs[started]
        schedule.append(ScheduledFrame(timestamp=t, spec=spec, truth=frame_truth(spec)))
    return schedule


def frame_truth(spec: FrameSpec) -> FrameTruth:
    """Разметка кадра без рендеринга пикселей."""
    if spec.badge is None:
        return FrameTruth(label=SignClass.NC, corner=spec.corner,
                           kind=spec.distractor.kind if spec.distractor else "empty")
    left, right = corner_regions(spec.width, spec.height)
    region = left if spec.corner is Corner.UPPER_LEFT else right
    circle = Circle(a0=spec.badge.center[0], b0=spec.badge.center[1], r0=spec.badge.radius)
    return FrameTruth(label=spec.badge.label, circle=circle.shifted(region.x, region.y),
                       corner=spec.corner, kind="sign")


async def write_schedule(out_dir: str, schedule: Sequence[ScheduledFrame]) -> str:
    """Пишет каждый различный кадр один раз и schedule.jsonl со ссылками на них."""
    try:
        os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)
    except OSError as e:
        raise CorpusIOError(f"Не удалось создать каталог {out_dir}: {e}") from e

    paths: Dict[FrameSpec, str] = {}
    records: List[ScheduleRecord] = []
    for entry in schedule:
        if entry.spec not in paths:
            path = f"frames/segment_{len(paths):03d}.ppm"
            image, _ = await asyncio.to_thread(render_frame, entry.spec)
            try:
                await save_pnm(os.path.join(out_dir, path), image)
            except OSError as e:
                raise CorpusIOError(f"Не удалось записать кадр {path}: {e}") from e
            paths[entry.spec] = path
        circle = entry.truth.circle
        records.append(ScheduleRecord(
            timestamp=entry.timestamp,
            path=paths[entry.spec],
            label=entry.truth.label,
            a0=circle.a0 if circle else None,
            b0=circle.b0 if circle else None,
            r0=circle.r0 if circle else None,
            corner=entry.truth.corner,
        ))

    schedule_path = os.path.join(out_dir, SCHEDULE_NAME)
    await save_schedule(schedule_path, records)
    logger.info(f"🗓 Расписание {schedule_path}: {len(records)} отсчётов, {len(paths)} различных кадров")
    return schedule_path

# services/stream_logic.py
"""Имитация приёма вещания: отсчёты t = 0, P, 2P, … и дедлайн обработки P."""
import asyncio
import logging
import time
from dataclasses import dataclass
from typing import List, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from agesign.errors import ScheduleOrderError
from agesign.services.classify_logic import Detection, MlpModel, SignClass
from agesign.services.pipeline_logic import PipelineConfig, load_frame, process_frame
from agesign.services.raster_logic import ColorImage
from agesign.services.synth_logic import FrameSpec, render_frame
from agesign.utils.logger import log_deadline_missed, log_sign_detected

logger = logging.getLogger(__name__)


class StreamEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    timestamp: float = Field(ge=0)
    detection: Detection
    processing_time: float = Field(ge=0)
    deadline_met: bool
    period: float = Field(gt=0)

    @model_validator(mode="after")
    def check_deadline(self):
        if self.deadline_met != (self.processing_time < self.period):
            raise ValueError("deadline_met не соответствует времени обработки")
        return self

    def as_json_line(self) -> dict:
        circle = self.detection.circle
        return {
            "t": self.timestamp,
            "label": self.detection.label.value,
            "a0": circle.a0 if circle else None,
            "b0": circle.b0 if circle else None,
            "r0": circle.r0 if circle else None,
            "corner": self.detection.corner.value if self.detection.corner else None,
            "ms": round(self.processing_time * 1000, 3),
            "deadline_met": self.deadline_met,
        }


@dataclass(frozen=True)
class FileFrame:
    timestamp: float
    path: str

    @property
    def key(self):
        return self.path

    async def load(self) -> ColorImage:
        return await load_frame(self.path)


@dataclass(frozen=True)
class SyntheticFrame:
    timestamp: float
    spec: FrameSpec

    @property
    def key(self):
        return self.spec

    async def load(self) -> ColorImage:
        image, _ = await asyncio.to_thread(render_frame, self.spec)
        return image


FrameSource = Union[FileFrame, SyntheticFrame]


def sample_instants(timestamps: Sequence[float], period: float) -> List[float]:
    """Моменты kP от 0 до последней метки источника включительно."""
    if not timestamps:
        return []
    last = timestamps[-1]
    count = int(last // period) + 1
    return [k * period for k in range(count)]


async def run_stream(
    sources: Sequence[FrameSource],
    cfg: PipelineConfig,
    model: MlpModel,
    realtime: bool = False,
) -> List[StreamEvent]:
    """Каждый отсчёт обрабатывается полностью до взятия следующего.

    Для отсчёта t берётся последний кадр источника с меткой ≤ t. Отсчёты до
    первого кадра пропускаются.
    """
    for previous, current in zip(sources, sources[1:]):
        if current.timestamp < previous.timestamp:
            raise ScheduleOrderError(f"Метки времени убывают: {previous.timestamp} → {current.timestamp}")

    period = cfg.sampling_period
    events: List[StreamEvent] = []
    cached_key, cached_frame = None, None
    position = -1
    clock_start = time.monotonic()

    for instant in sample_instants([s.timestamp for s in sources], period):
        while position + 1 < len(sources) and sources[position + 1].timestamp <= instant:
            position += 1
        if position < 0:
            continue

        if realtime:
            delay = instant - (time.monotonic() - clock_start)
            if delay > 0:
                await asyncio.sleep(delay)

        started = time.perf_counter()
        source = sources[position]
        if source.key != cached_key:
            cached_key, cached_frame = source.key, await source.load()
        result = await asyncio.to_thread(process_frame, cached_frame, cfg, model)
        processing_time = time.perf_counter() - started

        event = StreamEvent(
            timestamp=instant,
            detection=result.decision,
            processing_time=processing_time,
            deadline_met=processing_time < period,
            period=period,
        )
        events.append(event)
        if event.detection.label is not SignClass.NC:
            log_sign_detected(event.detection, instant)
        if not event.deadline_met:
            log_deadline_missed(instant, processing_time, period)

    logger.info(f"📺 Поток: {len(events)} отсчётов, пропущенных дедлайнов {sum(not e.deadline_met for e in events)}")
    return events


def sources_from_schedule(records) -> List[FileFrame]:
    return [FileFrame(timestamp=record.timestamp, path=record.path) for record in records]


def sources_from_synthetic(schedule) -> List[SyntheticFrame]:
    return [SyntheticFrame(timestamp=entry.timestamp, spec=entry.spec) for entry in schedule]

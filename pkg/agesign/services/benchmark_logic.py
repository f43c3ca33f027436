# services/benchmark_logic.py
"""Сравнение CHT и CE на оценочной выборке: время детекции и точность по классам."""
import asyncio
import csv
import io
import logging
import os
from typing import Dict, List, Literal, Sequence

import aiofiles
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from agesign.database.models import CorpusManifest
from agesign.errors import EmptySplitError
from agesign.services.classify_logic import MlpModel, SignClass
from agesign.services.pipeline_logic import FrameResult, PipelineConfig, load_frame, process_frame
from agesign.utils.logger import log_benchmark_done

logger = logging.getLogger(__name__)

CSV_HEADER = ("detector", "class", "n", "mean_s", "std_s", "accuracy_pct")


class BenchmarkRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    detector: Literal["cht", "ce"]
    sign_class: SignClass
    n: int = Field(ge=1)
    mean_s: float = Field(ge=0)
    std_s: float = Field(ge=0)
    accuracy: float = Field(ge=0, le=100)


def summarize(detector: str, label: SignClass, times: Sequence[float], hits: Sequence[bool]) -> BenchmarkRow:
    times = np.asarray(times, dtype=np.float64)
    return BenchmarkRow(
        detector=detector,
        sign_class=label,
        n=len(times),
        mean_s=float(times.mean()),
        std_s=float(times.std()),
        accuracy=100.0 * float(np.count_nonzero(hits)) / len(times),
    )


def frame_detection_time(result: FrameResult) -> float:
    """Предобработка и поиск окружности в обоих углах кадра, без классификации."""
    return float(sum(d.detect_elapsed for d in result.detections))


async def run_benchmark(
    manifest: CorpusManifest,
    model: MlpModel,
    cfg: PipelineConfig,
    detectors: Sequence[str] = ("cht", "ce"),
) -> Dict[str, List[BenchmarkRow]]:
    """Строки по классам для каждого детектора; время кадра считает frame_detection_time."""
    records = manifest.select("eval", signs_only=True)
    if not records:
        raise EmptySplitError("В оценочной выборке нет кадров со знаками")

    frames = [await load_frame(os.path.join(manifest.root, r.path)) for r in records]
    table: Dict[str, List[BenchmarkRow]] = {}
    for detector in detectors:
        variant = cfg.model_copy(update={"detector": detector})
        times: Dict[SignClass, List[float]] = {label: [] for label in SignClass.signs()}
        hits: Dict[SignClass, List[bool]] = {label: [] for label in SignClass.signs()}
        for record, frame in zip(records, frames):
            result = await asyncio.to_thread(process_frame, frame, variant, model)
            times[record.label].append(frame_detection_time(result))
            hits[record.label].append(result.decision.label is record.label)

        rows = [summarize(detector, label, times[label], hits[label])
                for label in SignClass.signs() if times[label]]
        table[detector] = rows
        log_benchmark_done(detector, rows)
    return table


def benchmark_csv(table: Dict[str, List[BenchmarkRow]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for detector, rows in table.items():
        for row in rows:
            writer.writerow([detector, row.sign_class.value, row.n,
                             f"{row.mean_s:.6f}", f"{row.std_s:.6f}", f"{row.accuracy:.2f}"])
    return buffer.getvalue()


async def write_benchmark_csv(path: str, table: Dict[str, List[BenchmarkRow]]) -> None:
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write(benchmark_csv(table))


def format_benchmark_table(table: Dict[str, List[BenchmarkRow]]) -> str:
    """Таблица для консоли: класс, число кадров, среднее, СКО, точность."""
    lines = []
    for detector, rows in table.items():
        lines.append(f"{detector.upper()}")
        lines.append(f"{'Class':<6}{'Sample #':>10}{'Mean, s':>12}{'Std.Dev.':>12}{'Accuracy':>10}")
        for row in rows:
            lines.append(
                f"{row.sign_class.value:<6}{row.n:>10}{row.mean_s:>12.4f}{row.std_s:>12.4f}{row.accuracy:>10.2f}"
            )
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"

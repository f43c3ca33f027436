import logging
import os
from typing import Iterable, List

import aiofiles
from pydantic import ValidationError

from agesign.database.models import CorpusManifest, ManifestRecord, ScheduleRecord
from agesign.errors import CorpusIOError, ScheduleOrderError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
SCHEDULE_NAME = "schedule.jsonl"


async def _read_jsonl(path, model) -> list:
    records = []
    async with aiofiles.open(path, "r", encoding="utf-8") as f:
        number = 0
        async for line in f:
            number += 1
            if not line.strip():
                continue
            try:
                records.append(model.model_validate_json(line))
            except ValidationError as e:
                raise CorpusIOError(f"{path}:{number}: некорректная запись: {e}") from e
    return records


async def _write_jsonl(path, records: Iterable) -> None:
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        for record in records:
            await f.write(record.model_dump_json() + "\n")


# функция сохранения манифеста корпуса
async def save_manifest(manifest: CorpusManifest) -> str:
    path = os.path.join(manifest.root, MANIFEST_NAME)
    try:
        await _write_jsonl(path, manifest.records)
    except OSError as e:
        raise CorpusIOError(f"Не удалось записать {path}: {e}") from e
    return path


# функция загрузки манифеста с проверкой, что все кадры на месте
async def load_manifest(root: str) -> CorpusManifest:
    path = os.path.join(root, MANIFEST_NAME)
    try:
        records: List[ManifestRecord] = await _read_jsonl(path, ManifestRecord)
    except OSError as e:
        raise CorpusIOError(f"Не удалось прочитать {path}: {e}") from e

    missing = [r.path for r in records if not os.path.isfile(os.path.join(root, r.path))]
    if missing:
        raise CorpusIOError(f"В корпусе {root} нет {len(missing)} кадров, например {missing[0]}")
    logger.debug(f"📂 Манифест {path}: {len(records)} записей")
    return CorpusManifest(root=root, records=records)


async def save_schedule(path: str, records: List[ScheduleRecord]) -> None:
    check_schedule_order(records)
    try:
        await _write_jsonl(path, records)
    except OSError as e:
        raise CorpusIOError(f"Не удалось записать {path}: {e}") from e


# функция загрузки расписания; пути кадров становятся абсолютными
async def load_schedule(path: str) -> List[ScheduleRecord]:
    records: List[ScheduleRecord] = await _read_jsonl(path, ScheduleRecord)
    check_schedule_order(records)
    base = os.path.dirname(os.path.abspath(path))
    return [
        record.model_copy(update={"path": os.path.join(base, record.path)})
        if not os.path.isabs(record.path) else record
        for record in records
    ]


def check_schedule_order(records) -> None:
    for previous, current in zip(records, records[1:]):
        if current.timestamp < previous.timestamp:
            raise ScheduleOrderError(
                f"Метки времени убывают: {previous.timestamp} → {current.timestamp}"
            )

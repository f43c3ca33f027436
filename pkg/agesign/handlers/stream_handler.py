# handlers/stream_handler.py
import json
import logging

from agesign import config
from agesign.database.queries import load_schedule
from agesign.services.classify_logic import load_model_file
from agesign.services.stream_logic import run_stream, sources_from_schedule

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("stream", help="обработать расписание кадров с периодом дискретизации")
    parser.add_argument("--schedule", required=True, help="schedule.jsonl")
    parser.add_argument("--period", type=float, default=None, help="период дискретизации, с")
    parser.add_argument("--model", default=None)
    parser.add_argument("--detector", choices=("ce", "cht"), default=None)
    parser.add_argument("--realtime", action="store_true", help="ждать реального наступления отсчётов")
    parser.set_defaults(handler=handle_stream)


async def handle_stream(args) -> int:
    cfg = config.load_pipeline_config(
        detector=args.detector, model_path=args.model, sampling_period=args.period
    )
    model = await load_model_file(cfg.model_path)
    records = await load_schedule(args.schedule)

    events = await run_stream(sources_from_schedule(records), cfg, model, realtime=args.realtime)
    for event in events:
        print(json.dumps(event.as_json_line(), ensure_ascii=False), flush=True)

    missed = sum(not event.deadline_met for event in events)
    if missed:
        logger.warning(f"⏰ Пропущено дедлайнов: {missed} из {len(events)}")
        return 1
    return 0

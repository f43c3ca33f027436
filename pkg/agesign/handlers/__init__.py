# Импорт всех подкоманд для удобного подключения
import argparse

from .bench_handler import register as register_bench
from .detect_handler import register as register_detect
from .schedule_handler import register as register_schedule
from .stream_handler import register as register_stream
from .synth_handler import register as register_synth
from .train_handler import register as register_train

COMMANDS = (
    register_detect,
    register_stream,
    register_train,
    register_bench,
    register_synth,
    register_schedule,
)


# Объединяем все подкоманды в один парсер
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agesign",
        description="Поиск и распознавание знаков возрастного ограничения 7+/13+/18+ в кадрах вещания",
    )
    parser.add_argument("--log-level", default=None, help="уровень логирования (по умолчанию из .env)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for register in COMMANDS:
        register(subparsers)
    return parser

import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from agesign import config
from agesign.errors import AgeSignError
from agesign.handlers import build_parser
from agesign.utils.logger import JournalLogHandler

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def setup_logging(level: Optional[str] = None, journal: Optional[str] = None) -> None:
    """Консоль (stderr) и, если задан, файл журнала."""
    root = logging.getLogger()
    root.setLevel(level or config.LOG_LEVEL)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    # Создаем обработчик для консоли; stdout остаётся для результатов
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(console_handler)

    journal = journal or config.LOG_JOURNAL
    if journal:
        journal_handler = JournalLogHandler(journal, level=logging.INFO)
        journal_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(journal_handler)

    # Сторонним библиотекам только предупреждения
    for name in ("PIL", "asyncio"):
        logging.getLogger(name).setLevel(logging.WARNING)


# главная асинхронная функция, разбирающая подкоманду
async def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level.upper() if args.log_level else None)
    logger.debug(f"🚀 Подкоманда {args.command}")

    try:
        return await args.handler(args)
    except (AgeSignError, ValidationError) as e:
        logger.error(f"❌ {args.command}: {type(e).__name__}: {e}")
        return 2
    except OSError as e:
        logger.error(f"❌ {args.command}: ошибка ввода-вывода: {e}")
        return 2

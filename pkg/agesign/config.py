# agesign/config.py
import logging
import os

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

# Всегда ищем .env относительно корня проекта
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Путь до .env файла можно переопределить через ENV_PATH
env_path = os.getenv("ENV_PATH", os.path.join(BASE_DIR, ".env.dev"))
load_dotenv(dotenv_path=env_path)


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return float(raw)
    except ValueError:
        logger.warning(f"⚠️ Переменная {name}={raw!r} не число, используется {default}")
        return default


# Вытаскиваем переменные из окружения
LOG_LEVEL = os.getenv("AGESIGN_LOG_LEVEL", "INFO").upper()
LOG_JOURNAL = os.getenv("AGESIGN_LOG_JOURNAL") or None
MODEL_PATH = os.getenv("AGESIGN_MODEL_PATH", "model.bin")
DETECTOR = os.getenv("AGESIGN_DETECTOR", "ce").lower()
SAMPLING_PERIOD = _env_float("AGESIGN_SAMPLING_PERIOD", 4.0)
EDGE_THRESHOLD = _env_float("AGESIGN_EDGE_THRESHOLD", 0.2)
CORNER_FRACTION = _env_float("AGESIGN_CORNER_FRACTION", 0.25)
REJECT_THRESHOLD = _env_float("AGESIGN_REJECT_THRESHOLD", 0.5)


def load_pipeline_config(**overrides):
    """Собирает PipelineConfig из переменных окружения и переданных переопределений.

    Значения None в overrides игнорируются, чтобы необязательные флаги CLI
    не затирали настройки из .env.
    """
    from agesign.services.pipeline_logic import PipelineConfig
    from agesign.services.preprocess_logic import EdgeParams

    values = {
        "detector": DETECTOR,
        "corner_fraction_w": CORNER_FRACTION,
        "corner_fraction_h": CORNER_FRACTION,
        "edge": EdgeParams(threshold_fraction=EDGE_THRESHOLD, min_magnitude=50),
        "model_path": MODEL_PATH,
        "reject_threshold": REJECT_THRESHOLD,
        "sampling_period": SAMPLING_PERIOD,
    }
    values.update({key: value for key, value in overrides.items() if value is not None})
    config = PipelineConfig(**values)
    logger.debug(f"🔧 Конфигурация конвейера: {config.model_dump()}")
    return config

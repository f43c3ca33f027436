# agesign/utils/logger.py
import logging
import os
import threading

logger = logging.getLogger(__name__)

LEVEL_ICONS = {
    "DEBUG": "🔍",
    "INFO": "📢",
    "WARNING": "⚠️",
    "ERROR": "❗",
    "CRITICAL": "🔥",
}


class JournalLogHandler(logging.Handler):
    """Дописывает записи в файл журнала, по одной строке на событие."""

    def __init__(self, path: str, level=logging.INFO):
        super().__init__(level)
        self.path = path
        self._lock = threading.Lock()
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)

    def format_line(self, record: logging.LogRecord) -> str:
        # Безопасное получение времени (проверяем, есть ли formatter)
        if self.formatter:
            timestamp = self.formatter.formatTime(record, "%Y-%m-%d %H:%M:%S")
        else:
            timestamp = logging.Formatter().formatTime(record, "%Y-%m-%d %H:%M:%S")

        icon = LEVEL_ICONS.get(record.levelname, "📝")
        message = record.getMessage().replace("\n", " | ")
        return f"{icon} {record.levelname} | {timestamp} | {record.name} | {message}\n"

    def emit(self, record):
        try:
            line = self.format_line(record)
            with self._lock:
                with open(self.path, "a", encoding="utf-8") as journal:
                    journal.write(line)
        except Exception:
            self.handleError(record)


# ==== СПЕЦИАЛЬНЫЕ ФОРМАТИРОВАННЫЕ СОБЫТИЯ ====

def _circle_text(circle) -> str:
    if circle is None:
        return "-"
    return f"a0={circle.a0:.1f} b0={circle.b0:.1f} r0={circle.r0:.1f}"


def log_sign_detected(detection, timestamp=None):
    """Логирует найденный знак возрастного ограничения с хэштегами"""
    msg = (
        f"🟢 #ЗНАК_НАЙДЕН #{detection.label.tag}\n"
        f"• Угол: {detection.corner}\n"
        f"• Окружность: {_circle_text(detection.circle)}\n"
        f"• Время: {detection.elapsed * 1000:.1f} мс"
    )
    if timestamp is not None:
        msg += f"\n• Отсчёт: t={timestamp:.1f} с"
    logger.info(msg)


def log_corner_conflict(left, right):
    """Оба угла классифицированы как знаки, кадр помечается N/C"""
    msg = (
        f"⚠️ #КОНФЛИКТ_УГЛОВ 🔴\n"
        f"• Левый: {left.label.value} ({_circle_text(left.circle)})\n"
        f"• Правый: {right.label.value} ({_circle_text(right.circle)})\n"
        f"#N_C"
    )
    logger.warning(msg)


def log_deadline_missed(timestamp: float, processing_time: float, period: float):
    """Обработка отсчёта не уложилась в период дискретизации"""
    msg = (
        f"⏰ #ДЕДЛАЙН_ПРОПУЩЕН 🔴\n"
        f"• Отсчёт: t={timestamp:.1f} с\n"
        f"• Обработка: {processing_time:.3f} с при периоде {period:.1f} с"
    )
    logger.warning(msg)


def log_model_trained(epochs: int, final_mse: float, samples: int, path=None):
    """Логирует окончание обучения MLP"""
    msg = (
        f"🧠 #МОДЕЛЬ_ОБУЧЕНА 🟢\n"
        f"• Эпох: {epochs}\n"
        f"• Итоговая MSE: {final_mse:.5f}\n"
        f"• Примеров: {samples}"
    )
    if path:
        msg += f"\n• Файл: {path}"
    logger.info(msg)


def log_corpus_written(out_dir, train_frames: int, eval_frames: int):
    """Логирует запись синтетического корпуса"""
    msg = (
        f"🎨 #КОРПУС_ЗАПИСАН 🟢\n"
        f"• Каталог: {out_dir}\n"
        f"• Обучение: {train_frames} кадров\n"
        f"• Оценка: {eval_frames} кадров"
    )
    logger.info(msg)


def log_benchmark_done(detector: str, rows):
    """Короткая сводка по строкам бенчмарка одного детектора"""
    parts = [f"{row.sign_class.value}: {row.accuracy:.2f}% за {row.mean_s:.3f} с" for row in rows]
    msg = (
        f"📊 #БЕНЧМАРК #{detector.upper()}\n"
        + "\n".join(f"• {part}" for part in parts)
    )
    logger.info(msg)

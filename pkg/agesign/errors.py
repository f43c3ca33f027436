# agesign/errors.py
"""Иерархия исключений проекта.

VisionStageError помечает ошибки этапов зрения, которые конвейер
превращает в класс N/C вместо того, чтобы прерывать обработку кадра.
"""


class AgeSignError(Exception):
    """Базовая ошибка проекта"""


class VisionStageError(AgeSignError):
    """Ошибка этапа обработки, означающая «в этом углу знака нет»"""


# 🖼️ Растр
class RasterError(AgeSignError):
    pass


class RegionOutOfBoundsError(RasterError):
    pass


class ZeroSizeRegionError(RasterError):
    pass


class PnmFormatError(RasterError):
    pass


class MalformedHeaderError(PnmFormatError):
    pass


class TruncatedPayloadError(PnmFormatError):
    pass


class UnsupportedMaxvalError(PnmFormatError):
    pass


class UnsupportedFormatError(PnmFormatError):
    pass


# 🧹 Предобработка
class PreprocessError(AgeSignError):
    pass


class ImageTooSmallError(PreprocessError, VisionStageError):
    pass


class NoCandidateError(PreprocessError, VisionStageError):
    pass


class EmptyMaskError(PreprocessError, VisionStageError):
    pass


# ⭕ Поиск окружности
class DetectionError(AgeSignError):
    pass


class EmptyPointSetError(DetectionError, VisionStageError):
    pass


class EmptyRadiusRangeError(DetectionError, VisionStageError):
    pass


class SingularSystemError(DetectionError, VisionStageError):
    pass


class NegativeRadicandError(DetectionError, VisionStageError):
    pass


# 🧠 Классификация
class ClassifyError(AgeSignError):
    pass


class DegenerateCircleError(ClassifyError, VisionStageError):
    pass


class EmptyDatasetError(ClassifyError):
    pass


class NonFiniteLossError(ClassifyError):
    pass


class ModelFormatError(ClassifyError):
    pass


class BadMagicError(ModelFormatError):
    pass


class ShapeMismatchError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


# 🎨 Синтетический корпус
class SynthError(AgeSignError):
    pass


class BadgeTooSmallError(SynthError):
    pass


class BadgeOutOfCornerError(SynthError):
    pass


class InvalidCountsError(SynthError):
    pass


class CorpusIOError(SynthError):
    pass


# 📺 Конвейер
class PipelineError(AgeSignError):
    pass


class EmptySplitError(PipelineError):
    pass


class ScheduleOrderError(PipelineError):
    pass

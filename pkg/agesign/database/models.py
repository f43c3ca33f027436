from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from agesign.services.circle_detect_logic import Circle
from agesign.services.classify_logic import SignClass
from agesign.services.raster_logic import Corner

Split = Literal["train", "eval"]
FrameKind = Literal["sign", "ring", "square", "empty"]


class _CircleFields(BaseModel):
    """Окружность хранится плоско: a0, b0, r0 (все три или ни одного)."""
    a0: Optional[float] = None
    b0: Optional[float] = None
    r0: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def check_circle(self):
        present = [value is not None for value in (self.a0, self.b0, self.r0)]
        if any(present) and not all(present):
            raise ValueError("a0, b0, r0 задаются вместе")
        return self

    @property
    def circle(self) -> Optional[Circle]:
        if self.r0 is None:
            return None
        return Circle(a0=self.a0, b0=self.b0, r0=self.r0)


# 🖼 Кадр корпуса
class ManifestRecord(_CircleFields):
    model_config = ConfigDict(frozen=True)

    path: str
    label: SignClass
    corner: Optional[Corner] = None
    seed: int = Field(ge=0)
    split: Split
    kind: FrameKind = "sign"
    polarity: Optional[Literal["positive", "negative"]] = None
    background: str = "flat"
    noise_sigma: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def check_label(self):
        if (self.kind == "sign") != (self.label is not SignClass.NC):
            raise ValueError(f"Кадр вида {self.kind} не может иметь метку {self.label.value}")
        if self.kind == "sign" and (self.circle is None or self.corner is None):
            raise ValueError("У кадра со знаком должны быть окружность и угол")
        return self


# 📚 Корпус целиком
class CorpusManifest(BaseModel):
    root: str
    records: List[ManifestRecord] = Field(default_factory=list)

    def select(self, split: Split, signs_only: bool = False) -> List[ManifestRecord]:
        return [
            record for record in self.records
            if record.split == split and (not signs_only or record.kind == "sign")
        ]


# ⏱ Запись расписания вещания
class ScheduleRecord(_CircleFields):
    model_config = ConfigDict(frozen=True)

    timestamp: float = Field(ge=0)
    path: str
    label: SignClass = SignClass.NC
    corner: Optional[Corner] = None

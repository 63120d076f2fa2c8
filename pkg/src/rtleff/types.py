"""Small shared value types."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Metric(str, Enum):
    AREA = "area"
    DELAY = "delay"
    POWER = "power"

    @classmethod
    def parse(cls, value: str | Metric) -> Metric:
        if isinstance(value, Metric):
            return value
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ValueError(f"unknown metric {value!r}; expected area, delay or power") from None


METRICS: tuple[Metric, ...] = (Metric.AREA, Metric.DELAY, Metric.POWER)


class Design(str, Enum):
    UNOPT = "unopt"
    OPT_AREA = "opt_area"
    OPT_DELAY = "opt_delay"
    OPT_POWER = "opt_power"

    @classmethod
    def for_metric(cls, m: Metric) -> Design:
        return cls(f"opt_{Metric.parse(m).value}")

    @property
    def metric(self) -> Metric | None:
        return None if self is Design.UNOPT else Metric(self.value[4:])


DESIGNS: tuple[Design, ...] = (Design.UNOPT, Design.OPT_AREA, Design.OPT_DELAY, Design.OPT_POWER)


@dataclass(frozen=True)
class MetricVector:
    """Area (library units), critical-path delay (ns) and total power (mW).

    A metric the backend could not produce is ``None``, never 0.
    """

    area: float | None = None
    delay: float | None = None
    power: float | None = None

    def __post_init__(self) -> None:
        for m in METRICS:
            v = getattr(self, m.value)
            if v is None:
                continue
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise ValueError(f"{m.value} must be a finite non-negative number, got {v!r}")
            object.__setattr__(self, m.value, float(v))

    def get(self, m: Metric | str) -> float | None:
        return getattr(self, Metric.parse(m).value)

    def to_dict(self) -> dict[str, float | None]:
        return {m.value: self.get(m) for m in METRICS}

    @classmethod
    def from_dict(cls, d: dict | None) -> MetricVector:
        d = d or {}
        return cls(**{m.value: d.get(m.value) for m in METRICS})

"""Probability measures a path can be simulated under."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Measure:
    """One of P, Q, QInf or the T-forward measure ``QT`` (with `maturity`)."""

    kind: str
    maturity: float | None = None

    def __post_init__(self):
        if self.kind not in ("P", "Q", "QInf", "QT"):
            raise ValueError(f"unknown measure {self.kind!r}")
        if self.kind == "QT":
            if self.maturity is None or not self.maturity > 0:
                raise ValueError("the T-forward measure needs a maturity T > 0")
        elif self.maturity is not None:
            raise ValueError(f"measure {self.kind} takes no maturity")

    @classmethod
    def forward(cls, T: float) -> "Measure":
        return cls("QT", float(T))

    @classmethod
    def parse(cls, text: str) -> "Measure":
        text = text.strip()
        if text.upper().startswith("QT"):
            return cls.forward(float(text.split(":", 1)[1]))
        aliases = {"p": "P", "q": "Q", "qinf": "QInf", "q_inf": "QInf", "l": "QInf"}
        return cls(aliases.get(text.lower(), text))

    def __str__(self):
        return f"QT:{self.maturity:g}" if self.kind == "QT" else self.kind


P = Measure("P")
Q = Measure("Q")
QINF = Measure("QInf")

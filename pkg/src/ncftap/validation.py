"""Residual-based validation reports shared by the validators."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Check:
    name: str
    residual: float
    tol: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        mark = "ok  " if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"[{mark}] {self.name}: residual={self.residual:.3e} tol={self.tol:.1e}{extra}"


@dataclass
class ValidationReport:
    """Ordered collection of named residual checks; passes iff every check does."""

    title: str = ""
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __bool__(self) -> bool:
        return self.passed

    def add(self, name: str, residual: float, tol: float, detail: str = "", *,
            passed: bool | None = None) -> Check:
        residual = float(residual)
        ok = residual <= tol if passed is None else bool(passed)
        c = Check(name, residual, float(tol), ok, detail)
        self.checks.append(c)
        return c

    def extend(self, other: "ValidationReport", prefix: str = "") -> None:
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.residual, c.tol, c.passed, c.detail))

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    @property
    def max_residual(self) -> float:
        return max((c.residual for c in self.checks), default=0.0)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "residual": c.residual, "tol": c.tol,
                 "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
        }

    def format(self) -> str:
        head = f"{self.title}: {'PASS' if self.passed else 'FAIL'}"
        return "\n".join([head] + ["  " + c.line() for c in self.checks])

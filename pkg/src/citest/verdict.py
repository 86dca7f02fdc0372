"""Tester outcomes with diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

YES = "Yes"
NO = "No"
ABORT = "Abort"
SAME = "Same"
FAR = "Far"
CLOSE_IN_HELLINGER = "CloseInHellinger"
NOT_EQUAL = "NotEqual"


@dataclass(frozen=True)
class Verdict:
    """Outcome of a tester plus per-phase diagnostics.

    `outcome` is one of the module-level constants; Abort is produced only by
    the declared abort paths (Poisson cut-offs and empty simulation queues).
    """

    outcome: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_yes(self) -> bool:
        return self.outcome in (YES, SAME, CLOSE_IN_HELLINGER)

    @property
    def is_no(self) -> bool:
        return self.outcome in (NO, FAR, NOT_EQUAL)

    @property
    def is_abort(self) -> bool:
        return self.outcome == ABORT

    def exit_code(self) -> int:
        return 0 if self.is_yes else 1 if self.is_no else 2

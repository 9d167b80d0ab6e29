"""SLA accounting: per-slice violation ticks and the penalties they accrue."""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import SlaSpec


@dataclass
class SliceLedger:
    violation_ticks: int = 0
    total_ticks: int = 0
    accrued_penalty: float = 0.0


@dataclass
class PenaltyLedger:
    slices: dict[str, SliceLedger] = field(default_factory=dict)
    monitoring_cost: float = 0.0

    def record(self, spec: SlaSpec, violated: bool) -> None:
        s = self.slices.setdefault(spec.slice_id, SliceLedger())
        s.total_ticks += 1
        if violated:
            s.violation_ticks += 1
            s.accrued_penalty = s.violation_ticks * spec.penalty_per_violation_tick

    def violations(self, slice_id: str) -> int:
        s = self.slices.get(slice_id)
        return 0 if s is None else s.violation_ticks

    def to_dict(self) -> dict:
        return {
            "slices": {k: vars(v).copy() for k, v in sorted(self.slices.items())},
            "monitoring_cost": self.monitoring_cost,
        }


@dataclass(frozen=True)
class SlaVerdict:
    slice_id: str
    met: bool
    good_fraction: float
    violation_ticks: int
    total_ticks: int
    penalty: float


def sla_audit(ledger: PenaltyLedger, specs: dict[str, SlaSpec]) -> dict[str, SlaVerdict]:
    """Met iff the fraction of good ticks reaches the slice's guarantee quantile."""
    out = {}
    for sid, spec in specs.items():
        s = ledger.slices.get(sid)
        if s is None or s.total_ticks == 0:
            continue
        good = 1.0 - s.violation_ticks / s.total_ticks
        out[sid] = SlaVerdict(
            sid,
            # compare counts, not a rounded fraction, so 95/100 at 0.95 is met
            s.total_ticks - s.violation_ticks >= spec.guarantee_quantile * s.total_ticks - 1e-9,
            good,
            s.violation_ticks,
            s.total_ticks,
            s.violation_ticks * spec.penalty_per_violation_tick,
        )
    return out

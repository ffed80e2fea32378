"""System watchdog: hysteresis gate on the blocking function."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .core import SYSTEM_RESOURCES, PolicyConfig


@dataclass(frozen=True)
class SystemMetrics:
    cpu_usage: float
    memory_usage: float
    connection_pool_usage: float
    timestamp: int = 0

    def __post_init__(self) -> None:
        for name in ("cpu_usage", "memory_usage", "connection_pool_usage"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")

    def value(self, resource: str) -> float:
        return getattr(self, f"{resource}_usage")


class Mode(enum.Enum):
    INACTIVE = "inactive"
    ACTIVE = "active"


@dataclass(frozen=True)
class MitigationState:
    mode: Mode = Mode.INACTIVE
    last_transition: int = 0

    @property
    def active(self) -> bool:
        return self.mode is Mode.ACTIVE


def tick(state: MitigationState, m: SystemMetrics, cfg: PolicyConfig) -> MitigationState:
    """Advance the gate by one sample.

    Activates when any resource reaches its enable threshold; deactivates
    only once every resource is strictly below its disable threshold.
    """
    if state.mode is Mode.INACTIVE:
        if any(m.value(r) >= getattr(cfg.enable_thresholds, r) for r in SYSTEM_RESOURCES):
            return MitigationState(Mode.ACTIVE, m.timestamp)
        return state
    if all(m.value(r) < getattr(cfg.disable_thresholds, r) for r in SYSTEM_RESOURCES):
        return MitigationState(Mode.INACTIVE, m.timestamp)
    return state


class Watchdog:
    """Stateful wrapper owned by the scheduler; ``active`` is what the mitigator reads."""

    def __init__(self, cfg: PolicyConfig) -> None:
        self.cfg = cfg
        self.state = MitigationState()
        self.transitions = 0

    @property
    def active(self) -> bool:
        return self.state.active

    def tick(self, m: SystemMetrics) -> MitigationState:
        new = tick(self.state, m, self.cfg)
        if new.mode is not self.state.mode:
            self.transitions += 1
        self.state = new
        return new

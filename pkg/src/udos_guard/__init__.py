"""Per-client, per-layer resource accounting and temporary blocking against low-volume DoS."""
from .core import (
    ClientId,
    ConfigError,
    Layer,
    PacketRecord,
    PolicyConfig,
    Resource,
    ResourceVector,
    load_policy,
    validate_policy,
)
from .engine import Engine
from .mitigator import BlockDecision, BlockEntry, ClientWindowStore, DataHandler
from .profiler import ProbeEvent, ProbeKind, Profiler, RingBuffer
from .watchdog import MitigationState, Mode, SystemMetrics, Watchdog

__version__ = "0.1.0"

__all__ = [
    "BlockDecision", "BlockEntry", "ClientId", "ClientWindowStore", "ConfigError", "DataHandler",
    "Engine", "Layer", "MitigationState", "Mode", "PacketRecord", "PolicyConfig", "ProbeEvent",
    "ProbeKind", "Profiler", "Resource", "ResourceVector", "RingBuffer", "SystemMetrics",
    "Watchdog", "load_policy", "validate_policy",
]

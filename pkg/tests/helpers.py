"""Builders and hypothesis strategies shared by the tests."""
from __future__ import annotations

import ipaddress
import random

from hypothesis import strategies as st

from udos_guard.core import U64_MAX, ClientId, Layer, PacketRecord, ResourceVector


def rv(i: int = 0, m: int = 0, c: int = 0) -> ResourceVector:
    return ResourceVector(i, m, c)


def record(ts: int, client: str, cpu: int = 0, **per_layer: tuple[int, int, int]) -> PacketRecord:
    usage = {layer: rv(*per_layer.get(layer.label, (0, 0, 0))) for layer in Layer}
    return PacketRecord(ts, cpu, ClientId.parse(client), usage)


def random_record(rng: random.Random, v6: bool | None = None) -> PacketRecord:
    if v6 is None:
        v6 = rng.random() < 0.5
    ip = ipaddress.IPv6Address(rng.getrandbits(128)) if v6 else ipaddress.IPv4Address(rng.getrandbits(32))
    cid = ClientId(ip)
    usage = {}
    for layer in Layer:
        conns = rng.getrandbits(32) if layer is Layer.APPLICATION else 0
        usage[layer] = ResourceVector(rng.getrandbits(64), rng.getrandbits(64), conns)
    return PacketRecord(
        timestamp=rng.getrandbits(64), cpu_id=rng.getrandbits(32), client=cid, usage=usage,
        program_id=rng.getrandbits(32), incomplete=rng.random() < 0.2,
    )


u64 = st.integers(min_value=0, max_value=U64_MAX)
small = st.integers(min_value=0, max_value=10**6)
vectors = st.builds(ResourceVector, u64, u64, u64)
small_vectors = st.builds(ResourceVector, small, small, small)

"""Fixed 126-byte little-endian encoding of a PacketRecord.

Offset  Size  Field
     0     8  timestamp (ns)
     8     4  cpu_id
    12     1  address family (4 or 6)
    13    16  source address; IPv4 uses the first 4 bytes, rest zero
    29    24  kernel instructions: link, network, transport
    53    24  kernel MBM bytes: link, network, transport
    77     8  application instructions
    85     8  application MBM bytes
    93     4  program_id
    97     4  application new_connections
   101     1  flags (bit 0: incomplete)
   102    24  reserved, zero
"""
from __future__ import annotations

import ipaddress
import struct

from ..core import KERNEL_LAYERS, ClientId, Layer, PacketRecord, ResourceVector

_LAYOUT = struct.Struct("<QIB16s3Q3QQQIIB24s")
RECORD_SIZE = _LAYOUT.size
assert RECORD_SIZE == 126

FLAG_INCOMPLETE = 0x01
_U32_MAX = 0xFFFFFFFF
_RESERVED = bytes(24)


class CodecError(ValueError):
    pass


class EncodeError(CodecError):
    pass


class DecodeError(CodecError):
    pass


class BadLength(DecodeError):
    pass


class BadAddrFamily(DecodeError):
    pass


class NonzeroReserved(DecodeError):
    pass


def encode_record(rec: PacketRecord) -> bytes:
    ip = rec.client.ip
    family = ip.version
    addr = ip.packed.ljust(16, b"\x00")
    for layer in KERNEL_LAYERS:
        if rec.usage[layer].new_connections:
            raise EncodeError(f"{layer.label} layer carries new_connections; only the application layer may")
    app = rec.usage[Layer.APPLICATION]
    if rec.cpu_id > _U32_MAX or rec.program_id > _U32_MAX or app.new_connections > _U32_MAX:
        raise EncodeError("cpu_id, program_id and new_connections must fit in 32 bits")
    link, net, tr = (rec.usage[l] for l in KERNEL_LAYERS)
    return _LAYOUT.pack(
        rec.timestamp,
        rec.cpu_id,
        family,
        addr,
        link.instructions, net.instructions, tr.instructions,
        link.mbm_bytes, net.mbm_bytes, tr.mbm_bytes,
        app.instructions,
        app.mbm_bytes,
        rec.program_id,
        app.new_connections,
        FLAG_INCOMPLETE if rec.incomplete else 0,
        _RESERVED,
    )


def decode_record(block: bytes, strict: bool = True) -> PacketRecord:
    if len(block) != RECORD_SIZE:
        raise BadLength(f"record must be {RECORD_SIZE} bytes, got {len(block)}")
    (ts, cpu, family, addr,
     i_link, i_net, i_tr, m_link, m_net, m_tr,
     i_app, m_app, program_id, new_conns, flags, reserved) = _LAYOUT.unpack(block)
    if family == 4:
        if strict and any(addr[4:]):
            raise NonzeroReserved("IPv4 address padding is not zero")
        ip = ipaddress.IPv4Address(addr[:4])
    elif family == 6:
        ip = ipaddress.IPv6Address(addr)
    else:
        raise BadAddrFamily(f"address family {family} is neither 4 nor 6")
    if strict and (any(reserved) or flags & ~FLAG_INCOMPLETE):
        raise NonzeroReserved("reserved bytes or flag bits are set")
    usage = {
        Layer.LINK: ResourceVector(i_link, m_link, 0),
        Layer.NETWORK: ResourceVector(i_net, m_net, 0),
        Layer.TRANSPORT: ResourceVector(i_tr, m_tr, 0),
        Layer.APPLICATION: ResourceVector(i_app, m_app, new_conns),
    }
    return PacketRecord(
        timestamp=ts,
        cpu_id=cpu,
        client=ClientId(ip),
        usage=usage,
        program_id=program_id,
        incomplete=bool(flags & FLAG_INCOMPLETE),
    )


def iter_records(data: bytes, strict: bool = True):
    if len(data) % RECORD_SIZE:
        raise BadLength(f"stream length {len(data)} is not a multiple of {RECORD_SIZE}")
    for off in range(0, len(data), RECORD_SIZE):
        yield decode_record(data[off:off + RECORD_SIZE], strict=strict)


def read_records_file(path, strict: bool = True):
    """Stream records from a concatenated binary file without loading it whole."""
    with open(path, "rb") as fh:
        while True:
            block = fh.read(RECORD_SIZE)
            if not block:
                return
            yield decode_record(block, strict=strict)

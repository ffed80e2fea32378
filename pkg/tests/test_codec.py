import random
import struct

import pytest

from helpers import random_record, record
from udos_guard.core import ClientId, Layer, PacketRecord, ResourceVector
from udos_guard.trace_io.codec import (
    RECORD_SIZE,
    BadAddrFamily,
    BadLength,
    EncodeError,
    NonzeroReserved,
    decode_record,
    encode_record,
    iter_records,
    read_records_file,
)


def test_size_is_126():
    assert RECORD_SIZE == 126


def test_ten_thousand_random_round_trips():
    rng = random.Random(126)
    for _ in range(10_000):
        rec = random_record(rng)
        blob = encode_record(rec)
        assert len(blob) == 126
        assert decode_record(blob) == rec


@pytest.mark.parametrize("ip", ["0.0.0.0", "255.255.255.255", "::", "2001:db8::ff"])
def test_every_encoding_is_126_bytes(ip):
    assert len(encode_record(record(0, ip))) == 126


def test_all_zero_record():
    blob = encode_record(record(0, "0.0.0.0"))
    assert blob[12] == 4
    assert blob[:12] == bytes(12) and blob[13:] == bytes(126 - 13)


def test_layout_offsets():
    rec = PacketRecord(
        timestamp=0x0102030405060708, cpu_id=3, client=ClientId.parse("10.1.2.3"),
        usage={
            Layer.LINK: ResourceVector(11, 21, 0), Layer.NETWORK: ResourceVector(12, 22, 0),
            Layer.TRANSPORT: ResourceVector(13, 23, 0), Layer.APPLICATION: ResourceVector(14, 24, 5),
        },
        program_id=80, incomplete=True,
    )
    b = encode_record(rec)
    assert struct.unpack_from("<Q", b, 0)[0] == 0x0102030405060708
    assert struct.unpack_from("<I", b, 8)[0] == 3
    assert b[12] == 4 and b[13:17] == bytes([10, 1, 2, 3]) and b[17:29] == bytes(12)
    assert struct.unpack_from("<3Q", b, 29) == (11, 12, 13)
    assert struct.unpack_from("<3Q", b, 53) == (21, 22, 23)
    assert struct.unpack_from("<QQII", b, 77) == (14, 24, 80, 5)
    assert b[101] == 1 and b[102:] == bytes(24)


def test_short_input():
    with pytest.raises(BadLength):
        decode_record(bytes(125))


def test_bad_family():
    blob = bytearray(encode_record(record(0, "10.0.0.1")))
    blob[12] = 7
    with pytest.raises(BadAddrFamily):
        decode_record(bytes(blob))


def test_nonzero_reserved_strict_only():
    rec = record(5, "10.0.0.1")
    blob = bytearray(encode_record(rec))
    blob[125] = 0xAA
    with pytest.raises(NonzeroReserved):
        decode_record(bytes(blob))
    assert decode_record(bytes(blob), strict=False) == rec


def test_kernel_layer_connections_not_encodable():
    with pytest.raises(EncodeError):
        encode_record(record(0, "10.0.0.1", link=(0, 0, 1)))


def test_stream_helpers(tmp_path):
    rng = random.Random(3)
    rs = [random_record(rng) for _ in range(50)]
    data = b"".join(map(encode_record, rs))
    assert list(iter_records(data)) == rs
    path = tmp_path / "records.bin"
    path.write_bytes(data)
    assert list(read_records_file(path)) == rs
    with pytest.raises(BadLength):
        list(iter_records(data[:-1]))

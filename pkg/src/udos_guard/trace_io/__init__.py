"""Binary record codec, JSONL traces and CSV outputs."""
from .codec import (
    RECORD_SIZE,
    BadAddrFamily,
    BadLength,
    CodecError,
    NonzeroReserved,
    decode_record,
    encode_record,
    iter_records,
    read_records_file,
)
from .jsonl import ParseError, UnknownType, read_trace_jsonl, replay_trace, write_trace_jsonl

__all__ = [
    "BadAddrFamily", "BadLength", "CodecError", "NonzeroReserved", "ParseError", "RECORD_SIZE",
    "UnknownType", "decode_record", "encode_record", "iter_records", "read_records_file",
    "read_trace_jsonl", "replay_trace", "write_trace_jsonl",
]

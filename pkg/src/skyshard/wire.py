"""Length-prefixed binary framing and message payload schemas.

Frame layout (little-endian):

    length      u32   bytes after this field (= 9 + len(payload))
    request_id  u64   echoed verbatim in the response
    msg_type    u8    request code, or code | 0x80 for the response
    payload     bytes

Response payloads begin with a status byte (0 = OK); on failure the rest of
the body is a UTF-8 message. Requests on one connection may be pipelined;
responses may come back in any order and are matched by request_id.

PROTOCOL.md documents every payload schema with annotated hex dumps that
match the committed golden fixtures.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

from .errors import FrameTooLarge, ProtocolError, Truncated

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")

MAX_PAYLOAD = 64 * 1024 * 1024
_HEADER = struct.Struct("<IQB")  # length, request_id, msg_type

MSG_PUT_OBJECT = 1
MSG_GET_OBJECT = 2
MSG_EXEC = 3
MSG_BUILD_INDEX = 4
MSG_LOOKUP_INDEX = 5
MSG_PING = 6
MSG_SUBMIT_QUERY = 7
MSG_COMPRESS = 8
RESPONSE_FLAG = 0x80

COMPRESS_MODE_COMPRESS = 0
COMPRESS_MODE_DECOMPRESS = 1

RESULT_TABLE = 0
RESULT_SCALAR = 1
RESULT_AGG_STATE = 1  # EXEC result tag: 0 = rows, 1 = aggregate state

SCALAR_I64 = 0
SCALAR_F64 = 1


@dataclass(frozen=True)
class Frame:
    request_id: int
    msg_type: int
    payload: bytes


def encode_frame(frame: Frame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise FrameTooLarge(f"payload {len(frame.payload)} exceeds {MAX_PAYLOAD}")
    return (
        _HEADER.pack(9 + len(frame.payload), frame.request_id, frame.msg_type)
        + frame.payload
    )


def decode_frame(data: bytes) -> tuple[Frame, int]:
    """Decode one frame from a buffer; returns (frame, bytes consumed)."""
    if len(data) < 4:
        raise Truncated("frame length")
    length = _U32.unpack_from(data)[0]
    if length < 9:
        raise ProtocolError(f"frame length {length} below header size")
    if length - 9 > MAX_PAYLOAD:
        raise FrameTooLarge(f"declared payload {length - 9} exceeds {MAX_PAYLOAD}")
    if len(data) < 4 + length:
        raise Truncated("frame body")
    request_id, msg_type = struct.unpack_from("<QB", data, 4)
    payload = bytes(data[13 : 4 + length])
    return Frame(request_id, msg_type, payload), 4 + length


def recv_exactly(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at offset 0, Truncated mid-way."""
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            if got == 0:
                return None
            raise Truncated("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Frame | None:
    """Read one frame off a socket; None on clean EOF between frames.

    Oversized frames are drained so the connection stays usable, then
    reported as FrameTooLarge carrying the request id for the error reply.
    """
    head = recv_exactly(sock, 4)
    if head is None:
        return None
    length = _U32.unpack_from(head)[0]
    if length < 9:
        raise ProtocolError(f"frame length {length} below header size")
    if length - 9 > MAX_PAYLOAD:
        rid_type = recv_exactly(sock, 9)
        if rid_type is None:
            raise Truncated("connection closed mid-frame")
        remaining = length - 9
        while remaining > 0:
            chunk = recv_exactly(sock, min(remaining, 1 << 20))
            if chunk is None:
                raise Truncated("connection closed mid-frame")
            remaining -= len(chunk)
        rid, mtype = struct.unpack_from("<QB", rid_type)
        err = FrameTooLarge(f"declared payload {length - 9} exceeds {MAX_PAYLOAD}")
        err.request_id = rid
        err.msg_type = mtype
        raise err
    body = recv_exactly(sock, length)
    if body is None:
        raise Truncated("connection closed mid-frame")
    request_id, msg_type = struct.unpack_from("<QB", body)
    return Frame(request_id, msg_type, bytes(body[9:]))


def send_frame(sock: socket.socket, frame: Frame) -> int:
    data = encode_frame(frame)
    sock.sendall(data)
    return len(data)


# --- payload helpers ---------------------------------------------------------


def pack_str16(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ProtocolError("string too long for u16 length prefix")
    return _U16.pack(len(raw)) + raw


def unpack_str16(data: bytes, pos: int) -> tuple[str, int]:
    if pos + 2 > len(data):
        raise Truncated("string length")
    ln = _U16.unpack_from(data, pos)[0]
    pos += 2
    if pos + ln > len(data):
        raise Truncated("string bytes")
    return data[pos : pos + ln].decode("utf-8"), pos + ln


def pack_str32(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def unpack_str32(data: bytes, pos: int) -> tuple[str, int]:
    if pos + 4 > len(data):
        raise Truncated("string length")
    ln = _U32.unpack_from(data, pos)[0]
    pos += 4
    if pos + ln > len(data):
        raise Truncated("string bytes")
    return data[pos : pos + ln].decode("utf-8"), pos + ln


# --- request payloads --------------------------------------------------------


def build_put(name: str, obj_bytes: bytes) -> bytes:
    return pack_str16(name) + obj_bytes


def parse_put(payload: bytes) -> tuple[str, bytes]:
    name, pos = unpack_str16(payload, 0)
    return name, payload[pos:]


def build_get(name: str) -> bytes:
    return pack_str16(name)


def parse_get(payload: bytes) -> str:
    name, pos = unpack_str16(payload, 0)
    if pos != len(payload):
        raise ProtocolError("trailing bytes in GET payload")
    return name


def build_exec(name: str, subquery_text: str) -> bytes:
    return pack_str16(name) + pack_str32(subquery_text)


def parse_exec(payload: bytes) -> tuple[str, str]:
    name, pos = unpack_str16(payload, 0)
    text, pos = unpack_str32(payload, pos)
    if pos != len(payload):
        raise ProtocolError("trailing bytes in EXEC payload")
    return name, text


def build_build_index(name: str, column: str) -> bytes:
    return pack_str16(name) + pack_str16(column)


def parse_build_index(payload: bytes) -> tuple[str, str]:
    name, pos = unpack_str16(payload, 0)
    column, pos = unpack_str16(payload, pos)
    if pos != len(payload):
        raise ProtocolError("trailing bytes in BUILD_INDEX payload")
    return name, column


def build_lookup_index(dataset: str, column: str, value: int | str) -> bytes:
    out = pack_str16(dataset) + pack_str16(column)
    if isinstance(value, str):
        out += b"\1" + pack_str32(value)
    else:
        out += b"\0" + _I64.pack(value)
    return out


def parse_lookup_index(payload: bytes) -> tuple[str, str, int | str]:
    dataset, pos = unpack_str16(payload, 0)
    column, pos = unpack_str16(payload, pos)
    if pos >= len(payload):
        raise Truncated("literal tag")
    tag = payload[pos]
    pos += 1
    if tag == 1:
        value, pos = unpack_str32(payload, pos)
    elif tag == 0:
        if pos + 8 > len(payload):
            raise Truncated("literal value")
        value = _I64.unpack_from(payload, pos)[0]
        pos += 8
    else:
        raise ProtocolError(f"unknown literal tag {tag}")
    if pos != len(payload):
        raise ProtocolError("trailing bytes in LOOKUP_INDEX payload")
    return dataset, column, value


def build_compress(name: str, mode: int) -> bytes:
    return pack_str16(name) + bytes([mode])


def parse_compress(payload: bytes) -> tuple[str, int]:
    name, pos = unpack_str16(payload, 0)
    if pos + 1 != len(payload):
        raise ProtocolError("bad COMPRESS payload")
    mode = payload[pos]
    if mode not in (COMPRESS_MODE_COMPRESS, COMPRESS_MODE_DECOMPRESS):
        raise ProtocolError(f"unknown compress mode {mode}")
    return name, mode


def build_submit_query(text: str) -> bytes:
    return pack_str32(text)


def parse_submit_query(payload: bytes) -> str:
    text, pos = unpack_str32(payload, 0)
    if pos != len(payload):
        raise ProtocolError("trailing bytes in SUBMIT_QUERY payload")
    return text


# --- response payloads (after the status byte) -------------------------------


def build_exec_rows_result(ordinals: list[int], obj_bytes: bytes) -> bytes:
    out = bytearray([RESULT_TABLE])
    out += _U32.pack(len(ordinals))
    for o in ordinals:
        out += _U32.pack(o)
    out += obj_bytes
    return bytes(out)


def parse_exec_result(body: bytes) -> tuple[int, list[int], bytes]:
    """Returns (tag, ordinals, rest) - rest is object or state bytes."""
    if not body:
        raise Truncated("EXEC result tag")
    tag = body[0]
    if tag == RESULT_TABLE:
        if len(body) < 5:
            raise Truncated("EXEC ordinal count")
        n = _U32.unpack_from(body, 1)[0]
        if len(body) < 5 + 4 * n:
            raise Truncated("EXEC ordinals")
        ordinals = [_U32.unpack_from(body, 5 + 4 * i)[0] for i in range(n)]
        return tag, ordinals, body[5 + 4 * n :]
    return tag, [], body[1:]


def build_lookup_result(groups: list[tuple[int, list[int]]]) -> bytes:
    out = bytearray(_U32.pack(len(groups)))
    for partition_index, ordinals in groups:
        out += _U64.pack(partition_index)
        out += _U32.pack(len(ordinals))
        for o in ordinals:
            out += _U32.pack(o)
    return bytes(out)


def parse_lookup_result(body: bytes) -> list[tuple[int, list[int]]]:
    if len(body) < 4:
        raise Truncated("lookup group count")
    count = _U32.unpack_from(body)[0]
    pos = 4
    groups = []
    for _ in range(count):
        if pos + 12 > len(body):
            raise Truncated("lookup group header")
        partition_index = _U64.unpack_from(body, pos)[0]
        n = _U32.unpack_from(body, pos + 8)[0]
        pos += 12
        if pos + 4 * n > len(body):
            raise Truncated("lookup ordinals")
        ordinals = [_U32.unpack_from(body, pos + 4 * i)[0] for i in range(n)]
        pos += 4 * n
        groups.append((partition_index, ordinals))
    if pos != len(body):
        raise ProtocolError("trailing bytes in lookup result")
    return groups


def build_scalar_result(value: int | float) -> bytes:
    if isinstance(value, bool):
        raise ProtocolError("scalar results are i64 or f64")
    if isinstance(value, int):
        if not -(1 << 63) <= value < (1 << 63):
            raise ProtocolError("integer scalar outside 64-bit range")
        return bytes([RESULT_SCALAR]) + _I64.pack(value) + bytes([SCALAR_I64])
    return bytes([RESULT_SCALAR]) + _F64.pack(value) + bytes([SCALAR_F64])


def parse_query_result(body: bytes) -> tuple[int, bytes | int | float]:
    """Returns (tag, SealedObject bytes) or (tag, scalar)."""
    if not body:
        raise Truncated("query result tag")
    tag = body[0]
    if tag == RESULT_TABLE:
        return tag, body[1:]
    if tag != RESULT_SCALAR:
        raise ProtocolError(f"unknown query result tag {tag}")
    if len(body) != 10:
        raise Truncated("scalar result body")
    type_tag = body[9]
    if type_tag == SCALAR_I64:
        return tag, _I64.unpack_from(body, 1)[0]
    if type_tag == SCALAR_F64:
        return tag, _F64.unpack_from(body, 1)[0]
    raise ProtocolError(f"unknown scalar type tag {type_tag}")


def build_build_index_result(entries: int) -> bytes:
    return _U64.pack(entries)


def parse_build_index_result(body: bytes) -> int:
    if len(body) != 8:
        raise Truncated("build-index result")
    return _U64.unpack_from(body)[0]

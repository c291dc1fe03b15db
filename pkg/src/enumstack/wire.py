"""Wire frames for the simulated transport.

One frame holds one request or one response. On the wire a frame is a
length-prefixed UTF-8 text record: ``<decimal byte length>:<body>`` where
the body is ``key=value`` pairs separated by ``;``. Values are
percent-escaped so records, URIs and free text pass through unharmed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .errors import WireError

# Request kinds understood by the tier actors.
DISCOVER = "DISCOVER"
LOOKUP = "LOOKUP"
REGISTER = "REGISTER"
CHANGE = "CHANGE"
PEER_UPDATE = "PEER_UPDATE"
SUBSCRIBE = "SUBSCRIBE"
PROVISION = "PROVISION"
GET = "GET"
GRANT = "GRANT"
REVOKE = "REVOKE"
TRANSFER_INIT = "TRANSFER_INIT"
TRANSFER_DISPUTE = "TRANSFER_DISPUTE"
DISCONNECT = "DISCONNECT"
MIGRATE_REQ = "MIGRATE_REQ"
MIGRATE_RESP = "MIGRATE_RESP"

KINDS = (
    DISCOVER,
    LOOKUP,
    REGISTER,
    CHANGE,
    PEER_UPDATE,
    SUBSCRIBE,
    PROVISION,
    GET,
    GRANT,
    REVOKE,
    TRANSFER_INIT,
    TRANSFER_DISPUTE,
    DISCONNECT,
    MIGRATE_REQ,
    MIGRATE_RESP,
)

_RESERVED = ("kind", "src", "dst", "req", "resp")

STATUS_OK = "ok"


def _escape(value: str) -> str:
    return (
        value.replace("%", "%25")
        .replace(";", "%3B")
        .replace("=", "%3D")
        .replace("\n", "%0A")
        .replace("\r", "%0D")
    )


def _unescape(value: str) -> str:
    return (
        value.replace("%0D", "\r")
        .replace("%0A", "\n")
        .replace("%3D", "=")
        .replace("%3B", ";")
        .replace("%25", "%")
    )


@dataclass(frozen=True)
class Frame:
    """One structured request or response."""

    kind: str
    src: str
    dst: str
    req_id: int
    is_response: bool = False
    fields: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key in self.fields:
            if key in _RESERVED:
                raise WireError(f"field name {key!r} is reserved")

    def get(self, key: str, default: str = "") -> str:
        return self.fields.get(key, default)

    @property
    def status(self) -> str:
        return self.fields.get("status", "")

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def reply(self, **fields: str) -> "Frame":
        """Build the response frame for this request."""
        return Frame(
            kind=self.kind,
            src=self.dst,
            dst=self.src,
            req_id=self.req_id,
            is_response=True,
            fields=fields,
        )

    def ok_reply(self, **fields: str) -> "Frame":
        return self.reply(status=STATUS_OK, **fields)

    def err_reply(self, error: BaseException) -> "Frame":
        return self.reply(status=type(error).__name__, message=str(error))


def encode_frame(frame: Frame) -> bytes:
    pairs = [
        ("kind", frame.kind),
        ("src", frame.src),
        ("dst", frame.dst),
        ("req", str(frame.req_id)),
        ("resp", "1" if frame.is_response else "0"),
    ]
    pairs.extend(frame.fields.items())
    body = ";".join(f"{_escape(k)}={_escape(v)}" for k, v in pairs).encode("utf-8")
    return str(len(body)).encode("ascii") + b":" + body


def decode_frame(data: bytes) -> Frame:
    """Inverse of :func:`encode_frame`; raises :class:`WireError` on damage."""
    head, sep, body = data.partition(b":")
    if not sep:
        raise WireError("missing length prefix")
    try:
        length = int(head.decode("ascii"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise WireError(f"bad length prefix {head!r}") from exc
    if length != len(body):
        raise WireError(f"length prefix {length} != body length {len(body)}")
    pairs: dict[str, str] = {}
    if body:
        for chunk in body.decode("utf-8").split(";"):
            key, sep2, value = chunk.partition("=")
            if not sep2:
                raise WireError(f"field {chunk!r} is not key=value")
            pairs[_unescape(key)] = _unescape(value)
    try:
        kind = pairs.pop("kind")
        src = pairs.pop("src")
        dst = pairs.pop("dst")
        req_id = int(pairs.pop("req"))
        is_response = pairs.pop("resp") == "1"
    except KeyError as exc:
        raise WireError(f"missing frame header field {exc}") from exc
    except ValueError as exc:
        raise WireError("non-integer request id") from exc
    return Frame(
        kind=kind,
        src=src,
        dst=dst,
        req_id=req_id,
        is_response=is_response,
        fields=pairs,
    )

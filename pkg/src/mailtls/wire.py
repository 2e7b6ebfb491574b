"""Bit-exact construction and parsing of the minimal handshake messages the
scanner needs.

Builders emit record-framed ClientHellos (SSLv3+ format, plus the legacy SSLv2
format), and the flight parser reads server records until ServerHelloDone, a
fatal Alert, stream end, or a size cap.  The scanner never completes key
exchange: everything it measures — selected suite, certificate chain, DH/ECDH
parameters — is on the wire by ServerHelloDone.

All parsers are total: arbitrary input yields an ``alert`` or ``malformed``
result, never an exception, and reads are bounded (record <= 16,640 bytes,
flight <= 1 MiB, chain <= 32 certificates).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Callable, Sequence, Union

from .registry import ProtocolVersion

RECORD_TYPE_CHANGE_CIPHER_SPEC = 20
RECORD_TYPE_ALERT = 21
RECORD_TYPE_HANDSHAKE = 22
RECORD_TYPE_APPLICATION_DATA = 23

HANDSHAKE_CLIENT_HELLO = 1
HANDSHAKE_SERVER_HELLO = 2
HANDSHAKE_CERTIFICATE = 11
HANDSHAKE_SERVER_KEY_EXCHANGE = 12
HANDSHAKE_SERVER_HELLO_DONE = 14

SSLV2_MSG_ERROR = 0
SSLV2_MSG_CLIENT_HELLO = 1
SSLV2_MSG_SERVER_HELLO = 4
SSLV2_VERSION_BYTES = b"\x00\x02"
SSLV2_ERROR_NO_CIPHER = 0x0001

EXTENSION_SUPPORTED_GROUPS = 0x000A
EXTENSION_EC_POINT_FORMATS = 0x000B

MAX_RECORD_BYTES = 16_640  # 2^14 payload plus generous slack
MAX_FLIGHT_BYTES = 1 << 20
MAX_CHAIN_CERTS = 32

ALERT_NAMES = {
    0: "close_notify",
    10: "unexpected_message",
    20: "bad_record_mac",
    21: "decryption_failed",
    22: "record_overflow",
    30: "decompression_failure",
    40: "handshake_failure",
    41: "no_certificate",
    42: "bad_certificate",
    43: "unsupported_certificate",
    44: "certificate_revoked",
    45: "certificate_expired",
    46: "certificate_unknown",
    47: "illegal_parameter",
    48: "unknown_ca",
    49: "access_denied",
    50: "decode_error",
    51: "decrypt_error",
    60: "export_restriction",
    70: "protocol_version",
    71: "insufficient_security",
    80: "internal_error",
    86: "inappropriate_fallback",
    90: "user_canceled",
    100: "no_renegotiation",
    110: "unsupported_extension",
    112: "unrecognized_name",
    120: "no_application_protocol",
}


class AlertLevel(Enum):
    WARNING = 1
    FATAL = 2


@dataclass(frozen=True)
class AlertInfo:
    level: AlertLevel
    code: int
    name: str

    @classmethod
    def from_code(cls, level: AlertLevel, code: int) -> "AlertInfo":
        return cls(level=level, code=code, name=ALERT_NAMES.get(code, f"alert_{code}"))


def bit_length(value: int) -> int:
    """Number of bits in the minimal binary representation of a positive integer."""
    if value <= 0:
        raise ValueError(f"bit_length requires a positive integer, got {value}")
    return value.bit_length()


@dataclass(frozen=True)
class DhParameters:
    """Classic Diffie-Hellman parameters from a ServerKeyExchange."""

    prime: int
    generator: int
    server_public: int
    prime_bytes: bytes  # raw big-endian bytes as sent, leading zeros preserved

    @property
    def prime_bits(self) -> int:
        return bit_length(self.prime)


class CurveKind(Enum):
    NAMED_CURVE = "namedCurve"
    OTHER = "other"


def _load_curve_table() -> dict[int, str]:
    text = resources.files("mailtls").joinpath("data/curves.csv").read_text("utf-8")
    table = {}
    for line in text.splitlines()[1:]:
        if line.strip():
            raw_id, name = line.split(",", 1)
            table[int(raw_id)] = name.strip()
    return table


#: Fixed named-curve table: the curves specified for TLS (ids 1-25 plus the
#: three brainpool curves).  ECDHE probes advertise all of them so the server's
#: choice, not the client offer, drives curve statistics.
NAMED_CURVES: dict[int, str] = _load_curve_table()


@dataclass(frozen=True)
class EcdhParameters:
    curve_kind: CurveKind
    curve_id: int | None
    curve_name: str | None

    @classmethod
    def named(cls, curve_id: int) -> "EcdhParameters":
        return cls(
            curve_kind=CurveKind.NAMED_CURVE,
            curve_id=curve_id,
            curve_name=NAMED_CURVES.get(curve_id),
        )


KexParams = Union[DhParameters, EcdhParameters]


# ---------------------------------------------------------------------------
# ClientHello construction


def _vector(payload: bytes, length_bytes: int) -> bytes:
    return len(payload).to_bytes(length_bytes, "big") + payload


def _ec_extensions() -> bytes:
    groups = b"".join(cid.to_bytes(2, "big") for cid in sorted(NAMED_CURVES))
    supported_groups = (
        EXTENSION_SUPPORTED_GROUPS.to_bytes(2, "big") + _vector(_vector(groups, 2), 2)
    )
    point_formats = (
        EXTENSION_EC_POINT_FORMATS.to_bytes(2, "big") + _vector(_vector(b"\x00", 1), 2)
    )
    return _vector(supported_groups + point_formats, 2)


def build_client_hello(
    version: ProtocolVersion,
    suites: Sequence[bytes],
    random: bytes,
    ec_probe: bool | None = None,
) -> bytes:
    """Record-framed SSLv3+/TLS ClientHello offering exactly the given suites.

    No extensions are attached except when probing elliptic-curve suites, in
    which case supported-groups (every curve from the fixed table) and
    ec-point-formats are included.  ``ec_probe=None`` auto-detects EC suites by
    their 0xC0 id prefix; pass an explicit flag when offering ids outside the
    bundled registry.
    """
    if version is ProtocolVersion.SSLv2:
        raise ValueError("SSLv2 uses the legacy hello format, see build_sslv2_client_hello")
    if not suites:
        raise ValueError("suite list must be nonempty")
    if any(len(s) != 2 for s in suites):
        raise ValueError("SSLv3+ suite ids are 2 bytes each")
    if len(random) != 32:
        raise ValueError("client random must be 32 bytes")

    if ec_probe is None:
        ec_probe = any(s[0] == 0xC0 for s in suites)

    body = (
        version.wire_bytes
        + random
        + _vector(b"", 1)  # session id
        + _vector(b"".join(bytes(s) for s in suites), 2)
        + _vector(b"\x00", 1)  # null compression only
    )
    if ec_probe:
        body += _ec_extensions()
    handshake = bytes([HANDSHAKE_CLIENT_HELLO]) + len(body).to_bytes(3, "big") + body
    return (
        bytes([RECORD_TYPE_HANDSHAKE])
        + version.wire_bytes
        + len(handshake).to_bytes(2, "big")
        + handshake
    )


def build_sslv2_client_hello(suites: Sequence[bytes], challenge: bytes | None = None) -> bytes:
    """Legacy SSLv2 CLIENT-HELLO: 2-byte high-bit record length, 3-byte suites."""
    if not suites:
        raise ValueError("suite list must be nonempty")
    if any(len(s) != 3 for s in suites):
        raise ValueError("SSLv2 cipher kinds are 3 bytes each")
    if challenge is None:
        challenge = bytes(16)
    if len(challenge) != 16:
        raise ValueError("challenge must be 16 bytes")
    specs = b"".join(bytes(s) for s in suites)
    body = (
        bytes([SSLV2_MSG_CLIENT_HELLO])
        + SSLV2_VERSION_BYTES
        + len(specs).to_bytes(2, "big")
        + (0).to_bytes(2, "big")  # session id length
        + len(challenge).to_bytes(2, "big")
        + specs
        + challenge
    )
    header = bytes([0x80 | (len(body) >> 8), len(body) & 0xFF])
    return header + body


@dataclass(frozen=True)
class ParsedClientHello:
    """Parsed client hello (either wire format); used by tests and the mock."""

    version: ProtocolVersion | None  # None when the version bytes are unknown
    version_bytes: bytes
    random: bytes
    suites: tuple[bytes, ...]
    is_sslv2: bool
    has_ec_extensions: bool
    offered_curves: tuple[int, ...] = ()


def parse_client_hello(data: bytes) -> ParsedClientHello:
    """Parse a record-framed ClientHello of either format (strict; for mocks/tests)."""
    if len(data) < 2:
        raise ValueError("short client hello")
    if data[0] & 0x80:
        return _parse_sslv2_client_hello(data)
    return _parse_tls_client_hello(data)


def _parse_sslv2_client_hello(data: bytes) -> ParsedClientHello:
    length = ((data[0] & 0x7F) << 8) | data[1]
    body = data[2 : 2 + length]
    if len(body) != length or length < 9:
        raise ValueError("truncated SSLv2 hello")
    if body[0] != SSLV2_MSG_CLIENT_HELLO:
        raise ValueError(f"not an SSLv2 CLIENT-HELLO (type {body[0]})")
    version_bytes = body[1:3]
    specs_len = int.from_bytes(body[3:5], "big")
    sid_len = int.from_bytes(body[5:7], "big")
    challenge_len = int.from_bytes(body[7:9], "big")
    rest = body[9:]
    if len(rest) != specs_len + sid_len + challenge_len or specs_len % 3:
        raise ValueError("inconsistent SSLv2 hello lengths")
    specs = rest[:specs_len]
    challenge = rest[specs_len + sid_len :]
    return ParsedClientHello(
        version=ProtocolVersion.SSLv2 if version_bytes == SSLV2_VERSION_BYTES else None,
        version_bytes=version_bytes,
        random=challenge,
        suites=tuple(specs[i : i + 3] for i in range(0, specs_len, 3)),
        is_sslv2=True,
        has_ec_extensions=False,
    )


def _parse_tls_client_hello(data: bytes) -> ParsedClientHello:
    if len(data) < 5:
        raise ValueError("short record")
    if data[0] != RECORD_TYPE_HANDSHAKE:
        raise ValueError(f"not a handshake record (type {data[0]})")
    record_len = int.from_bytes(data[3:5], "big")
    payload = data[5 : 5 + record_len]
    if len(payload) != record_len or len(payload) < 4:
        raise ValueError("truncated record")
    if payload[0] != HANDSHAKE_CLIENT_HELLO:
        raise ValueError(f"not a ClientHello (type {payload[0]})")
    body_len = int.from_bytes(payload[1:4], "big")
    body = payload[4 : 4 + body_len]
    if len(body) != body_len:
        raise ValueError("truncated ClientHello body")

    view = io.BytesIO(body)

    def take(n: int, what: str) -> bytes:
        chunk = view.read(n)
        if len(chunk) != n:
            raise ValueError(f"truncated ClientHello at {what}")
        return chunk

    version_bytes = take(2, "version")
    random = take(32, "random")
    sid_len = take(1, "session id length")[0]
    take(sid_len, "session id")
    suites_len = int.from_bytes(take(2, "suite vector length"), "big")
    if suites_len % 2:
        raise ValueError("odd suite vector length")
    suites_raw = take(suites_len, "suite vector")
    comp_len = take(1, "compression length")[0]
    take(comp_len, "compression methods")

    has_ec = False
    curves: tuple[int, ...] = ()
    remaining = view.read()
    if remaining:
        if len(remaining) < 2:
            raise ValueError("truncated extensions length")
        ext_len = int.from_bytes(remaining[:2], "big")
        ext = remaining[2 : 2 + ext_len]
        if len(ext) != ext_len:
            raise ValueError("truncated extensions")
        pos = 0
        while pos + 4 <= len(ext):
            ext_type = int.from_bytes(ext[pos : pos + 2], "big")
            ext_body_len = int.from_bytes(ext[pos + 2 : pos + 4], "big")
            ext_body = ext[pos + 4 : pos + 4 + ext_body_len]
            if len(ext_body) != ext_body_len:
                raise ValueError("truncated extension body")
            if ext_type == EXTENSION_SUPPORTED_GROUPS and len(ext_body) >= 2:
                has_ec = True
                inner_len = int.from_bytes(ext_body[:2], "big")
                inner = ext_body[2 : 2 + inner_len]
                curves = tuple(
                    int.from_bytes(inner[i : i + 2], "big")
                    for i in range(0, len(inner) - len(inner) % 2, 2)
                )
            pos += 4 + ext_body_len

    return ParsedClientHello(
        version=ProtocolVersion.from_wire_bytes(version_bytes),
        version_bytes=version_bytes,
        random=random,
        suites=tuple(suites_raw[i : i + 2] for i in range(0, suites_len, 2)),
        is_sslv2=False,
        has_ec_extensions=has_ec,
        offered_curves=curves,
    )


# ---------------------------------------------------------------------------
# Server flight parsing

Reader = Callable[[int], bytes]
"""Pull function: return at most n bytes, b"" on stream end (or read timeout)."""


@dataclass(frozen=True)
class FlightAccepted:
    selected_suite: bytes
    chain: tuple[bytes, ...]
    kex_params: KexParams | None
    server_version: ProtocolVersion


@dataclass(frozen=True)
class FlightAlert:
    alert: AlertInfo


@dataclass(frozen=True)
class FlightRejected:
    """A well-formed negative answer that is not a TLS Alert (SSLv2 only)."""

    reason: str
    error_code: int | None = None


@dataclass(frozen=True)
class FlightMalformed:
    reason: str


FlightResult = Union[FlightAccepted, FlightAlert, FlightRejected, FlightMalformed]


class _Stream:
    """Byte-counting pull wrapper enforcing the flight byte cap."""

    def __init__(self, reader: Reader, cap: int):
        self._reader = reader
        self._cap = cap
        self.consumed = 0
        self.capped = False

    def read_exact(self, n: int) -> bytes | None:
        if self.consumed + n > self._cap:
            self.capped = True
            return None
        chunks = []
        remaining = n
        while remaining:
            try:
                chunk = self._reader(remaining)
            except Exception:
                chunk = b""
            if not chunk:
                return None
            chunks.append(chunk)
            remaining -= len(chunk)
            self.consumed += len(chunk)
        return b"".join(chunks)


def _as_reader(source: bytes | Reader) -> Reader:
    if callable(source):
        return source
    return io.BytesIO(source).read


def parse_server_flight(
    source: bytes | Reader,
    offered_version: ProtocolVersion,
    offered_suites: Sequence[bytes],
    kex_resolver: Callable[[bytes], str | None] | None = None,
    byte_cap: int = MAX_FLIGHT_BYTES,
) -> FlightResult:
    """Read server records until ServerHelloDone, a fatal Alert, stream end or cap.

    ``kex_resolver`` maps a selected suite id to "dh", "ecdh" or None and
    controls whether a ServerKeyExchange body is interpreted; the message is
    skipped otherwise.  The result is ``accepted`` only for a well-formed
    ServerHello echoing one of the offered suites at the offered version.
    """
    stream = _Stream(_as_reader(source), byte_cap)
    offered = {bytes(s) for s in offered_suites}

    hello: tuple[bytes, ProtocolVersion] | None = None
    chain: tuple[bytes, ...] = ()
    kex_params: KexParams | None = None
    handshake_buf = bytearray()
    saw_done = False
    first_record = True

    def finish() -> FlightResult:
        if hello is None:
            if stream.capped:
                return FlightMalformed("flight byte cap exceeded")
            return FlightMalformed("truncated")
        return FlightAccepted(
            selected_suite=hello[0],
            chain=chain,
            kex_params=kex_params,
            server_version=hello[1],
        )

    while not saw_done:
        header = stream.read_exact(5)
        if header is None:
            return finish()
        record_type = header[0]
        if first_record and record_type & 0x80:
            return FlightMalformed("legacy SSLv2 response to an SSLv3+ hello")
        first_record = False
        record_len = int.from_bytes(header[3:5], "big")
        if record_len > MAX_RECORD_BYTES:
            return FlightMalformed(f"record length {record_len} exceeds cap")
        payload = stream.read_exact(record_len)
        if payload is None:
            return finish()

        if record_type == RECORD_TYPE_ALERT:
            if len(payload) < 2:
                return FlightMalformed("short alert record")
            try:
                level = AlertLevel(payload[0])
            except ValueError:
                return FlightMalformed(f"bad alert level {payload[0]}")
            if level is AlertLevel.WARNING:
                continue
            if hello is not None:
                # Fatal alert after a complete ServerHello: acceptance was
                # already signalled; stop reading and keep what we have.
                return finish()
            return FlightAlert(AlertInfo.from_code(level, payload[1]))
        if record_type != RECORD_TYPE_HANDSHAKE:
            return FlightMalformed(f"unexpected record type {record_type}")

        handshake_buf += payload
        while len(handshake_buf) >= 4:
            msg_len = int.from_bytes(handshake_buf[1:4], "big")
            if len(handshake_buf) - 4 < msg_len:
                break
            msg_type = handshake_buf[0]
            body = bytes(handshake_buf[4 : 4 + msg_len])
            del handshake_buf[: 4 + msg_len]

            if msg_type == HANDSHAKE_SERVER_HELLO:
                outcome = _parse_server_hello(body, offered_version, offered)
                if not isinstance(outcome, tuple):
                    return outcome
                hello = outcome
            elif msg_type == HANDSHAKE_CERTIFICATE:
                if hello is None:
                    return FlightMalformed("Certificate before ServerHello")
                parsed = _parse_certificate_chain(body)
                if parsed is None:
                    return FlightMalformed("bad certificate message")
                chain = parsed
            elif msg_type == HANDSHAKE_SERVER_KEY_EXCHANGE:
                if hello is None:
                    return FlightMalformed("ServerKeyExchange before ServerHello")
                family = kex_resolver(hello[0]) if kex_resolver else None
                if family == "dh":
                    dh = _parse_dh_params(body)
                    if isinstance(dh, FlightMalformed):
                        return dh
                    kex_params = dh
                elif family == "ecdh":
                    ecdh = _parse_ecdh_params(body)
                    if isinstance(ecdh, FlightMalformed):
                        return ecdh
                    kex_params = ecdh
            elif msg_type == HANDSHAKE_SERVER_HELLO_DONE:
                if hello is None:
                    return FlightMalformed("ServerHelloDone before ServerHello")
                saw_done = True
                break
            # Other handshake messages are tolerated and skipped.

    return finish()


def _parse_server_hello(
    body: bytes, offered_version: ProtocolVersion, offered: set[bytes]
) -> tuple[bytes, ProtocolVersion] | FlightMalformed:
    if len(body) < 2 + 32 + 1:
        return FlightMalformed("short ServerHello")
    version = ProtocolVersion.from_wire_bytes(body[0:2])
    if version is not offered_version:
        # Per-version acceptance is the datum being measured: any deviation
        # from the offered version, including downgrades, is a mismatch.
        return FlightMalformed("version mismatch")
    sid_len = body[34]
    pos = 35 + sid_len
    if len(body) < pos + 3:
        return FlightMalformed("truncated ServerHello")
    suite = body[pos : pos + 2]
    if suite not in offered:
        return FlightMalformed("suite not offered")
    return (suite, version)


def _parse_certificate_chain(body: bytes) -> tuple[bytes, ...] | None:
    if len(body) < 3:
        return None
    total = int.from_bytes(body[0:3], "big")
    blob = body[3 : 3 + total]
    if len(blob) != total:
        return None
    certs: list[bytes] = []
    pos = 0
    while pos < len(blob):
        if pos + 3 > len(blob) or len(certs) >= MAX_CHAIN_CERTS:
            return None
        cert_len = int.from_bytes(blob[pos : pos + 3], "big")
        cert = blob[pos + 3 : pos + 3 + cert_len]
        if len(cert) != cert_len:
            return None
        certs.append(cert)
        pos += 3 + cert_len
    return tuple(certs)


def _parse_dh_params(body: bytes) -> DhParameters | FlightMalformed:
    view = io.BytesIO(body)

    def take_vector() -> bytes | None:
        raw_len = view.read(2)
        if len(raw_len) != 2:
            return None
        length = int.from_bytes(raw_len, "big")
        chunk = view.read(length)
        return chunk if len(chunk) == length else None

    p_bytes = take_vector()
    g_bytes = take_vector()
    ys_bytes = take_vector()
    if p_bytes is None or g_bytes is None or ys_bytes is None or not p_bytes:
        return FlightMalformed("truncated DH params")
    prime = int.from_bytes(p_bytes, "big")
    generator = int.from_bytes(g_bytes, "big")
    server_public = int.from_bytes(ys_bytes, "big")
    if prime == 0 or generator < 2 or server_public >= prime:
        return FlightMalformed("bad dh params")
    # Signature (for authenticated suites) trails the params; not verified.
    return DhParameters(
        prime=prime, generator=generator, server_public=server_public, prime_bytes=p_bytes
    )


def _parse_ecdh_params(body: bytes) -> EcdhParameters | FlightMalformed:
    if not body:
        return FlightMalformed("empty ECDH params")
    curve_type = body[0]
    if curve_type != 3:  # explicit prime/char2 curves: recorded, not resolved
        return EcdhParameters(curve_kind=CurveKind.OTHER, curve_id=None, curve_name=None)
    if len(body) < 4:
        return FlightMalformed("truncated ECDH params")
    curve_id = int.from_bytes(body[1:3], "big")
    point_len = body[3]
    if len(body) < 4 + point_len:
        return FlightMalformed("truncated ECDH public point")
    return EcdhParameters.named(curve_id)


# ---------------------------------------------------------------------------
# SSLv2 server response parsing


def parse_sslv2_server_flight(
    source: bytes | Reader,
    offered_suites: Sequence[bytes],
    byte_cap: int = MAX_FLIGHT_BYTES,
) -> FlightResult:
    """Parse the SSLv2 SERVER-HELLO (or ERROR) answering a legacy hello.

    Accepted when the server's cipher-spec list intersects the offer; the
    selected suite is the first offered suite the server echoes.  The SSLv2
    SERVER-HELLO carries a single certificate, returned as a one-element chain.
    """
    stream = _Stream(_as_reader(source), byte_cap)
    offered = [bytes(s) for s in offered_suites]

    header = stream.read_exact(2)
    if header is None:
        return FlightMalformed("truncated")
    if header[0] & 0x80:
        length = ((header[0] & 0x7F) << 8) | header[1]
    else:
        # Three-byte header with a padding field.
        ext = stream.read_exact(1)
        if ext is None:
            return FlightMalformed("truncated")
        length = ((header[0] & 0x3F) << 8) | header[1]
    if length > MAX_RECORD_BYTES:
        return FlightMalformed(f"record length {length} exceeds cap")
    body = stream.read_exact(length)
    if body is None or not body:
        return FlightMalformed("truncated")

    msg_type = body[0]
    if msg_type == SSLV2_MSG_ERROR:
        if len(body) < 3:
            return FlightMalformed("short SSLv2 ERROR")
        code = int.from_bytes(body[1:3], "big")
        reason = "no cipher" if code == SSLV2_ERROR_NO_CIPHER else f"sslv2 error {code}"
        return FlightRejected(reason=reason, error_code=code)
    if msg_type != SSLV2_MSG_SERVER_HELLO:
        return FlightMalformed(f"unexpected SSLv2 message type {msg_type}")
    if len(body) < 11:
        return FlightMalformed("short SSLv2 SERVER-HELLO")

    cert_len = int.from_bytes(body[5:7], "big")
    specs_len = int.from_bytes(body[7:9], "big")
    sid_len = int.from_bytes(body[9:11], "big")
    rest = body[11:]
    if len(rest) != cert_len + specs_len + sid_len or specs_len % 3:
        return FlightMalformed("inconsistent SSLv2 SERVER-HELLO lengths")
    certificate = rest[:cert_len]
    specs_raw = rest[cert_len : cert_len + specs_len]
    specs = {specs_raw[i : i + 3] for i in range(0, specs_len, 3)}

    for suite in offered:
        if suite in specs:
            return FlightAccepted(
                selected_suite=suite,
                chain=(certificate,) if certificate else (),
                kex_params=None,
                server_version=ProtocolVersion.SSLv2,
            )
    return FlightRejected(reason="offered cipher not in server list")


# ---------------------------------------------------------------------------
# Server-side builders (used by the mock testbed and fixtures)


def build_record(record_type: int, version: ProtocolVersion, payload: bytes) -> bytes:
    return bytes([record_type]) + version.wire_bytes + len(payload).to_bytes(2, "big") + payload


def build_handshake(msg_type: int, body: bytes) -> bytes:
    return bytes([msg_type]) + len(body).to_bytes(3, "big") + body


def build_server_hello(version: ProtocolVersion, suite: bytes, random: bytes | None = None) -> bytes:
    random = random if random is not None else bytes(32)
    body = version.wire_bytes + random + b"\x00" + bytes(suite) + b"\x00"
    return build_handshake(HANDSHAKE_SERVER_HELLO, body)


def build_certificate(chain: Sequence[bytes]) -> bytes:
    blob = b"".join(len(c).to_bytes(3, "big") + c for c in chain)
    return build_handshake(HANDSHAKE_CERTIFICATE, len(blob).to_bytes(3, "big") + blob)


def build_dh_server_key_exchange(
    prime: int, generator: int, server_public: int, signature: bytes | None = None
) -> bytes:
    def vector(value: int) -> bytes:
        raw = value.to_bytes((value.bit_length() + 7) // 8 or 1, "big")
        return _vector(raw, 2)

    body = vector(prime) + vector(generator) + vector(server_public)
    if signature is not None:
        body += signature
    return build_handshake(HANDSHAKE_SERVER_KEY_EXCHANGE, body)


def build_ecdh_server_key_exchange(curve_id: int, signature: bytes | None = None) -> bytes:
    point = b"\x04" + bytes(64)
    body = b"\x03" + curve_id.to_bytes(2, "big") + _vector(point, 1)
    if signature is not None:
        body += signature
    return build_handshake(HANDSHAKE_SERVER_KEY_EXCHANGE, body)


def build_server_hello_done() -> bytes:
    return build_handshake(HANDSHAKE_SERVER_HELLO_DONE, b"")


def build_alert(level: AlertLevel, code: int, version: ProtocolVersion) -> bytes:
    return build_record(RECORD_TYPE_ALERT, version, bytes([level.value, code]))


def build_sslv2_server_hello(certificate: bytes, specs: Sequence[bytes]) -> bytes:
    specs_blob = b"".join(bytes(s) for s in specs)
    body = (
        bytes([SSLV2_MSG_SERVER_HELLO, 0, 1])  # no session hit, X.509 cert type
        + SSLV2_VERSION_BYTES
        + len(certificate).to_bytes(2, "big")
        + len(specs_blob).to_bytes(2, "big")
        + (0).to_bytes(2, "big")
        + certificate
        + specs_blob
    )
    header = bytes([0x80 | (len(body) >> 8), len(body) & 0xFF])
    return header + body


def build_sslv2_error(code: int = SSLV2_ERROR_NO_CIPHER) -> bytes:
    body = bytes([SSLV2_MSG_ERROR]) + code.to_bytes(2, "big")
    header = bytes([0x80 | (len(body) >> 8), len(body) & 0xFF])
    return header + body

"""Scan-record data model and its JSON-lines serialization.

A scan output file starts with a header line ``{"schema": "mailtls/scan/v1"}``
followed by one JSON object per scanned endpoint.  All hex is lowercase,
timestamps are RFC-3339 UTC, and DER certificates travel base64-encoded in a
per-record ``chains`` map keyed by chain fingerprint so each distinct chain is
stored once per record.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import IO, Iterable, Iterator

from .drivers import AppProtocol, AuthExposure
from .errors import InputFormatError
from .registry import ProtocolVersion
from .wire import AlertInfo, AlertLevel, DhParameters, EcdhParameters, CurveKind

SCAN_SCHEMA = "mailtls/scan/v1"


def format_timestamp(epoch: float) -> str:
    return (
        datetime.fromtimestamp(epoch, tz=timezone.utc)
        .isoformat(timespec="microseconds")
        .replace("+00:00", "Z")
    )


def parse_timestamp(text: str) -> float:
    return datetime.fromisoformat(text.replace("Z", "+00:00")).timestamp()


@dataclass(frozen=True, order=True)
class Endpoint:
    host: str
    port: int
    protocol: AppProtocol

    @property
    def label(self) -> str:
        return f"{self.host}:{self.port}/{self.protocol.value}"

    def to_json(self) -> dict:
        return {"host": self.host, "port": self.port, "protocol": self.protocol.value}

    @classmethod
    def from_json(cls, raw: dict) -> "Endpoint":
        return cls(
            host=raw["host"],
            port=int(raw["port"]),
            protocol=AppProtocol.from_label(raw["protocol"]),
        )


def parse_target_line(line: str) -> Endpoint:
    """One target: ``ip,port[,protocol]`` or a JSON object with those fields."""
    text = line.strip()
    if text.startswith("{"):
        try:
            return Endpoint.from_json(json.loads(text))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise InputFormatError(f"bad target line {text[:80]!r}: {exc}") from None
    parts = [p.strip() for p in text.split(",")]
    if len(parts) not in (2, 3):
        raise InputFormatError(f"bad target line {text[:80]!r}: expected ip,port[,protocol]")
    try:
        port = int(parts[1])
    except ValueError:
        raise InputFormatError(f"bad port in target line {text[:80]!r}") from None
    if len(parts) == 3:
        try:
            protocol = AppProtocol.from_label(parts[2])
        except ValueError as exc:
            raise InputFormatError(f"bad target line {text[:80]!r}: {exc}") from None
    else:
        inferred = AppProtocol.from_port(port)
        if inferred is None:
            raise InputFormatError(
                f"bad target line {text[:80]!r}: port {port} has no default protocol"
            )
        protocol = inferred
    return Endpoint(host=parts[0], port=port, protocol=protocol)


def read_targets(stream: Iterable[str]) -> Iterator[Endpoint]:
    for line in stream:
        if line.strip() and not line.lstrip().startswith("#"):
            yield parse_target_line(line)


class ProbeStatus(Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    PREFERRED = "preferred"
    ERROR = "error"


def chain_fingerprint(chain: tuple[bytes, ...]) -> str:
    """SHA-1 over the chain with per-certificate length framing, lowercase hex."""
    digest = hashlib.sha1()
    for cert in chain:
        digest.update(len(cert).to_bytes(3, "big"))
        digest.update(cert)
    return digest.hexdigest()


@dataclass
class ProbeOutcome:
    version: ProtocolVersion
    suite_id: bytes | None  # None for a preference probe that selected nothing
    status: ProbeStatus
    started_at: float
    alert: AlertInfo | None = None
    error_reason: str | None = None
    dh: DhParameters | None = None
    ecdh: EcdhParameters | None = None
    chain_ref: str | None = None

    def to_json(self) -> dict:
        out: dict = {
            "version": self.version.label,
            "suite": self.suite_id.hex() if self.suite_id is not None else None,
            "status": self.status.value,
            "startedAt": format_timestamp(self.started_at),
        }
        if self.alert is not None:
            out["alert"] = {
                "level": self.alert.level.name.lower(),
                "code": self.alert.code,
                "name": self.alert.name,
            }
        if self.error_reason is not None:
            out["errorReason"] = self.error_reason
        if self.dh is not None:
            out["dh"] = {
                "prime": self.dh.prime_bytes.hex(),
                "generator": self.dh.generator,
                "primeBits": self.dh.prime_bits,
            }
        if self.ecdh is not None:
            out["ecdh"] = {
                "curveKind": self.ecdh.curve_kind.value,
                "curveId": self.ecdh.curve_id,
                "curveName": self.ecdh.curve_name,
            }
        if self.chain_ref is not None:
            out["chainRef"] = self.chain_ref
        return out

    @classmethod
    def from_json(cls, raw: dict) -> "ProbeOutcome":
        alert = None
        if raw.get("alert") is not None:
            alert = AlertInfo(
                level=AlertLevel[raw["alert"]["level"].upper()],
                code=int(raw["alert"]["code"]),
                name=raw["alert"]["name"],
            )
        dh = None
        if raw.get("dh") is not None:
            prime_bytes = bytes.fromhex(raw["dh"]["prime"])
            dh = DhParameters(
                prime=int.from_bytes(prime_bytes, "big"),
                generator=int(raw["dh"]["generator"]),
                server_public=0,
                prime_bytes=prime_bytes,
            )
        ecdh = None
        if raw.get("ecdh") is not None:
            ecdh = EcdhParameters(
                curve_kind=CurveKind(raw["ecdh"]["curveKind"]),
                curve_id=raw["ecdh"]["curveId"],
                curve_name=raw["ecdh"]["curveName"],
            )
        suite = raw.get("suite")
        return cls(
            version=ProtocolVersion.from_label(raw["version"]),
            suite_id=bytes.fromhex(suite) if suite else None,
            status=ProbeStatus(raw["status"]),
            started_at=parse_timestamp(raw["startedAt"]),
            alert=alert,
            error_reason=raw.get("errorReason"),
            dh=dh,
            ecdh=ecdh,
            chain_ref=raw.get("chainRef"),
        )


@dataclass
class CapabilitiesSnapshot:
    """Pre-TLS disclosures plus the outcome of the upgrade attempt."""

    banner: str
    capabilities: tuple[str, ...]
    advertises_starttls: bool
    advertises_auth_plain_pre_tls: bool
    auth_mechanisms: tuple[str, ...]
    starttls_ok: bool
    auth_exposure: AuthExposure

    def to_json(self) -> dict:
        return {
            "banner": self.banner,
            "capabilities": list(self.capabilities),
            "advertisesStartTls": self.advertises_starttls,
            "advertisesAuthPlainPreTls": self.advertises_auth_plain_pre_tls,
            "authMechanisms": list(self.auth_mechanisms),
            "starttlsOk": self.starttls_ok,
            "authExposure": self.auth_exposure.value,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "CapabilitiesSnapshot":
        return cls(
            banner=raw["banner"],
            capabilities=tuple(raw["capabilities"]),
            advertises_starttls=raw["advertisesStartTls"],
            advertises_auth_plain_pre_tls=raw["advertisesAuthPlainPreTls"],
            auth_mechanisms=tuple(raw["authMechanisms"]),
            starttls_ok=raw["starttlsOk"],
            auth_exposure=AuthExposure(raw["authExposure"]),
        )


@dataclass
class HostScanRecord:
    endpoint: Endpoint
    started_at: float
    ended_at: float
    validity: str  # "valid" | "invalid"
    invalid_reason: str | None = None
    capabilities: CapabilitiesSnapshot | None = None
    outcomes: list[ProbeOutcome] = field(default_factory=list)
    chains: dict[str, tuple[bytes, ...]] = field(default_factory=dict)
    scan_error: str | None = None

    @property
    def is_valid(self) -> bool:
        return self.validity == "valid"

    def to_json(self) -> dict:
        out: dict = {
            "endpoint": self.endpoint.to_json(),
            "scanWindow": {
                "start": format_timestamp(self.started_at),
                "end": format_timestamp(self.ended_at),
            },
            "validity": self.validity,
            "invalidReason": self.invalid_reason,
            "capabilities": self.capabilities.to_json() if self.capabilities else None,
            "outcomes": [o.to_json() for o in self.outcomes],
            "chains": {
                ref: [base64.b64encode(cert).decode("ascii") for cert in chain]
                for ref, chain in sorted(self.chains.items())
            },
        }
        if self.scan_error is not None:
            out["scanError"] = self.scan_error
        return out

    @classmethod
    def from_json(cls, raw: dict) -> "HostScanRecord":
        window = raw["scanWindow"]
        capabilities = raw.get("capabilities")
        return cls(
            endpoint=Endpoint.from_json(raw["endpoint"]),
            started_at=parse_timestamp(window["start"]),
            ended_at=parse_timestamp(window["end"]),
            validity=raw["validity"],
            invalid_reason=raw.get("invalidReason"),
            capabilities=CapabilitiesSnapshot.from_json(capabilities) if capabilities else None,
            outcomes=[ProbeOutcome.from_json(o) for o in raw.get("outcomes", [])],
            chains={
                ref: tuple(base64.b64decode(cert) for cert in chain)
                for ref, chain in raw.get("chains", {}).items()
            },
            scan_error=raw.get("scanError"),
        )


class RecordWriter:
    """Thread-safe JSONL sink; each record is written as one atomic line."""

    def __init__(self, stream: IO[str], schema: str = SCAN_SCHEMA):
        self._stream = stream
        self._lock = threading.Lock()
        self.records_written = 0
        self._write_line({"schema": schema})

    def _write_line(self, payload: dict) -> None:
        line = json.dumps(payload, separators=(",", ":"), sort_keys=True)
        with self._lock:
            self._stream.write(line + "\n")
            self._stream.flush()

    def write_record(self, record: HostScanRecord) -> None:
        self._write_line(record.to_json())
        self.records_written += 1

    def write_partial_marker(self, error: str) -> None:
        self._write_line({"partial": True, "error": error})


def read_records(stream: Iterable[str], schema: str = SCAN_SCHEMA) -> Iterator[HostScanRecord]:
    """Read a scan JSONL stream, checking the header line."""
    lines = iter(stream)
    try:
        first = next(lines)
    except StopIteration:
        raise InputFormatError("empty scan file (missing schema header)") from None
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"bad schema header: {exc}") from None
    if not isinstance(header, dict) or header.get("schema") != schema:
        raise InputFormatError(
            f"unexpected schema header {header!r}; expected {{'schema': {schema!r}}}"
        )
    for number, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"line {number}: {exc}") from None
        if raw.get("partial"):
            raise InputFormatError(f"line {number}: file is marked partial: {raw.get('error')}")
        try:
            yield HostScanRecord.from_json(raw)
        except (KeyError, ValueError) as exc:
            raise InputFormatError(f"line {number}: bad record: {exc}") from None


def load_records(path: str) -> list[HostScanRecord]:
    with open(path, "r", encoding="utf-8") as handle:
        return list(read_records(handle))

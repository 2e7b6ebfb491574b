"""Builders for synthetic scan records, shared by report and analysis tests."""

from __future__ import annotations

import base64
import time

from mailtls.drivers import AppProtocol, AuthExposure
from mailtls.records import (
    CapabilitiesSnapshot,
    Endpoint,
    HostScanRecord,
    ProbeOutcome,
    ProbeStatus,
    chain_fingerprint,
)
from mailtls.registry import ProtocolVersion
from mailtls.wire import CurveKind, DhParameters, EcdhParameters

__all__ = [
    "accepted",
    "dh_outcome",
    "ecdh_outcome",
    "host_record",
    "invalid_record",
    "preferred",
]


def accepted(version: ProtocolVersion, suite_id: bytes, chain_ref: str | None = None):
    return ProbeOutcome(
        version=version,
        suite_id=suite_id,
        status=ProbeStatus.ACCEPTED,
        started_at=time.time(),
        chain_ref=chain_ref,
    )


def preferred(version: ProtocolVersion, suite_id: bytes | None):
    return ProbeOutcome(
        version=version,
        suite_id=suite_id,
        status=ProbeStatus.PREFERRED,
        started_at=time.time(),
    )


def dh_outcome(version: ProtocolVersion, suite_id: bytes, prime: int, generator: int = 2):
    out = accepted(version, suite_id)
    out.dh = DhParameters(
        prime=prime,
        generator=generator,
        server_public=pow(generator, 0x2A2A2A, prime),
        prime_bytes=prime.to_bytes((prime.bit_length() + 7) // 8, "big"),
    )
    return out


def ecdh_outcome(version: ProtocolVersion, suite_id: bytes, curve_id: int | None, curve_name: str | None):
    out = accepted(version, suite_id)
    kind = CurveKind.NAMED_CURVE if curve_id is not None else CurveKind.OTHER
    out.ecdh = EcdhParameters(curve_kind=kind, curve_id=curve_id, curve_name=curve_name)
    return out


def host_record(
    host: str,
    port: int,
    outcomes,
    protocol: AppProtocol = AppProtocol.SMTP,
    chains: dict[str, list[bytes]] | None = None,
    capabilities: CapabilitiesSnapshot | None = None,
) -> HostScanRecord:
    now = time.time()
    return HostScanRecord(
        endpoint=Endpoint(host=host, port=port, protocol=protocol),
        started_at=now,
        ended_at=now,
        validity="valid",
        invalid_reason=None,
        capabilities=capabilities
        or CapabilitiesSnapshot(
            banner="220 synthetic",
            capabilities=("STARTTLS",),
            advertises_starttls=True,
            advertises_auth_plain_pre_tls=False,
            auth_mechanisms=(),
            starttls_ok=True,
            auth_exposure=AuthExposure.SAFE,
        ),
        outcomes=list(outcomes),
        chains=dict(chains or {}),
    )


def invalid_record(
    host: str,
    port: int,
    reason: str,
    protocol: AppProtocol = AppProtocol.SMTP,
) -> HostScanRecord:
    now = time.time()
    return HostScanRecord(
        endpoint=Endpoint(host=host, port=port, protocol=protocol),
        started_at=now,
        ended_at=now,
        validity="invalid",
        invalid_reason=reason,
    )


def chain_entry(*ders: bytes) -> tuple[str, list[bytes]]:
    """(fingerprint, blobs) pair for HostScanRecord.chains."""
    return chain_fingerprint(tuple(ders)), list(ders)


def decode_chain(b64_list) -> list[bytes]:
    return [base64.b64decode(c) for c in b64_list]

"""Wire codec: hello round trips, flight parsing, and the OpenSSL captures."""

from __future__ import annotations

import base64
import random

import pytest

from mailtls import wire
from mailtls.records import chain_fingerprint
from mailtls.registry import ProtocolVersion
from mailtls.scanner import make_kex_resolver

TLS_VERSIONS = (
    ProtocolVersion.SSLv3,
    ProtocolVersion.TLSv1,
    ProtocolVersion.TLSv1_1,
    ProtocolVersion.TLSv1_2,
)


def suite_ids(registry, count, rng):
    population = [s.id for s in registry.tls_suites()]
    return rng.sample(population, count)


# ---------------------------------------------------------------------------
# ClientHello


def test_client_hello_round_trip_exhaustive_versions(registry):
    rng = random.Random(1)
    for version in TLS_VERSIONS:
        suites = suite_ids(registry, 5, rng)
        rand = bytes(rng.getrandbits(8) for _ in range(32))
        parsed = wire.parse_client_hello(wire.build_client_hello(version, suites, rand))
        assert parsed.version is version
        assert parsed.random == rand
        assert list(parsed.suites) == suites
        assert not parsed.is_sslv2


def test_client_hello_single_suite_has_no_ec_extensions_unless_ec(registry):
    rsa = registry.by_name("TLS_RSA_WITH_AES_128_CBC_SHA")
    ecdhe = registry.by_name("TLS_ECDHE_RSA_WITH_AES_128_GCM_SHA256")
    plain = wire.parse_client_hello(
        wire.build_client_hello(ProtocolVersion.TLSv1, [rsa.id], bytes(32))
    )
    ec = wire.parse_client_hello(
        wire.build_client_hello(ProtocolVersion.TLSv1, [ecdhe.id], bytes(32))
    )
    assert not plain.has_ec_extensions
    assert ec.has_ec_extensions
    assert ec.offered_curves  # non-empty named-curve list


def test_client_hello_ec_probe_override(registry):
    rsa = registry.by_name("TLS_RSA_WITH_AES_128_CBC_SHA")
    forced = wire.parse_client_hello(
        wire.build_client_hello(ProtocolVersion.TLSv1, [rsa.id], bytes(32), ec_probe=True)
    )
    assert forced.has_ec_extensions


def test_sslv2_hello_round_trip(registry):
    suites = [s.id for s in registry.sslv2_suites()]
    parsed = wire.parse_client_hello(wire.build_sslv2_client_hello(suites))
    assert parsed.is_sslv2
    assert parsed.version is ProtocolVersion.SSLv2
    assert list(parsed.suites) == suites


def test_parse_client_hello_rejects_garbage():
    with pytest.raises(Exception):
        wire.parse_client_hello(b"\x16\x03\x01\x00\x05hello")


# ---------------------------------------------------------------------------
# Server flight parsing against synthetic flights


def build_accept_flight(version, suite_id, chain=(), kex_message=b""):
    messages = wire.build_server_hello(version, suite_id) + wire.build_certificate(chain)
    messages += kex_message + wire.build_server_hello_done()
    return wire.build_record(wire.RECORD_TYPE_HANDSHAKE, version, messages)


def test_flight_accepted_echoes_suite(registry):
    suite = registry.by_name("TLS_RSA_WITH_AES_256_CBC_SHA")
    chain = (b"\x30\x03\x02\x01\x01", b"\x30\x03\x02\x01\x02")
    raw = build_accept_flight(ProtocolVersion.TLSv1_1, suite.id, chain)
    result = wire.parse_server_flight(raw, ProtocolVersion.TLSv1_1, [suite.id])
    assert isinstance(result, wire.FlightAccepted)
    assert result.selected_suite == suite.id
    assert result.chain == chain
    assert result.server_version is ProtocolVersion.TLSv1_1


def test_flight_with_unoffered_suite_is_rejected(registry):
    offered = registry.by_name("TLS_RSA_WITH_AES_256_CBC_SHA").id
    echoed = registry.by_name("TLS_RSA_WITH_RC4_128_SHA").id
    raw = build_accept_flight(ProtocolVersion.TLSv1, echoed)
    result = wire.parse_server_flight(raw, ProtocolVersion.TLSv1, [offered])
    assert not isinstance(result, wire.FlightAccepted)


def test_flight_alert_parses_name():
    alert = wire.build_alert(wire.AlertLevel.FATAL, 40, ProtocolVersion.TLSv1)
    result = wire.parse_server_flight(alert, ProtocolVersion.TLSv1, [b"\x00\x2f"])
    assert isinstance(result, wire.FlightAlert)
    assert result.alert.code == 40
    assert result.alert.name == "handshake_failure"
    assert result.alert.level is wire.AlertLevel.FATAL


def test_flight_dh_params_parse(registry):
    suite = registry.by_name("TLS_DHE_RSA_WITH_AES_128_CBC_SHA")
    prime = (1 << 511) | 0x425
    kex = wire.build_dh_server_key_exchange(prime, 2, pow(2, 42, prime), bytes(64))
    raw = build_accept_flight(ProtocolVersion.TLSv1, suite.id, (b"\x30\x00",), kex)
    result = wire.parse_server_flight(
        raw, ProtocolVersion.TLSv1, [suite.id], make_kex_resolver(registry)
    )
    assert isinstance(result, wire.FlightAccepted)
    assert result.kex_params.prime == prime
    assert result.kex_params.generator == 2


def test_flight_ecdh_params_parse(registry):
    suite = registry.by_name("TLS_ECDHE_RSA_WITH_AES_128_CBC_SHA")
    kex = wire.build_ecdh_server_key_exchange(24, bytes(64))
    raw = build_accept_flight(ProtocolVersion.TLSv1_2, suite.id, (b"\x30\x00",), kex)
    result = wire.parse_server_flight(
        raw, ProtocolVersion.TLSv1_2, [suite.id], make_kex_resolver(registry)
    )
    assert isinstance(result, wire.FlightAccepted)
    assert result.kex_params.curve_kind is wire.CurveKind.NAMED_CURVE
    assert result.kex_params.curve_id == 24
    assert result.kex_params.curve_name == "secp384r1"


def test_flight_kex_skipped_without_resolver(registry):
    suite = registry.by_name("TLS_DHE_RSA_WITH_AES_128_CBC_SHA")
    prime = (1 << 511) | 0x425
    kex = wire.build_dh_server_key_exchange(prime, 2, pow(2, 42, prime), bytes(64))
    raw = build_accept_flight(ProtocolVersion.TLSv1, suite.id, (b"\x30\x00",), kex)
    result = wire.parse_server_flight(raw, ProtocolVersion.TLSv1, [suite.id])
    assert isinstance(result, wire.FlightAccepted)
    assert result.kex_params is None


def test_flight_split_across_records(registry):
    """Handshake messages fragmented over several TLS records still parse."""
    suite = registry.by_name("TLS_RSA_WITH_AES_128_CBC_SHA")
    version = ProtocolVersion.TLSv1
    payload = (
        wire.build_server_hello(version, suite.id)
        + wire.build_certificate((b"\x30\x03\x02\x01\x07",))
        + wire.build_server_hello_done()
    )
    pieces = [payload[i : i + 13] for i in range(0, len(payload), 13)]
    raw = b"".join(wire.build_record(wire.RECORD_TYPE_HANDSHAKE, version, p) for p in pieces)
    result = wire.parse_server_flight(raw, version, [suite.id])
    assert isinstance(result, wire.FlightAccepted)
    assert result.chain == (b"\x30\x03\x02\x01\x07",)


def test_flight_truncated_is_malformed(registry):
    suite = registry.by_name("TLS_RSA_WITH_AES_128_CBC_SHA")
    raw = build_accept_flight(ProtocolVersion.TLSv1, suite.id)[:-9]
    result = wire.parse_server_flight(raw, ProtocolVersion.TLSv1, [suite.id])
    assert isinstance(result, wire.FlightMalformed)


def test_flight_byte_cap_enforced(registry):
    suite = registry.by_name("TLS_RSA_WITH_AES_128_CBC_SHA")
    version = ProtocolVersion.TLSv1
    payload = (
        wire.build_server_hello(version, suite.id)
        + wire.build_certificate((b"\x30" + bytes(50_000),))
        + wire.build_server_hello_done()
    )
    pieces = [payload[i : i + 16000] for i in range(0, len(payload), 16000)]
    raw = b"".join(wire.build_record(wire.RECORD_TYPE_HANDSHAKE, version, p) for p in pieces)
    result = wire.parse_server_flight(raw, version, [suite.id], byte_cap=4096)
    assert isinstance(result, wire.FlightMalformed)


def test_sslv2_error_flight(registry):
    suites = [s.id for s in registry.sslv2_suites()]
    result = wire.parse_sslv2_server_flight(wire.build_sslv2_error(1), suites)
    assert isinstance(result, wire.FlightRejected)
    assert result.error_code == 1


def test_sslv2_server_hello_accepts(registry):
    offered = [s.id for s in registry.sslv2_suites()]
    raw = wire.build_sslv2_server_hello(b"\x30\x03\x02\x01\x09", offered[:3])
    result = wire.parse_sslv2_server_flight(raw, offered)
    assert isinstance(result, wire.FlightAccepted)
    assert result.selected_suite in offered[:3]


def test_fuzz_smoke_never_raises(registry):
    rng = random.Random(99)
    offered = [s.id for s in registry.tls_suites()[:8]]
    for _ in range(2000):
        blob = bytes(rng.getrandbits(8) for _ in range(rng.randrange(0, 160)))
        result = wire.parse_server_flight(blob, ProtocolVersion.TLSv1, offered)
        assert isinstance(
            result,
            (wire.FlightAccepted, wire.FlightAlert, wire.FlightRejected, wire.FlightMalformed),
        )


# ---------------------------------------------------------------------------
# The OpenSSL s_server captures: an implementation-independent oracle.


def test_openssl_captures_parse_with_pinned_expectations(registry, openssl_flights):
    resolver = make_kex_resolver(registry)
    for flight in openssl_flights["flights"]:
        raw = base64.b64decode(flight["raw"])
        offered = [bytes.fromhex(flight["offeredSuite"])]
        result = wire.parse_server_flight(raw, ProtocolVersion.TLSv1_2, offered, resolver)
        label = flight["label"]
        if "expectedAlert" in flight:
            assert isinstance(result, wire.FlightAlert), label
            assert result.alert.name == flight["expectedAlert"], label
        else:
            assert isinstance(result, wire.FlightAccepted), label
            assert result.selected_suite.hex() == flight["expectedSuite"], label
            assert (
                chain_fingerprint(result.chain) == openssl_flights["serverChainFingerprint"]
            ), label
            if "expectedCurveId" in flight:
                assert result.kex_params.curve_id == flight["expectedCurveId"], label
                assert result.kex_params.curve_name == flight["expectedCurveName"], label
            if "expectedDhPrimeHex" in flight:
                assert format(result.kex_params.prime, "x") == flight["expectedDhPrimeHex"]
                assert result.kex_params.generator == flight["expectedDhGenerator"]

"""Plaintext-phase drivers exercised against live mocks."""

from __future__ import annotations

import socket

import pytest

from mailtls.drivers import (
    AppProtocol,
    AuthExposure,
    DriverFailure,
    FailureKind,
    LineChannel,
    detect_plaintext_auth_exposure,
    negotiate_plaintext,
    upgrade_starttls,
)
from mailtls.testbed import MockPolicy, spawn_mock


def dial(endpoint) -> LineChannel:
    sock = socket.create_connection((endpoint.host, endpoint.port), timeout=5)
    sock.settimeout(5)
    return LineChannel(sock)


@pytest.fixture
def run_mock(farm_factory):
    def run(policy):
        farm = farm_factory([policy])
        return farm.endpoints[0]

    return run


STARTTLS_PROTOCOLS = (
    AppProtocol.SMTP,
    AppProtocol.SUBMISSION,
    AppProtocol.POP3,
    AppProtocol.IMAP,
)


@pytest.mark.parametrize("protocol", STARTTLS_PROTOCOLS, ids=lambda p: p.value)
def test_negotiate_and_upgrade_happy_path(run_mock, protocol):
    endpoint = run_mock(MockPolicy(name="happy", protocol=protocol))
    channel = dial(endpoint)
    try:
        session = negotiate_plaintext(channel, protocol)
        assert session.protocol is protocol
        assert session.starttls_advertised
        assert "happy" in session.banner
        upgrade_starttls(channel, session)  # no exception = upgraded
    finally:
        channel.close()


def test_smtp_capability_parsing(run_mock):
    endpoint = run_mock(
        MockPolicy(name="caps", protocol=AppProtocol.SMTP, auth_plain_pre_tls=True)
    )
    channel = dial(endpoint)
    try:
        session = negotiate_plaintext(channel, AppProtocol.SMTP)
        assert session.starttls_advertised
        assert "PLAIN" in session.auth_mechanisms
        assert any(c.startswith("STARTTLS") for c in session.capabilities)
    finally:
        channel.close()


def test_banner_reject_classified(run_mock):
    endpoint = run_mock(
        MockPolicy(name="rude", protocol=AppProtocol.SMTP, banner_behavior="reject")
    )
    channel = dial(endpoint)
    try:
        with pytest.raises(DriverFailure) as excinfo:
            negotiate_plaintext(channel, AppProtocol.SMTP)
        assert excinfo.value.kind is FailureKind.CONNECTION_REJECTED
    finally:
        channel.close()


def test_ehlo_reject_classified(run_mock):
    endpoint = run_mock(
        MockPolicy(name="noehlo", protocol=AppProtocol.SMTP, ehlo_behavior="reject")
    )
    channel = dial(endpoint)
    try:
        with pytest.raises(DriverFailure) as excinfo:
            negotiate_plaintext(channel, AppProtocol.SMTP)
        assert excinfo.value.kind is FailureKind.EHLO_REJECTED
    finally:
        channel.close()


def test_starttls_reject_classified(run_mock):
    endpoint = run_mock(
        MockPolicy(name="notls", protocol=AppProtocol.SMTP, starttls_behavior="reject")
    )
    channel = dial(endpoint)
    try:
        session = negotiate_plaintext(channel, AppProtocol.SMTP)
        assert session.starttls_advertised
        with pytest.raises(DriverFailure) as excinfo:
            upgrade_starttls(channel, session)
        assert excinfo.value.kind is FailureKind.STARTTLS_REJECTED
    finally:
        channel.close()


def test_strip_advertisement_hides_capability(run_mock):
    endpoint = run_mock(
        MockPolicy(
            name="stripped", protocol=AppProtocol.SMTP, starttls_behavior="stripAdvertisement"
        )
    )
    channel = dial(endpoint)
    try:
        session = negotiate_plaintext(channel, AppProtocol.SMTP)
        assert not session.starttls_advertised
    finally:
        channel.close()


def test_pop3_capabilities_and_upgrade(run_mock):
    endpoint = run_mock(
        MockPolicy(name="pop", protocol=AppProtocol.POP3, auth_plain_pre_tls=True)
    )
    channel = dial(endpoint)
    try:
        session = negotiate_plaintext(channel, AppProtocol.POP3)
        assert session.starttls_advertised
        assert "PLAIN" in session.auth_mechanisms
        upgrade_starttls(channel, session)
    finally:
        channel.close()


def test_imap_capabilities_and_upgrade(run_mock):
    endpoint = run_mock(
        MockPolicy(name="map", protocol=AppProtocol.IMAP, auth_plain_pre_tls=True)
    )
    channel = dial(endpoint)
    try:
        session = negotiate_plaintext(channel, AppProtocol.IMAP)
        assert session.starttls_advertised
        assert "PLAIN" in session.auth_mechanisms
        upgrade_starttls(channel, session)
    finally:
        channel.close()


def test_auth_exposure_classification():
    class Stub:
        def __init__(self, advertised, plain):
            self.starttls_advertised = advertised
            self.auth_mechanisms = ("PLAIN",) if plain else ("CRAM-MD5",)

    assert (
        detect_plaintext_auth_exposure(Stub(False, True), starttls_ok=False)
        is AuthExposure.NO_STARTTLS
    )
    assert (
        detect_plaintext_auth_exposure(Stub(True, True), starttls_ok=True)
        is AuthExposure.PRE_TLS_AUTH
    )
    assert (
        detect_plaintext_auth_exposure(Stub(True, False), starttls_ok=True)
        is AuthExposure.SAFE
    )
    assert detect_plaintext_auth_exposure(None, starttls_ok=False) is AuthExposure.NO_STARTTLS


def test_implicit_tls_protocols_do_not_negotiate():
    for protocol in (AppProtocol.SMTPS, AppProtocol.IMAPS, AppProtocol.POP3S):
        assert not protocol.uses_starttls


def test_protocol_port_defaults():
    assert AppProtocol.from_port(25) is AppProtocol.SMTP
    assert AppProtocol.from_port(587) is AppProtocol.SUBMISSION
    assert AppProtocol.from_port(110) is AppProtocol.POP3
    assert AppProtocol.from_port(143) is AppProtocol.IMAP
    assert AppProtocol.from_port(465) is AppProtocol.SMTPS
    assert AppProtocol.from_port(993) is AppProtocol.IMAPS
    assert AppProtocol.from_port(995) is AppProtocol.POP3S
    assert AppProtocol.from_port(8080) is None

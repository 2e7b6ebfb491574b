"""Deterministic mock mail servers for exercising the scanner.

A :class:`MockPolicy` pins down everything a probe can observe: the plaintext
dialogue (banner/EHLO/STARTTLS behavior, advertised AUTH mechanisms), the
exact set of ``(version, suite)`` pairs the TLS layer accepts, the server's
suite-selection order, the certificate chain, and DH/ECDH parameters.  The
mock then *is* the oracle: a correct scanner must read the policy back
exactly.

Mocks speak just enough of each protocol for the drivers and the flight
parser — they never complete a key exchange or carry mail.  A farm runs many
mocks on one asyncio loop in a background thread; entries marked ``dead``
reserve a port with no listener so connections are refused.
"""

from __future__ import annotations

import asyncio
import base64
import json
import socket
import threading
from dataclasses import dataclass, replace

from . import wire
from .drivers import AppProtocol
from .errors import InputFormatError
from .registry import ANON_KEX, DH_KEX, ECDH_KEX, ProtocolVersion, Registry, default_registry

CONNECTION_LINGER_SECONDS = 300.0
DEFAULT_DH_PRIME = int(
    "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74"
    "020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f1437"
    "4fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7ed"
    "ee386bfb5a899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf05"
    "98da48361c55d39a69163fa8fd24cf5f83655d23dca3ad961c62f356208552bb"
    "9ed529077096966d670c354e4abc9804f1746c08ca237327ffffffffffffffff",
    16,
)  # RFC 3526 group 5 (1536-bit MODP)


@dataclass(frozen=True)
class MockPolicy:
    """Complete observable behavior of one mock endpoint."""

    name: str
    protocol: AppProtocol
    accepted: frozenset[tuple[ProtocolVersion, bytes]] = frozenset()
    preference_order: tuple[bytes, ...] = ()
    cert_chain: tuple[bytes, ...] = ()
    dh_prime: int | None = None
    dh_generator: int = 2
    curve_id: int | None = None
    starttls_behavior: str = "ok"  # ok | reject | stripAdvertisement
    starttls_reject_code: int = 454
    banner_behavior: str = "ok"  # ok | reject | silent
    banner_reject_code: int = 554
    ehlo_behavior: str = "ok"  # ok | reject
    ehlo_reject_code: int = 502
    auth_plain_pre_tls: bool = False
    sslv2_behavior: str = "error"  # error | close — answer to legacy hellos
    alert_code: int = 40
    dead: bool = False

    def sslv2_suites(self) -> tuple[bytes, ...]:
        return tuple(
            sorted(s for v, s in self.accepted if v is ProtocolVersion.SSLv2)
        )

    def suites_at(self, version: ProtocolVersion) -> set[bytes]:
        return {s for v, s in self.accepted if v is version}

    def validate(self, registry: Registry) -> None:
        for version, suite in self.accepted:
            info = registry.classify(suite)
            if info is None:
                raise InputFormatError(
                    f"policy {self.name}: unknown suite {suite.hex()}"
                )
            if info.is_sslv2 != (version is ProtocolVersion.SSLv2):
                raise InputFormatError(
                    f"policy {self.name}: suite {info.name} cannot be accepted at"
                    f" {version.label}"
                )
            if info.kex in DH_KEX and self.dh_prime is None:
                raise InputFormatError(
                    f"policy {self.name}: {info.name} accepted but dhPrime missing"
                )
            if info.kex in ECDH_KEX and self.curve_id is None:
                raise InputFormatError(
                    f"policy {self.name}: {info.name} accepted but curve missing"
                )
        for known, value in (
            ("ok reject stripAdvertisement", self.starttls_behavior),
            ("ok reject silent", self.banner_behavior),
            ("ok reject", self.ehlo_behavior),
            ("error close", self.sslv2_behavior),
        ):
            if value not in known.split():
                raise InputFormatError(f"policy {self.name}: bad behavior {value!r}")


@dataclass(frozen=True)
class FarmEndpoint:
    name: str
    host: str
    port: int
    protocol: AppProtocol
    policy: MockPolicy


class Farm:
    """Running mock farm; close() tears every listener down."""

    def __init__(self) -> None:
        self.endpoints: list[FarmEndpoint] = []
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._servers: list[asyncio.base_events.Server] = []
        self._dead_sockets: list[socket.socket] = []

    def endpoint(self, name: str) -> FarmEndpoint:
        for ep in self.endpoints:
            if ep.name == name:
                return ep
        raise KeyError(name)

    def close(self) -> None:
        loop, self._loop = self._loop, None
        if loop is not None:

            async def _shutdown() -> None:
                for server in self._servers:
                    server.close()
                for server in self._servers:
                    await server.wait_closed()

            asyncio.run_coroutine_threadsafe(_shutdown(), loop).result(timeout=10)
            loop.call_soon_threadsafe(loop.stop)
            if self._thread is not None:
                self._thread.join(timeout=10)
        self._servers.clear()

    def __enter__(self) -> "Farm":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def _reserve_dead_port(host: str, port: int) -> tuple[socket.socket | None, int]:
    """A port guaranteed (racily, but reliably on loopback) to refuse connects."""
    probe = socket.socket()
    probe.bind((host, port))
    chosen = probe.getsockname()[1]
    probe.close()
    return None, chosen


def spawn_farm(
    policies: list[MockPolicy],
    host: str = "127.0.0.1",
    base_port: int = 0,
    registry: Registry | None = None,
) -> Farm:
    """One mock per policy.  base_port=0 assigns ephemeral ports."""
    registry = registry or default_registry()
    for policy in policies:
        policy.validate(registry)

    farm = Farm()
    loop = asyncio.new_event_loop()
    farm._loop = loop
    thread = threading.Thread(target=loop.run_forever, name="mock-farm", daemon=True)
    farm._thread = thread
    thread.start()

    try:
        for index, policy in enumerate(policies):
            port = 0 if base_port == 0 else base_port + index
            if policy.dead:
                _, chosen = _reserve_dead_port(host, port)
                farm.endpoints.append(
                    FarmEndpoint(policy.name, host, chosen, policy.protocol, policy)
                )
                continue
            mock = _MockServer(policy, registry)

            async def _start(mock: "_MockServer" = mock, port: int = port) -> int:
                server = await asyncio.start_server(mock.handle, host, port)
                farm._servers.append(server)
                return server.sockets[0].getsockname()[1]

            chosen = asyncio.run_coroutine_threadsafe(_start(), loop).result(timeout=10)
            farm.endpoints.append(
                FarmEndpoint(policy.name, host, chosen, policy.protocol, policy)
            )
    except Exception:
        farm.close()
        raise
    return farm


def spawn_mock(
    policy: MockPolicy,
    host: str = "127.0.0.1",
    port: int = 0,
    registry: Registry | None = None,
) -> Farm:
    """Single-policy farm; the handle's first endpoint is the mock."""
    return spawn_farm([policy], host=host, base_port=port, registry=registry)


class _MockServer:
    def __init__(self, policy: MockPolicy, registry: Registry):
        self.policy = policy
        self.registry = registry

    async def handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            await asyncio.wait_for(self._session(reader, writer), CONNECTION_LINGER_SECONDS)
        except (asyncio.TimeoutError, asyncio.IncompleteReadError, ConnectionError, OSError):
            pass
        finally:
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass

    async def _session(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        if self.policy.protocol.uses_starttls:
            proceed = await self._plaintext_phase(reader, writer)
            if not proceed:
                return
        await self._tls_phase(reader, writer)
        # Hold the socket until the scanner closes; it never sends more.
        await reader.read()

    # ------------------------------------------------------------------
    # Plaintext dialogue

    async def _send_lines(self, writer: asyncio.StreamWriter, *lines: str) -> None:
        writer.write("".join(line + "\r\n" for line in lines).encode("ascii"))
        await writer.drain()

    async def _recv_command(self, reader: asyncio.StreamReader) -> str | None:
        line = await reader.readline()
        if not line:
            return None
        return line.decode("latin-1").rstrip("\r\n")

    async def _plaintext_phase(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> bool:
        policy = self.policy
        if policy.banner_behavior == "silent":
            await reader.read()  # say nothing until the client gives up
            return False
        handler = {
            AppProtocol.SMTP: self._smtp_dialogue,
            AppProtocol.SUBMISSION: self._smtp_dialogue,
            AppProtocol.POP3: self._pop3_dialogue,
            AppProtocol.IMAP: self._imap_dialogue,
        }[policy.protocol]
        return await handler(reader, writer)

    def _advertises_starttls(self) -> bool:
        return self.policy.starttls_behavior in ("ok", "reject")

    async def _smtp_dialogue(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> bool:
        policy = self.policy
        if policy.banner_behavior == "reject":
            await self._send_lines(writer, f"{policy.banner_reject_code} no service")
            await reader.read()
            return False
        await self._send_lines(writer, f"220 {policy.name} mock ESMTP")
        while True:
            command = await self._recv_command(reader)
            if command is None:
                return False
            verb = command.split(" ", 1)[0].upper()
            if verb in ("EHLO", "HELO"):
                if policy.ehlo_behavior == "reject":
                    await self._send_lines(
                        writer, f"{policy.ehlo_reject_code} command not recognized"
                    )
                    continue
                if verb == "HELO":
                    await self._send_lines(writer, f"250 {policy.name}")
                    continue
                lines = [f"250-{policy.name}"]
                if self._advertises_starttls():
                    lines.append("250-STARTTLS")
                if policy.auth_plain_pre_tls:
                    lines.append("250-AUTH PLAIN LOGIN")
                lines.append("250 8BITMIME")
                await self._send_lines(writer, *lines)
            elif verb == "STARTTLS":
                if policy.starttls_behavior == "ok":
                    await self._send_lines(writer, "220 ready for TLS")
                    return True
                if policy.starttls_behavior == "reject":
                    await self._send_lines(
                        writer, f"{policy.starttls_reject_code} TLS not available"
                    )
                else:  # stripAdvertisement: the command "does not exist"
                    await self._send_lines(writer, "502 command not recognized")
            elif verb == "QUIT":
                await self._send_lines(writer, "221 bye")
                return False
            else:
                await self._send_lines(writer, "502 command not recognized")

    async def _pop3_dialogue(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> bool:
        policy = self.policy
        if policy.banner_behavior == "reject":
            await self._send_lines(writer, "-ERR no service")
            await reader.read()
            return False
        await self._send_lines(writer, f"+OK {policy.name} mock ready")
        while True:
            command = await self._recv_command(reader)
            if command is None:
                return False
            verb = command.split(" ", 1)[0].upper()
            if verb == "CAPA":
                if policy.ehlo_behavior == "reject":
                    await self._send_lines(writer, "-ERR no capabilities")
                    continue
                lines = ["+OK capability list follows"]
                if self._advertises_starttls():
                    lines.append("STLS")
                if policy.auth_plain_pre_tls:
                    lines.append("SASL PLAIN LOGIN")
                lines.extend(["USER", "."])
                await self._send_lines(writer, *lines)
            elif verb == "STLS":
                if policy.starttls_behavior == "ok":
                    await self._send_lines(writer, "+OK begin TLS")
                    return True
                await self._send_lines(writer, "-ERR TLS not available")
            elif verb == "QUIT":
                await self._send_lines(writer, "+OK bye")
                return False
            else:
                await self._send_lines(writer, "-ERR unknown command")

    async def _imap_dialogue(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> bool:
        policy = self.policy
        if policy.banner_behavior == "reject":
            await self._send_lines(writer, "* BYE no service")
            await reader.read()
            return False
        await self._send_lines(writer, f"* OK {policy.name} mock ready")
        while True:
            command = await self._recv_command(reader)
            if command is None:
                return False
            parts = command.split(" ", 1)
            tag = parts[0] if parts[0] else "*"
            verb = parts[1].split(" ", 1)[0].upper() if len(parts) > 1 else ""
            if verb == "CAPABILITY":
                if policy.ehlo_behavior == "reject":
                    await self._send_lines(writer, f"{tag} NO capability refused")
                    continue
                tokens = ["IMAP4rev1"]
                if self._advertises_starttls():
                    tokens.append("STARTTLS")
                if policy.auth_plain_pre_tls:
                    tokens.append("AUTH=PLAIN")
                else:
                    tokens.append("LOGINDISABLED")
                await self._send_lines(
                    writer, "* CAPABILITY " + " ".join(tokens), f"{tag} OK done"
                )
            elif verb == "STARTTLS":
                if policy.starttls_behavior == "ok":
                    await self._send_lines(writer, f"{tag} OK begin TLS")
                    return True
                if policy.starttls_behavior == "reject":
                    await self._send_lines(writer, f"{tag} NO TLS not available")
                else:
                    await self._send_lines(writer, f"{tag} BAD unknown command")
            elif verb == "LOGOUT":
                await self._send_lines(writer, "* BYE", f"{tag} OK bye")
                return False
            else:
                await self._send_lines(writer, f"{tag} BAD unknown command")

    # ------------------------------------------------------------------
    # TLS phase

    async def _read_client_hello(self, reader: asyncio.StreamReader) -> bytes | None:
        try:
            first = await reader.readexactly(1)
            if first[0] & 0x80:
                second = await reader.readexactly(1)
                length = ((first[0] & 0x7F) << 8) | second[0]
                if length > wire.MAX_RECORD_BYTES:
                    return None
                return first + second + await reader.readexactly(length)
            header = first + await reader.readexactly(4)
            length = int.from_bytes(header[3:5], "big")
            if length > wire.MAX_RECORD_BYTES:
                return None
            return header + await reader.readexactly(length)
        except asyncio.IncompleteReadError:
            return None

    async def _tls_phase(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        raw = await self._read_client_hello(reader)
        if raw is None:
            return
        try:
            hello = wire.parse_client_hello(raw)
        except ValueError:
            return
        if hello.is_sslv2:
            writer.write(self._answer_sslv2(hello))
        else:
            writer.write(self._answer_tls(hello))
        await writer.drain()

    def _answer_sslv2(self, hello: wire.ParsedClientHello) -> bytes:
        ours = self.policy.sslv2_suites()
        offered = [s for s in ours if s in set(hello.suites)]
        if not offered:
            if self.policy.sslv2_behavior == "close":
                return b""
            return wire.build_sslv2_error(wire.SSLV2_ERROR_NO_CIPHER)
        certificate = self.policy.cert_chain[0] if self.policy.cert_chain else b""
        return wire.build_sslv2_server_hello(certificate, offered)

    def _select_suite(self, version: ProtocolVersion, offered: tuple[bytes, ...]) -> bytes | None:
        acceptable = self.policy.suites_at(version) & set(offered)
        if not acceptable:
            return None
        for suite in self.policy.preference_order:
            if suite in acceptable:
                return suite
        for suite in offered:
            if suite in acceptable:
                return suite
        return None

    def _answer_tls(self, hello: wire.ParsedClientHello) -> bytes:
        version = hello.version
        if version is None or version is ProtocolVersion.SSLv2:
            return wire.build_alert(wire.AlertLevel.FATAL, 70, ProtocolVersion.TLSv1)
        suite = self._select_suite(version, hello.suites)
        if suite is None:
            return wire.build_alert(wire.AlertLevel.FATAL, self.policy.alert_code, version)

        info = self.registry.classify(suite)
        messages = [wire.build_server_hello(version, suite)]
        if info is not None and info.kex not in ANON_KEX:
            messages.append(wire.build_certificate(self.policy.cert_chain))
        if info is not None and info.kex in DH_KEX:
            prime = self.policy.dh_prime or DEFAULT_DH_PRIME
            generator = self.policy.dh_generator
            server_public = pow(generator, 0x2A2A2A, prime)
            signature = b"" if info.kex in ANON_KEX else bytes(64)
            messages.append(
                wire.build_dh_server_key_exchange(prime, generator, server_public, signature)
            )
        elif info is not None and info.kex in ECDH_KEX:
            signature = b"" if info.kex in ANON_KEX else bytes(64)
            messages.append(
                wire.build_ecdh_server_key_exchange(self.policy.curve_id or 23, signature)
            )
        messages.append(wire.build_server_hello_done())
        return wire.build_record(wire.RECORD_TYPE_HANDSHAKE, version, b"".join(messages))


# ---------------------------------------------------------------------------
# Policy files


def _parse_suite_ref(value: str, registry: Registry) -> bytes:
    info = registry.by_name(value)
    if info is not None:
        return info.id
    cleaned = value.lower().removeprefix("0x")
    try:
        suite = bytes.fromhex(cleaned)
    except ValueError:
        raise InputFormatError(f"unknown suite {value!r}") from None
    if len(suite) not in (2, 3):
        raise InputFormatError(f"suite id {value!r} must be 2 or 3 bytes")
    return suite


def _parse_accepted(raw: object, registry: Registry) -> frozenset[tuple[ProtocolVersion, bytes]]:
    pairs: set[tuple[ProtocolVersion, bytes]] = set()
    if isinstance(raw, dict):  # {"versions": [...], "suites": [...]} product form
        versions = [ProtocolVersion.from_label(v) for v in raw.get("versions", [])]
        suites = [_parse_suite_ref(s, registry) for s in raw.get("suites", [])]
        pairs.update((v, s) for v in versions for s in suites)
    elif isinstance(raw, list):
        for entry in raw:
            version = ProtocolVersion.from_label(entry["version"])
            pairs.add((version, _parse_suite_ref(entry["suite"], registry)))
    else:
        raise InputFormatError("accepted must be a list of pairs or a product object")
    return frozenset(pairs)


def policy_from_dict(raw: dict, registry: Registry | None = None) -> MockPolicy:
    registry = registry or default_registry()
    try:
        name = raw["name"]
        protocol = AppProtocol.from_label(raw.get("protocol", "smtp"))
    except (KeyError, ValueError) as exc:
        raise InputFormatError(f"bad policy header: {exc}") from None

    chain = tuple(base64.b64decode(c) for c in raw.get("chain", []))
    dh_prime = raw.get("dhPrime")
    if isinstance(dh_prime, str):
        dh_prime = int(dh_prime, 16 if dh_prime.lower().startswith("0x") else 10)
    policy = MockPolicy(
        name=name,
        protocol=protocol,
        accepted=_parse_accepted(raw.get("accepted", []), registry),
        preference_order=tuple(
            _parse_suite_ref(s, registry) for s in raw.get("preferenceOrder", [])
        ),
        cert_chain=chain,
        dh_prime=dh_prime,
        dh_generator=int(raw.get("dhGenerator", 2)),
        curve_id=raw.get("curve"),
        starttls_behavior=raw.get("startTlsBehavior", "ok"),
        starttls_reject_code=int(raw.get("startTlsRejectCode", 454)),
        banner_behavior=raw.get("bannerBehavior", "ok"),
        banner_reject_code=int(raw.get("bannerRejectCode", 554)),
        ehlo_behavior=raw.get("ehloBehavior", "ok"),
        ehlo_reject_code=int(raw.get("ehloRejectCode", 502)),
        auth_plain_pre_tls=bool(raw.get("authPlainPreTls", False)),
        sslv2_behavior=raw.get("sslv2Behavior", "error"),
        alert_code=int(raw.get("alertCode", 40)),
        dead=bool(raw.get("dead", False)),
    )
    policy.validate(registry)
    return policy


def load_policies(path: str, registry: Registry | None = None) -> list[MockPolicy]:
    """Policy file: {"policies": [...]} or a bare JSON list."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"{path}: {exc}") from None
    raw_list = document.get("policies") if isinstance(document, dict) else document
    if not isinstance(raw_list, list):
        raise InputFormatError(f"{path}: expected a list of policies")
    registry = registry or default_registry()
    policies = [policy_from_dict(raw, registry) for raw in raw_list]
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise InputFormatError(f"{path}: duplicate policy names")
    return policies


def with_port_chain(policy: MockPolicy, chain: tuple[bytes, ...]) -> MockPolicy:
    """Convenience for tests: same policy, different chain."""
    return replace(policy, cert_chain=chain)

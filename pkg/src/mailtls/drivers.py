"""Plaintext protocol dialogue before the TLS upgrade.

Each mail protocol reaches TLS differently: SMTP and Submission via
EHLO/STARTTLS, POP3 via CAPA/STLS, IMAP via CAPABILITY/STARTTLS, and the
implicit-TLS ports (smtps/imaps/pop3s) skip the dialogue entirely.  The
drivers here run that dialogue over a line channel, collect the capabilities
the server advertises *before* the upgrade, and classify failures.

Failure kinds are stage-precise at this layer (a refused greeting is
``bannerRejected``, a refused EHLO is ``ehloRejected``); the scanner folds
them into its four-way invalid taxonomy.

The capability snapshot also answers a security question independent of the
handshake measurements: does the server offer plaintext authentication (the
AUTH PLAIN / SASL PLAIN mechanism) before TLS is established?
"""

from __future__ import annotations

import socket
from dataclasses import dataclass
from enum import Enum

MAX_LINE_BYTES = 4096
MAX_REPLY_LINES = 200
CLIENT_NAME = "scanner.invalid"


class AppProtocol(Enum):
    """Application protocol of a target endpoint (one per standard port)."""

    SMTP = "smtp"
    SUBMISSION = "submission"
    POP3 = "pop3"
    IMAP = "imap"
    SMTPS = "smtps"
    IMAPS = "imaps"
    POP3S = "pop3s"

    @property
    def uses_starttls(self) -> bool:
        return self in _STARTTLS_PROTOCOLS

    @property
    def default_port(self) -> int:
        return _DEFAULT_PORTS[self]

    @classmethod
    def from_label(cls, label: str) -> "AppProtocol":
        try:
            return cls(label.strip().lower())
        except ValueError:
            raise ValueError(f"unknown protocol {label!r}") from None

    @classmethod
    def from_port(cls, port: int) -> "AppProtocol | None":
        return _PROTOCOL_BY_PORT.get(port)


_STARTTLS_PROTOCOLS = frozenset(
    {AppProtocol.SMTP, AppProtocol.SUBMISSION, AppProtocol.POP3, AppProtocol.IMAP}
)
_DEFAULT_PORTS = {
    AppProtocol.SMTP: 25,
    AppProtocol.SUBMISSION: 587,
    AppProtocol.POP3: 110,
    AppProtocol.IMAP: 143,
    AppProtocol.SMTPS: 465,
    AppProtocol.IMAPS: 993,
    AppProtocol.POP3S: 995,
}
_PROTOCOL_BY_PORT = {port: proto for proto, port in _DEFAULT_PORTS.items()}


class FailureKind(Enum):
    """Why a probe never reached the TLS layer (JSON labels are the values)."""

    TIMEOUT = "timeout"
    CONNECTION_REJECTED = "connectionRejected"
    BANNER_REJECTED = "bannerRejected"
    EHLO_REJECTED = "ehloRejected"
    STARTTLS_REJECTED = "startTlsRejected"


class DriverFailure(Exception):
    def __init__(self, kind: FailureKind, detail: str):
        super().__init__(f"{kind.value}: {detail}")
        self.kind = kind
        self.detail = detail


class LineChannel:
    """Buffered CRLF line reader/writer over a socket.

    Timeout management is the caller's: the socket's timeout applies to each
    recv, and ``socket.timeout`` surfaces as ``DriverFailure(TIMEOUT)``.
    ``closed_kind`` names the failure to report when the peer closes or
    resets mid-dialogue, so each protocol stage can set its own.
    """

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buf = bytearray()
        self.closed_kind = FailureKind.BANNER_REJECTED

    def take_buffer(self) -> bytes:
        """Drain bytes read past the last line (TLS data after a STARTTLS 220)."""
        taken = bytes(self._buf)
        self._buf.clear()
        return taken

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall(line.encode("ascii", "replace") + b"\r\n")
        except socket.timeout:
            raise DriverFailure(FailureKind.TIMEOUT, "send timed out") from None
        except OSError as exc:
            raise DriverFailure(
                self.closed_kind, f"send failed: {exc.strerror or exc}"
            ) from None

    def recv_line(self, what: str) -> str:
        """One line without its terminator; peer close raises closed_kind."""
        while True:
            newline = self._buf.find(b"\n")
            if newline >= 0:
                raw = bytes(self._buf[:newline])
                del self._buf[: newline + 1]
                return raw.rstrip(b"\r").decode("latin-1")
            if len(self._buf) > MAX_LINE_BYTES:
                raise DriverFailure(self.closed_kind, f"overlong line awaiting {what}")
            try:
                chunk = self._sock.recv(4096)
            except socket.timeout:
                raise DriverFailure(FailureKind.TIMEOUT, f"timed out awaiting {what}") from None
            except OSError as exc:
                raise DriverFailure(
                    self.closed_kind, f"read failed awaiting {what}: {exc.strerror or exc}"
                ) from None
            if not chunk:
                raise DriverFailure(self.closed_kind, f"connection closed awaiting {what}")
            self._buf += chunk


@dataclass
class PlaintextSession:
    """What the server disclosed before any TLS upgrade."""

    protocol: AppProtocol
    banner: str
    capabilities: tuple[str, ...] = ()
    starttls_advertised: bool = False
    auth_mechanisms: tuple[str, ...] = ()

    @property
    def advertises_auth_plain(self) -> bool:
        """PLAIN SASL mechanism offered on the cleartext channel."""
        return "PLAIN" in self.auth_mechanisms


class AuthExposure(Enum):
    """Plaintext-credential exposure classification for one endpoint."""

    NO_STARTTLS = "noStartTls"
    PRE_TLS_AUTH = "startTlsButPreTlsAuth"
    SAFE = "safe"


def negotiate_plaintext(channel: LineChannel, protocol: AppProtocol) -> PlaintextSession:
    """Run banner and capability discovery; raises DriverFailure on refusal.

    Failed capability queries (CAPA / CAPABILITY) are tolerated — many servers
    omit them — but a failure-code greeting is ``bannerRejected`` and a
    rejected EHLO (after a HELO fallback) is ``ehloRejected``.
    """
    if not protocol.uses_starttls:
        raise ValueError(f"{protocol.value} has no plaintext phase")
    if protocol in (AppProtocol.SMTP, AppProtocol.SUBMISSION):
        return _smtp_negotiate(channel, protocol)
    if protocol is AppProtocol.POP3:
        return _pop3_negotiate(channel)
    return _imap_negotiate(channel)


def upgrade_starttls(channel: LineChannel, session: PlaintextSession) -> None:
    """Issue the TLS-upgrade command; on return the stream speaks TLS next.

    The upgrade is attempted whether or not the server advertised it — some
    servers accept STARTTLS without listing it, and that acceptance is itself
    a measurement.
    """
    channel.closed_kind = FailureKind.STARTTLS_REJECTED
    if session.protocol in (AppProtocol.SMTP, AppProtocol.SUBMISSION):
        channel.send_line("STARTTLS")
        code, _, _ = _smtp_reply(channel, "STARTTLS reply")
        if code != 220:
            raise DriverFailure(FailureKind.STARTTLS_REJECTED, f"STARTTLS answered {code}")
    elif session.protocol is AppProtocol.POP3:
        channel.send_line("STLS")
        line = channel.recv_line("STLS reply")
        if not line.upper().startswith("+OK"):
            raise DriverFailure(FailureKind.STARTTLS_REJECTED, f"STLS answered {line[:64]!r}")
    elif session.protocol is AppProtocol.IMAP:
        channel.send_line("a2 STARTTLS")
        for _ in range(MAX_REPLY_LINES):
            line = channel.recv_line("STARTTLS reply")
            if line.startswith("a2 "):
                status = line[3:].split(" ", 1)[0].upper()
                if status != "OK":
                    raise DriverFailure(
                        FailureKind.STARTTLS_REJECTED, f"STARTTLS answered {status}"
                    )
                return
        raise DriverFailure(FailureKind.STARTTLS_REJECTED, "no tagged STARTTLS reply")
    else:
        raise ValueError(f"{session.protocol.value} has no STARTTLS upgrade")


def detect_plaintext_auth_exposure(
    session: PlaintextSession | None, starttls_ok: bool
) -> AuthExposure:
    """Classify an endpoint's credential exposure.

    ``noStartTls``: the upgrade path is absent, so clients that authenticate
    must do it in the clear.  ``startTlsButPreTlsAuth``: TLS is reachable but
    the PLAIN mechanism is also offered on the plaintext channel, so a
    badly-configured client can leak credentials.  ``safe``: plaintext
    authentication is not advertised before the upgrade.
    """
    advertised = session.starttls_advertised if session else False
    if not (advertised or starttls_ok):
        return AuthExposure.NO_STARTTLS
    if session is not None and session.advertises_auth_plain:
        return AuthExposure.PRE_TLS_AUTH
    return AuthExposure.SAFE


# ---------------------------------------------------------------------------
# SMTP / Submission


def _smtp_reply(channel: LineChannel, what: str) -> tuple[int, str, list[str]]:
    """One (possibly multiline) SMTP reply: (code, first text, all texts)."""
    texts: list[str] = []
    code = -1
    for _ in range(MAX_REPLY_LINES):
        line = channel.recv_line(what)
        if len(line) < 3 or not line[:3].isdigit():
            raise DriverFailure(channel.closed_kind, f"unparseable reply {line[:64]!r}")
        code = int(line[:3])
        texts.append(line[4:] if len(line) > 4 else "")
        if len(line) == 3 or line[3] != "-":
            return code, texts[0], texts
    raise DriverFailure(channel.closed_kind, f"{what} exceeded line cap")


def _smtp_negotiate(channel: LineChannel, protocol: AppProtocol) -> PlaintextSession:
    channel.closed_kind = FailureKind.BANNER_REJECTED
    code, banner, _ = _smtp_reply(channel, "greeting")
    if code != 220:
        raise DriverFailure(FailureKind.BANNER_REJECTED, f"greeting {code}")

    channel.closed_kind = FailureKind.EHLO_REJECTED
    channel.send_line(f"EHLO {CLIENT_NAME}")
    code, _, texts = _smtp_reply(channel, "EHLO reply")
    capabilities: tuple[str, ...] = ()
    if code == 250:
        capabilities = tuple(t.strip() for t in texts[1:] if t.strip())
    else:
        # HELO-only servers are legacy, not invalid; they simply cannot
        # advertise STARTTLS.
        channel.send_line(f"HELO {CLIENT_NAME}")
        code, _, _ = _smtp_reply(channel, "HELO reply")
        if code != 250:
            raise DriverFailure(FailureKind.EHLO_REJECTED, f"EHLO and HELO refused ({code})")

    mechanisms: list[str] = []
    for cap in capabilities:
        word = cap.split(" ", 1)[0].upper()
        if word == "AUTH" or word.startswith("AUTH="):
            mechanisms.extend(cap.replace("=", " ").upper().split()[1:])
    return PlaintextSession(
        protocol=protocol,
        banner=banner,
        capabilities=capabilities,
        starttls_advertised=any(c.upper() == "STARTTLS" for c in capabilities),
        auth_mechanisms=tuple(dict.fromkeys(mechanisms)),
    )


# ---------------------------------------------------------------------------
# POP3


def _pop3_negotiate(channel: LineChannel) -> PlaintextSession:
    channel.closed_kind = FailureKind.BANNER_REJECTED
    banner = channel.recv_line("POP3 greeting")
    if not banner.upper().startswith("+OK"):
        raise DriverFailure(FailureKind.BANNER_REJECTED, f"greeting {banner[:64]!r}")

    channel.closed_kind = FailureKind.EHLO_REJECTED
    capabilities: list[str] = []
    channel.send_line("CAPA")
    reply = channel.recv_line("CAPA reply")
    if reply.upper().startswith("+OK"):
        for _ in range(MAX_REPLY_LINES):
            line = channel.recv_line("CAPA list")
            if line == ".":
                break
            capabilities.append(line.strip())
        else:
            raise DriverFailure(FailureKind.EHLO_REJECTED, "CAPA list exceeded line cap")

    mechanisms: list[str] = []
    for cap in capabilities:
        words = cap.upper().split()
        if words and words[0] == "SASL":
            mechanisms.extend(words[1:])
    return PlaintextSession(
        protocol=AppProtocol.POP3,
        banner=banner,
        capabilities=tuple(capabilities),
        starttls_advertised=any(c.upper().split()[:1] == ["STLS"] for c in capabilities),
        auth_mechanisms=tuple(dict.fromkeys(mechanisms)),
    )


# ---------------------------------------------------------------------------
# IMAP


def _imap_negotiate(channel: LineChannel) -> PlaintextSession:
    channel.closed_kind = FailureKind.BANNER_REJECTED
    banner = channel.recv_line("IMAP greeting")
    upper = banner.upper()
    if not (upper.startswith("* OK") or upper.startswith("* PREAUTH")):
        raise DriverFailure(FailureKind.BANNER_REJECTED, f"greeting {banner[:64]!r}")

    tokens: list[str] = []
    # Greetings may embed capabilities: * OK [CAPABILITY IMAP4rev1 STARTTLS ...]
    if "[CAPABILITY" in upper:
        inner = upper.split("[CAPABILITY", 1)[1].split("]", 1)[0]
        tokens.extend(inner.split())

    channel.closed_kind = FailureKind.EHLO_REJECTED
    channel.send_line("a1 CAPABILITY")
    for _ in range(MAX_REPLY_LINES):
        line = channel.recv_line("CAPABILITY reply")
        if line.upper().startswith("* CAPABILITY"):
            tokens.extend(line.upper().split()[2:])
        elif line.startswith("a1 "):
            break  # a NO/BAD here is tolerated, like a missing CAPA
    else:
        raise DriverFailure(FailureKind.EHLO_REJECTED, "CAPABILITY reply exceeded line cap")

    seen = tuple(dict.fromkeys(tokens))
    mechanisms = tuple(
        dict.fromkeys(t.split("=", 1)[1] for t in seen if t.startswith("AUTH="))
    )
    return PlaintextSession(
        protocol=AppProtocol.IMAP,
        banner=banner,
        capabilities=seen,
        starttls_advertised="STARTTLS" in seen,
        auth_mechanisms=mechanisms,
    )

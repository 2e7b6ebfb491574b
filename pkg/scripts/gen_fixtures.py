#!/usr/bin/env python3
"""Generate committed test fixtures.

Two fixture families, both written under tests/data/:

* certs/ — a 50-chain verdict set built from freshly generated keys, with a
  manifest recording the constructed verdict for each chain at the frozen
  evaluation time 2026-01-01T00:00:00Z, plus the tiny test truststore and a
  few reusable chains for mock-farm scenarios.
* wire/openssl_flights.json — raw server flights captured from `openssl
  s_server` answering this package's own ClientHellos, with the expected
  selected suite and chain fingerprint, so the flight parser is checked
  against an independent TLS implementation.

Run from the repository root:  python3 scripts/gen_fixtures.py
"""

from __future__ import annotations

import base64
import hashlib
import json
import socket
import subprocess
import sys
import tempfile
import time
from datetime import datetime, timedelta, timezone
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import dh, rsa
from cryptography.x509.oid import NameOID

# RFC 3526 group 14 (2048-bit MODP), used for the DHE wire capture so the
# served prime is a stable, recognizable constant.
RFC3526_GROUP14_PRIME = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mailtls import wire  # noqa: E402
from mailtls.records import chain_fingerprint  # noqa: E402
from mailtls.registry import ProtocolVersion, default_registry  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
CERT_DIR = ROOT / "tests" / "data" / "certs"
WIRE_DIR = ROOT / "tests" / "data" / "wire"

AT = datetime(2026, 1, 1, tzinfo=timezone.utc)
YEAR = timedelta(days=365)


def make_key(bits: int) -> rsa.RSAPrivateKey:
    if bits >= 1024:
        return rsa.generate_private_key(public_exponent=65537, key_size=bits)
    # cryptography refuses to generate short keys; openssl still will, and
    # the survey population includes 512-bit certificates.
    out = subprocess.run(
        ["openssl", "genrsa", str(bits)], check=True, capture_output=True
    )
    return serialization.load_pem_private_key(out.stdout, password=None)


def name(cn: str, org: str = "", ou: str = "") -> x509.Name:
    attrs = [x509.NameAttribute(NameOID.COMMON_NAME, cn)]
    if org:
        attrs.append(x509.NameAttribute(NameOID.ORGANIZATION_NAME, org))
    if ou:
        attrs.append(x509.NameAttribute(NameOID.ORGANIZATIONAL_UNIT_NAME, ou))
    return x509.Name(attrs)


_serial = [1000]


def make_cert(
    subject: x509.Name,
    issuer: x509.Name,
    public_key,
    signing_key,
    not_before: datetime,
    not_after: datetime,
    *,
    ca: bool = False,
    add_basic_constraints: bool = True,
) -> x509.Certificate:
    _serial[0] += 1
    builder = (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(issuer)
        .public_key(public_key)
        .serial_number(_serial[0])
        .not_valid_before(not_before)
        .not_valid_after(not_after)
    )
    if add_basic_constraints:
        builder = builder.add_extension(
            x509.BasicConstraints(ca=ca, path_length=None), critical=True
        )
    return builder.sign(signing_key, hashes.SHA256())


def der(cert: x509.Certificate) -> bytes:
    return cert.public_bytes(serialization.Encoding.DER)


def b64(blob: bytes) -> str:
    return base64.b64encode(blob).decode("ascii")


def pem(cert: x509.Certificate) -> str:
    return cert.public_bytes(serialization.Encoding.PEM).decode("ascii")


def key_pem(key) -> str:
    return key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.TraditionalOpenSSL,
        serialization.NoEncryption(),
    ).decode("ascii")


def build_cert_fixtures() -> None:
    CERT_DIR.mkdir(parents=True, exist_ok=True)

    root_a_key = make_key(2048)
    root_a = make_cert(
        name("MailTLS Test Root A", "MailTLS Test"),
        name("MailTLS Test Root A", "MailTLS Test"),
        root_a_key.public_key(),
        root_a_key,
        AT - 5 * YEAR,
        AT + 10 * YEAR,
        ca=True,
    )
    root_b_key = make_key(2048)
    root_b = make_cert(
        name("MailTLS Untrusted Root B", "MailTLS Test"),
        name("MailTLS Untrusted Root B", "MailTLS Test"),
        root_b_key.public_key(),
        root_b_key,
        AT - 5 * YEAR,
        AT + 10 * YEAR,
        ca=True,
    )
    intermediate_key = make_key(2048)
    intermediate = make_cert(
        name("MailTLS Test Intermediate", "MailTLS Test"),
        root_a.subject,
        intermediate_key.public_key(),
        root_a_key,
        AT - 4 * YEAR,
        AT + 8 * YEAR,
        ca=True,
    )
    # An "intermediate" that is not allowed to sign (ca=false).
    bad_intermediate_key = make_key(1024)
    bad_intermediate = make_cert(
        name("MailTLS NonCA Intermediate", "MailTLS Test"),
        root_a.subject,
        bad_intermediate_key.public_key(),
        root_a_key,
        AT - 4 * YEAR,
        AT + 8 * YEAR,
        ca=False,
    )

    (CERT_DIR / "truststore.pem").write_text(pem(root_a))
    (CERT_DIR / "root_a.pem").write_text(pem(root_a))
    (CERT_DIR / "root_a.key").write_text(key_pem(root_a_key))
    (CERT_DIR / "root_b.pem").write_text(pem(root_b))

    chains: list[dict] = []

    def add(chain_name: str, verdict: str, ders: list[bytes], **extra) -> None:
        chains.append(
            {
                "name": chain_name,
                "verdict": verdict,
                "chain": [b64(d) for d in ders],
                **extra,
            }
        )

    # --- ok: direct leaves at each key-size bucket (7) -------------------
    for bits in (512, 1024, 2048, 4096, 2048, 1024, 3072, 1024):
        key = make_key(bits)
        leaf = make_cert(
            name(f"ok-{bits}-{_serial[0]}.example", "Example Org"),
            root_a.subject,
            key.public_key(),
            root_a_key,
            AT - YEAR,
            AT + YEAR,
        )
        add(f"ok-direct-{bits}-{_serial[0]}", "ok", [der(leaf)], leafKeyBits=bits)

    # --- ok: via intermediate (3) ----------------------------------------
    for index in range(3):
        key = make_key(1024)
        leaf = make_cert(
            name(f"ok-chained-{index}.example", "Example Org"),
            intermediate.subject,
            key.public_key(),
            intermediate_key,
            AT - YEAR,
            AT + YEAR,
        )
        add(
            f"ok-chained-{index}",
            "ok",
            [der(leaf), der(intermediate)],
            leafKeyBits=1024,
        )

    # --- selfSigned: valid (6), expired (3), shared-subject cluster ------
    for index in range(7):
        bits = [512, 1024, 1024, 2048, 2048, 2048, 1024][index]
        key = make_key(bits)
        subject = name("Mail Appliance Default", "Appliance Vendor", "Web")
        if index >= 3:
            subject = name(f"self-{index}.example", "Self Org")
        cert = make_cert(subject, subject, key.public_key(), key, AT - YEAR, AT + YEAR)
        add(f"selfsigned-valid-{index}", "selfSigned", [der(cert)], leafKeyBits=bits)
    for index in range(3):
        key = make_key(1024)
        subject = name("Mail Appliance Default", "Appliance Vendor", "Web")
        cert = make_cert(
            subject, subject, key.public_key(), key, AT - 3 * YEAR, AT - YEAR
        )
        add(f"selfsigned-expired-{index}", "selfSigned", [der(cert)], leafKeyBits=1024)

    # --- expired: leaf window passed (6), intermediate expired (2) -------
    for index in range(7):
        bits = [512, 1024, 1024, 2048, 2048, 4096, 1024][index]
        key = make_key(bits)
        leaf = make_cert(
            name(f"expired-{index}.example", "Example Org"),
            root_a.subject,
            key.public_key(),
            root_a_key,
            AT - 3 * YEAR,
            AT - YEAR,
        )
        add(f"expired-leaf-{index}", "expired", [der(leaf)], leafKeyBits=bits)
    expired_int_key = make_key(1024)
    expired_int = make_cert(
        name("MailTLS Expired Intermediate", "MailTLS Test"),
        root_a.subject,
        expired_int_key.public_key(),
        root_a_key,
        AT - 3 * YEAR,
        AT - YEAR,
        ca=True,
    )
    for index in range(2):
        key = make_key(1024)
        leaf = make_cert(
            name(f"expired-via-int-{index}.example", "Example Org"),
            expired_int.subject,
            key.public_key(),
            expired_int_key,
            AT - YEAR,
            AT + YEAR,
        )
        add(
            f"expired-intermediate-{index}",
            "expired",
            [der(leaf), der(expired_int)],
            leafKeyBits=1024,
        )

    # --- unableToGetLocalIssuer: foreign root (5), missing int (3),
    #     untrusted anchor attached (2) ------------------------------------
    for index in range(5):
        key = make_key(1024)
        leaf = make_cert(
            name(f"foreign-{index}.example", "Example Org"),
            root_b.subject,
            key.public_key(),
            root_b_key,
            AT - YEAR,
            AT + YEAR,
        )
        add(f"unable-foreign-root-{index}", "unableToGetLocalIssuer", [der(leaf)],
            leafKeyBits=1024)
    for index in range(3):
        key = make_key(1024)
        leaf = make_cert(
            name(f"orphan-{index}.example", "Example Org"),
            intermediate.subject,
            key.public_key(),
            intermediate_key,
            AT - YEAR,
            AT + YEAR,
        )
        # Intermediate deliberately not attached.
        add(f"unable-missing-int-{index}", "unableToGetLocalIssuer", [der(leaf)],
            leafKeyBits=1024)
    for index in range(2):
        key = make_key(1024)
        leaf = make_cert(
            name(f"anchored-{index}.example", "Example Org"),
            root_b.subject,
            key.public_key(),
            root_b_key,
            AT - YEAR,
            AT + YEAR,
        )
        add(
            f"unable-untrusted-anchor-{index}",
            "unableToGetLocalIssuer",
            [der(leaf), der(root_b)],
            leafKeyBits=1024,
        )

    # --- validationError: wrong-key signature (4), non-CA signer (2),
    #     malformed leaf (2), truncated DER (1) ----------------------------
    for index in range(4):
        key = make_key(1024)
        # Issuer name claims Root A, but Root B's key actually signed it.
        leaf = make_cert(
            name(f"badsig-{index}.example", "Example Org"),
            root_a.subject,
            key.public_key(),
            root_b_key,
            AT - YEAR,
            AT + YEAR,
        )
        add(f"validationerror-badsig-{index}", "validationError", [der(leaf)],
            leafKeyBits=1024)
    for index in range(2):
        key = make_key(1024)
        leaf = make_cert(
            name(f"nonca-signed-{index}.example", "Example Org"),
            bad_intermediate.subject,
            key.public_key(),
            bad_intermediate_key,
            AT - YEAR,
            AT + YEAR,
        )
        add(
            f"validationerror-nonca-{index}",
            "validationError",
            [der(leaf), der(bad_intermediate)],
            leafKeyBits=1024,
        )
    for index in range(3):
        add(
            f"validationerror-malformed-{index}",
            "validationError",
            [b"\x30\x82\x00\x10garbage" + bytes([index]) * 20],
            leafKeyBits=None,
        )
    truncated = der(root_a)[:100]
    add("validationerror-truncated", "validationError", [truncated], leafKeyBits=None)

    assert len(chains) == 50, f"fixture count drifted: {len(chains)}"

    # --- extra reusable chains for mock-farm scenarios -------------------
    shared_key = make_key(1024)
    shared = make_cert(
        name("shared.example", "Shared Hosting"),
        root_a.subject,
        shared_key.public_key(),
        root_a_key,
        AT - YEAR,
        AT + YEAR,
    )
    extras = {
        "shared-hosting": [b64(der(shared))],
        "ok-chain": next(c["chain"] for c in chains if c["verdict"] == "ok"),
        "selfsigned-chain": next(
            c["chain"] for c in chains if c["verdict"] == "selfSigned"
        ),
    }

    manifest = {
        "at": "2026-01-01T00:00:00Z",
        "truststore": "truststore.pem",
        "chains": chains,
        "extras": extras,
    }
    (CERT_DIR / "manifest.json").write_text(json.dumps(manifest, indent=1))
    print(f"wrote {len(chains)} verdict chains to {CERT_DIR}/manifest.json")

    # A server cert usable by `openssl s_server` for wire captures.
    server_key = make_key(2048)
    server = make_cert(
        name("localhost", "MailTLS Test"),
        root_a.subject,
        server_key.public_key(),
        root_a_key,
        AT - YEAR,
        AT + YEAR,
    )
    (CERT_DIR / "server.pem").write_text(pem(server))
    (CERT_DIR / "server.key").write_text(key_pem(server_key))


# ---------------------------------------------------------------------------
# OpenSSL wire captures


def _recv_flight(sock: socket.socket) -> bytes:
    """Read raw bytes, feeding the flight parser to stop at ServerHelloDone."""
    captured = bytearray()

    def reader(n: int) -> bytes:
        sock.settimeout(5)
        try:
            chunk = sock.recv(n)
        except (socket.timeout, OSError):
            return b""
        captured.extend(chunk)
        return chunk

    registry = default_registry()
    wire.parse_server_flight(
        reader,
        ProtocolVersion.TLSv1_2,
        [s.id for s in registry.tls_suites()],
        kex_resolver=lambda suite: None,
    )
    return bytes(captured)


def capture_openssl_flights() -> None:
    WIRE_DIR.mkdir(parents=True, exist_ok=True)
    registry = default_registry()
    server_pem = CERT_DIR / "server.pem"
    server_key = CERT_DIR / "server.key"

    with tempfile.TemporaryDirectory() as tmp:
        dhfile = Path(tmp) / "dh.pem"
        params = dh.DHParameterNumbers(RFC3526_GROUP14_PRIME, 2).parameters()
        dhfile.write_bytes(
            params.parameter_bytes(
                serialization.Encoding.PEM, serialization.ParameterFormat.PKCS3
            )
        )

        # expected-params fields are pinned from the server configuration,
        # not from parsing the capture, so they stay independent oracles.
        scenarios = [
            ("rsa-aes128-sha", "AES128-SHA@SECLEVEL=0", "AES128-SHA", [], {}),
            # SECLEVEL=0 because the probe ClientHello carries no
            # signature_algorithms extension, so OpenSSL 3 falls back to
            # SHA-1 signatures, which higher security levels refuse.
            (
                "ecdhe-rsa-aes128-gcm",
                "ECDHE-RSA-AES128-GCM-SHA256@SECLEVEL=0",
                "ECDHE-RSA-AES128-GCM-SHA256",
                ["-named_curve", "secp384r1"],
                {"expectedCurveId": 24, "expectedCurveName": "secp384r1"},
            ),
            (
                "dhe-rsa-aes256-sha",
                "DHE-RSA-AES256-SHA@SECLEVEL=0",
                "DHE-RSA-AES256-SHA",
                ["-dhparam", str(dhfile)],
                {
                    "expectedDhPrimeHex": format(RFC3526_GROUP14_PRIME, "x"),
                    "expectedDhGenerator": 2,
                },
            ),
        ]
        flights = []
        for label, server_ciphers, offer_alias, extra_args, expected in scenarios:
            port = _free_port()
            proc = subprocess.Popen(
                [
                    "openssl", "s_server", "-accept", str(port), "-quiet", "-naccept", "10",
                    "-cert", str(server_pem), "-key", str(server_key),
                    "-tls1_2", "-cipher", server_ciphers, *extra_args,
                ],
                stdout=subprocess.DEVNULL,
                stderr=subprocess.DEVNULL,
            )
            try:
                _wait_listening(port)
                suite = registry.by_name(offer_alias)
                hello = wire.build_client_hello(
                    ProtocolVersion.TLSv1_2, [suite.id], bytes(32)
                )
                with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
                    sock.sendall(hello)
                    raw = _recv_flight(sock)
                # And a rejection capture from the same server: offer a suite
                # the server will not accept.
                reject_alias = "AES256-SHA" if offer_alias != "AES128-SHA" else "AES128-SHA256"
                reject = registry.by_name(reject_alias)
                hello_bad = wire.build_client_hello(
                    ProtocolVersion.TLSv1_2, [reject.id], bytes(32)
                )
                with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
                    sock.sendall(hello_bad)
                    raw_reject = _recv_flight(sock)
            finally:
                proc.terminate()
                proc.wait(timeout=5)

            flights.append(
                {
                    "label": label,
                    "offeredSuite": suite.id.hex(),
                    "expectedSuite": suite.id.hex(),
                    "raw": b64(raw),
                    **expected,
                }
            )
            flights.append(
                {
                    "label": f"{label}-rejected",
                    "offeredSuite": reject.id.hex(),
                    # OpenSSL answers a ClientHello with no shared cipher with a
                    # fatal handshake_failure alert (code 40).
                    "expectedAlert": "handshake_failure",
                    "raw": b64(raw_reject),
                }
            )

    server_der = x509.load_pem_x509_certificate(server_pem.read_bytes()).public_bytes(
        serialization.Encoding.DER
    )
    payload = {
        "note": "raw TLS server flights captured from `openssl s_server` 3.x",
        # Framed fingerprint as produced by records.chain_fingerprint, computed
        # from the certificate file the server was configured with.
        "serverChainFingerprint": chain_fingerprint((server_der,)),
        "flights": flights,
    }
    (WIRE_DIR / "openssl_flights.json").write_text(json.dumps(payload, indent=1))
    print(f"wrote {len(flights)} captured flights to {WIRE_DIR}/openssl_flights.json")


def _free_port() -> int:
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        return probe.getsockname()[1]


def _wait_listening(port: int, deadline: float = 10.0) -> None:
    end = time.monotonic() + deadline
    while time.monotonic() < end:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.2):
                return
        except OSError:
            time.sleep(0.05)
    raise RuntimeError(f"openssl s_server did not listen on {port}")


if __name__ == "__main__":
    stages = sys.argv[1:] or ["certs", "wire"]
    if "certs" in stages:
        build_cert_fixtures()
    if "wire" in stages:
        capture_openssl_flights()

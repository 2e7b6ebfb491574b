"""Certificate chain parsing, truststore validation, and population statistics.

Validation classifies each collected chain into exactly one of five verdicts
with a fixed precedence that makes the classification deterministic:

1. ``selfSigned`` — the leaf's subject equals its issuer and the self-signature
   verifies; expiry does not matter (expired self-signed stays self-signed).
2. ``expired`` — a trusted path exists but some certificate on it (root
   included) is outside its validity window at the evaluation time.
3. ``unableToGetLocalIssuer`` — path building dies because no candidate issuer
   exists in the chain or the truststore.
4. ``validationError`` — an issuer exists but a signature or CA-constraint
   check fails, or the leaf cannot be parsed at all.
5. ``ok`` — everything else.

Validation checks signatures, validity windows, basic-constraints CA flags and
chain building only; revocation and hostname matching are out of scope.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Sequence

from cryptography import x509
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import dsa, ec, padding, rsa
from cryptography.x509.oid import NameOID

from .errors import InputFormatError, UsageError
from .records import HostScanRecord

MAX_PATH_LENGTH = 16
KEY_SIZE_BUCKETS = (512, 1024, 2048, 4096)


class Verdict(Enum):
    OK = "ok"
    SELF_SIGNED = "selfSigned"
    UNABLE_TO_GET_LOCAL_ISSUER = "unableToGetLocalIssuer"
    EXPIRED = "expired"
    VALIDATION_ERROR = "validationError"


ALL_VERDICTS = tuple(Verdict)


@dataclass(frozen=True)
class SubjectInfo:
    common_name: str
    organization: str
    organizational_unit: str

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.common_name, self.organizational_unit, self.organization)


_EMPTY_SUBJECT = SubjectInfo("", "", "")


def _name_attr(name: x509.Name, oid) -> str:
    attrs = name.get_attributes_for_oid(oid)
    if not attrs:
        return ""
    value = attrs[0].value
    return value if isinstance(value, str) else value.decode("utf-8", "replace")


def _subject_info(name: x509.Name) -> SubjectInfo:
    return SubjectInfo(
        common_name=_name_attr(name, NameOID.COMMON_NAME),
        organization=_name_attr(name, NameOID.ORGANIZATION_NAME),
        organizational_unit=_name_attr(name, NameOID.ORGANIZATIONAL_UNIT_NAME),
    )


def _not_before(cert: x509.Certificate) -> datetime:
    return cert.not_valid_before_utc


def _not_after(cert: x509.Certificate) -> datetime:
    return cert.not_valid_after_utc


@dataclass
class CertificateRecord:
    """Parsed view of one DER blob; malformed blobs become flagged placeholders."""

    sha1_fingerprint: str
    der: bytes
    is_leaf: bool
    malformed: bool = False
    subject: SubjectInfo = _EMPTY_SUBJECT
    issuer: SubjectInfo = _EMPTY_SUBJECT
    not_before: datetime | None = None
    not_after: datetime | None = None
    key_algo: str = "other"  # "RSA" | "other"
    rsa_modulus: int | None = None
    rsa_exponent: int | None = None
    key_bits: int | None = None
    certificate: x509.Certificate | None = None

    @property
    def is_rsa(self) -> bool:
        return self.key_algo == "RSA"


def parse_certificate(der: bytes, is_leaf: bool) -> CertificateRecord:
    fingerprint = hashlib.sha1(der).hexdigest()
    try:
        cert = x509.load_der_x509_certificate(der)
    except Exception:
        return CertificateRecord(
            sha1_fingerprint=fingerprint, der=der, is_leaf=is_leaf, malformed=True
        )
    record = CertificateRecord(
        sha1_fingerprint=fingerprint,
        der=der,
        is_leaf=is_leaf,
        subject=_subject_info(cert.subject),
        issuer=_subject_info(cert.issuer),
        not_before=_not_before(cert),
        not_after=_not_after(cert),
        certificate=cert,
    )
    try:
        key = cert.public_key()
    except Exception:
        return record
    if isinstance(key, rsa.RSAPublicKey):
        numbers = key.public_numbers()
        record.key_algo = "RSA"
        record.rsa_modulus = numbers.n
        record.rsa_exponent = numbers.e
        record.key_bits = numbers.n.bit_length()
    return record


def parse_chain(der_blobs: Sequence[bytes]) -> list[CertificateRecord]:
    """Parse a presented chain; the first certificate is the leaf."""
    return [parse_certificate(der, is_leaf=(i == 0)) for i, der in enumerate(der_blobs)]


# ---------------------------------------------------------------------------
# Truststore and validation


class Truststore:
    def __init__(self, roots: Sequence[x509.Certificate]):
        self.roots = list(roots)
        self._by_subject: dict[bytes, list[x509.Certificate]] = {}
        self._fingerprints: set[bytes] = set()
        for root in self.roots:
            self._by_subject.setdefault(root.subject.public_bytes(), []).append(root)
            self._fingerprints.add(root.fingerprint(hashes.SHA1()))

    def __len__(self) -> int:
        return len(self.roots)

    def candidates_for(self, issuer: x509.Name) -> list[x509.Certificate]:
        return self._by_subject.get(issuer.public_bytes(), [])

    def contains(self, cert: x509.Certificate) -> bool:
        return cert.fingerprint(hashes.SHA1()) in self._fingerprints


def load_truststore(path: str) -> Truststore:
    with open(path, "rb") as handle:
        data = handle.read()
    try:
        roots = x509.load_pem_x509_certificates(data)
    except ValueError as exc:
        raise InputFormatError(f"{path}: not a PEM certificate bundle: {exc}") from None
    return Truststore(roots)


def _verify_signature(child: x509.Certificate, issuer: x509.Certificate) -> bool:
    """True iff issuer's key signed child; unsupported algorithms also fail."""
    key = issuer.public_key()
    try:
        if isinstance(key, rsa.RSAPublicKey):
            key.verify(
                child.signature,
                child.tbs_certificate_bytes,
                padding.PKCS1v15(),
                child.signature_hash_algorithm,
            )
        elif isinstance(key, ec.EllipticCurvePublicKey):
            key.verify(
                child.signature,
                child.tbs_certificate_bytes,
                ec.ECDSA(child.signature_hash_algorithm),
            )
        elif isinstance(key, dsa.DSAPublicKey):
            key.verify(
                child.signature, child.tbs_certificate_bytes, child.signature_hash_algorithm
            )
        else:
            return False
    except Exception:
        return False
    return True


def is_self_signed(cert: x509.Certificate) -> bool:
    if cert.subject.public_bytes() != cert.issuer.public_bytes():
        return False
    return _verify_signature(cert, cert)


def _is_ca(cert: x509.Certificate) -> bool:
    try:
        constraints = cert.extensions.get_extension_for_class(x509.BasicConstraints)
    except x509.ExtensionNotFound:
        # Tolerated for v1-style roots; required=false mirrors common practice
        # of accepting ancient CA certificates without the extension.
        return True
    return constraints.value.ca


def validate_chain(
    der_blobs: Sequence[bytes], truststore: Truststore, at: datetime
) -> Verdict:
    """Classify one presented chain against a truststore at a point in time."""
    if not der_blobs:
        raise UsageError("validate_chain requires a nonempty chain")
    if at.tzinfo is None:
        at = at.replace(tzinfo=timezone.utc)

    parsed: list[x509.Certificate | None] = []
    for der in der_blobs:
        try:
            parsed.append(x509.load_der_x509_certificate(der))
        except Exception:
            parsed.append(None)
    leaf = parsed[0]
    if leaf is None:
        return Verdict.VALIDATION_ERROR

    # Precedence 1: self-signed leaf, expiry irrelevant.
    if is_self_signed(leaf):
        return Verdict.SELF_SIGNED

    extras = [c for c in parsed[1:] if c is not None]
    path: list[x509.Certificate] = [leaf]
    current = leaf
    saw_crypto_failure = False

    for _ in range(MAX_PATH_LENGTH):
        # Try the truststore first: reaching a root ends the walk.
        trusted_issuer = None
        for candidate in truststore.candidates_for(current.issuer):
            if _verify_signature(current, candidate):
                trusted_issuer = candidate
                break
        if trusted_issuer is not None:
            path.append(trusted_issuer)
            if any(not (_not_before(c) <= at <= _not_after(c)) for c in path):
                return Verdict.EXPIRED
            return Verdict.OK
        if truststore.candidates_for(current.issuer):
            saw_crypto_failure = True  # right subject in store, wrong signature

        # Otherwise look for an intermediate among the presented extras.
        next_hop = None
        for candidate in extras:
            if candidate.subject.public_bytes() != current.issuer.public_bytes():
                continue
            if candidate in path:
                continue
            if not _verify_signature(current, candidate):
                saw_crypto_failure = True
                continue
            if not _is_ca(candidate):
                saw_crypto_failure = True
                continue
            next_hop = candidate
            break
        if next_hop is None:
            if saw_crypto_failure:
                return Verdict.VALIDATION_ERROR
            return Verdict.UNABLE_TO_GET_LOCAL_ISSUER
        path.append(next_hop)
        current = next_hop
        if current.subject.public_bytes() == current.issuer.public_bytes():
            # Chain ends at a self-signed anchor that is not in the store.
            return Verdict.UNABLE_TO_GET_LOCAL_ISSUER

    return Verdict.VALIDATION_ERROR  # pathological depth


# ---------------------------------------------------------------------------
# Scan-record plumbing


@dataclass
class ChainEvaluation:
    """One host's presented chain plus its verdict."""

    host: str
    port: int
    chain: list[CertificateRecord]
    verdict: Verdict

    @property
    def leaf(self) -> CertificateRecord:
        return self.chain[0]


def record_chain(record: HostScanRecord) -> tuple[bytes, ...] | None:
    """The chain a host presented: the first one seen in outcome order."""
    for outcome in record.outcomes:
        if outcome.chain_ref is not None and outcome.chain_ref in record.chains:
            return record.chains[outcome.chain_ref]
    return None


def evaluate_records(
    records: Iterable[HostScanRecord], truststore: Truststore, at: datetime
) -> list[ChainEvaluation]:
    """Validate every host that presented a chain (one evaluation per host)."""
    evaluations = []
    for record in records:
        chain = record_chain(record)
        if not chain:
            continue
        evaluations.append(
            ChainEvaluation(
                host=record.endpoint.host,
                port=record.endpoint.port,
                chain=parse_chain(chain),
                verdict=validate_chain(chain, truststore, at),
            )
        )
    return evaluations


def verdict_fractions(evaluations: Sequence[ChainEvaluation]) -> dict[str, float]:
    """Fractions per verdict over all evaluations; sums to 1 when nonempty."""
    counts = Counter(e.verdict.value for e in evaluations)
    total = len(evaluations)
    return {v.value: counts.get(v.value, 0) / total if total else 0.0 for v in ALL_VERDICTS}


# ---------------------------------------------------------------------------
# Key-size statistics


def _bucket(key_bits: int) -> str:
    return str(key_bits) if key_bits in KEY_SIZE_BUCKETS else "other"


@dataclass
class KeySizeHistogram:
    population: str
    counts: dict[str, int]
    total_rsa: int
    non_rsa: int

    @property
    def fractions(self) -> dict[str, float]:
        if not self.total_rsa:
            return {}
        return {bucket: count / self.total_rsa for bucket, count in self.counts.items()}


def key_size_histogram(
    evaluations: Sequence[ChainEvaluation], population: str = "all"
) -> KeySizeHistogram:
    """Bucketed RSA key sizes ({512,1024,2048,4096,other}) for a population.

    ``all``: every parsed certificate (leaves and intermediates);
    ``trustedLeaves``: leaves of chains with verdict ok; ``selfSigned``:
    leaves of self-signed chains.  Non-RSA keys are excluded from the buckets
    and reported in the remainder.
    """
    if population == "all":
        certs = [c for e in evaluations for c in e.chain if not c.malformed]
    elif population == "trustedLeaves":
        certs = [e.leaf for e in evaluations if e.verdict is Verdict.OK and not e.leaf.malformed]
    elif population == "selfSigned":
        certs = [
            e.leaf
            for e in evaluations
            if e.verdict is Verdict.SELF_SIGNED and not e.leaf.malformed
        ]
    else:
        raise UsageError(f"unknown population {population!r}")
    counts: Counter[str] = Counter()
    non_rsa = 0
    for cert in certs:
        if cert.is_rsa and cert.key_bits:
            counts[_bucket(cert.key_bits)] += 1
        else:
            non_rsa += 1
    return KeySizeHistogram(
        population=population,
        counts=dict(counts),
        total_rsa=sum(counts.values()),
        non_rsa=non_rsa,
    )


# ---------------------------------------------------------------------------
# Clusters


@dataclass
class CertificateCluster:
    fingerprint: str
    subject_cn: str
    issuer_cn: str
    per_port_ip_counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.per_port_ip_counts.values())


def common_certificate_clusters(
    records: Iterable[HostScanRecord],
) -> list[CertificateCluster]:
    """Distinct IPs per leaf fingerprint, split by port, sorted by total."""
    ips: dict[str, dict[int, set[str]]] = {}
    names: dict[str, tuple[str, str]] = {}
    for record in records:
        chain = record_chain(record)
        if not chain:
            continue
        leaf = parse_certificate(chain[0], is_leaf=True)
        per_port = ips.setdefault(leaf.sha1_fingerprint, {})
        per_port.setdefault(record.endpoint.port, set()).add(record.endpoint.host)
        if leaf.sha1_fingerprint not in names:
            names[leaf.sha1_fingerprint] = (
                leaf.subject.common_name,
                leaf.issuer.common_name,
            )
    clusters = [
        CertificateCluster(
            fingerprint=fp,
            subject_cn=names[fp][0],
            issuer_cn=names[fp][1],
            per_port_ip_counts={port: len(hosts) for port, hosts in sorted(ports.items())},
        )
        for fp, ports in ips.items()
    ]
    clusters.sort(key=lambda c: (-c.total, c.fingerprint))
    return clusters


@dataclass
class SelfSignedCluster:
    subject: tuple[str, str, str]  # (CN, OU, O)
    key_bits_mode: int | None
    ip_count: int


def self_signed_subject_clusters(
    evaluations: Sequence[ChainEvaluation],
) -> list[SelfSignedCluster]:
    """Self-signed leaves grouped by subject triple; fingerprints may differ."""
    groups: dict[tuple[str, str, str], tuple[set[str], Counter]] = {}
    for evaluation in evaluations:
        if evaluation.verdict is not Verdict.SELF_SIGNED:
            continue
        leaf = evaluation.leaf
        hosts, sizes = groups.setdefault(leaf.subject.triple, (set(), Counter()))
        hosts.add(evaluation.host)
        if leaf.is_rsa and leaf.key_bits:
            sizes[leaf.key_bits] += 1
    clusters = [
        SelfSignedCluster(
            subject=subject,
            key_bits_mode=sizes.most_common(1)[0][0] if sizes else None,
            ip_count=len(hosts),
        )
        for subject, (hosts, sizes) in groups.items()
    ]
    clusters.sort(key=lambda c: (-c.ip_count, c.subject))
    return clusters


# ---------------------------------------------------------------------------
# Time series


def key_size_time_series(
    snapshots: Sequence[tuple[str, Sequence[HostScanRecord]]],
) -> dict[int, dict[str, dict[str, int]]]:
    """Per-port, per-date key-size bucket counts of leaf certificates.

    ``snapshots`` must be date-sorted (ISO dates sort lexically); returns
    {port: {date: {bucket: count}}} ready for CSV emission.
    """
    dates = [date for date, _ in snapshots]
    if dates != sorted(dates):
        raise UsageError("snapshots must be sorted by date")
    series: dict[int, dict[str, dict[str, int]]] = {}
    for date, records in snapshots:
        for record in records:
            chain = record_chain(record)
            if not chain:
                continue
            leaf = parse_certificate(chain[0], is_leaf=True)
            if not (leaf.is_rsa and leaf.key_bits):
                continue
            port_series = series.setdefault(record.endpoint.port, {})
            buckets = port_series.setdefault(date, {})
            bucket = _bucket(leaf.key_bits)
            buckets[bucket] = buckets.get(bucket, 0) + 1
    return series

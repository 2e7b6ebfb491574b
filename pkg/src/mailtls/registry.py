"""Cipher-suite and protocol-version catalogue, and the default probe plan.

The registry ships as a data file (``data/cipher_suites.csv``) reconstructed from
the IANA TLS parameters registry restricted to suites assignable before TLS 1.3,
plus the seven SSLv2 cipher kinds; see docs/registry.md for the reconstruction
rule.  The default probe plan tests every suite individually: 7 suites under
SSLv2 and 136 suites under each of SSLv3, TLSv1, TLSv1.1 and TLSv1.2 — 551
handshakes per target.  The plan deliberately includes (version, suite)
combinations outside the suites' defining standards; standard-violating offers
are part of the measurement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import InputFormatError, UsageError


class ProtocolVersion(Enum):
    """SSL/TLS protocol versions the scanner can offer."""

    SSLv2 = "SSLv2"
    SSLv3 = "SSLv3"
    TLSv1 = "TLSv1"
    TLSv1_1 = "TLSv1.1"
    TLSv1_2 = "TLSv1.2"

    @property
    def label(self) -> str:
        return self.value

    @property
    def wire_bytes(self) -> bytes | None:
        """Record/handshake version bytes; None for SSLv2 (legacy framing)."""
        return _WIRE_BYTES[self]

    @property
    def order(self) -> int:
        return _VERSION_ORDER[self]

    @classmethod
    def from_label(cls, label: str) -> "ProtocolVersion":
        try:
            return _BY_LABEL[label]
        except KeyError:
            raise InputFormatError(f"unknown protocol version {label!r}") from None

    @classmethod
    def from_wire_bytes(cls, pair: bytes) -> "ProtocolVersion | None":
        return _BY_WIRE.get(bytes(pair))


_WIRE_BYTES: dict[ProtocolVersion, bytes | None] = {
    ProtocolVersion.SSLv2: None,
    ProtocolVersion.SSLv3: b"\x03\x00",
    ProtocolVersion.TLSv1: b"\x03\x01",
    ProtocolVersion.TLSv1_1: b"\x03\x02",
    ProtocolVersion.TLSv1_2: b"\x03\x03",
}
_VERSION_ORDER = {v: i for i, v in enumerate(ProtocolVersion)}
_BY_LABEL = {v.value: v for v in ProtocolVersion}
_BY_WIRE = {wire: v for v, wire in _WIRE_BYTES.items() if wire is not None}

SSLV3_PLUS = (
    ProtocolVersion.SSLv3,
    ProtocolVersion.TLSv1,
    ProtocolVersion.TLSv1_1,
    ProtocolVersion.TLSv1_2,
)


class Kex(Enum):
    """Key-exchange classification used by the analyses."""

    RSA = "RSA"
    DHE_RSA = "DHE_RSA"
    ECDHE_RSA = "ECDHE_RSA"
    ADH = "ADH"
    AECDH = "AECDH"
    OTHER = "other"


#: Key exchanges whose ServerKeyExchange carries classic Diffie-Hellman params.
DH_KEX = frozenset({Kex.DHE_RSA, Kex.ADH})
#: Key exchanges whose ServerKeyExchange carries named-curve ECDH params.
ECDH_KEX = frozenset({Kex.ECDHE_RSA, Kex.AECDH})
#: Anonymous key exchanges (no Certificate message in the server flight).
ANON_KEX = frozenset({Kex.ADH, Kex.AECDH})


@dataclass(frozen=True)
class CipherSuiteInfo:
    """One registry row: a suite id decomposed into its primitives."""

    id: bytes  # 2 bytes for SSLv3+/TLS suites, 3 bytes for SSLv2
    name: str
    kex: Kex
    enc: str
    enc_key_bits: int
    mac: str
    export_grade: bool
    specified_versions: frozenset[ProtocolVersion]
    alias: str | None = None

    @property
    def id_hex(self) -> str:
        return self.id.hex()

    @property
    def is_sslv2(self) -> bool:
        return len(self.id) == 3

    @property
    def is_ec(self) -> bool:
        """True for every elliptic-curve key exchange, including kex=other ones."""
        return "ECDH" in self.name

    def display_name(self) -> str:
        return self.alias or self.name


class Registry:
    """Immutable suite catalogue keyed by suite id."""

    def __init__(self, suites: Iterable[CipherSuiteInfo]):
        by_id: dict[bytes, CipherSuiteInfo] = {}
        for suite in suites:
            if suite.id in by_id:
                raise InputFormatError(f"duplicate suite id {suite.id.hex()}")
            by_id[suite.id] = suite
        self._by_id = by_id
        self._by_name = {s.name: s for s in by_id.values()}
        for suite in by_id.values():
            if suite.alias:
                self._by_name.setdefault(suite.alias, suite)

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[CipherSuiteInfo]:
        return iter(self._by_id.values())

    def classify(self, suite_id: bytes) -> CipherSuiteInfo | None:
        """Look up a suite id; None when the id is not in the registry."""
        return self._by_id.get(bytes(suite_id))

    def by_name(self, name: str) -> CipherSuiteInfo | None:
        return self._by_name.get(name)

    def tls_suites(self) -> list[CipherSuiteInfo]:
        return [s for s in self if not s.is_sslv2]

    def sslv2_suites(self) -> list[CipherSuiteInfo]:
        return [s for s in self if s.is_sslv2]

    def kex_of(self, suite_id: bytes) -> Kex | None:
        info = self.classify(suite_id)
        return info.kex if info else None


@dataclass(frozen=True)
class ProbePlan:
    """Ordered per-target probe list plus the preference-probe suite sets."""

    entries: tuple[tuple[ProtocolVersion, CipherSuiteInfo], ...]
    inter_probe_delay: float = 0.0
    preference_sets: Mapping[ProtocolVersion, tuple[CipherSuiteInfo, ...]] = field(
        default_factory=dict
    )

    def __len__(self) -> int:
        return len(self.entries)

    def count_by_version(self) -> dict[ProtocolVersion, int]:
        counts: dict[ProtocolVersion, int] = {}
        for version, _ in self.entries:
            counts[version] = counts.get(version, 0) + 1
        return counts

    def restricted_to(self, versions: Iterable[ProtocolVersion]) -> "ProbePlan":
        keep = frozenset(versions)
        return ProbePlan(
            entries=tuple(e for e in self.entries if e[0] in keep),
            inter_probe_delay=self.inter_probe_delay,
            preference_sets={
                v: s for v, s in self.preference_sets.items() if v in keep
            },
        )


_REQUIRED_COLUMNS = ("id", "name", "kex", "enc", "encKeyBits", "mac", "exportGrade", "versions")
_KEX_BY_VALUE = {k.value: k for k in Kex}
#: Encryption families excluded from preference probing.
PREFERENCE_EXCLUDED_ENC_PREFIXES = ("CAMELLIA", "3DES")


def _parse_bool(raw: str, line_no: int) -> bool:
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise InputFormatError(f"line {line_no}: exportGrade must be true/false, got {raw!r}")


def _parse_row(row: Mapping[str, str], line_no: int) -> CipherSuiteInfo:
    for column in _REQUIRED_COLUMNS:
        if row.get(column) in (None, ""):
            raise InputFormatError(f"line {line_no}: missing column {column!r}")
    raw_id = row["id"].strip().lower()
    if len(raw_id) not in (4, 6):
        raise InputFormatError(
            f"line {line_no}: suite id must be 2 or 3 hex-encoded bytes, got {raw_id!r}"
        )
    try:
        suite_id = bytes.fromhex(raw_id)
    except ValueError:
        raise InputFormatError(f"line {line_no}: bad hex id {raw_id!r}") from None

    kex_raw = row["kex"].strip()
    if kex_raw not in _KEX_BY_VALUE:
        raise InputFormatError(f"line {line_no}: unknown kex {kex_raw!r}")
    try:
        bits = int(row["encKeyBits"])
    except ValueError:
        raise InputFormatError(
            f"line {line_no}: encKeyBits must be an integer, got {row['encKeyBits']!r}"
        ) from None
    try:
        versions = frozenset(
            ProtocolVersion.from_label(v.strip()) for v in row["versions"].split(";")
        )
    except InputFormatError as exc:
        raise InputFormatError(f"line {line_no}: {exc}") from None

    name = row["name"].strip()
    export = _parse_bool(row["exportGrade"].strip(), line_no)
    alias = (row.get("alias") or "").strip() or None
    # Registry invariant: exportGrade <=> weakened key and an EXP-marked name.
    marked = "EXP" in name or (alias is not None and alias.startswith("EXP-"))
    if export != (bits <= 56 and marked):
        raise InputFormatError(
            f"line {line_no}: exportGrade={export} inconsistent with "
            f"encKeyBits={bits} and name {name!r}"
        )
    return CipherSuiteInfo(
        id=suite_id,
        name=name,
        kex=_KEX_BY_VALUE[kex_raw],
        enc=row["enc"].strip(),
        enc_key_bits=bits,
        mac=row["mac"].strip(),
        export_grade=export,
        specified_versions=versions,
        alias=alias,
    )


def load_registry(source: str | Path) -> Registry:
    """Load a registry from a comma-delimited file with a header row."""
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFormatError(f"cannot read registry {path}: {exc}") from exc
    return _parse_registry(text, str(path))


def _parse_registry(text: str, origin: str) -> Registry:
    lines = text.splitlines()
    if not lines or not any(line.strip() for line in lines):
        return Registry(())
    reader = csv.DictReader(lines)
    if reader.fieldnames is None:
        return Registry(())
    missing = [c for c in _REQUIRED_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise InputFormatError(f"{origin}: missing columns {missing}")
    suites = []
    for row in reader:
        # DictReader counts the header as line 1.
        suites.append(_parse_row(row, reader.line_num))
    try:
        return Registry(suites)
    except InputFormatError as exc:
        raise InputFormatError(f"{origin}: {exc}") from None


@lru_cache(maxsize=1)
def default_registry() -> Registry:
    """The bundled registry (7 SSLv2 suites + 136 TLS suites), parsed once."""
    data = resources.files("mailtls").joinpath("data/cipher_suites.csv").read_text("utf-8")
    return _parse_registry(data, "bundled cipher_suites.csv")


def preference_candidates(suites: Sequence[CipherSuiteInfo]) -> tuple[CipherSuiteInfo, ...]:
    """Suites offered in multi-suite preference probes.

    CAMELLIA and 3DES suites are excluded from preference probing (widely
    deployed server libssl builds mis-negotiated them in multi-suite offers,
    which would skew preference statistics).
    """
    return tuple(
        s for s in suites
        if not s.enc.startswith(PREFERENCE_EXCLUDED_ENC_PREFIXES)
    )


def default_probe_plan(
    registry: Registry, inter_probe_delay: float = 0.0
) -> ProbePlan:
    """Build the default 551-entry plan: 7 SSLv2 + 136 x {SSLv3..TLSv1.2}."""
    sslv2 = registry.sslv2_suites()
    tls = registry.tls_suites()
    if len(sslv2) != 7 or len(tls) != 136:
        raise UsageError(
            "registry does not carry the default probe lists "
            f"(got {len(sslv2)} SSLv2 and {len(tls)} TLS suites, need 7 and 136)"
        )
    entries: list[tuple[ProtocolVersion, CipherSuiteInfo]] = [
        (ProtocolVersion.SSLv2, s) for s in sslv2
    ]
    for version in SSLV3_PLUS:
        entries.extend((version, s) for s in tls)
    candidates = preference_candidates(tls)
    return ProbePlan(
        entries=tuple(entries),
        inter_probe_delay=inter_probe_delay,
        preference_sets={v: candidates for v in SSLV3_PLUS},
    )


def load_plan(source: str | Path, registry: Registry, inter_probe_delay: float = 0.0) -> ProbePlan:
    """Load a probe plan override: registry schema plus a leading version column."""
    path = Path(source)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputFormatError(f"cannot read plan {path}: {exc}") from exc
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or "version" not in reader.fieldnames or "id" not in reader.fieldnames:
        raise InputFormatError(f"{path}: plan file needs 'version' and 'id' columns")
    entries: list[tuple[ProtocolVersion, CipherSuiteInfo]] = []
    for row in reader:
        version = ProtocolVersion.from_label(row["version"].strip())
        raw_id = row["id"].strip().lower()
        try:
            suite_id = bytes.fromhex(raw_id)
        except ValueError:
            raise InputFormatError(f"{path} line {reader.line_num}: bad hex id {raw_id!r}") from None
        info = registry.classify(suite_id)
        if info is None:
            if not row.get("name"):
                raise InputFormatError(
                    f"{path} line {reader.line_num}: suite {raw_id} not in registry "
                    "and no inline definition given"
                )
            info = _parse_row(row, reader.line_num)
        entries.append((version, info))
    by_version: dict[ProtocolVersion, list[CipherSuiteInfo]] = {}
    for version, suite in entries:
        if version is not ProtocolVersion.SSLv2:
            by_version.setdefault(version, []).append(suite)
    return ProbePlan(
        entries=tuple(entries),
        inter_probe_delay=inter_probe_delay,
        preference_sets={
            v: preference_candidates(suites) for v, suites in by_version.items()
        },
    )


def load_allowlist(source: str | Path, registry: Registry) -> tuple[CipherSuiteInfo, ...]:
    """Load a ranked suite allowlist: one IANA suite name (or hex id) per line."""
    path = Path(source)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputFormatError(f"cannot read allowlist {path}: {exc}") from exc
    return _parse_suite_list(lines, registry, str(path))


def default_allowlist(registry: Registry) -> tuple[CipherSuiteInfo, ...]:
    """The bundled ranked recommendation list."""
    data = resources.files("mailtls").joinpath("data/allowlist.txt").read_text("utf-8")
    return _parse_suite_list(data.splitlines(), registry, "bundled allowlist.txt")


def _parse_suite_list(
    lines: Iterable[str], registry: Registry, origin: str
) -> tuple[CipherSuiteInfo, ...]:
    suites: list[CipherSuiteInfo] = []
    for line_no, line in enumerate(lines, start=1):
        token = line.split("#", 1)[0].strip()
        if not token:
            continue
        info = registry.by_name(token)
        if info is None and len(token) in (4, 6):
            try:
                info = registry.classify(bytes.fromhex(token))
            except ValueError:
                info = None
        if info is None:
            raise InputFormatError(f"{origin} line {line_no}: unknown suite {token!r}")
        suites.append(info)
    return tuple(suites)

"""Statistics on the key-exchange material servers disclosed during the scan.

Three tables are computed from scan records:

* :func:`dh_group_size_table` — distribution of DH prime sizes, split into
  export and non-export cipher suites, as per-port fractions of distinct IPs;
* :func:`shared_prime_report` — how many distinct IPs served each exact DH
  prime, with well-known software default primes labeled by name;
* :func:`curve_usage_table` — which named curves ECDH handshakes used,
  as per-port fractions of handshakes.

The bundled :data:`KNOWN_PRIMES` are the default groups several widely
deployed mail stacks compile in; matching one of them means the operator
never configured their own parameters.  Sharing any prime (known or not)
concentrates the cost of precomputation attacks on a single group.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .records import HostScanRecord
from .registry import Registry
from .wire import CurveKind

#: DH prime sizes get their own bucket; anything else lands in "other".
DH_SIZE_BUCKETS = (512, 768, 1024, 2048, 4096)

EXPORT_CLASS = "export"
NON_EXPORT_CLASS = "nonExport"


@dataclass(frozen=True)
class KnownPrime:
    """A DH prime that ships inside some widely deployed software."""

    label: str
    value: int
    bits: int

    def __post_init__(self) -> None:
        if self.bits != self.value.bit_length():
            raise ValueError(f"{self.label}: bits != bitLength(value)")


# Default DH groups compiled into mail-server software, as hex constants.
# Matching one of these identifies an operator running stock parameters.
KNOWN_PRIMES: tuple[KnownPrime, ...] = (
    # postfix src/tls/tls_dh.c: built-in 512-bit prime used for export
    # cipher suites (a safe prime with generator 2).
    KnownPrime(
        "postfix-512",
        int(
            "fcccab2ab0e04a58cc7368b3cff486e48b8cf2571c206f63e76eab2008d543e7"
            "b4d2a4d78f415211bb6cdbc7a3467109fe044ed5c855d86f61865412c8259813",
            16,
        ),
        512,
    ),
    # nginx src/event/ngx_event_openssl.c: the built-in 1024-bit dhparam
    # shipped before 1.11 (a safe prime with generator 2).
    KnownPrime(
        "nginx-1024",
        int(
            "bbbc2dcad84674907c43fcf580e9cfdbd958a3f568b42d4b08eed4eb0fb3504c"
            "6c030276e710800c5ccbbaa8922614c5beeca565a5fdf1d287a2bc049be67780"
            "60e91a92a757e3048f68b076f7d36cc8f29ba5df81dc2ca725ece66270cc9a50"
            "35d8ceceef9ea0274a63ab1e58fafd4988d0f65d146757da071df045cfe16b9b",
            16,
        ),
        1024,
    ),
    # RFC 5114 section 2.1: 1024-bit MODP group with 160-bit prime-order
    # subgroup.
    KnownPrime(
        "rfc5114-1024",
        int(
            "b10b8f96a080e01dde92de5eae5d54ec52c99fbcfb06a3c69a6a9dca52d23b61"
            "6073e28675a23d189838ef1e2ee652c013ecb4aea906112324975c3cd49b83bf"
            "accbdd7d90c4bd7098488e9c219a73724effd6fae5644738faa31a4ff55bccc0"
            "a151af5f0dc8b4bd45bf37df365c1a65e68cfda76d4da708df1fb2bc2e4a4371",
            16,
        ),
        1024,
    ),
    # RFC 5114 section 2.2: 2048-bit MODP group with 224-bit prime-order
    # subgroup; Exim's historical default DH group.
    KnownPrime(
        "exim-2048-rfc5114",
        int(
            "ad107e1e9123a9d0d660faa79559c51fa20d64e5683b9fd1b54b1597b61d0a75"
            "e6fa141df95a56dbaf9a3c407ba1df15eb3d688a309c180e1de6b85a1274a0a6"
            "6d3f8152ad6ac2129037c9edefda4df8d91e8fef55b7394b7ad5b7d0b6c12207"
            "c9f98d11ed34dbf6c6ba0b2c8bbc27be6a00e0a0b9c49708b3bf8a3170918836"
            "81286130bc8985db1602e714415d9330278273c7de31efdc7310f7121fd5a074"
            "15987d9adc0a486dcdf93acc44328387315d75e198c641a480cd86a1b9e587e8"
            "be60e69cc928b2b9c52172e413042e9b23f10b0e16e79763c9b53dcf4ba80a29"
            "e3fb73c16b8e75b97ef363e2ffa31f71cf9de5384e71b81c0ac4dffe0c10e64f",
            16,
        ),
        2048,
    ),
)

_KNOWN_BY_VALUE: Mapping[int, KnownPrime] = {p.value: p for p in KNOWN_PRIMES}
if len(_KNOWN_BY_VALUE) != len(KNOWN_PRIMES) or len(
    {p.label for p in KNOWN_PRIMES}
) != len(KNOWN_PRIMES):
    raise AssertionError("known primes must have unique labels and values")


def prime_digest(prime: int) -> str:
    """Canonical digest of a prime: SHA-256 over its lowercase hex form."""
    return hashlib.sha256(format(prime, "x").encode("ascii")).hexdigest()


def known_prime_for(value: int) -> KnownPrime | None:
    return _KNOWN_BY_VALUE.get(value)


def dh_size_bucket(prime_bits: int) -> str:
    return str(prime_bits) if prime_bits in DH_SIZE_BUCKETS else "other"


# ---------------------------------------------------------------------------
# DH group-size table


@dataclass
class DhGroupSizeTable:
    """Per-port fractions of distinct IPs per (export class, size bucket).

    ``counts[cls][bucket][port]`` holds distinct-IP counts and
    ``denominators[cls][port]`` the number of distinct IPs with any DH
    handshake of that class on that port, so every column of fractions
    sums to 1 where the denominator is nonzero.
    """

    counts: dict[str, dict[str, dict[int, int]]]
    denominators: dict[str, dict[int, int]]

    @property
    def ports(self) -> list[int]:
        seen = {
            port for by_port in self.denominators.values() for port in by_port
        }
        return sorted(seen)

    def fraction(self, cls: str, bucket: str, port: int) -> float:
        total = self.denominators.get(cls, {}).get(port, 0)
        if not total:
            return 0.0
        return self.counts.get(cls, {}).get(bucket, {}).get(port, 0) / total


def dh_group_size_table(
    records: Iterable[HostScanRecord], registry: Registry
) -> DhGroupSizeTable:
    """Bucketed DH prime sizes, split by export class, per port.

    Each (IP, port, class) triple contributes once: when a host served
    several prime sizes within one class, the most frequent one wins (ties
    go to the larger prime).
    """
    sizes: dict[tuple[int, str, str], Counter[int]] = {}
    for record in records:
        ip, port = record.endpoint.host, record.endpoint.port
        for outcome in record.outcomes:
            if outcome.dh is None or outcome.suite_id is None:
                continue
            suite = registry.classify(outcome.suite_id)
            if suite is None:
                continue
            cls = EXPORT_CLASS if suite.export_grade else NON_EXPORT_CLASS
            sizes.setdefault((port, cls, ip), Counter())[
                outcome.dh.prime_bits
            ] += 1

    counts: dict[str, dict[str, dict[int, int]]] = {}
    denominators: dict[str, dict[int, int]] = {}
    for (port, cls, _ip), histogram in sizes.items():
        bits = max(histogram.items(), key=lambda kv: (kv[1], kv[0]))[0]
        bucket = dh_size_bucket(bits)
        by_bucket = counts.setdefault(cls, {}).setdefault(bucket, {})
        by_bucket[port] = by_bucket.get(port, 0) + 1
        by_port = denominators.setdefault(cls, {})
        by_port[port] = by_port.get(port, 0) + 1
    return DhGroupSizeTable(counts=counts, denominators=denominators)


# ---------------------------------------------------------------------------
# Shared-prime report


@dataclass
class SharedPrimeEntry:
    digest: str
    bits: int
    distinct_ip_count: int
    label: str | None
    prime: int


def shared_prime_report(
    records: Iterable[HostScanRecord],
    known_primes: Sequence[KnownPrime] = KNOWN_PRIMES,
) -> list[SharedPrimeEntry]:
    """Distinct IPs per exact DH prime value, most shared first.

    Every IP with at least one DH handshake is attributed to exactly one
    prime — its most frequently served one, ties to the numerically
    smallest — so the entry counts partition the IPs and sum to the number
    of distinct IPs with DH outcomes.
    """
    by_ip: dict[str, Counter[int]] = {}
    for record in records:
        for outcome in record.outcomes:
            if outcome.dh is None:
                continue
            by_ip.setdefault(record.endpoint.host, Counter())[
                outcome.dh.prime
            ] += 1

    labels = {p.value: p.label for p in known_primes}
    ip_counts: Counter[int] = Counter()
    for histogram in by_ip.values():
        prime = min(
            (p for p, n in histogram.items() if n == max(histogram.values()))
        )
        ip_counts[prime] += 1

    entries = [
        SharedPrimeEntry(
            digest=prime_digest(prime),
            bits=prime.bit_length(),
            distinct_ip_count=count,
            label=labels.get(prime),
            prime=prime,
        )
        for prime, count in ip_counts.items()
    ]
    entries.sort(key=lambda e: (-e.distinct_ip_count, e.digest))
    return entries


# ---------------------------------------------------------------------------
# Curve usage


def curve_usage_table(
    records: Iterable[HostScanRecord],
) -> dict[int, dict[str, float]]:
    """Per-port fractions of ECDH handshakes per named curve.

    Curves outside the named-curve registry (explicit parameters or
    unrecognized ids) are pooled under ``"other"``.
    """
    per_port: dict[int, Counter[str]] = {}
    for record in records:
        port = record.endpoint.port
        for outcome in record.outcomes:
            if outcome.ecdh is None:
                continue
            ecdh = outcome.ecdh
            if ecdh.curve_kind is CurveKind.NAMED_CURVE and ecdh.curve_name:
                name = ecdh.curve_name
            else:
                name = "other"
            per_port.setdefault(port, Counter())[name] += 1
    return {
        port: {name: count / sum(counter.values()) for name, count in sorted(counter.items())}
        for port, counter in per_port.items()
    }

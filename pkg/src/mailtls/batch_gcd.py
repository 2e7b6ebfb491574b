"""Batch-GCD detection of RSA moduli that share a prime factor.

Keys generated with broken randomness can end up sharing one prime with a
stranger's key, and a single shared prime factors both moduli.  Scanning a
whole population pairwise is quadratic; the batch trick computes for every
modulus N_i

    g_i = gcd(N_i, (prod_j N_j) / N_i)

in quasi-linear time with a product tree (leaves to root) and a remainder
tree (root to leaves, reducing modulo N_i**2 so the division by N_i stays
exact).  A nontrivial g_i factors N_i immediately.  When g_i equals N_i the
modulus shares *all* its primes with the rest of the population and the
factor is recovered by pairwise GCDs against the other flagged moduli.

All arithmetic is exact big-integer math (gmpy2); no floating point is
involved anywhere.  Results are deterministic and independent of input
order.  Duplicate moduli are a different phenomenon (the same deployed key
seen twice, not weak randomness), so the record-level entry point reports
them separately instead of feeding them to the GCD pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import gmpy2

from .errors import UsageError

#: Below this many leaves a subtree product is one direct multiply loop.
DIRECT_MULTIPLY_LIMIT = 32


@dataclass(frozen=True)
class WeakKeyFinding:
    """One modulus broken by a shared prime factor."""

    modulus: int
    shared_factor: int
    cofactor: int
    source_fingerprints: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 1 < self.shared_factor < self.modulus:
            raise ValueError("shared factor must be a nontrivial divisor")
        if self.shared_factor * self.cofactor != self.modulus:
            raise ValueError("sharedFactor x cofactor != modulus")

    def to_json(self) -> dict:
        return {
            "modulus": format(self.modulus, "x"),
            "sharedFactor": format(self.shared_factor, "x"),
            "cofactor": format(self.cofactor, "x"),
            "sourceFingerprints": list(self.source_fingerprints),
        }


@dataclass
class DuplicateGroup:
    """One modulus that appeared on several certificates."""

    modulus: int
    count: int
    source_fingerprints: tuple[str, ...] = ()


@dataclass
class BatchGcdReport:
    findings: list[WeakKeyFinding]
    duplicates: list[DuplicateGroup] = field(default_factory=list)


def _block_product(ns: Sequence[gmpy2.mpz], lo: int, hi: int) -> gmpy2.mpz:
    acc = gmpy2.mpz(1)
    for i in range(lo, hi):
        acc *= ns[i]
    return acc


def _batch_remainders(ns: Sequence[gmpy2.mpz]) -> list[gmpy2.mpz]:
    """z_i = (prod_j N_j) mod N_i**2 for every i, via product+remainder trees."""
    blocks = [
        (lo, min(lo + DIRECT_MULTIPLY_LIMIT, len(ns)))
        for lo in range(0, len(ns), DIRECT_MULTIPLY_LIMIT)
    ]
    levels: list[list[gmpy2.mpz]] = [
        [_block_product(ns, lo, hi) for lo, hi in blocks]
    ]
    while len(levels[-1]) > 1:
        prev = levels[-1]
        levels.append(
            [
                prev[i] * prev[i + 1] if i + 1 < len(prev) else prev[i]
                for i in range(0, len(prev), 2)
            ]
        )

    # Remainder tree: the root remainder is the full product; each child
    # keeps the parent's remainder modulo the square of its own value.
    remainders = [levels[-1][0]]
    for level in reversed(levels[:-1]):
        remainders = [
            remainders[i // 2] % (value * value)
            for i, value in enumerate(level)
        ]
    out: list[gmpy2.mpz] = []
    for (lo, hi), block_rem in zip(blocks, remainders):
        for i in range(lo, hi):
            out.append(block_rem % (ns[i] * ns[i]))
    return out


def batch_gcd(
    moduli: Sequence[int],
    fingerprints: Mapping[int, Sequence[str]] | None = None,
) -> list[WeakKeyFinding]:
    """Findings for every modulus sharing a prime with another one.

    ``moduli`` must already be deduplicated and every value > 1; use
    :func:`analyze_moduli` for raw certificate populations.  Output is
    sorted by modulus and does not depend on input order.
    """
    seen: set[int] = set()
    for n in moduli:
        if n <= 1:
            raise UsageError(f"modulus must be > 1, got {n}")
        if n in seen:
            raise UsageError("moduli must be deduplicated before batch_gcd")
        seen.add(n)
    if len(moduli) < 2:
        return []

    ns = sorted(gmpy2.mpz(n) for n in moduli)
    zs = _batch_remainders(ns)
    gs = [gmpy2.gcd(z // n, n) for n, z in zip(ns, zs)]

    flagged = [i for i, g in enumerate(gs) if g > 1]
    findings: list[WeakKeyFinding] = []
    for i in flagged:
        n, g = ns[i], gs[i]
        if g == n:
            # Every prime of n is shared; recover one by pairwise GCD
            # against the other flagged moduli (deterministic: sorted order).
            g = gmpy2.mpz(1)
            for j in flagged:
                if j == i:
                    continue
                candidate = gmpy2.gcd(n, ns[j])
                if 1 < candidate < n:
                    g = candidate
                    break
            if g == 1:
                continue  # cannot happen with deduplicated inputs; be safe
        findings.append(
            WeakKeyFinding(
                modulus=int(n),
                shared_factor=int(g),
                cofactor=int(n // g),
                source_fingerprints=tuple(
                    (fingerprints or {}).get(int(n), ())
                ),
            )
        )
    return findings


def analyze_moduli(
    observations: Iterable[tuple[int, str]],
) -> BatchGcdReport:
    """Batch-GCD over raw (modulus, fingerprint) observations.

    Deduplicates moduli first: a modulus carried by several distinct
    certificates (or seen on several hosts) is reported as a duplicate
    group, not as a weak key, because identical moduli mean a shared
    deployment rather than broken randomness.
    """
    groups: dict[int, list[str]] = {}
    counts: dict[int, int] = {}
    for modulus, fingerprint in observations:
        if modulus <= 1:
            raise UsageError(f"modulus must be > 1, got {modulus}")
        bucket = groups.setdefault(modulus, [])
        if fingerprint and fingerprint not in bucket:
            bucket.append(fingerprint)
        counts[modulus] = counts.get(modulus, 0) + 1

    duplicates = [
        DuplicateGroup(
            modulus=modulus,
            count=counts[modulus],
            source_fingerprints=tuple(groups[modulus]),
        )
        for modulus in sorted(groups)
        if counts[modulus] > 1
    ]
    fingerprints = {m: tuple(fps) for m, fps in groups.items()}
    findings = batch_gcd(sorted(groups), fingerprints)
    return BatchGcdReport(findings=findings, duplicates=duplicates)

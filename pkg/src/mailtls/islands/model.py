"""Weighted-graph model of pairwise TLS compatibility between mail hosts.

Every valid scanned host collapses to its *cipher configuration* — the set
of (protocol version, cipher suite) pairs it accepted.  Hosts with the same
configuration are interchangeable for compatibility purposes, so the
population becomes a small weighted graph: one node per distinct
configuration, weighted by host count.  Two hosts can speak TLS to each
other exactly when their configurations share at least one (version, suite)
pair; otherwise the connection falls back to plaintext.

The reports answer "if two random hosts try to talk, what happens?" under
a uniform pairing assumption: ordered host pairs drawn with replacement,
each pair carrying probability w_i * w_j / W**2.  All pair mass is counted
in exact integers and divided once at the end.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..errors import UsageError
from ..records import HostScanRecord, ProbeStatus
from ..registry import ProtocolVersion, Registry
from . import kernels

PLAINTEXT_LABEL = "Plaintext"

#: Display threshold under which buckets are merged into "other".
DISPLAY_THRESHOLD = Fraction(1, 100)

ConfigPair = tuple[ProtocolVersion, bytes]

_VERSION_BIT = {version: 1 << i for i, version in enumerate(ProtocolVersion)}


@dataclass(frozen=True)
class CipherConfigNode:
    """One distinct cipher configuration and how many hosts share it."""

    config: frozenset[ConfigPair]
    weight: int

    def __post_init__(self) -> None:
        if self.weight <= 0:
            raise ValueError("nodes must carry positive weight")


def _config_key(config: frozenset[ConfigPair]) -> tuple:
    return tuple(sorted((v.order, s) for v, s in config))


def _sorted_nodes(weights: Mapping[frozenset[ConfigPair], int]) -> list[CipherConfigNode]:
    nodes = [
        CipherConfigNode(config=config, weight=weight)
        for config, weight in weights.items()
        if weight > 0
    ]
    nodes.sort(key=lambda n: (-n.weight, _config_key(n.config)))
    return nodes


def build_graph(records: Iterable[HostScanRecord]) -> list[CipherConfigNode]:
    """Collapse valid host records into weighted configuration nodes.

    A host's configuration is its set of accepted (version, suite) pairs;
    hosts that accepted nothing keep an empty configuration (they can only
    ever fall back to plaintext).  Weights sum to the number of valid hosts.
    """
    weights: dict[frozenset[ConfigPair], int] = {}
    for record in records:
        if not record.is_valid:
            continue
        config = frozenset(
            (outcome.version, outcome.suite_id)
            for outcome in record.outcomes
            if outcome.status is ProbeStatus.ACCEPTED and outcome.suite_id is not None
        )
        weights[config] = weights.get(config, 0) + 1
    return _sorted_nodes(weights)


# ---------------------------------------------------------------------------
# Kernel encoding


def _encode(
    nodes: Sequence[CipherConfigNode],
    suite_order: Sequence[bytes],
) -> tuple[np.ndarray, np.ndarray]:
    index = {suite: i for i, suite in enumerate(suite_order)}
    suite_versions = np.zeros((len(nodes), len(suite_order)), dtype=np.uint8)
    weights = np.zeros(len(nodes), dtype=np.int64)
    for row, node in enumerate(nodes):
        weights[row] = node.weight
        for version, suite in node.config:
            suite_versions[row, index[suite]] |= _VERSION_BIT[version]
    return suite_versions, weights


def _suites_present(nodes: Sequence[CipherConfigNode]) -> list[bytes]:
    return sorted({suite for node in nodes for _, suite in node.config})


def _bucket_label(bucket_id: int) -> str:
    if bucket_id == 0:
        return PLAINTEXT_LABEL
    names = [
        version.label
        for version in ProtocolVersion
        if bucket_id & _VERSION_BIT[version]
    ]
    return ", ".join(names)


# ---------------------------------------------------------------------------
# Compatibility report


@dataclass
class CompatibilityReport:
    """Pair-mass distribution over version-set buckets.

    ``exact`` maps bucket label to an exact probability; ``total_weight``
    is the host count W, so every numerator is out of W**2 ordered pairs.
    """

    exact: dict[str, Fraction]
    total_weight: int

    @property
    def buckets(self) -> dict[str, float]:
        return {label: float(p) for label, p in self.exact.items()}

    @property
    def plaintext_probability(self) -> Fraction:
        return self.exact.get(PLAINTEXT_LABEL, Fraction(0))

    def display_buckets(self) -> dict[str, float]:
        """Buckets for table rendering: entries under 1% pool into "other"."""
        shown: dict[str, float] = {}
        other = Fraction(0)
        for label, p in self.exact.items():
            if p < DISPLAY_THRESHOLD and label != PLAINTEXT_LABEL:
                other += p
            else:
                shown[label] = float(p)
        if other:
            shown["other"] = float(other)
        return shown

    def to_json(self) -> dict:
        denominator = self.total_weight * self.total_weight
        return {
            "totalWeight": self.total_weight,
            "pairDenominator": denominator,
            "buckets": [
                {
                    "label": label,
                    "numerator": p.numerator * (denominator // p.denominator),
                    "probability": float(p),
                }
                for label, p in self.exact.items()
            ],
        }


def compatibility_report(nodes: Sequence[CipherConfigNode]) -> CompatibilityReport:
    """Bucket every ordered host pair by the version set it can agree on.

    A pair lands in the bucket "v1, v2, ..." listing every version under
    which the two configurations share a suite, or in "Plaintext" when they
    share none.  Probabilities are exact fractions of W**2 ordered pairs.
    """
    total_weight = sum(node.weight for node in nodes)
    if total_weight <= 0:
        raise UsageError("compatibility_report requires positive total weight")
    suite_order = _suites_present(nodes)
    suite_versions, weights = _encode(nodes, suite_order)
    counts = kernels.bucket_counts(suite_versions, weights)

    denominator = total_weight * total_weight
    exact: dict[str, Fraction] = {}
    for bucket_id, count in enumerate(counts.tolist()):
        if count:
            exact[_bucket_label(bucket_id)] = Fraction(count, denominator)
    ordered = dict(
        sorted(
            exact.items(),
            key=lambda kv: (kv[0] == PLAINTEXT_LABEL, -kv[1], kv[0]),
        )
    )
    return CompatibilityReport(exact=ordered, total_weight=total_weight)


# ---------------------------------------------------------------------------
# Policy simulation


def apply_policy(
    nodes: Sequence[CipherConfigNode],
    keep: Callable[[ProtocolVersion, bytes], bool],
) -> list[CipherConfigNode]:
    """What-if: strip every (version, suite) pair failing the policy.

    Configurations may collapse to equal sets (weights merge) or to the
    empty set (pure-plaintext hosts).  Total weight is conserved, and
    applying the same policy twice changes nothing.
    """
    weights: dict[frozenset[ConfigPair], int] = {}
    for node in nodes:
        config = frozenset(
            (version, suite)
            for version, suite in node.config
            if keep(version, suite)
        )
        weights[config] = weights.get(config, 0) + node.weight
    return _sorted_nodes(weights)


def drop_enc_policy(
    registry: Registry, *enc_prefixes: str
) -> Callable[[ProtocolVersion, bytes], bool]:
    """Policy dropping suites whose encryption family matches a prefix."""

    def keep(version: ProtocolVersion, suite: bytes) -> bool:
        info = registry.classify(suite)
        if info is None:
            return True
        return not info.enc.startswith(tuple(enc_prefixes))

    return keep


def allowlist_policy(
    allowed: Iterable[bytes],
) -> Callable[[ProtocolVersion, bytes], bool]:
    """Policy keeping only suites on an explicit allowlist."""
    allowed_set = frozenset(bytes(suite) for suite in allowed)

    def keep(version: ProtocolVersion, suite: bytes) -> bool:
        return suite in allowed_set

    return keep


# ---------------------------------------------------------------------------
# Per-suite attribution


@dataclass
class AttributionReport:
    """Pair mass attributed to the best common suite per ordered pair."""

    exact: dict[bytes | None, Fraction]  # None keys the Plaintext share
    total_weight: int

    @property
    def fractions(self) -> dict[bytes | None, float]:
        return {suite: float(p) for suite, p in self.exact.items()}


def per_suite_attribution(
    nodes: Sequence[CipherConfigNode],
    ranking: Sequence[bytes],
) -> AttributionReport:
    """Attribute every compatible pair to its highest-ranked common suite.

    ``ranking`` must totally order the suites present (best first);
    incompatible pairs are attributed to plaintext (the ``None`` key).
    """
    total_weight = sum(node.weight for node in nodes)
    if total_weight <= 0:
        raise UsageError("per_suite_attribution requires positive total weight")
    present = set(_suites_present(nodes))
    ranked = [bytes(s) for s in ranking]
    missing = present.difference(ranked)
    if missing:
        raise UsageError(
            "ranking must cover every suite present; missing: "
            + ", ".join(sorted(s.hex() for s in missing))
        )
    suite_order = [s for s in ranked if s in present]
    suite_versions, weights = _encode(nodes, suite_order)
    counts = kernels.attribution_counts(suite_versions, weights)

    denominator = total_weight * total_weight
    exact: dict[bytes | None, Fraction] = {}
    for i, suite in enumerate(suite_order):
        if counts[i]:
            exact[suite] = Fraction(int(counts[i]), denominator)
    if counts[len(suite_order)]:
        exact[None] = Fraction(int(counts[len(suite_order)]), denominator)
    return AttributionReport(exact=exact, total_weight=total_weight)

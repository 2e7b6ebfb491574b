"""Independent reference implementations used to check the package's answers.

Everything here is written for clarity over speed and shares no code with the
implementations under test: the islands oracle enumerates ordered host pairs
one by one, and the batch-GCD oracle is the quadratic pairwise scan.
"""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction


def islands_bucket_oracle(configs):
    """Ordered-pair enumeration of version-compatibility buckets.

    ``configs`` is one entry per host: an iterable of (version, suite) pairs
    the host accepts.  Returns {frozenset-of-versions: Fraction}, where the
    empty frozenset is the plaintext bucket, over all n**2 ordered pairs.
    """
    hosts = [frozenset(cfg) for cfg in configs]
    n = len(hosts)
    counts: Counter[frozenset] = Counter()
    for a in hosts:
        for b in hosts:
            shared = a & b
            counts[frozenset(v for v, _ in shared)] += 1
    return {bucket: Fraction(c, n * n) for bucket, c in counts.items()}


def islands_attribution_oracle(configs, ranking):
    """First-hit suite attribution over ordered host pairs.

    For each compatible pair, credit goes to the first suite in ``ranking``
    both hosts accept at a shared version; incompatible pairs go to ``None``.
    """
    hosts = [frozenset(cfg) for cfg in configs]
    n = len(hosts)
    counts: Counter[bytes | None] = Counter()
    for a in hosts:
        for b in hosts:
            shared = a & b
            suites = {s for _, s in shared}
            winner = next((s for s in ranking if s in suites), None)
            counts[winner] += 1
    return {suite: Fraction(c, n * n) for suite, c in counts.items()}


def pairwise_gcd_oracle(moduli):
    """All shared factors found by the O(n^2) scan: {modulus: factor}.

    When a modulus shares factors with several others, the recorded factor is
    the gcd with the first partner in sorted order, matching no particular
    implementation detail — tests only compare flagged sets and verify the
    returned factor properly divides.
    """
    ordered = sorted(moduli)
    flagged: dict[int, int] = {}
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            g = math.gcd(a, b)
            if g > 1:
                flagged.setdefault(a, g)
                flagged.setdefault(b, g)
    return flagged


def recount_invalid_reasons(records):
    """Campaign-summary taxonomy recomputed from raw records."""
    counts: Counter[str] = Counter()
    for record in records:
        if record.validity == "invalid":
            counts[record.invalid_reason or "other"] += 1
    return dict(counts)

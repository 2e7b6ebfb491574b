"""Pairwise TLS-compatibility model over cipher configurations."""

from .model import (
    PLAINTEXT_LABEL,
    AttributionReport,
    CipherConfigNode,
    CompatibilityReport,
    allowlist_policy,
    apply_policy,
    build_graph,
    compatibility_report,
    drop_enc_policy,
    per_suite_attribution,
)

__all__ = [
    "PLAINTEXT_LABEL",
    "AttributionReport",
    "CipherConfigNode",
    "CompatibilityReport",
    "allowlist_policy",
    "apply_policy",
    "build_graph",
    "compatibility_report",
    "drop_enc_policy",
    "per_suite_attribution",
]

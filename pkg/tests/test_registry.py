"""Registry contents and the default probe plan."""

from __future__ import annotations

from collections import Counter

import pytest

from mailtls.errors import InputFormatError
from mailtls.registry import (
    ANON_KEX,
    DH_KEX,
    ECDH_KEX,
    PREFERENCE_EXCLUDED_ENC_PREFIXES,
    Kex,
    ProtocolVersion,
    default_probe_plan,
    default_registry,
)


def test_population_sizes(registry):
    assert len(registry.sslv2_suites()) == 7
    assert len(registry.tls_suites()) == 136


def test_probe_plan_split(probe_plan):
    by_version = Counter(version for version, _ in probe_plan.entries)
    assert len(probe_plan.entries) == 551
    assert by_version == {
        ProtocolVersion.SSLv2: 7,
        ProtocolVersion.SSLv3: 136,
        ProtocolVersion.TLSv1: 136,
        ProtocolVersion.TLSv1_1: 136,
        ProtocolVersion.TLSv1_2: 136,
    }


def test_probe_plan_has_no_duplicates(probe_plan):
    seen = {(version, suite.id) for version, suite in probe_plan.entries}
    assert len(seen) == 551


def test_suite_id_lengths(registry):
    assert all(len(s.id) == 3 for s in registry.sslv2_suites())
    assert all(len(s.id) == 2 for s in registry.tls_suites())


def test_classify_and_by_name_round_trip(registry):
    for suite in list(registry.sslv2_suites()) + list(registry.tls_suites()):
        assert registry.classify(suite.id) is suite
        assert registry.by_name(suite.name) is suite
        if suite.alias:
            # A few OpenSSL aliases name both an SSLv2 and a TLS suite
            # (e.g. RC4-MD5); lookup must resolve to one of the claimants.
            assert registry.by_name(suite.alias).alias == suite.alias


def test_classify_unknown_is_none(registry):
    assert registry.classify(b"\xff\xfe") is None
    assert registry.by_name("TLS_NOT_A_SUITE") is None


def test_known_anchor_rows(registry):
    edh = registry.classify(bytes.fromhex("0016"))
    assert edh.kex is Kex.DHE_RSA
    assert edh.enc == "3DES-168"
    assert edh.mac == "SHA1"
    rc4_export = registry.by_name("TLS_RSA_EXPORT_WITH_RC4_40_MD5")
    assert rc4_export.export_grade
    assert rc4_export.enc_key_bits == 40
    gcm = registry.by_name("TLS_ECDHE_RSA_WITH_AES_128_GCM_SHA256")
    assert gcm.id == bytes.fromhex("c02f")
    assert gcm.kex is Kex.ECDHE_RSA


def test_export_grade_consistency(registry):
    for suite in registry.tls_suites():
        if suite.export_grade:
            assert suite.enc_key_bits <= 56, suite.name
            assert not (
                ProtocolVersion.TLSv1_1 in suite.specified_versions
                or ProtocolVersion.TLSv1_2 in suite.specified_versions
            ), f"{suite.name} is export-grade but specified beyond TLSv1.0"


def test_kex_families_are_disjoint_unions():
    assert DH_KEX == {Kex.DHE_RSA, Kex.ADH}
    assert ECDH_KEX == {Kex.ECDHE_RSA, Kex.AECDH}
    assert ANON_KEX == {Kex.ADH, Kex.AECDH}
    assert not (DH_KEX & ECDH_KEX)


def test_kex_of_matches_classify(registry):
    for suite in registry.tls_suites():
        assert registry.kex_of(suite.id) is suite.kex
    assert registry.kex_of(b"\x00\xfe") is None


def test_anonymous_suites_have_anon_kex(registry):
    for suite in registry.tls_suites():
        if "_anon_" in suite.name:
            assert suite.kex in ANON_KEX or suite.kex is Kex.OTHER
        if suite.kex in ANON_KEX:
            assert "_anon_" in suite.name


def test_version_order_and_wire_bytes():
    ordered = sorted(ProtocolVersion, key=lambda v: v.order)
    assert [v.label for v in ordered] == ["SSLv2", "SSLv3", "TLSv1", "TLSv1.1", "TLSv1.2"]
    assert ProtocolVersion.SSLv3.wire_bytes == b"\x03\x00"
    assert ProtocolVersion.TLSv1.wire_bytes == b"\x03\x01"
    assert ProtocolVersion.TLSv1_1.wire_bytes == b"\x03\x02"
    assert ProtocolVersion.TLSv1_2.wire_bytes == b"\x03\x03"


def test_version_from_label_rejects_unknown():
    assert ProtocolVersion.from_label("TLSv1.1") is ProtocolVersion.TLSv1_1
    with pytest.raises(InputFormatError):
        ProtocolVersion.from_label("TLSv1.3")


def test_preference_sets_exclude_camellia_and_3des(probe_plan):
    assert PREFERENCE_EXCLUDED_ENC_PREFIXES == ("CAMELLIA", "3DES")
    for version, suites in probe_plan.preference_sets.items():
        assert version is not ProtocolVersion.SSLv2
        assert suites, f"empty preference candidates at {version.label}"
        for suite in suites:
            assert not suite.enc.startswith(PREFERENCE_EXCLUDED_ENC_PREFIXES), suite.name


def test_preference_sets_are_registry_ordered(registry, probe_plan):
    tls_order = {s.id: i for i, s in enumerate(registry.tls_suites())}
    for suites in probe_plan.preference_sets.values():
        indexes = [tls_order[s.id] for s in suites]
        assert indexes == sorted(indexes)


def test_plan_requires_full_registry(registry):
    class Hollow:
        def sslv2_suites(self):
            return registry.sslv2_suites()[:3]

        def tls_suites(self):
            return registry.tls_suites()

    with pytest.raises(Exception):
        default_probe_plan(Hollow())


def test_registry_rejects_malformed_rows(tmp_path):
    bad = tmp_path / "suites.csv"
    bad.write_text("id,name,kex,enc,encKeyBits,mac,exportGrade,versions\nzz,NAME,RSA,NULL,0,MD5,false,SSLv3\n")
    from mailtls.registry import load_registry

    with pytest.raises(InputFormatError):
        load_registry(str(bad))


def test_default_registry_is_cached():
    assert default_registry() is default_registry()

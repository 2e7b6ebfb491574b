"""Render aggregate tables from scan records in text, JSON, or CSV form.

Every report is a pure function of its inputs: the same records always
produce byte-identical output.  Text tables round percentages for reading;
the JSON and CSV forms carry full precision plus a schema version string so
downstream tooling can pin the layout.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Mapping, Sequence

from . import certs as certs_mod
from . import dhparams, islands
from .drivers import AuthExposure
from .errors import UsageError
from .records import HostScanRecord, ProbeStatus
from .registry import ProtocolVersion, Registry

REPORT_SCHEMA = "mailtls/report/v1"

REPORT_KINDS = (
    "versionSupport",
    "suiteAcceptance",
    "preference",
    "keyExchange",
    "encryption",
    "dhParams",
    "curves",
    "truststore",
    "keySizes",
    "commonCerts",
    "selfSignedSubjects",
    "timeseries",
    "authPlain",
    "islands",
    "summary",
)

FORMATS = ("text-table", "json", "csv")

#: Report kinds that classify chains and therefore need a truststore.
_NEEDS_TRUSTSTORE = frozenset({"truststore", "keySizes", "selfSignedSubjects"})
_NEEDS_SNAPSHOTS = frozenset({"timeseries"})


@dataclass(frozen=True)
class ReportSpec:
    kind: str
    ports: tuple[int, ...] | None = None
    format: str = "text-table"

    def __post_init__(self) -> None:
        if self.kind not in REPORT_KINDS:
            raise UsageError(
                f"unknown report kind {self.kind!r}; expected one of "
                + ", ".join(REPORT_KINDS)
            )
        if self.format not in FORMATS:
            raise UsageError(
                f"unknown format {self.format!r}; expected one of "
                + ", ".join(FORMATS)
            )


@dataclass
class ReportInputs:
    """Everything a report might consume; kinds check what they need."""

    registry: Registry
    records: Sequence[HostScanRecord] | None = None
    truststore: certs_mod.Truststore | None = None
    at: datetime | None = None
    snapshots: Sequence[tuple[str, Sequence[HostScanRecord]]] | None = None


@dataclass
class Table:
    """Materialized report: columns, typed rows, and footer lines.

    Cells are str, int, or float; floats are fractions in [0, 1] rendered
    as percentages by the text formatter and passed through at full
    precision by the machine formats.
    """

    kind: str
    columns: list[str]
    rows: list[list[object]]
    footers: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Shared helpers


def _filter_ports(
    records: Sequence[HostScanRecord], ports: tuple[int, ...] | None
) -> list[HostScanRecord]:
    if ports is None:
        return list(records)
    keep = set(ports)
    return [r for r in records if r.endpoint.port in keep]


def _valid(records: Iterable[HostScanRecord]) -> list[HostScanRecord]:
    return [r for r in records if r.is_valid]


def _ports_of(records: Iterable[HostScanRecord]) -> list[int]:
    return sorted({r.endpoint.port for r in records})


def _accepted_pairs(record: HostScanRecord) -> set[tuple[ProtocolVersion, bytes]]:
    return {
        (o.version, o.suite_id)
        for o in record.outcomes
        if o.status is ProbeStatus.ACCEPTED and o.suite_id is not None
    }


def _supported_versions(record: HostScanRecord) -> frozenset[ProtocolVersion]:
    return frozenset(v for v, _ in _accepted_pairs(record))


def _require_records(inputs: ReportInputs) -> Sequence[HostScanRecord]:
    if inputs.records is None:
        raise UsageError("this report kind requires scan records (--scan)")
    return inputs.records


def _fraction_row(
    label: str,
    numerators: Mapping[int, int],
    denominators: Mapping[int, int],
    ports: Sequence[int],
) -> list[object]:
    row: list[object] = [label]
    for port in ports:
        total = denominators.get(port, 0)
        row.append(numerators.get(port, 0) / total if total else 0.0)
    return row


# ---------------------------------------------------------------------------
# Individual report builders


def _version_support(records: Sequence[HostScanRecord]) -> Table:
    valid = _valid(records)
    ports = _ports_of(valid)
    denominators = Counter(r.endpoint.port for r in valid)

    per_version: dict[ProtocolVersion, Counter[int]] = {
        v: Counter() for v in ProtocolVersion
    }
    exclusive: dict[frozenset[ProtocolVersion], Counter[int]] = {}
    for record in valid:
        supported = _supported_versions(record)
        for version in supported:
            per_version[version][record.endpoint.port] += 1
        exclusive.setdefault(supported, Counter())[record.endpoint.port] += 1

    columns = ["versions"] + [str(p) for p in ports]
    rows: list[list[object]] = []
    for version in ProtocolVersion:
        rows.append(
            _fraction_row(version.label, per_version[version], denominators, ports)
        )

    def _exclusive_label(versions: frozenset[ProtocolVersion]) -> str:
        if not versions:
            return "none"
        names = [v.label for v in ProtocolVersion if v in versions]
        return "only " + " & ".join(names)

    ordered = sorted(
        exclusive.items(),
        key=lambda kv: (-sum(kv[1].values()), _exclusive_label(kv[0])),
    )
    for versions, counts in ordered:
        rows.append(_fraction_row(_exclusive_label(versions), counts, denominators, ports))

    footers = [
        "valid hosts per port: "
        + ", ".join(f"{port}: {denominators[port]}" for port in ports)
    ]
    return Table(kind="versionSupport", columns=columns, rows=rows, footers=footers)


def _suite_acceptance(records: Sequence[HostScanRecord], registry: Registry) -> Table:
    valid = _valid(records)
    ports = _ports_of(valid)
    denominators = Counter(r.endpoint.port for r in valid)

    per_suite: dict[bytes, Counter[int]] = {}
    violators: dict[int, set[str]] = {}
    violating_suites: Counter[str] = Counter()
    for record in valid:
        port = record.endpoint.port
        pairs = _accepted_pairs(record)
        for suite in {s for _, s in pairs}:
            per_suite.setdefault(suite, Counter())[port] += 1
        for version, suite in pairs:
            info = registry.classify(suite)
            if (
                info is not None
                and info.export_grade
                and version in (ProtocolVersion.TLSv1_1, ProtocolVersion.TLSv1_2)
            ):
                violators.setdefault(port, set()).add(record.endpoint.host)
                violating_suites[info.display_name()] += 1

    def _name(suite: bytes) -> str:
        info = registry.classify(suite)
        return info.display_name() if info else suite.hex()

    ordered = sorted(
        per_suite.items(), key=lambda kv: (-sum(kv[1].values()), _name(kv[0]))
    )
    columns = ["suite"] + [str(p) for p in ports]
    rows = [
        _fraction_row(_name(suite), counts, denominators, ports)
        for suite, counts in ordered
    ]

    footers = []
    violator_total = sum(len(hosts) for hosts in violators.values())
    if violator_total:
        detail = ", ".join(
            f"{name} x{count}" for name, count in violating_suites.most_common()
        )
        footers.append(
            f"export-grade suites accepted under TLSv1.1/TLSv1.2 "
            f"(forbidden): {violator_total} host-port pairs ({detail})"
        )
    else:
        footers.append(
            "export-grade suites accepted under TLSv1.1/TLSv1.2 (forbidden): 0"
        )
    return Table(kind="suiteAcceptance", columns=columns, rows=rows, footers=footers)


def _preference(records: Sequence[HostScanRecord], registry: Registry) -> Table:
    valid = _valid(records)
    per_version: dict[ProtocolVersion, Counter[bytes]] = {}
    hosts_with: Counter[ProtocolVersion] = Counter()
    for record in valid:
        seen: dict[ProtocolVersion, bytes] = {}
        for outcome in record.outcomes:
            if outcome.status is ProbeStatus.PREFERRED and outcome.suite_id:
                seen[outcome.version] = outcome.suite_id
        for version, suite in seen.items():
            per_version.setdefault(version, Counter())[suite] += 1
            hosts_with[version] += 1

    def _name(suite: bytes) -> str:
        info = registry.classify(suite)
        return info.display_name() if info else suite.hex()

    columns = ["version", "preferredSuite", "hosts", "fraction"]
    rows: list[list[object]] = []
    for version in ProtocolVersion:
        if version not in per_version:
            continue
        total = hosts_with[version]
        ordered = sorted(
            per_version[version].items(), key=lambda kv: (-kv[1], _name(kv[0]))
        )
        for suite, count in ordered:
            rows.append([version.label, _name(suite), count, count / total])
    return Table(kind="preference", columns=columns, rows=rows)


def _family_table(
    kind: str,
    records: Sequence[HostScanRecord],
    registry: Registry,
    family_of: Callable[[object], str],
    column: str,
) -> Table:
    valid = _valid(records)
    ports = _ports_of(valid)
    denominators = Counter(r.endpoint.port for r in valid)
    per_family: dict[str, Counter[int]] = {}
    for record in valid:
        families = set()
        for _, suite in _accepted_pairs(record):
            info = registry.classify(suite)
            if info is not None:
                families.add(family_of(info))
        for family in families:
            per_family.setdefault(family, Counter())[record.endpoint.port] += 1
    ordered = sorted(
        per_family.items(), key=lambda kv: (-sum(kv[1].values()), kv[0])
    )
    columns = [column] + [str(p) for p in ports]
    rows = [
        _fraction_row(family, counts, denominators, ports)
        for family, counts in ordered
    ]
    return Table(kind=kind, columns=columns, rows=rows)


def _dh_params(records: Sequence[HostScanRecord], registry: Registry) -> Table:
    table = dhparams.dh_group_size_table(records, registry)
    ports = table.ports
    columns = ["class", "primeBits"] + [str(p) for p in ports]
    rows: list[list[object]] = []
    buckets = [str(b) for b in dhparams.DH_SIZE_BUCKETS] + ["other"]
    for cls in (dhparams.EXPORT_CLASS, dhparams.NON_EXPORT_CLASS):
        for bucket in buckets:
            values = [table.fraction(cls, bucket, port) for port in ports]
            if any(values):
                rows.append([cls, bucket] + values)
    footers = [
        "distinct IPs with DH handshakes per (class, port): "
        + "; ".join(
            f"{cls} {port}: {count}"
            for cls in sorted(table.denominators)
            for port, count in sorted(table.denominators[cls].items())
        )
    ]
    return Table(kind="dhParams", columns=columns, rows=rows, footers=footers)


def _curves(records: Sequence[HostScanRecord]) -> Table:
    usage = dhparams.curve_usage_table(records)
    ports = sorted(usage)
    names = sorted({name for table in usage.values() for name in table})
    columns = ["curve"] + [str(p) for p in ports]
    rows = []
    for name in sorted(
        names, key=lambda n: (-max(usage[p].get(n, 0.0) for p in ports), n)
    ):
        rows.append([name] + [usage[port].get(name, 0.0) for port in ports])
    return Table(kind="curves", columns=columns, rows=rows)


def _evaluations(
    records: Sequence[HostScanRecord], inputs: ReportInputs
) -> list[certs_mod.ChainEvaluation]:
    if inputs.truststore is None:
        raise UsageError("this report kind requires a truststore (--truststore)")
    at = inputs.at or datetime.now(tz=timezone.utc)
    return certs_mod.evaluate_records(_valid(records), inputs.truststore, at)


def _truststore_report(
    records: Sequence[HostScanRecord], inputs: ReportInputs
) -> Table:
    evaluations = _evaluations(records, inputs)
    ports = sorted({e.port for e in evaluations})
    denominators: Counter[int] = Counter(e.port for e in evaluations)
    per_verdict: dict[str, Counter[int]] = {}
    for evaluation in evaluations:
        per_verdict.setdefault(evaluation.verdict.value, Counter())[
            evaluation.port
        ] += 1
    columns = ["verdict"] + [str(p) for p in ports]
    rows = [
        _fraction_row(verdict.value, per_verdict.get(verdict.value, Counter()), denominators, ports)
        for verdict in certs_mod.ALL_VERDICTS
    ]
    footers = [
        "hosts presenting chains per port: "
        + ", ".join(f"{port}: {denominators[port]}" for port in ports)
    ]
    return Table(kind="truststore", columns=columns, rows=rows, footers=footers)


def _key_sizes(records: Sequence[HostScanRecord], inputs: ReportInputs) -> Table:
    evaluations = _evaluations(records, inputs)
    populations = ("all", "trustedLeaves", "selfSigned")
    histograms = {
        p: certs_mod.key_size_histogram(evaluations, p) for p in populations
    }
    buckets = [str(b) for b in certs_mod.KEY_SIZE_BUCKETS] + ["other"]
    columns = ["keyBits"] + list(populations)
    rows = []
    for bucket in buckets:
        row: list[object] = [bucket]
        for population in populations:
            histogram = histograms[population]
            row.append(histogram.fractions.get(bucket, 0.0))
        rows.append(row)
    footers = [
        "RSA certificates per population: "
        + ", ".join(f"{p}: {histograms[p].total_rsa}" for p in populations)
    ]
    return Table(kind="keySizes", columns=columns, rows=rows, footers=footers)


def _common_certs(records: Sequence[HostScanRecord]) -> Table:
    clusters = certs_mod.common_certificate_clusters(_valid(records))
    columns = ["fingerprint", "subjectCN", "issuerCN", "ports", "distinctIps"]
    rows = []
    for cluster in clusters[:20]:
        ports = ", ".join(
            f"{port}: {count}" for port, count in cluster.per_port_ip_counts.items()
        )
        rows.append(
            [
                cluster.fingerprint,
                cluster.subject_cn,
                cluster.issuer_cn,
                ports,
                cluster.total,
            ]
        )
    return Table(kind="commonCerts", columns=columns, rows=rows)


def _self_signed_subjects(
    records: Sequence[HostScanRecord], inputs: ReportInputs
) -> Table:
    evaluations = _evaluations(records, inputs)
    clusters = certs_mod.self_signed_subject_clusters(evaluations)
    columns = ["commonName", "orgUnit", "organization", "keyBitsMode", "distinctIps"]
    rows = []
    for cluster in clusters[:20]:
        cn, ou, org = cluster.subject
        rows.append([cn, ou, org, cluster.key_bits_mode or "", cluster.ip_count])
    return Table(kind="selfSignedSubjects", columns=columns, rows=rows)


def _timeseries(inputs: ReportInputs) -> Table:
    if not inputs.snapshots:
        raise UsageError("timeseries requires dated snapshots (--snapshot DATE=FILE)")
    series = certs_mod.key_size_time_series(inputs.snapshots)
    columns = ["port", "date", "keyBits", "count"]
    rows: list[list[object]] = []
    for port in sorted(series):
        for date in sorted(series[port]):
            for bucket, count in sorted(series[port][date].items()):
                rows.append([port, date, bucket, count])
    return Table(kind="timeseries", columns=columns, rows=rows)


def _auth_plain(records: Sequence[HostScanRecord]) -> Table:
    with_caps = [r for r in records if r.capabilities is not None]
    ports = sorted({r.endpoint.port for r in with_caps})
    denominators = Counter(r.endpoint.port for r in with_caps)
    advertises: Counter[int] = Counter()
    exposures: dict[str, Counter[int]] = {}
    for record in with_caps:
        port = record.endpoint.port
        if record.capabilities.advertises_auth_plain_pre_tls:
            advertises[port] += 1
        exposures.setdefault(
            record.capabilities.auth_exposure.value, Counter()
        )[port] += 1
    columns = ["metric"] + [str(p) for p in ports]
    rows = [_fraction_row("advertisesAuthPlainPreTls", advertises, denominators, ports)]
    for exposure in AuthExposure:
        rows.append(
            _fraction_row(
                "exposure: " + exposure.value,
                exposures.get(exposure.value, Counter()),
                denominators,
                ports,
            )
        )
    footers = [
        "hosts with pre-TLS dialogue per port: "
        + ", ".join(f"{port}: {denominators[port]}" for port in ports)
    ]
    return Table(kind="authPlain", columns=columns, rows=rows, footers=footers)


def _islands(records: Sequence[HostScanRecord]) -> Table:
    nodes = islands.build_graph(records)
    if not nodes:
        raise UsageError("islands requires at least one valid record")
    report = islands.compatibility_report(nodes)
    columns = ["bucket", "probability"]
    rows = [[label, value] for label, value in report.display_buckets().items()]
    footers = [
        f"hosts: {report.total_weight}, configurations: {len(nodes)}, "
        f"ordered pairs: {report.total_weight ** 2}"
    ]
    return Table(kind="islands", columns=columns, rows=rows, footers=footers)


def _summary(records: Sequence[HostScanRecord]) -> Table:
    total = len(records)
    valid = sum(1 for r in records if r.is_valid)
    invalid = total - valid
    reasons = Counter(
        r.invalid_reason or "other" for r in records if not r.is_valid
    )
    columns = ["metric", "count", "fraction"]
    rows: list[list[object]] = [
        ["total scans", total, 1.0 if total else 0.0],
        ["valid results", valid, valid / total if total else 0.0],
        ["invalid results", invalid, invalid / total if total else 0.0],
    ]
    for reason in ("timeout", "connectionRejected", "ehloRejected", "startTlsRejected"):
        count = reasons.pop(reason, 0)
        rows.append(
            [f"invalid: {reason}", count, count / invalid if invalid else 0.0]
        )
    for reason, count in sorted(reasons.items()):
        rows.append(
            [f"invalid: {reason}", count, count / invalid if invalid else 0.0]
        )
    return Table(kind="summary", columns=columns, rows=rows)


# ---------------------------------------------------------------------------
# Dispatch and formatting


def build_table(spec: ReportSpec, inputs: ReportInputs) -> Table:
    if spec.kind in _NEEDS_TRUSTSTORE and inputs.truststore is None:
        raise UsageError(f"report kind {spec.kind} requires --truststore")
    if spec.kind in _NEEDS_SNAPSHOTS:
        return _timeseries(inputs)

    records = _filter_ports(_require_records(inputs), spec.ports)
    registry = inputs.registry
    if spec.kind == "versionSupport":
        return _version_support(records)
    if spec.kind == "suiteAcceptance":
        return _suite_acceptance(records, registry)
    if spec.kind == "preference":
        return _preference(records, registry)
    if spec.kind == "keyExchange":
        return _family_table(
            "keyExchange", records, registry, lambda s: s.kex.value, "kex"
        )
    if spec.kind == "encryption":
        return _family_table(
            "encryption", records, registry, lambda s: s.enc, "enc"
        )
    if spec.kind == "dhParams":
        return _dh_params(records, registry)
    if spec.kind == "curves":
        return _curves(records)
    if spec.kind == "truststore":
        return _truststore_report(records, inputs)
    if spec.kind == "keySizes":
        return _key_sizes(records, inputs)
    if spec.kind == "commonCerts":
        return _common_certs(records)
    if spec.kind == "selfSignedSubjects":
        return _self_signed_subjects(records, inputs)
    if spec.kind == "authPlain":
        return _auth_plain(records)
    if spec.kind == "islands":
        return _islands(records)
    if spec.kind == "summary":
        return _summary(records)
    raise UsageError(f"unhandled report kind {spec.kind!r}")


def _render_cell_text(value: object) -> str:
    if isinstance(value, float):
        return f"{100 * value:.2f}%"
    return str(value)


def render_text(table: Table) -> str:
    header = list(table.columns)
    body = [[_render_cell_text(cell) for cell in row] for row in table.rows]
    widths = [len(h) for h in header]
    for row in body:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def fmt(cells: list[str]) -> str:
        parts = []
        for i, cell in enumerate(cells):
            if i == 0:
                parts.append(cell.ljust(widths[i]))
            else:
                parts.append(cell.rjust(widths[i]))
        return "  ".join(parts).rstrip()

    lines = [f"# {table.kind}", fmt(header), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in body)
    lines.extend(table.footers)
    return "\n".join(lines) + "\n"


def render_json(table: Table) -> str:
    payload = {
        "schema": REPORT_SCHEMA,
        "kind": table.kind,
        "columns": table.columns,
        "rows": table.rows,
        "footers": table.footers,
    }
    return json.dumps(payload, indent=1, sort_keys=False) + "\n"


def render_csv(table: Table) -> str:
    out = io.StringIO()
    writer = csv.writer(out, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(["#schema", REPORT_SCHEMA, table.kind])
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([repr(c) if isinstance(c, float) else c for c in row])
    return out.getvalue()


def report(spec: ReportSpec, inputs: ReportInputs) -> str:
    """Build and render one report; deterministic for identical inputs."""
    table = build_table(spec, inputs)
    if spec.format == "text-table":
        return render_text(table)
    if spec.format == "json":
        return render_json(table)
    return render_csv(table)

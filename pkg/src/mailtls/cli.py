"""Command-line entry point: `mailtls <subcommand>`.

Subcommands cover the full pipeline: running scans (`scan`), spinning up a
mock server farm (`testbed`), certificate analysis (`certs`), weak-key
detection (`gcd`), the pairwise-compatibility model (`islands`), the
general table renderer (`report`), and three shortcut reports over
key-exchange material (`dh-report`, `curve-report`, `prime-report`).

Exit codes: 0 success, 1 usage error, 2 input parse error, 3 runtime error.
A `--config FILE` of `key = value` lines may preset any flag of the chosen
subcommand; explicit flags always win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import batch_gcd as gcd_mod
from . import certs as certs_mod
from . import islands, reports
from .errors import InputFormatError, MailTlsError, UsageError
from .records import RecordWriter, load_records, read_targets
from .registry import default_probe_plan, default_registry
from .scanner import ScanLimits, run_campaign
from .testbed import load_policies, spawn_farm


class _Parser(argparse.ArgumentParser):
    """argparse maps its own usage failures to exit code 2; we want 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _parse_ports(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in raw.split(","))
    except ValueError:
        raise UsageError(f"--ports expects comma-separated integers, got {raw!r}")


def _parse_at(raw: str) -> datetime:
    try:
        stamp = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError:
        raise UsageError(f"--at expects an RFC-3339 timestamp, got {raw!r}")
    return stamp if stamp.tzinfo else stamp.replace(tzinfo=timezone.utc)


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="mailtls", description=__doc__.split("\n")[0])
    parser.add_argument(
        "--config",
        metavar="FILE",
        help="key = value file presetting flags of the chosen subcommand",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands: dict[str, _Parser] = {}

    def command(name: str, help_text: str) -> _Parser:
        p = sub.add_parser(name, help=help_text)
        commands[name] = p
        return p

    p = command("scan", "probe targets and write scan records")
    p.add_argument("--input", required=True, help="targets file: host:port/protocol per line")
    p.add_argument("--output", required=True, help="scan records JSONL output path")
    p.add_argument("--plan", help="probe-plan JSON (default: full 551-probe plan)")
    p.add_argument("--rate", type=int, default=None, help="max new connections per second")
    p.add_argument("--concurrency", type=int, default=8, help="parallel targets")
    p.add_argument("--delay", type=int, default=0, help="inter-probe delay per target, ms")
    p.add_argument("--timeout-connect", type=int, default=10000, help="connect timeout, ms")
    p.add_argument("--timeout-read", type=int, default=10000, help="per-read timeout, ms")

    p = command("testbed", "serve mock endpoints defined by a policy file")
    p.add_argument("--policies", required=True, help="policy JSON file")
    p.add_argument("--base-port", type=int, default=0, help="first listening port (0 = ephemeral)")
    p.add_argument("--duration", type=float, default=None, help="stop after N seconds (default: until interrupted)")

    p = command("certs", "certificate chain analysis over scan records")
    p.add_argument("--scan", help="scan records JSONL")
    p.add_argument("--truststore", help="PEM bundle of trusted roots")
    p.add_argument("--report", required=True, choices=("validation", "keysize", "clusters", "timeseries"))
    p.add_argument("--at", type=_parse_at, help="evaluation time (RFC-3339), default: now")
    p.add_argument("--snapshot", action="append", metavar="DATE=FILE", help="dated scan file for timeseries; repeatable")
    p.add_argument("--format", choices=reports.FORMATS, default="text-table")

    p = command("gcd", "batch-GCD weak-key detection over RSA moduli")
    p.add_argument("--moduli", required=True, help="file with one hex modulus per line")

    p = command("islands", "pairwise TLS-compatibility model with policy what-ifs")
    p.add_argument("--scan", required=True, help="scan records JSONL")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--drop-rc4", action="store_true", help="simulate removing every RC4 suite")
    group.add_argument("--allowlist", help="file of allowed suite names, one per line")
    p.add_argument("--ranking", help="suite-name ranking file for per-suite attribution")
    p.add_argument("--out", required=True, help="machine-readable JSON output path")

    p = command("report", "render one aggregate table from scan records")
    p.add_argument("--scan", help="scan records JSONL")
    p.add_argument("--kind", required=True, choices=reports.REPORT_KINDS)
    p.add_argument("--ports", type=_parse_ports, help="comma-separated port filter")
    p.add_argument("--format", choices=reports.FORMATS, default="text-table")
    p.add_argument("--truststore", help="PEM bundle (verdict-based kinds)")
    p.add_argument("--at", type=_parse_at, help="evaluation time for chain validation")
    p.add_argument("--snapshot", action="append", metavar="DATE=FILE", help="dated scan file for timeseries; repeatable")

    for name, kind, help_text in (
        ("dh-report", "dhParams", "DH prime-size table from scan records"),
        ("curve-report", "curves", "EC curve usage table from scan records"),
        ("prime-report", None, "shared DH primes with known-prime labels"),
    ):
        p = command(name, help_text)
        p.add_argument("--scan", required=True, help="scan records JSONL")
        p.add_argument("--format", choices=reports.FORMATS, default="text-table")
        p.set_defaults(report_kind=kind)

    return parser, commands


# ---------------------------------------------------------------------------
# Config file support


def _load_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    for line_no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InputFormatError(f"{path}:{line_no}: expected key = value")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _apply_config(subparser: _Parser, config: dict[str, str]) -> None:
    """Set config values as defaults so explicit flags still override."""
    actions = {
        action.dest: action
        for action in subparser._actions  # noqa: SLF001 - argparse has no public view
        if action.dest != "help"
    }
    defaults = {}
    for key, raw in config.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None:
            continue
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            defaults[dest] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):  # noqa: SLF001
            defaults[dest] = [raw]
        elif action.type is not None:
            try:
                defaults[dest] = action.type(raw)
            except (TypeError, ValueError) as exc:
                raise InputFormatError(f"config key {key}: {exc}")
        else:
            defaults[dest] = raw
    subparser.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# Subcommand implementations


def _read_lines(path: str, what: str) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc}")
    return [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]


def _load_plan(path: str, registry):
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read plan file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: {exc}")
    entries = document.get("entries") if isinstance(document, dict) else document
    if not isinstance(entries, list):
        raise InputFormatError(f"{path}: expected a list of [version, suite] entries")
    from .registry import ProbePlan, ProtocolVersion

    versions = {v.value: v for v in ProtocolVersion}
    plan_entries = []
    for i, item in enumerate(entries):
        try:
            version_label, suite_ref = item
        except (TypeError, ValueError):
            raise InputFormatError(f"{path}: entry {i}: expected [version, suite]")
        version = versions.get(version_label)
        if version is None:
            raise InputFormatError(f"{path}: entry {i}: unknown version {version_label!r}")
        suite = registry.by_name(suite_ref) or registry.classify(
            bytes.fromhex(suite_ref) if all(c in "0123456789abcdefABCDEF" for c in suite_ref) else b""
        )
        if suite is None:
            raise InputFormatError(f"{path}: entry {i}: unknown suite {suite_ref!r}")
        plan_entries.append((version, suite))
    return ProbePlan(entries=tuple(plan_entries))


def _cmd_scan(args) -> int:
    registry = default_registry()
    plan = _load_plan(args.plan, registry) if args.plan else default_probe_plan(registry)
    limits = ScanLimits(
        connect_timeout=args.timeout_connect / 1000.0,
        read_timeout=args.timeout_read / 1000.0,
        inter_probe_delay=args.delay / 1000.0,
    )
    with open(args.input, "r", encoding="utf-8") as handle:
        targets = list(read_targets(handle))
    if not targets:
        raise InputFormatError(f"{args.input}: no targets")
    with open(args.output, "w", encoding="utf-8") as out:
        writer = RecordWriter(out)
        summary = run_campaign(
            targets,
            plan,
            limits,
            writer,
            concurrency=args.concurrency,
            rate_cap=args.rate,
            registry=registry,
        )
    print(json.dumps(summary.to_json(), indent=1))
    return 0


def _cmd_testbed(args) -> int:
    policies = load_policies(args.policies)
    farm = spawn_farm(policies, base_port=args.base_port)
    try:
        for endpoint in farm.endpoints:
            print(
                json.dumps(
                    {
                        "name": endpoint.name,
                        "host": endpoint.host,
                        "port": endpoint.port,
                        "protocol": endpoint.protocol.value,
                    }
                ),
                flush=True,
            )
        if args.duration is not None:
            time.sleep(args.duration)
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        farm.close()
    return 0


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"this action requires {flag}")
    return value


def _parse_snapshots(raw_list):
    snapshots = []
    for raw in raw_list or ():
        date, sep, path = raw.partition("=")
        if not sep:
            raise UsageError(f"--snapshot expects DATE=FILE, got {raw!r}")
        snapshots.append((date.strip(), load_records(path.strip())))
    return snapshots


def _cmd_certs(args) -> int:
    registry = default_registry()
    inputs = reports.ReportInputs(registry=registry, at=args.at)
    if args.report == "timeseries":
        inputs.snapshots = _parse_snapshots(_require(args.snapshot, "--snapshot"))
        kinds = ("timeseries",)
    else:
        inputs.records = load_records(_require(args.scan, "--scan"))
        if args.report in ("validation", "keysize"):
            inputs.truststore = certs_mod.load_truststore(
                _require(args.truststore, "--truststore")
            )
        kinds = {
            "validation": ("truststore",),
            "keysize": ("keySizes",),
            "clusters": ("commonCerts",),
        }[args.report]
        if args.report == "clusters" and args.truststore:
            inputs.truststore = certs_mod.load_truststore(args.truststore)
            kinds = ("commonCerts", "selfSignedSubjects")
    for kind in kinds:
        spec = reports.ReportSpec(kind=kind, format=args.format)
        sys.stdout.write(reports.report(spec, inputs))
    return 0


def _cmd_gcd(args) -> int:
    observations = []
    for line_no, line in enumerate(_read_lines(args.moduli, "moduli file"), 1):
        token = line.split()[0]
        try:
            modulus = int(token, 16)
        except ValueError:
            raise InputFormatError(f"{args.moduli}:{line_no}: not a hex modulus")
        observations.append((modulus, ""))
    result = gcd_mod.analyze_moduli(observations)
    print(json.dumps({"schema": "mailtls/gcd/v1"}))
    for finding in result.findings:
        print(json.dumps({"kind": "finding", **finding.to_json()}))
    for dup in result.duplicates:
        print(
            json.dumps(
                {
                    "kind": "duplicate",
                    "modulus": format(dup.modulus, "x"),
                    "count": dup.count,
                }
            )
        )
    return 0


def _suites_from_file(path: str, registry) -> list[bytes]:
    suites = []
    for line_no, name in enumerate(_read_lines(path, "suite list"), 1):
        info = registry.by_name(name)
        if info is None:
            raise InputFormatError(f"{path}:{line_no}: unknown suite {name!r}")
        suites.append(info.id)
    if not suites:
        raise InputFormatError(f"{path}: empty suite list")
    return suites


def _bundled_allowlist(registry) -> list[bytes]:
    data = Path(__file__).parent / "data" / "allowlist.txt"
    return _suites_from_file(str(data), registry)


def _cmd_islands(args) -> int:
    registry = default_registry()
    records = load_records(args.scan)
    nodes = islands.build_graph(records)
    if not nodes:
        raise MailTlsError("no valid records in scan input")

    policy_name = "none"
    if args.drop_rc4:
        nodes = islands.apply_policy(nodes, islands.drop_enc_policy(registry, "RC4"))
        policy_name = "drop-rc4"
    elif args.allowlist:
        allowed = _suites_from_file(args.allowlist, registry)
        nodes = islands.apply_policy(nodes, islands.allowlist_policy(allowed))
        policy_name = "allowlist"

    report = islands.compatibility_report(nodes)
    payload = {
        "schema": "mailtls/islands/v1",
        "policy": policy_name,
        **report.to_json(),
    }

    ranking = None
    if args.ranking:
        ranking = _suites_from_file(args.ranking, registry)
    elif policy_name == "allowlist":
        ranking = allowed
    if ranking is not None:
        present = {s for node in nodes for _, s in node.config}
        full_ranking = list(ranking) + sorted(present - set(ranking))
        attribution = islands.per_suite_attribution(nodes, full_ranking)
        denominator = attribution.total_weight**2
        payload["attribution"] = [
            {
                "suite": suite.hex() if suite else None,
                "suiteName": (
                    registry.classify(suite).display_name()
                    if suite and registry.classify(suite)
                    else ("Plaintext" if suite is None else suite.hex())
                ),
                "numerator": p.numerator * (denominator // p.denominator),
                "probability": float(p),
            }
            for suite, p in attribution.exact.items()
        ]

    Path(args.out).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    shown = ", ".join(
        f"{label}: {100 * value:.2f}%"
        for label, value in report.display_buckets().items()
    )
    print(f"policy={policy_name} hosts={report.total_weight} {shown}")
    return 0


def _cmd_report(args) -> int:
    registry = default_registry()
    inputs = reports.ReportInputs(registry=registry, at=args.at)
    if args.kind == "timeseries":
        inputs.snapshots = _parse_snapshots(_require(args.snapshot, "--snapshot"))
    else:
        inputs.records = load_records(_require(args.scan, "--scan"))
    if args.truststore:
        inputs.truststore = certs_mod.load_truststore(args.truststore)
    spec = reports.ReportSpec(kind=args.kind, ports=args.ports, format=args.format)
    sys.stdout.write(reports.report(spec, inputs))
    return 0


def _cmd_fixed_report(args) -> int:
    registry = default_registry()
    records = load_records(args.scan)
    if args.report_kind is not None:
        spec = reports.ReportSpec(kind=args.report_kind, format=args.format)
        inputs = reports.ReportInputs(registry=registry, records=records)
        sys.stdout.write(reports.report(spec, inputs))
        return 0
    # prime-report: shared DH primes with known-prime labels.
    from . import dhparams

    entries = dhparams.shared_prime_report(records)
    table = reports.Table(
        kind="sharedPrimes",
        columns=["primeDigest", "bits", "distinctIps", "label"],
        rows=[
            [e.digest[:16], e.bits, e.distinct_ip_count, e.label or ""]
            for e in entries
        ],
    )
    if args.format == "json":
        sys.stdout.write(reports.render_json(table))
    elif args.format == "csv":
        sys.stdout.write(reports.render_csv(table))
    else:
        sys.stdout.write(reports.render_text(table))
    return 0


_HANDLERS = {
    "scan": _cmd_scan,
    "testbed": _cmd_testbed,
    "certs": _cmd_certs,
    "gcd": _cmd_gcd,
    "islands": _cmd_islands,
    "report": _cmd_report,
    "dh-report": _cmd_fixed_report,
    "curve-report": _cmd_fixed_report,
    "prime-report": _cmd_fixed_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    try:
        # Resolve --config before parsing so its values become defaults.
        if "--config" in argv:
            at = argv.index("--config")
            if at + 1 >= len(argv):
                raise UsageError("--config requires a file argument")
            config = _load_config(argv[at + 1])
            del argv[at : at + 2]
            for subparser in commands.values():
                _apply_config(subparser, config)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        return _HANDLERS[args.command](args)
    except MailTlsError as exc:
        print(f"mailtls: {exc}", file=sys.stderr)
        return exc.exit_code
    except BrokenPipeError:
        # Downstream pager/head closed the pipe; suppress the noise and use
        # the conventional 128+SIGPIPE status.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 141
    except OSError as exc:
        print(f"mailtls: {exc}", file=sys.stderr)
        return MailTlsError.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())

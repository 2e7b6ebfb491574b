"""Per-target probing and campaign orchestration.

A target scan walks the probe plan serially — one TCP connection per plan
entry, a single-suite ClientHello each — then runs one preference probe per
version that accepted anything.  Campaigns run many targets concurrently
under a global new-connection rate cap, while probes within a target stay
strictly sequential, spaced by the inter-probe delay.

Failure handling mirrors the measurement taxonomy: probes that die before
the TLS layer increment per-stage counters instead of producing outcomes; a
target whose first probes all fail the same way is abandoned early and
classified {timeout, connectionRejected, ehloRejected, startTlsRejected}.
For targets that did reach TLS, plan entries lost to transient pre-TLS
failures are retried once and recorded as status=error outcomes if they fail
again, so a valid record always carries one outcome per plan entry.
"""

from __future__ import annotations

import os
import socket
import struct
import threading
import time
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from . import wire
from .drivers import (
    AppProtocol,
    DriverFailure,
    FailureKind,
    LineChannel,
    PlaintextSession,
    detect_plaintext_auth_exposure,
    negotiate_plaintext,
    upgrade_starttls,
)
from .errors import MailTlsError
from .records import (
    CapabilitiesSnapshot,
    Endpoint,
    HostScanRecord,
    ProbeOutcome,
    ProbeStatus,
    RecordWriter,
    chain_fingerprint,
    format_timestamp,
)
from .registry import (
    DH_KEX,
    ECDH_KEX,
    ProbePlan,
    ProtocolVersion,
    Registry,
    SSLV3_PLUS,
    default_probe_plan,
    default_registry,
)

#: Stage-precise driver kinds folded into the four-way record taxonomy.
#: A failure-code greeting is the server rejecting the connection at the
#: application layer, so it lands in connectionRejected.
TAXONOMY = {
    FailureKind.TIMEOUT: "timeout",
    FailureKind.CONNECTION_REJECTED: "connectionRejected",
    FailureKind.BANNER_REJECTED: "connectionRejected",
    FailureKind.EHLO_REJECTED: "ehloRejected",
    FailureKind.STARTTLS_REJECTED: "startTlsRejected",
}
#: Tie-break order for invalidReason: a deeper stage wins.
_STAGE_DEPTH = {"timeout": 0, "connectionRejected": 1, "ehloRejected": 2, "startTlsRejected": 3}


@dataclass(frozen=True)
class ScanLimits:
    """Timeouts and pacing for one target scan (defaults are scanner policy)."""

    connect_timeout: float = 10.0
    read_timeout: float = 10.0
    probe_deadline: float = 30.0
    inter_probe_delay: float = 0.0
    failfast_threshold: int = 5
    retry_connect_timeout: bool = True


class RateLimiter:
    """Global sliding-window cap on new connections (None = unlimited)."""

    def __init__(self, per_second: int | None):
        if per_second is not None and per_second <= 0:
            raise ValueError("rate cap must be positive")
        self._cap = per_second
        self._starts: deque[float] = deque()
        self._lock = threading.Lock()
        self.total = 0

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                while self._starts and now - self._starts[0] >= 1.0:
                    self._starts.popleft()
                if self._cap is None or len(self._starts) < self._cap:
                    self._starts.append(now)
                    self.total += 1
                    return
                wait = self._starts[0] + 1.0 - now
            time.sleep(max(wait, 0.001))


class HelloCache:
    """Prebuilt ClientHello bytes, shared across a campaign's probes."""

    def __init__(self) -> None:
        self._random = os.urandom(32)
        self._cache: dict[tuple[ProtocolVersion, tuple[bytes, ...]], bytes] = {}
        self._lock = threading.Lock()

    def hello(self, version: ProtocolVersion, suites: tuple[bytes, ...]) -> bytes:
        key = (version, suites)
        cached = self._cache.get(key)
        if cached is None:
            if version is ProtocolVersion.SSLv2:
                cached = wire.build_sslv2_client_hello(suites, challenge=self._random[:16])
            else:
                cached = wire.build_client_hello(version, suites, self._random)
            with self._lock:
                self._cache.setdefault(key, cached)
        return cached


def make_kex_resolver(registry: Registry) -> Callable[[bytes], str | None]:
    table: dict[bytes, str | None] = {}
    for suite in registry:
        if suite.kex in DH_KEX:
            table[suite.id] = "dh"
        elif suite.kex in ECDH_KEX:
            table[suite.id] = "ecdh"
        else:
            table[suite.id] = None
    return table.get


class _PreTlsFailure(Exception):
    """Probe died before the TLS layer; carries what the dialogue disclosed."""

    def __init__(self, kind: FailureKind, detail: str, session: PlaintextSession | None = None):
        super().__init__(f"{kind.value}: {detail}")
        self.kind = kind
        self.detail = detail
        self.session = session


@dataclass
class _ProbeResult:
    outcome: ProbeOutcome
    chain: tuple[bytes, ...] | None
    session: PlaintextSession | None
    starttls_ok: bool


_LINGER_RST = struct.pack("ii", 1, 0)


def _abortive_close(sock: socket.socket) -> None:
    """Close with RST so mass scanning does not exhaust ports on TIME_WAIT."""
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, _LINGER_RST)
    except OSError:
        pass
    try:
        sock.close()
    except OSError:
        pass


def _resolve(endpoint: Endpoint) -> tuple[int, tuple]:
    try:
        infos = socket.getaddrinfo(
            endpoint.host, endpoint.port, type=socket.SOCK_STREAM, proto=socket.IPPROTO_TCP
        )
    except socket.gaierror as exc:
        raise _PreTlsFailure(FailureKind.TIMEOUT, f"unresolvable: {exc}") from None
    family, _, _, _, sockaddr = infos[0]
    return family, sockaddr


def _connect(family: int, sockaddr: tuple, limits: ScanLimits) -> socket.socket:
    sock = socket.socket(family, socket.SOCK_STREAM)
    sock.settimeout(limits.connect_timeout)
    try:
        sock.connect(sockaddr)
    except socket.timeout:
        _abortive_close(sock)
        raise _PreTlsFailure(FailureKind.TIMEOUT, "connect timed out") from None
    except (ConnectionRefusedError, ConnectionResetError, ConnectionAbortedError):
        _abortive_close(sock)
        raise _PreTlsFailure(FailureKind.CONNECTION_REJECTED, "connection refused") from None
    except OSError as exc:
        _abortive_close(sock)
        raise _PreTlsFailure(
            FailureKind.TIMEOUT, f"unreachable: {exc.strerror or exc}"
        ) from None
    sock.settimeout(limits.read_timeout)
    return sock


def _flight_reader(sock: socket.socket, leftover: bytes, deadline: float, limits: ScanLimits):
    state = bytearray(leftover)

    def read(n: int) -> bytes:
        if state:
            chunk = bytes(state[:n])
            del state[:n]
            return chunk
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return b""
        try:
            sock.settimeout(min(limits.read_timeout, remaining))
            return sock.recv(min(n, 65536))
        except (socket.timeout, OSError):
            return b""

    return read


def _probe(
    version: ProtocolVersion,
    suites: tuple[bytes, ...],
    *,
    endpoint: Endpoint,
    address: tuple[int, tuple],
    limits: ScanLimits,
    limiter: RateLimiter,
    cache: HelloCache,
    kex_resolver: Callable[[bytes], str | None],
    accepted_status: ProbeStatus,
    started_at: float,
) -> _ProbeResult:
    """One connection, one hello, one parsed flight.

    Raises _PreTlsFailure when nothing TLS-level was exchanged; the single
    retry on pure connect-timeout happens here.
    """
    single_suite = suites[0] if accepted_status is ProbeStatus.ACCEPTED else None

    attempts = 2 if limits.retry_connect_timeout else 1
    sock: socket.socket | None = None
    for attempt in range(attempts):
        limiter.acquire()
        deadline = time.monotonic() + limits.probe_deadline
        try:
            sock = _connect(address[0], address[1], limits)
            break
        except _PreTlsFailure as failure:
            if failure.detail == "connect timed out" and attempt + 1 < attempts:
                continue
            raise
    assert sock is not None

    session: PlaintextSession | None = None
    starttls_ok = False
    leftover = b""
    try:
        if endpoint.protocol.uses_starttls:
            channel = LineChannel(sock)
            try:
                session = negotiate_plaintext(channel, endpoint.protocol)
                upgrade_starttls(channel, session)
            except DriverFailure as exc:
                raise _PreTlsFailure(exc.kind, exc.detail, session) from None
            starttls_ok = True
            leftover = channel.take_buffer()

        hello = cache.hello(version, suites)
        try:
            sock.sendall(hello)
        except (socket.timeout, OSError):
            outcome = ProbeOutcome(
                version=version,
                suite_id=single_suite,
                status=ProbeStatus.ERROR,
                started_at=started_at,
                error_reason="send failed",
            )
            return _ProbeResult(outcome, None, session, starttls_ok)

        reader = _flight_reader(sock, leftover, deadline, limits)
        if version is ProtocolVersion.SSLv2:
            result = wire.parse_sslv2_server_flight(reader, suites)
        else:
            result = wire.parse_server_flight(reader, version, suites, kex_resolver)
        outcome, chain = _result_to_outcome(
            result, version, single_suite, accepted_status, started_at, kex_resolver
        )
        return _ProbeResult(outcome, chain, session, starttls_ok)
    finally:
        _abortive_close(sock)


def _result_to_outcome(
    result: wire.FlightResult,
    version: ProtocolVersion,
    single_suite: bytes | None,
    accepted_status: ProbeStatus,
    started_at: float,
    kex_resolver: Callable[[bytes], str | None],
) -> tuple[ProbeOutcome, tuple[bytes, ...] | None]:
    if isinstance(result, wire.FlightAccepted):
        dh = result.kex_params if isinstance(result.kex_params, wire.DhParameters) else None
        ecdh = result.kex_params if isinstance(result.kex_params, wire.EcdhParameters) else None
        chain = result.chain if result.chain else None
        outcome = ProbeOutcome(
            version=version,
            suite_id=result.selected_suite,
            status=accepted_status,
            started_at=started_at,
            dh=dh,
            ecdh=ecdh,
            chain_ref=chain_fingerprint(result.chain) if chain else None,
        )
        return outcome, chain
    if isinstance(result, wire.FlightAlert):
        outcome = ProbeOutcome(
            version=version,
            suite_id=single_suite,
            status=ProbeStatus.REJECTED,
            started_at=started_at,
            alert=result.alert,
        )
        return outcome, None
    if isinstance(result, wire.FlightRejected):
        outcome = ProbeOutcome(
            version=version,
            suite_id=single_suite,
            status=ProbeStatus.REJECTED,
            started_at=started_at,
            error_reason=result.reason,
        )
        return outcome, None
    outcome = ProbeOutcome(
        version=version,
        suite_id=single_suite,
        status=ProbeStatus.ERROR,
        started_at=started_at,
        error_reason=f"malformed: {result.reason}",
    )
    return outcome, None


def probe_preference(
    endpoint: Endpoint,
    version: ProtocolVersion,
    candidates: Sequence[bytes],
    limits: ScanLimits | None = None,
    registry: Registry | None = None,
) -> ProbeOutcome:
    """Standalone preference probe: one hello offering all candidates."""
    if not candidates:
        raise ValueError("candidates must be nonempty")
    if version is ProtocolVersion.SSLv2:
        raise ValueError("preference probing is SSLv3+ only")
    registry = registry or default_registry()
    limits = limits or ScanLimits()
    result = _probe(
        version,
        tuple(bytes(s) for s in candidates),
        endpoint=endpoint,
        address=_resolve(endpoint),
        limits=limits,
        limiter=RateLimiter(None),
        cache=HelloCache(),
        kex_resolver=make_kex_resolver(registry),
        accepted_status=ProbeStatus.PREFERRED,
        started_at=time.time(),
    )
    return result.outcome


class _TargetScan:
    """Mutable state for one target's walk through the plan."""

    def __init__(
        self,
        endpoint: Endpoint,
        plan: ProbePlan,
        limits: ScanLimits,
        registry: Registry,
        limiter: RateLimiter,
        cache: HelloCache,
        kex_resolver: Callable[[bytes], str | None],
    ):
        self.endpoint = endpoint
        self.plan = plan
        self.limits = limits
        self.registry = registry
        self.limiter = limiter
        self.cache = cache
        self.kex_resolver = kex_resolver
        self.outcomes: list[ProbeOutcome] = []
        self.chains: dict[str, tuple[bytes, ...]] = {}
        self.failures: Counter[str] = Counter()
        self.session: PlaintextSession | None = None
        self.starttls_ok = False
        self._last_ts = 0.0

    def _next_timestamp(self) -> float:
        now = time.time()
        if now <= self._last_ts:
            now = self._last_ts + 1e-6
        self._last_ts = now
        return now

    def _note_failure(self, failure: _PreTlsFailure) -> None:
        self.failures[TAXONOMY[failure.kind]] += 1
        if failure.session is not None and self.session is None:
            self.session = failure.session

    def _register(self, result: _ProbeResult) -> None:
        if result.session is not None and self.session is None:
            self.session = result.session
        self.starttls_ok = self.starttls_ok or result.starttls_ok
        if result.chain is not None and result.outcome.chain_ref is not None:
            self.chains.setdefault(result.outcome.chain_ref, result.chain)
        self.outcomes.append(result.outcome)

    def _probe_once(
        self,
        version: ProtocolVersion,
        suites: tuple[bytes, ...],
        address: tuple[int, tuple],
        accepted_status: ProbeStatus,
    ) -> None:
        result = _probe(
            version,
            suites,
            endpoint=self.endpoint,
            address=address,
            limits=self.limits,
            limiter=self.limiter,
            cache=self.cache,
            kex_resolver=self.kex_resolver,
            accepted_status=accepted_status,
            started_at=self._next_timestamp(),
        )
        self._register(result)

    def run(self) -> HostScanRecord:
        started = time.time()
        delay = self.limits.inter_probe_delay
        failed_entries: list[tuple[ProtocolVersion, bytes]] = []
        consecutive = 0
        aborted = False

        try:
            address = _resolve(self.endpoint)
        except _PreTlsFailure as failure:
            self._note_failure(failure)
            return self._assemble(started)

        for index, (version, suite_info) in enumerate(self.plan.entries):
            if index and delay:
                time.sleep(delay)
            try:
                self._probe_once(version, (suite_info.id,), address, ProbeStatus.ACCEPTED)
                consecutive = 0
            except _PreTlsFailure as failure:
                self._note_failure(failure)
                failed_entries.append((version, suite_info.id))
                consecutive += 1
                if not self.outcomes and consecutive >= self.limits.failfast_threshold:
                    aborted = True
                    break

        # Gap repair: one retry for entries lost to transient pre-TLS failures,
        # so a valid record still covers the whole plan.
        if self.outcomes and failed_entries and not aborted:
            for version, suite in failed_entries:
                if delay:
                    time.sleep(delay)
                try:
                    self._probe_once(version, (suite,), address, ProbeStatus.ACCEPTED)
                except _PreTlsFailure as failure:
                    self._note_failure(failure)
                    self.outcomes.append(
                        ProbeOutcome(
                            version=version,
                            suite_id=suite,
                            status=ProbeStatus.ERROR,
                            started_at=self._next_timestamp(),
                            error_reason=failure.kind.value,
                        )
                    )

        if self.outcomes and not aborted:
            self._preference_pass(address, delay)

        return self._assemble(started)

    def _preference_pass(self, address: tuple[int, tuple], delay: float) -> None:
        accepted_by_version: dict[ProtocolVersion, set[bytes]] = {}
        for outcome in self.outcomes:
            if outcome.status is ProbeStatus.ACCEPTED and outcome.suite_id is not None:
                accepted_by_version.setdefault(outcome.version, set()).add(outcome.suite_id)
        for version in SSLV3_PLUS:
            suite_infos = self.plan.preference_sets.get(version)
            if not suite_infos or not accepted_by_version.get(version):
                continue
            candidates = tuple(s.id for s in suite_infos)
            if delay:
                time.sleep(delay)
            try:
                self._probe_once(version, candidates, address, ProbeStatus.PREFERRED)
            except _PreTlsFailure as failure:
                self._note_failure(failure)
                if delay:
                    time.sleep(delay)
                try:
                    self._probe_once(version, candidates, address, ProbeStatus.PREFERRED)
                except _PreTlsFailure as retry_failure:
                    self._note_failure(retry_failure)
                    self.outcomes.append(
                        ProbeOutcome(
                            version=version,
                            suite_id=None,
                            status=ProbeStatus.ERROR,
                            started_at=self._next_timestamp(),
                            error_reason=retry_failure.kind.value,
                        )
                    )

    def _assemble(self, started: float) -> HostScanRecord:
        valid = any(o.status is not ProbeStatus.ERROR for o in self.outcomes)
        reason = None
        if not valid and self.failures:
            # Most frequent failure class; ties go to the deepest stage reached.
            reason = max(self.failures.items(), key=lambda kv: (kv[1], _STAGE_DEPTH[kv[0]]))[0]
        capabilities = None
        if self.session is not None:
            exposure = detect_plaintext_auth_exposure(self.session, self.starttls_ok)
            capabilities = CapabilitiesSnapshot(
                banner=self.session.banner,
                capabilities=self.session.capabilities,
                advertises_starttls=self.session.starttls_advertised,
                advertises_auth_plain_pre_tls=self.session.advertises_auth_plain,
                auth_mechanisms=self.session.auth_mechanisms,
                starttls_ok=self.starttls_ok,
                auth_exposure=exposure,
            )
        return HostScanRecord(
            endpoint=self.endpoint,
            started_at=started,
            ended_at=time.time(),
            validity="valid" if valid else "invalid",
            invalid_reason=reason,
            capabilities=capabilities,
            outcomes=self.outcomes,
            chains=self.chains,
        )


def scan_target(
    endpoint: Endpoint,
    plan: ProbePlan | None = None,
    limits: ScanLimits | None = None,
    registry: Registry | None = None,
    limiter: RateLimiter | None = None,
    cache: HelloCache | None = None,
) -> HostScanRecord:
    registry = registry or default_registry()
    plan = plan or default_probe_plan(registry)
    scan = _TargetScan(
        endpoint=endpoint,
        plan=plan,
        limits=limits or ScanLimits(),
        registry=registry,
        limiter=limiter or RateLimiter(None),
        cache=cache or HelloCache(),
        kex_resolver=make_kex_resolver(registry),
    )
    return scan.run()


@dataclass
class CampaignSummary:
    targets: int = 0
    valid: int = 0
    invalid: int = 0
    invalid_by_reason: Counter = field(default_factory=Counter)
    probes: int = 0
    connections: int = 0
    started_at: float = 0.0
    ended_at: float = 0.0

    @property
    def duration_seconds(self) -> float:
        return max(self.ended_at - self.started_at, 1e-9)

    @property
    def targets_per_hour(self) -> float:
        return self.targets / self.duration_seconds * 3600.0

    def to_json(self) -> dict:
        reasons = {
            key: self.invalid_by_reason.get(key, 0)
            for key in ("timeout", "connectionRejected", "ehloRejected", "startTlsRejected")
        }
        if self.invalid_by_reason.get("other"):
            reasons["other"] = self.invalid_by_reason["other"]
        return {
            "targets": self.targets,
            "valid": self.valid,
            "invalid": self.invalid,
            "invalidByReason": reasons,
            "probes": self.probes,
            "connections": self.connections,
            "startedAt": _fmt_or_none(self.started_at),
            "endedAt": _fmt_or_none(self.ended_at),
            "durationSeconds": round(self.duration_seconds, 6),
            "targetsPerHour": round(self.targets_per_hour, 3),
        }


def _fmt_or_none(epoch: float) -> str | None:
    return format_timestamp(epoch) if epoch else None


def run_campaign(
    targets: Iterable[Endpoint],
    plan: ProbePlan | None = None,
    limits: ScanLimits | None = None,
    writer: RecordWriter | None = None,
    *,
    concurrency: int = 8,
    rate_cap: int | None = None,
    registry: Registry | None = None,
) -> CampaignSummary:
    """Scan every target exactly once; individual failures never abort the run.

    A sink write failure is the one fatal condition: the campaign stops, a
    partial-output marker is appended if possible, and MailTlsError is raised.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    registry = registry or default_registry()
    plan = plan or default_probe_plan(registry)
    limits = limits or ScanLimits()
    limiter = RateLimiter(rate_cap)
    cache = HelloCache()
    kex_resolver = make_kex_resolver(registry)

    summary = CampaignSummary(started_at=time.time())
    summary_lock = threading.Lock()
    sink_error: list[str] = []

    def work(endpoint: Endpoint) -> None:
        if sink_error:
            return
        try:
            record = _TargetScan(
                endpoint, plan, limits, registry, limiter, cache, kex_resolver
            ).run()
        except Exception as exc:  # conservation: a record per target, no matter what
            record = HostScanRecord(
                endpoint=endpoint,
                started_at=time.time(),
                ended_at=time.time(),
                validity="invalid",
                invalid_reason=None,
                scan_error=f"{type(exc).__name__}: {exc}",
            )
        try:
            if writer is not None:
                writer.write_record(record)
        except Exception as exc:
            sink_error.append(f"{type(exc).__name__}: {exc}")
            return
        with summary_lock:
            summary.targets += 1
            summary.probes += len(record.outcomes)
            if record.is_valid:
                summary.valid += 1
            else:
                summary.invalid += 1
                summary.invalid_by_reason[record.invalid_reason or "other"] += 1

    with ThreadPoolExecutor(max_workers=concurrency, thread_name_prefix="scan") as pool:
        list(pool.map(work, targets))

    summary.ended_at = time.time()
    summary.connections = limiter.total
    if sink_error:
        if writer is not None:
            try:
                writer.write_partial_marker(sink_error[0])
            except Exception:
                pass
        raise MailTlsError(f"output sink failed, results are partial: {sink_error[0]}")
    return summary

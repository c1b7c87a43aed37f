"""Run metrics and their JSON / CSV / human renderings."""

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields

SCHEMA_VERSION = 1
MIB = 1024 * 1024

# fields that depend on timing or on how mapping misses are resolved
TIMING_FIELDS = ("bandwidth_mib_s", "iops", "latency_mean_us", "latency_p50_us",
                 "latency_p99_us", "latency_p999_us", "elapsed_ns", "mapping_fetch_reads",
                 "mapping_fetch_bytes")


@dataclass
class NamespaceReport:
    ns_id: int = 0
    kind: str = ""
    host_read_bytes: int = 0
    host_write_bytes: int = 0
    host_read_ops: int = 0
    host_write_ops: int = 0
    device_read_bytes_slc: int = 0
    device_read_bytes_regular: int = 0
    device_write_bytes_slc: int = 0
    device_write_bytes_regular: int = 0
    device_erase_bytes_slc: int = 0
    device_erase_bytes_regular: int = 0
    erase_count_slc: int = 0
    erase_count_regular: int = 0
    host_regular_bytes: int = 0
    host_slc_bytes: int = 0
    fold_bytes: int = 0
    gc_migrated_bytes: int = 0
    device_programmed_bytes: int = 0
    premature_flush_count: int = 0
    l2p_hits_zone: int = 0
    l2p_hits_chunk: int = 0
    l2p_hits_page: int = 0
    l2p_misses: int = 0
    l2p_miss_rate: float = 0.0
    mapping_fetch_reads: int = 0
    mapping_fetch_bytes: int = 0
    bandwidth_mib_s: float = 0.0
    iops: float = 0.0
    latency_mean_us: float = 0.0
    latency_p50_us: float = 0.0
    latency_p99_us: float = 0.0
    latency_p999_us: float = 0.0
    elapsed_ns: int = 0
    waf: float = 0.0


NS_FIELDS = [f.name for f in fields(NamespaceReport)]


@dataclass
class StatsReport:
    schema_version: int = SCHEMA_VERSION
    settings: dict = field(default_factory=dict)
    namespaces: list = field(default_factory=list)
    device: NamespaceReport = field(default_factory=NamespaceReport)

    def ns(self, ns_id):
        for r in self.namespaces:
            if r.ns_id == ns_id:
                return r
        raise KeyError(ns_id)

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "settings": dict(self.settings),
            "namespaces": [_row(r) for r in self.namespaces],
            "device": _row(self.device),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        return cls(SCHEMA_VERSION, dict(d.get("settings", {})),
                   [NamespaceReport(**r) for r in d.get("namespaces", [])],
                   NamespaceReport(**d.get("device", {})))


def _row(r):
    return {k: getattr(r, k) for k in NS_FIELDS}


def percentile(sorted_vals, p):
    """Nearest-rank percentile of an already sorted list."""
    if not sorted_vals:
        return 0
    k = max(1, math.ceil(p * len(sorted_vals)))
    return sorted_vals[min(k, len(sorted_vals)) - 1]


def fill_timing(r, latencies, elapsed):
    ops = r.host_read_ops + r.host_write_ops
    r.elapsed_ns = int(elapsed)
    if elapsed > 0:
        r.iops = round(ops * 1e9 / elapsed, 6)
        r.bandwidth_mib_s = round((r.host_read_bytes + r.host_write_bytes) / MIB * 1e9 / elapsed, 6)
    if latencies:
        s = sorted(latencies)
        r.latency_mean_us = round(sum(s) / len(s) / 1000, 6)
        r.latency_p50_us = round(percentile(s, 0.50) / 1000, 6)
        r.latency_p99_us = round(percentile(s, 0.99) / 1000, 6)
        r.latency_p999_us = round(percentile(s, 0.999) / 1000, 6)


def finish_ratios(r):
    lookups = r.l2p_hits_zone + r.l2p_hits_chunk + r.l2p_hits_page + r.l2p_misses
    r.l2p_miss_rate = round(r.l2p_misses / lookups, 6) if lookups else 0.0
    r.device_programmed_bytes = r.device_write_bytes_slc + r.device_write_bytes_regular
    r.waf = round(r.device_programmed_bytes / r.host_write_bytes, 6) if r.host_write_bytes else 0.0


def emit_report(report, fmt="json"):
    fmt = fmt.lower()
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(NS_FIELDS)
        for r in report.namespaces:
            w.writerow([getattr(r, k) for k in NS_FIELDS])
        return buf.getvalue().encode()
    if fmt == "human":
        return _human(report).encode()
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(data):
    if isinstance(data, bytes):
        data = data.decode()
    return StatsReport.from_dict(json.loads(data))


def _mib(n):
    return f"{n / MIB:.2f} MiB"


def _human(report):
    lines = []
    for r in report.namespaces + ([report.device] if report.namespaces else []):
        title = f"namespace {r.ns_id} ({r.kind})" if r is not report.device else "device total"
        lines.append(title)
        lines.append(f"  host written      {_mib(r.host_write_bytes)} in {r.host_write_ops} ops")
        lines.append(f"  host read         {_mib(r.host_read_bytes)} in {r.host_read_ops} ops")
        lines.append(f"  programmed        {_mib(r.device_programmed_bytes)} "
                     f"(regular {_mib(r.host_regular_bytes)}, slc {_mib(r.host_slc_bytes)}, "
                     f"fold {_mib(r.fold_bytes)}, gc {_mib(r.gc_migrated_bytes)})")
        lines.append(f"  WAF               {r.waf:.2f}")
        lines.append(f"  premature flushes {r.premature_flush_count}")
        lines.append(f"  erases            slc {r.erase_count_slc}, regular {r.erase_count_regular}")
        lines.append(f"  L2P               zone {r.l2p_hits_zone} / chunk {r.l2p_hits_chunk} / "
                     f"page {r.l2p_hits_page} hits, {r.l2p_misses} misses "
                     f"({r.l2p_miss_rate * 100:.1f}%), {r.mapping_fetch_reads} table reads")
        lines.append(f"  bandwidth         {r.bandwidth_mib_s:.1f} MiB/s, {r.iops:.0f} IOPS")
        lines.append(f"  latency (us)      mean {r.latency_mean_us:.1f}, p50 {r.latency_p50_us:.1f}, "
                     f"p99 {r.latency_p99_us:.1f}, p99.9 {r.latency_p999_us:.1f}")
    if not lines:
        lines.append("no namespaces")
        lines.append(f"  WAF               {0:.2f}")
    return "\n".join(lines) + "\n"


def accounting_gap(r):
    """Programmed bytes not explained by the four write categories (should be 0)."""
    return r.device_programmed_bytes - (r.host_regular_bytes + r.host_slc_bytes
                                        + r.fold_bytes + r.gc_migrated_bytes)

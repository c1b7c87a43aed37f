"""Trace replay with a bounded number of outstanding host requests."""

import heapq
from dataclasses import replace

from .allocator import Region
from .config import SimConfig, load_config
from .device import FOLD, GC, HOST_REGULAR, HOST_SLC, write_events
from .errors import SimError, SimulationError
from .mapping import Granularity
from .namespace import init_device
from .stats import NamespaceReport, StatsReport, fill_timing, finish_ratios
from .trace import TraceRecord, parse_trace


class _HostCounters:
    def __init__(self):
        self.read_bytes = 0
        self.write_bytes = 0
        self.read_ops = 0
        self.write_ops = 0
        self.latencies = []
        self.first = None
        self.last = 0


class Simulator:
    """Feeds records to the device in timestamp order.

    At most ``queue_depth`` requests are outstanding: a record whose slot is
    not free yet is issued when the earliest outstanding request completes.
    Requests are issued in trace order.
    """

    def __init__(self, config, log_events=False, track_data=None, queue_depth=None):
        if not isinstance(config, SimConfig):
            raise TypeError("config must be a SimConfig")
        self.config = config
        opts = replace(config.options, log_events=log_events)
        if track_data is not None:
            opts = replace(opts, track_data=track_data)
        self.instance = init_device(config.namespaces, config.geometry, config.profiles, opts)
        self.device = self.instance.device
        self.queue_depth = queue_depth or config.queue_depth
        self.outstanding = []
        self.last_issue = 0
        self.clock = 0
        self.records_seen = 0
        self._host = {}
        self._window_start = 0

    # -- driving -------------------------------------------------------------

    def host(self, ns):
        h = self._host.get(ns)
        if h is None:
            h = self._host[ns] = _HostCounters()
        return h

    def submit(self, rec, index=None):
        """Issue one record; returns the device Result with ``issue`` set."""
        index = self.records_seen if index is None else index
        self.records_seen += 1
        issue = max(rec.timestamp, self.last_issue)
        q = self.outstanding
        while q and q[0] <= issue:
            heapq.heappop(q)
        if len(q) >= self.queue_depth:
            issue = max(issue, heapq.heappop(q))
        try:
            res = self.instance.route_request(rec, issue)
        except SimError as e:
            raise SimulationError(e, rec, index) from e
        heapq.heappush(q, res.end)
        self.last_issue = issue
        self.clock = max(self.clock, res.end)
        res.issue = issue
        h = self.host(rec.ns_id)
        if h.first is None:
            h.first = issue
        h.last = max(h.last, res.end)
        if rec.op == "WRITE":
            h.write_bytes += rec.len
            h.write_ops += 1
            h.latencies.append(res.end - issue)
        elif rec.op == "READ":
            h.read_bytes += rec.len
            h.read_ops += 1
            h.latencies.append(res.end - issue)
        return res

    def run(self, records):
        results = []
        for i, rec in enumerate(records):
            results.append(self.submit(rec, i))
        return results

    def finish(self):
        """Flush every write buffer and let background work complete."""
        t = self.last_issue
        end = self.instance.flush_all(t)
        self.instance.drain()
        for ctx in self.instance.contexts.values():
            ctx.gc.maybe_start(t)
        self.instance.drain()
        self.clock = max(self.clock, end)
        return end

    def reset_stats(self):
        """Start a new measurement window at the current point of the run."""
        self.device.reset_counters()
        for ctx in self.instance.contexts.values():
            ctx.map.reset_stats()
            ctx.premature_flushes = 0
        self._host = {}
        self._window_start = self.last_issue

    # -- reporting -----------------------------------------------------------

    def report(self):
        inst = self.instance
        opts = self.config.options
        rep = StatsReport(settings={
            "cache_capacity": opts.cache_capacity,
            "cache_entry_size": opts.cache_entry_size,
            "cache_buckets": opts.cache_buckets,
            "miss_strategy": opts.miss_strategy.value,
            "hybrid_mapping": opts.hybrid_mapping,
            "pin_zone_entries": opts.pin_zone_entries,
            "buffer_policy": opts.buffer_policy.value,
            "queue_depth": self.queue_depth,
        })
        total = NamespaceReport(ns_id=-1, kind="DEVICE")
        lat_all = []
        first_all, last_all = None, 0
        for ns_id in sorted(inst.contexts):
            ctx = inst.contexts[ns_id]
            r = NamespaceReport(ns_id=ns_id, kind=ctx.kind.value)
            h = self._host.get(ns_id, _HostCounters())
            r.host_read_bytes, r.host_write_bytes = h.read_bytes, h.write_bytes
            r.host_read_ops, r.host_write_ops = h.read_ops, h.write_ops
            c = self.device.counters_for(ns_id)
            r.device_read_bytes_slc = c.read_bytes[Region.SLC]
            r.device_read_bytes_regular = c.read_bytes[Region.REGULAR]
            r.device_write_bytes_slc = c.write_bytes[Region.SLC]
            r.device_write_bytes_regular = c.write_bytes[Region.REGULAR]
            r.device_erase_bytes_slc = c.erase_bytes[Region.SLC]
            r.device_erase_bytes_regular = c.erase_bytes[Region.REGULAR]
            r.erase_count_slc = c.erase_count[Region.SLC]
            r.erase_count_regular = c.erase_count[Region.REGULAR]
            r.host_regular_bytes = c.programmed[HOST_REGULAR]
            r.host_slc_bytes = c.programmed[HOST_SLC]
            r.fold_bytes = c.programmed[FOLD]
            r.gc_migrated_bytes = c.programmed[GC]
            r.premature_flush_count = ctx.premature_flushes
            m = ctx.map
            r.l2p_hits_zone = m.hits[Granularity.ZONE]
            r.l2p_hits_chunk = m.hits[Granularity.CHUNK]
            r.l2p_hits_page = m.hits[Granularity.PAGE]
            r.l2p_misses = m.misses
            r.mapping_fetch_reads = c.fetch_reads
            r.mapping_fetch_bytes = c.fetch_bytes
            finish_ratios(r)
            if h.first is not None:
                fill_timing(r, h.latencies, h.last - h.first)
                first_all = h.first if first_all is None else min(first_all, h.first)
                last_all = max(last_all, h.last)
                lat_all.extend(h.latencies)
            rep.namespaces.append(r)
            for k in ("host_read_bytes", "host_write_bytes", "host_read_ops", "host_write_ops",
                      "device_read_bytes_slc", "device_read_bytes_regular",
                      "device_write_bytes_slc", "device_write_bytes_regular",
                      "device_erase_bytes_slc", "device_erase_bytes_regular",
                      "erase_count_slc", "erase_count_regular", "host_regular_bytes",
                      "host_slc_bytes", "fold_bytes", "gc_migrated_bytes",
                      "premature_flush_count", "l2p_hits_zone", "l2p_hits_chunk",
                      "l2p_hits_page", "l2p_misses", "mapping_fetch_reads",
                      "mapping_fetch_bytes"):
                setattr(total, k, getattr(total, k) + getattr(r, k))
        finish_ratios(total)
        if first_all is not None:
            fill_timing(total, lat_all, last_all - first_all)
        rep.device = total
        return rep

    def write_events(self, path):
        with open(path, "w") as fh:
            write_events(self.device.events or [], fh)


def run_trace(config_path, trace_source, events_path=None, final_flush=True):
    """Replay a trace file (or list of records) and return its StatsReport."""
    cfg = config_path if isinstance(config_path, SimConfig) else load_config(config_path)
    if isinstance(trace_source, (list, tuple)) and all(isinstance(r, TraceRecord) for r in trace_source):
        records = list(trace_source)
    else:
        records = parse_trace(trace_source)
    sim = Simulator(cfg, log_events=events_path is not None)
    sim.run(records)
    if final_flush:
        sim.finish()
    else:
        sim.instance.drain()
    if events_path is not None:
        sim.write_events(events_path)
    return sim.report()

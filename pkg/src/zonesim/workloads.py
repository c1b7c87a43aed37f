"""Synthetic trace generators for the four workload kinds."""

import random
from dataclasses import dataclass

from .allocator import Layout, next_pow2
from .config import parse_size
from .errors import ConfigInvalid, InvalidRequest
from .geometry import KIB, UNIT_BYTES
from .namespace import NsKind
from .trace import TraceRecord

KINDS = ("SEQ_WRITE", "RAND_READ_RANGE", "BUFFER_CONFLICT", "MULTI_STREAM")


@dataclass(frozen=True)
class NamespaceShape:
    ns_id: int
    kind: NsKind
    n_lpas: int
    zone_units: int = 0
    zone_cap_units: int = 0

    @property
    def zoned(self):
        return self.kind is NsKind.ZONED

    @property
    def n_zones(self):
        return self.n_lpas // self.zone_units if self.zoned else 0

    @property
    def data_units(self):
        return self.n_zones * self.zone_cap_units if self.zoned else self.n_lpas

    def lpa_of(self, data_unit):
        """Logical page of the n-th writable page (skips zone-window holes)."""
        if not self.zoned:
            return data_unit
        z, off = divmod(data_unit, self.zone_cap_units)
        return z * self.zone_units + off


def shape_of(config, ns_id):
    lay = Layout(config.geometry, config.regular, config.slc)
    for c in config.namespaces:
        if c.ns_id != ns_id:
            continue
        if c.kind is NsKind.BLOCK:
            return NamespaceShape(ns_id, c.kind, c.logical_size // UNIT_BYTES)
        k = config.options.blocks_per_zone or lay.n_chips
        cap = k * lay.reg_units_per_block
        zu = next_pow2(cap)
        return NamespaceShape(ns_id, c.kind, c.logical_size // (cap * UNIT_BYTES) * zu, zu, cap)
    raise InvalidRequest(f"no namespace {ns_id} in configuration")


def _units(nbytes, what):
    if isinstance(nbytes, str):
        try:
            nbytes = parse_size(nbytes, what)
        except ConfigInvalid as e:
            raise InvalidRequest(str(e)) from None
    if not isinstance(nbytes, int) or nbytes <= 0 or nbytes % UNIT_BYTES:
        raise InvalidRequest(f"{what} must be a positive multiple of 4096")
    return nbytes // UNIT_BYTES


def seq_write(shape, total_bytes, request_size=512 * KIB, start_zone=0, synced=False,
              flush=True, interval_ns=0, start_ts=0):
    """Sequential writes; zoned requests never straddle a zone's capacity."""
    total = _units(total_bytes, "total_bytes")
    req = _units(request_size, "request_size")
    out = []
    ts = start_ts
    if shape.zoned:
        first = start_zone * shape.zone_cap_units
        if first + total > shape.data_units:
            raise InvalidRequest("sequential fill exceeds namespace capacity")
        u = first
        end = first + total
        while u < end:
            zone_left = shape.zone_cap_units - u % shape.zone_cap_units
            n = min(req, end - u, zone_left)
            out.append(TraceRecord(ts, shape.ns_id, "WRITE", shape.lpa_of(u), n * UNIT_BYTES, synced))
            u += n
            ts += interval_ns
    else:
        if total > shape.n_lpas:
            raise InvalidRequest("sequential fill exceeds namespace capacity")
        for u in range(0, total, req):
            n = min(req, total - u)
            out.append(TraceRecord(ts, shape.ns_id, "WRITE", u, n * UNIT_BYTES, synced))
            ts += interval_ns
    if flush:
        out.append(TraceRecord(ts, shape.ns_id, "FLUSH"))
    return out


def rand_read_range(shape, range_bytes, count, written_bytes=None, anchor="tail", seed=0,
                    request_size=4 * KIB, interval_ns=0, start_ts=0):
    """Uniform random reads over a window of already written data."""
    span = _units(range_bytes, "range_bytes")
    written = shape.data_units if written_bytes is None else _units(written_bytes, "written_bytes")
    req = _units(request_size, "request_size")
    if span > written:
        raise InvalidRequest("read range is larger than the written data")
    if count < 0:
        raise InvalidRequest("count must be >= 0")
    lo = written - span if anchor == "tail" else 0
    rng = random.Random(seed)
    out = []
    ts = start_ts
    slots = span // req
    if slots < 1:
        raise InvalidRequest("read range smaller than one request")
    for _ in range(count):
        u = lo + rng.randrange(slots) * req
        out.append(TraceRecord(ts, shape.ns_id, "READ", shape.lpa_of(u), req * UNIT_BYTES))
        ts += interval_ns
    return out


def buffer_conflict(shape, conflict=True, zones=None, bytes_per_zone=None,
                    request_size=48 * KIB, flush=True):
    """Two interleaved single-zone streams.

    With two buffers under modulo binding, zones of equal parity share a
    buffer (conflict) and zones of different parity do not.
    """
    if not shape.zoned:
        raise InvalidRequest("BUFFER_CONFLICT needs a zoned namespace")
    if zones is None:
        zones = (0, 2) if conflict else (0, 1)
    a, b = zones
    if max(a, b) >= shape.n_zones or a == b:
        raise InvalidRequest("BUFFER_CONFLICT needs two distinct existing zones")
    per = shape.zone_cap_units if bytes_per_zone is None else _units(bytes_per_zone, "bytes_per_zone")
    req = _units(request_size, "request_size")
    if per > shape.zone_cap_units:
        raise InvalidRequest("bytes_per_zone exceeds zone capacity")
    out = []
    for off in range(0, per, req):
        n = min(req, per - off)
        for z in (a, b):
            out.append(TraceRecord(0, shape.ns_id, "WRITE", z * shape.zone_units + off, n * UNIT_BYTES))
    if flush:
        out.append(TraceRecord(0, shape.ns_id, "FLUSH"))
    return out


def multi_stream(shape, file_sizes=(1024 * KIB, 256 * KIB, 64 * KIB), updates=(1, 3, 8),
                 request_size=16 * KIB, seed=0, first_zone=0):
    """Interleaved file streams, one zone each, rewritten ``updates`` times.

    Each file ends with a synced write; a rewrite resets the stream's zone.
    """
    if not shape.zoned:
        raise InvalidRequest("MULTI_STREAM needs a zoned namespace")
    if len(file_sizes) != len(updates):
        raise InvalidRequest("file_sizes and updates must have equal length")
    if first_zone + len(file_sizes) > shape.n_zones:
        raise InvalidRequest("not enough zones for the streams")
    req = _units(request_size, "request_size")
    sizes = [_units(s, "file size") for s in file_sizes]
    if max(sizes) > shape.zone_cap_units:
        raise InvalidRequest("a file does not fit in one zone")
    rng = random.Random(seed)
    left = [u + 1 for u in updates]  # passes per stream
    pos = [0] * len(sizes)
    out = []
    while True:
        active = [i for i, n in enumerate(left) if n > 0]
        if not active:
            break
        i = rng.choice(active)
        zone = first_zone + i
        base = zone * shape.zone_units
        n = min(req, sizes[i] - pos[i])
        last = pos[i] + n == sizes[i]
        out.append(TraceRecord(0, shape.ns_id, "WRITE", base + pos[i], n * UNIT_BYTES, last))
        pos[i] += n
        if last:
            left[i] -= 1
            pos[i] = 0
            if left[i] > 0:
                out.append(TraceRecord(0, shape.ns_id, "ZONE_RESET", base, 0))
    return out


def generate_workload(kind, params, shape):
    """Dispatch by kind name; ``params`` are the generator keyword arguments."""
    kind = str(kind).upper()
    fn = {"SEQ_WRITE": seq_write, "RAND_READ_RANGE": rand_read_range,
          "BUFFER_CONFLICT": buffer_conflict, "MULTI_STREAM": multi_stream}.get(kind)
    if fn is None:
        raise InvalidRequest(f"unknown workload kind {kind!r}")
    try:
        return fn(shape, **params)
    except TypeError as e:
        raise InvalidRequest(f"{kind}: {e}") from None

"""Write buffers, flushes to regular or SLC flash, and folding.

Per zone the durable data is laid out as ``[R | S | B]`` in offset order:
``R`` pages already sit at their final place in the zone's regular region,
the next ``S`` pages live in SLC, and the last ``B`` pages are staged in the
zone's write buffer.  Regular programs always land at offset ``R`` and
always cover a whole number of programming units.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .allocator import SbState, ZoneState
from .device import FOLD, HOST_REGULAR, HOST_SLC
from .errors import AddressError, InvalidRequest, UnalignedWrite, ZoneFull
from .geometry import UNIT_BYTES, Origin


class BufferPolicy(str, Enum):
    FULLY_ASSOCIATIVE = "FULLY_ASSOCIATIVE"
    MODULO = "MODULO"
    CUSTOM = "CUSTOM"


class FlushReason(str, Enum):
    FULL = "FULL"
    CONFLICT = "CONFLICT"
    SYNC = "SYNC"
    HOST_FLUSH = "HOST_FLUSH"


@dataclass
class WriteBuffer:
    id: int
    capacity: int  # bytes
    namespace_partition: int
    bound: Optional[tuple] = None  # (ns, zone)
    staged: list = field(default_factory=list)  # [lpa, tag] per 4 KiB page
    available_at: int = 0
    index: dict = field(default_factory=dict)  # lpa -> slot, block namespace only

    @property
    def fill(self):
        return len(self.staged) * UNIT_BYTES

    @property
    def capacity_units(self):
        return self.capacity // UNIT_BYTES

    @property
    def staged_lbas(self):
        return [(lpa, UNIT_BYTES) for lpa, _ in self.staged]

    def clear(self):
        self.staged = []
        self.index = {}


def group_pages(layout, keys, payload=None):
    """Split keys into per-(chip, block, page) batches, first-seen order."""
    upp = layout.upp
    groups = {}
    for i, k in enumerate(keys):
        chip, block, slot = layout.decode(k)
        g = groups.get((chip, block, slot // upp))
        if g is None:
            g = groups[(chip, block, slot // upp)] = ([], [])
        g[0].append(k)
        g[1].append(payload[i] if payload is not None else None)
    return list(groups.values())


# -- buffer binding -----------------------------------------------------------

def bind_buffer(ctx, zone_id, now):
    """Return the buffer for ``zone_id``, flushing a conflicting one if needed."""
    key = (ctx.ns, zone_id)
    bufs = ctx.buffers
    b = ctx.binding.get(zone_id)
    if b is not None:
        return b
    policy = ctx.buffer_policy
    if policy is BufferPolicy.FULLY_ASSOCIATIVE:
        free = [x for x in bufs if x.bound is None]
        if not free:
            free = [x for x in bufs if not x.staged]
        if free:
            b = free[0]
        else:
            b = max(bufs, key=lambda x: (len(x.staged), -x.id))
    elif policy is BufferPolicy.MODULO:
        b = bufs[zone_id % len(bufs)]
    else:
        if ctx.custom_binding is None:
            raise InvalidRequest("CUSTOM buffer policy needs a binding function")
        b = bufs[ctx.custom_binding(zone_id, bufs) % len(bufs)]
    if b.bound is not None:
        if b.staged:
            flush_buffer(ctx, b, FlushReason.CONFLICT, now)
        unbind(ctx, b)
    b.bound = key
    ctx.binding[zone_id] = b
    return b


def unbind(ctx, buf):
    if buf.bound is not None:
        ctx.binding.pop(buf.bound[1], None)
        buf.bound = None


# -- host writes --------------------------------------------------------------

def check_zoned_write(ctx, lba, length):
    if length <= 0 or length % UNIT_BYTES:
        raise InvalidRequest(f"write length {length} is not a positive multiple of 4096")
    ctx.map.check(lba)
    zu = ctx.zone_units
    zone = ctx.zones[lba // zu]
    off = lba % zu
    if zone.state is ZoneState.FULL:
        raise ZoneFull(f"zone {zone.zone_id} is full", zone=zone.zone_id)
    if off * UNIT_BYTES != zone.host_write_pointer:
        raise UnalignedWrite(
            f"zone {zone.zone_id}: write at {off * UNIT_BYTES} but write pointer is "
            f"{zone.host_write_pointer}", zone=zone.zone_id)
    if zone.host_write_pointer + length > zone.zone_capacity:
        raise ZoneFull(f"zone {zone.zone_id}: write past capacity", zone=zone.zone_id)
    return zone


def handle_write(ctx, lba, length, now, synced=False, tag=None):
    """Stage a host write; returns the time the host sees it complete."""
    if not ctx.zoned:
        return handle_block_write(ctx, lba, length, now, synced, tag)
    zone = check_zoned_write(ctx, lba, length)
    if zone.state is ZoneState.EMPTY:
        ctx.open_zone(zone)
    t = ctx.link.transfer(now, length)
    units = length // UNIT_BYTES
    durable = t
    done = 0
    buf = None
    while done < units:
        buf = bind_buffer(ctx, zone.zone_id, t)
        t = max(t, buf.available_at)
        take = min(buf.capacity_units - len(buf.staged), units - done)
        for i in range(done, done + take):
            buf.staged.append([lba + i, None if tag is None else (ctx.ns, lba + i, tag)])
        done += take
        zone.host_write_pointer += take * UNIT_BYTES
        if _should_flush(ctx, buf, zone):
            durable = max(durable, flush_buffer(ctx, buf, FlushReason.FULL, t))
            t = max(t, buf.available_at)
    if zone.host_write_pointer == zone.zone_capacity:
        zone.state = ZoneState.FULL
    if synced and buf is not None:
        durable = max(durable, flush_buffer(ctx, buf, FlushReason.SYNC, t))
        return durable
    return t


def _should_flush(ctx, buf, zone):
    n = len(buf.staged)
    return (n >= ctx.stripe_units or n >= buf.capacity_units
            or zone.host_write_pointer == zone.zone_capacity)


def handle_block_write(ctx, lba, length, now, synced=False, tag=None):
    if length <= 0 or length % UNIT_BYTES:
        raise InvalidRequest(f"write length {length} is not a positive multiple of 4096")
    units = length // UNIT_BYTES
    ctx.map.check(lba)
    ctx.map.check(lba + units - 1)
    buf = ctx.buffers[0]
    t = max(ctx.link.transfer(now, length), buf.available_at)
    durable = t
    for lpa in range(lba, lba + units):
        # overwrites are appended, not merged: every host page gets programmed
        if len(buf.staged) >= buf.capacity_units:
            durable = max(durable, flush_buffer(ctx, buf, FlushReason.FULL, t))
            t = max(t, buf.available_at)
        buf.index[lpa] = len(buf.staged)
        buf.staged.append([lpa, None if tag is None else (ctx.ns, lpa, tag)])
    if len(buf.staged) >= buf.capacity_units:
        durable = max(durable, flush_buffer(ctx, buf, FlushReason.FULL, t))
        t = max(t, buf.available_at)
    if synced:
        return max(durable, flush_buffer(ctx, buf, FlushReason.SYNC, t))
    return t


# -- flushing -----------------------------------------------------------------

def flush_buffer(ctx, buf, reason, now):
    """Write out everything staged in ``buf``; returns the last program end."""
    reason = FlushReason(reason)
    if not buf.staged:
        if reason is FlushReason.CONFLICT:
            unbind(ctx, buf)
        return now
    t = max(now, buf.available_at)
    if not ctx.zoned:
        staged = buf.staged
        buf.clear()
        end, xfer = _program_slc(ctx, staged, t)
        buf.available_at = xfer
        return end

    zone = ctx.zones[buf.bound[1]]
    ctx.gc.settle_zone(zone)
    staged = buf.staged
    buf.clear()
    G = ctx.G
    B = len(staged)
    S = zone.slc_units
    end = t
    xfer = t
    fold_after = False
    if ctx.buffer_all_in_slc:
        to_slc = staged
    elif reason is FlushReason.SYNC and B < G:
        to_slc = staged
        fold_after = True
    else:
        n = (S + B) // G * G
        if n:
            e, x = _program_region(ctx, zone, n, staged[:max(0, n - S)], t)
            end, xfer = max(end, e), max(xfer, x)
        to_slc = staged[max(0, n - S):]
    if to_slc:
        e, x = _program_slc(ctx, to_slc, t, zone)
        end, xfer = max(end, e), max(xfer, x)
    if fold_after and zone.slc_units >= G:
        end = max(end, _program_region(ctx, zone, zone.slc_units // G * G, [], t)[0])
    buf.available_at = xfer
    if reason is FlushReason.CONFLICT:
        unbind(ctx, buf)
    _after_regular_progress(ctx, zone)
    return end


def _program_slc(ctx, staged, t, zone=None):
    """Partial-program staged pages into the namespace's SLC partition."""
    dev = ctx.device
    keys = ctx.partition.allocate(len(staged))
    end = xfer = t
    for gkeys, items in group_pages(dev.layout, keys, staged):
        tags = [it[1] for it in items]
        op = dev.program_op(gkeys, Origin.HOST, ctx.ns, {HOST_SLC: len(gkeys) * UNIT_BYTES},
                            tags=tags if dev.content is not None else None, cause="flush")
        b = dev.execute(op, t)
        end = max(end, b.end)
        xfer = max(xfer, b.xfer_end)
    for k, (lpa, _) in zip(keys, staged):
        ctx.map.update(lpa, k)
    if zone is not None:
        zone.slc_units += len(staged)
    ctx.premature_flushes += 1
    return end, xfer


def _program_region(ctx, zone, n, from_buffer, t, origin=None):
    """Program ``n`` pages at offset R: the zone's SLC head, then ``from_buffer``.

    With SLC pages involved this is a fold: they are read back first and
    the whole program is a background command.
    """
    dev = ctx.device
    lay = dev.layout
    m = ctx.map
    region = zone.reserved_region
    zbase = zone.zone_id * ctx.zone_units
    R = zone.regular_units
    n_slc = n - len(from_buffer)
    slc_lpas = range(zbase + R, zbase + R + n_slc)
    src = [m.ppa[lpa] for lpa in slc_lpas]
    ready = t
    for gkeys, _ in group_pages(lay, src):
        ready = max(ready, dev.execute(dev.read_op(gkeys, Origin.BACKGROUND, ctx.ns, "fold"), t).end)
    if origin is None:
        origin = Origin.BACKGROUND if n_slc else Origin.HOST
    issue = ready if n_slc else t
    srcs = src + [-1] * len(from_buffer)
    tags = [None] * n_slc + [it[1] for it in from_buffer]
    G = ctx.G
    end = xfer = t
    for g in range(0, n, G):
        keys = region.keys(R + g, G)
        n_fold = max(0, min(G, n_slc - g))
        acct = {}
        if n_fold:
            acct[FOLD] = n_fold * UNIT_BYTES
        if G - n_fold:
            acct[HOST_REGULAR] = (G - n_fold) * UNIT_BYTES
        op = dev.program_op(list(keys), origin, ctx.ns, acct,
                            tags=tags[g:g + G], src=srcs[g:g + G] if n_slc else None,
                            cause="fold" if n_fold else "flush")
        b = dev.execute(op, issue)
        end = max(end, b.end)
        if g + G > n_slc:
            xfer = max(xfer, b.xfer_end)
    keys = region.keys(R, n)
    for i in range(n):
        m.update(zbase + R + i, keys[i])
    zone.regular_units += n
    zone.slc_units -= n_slc
    return end, xfer


def _after_regular_progress(ctx, zone):
    if zone.regular_units >= zone.capacity_units:
        for _, b in zone.reserved_region.members:
            ctx.device.superblocks[b].state = SbState.FULL
    ctx.map.try_aggregate(zone.zone_id, zone.regular_units)


def fold_slc_to_regular(ctx, zone, now):
    """Fold the zone's SLC pages plus whatever its buffer holds.

    Only whole programming units move; a zone with less than one unit of
    SLC-plus-staged data is left alone.
    """
    if zone.slc_units == 0 or ctx.buffer_all_in_slc:
        return now
    buf = ctx.binding.get(zone.zone_id)
    staged = len(buf.staged) if buf is not None else 0
    if zone.slc_units + staged < ctx.G:
        return now
    return flush_buffer(ctx, buf, FlushReason.HOST_FLUSH, now) if buf is not None else \
        _fold_head(ctx, zone, now)


def _fold_head(ctx, zone, now):
    ctx.gc.settle_zone(zone)
    n = zone.slc_units // ctx.G * ctx.G
    if not n:
        return now
    end = _program_region(ctx, zone, n, [], now)[0]
    _after_regular_progress(ctx, zone)
    return end


def handle_host_flush(ctx, now):
    end = now
    for buf in ctx.buffers:
        if buf.staged:
            end = max(end, flush_buffer(ctx, buf, FlushReason.HOST_FLUSH, now))
    return end


def drop_zone_buffer(ctx, zone_id):
    buf = ctx.binding.get(zone_id)
    if buf is not None:
        buf.clear()
        unbind(ctx, buf)


def finish_zone(ctx, zone, now):
    if zone.state is ZoneState.EMPTY:
        raise InvalidRequest(f"zone {zone.zone_id} is empty")
    buf = ctx.binding.get(zone.zone_id)
    end = now
    if buf is not None and buf.staged:
        end = flush_buffer(ctx, buf, FlushReason.HOST_FLUSH, now)
    if buf is not None:
        unbind(ctx, buf)
    zone.state = ZoneState.FULL
    zone.finished = True
    return end


def staged_tag(ctx, lpa):
    """(True, tag) if ``lpa`` is currently only in a write buffer."""
    if not ctx.zoned:
        slot = ctx.buffers[0].index.get(lpa)
        if slot is None:
            return False, None
        return True, ctx.buffers[0].staged[slot][1]
    zone = ctx.zones[lpa // ctx.zone_units]
    buf = ctx.binding.get(zone.zone_id)
    if buf is None or not buf.staged:
        return False, None
    i = lpa % ctx.zone_units - (zone.regular_units + zone.slc_units)
    if 0 <= i < len(buf.staged):
        return True, buf.staged[i][1]
    return False, None


__all__ = ["BufferPolicy", "FlushReason", "WriteBuffer", "bind_buffer", "handle_write",
           "flush_buffer", "fold_slc_to_regular", "handle_host_flush", "finish_zone",
           "staged_tag", "AddressError"]

"""Host reads: buffer hits, L2P translation and timed flash reads."""

from .errors import AddressError, InvalidRequest
from .geometry import UNIT_BYTES, Origin
from .write_path import group_pages, staged_tag


def handle_read(ctx, lba, length, now):
    """Returns (completion time, per-page data tags or None)."""
    if length <= 0 or length % UNIT_BYTES:
        raise InvalidRequest(f"read length {length} is not a positive multiple of 4096")
    units = length // UNIT_BYTES
    m = ctx.map
    m.check(lba)
    m.check(lba + units - 1)
    if ctx.zoned:
        zu = ctx.zone_units
        cap = ctx.zone_cap_units
        for lpa in (lba, lba + units - 1):
            if lpa % zu >= cap:
                raise AddressError(f"lpa {lpa} lies beyond its zone's capacity")
    dev = ctx.device
    tracked = dev.content is not None
    tags = [None] * units if tracked else None
    end = now
    keys = []
    slots = []
    ready = now
    for i in range(units):
        lpa = lba + i
        hit, tag = staged_tag(ctx, lpa)
        if hit:
            if tracked:
                tags[i] = tag
            continue
        key, _, _, t = m.lookup(lpa, now)
        ready = max(ready, t)
        keys.append(key)
        slots.append(i)
    if keys:
        pos = 0
        for gkeys, idx in group_pages(dev.layout, keys, slots):
            op = dev.read_op(gkeys, Origin.HOST, ctx.ns, "host")
            b = dev.execute(op, ready)
            end = max(end, b.end)
            if tracked:
                for j, tg in zip(idx, op.tags):
                    tags[j] = tg
            pos += len(gkeys)
    end = ctx.link.transfer(end, length)
    return end, tags

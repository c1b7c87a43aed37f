"""Block and zoned namespaces carved out of one shared flash device."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .allocator import (Layout, RegularPool, SlcPartition, ZoneDescriptor, ZoneState,
                        next_pow2, reserve_zone_region)
from .device import FlashDevice, HostLink
from .errors import ConfigInvalid, InvalidRequest, UnknownNamespace
from .gc import GcDestination, GcPolicy, SlcCollector, zone_reset
from .geometry import UNIT_BYTES, MIB
from .mapping import ENTRIES_PER_TABLE_PAGE, L2PCache, MissStrategy, NamespaceMap
from .read_path import handle_read
from .write_path import (BufferPolicy, WriteBuffer, finish_zone, handle_host_flush,
                         handle_write)


class NsKind(str, Enum):
    BLOCK = "BLOCK"
    ZONED = "ZONED"


class Op(str, Enum):
    READ = "READ"
    WRITE = "WRITE"
    FLUSH = "FLUSH"
    ZONE_RESET = "ZONE_RESET"
    ZONE_FINISH = "ZONE_FINISH"


@dataclass
class NamespaceConfig:
    ns_id: int
    kind: NsKind
    logical_size: int
    physical_size: int


@dataclass
class DeviceOptions:
    """Everything besides geometry, media and namespaces."""

    buffer_count: int = 2
    buffer_size: int = 384 * 1024
    buffer_policy: BufferPolicy = BufferPolicy.FULLY_ASSOCIATIVE
    buffer_all_in_slc: bool = False
    cache_capacity: int = 1 * MIB
    cache_entry_size: int = 8
    cache_buckets: int = 1024
    miss_strategy: MissStrategy = MissStrategy.MULTIPLE
    hybrid_mapping: bool = True
    pin_zone_entries: bool = False
    chunk_size: int = 4 * MIB
    gc: GcPolicy = field(default_factory=GcPolicy)
    sub_block_mode: bool = False
    blocks_per_zone: Optional[int] = None
    op_ratio: float = 1 / 8
    host_link_bandwidth: int = 3200 * MIB
    track_data: bool = False
    log_events: bool = False
    custom_binding: Optional[Callable] = None


@dataclass
class Result:
    end: int
    tags: Optional[list] = None


class NamespaceContext:
    """Per-namespace controller state over the shared device."""

    def __init__(self, cfg, device, cache, link, options, slc_ids, regular_ids, table_base):
        self.cfg = cfg
        self.ns = cfg.ns_id
        self.kind = cfg.kind
        self.zoned = cfg.kind is NsKind.ZONED
        self.device = device
        self.link = link
        lay = device.layout
        self.G = lay.upg
        self.stripe_units = lay.upg * lay.n_chips
        self.partition = SlcPartition(self.ns, device.superblocks, lay, slc_ids)
        self.premature_flushes = 0
        self.buffer_all_in_slc = options.buffer_all_in_slc and self.zoned
        self.buffer_policy = BufferPolicy(options.buffer_policy)
        self.custom_binding = options.custom_binding
        self.binding = {}
        self.buffers = []
        chunk_units = options.chunk_size // UNIT_BYTES
        if self.zoned:
            self.pool = RegularPool(device.superblocks, lay, regular_ids,
                                    options.sub_block_mode, options.blocks_per_zone)
            cap_units = self.pool.zone_capacity_units()
            self.zone_cap_units = cap_units
            self.zone_units = next_pow2(cap_units)
            n_zones = cfg.logical_size // (cap_units * UNIT_BYTES)
            self.zones = [ZoneDescriptor(z, self.zone_units * UNIT_BYTES, cap_units * UNIT_BYTES)
                          for z in range(n_zones)]
            n_lpas = n_zones * self.zone_units
            self.map = NamespaceMap(self.ns, n_lpas, device, cache, options.hybrid_mapping,
                                    options.miss_strategy, self.zone_units, cap_units,
                                    chunk_units, options.pin_zone_entries, table_base)
        else:
            self.pool = None
            self.zones = []
            self.zone_units = None
            self.zone_cap_units = None
            n_lpas = cfg.logical_size // UNIT_BYTES
            self.map = NamespaceMap(self.ns, n_lpas, device, cache, False, options.miss_strategy,
                                    table_base_page=table_base)
        self.n_lpas = n_lpas
        policy = options.gc
        if not self.zoned:
            policy = GcPolicy(policy.trigger_threshold, policy.stop_threshold,
                              GcDestination.IN_SLC, policy.preemptible)
        self.gc = SlcCollector(self, policy)

    @property
    def table_pages(self):
        return -(-self.n_lpas // ENTRIES_PER_TABLE_PAGE)

    def open_zone(self, zone):
        region = reserve_zone_region(self.pool, zone)
        self.map.regions[zone.zone_id] = region
        zone.state = ZoneState.OPEN

    def zone_of(self, lba):
        if not self.zoned:
            raise InvalidRequest(f"namespace {self.ns} has no zones")
        self.map.check(lba)
        return self.zones[lba // self.zone_units]


class DeviceInstance:
    """One shared device plus the controller context of each namespace."""

    def __init__(self, device, contexts, cache, link):
        self.device = device
        self.contexts = contexts
        self.cache = cache
        self.link = link
        self.geometry = device.geometry
        self.clocks = device.clocks
        self.writes = 0

    def context(self, ns_id):
        ctx = self.contexts.get(ns_id)
        if ctx is None:
            raise UnknownNamespace(f"namespace {ns_id} does not exist", ns=ns_id)
        return ctx

    def route_request(self, rec, issue=None):
        """Execute one trace record; returns a Result."""
        ctx = self.context(rec.ns_id)
        now = rec.timestamp if issue is None else issue
        self.device.advance(now)
        for c in self.contexts.values():
            c.gc.now = max(c.gc.now, now)
        op = Op(rec.op)
        tags = None
        if op is Op.WRITE:
            self.writes += 1
            end = handle_write(ctx, rec.lba, rec.len, now, rec.synced,
                               self.writes if self.device.content is not None else None)
        elif op is Op.READ:
            end, tags = handle_read(ctx, rec.lba, rec.len, now)
        elif op is Op.FLUSH:
            end = handle_host_flush(ctx, now)
        elif op is Op.ZONE_RESET:
            end = zone_reset(ctx, ctx.zone_of(rec.lba), now)
        else:
            end = finish_zone(ctx, ctx.zone_of(rec.lba), now)
        for c in self.contexts.values():
            c.gc.maybe_start(now)
        return Result(end, tags)

    def drain(self):
        self.device.drain()

    def flush_all(self, now):
        end = now
        for c in self.contexts.values():
            end = max(end, handle_host_flush(c, now))
        return end


def validate_namespaces(configs, layout, options):
    """Check the size arithmetic; returns (slc superblocks, regular superblocks) per ns."""
    if not configs:
        raise ConfigInvalid("at least one namespace is required")
    ids = [c.ns_id for c in configs]
    if len(set(ids)) != len(ids):
        raise ConfigInvalid("namespace ids must be unique")
    slc_sb = layout.slc_upsb * UNIT_BYTES
    reg_sb = layout.upsb * UNIT_BYTES
    n = layout.n_chips
    k = options.blocks_per_zone or n
    zone_cap = k * layout.reg_units_per_block * UNIT_BYTES
    plan = {}
    for c in configs:
        kind = NsKind(c.kind)
        if c.logical_size <= 0 or c.logical_size % UNIT_BYTES:
            raise ConfigInvalid(f"namespace {c.ns_id}: logical_size must be a positive multiple of 4096")
        if kind is NsKind.BLOCK:
            need = c.logical_size + int(c.logical_size * options.op_ratio)
            if c.physical_size < need:
                raise ConfigInvalid(
                    f"namespace {c.ns_id}: BLOCK physical_size must be >= logical_size plus "
                    f"over-provisioning ({need} bytes)")
            if c.physical_size % slc_sb:
                raise ConfigInvalid(
                    f"namespace {c.ns_id}: BLOCK physical_size must be aligned to the SLC "
                    f"superblock size ({slc_sb} bytes)")
            n_slc = c.physical_size // slc_sb
            if c.physical_size <= c.logical_size + slc_sb:
                # one superblock stays free as the migration target; the rest
                # must hold more than the logical data or GC can never gain
                raise ConfigInvalid(
                    f"namespace {c.ns_id}: BLOCK physical_size must exceed logical_size by more "
                    f"than one SLC superblock ({slc_sb} bytes)")
            plan[c.ns_id] = (n_slc, 0)
        else:
            if c.logical_size % zone_cap:
                raise ConfigInvalid(
                    f"namespace {c.ns_id}: ZONED logical_size must be a multiple of the zone "
                    f"capacity ({zone_cap} bytes)")
            slc_bytes = c.physical_size - c.logical_size
            if slc_bytes < 0 or slc_bytes % slc_sb:
                raise ConfigInvalid(
                    f"namespace {c.ns_id}: ZONED physical_size must equal logical_size plus an "
                    f"SLC buffer that is a multiple of {slc_sb} bytes")
            if 0 < slc_bytes < 2 * slc_sb:
                raise ConfigInvalid(
                    f"namespace {c.ns_id}: a ZONED SLC buffer needs at least 2 superblocks")
            zones = c.logical_size // zone_cap
            n_reg = -(-zones * k // n)
            plan[c.ns_id] = (slc_bytes // slc_sb, n_reg)
    total_slc = sum(p[0] for p in plan.values())
    total_reg = sum(p[1] for p in plan.values())
    if total_slc > layout.slc_blocks:
        raise ConfigInvalid(
            f"sum of physical sizes exceeds device capacity: {total_slc} SLC superblocks "
            f"requested, {layout.slc_blocks} available")
    if total_reg > layout.geometry.blocks_per_chip - layout.slc_blocks:
        raise ConfigInvalid(
            f"sum of physical sizes exceeds device capacity: {total_reg} regular superblocks "
            f"requested, {layout.geometry.blocks_per_chip - layout.slc_blocks} available")
    device_bytes = layout.slc_blocks * slc_sb + (layout.geometry.blocks_per_chip - layout.slc_blocks) * reg_sb
    if sum(c.physical_size for c in configs) > device_bytes:
        raise ConfigInvalid("sum of physical sizes exceeds device physical capacity")
    return plan


def init_device(configs, geometry, profiles, options=None):
    """Build the shared device and one controller context per namespace.

    ``profiles`` is (regular media, SLC-mode media).
    """
    options = options or DeviceOptions()
    geometry.validate()
    regular, slc = profiles
    layout = Layout(geometry, regular, slc)
    if options.chunk_size % UNIT_BYTES or options.chunk_size <= 0:
        raise ConfigInvalid("cache.chunk_size must be a positive multiple of 4096")
    if options.buffer_size < UNIT_BYTES or options.buffer_size % UNIT_BYTES:
        raise ConfigInvalid("buffers.size must be a positive multiple of 4096")
    if options.buffer_count < 1:
        raise ConfigInvalid("buffers.count must be >= 1")
    if (options.buffer_all_in_slc and options.gc.destination is not GcDestination.TO_REGULAR):
        raise ConfigInvalid("gc.destination must be TO_REGULAR when buffer_all_in_slc is set")
    plan = validate_namespaces(configs, layout, options)
    device = FlashDevice(geometry, regular, slc, layout, preemptible=options.gc.preemptible,
                         track_data=options.track_data, log_events=options.log_events)
    cache = L2PCache(options.cache_capacity, options.cache_entry_size, options.cache_buckets)
    link = HostLink(options.host_link_bandwidth)
    next_slc = 0
    next_reg = layout.slc_blocks
    table_base = 0
    contexts = {}
    zoned = [c for c in configs if NsKind(c.kind) is NsKind.ZONED]
    per_zoned = [options.buffer_count // len(zoned) if zoned else 0 for _ in zoned]
    for i in range(options.buffer_count - sum(per_zoned) if zoned else 0):
        per_zoned[i] += 1
    zi = 0
    for c in configs:
        c = NamespaceConfig(c.ns_id, NsKind(c.kind), c.logical_size, c.physical_size)
        n_slc, n_reg = plan[c.ns_id]
        slc_ids = range(next_slc, next_slc + n_slc)
        reg_ids = range(next_reg, next_reg + n_reg)
        next_slc += n_slc
        next_reg += n_reg
        ctx = NamespaceContext(c, device, cache, link, options, slc_ids, reg_ids, table_base)
        table_base += ctx.table_pages
        if ctx.zoned:
            count = max(1, per_zoned[zi])
            zi += 1
        else:
            count = 1
        ctx.buffers = [WriteBuffer(b, options.buffer_size, c.ns_id) for b in range(count)]
        contexts[c.ns_id] = ctx
    return DeviceInstance(device, contexts, cache, link)

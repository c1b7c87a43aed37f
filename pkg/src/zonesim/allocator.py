"""Superblock pools, write pointers and zone-region reservation.

Physical pages are addressed internally by an integer *key*::

    key = block * units_per_superblock + walk_index

``walk_index`` is the position of the 4 KiB slot in the order the write
pointer visits the superblock.  Regular superblocks are walked one
programming unit per chip, rotating over all chips before moving to the
next unit of the first chip.  SLC superblocks are walked one 4 KiB slot per
chip.  Keys are therefore superblock-major and stripe-interleaved, and a
zone region reserved on a whole superblock is a run of consecutive keys.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from array import array

from .errors import AddressError, ConfigInvalid, OutOfSpace, ZoneFull
from .geometry import (UNIT_BYTES, PhysicalPageAddress, effective_pages)


class Region(str, Enum):
    SLC = "SLC"
    REGULAR = "REGULAR"


class SbState(str, Enum):
    FREE = "FREE"
    OPEN = "OPEN"
    FULL = "FULL"
    MIGRATING = "MIGRATING"


class ZoneState(str, Enum):
    EMPTY = "EMPTY"
    OPEN = "OPEN"
    FULL = "FULL"


class Layout:
    """Address arithmetic derived from geometry and media."""

    def __init__(self, geometry, regular, slc):
        g = geometry
        self.geometry = g
        self.n_chips = g.n_chips
        self.channels = g.channels
        self.upp = g.units_per_page
        self.upg = self.upp * regular.min_program_pages * g.planes
        if g.pages_per_block % (regular.min_program_pages * g.planes):
            raise ConfigInvalid(
                "geometry.pages_per_block must be a multiple of the pages in one programming unit")
        self.reg_units_per_block = g.pages_per_block * self.upp
        self.slc_units_per_block = effective_pages(slc, g, regular) * self.upp
        if self.slc_units_per_block < 1:
            raise ConfigInvalid("SLC-mode blocks would hold no pages")
        self.upsb = self.reg_units_per_block * self.n_chips
        self.slc_upsb = self.slc_units_per_block * self.n_chips
        self.slc_blocks = g.slc_blocks_per_chip
        self.rows_per_block = self.reg_units_per_block // self.upg

    def is_slc_key(self, key):
        return key // self.upsb < self.slc_blocks

    def is_slc_block(self, block):
        return block < self.slc_blocks

    def encode_regular(self, chip, block, slot):
        row, within = divmod(slot, self.upg)
        return block * self.upsb + (row * self.n_chips + chip) * self.upg + within

    def encode_slc(self, chip, block, slot):
        return block * self.upsb + slot * self.n_chips + chip

    def decode(self, key):
        """Return (chip, block, slot) for a key; chip is the linear chip index."""
        block, w = divmod(key, self.upsb)
        if block < self.slc_blocks:
            slot, chip = divmod(w, self.n_chips)
            return chip, block, slot
        g, within = divmod(w, self.upg)
        row, chip = divmod(g, self.n_chips)
        return chip, block, row * self.upg + within

    def chip_of(self, key):
        block, w = divmod(key, self.upsb)
        if block < self.slc_blocks:
            return w % self.n_chips
        return (w // self.upg) % self.n_chips

    def to_ppa(self, key):
        chip, block, slot = self.decode(key)
        return PhysicalPageAddress(chip % self.channels, chip // self.channels, block, slot)

    def from_ppa(self, ppa):
        g = self.geometry
        if not (0 <= ppa.channel < g.channels and 0 <= ppa.chip < g.chips_per_channel
                and 0 <= ppa.block < g.blocks_per_chip):
            raise AddressError(f"ppa outside geometry: {ppa}")
        chip = ppa.chip * self.channels + ppa.channel
        if ppa.block < self.slc_blocks:
            if not 0 <= ppa.page < self.slc_units_per_block:
                raise AddressError(f"ppa page outside SLC block: {ppa}")
            return self.encode_slc(chip, ppa.block, ppa.page)
        if not 0 <= ppa.page < self.reg_units_per_block:
            raise AddressError(f"ppa page outside block: {ppa}")
        return self.encode_regular(chip, ppa.block, ppa.page)

    def block_keys(self, chip, block):
        if block < self.slc_blocks:
            return [self.encode_slc(chip, block, s) for s in range(self.slc_units_per_block)]
        return [self.encode_regular(chip, block, s) for s in range(self.reg_units_per_block)]

    def superblock_units(self, sb_id):
        return self.slc_upsb if sb_id < self.slc_blocks else self.upsb


@dataclass
class Superblock:
    id: int
    region: Region
    owner_namespace: Optional[int] = None
    state: SbState = SbState.FREE
    valid_page_count: int = 0
    erase_count: int = 0
    sub_block_mode: bool = False


@dataclass
class WritePointer:
    bound_superblock: int
    n_chips: int
    cursor: int = 0  # next walk index inside the superblock

    @property
    def chip_cursor(self):
        return self.cursor % self.n_chips

    @property
    def page_cursor(self):
        return self.cursor // self.n_chips


class ZoneRegion:
    """Regular blocks reserved for one zone, striped in programming units.

    ``members`` is an ordered list of (chip, block).  A whole-superblock
    region lists every chip of one superblock in chip order.
    """

    def __init__(self, layout, members):
        self.layout = layout
        self.members = list(members)
        self.k = len(self.members)
        self.capacity_units = self.k * layout.reg_units_per_block
        first_block = self.members[0][1]
        self.contiguous = (self.k == layout.n_chips
                           and all(m == (c, first_block) for c, m in enumerate(self.members)))
        self.base_key = first_block * layout.upsb if self.contiguous else None

    def key(self, offset):
        if not 0 <= offset < self.capacity_units:
            raise ZoneFull(f"offset {offset} outside reserved region")
        if self.contiguous:
            return self.base_key + offset
        upg = self.layout.upg
        g, within = divmod(offset, upg)
        row, m = divmod(g, self.k)
        chip, block = self.members[m]
        return self.layout.encode_regular(chip, block, row * upg + within)

    def keys(self, offset, n):
        if self.contiguous:
            if offset < 0 or offset + n > self.capacity_units:
                raise ZoneFull("range outside reserved region")
            b = self.base_key + offset
            return array("q", range(b, b + n))
        return array("q", [self.key(offset + i) for i in range(n)])

    def blocks(self):
        return list(self.members)


@dataclass
class ZoneDescriptor:
    zone_id: int
    zone_size: int  # bytes, power of two
    zone_capacity: int  # bytes
    state: ZoneState = ZoneState.EMPTY
    host_write_pointer: int = 0  # bytes
    reserved_region: Optional[ZoneRegion] = None
    # durable progress, in 4 KiB units, always regular_units <= wp
    regular_units: int = 0
    slc_units: int = 0
    finished: bool = False
    pending_job: object = field(default=None, repr=False)

    @property
    def wp_units(self):
        return self.host_write_pointer // UNIT_BYTES

    @property
    def capacity_units(self):
        return self.zone_capacity // UNIT_BYTES


def next_pow2(n):
    p = 1
    while p < n:
        p <<= 1
    return p


def ppa_from_zone_offset(zone, offset, layout):
    """Physical address of byte ``offset`` inside a zone's reserved region."""
    if offset < 0 or offset >= zone.zone_capacity:
        raise ZoneFull(f"offset {offset} beyond zone capacity {zone.zone_capacity}")
    if zone.reserved_region is None:
        raise AddressError(f"zone {zone.zone_id} has no reserved region")
    return layout.to_ppa(zone.reserved_region.key(offset // UNIT_BYTES))


class SlcPartition:
    """The SLC superblocks owned by one namespace plus its write pointer."""

    def __init__(self, ns_id, superblocks, layout, sb_ids):
        self.ns_id = ns_id
        self.superblocks = superblocks
        self.layout = layout
        self.ids = list(sb_ids)
        for i in self.ids:
            sb = superblocks[i]
            sb.owner_namespace = ns_id
        self.free = deque(self.ids)
        self.wp = None
        self.reserve = 1
        # called with no arguments when a host allocation is about to take
        # the reserved superblock
        self.reclaim = None

    @property
    def free_count(self):
        return len(self.free)

    def capacity_units(self):
        return len(self.ids) * self.layout.slc_upsb

    def available_units(self):
        room = 0
        if self.wp is not None:
            room = self.layout.slc_upsb - self.wp.cursor
        return room + len(self.free) * self.layout.slc_upsb

    def _bind(self, for_gc):
        # keep one free superblock back so a migration always has a target
        if self.reclaim is not None and not for_gc and len(self.free) <= self.reserve:
            self.reclaim()
            if self.wp is not None:
                return  # the migration left an open superblock behind
        if not self.free:
            raise OutOfSpace(f"namespace {self.ns_id}: no free SLC superblock")
        sb_id = self.free.popleft()
        self.superblocks[sb_id].state = SbState.OPEN
        self.wp = WritePointer(sb_id, self.layout.n_chips)

    def allocate(self, n, for_gc=False):
        """Return ``n`` SLC keys at the write pointer, striped over chips."""
        out = []
        filled = []
        upsb = self.layout.upsb
        cap = self.layout.slc_upsb
        while len(out) < n:
            if self.wp is None:
                self._bind(for_gc)
            wp = self.wp
            take = min(n - len(out), cap - wp.cursor)
            base = wp.bound_superblock * upsb + wp.cursor
            out.extend(range(base, base + take))
            wp.cursor += take
            if wp.cursor == cap:
                filled.append(wp.bound_superblock)
                self.wp = None
        # marked FULL only now: a reclaim run by _bind above must not pick a
        # superblock whose last pages are handed out but not yet programmed
        for sb_id in filled:
            self.superblocks[sb_id].state = SbState.FULL
        return out

    def release(self, sb_id):
        sb = self.superblocks[sb_id]
        sb.state = SbState.FREE
        sb.valid_page_count = 0
        sb.erase_count += 1
        self.free.append(sb_id)


class RegularPool:
    """Free regular superblocks (or per-chip blocks in sub-block mode)."""

    def __init__(self, superblocks, layout, sb_ids, sub_block_mode=False, blocks_per_zone=None):
        self.superblocks = superblocks
        self.layout = layout
        self.ids = list(sb_ids)
        self.sub_block_mode = sub_block_mode
        n = layout.n_chips
        self.blocks_per_zone = blocks_per_zone or n
        if not 1 <= self.blocks_per_zone <= n:
            raise ConfigInvalid("zones.blocks_per_zone must be between 1 and the chip count")
        if not sub_block_mode and self.blocks_per_zone != n:
            raise ConfigInvalid("zones smaller than a superblock need sub_block_mode")
        for i in self.ids:
            superblocks[i].sub_block_mode = sub_block_mode
        self.free = deque(self.ids)
        self.free_blocks = [deque(self.ids) for _ in range(n)]
        self._chip_cursor = 0

    def zone_capacity_units(self):
        return self.blocks_per_zone * self.layout.reg_units_per_block

    def free_zone_slots(self):
        if not self.sub_block_mode:
            return len(self.free)
        k = self.blocks_per_zone
        total = sum(len(q) for q in self.free_blocks)
        return min(total // k, min(len(q) for q in self.free_blocks) * self.layout.n_chips // k)

    def reserve(self, zone):
        n = self.layout.n_chips
        if not self.sub_block_mode:
            if not self.free:
                raise OutOfSpace(f"zone {zone.zone_id}: no free regular superblock")
            sb_id = self.free.popleft()
            self.superblocks[sb_id].state = SbState.OPEN
            region = ZoneRegion(self.layout, [(c, sb_id) for c in range(n)])
        else:
            k = self.blocks_per_zone
            chips = [(self._chip_cursor + i) % n for i in range(n)]
            chips = [c for c in chips if self.free_blocks[c]][:k]
            if len(chips) < k:
                raise OutOfSpace(f"zone {zone.zone_id}: not enough free sub-blocks")
            chips.sort()
            members = [(c, self.free_blocks[c].popleft()) for c in chips]
            self._chip_cursor = (self._chip_cursor + k) % n
            for _, b in members:
                self.superblocks[b].state = SbState.OPEN
            region = ZoneRegion(self.layout, members)
        zone.reserved_region = region
        return region

    def release(self, region):
        if not self.sub_block_mode:
            sb_id = region.members[0][1]
            sb = self.superblocks[sb_id]
            sb.state = SbState.FREE
            sb.erase_count += 1
            self.free.append(sb_id)
            return
        for c, b in region.members:
            self.free_blocks[c].append(b)
            sb = self.superblocks[b]
            sb.erase_count += 1
            if all(b in q for q in self.free_blocks):
                sb.state = SbState.FREE


def reserve_zone_region(pool, zone):
    if zone.state is not ZoneState.EMPTY or zone.reserved_region is not None:
        raise AddressError(f"zone {zone.zone_id} already holds a region")
    return pool.reserve(zone)


def allocate_slc_stripe(partition, n_pages):
    return [partition.layout.to_ppa(k) for k in partition.allocate(n_pages)]

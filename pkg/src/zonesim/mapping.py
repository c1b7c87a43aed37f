"""Flat L2P table with page/chunk/zone granularity and a bounded LRU cache.

The table keeps one physical key per logical page.  Aggregation does not
rewrite the table; it records which chunks and zones currently qualify, and
that record plays the role of the two granularity bits (and of the bitmap
used by the BITMAP miss strategy).  Mapping-table pages are assumed to live
in SLC; every probe of the flash-resident table costs one timed 4 KiB read.
"""

from array import array
from collections import OrderedDict
from enum import Enum

from .errors import AddressError, UnmappedRead
from .geometry import KIB, MIB, UNIT_BYTES

UNMAPPED = -1
TABLE_ENTRY_BYTES = 4
ENTRIES_PER_TABLE_PAGE = UNIT_BYTES // TABLE_ENTRY_BYTES


class Granularity(str, Enum):
    PAGE = "PAGE"
    CHUNK = "CHUNK"
    ZONE = "ZONE"
    UNMAPPED = "UNMAPPED"


class MissStrategy(str, Enum):
    MULTIPLE = "MULTIPLE"
    BITMAP = "BITMAP"


MISS = "MISS"
_TAG = {Granularity.PAGE: "P", Granularity.CHUNK: "C", Granularity.ZONE: "Z"}


class L2PCache:
    """Hash-bucketed entries under one global LRU order.

    Keys are ``(ns, tag, index)`` where index is the logical address at the
    cached granularity.  Pinned entries count against the byte budget but
    are never evicted.
    """

    def __init__(self, capacity=1 * MIB, entry_size=8, bucket_count=1024):
        if capacity < 0 or entry_size < 1 or bucket_count < 1:
            raise ValueError("bad cache geometry")
        self.capacity = capacity
        self.entry_size = entry_size
        self.bucket_count = bucket_count
        self.max_entries = capacity // entry_size
        self.buckets = [dict() for _ in range(bucket_count)]
        self.lru = OrderedDict()
        self.pinned = set()

    def __len__(self):
        return len(self.lru) + len(self.pinned)

    def bytes_used(self):
        return len(self) * self.entry_size

    def _bucket(self, key):
        return self.buckets[key[2] % self.bucket_count]

    def get(self, key):
        v = self._bucket(key).get(key)
        if v is not None and key in self.lru:
            self.lru.move_to_end(key)
        return v

    def put(self, key, value, pinned=False):
        b = self._bucket(key)
        if key in b:
            b[key] = value
            if pinned and key in self.lru:
                del self.lru[key]
                self.pinned.add(key)
            elif key in self.lru:
                self.lru.move_to_end(key)
            return True
        while len(self) >= self.max_entries:
            if not self.lru:
                return False
            old, _ = self.lru.popitem(last=False)
            del self._bucket(old)[old]
        b[key] = value
        if pinned:
            self.pinned.add(key)
        else:
            self.lru[key] = None
        return True

    def drop(self, key):
        b = self._bucket(key)
        if key in b:
            del b[key]
            self.lru.pop(key, None)
            self.pinned.discard(key)

    def contains(self, key):
        return key in self._bucket(key)


class NamespaceMap:
    """Mapping state of one namespace.

    ``zone_units`` is the power-of-two zone window in 4 KiB pages; block
    namespaces pass ``None`` and only ever use page entries.
    """

    def __init__(self, ns, n_lpas, device, cache, hybrid=True, strategy=MissStrategy.MULTIPLE,
                 zone_units=None, zone_cap_units=None, chunk_units=(4 * MIB) // UNIT_BYTES,
                 pin_zone_entries=False, table_base_page=0):
        self.ns = ns
        self.n_lpas = n_lpas
        self.device = device
        self.cache = cache
        self.zoned = zone_units is not None
        self.hybrid = hybrid and self.zoned
        self.strategy = MissStrategy(strategy)
        self.zone_units = zone_units
        self.zone_cap_units = zone_cap_units
        self.chunk_units = chunk_units
        if self.zoned and (zone_units % chunk_units and chunk_units % zone_units):
            raise AddressError("chunk and zone windows must nest")
        self.pin = pin_zone_entries
        self.table_base_page = table_base_page
        self.ppa = array("q", [UNMAPPED]) * n_lpas
        self.zone_agg = set()
        self.chunk_agg = set()
        self.regions = {}  # zone id -> ZoneRegion, set by the write path
        self.hits = {Granularity.ZONE: 0, Granularity.CHUNK: 0, Granularity.PAGE: 0}
        self.misses = 0
        self._upsb = device.layout.upsb
        self._slc_limit = device.layout.slc_blocks * self._upsb

    def reset_stats(self):
        for k in self.hits:
            self.hits[k] = 0
        self.misses = 0

    # -- granularity --------------------------------------------------------

    def check(self, lpa):
        if not 0 <= lpa < self.n_lpas:
            raise AddressError(f"lpa {lpa} outside namespace {self.ns}")

    def granularity(self, lpa):
        if self.zoned:
            if lpa % self.zone_units >= self.zone_cap_units:
                return Granularity.UNMAPPED  # hole past zone capacity
            if lpa // self.zone_units in self.zone_agg:
                return Granularity.ZONE
            if lpa // self.chunk_units in self.chunk_agg:
                return Granularity.CHUNK
        if self.ppa[lpa] == UNMAPPED:
            return Granularity.UNMAPPED
        return Granularity.PAGE

    def _base(self, gran, lpa):
        if gran is Granularity.ZONE:
            return lpa // self.zone_units
        if gran is Granularity.CHUNK:
            return lpa // self.chunk_units
        return lpa

    def _first_lpa(self, gran, index):
        if gran is Granularity.ZONE:
            return index * self.zone_units
        if gran is Granularity.CHUNK:
            return index * self.chunk_units
        return index

    def entry(self, gran, lpa):
        """Physical key stored at the entry of ``gran`` covering ``lpa``."""
        if gran is Granularity.PAGE:
            return self.ppa[lpa]
        first = self._first_lpa(gran, self._base(gran, lpa))
        region = self.regions[lpa // self.zone_units]
        return region.key(first % self.zone_units)

    def resolve(self, gran, base_key, lpa):
        """Apply a cached aggregate: base plus the offset inside it."""
        if gran is Granularity.PAGE:
            return base_key
        region = self.regions[lpa // self.zone_units]
        off = lpa % self.zone_units
        if region.contiguous:
            first = self._first_lpa(gran, self._base(gran, lpa)) % self.zone_units
            return base_key + (off - first)
        return region.key(off)

    def translate(self, lpa):
        """Table translation without cache effects or timing."""
        self.check(lpa)
        g = self.granularity(lpa)
        if g is Granularity.UNMAPPED:
            return UNMAPPED
        return self.resolve(g, self.entry(g, lpa), lpa)

    # -- cached lookup ------------------------------------------------------

    def table_page(self, gran, lpa):
        first = self._first_lpa(gran, self._base(gran, lpa))
        return self.table_base_page + first // ENTRIES_PER_TABLE_PAGE

    def probe_order(self):
        if self.hybrid:
            return (Granularity.ZONE, Granularity.CHUNK, Granularity.PAGE)
        return (Granularity.PAGE,)

    def fetch_mapping(self, lpa):
        """Return (granularity, table page of each flash probe)."""
        g = self.granularity(lpa)
        if not self.hybrid:
            return g, [self.table_page(Granularity.PAGE, lpa)]
        if self.strategy is MissStrategy.BITMAP:
            probe = Granularity.PAGE if g is Granularity.UNMAPPED else g
            return g, [self.table_page(probe, lpa)]
        pages = []
        for level in self.probe_order():
            pages.append(self.table_page(level, lpa))
            if level is g:
                break
        return g, pages

    def lookup(self, lpa, now):
        """Translate through the cache.

        Returns (key, hit level or MISS, flash reads, time translation is
        known).  Misses issue their probes as timed SLC reads.
        """
        self.check(lpa)
        cache = self.cache
        for level in self.probe_order():
            key = (self.ns, _TAG[level], self._base(level, lpa))
            v = cache.get(key)
            if v is not None:
                self.hits[level] += 1
                return self.resolve(level, v, lpa), level, 0, now
        self.misses += 1
        g, pages = self.fetch_mapping(lpa)
        t = now
        dev = self.device
        for p in pages:
            t = dev.execute(dev.meta_read_op(p, self.ns), t).end
        if g is Granularity.UNMAPPED:
            raise UnmappedRead(f"ns {self.ns} lpa {lpa} is not mapped", lpa=lpa)
        base = self.entry(g, lpa)
        pinned = self.pin and g is Granularity.ZONE
        cache.put((self.ns, _TAG[g], self._base(g, lpa)), base, pinned=pinned)
        return self.resolve(g, base, lpa), MISS, len(pages), t

    # -- updates ------------------------------------------------------------

    def _drop_page_entries(self, lo, hi):
        cache = self.cache
        if not len(cache):
            return
        ns = self.ns
        for lpa in range(lo, hi):
            cache.drop((ns, "P", lpa))

    def _demote(self, lpa):
        z = lpa // self.zone_units
        if z in self.zone_agg:
            self.zone_agg.discard(z)
            self.cache.drop((self.ns, "Z", z))
        c = lpa // self.chunk_units
        if c in self.chunk_agg:
            self.chunk_agg.discard(c)
            self.cache.drop((self.ns, "C", c))

    def update(self, lpa, key):
        """Point ``lpa`` at ``key`` (or UNMAPPED) and fix valid counts."""
        if self.zoned:
            self._demote(lpa)
        self.cache.drop((self.ns, "P", lpa))
        old = self.ppa[lpa]
        sbs = self.device.superblocks
        rmap = self.device.rmap
        if old != UNMAPPED:
            sbs[old // self._upsb].valid_page_count -= 1
            if old < self._slc_limit:
                rmap.pop(old, None)
        self.ppa[lpa] = key
        if key != UNMAPPED:
            sbs[key // self._upsb].valid_page_count += 1
            if key < self._slc_limit:
                rmap[key] = (self.ns, lpa)

    def update_if(self, lpa, expected, key):
        """Move ``lpa`` only if it still points at ``expected``."""
        if self.ppa[lpa] != expected:
            return False
        self.update(lpa, key)
        return True

    def unmap_range(self, lo, hi):
        for lpa in range(lo, hi):
            if self.ppa[lpa] != UNMAPPED:
                self.update(lpa, UNMAPPED)
            else:
                self.cache.drop((self.ns, "P", lpa))
        if self.zoned:
            self._demote(lo)

    def try_aggregate(self, zone_id, regular_units):
        """Promote chunks (and the zone) whose pages sit at region positions.

        ``regular_units`` is how many leading pages of the zone are durable
        in the zone's regular region.
        """
        if not self.hybrid or zone_id not in self.regions:
            return Granularity.UNMAPPED
        region = self.regions[zone_id]
        zbase = zone_id * self.zone_units
        cu = self.chunk_units
        promoted = Granularity.UNMAPPED
        if zone_id in self.zone_agg:
            return promoted
        for off in range(0, regular_units - cu + 1, cu):
            ci = (zbase + off) // cu
            if ci in self.chunk_agg:
                continue
            if not self._at_region(region, zbase, off, cu):
                continue
            self.chunk_agg.add(ci)
            self._drop_page_entries(zbase + off, zbase + off + cu)
            promoted = Granularity.CHUNK
        cap = self.zone_cap_units
        if regular_units >= cap and self._at_region(region, zbase, 0, cap):
            self.zone_agg.add(zone_id)
            for off in range(0, cap, cu):
                ci = (zbase + off) // cu
                if ci in self.chunk_agg:
                    self.chunk_agg.discard(ci)
                    self.cache.drop((self.ns, "C", ci))
            self._drop_page_entries(zbase, zbase + cap)
            if self.pin:
                self.cache.put((self.ns, "Z", zone_id), region.key(0), pinned=True)
            promoted = Granularity.ZONE
        return promoted

    def _at_region(self, region, zbase, off, n):
        want = region.keys(off, n)
        return self.ppa[zbase + off:zbase + off + n] == want

    def page_table_snapshot(self):
        return array("q", self.ppa)


def bitmap_memory_bytes(device_bytes, page_bytes=UNIT_BYTES, bits=2):
    return device_bytes // page_bytes * bits // 8


def pinned_zone_memory_bytes(device_bytes, zone_bytes, entry_bytes=TABLE_ENTRY_BYTES):
    return device_bytes // zone_bytes * entry_bytes


__all__ = ["Granularity", "MissStrategy", "L2PCache", "NamespaceMap", "UNMAPPED", "MISS",
           "bitmap_memory_bytes", "pinned_zone_memory_bytes", "KIB"]

import random

import pytest
from hypothesis import given, settings, strategies as st

from zonesim.errors import UnmappedRead
from zonesim.mapping import (MISS, UNMAPPED, Granularity, L2PCache, bitmap_memory_bytes,
                             pinned_zone_memory_bytes)
from zonesim.geometry import GIB, KIB, MIB
from zonesim.sim import Simulator
from zonesim.trace import TraceRecord as R

from conftest import small_config

TIB = 1024 * GIB


def zoned(strategy="MULTIPLE", hybrid=True, **extra):
    cfg = small_config(cache={"miss_strategy": strategy, "hybrid": hybrid, **extra})
    sim = Simulator(cfg, track_data=True)
    return sim, sim.instance.contexts[1]


def fill(sim, zone, units, zone_units=128, req=12):
    base = zone * zone_units
    for off in range(0, units, req):
        sim.submit(R(0, 1, "WRITE", base + off, min(req, units - off) * 4096))


# -- cache -------------------------------------------------------------------

def test_lru_evicts_least_recent():
    c = L2PCache(capacity=3 * 8, entry_size=8, bucket_count=2)
    for i in range(3):
        c.put((0, "P", i), 100 + i)
    c.get((0, "P", 0))
    c.put((0, "P", 3), 103)
    assert not c.contains((0, "P", 1))
    assert c.contains((0, "P", 0)) and c.contains((0, "P", 3))
    assert c.bytes_used() == 24


def test_pinned_entries_count_and_stay():
    c = L2PCache(capacity=2 * 8, entry_size=8, bucket_count=4)
    c.put((0, "Z", 0), 1, pinned=True)
    c.put((0, "P", 5), 2)
    c.put((0, "P", 6), 3)
    assert c.contains((0, "Z", 0)) and not c.contains((0, "P", 5))
    c.put((0, "Z", 1), 4, pinned=True)
    assert not c.put((0, "P", 7), 5)
    assert len(c) == 2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.booleans(), st.booleans()), max_size=200),
       st.integers(1, 10))
def test_cache_budget_never_exceeded(ops, slots):
    c = L2PCache(capacity=slots * 8, entry_size=8, bucket_count=3)
    for key, pin, drop in ops:
        k = (0, "P", key)
        if drop:
            c.drop(k)
        else:
            c.put(k, key, pinned=pin and key % 7 == 0)
        assert c.bytes_used() <= c.capacity
        assert len(c.lru) + len(c.pinned) == sum(len(b) for b in c.buckets)


# -- lookups -----------------------------------------------------------------

def test_full_zone_is_one_zone_entry():
    sim, ctx = zoned()
    fill(sim, 0, 96)
    m = ctx.map
    assert m.granularity(0) is Granularity.ZONE and m.granularity(95) is Granularity.ZONE
    key, level, reads, _ = m.lookup(40, 0)
    assert (level, reads) == (MISS, 1)
    key2, level2, reads2, _ = m.lookup(77, 0)
    assert (level2, reads2) == (Granularity.ZONE, 0)
    region = m.regions[0]
    assert key == region.key(40) and key2 == region.key(77)


def test_chunk_mapped_multiple_two_reads():
    sim, ctx = zoned()
    fill(sim, 0, 48)  # three 64 KiB chunks in regular flash, zone still open
    m = ctx.map
    assert m.granularity(20) is Granularity.CHUNK
    _, level, reads, _ = m.lookup(20, 0)
    assert (level, reads) == (MISS, 2)
    _, level, reads, _ = m.lookup(21, 0)
    assert (level, reads) == (Granularity.CHUNK, 0)


@pytest.mark.parametrize("strategy,expected", [("MULTIPLE", 3), ("BITMAP", 1)])
def test_page_mapped_miss_cost(strategy, expected):
    sim, ctx = zoned(strategy)
    sim.submit(R(0, 1, "WRITE", 0, 4096, True))
    m = ctx.map
    assert m.granularity(0) is Granularity.PAGE
    assert sim.device.layout.is_slc_key(m.ppa[0])
    _, level, reads, t = m.lookup(0, 1000)
    assert (level, reads) == (MISS, expected)
    assert t > 1000


def test_page_only_mapping_single_read():
    sim, ctx = zoned(hybrid=False)
    fill(sim, 0, 96)
    m = ctx.map
    assert m.granularity(0) is Granularity.PAGE
    _, level, reads, _ = m.lookup(3, 0)
    assert (level, reads) == (MISS, 1)


def test_fetch_is_a_timed_slc_read():
    sim, ctx = zoned()
    fill(sim, 0, 96)
    before = sim.device.counters_for(1).fetch_reads
    _, _, _, t = ctx.map.lookup(0, 5_000_000)
    assert sim.device.counters_for(1).fetch_reads == before + 1
    assert t >= 5_000_000 + 20_000


def test_unmapped_lookup_raises():
    sim, ctx = zoned()
    with pytest.raises(UnmappedRead):
        ctx.map.lookup(130, 0)
    assert ctx.map.translate(130) == UNMAPPED


def test_slc_resident_pages_are_not_aggregated():
    cfg = small_config(buffers={"buffer_all_in_slc": True}, gc={"destination": "TO_REGULAR"})
    sim = Simulator(cfg)
    fill(sim, 0, 24)
    m = sim.instance.contexts[1].map
    assert not m.zone_agg and not m.chunk_agg
    assert m.granularity(0) is Granularity.PAGE
    assert m.try_aggregate(0, 24) is Granularity.UNMAPPED


def test_overwrite_of_slc_page_invalidates_old_copy():
    sim, ctx = zoned()
    sim.submit(R(0, 0, "WRITE", 3, 4096, True))
    old = sim.instance.contexts[0].map.ppa[3]
    sim.submit(R(0, 0, "WRITE", 3, 4096, True))
    new = sim.instance.contexts[0].map.ppa[3]
    assert old != new
    assert old not in sim.device.rmap and sim.device.rmap[new] == (0, 3)


def test_zone_reset_removes_aggregate():
    sim, ctx = zoned()
    fill(sim, 0, 96)
    ctx.map.lookup(0, 0)
    sim.submit(R(0, 1, "ZONE_RESET", 0, 0))
    m = ctx.map
    assert 0 not in m.zone_agg and not sim.instance.cache.contains((1, "Z", 0))
    with pytest.raises(UnmappedRead):
        m.lookup(0, 0)


def test_writes_invalidate_cached_page_entries():
    sim, ctx = zoned()
    sim.submit(R(0, 0, "WRITE", 9, 4096, True))
    m0 = sim.instance.contexts[0].map
    m0.lookup(9, 0)
    assert sim.instance.cache.contains((0, "P", 9))
    sim.submit(R(0, 0, "WRITE", 9, 4096, True))
    assert not sim.instance.cache.contains((0, "P", 9))


def test_pinned_zone_entries():
    sim, ctx = zoned(pin_zone_entries=True)
    fill(sim, 0, 96)
    assert (1, "Z", 0) in sim.instance.cache.pinned
    _, level, reads, _ = ctx.map.lookup(10, 0)
    assert (level, reads) == (Granularity.ZONE, 0)


def test_memory_reports():
    assert bitmap_memory_bytes(TIB) == 64 * MIB
    assert pinned_zone_memory_bytes(TIB, 16 * MIB) == 256 * KIB


def test_aggregation_is_lossless():
    sim, ctx = zoned()
    fill(sim, 0, 96)
    fill(sim, 1, 48)
    m = ctx.map
    before = [m.translate(l) for l in range(m.n_lpas)]
    page_table = m.page_table_snapshot()
    assert list(page_table) == before
    # demote everything then promote again
    m.zone_agg.clear()
    m.chunk_agg.clear()
    assert [m.translate(l) for l in range(m.n_lpas)] == before
    m.try_aggregate(0, 96)
    m.try_aggregate(1, 48)
    assert m.zone_agg == {0} and m.chunk_agg == {8, 9, 10}
    assert [m.translate(l) for l in range(m.n_lpas)] == before


def test_strategies_return_same_keys():
    out = {}
    for strategy in ("MULTIPLE", "BITMAP"):
        sim, ctx = zoned(strategy)
        fill(sim, 0, 96)
        fill(sim, 1, 40)
        sim.submit(R(0, 1, "WRITE", 128 + 40, 8192, True))
        rng = random.Random(7)
        lpas = [rng.choice(list(range(96)) + list(range(128, 170))) for _ in range(300)]
        keys, reads = [], 0
        for l in lpas:
            k, _, r, _ = ctx.map.lookup(l, 0)
            keys.append(k)
            reads += r
        out[strategy] = (keys, reads)
    assert out["MULTIPLE"][0] == out["BITMAP"][0]
    assert out["MULTIPLE"][1] > out["BITMAP"][1]

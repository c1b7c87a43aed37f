"""Replays random traces against a plain dict of what each page should hold.

Every write record gets a sequence number (the device tags data with it), so
a read is correct when it returns exactly the tags the shadow dict expects.
"""

import random

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from zonesim.errors import SimulationError, UnmappedRead
from zonesim.mapping import UNMAPPED
from zonesim.sim import Simulator
from zonesim.trace import TraceRecord as R
from zonesim.workloads import shape_of

from conftest import small_config

QLC_NAMESPACES = [
    {"id": 0, "kind": "BLOCK", "logical_size": "32KiB", "physical_size": "256KiB"},
    {"id": 1, "kind": "ZONED", "logical_size": "2048KiB", "physical_size": "2304KiB"},
]

VARIANTS = {
    "in_slc": {},
    "fifo": {"gc": {"preemptible": False}},
    "to_regular": {"gc": {"destination": "TO_REGULAR"}},
    "qlc_all_slc": {"media": {"regular": "QLC"}, "geometry": {"pages_per_block": 32},
                    "buffers": {"buffer_all_in_slc": True},
                    "gc": {"destination": "TO_REGULAR"}, "namespaces": QLC_NAMESPACES},
    "modulo_bitmap": {"buffers": {"policy": "MODULO"},
                      "cache": {"miss_strategy": "BITMAP", "hybrid": False}},
}


class Shadow:
    """Expected content per (ns, lpa) plus zone write pointers."""

    def __init__(self, cfg):
        self.block = shape_of(cfg, 0)
        self.zoned = shape_of(cfg, 1)
        self.pages = {}
        self.wp = [0] * self.zoned.n_zones
        self.written = [0] * self.zoned.n_zones  # differs from wp after a finish
        self.seq = 0

    def write(self, ns, lba, n):
        for lpa in range(lba, lba + n):
            self.seq_page(ns, lpa)

    def seq_page(self, ns, lpa):
        self.pages[(ns, lpa)] = self.seq

    def reset(self, zone):
        base = zone * self.zoned.zone_units
        for lpa in range(base, base + self.zoned.zone_cap_units):
            self.pages.pop((1, lpa), None)
        self.wp[zone] = self.written[zone] = 0


def build_trace(cfg, ops):
    """Turn abstract ops into valid records; returns (records, expected-read list).

    Expected reads map record index -> list of expected tags, or None when
    the read must fail as unmapped.
    """
    sh = Shadow(cfg)
    zs = sh.zoned
    recs, expect = [], {}
    t = 0
    for kind, a, b, synced, gap in ops:
        t += gap
        if kind == "zw":
            z = a % zs.n_zones
            if sh.wp[z] >= zs.zone_cap_units:
                continue
            n = min(b, zs.zone_cap_units - sh.wp[z])
            lba = z * zs.zone_units + sh.wp[z]
            recs.append(R(t, 1, "WRITE", lba, n * 4096, synced))
            sh.seq += 1
            sh.write(1, lba, n)
            sh.wp[z] += n
            sh.written[z] = sh.wp[z]
        elif kind == "bw":
            n = min(b, 4)
            lba = a % (sh.block.n_lpas - n + 1)
            recs.append(R(t, 0, "WRITE", lba, n * 4096, synced))
            sh.seq += 1
            sh.write(0, lba, n)
        elif kind == "zr":
            z = a % zs.n_zones
            if not sh.written[z]:
                if sh.seq:
                    expect[len(recs)] = None
                    recs.append(R(t, 1, "READ", z * zs.zone_units, 4096))
                continue
            off = a % sh.written[z]
            n = min(b, sh.written[z] - off)
            lba = z * zs.zone_units + off
            expect[len(recs)] = [(1, p, sh.pages[(1, p)]) for p in range(lba, lba + n)]
            recs.append(R(t, 1, "READ", lba, n * 4096))
        elif kind == "br":
            lpa = a % sh.block.n_lpas
            if (0, lpa) in sh.pages:
                expect[len(recs)] = [(0, lpa, sh.pages[(0, lpa)])]
            else:
                expect[len(recs)] = None
            recs.append(R(t, 0, "READ", lpa, 4096))
        elif kind == "reset":
            z = a % zs.n_zones
            recs.append(R(t, 1, "ZONE_RESET", z * zs.zone_units))
            sh.reset(z)
        elif kind == "finish":
            z = a % zs.n_zones
            if sh.wp[z]:
                recs.append(R(t, 1, "ZONE_FINISH", z * zs.zone_units))
                sh.wp[z] = zs.zone_cap_units
        else:
            recs.append(R(t, a % 2, "FLUSH"))
    return recs, expect, sh


def replay_and_check(cfg, ops):
    recs, expect, sh = build_trace(cfg, ops)
    sim = Simulator(cfg, track_data=True)
    for i, rec in enumerate(recs):
        want = expect.get(i, False)
        if want is None:
            with pytest.raises(SimulationError) as e:
                sim.submit(rec, i)
            assert isinstance(e.value.cause, UnmappedRead)
            continue
        res = sim.submit(rec, i)
        if want is not False:
            assert res.tags == want, f"record {i}: {rec}"
    sim.finish()
    check_final_state(sim, sh)
    return sim


def check_final_state(sim, sh):
    dev = sim.device
    lay = dev.layout
    owner = {}
    for (ns, lpa), seq in sh.pages.items():
        ctx = sim.instance.contexts[ns]
        key = ctx.map.ppa[lpa]
        assert key != UNMAPPED, (ns, lpa)
        assert dev.content[key] == (ns, lpa, seq)
        assert owner.setdefault(key, (ns, lpa)) == (ns, lpa)
    for ns, ctx in sim.instance.contexts.items():
        mapped = [k for k in ctx.map.ppa if k != UNMAPPED]
        assert len(mapped) == sum(1 for (n, _) in sh.pages if n == ns)
        in_slc = sum(1 for k in mapped if lay.is_slc_key(k))
        assert in_slc == sum(dev.superblocks[i].valid_page_count for i in ctx.partition.ids)
        # read everything back through the host interface
        for (n, lpa), seq in sh.pages.items():
            if n == ns:
                res = sim.submit(R(0, ns, "READ", lpa, 4096))
                assert res.tags == [(ns, lpa, seq)]


op = st.tuples(
    st.sampled_from(["zw", "zw", "zw", "zw", "bw", "bw", "zr", "br", "reset", "finish", "flush"]),
    st.integers(0, 10**6),
    st.integers(1, 8),
    st.booleans(),
    st.sampled_from([0, 0, 0, 1_000, 50_000, 400_000, 3_000_000]),
)
traces = st.lists(op, min_size=1, max_size=160)


@pytest.mark.parametrize("variant", list(VARIANTS))
@settings(max_examples=220, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(ops=traces)
def test_reads_match_shadow_map(variant, ops):
    replay_and_check(small_config(**VARIANTS[variant]), ops)


def seeded_ops(seed, n=3000):
    rng = random.Random(seed)
    kinds = ["zw"] * 8 + ["bw"] * 4 + ["zr", "br", "reset", "flush"]
    return [(rng.choice(kinds), rng.randrange(10**6), rng.randint(1, 8), rng.random() < 0.6,
             rng.choice([0, 0, 1_000, 200_000, 2_000_000])) for _ in range(n)]


@pytest.mark.parametrize("variant", list(VARIANTS))
def test_long_trace_exercises_every_path(variant):
    cfg = small_config(**VARIANTS[variant])
    sim = replay_and_check(cfg, seeded_ops(11))
    rep = sim.report()
    dev = rep.device
    assert rep.ns(1).premature_flush_count > 0
    assert dev.fold_bytes > 0 or VARIANTS[variant].get("buffers", {}).get("buffer_all_in_slc")
    assert dev.gc_migrated_bytes > 0 and dev.erase_count_slc > 0
    assert dev.erase_count_regular > 0  # zone resets erased regions
    if cfg.options.gc.preemptible:
        assert sim.device.preemptions > 0
    else:
        assert sim.device.preemptions == 0

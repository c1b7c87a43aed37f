"""SLC garbage collection and host-driven zone reset.

Regular flash is never collected: a zone's blocks are erased only when the
host resets the zone.  SLC superblocks are collected per namespace
partition, one migration job at a time.  A job's mapping changes are
applied once all of its copy commands have been issued, and only for pages
whose mapping still points at the copied location.
"""

from dataclasses import dataclass
from enum import Enum

from .allocator import SbState, ZoneState
from .device import GC, Job
from .errors import NoVictim, OutOfSpace
from .geometry import UNIT_BYTES, CommandKind, Origin
from .write_path import drop_zone_buffer, group_pages


class GcDestination(str, Enum):
    IN_SLC = "IN_SLC"
    TO_REGULAR = "TO_REGULAR"


@dataclass
class GcPolicy:
    trigger_threshold: int = 2  # start when free superblocks < this
    stop_threshold: int = 3  # keep going while free superblocks < this
    destination: GcDestination = GcDestination.IN_SLC
    preemptible: bool = True


def select_victim(partition):
    """FULL superblock with the fewest valid pages, lowest id on ties."""
    best = None
    for i in partition.ids:
        sb = partition.superblocks[i]
        if sb.state is not SbState.FULL:
            continue
        if best is None or sb.valid_page_count < best.valid_page_count:
            best = sb
    if best is None:
        raise NoVictim(f"namespace {partition.ns_id}: no FULL SLC superblock")
    return best


class SlcCollector:
    """GC state of one SLC partition."""

    def __init__(self, ctx, policy):
        self.ctx = ctx
        self.policy = policy
        self.partition = ctx.partition
        self.device = ctx.device
        self.job = None
        self.now = 0
        self.jobs_run = 0
        self.partition.reclaim = self.reclaim

    # -- triggering ---------------------------------------------------------

    def maybe_start(self, now):
        self.now = max(self.now, now)
        p = self.partition
        if self.job is None and p.ids and p.free_count < self.policy.trigger_threshold:
            self.start(now)

    def start(self, now):
        """Plan and queue one migration; returns the job or None."""
        p = self.partition
        try:
            victim = select_victim(p)
        except NoVictim:
            return None
        cap = self.device.layout.slc_upsb
        if self.policy.destination is GcDestination.IN_SLC:
            # pointless if nothing is invalid, impossible if the copies do not fit
            if victim.valid_page_count >= cap or victim.valid_page_count > p.available_units():
                return None
        job = self._plan(victim, now)
        if job is None:
            return None
        self.job = job
        self.jobs_run += 1
        self.device.submit(job, now)
        return job

    def reclaim(self):
        """Synchronously free SLC space before the reserve is touched."""
        p = self.partition
        self.settle()
        while p.free_count <= p.reserve:
            before = p.free_count
            if self.start(self.now) is None:
                break
            self.settle()
            if p.free_count <= before:
                break

    def settle(self):
        if self.job is not None:
            self.device.drain()

    def settle_zone(self, zone):
        if self.job is not None and zone.zone_id in self.job.zones:
            self.device.drain()

    # -- planning -----------------------------------------------------------

    def _plan(self, victim, now):
        dev = self.device
        lay = dev.layout
        ctx = self.ctx
        base = victim.id * lay.upsb
        rmap = dev.rmap
        valid = []
        for k in range(base, base + lay.slc_upsb):
            owner = rmap.get(k)
            if owner is not None:
                valid.append((k, owner[1]))
        victim.state = SbState.MIGRATING
        job = Job(ctx.ns, on_commit=self._commit, on_done=self._done)
        job.victim = victim.id
        job.moves = []
        job.zones = set()
        job.folded_zones = set()
        job.slc_copies = 0
        copies = []
        to_slc = valid
        if self.policy.destination is GcDestination.TO_REGULAR and ctx.zoned:
            to_slc = []
            copies.extend(self._plan_folds(job, valid, to_slc))
        if ctx.zoned:
            zu = ctx.zone_units
            job.zones.update(lpa // zu for _, lpa in valid)
        if to_slc:
            dest = self.partition.allocate(len(to_slc), for_gc=True)
            copies.extend(self._copy_ops(job, [k for k, _ in to_slc],
                                         [lpa for _, lpa in to_slc], dest, per_page=True))
            job.slc_copies = len(to_slc)
        job.ops.extend(copies)
        for chip in range(lay.n_chips):
            e = dev.erase_op(chip, victim.id, Origin.BACKGROUND, ctx.ns, "gc")
            e.deps = copies
            job.ops.append(e)
        return job

    def _plan_folds(self, job, valid, to_slc):
        """TO_REGULAR: fold each touched zone's SLC head into its region."""
        ctx = self.ctx
        zu = ctx.zone_units
        G = ctx.G
        m = ctx.map
        ops = []
        by_zone = {}
        for k, lpa in valid:
            by_zone.setdefault(lpa // zu, []).append((k, lpa))
        for zid in sorted(by_zone):
            zone = ctx.zones[zid]
            R, S = zone.regular_units, zone.slc_units
            n = S // G * G
            zbase = zid * zu
            if n:
                lpas = list(range(zbase + R, zbase + R + n))
                src = [m.ppa[lpa] for lpa in lpas]
                dest = list(zone.reserved_region.keys(R, n))
                ops.extend(self._copy_ops(job, src, lpas, dest, per_page=False))
                zone.regular_units += n
                zone.slc_units -= n
                job.folded_zones.add(zid)
            cut = zbase + zone.regular_units
            to_slc.extend((k, lpa) for k, lpa in by_zone[zid] if lpa >= cut)
        return ops

    def _copy_ops(self, job, src, lpas, dest, per_page):
        """Reads of ``src`` then programs of ``dest`` that wait on them."""
        dev = self.device
        lay = dev.layout
        ns = self.ctx.ns
        reads = {}
        ops = []
        for gkeys, _ in group_pages(lay, src):
            r = dev.read_op(gkeys, Origin.BACKGROUND, ns, "gc")
            ops.append(r)
            for k in gkeys:
                reads[k] = r
        src_of = dict(zip(dest, src))
        if per_page:
            groups = [g for g, _ in group_pages(lay, dest)]
        else:
            G = self.ctx.G
            groups = [dest[i:i + G] for i in range(0, len(dest), G)]
        for gkeys in groups:
            s = [src_of[k] for k in gkeys]
            p = dev.program_op(list(gkeys), Origin.BACKGROUND, ns, {GC: len(gkeys) * UNIT_BYTES},
                               src=s, cause="gc")
            deps = []
            for k in s:
                r = reads[k]
                if not deps or deps[-1] is not r:
                    if r not in deps:
                        deps.append(r)
            p.deps = deps
            ops.append(p)
        job.moves.extend(zip(lpas, src, dest))
        return ops

    # -- completion ---------------------------------------------------------

    def _commit(self, job):
        m = self.ctx.map
        for lpa, old, new in job.moves:
            m.update_if(lpa, old, new)
        for zid in sorted(job.folded_zones):
            zone = self.ctx.zones[zid]
            if zone.regular_units >= zone.capacity_units:
                for _, b in zone.reserved_region.members:
                    self.device.superblocks[b].state = SbState.FULL
            m.try_aggregate(zid, zone.regular_units)

    def _done(self, job, t):
        p = self.partition
        p.release(job.victim)
        self.job = None
        self.now = max(self.now, t)
        gained = job.slc_copies < self.device.layout.slc_upsb
        if gained and p.free_count < self.policy.stop_threshold:
            self.start(t)


def run_slc_gc(collector, now, wait=True):
    """Collect one victim; returns (migrated pages, completion time)."""
    collector.settle()
    job = collector.start(now)
    if job is None:
        raise NoVictim(f"namespace {collector.partition.ns_id}: nothing to collect")
    if wait:
        collector.device.drain()
    migrated = sum(o.nbytes for o in job.ops if o.kind is CommandKind.PROGRAM) // UNIT_BYTES
    end = max([o.booking.end for o in job.ops if o.booking is not None], default=now)
    return migrated, end


def zone_reset(ctx, zone, now):
    """Erase the zone's regular blocks and forget all of its data."""
    if zone.state is ZoneState.EMPTY:
        return now
    ctx.gc.settle_zone(zone)
    drop_zone_buffer(ctx, zone.zone_id)
    zbase = zone.zone_id * ctx.zone_units
    ctx.map.unmap_range(zbase, zbase + zone.capacity_units)
    dev = ctx.device
    end = now
    region = zone.reserved_region
    for chip, block in region.members:
        op = dev.erase_op(chip, block, Origin.HOST, ctx.ns, "reset")
        end = max(end, dev.execute(op, now).end)
    ctx.pool.release(region)
    ctx.map.regions.pop(zone.zone_id, None)
    zone.reserved_region = None
    zone.state = ZoneState.EMPTY
    zone.host_write_pointer = 0
    zone.regular_units = 0
    zone.slc_units = 0
    zone.finished = False
    return end


def preempt_background(device, chip, now):
    """Let background commands already running by ``now`` finish first.

    Everything queued behind them waits until the host command is booked.
    """
    device.advance(now)


__all__ = ["GcDestination", "GcPolicy", "select_victim", "SlcCollector", "run_slc_gc",
           "zone_reset", "preempt_background", "OutOfSpace"]

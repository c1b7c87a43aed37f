"""The shared flash device: clocks, command execution and background queues.

Host commands are booked on the clocks the moment they are issued.
Background jobs (SLC garbage collection) are split into page commands that
wait in per-chip queues; ``advance(t)`` books every queued command that
would have started before ``t``.  A host command issued at ``t`` therefore
slots in ahead of whatever background work had not started yet, while a
background command already on the chip runs to completion.
"""

from collections import deque

from .allocator import SbState, Superblock, Region
from .errors import SimError
from .geometry import (Booking, ChipCommand, CommandKind, Origin,
                       ParallelUnitClock, PhysicalPageAddress, UNIT_BYTES,
                       book_command)

INF = float("inf")

# program accounting categories
HOST_REGULAR = "host_regular"
HOST_SLC = "host_slc"
FOLD = "fold"
GC = "gc"
CATEGORIES = (HOST_REGULAR, HOST_SLC, FOLD, GC)


class Op:
    """One page-level flash command plus what it does to the stored data."""

    __slots__ = ("kind", "origin", "chip", "ppa", "keys", "nbytes", "ns", "cause",
                 "acct", "tags", "src", "deps", "job", "issue", "booking", "slc",
                 "label", "copy")

    def __init__(self, kind, origin, ppa, chip, nbytes, ns, cause, slc, keys=(),
                 acct=None, tags=None, src=None, label=None):
        self.kind = kind
        self.origin = origin
        self.ppa = ppa
        self.chip = chip
        self.nbytes = nbytes
        self.ns = ns
        self.cause = cause
        self.slc = slc
        self.keys = keys
        self.acct = acct
        self.tags = tags
        self.src = src
        self.label = label
        self.deps = ()
        self.job = None
        self.issue = 0
        self.booking = None
        self.copy = False

    @property
    def end(self):
        return self.booking.end


class Job:
    """A migration: copy commands, then erases that wait for every copy."""

    def __init__(self, ns, on_commit=None, on_done=None):
        self.ns = ns
        self.ops = []
        self.zones = set()
        self.on_commit = on_commit
        self.on_done = on_done
        self.copies_left = 0
        self.erases_left = 0
        self.committed = False
        self.done = False
        self.end = 0


class Counters:
    """Per-namespace device-side accounting."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.programmed = dict.fromkeys(CATEGORIES, 0)
        self.write_bytes = {Region.SLC: 0, Region.REGULAR: 0}
        self.read_bytes = {Region.SLC: 0, Region.REGULAR: 0}
        self.erase_bytes = {Region.SLC: 0, Region.REGULAR: 0}
        self.erase_count = {Region.SLC: 0, Region.REGULAR: 0}
        self.program_count = {Region.SLC: 0, Region.REGULAR: 0}
        self.gc_erase_regular = 0
        self.fetch_reads = 0
        self.fetch_bytes = 0


class FlashDevice:
    def __init__(self, geometry, regular, slc, layout, preemptible=True,
                 track_data=False, log_events=False):
        self.geometry = geometry
        self.regular = regular
        self.slc = slc
        self.layout = layout
        self.clocks = ParallelUnitClock(geometry)
        self.preemptible = preemptible
        self.superblocks = [
            Superblock(i, Region.SLC if i < geometry.slc_blocks_per_chip else Region.REGULAR)
            for i in range(geometry.blocks_per_chip)
        ]
        self.queues = [deque() for _ in range(geometry.n_chips)]
        self.pending = 0
        self.content = {} if track_data else None
        self.rmap = {}  # SLC key -> (ns, lpa) for live SLC pages
        self.events = [] if log_events else None
        self.counters = {}
        self.preemptions = 0  # host commands booked ahead of queued background work

    # -- bookkeeping helpers -------------------------------------------------

    def counters_for(self, ns):
        c = self.counters.get(ns)
        if c is None:
            c = self.counters[ns] = Counters()
        return c

    def reset_counters(self):
        for c in self.counters.values():
            c.reset()

    def profile_for(self, slc):
        return self.slc if slc else self.regular

    def target(self, key):
        return self.layout.to_ppa(key)

    # -- op constructors ------------------------------------------------------

    def program_op(self, keys, origin, ns, acct, tags=None, src=None, cause=None):
        lay = self.layout
        first = keys[0]
        slc = lay.is_slc_key(first)
        return Op(CommandKind.PROGRAM, origin, lay.to_ppa(first), lay.chip_of(first),
                  len(keys) * UNIT_BYTES, ns, cause, slc, keys=keys, acct=acct,
                  tags=tags, src=src)

    def read_op(self, keys, origin, ns, cause=None):
        lay = self.layout
        first = keys[0]
        return Op(CommandKind.READ, origin, lay.to_ppa(first), lay.chip_of(first),
                  len(keys) * UNIT_BYTES, ns, cause, lay.is_slc_key(first), keys=keys)

    def erase_op(self, chip, block, origin, ns, cause):
        lay = self.layout
        ppa = PhysicalPageAddress(chip % lay.channels, chip // lay.channels, block, 0)
        slc = lay.is_slc_block(block)
        units = lay.slc_units_per_block if slc else lay.reg_units_per_block
        return Op(CommandKind.ERASE, origin, ppa, chip, units * UNIT_BYTES, ns, cause, slc)

    def meta_read_op(self, table_page, ns):
        lay = self.layout
        chip = table_page % lay.n_chips
        ppa = PhysicalPageAddress(chip % lay.channels, chip // lay.channels, 0, 0)
        return Op(CommandKind.READ, Origin.HOST, ppa, chip, UNIT_BYTES, ns, "meta", True,
                  label=f"meta:{table_page}")

    # -- execution ------------------------------------------------------------

    def execute(self, op, issue):
        """Book ``op`` on the clocks now and apply its effect on stored data."""
        op.issue = issue
        if op.origin is Origin.HOST and self.queues[op.chip]:
            self.preemptions += 1
        payload = op.nbytes if op.kind is not CommandKind.ERASE else 0
        cmd = ChipCommand(op.kind, op.origin, op.ppa, payload, issue, ns=op.ns,
                          cause=op.cause, label=op.label)
        b = book_command(cmd, self.clocks, self.profile_for(op.slc))
        op.booking = b
        self._apply(op)
        self._account(op)
        if self.events is not None:
            self.events.append((b.start, op.chip, op.origin.value, op.kind.value,
                                op.label or "%d:%d:%d:%d" % op.ppa, op.nbytes,
                                op.ns, op.cause))
        return b

    def _apply(self, op):
        store = self.content
        if store is None:
            return
        if op.kind is CommandKind.PROGRAM:
            tags = op.tags
            if op.src is not None:
                # src entries >= 0 copy a stored page, -1 takes the given tag
                if tags is None:
                    tags = [None] * len(op.src)
                tags = [store.get(s) if s >= 0 else t for s, t in zip(op.src, tags)]
            elif tags is None:
                tags = [None] * len(op.keys)
            for k, tag in zip(op.keys, tags):
                if k in store:
                    raise SimError(f"page {self.layout.to_ppa(k)} programmed twice without erase")
                store[k] = tag
        elif op.kind is CommandKind.READ and op.keys:
            op.tags = [store.get(k) for k in op.keys]
        elif op.kind is CommandKind.ERASE:
            for k in self.layout.block_keys(op.chip, op.ppa.block):
                store.pop(k, None)

    def _account(self, op):
        c = self.counters_for(op.ns)
        region = Region.SLC if op.slc else Region.REGULAR
        if op.kind is CommandKind.PROGRAM:
            c.write_bytes[region] += op.nbytes
            c.program_count[region] += 1
            for cat, n in op.acct.items():
                c.programmed[cat] += n
        elif op.kind is CommandKind.READ:
            if op.cause == "meta":
                c.fetch_reads += 1
                c.fetch_bytes += op.nbytes
            else:
                c.read_bytes[region] += op.nbytes
        else:
            c.erase_bytes[region] += op.nbytes
            c.erase_count[region] += 1
            if region is Region.REGULAR and op.cause == "gc":
                c.gc_erase_regular += 1

    # -- background jobs ------------------------------------------------------

    def submit(self, job, now):
        """Queue a migration job whose ops carry their dependencies."""
        for op in job.ops:
            op.job = job
            op.issue = now
            if op.kind is CommandKind.ERASE:
                job.erases_left += 1
            else:
                if op.kind is CommandKind.PROGRAM:
                    op.copy = True
                job.copies_left += 1
        if job.copies_left == 0:
            self._commit(job)
        if not job.ops:
            self._finish(job, now)
            return
        for op in job.ops:
            self.queues[op.chip].append(op)
            self.pending += 1
        if not self.preemptible:
            self.drain()

    def _ready(self, op):
        t = op.issue
        for d in op.deps:
            if d.booking is None:
                return None
            if d.booking.end > t:
                t = d.booking.end
        return t

    def advance(self, t):
        """Book queued background commands that would start before ``t``."""
        while self.pending:
            best = None
            best_start = None
            for chip, q in enumerate(self.queues):
                if not q:
                    continue
                op = q[0]
                ready = self._ready(op)
                if ready is None:
                    continue
                start = self.clocks.peek_start(op.kind, chip, ready)
                if start < t and (best is None or start < best_start):
                    best, best_start = op, start
            if best is None:
                return
            self._dispatch(best)

    def drain(self):
        self.advance(INF)

    def _dispatch(self, op):
        self.queues[op.chip].popleft()
        self.pending -= 1
        self.execute(op, self._ready(op))
        job = op.job
        if op.kind is CommandKind.ERASE:
            job.erases_left -= 1
            job.end = max(job.end, op.booking.end)
            if job.erases_left == 0:
                self._finish(job, job.end)
        else:
            job.copies_left -= 1
            job.end = max(job.end, op.booking.end)
            if job.copies_left == 0:
                self._commit(job)

    def _commit(self, job):
        if not job.committed:
            job.committed = True
            if job.on_commit:
                job.on_commit(job)

    def _finish(self, job, t):
        if not job.done:
            job.done = True
            if job.on_done:
                job.on_done(job, t)

    # -- state helpers used by tests and reports -----------------------------

    def superblock(self, sb_id):
        return self.superblocks[sb_id]

    def valid_counts(self):
        return [sb.valid_page_count for sb in self.superblocks]

    def migrating(self):
        return [sb.id for sb in self.superblocks if sb.state is SbState.MIGRATING]


class HostLink:
    """Serialized host interface; bandwidth 0 makes transfers free."""

    def __init__(self, bandwidth):
        self.bandwidth = bandwidth
        self.free = 0

    def transfer(self, now, nbytes):
        if not self.bandwidth:
            return now
        bw = self.bandwidth
        start = max(now, self.free)
        self.free = start + (nbytes * 1_000_000_000 + bw - 1) // bw
        return self.free


def write_events(events, fh):
    fh.write("time,unit,origin,kind,ppa,bytes\n")
    for e in events:
        fh.write("%d,%d,%s,%s,%s,%d\n" % e[:6])


__all__ = ["FlashDevice", "HostLink", "Op", "Job", "Counters", "Booking", "write_events",
           "HOST_REGULAR", "HOST_SLC", "FOLD", "GC", "CATEGORIES"]

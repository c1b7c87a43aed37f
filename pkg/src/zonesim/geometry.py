"""Flash geometry, media profiles and the per-parallel-unit timing model.

Every clock value is an integer number of nanoseconds starting at 0.  A
channel is busy while data moves over it; a chip is busy while its cells
sense, program or erase.  Reads sense first and then transfer, programs
transfer first and then program.
"""

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

from .errors import AddressError, ConfigInvalid

KIB = 1024
MIB = 1024 * KIB
GIB = 1024 * MIB

# Host logical page, mapping-table unit and SLC partial-program unit.
UNIT_BYTES = 4 * KIB


class CellKind(str, Enum):
    SLC = "SLC"
    TLC = "TLC"
    QLC = "QLC"


BITS_PER_CELL = {CellKind.SLC: 1, CellKind.TLC: 3, CellKind.QLC: 4}

# Defaults per media type, microseconds: (program, read, erase).
# Erase times are assumed values; see README.
DEFAULT_LATENCY_US = {
    CellKind.SLC: (75.0, 20.0, 2000.0),
    CellKind.TLC: (937.5, 32.0, 3000.0),
    CellKind.QLC: (6400.0, 85.0, 5000.0),
}


def us_to_ns(us):
    ns = round(us * 1000)
    if abs(ns - us * 1000) > 1e-6:
        raise ConfigInvalid(f"latency {us} us is not a whole number of nanoseconds")
    return int(ns)


@dataclass(frozen=True)
class MediaProfile:
    cell_kind: CellKind
    program_latency: int  # ns per programming unit
    read_latency: int  # ns per page
    erase_latency: int  # ns per block

    @classmethod
    def default(cls, kind, program_us=None, read_us=None, erase_us=None):
        kind = CellKind(kind)
        p, r, e = DEFAULT_LATENCY_US[kind]
        return cls(
            kind,
            us_to_ns(p if program_us is None else program_us),
            us_to_ns(r if read_us is None else read_us),
            us_to_ns(e if erase_us is None else erase_us),
        )

    @property
    def bits_per_cell(self):
        return BITS_PER_CELL[self.cell_kind]

    @property
    def partial_program_allowed(self):
        return self.cell_kind is CellKind.SLC

    @property
    def min_program_pages(self):
        return 1 if self.cell_kind is CellKind.SLC else self.bits_per_cell


@dataclass(frozen=True)
class FlashGeometry:
    channels: int
    chips_per_channel: int
    blocks_per_chip: int
    pages_per_block: int  # regular-density pages
    page_size: int
    channel_bandwidth: int  # bytes per second
    slc_blocks_per_chip: int
    planes: int = 1

    def validate(self):
        for name in ("channels", "chips_per_channel", "blocks_per_chip",
                     "pages_per_block", "page_size", "channel_bandwidth", "planes"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"geometry.{name} must be >= 1")
        if self.page_size < UNIT_BYTES or self.page_size % UNIT_BYTES:
            raise ConfigInvalid("geometry.page_size must be a multiple of 4096")
        if not 0 <= self.slc_blocks_per_chip < self.blocks_per_chip:
            raise ConfigInvalid("geometry.slc_blocks_per_chip must be < blocks_per_chip")
        return self

    @property
    def n_chips(self):
        return self.channels * self.chips_per_channel

    @property
    def superblock_count(self):
        return self.blocks_per_chip

    @property
    def units_per_page(self):
        return self.page_size // UNIT_BYTES


def effective_pages(profile, geometry, regular=None):
    """Pages per block when a block of ``regular`` media runs as ``profile``.

    SLC-mode blocks are converted regular blocks, so they keep only
    ``1 / bits_per_cell`` of the regular page count.
    """
    if profile.cell_kind is CellKind.SLC:
        if regular is None or regular.cell_kind is CellKind.SLC:
            return geometry.pages_per_block
        return geometry.pages_per_block // regular.bits_per_cell
    return geometry.pages_per_block


def program_granularity_bytes(geometry, profile):
    return geometry.page_size * profile.min_program_pages * geometry.planes


def stripe_unit_bytes(geometry, profile):
    return program_granularity_bytes(geometry, profile) * geometry.n_chips


class PhysicalPageAddress(NamedTuple):
    """``page`` indexes 4 KiB slots inside the block."""

    channel: int
    chip: int
    block: int
    page: int


class ParallelUnitClock:
    def __init__(self, geometry):
        self.geometry = geometry
        self.channel_free = [0] * geometry.channels
        self.chip_free = [0] * geometry.n_chips

    def transfer_ns(self, nbytes):
        bw = self.geometry.channel_bandwidth
        return (nbytes * 1_000_000_000 + bw - 1) // bw

    def chip_index(self, target):
        g = self.geometry
        if not (0 <= target.channel < g.channels and 0 <= target.chip < g.chips_per_channel
                and 0 <= target.block < g.blocks_per_chip):
            raise AddressError(f"command addressed outside geometry: {target}")
        return target.chip * g.channels + target.channel

    def peek_start(self, kind, chip, ready):
        start = max(ready, self.chip_free[chip])
        if kind is CommandKind.PROGRAM:
            start = max(start, self.channel_free[chip % self.geometry.channels])
        return start

    def snapshot(self):
        return list(self.channel_free), list(self.chip_free)


class CommandKind(str, Enum):
    READ = "READ"
    PROGRAM = "PROGRAM"
    ERASE = "ERASE"


class Origin(str, Enum):
    HOST = "HOST"
    BACKGROUND = "BACKGROUND"


@dataclass
class ChipCommand:
    kind: CommandKind
    origin: Origin
    target: PhysicalPageAddress
    payload_bytes: int
    issue_time: int
    ns: int = 0
    cause: Optional[str] = None
    label: Optional[str] = None  # event-log override for the ppa column

    def __post_init__(self):
        if self.kind is not CommandKind.ERASE and self.payload_bytes <= 0:
            raise AddressError(f"{self.kind.value} needs a positive payload")


class Booking(NamedTuple):
    start: int
    xfer_start: int
    xfer_end: int
    end: int
    media_start: int  # when the chip itself becomes busy


def book_command(cmd, clocks, profile):
    """Reserve chip and channel time for ``cmd`` and advance both clocks."""
    c = clocks.chip_index(cmd.target)
    ch = cmd.target.channel
    if cmd.kind is CommandKind.READ:
        start = max(cmd.issue_time, clocks.chip_free[c])
        sensed = start + profile.read_latency
        xs = max(sensed, clocks.channel_free[ch])
        xe = xs + clocks.transfer_ns(cmd.payload_bytes)
        clocks.chip_free[c] = xe
        clocks.channel_free[ch] = xe
        return Booking(start, xs, xe, xe, start)
    if cmd.kind is CommandKind.PROGRAM:
        # the page register belongs to the chip: no transfer into a busy chip
        xs = max(cmd.issue_time, clocks.channel_free[ch], clocks.chip_free[c])
        xe = xs + clocks.transfer_ns(cmd.payload_bytes)
        ms = xe
        end = ms + profile.program_latency
        clocks.channel_free[ch] = xe
        clocks.chip_free[c] = end
        return Booking(xs, xs, xe, end, ms)
    start = max(cmd.issue_time, clocks.chip_free[c])
    end = start + profile.erase_latency
    clocks.chip_free[c] = end
    return Booking(start, start, start, end, start)


def schedule_command(cmd, clocks, profile):
    return book_command(cmd, clocks, profile).end

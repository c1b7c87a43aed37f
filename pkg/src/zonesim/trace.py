"""CSV trace format: ``timestamp_ns,ns,op,lba,len,synced`` with ``#`` comments."""

import csv
import io
from dataclasses import dataclass

from .errors import TraceParseError
from .geometry import UNIT_BYTES

OPS = ("READ", "WRITE", "FLUSH", "ZONE_RESET", "ZONE_FINISH")
HEADER = "timestamp_ns,ns,op,lba,len,synced"


@dataclass(frozen=True)
class TraceRecord:
    timestamp: int
    ns_id: int
    op: str
    lba: int = 0
    len: int = 0
    synced: bool = False

    def to_csv(self):
        return f"{self.timestamp},{self.ns_id},{self.op},{self.lba},{self.len},{int(self.synced)}"


_TRUE = {"1", "true", "yes", "y"}
_FALSE = {"0", "false", "no", "n", ""}


def _int(text, what, line):
    try:
        v = int(text, 0)
    except ValueError:
        raise TraceParseError(f"{what} {text!r} is not an integer", line) from None
    if v < 0:
        raise TraceParseError(f"{what} must be >= 0", line)
    return v


def parse_line(fields, line):
    if len(fields) not in (5, 6):
        raise TraceParseError(f"expected 6 fields, got {len(fields)}", line)
    fields = [f.strip() for f in fields]
    ts = _int(fields[0], "timestamp", line)
    ns = _int(fields[1], "ns", line)
    op = fields[2].upper()
    if op not in OPS:
        raise TraceParseError(f"unknown op {fields[2]!r}", line)
    lba = _int(fields[3], "lba", line)
    length = _int(fields[4], "len", line)
    flag = fields[5].lower() if len(fields) == 6 else ""
    if flag in _TRUE:
        synced = True
    elif flag in _FALSE:
        synced = False
    else:
        raise TraceParseError(f"synced flag {fields[5]!r} is not 0/1", line)
    if op in ("READ", "WRITE") and (length == 0 or length % UNIT_BYTES):
        raise TraceParseError(f"len {length} must be a positive multiple of 4096", line)
    return TraceRecord(ts, ns, op, lba, length, synced)


def parse_trace(source):
    """Parse CSV text, a file object or a path into a list of records."""
    if isinstance(source, str) and source and "\n" not in source and not source.startswith("#"):
        with open(source, newline="") as fh:
            return parse_trace(fh)
    if isinstance(source, str):
        source = io.StringIO(source)
    records = []
    last = 0
    for lineno, row in enumerate(csv.reader(source), start=1):
        if not row or not "".join(row).strip():
            continue
        if row[0].lstrip().startswith("#"):
            continue
        if not records and row[0].strip() == "timestamp_ns":
            continue  # header
        rec = parse_line(row, lineno)
        if rec.timestamp < last:
            raise TraceParseError("records must be sorted by timestamp", lineno)
        last = rec.timestamp
        records.append(rec)
    return records


def format_trace(records, comment=None):
    out = []
    if comment:
        out.extend(f"# {c}" for c in comment.splitlines())
    out.append(HEADER)
    out.extend(r.to_csv() for r in records)
    return "\n".join(out) + "\n"


def write_trace(records, path, comment=None):
    with open(path, "w") as fh:
        fh.write(format_trace(records, comment))

"""YAML configuration with every reference default pre-filled."""

import copy
import re
from dataclasses import dataclass, field

import yaml

from .errors import ConfigInvalid
from .gc import GcDestination, GcPolicy
from .geometry import CellKind, FlashGeometry, MediaProfile
from .mapping import MissStrategy
from .namespace import DeviceOptions, NamespaceConfig, NsKind
from .write_path import BufferPolicy

# Two channels with two chips each, 16 KiB pages, two-plane TLC programs
# (96 KiB per chip), 12 MiB superblocks and 4 MiB SLC superblocks.
DEFAULTS = {
    "geometry": {
        "channels": 2,
        "chips_per_channel": 2,
        "blocks_per_chip": 376,
        "pages_per_block": 192,
        "page_size": "16KiB",
        "planes": 2,
        "channel_bandwidth": "3200MiB",
        "slc_blocks_per_chip": 32,
    },
    "media": {
        "regular": "TLC",
        "latency_us": {},
    },
    "buffers": {
        "count": 2,
        "size": "384KiB",
        "policy": "FULLY_ASSOCIATIVE",
        "buffer_all_in_slc": False,
    },
    "cache": {
        "capacity": "1MiB",
        "entry_size": 8,
        "buckets": 1024,
        "miss_strategy": "MULTIPLE",
        "hybrid": True,
        "pin_zone_entries": False,
        "chunk_size": "4MiB",
    },
    "gc": {
        "trigger_threshold": 2,
        "stop_threshold": 3,
        "destination": "IN_SLC",
        "preemptible": True,
    },
    "zones": {
        "sub_block_mode": False,
        "blocks_per_zone": None,
    },
    "host": {
        "queue_depth": 32,
        "link_bandwidth": "3200MiB",
    },
    "namespaces": [
        {"id": 0, "kind": "BLOCK", "logical_size": "64MiB", "physical_size": "72MiB"},
        {"id": 1, "kind": "ZONED", "logical_size": "4092MiB", "physical_size": "4148MiB"},
    ],
    "sim": {
        "seed": 0,
        "track_data": False,
        "op_ratio": 0.125,
    },
}

_UNITS = {"": 1, "B": 1, "K": 1024, "KB": 1024, "KIB": 1024, "M": 1024 ** 2, "MB": 1024 ** 2,
          "MIB": 1024 ** 2, "G": 1024 ** 3, "GB": 1024 ** 3, "GIB": 1024 ** 3,
          "T": 1024 ** 4, "TB": 1024 ** 4, "TIB": 1024 ** 4}
_SIZE_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([A-Za-z]*)\s*$")


def parse_size(value, what="size"):
    """``4096``, ``"16KiB"`` or ``"1.5 MiB"`` to bytes (binary units)."""
    if isinstance(value, bool):
        raise ConfigInvalid(f"{what}: expected a size, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    m = _SIZE_RE.match(str(value))
    if not m or m.group(2).upper() not in _UNITS:
        raise ConfigInvalid(f"{what}: cannot parse size {value!r}")
    n = float(m.group(1)) * _UNITS[m.group(2).upper()]
    if not n.is_integer():
        raise ConfigInvalid(f"{what}: {value!r} is not a whole number of bytes")
    return int(n)


def _merge(base, over, path=""):
    if not isinstance(over, dict):
        raise ConfigInvalid(f"{path or 'config'}: expected a mapping")
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigInvalid(f"unknown configuration key {where}")
        if isinstance(base[k], dict) and k != "latency_us":
            out[k] = _merge(base[k], v or {}, where)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class SimConfig:
    geometry: FlashGeometry
    regular: MediaProfile
    slc: MediaProfile
    options: DeviceOptions
    namespaces: list
    queue_depth: int = 32
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def profiles(self):
        return (self.regular, self.slc)


def _enum(cls, value, what):
    try:
        return cls(str(value).upper())
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise ConfigInvalid(f"{what}: {value!r} is not one of {allowed}") from None


def _profile(kind, lat):
    over = lat.get(kind.value, {}) or {}
    unknown = set(over) - {"program", "read", "erase"}
    if unknown:
        raise ConfigInvalid(f"media.latency_us.{kind.value}: unknown keys {sorted(unknown)}")
    return MediaProfile.default(kind, over.get("program"), over.get("read"), over.get("erase"))


def build_config(data=None):
    """Merge ``data`` over the defaults and build a validated SimConfig."""
    d = _merge(DEFAULTS, data or {})
    g = d["geometry"]
    try:
        geometry = FlashGeometry(
            channels=int(g["channels"]),
            chips_per_channel=int(g["chips_per_channel"]),
            blocks_per_chip=int(g["blocks_per_chip"]),
            pages_per_block=int(g["pages_per_block"]),
            page_size=parse_size(g["page_size"], "geometry.page_size"),
            channel_bandwidth=parse_size(g["channel_bandwidth"], "geometry.channel_bandwidth"),
            slc_blocks_per_chip=int(g["slc_blocks_per_chip"]),
            planes=int(g["planes"]),
        ).validate()
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(f"geometry: {e}") from None
    kind = _enum(CellKind, d["media"]["regular"], "media.regular")
    if kind is CellKind.SLC:
        raise ConfigInvalid("media.regular must be TLC or QLC")
    lat = {str(k).upper(): v for k, v in (d["media"]["latency_us"] or {}).items()}
    regular = _profile(kind, lat)
    slc = _profile(CellKind.SLC, lat)
    b, c, gc, z, h, s = (d[k] for k in ("buffers", "cache", "gc", "zones", "host", "sim"))
    policy = GcPolicy(
        trigger_threshold=int(gc["trigger_threshold"]),
        stop_threshold=int(gc["stop_threshold"]),
        destination=_enum(GcDestination, gc["destination"], "gc.destination"),
        preemptible=bool(gc["preemptible"]),
    )
    if policy.trigger_threshold < 1 or policy.stop_threshold < policy.trigger_threshold:
        raise ConfigInvalid("gc thresholds must satisfy 1 <= trigger_threshold <= stop_threshold")
    options = DeviceOptions(
        buffer_count=int(b["count"]),
        buffer_size=parse_size(b["size"], "buffers.size"),
        buffer_policy=_enum(BufferPolicy, b["policy"], "buffers.policy"),
        buffer_all_in_slc=bool(b["buffer_all_in_slc"]),
        cache_capacity=parse_size(c["capacity"], "cache.capacity"),
        cache_entry_size=int(c["entry_size"]),
        cache_buckets=int(c["buckets"]),
        miss_strategy=_enum(MissStrategy, c["miss_strategy"], "cache.miss_strategy"),
        hybrid_mapping=bool(c["hybrid"]),
        pin_zone_entries=bool(c["pin_zone_entries"]),
        chunk_size=parse_size(c["chunk_size"], "cache.chunk_size"),
        gc=policy,
        sub_block_mode=bool(z["sub_block_mode"]),
        blocks_per_zone=None if z["blocks_per_zone"] is None else int(z["blocks_per_zone"]),
        op_ratio=float(s["op_ratio"]),
        host_link_bandwidth=parse_size(h["link_bandwidth"], "host.link_bandwidth"),
        track_data=bool(s["track_data"]),
    )
    if options.cache_entry_size < 1 or options.cache_buckets < 1:
        raise ConfigInvalid("cache.entry_size and cache.buckets must be >= 1")
    if int(h["queue_depth"]) < 1:
        raise ConfigInvalid("host.queue_depth must be >= 1")
    namespaces = []
    if not isinstance(d["namespaces"], list) or not d["namespaces"]:
        raise ConfigInvalid("namespaces must be a non-empty list")
    for i, ns in enumerate(d["namespaces"]):
        unknown = set(ns) - {"id", "kind", "logical_size", "physical_size"}
        if unknown:
            raise ConfigInvalid(f"namespaces[{i}]: unknown keys {sorted(unknown)}")
        try:
            namespaces.append(NamespaceConfig(
                int(ns["id"]), _enum(NsKind, ns["kind"], f"namespaces[{i}].kind"),
                parse_size(ns["logical_size"], f"namespaces[{i}].logical_size"),
                parse_size(ns["physical_size"], f"namespaces[{i}].physical_size")))
        except KeyError as e:
            raise ConfigInvalid(f"namespaces[{i}]: missing {e.args[0]}") from None
    cfg = SimConfig(geometry, regular, slc, options, namespaces,
                    queue_depth=int(h["queue_depth"]), seed=int(s["seed"]), raw=d)
    # build once so namespace arithmetic is checked at load time
    from .namespace import init_device
    init_device(cfg.namespaces, cfg.geometry, cfg.profiles, cfg.options)
    return cfg


def load_config(path=None):
    if path is None:
        return build_config({})
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        raise ConfigInvalid(f"{path}: {e}") from None
    return build_config(data or {})


def dump_config(data=None):
    return yaml.safe_dump(_merge(DEFAULTS, data or {}), sort_keys=False)


# Small device used by the property tests: 2 x 2 chips, 8 blocks per chip
# (4 of them SLC), 4 KiB pages and 24-page blocks.
SMALL = {
    "geometry": {
        "channels": 2, "chips_per_channel": 2, "blocks_per_chip": 8,
        "pages_per_block": 24, "page_size": "4KiB", "planes": 1,
        "slc_blocks_per_chip": 4,
    },
    "buffers": {"count": 2, "size": "48KiB"},
    "cache": {"capacity": "2KiB", "chunk_size": "64KiB"},
    "namespaces": [
        {"id": 0, "kind": "BLOCK", "logical_size": "64KiB", "physical_size": "256KiB"},
        {"id": 1, "kind": "ZONED", "logical_size": "1536KiB", "physical_size": "1792KiB"},
    ],
}

"""Command line entry point: ``zonesim run | gen | validate``."""

import argparse
import sys

import yaml

from .config import load_config
from .errors import SimError
from .sim import run_trace
from .stats import emit_report
from .trace import format_trace
from .workloads import KINDS, generate_workload, shape_of


def _params(items):
    """``key=value`` pairs; values go through YAML so 1, true, [0, 2] work."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise SimError(f"bad --param {item!r}, expected key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def _write(path, data):
    if path in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def cmd_run(args):
    rep = run_trace(args.config, args.trace, events_path=args.events,
                    final_flush=not args.no_final_flush)
    _write(args.out, emit_report(rep, args.format))
    return 0


def cmd_gen(args):
    cfg = load_config(args.config)
    params = _params(args.param)
    kind = args.kind.upper()
    if kind in ("RAND_READ_RANGE", "MULTI_STREAM"):
        params.setdefault("seed", cfg.seed if args.seed is None else args.seed)
    ns = args.ns
    if ns is None:
        zoned = [c.ns_id for c in cfg.namespaces if c.kind.value == "ZONED"]
        ns = zoned[0] if zoned else cfg.namespaces[0].ns_id
    recs = generate_workload(kind, params, shape_of(cfg, ns))
    _write(args.out, format_trace(recs).encode())
    return 0


def cmd_validate(args):
    cfg = load_config(args.config)
    lines = [f"ok: {len(cfg.namespaces)} namespace(s), "
             f"{cfg.geometry.n_chips} chips, {cfg.regular.cell_kind.value} regular media"]
    for c in cfg.namespaces:
        lines.append(f"  ns {c.ns_id} {c.kind.value}: logical {c.logical_size} B, "
                     f"physical {c.physical_size} B")
    _write(args.out, ("\n".join(lines) + "\n").encode())
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="zonesim", description="Zoned flash storage simulator")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="replay a trace and report metrics")
    r.add_argument("--config", help="YAML configuration (defaults if omitted)")
    r.add_argument("--trace", required=True, help="trace CSV, or - for stdin")
    r.add_argument("--out", help="report destination (stdout if omitted)")
    r.add_argument("--format", default="json", choices=("json", "csv", "human"))
    r.add_argument("--events", help="write the flash command log here")
    r.add_argument("--seed", type=int, help="accepted for symmetry; replay is seed-free")
    r.add_argument("--no-final-flush", action="store_true",
                   help="do not flush write buffers at the end of the trace")
    r.set_defaults(fn=cmd_run)

    g = sub.add_parser("gen", help="generate a synthetic workload trace")
    g.add_argument("kind", choices=KINDS, type=str.upper)
    g.add_argument("--config", help="YAML configuration (sizes the namespace)")
    g.add_argument("--ns", type=int, help="target namespace id (first zoned one by default)")
    g.add_argument("--seed", type=int)
    g.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="generator argument, repeatable")
    g.add_argument("--out", help="trace destination (stdout if omitted)")
    g.set_defaults(fn=cmd_gen)

    v = sub.add_parser("validate", help="check a configuration file")
    v.add_argument("--config", help="YAML configuration")
    v.add_argument("--out")
    v.set_defaults(fn=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "trace", None) == "-":
        args.trace = sys.stdin
    try:
        return args.fn(args)
    except (SimError, OSError) as e:
        print(f"zonesim: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

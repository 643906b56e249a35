"""Command-line front end.

Three subcommands: ``run`` simulates one training iteration and reports
it, ``sweep`` repeats a run across batch sizes or pool capacities, and
``gen-resnet`` emits a generated residual network definition.  Exit code
2 means the request itself was rejected (bad arguments, bad network,
pool below the schedulable floor); exit code 3 means the schedule could
not be executed in the configured pool.
"""

from __future__ import annotations

import argparse
import configparser
import re
import sys
from dataclasses import fields, replace
from importlib import resources
from pathlib import Path

from . import report as rep
from .costmodel import CostConfig
from .errors import ConfigError, MemschedError, SchedulingError
from .netgen import resnet_text
from .netgraph import NetworkDef, load_network, parse_network
from .simulator import (
    SWEEP_AXES,
    SimConfig,
    parse_features,
    run_simulation,
    run_sweep,
)

_SIZE_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([KMGT]I?B|B)?\s*$",
                      re.IGNORECASE)
_SIZE_UNITS = {
    None: 1, "B": 1,
    "KB": 10 ** 3, "MB": 10 ** 6, "GB": 10 ** 9, "TB": 10 ** 12,
    "KIB": 2 ** 10, "MIB": 2 ** 20, "GIB": 2 ** 30, "TIB": 2 ** 40,
}


def parse_size(text: str) -> int:
    """Parse a byte size with optional decimal or binary unit suffix."""
    m = _SIZE_RE.match(text)
    if not m:
        raise ConfigError(f"cannot parse size {text!r}")
    value, unit = m.groups()
    scale = _SIZE_UNITS[unit.upper() if unit else None]
    return int(float(value) * scale)


def bundled_fixtures() -> list[str]:
    root = resources.files("memsched") / "fixtures"
    return sorted(p.name[: -len(".net")] for p in root.iterdir()
                  if p.name.endswith(".net"))


def resolve_network(spec: str) -> NetworkDef:
    """Load a network from a file path or a bundled fixture name."""
    path = Path(spec)
    if path.exists():
        return load_network(path)
    fixture = resources.files("memsched") / "fixtures" / f"{spec}.net"
    if fixture.is_file():
        return parse_network(fixture.read_text(), name=spec)
    raise ConfigError(
        f"network {spec!r} is neither a file nor a bundled fixture "
        f"(bundled: {', '.join(bundled_fixtures())})")


_RUN_KEYS = ("net", "batch", "pool", "features", "report")
_COST_FLOAT_KEYS = ("time_per_elem", "heavy_time_per_elem",
                    "backward_time_factor", "bandwidth_bytes_per_s")


def load_config_file(path: str) -> dict:
    """Read defaults from an INI file with [run] and [cost] sections."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    out: dict = {}
    known = {name.lower() for name in _RUN_KEYS}
    if parser.has_section("run"):
        for key, value in parser.items("run"):
            if key not in known:
                raise ConfigError(f"unknown [run] option {key!r}")
            out[key] = value
    if parser.has_section("cost"):
        cost: dict = {}
        for key, value in parser.items("cost"):
            if key == "dtype_bytes":
                cost[key] = int(value)
            elif key in _COST_FLOAT_KEYS:
                cost[key] = float(value)
            else:
                raise ConfigError(f"unknown [cost] option {key!r}")
        out["cost"] = cost
    extra = set(parser.sections()) - {"run", "cost"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    return out


def _merge_settings(args: argparse.Namespace) -> tuple[str, SimConfig, str]:
    settings = load_config_file(args.config) if args.config else {}
    net_spec = args.net or settings.get("net")
    if not net_spec:
        raise ConfigError("no network given (use --net or a config file)")
    pool_text = args.pool or settings.get("pool")
    if not pool_text:
        raise ConfigError("no pool size given (use --pool)")
    feature_text = args.features if args.features is not None \
        else settings.get("features", "")
    batch = args.batch if args.batch is not None \
        else int(settings.get("batch", CostConfig().batch))
    cost = CostConfig(batch=batch, **settings.get("cost", {}))
    fmt = args.report or settings.get("report", "table")
    if fmt not in rep.FORMATS:
        raise ConfigError(
            f"unknown report format {fmt!r}, expected one of {rep.FORMATS}")
    config = SimConfig(pool_bytes=parse_size(pool_text),
                       features=parse_features(feature_text),
                       cost=cost)
    return net_spec, config, fmt


def _int_list(text: str, what: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise ConfigError(f"{what} needs comma-separated integers, "
                          f"got {text!r}") from None


def _emit(text: str, out: str | None) -> Path | None:
    if out is None:
        sys.stdout.write(text)
        return None
    path = Path(out)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _want_plots(args: argparse.Namespace) -> bool:
    if args.no_plot:
        return False
    if args.plot and not args.out:
        raise ConfigError("--plot needs --out to name the figure files")
    return bool(args.out)


def cmd_run(args: argparse.Namespace) -> int:
    net_spec, config, fmt = _merge_settings(args)
    net = resolve_network(net_spec)
    report = run_simulation(net, config)
    path = _emit(rep.render(report, fmt), args.out)
    if _want_plots(args):
        assert path is not None
        figure = rep.render_timeline(report, path.with_suffix(""))
        print(f"report written to {path}, figure to {figure}",
              file=sys.stderr)
    elif path is not None:
        print(f"report written to {path}", file=sys.stderr)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    net_spec, config, fmt = _merge_settings(args)
    net = resolve_network(net_spec)
    if args.axis == "batch":
        values = _int_list(args.values, "--values")
    else:
        values = [parse_size(v) for v in args.values.split(",") if v]
    points = run_sweep(net, config, args.axis, values)
    path = _emit(rep.render_sweep(points, fmt), args.out)
    if _want_plots(args):
        assert path is not None
        figure = rep.render_sweep_plot(points, path.with_suffix(""))
        print(f"sweep written to {path}, figure to {figure}",
              file=sys.stderr)
    elif path is not None:
        print(f"sweep written to {path}", file=sys.stderr)
    return 0


def cmd_gen_resnet(args: argparse.Namespace) -> int:
    blocks = _int_list(args.blocks, "--blocks")
    if len(blocks) != 4:
        raise ConfigError(
            f"--blocks needs four comma-separated counts, got {args.blocks!r}")
    text = resnet_text(*blocks, num_classes=args.classes)
    net = parse_network(text)
    depth = 3 * sum(blocks) + 2
    _emit(text, args.out)
    print(f"generated depth-{depth} network with {len(net)} layers",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memsched",
        description="deterministic memory-schedule simulator for "
                    "CNN training")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--net", help="network file or bundled fixture name")
        p.add_argument("--batch", type=int, default=None,
                       help="batch size (default 200)")
        p.add_argument("--pool", help="pool capacity, e.g. 2GiB or 1500MB")
        p.add_argument("--features", default=None,
                       help="comma list: liveness,offload,cache,"
                            "recompute=POLICY,convselect")
        p.add_argument("--config", help="INI file with [run]/[cost] defaults")
        p.add_argument("--report", choices=rep.FORMATS, default=None,
                       help="output format (default table)")
        p.add_argument("--out", help="write the report to this file")
        p.add_argument("--plot", action="store_true",
                       help="render figures next to --out (the default "
                            "when --out is given)")
        p.add_argument("--no-plot", action="store_true",
                       help="skip figure rendering")

    p_run = sub.add_parser("run", help="simulate one training iteration")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="repeat a run across one axis")
    common(p_sweep)
    p_sweep.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_gen = sub.add_parser("gen-resnet",
                           help="emit a residual network definition")
    p_gen.add_argument("--blocks", default="2,2,2,2",
                       help="blocks per stage, four comma-separated counts")
    p_gen.add_argument("--classes", type=int, default=1000)
    p_gen.add_argument("--out", help="write the network here (else stdout)")
    p_gen.set_defaults(func=cmd_gen_resnet)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchedulingError as exc:
        print(f"memsched: scheduling failed: {exc}", file=sys.stderr)
        return 3
    except MemschedError as exc:
        print(f"memsched: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

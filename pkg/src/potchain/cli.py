"""Command line entry point: ``potchain <command> [flags]``.

Exit codes: 0 success, 1 validation findings, 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from .chain import Identity, read_snapshot, validate_chain, write_snapshot
from .chain.codec import DecodeError
from .contracts import FixedGroups, FullMistrust, GroupsOf, fraud_resilience
from .sim import ConfigInvalid, Metrics, Simulation, build_config, export, load_scenario, parse_config_text, parse_scenario
from .storage import StorageParams, StorageScenario, breakeven, designated_gcn, prune, storage_series, verify_prune, write_series_csv

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE = 0, 1, 2

# curve label -> grouping of the shuffle-resilience chart
SHUFFLE_CURVES = {
    "delta": FullMistrust(),
    "epsilon": GroupsOf(2),
    "theta": GroupsOf(3),
    "alpha": FixedGroups(1),
    "beta": FixedGroups(2),
    "gamma": FixedGroups(3),
}

STORAGE_FIGURES = {
    "storage-base": ("none", "historic"),
    "storage-prune": ("none", "prune", "child"),
    "storage-meta": ("none", "meta"),
    "storage-all": ("none", "historic", "prune", "child", "meta", "prune+meta", "child+meta"),
}

FIGURES = ("shuffle-bft", "breakeven") + tuple(STORAGE_FIGURES)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 2 through main, not SystemExit from deep inside
        raise UsageError(message)


def _sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--nodes", type=int)
    p.add_argument("--turn", type=int, help="writing window in ticks")
    p.add_argument("--transition", type=int, help="transition window in ticks")
    p.add_argument("--latency", type=int, help="maximum link delay in ticks")
    p.add_argument("--theta", help="finality threshold, e.g. 1/2")
    p.add_argument("--peering", choices=("pull", "push", "mixed"))
    p.add_argument("--storage", choices=("none", "prune", "child", "meta"))
    p.add_argument("--scenario", help="fault scenario file")
    p.add_argument("--rounds", type=int)
    p.add_argument("--byzantine", help="weight of Byzantine nodes, e.g. 0.4")
    p.add_argument("--grace", type=int, help="lost-leader grace in ticks")
    p.add_argument("--out", help="output directory")


SIM_KEYS = ("seed", "nodes", "turn", "transition", "latency", "theta", "peering", "storage", "scenario", "rounds", "byzantine", "grace")


def config_from_args(args: argparse.Namespace, **extra: Any):
    """Defaults, then the config file, then flags."""
    layers: list[dict[str, Any]] = []
    if getattr(args, "config", None):
        layers.append(parse_config_text(Path(args.config).read_text(encoding="utf-8")))
    layers.append({k: getattr(args, k, None) for k in SIM_KEYS})
    layers.append(extra)
    return build_config(*layers)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="potchain", description="Turn-based chain simulator and tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one simulation")
    _sim_flags(p)

    p = sub.add_parser("validate", help="check a chain snapshot")
    p.add_argument("path")

    p = sub.add_parser("prune", help="delete revealed bloat from a chain snapshot")
    p.add_argument("path")
    p.add_argument("--signer", required=True, help="seed text of the garbage collecting identity")
    p.add_argument("--label", default="gcn")
    p.add_argument("--cap", type=int, default=0, help="roster cap for the designated collector (0: any signer)")
    p.add_argument("--out", required=True, help="file for the pruned snapshot")

    p = sub.add_parser("sweep", help="run many simulations over one parameter")
    _sim_flags(p)
    p.add_argument("--param", required=True, help="config key to vary")
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--seeds", type=int, default=5, help="seeds per value")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("charts", help="emit chart data as CSV")
    p.add_argument("--figure", required=True, choices=FIGURES)
    p.add_argument("--n", type=int, default=60, help="largest node count for shuffle-bft")
    p.add_argument("--tx-count", type=int, default=600_000)
    p.add_argument("--step", type=int, default=10_000)
    p.add_argument("--bloat-ratio", default="1")
    p.add_argument("--out", help="file (default: stdout)")

    p = sub.add_parser("inspect", help="summarize a snapshot, trace or scenario file")
    p.add_argument("path")
    return parser


# commands


def cmd_run(args: argparse.Namespace, out) -> int:
    config = config_from_args(args)
    sim = Simulation(config)
    trace, metrics = sim.run()
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        trace.write(d / "trace.log")
        (d / "config.cfg").write_text(config.to_text(), encoding="utf-8")
        write_snapshot(sim.nodes[sim.first_honest()].chain, d / "chain.potc")
        export(metrics, d)
    print(f"trace-digest {trace.digest}", file=out)
    for key, value in metrics.summary().items():
        print(f"{key} {value}", file=out)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace, out) -> int:
    try:
        chain = read_snapshot(args.path)
    except (DecodeError, ValueError) as exc:
        print(f"undecodable: {exc}", file=out)
        return EXIT_FINDINGS
    report = validate_chain(chain)
    print(str(report), file=out)
    return EXIT_OK if report.ok else EXIT_FINDINGS


def cmd_prune(args: argparse.Namespace, out) -> int:
    try:
        chain = read_snapshot(args.path)
    except (DecodeError, ValueError) as exc:
        print(f"undecodable: {exc}", file=out)
        return EXIT_FINDINGS
    report = validate_chain(chain)
    if not report.ok:
        print(str(report), file=out)
        return EXIT_FINDINGS
    gcn = Identity.from_seed(args.signer.encode(), args.label)
    designated = designated_gcn(chain, args.cap) if args.cap else None
    pruned, proof = prune(chain, gcn, designated)
    verify_prune(chain, pruned, proof)
    write_snapshot(pruned, args.out)
    print(f"removed {len(proof.removed)}", file=out)
    print(f"transcribed {len(proof.transcribed)}", file=out)
    print(f"bytes {chain.total_size()} -> {pruned.total_size()}", file=out)
    return EXIT_OK


def _sweep_one(job: tuple[dict[str, Any], str, str, int]) -> list[Any]:
    base, param, value, seed = job
    config = build_config(base, {param: value, "seed": seed})
    _, metrics = Simulation(config).run()
    s = metrics.summary()
    return [param, value, seed] + [s[k] for k in sorted(s)]


def cmd_sweep(args: argparse.Namespace, out) -> int:
    base = config_from_args(args)
    param = args.param.replace("-", "_")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not hasattr(base, param) or param == "seed":
        raise UsageError(f"cannot sweep over {args.param!r}")
    layer = {k: getattr(base, k) for k in SIM_KEYS if getattr(base, k) is not None}
    for v in values:
        build_config(layer, {param: v})  # reject bad values before any run
    jobs = [(layer, param, v, base.seed + i) for v in values for i in range(args.seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    keys = sorted(Metrics().summary())
    target = out
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        target = open(Path(args.out) / "sweep.csv", "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(target, lineterminator="\n")
        w.writerow(["param", "value", "seed"] + keys)
        w.writerows(rows)
    finally:
        if target is not out:
            target.close()
    return EXIT_OK


def shuffle_bft_rows(n_max: int) -> list[list[str]]:
    rows = []
    for n in range(3, n_max + 1):
        row = [str(n)]
        for grouping in SHUFFLE_CURVES.values():
            try:
                row.append(f"{float(fraud_resilience(grouping, n)):.6f}")
            except ValueError:
                row.append("")
        rows.append(row)
    return rows


def write_chart(args: argparse.Namespace, fh) -> None:
    if args.figure == "shuffle-bft":
        if args.n < 3:
            raise UsageError("--n must be at least 3")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n"] + list(SHUFFLE_CURVES))
        w.writerows(shuffle_bft_rows(args.n))
        return
    ratio = Fraction(args.bloat_ratio)
    if args.figure == "breakeven":
        params = StorageParams(bloat_ratio=ratio)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["f", "encrypted_MB", "game_hash_MB", "advice"])
        for tenth in range(0, 101):
            advice = breakeven(params, Fraction(tenth, 10))
            w.writerow([f"{tenth / 10:.1f}", f"{float(advice.cost_encrypted):.6f}", f"{float(advice.cost_game_hash):.6f}", advice.mode.value])
        return
    sc = StorageScenario(tx_count=args.tx_count, bloat_ratio=ratio, step=args.step)
    write_series_csv({m: storage_series(sc, m) for m in STORAGE_FIGURES[args.figure]}, out=fh)


def cmd_charts(args: argparse.Namespace, out) -> int:
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            write_chart(args, fh)
    else:
        write_chart(args, out)
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace, out) -> int:
    path = Path(args.path)
    data = path.read_bytes()
    if data[:4] == b"POTC":
        chain = read_snapshot(path)
        blocks = Counter(b.kind.name for b in chain.blocks)
        txs = Counter(tx.kind.name for _, tx in chain.transactions())
        print(f"height {chain.height}", file=out)
        print(f"tip {chain.tip_hash.hex()}", file=out)
        print(f"fixed_upto {chain.fixed_upto}", file=out)
        print(f"invalidated {len(chain.invalidated)}", file=out)
        print(f"bytes {chain.total_size()}", file=out)
        for name, count in sorted(blocks.items()):
            print(f"block {name} {count}", file=out)
        for name, count in sorted(txs.items()):
            print(f"tx {name} {count}", file=out)
        return EXIT_OK
    text = data.decode("utf-8")
    if text.lstrip().startswith("{"):
        lines = [json.loads(line) for line in text.splitlines() if line.strip()]
        kinds = Counter(e.get("event", "?") for e in lines)
        print(f"events {len(lines)}", file=out)
        print(f"digest {hashlib.sha256(data).hexdigest()}", file=out)
        for name, count in sorted(kinds.items()):
            print(f"event {name} {count}", file=out)
        return EXIT_OK
    events = load_scenario(path) if path.suffix == ".scn" else parse_scenario(text)
    for ev in events:
        print(f"AT {ev.at} {ev.describe()}", file=out)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "validate": cmd_validate,
    "prune": cmd_prune,
    "sweep": cmd_sweep,
    "charts": cmd_charts,
    "inspect": cmd_inspect,
}


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"potchain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigInvalid, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        print(f"potchain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"potchain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run_to_string(argv: Sequence[str]) -> tuple[int, str]:
    buf = io.StringIO()
    code = main(argv, buf)
    return code, buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())

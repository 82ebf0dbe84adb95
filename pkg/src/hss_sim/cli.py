"""Command-line entry point: ``hss-sim run|compare|sweep|gen-trace``."""
from __future__ import annotations

import argparse
import dataclasses
import sys

from . import metrics
from .baselines import PolicyKind
from .config import SimConfig, load_config, load_profile
from .engine import Knobs, resolve_knob
from .trace_io import footprint, generate_trace, load_trace, write_trace

DEFAULT_SEED = 42


class CliError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trace", required=True, help="trace CSV")
    p.add_argument("--config", help="INI config (defaults to the perf_opt preset)")
    p.add_argument("--seed", type=int, default=None, help=f"run seed (default {DEFAULT_SEED})")
    p.add_argument("--out", help="report CSV (stdout if omitted)")
    p.add_argument("--atoms", type=int, help="atoms per action (1 = scalar head)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hss-sim", description="Hybrid storage system simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one policy")
    _add_common(run)
    run.add_argument("--policy", default="harmonia")
    run.add_argument("--debug-events", metavar="F", help="write the event log CSV")
    run.add_argument("--loss-log", metavar="F", help="write per-agent training losses CSV")

    cmp_ = sub.add_parser("compare", help="compare policies, normalized to Fast-Only")
    _add_common(cmp_)
    cmp_.add_argument("--policies", required=True, help="comma-separated policy names")

    sw = sub.add_parser("sweep", help="sweep one engine knob")
    _add_common(sw)
    sw.add_argument("--policy", default="harmonia")
    sw.add_argument("--knob", required=True)
    sw.add_argument("--values", required=True, help="comma-separated values")

    gen = sub.add_parser("gen-trace", help="generate a synthetic trace")
    gen.add_argument("--profile", required=True, help="profile INI with a [profile] section")
    gen.add_argument("--requests", type=int, required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", required=True)
    return ap


def _seed(args) -> int:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _setup(args):
    try:
        trace = load_trace(args.trace)
    except FileNotFoundError:
        raise CliError(f"trace file not found: {args.trace}") from None
    if args.config:
        try:
            cfg = load_config(args.config)
        except FileNotFoundError:
            raise CliError(f"config file not found: {args.config}") from None
    else:
        cfg = SimConfig()
    knobs = cfg.knobs
    if args.atoms is not None:
        knobs = knobs.replace(num_atoms=args.atoms)
    hss = cfg.build_hss(footprint(trace))
    kw = dict(placement_hp=cfg.placement_hp, migration_hp=cfg.migration_hp)
    return trace, hss, knobs, kw


def _emit(args, reports) -> None:
    if args.out:
        metrics.write_reports(args.out, reports)
    else:
        sys.stdout.write(metrics.format_reports(reports))


def _parse_knob_values(knob: str, text: str) -> list:
    from .config import parse_value
    name = resolve_knob(knob)
    return [parse_value(Knobs, name, v, "--values") for v in text.split(",") if v.strip()]


def cmd_run(args) -> None:
    seed = _seed(args)
    trace, hss, knobs, kw = _setup(args)
    policy = PolicyKind.parse(args.policy)
    if args.debug_events:
        knobs = knobs.replace(record_events=True)
    report, result = metrics.simulate(trace, hss, policy, seed, knobs, **kw)
    _emit(args, [report])
    if args.debug_events:
        metrics.write_event_log(args.debug_events, result.events)
    if args.loss_log:
        metrics.write_loss_log(args.loss_log, report)


def cmd_compare(args) -> None:
    seed = _seed(args)
    trace, hss, knobs, kw = _setup(args)
    policies = [PolicyKind.parse(p) for p in args.policies.split(",") if p.strip()]
    if not policies:
        raise CliError("--policies is empty")
    _emit(args, metrics.compare(trace, hss, policies, seed, knobs, **kw))


def cmd_sweep(args) -> None:
    seed = _seed(args)
    trace, hss, knobs, kw = _setup(args)
    values = _parse_knob_values(args.knob, args.values)
    if not values:
        raise CliError("--values is empty")
    policy = PolicyKind.parse(args.policy)
    _emit(args, metrics.sweep(trace, hss, policy, args.knob, values, seed, knobs, **kw))


def cmd_gen_trace(args) -> None:
    seed = _seed(args)
    try:
        profile = load_profile(args.profile)
    except FileNotFoundError:
        raise CliError(f"profile file not found: {args.profile}") from None
    write_trace(generate_trace(profile, args.requests, seed), args.out)


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep, "gen-trace": cmd_gen_trace}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (CliError, ValueError, OSError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"hss-sim: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands: check, paths, simulate, verify, render.  Artifacts (JSON,
DOT, tables) go to stdout or `-o`; diagnostics go to stderr.  Exit code
0 on success, 1 when a verification fails, 2 on input or usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]
from pathlib import Path
from typing import Optional

from .analyzer import check_suite, parse_requirements
from .explorer import (
    ExploreBounds, build_lts, enumerate_paths, lts_to_dot, lts_to_json,
    scenario_classes,
)
from .parser import parse
from .semantics import Engine, render_label
from .simulator import Random_, Replay, export_gts, simulate
from .terms import Diagnostic, SpecFile, validate
from .views import export_itl, export_its

DEFAULTS = {"max_clock": 40, "max_states": 200000, "jobs": 1, "seed": None}


def _load_config(cwd: Path) -> dict:
    cfg = dict(DEFAULTS)
    path = cwd / "dtcal.toml"
    if path.is_file():
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as e:
            print(f"{path}: {e}", file=sys.stderr)
            raise SystemExit(2)
        for key in cfg:
            if key in data:
                cfg[key] = data[key]
    return cfg


def _read_spec(path_text: str) -> SpecFile:
    path = Path(path_text)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        print(f"{path}: {e.strerror or e}", file=sys.stderr)
        raise SystemExit(2)
    result = parse(text, str(path))
    if isinstance(result, list):
        for d in result:
            print(d, file=sys.stderr)
        raise SystemExit(2)
    diags = validate(result)
    if diags:
        for d in diags:
            print(d, file=sys.stderr)
        raise SystemExit(2)
    return result


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _bounds(args, cfg) -> ExploreBounds:
    max_clock = args.max_clock if args.max_clock is not None else cfg["max_clock"]
    max_states = (args.max_states if args.max_states is not None
                  else cfg["max_states"])
    return ExploreBounds(max_clock, max_states)


def _add_common(sub) -> None:
    sub.add_argument("spec", help="specification file (.dtc)")
    sub.add_argument("--max-clock", type=int, default=None)
    sub.add_argument("--max-states", type=int, default=None)
    sub.add_argument("--jobs", type=int, default=None)
    sub.add_argument("-o", dest="out", default=None, metavar="FILE")


def main(argv: Optional[list[str]] = None) -> int:
    ap = argparse.ArgumentParser(
        prog="dtcal",
        description="Parse, explore, simulate and verify timed mobile "
                    "process specifications.")
    sp = ap.add_subparsers(dest="command", required=True)

    p_check = sp.add_parser("check", help="parse and validate a spec")
    p_check.add_argument("spec")

    p_paths = sp.add_parser("paths", help="explore and report scenario classes")
    _add_common(p_paths)
    p_paths.add_argument("--dot", action="store_true",
                         help="emit the execution model as DOT")
    p_paths.add_argument("--json", action="store_true")

    p_sim = sp.add_parser("simulate", help="replay a path or run seeded")
    _add_common(p_sim)
    group = p_sim.add_mutually_exclusive_group()
    group.add_argument("--path", type=int, default=None, metavar="CLASS",
                       help="replay the representative of a scenario class")
    group.add_argument("--seed", type=int, default=None)

    p_verify = sp.add_parser("verify", help="check a requirement suite")
    _add_common(p_verify)
    p_verify.add_argument("reqs", help="requirement file (.dtq)")
    p_verify.add_argument("--json", action="store_true")

    p_render = sp.add_parser("render", help="emit structure diagrams as DOT")
    p_render.add_argument("spec")
    p_render.add_argument("-o", dest="out", default=None, metavar="FILE")
    rgroup = p_render.add_mutually_exclusive_group(required=True)
    rgroup.add_argument("--itl", action="store_true", help="system view")
    rgroup.add_argument("--its", metavar="NAME", default=None,
                        help="process view of one definition")

    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        cfg = _load_config(Path.cwd())
        return _dispatch(args, cfg)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except BrokenPipeError:
        return 0


def _dispatch(args, cfg) -> int:
    if args.command == "check":
        _read_spec(args.spec)
        return 0

    if args.command == "render":
        spec = _read_spec(args.spec)
        if args.itl:
            _write(export_itl(spec), args.out)
        else:
            try:
                _write(export_its(spec, args.its), args.out)
            except KeyError as e:
                print(f"error: {e.args[0]}", file=sys.stderr)
                return 2
        return 0

    spec = _read_spec(args.spec)
    bounds = _bounds(args, cfg)
    jobs = args.jobs if args.jobs is not None else cfg["jobs"]
    engine = Engine(spec)
    lts = build_lts(engine, bounds, jobs=jobs)

    if args.command == "paths":
        if args.dot:
            _write(lts_to_dot(lts), args.out)
            return 0
        paths = enumerate_paths(lts)
        classes = scenario_classes(paths)
        n_deadlock = sum(1 for c in lts.classifications if c == "deadlock")
        n_fault = sum(1 for c in lts.classifications if c == "fault")
        if args.json:
            data = {
                "classes": [
                    {"index": i,
                     "signature": list(c.signature),
                     "paths": len(c.members),
                     "terminals": sorted({p.terminal for p in c.members}),
                     "representative": [render_label(l)
                                        for l in c.representative.labels]}
                    for i, c in enumerate(classes)],
                "deadlockStates": n_deadlock,
                "faultStates": n_fault,
                "states": lts.n_states,
                "truncated": lts.truncated,
            }
            _write(json.dumps(data, sort_keys=True,
                              separators=(",", ":")) + "\n", args.out)
            return 0
        lines = [f"{len(classes)} scenario classes; "
                 f"{n_deadlock} deadlock, {n_fault} fault"]
        for i, c in enumerate(classes):
            terminals = ",".join(sorted({p.terminal for p in c.members}))
            lines.append(f"class {i}: paths={len(c.members)} "
                         f"terminal={terminals}")
            for ev in c.signature:
                lines.append(f"  {ev}")
        _write("\n".join(lines) + "\n", args.out)
        return 0

    if args.command == "simulate":
        if args.seed is None and args.path is None and cfg["seed"] is not None:
            args.seed = cfg["seed"]
        if args.path is not None:
            classes = scenario_classes(enumerate_paths(lts))
            if not (0 <= args.path < len(classes)):
                print(f"error: class index {args.path} out of range "
                      f"(0..{len(classes) - 1})", file=sys.stderr)
                return 2
            policy = Replay(classes[args.path].representative.labels)
        else:
            policy = Random_(args.seed if args.seed is not None else 0)
        trace = simulate(engine, policy, bounds)
        _write(export_gts(trace, spec), args.out)
        return 0

    if args.command == "verify":
        try:
            req_text = Path(args.reqs).read_text(encoding="utf-8")
        except OSError as e:
            print(f"{args.reqs}: {e.strerror or e}", file=sys.stderr)
            return 2
        parsed = parse_requirements(req_text, args.reqs)
        if parsed and isinstance(parsed[0], Diagnostic):
            for d in parsed:
                print(d, file=sys.stderr)
            return 2
        verdicts = check_suite(lts, parsed)
        n_hold = sum(1 for v in verdicts if v.holds)
        if args.json:
            data = {
                "verdicts": [
                    {"name": v.name, "holds": v.holds,
                     "checkedPaths": v.checked_paths,
                     "boundRelative": v.bound_relative,
                     "evidence": ([render_label(l) for l in v.evidence.labels]
                                  if v.evidence is not None else None)}
                    for v in verdicts],
                "held": n_hold,
                "total": len(verdicts),
            }
            _write(json.dumps(data, sort_keys=True,
                              separators=(",", ":")) + "\n", args.out)
        else:
            lines = []
            for v in verdicts:
                mark = "hold" if v.holds else "FAIL"
                note = " (bound-relative)" if v.bound_relative else ""
                lines.append(f"{v.name}: {mark}{note}")
            lines.append(f"{n_hold}/{len(verdicts)} hold")
            _write("\n".join(lines) + "\n", args.out)
        return 0 if n_hold == len(verdicts) else 1

    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())

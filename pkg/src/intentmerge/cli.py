"""Command-line driver: train, eval, render, replay-verify, table, config."""
from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

from intentmerge import config as config_mod
from intentmerge import episode_log
from intentmerge.behavior import SenderAssignment
from intentmerge.config import ConfigError, ExperimentConfig
from intentmerge.intent import I_IDLE, intent_by_name
from intentmerge.learn import CellStats, evaluate, merge_env_factory, rollout, train
from intentmerge.qnet import CheckpointError, QNetwork
from intentmerge.render import render_svg
from intentmerge.results import ResultsTable

CHECKPOINT_RE = re.compile(r"model_(on|off)_(-?\d+)\.bin$")


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _sharing_flag(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _tag(sharing: bool) -> str:
    return "on" if sharing else "off"


def _load_config(args) -> ExperimentConfig:
    cfg = config_mod.load(args.config) if args.config else ExperimentConfig()
    return config_mod.with_overrides(cfg, seed=getattr(args, "seed", None),
                                     sharing=getattr(args, "sharing", None))


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out if args.out else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    jobs = [(s, seed) for s in cfg.sharing_modes for seed in cfg.seeds]
    targets = []
    for sharing, seed in jobs:
        model = out / f"model_{_tag(sharing)}_{seed}.bin"
        log = out / f"train_{_tag(sharing)}_{seed}.csv"
        if not args.force and (model.exists() or log.exists()):
            raise CliError(f"{model.name} or {log.name} exists in {out}; use --force to overwrite")
        targets.append((sharing, seed, model, log))
    for sharing, seed, model, log in targets:
        env_cfg = config_mod.dataclasses.replace(cfg.env, sharing=sharing)

        def progress(step, rec, _s=sharing, _seed=seed):
            if args.verbose and rec.episode % 200 == 0:
                print(f"[{_tag(_s)}/{_seed}] step {step} episode {rec.episode} "
                      f"return {rec.ret:.3f} eps {rec.epsilon:.3f}", file=sys.stderr)

        result = train(merge_env_factory(env_cfg), cfg.train, seed, progress)
        result.net.save(model)
        result.write_log(log)
        print(f"wrote {model} and {log} ({len(result.log)} episodes)")
    return 0


def _load_net(path: str | Path) -> QNetwork:
    try:
        return QNetwork.load(path)
    except (OSError, CheckpointError) as e:
        raise CliError(f"cannot load checkpoint {path}: {e}") from e


def cmd_eval(args) -> int:
    if not args.checkpoints:
        raise CliError("eval needs at least one checkpoint", code=2)
    cfg = _load_config(args)
    found: dict[tuple[bool, int], Path] = {}
    for p in args.checkpoints:
        m = CHECKPOINT_RE.search(Path(p).name)
        if not m:
            raise CliError(f"{p}: checkpoint names must look like model_<on|off>_<seed>.bin", code=2)
        found[(m.group(1) == "on", int(m.group(2)))] = Path(p)
    stats: list[CellStats] = []
    missing = []
    for sharing in (True, False):
        seeds = sorted(s for (sh, s) in found if sh == sharing)
        if not seeds:
            if sharing in cfg.sharing_modes:
                missing.append(f"sharing {_tag(sharing)}: no checkpoints")
            continue
        absent = [s for s in cfg.seeds if s not in seeds]
        if absent:
            missing.append(f"sharing {_tag(sharing)}: missing seeds {absent}")
            continue
        nets = [_load_net(found[(sharing, s)]) for s in cfg.seeds]
        env_cfg = config_mod.dataclasses.replace(cfg.env, sharing=sharing)
        stats += evaluate(nets, env_cfg, cfg.eval.seed, cfg.eval.episodes)
    table = ResultsTable.from_stats(stats)
    if not table.rows:
        raise CliError("; ".join(missing) or "nothing to evaluate")
    # keep the full grid visible even when one scenario is absent
    text = table.to_csv()
    if args.out:
        Path(args.out).write_text(text, newline="")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    if missing:
        raise CliError("; ".join(missing))
    return 0


def _assignment(intent_name: str, trigger: float | None) -> SenderAssignment:
    try:
        intent = intent_by_name(intent_name)
    except ValueError as e:
        raise CliError(str(e), code=2) from e
    if intent == I_IDLE:
        if trigger is not None:
            raise CliError("the IDLE intent takes no trigger", code=2)
        return SenderAssignment(intent)
    if trigger is None:
        raise CliError(f"--trigger is required for {intent_name}", code=2)
    return SenderAssignment(intent, trigger)


def cmd_render(args) -> int:
    cfg = _load_config(args)
    sharing = True if args.sharing is None else args.sharing
    env_cfg = config_mod.dataclasses.replace(cfg.env, sharing=sharing)
    assignment = _assignment(args.intent, args.trigger)
    try:
        assignment.validate(env_cfg.triggers, env_cfg.geometry.ramp_end)
    except ValueError as e:
        raise CliError(str(e), code=2) from e
    net = _load_net(args.checkpoint)
    r = rollout(net, env_cfg, assignment, cfg.eval.seed, record=True)
    env = r.env
    label = "N/A" if assignment.trigger_x is None else f"{assignment.trigger_x:g} m"
    title = (f"intent {assignment.intent} trigger {label} sharing {_tag(sharing)}")
    if r.merge is not None:
        k = round(r.merge.t_m / env_cfg.policy_period)
        frames = env.history[:k + 1]
        title += f"  merge t={r.merge.t_m:g} s  merger x={r.merge_merger_x:.1f} sender x={r.merge_sender_x:.1f}"
        note = ""
    else:
        frames = env.history
        note = "no-merge"
    Path(args.out).write_text(render_svg(frames, title, note))
    print(f"wrote {args.out}")
    if args.log:
        episode_log.write_log(args.log, episode_log.episode_records(env))
        print(f"wrote {args.log}")
    if r.merge is None:
        raise CliError("the merging vehicle did not merge")
    return 0


def cmd_replay_verify(args) -> int:
    try:
        log = episode_log.read_log(args.log)
    except episode_log.LogParseError as e:
        raise CliError(f"{args.log}: {e}", code=2) from e
    except OSError as e:
        raise CliError(str(e), code=2) from e
    report = episode_log.verify(log)
    c = report.compliance
    print(f"compliance: {'ok' if c.compliant else 'VIOLATED'}")
    for v in c.violations:
        where = "episode" if v.step is None else f"step {v.step}"
        print(f"  {v.kind}: {v.action.name} at {where}")
    print(f"reward mismatches: {len(report.mismatches)}")
    for m in report.mismatches:
        print(f"  step {m.step} (line {m.line}) {m.field}: logged {m.logged!r} "
              f"recomputed {m.recomputed!r}")
    return 0 if report.ok else 1


def cmd_table(args) -> int:
    try:
        table = ResultsTable.from_csv(Path(args.results).read_text())
    except (OSError, ValueError) as e:
        raise CliError(str(e), code=2) from e
    sys.stdout.write(table.format())
    return 0


def cmd_config(args) -> int:
    text = config_mod.dumps(ExperimentConfig())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intentmerge",
                                description="Intent-sharing highway merge experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train merging policies")
    t.add_argument("--config")
    t.add_argument("--sharing", type=_sharing_flag)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="output directory (default: config output_dir)")
    t.add_argument("--force", action="store_true")
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate checkpoints over the scenario grid")
    e.add_argument("checkpoints", nargs="*")
    e.add_argument("--config")
    e.add_argument("--out", help="results CSV (default: stdout)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render", help="SVG snapshot of a greedy rollout at the merge")
    r.add_argument("checkpoint")
    r.add_argument("--intent", required=True)
    r.add_argument("--trigger", type=float)
    r.add_argument("--sharing", type=_sharing_flag)
    r.add_argument("--config")
    r.add_argument("--log", help="also write the episode log here")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)

    v = sub.add_parser("replay-verify", help="re-check an episode log")
    v.add_argument("log")
    v.set_defaults(func=cmd_replay_verify)

    tb = sub.add_parser("table", help="print a results CSV as a table")
    tb.add_argument("results")
    tb.set_defaults(func=cmd_table)

    c = sub.add_parser("config", help="print the default configuration")
    c.add_argument("--out")
    c.set_defaults(func=cmd_config)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ConfigError as e:
        print(f"error: invalid config: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

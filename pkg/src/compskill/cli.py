"""Command-line entry point: ``compskill <subcommand> ...``.

Subcommands
-----------
demo            scripted demonstrations -> trace CSVs + label file
learn-criteria  scoring criteria learned from a demo directory -> JSON summary
fit             conditioned per-transition policies -> JSON with snapshots
trial           run the skill with fitted policies -> trace CSV + evaluation JSON
learn           the full composite learning loop -> JSON LearnReport
report          render a learn report as plain text

Every artifact carries a ``run_*`` reproducibility header (command, seed,
config). Usage errors exit 2; any other failure exits 1 with a single-line
diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .apn import PetriNetError, load_skill
from .conditioning import condition_number, kernel_stack
from .evaluation import EvaluationError, demo_weights, learn_criteria, score_trial
from .gpr import GprError, dump_model, load_model
from .sim.loop import LoopConfig, _Source, composite_learning_loop, default_demo_plan, fit_policies, trial_rng
from .sim.oracles import PENDULUM_VARIANTS, NUNCHAKU_VARIANTS, OracleDivergence, demonstrate
from .sim.tasks import make_task
from .sim.trace import ConfigError, load_corpus, save_corpus, write_trace_csv
from .sim.trial import MissingPolicyError, run_trial

TASKS = ("pendulum", "nunchaku")


class CliError(Exception):
    pass


# -- shared plumbing --------------------------------------------------------


def _config(args) -> LoopConfig:
    base = {"task": args.task}
    if getattr(args, "skill", None):
        base["skill"] = str(args.skill)
    if getattr(args, "seed", None) is not None:
        base["seed"] = args.seed
    if args.config:
        p = Path(args.config)
        if not p.is_file():
            raise FileNotFoundError(str(p))
        cfg = LoopConfig.from_text(p.read_text(encoding="utf-8"), base)
    else:
        cfg = LoopConfig.from_mapping(base)
    overrides = {
        "capture_rate": args.capture_rate,
        "capture_delay_frames": args.capture_delay,
        "trial_time": getattr(args, "budget", None),
        "max_trials": getattr(args, "max_trials", None),
        "window": getattr(args, "window", None),
    }
    vals = asdict(cfg)
    vals.update({k: v for k, v in overrides.items() if v is not None})
    # command-line identity wins over the config file
    vals.update(base)
    return LoopConfig.from_mapping(vals)


def _header(command: str, cfg: LoopConfig, **extra) -> dict:
    h = {"run_command": command, "run_seed": cfg.seed, "run_task": cfg.task, "run_version": __version__,
         "run_config": ";".join(f"{k}:{v}" for k, v in sorted(asdict(cfg).items()))}
    h.update({f"run_{k}": v for k, v in extra.items()})
    return h


def _net(args, cfg: LoopConfig):
    return load_skill(args.skill if args.skill else cfg.task)


def _write_json(obj, path) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    return text


def _demo_sources(demos):
    w = demo_weights(demos)
    return [_Source(d.demo_id, d.trace, float(x)) for d, x in zip(demos, w)]


# -- subcommands ------------------------------------------------------------


def cmd_demo(args) -> int:
    cfg = _config(args)
    task = make_task(cfg.task)
    if args.count is None:
        plan = default_demo_plan(cfg.task)
    else:
        if args.count < 1:
            raise CliError("--count must be positive")
        variant = args.variant or (PENDULUM_VARIANTS[0] if cfg.task == "pendulum" else NUNCHAKU_VARIANTS[0])
        plan = [(variant, args.noise, cfg.seed + i) for i in range(args.count)]
    demos = [demonstrate(task, noise, seed, cfg.capture(), variant) for variant, noise, seed in plan]
    save_corpus(demos, args.out, _header("demo", cfg))
    ok = sum(d.success for d in demos)
    print(f"wrote {len(demos)} demonstrations ({ok} successful) to {args.out}")
    return 0


def cmd_learn_criteria(args) -> int:
    cfg = _config(args)
    net = _net(args, cfg)
    demos = load_corpus(args.demos)
    crit = learn_criteria(demos, net, problem_threshold=cfg.problem_threshold)
    out = {
        "header": _header("learn-criteria", cfg, demos=str(args.demos)),
        "tau": crit.tau,
        "problem_threshold": crit.problem_threshold,
        "transitions": crit.transition_ids,
        "demos": [{"demo_id": d.demo_id, "success": d.success, "label": d.overall_score, "predicted": p}
                  for d, p in zip(demos, crit.training_predictions)],
    }
    _write_json(out, args.out)
    print(f"success threshold {crit.tau:.4f} from {len(demos)} demonstrations -> {args.out}")
    return 0


def cmd_fit(args) -> int:
    cfg = _config(args)
    net = _net(args, cfg)
    task = make_task(cfg.task)
    demos = load_corpus(args.demos)
    sources = _demo_sources(demos)
    ps = fit_policies(net, sources, task, cfg)
    policies = {}
    for tid, model in ps.models.items():
        K = kernel_stack(model.training, model.theta)
        policies[tid] = {
            "n": ps.sizes[tid]["n"],
            "m": ps.sizes[tid]["m"],
            "theta": {"sigma": float(model.theta.sigma), "length": float(model.theta.length)},
            "condition_selected": condition_number(K),
            "snapshot": base64.b64encode(dump_model(model)).decode("ascii"),
        }
    out = {"header": _header("fit", cfg, demos=str(args.demos)), "policies": policies}
    _write_json(out, args.out)
    sizes = ", ".join(f"{t}: {p['n']}->{p['m']}" for t, p in policies.items())
    print(f"fitted {len(policies)} policies ({sizes}) -> {args.out}")
    return 0


def _load_policies(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(str(p))
    data = json.loads(p.read_text(encoding="utf-8"))
    return {tid: load_model(base64.b64decode(entry["snapshot"])) for tid, entry in data["policies"].items()}


def _one_trial(payload):
    skill, task_name, policies_path, seed, index, budget = payload
    net = load_skill(skill)
    return run_trial(net, _load_policies(policies_path), make_task(task_name), trial_rng(seed, index), budget)


def cmd_trial(args) -> int:
    cfg = _config(args)
    net = _net(args, cfg)
    demos = load_corpus(args.demos)
    crit = learn_criteria(demos, net, problem_threshold=cfg.problem_threshold)
    _load_policies(args.policies)  # fail early on a bad file
    skill = str(args.skill) if args.skill else cfg.task
    budget = cfg.trial_time or None
    jobs = [(skill, cfg.task, str(args.policies), cfg.seed, i, budget) for i in range(args.count)]
    if args.parallel_trials > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.parallel_trials) as ex:
            traces = list(ex.map(_one_trial, jobs))
    else:
        traces = [_one_trial(j) for j in jobs]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    evals = []
    for i, tr in enumerate(traces):
        header = _header("trial", cfg, index=i, policies=str(args.policies))
        write_trace_csv(tr, out_dir / f"trial{i:03d}.csv", header)
        ev = score_trial(crit, tr, net).to_dict()
        ev.update({"index": i, "terminal": tr.terminal, "ticks": len(tr), "fired": tr.fired_ids()})
        evals.append(ev)
    _write_json({"header": _header("trial", cfg, policies=str(args.policies)), "trials": evals},
                out_dir / "evaluation.json")
    ok = sum(e["verdict"] == "success" for e in evals)
    print(f"{len(evals)} trials, {ok} judged successful -> {out_dir}")
    return 0


def cmd_learn(args) -> int:
    cfg = _config(args)
    net = _net(args, cfg)
    if args.demos:
        demos = load_corpus(args.demos)
    else:
        plan = default_demo_plan(cfg.task)
        demos = [demonstrate(make_task(cfg.task), n, s, cfg.capture(), v) for v, n, s in plan]
    rep = composite_learning_loop(cfg, demos, net)
    d = json.loads(rep.to_json())
    d["header"] = _header("learn", cfg, demos=str(args.demos or "default"))
    _write_json(d, args.out)
    print(render_report(d))
    return 0


def render_report(d: dict) -> str:
    """Plain-text summary of a learn report."""
    lines = [
        f"termination: {d['termination']} after {d['trials']} trials",
        f"success rate (self-evaluated): first {d['window']} = {d['success_rate_first_W']:.2f}, "
        f"last {d['window']} = {d['success_rate_last_W']:.2f}",
        f"success rate (ground truth):   first {d['window']} = {d['ground_truth_rate_first_W']:.2f}, "
        f"last {d['window']} = {d['ground_truth_rate_last_W']:.2f}",
        f"success threshold: {d['tau']:.4f}",
    ]
    for a in d.get("adaptations", []):
        for c in a["changes"]:
            if c["action"] == "update_condition":
                lines.append(f"trial {a['trial']}: {c['transition']} condition -> {c['threshold']:.4f}")
    for tid, s in sorted(d.get("model_sizes", {}).items()):
        lines.append(f"policy {tid}: n={s['n']} m={s['m']}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    p = Path(args.report)
    if not p.is_file():
        raise FileNotFoundError(str(p))
    try:
        d = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"{p}: not a JSON report (line {exc.lineno})") from None
    missing = [k for k in ("termination", "trials", "success_rate_first_W", "success_rate_last_W") if k not in d]
    if missing:
        raise CliError(f"{p}: missing report fields {', '.join(missing)}")
    print(render_report(d))
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="compskill", description="Composite skill learning on simulated tasks.")
    ap.add_argument("--version", action="version", version=f"compskill {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed_required=True, skill=True):
        p.add_argument("--task", choices=TASKS, default="pendulum")
        if skill:
            p.add_argument("--skill", help="skill definition file (default: the shipped net for --task)")
        p.add_argument("--seed", type=int, required=seed_required, help="master seed")
        p.add_argument("--config", help="key=value loop configuration file")
        p.add_argument("--capture-rate", type=float, help="camera frame rate in Hz")
        p.add_argument("--capture-delay", type=int, help="camera delay in frames")

    p = sub.add_parser("demo", help="generate demonstrations")
    common(p, skill=False)
    p.add_argument("--count", type=int, help="number of demos (default: the shipped mixed corpus)")
    p.add_argument("--noise", type=float, default=0.0, help="mentor control noise std")
    p.add_argument("--variant", help="oracle variant (pendulum: back_and_forth, jerk_up)")
    p.add_argument("--out", default="demos", help="output directory")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("learn-criteria", help="learn scoring criteria from labeled demos")
    common(p, seed_required=False)
    p.add_argument("--demos", required=True, help="demo directory")
    p.add_argument("--out", default="criteria.json")
    p.set_defaults(func=cmd_learn_criteria)

    p = sub.add_parser("fit", help="fit conditioned per-transition policies")
    common(p, seed_required=False)
    p.add_argument("--demos", required=True, help="demo directory")
    p.add_argument("--out", default="policies.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("trial", help="run trials with fitted policies")
    common(p)
    p.add_argument("--demos", required=True, help="demo directory (for the scoring criteria)")
    p.add_argument("--policies", required=True, help="output of 'fit'")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--budget", type=float, help="trial time budget in seconds")
    p.add_argument("--parallel-trials", type=int, default=1, metavar="N")
    p.add_argument("--out", default="trials")
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("learn", help="run the composite learning loop")
    common(p)
    p.add_argument("--demos", help="demo directory (default: generate the shipped corpus)")
    p.add_argument("--max-trials", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--budget", type=float, help="per-trial time budget in seconds")
    p.add_argument("--out", default="learn_report.json")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("report", help="render a learn report as text")
    p.add_argument("report", help="JSON written by 'learn'")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        msg = f"file not found: {exc.filename or exc.args[0] if exc.args else exc}"
    except ConfigError as exc:
        msg = f"config error: {exc}"
    except (CliError, EvaluationError, PetriNetError, GprError, MissingPolicyError, OracleDivergence,
            KeyError, ValueError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
    print(f"compskill: {' '.join(msg.split())}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver for every pipeline stage.

Exit codes: 0 ok, 2 usage, 3 validation (bad inputs, bad config, bad scene),
4 runtime (a stage ran and failed). Every run starts by printing its effective
configuration as one JSON line, so logs double as reproduction recipes.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import bc, distill, perception, policies, proxy, rl, scenes, sim
from .bc import BcConfig
from .distill import DistillConfig
from .proxy import ProxyConfig
from .rl import RlConfig
from .scene import (SceneError, add_joint, cut_body, load_scene, save_scene,
                    scene_signature, scene_to_dict)


def data_dir():
    return os.environ.get("RIALTO_DATA_DIR", "rialto_data")


def resolve_scene(spec):
    """A bundled scene name or a path to a .scene file."""
    if os.path.exists(spec):
        return load_scene(spec)
    try:
        return scenes.bundled_scene(spec)
    except SceneError:
        raise SceneError(f"no scene file or bundled scene named {spec!r}") from None


def read_json(path):
    with open(path) as f:
        return json.load(f)


def apply_overrides(cfg, overrides):
    """Field-by-field dataclass override from parsed JSON; unknown keys rejected."""
    names = {f.name for f in dataclasses.fields(cfg)}
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise ValueError(f"unknown config keys for {type(cfg).__name__}: {unknown}")
    patch = {}
    for key, value in overrides.items():
        current = getattr(cfg, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            patch[key] = apply_overrides(current, value)
        elif isinstance(current, tuple) and isinstance(value, (list, tuple)):
            patch[key] = tuple(value)
        else:
            patch[key] = value
    return dataclasses.replace(cfg, **patch)


def load_config(cfg, path):
    return apply_overrides(cfg, read_json(path)) if path else cfg


def announce(command, **fields):
    print("config " + json.dumps({"command": command, **fields}, sort_keys=True,
                                 default=lambda o: dataclasses.asdict(o)))


def load_demo_dir(path):
    demos = bc.load_demos(path)
    sigs = {d.scene_sig for d in demos}
    if len(sigs) > 1:
        raise ValueError(f"{path} mixes demos from {len(sigs)} different scenes")
    return demos


# --- scene ops ----------------------------------------------------------------

def cmd_scene_validate(args):
    scene = resolve_scene(args.file)
    print(f"ok {scene.name}: {len(scene.bodies)} bodies, {len(scene.joints)} joints")
    return 0


def cmd_scene_show(args):
    scene = resolve_scene(args.file)
    print(f"{scene.name}  episode_length={scene.episode_length}")
    print(f"  workspace {scene.workspace}  camera {scene.camera.pose} fov={scene.camera.fov}")
    for b in scene.bodies:
        tags = "".join(t for t, on in (("fixed ", b.fixed), ("graspable ", b.graspable),
                                       ("distractor ", b.distractor)) if on)
        sites = f" sites={sorted(b.sites)}" if b.sites else ""
        print(f"  body {b.id}: {len(b.polygon)} verts, pose {b.pose} {tags.strip()}{sites}")
    for j in scene.joints:
        span = f" limits={j.limits}" if j.kind != "fixed" else ""
        print(f"  joint {j.id}: {j.kind} {j.parent} -> {j.child}{span}")
    print(f"  success {json.dumps(scene.success)}")
    return 0


def cmd_scene_cut(args):
    scene = resolve_scene(args.file)
    x0, y0, x1, y1 = args.segment
    out = cut_body(scene, args.body, (x0, y0), (x1, y1))
    save_scene(args.out, out)
    print(f"wrote {args.out}: {args.body} -> {args.body}_a + {args.body}_b")
    return 0


def cmd_scene_add_joint(args):
    scene = resolve_scene(args.file)
    joint = {"id": args.id, "parent": args.parent, "child": args.child,
             "kind": args.kind,
             "axis": tuple(args.axis) if args.axis else None,
             "anchor": tuple(args.anchor) if args.anchor else None,
             "limits": tuple(args.limits), "friction": args.friction}
    out = add_joint(scene, joint)
    save_scene(args.out, out)
    print(f"wrote {args.out}: joint {args.id} ({args.kind})")
    return 0


# --- data collection ------------------------------------------------------------

def cmd_demo_record(args):
    if args.source == "serve":
        raise ValueError("source 'serve' records through the websocket bridge; "
                         "start `rialto2d serve` and use the browser client")
    scene = resolve_scene(args.scene)
    out = args.out or os.path.join(data_dir(), "demos", scene.name, args.domain)
    if args.domain == "proxy":
        pcfg = load_config(ProxyConfig(), args.proxy_config)
        announce("demo record", scene=scene.name, domain="proxy", n=args.n,
                 seed=args.seed, proxy_seed=args.proxy_seed, proxy=pcfg, out=out)
        demos, _ = proxy.collect_proxy_demos(scene, pcfg, args.n, seed=args.seed,
                                             domain_seed=args.proxy_seed)
    else:
        announce("demo record", scene=scene.name, domain="sim", n=args.n,
                 seed=args.seed, out=out)
        demos = bc.collect_demos(scene, args.n, seed=args.seed)
    paths = bc.save_demos(out, demos)
    print(f"wrote {len(paths)} demos to {out}")
    return 0


# --- training -------------------------------------------------------------------

def cmd_train_bc(args):
    demos = load_demo_dir(args.demos)
    cfg = load_config(BcConfig(), args.config)
    announce("train bc", demos=args.demos, policy_kind=args.policy_kind,
             seed=args.seed, out=args.out, cfg=cfg)
    if args.policy_kind == "state":
        dataset = bc.StateDataset(demos)
        policy = policies.StatePolicy(dataset.x.shape[1], seed=args.seed)
    else:
        scene = resolve_scene(args.scene or demos[0].scene_name)
        dataset = bc.DemoDataset(demos, perception.AugmentConfig.for_scene(scene))
        policy = policies.ObsPolicy(seed=args.seed)
    losses = bc.train_bc(policy, dataset, cfg, np.random.default_rng(args.seed))
    policies.save_policy(args.out, policy, demos[0].scene_sig)
    print(f"wrote {args.out}  final_loss={float(np.mean(losses[-50:])):.4f}")
    return 0


def write_curve(path, curve):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["env_steps", "mean_episode_reward", "eval_success", "wall_seconds"])
        for row in curve:
            ev = "" if row["eval_success"] is None else f"{row['eval_success']:.6f}"
            w.writerow([row["env_steps"], f"{row['mean_episode_reward']:.6f}",
                        ev, f"{row['wall_seconds']:.3f}"])


def cmd_train_rl(args):
    scene = resolve_scene(args.scene)
    cfg = load_config(RlConfig(), args.config)
    if args.deterministic:
        cfg = dataclasses.replace(cfg, workers=1)
    elif args.workers:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    curve_path = args.curve or args.out + ".curve.csv"
    announce("train rl", scene=scene.name, demos=args.demos,
             policy_kind=args.policy_kind, seed=args.seed, out=args.out,
             curve=curve_path, cfg=cfg)
    demos = None
    dataset = None
    if args.demos != "none":
        demos = load_demo_dir(args.demos)
        if args.policy_kind == "state":
            dataset = bc.StateDataset(demos)
        else:
            dataset = bc.DemoDataset(demos, perception.AugmentConfig.for_scene(scene))
    if args.policy_kind == "state":
        policy = policies.StatePolicy(policies.state_dim(scene), seed=args.seed)
    else:
        policy = policies.ObsPolicy(seed=args.seed)
    curve = rl.train_rl(scene, policy, cfg, args.seed, demos=dataset,
                        log=lambda r: print(
                            f"  steps={r['env_steps']} reward={r['mean_episode_reward']:.3f}"
                            + (f" eval={r['eval_success']:.3f}"
                               if r["eval_success"] is not None else "")))
    write_curve(curve_path, curve)
    policies.save_policy(args.out, policy, scene_signature(scene))
    final = [r["eval_success"] for r in curve if r["eval_success"] is not None]
    print(f"wrote {args.out} and {curve_path}"
          + (f"  final_eval={final[-1]:.3f}" if final else ""))
    return 0


def cmd_inverse_distill(args):
    scene = resolve_scene(args.scene)
    policy, _ = policies.load_policy(args.policy)
    announce("inverse-distill", scene=scene.name, policy=args.policy, m=args.m,
             seed=args.seed, max_attempts=args.max_attempts, out=args.out)
    demos = distill.inverse_distill(policy, scene, m=args.m, seed=args.seed,
                                    max_attempts=args.max_attempts)
    paths = bc.save_demos(args.out, demos)
    steps = sum(len(d.steps) for d in demos)
    print(f"wrote {len(paths)} demos ({steps} steps) to {args.out}")
    return 0


def cmd_distill(args):
    scene = resolve_scene(args.scene)
    teacher, _ = policies.load_policy(args.teacher)
    if teacher.kind != "state":
        raise ValueError("the teacher must be a privileged-state policy")
    cfg = load_config(DistillConfig(), args.config)
    if args.no_cotrain:
        cfg = dataclasses.replace(cfg, cotrain=False)
    if args.no_distractors:
        cfg = dataclasses.replace(cfg, distractor=False)
    demos = load_demo_dir(args.proxy_demos) if args.proxy_demos else None
    announce("distill", scene=scene.name, teacher=args.teacher,
             proxy_demos=args.proxy_demos, seed=args.seed, out=args.out, cfg=cfg)
    student, report = distill.distill(teacher, scene, proxy_demos=demos, cfg=cfg,
                                      seed=args.seed,
                                      log=lambda e: print(f"  {e['stage']}: "
                                                          f"eval={e['eval_success']:.3f}"))
    policies.save_policy(args.out, student, scene_signature(scene))
    with open(args.out + ".report.json", "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    print(f"wrote {args.out}  best_eval={report['best_eval_success']:.3f}")
    return 0


# --- evaluation -------------------------------------------------------------------

def build_domain(scene, domain, proxy_config_path, proxy_seed):
    if domain == "sim":
        return proxy.SimDomain(scene)
    pcfg = load_config(ProxyConfig(), proxy_config_path)
    return proxy.make_proxy(scene, pcfg, seed=proxy_seed)


def cmd_eval(args):
    scene = resolve_scene(args.scene)
    policy, _ = policies.load_policy(args.policy)
    levels = tuple(s.strip() for s in args.levels.split(",") if s.strip())
    dom = build_domain(scene, args.domain, args.proxy_config, args.proxy_seed)
    announce("eval", scene=scene.name, policy=args.policy, domain=args.domain,
             levels=levels, episodes=args.episodes, seed=args.seed, mode=args.mode)
    report = proxy.evaluate_report(policy, dom, levels=levels,
                                   n_episodes=args.episodes, seed=args.seed,
                                   mode=args.mode)
    print(report.table())
    if args.out:
        with open(args.out, "w") as f:
            f.write(report.to_json())
        print(f"wrote {args.out}")
    return 0


# --- end to end --------------------------------------------------------------------

@dataclasses.dataclass
class PipelineConfig:
    n_demos: int = 15
    m: int = 15
    proxy_seed: int = 0
    eval_episodes: int = 10
    proxy: ProxyConfig = dataclasses.field(default_factory=ProxyConfig)
    bc: BcConfig = dataclasses.field(default_factory=BcConfig)
    rl: RlConfig = dataclasses.field(
        default_factory=lambda: RlConfig(eval_every=5, eval_episodes=32, stop_at=0.97))
    distill: DistillConfig = dataclasses.field(default_factory=DistillConfig)


def cmd_pipeline_run(args):
    scene = resolve_scene(args.scene)
    cfg = load_config(PipelineConfig(), args.config)
    out = args.out or os.path.join(data_dir(), "pipeline", scene.name)
    os.makedirs(out, exist_ok=True)
    announce("pipeline run", scene=scene.name, seed=args.seed, out=out, cfg=cfg)
    sig = scene_signature(scene)

    print(f"[1/6] recording {cfg.n_demos} proxy demos")
    demos, _ = proxy.collect_proxy_demos(scene, cfg.proxy, cfg.n_demos,
                                         seed=args.seed, domain_seed=cfg.proxy_seed)
    bc.save_demos(os.path.join(out, "proxy_demos"), demos)

    print("[2/6] behavior cloning a sensor policy on them")
    obs_cfg = perception.AugmentConfig.for_scene(scene)
    real_policy = policies.ObsPolicy(seed=args.seed)
    bc.train_bc(real_policy, bc.DemoDataset(demos, obs_cfg), cfg.bc,
                np.random.default_rng(args.seed))
    policies.save_policy(os.path.join(out, "bc_real.pol"), real_policy, sig)

    print(f"[3/6] inverse distillation: harvesting {cfg.m} privileged demos in sim")
    sim_demos = distill.inverse_distill(real_policy, scene, m=cfg.m, seed=args.seed)
    bc.save_demos(os.path.join(out, "sim_demos"), sim_demos)

    print("[4/6] demo-bootstrapped RL teacher")
    teacher = policies.StatePolicy(policies.state_dim(scene), seed=args.seed)
    curve = rl.train_rl(scene, teacher, cfg.rl, args.seed,
                        demos=bc.StateDataset(sim_demos),
                        log=lambda r: print(
                            f"  steps={r['env_steps']} reward={r['mean_episode_reward']:.3f}"
                            + (f" eval={r['eval_success']:.3f}"
                               if r["eval_success"] is not None else "")))
    write_curve(os.path.join(out, "teacher.curve.csv"), curve)
    policies.save_policy(os.path.join(out, "teacher.pol"), teacher, sig)

    print("[5/6] distilling into a sensor student (co-trained on the proxy demos)")
    student, report = distill.distill(teacher, scene, proxy_demos=demos,
                                      cfg=cfg.distill, seed=args.seed,
                                      log=lambda e: print(f"  {e['stage']}: "
                                                          f"eval={e['eval_success']:.3f}"))
    policies.save_policy(os.path.join(out, "student.pol"), student, sig)
    with open(os.path.join(out, "distill_report.json"), "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)

    print("[6/6] three-level evaluation, sim and proxy")
    results = {}
    for name in ("sim", "proxy"):
        dom = (proxy.SimDomain(scene) if name == "sim"
               else proxy.make_proxy(scene, cfg.proxy, seed=cfg.proxy_seed))
        rep = proxy.evaluate_report(student, dom, n_episodes=cfg.eval_episodes,
                                    seed=args.seed)
        print(rep.table())
        results[name] = json.loads(rep.to_json())
    with open(os.path.join(out, "report.json"), "w") as f:
        json.dump(results, f, indent=2, sort_keys=True)
    print(f"pipeline complete; artifacts in {out}")
    return 0


def cmd_serve(args):
    from . import bridge
    bridge.serve_forever(port=args.port)
    return 0


# --- parser --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="rialto2d",
                                description="planar real-to-sim-to-real pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    sc = sub.add_parser("scene", help="scene file operations").add_subparsers(
        dest="op", required=True)
    v = sc.add_parser("validate")
    v.add_argument("file")
    v.set_defaults(func=cmd_scene_validate)
    s = sc.add_parser("show")
    s.add_argument("file")
    s.set_defaults(func=cmd_scene_show)
    c = sc.add_parser("cut")
    c.add_argument("file")
    c.add_argument("--body", required=True)
    c.add_argument("--segment", nargs=4, type=float, required=True,
                   metavar=("X0", "Y0", "X1", "Y1"))
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_scene_cut)
    j = sc.add_parser("add-joint")
    j.add_argument("file")
    j.add_argument("--id", required=True)
    j.add_argument("--parent", required=True)
    j.add_argument("--child", required=True)
    j.add_argument("--kind", required=True, choices=["fixed", "prismatic", "revolute"])
    j.add_argument("--axis", nargs=2, type=float)
    j.add_argument("--anchor", nargs=2, type=float)
    j.add_argument("--limits", nargs=2, type=float, default=[0.0, 0.0])
    j.add_argument("--friction", type=float, default=0.1)
    j.add_argument("--out", required=True)
    j.set_defaults(func=cmd_scene_add_joint)

    d = sub.add_parser("demo", help="demo collection").add_subparsers(
        dest="op", required=True)
    r = d.add_parser("record")
    r.add_argument("--scene", required=True)
    r.add_argument("--domain", choices=["sim", "proxy"], default="sim")
    r.add_argument("--source", choices=["scripted", "serve"], default="scripted")
    r.add_argument("--n", type=int, default=15)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--proxy-config")
    r.add_argument("--proxy-seed", type=int, default=0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_demo_record)

    t = sub.add_parser("train", help="policy training").add_subparsers(
        dest="op", required=True)
    tb = t.add_parser("bc")
    tb.add_argument("--demos", required=True)
    tb.add_argument("--policy-kind", choices=["obs", "state"], default="obs")
    tb.add_argument("--scene")
    tb.add_argument("--config")
    tb.add_argument("--seed", type=int, default=0)
    tb.add_argument("--out", required=True)
    tb.set_defaults(func=cmd_train_bc)
    tr = t.add_parser("rl")
    tr.add_argument("--scene", required=True)
    tr.add_argument("--demos", required=True,
                    help="demo directory, or 'none' for RL from scratch")
    tr.add_argument("--policy-kind", choices=["state", "obs"], default="state")
    tr.add_argument("--config")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--workers", type=int)
    tr.add_argument("--deterministic", action="store_true",
                    help="force workers=1 for bitwise-reproducible curves")
    tr.add_argument("--curve")
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_train_rl)

    iv = sub.add_parser("inverse-distill",
                        help="harvest privileged sim demos from a sensor policy")
    iv.add_argument("--policy", required=True)
    iv.add_argument("--scene", required=True)
    iv.add_argument("--m", type=int, default=15)
    iv.add_argument("--seed", type=int, default=0)
    iv.add_argument("--max-attempts", type=int)
    iv.add_argument("--out", required=True)
    iv.set_defaults(func=cmd_inverse_distill)

    di = sub.add_parser("distill", help="teacher-student distillation")
    di.add_argument("--teacher", required=True)
    di.add_argument("--scene", required=True)
    di.add_argument("--proxy-demos")
    di.add_argument("--no-cotrain", action="store_true")
    di.add_argument("--no-distractors", action="store_true")
    di.add_argument("--config")
    di.add_argument("--seed", type=int, default=0)
    di.add_argument("--out", required=True)
    di.set_defaults(func=cmd_distill)

    ev = sub.add_parser("eval", help="robustness evaluation")
    ev.add_argument("--policy", required=True)
    ev.add_argument("--scene", required=True)
    ev.add_argument("--domain", choices=["sim", "proxy"], default="sim")
    ev.add_argument("--levels", default="pose,distractor,disturbance")
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--mode", choices=["sample", "greedy"], default="sample")
    ev.add_argument("--proxy-config")
    ev.add_argument("--proxy-seed", type=int, default=0)
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    pl = sub.add_parser("pipeline", help="end-to-end runs").add_subparsers(
        dest="op", required=True)
    pr = pl.add_parser("run")
    pr.add_argument("--scene", required=True)
    pr.add_argument("--config")
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_pipeline_run)

    sv = sub.add_parser("serve", help="websocket bridge for the browser client")
    sv.add_argument("--port", type=int, default=8391)
    sv.set_defaults(func=cmd_serve)
    return p


def one_line(exc):
    return "; ".join(part.strip() for part in str(exc).splitlines() if part.strip())


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SceneError, ValueError) as e:
        print(f"error: validation: {one_line(e)}", file=sys.stderr)
        return 3
    except (sim.SimError, proxy.ProxyError, distill.DistillError, OSError) as e:
        print(f"error: runtime: {one_line(e)}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

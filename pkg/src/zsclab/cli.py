"""Command-line surface.

Exit codes: 0 success, 1 check failure, 2 usage error, 3 resource-cap error.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

import numpy as np

from . import __version__
from .core import DecPomdp, ResourceCapError, expected_return, validate_decpomdp
from .envs import build_env, env_names
from .lfc import avg_offdiag, cluster_policies, lfc_payoff, xp_matrix
from .otherplay import op_value, op_value_mc, policies_equivalent, symmetrize
from .report import RunManifest, write_heatmap_svg, write_matrix_csv
from .serialize import (
    env_to_dict,
    load_env,
    load_iso,
    load_policy,
    save_env,
    save_iso,
    save_policy,
)
from .symmetry import (
    check_isomorphism,
    enumerate_automorphisms,
    relabel,
    sample_labeling,
)
from .tiebreak import (
    TieBreakConfig,
    encoded_width,
    init_hash_network,
    tie_break_value,
)
from .training import TrainConfig, train_op
from .verify import make_reference_procedure, make_tiebreak_procedure, run_all_checks

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3


class UsageError(Exception):
    pass


def _load_env_arg(spec: str) -> DecPomdp:
    """Accept either a catalog name or a path to an env JSON file."""
    if os.path.exists(spec):
        d = load_env(spec)
        problems = validate_decpomdp(d)
        if problems:
            raise UsageError(f"invalid environment file {spec}: {problems[0]}")
        return d
    if spec in env_names():
        return build_env(spec)
    raise UsageError(f"{spec!r} is neither a file nor a catalog name {env_names()}")


def _load_policies_arg(d: DecPomdp, spec: str):
    """A policy file, a directory of *.json policies, or a comma list."""
    paths: list[str]
    if os.path.isdir(spec):
        paths = sorted(glob.glob(os.path.join(spec, "*.json")))
    else:
        paths = [p for p in spec.split(",") if p]
    if not paths:
        raise UsageError(f"no policy files found at {spec!r}")
    out = []
    for p in paths:
        pol = load_policy(p)
        if pol.env_fingerprint and pol.env_fingerprint != d.fingerprint:
            raise UsageError(f"policy {p} was written for a different environment")
        if not pol.matches_env(d):
            raise UsageError(f"policy {p} does not match the environment shape")
        out.append((p, pol))
    return out


def _manifest(args, command: str, env: DecPomdp | None, extra: dict | None = None):
    if not args.out_dir:
        return
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    if extra:
        cfg.update(extra)
    RunManifest(
        command=command,
        config=cfg,
        master_seed=getattr(args, "seed", None),
        env_fingerprint=env.fingerprint if env is not None else None,
    ).write(args.out_dir)


def _emit(args, payload: dict):
    if args.format == "json":
        print(json.dumps(payload, indent=1, default=str))
    else:
        for key, value in payload.items():
            print(f"{key},{value}")


# -- env ----------------------------------------------------------------------


def cmd_env_list(args):
    for name in env_names():
        print(name)
    return EXIT_OK


def cmd_env_show(args):
    d = build_env(args.name) if args.name in env_names() else _load_env_arg(args.name)
    print(json.dumps(env_to_dict(d), indent=1))
    return EXIT_OK


# -- sym ----------------------------------------------------------------------


def cmd_sym_auts(args):
    d = _load_env_arg(args.env)
    auts = enumerate_automorphisms(d)
    print(f"count: {len(auts)}")
    for g in auts:
        print(
            json.dumps(
                {
                    "agents": list(g.agent_perm),
                    "states": list(g.state_map),
                    "actions": [list(m) for m in g.action_maps],
                    "observations": [list(m) for m in g.obs_maps],
                }
            )
        )
    return EXIT_OK


def cmd_sym_check(args):
    d = _load_env_arg(args.env_a)
    e = _load_env_arg(args.env_b)
    f = load_iso(args.iso)
    ok, violation = check_isomorphism(d, e, f)
    _emit(args, {"isomorphism": ok, "violation": violation or ""})
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_sym_relabel(args):
    d = _load_env_arg(args.env)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=args.seed)))
    f = sample_labeling(d, rng)
    e = relabel(d, f)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        save_env(e, os.path.join(args.out_dir, "relabeled_env.json"))
        save_iso(f, os.path.join(args.out_dir, "labeling.json"))
        _manifest(args, "sym relabel", d)
        print(os.path.join(args.out_dir, "relabeled_env.json"))
    else:
        from .serialize import iso_to_dict

        print(json.dumps({"env": env_to_dict(e), "labeling": iso_to_dict(f)}, indent=1))
    return EXIT_OK


# -- op -----------------------------------------------------------------------


def cmd_op_value(args):
    d = _load_env_arg(args.env)
    (_, pol), = _load_policies_arg(d, args.policy)
    if args.exact:
        value = op_value(d, pol)
        _emit(args, {"op_value": value, "mode": "exact"})
    else:
        mean, se = op_value_mc(d, pol, args.episodes, args.seed)
        _emit(args, {"op_value": mean, "std_err": se, "mode": "mc"})
    return EXIT_OK


def cmd_op_symmetrize(args):
    d = _load_env_arg(args.env)
    (_, pol), = _load_policies_arg(d, args.policy)
    sym = symmetrize(d, pol)
    save_policy(sym.policy, args.out, fingerprint=d.fingerprint)
    print(args.out)
    return EXIT_OK


def cmd_op_equiv(args):
    d = _load_env_arg(args.env)
    (_, p1), = _load_policies_arg(d, args.policy_a)
    (_, p2), = _load_policies_arg(d, args.policy_b)
    eq = policies_equivalent(d, p1, p2, tol=args.tol)
    _emit(args, {"equivalent": eq, "tol": args.tol})
    return EXIT_OK if eq else EXIT_CHECK_FAILED


# -- train ----------------------------------------------------------------------


def cmd_train(args):
    d = _load_env_arg(args.env)
    cfg = TrainConfig(
        n_steps=args.steps,
        batch_episodes=args.batch,
        entropy_coeff=args.alpha,
        learning_rate=args.lr,
        seed=args.seed,
    )
    result = train_op(d, cfg)
    save_policy(result.policy, args.out, fingerprint=d.fingerprint)
    if args.curve:
        from .report import write_curve_csv

        rows = [
            {
                "update_index": p.update,
                "mc_op_estimate": p.mc_op_estimate,
                "exact_op_value": p.exact_op_value,
                "entropy": p.entropy,
            }
            for p in result.curve
        ]
        write_curve_csv(
            args.curve, rows, ["update_index", "mc_op_estimate", "exact_op_value", "entropy"]
        )
    final = [p.exact_op_value for p in result.curve if p.exact_op_value is not None]
    _emit(
        args,
        {
            "policy": args.out,
            "env_steps": result.env_steps,
            "final_exact_op_value": final[-1] if final else "",
        },
    )
    return EXIT_OK


# -- tiebreak -------------------------------------------------------------------


def cmd_tiebreak(args):
    d = _load_env_arg(args.env)
    named = _load_policies_arg(d, args.policies)
    cfg = TieBreakConfig(
        n_samples=args.samples, hash_seed=args.hash_seed, exact_mode=args.exact
    )
    net = init_hash_network(args.hash_seed, encoded_width(d, cfg))
    ranked = []
    for idx, (path, pol) in enumerate(named):
        value = tie_break_value(d, pol, net, cfg, seed=args.seed + idx)
        ranked.append({"policy": path, "tie_break_value": value, "selected": False})
    best = max(range(len(ranked)), key=lambda i: ranked[i]["tie_break_value"])
    ranked[best]["selected"] = True
    with open(args.out, "w") as fh:
        json.dump(ranked, fh, indent=1)
    print(args.out)
    return EXIT_OK


# -- xp / cluster / lfc -----------------------------------------------------------


def cmd_xp(args):
    d = _load_env_arg(args.env)
    named = _load_policies_arg(d, args.policies)
    m = xp_matrix(
        d,
        [pol for _, pol in named],
        n_episodes=None if args.exact else args.episodes,
        seed=args.seed,
    )
    run_ids = [os.path.basename(p) for p, _ in named]
    write_matrix_csv(args.out, m.values, run_ids)
    if args.svg:
        write_heatmap_svg(args.svg, m.values, run_ids, title="cross-play values")
    _emit(args, {"matrix": args.out, "avg_offdiag": avg_offdiag(m)})
    return EXIT_OK


def cmd_cluster(args):
    d = _load_env_arg(args.env)
    named = _load_policies_arg(d, args.policies)
    classes = cluster_policies(
        d,
        [pol for _, pol in named],
        threshold=args.threshold,
        n_episodes=None if args.exact else args.episodes,
        seed=args.seed,
    )
    payload = {
        f"class_{ci}": ",".join(os.path.basename(named[m][0]) for m in cls.members)
        for ci, cls in enumerate(classes)
    }
    _emit(args, payload)
    return EXIT_OK


def _build_procedure(spec: dict):
    kind = spec.get("type")
    if kind == "reference_class":
        return make_reference_procedure(spec.get("policy", "repeat"))
    if kind == "tiebreak_reference":
        return make_tiebreak_procedure(hash_seed=int(spec.get("hash_seed", 0)))
    if kind == "train":
        cfg_kwargs = {
            "n_steps": int(spec.get("steps", 2000)),
            "batch_episodes": int(spec.get("batch", 32)),
            "entropy_coeff": float(spec.get("alpha", 0.5)),
        }

        def proc(env, rng):
            cfg = TrainConfig(seed=int(rng.integers(0, 2**31 - 1)), **cfg_kwargs)
            return train_op(env, cfg).policy

        return proc
    raise UsageError(f"unknown procedure type {kind!r}")


def cmd_lfc(args):
    d = _load_env_arg(args.env)
    with open(args.procedures) as fh:
        spec = json.load(fh)
    procs = [_build_procedure(s) for s in spec["procedures"]]
    if len(procs) == 1:
        procs = procs * d.n_agents
    mean, se = lfc_payoff(d, procs, n_outer=args.outer, seed=args.seed)
    _emit(args, {"lfc_payoff": mean, "std_err": se, "outer_rounds": args.outer})
    return EXIT_OK


# -- verify / experiment ----------------------------------------------------------


def cmd_verify(args):
    def progress(res):
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.computed} (target {res.target}, tol {res.tolerance}, {res.elapsed_s:.1f}s)")

    results = run_all_checks(progress=progress)
    report = {
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
    }
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=1)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_CHECK_FAILED


def cmd_experiment(args):
    from .experiment import emit_experiment_artifacts, run_experiment

    d = build_env(args.env)
    k_list = tuple(int(k) for k in args.k_list.split(","))
    result = run_experiment(
        args.env,
        n_runs=args.runs,
        seeds_per_run=args.seeds_per_run,
        k_list=k_list,
        n_steps=args.steps,
        batch_episodes=args.batch,
        hash_seed=args.hash_seed,
        master_seed=args.seed,
        processes=args.threads,
        exact_eval=args.exact,
        episodes=args.episodes,
    )
    out_dir = args.out_dir or f"experiment_{args.env}"
    args.out_dir = out_dir
    written = emit_experiment_artifacts(result, out_dir)
    _manifest(args, "experiment", d, extra={"k_list": list(k_list)})
    summary = {f"avg_offdiag_k{K}": v for K, v in sorted(result.avg_offdiag.items())}
    summary["classes"] = len(result.classes)
    summary["class_proportions"] = ",".join(
        f"{p:.3f}" for p in result.class_proportions()
    )
    summary["artifacts"] = ";".join(written)
    _emit(args, summary)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zsclab",
        description="Label-free coordination toolkit: symmetries, other-play, tie-breaking, cross-play.",
    )
    parser.add_argument("--version", action="version", version=f"zsclab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--threads", type=int, default=0, help="worker processes (0 = serial)")
    common.add_argument("--exact", action="store_true", help="prefer exact enumeration over sampling")
    common.add_argument("--out-dir", default=None, help="artifact directory (also gets a manifest)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    sub = parser.add_subparsers(dest="command", required=True)

    p_env = sub.add_parser("env", help="built-in environment catalog")
    env_sub = p_env.add_subparsers(dest="env_command", required=True)
    p = env_sub.add_parser("list", parents=[common])
    p.set_defaults(func=cmd_env_list)
    p = env_sub.add_parser("show", parents=[common])
    p.add_argument("name")
    p.set_defaults(func=cmd_env_show)

    p_sym = sub.add_parser("sym", help="isomorphisms and relabelings")
    sym_sub = p_sym.add_subparsers(dest="sym_command", required=True)
    p = sym_sub.add_parser("auts", parents=[common])
    p.add_argument("env")
    p.set_defaults(func=cmd_sym_auts)
    p = sym_sub.add_parser("check", parents=[common])
    p.add_argument("env_a")
    p.add_argument("env_b")
    p.add_argument("iso")
    p.set_defaults(func=cmd_sym_check)
    p = sym_sub.add_parser("relabel", parents=[common])
    p.add_argument("env")
    p.set_defaults(func=cmd_sym_relabel)

    p_op = sub.add_parser("op", help="other-play objective and symmetrizer")
    op_sub = p_op.add_subparsers(dest="op_command", required=True)
    p = op_sub.add_parser("value", parents=[common])
    p.add_argument("env")
    p.add_argument("policy")
    p.add_argument("--episodes", type=int, default=2048)
    p.set_defaults(func=cmd_op_value, exact_default=True)
    p = op_sub.add_parser("symmetrize", parents=[common])
    p.add_argument("env")
    p.add_argument("policy")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_op_symmetrize)
    p = op_sub.add_parser("equiv", parents=[common])
    p.add_argument("env")
    p.add_argument("policy_a")
    p.add_argument("policy_b")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_op_equiv)

    p = sub.add_parser("train", parents=[common], help="other-play policy-gradient training")
    p.add_argument("--env", required=True)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--alpha", type=float, default=0.5, help="entropy coefficient")
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--out", required=True)
    p.add_argument("--curve", default=None, help="CSV training-curve path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tiebreak", parents=[common], help="rank policies by tie-breaking value")
    p.add_argument("--env", required=True)
    p.add_argument("--policies", required=True)
    p.add_argument("--hash-seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=2048)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tiebreak)

    p = sub.add_parser("xp", parents=[common], help="cross-play matrix")
    p.add_argument("--env", required=True)
    p.add_argument("--policies", required=True)
    p.add_argument("--episodes", type=int, default=2048)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_xp)

    p = sub.add_parser("cluster", parents=[common], help="compatibility classes")
    p.add_argument("--env", required=True)
    p.add_argument("--policies", required=True)
    p.add_argument("--threshold", type=float, default=0.6)
    p.add_argument("--episodes", type=int, default=256)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("lfc", parents=[common], help="relabeling-protocol payoff")
    p.add_argument("--env", required=True)
    p.add_argument("--procedures", required=True, help="JSON file with a procedures list")
    p.add_argument("--outer", type=int, default=1000)
    p.set_defaults(func=cmd_lfc)

    p = sub.add_parser("verify", parents=[common], help="run the analytic check suite")
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", parents=[common], help="training + XP pipeline")
    p.add_argument("--env", required=True)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seeds-per-run", type=int, default=8)
    p.add_argument("--k-list", default="1,2,4,8")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--hash-seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=2048)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        code = EXIT_RESOURCE
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 invalid usage or configuration, 2 runtime failure.
Errors go to stderr prefixed with ``ERROR:``.
"""

import argparse
import csv
import logging
import os
import sys

import numpy as np

from .harness.config import ConfigError, load_config
from .solvers.trace import fmt

log = logging.getLogger("pnpreg")

VERBS = ("pretrain", "train-joint", "restore", "eval", "selfcheck", "study")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="pnpreg", description="Plug-and-play restoration with a learned "
                                            "regularizer gradient.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", metavar="PATH", help="experiment config file")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   dest="overrides", help="override a config key (section.key=value)")
    p.add_argument("--seed", type=int, help="base seed (run.seed)")
    p.add_argument("--jobs", type=int, help="parallel image runs (run.jobs)")
    p.add_argument("--out", metavar="DIR", help="output directory (run.out)")
    p.add_argument("--fp64", action="store_true", help="double precision networks")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _config(args):
    over = list(args.overrides)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        over.append(f"run.seed={args.seed}")
    if args.jobs is not None:
        over.append(f"run.jobs={args.jobs}")
    if args.out is not None:
        over.append(f"run.out={args.out}")
    if args.fp64:
        over.append("run.fp64=true")
    return load_config(args.config, over)


def _dtype(cfg):
    return np.float64 if cfg["run"]["fp64"] else np.float32


def _train_config(cfg, steps):
    from .training import TrainConfig

    t = cfg["train"]
    try:
        return TrainConfig(lam=t["lam"], alternation=t["alternation"],
                           batch_size=t["batch_size"], patch_size=t["patch_size"], lr=t["lr"],
                           lr_period=t["lr_period"], lr_floor=t["lr_floor"], steps=steps,
                           seed=cfg["run"]["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _training_images(cfg):
    from .data import toy_images
    from .harness.io import list_images, load_image

    d = cfg["data"]
    if d["images"].strip():
        paths = list_images(" ".join(cfg.resolve_path(p) for p in d["images"].split()))
        return [load_image(p, channels=d["channels"]) for p in paths]
    t = cfg["train"]
    return toy_images(t["toy_count"], t["toy_size"], d["channels"], seed=cfg["run"]["seed"])


def _heldout_images(cfg):
    from .data import toy_images

    t = cfg["train"]
    return toy_images(cfg["study"]["heldout_count"], t["toy_size"], cfg["data"]["channels"],
                      seed=cfg["study"]["heldout_seed"])


def _arch(cfg):
    t = cfg["train"]
    return {"base_channels": t["base_channels"], "scales": t["scales"], "blocks": t["blocks"]}


def _print_rows(header, rows):
    wr = csv.writer(sys.stdout, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow(r)


def cmd_pretrain(cfg):
    from .data import PatchDataset
    from .priors import save_checkpoint
    from .training import pretrain_denoiser

    out = cfg["run"]["out"]
    os.makedirs(out, exist_ok=True)
    tc = _train_config(cfg, cfg["train"]["pretrain_steps"])
    ds = PatchDataset(_training_images(cfg), tc.patch_size, seed=tc.seed)
    D = pretrain_denoiser(ds, tc, log_path=os.path.join(out, "pretrain_log.csv"),
                          dump_dir=out, dtype=_dtype(cfg), arch=_arch(cfg))
    path = os.path.join(out, "denoiser.pnpr")
    save_checkpoint(path, D)
    last = D.history[-1] if D.history else {"L_D": float("nan")}
    _print_rows(["checkpoint", "steps", "final_L_D"], [[path, tc.steps, fmt(last["L_D"])]])
    return 0


def cmd_train_joint(cfg):
    from .data import PatchDataset
    from .harness.experiment import load_network
    from .priors import ReGNet, save_checkpoint
    from .training import evaluate_losses, joint_train, make_heldout

    t = cfg["train"]
    out = cfg["run"]["out"]
    os.makedirs(out, exist_ok=True)
    D = load_network(cfg.resolve_path(t["denoiser"]), "denoiser", fp64=cfg["run"]["fp64"])
    if t["reg"]:
        G = load_network(cfg.resolve_path(t["reg"]), "reg", fp64=cfg["run"]["fp64"])
    else:
        G = ReGNet(D.channels, seed=cfg["run"]["seed"] + 1, dtype=D.dtype, **_arch(cfg))
    tc = _train_config(cfg, t["steps"])
    ds = PatchDataset(_training_images(cfg), tc.patch_size, seed=tc.seed)
    held = make_heldout(_heldout_images(cfg), tc, n_batches=8, seed=cfg["study"]["heldout_seed"])
    before = evaluate_losses(D, G, held, tc.lam)
    tag = "frozen" if t["freeze_denoiser"] else "joint"
    D, G = joint_train(D, G, ds, tc, freeze_denoiser=t["freeze_denoiser"],
                       log_path=os.path.join(out, f"{tag}_log.csv"), dump_dir=out)
    after = evaluate_losses(D, G, held, tc.lam)
    dpath = os.path.join(out, f"denoiser_{tag}.pnpr")
    gpath = os.path.join(out, f"reg_{tag}.pnpr")
    save_checkpoint(dpath, D)
    save_checkpoint(gpath, G)
    _print_rows(["stage", "L_D", "L_G", "L"],
                [[k, fmt(v["L_D"]), fmt(v["L_G"]), fmt(v["L"])]
                 for k, v in (("before", before), ("after", after))])
    return 0


def cmd_restore(cfg):
    from .harness.experiment import REPORT_COLUMNS, run_experiment

    rep = run_experiment(cfg)
    rows = [[r.index, r.name, fmt(r.psnr_input), fmt(r.psnr), r.iterations, r.status]
            for r in rep.results]
    rows.append(["", "mean", fmt(rep.mean_psnr_input), fmt(rep.mean_psnr), "",
                 f"{len(rep.ok)}/{len(rep.results)} ok"])
    _print_rows(REPORT_COLUMNS, rows)
    for name, status in rep.errors:
        print(f"ERROR: {name}: {status}", file=sys.stderr)
    return 0 if not rep.errors else 2


def cmd_eval(cfg):
    """Held-out losses of a (denoiser, reg) checkpoint pair."""
    from .harness.experiment import load_network
    from .priors import jacobian_asymmetry
    from .training import evaluate_losses, make_heldout

    t = cfg["train"]
    D = load_network(cfg.resolve_path(t["denoiser"]), "denoiser", fp64=cfg["run"]["fp64"])
    G = load_network(cfg.resolve_path(t["reg"]), "reg", fp64=cfg["run"]["fp64"])
    tc = _train_config(cfg, 0)
    held = make_heldout(_heldout_images(cfg), tc, n_batches=8, seed=cfg["study"]["heldout_seed"])
    res = evaluate_losses(D, G, held, tc.lam)
    # dense Jacobian: 8x8 patch keeps it at 64x64
    patch = held.x0[0][0, :1, :8, :8]
    res["jacobian_asymmetry"] = jacobian_asymmetry(G, patch)
    cols = ["L_D", "L_G", "L", "jacobian_asymmetry"]
    row = [fmt(res[c]) for c in cols]
    out = cfg["run"]["out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "eval.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        wr.writerow(row)
    _print_rows(cols, [row])
    return 0


def cmd_selfcheck(cfg):
    from .selfcheck import run_selfcheck, write_checks

    checks = run_selfcheck(seed=cfg["run"]["seed"])
    for c in checks:
        print(c.line())
    out = cfg["run"]["out"]
    os.makedirs(out, exist_ok=True)
    write_checks(checks, os.path.join(out, "selfcheck.csv"))
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    if failed:
        print(f"ERROR: {len(failed)} selfcheck(s) failed", file=sys.stderr)
        return 2
    return 0


def cmd_study(cfg):
    from .harness.experiment import load_network
    from .harness.studies import ablation_fixed_vs_joint, admm_stability_study

    st, fp64 = cfg["study"], cfg["run"]["fp64"]
    out = cfg["run"]["out"]

    def net(key, kind):
        return load_network(cfg.resolve_path(st[key]), kind, fp64=fp64)

    if st["kind"] == "ablation":
        rep = ablation_fixed_vs_joint(
            cfg, joint=(net("joint_denoiser", "denoiser"), net("joint_reg", "reg")),
            frozen=(net("frozen_denoiser", "denoiser"), net("frozen_reg", "reg")),
            heldout_images=_heldout_images(cfg), out_dir=out)
        _print_rows(["variant", "residual_identity_error"],
                    [[k, fmt(v)] for k, v in rep.residual_error.items()])
        print(f"mean_psnr_delta_joint_minus_frozen,{fmt(rep.mean_delta)}")
        return 0
    dens = {"original": net("original_denoiser", "denoiser"),
            "updated": net("updated_denoiser", "denoiser")}
    rep = admm_stability_study(cfg, dens, out_dir=out)
    _print_rows(["denoiser", "final_psnr"], [[k, fmt(v)] for k, v in rep.final_psnr.items()])
    return 0


COMMANDS = {"pretrain": cmd_pretrain, "train-joint": cmd_train_joint, "restore": cmd_restore,
            "eval": cmd_eval, "selfcheck": cmd_selfcheck, "study": cmd_study}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args)
        return COMMANDS[args.verb](cfg)
    except UsageError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("ERROR: interrupted", file=sys.stderr)
        return 2
    except Exception as exc:  # any other failure is a runtime error
        log.debug("failure", exc_info=True)
        print(f"ERROR: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

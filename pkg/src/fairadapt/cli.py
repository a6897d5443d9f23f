"""Command-line pipeline: prepare -> pretrain -> adapt -> evaluate ->
report, plus sweeps and the gradient-check suite.

Every subcommand exits 0 on success; failures print a machine-readable
JSON object to stderr and exit nonzero.  The `run` subcommand drives the
whole pipeline from one config file with per-stage caching: a stage is
skipped when its recorded config hash matches and its outputs exist.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import adapter as adapter_mod
from . import backbone as backbone_mod
from .config import DEFAULTS, load_config, parse_value, render_config, \
    stage_hash
from .data import load_bundle, load_interactions, prepare_bundle, save_bundle
from .gradcheck import run_all as run_grad_suite
from .losses import LossWeights
from .metrics import evaluate_ranking
from .synth import generate_tsv
from .trainer import TrainConfig, train_adapter

GROUP_NAMES = {3: ("head", "mid", "tail")}


def _fmt(value):
    """Stable text for CSV cells: repr for floats, '' for None."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(cell) for cell in row) + "\n")


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def group_names(num_groups):
    return GROUP_NAMES.get(num_groups,
                           tuple(f"g{i}" for i in range(num_groups)))


def check_metric_ranges(report, num_providers):
    """Every published report must satisfy the documented metric ranges."""
    checks = [
        ("ndcg", 0.0 <= report.ndcg <= 1.0),
        ("hit_rate", 0.0 <= report.hit_rate <= 1.0),
        ("mrr", 0.0 <= report.mrr <= 1.0),
        ("gini", 0.0 <= report.gini < 1.0),
        ("entropy", 0.0 <= report.entropy <= np.log2(max(num_providers, 2))
         + 1e-12),
        ("cv", report.cv >= 0.0),
    ]
    bad = [name for name, ok in checks if not ok]
    if bad:
        raise RuntimeError(f"metric out of range: {', '.join(bad)}")


def _parse_kv(pairs, what):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"{what} expects key=value, got {pair!r}")
        key, val = pair.split("=", 1)
        out[key.strip()] = val.strip()
    return out


# -- stage implementations ---------------------------------------------------


def _generate_from_cfg(cfg, path):
    generate_tsv(path,
                 num_users=int(cfg["data.users"]),
                 num_items=int(cfg["data.items"]),
                 num_providers=int(cfg["data.providers"]),
                 seed=int(cfg["seed"]),
                 skew=float(cfg["data.skew"]),
                 taste_blocks=int(cfg["data.taste_blocks"]),
                 taste_frac=float(cfg["data.taste_frac"]),
                 popularity_floor=float(cfg["data.popularity_floor"]),
                 min_per_user=int(cfg["data.min_per_user"]),
                 max_per_user=int(cfg["data.max_per_user"]))


def stage_prepare(cfg, out_dir):
    """Load or generate interactions and write bundle.json."""
    path = cfg["data.path"]
    if cfg["data.synthetic"]:
        path = os.path.join(out_dir, "synthetic.tsv")
        _generate_from_cfg(cfg, path)
    elif not path:
        raise ValueError("data.path is empty and data.synthetic is false")
    raw = load_interactions(path)
    bundle = prepare_bundle(raw,
                            k_core=int(cfg["data.k_core"]),
                            val_frac=float(cfg["data.val_frac"]),
                            test_frac=float(cfg["data.test_frac"]),
                            seed=int(cfg["seed"]))
    save_bundle(bundle, os.path.join(out_dir, "bundle.json"))
    return bundle


def stage_pretrain(cfg, out_dir, bundle):
    pcfg = backbone_mod.PretrainConfig(
        lr=float(cfg["pretrain.lr"]),
        epochs=int(cfg["pretrain.epochs"]),
        batch_size=int(cfg["pretrain.batch_size"]),
        dim=int(cfg["pretrain.dim"]),
        seed=int(cfg["seed"]),
        l2=float(cfg["pretrain.l2"]),
        eval_k=int(cfg["eval.k"]))
    result = backbone_mod.pretrain(bundle, pcfg)
    backbone_mod.save_table(result.table, os.path.join(out_dir,
                                                       "backbone.ckpt"))
    write_csv(os.path.join(out_dir, "pretrain_log.csv"),
              ["epoch", "loss", "val_ndcg"],
              [(r["epoch"], r["loss"], r["val_ndcg"]) for r in result.log])
    return result.table


def train_config_from(cfg):
    init_scale = cfg["adapt.init_scale"]
    candidates = cfg["adapt.candidates"]
    if candidates != "full":
        candidates = int(candidates)
    return TrainConfig(
        epochs=int(cfg["adapt.epochs"]),
        batch_size=int(cfg["adapt.batch_size"]),
        lr=float(cfg["adapt.lr"]),
        beta=float(cfg["adapt.beta"]),
        k=int(cfg["adapt.k"]),
        candidates=candidates,
        weights=LossWeights(float(cfg["adapt.lambda_inter"]),
                            float(cfg["adapt.lambda_intra"]),
                            float(cfg["adapt.lambda_acc"])),
        seed=int(cfg["seed"]),
        ndcg_floor=float(cfg["adapt.ndcg_floor"]),
        target=str(cfg["adapt.target"]),
        group_target=str(cfg["adapt.group_target"]),
        fairness=str(cfg["adapt.fairness"]),
        hidden=int(cfg["adapt.hidden"]),
        layers=int(cfg["adapt.layers"]),
        init_scale=None if init_scale == "" else float(init_scale))


def write_train_log(path, log):
    write_csv(path,
              ["epoch", "fairness_loss", "ndcg_loss", "total_loss",
               "val_ndcg", "val_gini"],
              [(r.epoch, r.fairness_loss, r.ndcg_loss, r.total_loss,
                r.val_ndcg, r.val_gini) for r in log])


def stage_adapt(cfg, out_dir, bundle, table):
    result = train_adapter(bundle, table, train_config_from(cfg))
    adapter_mod.save_adapter(result.checkpoint.params,
                             os.path.join(out_dir, "adapter.ckpt"))
    write_train_log(os.path.join(out_dir, "train_log.csv"), result.log)
    return result


def stage_evaluate(cfg, out_dir, bundle, table, params):
    scores = backbone_mod.score_all(table)
    if params is not None:
        scores = scores + adapter_mod.full_correction_matrix(table, params)
    k = int(cfg["eval.k"])
    report = evaluate_ranking(scores, bundle, k)
    check_metric_ranges(report, bundle.num_providers)
    write_json(os.path.join(out_dir, "metrics.json"), report.to_dict())
    write_csv(os.path.join(out_dir, "exposure.csv"),
              ["provider", "group", "exposure"],
              [(bundle.provider_labels[s],
                group_names(bundle.partition.num_groups)[
                    bundle.partition.provider_group[s]],
                report.exposure[s])
               for s in range(bundle.num_providers)])
    names = group_names(bundle.partition.num_groups)
    write_csv(os.path.join(out_dir, "subgroups.csv"),
              ["group", "share", "within_gini"],
              [(names[c], report.group_share[c], report.within_gini[c])
               for c in range(bundle.partition.num_groups)])
    return report


# -- pipeline orchestration ---------------------------------------------------

_STAGES = ("prepare", "pretrain", "adapt", "evaluate")

_STAGE_OUTPUTS = {
    "prepare": ("bundle.json",),
    "pretrain": ("backbone.ckpt", "pretrain_log.csv"),
    "adapt": ("adapter.ckpt", "train_log.csv"),
    "evaluate": ("metrics.json", "exposure.csv", "subgroups.csv"),
}


def _manifest_path(out_dir):
    return os.path.join(out_dir, "manifest.json")


def _load_manifest(out_dir):
    try:
        with open(_manifest_path(out_dir), "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError):
        return {}


def _outputs_exist(out_dir, stage):
    return all(os.path.exists(os.path.join(out_dir, name))
               for name in _STAGE_OUTPUTS[stage])


def run_pipeline(cfg, out_dir, upto="evaluate", echo=print):
    """Execute stages in order with config-hash caching.

    A stage reruns when its chained hash differs from the manifest or any
    of its outputs is missing; later stages then rerun too because the
    hash chain includes every upstream stage.
    """
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(render_config(cfg))
    manifest = _load_manifest(out_dir)
    bundle = table = result = params = None

    def need(stage):
        return (manifest.get(stage) != stage_hash(cfg, stage)
                or not _outputs_exist(out_dir, stage))

    stages = _STAGES[:_STAGES.index(upto) + 1]
    for stage in stages:
        if not need(stage):
            echo(f"[{stage}] cached, skipping")
            continue
        echo(f"[{stage}] running")
        try:
            if stage == "prepare":
                bundle = stage_prepare(cfg, out_dir)
            elif stage == "pretrain":
                if bundle is None:
                    bundle = load_bundle(os.path.join(out_dir,
                                                      "bundle.json"))
                table = stage_pretrain(cfg, out_dir, bundle)
            elif stage == "adapt":
                if bundle is None:
                    bundle = load_bundle(os.path.join(out_dir,
                                                      "bundle.json"))
                if table is None:
                    table = backbone_mod.load_table(
                        os.path.join(out_dir, "backbone.ckpt"))
                result = stage_adapt(cfg, out_dir, bundle, table)
                params = result.checkpoint.params
            elif stage == "evaluate":
                if bundle is None:
                    bundle = load_bundle(os.path.join(out_dir,
                                                      "bundle.json"))
                if table is None:
                    table = backbone_mod.load_table(
                        os.path.join(out_dir, "backbone.ckpt"))
                if params is None:
                    params = adapter_mod.load_adapter(
                        os.path.join(out_dir, "adapter.ckpt"))
                stage_evaluate(cfg, out_dir, bundle, table, params)
        except Exception as exc:
            raise RuntimeError(f"stage {stage} failed: {exc}") from exc
        manifest[stage] = stage_hash(cfg, stage)
        write_json(_manifest_path(out_dir), manifest)
    return out_dir


# -- subcommand handlers -------------------------------------------------------


def cmd_prepare(args):
    overrides = {}
    if args.synthetic is not None:
        overrides["data.synthetic"] = True
        synth_keys = {"users": "data.users", "items": "data.items",
                      "providers": "data.providers", "skew": "data.skew",
                      "taste_blocks": "data.taste_blocks",
                      "taste_frac": "data.taste_frac",
                      "popularity_floor": "data.popularity_floor",
                      "min_per_user": "data.min_per_user",
                      "max_per_user": "data.max_per_user"}
        for key, val in _parse_kv(args.synthetic, "--synthetic").items():
            if key not in synth_keys:
                raise ValueError(f"unknown synthetic option {key!r}")
            overrides[synth_keys[key]] = parse_value(val)
    if args.data:
        overrides["data.path"] = args.data
    for key, flag in (("data.k_core", args.k_core),
                      ("data.val_frac", args.val_frac),
                      ("data.test_frac", args.test_frac),
                      ("seed", args.seed)):
        if flag is not None:
            overrides[key] = flag
    cfg = load_config(None, overrides)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    path = cfg["data.path"]
    if cfg["data.synthetic"]:
        path = os.path.splitext(args.out)[0] + ".tsv"
        _generate_from_cfg(cfg, path)
    elif not path:
        raise ValueError("pass --data <tsv> or --synthetic")
    raw = load_interactions(path)
    bundle = prepare_bundle(raw, k_core=int(cfg["data.k_core"]),
                            val_frac=float(cfg["data.val_frac"]),
                            test_frac=float(cfg["data.test_frac"]),
                            seed=int(cfg["seed"]))
    save_bundle(bundle, args.out)
    print(json.dumps({"users": bundle.num_users, "items": bundle.num_items,
                      "providers": bundle.num_providers,
                      "bundle": args.out}, sort_keys=True))
    return 0


def cmd_pretrain(args):
    bundle = load_bundle(args.data)
    cfg = backbone_mod.PretrainConfig(
        lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
        dim=args.dim, seed=args.seed, l2=args.l2, eval_k=args.k)
    result = backbone_mod.pretrain(bundle, cfg)
    backbone_mod.save_table(result.table, args.out)
    if args.log:
        write_csv(args.log, ["epoch", "loss", "val_ndcg"],
                  [(r["epoch"], r["loss"], r["val_ndcg"])
                   for r in result.log])
    print(json.dumps({"best_epoch": result.best_epoch,
                      "best_val_ndcg": result.best_val_ndcg,
                      "checkpoint": args.out}, sort_keys=True))
    return 0


def cmd_adapt(args):
    bundle = load_bundle(args.data)
    table = backbone_mod.load_table(args.backbone)
    overrides = {
        "adapt.lambda_acc": args.lambda_acc,
        "adapt.lambda_inter": args.lambda_inter,
        "adapt.lambda_intra": args.lambda_intra,
        "adapt.target": args.target,
        "adapt.group_target": args.group_target,
        "adapt.fairness": args.fairness,
        "adapt.epochs": args.epochs,
        "adapt.lr": args.lr,
        "adapt.beta": args.beta,
        "adapt.k": args.k,
        "adapt.candidates": args.candidates,
        "adapt.batch_size": args.batch_size,
        "adapt.ndcg_floor": args.ndcg_floor,
        "adapt.hidden": args.hidden,
        "adapt.layers": args.layers,
        "adapt.init_scale": args.init_scale,
        "seed": args.seed,
    }
    cfg = load_config(None, overrides)
    result = train_adapter(bundle, table, train_config_from(cfg))
    adapter_mod.save_adapter(result.checkpoint.params, args.out)
    log_path = args.log or os.path.join(
        os.path.dirname(os.path.abspath(args.out)), "train_log.csv")
    write_train_log(log_path, result.log)
    print(json.dumps({
        "best_epoch": result.checkpoint.epoch,
        "val_ndcg": result.checkpoint.val_ndcg,
        "val_gini": result.checkpoint.val_gini,
        "base_val_ndcg": result.base_ndcg,
        "base_val_gini": result.base_gini,
        "checkpoint": args.out, "train_log": log_path}, sort_keys=True))
    return 0


def _eval_report(args):
    bundle = load_bundle(args.data)
    table = backbone_mod.load_table(args.backbone)
    scores = backbone_mod.score_all(table)
    if args.adapter:
        params = adapter_mod.load_adapter(args.adapter)
        scores = scores + adapter_mod.full_correction_matrix(table, params)
    report = evaluate_ranking(scores, bundle, args.k)
    check_metric_ranges(report, bundle.num_providers)
    return bundle, report


def cmd_evaluate(args):
    bundle, report = _eval_report(args)
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, "metrics.json"), report.to_dict())
    names = group_names(bundle.partition.num_groups)
    write_csv(os.path.join(args.out, "exposure.csv"),
              ["provider", "group", "exposure"],
              [(bundle.provider_labels[s],
                names[bundle.partition.provider_group[s]],
                report.exposure[s])
               for s in range(bundle.num_providers)])
    print(json.dumps({"ndcg": report.ndcg, "gini": report.gini,
                      "out": args.out}, sort_keys=True))
    return 0


def cmd_report(args):
    bundle, report = _eval_report(args)
    os.makedirs(args.out, exist_ok=True)
    names = group_names(bundle.partition.num_groups)
    write_csv(os.path.join(args.out, "subgroups.csv"),
              ["group", "share", "within_gini"],
              [(names[c], report.group_share[c], report.within_gini[c])
               for c in range(bundle.partition.num_groups)])
    print(json.dumps({"out": os.path.join(args.out, "subgroups.csv")},
                     sort_keys=True))
    return 0


def cmd_grad_check(args):
    results = run_grad_suite(eps=args.eps, tol=args.tol)
    for res in results:
        print(res.row())
    failures = [r.name for r in results if not r.ok]
    if args.out:
        write_json(args.out, [{"name": r.name, "ok": r.ok,
                               "max_rel_error": r.max_rel_error,
                               "n": r.size} for r in results])
    if failures:
        print(json.dumps({"failed": failures}, sort_keys=True),
              file=sys.stderr)
        return 1
    print(f"all {len(results)} gradient checks passed")
    return 0


def cmd_run(args):
    overrides = _parse_config_sets(args.set)
    if args.out:
        overrides["out"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_config(args.config, overrides)
    out_dir = cfg["out"]
    if args.stage == "grad-check":
        ns = argparse.Namespace(eps=1e-4, tol=1e-3, out=None)
        return cmd_grad_check(ns)
    upto = args.stage or "evaluate"
    run_pipeline(cfg, out_dir, upto=upto)
    print(json.dumps({"out": out_dir}, sort_keys=True))
    return 0


def _parse_config_sets(pairs):
    return {key: parse_value(val)
            for key, val in _parse_kv(pairs, "--set").items()}


_SWEEP_AXES = ("lambda_acc", "inter_intra_ratio", "hidden_dim", "layers")


def cmd_sweep(args):
    if args.axis not in _SWEEP_AXES:
        raise ValueError(f"axis must be one of {_SWEEP_AXES}")
    overrides = _parse_config_sets(args.set)
    cfg = load_config(args.config, overrides)
    out_dir = args.out or cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    # Shared stages: prepare + pretrain once for every value.
    run_pipeline(cfg, out_dir, upto="pretrain")
    bundle = load_bundle(os.path.join(out_dir, "bundle.json"))
    table = backbone_mod.load_table(os.path.join(out_dir, "backbone.ckpt"))

    names = group_names(bundle.partition.num_groups)
    header = (["value", "ndcg", "gini", "entropy", "cv"]
              + [f"share_{n}" for n in names]
              + [f"gini_{n}" for n in names] + ["error"])
    rows = []
    for raw_value in args.values.split(","):
        value = raw_value.strip()
        sub_cfg = dict(cfg)
        if args.axis == "lambda_acc":
            sub_cfg["adapt.lambda_acc"] = float(value)
        elif args.axis == "hidden_dim":
            sub_cfg["adapt.hidden"] = int(value)
        elif args.axis == "layers":
            sub_cfg["adapt.layers"] = int(value)
        else:
            inter, intra = value.split(":")
            sub_cfg["adapt.lambda_inter"] = float(inter)
            sub_cfg["adapt.lambda_intra"] = float(intra)
        sub_dir = os.path.join(out_dir, f"{args.axis}={value}")
        os.makedirs(sub_dir, exist_ok=True)
        try:
            result = train_adapter(bundle, table, train_config_from(sub_cfg))
            adapter_mod.save_adapter(result.checkpoint.params,
                                     os.path.join(sub_dir, "adapter.ckpt"))
            write_train_log(os.path.join(sub_dir, "train_log.csv"),
                            result.log)
            report = stage_evaluate(sub_cfg, sub_dir, bundle, table,
                                    result.checkpoint.params)
            rows.append([value, report.ndcg, report.gini, report.entropy,
                         report.cv]
                        + [report.group_share[c] for c in range(len(names))]
                        + [report.within_gini[c] for c in range(len(names))]
                        + [""])
        except Exception as exc:  # record and continue with other values
            rows.append([value] + [""] * (len(header) - 2)
                        + [f"{type(exc).__name__}: {exc}"])
    summary = os.path.join(out_dir, "summary.csv")
    write_csv(summary, header, rows)
    print(json.dumps({"summary": summary, "values": len(rows)},
                     sort_keys=True))
    return 0


# -- argument parsing ----------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fairadapt",
        description="Exposure-fair recommendation via a frozen backbone "
                    "plus a differentiable-sorting-trained adapter.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a dataset bundle")
    p.add_argument("--data", help="interactions TSV (user, item, provider)")
    p.add_argument("--synthetic", nargs="*", metavar="KEY=VALUE",
                   help="generate synthetic data (skew=, users=, items=, "
                        "providers=, taste_blocks=, taste_frac=, "
                        "popularity_floor=, min_per_user=, max_per_user=)")
    p.add_argument("--k-core", type=int, dest="k_core")
    p.add_argument("--val-frac", type=float, dest="val_frac")
    p.add_argument("--test-frac", type=float, dest="test_frac")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="bundle JSON path")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("pretrain", help="train the MF backbone with BPR")
    p.add_argument("--data", required=True)
    p.add_argument("--lr", type=float, default=DEFAULTS["pretrain.lr"])
    p.add_argument("--epochs", type=int,
                   default=DEFAULTS["pretrain.epochs"])
    p.add_argument("--batch-size", type=int, dest="batch_size",
                   default=DEFAULTS["pretrain.batch_size"])
    p.add_argument("--dim", type=int, default=DEFAULTS["pretrain.dim"])
    p.add_argument("--l2", type=float, default=DEFAULTS["pretrain.l2"])
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.add_argument("--k", type=int, default=DEFAULTS["eval.k"])
    p.add_argument("--log", help="optional epoch-log CSV path")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("adapt", help="train the fairness adapter")
    p.add_argument("--data", required=True)
    p.add_argument("--backbone", required=True)
    p.add_argument("--lambda-acc", type=float, dest="lambda_acc",
                   default=DEFAULTS["adapt.lambda_acc"])
    p.add_argument("--lambda-inter", type=float, dest="lambda_inter",
                   default=DEFAULTS["adapt.lambda_inter"])
    p.add_argument("--lambda-intra", type=float, dest="lambda_intra",
                   default=DEFAULTS["adapt.lambda_intra"])
    p.add_argument("--target", default=DEFAULTS["adapt.target"],
                   choices=["uniform_group", "uniform_provider"])
    p.add_argument("--group-target", dest="group_target",
                   default=DEFAULTS["adapt.group_target"],
                   choices=["aggregated", "uniform"])
    p.add_argument("--fairness", default=DEFAULTS["adapt.fairness"],
                   choices=["hierarchical", "global"])
    p.add_argument("--epochs", type=int, default=DEFAULTS["adapt.epochs"])
    p.add_argument("--lr", type=float, default=DEFAULTS["adapt.lr"])
    p.add_argument("--beta", type=float, default=DEFAULTS["adapt.beta"])
    p.add_argument("--k", type=int, default=DEFAULTS["adapt.k"])
    p.add_argument("--candidates", default=DEFAULTS["adapt.candidates"])
    p.add_argument("--batch-size", type=int, dest="batch_size",
                   default=DEFAULTS["adapt.batch_size"])
    p.add_argument("--ndcg-floor", type=float, dest="ndcg_floor",
                   default=DEFAULTS["adapt.ndcg_floor"])
    p.add_argument("--hidden", type=int, default=DEFAULTS["adapt.hidden"])
    p.add_argument("--layers", type=int, default=DEFAULTS["adapt.layers"])
    p.add_argument("--init-scale", dest="init_scale",
                   default=DEFAULTS["adapt.init_scale"])
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.add_argument("--log", help="train_log.csv path (default: next to "
                                 "the checkpoint)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapt)

    for name, func in (("evaluate", cmd_evaluate), ("report", cmd_report)):
        p = sub.add_parser(name)
        p.add_argument("--data", required=True)
        p.add_argument("--backbone", required=True)
        p.add_argument("--adapter", help="adapter checkpoint (omit for the "
                                         "base model)")
        p.add_argument("--k", type=int, default=DEFAULTS["eval.k"])
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="run one experiment per axis value")
    p.add_argument("--config")
    p.add_argument("--axis", required=True, choices=_SWEEP_AXES)
    p.add_argument("--values", required=True,
                   help="comma-separated values (ratios as inter:intra)")
    p.add_argument("--set", nargs="*", metavar="KEY=VALUE")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grad-check", help="finite-difference suite")
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--out", help="optional JSON result path")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("run", help="full pipeline with stage caching")
    p.add_argument("--config")
    p.add_argument("--set", nargs="*", metavar="KEY=VALUE")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--stage",
                   choices=list(_STAGES) + ["grad-check"],
                   help="stop after this stage (or run grad-check)")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__,
                          "message": str(exc)}, sort_keys=True),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

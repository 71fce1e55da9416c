"""Command-line interface.

Subcommands: ``zoo build``, ``zoo validate``, ``detect dl``, ``detect df``,
``invert``, ``eval roc``, ``eval pr``, ``report``. A JSON config file can
supply defaults for any flag (see README for the schema); explicit flags
win. Exit codes: 0 success, 1 usage error, 2 data/model format error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .container import atomic_write_text, canonical_json
from .data.synthetic import load_dataset
from .detect.data_free import DataFreeDetector, invert_input, logit_increase
from .detect.data_limited import DataLimitedDetector
from .detect.export import export_inversion
from .errors import ConfigError, FormatError, NumericalError, TrojanScanError
from .eval.experiments import (
    imbalanced_eval,
    run_df_experiment,
    run_dl_experiment,
    run_recovery_experiment,
)
from .eval.metrics import build_metrics_report
from .eval.zoo import ZooConfig, build_zoo, load_manifest, validate_zoo
from .nn.io import load_model
from .solver.composite import SolverConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _merge(section, overrides):
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _solver_from(section):
    if not section:
        return None
    return SolverConfig(**section)


def _write_json(path, obj):
    atomic_write_text(path, canonical_json(obj) + "\n")
    print(f"wrote {path}")


def _write_curve_csv(path, header, points):
    lines = [header]
    for row in points:
        lines.append(",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
    print(f"wrote {path}")


def _cmd_zoo_build(args):
    file_cfg = _load_config(args.config).get("zoo", {})
    overrides = {
        "num_clean": args.clean,
        "num_trojan": args.trojan,
        "poison_ratio": args.poison_ratio,
        "epochs": args.epochs,
        "seed": args.seed,
    }
    cfg = ZooConfig.from_dict(_merge(file_cfg, overrides))
    manifest = build_zoo(cfg, args.out, jobs=args.jobs)
    ok = sum(1 for m in manifest["models"] if m.get("valid"))
    print(f"zoo built at {args.out}: {len(manifest['models'])} models, {ok} valid")
    print(f"manifest hash: {manifest['manifest_hash']}")
    return EXIT_OK


def _cmd_zoo_validate(args):
    report = validate_zoo(args.zoo_dir)
    if args.out:
        _write_json(args.out, report)
    for row in report["models"]:
        line = f"{row['model_id']}: accuracy={row.get('test_accuracy')}"
        if "attack_success_rate" in row:
            line += f" asr={row['attack_success_rate']:.3f}"
        print(line)
    print(f"manifest hash ok: {report['hash_ok']}; all checks ok: {report['all_ok']}")
    return EXIT_OK if report["all_ok"] else EXIT_FORMAT


def _cmd_detect_dl(args):
    file_cfg = _load_config(args.config).get("dl", {})
    solver = _solver_from(file_cfg.pop("solver", None))
    overrides = {
        "quantile": args.quantile,
        "threshold": args.threshold,
        "rule": args.rule,
        "tau": args.tau,
        "seed": args.seed,
    }
    if args.lambdas:
        overrides["lambdas"] = tuple(args.lambdas)
    params = _merge(file_cfg, overrides)
    model = load_model(args.model).strip_provenance()
    val = load_dataset(args.val_images)
    det = DataLimitedDetector(solver=solver, **params)
    det.fit(model, val.images)
    payload = det.result_.to_dict()
    payload["model"] = os.path.basename(args.model)
    payload["suspicion"] = det.suspicion_
    if args.out:
        _write_json(args.out, payload)
    print(f"decision: {payload['decision']} targets={payload['targets']} "
          f"indices={np.round(det.indices_, 3).tolist()}")
    return EXIT_OK


def _cmd_detect_df(args):
    file_cfg = _load_config(args.config).get("df", {})
    solver = _solver_from(file_cfg.pop("solver", None))
    overrides = {
        "n_seeds": args.n_seeds,
        "seed_source": args.seeds,
        "lam": args.lam,
        "threshold": args.threshold,
        "seed": args.seed,
    }
    if args.refine:
        overrides["refine_pass"] = True
    params = _merge(file_cfg, overrides)
    model = load_model(args.model).strip_provenance()
    pool = None
    if params.get("seed_source") == "clean":
        if not args.seed_images:
            raise ConfigError("--seeds clean requires --seed-images DATASET")
        pool = load_dataset(args.seed_images).images
    det = DataFreeDetector(solver=solver, **params)
    det.fit(model, pool)
    payload = det.result_.to_dict()
    payload["model"] = os.path.basename(args.model)
    payload["suspicion"] = det.suspicion_
    if args.out:
        _write_json(args.out, payload)
    print(f"decision: {payload['decision']} targets={payload['targets']} "
          f"logit_increases={np.round(det.logit_increases_, 2).tolist()}")
    return EXIT_OK


def _cmd_invert(args):
    file_cfg = _load_config(args.config).get("df", {})
    solver_section = file_cfg.get("solver", {})
    if args.iterations:
        solver_section = dict(solver_section, iterations=args.iterations)
    solver = _solver_from(solver_section) or SolverConfig(
        iterations=2000, lr=0.05, lr_delta_scale=255.0, lr_w_scale=0.02,
        init_delta="random",
    )
    model = load_model(args.model).strip_provenance()
    det = DataFreeDetector(n_seeds=args.n_seeds, lam=args.lam, solver=solver,
                           seed=args.seed)
    batch = det.make_seeds(model)
    inversion = invert_input(model, batch.images, args.lam, solver, seed=args.seed)
    increases = logit_increase(model, batch.images, inversion)
    files = export_inversion(inversion, args.out, logit_increases=increases)
    print(f"wrote {len(files)} files to {args.out}")
    print(f"logit increases: {np.round(increases, 2).tolist()}")
    return EXIT_OK


def _load_scores(path):
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if "scores" not in payload or "labels" not in payload:
        raise ConfigError("scores file must hold {'scores': {...}, 'labels': {...}}")
    return payload["scores"], {k: bool(v) for k, v in payload["labels"].items()}


def _cmd_eval_roc(args):
    scores, labels = _load_scores(args.scores)
    report = build_metrics_report(scores, labels)
    print(f"ROC AUC: {report.auc:.4f}")
    if args.out:
        _write_json(args.out, report.to_dict())
    if args.csv:
        _write_curve_csv(args.csv, "threshold,fpr,tpr", report.roc_points)
    return EXIT_OK


def _cmd_eval_pr(args):
    scores, labels = _load_scores(args.scores)
    report = imbalanced_eval(scores, labels)
    print(f"PR AUC: {report.pr_auc_value:.4f} (ROC AUC {report.auc:.4f})")
    if args.out:
        _write_json(args.out, report.to_dict())
    if args.csv:
        _write_curve_csv(args.csv, "threshold,recall,precision", report.pr_points)
    return EXIT_OK


def _cmd_report(args):
    file_cfg = _load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    manifest = load_manifest(args.zoo_dir)
    report = {"zoo_hash": manifest.get("manifest_hash"), "seed": args.seed}
    if not args.skip_dl:
        dl_params = dict(file_cfg.get("dl", {}))
        solver = _solver_from(dl_params.pop("solver", None))
        result = run_dl_experiment(
            args.zoo_dir, {**dl_params, "solver": solver},
            val_per_class=args.val_per_class, seed=args.seed,
        )
        report["dl"] = result.to_dict()
        main = result.reports[result.main_quantile]
        _write_curve_csv(os.path.join(args.out, "dl_roc.csv"),
                         "threshold,fpr,tpr", main.roc_points)
    if not args.skip_df:
        df_params = dict(file_cfg.get("df", {}))
        solver = _solver_from(df_params.pop("solver", None))
        result = run_df_experiment(
            args.zoo_dir, {**df_params, "solver": solver}, seed=args.seed,
        )
        report["df"] = result.to_dict()
        for source, rep in result.reports.items():
            _write_curve_csv(os.path.join(args.out, f"df_roc_{source}.csv"),
                             "threshold,fpr,tpr", rep.roc_points)
    if args.recovery:
        rec = run_recovery_experiment(args.zoo_dir, seed=args.seed)
        report["recovery"] = rec.to_dict()
    _write_json(os.path.join(args.out, "report.json"), report)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="trojanscan",
                description="Backdoor detection for small CNN classifiers")
    p.add_argument("--config", help="JSON config file supplying defaults")
    sub = p.add_subparsers(dest="command", required=True)

    zoo = sub.add_parser("zoo", help="build or validate a model zoo")
    zoo_sub = zoo.add_subparsers(dest="zoo_command", required=True)
    zb = zoo_sub.add_parser("build", help="train and persist a zoo")
    zb.add_argument("--out", required=True)
    zb.add_argument("--clean", type=int)
    zb.add_argument("--trojan", type=int)
    zb.add_argument("--poison-ratio", type=float, dest="poison_ratio")
    zb.add_argument("--epochs", type=int)
    zb.add_argument("--seed", type=int)
    zb.add_argument("--jobs", type=int, default=1)
    zb.set_defaults(func=_cmd_zoo_build)
    zv = zoo_sub.add_parser("validate", help="recheck a persisted zoo")
    zv.add_argument("zoo_dir")
    zv.add_argument("--out")
    zv.set_defaults(func=_cmd_zoo_validate)

    det = sub.add_parser("detect", help="run a detector on one model file")
    det_sub = det.add_subparsers(dest="detector", required=True)
    dl = det_sub.add_parser("dl", help="data-limited detector")
    dl.add_argument("model")
    dl.add_argument("--val-images", required=True, dest="val_images",
                    help="dataset container with clean validation images")
    dl.add_argument("--quantile", type=float)
    dl.add_argument("--threshold", type=float)
    dl.add_argument("--rule", choices=("threshold", "mad"))
    dl.add_argument("--tau", type=float)
    dl.add_argument("--lambdas", type=float, nargs="+")
    dl.add_argument("--seed", type=int, default=0)
    dl.add_argument("--out")
    dl.set_defaults(func=_cmd_detect_dl)
    df = det_sub.add_parser("df", help="data-free detector")
    df.add_argument("model")
    df.add_argument("--seeds", choices=("noise", "clean"))
    df.add_argument("--seed-images", dest="seed_images",
                    help="dataset container for --seeds clean")
    df.add_argument("--n-seeds", type=int, dest="n_seeds")
    df.add_argument("--lam", type=float)
    df.add_argument("--threshold", type=float)
    df.add_argument("--refine", action="store_true")
    df.add_argument("--seed", type=int, default=0)
    df.add_argument("--out")
    df.set_defaults(func=_cmd_detect_df)

    inv = sub.add_parser("invert", help="single-model inversion with image export")
    inv.add_argument("model")
    inv.add_argument("--out", required=True)
    inv.add_argument("--n-seeds", type=int, default=10, dest="n_seeds")
    inv.add_argument("--lam", type=float, default=0.12)
    inv.add_argument("--iterations", type=int)
    inv.add_argument("--seed", type=int, default=0)
    inv.set_defaults(func=_cmd_invert)

    ev = sub.add_parser("eval", help="metrics from a scores file")
    ev_sub = ev.add_subparsers(dest="metric", required=True)
    roc = ev_sub.add_parser("roc")
    roc.add_argument("--scores", required=True)
    roc.add_argument("--out")
    roc.add_argument("--csv")
    roc.set_defaults(func=_cmd_eval_roc)
    pr = ev_sub.add_parser("pr")
    pr.add_argument("--scores", required=True)
    pr.add_argument("--out")
    pr.add_argument("--csv")
    pr.set_defaults(func=_cmd_eval_pr)

    rep = sub.add_parser("report", help="full detector experiments over a zoo")
    rep.add_argument("zoo_dir")
    rep.add_argument("--out", required=True)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--val-per-class", type=int, default=5, dest="val_per_class")
    rep.add_argument("--skip-dl", action="store_true")
    rep.add_argument("--skip-df", action="store_true")
    rep.add_argument("--recovery", action="store_true")
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except TrojanScanError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

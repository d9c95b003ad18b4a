"""Command-line pipeline: simulate -> featurize -> train -> eval -> report.

All commands read one TOML config (sections [paths], [simulate], [train],
[eval], [metrics]); command-line flags override it. Commands skip work whose
outputs already exist unless --force. Exit codes: 0 ok, 2 usage or config,
3 I/O, 4 numeric failure.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from .errors import ConfigurationError, NumericError
from .metrics import MetricConfig
from .model import ModelConfig, SeldNet, load_model, normalize_variant
from .sim.dataset import gen_split
from .training import (SUBSETS, evaluate_model, featurize_dataset, load_index,
                       read_training_log, reports_to_json, train_model)

PROFILE_NAMES = ("stat", "3dof", "6dof")

_SCHEMA = {
    "paths": {"manifest", "features", "run", "report"},
    "simulate": {"n_scenes", "duration", "seed"},
    "train": {"variant", "epochs", "lr", "batch_size", "seed", "profiles"},
    "eval": {"split", "threshold"},
    "metrics": {"theta_deg", "segment_s", "frame_s"},
}


def load_toml(path):
    if path is None:
        return {}
    if not os.path.isfile(path):
        raise ConfigurationError("config file %s does not exist" % path)
    with open(path, "rb") as fh:
        try:
            cfg = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError("config file %s: %s" % (path, exc)) from exc
    for section, keys in cfg.items():
        if section not in _SCHEMA:
            raise ConfigurationError("config: unknown section [%s]" % section)
        if not isinstance(keys, dict):
            raise ConfigurationError("config: [%s] must be a table" % section)
        for key in keys:
            if key not in _SCHEMA[section]:
                raise ConfigurationError("config: unknown key %s.%s"
                                         % (section, key))
    return cfg


@dataclass
class RunConfig:
    """Resolved pipeline settings: paths, variant, training, metrics."""

    manifest: str = os.path.join("data", "manifest.json")
    feature_dir: str = "features"
    run_dir: str = "run"
    report_dir: str = "report"
    variant: str = "B_baseline"
    epochs: int = 20
    lr: float = 0.01
    batch_size: int = 4
    seed: int = 0
    profiles: tuple = None  # None trains on every motion profile
    split: str = "test"
    threshold: float = 0.5
    metrics: MetricConfig = field(default_factory=MetricConfig)

    def __post_init__(self):
        self.variant = normalize_variant(self.variant)
        if not 1 <= int(self.epochs) <= 100:
            raise ConfigurationError("epochs must be in 1..100, got %r"
                                     % (self.epochs,))
        self.epochs = int(self.epochs)
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive, got %g" % self.lr)
        if int(self.batch_size) < 1:
            raise ConfigurationError("batch_size must be >= 1, got %r"
                                     % (self.batch_size,))
        self.batch_size = int(self.batch_size)
        if self.profiles is not None:
            self.profiles = tuple(self.profiles)
            bad = [p for p in self.profiles if p not in PROFILE_NAMES]
            if bad or not self.profiles:
                raise ConfigurationError("profiles must be drawn from %s, got %r"
                                         % ("/".join(PROFILE_NAMES), self.profiles))
        if self.split not in ("train", "val", "test"):
            raise ConfigurationError("split must be train/val/test, got %r"
                                     % (self.split,))
        if not 0.0 < self.threshold < 1.0:
            raise ConfigurationError("threshold must be in (0, 1), got %g"
                                     % self.threshold)

    @classmethod
    def from_toml(cls, cfg):
        paths = cfg.get("paths", {})
        train = cfg.get("train", {})
        ev = cfg.get("eval", {})
        kw = {}
        for key, name in (("manifest", "manifest"), ("features", "feature_dir"),
                          ("run", "run_dir"), ("report", "report_dir")):
            if key in paths:
                kw[name] = paths[key]
        for key in ("variant", "epochs", "lr", "batch_size", "seed", "profiles"):
            if key in train:
                kw[key] = train[key]
        for key in ("split", "threshold"):
            if key in ev:
                kw[key] = ev[key]
        if "metrics" in cfg:
            kw["metrics"] = MetricConfig(**cfg["metrics"])
        return cls(**kw)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw) if kw else self


def _require_file(path, what):
    if not os.path.isfile(path):
        raise ConfigurationError("%s %s does not exist" % (what, path))


def _parse_profiles(text):
    if text is None:
        return None
    return tuple(p.strip() for p in text.split(",") if p.strip())


# ----------------------------------------------------------------- commands

def cmd_simulate(args, cfg, rc):
    sim = cfg.get("simulate", {})
    out_dir = args.out or os.path.dirname(rc.manifest) or "."
    n_scenes = args.n_scenes if args.n_scenes is not None else sim.get("n_scenes", 9)
    duration = args.duration if args.duration is not None else sim.get("duration", 6.0)
    seed = args.seed if args.seed is not None else sim.get("seed", 0)
    manifest = os.path.join(out_dir, "manifest.json")
    existed = os.path.isfile(manifest) and not args.force

    entries = gen_split(out_dir, n_scenes, seed, duration=duration,
                        force=args.force, jobs=args.jobs,
                        progress=lambda i, n: print("\r  scene %d/%d" % (i, n),
                                                    end="", flush=True))
    if not existed:
        print()
    print("%s %d scenes in %s" % ("reusing" if existed else "wrote",
                                  len(entries), out_dir))
    for profile in PROFILE_NAMES:
        sub = [e for e in entries if e["profile"] == profile]
        if not sub:
            continue
        snrs = sorted({e["snr_db"] for e in sub})
        parts = ["%d@%ddB" % (sum(e["snr_db"] == s for e in sub), s)
                 for s in snrs]
        print("  %-4s %2d scenes (%s)" % (profile, len(sub), ", ".join(parts)))
    for split in ("train", "val", "test"):
        print("  split %-5s %d" % (split, sum(e["split"] == split
                                              for e in entries)))
    return 0


def cmd_featurize(args, cfg, rc):
    manifest = args.manifest or rc.manifest
    _require_file(manifest, "manifest")
    feature_dir = args.out or rc.feature_dir
    index = featurize_dataset(manifest, feature_dir, force=args.force,
                              jobs=args.jobs)
    print("featurized %d scenes into %s" % (len(index["scenes"]), feature_dir))
    return 0


def _ensure_features(rc, args):
    feature_dir = getattr(args, "features", None) or rc.feature_dir
    if not os.path.isfile(os.path.join(feature_dir, "index.json")):
        _require_file(rc.manifest, "manifest (needed to featurize)")
        print("features missing; featurizing %s -> %s" % (rc.manifest,
                                                          feature_dir))
        featurize_dataset(rc.manifest, feature_dir, jobs=args.jobs)
    return feature_dir


def cmd_train(args, cfg, rc):
    rc = rc.with_overrides(variant=args.variant, epochs=args.epochs,
                           lr=args.lr, batch_size=args.batch_size,
                           seed=args.seed, run_dir=args.out,
                           profiles=_parse_profiles(args.profiles))
    feature_dir = _ensure_features(rc, args)
    ckpt = os.path.join(rc.run_dir, "model.ckpt")
    log = os.path.join(rc.run_dir, "train_log.csv")
    if os.path.isfile(ckpt) and os.path.isfile(log) and not args.force:
        print("run %s already trained (use --force to retrain)" % rc.run_dir)
        return 0

    count = SeldNet(ModelConfig(variant=rc.variant, seed=rc.seed)).param_count()
    print("variant %s, seed %d: %d parameters" % (rc.variant, rc.seed, count))

    def show(row):
        print("epoch %3d  train %.6f  val %.6f  (%.1fs)"
              % (row["epoch"], row["train_loss"], row["val_loss"],
                 row["seconds"]))

    history, best_epoch, paths = train_model(
        feature_dir, rc.variant, rc.seed, rc.epochs, lr=rc.lr,
        batch_size=rc.batch_size, train_profiles=rc.profiles,
        run_dir=rc.run_dir, progress=show)
    print("best epoch %d (val %.6f); checkpoint %s"
          % (best_epoch, history[best_epoch - 1]["val_loss"],
             paths["checkpoint"]))
    return 0


def cmd_eval(args, cfg, rc):
    rc = rc.with_overrides(run_dir=args.run, feature_dir=args.features,
                           split=args.split, threshold=args.threshold)
    ckpt = os.path.join(rc.run_dir, "model.ckpt")
    model_json = os.path.join(rc.run_dir, "model.json")
    _require_file(ckpt, "checkpoint")
    _require_file(model_json, "model config")
    _require_file(os.path.join(rc.feature_dir, "index.json"), "feature index")
    out_dir = args.out or rc.run_dir
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "metrics.json")
    if os.path.isfile(json_path) and not args.force:
        print("metrics %s already written (use --force to redo)" % json_path)
        with open(json_path) as fh:
            print(_report_table(json.load(fh)))
        return 0

    net = load_model(ckpt, model_json)
    reports = evaluate_model(net, rc.feature_dir, split=rc.split,
                             threshold=rc.threshold, metric_cfg=rc.metrics)
    text = _report_table({name: json.loads(rep.to_json())
                          for name, rep in reports.items()})
    with open(json_path, "w") as fh:
        fh.write(reports_to_json(reports))
        fh.write("\n")
    with open(os.path.join(out_dir, "metrics.txt"), "w") as fh:
        fh.write(text + "\n")
    print("split %s" % rc.split)
    print(text)
    print("wrote %s" % json_path)
    return 0


def _report_table(reports):
    lines = ["subset   ER      F%      LE deg  LR%"]
    for name in SUBSETS:
        if name not in reports:
            continue
        r = reports[name]
        lines.append("%-7s %6.3f %7.2f %7.2f %6.2f"
                     % (name, r["er"], r["f1"], r["le_cd"], r["lr_cd"]))
    return "\n".join(lines)


# ------------------------------------------------------------------- report

def _load_run(run_dir):
    for name in ("model.json", "metrics.json", "train_log.csv"):
        _require_file(os.path.join(run_dir, name), "run file")
    with open(os.path.join(run_dir, "model.json")) as fh:
        model = json.load(fh)
    with open(os.path.join(run_dir, "metrics.json")) as fh:
        metrics = json.load(fh)
    log = read_training_log(os.path.join(run_dir, "train_log.csv"))
    return {"dir": run_dir, "variant": model["variant"],
            "seed": model["seed"], "metrics": metrics, "log": log}


_METRIC_COLS = (("er", "ER"), ("f1", "F1%"), ("le_cd", "LE deg"),
                ("lr_cd", "LR%"))


def _mean_se(values):
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    return mean, float(arr.std(ddof=1) / np.sqrt(arr.size))


def _cell(mean, se):
    return "%.3f" % mean if se is None else "%.3f±%.3f" % (mean, se)


def cmd_report(args, cfg, rc):
    runs = [_load_run(d) for d in args.runs]
    base = None
    for run in runs:
        mc = {name: rep["config"] for name, rep in run["metrics"].items()}
        ref = next(iter(mc.values()))
        if any(c != ref for c in mc.values()) or (base is not None
                                                  and ref != base):
            raise ConfigurationError(
                "metric configs differ across runs; re-run eval consistently")
        base = ref

    out_dir = args.out or rc.report_dir
    os.makedirs(out_dir, exist_ok=True)
    by_variant = {}
    for run in runs:
        by_variant.setdefault(run["variant"], []).append(run)

    header = ["variant", "subset", "seeds"]
    for key, _ in _METRIC_COLS:
        header += [key + "_mean", key + "_se"]
    csv_rows, text = [header], []
    text.append("variant          subset  seeds  " +
                "  ".join("%-13s" % label for _, label in _METRIC_COLS))
    for variant in sorted(by_variant):
        group = by_variant[variant]
        seeds = sorted(r["seed"] for r in group)
        if len(set(seeds)) != len(seeds):
            raise ConfigurationError("variant %s has duplicate seeds %s"
                                     % (variant, seeds))
        for subset in SUBSETS:
            if not all(subset in r["metrics"] for r in group):
                continue
            row = [variant, subset, str(len(group))]
            cells = []
            for key, _ in _METRIC_COLS:
                mean, se = _mean_se([r["metrics"][subset][key] for r in group])
                row += ["%.6f" % mean, "" if se is None else "%.6f" % se]
                cells.append("%-13s" % _cell(mean, se))
            csv_rows.append(row)
            text.append("%-16s %-7s %-6d %s" % (variant, subset, len(group),
                                                "  ".join(cells)))

    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        csv.writer(fh).writerows(csv_rows)
    table = "\n".join(text)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(table + "\n")
    _plot_losses(runs, os.path.join(out_dir, "loss_curves.svg"))
    print(table)
    print("wrote %s" % os.path.join(out_dir, "summary.csv"))
    return 0


def _plot_losses(runs, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "seld6dof"

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for run in runs:
        epochs = [r["epoch"] for r in run["log"]]
        tag = "%s s%d" % (run["variant"], run["seed"])
        line, = ax.plot(epochs, [r["train_loss"] for r in run["log"]],
                        label=tag + " train")
        ax.plot(epochs, [r["val_loss"] for r in run["log"]], "--",
                color=line.get_color(), label=tag + " val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# -------------------------------------------------------------------- main

def _build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="TOML config file")
    shared.add_argument("--seed", type=int, help="override configured seed")
    shared.add_argument("--force", action="store_true",
                        help="recompute outputs that already exist")
    shared.add_argument("--jobs", type=int, default=1,
                        help="worker processes for simulate/featurize")

    parser = argparse.ArgumentParser(
        prog="seld6dof",
        description="6DoF sound event localization pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[shared],
                       help="render a synthetic scene dataset")
    p.add_argument("--out", help="dataset directory")
    p.add_argument("--n-scenes", type=int)
    p.add_argument("--duration", type=float)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("featurize", parents=[shared],
                       help="extract features and motion streams")
    p.add_argument("--manifest", help="dataset manifest.json")
    p.add_argument("--out", help="feature directory")
    p.set_defaults(fn=cmd_featurize)

    p = sub.add_parser("train", parents=[shared], help="train one variant")
    p.add_argument("--features", help="feature directory")
    p.add_argument("--variant", help="A..E or full variant name")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--profiles", help="comma list of training profiles")
    p.add_argument("--out", help="run directory for checkpoint and log")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", parents=[shared],
                       help="metric reports per motion subset")
    p.add_argument("--run", help="run directory with model.ckpt")
    p.add_argument("--features", help="feature directory")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", help="output directory (default: run dir)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", parents=[shared],
                       help="cross-run comparison table and loss curves")
    p.add_argument("runs", nargs="+", help="run directories (after eval)")
    p.add_argument("--out", help="report directory")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_toml(args.config)
        rc = RunConfig.from_toml(cfg)
        if args.seed is not None:
            rc = rc.with_overrides(seed=args.seed)
        return args.fn(args, cfg, rc)
    except NumericError as exc:
        print("numeric failure: %s" % exc, file=sys.stderr)
        return 4
    except OSError as exc:
        print("i/o error: %s" % exc, file=sys.stderr)
        return 3
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

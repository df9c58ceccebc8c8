"""Command-line pipeline: train, calibrate, finetune, eval, bench, sweep.

Configuration comes from an optional JSON file plus CLI flags (flags
win).  Every emitted report carries the config hash, and identical
config + seed reproduces byte-identical numeric payloads.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, asdict, fields
from pathlib import Path

import numpy as np

from . import calibration as calib_mod
from . import checkpoint, costs, data, nn
from .errors import MissingArtifactError

DATA_DIR_ENV = "DASNET_DATA_DIR"


@dataclass
class RunConfig:
    net: str = "mlp3"
    data: str = ""
    data_kind: str = "synthetic"  # mnist | cifar10 | synthetic
    theta_conv: float = 0.99
    theta_fc: float = 0.95
    fv_mode: str = "max"
    epochs: int = 10
    lr: float = 0.1
    batch_size: int = 64
    dropout: float = 0.5
    seed: int = 0
    out: str = "runs"
    calib_samples: int = 1000
    finetune_epochs: int = 0  # 0 -> 20% of epochs, at least 1
    finetune_lr: float = 0.0  # 0 -> lr / 10
    synthetic_n: int = 3000

    def __post_init__(self):
        if not 0.0 < self.theta_conv <= 1.0 or not 0.0 < self.theta_fc <= 1.0:
            raise ValueError("theta values must be in (0, 1]")
        if self.fv_mode not in ("max", "mean"):
            raise ValueError("fv-mode must be 'max' or 'mean'")

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def train_config(self) -> nn.TrainConfig:
        return nn.TrainConfig(
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            dropout_rate=self.dropout,
            fv_mode=self.fv_mode,
        )

    def finetune_config(self) -> nn.TrainConfig:
        return nn.TrainConfig(
            lr=self.finetune_lr or self.lr * 0.1,
            epochs=self.finetune_epochs or max(1, self.epochs // 5),
            batch_size=self.batch_size,
            seed=self.seed,
            dropout_rate=0.0,
            fv_mode=self.fv_mode,
        )


def load_dataset(config: RunConfig) -> data.Dataset:
    kind = config.data_kind
    if kind == "synthetic":
        shape = nn.ARCHITECTURES[config.net]["input_shape"]
        return data.synthetic_dataset(config.seed, config.synthetic_n, shape)
    root = config.data or os.environ.get(DATA_DIR_ENV, "")
    if not root or not Path(root).is_dir():
        raise MissingArtifactError(
            f"dataset directory not found; pass --data or set {DATA_DIR_ENV} "
            f"(got {root!r})"
        )
    if kind == "mnist":
        return data.load_mnist(root)
    if kind == "cifar10":
        return data.load_cifar10_dir(root)
    raise ValueError(f"unknown data kind {kind!r}")


def _paths(config: RunConfig) -> dict:
    out = Path(config.out)
    return {
        "out": out,
        "baseline": out / f"{config.net}_baseline.ckpt",
        "dasnet": out / f"{config.net}_dasnet.ckpt",
        "calibration": out / f"{config.net}_calibration.json",
        "curve_csv": out / f"{config.net}_theta_p.csv",
    }


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _require(path, producer: str):
    if not Path(path).exists():
        raise MissingArtifactError(
            f"missing {path}; run `dasnet {producer}` first"
        )
    return path


def cmd_train(config: RunConfig) -> dict:
    paths = _paths(config)
    paths["out"].mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(config)
    net = nn.build_network(config.net, config.seed)
    net, history = nn.train_baseline(net, dataset, config.train_config())
    checkpoint.save(net, paths["baseline"])
    test_acc = nn.evaluate(net, dataset, use_masks=False)
    payload = {
        "command": "train",
        "config_hash": config.config_hash(),
        "net": config.net,
        "val_accuracy_per_epoch": history,
        "test_accuracy": test_acc,
        "checkpoint": str(paths["baseline"]),
    }
    _write_json(paths["out"] / f"train_{config.net}.json", payload)
    print(f"baseline {config.net}: test accuracy {test_acc:.4f}")
    return payload


def cmd_calibrate(config: RunConfig) -> dict:
    paths = _paths(config)
    paths["out"].mkdir(parents=True, exist_ok=True)
    net = checkpoint.load(_require(paths["baseline"], "train"))
    dataset = load_dataset(config)
    images, _ = dataset.split_arrays("train", net.input_shape)
    rng = nn.rng_stream(config.seed, "calibration-sampling")
    count = min(config.calib_samples, len(images))
    samples = images[rng.choice(len(images), size=count, replace=False)]
    report = calib_mod.calibrate_network(
        net, samples, config.theta_conv, config.theta_fc, config.fv_mode
    )
    report.save(paths["calibration"])
    report.curve_csv(paths["curve_csv"])
    chosen = {lc.layer_id: round(lc.chosen_p, 6) for lc in report.layers}
    print(f"calibrated {config.net}: winner rates {chosen}")
    return {"rates": chosen, "report": str(paths["calibration"])}


def cmd_finetune(config: RunConfig) -> dict:
    paths = _paths(config)
    net = checkpoint.load(_require(paths["baseline"], "train"))
    report = calib_mod.CalibrationReport.load(
        _require(paths["calibration"], "calibrate")
    )
    dataset = load_dataset(config)
    baseline_acc = nn.evaluate(net, dataset, use_masks=False)
    net, history = nn.finetune_dasnet(
        net, dataset, report, config.finetune_config()
    )
    masked_acc = nn.evaluate(net, dataset, use_masks=True, fv_mode=config.fv_mode)
    checkpoint.save(net, paths["dasnet"])
    payload = {
        "command": "finetune",
        "config_hash": config.config_hash(),
        "net": config.net,
        "baseline_accuracy": baseline_acc,
        "dasnet_accuracy": masked_acc,
        "accuracy_drop": baseline_acc - masked_acc,
        "val_accuracy_per_epoch": history,
        "checkpoint": str(paths["dasnet"]),
    }
    _write_json(paths["out"] / f"finetune_{config.net}.json", payload)
    print(
        f"dasnet {config.net}: accuracy {masked_acc:.4f} "
        f"(drop {payload['accuracy_drop']:+.4f})"
    )
    return payload


def cmd_eval(config: RunConfig) -> dict:
    paths = _paths(config)
    net = checkpoint.load(_require(paths["dasnet"], "finetune"))
    dataset = load_dataset(config)
    unmasked = nn.evaluate(net, dataset, use_masks=False)
    masked = nn.evaluate(net, dataset, use_masks=True, fv_mode=config.fv_mode)
    sparsity = nn.measure_activation_sparsity(net, dataset, fv_mode=config.fv_mode)
    cost = costs.count_macs(net)
    payload = {
        "command": "eval",
        "config_hash": config.config_hash(),
        "net": config.net,
        "unmasked_accuracy": unmasked,
        "masked_accuracy": masked,
        "accuracy_drop": unmasked - masked,
        "activation_sparsity": sparsity,
        "mac_reduction_percent": cost.mac_reduction_percent,
    }
    _write_json(paths["out"] / f"eval_{config.net}.json", payload)
    cost.to_csv(paths["out"] / f"cost_{config.net}.csv")
    pruned = sparsity["overall"].get("all", 0.0) * 100
    print(
        f"eval {config.net}: masked {masked:.4f} vs unmasked {unmasked:.4f}; "
        f"pruned activations {pruned:.1f}%; "
        f"MAC reduction {cost.mac_reduction_percent:.1f}%"
    )
    return payload


def cmd_bench(config: RunConfig, repetitions: int = 9) -> dict:
    paths = _paths(config)
    paths["out"].mkdir(parents=True, exist_ok=True)
    net = nn.build_network(config.net, config.seed)
    if paths["calibration"].exists():
        report = calib_mod.CalibrationReport.load(paths["calibration"])
        rates = {lc.layer_id: lc.chosen_p for lc in report.layers}
    else:
        # representative defaults: deep fc sparsity, moderate conv sparsity
        rates = {
            s.name: (0.2 if s.kind == "fc" else 0.7)
            for s in net.specs
            if s.wta_eligible
        }
    records = costs.bench_network(net, rates, repetitions, config.seed)
    bench_csv = paths["out"] / f"bench_{config.net}.csv"
    if records:
        with open(bench_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(records[0]))
            writer.writeheader()
            writer.writerows(records)
    payload = {
        "command": "bench",
        "config_hash": config.config_hash(),
        "net": config.net,
        "layers": records,
    }
    _write_json(paths["out"] / f"bench_{config.net}.json", payload)
    for r in records:
        print(
            f"{r['name']:>8} p={r['p']:.2f}  dense {r['dense_s']*1e3:8.3f} ms  "
            f"sparse {r['normalized_sparse_time']:.3f}x dense  "
            f"speedup {r['speedup']:.2f}x  "
            f"ranking {100*r['ranking_share_of_dense']:.2f}%"
        )
    return payload


def cmd_sweep(config: RunConfig, thetas) -> list[dict]:
    paths = _paths(config)
    _require(paths["baseline"], "train")
    rows = []
    for theta in thetas:
        step = RunConfig(**{**asdict(config), "theta_conv": theta,
                            "theta_fc": theta})
        cmd_calibrate(step)
        result = cmd_finetune(step)
        net = checkpoint.load(paths["dasnet"])
        dataset = load_dataset(step)
        sparsity = nn.measure_activation_sparsity(
            net, dataset, fv_mode=step.fv_mode
        )
        rows.append(
            {
                "theta": theta,
                "pruned_percent": 100 * sparsity["overall"].get("all", 0.0),
                "accuracy": result["dasnet_accuracy"],
            }
        )
    sweep_csv = paths["out"] / f"sweep_{config.net}.csv"
    with open(sweep_csv, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["theta", "pruned_percent", "accuracy"]
        )
        writer.writeheader()
        writer.writerows(rows)
    print(f"sweep written to {sweep_csv}")
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dasnet",
        description="dynamic activation sparsity pipeline",
    )
    parser.add_argument("--config", help="JSON config file (flags override)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "calibrate", "finetune", "eval", "bench", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--net", choices=sorted(nn.ARCHITECTURES))
        p.add_argument("--data")
        p.add_argument("--data-kind", dest="data_kind",
                       choices=("mnist", "cifar10", "synthetic"))
        p.add_argument("--theta-conv", dest="theta_conv", type=float)
        p.add_argument("--theta-fc", dest="theta_fc", type=float)
        p.add_argument("--fv-mode", dest="fv_mode", choices=("max", "mean"))
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--calib-samples", dest="calib_samples", type=int)
        p.add_argument("--finetune-epochs", dest="finetune_epochs", type=int)
        p.add_argument("--synthetic-n", dest="synthetic_n", type=int)
        if name == "bench":
            p.add_argument("--repetitions", type=int, default=9)
        if name == "sweep":
            p.add_argument(
                "--thetas",
                default="0.80,0.90,0.95,0.99",
                help="comma-separated cumulative-energy thresholds",
            )
    return parser


def config_from_args(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            values.update(json.load(fh))
    valid = {f.name for f in fields(RunConfig)}
    for key, value in vars(args).items():
        if key in valid and value is not None:
            values[key] = value
    return RunConfig(**values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = config_from_args(args)
    try:
        if args.command == "train":
            cmd_train(config)
        elif args.command == "calibrate":
            cmd_calibrate(config)
        elif args.command == "finetune":
            cmd_finetune(config)
        elif args.command == "eval":
            cmd_eval(config)
        elif args.command == "bench":
            cmd_bench(config, args.repetitions)
        elif args.command == "sweep":
            thetas = [float(t) for t in args.thetas.split(",") if t]
            cmd_sweep(config, thetas)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

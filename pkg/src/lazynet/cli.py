"""Experiment driver.

Subcommands: train | advtrain | attack | verify | data-prepare. All but
data-prepare take a JSON config (--config) whose values can be overridden
with repeated --set section.key=value flags (values parsed as JSON, falling
back to plain strings). Exit codes: 0 success, 1 config error, 2 IO or data
error, 3 verification failure.

Every CSV starts with a provenance comment (config hash and seed list) and
a generated_at comment; everything below those is byte-deterministic for a
fixed config, so reruns can be diffed directly.
"""

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone

import numpy as np

from . import bounds, data
from .attacks import min_eta_attack_batch, robust_accuracy, single_step_attack
from .errors import ConfigError, EmptyDatasetError, IdxFormatError
from .network import (accuracy, init_network, load_checkpoint,
                      save_checkpoint)
from .training import (TrainConfig, projected_adversarial_train,
                       sgd_lazy_train)


# ---------------------------------------------------------------- config --

@dataclass
class GridSection:
    d: list = field(default_factory=lambda: [100])
    m: list = field(default_factory=lambda: [1000])
    c0: list = field(default_factory=lambda: [10.0])
    v: list = field(default_factory=list)      # weight radii for advtrain
    r: list = field(default_factory=lambda: [0.2])  # input budgets


@dataclass
class DatasetSection:
    kind: str = "synth"            # synth | mnist | cache
    n_train: int = 2000
    n_test: int = 500
    margin: float = 0.8
    seed: int = 12345
    normalize: bool = True
    dir: str | None = None         # mnist root (default: auto-discover)
    pos_digit: int = 1
    neg_digit: int = 0
    train_cache: str | None = None
    test_cache: str | None = None


@dataclass
class TrainSection:
    lr: float = 0.1
    beta: float = 0.01
    batch_size: int = 128
    max_epochs: int = 50
    patience: int = 5
    pgd_steps: int = 100
    pgd_alpha: float | None = None


@dataclass
class AttackSection:
    kind: str = "min_eta"          # min_eta | single_step | pgd
    eta_max: float = 10.0
    tol: float = 1e-6
    grid_points: int = 64
    bisect_steps: int = 40
    c2: float = 1.0
    pgd_budget: float = 0.1
    pgd_steps: int = 100
    pgd_alpha: float | None = None


@dataclass
class VerifySection:
    gammas: list = field(default_factory=lambda: [0.1, 0.3])
    n_seeds: int = 300
    seed0: int = 0
    c0_ball: float = 10.0
    c0_grad: float = 0.5
    probes: int = 200              # grad_diff probes per grid point (0 = off)


@dataclass
class ExperimentConfig:
    out_dir: str = "runs"
    seeds: list = field(default_factory=lambda: [0])
    grid: GridSection = field(default_factory=GridSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    train: TrainSection = field(default_factory=TrainSection)
    attack: AttackSection = field(default_factory=AttackSection)
    verify: VerifySection = field(default_factory=VerifySection)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, raw):
        cfg = cls(**_section_kwargs(cls, raw, "config", {
            "grid": GridSection, "dataset": DatasetSection,
            "train": TrainSection, "attack": AttackSection,
            "verify": VerifySection}))
        cfg.validate()
        return cfg

    def validate(self):
        if not self.seeds:
            raise ConfigError("seeds must be a nonempty list")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        for name in ("d", "m", "c0", "r"):
            if not getattr(self.grid, name):
                raise ConfigError(f"grid.{name} must be nonempty")
        if self.dataset.kind not in ("synth", "mnist", "cache"):
            raise ConfigError(f"unknown dataset kind {self.dataset.kind!r}")
        if self.attack.kind not in ("min_eta", "single_step", "pgd"):
            raise ConfigError(f"unknown attack kind {self.attack.kind!r}")
        for gamma in self.verify.gammas:
            if not 0.0 < gamma < 1.0:
                raise ConfigError(f"verify gamma {gamma} outside (0, 1)")

    def hash(self):
        # out_dir names where results land, not what the experiment is, so
        # rerunning the same config into a fresh directory hashes the same.
        tree = self.to_dict()
        del tree["out_dir"]
        blob = json.dumps(tree, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _section_kwargs(cls, raw, where, nested=None):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object, got {type(raw).__name__}")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")
    out = {}
    for key, value in raw.items():
        if nested and key in nested:
            sub = nested[key]
            out[key] = sub(**_section_kwargs(sub, value, f"{where}.{key}"))
        else:
            out[key] = value
    return out


def load_config(path, overrides=()):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass                    # keep as plain string
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set path {key!r} crosses a non-object")
        node[parts[-1]] = value
    return ExperimentConfig.from_dict(raw)


# ------------------------------------------------------------ csv output --

def _fmt(value):
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows, cfg_hash, seeds):
    """Atomic CSV write with the provenance comment lines on top."""
    lines = [f"# config_hash={cfg_hash} seeds={json.dumps(list(seeds))}",
             f"# generated_at={datetime.now(timezone.utc).isoformat()}",
             ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _report_rows(report):
    return [(e.epoch, float(e.loss), float(e.accuracy),
             float(e.robust_accuracy), float(e.lazy_deviation))
            for e in report.epochs]


_REPORT_HEADER = ("epoch", "loss", "accuracy", "robust_accuracy",
                  "lazy_deviation")


# -------------------------------------------------------------- datasets --

def build_datasets(cfg, d):
    """(train, test) LabeledDatasets for one dimension of the grid."""
    ds = cfg.dataset
    if ds.kind == "synth":
        train = data.synth_sphere(np.random.default_rng([ds.seed, d, 0]),
                                  d, ds.n_train, ds.margin)
        test = data.synth_sphere(np.random.default_rng([ds.seed, d, 1]),
                                 d, ds.n_test, ds.margin)
        return train, test
    if ds.kind == "mnist":
        root = ds.dir or data.find_mnist_dir()
        if root is None:
            raise FileNotFoundError(
                "no MNIST IDX files found (set dataset.dir or LAZYNET_MNIST_DIR)")
        paths = data.mnist_paths(root)
        if paths is None:
            raise FileNotFoundError(f"missing MNIST IDX files under {root}")
        side = int(round(np.sqrt(d)))
        if side * side != d:
            raise ConfigError(f"mnist requires square d, got {d}")
        out = []
        for split in ("train", "test"):
            raw = data.load_raw_images(paths[f"{split}_images"],
                                       paths[f"{split}_labels"])
            raw = data.extract_binary(raw, ds.pos_digit, ds.neg_digit)
            raw = data.downsample(raw, side)
            out.append(data.to_sphere_dataset(raw, ds.normalize,
                                              ds.pos_digit, ds.neg_digit))
        return tuple(out)
    if ds.train_cache is None or ds.test_cache is None:
        raise ConfigError("cache dataset needs train_cache and test_cache paths")
    train = data.load_dataset(ds.train_cache)
    test = data.load_dataset(ds.test_cache)
    if train.d != d or test.d != d:
        raise ValueError(f"cached dataset dimension {train.d} does not match grid d={d}")
    return train, test


def _net_seeds(seed, d, m):
    """Derive the init seed stream and an int for the trainer shuffle."""
    ss = np.random.SeedSequence([seed, d, m])
    init_rng = np.random.default_rng(ss.spawn(1)[0])
    shuffle_seed = int(ss.generate_state(1, dtype=np.uint64)[0])
    return init_rng, shuffle_seed


# -------------------------------------------------------------- commands --

def _ckpt_name(prefix, d, m, scale, seed):
    return f"{prefix}_d{d}_m{m}_{scale}_seed{seed}.bin"


def _train_one(cfg_dict, run):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    d, m, c0, seed = run
    train_ds, test_ds = build_datasets(cfg, d)
    init_rng, shuffle_seed = _net_seeds(seed, d, m)
    params = init_network(init_rng, d, m, c0=c0, seed=seed)
    tc = TrainConfig(lr=cfg.train.lr, batch_size=cfg.train.batch_size,
                     max_epochs=cfg.train.max_epochs,
                     patience=cfg.train.patience, seed=shuffle_seed, c0=c0)
    fitted, report = sgd_lazy_train(params, train_ds, tc)
    name = _ckpt_name("ckpt", d, m, f"c0{c0:g}", seed)
    save_checkpoint(fitted, os.path.join(cfg.out_dir, name))
    write_csv(os.path.join(cfg.out_dir, f"train_d{d}_m{m}_c0{c0:g}_seed{seed}.csv"),
              _REPORT_HEADER, _report_rows(report), cfg.hash(), cfg.seeds)
    last = report.epochs[-1]
    test_acc = accuracy(fitted, test_ds.x, test_ds.y)
    return (d, m, float(c0), seed, len(report.epochs), report.stop_reason,
            float(last.loss), float(last.accuracy), float(test_acc),
            float(last.lazy_deviation))


def cmd_train(cfg, jobs=1):
    os.makedirs(cfg.out_dir, exist_ok=True)
    runs = [(d, m, c0, seed) for d in cfg.grid.d for m in cfg.grid.m
            for c0 in cfg.grid.c0 for seed in cfg.seeds]
    rows = _run_all(_train_one, cfg, runs, jobs)
    write_csv(os.path.join(cfg.out_dir, "train_summary.csv"),
              ("d", "m", "c0", "seed", "epochs", "stop_reason", "loss",
               "train_accuracy", "test_accuracy", "lazy_deviation"),
              rows, cfg.hash(), cfg.seeds)
    for row in rows:
        print("train", *row)
    return 0


def _advtrain_one(cfg_dict, run):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    d, m, v, r, seed = run
    train_ds, test_ds = build_datasets(cfg, d)
    init_rng, shuffle_seed = _net_seeds(seed, d, m)
    params = init_network(init_rng, d, m, c0=v * np.sqrt(m), seed=seed)
    tc = TrainConfig(beta=cfg.train.beta, batch_size=cfg.train.batch_size,
                     max_epochs=cfg.train.max_epochs,
                     patience=cfg.train.patience, seed=shuffle_seed,
                     radius=v, pgd_budget=r, pgd_steps=cfg.train.pgd_steps,
                     pgd_alpha=cfg.train.pgd_alpha)
    fitted, report = projected_adversarial_train(params, train_ds, tc)
    name = _ckpt_name("advckpt", d, m, f"v{v:g}_r{r:g}", seed)
    save_checkpoint(fitted, os.path.join(cfg.out_dir, name))
    write_csv(os.path.join(cfg.out_dir,
                           f"advtrain_d{d}_m{m}_v{v:g}_r{r:g}_seed{seed}.csv"),
              _REPORT_HEADER, _report_rows(report), cfg.hash(), cfg.seeds)
    robust = robust_accuracy(fitted, test_ds.x, test_ds.y.astype(np.float64),
                             r, steps=cfg.attack.pgd_steps,
                             alpha=cfg.attack.pgd_alpha)
    clean = accuracy(fitted, test_ds.x, test_ds.y)
    return (d, m, float(v), float(r), seed, len(report.epochs),
            report.stop_reason, float(clean), float(robust))


def cmd_advtrain(cfg, jobs=1):
    if not cfg.grid.v:
        raise ConfigError("advtrain needs a nonempty grid.v (weight radii)")
    os.makedirs(cfg.out_dir, exist_ok=True)
    runs = [(d, m, v, r, seed) for d in cfg.grid.d for m in cfg.grid.m
            for v in cfg.grid.v for r in cfg.grid.r for seed in cfg.seeds]
    rows = _run_all(_advtrain_one, cfg, runs, jobs)
    write_csv(os.path.join(cfg.out_dir, "advtrain_summary.csv"),
              ("d", "m", "v", "r", "seed", "epochs", "stop_reason",
               "clean_accuracy", "robust_accuracy"),
              rows, cfg.hash(), cfg.seeds)
    for row in rows:
        print("advtrain", *row)
    return 0


def _attack_one(cfg_dict, run):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    d, m, c0, seed = run
    _, test_ds = build_datasets(cfg, d)
    path = os.path.join(cfg.out_dir, _ckpt_name("ckpt", d, m, f"c0{c0:g}", seed))
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing checkpoint {path}; run train first")
    params = load_checkpoint(path)
    ak = cfg.attack
    if ak.kind == "min_eta":
        outs = min_eta_attack_batch(params, test_ds.x, eta_max=ak.eta_max,
                                    tol=ak.tol, grid_points=ak.grid_points,
                                    bisect_steps=ak.bisect_steps)
    elif ak.kind == "single_step":
        outs = [single_step_attack(params, row, ak.c2) for row in test_ds.x]
    else:
        from .attacks import pgd_attack
        outs = [pgd_attack(params, row, float(lbl), ak.pgd_budget,
                           steps=ak.pgd_steps, alpha=ak.pgd_alpha)
                for row, lbl in zip(test_ds.x, test_ds.y)]
    xnorms = np.linalg.norm(test_ds.x, axis=1)
    per_rows = [(i, o.f_before, o.grad_norm, o.eta, o.delta_norm,
                 o.delta_norm / xnorms[i] if xnorms[i] > 0 else float("nan"),
                 bool(o.flipped), bool(o.boundary), bool(o.degenerate))
                for i, o in enumerate(outs)]
    write_csv(os.path.join(cfg.out_dir,
                           f"attack_d{d}_m{m}_c0{c0:g}_seed{seed}.csv"),
              ("example", "f_before", "grad_norm", "eta", "delta_norm",
               "delta_rel", "flipped", "boundary", "degenerate"),
              per_rows, cfg.hash(), cfg.seeds)
    flipped = [o for o in outs if o.flipped]
    if flipped:
        med = lambda key: float(np.median([abs(getattr(o, key)) for o in flipped]))
        med_eta, med_gn, med_dn = med("eta"), med("grad_norm"), med("delta_norm")
        med_rel = float(np.median([o.delta_norm / xnorms[i]
                                   for i, o in enumerate(outs) if o.flipped]))
    else:
        med_eta = med_gn = med_dn = med_rel = float("nan")
    return (d, m, float(c0), seed, len(outs), len(flipped),
            len(flipped) / len(outs), med_eta, med_gn, med_dn, med_rel)


def cmd_attack(cfg, jobs=1):
    os.makedirs(cfg.out_dir, exist_ok=True)
    runs = [(d, m, c0, seed) for d in cfg.grid.d for m in cfg.grid.m
            for c0 in cfg.grid.c0 for seed in cfg.seeds]
    rows = _run_all(_attack_one, cfg, runs, jobs)
    write_csv(os.path.join(cfg.out_dir, "attack_summary.csv"),
              ("d", "m", "c0", "seed", "examples", "flips", "flip_rate",
               "median_eta", "median_grad_norm", "median_delta",
               "median_delta_rel"),
              rows, cfg.hash(), cfg.seeds)
    for row in rows:
        print("attack", *row)
    return 0


def cmd_verify(cfg, jobs=1):
    os.makedirs(cfg.out_dir, exist_ok=True)
    vf = cfg.verify
    reports = []
    for d in cfg.grid.d:
        for m in cfg.grid.m:
            reports.extend(bounds.run_lemma_monte_carlo(
                d, m, vf.gammas, vf.n_seeds, seed0=vf.seed0,
                c0_ball=vf.c0_ball, c0_grad=vf.c0_grad))
            if vf.probes > 0:
                rng = np.random.default_rng([vf.seed0, d, m])
                params = init_network(rng, d, m, c0=vf.c0_ball)
                x = rng.standard_normal(d)
                x /= np.linalg.norm(x)
                reports.append(bounds.grad_diff_probe(
                    params, x, 1.0 / np.sqrt(d), vf.probes, rng))
                reports.append(bounds.check_sign_flip_prob(
                    params, x, 1.0 / np.sqrt(d), rng))
    reports.sort(key=lambda r: (r.name, r.gamma, r.context.get("d", 0),
                                r.context.get("m", 0)))
    rows = [(r.name, r.gamma, r.context.get("d", ""), r.context.get("m", ""),
             r.theoretical, r.measured, bool(r.satisfied), bool(r.vacuous),
             json.dumps(r.context, sort_keys=True, default=float))
            for r in reports]
    write_csv(os.path.join(cfg.out_dir, "bound_reports.csv"),
              ("name", "gamma", "d", "m", "threshold", "measured",
               "satisfied", "vacuous", "details"),
              rows, cfg.hash(), cfg.seeds)
    failed = 0
    for r in reports:
        tag = "PASS" if r.satisfied else "FAIL"
        extra = " (vacuous bound)" if r.vacuous else ""
        print(f"{tag} {r.name} gamma={r.gamma:g} d={r.context.get('d')} "
              f"m={r.context.get('m')} measured={r.measured:.6g} "
              f"threshold={r.theoretical:.6g}{extra}")
        failed += not r.satisfied
    if failed:
        print(f"{failed} bound check(s) failed", file=sys.stderr)
        return 3
    return 0


def cmd_data_prepare(args):
    raw_train = data.load_raw_images(args.train_images, args.train_labels)
    raw_test = data.load_raw_images(args.test_images, args.test_labels)
    os.makedirs(args.out_dir, exist_ok=True)
    for split, raw in (("train", raw_train), ("test", raw_test)):
        subset = data.extract_binary(raw, args.pos_digit, args.neg_digit)
        if args.side is not None:
            subset = data.downsample(subset, args.side)
        ds = data.to_sphere_dataset(subset, args.normalize,
                                    args.pos_digit, args.neg_digit)
        path = os.path.join(args.out_dir, f"{split}.bin")
        data.save_dataset(ds, path)
        print(f"{split}: {ds.n} examples, d={ds.d}, "
              f"normalized={ds.normalized} -> {path}")
    return 0


def _run_all(worker, cfg, runs, jobs):
    cfg_dict = cfg.to_dict()
    if jobs <= 1:
        return [worker(cfg_dict, run) for run in runs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, [cfg_dict] * len(runs), runs))


# ------------------------------------------------------------------ main --

def build_parser():
    parser = argparse.ArgumentParser(
        prog="lazynet",
        description="train, attack and verify lazy-regime ReLU networks")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--set", action="append", default=[], metavar="K=V",
                       help="override a config key, e.g. --set grid.d=[25,49]")
        p.add_argument("--out-dir", help="override out_dir")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes")
        p.add_argument("--seed-offset", type=int, default=0,
                       help="shift every seed by this amount")

    for name, help_text in (("train", "lazy-SGD training sweep"),
                            ("advtrain", "projected adversarial training sweep"),
                            ("attack", "attack trained checkpoints"),
                            ("verify", "Monte-Carlo bound verification")):
        add_common(sub.add_parser(name, help=help_text))

    dp = sub.add_parser("data-prepare", help="build dataset caches from IDX files")
    dp.add_argument("--train-images", required=True)
    dp.add_argument("--train-labels", required=True)
    dp.add_argument("--test-images", required=True)
    dp.add_argument("--test-labels", required=True)
    dp.add_argument("--out-dir", required=True)
    dp.add_argument("--side", type=int, default=None,
                    help="downsample images to side x side")
    dp.add_argument("--normalize", action="store_true",
                    help="scale inputs to unit norm")
    dp.add_argument("--pos-digit", type=int, default=1)
    dp.add_argument("--neg-digit", type=int, default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "data-prepare":
            return cmd_data_prepare(args)
        cfg = load_config(args.config, args.set)
        if args.out_dir:
            cfg.out_dir = args.out_dir
        if args.seed_offset:
            cfg.seeds = [s + args.seed_offset for s in cfg.seeds]
        handler = {"train": cmd_train, "advtrain": cmd_advtrain,
                   "attack": cmd_attack, "verify": cmd_verify}[args.command]
        return handler(cfg, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, IdxFormatError, EmptyDatasetError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: synth, train, ahp, optimize, compare, report.

All stages read one INI run configuration (``--config``). Relative paths in
it are resolved against the configuration file's directory. A single master
seed feeds :mod:`procopt.seeding`, so repeating a command with the same
configuration and seed rewrites byte-identical files.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import agents, ahp, data, forest, seeding
from .env import ProcessEnv, SurrogateGrid, TargetSpec

log = logging.getLogger("procopt")

# Expert-sampled k/s, L*, a*, b* targets used in the ozonation case study.
OZONATION_SCENARIOS = {
    "scenario1": [0.81, 15.76, -20.84, -70.79],
    "scenario2": [1.00, 11.63, -24.08, -54.10],
    "scenario3": [2.45, 8.20, -18.73, -38.17],
    "scenario4": [1.84, 9.72, -21.09, -42.78],
    "scenario5": [0.41, 21.60, -36.48, -59.95],
}

HP_KEYS = ("bootstrap", "n_estimators", "min_samples_leaf", "min_samples_split",
           "max_depth", "max_features")


class CLIError(Exception):
    pass


@dataclass
class RunConfig:
    base: Path
    seed: int = 0
    out: Path = Path("out")
    schema: data.ProcessSchema = field(default_factory=data.ozonation_schema)
    dataset: Path | None = None
    synth_count: int = 129
    synth_noise: list[float] | None = None
    train_fraction: float = 0.75
    grid_search: bool = False
    grid: dict | None = None
    folds: int = 3
    n_jobs: int = 1
    hyperparams: forest.ForestHyperParams = field(default_factory=forest.ForestHyperParams)
    matrix: Path | None = None
    threshold: float = ahp.DEFAULT_THRESHOLD
    targets: dict[str, list[float]] = field(default_factory=dict)
    agent: agents.AgentConfig = field(default_factory=agents.AgentConfig)

    @property
    def dataset_path(self) -> Path:
        return self.dataset if self.dataset is not None else self.out / "data.csv"

    @property
    def weights_path(self) -> Path:
        return self.out / "weights.json"

    def model_path(self, criterion: str) -> Path:
        return self.out / "models" / f"{criterion}.json"


def _hp_from_section(sec) -> forest.ForestHyperParams:
    kw = {}
    for key in HP_KEYS:
        if key not in sec:
            continue
        raw = sec[key].strip()
        if key == "bootstrap":
            kw[key] = sec.getboolean(key)
        elif key == "max_depth":
            kw[key] = None if raw.lower() == "none" else int(raw)
        elif key == "max_features":
            kw[key] = raw.strip("'\"")
        else:
            kw[key] = int(raw)
    return forest.ForestHyperParams(**kw)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def load_grid(path: Path) -> dict:
    """JSON object mapping hyperparameter name to a list of options (null = unlimited)."""
    grid = json.loads(path.read_text(encoding="utf-8"))
    unknown = set(grid) - set(HP_KEYS)
    if unknown:
        raise CLIError(f"{path}: unknown grid keys {sorted(unknown)}")
    return grid


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        cfg = RunConfig(base=Path.cwd())
        cfg.targets = dict(OZONATION_SCENARIOS)
        return cfg
    path = Path(path)
    if not path.is_file():
        raise CLIError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise CLIError(f"{path}: {exc}") from None
    base = path.resolve().parent
    cfg = RunConfig(base=base)

    def resolve(p: str) -> Path:
        q = Path(p.strip())
        return q if q.is_absolute() else base / q

    try:
        if cp.has_section("run"):
            run = cp["run"]
            cfg.seed = run.getint("seed", 0)
            cfg.out = resolve(run.get("out", "out"))
            if run.get("schema", "").strip():
                cfg.schema = data.load_schema(resolve(run["schema"]))
        if cp.has_section("data"):
            sec = cp["data"]
            if sec.get("path", "").strip():
                cfg.dataset = resolve(sec["path"])
            cfg.synth_count = sec.getint("count", cfg.synth_count)
            if sec.get("noise", "").strip() and sec["noise"].strip() != "default":
                cfg.synth_noise = _floats(sec["noise"])
            cfg.train_fraction = sec.getfloat("train_fraction", cfg.train_fraction)
        if cp.has_section("forest"):
            sec = cp["forest"]
            cfg.grid_search = sec.getboolean("grid_search", False)
            if sec.get("grid", "").strip():
                cfg.grid = load_grid(resolve(sec["grid"]))
            cfg.folds = sec.getint("folds", cfg.folds)
            cfg.n_jobs = sec.getint("n_jobs", cfg.n_jobs)
            cfg.hyperparams = _hp_from_section(sec)
        if cp.has_section("ahp"):
            sec = cp["ahp"]
            if sec.get("matrix", "").strip():
                cfg.matrix = resolve(sec["matrix"])
            cfg.threshold = sec.getfloat("threshold", cfg.threshold)
        if cp.has_section("targets"):
            cfg.targets = {k: _floats(v) for k, v in cp["targets"].items()}
        elif cfg.schema == data.ozonation_schema():
            cfg.targets = dict(OZONATION_SCENARIOS)
        if cp.has_section("agent"):
            cfg.agent = agents.AgentConfig.from_mapping(dict(cp["agent"]))
    except (ValueError, KeyError) as exc:
        raise CLIError(f"{path}: {exc}") from None
    for name, t in cfg.targets.items():
        if len(t) != cfg.schema.n_criteria:
            raise CLIError(f"target {name!r} has {len(t)} values, "
                           f"schema has {cfg.schema.n_criteria} criteria")
    return cfg


def _write_rows(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- commands ---------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> int:
    ds = data.synth_generate(cfg.schema, cfg.synth_count, cfg.synth_noise,
                             seeding.derive_seed(cfg.seed, seeding.SYNTH))
    path = cfg.dataset_path
    path.parent.mkdir(parents=True, exist_ok=True)
    data.write_csv(ds, path)
    print(f"wrote {len(ds)} rows to {path}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    ds = data.load_csv(cfg.dataset_path, cfg.schema)
    train, test = data.split(ds, cfg.train_fraction, seeding.derive_seed(cfg.seed, seeding.SPLIT))
    if len(test) == 0:
        raise CLIError("test split is empty; use more rows or a smaller train_fraction")
    grid = forest.expand_grid(cfg.grid) if cfg.grid_search else None
    (cfg.out / "models").mkdir(parents=True, exist_ok=True)
    report, cv_rows = [], []
    for i, name in enumerate(cfg.schema.criteria):
        hp = cfg.hyperparams
        if grid is not None:
            t0 = time.perf_counter()
            hp, table = forest.grid_search_cv(
                train.inputs, train.target(i), grid, cfg.folds,
                seeding.derive_seed(cfg.seed, seeding.CV, i), n_jobs=cfg.n_jobs)
            log.info("%s: grid search over %d candidates took %.1fs", name, len(grid),
                     time.perf_counter() - t0)
            for row in forest.hp_rows(table):
                cv_rows.append([name] + [row[k] for k in HP_KEYS] + [row["mean_cv_mse"]])
        model = forest.fit_forest(train.inputs, train.target(i), hp,
                                  seeding.derive_seed(cfg.seed, seeding.FOREST, i),
                                  criterion_name=name, schema_hash=cfg.schema.fingerprint())
        m = forest.evaluate(model, test.inputs, test.target(i))
        forest.save_model(model, cfg.model_path(name))
        hp_row = forest.hp_rows([(hp, 0.0)])[0]
        report.append([name] + [hp_row[k] for k in HP_KEYS]
                      + [repr(m.r2), repr(m.mae), repr(m.mape), len(train), len(test)])
        print(f"{name}: R2={m.r2:.4f} MAE={m.mae:.4f} MAPE={m.mape:.2f}%")
    _write_rows(cfg.out / "train_report.csv",
                ["criterion", *HP_KEYS, "r2", "mae", "mape", "n_train", "n_test"], report)
    if grid is not None:
        _write_rows(cfg.out / "cv_report.csv", ["criterion", *HP_KEYS, "mean_cv_mse"], cv_rows)
    return 0


def cmd_ahp(cfg: RunConfig) -> int:
    if cfg.matrix is None:
        raise CLIError("no comparison matrix configured ([ahp] matrix)")
    a = ahp.load_matrix(cfg.matrix)
    if len(a) != cfg.schema.n_criteria:
        raise CLIError(f"matrix is {len(a)}x{len(a)}, schema has {cfg.schema.n_criteria} criteria")
    problems = ahp.validate(a)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        raise CLIError("invalid comparison matrix")
    w = ahp.derive_weights(a)
    accepted = ahp.check_consistency(w, cfg.threshold)
    width = max(len(c) for c in cfg.schema.criteria)
    print(f"{'criterion':<{width}}  {'GM':>8}  {'weight':>8}")
    for c, g, wi in zip(cfg.schema.criteria, w.geometric_means, w.weights):
        print(f"{c:<{width}}  {g:8.4f}  {wi:8.4f}")
    print(f"lambda_max = {w.lambda_max:.4f}")
    print(f"CI = {w.ci:.4f}")
    print("CR = n/a" if w.cr is None else f"CR = {w.cr:.4f}")
    print(f"verdict: {'accept' if accepted else 'reject'} (threshold {cfg.threshold:g})")
    cfg.out.mkdir(parents=True, exist_ok=True)
    ahp.save_weights(w, cfg.schema.criteria, cfg.weights_path, cfg.threshold)
    if not accepted:
        print(f"comparison matrix rejected: CR {w.cr:.4f} > {cfg.threshold:g}", file=sys.stderr)
        return 1
    return 0


def _load_surrogates(cfg: RunConfig) -> SurrogateGrid:
    models = []
    for name in cfg.schema.criteria:
        path = cfg.model_path(name)
        if not path.is_file():
            raise CLIError(f"missing model file {path}; run 'train' first")
        model = forest.load_model(path)
        if model.schema_hash and model.schema_hash != cfg.schema.fingerprint():
            raise CLIError(f"{path} was trained for a different schema")
        models.append(model)
    return SurrogateGrid(cfg.schema, models)


def _load_weights(cfg: RunConfig) -> np.ndarray:
    criteria, w, accepted = ahp.load_weights(cfg.weights_path)
    if tuple(criteria) != cfg.schema.criteria:
        raise CLIError(f"weights are for criteria {criteria}, schema has {cfg.schema.criteria}")
    if not accepted:
        raise CLIError("criteria weights were rejected by the consistency check")
    return w


def _scenarios(cfg: RunConfig, only: str | None):
    items = list(cfg.targets.items())
    if not items:
        raise CLIError("no target scenarios configured ([targets])")
    if only is None:
        return list(enumerate(items))
    for i, (name, t) in enumerate(items):
        if name == only or str(i + 1) == only:
            return [(i, (name, t))]
    raise CLIError(f"unknown scenario {only!r}")


def cmd_optimize(cfg: RunConfig, scenario: str | None = None) -> int:
    w = _load_weights(cfg)
    grid = _load_surrogates(cfg)
    for i, (name, t) in _scenarios(cfg, scenario):
        env = ProcessEnv(grid, TargetSpec(t, w))
        seed = agents.scenario_seed(cfg.seed, i)
        res = agents.dqn_train(env, cfg.agent, seed)
        out = cfg.out / "optimize" / name
        out.mkdir(parents=True, exist_ok=True)
        res.log.write_csv(out / "runlog.csv")
        res.write_summary(out / "summary.json", cfg.agent, seed, env)
        log.info("%s: episode wall-clock %s", name,
                 ", ".join(f"{s:.2f}s" for s in res.log.wall_clock))
        print(f"{name}: best_error={res.best_error:.4f} at "
              f"{dict(zip(cfg.schema.variable_names, res.best_state))}")
    return 0


def cmd_compare(cfg: RunConfig, scenario: str | None = None) -> int:
    w = _load_weights(cfg)
    grid = _load_surrogates(cfg)
    picked = _scenarios(cfg, scenario)
    rows = []
    for i, (name, t) in picked:
        env = ProcessEnv(grid, TargetSpec(t, w))
        seed = agents.scenario_seed(cfg.seed, i)
        for method in ("dqn", "qlearning"):
            res = agents.METHODS[method](env, cfg.agent, seed)
            rows.append([name, method, *map(repr, res.best_state), repr(res.best_error),
                         res.steps_to_best])
            print(f"{name} {method}: best_error={res.best_error:.4f}")
    _write_rows(cfg.out / "compare.csv",
                ["scenario", "method", *cfg.schema.variable_names, "best_error",
                 "steps_to_best"], rows)
    return 0


def cmd_report(cfg: RunConfig) -> int:
    """Long-format CSVs for loss, exploration and min-error curves."""
    root = cfg.out / "optimize"
    runs = sorted(p for p in root.glob("*/runlog.csv")) if root.is_dir() else []
    if not runs:
        raise CLIError(f"no run logs under {root}; run 'optimize' first")
    loss, minerr, explore = [], [], []
    for path in runs:
        name = path.parent.name
        with path.open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["loss"]:
                    loss.append([name, row["step"], row["loss"]])
                minerr.append([name, row["step"], row["min_error"]])
        summary = json.loads((path.parent / "summary.json").read_text(encoding="utf-8"))
        for ep, n in enumerate(summary["distinct_states_per_episode"], start=1):
            explore.append([name, ep, n])
    rep = cfg.out / "report"
    _write_rows(rep / "loss.csv", ["scenario", "step", "loss"], loss)
    _write_rows(rep / "exploration.csv", ["scenario", "episode", "distinct_states"], explore)
    _write_rows(rep / "min_error.csv", ["scenario", "step", "min_error"], minerr)
    print(f"wrote curves for {len(runs)} scenario(s) to {rep}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="procopt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("synth", "write a synthetic experience dataset"),
                        ("train", "fit one surrogate forest per criterion"),
                        ("ahp", "derive and check criteria weights"),
                        ("optimize", "run the DQN search per target scenario"),
                        ("compare", "DQN vs tabular Q-learning per scenario"),
                        ("report", "collect run logs into plot-ready CSVs")]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--out", help="override the output directory")
        if name in ("optimize", "compare"):
            sp.add_argument("--scenario", help="run only this scenario (name or 1-based index)")
        if name == "synth":
            sp.add_argument("--count", type=int, help="override the row count")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = Path(args.out)
        if getattr(args, "count", None) is not None:
            cfg.synth_count = args.count
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "ahp":
            return cmd_ahp(cfg)
        if args.command == "optimize":
            return cmd_optimize(cfg, args.scenario)
        if args.command == "compare":
            return cmd_compare(cfg, args.scenario)
        return cmd_report(cfg)
    except (CLIError, data.DataError, ahp.AHPError, ValueError, OSError) as exc:
        print(f"procopt {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

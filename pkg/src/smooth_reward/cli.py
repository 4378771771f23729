"""Command-line experiment runner.

Subcommands: ``train``, ``roadmap``, ``ablate``, ``verify-theory`` and
``verify-verifiers``. Configuration is a flat JSON object; every key has a
default (see ``ExperimentConfig``) and unknown keys are rejected. Outputs go
to ``<out>/<mode>_seed<N>/`` together with ``resolved_config.json``. The
output root can also be set with the ``SMOOTH_REWARD_OUT`` environment
variable; nothing else is read from the environment.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import itertools
import json
import logging
import math
import os
import statistics
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence


from . import verifiers as V
from .advantage import AdvantageConfig, Estimator
from .analysis import run_theory_checks
from .envs import RewardPipeline, generate_corpus, load_corpus
from .snra_core import DomainError, OperatorKind, ScheduleShape, SharpnessSchedule, SnraParams, snra
from .trainer import TrainerConfig, run_experiment

log = logging.getLogger(__name__)

OUT_ENV = "SMOOTH_REWARD_OUT"
ROADMAP_COLUMNS = ("mechanism", "T_conv", "adv_variance", "final_accuracy")
ABLATION_AXES = ("k_min", "k_max", "alpha", "operator_kind")
ROADMAP_NOTE = "no supervised-only baseline row: supervised pre-training has no analog here"


class ConfigError(ValueError):
    """Malformed configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration.

    Schedule: k_min, k_max, steepness, center, total_steps, schedule_shape.
    fixed_k is the sharpness of the fixed-k roadmap rows.
    Advantage: estimator, alpha, adv_clip, norm_epsilon.
    Optimizer: group_size, batch_size, ratio_clip, kl_coeff, learning_rate, inner_epochs.
    Reward: reward_balance, operator_kind, binary_reward, eps_r, gamma, eps_log.
    Policy: kernel_width (answer-similarity smoothing), near_miss_prior.
    Corpus: corpus_path (JSONL) or generated from corpus_size, continuous_fraction,
    difficulty and n_bins with the run seed.
    """

    seed: int = 0
    total_steps: int = 300
    k_min: float = 1.0
    k_max: float = 100.0
    steepness: float = 10.0
    center: float = 0.5
    schedule_shape: str = "sigmoid"
    fixed_k: float = 10.0
    estimator: str = "ap_grpo"
    alpha: float = 1.0
    adv_clip: float = 1.5
    norm_epsilon: float = 1e-6
    group_size: int = 8
    batch_size: int = 16
    ratio_clip: float = 0.2
    kl_coeff: float = 0.02
    learning_rate: float = 20.0
    inner_epochs: int = 1
    reward_balance: float = 0.1
    operator_kind: str = "sigmoid"
    binary_reward: bool = False
    eps_r: float = V.DEFAULT_EPS_R
    gamma: float = 1.0
    eps_log: float = V.DEFAULT_EPS_LOG
    kernel_width: float = 1.0
    near_miss_prior: bool = True
    corpus_path: Optional[str] = None
    corpus_size: int = 32
    continuous_fraction: float = 0.5
    difficulty: float = 2.0
    n_bins: int = 64
    out_dir: str = "runs"

    def __post_init__(self):
        if self.k_min > self.k_max:
            raise ConfigError(f"k_min ({self.k_min}) must not exceed k_max ({self.k_max})",
                              "k_min, k_max")
        for name, enum_cls in (("schedule_shape", ScheduleShape), ("estimator", Estimator),
                               ("operator_kind", OperatorKind)):
            value = getattr(self, name)
            allowed = [m.value for m in enum_cls]
            if value not in allowed:
                raise ConfigError(f"{name}: {value!r} is not one of {allowed}", name)
        try:
            self.trainer_config()
            self.pipeline()
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        if self.corpus_path is None and self.corpus_size < 1:
            raise ConfigError("corpus_size must be positive", "corpus_size")
        if not self.difficulty > 0:
            raise ConfigError("difficulty must be positive", "difficulty")
        if not 0 <= self.continuous_fraction <= 1:
            raise ConfigError("continuous_fraction must lie in [0, 1]", "continuous_fraction")

    def schedule(self) -> SharpnessSchedule:
        return SharpnessSchedule(self.k_min, self.k_max, self.steepness, self.center,
                                 self.total_steps, ScheduleShape(self.schedule_shape))

    def trainer_config(self) -> TrainerConfig:
        adv = AdvantageConfig(self.norm_epsilon, self.alpha, self.adv_clip, Estimator(self.estimator))
        return TrainerConfig(
            schedule=self.schedule(), advantage=adv, group_size=self.group_size,
            batch_size=self.batch_size, ratio_clip=self.ratio_clip, kl_coeff=self.kl_coeff,
            learning_rate=self.learning_rate, reward_balance=self.reward_balance,
            operator_kind=OperatorKind(self.operator_kind), binary_reward=self.binary_reward,
            inner_epochs=self.inner_epochs, kernel_width=self.kernel_width,
            near_miss_prior=self.near_miss_prior, seed=self.seed)

    def pipeline(self) -> RewardPipeline:
        phi = V.calibrate_phi(self.k_max, self.eps_r, self.gamma, self.eps_log)
        return RewardPipeline(phi=phi, balance=self.reward_balance,
                              operator=OperatorKind(self.operator_kind),
                              binary=self.binary_reward, n_bins=self.n_bins)

    def corpus(self):
        if self.corpus_path is not None:
            return load_corpus(self.corpus_path)
        return generate_corpus(self.corpus_size, self.seed,
                               continuous_fraction=self.continuous_fraction,
                               difficulty=self.difficulty, n_bins=self.n_bins)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}", name)
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}", name)
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}", name)
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}", name)
        return value
    # Optional[str]
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string or null, got {value!r}", name)
    return value


def config_from_dict(data: dict, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    values = {}
    for key, value in data.items():
        if key not in _FIELD_TYPES:
            close = difflib.get_close_matches(key, list(_FIELD_TYPES), n=1)
            hint = f"; did you mean {close[0]!r}?" if close else ""
            raise ConfigError(f"unknown key {key!r}{hint}", key)
        values[key] = _coerce(key, value)
    return replace(base or ExperimentConfig(), **values)


def load_config(path) -> ExperimentConfig:
    """Parse a flat JSON config; an empty file gives every default."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return ExperimentConfig()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)


def write_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_resolved_config(cfg: ExperimentConfig, out_dir: Path) -> Path:
    path = out_dir / "resolved_config.json"
    write_json(asdict(cfg), path)
    return path


def run_dir(cfg: ExperimentConfig, mode: str) -> Path:
    out = Path(cfg.out_dir) / f"{mode}_seed{cfg.seed}"
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- modes --------------------------------------------------------------------


def roadmap_mechanisms(cfg: ExperimentConfig) -> dict:
    """The five roadmap rows as config overrides, in table order."""
    fixed = dict(k_min=cfg.fixed_k, k_max=cfg.fixed_k)
    return {
        "binary_grpo": dict(estimator="grpo", binary_reward=True),
        "snra_fixed_k_grpo": dict(estimator="grpo", **fixed),
        "ap_grpo_fixed_k": dict(estimator="ap_grpo", **fixed),
        "ap_grpo_linear": dict(estimator="ap_grpo", schedule_shape="linear"),
        "ap_grpo_sigmoid": dict(estimator="ap_grpo", schedule_shape="sigmoid"),
    }


def _variant(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    base = dict(binary_reward=False)
    base.update(overrides)
    return replace(cfg, **base)


def run_roadmap(cfg: ExperimentConfig, seeds: Optional[Sequence[int]] = None) -> list[dict]:
    """One row per mechanism; with several seeds each metric is the median."""
    seeds = list(seeds) if seeds else [cfg.seed]
    rows = []
    for name, overrides in roadmap_mechanisms(cfg).items():
        summaries = []
        for seed in seeds:
            run = _variant(replace(cfg, seed=seed), **overrides)
            summaries.append(run_experiment(run.trainer_config(), run.corpus(),
                                            pipeline=run.pipeline()).summary)
        rows.append({"mechanism": name,
                     "T_conv": _median([s["t_conv"] for s in summaries]),
                     "adv_variance": _median([s["mean_adv_variance"] for s in summaries]),
                     "final_accuracy": _median([s["final_accuracy"] for s in summaries])})
    return rows


def _median(values):
    # a run that never converged (None) counts as slower than any that did
    mid = statistics.median(math.inf if v is None else v for v in values)
    return None if mid == math.inf else mid


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return repr(round(value, 10))
    return str(value)


def write_roadmap_csv(rows: Sequence[dict], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROADMAP_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in ROADMAP_COLUMNS])


def roadmap_assertions(rows: Sequence[dict]) -> list[dict]:
    by = {r["mechanism"]: r for r in rows}
    inf = math.inf
    tc = {k: inf if v["T_conv"] is None else v["T_conv"] for k, v in by.items()}
    acc = {k: v["final_accuracy"] for k, v in by.items()}
    sig, fix, binary = "ap_grpo_sigmoid", "ap_grpo_fixed_k", "binary_grpo"
    # only the first ordering decides the exit status; the rest are reported
    return [
        {"name": "t_conv_sigmoid_le_binary", "enforced": True,
         "passed": tc[sig] <= tc[binary]},
        {"name": "t_conv_sigmoid_le_fixed_le_binary", "enforced": False,
         "passed": tc[sig] <= tc[fix] <= tc[binary]},
        {"name": "accuracy_sigmoid_ge_fixed_ge_binary", "enforced": False,
         "passed": acc[sig] >= acc[fix] >= acc[binary]},
        {"name": "adv_variance_sigmoid_le_binary", "enforced": False,
         "passed": by[sig]["adv_variance"] <= by[binary]["adv_variance"]},
    ]


def _axis_value(axis: str, raw: str):
    if axis == "operator_kind":
        return raw
    return float(raw)


def run_ablation(cfg: ExperimentConfig, axis: str, values: Sequence) -> list[dict]:
    if axis not in ABLATION_AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {list(ABLATION_AXES)}", axis)
    rows = []
    for value in values:
        run = config_from_dict({axis: value}, base=cfg)
        s = run_experiment(run.trainer_config(), run.corpus(), pipeline=run.pipeline()).summary
        rows.append({"axis": axis, "value": value, "T_conv": s["t_conv"],
                     "final_accuracy": s["final_accuracy"],
                     "adv_variance": s["mean_adv_variance"],
                     "mean_abs_advantage": s["mean_abs_advantage"]})
    return rows


def ablation_assertions(axis: str, rows: Sequence[dict]) -> list[dict]:
    by = {r["value"]: r for r in rows}
    checks = []
    if axis == "alpha" and 1.0 in by and 2.0 in by:
        ratio = by[2.0]["mean_abs_advantage"] / by[1.0]["mean_abs_advantage"]
        checks.append({"name": "alpha2_mean_abs_advantage_below_alpha1", "ratio": ratio,
                       "passed": ratio < 1.0})
    if axis == "operator_kind" and {"sigmoid", "tanh_shifted"} <= set(by):
        gap = abs(by["sigmoid"]["final_accuracy"] - by["tanh_shifted"]["final_accuracy"])
        checks.append({"name": "operator_parity_within_5pp", "gap": gap, "passed": gap <= 0.05})
    return checks


def verifier_checks() -> list[dict]:
    """Verifier examples, exhaustive Kendall agreement and calibration round-trips."""
    checks = []
    examples = [
        ("direction_same", V.verify_direction(8, 3, 3), 1.0),
        ("direction_wrap", V.verify_direction(8, 0, 7), 0.5),
        ("direction_far", V.verify_direction(4, 0, 2), 0.0),
        ("order_pair_correct", V.verify_order_pair(1, 5, "A", 2), -math.expm1(-2.0)),
        ("order_pair_tie", V.verify_order_pair(3, 3, "A", 2), 0.0),
        ("order_pair_wrong", V.verify_order_pair(1, 5, "B", 2), 0.0),
        ("order_list_identity", V.verify_order_list((0, 1, 2, 3), (0, 1, 2, 3)), 1.0),
        ("order_list_reverse", V.verify_order_list((0, 1, 2, 3), (3, 2, 1, 0)), 0.0),
        ("order_list_swap", V.verify_order_list((0, 1, 2), (1, 0, 2)), 2 / 3),
        ("count_exact", V.verify_count(5, 5), 1.0),
        ("count_off_by_one", V.verify_count(5, 6, 1), math.exp(-1)),
        ("count_off_by_three", V.verify_count(5, 8, 1), math.exp(-3)),
        ("position_equal", V.verify_position({"left", "near"}, {"left", "near"}), 1.0),
        ("position_disjoint", V.verify_position({"left"}, {"right"}), 0.0),
        ("position_half", V.verify_position({"a", "b"}, {"a"}), 0.5),
    ]
    for name, got, want in examples:
        checks.append({"name": name, "value": got, "expected": want, "passed": got == want})

    mismatches = 0
    pairs = 0
    for n in range(1, 6):
        perms = list(itertools.permutations(range(n)))
        for a in perms:
            for b in perms:
                pairs += 1
                pos_b = {x: i for i, x in enumerate(b)}
                brute = sum(1 for i, j in itertools.combinations(range(n), 2)
                            if pos_b[a[i]] > pos_b[a[j]])
                mismatches += brute != V.kendall_distance(a, b)
    checks.append({"name": "kendall_exhaustive", "pairs": pairs, "mismatches": mismatches,
                   "passed": mismatches == 0})

    worst = 0.0
    for k_max, eps_r, gamma in itertools.product((50.0, 100.0, 200.0), (1e-3, 5e-3, 1e-2),
                                                 (1.0, 1.5, 2.0)):
        phi = V.calibrate_phi(k_max, eps_r, gamma)
        got = float(snra(SnraParams(k_max), V.phi_map(phi, 0.0)))
        worst = max(worst, abs(got - eps_r))
    checks.append({"name": "calibration_round_trip", "max_abs_error": worst,
                   "passed": worst <= 1e-9})
    return checks


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smooth-reward", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode, help_text in (("train", "run one training experiment"),
                            ("roadmap", "run the five-mechanism roadmap"),
                            ("ablate", "sweep one configuration axis"),
                            ("verify-theory", "Monte-Carlo and analytic checks of the advantage theory"),
                            ("verify-verifiers", "verifier examples and calibration round-trips")):
        p = sub.add_parser(mode, help=help_text)
        p.add_argument("--config", type=Path, help="flat JSON config file")
        p.add_argument("--seed", type=int, help="run seed (overrides the config)")
        p.add_argument("--out", type=Path, help="output root directory")
        if mode == "roadmap":
            p.add_argument("--seeds", type=str,
                           help="comma-separated seeds; metrics become medians over them")
        if mode == "ablate":
            p.add_argument("--axis", required=True, choices=ABLATION_AXES)
            p.add_argument("--values", required=True, help="comma-separated axis values")
        if mode == "verify-theory":
            p.add_argument("--n-groups", type=int, default=100_000)
    return parser


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    env_out = os.environ.get(OUT_ENV)
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    elif env_out:
        overrides["out_dir"] = env_out
    return config_from_dict(overrides, base=cfg)


def _finish(report: dict, out: Path, name: str = "report.json") -> int:
    path = out / name
    write_json(report, path)
    if report["passed"]:
        print(f"all checks passed; report at {path}")
        return 0
    failed = [c["name"] for c in report["checks"]
              if not c["passed"] and c.get("enforced", True)]
    print(f"checks failed: {', '.join(failed)}; report at {path}", file=sys.stderr)
    return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
    except (ConfigError, OSError) as exc:
        field = getattr(exc, "field", None)
        where = f" [field: {field}]" if field else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return 2
    mode = args.mode.replace("-", "_")
    out = run_dir(cfg, mode)
    write_resolved_config(cfg, out)

    if args.mode == "train":
        result = run_experiment(cfg.trainer_config(), cfg.corpus(), out_dir=out,
                                pipeline=cfg.pipeline())
        write_json(result.summary, out / "summary.json")
        print(f"records written to {out / 'records.csv'}")
        return 0

    if args.mode == "roadmap":
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
        rows = run_roadmap(cfg, seeds)
        write_roadmap_csv(rows, out / "roadmap.csv")
        checks = roadmap_assertions(rows)
        report = {"note": ROADMAP_NOTE, "seeds": seeds or [cfg.seed], "rows": rows,
                  "checks": checks, "passed": all(c["passed"] for c in checks if c["enforced"])}
        return _finish(report, out)

    if args.mode == "ablate":
        values = [_axis_value(args.axis, v.strip()) for v in args.values.split(",")]
        try:
            rows = run_ablation(cfg, args.axis, values)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        checks = ablation_assertions(args.axis, rows)
        report = {"axis": args.axis, "rows": rows, "checks": checks,
                  "passed": all(c["passed"] for c in checks)}
        return _finish(report, out)

    if args.mode == "verify-theory":
        report = run_theory_checks(seed=cfg.seed, n_groups=args.n_groups)
        return _finish(report, out)

    checks = verifier_checks()
    return _finish({"checks": checks, "passed": all(c["passed"] for c in checks)}, out)


if __name__ == "__main__":
    sys.exit(main())

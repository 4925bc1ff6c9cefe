"""``tkgode`` command line: train, eval, synth, gradcheck.

Science parameters come from a flat ``key = value`` config file; flags only
pick command modes.  Exit codes: 0 success, 1 failed check, 2 usage or
config error.  ``TKGODE_OUTPUT_DIR`` overrides the configured output dir.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import grad_check
from .checkpoint import check_compatible, load_checkpoint, save_checkpoint
from .data import PATTERNS, generate_synthetic_tkg, load_dataset, write_quadruples
from .encoder import GraphHistory, infer_representation
from .evaluation import FilterSetting, evaluate, write_metrics_csv, write_ranks_jsonl
from .exceptions import ConfigError, ContractError, ParseError, ShapeError
from .model import init_params
from .training import TrainConfig, loss, loss_and_grads, train, training_targets

__all__ = ["RunConfig", "read_config", "write_config", "run_gradcheck", "main"]

log = logging.getLogger("tkgode")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
OUTPUT_ENV = "TKGODE_OUTPUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    """Training settings plus where the data comes from and where outputs go.

    With ``data_dir`` empty the store is generated from the ``synth_*`` keys.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    data_dir: str = ""
    output_dir: str = "runs"
    synth_pattern: str = "periodic"
    synth_entities: int = 20
    synth_relations: int = 4
    synth_timestamps: int = 40
    synth_seed: int = 0
    gradcheck_threshold: float = 1e-4
    gradcheck_eps: float = 1e-4

    def to_items(self) -> list[tuple[str, object]]:
        items = list(self.train.to_dict().items())
        items += [(f.name, getattr(self, f.name)) for f in dataclasses.fields(self)
                  if f.name != "train"]
        return items

    def resolved_output(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)


def _run_fields():
    return {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "train"}


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        values[key] = value
    run_fields = _run_fields()
    train_keys = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(values) - set(run_fields) - train_keys)
    if unknown:
        raise ConfigError(f"{source}: unknown config keys: {', '.join(unknown)}")
    train_cfg = TrainConfig.from_dict({k: v for k, v in values.items() if k in train_keys})
    kwargs = {}
    for key, value in values.items():
        if key in run_fields:
            typ = type(run_fields[key].default)
            try:
                kwargs[key] = typ(value)
            except ValueError:
                raise ConfigError(f"{key}: cannot interpret {value!r} as {typ.__name__}") from None
    return RunConfig(train=train_cfg, **kwargs)


def read_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def write_config(path, cfg: RunConfig) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in cfg.to_items():
            fh.write(f"{key} = {value!r}\n" if isinstance(value, float) else f"{key} = {value}\n")


def load_store(cfg: RunConfig):
    if cfg.data_dir:
        if not Path(cfg.data_dir).is_dir():
            raise ConfigError(f"dataset directory not found: {cfg.data_dir}")
        return load_dataset(cfg.data_dir)
    return generate_synthetic_tkg(cfg.synth_entities, cfg.synth_relations,
                                  cfg.synth_timestamps, cfg.synth_pattern, cfg.synth_seed)


def _prepare_output(cfg: RunConfig) -> Path:
    out = cfg.resolved_output()
    out.mkdir(parents=True, exist_ok=True)
    write_config(out / "config.resolved.txt", cfg)
    return out


# --- commands ---------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = read_config(args.config)
    history = GraphHistory(load_store(cfg), cfg.train.time_span)
    out = _prepare_output(cfg)
    params, losses = train(history, cfg.train)
    with open(out / "losses.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, value in enumerate(losses, 1):
            writer.writerow([epoch, repr(value)])
    save_checkpoint(out / "checkpoint.txt", params, cfg.train.to_dict())
    print(f"wrote {out / 'checkpoint.txt'} after {len(losses)} epochs")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = read_config(args.config)
    history = GraphHistory(load_store(cfg), cfg.train.time_span)
    try:
        params, _ = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint {args.checkpoint}: {exc.strerror}") from None
    t = cfg.train
    check_compatible(params, history.num_entities, history.relation_space,
                     t.dim, t.n_layers, t.decoder)
    out = _prepare_output(cfg)
    setting = FilterSetting.parse(args.setting)
    subset = ("horizon", args.horizon) if args.horizon else args.subset
    report, records = evaluate(history, params, t.encoder(), setting, subset)
    write_metrics_csv(out / "metrics.csv", [report])
    write_ranks_jsonl(out / "ranks.jsonl", records)
    print(f"{report.setting} {report.subset} MRR={report.mrr:.4f} "
          f"hits@1={report.hits1:.4f} hits@3={report.hits3:.4f} "
          f"hits@10={report.hits10:.4f} n={report.n_queries}")
    return EXIT_OK


def cmd_synth(args) -> int:
    store = generate_synthetic_tkg(args.entities, args.relations, args.timestamps,
                                   args.pattern, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "valid", "test"):
        write_quadruples(out / f"{name}.txt", store.split(name))
    print(f"wrote {len(store.events)} events to {out}")
    return EXIT_OK


GRADCHECK_DEFAULTS = RunConfig(
    train=TrainConfig(dim=8, history_length=2, n_layers=2, decoder="tucker",
                      backward_mode="unrolled", time_span=1.0, epochs=0),
    synth_pattern="random", synth_entities=5, synth_relations=2, synth_timestamps=6,
    synth_seed=1,
)


def run_gradcheck(cfg: RunConfig, corrupt: str | None = None) -> dict[str, float]:
    """Max relative error per parameter group at the last training target.

    ``corrupt`` names a group whose analytic gradient is perturbed first;
    it exists so tests can confirm the check actually fails.
    """
    t = cfg.train
    history = GraphHistory(load_store(cfg), t.time_span)
    if history.num_entities > 8 or t.dim > 16:
        raise ConfigError("gradcheck is meant for tiny models (entities <= 8, dim <= 16)")
    target = training_targets(history, t.history_length)[-1]
    params = init_params(np.random.default_rng(t.seed), history.num_entities,
                         history.relation_space, t.dim, t.n_layers, t.decoder)
    _, grads = loss_and_grads(history, params, t, target)
    if corrupt is not None:
        if corrupt not in grads:
            raise ConfigError(f"unknown parameter group {corrupt!r}")
        grads[corrupt] = grads[corrupt] + 1e-2
    # the core never enters the vector field, so its differences only need the head
    H = infer_representation(history, params, t.encoder(), target)
    queries = history.store.at(target)[:, :3]
    report = {}
    for name in params.names:
        def f(x, name=name):
            if name == "decoder.core":
                core = x.reshape(params.arrays[name].shape)
                return loss(H, queries, history.num_entities, t.decoder, core)
            return loss_and_grads(history, params.unflatten(x, [name]), t, target)[0]
        report[name] = grad_check(f, params.flatten([name]), cfg.gradcheck_eps, grads[name])
    return report


def cmd_gradcheck(args) -> int:
    cfg = read_config(args.config) if args.config else GRADCHECK_DEFAULTS
    start = time.perf_counter()
    report = run_gradcheck(cfg, args.corrupt)
    worst = max(report.values())
    for name, err in report.items():
        flag = "ok" if err < cfg.gradcheck_threshold else "FAIL"
        print(f"{name:<16} max_rel_error={err:.3e} {flag}")
    print(f"overall max_rel_error={worst:.3e} threshold={cfg.gradcheck_threshold:g} "
          f"({time.perf_counter() - start:.1f}s)")
    return EXIT_OK if worst < cfg.gradcheck_threshold else EXIT_CHECK


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tkgode", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank test queries with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.add_argument("--setting", choices=["raw", "tu", "ta"], default="ta")
    p.add_argument("--subset", choices=["full", "inductive"], default="full")
    p.add_argument("--horizon", type=int, default=0, metavar="DT")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("out")
    p.add_argument("--pattern", choices=PATTERNS, default="periodic")
    p.add_argument("--entities", type=int, default=20)
    p.add_argument("--relations", type=int, default=4)
    p.add_argument("--timestamps", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="compare gradients with finite differences")
    p.add_argument("config", nargs="?")
    p.add_argument("--corrupt", metavar="GROUP", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ShapeError, ParseError) as exc:
        print(f"tkgode: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractError, OSError) as exc:
        print(f"tkgode: error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())

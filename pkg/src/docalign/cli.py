"""Command-line workflow: gen-synth, train, eval, localize, params.

Configuration comes from an optional JSON file with flat dotted keys
(model.*, cda.*, train.*, synth.*); --set key=value overrides win over
file values. All randomness flows through --seed. Exit codes: 0 success,
1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .align import SCORERS, joint_eval, rank_sentences
from .config import CdaConfig, ModelConfig, TrainConfig
from .data import SyntheticSpec, gen_synthetic, parse_pairs
from .encoder import PrecomputedVectors
from .errors import ConfigError, DataError, DocalignError, NumericalError
from .heatmap import emit_heatmap
from .siamese import PairModel
from .train import count_parameters, train_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


_SECTIONS = {"model": ModelConfig, "cda": CdaConfig, "train": TrainConfig, "synth": SyntheticSpec}
_TUPLE_KEYS = {"sentences_per_doc", "tokens_per_sentence"}


def _coerce(cls, key: str, value):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise ConfigError(f"unknown config key {cls.__name__}.{key}")
    if isinstance(value, str):
        if key in _TUPLE_KEYS:
            parts = value.split(",")
            return tuple(int(p) for p in parts)
        typ = fields[key].type
        if "int" in str(typ):
            return int(value)
        if "float" in str(typ):
            return float(value)
    if key in _TUPLE_KEYS and isinstance(value, list):
        return tuple(int(v) for v in value)
    return value


def load_settings(config_path: str | None, overrides: list[str]) -> dict[str, dict]:
    """Merge config-file keys and key=value overrides into per-section dicts."""
    settings: dict[str, dict] = {name: {} for name in _SECTIONS}
    items: list[tuple[str, object]] = []
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as f:
                file_cfg = json.load(f)
        except OSError as e:
            raise DataError(f"cannot read config {config_path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad config JSON in {config_path}: {e}") from e
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object of dotted keys")
        items.extend(file_cfg.items())
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not key=value")
        key, value = ov.split("=", 1)
        items.append((key.strip(), value.strip()))
    for key, value in items:
        if "." not in key:
            raise ConfigError(f"config key {key!r} must be section.field (e.g. model.hidden_size)")
        section, field = key.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        settings[section][field] = _coerce(_SECTIONS[section], field, value)
    return settings


def build_model_config(settings: dict[str, dict], args) -> ModelConfig:
    cda_kwargs = dict(settings["cda"])
    if getattr(args, "variant", None):
        cda_kwargs["variant"] = args.variant
    if getattr(args, "integration", None):
        cda_kwargs["integration"] = args.integration
    model_kwargs = dict(settings["model"])
    if getattr(args, "encoder", None):
        model_kwargs["encoder"] = args.encoder
    return ModelConfig(cda=CdaConfig(**cda_kwargs), **model_kwargs)


def build_train_config(settings: dict[str, dict], args) -> TrainConfig:
    kwargs = dict(settings["train"])
    if getattr(args, "seed", None) is not None:
        kwargs["seed"] = args.seed
    return TrainConfig(**kwargs)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file with flat dotted keys")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, default=None)


def make_parser() -> _Parser:
    parser = _Parser(prog="docalign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic pair benchmark")
    _add_common(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", help="train a pair model")
    _add_common(p)
    p.add_argument("--train", required=True, dest="train_file")
    p.add_argument("--dev", required=True, dest="dev_file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--variant", choices=("none", "shallow", "deep"))
    p.add_argument("--integration", choices=("concat", "add"))
    p.add_argument("--encoder", choices=("gru", "precomputed", "precomputed_avg"))
    p.add_argument("--vectors", help="precomputed sentence-vector JSONL")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("eval", help="joint D2D + S2D evaluation")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--scorer", choices=SCORERS, default="attention")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--variant", choices=("none", "shallow", "deep"),
                   help="assert the checkpoint's CDA variant")
    p.add_argument("--pat-norm", choices=("min", "n"), default="min")
    p.add_argument("--threads", type=int, default=os.cpu_count())
    p.add_argument("--vectors")
    p.add_argument("--out-dir")

    p = sub.add_parser("localize", help="rank sentences per pair; optional heatmaps")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--scorer", choices=SCORERS, default="attention")
    p.add_argument("--threads", type=int, default=os.cpu_count())
    p.add_argument("--vectors")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--heatmap", choices=("ansi", "html"))

    p = sub.add_parser("params", help="parameter accounting per component")
    _add_common(p)
    p.add_argument("--variant", choices=("none", "shallow", "deep"))
    p.add_argument("--integration", choices=("concat", "add"))
    p.add_argument("--encoder", choices=("gru", "precomputed", "precomputed_avg"))
    p.add_argument("--json", action="store_true")
    return parser


def _load_model(args) -> PairModel:
    vectors = PrecomputedVectors.load(args.vectors) if getattr(args, "vectors", None) else None
    model = PairModel.load(args.checkpoint, vectors=vectors)
    want = getattr(args, "variant", None)
    if want and model.cfg.cda.variant != want:
        raise DataError(
            f"checkpoint was trained with CDA variant {model.cfg.cda.variant!r}, not {want!r}")
    return model


def cmd_gen_synth(args) -> int:
    settings = load_settings(args.config, args.overrides)
    kwargs = dict(settings["synth"])
    if args.seed is not None:
        kwargs["seed"] = args.seed
    spec = SyntheticSpec(**kwargs)
    paths = gen_synthetic(spec, args.out_dir)
    for name in ("train", "dev", "test"):
        print(f"{name}: {paths[name]}")
    return EXIT_OK


def cmd_train(args) -> int:
    settings = load_settings(args.config, args.overrides)
    model_cfg = build_model_config(settings, args)
    train_cfg = build_train_config(settings, args)
    vectors = PrecomputedVectors.load(args.vectors) if args.vectors else None
    result = train_model(args.train_file, args.dev_file, model_cfg, train_cfg,
                         out_dir=args.out_dir, vectors=vectors, quiet=not args.verbose)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    print(f"best epoch {result.best_epoch}, dev loss {result.best_dev_loss:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = _load_model(args)
    pairs = parse_pairs(args.pairs, model.vocab or {}, model.cfg)
    report, _ = joint_eval(pairs, model, scorer=args.scorer, oracle=args.oracle,
                           seed=args.seed if args.seed is not None else 0,
                           threads=args.threads, pat_norm=args.pat_norm)
    print(report.format_table())
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "report.txt").write_text(report.format_table() + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_localize(args) -> int:
    model = _load_model(args)
    pairs = parse_pairs(args.pairs, model.vocab or {}, model.cfg)
    seed = args.seed if args.seed is not None else 0
    targets = [p for p in pairs if p.label == 1 and p.gold_side is not None]
    if not targets:
        raise DataError("no positive pairs with a localization side")
    results = [rank_sentences(p, model, scorer=args.scorer, seed=seed) for p in targets]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    out_path = out / "alignments.jsonl"
    with open(out_path, "w", encoding="utf-8") as f:
        for res in results:
            f.write(json.dumps(res.to_json_dict()) + "\n")
    print(f"alignments: {out_path}")
    if args.heatmap:
        rendered = [emit_heatmap(res, pair, format=args.heatmap)
                    for res, pair in zip(results, targets)]
        if args.heatmap == "ansi":
            print("\n".join(rendered))
        else:
            heat_path = out / "heatmaps.html"
            heat_path.write_text("\n".join(rendered), encoding="utf-8")
            print(f"heatmaps: {heat_path}")
    return EXIT_OK


def cmd_params(args) -> int:
    settings = load_settings(args.config, args.overrides)
    model_cfg = build_model_config(settings, args)
    counts = count_parameters(model_cfg)
    if args.json:
        print(json.dumps({"components": counts.components, "total": counts.total,
                          "cda_delta": counts.cda_delta}, indent=2))
    else:
        print(counts.format_table())
    return EXIT_OK


_COMMANDS = {"gen-synth": cmd_gen_synth, "train": cmd_train, "eval": cmd_eval,
             "localize": cmd_localize, "params": cmd_params}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.subcommand](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DocalignError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

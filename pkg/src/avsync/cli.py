"""Command-line entry point: data generation, tokenizer fitting, training,
evaluation, ablations, and analyses, driven by one JSON config file with
strict (unknown keys rejected) parsing.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure. Every
command writes a run.json provenance record (config echo, seeds, content
hashes of inputs) into its output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis as ana
from . import corpus, quantizer, train as train_mod
from .corpus import RenderConfig, World, WorldConfig
from .model import load_checkpoint
from .train import TrainConfig


class ConfigError(ValueError):
    """Bad config file or flags; maps to exit code 1."""


WORLD_KEYS = {f.name for f in dataclasses.fields(WorldConfig)} | {"seed"}
DATASET_KEYS = {
    "sizes", "mode", "frames_per_phoneme", "sigma_v", "token_source",
    "sigma_a", "n_eval_homophene", "context_words",
}
QUANTIZER_KEYS = {"iters", "seed", "samples_per_phoneme", "sigma_a"}
MODEL_KEYS = {
    "d_model", "n_layers", "n_heads", "d_ff", "dropout", "decoder_layers",
    "max_frames", "use_word_boundary",
}
TRAIN_KEYS = {
    "mode", "alpha", "sync_weight", "sync_variant", "mask_ratio", "epochs",
    "batch_size", "peak_lr", "warmup_epochs", "seed", "beta1", "beta2",
    "adam_eps", "grad_clip", "eval_every", "data_dir",
}
ANALYSIS_KEYS = {"split", "max_samples"}
SECTION_KEYS = {
    "world": WORLD_KEYS | {"dataset"},
    "quantizer": QUANTIZER_KEYS,
    "model": MODEL_KEYS,
    "train": TRAIN_KEYS,
    "analysis": ANALYSIS_KEYS,
}


def _check_keys(section: str, given: dict, allowed: set) -> None:
    for key in given:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in config section {section!r}")


def load_config(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys("<root>", cfg, set(SECTION_KEYS))
    for name, allowed in SECTION_KEYS.items():
        section = cfg.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        _check_keys(name, section, allowed)
    dataset = cfg.get("world", {}).get("dataset", {})
    _check_keys("world.dataset", dataset, DATASET_KEYS)
    return cfg


def world_from_config(cfg: dict, seed_override: Optional[int]) -> World:
    section = dict(cfg.get("world", {}))
    section.pop("dataset", None)
    seed = section.pop("seed", 0)
    if seed_override is not None:
        seed = seed_override
    try:
        wc = WorldConfig(**section)
    except TypeError as e:
        raise ConfigError(f"bad world config: {e}") from e
    return corpus.build_world(wc, int(seed))


def render_from_config(cfg: dict) -> RenderConfig:
    ds = cfg.get("world", {}).get("dataset", {})
    return RenderConfig(
        frames_per_phoneme=int(ds.get("frames_per_phoneme", 3)),
        sigma_v=float(ds.get("sigma_v", 0.5)),
        token_source=str(ds.get("token_source", "table")),
        sigma_a=float(ds.get("sigma_a", 0.1)),
    )


def train_config_from(cfg: dict, out_dir: str,
                      seed_override: Optional[int]) -> TrainConfig:
    fields = dict(cfg.get("model", {}))
    fields.update(cfg.get("train", {}))
    fields["out_dir"] = out_dir
    if seed_override is not None:
        fields["seed"] = seed_override
    try:
        return TrainConfig(**fields)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad train config: {e}") from e


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_record(out_dir: Path, command: str, cfg: dict,
                     seed_override: Optional[int],
                     inputs: list[Path]) -> None:
    record = {
        "command": command,
        "config": cfg,
        "seed_override": seed_override,
        "input_hashes": {str(p): _sha256(p) for p in inputs if p.exists()},
    }
    (out_dir / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True),
                                      encoding="utf-8")


def _info(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def cmd_generate_data(args, cfg: dict) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world = world_from_config(cfg, args.seed)
    ds = cfg.get("world", {}).get("dataset", {})
    sizes = {k: int(v) for k, v in ds.get("sizes", {"train": 600, "eval": 200}).items()}
    mode = str(ds.get("mode", "word"))
    render = render_from_config(cfg)
    gen_seed = world.seed + 1  # dataset stream distinct from world stream
    corpus.generate_dataset(
        world, sizes, mode, gen_seed, out, render=render,
        n_eval_homophene=int(ds.get("n_eval_homophene", 20)),
        context_words=int(ds.get("context_words", 0)))
    write_run_record(out, "generate-data", cfg, args.seed, [Path(args.config)])
    _info(args, f"dataset written to {out}")
    return 0


def cmd_fit_tokenizer(args, cfg: dict) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world = world_from_config(cfg, args.seed)
    q = cfg.get("quantizer", {})
    seed = int(q.get("seed", 0))
    per = int(q.get("samples_per_phoneme", 200))
    sigma_a = float(q.get("sigma_a", 0.1))
    rng = np.random.default_rng(seed)
    feats = np.repeat(world.phoneme_audio_embeddings.astype(np.float64), per, axis=0)
    feats = feats + rng.normal(0.0, sigma_a, size=feats.shape)
    book = quantizer.fit_codebook(feats, world.config.n_tokens,
                                  int(q.get("iters", 25)), seed)
    quantizer.save_codebook(book, out / "codebook.bin")
    write_run_record(out, "fit-tokenizer", cfg, args.seed, [Path(args.config)])
    _info(args, f"codebook written to {out / 'codebook.bin'} "
                f"(distortion {book.fit_distortion:.6f})")
    return 0


def cmd_train(args, cfg: dict) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tc = train_config_from(cfg, str(out), args.seed)
    if not tc.data_dir:
        raise ConfigError("train.data_dir is required")
    result = train_mod.train(tc)
    if result.final_eval is not None:
        (out / "eval_report.json").write_text(
            json.dumps(result.final_eval.to_json(), indent=2), encoding="utf-8")
    inputs = [Path(args.config), Path(tc.data_dir) / "manifest.json",
              Path(tc.data_dir) / "samples.bin"]
    write_run_record(out, "train", cfg, args.seed, inputs)
    _info(args, f"checkpoint written to {result.checkpoint_path}")
    return 0


def _load_eval_context(args, cfg: dict):
    tc_section = cfg.get("train", {})
    data_dir = tc_section.get("data_dir")
    if not data_dir:
        raise ConfigError("train.data_dir is required")
    dataset = corpus.load_dataset(data_dir)
    split = str(cfg.get("analysis", {}).get("split", "eval"))
    use_wb = bool(cfg.get("model", {}).get("use_word_boundary", False))
    return dataset, split, use_wb, Path(data_dir)


def cmd_evaluate(args, cfg: dict) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, split, use_wb, data_dir = _load_eval_context(args, cfg)
    model, _ = load_checkpoint(args.checkpoint[0])
    report = train_mod.evaluate(model, dataset, split, use_wb)
    (out / "eval_report.json").write_text(
        json.dumps(report.to_json(), indent=2), encoding="utf-8")
    write_run_record(out, "evaluate", cfg, args.seed,
                     [Path(args.config), Path(args.checkpoint[0]),
                      data_dir / "manifest.json"])
    _info(args, json.dumps({k: v for k, v in report.to_json().items()
                            if k in ("top1", "wer", "perplexity")}))
    return 0


def cmd_ablation(args, cfg: dict) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tc = train_config_from(cfg, str(out), args.seed)
    rows = train_mod.run_ablation_grid(tc)
    with open(out / "ablation.csv", "w") as fh:
        fh.write("sync,ctc,wer,perplexity\n")
        for r in rows:
            fh.write(f"{int(r['sync'])},{int(r['ctc'])},"
                     f"{r['wer']:.6f},{r['perplexity']:.6f}\n")
    (out / "ablation.json").write_text(json.dumps(rows, indent=2), encoding="utf-8")
    write_run_record(out, "ablation", cfg, args.seed, [Path(args.config)])
    _info(args, f"ablation grid written to {out / 'ablation.csv'}")
    return 0


def cmd_analyze_homophenes(args, cfg: dict) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, split, use_wb, data_dir = _load_eval_context(args, cfg)
    if dataset.mode != "word":
        raise RuntimeError("homophene analysis runs on a word-mode dataset")
    if dataset.world is None:
        raise RuntimeError("dataset has no world.json")
    predictions = {}
    for spec_str in args.checkpoint:
        if "=" not in spec_str:
            raise ConfigError(
                f"--checkpoint must be LABEL=PATH, got {spec_str!r}")
        label, path = spec_str.split("=", 1)
        model, _ = load_checkpoint(path)
        report = train_mod.evaluate(model, dataset, split, use_wb)
        predictions[label] = report.predictions
        labels = report.labels
    pairs = corpus.homophene_pairs(dataset.world)
    try:
        hreport = ana.homophene_f1_gain(predictions, labels, pairs,
                                        vanilla=args.vanilla)
    except ValueError as e:
        raise RuntimeError(str(e)) from e
    ana.write_homophene_csv(hreport, out / "homophenes.csv")
    write_run_record(out, "analyze-homophenes", cfg, args.seed,
                     [Path(args.config), data_dir / "manifest.json"]
                     + [Path(s.split("=", 1)[1]) for s in args.checkpoint])
    _info(args, f"homophene report written to {out / 'homophenes.csv'}")
    return 0


def cmd_analyze_attention(args, cfg: dict) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, split, use_wb, data_dir = _load_eval_context(args, cfg)
    model, _ = load_checkpoint(args.checkpoint[0])
    max_samples = cfg.get("analysis", {}).get("max_samples")
    report = train_mod.collect_attention_distances(
        model, dataset, split, use_wb,
        max_samples=int(max_samples) if max_samples else None)
    ana.write_attention_csv(report, out / "attention_distance.csv")
    write_run_record(out, "analyze-attention", cfg, args.seed,
                     [Path(args.config), Path(args.checkpoint[0]),
                      data_dir / "manifest.json"])
    _info(args, f"attention report written to {out / 'attention_distance.csv'} "
                f"(overall mean {report.overall_mean():.4f})")
    return 0


COMMANDS = {
    "generate-data": (cmd_generate_data, False),
    "fit-tokenizer": (cmd_fit_tokenizer, False),
    "train": (cmd_train, False),
    "evaluate": (cmd_evaluate, True),
    "ablation": (cmd_ablation, False),
    "analyze-homophenes": (cmd_analyze_homophenes, True),
    "analyze-attention": (cmd_analyze_attention, True),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avsync",
        description="Audio-token supervised visual speech recognition at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, needs_ckpt) in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="seed override (wins over the config file)")
        p.add_argument("--quiet", action="store_true")
        p.add_argument("--checkpoint", action="append",
                       default=None, required=needs_ckpt,
                       help="checkpoint path (analyze-homophenes: LABEL=PATH, "
                            "repeatable)")
        if name == "analyze-homophenes":
            p.add_argument("--vanilla", default="vanilla",
                           help="label of the no-audio baseline checkpoint")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    func, _ = COMMANDS[args.command]
    try:
        cfg = load_config(args.config)
        return func(args, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

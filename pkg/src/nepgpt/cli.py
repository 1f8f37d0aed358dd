"""Single CLI entry point wiring all pipeline stages behind subcommands.

Exit codes: 0 success, 1 usage, 2 data, 3 numeric, 4 io. Configuration
merges with precedence defaults < config file < flags, and every run
writes a RunManifest beside its outputs before the stage executes.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import corpus as C
from . import model as M
from . import shards as S
from . import tensor as T
from . import tokenizer as TOK
from . import trainer as TR
from .errors import ConfigInvalid, ToolkitError, UsageError
from .evaluate import SampleConfig, evaluate, generate
from .util import config_hash

log = logging.getLogger("nepgpt")

SUBCOMMANDS = ("clean", "train-tokenizer", "tokenize", "shard", "verify",
               "train", "eval", "sample", "self-test")

# config file keys: exactly the field names of the four config dataclasses
_CONFIG_FIELDS = {}
for _cls in (M.GptConfig, TR.TrainConfig, TR.LrSchedule, TR.OptimHyper):
    for _f in dataclasses.fields(_cls):
        _CONFIG_FIELDS.setdefault(_f.name, []).append((_cls, _f))


def parse_config_file(path) -> dict:
    """Flat key=value text; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        if key not in _CONFIG_FIELDS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def _coerce(field, raw: str):
    if field.type in ("int", int):
        return int(raw)
    if field.type in ("float", float):
        return float(raw)
    if field.type in ("bool", bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise UsageError(f"cannot parse boolean from {raw!r}")
    return raw


def build_configs(values: dict):
    """Instantiate (GptConfig, TrainConfig, LrSchedule, OptimHyper) from a
    flat key=value mapping. seq_len routes to both model and trainer."""
    kwargs = {cls: {} for cls in (M.GptConfig, TR.TrainConfig, TR.LrSchedule, TR.OptimHyper)}
    for key, raw in values.items():
        for cls, field in _CONFIG_FIELDS[key]:
            kwargs[cls][key] = _coerce(field, raw) if isinstance(raw, str) else raw
    return (M.GptConfig(**kwargs[M.GptConfig]), TR.TrainConfig(**kwargs[TR.TrainConfig]),
            TR.LrSchedule(**kwargs[TR.LrSchedule]), TR.OptimHyper(**kwargs[TR.OptimHyper]))


def write_manifest(out_path: Path, subcommand: str, resolved: dict, inputs: list,
                   outputs: list, seed) -> None:
    resolved = {k: str(v) for k, v in resolved.items()}
    manifest = {
        "subcommand": subcommand,
        "config": resolved,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "toolkit_version": __version__,
        "config_hash": config_hash(resolved),
    }
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(manifest, indent=2) + "\n")


# -- subcommands ---------------------------------------------------------------


def cmd_clean(args) -> int:
    cfg = C.CleanConfig(
        digit_policy={"keep": "keep_ascii", "map": "map_to_devanagari", "drop": "drop"}[args.digits],
        min_sentence_chars=args.min_chars, max_sentence_chars=args.max_chars,
        drop_fragments=args.fragments == "on")
    in_dir = Path(args.in_path)
    out_path = Path(args.out)
    files = sorted(in_dir.glob("**/*")) if in_dir.is_dir() else [in_dir]
    files = [f for f in files if f.is_file()]
    if not files:
        raise UsageError(f"no input files under {in_dir}")
    write_manifest(out_path.with_suffix(out_path.suffix + ".manifest.json"), "clean",
                   dataclasses.asdict(cfg) | {"in": in_dir, "out": out_path},
                   files, [out_path], args.seed)

    docs = (C.clean_document(str(f), f.read_text(encoding="utf-8", errors="replace"), cfg)
            for f in files)
    kept, stats = C.dedup_corpus(docs, cfg)
    with open(out_path, "w", encoding="utf-8") as f:
        for doc in kept:
            f.write(doc.text + "\n")
    if args.stats:
        Path(args.stats).write_text(C.stats_csv(stats))
    print(C.corpus_report(stats))
    return 0


def cmd_train_tokenizer(args) -> int:
    cfg = TOK.TokenizerConfig(vocab_size=args.vocab_size, sample_chars=args.sample_chars,
                              character_coverage=args.coverage)
    out = Path(args.out)
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "train-tokenizer",
                   dataclasses.asdict(cfg) | {"in": args.in_path, "out": out},
                   [args.in_path], [out], args.seed)
    sample = TOK.sample_corpus(args.in_path, cfg)
    vocab = TOK.train_bpe(sample, cfg, seed=args.seed or 0)
    vocab.save(out)
    print(f"trained {vocab.vocab_size} pieces ({len(vocab.char_pieces)} characters, "
          f"{len(vocab.merges)} merges) -> {out}")
    return 0


def cmd_tokenize(args) -> int:
    vocab = TOK.BpeVocab.load(args.vocab)
    ids = vocab.encode(args.text)
    print(" | ".join(vocab.piece_text(i) for i in ids))
    print(" ".join(str(i) for i in ids))
    return 0


def cmd_shard(args) -> int:
    vocab = TOK.BpeVocab.load(args.vocab)
    out_dir = Path(args.out)
    write_manifest(out_dir / "manifest.json", "shard",
                   {"vocab": args.vocab, "in": args.in_path, "out": out_dir,
                    "shard_tokens": args.shard_tokens},
                   [args.in_path, args.vocab], [out_dir], args.seed)

    def token_stream():
        with open(args.in_path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if line:
                    yield from vocab.encode(line, add_bos=True, add_eos=True)

    paths = S.write_shards(token_stream(), out_dir, shard_tokens=args.shard_tokens,
                           vocab_size=vocab.vocab_size)
    total = sum(S.shard_header(p).token_count for p in paths)
    print(f"wrote {len(paths)} shards, {total} tokens -> {out_dir}")
    return 0


def cmd_verify(args) -> int:
    paths = sorted(Path(args.dir).glob("shard_*.bin"))
    if not paths:
        raise UsageError(f"no shards under {args.dir}")
    for p in paths:
        header = S.verify_shard(p)
        print(f"{p}: ok, {header.token_count} tokens, vocab {header.vocab_size}")
    return 0


def cmd_train(args) -> int:
    values = parse_config_file(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = str(args.seed)
    cfg, run, sched, hyper = build_configs(values)

    vocab = TOK.BpeVocab.load(args.vocab)
    if vocab.vocab_size != cfg.vocab_size:
        raise ConfigInvalid(f"vocab file has {vocab.vocab_size} pieces but model config "
                            f"says vocab_size={cfg.vocab_size}")
    for p in sorted(Path(args.data).glob("shard_*.bin")):
        S.verify_shard(p)
    train_split, val_split = S.split_shards(args.data)
    out_dir = Path(args.out)
    write_manifest(out_dir / "manifest.json", "train",
                   TR._resolved_config(cfg, run, sched, hyper) |
                   {"data": args.data, "vocab": args.vocab, "out": out_dir},
                   [args.data, args.vocab], [out_dir], run.seed)
    TR.train(cfg, run, sched, hyper, train_split, val_split, out_dir=out_dir,
             resume=args.resume)
    print(f"training complete -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    ckpt_cfg, params, _, _, _, _ = TR.load_train_checkpoint(args.ckpt)
    _, val_split = S.split_shards(args.data)
    report = evaluate(params, ckpt_cfg, val_split, n_batches=args.batches,
                      seq_len=min(ckpt_cfg.seq_len, args.seq_len or ckpt_cfg.seq_len))
    print(TR.MetricsRecord.CSV_HEADER)
    print(report.csv_row())
    return 0


def cmd_sample(args) -> int:
    ckpt_cfg, params, _, _, _, _ = TR.load_train_checkpoint(args.ckpt)
    vocab = TOK.BpeVocab.load(args.vocab)
    if vocab.vocab_size != ckpt_cfg.vocab_size:
        raise ConfigInvalid(f"vocab file has {vocab.vocab_size} pieces but checkpoint "
                            f"says vocab_size={ckpt_cfg.vocab_size}")
    sample_cfg = SampleConfig(max_new_tokens=args.max_tokens, temperature=args.temperature,
                              top_k=args.top_k, seed=args.seed or 0)
    print(generate(params, ckpt_cfg, vocab, args.prompt, sample_cfg))
    return 0


def cmd_self_test(args) -> int:
    if not args.grad_check:
        raise UsageError("self-test requires --grad-check")
    rng = np.random.default_rng(0)
    failures = 0

    def check(name, builder, shapes, tol=1e-3):
        nonlocal failures
        inputs = [T.Tensor(rng.normal(size=s), requires_grad=True, dtype=np.float64)
                  for s in shapes]
        err = T.grad_check(builder, inputs)
        ok = err < tol
        failures += 0 if ok else 1
        print(f"  {'ok  ' if ok else 'FAIL'} {name:24s} max rel err {err:.2e}")

    print("primitive gradient checks (float64):")
    check("matmul", lambda a, b: T.tsum(T.matmul(a, b)), [(4, 5), (5, 3)], tol=1e-6)
    check("add", lambda a, b: T.tsum(T.add(a, b)), [(4, 5), (5,)], tol=1e-6)
    check("mul", lambda a, b: T.tsum(T.mul(a, b)), [(4, 5), (4, 5)], tol=1e-6)
    check("gelu", lambda a: T.tsum(T.gelu(a)), [(6, 7)], tol=1e-6)
    check("layernorm", lambda x, g, b: T.tsum(T.layernorm(x, g, b)), [(4, 8), (8,), (8,)],
          tol=1e-6)
    targets = rng.integers(0, 9, size=(3, 4))
    check("cross_entropy", lambda x: T.softmax_cross_entropy(x, targets), [(3, 4, 9)],
          tol=1e-6)
    ids = rng.integers(0, 10, size=(2, 5))
    check("embedding", lambda t: T.tsum(T.embedding(t, ids)), [(10, 6)], tol=1e-6)
    check("attention", lambda q, k, v: T.tsum(T.attention(q, k, v, 3, 5, causal=True)),
          [(2, 7, 4)] * 3, tol=1e-5)
    if failures:
        print(f"{failures} primitive checks failed")
        return 3
    print("all primitive gradient checks passed")
    return 0


# -- dispatch ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nepgpt", description=__doc__)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--log-level", default="warning")
    sub = parser.add_subparsers(dest="subcommand")

    p = sub.add_parser("clean")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-chars", type=int, default=12)
    p.add_argument("--max-chars", type=int, default=8192)
    p.add_argument("--digits", choices=["keep", "map", "drop"], default="map")
    p.add_argument("--fragments", choices=["on", "off"], default="off")
    p.add_argument("--stats", default=None)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("train-tokenizer")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=16384)
    p.add_argument("--coverage", type=float, default=0.9995)
    p.add_argument("--sample-chars", type=int, default=8_000_000)
    p.set_defaults(func=cmd_train_tokenizer)

    p = sub.add_parser("tokenize")
    p.add_argument("--vocab", required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("shard")
    p.add_argument("--vocab", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--shard-tokens", type=int, default=S.DEFAULT_SHARD_TOKENS)
    p.set_defaults(func=cmd_shard)

    p = sub.add_parser("verify")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--seq-len", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--max-tokens", type=int, default=128)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--top-k", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("self-test")
    p.add_argument("--grad-check", action="store_true")
    p.set_defaults(func=cmd_self_test)
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))
        if args.subcommand is None:
            parser.print_usage()
            return 1
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except ToolkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""Command-line entry point: ``univnet {extract,train,infer,eval-rmse,bench,gradcheck}``.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.
"""

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from univnet import dsp
from univnet.errors import FormatError, NumericError, UnivNetError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("univnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load_config(path):
    from univnet.training import TrainConfig

    if path is None:
        return TrainConfig()
    try:
        return TrainConfig.from_json(path)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _configured(args):
    """Training config from ``--config`` with ``--seed`` applied on top."""
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _seed(args, default=0):
    return default if args.seed is None else args.seed


def cmd_extract(args):
    wav_dir = Path(args.wav_dir)
    out_dir = Path(args.out_dir) if args.out_dir else wav_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(wav_dir.glob("*.wav"))
    if not paths:
        raise FormatError(f"{wav_dir}: no .wav files")
    mels, failures = {}, []
    for p in paths:
        try:
            mels[p] = dsp.log_mel(dsp.load_wav(p))
        except FormatError as exc:
            failures.append(f"{p.name}: {exc}")
    if not mels:
        raise FormatError("no readable files:\n" + "\n".join(failures))
    stats = dsp.load_stats(args.stats_in) if args.stats_in else dsp.compute_norm_stats(mels.values())
    for p, mel in mels.items():
        dsp.save_features(out_dir / f"{p.stem}.uvf", dsp.normalize(mel, stats))
    stats_path = Path(args.stats_out) if args.stats_out else out_dir / "stats.uvs"
    dsp.save_stats(stats_path, stats)
    print(json.dumps({"files": len(mels), "stats": str(stats_path), "failed": failures}))
    if failures:
        for f in failures:
            print(f, file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_train(args):
    from univnet.training import train

    cfg = _configured(args)
    if args.steps is not None:
        cfg.total_steps = args.steps
        cfg.warmup_steps = min(cfg.warmup_steps, cfg.total_steps)
    stats = dsp.load_stats(args.stats) if args.stats else None
    result = train(args.data_dir, cfg, args.out_dir, stats=stats)
    print(json.dumps({"steps": len(result.history), "checkpoints": [str(p) for p in result.checkpoints]}))
    return EXIT_OK


def cmd_infer(args):
    from univnet.checkpoint import load_checkpoint
    from univnet.training import generator_from_checkpoint, stats_from_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    gen = generator_from_checkpoint(ckpt)
    stats = stats_from_checkpoint(ckpt)
    if args.stats:
        given = dsp.load_stats(args.stats)
        if stats is None or given.mean.shape != stats.mean.shape or not (
                np.array_equal(given.mean, stats.mean) and np.array_equal(given.std, stats.std)):
            raise FormatError(f"{args.stats}: normalisation stats differ from the checkpoint's")
    if args.mel:
        mel = dsp.load_features(args.mel, normalized=True)
    else:
        if stats is None:
            raise FormatError(f"{args.checkpoint}: no normalisation stats for copy synthesis")
        mel = dsp.log_mel(dsp.load_wav(args.wav), stats)
    audio = gen.synthesize(mel, seed=_seed(args))
    dsp.write_wav(args.out, audio)
    print(json.dumps({"out": str(args.out), "samples": len(audio)}))
    return EXIT_OK


def cmd_eval_rmse(args):
    from univnet.metrics import evaluate_pairs

    if len(args.ref) != len(args.gen):
        raise UsageError("--ref and --gen must be given the same number of times")
    pairs = [(dsp.load_wav(r), dsp.load_wav(g)) for r, g in zip(args.ref, args.gen)]
    print(json.dumps(evaluate_pairs(pairs).to_dict()))
    return EXIT_OK


def cmd_bench(args):
    from univnet import kernels
    from univnet.generator import Generator, GeneratorConfig
    from univnet.metrics import benchmark

    if args.kernels:
        kernels.use_backend(args.kernels)
    if args.checkpoint:
        from univnet.checkpoint import load_checkpoint
        from univnet.training import generator_from_checkpoint

        gen = generator_from_checkpoint(load_checkpoint(args.checkpoint))
    else:
        gen = Generator(GeneratorConfig(channels=args.channels), seed=_seed(args))
    report = benchmark(gen, args.seconds, runs=args.runs, warmup=args.warmup, seed=_seed(args))
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def cmd_gradcheck(args):
    from univnet.gradcheck import run_gradcheck

    results = run_gradcheck(seed=_seed(args), composed=not args.ops_only)
    for r in results:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:28s} rel_err={r.rel_error:.3e} tol={r.tolerance:.0e}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} gradient check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", default=None, help="training config JSON")
    common.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="univnet", description="UnivNet vocoder toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", parents=[common], help="WAV directory to normalised log-mel features")
    p.add_argument("--wav-dir", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--stats-out", help="where to write stats (default OUT_DIR/stats.uvs)")
    p.add_argument("--stats-in", help="reuse existing stats instead of computing them")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="train a generator and discriminators")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stats", help="stats file matching precomputed .uvf features")
    p.add_argument("--steps", type=int, help="override total_steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="vocode a feature file or copy-synthesise a WAV")
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mel", help="UVF1 feature file (normalised)")
    src.add_argument("--wav", help="24 kHz WAV for copy synthesis")
    p.add_argument("--stats", help="stats the features were normalised with; must match the checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval-rmse", parents=[common], help="spectral RMSE between WAV pairs")
    p.add_argument("--ref", action="append", required=True)
    p.add_argument("--gen", action="append", required=True)
    p.set_defaults(func=cmd_eval_rmse)

    p = sub.add_parser("bench", parents=[common], help="generation speed")
    p.add_argument("--checkpoint")
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--seconds", type=float, default=1.0)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--kernels", choices=["compiled", "python"])
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--ops-only", action="store_true", help="skip the composed-loss checks")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"univnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=args.threads)
    else:
        limiter = contextlib.nullcontext()
    try:
        with limiter:
            return args.func(args)
    except UsageError as exc:
        print(f"univnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError) as exc:
        print(f"univnet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UnivNetError, ValueError, OSError) as exc:
        print(f"univnet: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

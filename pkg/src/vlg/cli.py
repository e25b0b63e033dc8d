"""``vlg`` command line: data generation, training, evaluation and studies.

Exit codes: 0 success, 1 structured error, 2 usage error. ``VLG_THREADS``
caps the BLAS thread pool (read before numpy loads); results are
deterministic for a fixed thread count.
"""

from __future__ import annotations

import os
import sys

_threads = os.environ.get("VLG_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import logging  # noqa: E402
from pathlib import Path  # noqa: E402

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(2, f"\n{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vlg", description="Sewing-pattern generation toy bench.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", type=Path, help="key=value experiment or dataset config")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", type=Path, required=out_required, help="output directory")
        return sp

    sp = common(sub.add_parser("datagen", help="build a dataset"))
    sp.add_argument("--variant", choices=("base", "+prompts", "+textures"))
    sp = common(sub.add_parser("train", help="train one model"))
    sp.add_argument("--data", type=Path, help="dataset directory (built under OUT/data if absent)")
    for name, helptext in (("eval", "evaluate every generalization axis"),
                           ("tiers", "language-axis metrics per prompt tier")):
        sp = common(sub.add_parser(name, help=helptext))
        sp.add_argument("--checkpoint", type=Path)
        sp.add_argument("--data", type=Path, required=True)
        sp.add_argument("--oracle", action="store_true", help="score ground-truth streams")
    common(sub.add_parser("ablate", help="train and compare the three dataset variants"))
    sp = common(sub.add_parser("scale", help="training-set size sweep"))
    sp.add_argument("--sizes", help="comma-separated ascending sizes")
    sp = common(sub.add_parser("tok", help="tokenizer utilities"), out_required=False)
    sp.add_argument("action", choices=("roundtrip", "encode"))
    sp.add_argument("file", type=Path)
    sp = common(sub.add_parser("oracle", help="check solvers against brute force"), out_required=False)
    sp.add_argument("what", choices=("assignment",))
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--max", type=int, default=6)
    common(sub.add_parser("report", help="index a results directory"))
    return p


def _exp(args):
    from .bench.experiments import ExperimentConfig
    return ExperimentConfig.load(args.config).with_seed(args.seed)


def cmd_datagen(args) -> int:
    from .datagen.dataset import build_dataset
    exp = _exp(args)
    path = build_dataset(exp.dataset_config(args.variant), args.out)
    print(path)
    return 0


def _need_model(args):
    from .model.checkpoint import load_checkpoint
    if args.oracle:
        return None
    if args.checkpoint is None:
        raise SystemExit(_usage(f"{args.command}: --checkpoint is required unless --oracle"))
    return load_checkpoint(args.checkpoint)


def _usage(msg: str) -> int:
    build_parser().print_help(sys.stderr)
    print(f"\nvlg: error: {msg}", file=sys.stderr)
    return 2


def cmd_train(args) -> int:
    from .datagen.dataset import Dataset, build_dataset
    from .model.network import build_model
    from .model.train import train
    exp = _exp(args)
    out = Path(args.out)
    if args.data is None:
        build_dataset(exp.dataset_config(), out / "data")
        ds = Dataset(out / "data")
    else:
        ds = Dataset(args.data)
    res = train(build_model(exp.model_config()), ds, exp.train_config(), out)
    last = res.epochs[-1] if res.epochs else {}
    print(f"steps={res.steps} final_loss={res.final_loss:.6f} val_acc={last.get('val_acc', float('nan')):.4f}")
    print(res.checkpoint)
    return 0


def cmd_eval(args) -> int:
    from .bench.experiments import run_axis_eval
    from .datagen.dataset import Dataset
    model = _need_model(args)
    report = run_axis_eval(model, Dataset(args.data), args.out, oracle=args.oracle)
    for row in report.table():
        print(",".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row))
    return 0


def cmd_tiers(args) -> int:
    from .bench.experiments import run_text_tiers
    from .datagen.dataset import Dataset
    model = _need_model(args)
    for tier, r in run_text_tiers(model, Dataset(args.data), args.out, oracle=args.oracle).items():
        print(f"{tier},{r['n']},{r['garment_acc']:.6f},{r['vertex_l2_cm']:.6f},{r['text_alignment']:.6f}")
    return 0


def cmd_ablate(args) -> int:
    from .bench.experiments import run_ablation
    for v, r in run_ablation(_exp(args), args.out).items():
        print(f"{v},{r['garment_acc']:.6f},{r['vertex_l2_cm']:.6f},{r['text_alignment']:.6f}")
    return 0


def cmd_scale(args) -> int:
    from .bench.experiments import run_data_scaling
    from .errors import ConfigError
    sizes = None
    if args.sizes:
        try:
            sizes = [int(s) for s in args.sizes.split(",")]
        except ValueError:
            raise ConfigError(f"bad --sizes {args.sizes!r}") from None
    for n, r in run_data_scaling(_exp(args), args.out, sizes).items():
        print(f"{n},{r['garment_acc']:.6f},{r['vertex_l2_cm']:.6f}")
    return 0


def cmd_tok(args) -> int:
    import numpy as np

    from .pattern import canonicalize, parse_pattern, serialize_pattern
    from .tokenizer import decode, dump_tokens, encode
    try:
        raw = args.file.read_bytes()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    p = parse_pattern(raw)
    s = encode(p)
    if args.action == "encode":
        sys.stdout.write(dump_tokens(s))
        return 0
    canon = canonicalize(p)
    back = decode(s, names=[q.name for q in canon.panels])
    problems = []
    if [len(q.edges) for q in back.panels] != [len(q.edges) for q in canon.panels] \
            or back.stitches != canon.stitches:
        problems.append("topology differs")
    for a, b in zip(canon.panels, back.panels):
        for ea, eb in zip(a.edges, b.edges):
            va = np.array([*ea.start, *(ea.control or ())])
            vb = np.array([*eb.start, *(eb.control or ())])
            if va.shape != vb.shape or np.abs(va - vb).max() > 1e-6:
                problems.append(f"panel {a.name} coordinates differ")
                break
        if np.abs(np.subtract(a.translation, b.translation)).max() > 1e-6:
            problems.append(f"panel {a.name} translation differs")
    once = serialize_pattern(p)
    if serialize_pattern(parse_pattern(once)) != once:
        problems.append("serialization not idempotent")
    if problems:
        print("MISMATCH " + "; ".join(dict.fromkeys(problems)))
        return 1
    print("OK")
    return 0


def cmd_oracle(args) -> int:
    import numpy as np

    from .assignment import assignment_oracle, assignment_solve
    if args.trials < 1 or not 1 <= args.max <= 7:
        return _usage("--trials must be >= 1 and --max in [1, 7]")
    rng = np.random.Generator(np.random.Philox(args.seed or 0))
    ok = 0
    for _ in range(args.trials):
        n, m = (int(v) for v in rng.integers(1, args.max + 1, size=2))
        cost = rng.uniform(0, 100, size=(n, m))
        if assignment_solve(cost).total_cost == assignment_oracle(cost).total_cost:
            ok += 1
    print(f"{'OK' if ok == args.trials else 'FAIL'} {ok}/{args.trials}")
    return 0 if ok == args.trials else 1


def cmd_report(args) -> int:
    from .bench.report import emit_report
    print(emit_report(args.out))
    return 0


COMMANDS = {"datagen": cmd_datagen, "train": cmd_train, "eval": cmd_eval, "tiers": cmd_tiers,
            "ablate": cmd_ablate, "scale": cmd_scale, "tok": cmd_tok, "oracle": cmd_oracle,
            "report": cmd_report}


def main(argv=None) -> int:
    from .errors import VLGError
    logging.basicConfig(level=os.environ.get("VLG_LOG", "WARNING"), format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except VLGError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Batch command-line surface.

Subcommands: align (DTW forced alignment), segment (text-independent
decoding), eval (tier comparison), train-toy and ablate (desk-scale training
demonstrations).  Exit codes: 0 success, 1 I/O or parse problems, 2
infeasible input or empty decode, 3 training divergence.

Multi-file modes fan out across a thread pool (capped by the
CHARSIU_LITE_THREADS environment variable, default logical cores) but write
results in sorted filename order, so outputs are deterministic.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as cio
from .core import FrameLabels, FrameMatrix, PhoneSeq, labels_to_segments, load_inventory
from .errors import (
    CharsiuLiteError,
    EmptyDecode,
    Infeasible,
    InvalidInput,
    InventoryMismatch,
    TrainingDiverged,
)
from .lattice import ctc_greedy_decode, dtw_forced_decode, path_to_tier
from .metrics import boundary_eval, frame_overlap
from .report import plot_ablation, plot_attention, plot_history, write_summary_tsv
from .toytrain import attention_for, run_fixture_training, upsample_corpus


@dataclass(frozen=True)
class RunConfig:
    """What a subcommand is about to do, validated before any work starts."""

    subcommand: str
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    inventory: str | None = None
    tolerance_ms: float = 20.0
    seed: int | None = None
    no_fs: bool = False
    no_contrastive: bool = False
    no_curriculum: bool = False

    def validate(self) -> None:
        for p in self.inputs:
            if not os.path.exists(p):
                raise InvalidInput(f"input path does not exist: {p}")
        if self.inventory is not None and not os.path.exists(self.inventory):
            raise InvalidInput(f"inventory file does not exist: {self.inventory}")
        if self.subcommand in ("train-toy", "ablate") and self.seed is None:
            raise InvalidInput(f"{self.subcommand} requires a seed")


def _max_workers() -> int:
    env = os.environ.get("CHARSIU_LITE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InvalidInput(f"CHARSIU_LITE_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise InvalidInput("CHARSIU_LITE_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def _as_log_posteriors(m: FrameMatrix) -> np.ndarray:
    if m.kind == "log_posterior":
        return np.asarray(m.values)
    if m.kind == "posterior":
        with np.errstate(divide="ignore"):
            return np.log(m.values)
    raise InvalidInput(f"need a posterior or log_posterior matrix, got kind {m.kind!r}")


def _check_columns(m: FrameMatrix, inv, with_blank: bool = False) -> None:
    V = len(inv)
    expect = V + 1 if with_blank else V
    if m.shape[1] != expect:
        raise InvalidInput(
            f"matrix has {m.shape[1]} columns, inventory of {V} needs {expect}"
        )
    if m.labels is not None and tuple(m.labels[:V]) != inv.symbols:
        raise InventoryMismatch("matrix column labels do not match the inventory")


def _collect_dir_jobs(in_dir: str, out_dir: str, suffix: str) -> list[tuple[Path, Path]]:
    files = sorted(p for p in Path(in_dir).iterdir() if p.is_file())
    if not files:
        raise InvalidInput(f"no input files in {in_dir}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [(p, out / (p.stem + suffix)) for p in files]


def _run_jobs(jobs, worker):
    """Compute in parallel, then yield (input, output, result) in sorted order."""
    with ThreadPoolExecutor(max_workers=_max_workers()) as ex:
        futures = [ex.submit(worker, src) for src, _ in jobs]
        for (src, dst), fut in zip(jobs, futures):
            yield src, dst, fut.result()


def _align_one(posteriors_path, transcript_tokens, inv):
    m = cio.read_matrix(posteriors_path)
    _check_columns(m, inv)
    transcript = PhoneSeq.from_symbols(transcript_tokens, inv)
    path = dtw_forced_decode(_as_log_posteriors(m), transcript)
    return path_to_tier(path, transcript, m.frame_shift_ms)


def cmd_align(args) -> int:
    single = args.posteriors is not None
    if single != (args.transcript is not None) or single != (args.out is not None):
        raise InvalidInput("use --posteriors with --transcript and --out together")
    if not single and not (args.posteriors_dir and args.transcript_dir and args.out_dir):
        raise InvalidInput(
            "use either --posteriors/--transcript/--out or "
            "--posteriors-dir/--transcript-dir/--out-dir"
        )
    if single:
        cfg = RunConfig("align", inputs=(args.posteriors,), outputs=(args.out,), inventory=args.inventory)
        cfg.validate()
        inv = load_inventory(args.inventory)
        tier = _align_one(args.posteriors, args.transcript.split(), inv)
        cio.write_textgrid([("phones", tier)], args.out)
        return 0
    cfg = RunConfig(
        "align",
        inputs=(args.posteriors_dir, args.transcript_dir),
        outputs=(args.out_dir,),
        inventory=args.inventory,
    )
    cfg.validate()
    inv = load_inventory(args.inventory)
    jobs = _collect_dir_jobs(args.posteriors_dir, args.out_dir, ".TextGrid")

    def worker(src: Path):
        tpath = Path(args.transcript_dir) / (src.stem + ".txt")
        if not tpath.exists():
            raise InvalidInput(f"no transcript for {src.name}: {tpath} missing")
        tokens = tpath.read_text(encoding="utf-8").split()
        return _align_one(src, tokens, inv)

    for src, dst, tier in _run_jobs(jobs, worker):
        cio.write_textgrid([("phones", tier)], dst)
        print(f"{src.name}\t{dst.name}")
    return 0


def _segment_one(posteriors_path, inv, use_ctc: bool):
    m = cio.read_matrix(posteriors_path)
    logP = _as_log_posteriors(m)
    if use_ctc:
        _check_columns(m, inv, with_blank=True)
        transcript = ctc_greedy_decode(logP, inv)
        path = dtw_forced_decode(logP[:, : len(inv)], transcript)
        return path_to_tier(path, transcript, m.frame_shift_ms)
    _check_columns(m, inv)
    labels = FrameLabels(np.argmax(logP, axis=1), m.frame_shift_ms, inv)
    return labels_to_segments(labels)


def cmd_segment(args) -> int:
    single = args.posteriors is not None
    if single != (args.out is not None):
        raise InvalidInput("use --posteriors with --out together")
    if not single and not (args.posteriors_dir and args.out_dir):
        raise InvalidInput("use either --posteriors/--out or --posteriors-dir/--out-dir")
    if single:
        cfg = RunConfig("segment", inputs=(args.posteriors,), outputs=(args.out,), inventory=args.inventory)
        cfg.validate()
        inv = load_inventory(args.inventory)
        tier = _segment_one(args.posteriors, inv, args.ctc)
        cio.write_textgrid([("phones", tier)], args.out)
        return 0
    cfg = RunConfig(
        "segment", inputs=(args.posteriors_dir,), outputs=(args.out_dir,), inventory=args.inventory
    )
    cfg.validate()
    inv = load_inventory(args.inventory)
    jobs = _collect_dir_jobs(args.posteriors_dir, args.out_dir, ".TextGrid")
    for src, dst, tier in _run_jobs(jobs, lambda p: _segment_one(p, inv, args.ctc)):
        cio.write_textgrid([("phones", tier)], dst)
        print(f"{src.name}\t{dst.name}")
    return 0


def cmd_eval(args) -> int:
    cfg = RunConfig("eval", inputs=(args.ref, args.hyp), tolerance_ms=args.tolerance_ms)
    cfg.validate()
    ref = cio.read_textgrid(args.ref)[0][1]
    hyp = cio.read_textgrid(args.hyp)[0][1]
    report = boundary_eval(
        ref,
        hyp,
        tolerance_ms=args.tolerance_ms,
        skip_initial=args.skip_initial,
        matching=args.matching,
    )
    overlap = frame_overlap(ref, hyp, grid_ms=args.grid_ms)
    report = dataclasses.replace(report, overlap_pct=overlap)
    print(report.to_json())
    return 0


def _write_history(history, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")


_SUMMARY_COLUMNS = [
    "config",
    "seed",
    "diagonality",
    "boundary_f1",
    "precision",
    "recall",
    "r_value",
    "overlap_pct",
]


def _summary_row(run) -> dict:
    return {
        "config": run.name,
        "seed": run.seed,
        "diagonality": run.diagonality,
        "boundary_f1": run.boundary.f1,
        "precision": run.boundary.precision,
        "recall": run.boundary.recall,
        "r_value": run.boundary.r_value,
        "overlap_pct": run.boundary.overlap_pct,
    }


def cmd_train_toy(args) -> int:
    cfg = RunConfig(
        "train-toy",
        seed=args.seed,
        no_fs=args.no_fs,
        no_contrastive=args.no_contrastive,
        no_curriculum=args.no_curriculum,
    )
    cfg.validate()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = run_fixture_training(
        seed=args.seed,
        steps_per_chunk=args.steps,
        count=args.count,
        no_fs=args.no_fs,
        no_contrastive=args.no_contrastive,
        no_curriculum=args.no_curriculum,
        eval_every=args.eval_every,
    )
    _write_history(run.history, out / "history.jsonl")
    row = _summary_row(run)
    write_summary_tsv([row], out / "summary.tsv", _SUMMARY_COLUMNS)
    plot_history(run.history, out / "curves.png", title=f"{run.name} seed {run.seed}")
    sample = upsample_corpus(run.corpus).utterances[0]
    plot_attention(
        attention_for(run.model, sample),
        out / "attention.png",
        title=f"attention, {run.name} seed {run.seed}",
    )
    print("\t".join(_SUMMARY_COLUMNS))
    print("\t".join(f"{row[c]:.6f}" if isinstance(row[c], float) else str(row[c]) for c in _SUMMARY_COLUMNS))
    return 0


_ABLATIONS = [
    ("full", {}),
    ("no_curriculum", {"no_curriculum": True}),
    ("no_fs", {"no_fs": True}),
    ("no_contrastive", {"no_contrastive": True}),
]


def cmd_ablate(args) -> int:
    seeds = [int(s) for s in args.seeds.split(",") if s != ""]
    if not seeds:
        raise InvalidInput("need at least one seed")
    cfg = RunConfig("ablate", seed=seeds[0])
    cfg.validate()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_run_rows = []
    mean_rows = []
    for name, flags in _ABLATIONS:
        runs = []
        for seed in seeds:
            run = run_fixture_training(
                seed=seed,
                steps_per_chunk=args.steps,
                count=args.count,
                eval_every=args.eval_every,
                **flags,
            )
            _write_history(run.history, out / f"history_{name}_seed{seed}.jsonl")
            per_run_rows.append(_summary_row(run))
            runs.append(run)
        mean_rows.append(
            {
                "config": name,
                "diagonality": float(np.mean([r.diagonality for r in runs])),
                "boundary_f1": float(np.mean([r.boundary.f1 for r in runs])),
            }
        )
    write_summary_tsv(per_run_rows, out / "summary.tsv", _SUMMARY_COLUMNS)
    plot_ablation(mean_rows, out / "ablation.png")
    print("config\tmean_diagonality\tmean_boundary_f1")
    for row in mean_rows:
        print(f"{row['config']}\t{row['diagonality']:.6f}\t{row['boundary_f1']:.6f}")
    return 0


class _ArgParser(argparse.ArgumentParser):
    # Usage mistakes belong in the I/O-or-parse exit bucket.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _ArgParser(prog="charsiu-lite", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("align", help="DTW forced alignment from posteriors and a transcript")
    p.add_argument("--posteriors", help="posterior matrix file")
    p.add_argument("--transcript", help="space-separated phone symbols")
    p.add_argument("--out", help="output TextGrid path")
    p.add_argument("--posteriors-dir", help="directory of posterior matrix files")
    p.add_argument("--transcript-dir", help="directory of <stem>.txt transcripts")
    p.add_argument("--out-dir", help="output directory for TextGrids")
    p.add_argument("--inventory", required=True, help="inventory JSON")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("segment", help="text-independent segmentation from posteriors")
    p.add_argument("--posteriors", help="posterior matrix file")
    p.add_argument("--out", help="output TextGrid path")
    p.add_argument("--posteriors-dir", help="directory of posterior matrix files")
    p.add_argument("--out-dir", help="output directory for TextGrids")
    p.add_argument("--inventory", required=True, help="inventory JSON")
    p.add_argument("--ctc", action="store_true", help="greedy CTC transcript, then DTW (blank = last column)")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="compare two TextGrids, JSON report on stdout")
    p.add_argument("--ref", required=True, help="reference TextGrid")
    p.add_argument("--hyp", required=True, help="hypothesis TextGrid")
    p.add_argument("--tolerance-ms", type=float, default=20.0)
    p.add_argument("--grid-ms", type=float, default=10.0, help="overlap grid step")
    p.add_argument("--skip-initial", action="store_true", help="ignore the t=0 onset")
    p.add_argument("--matching", choices=("greedy", "optimal"), default="greedy")
    p.set_defaults(func=cmd_eval)

    for name, helptext in (
        ("train-toy", "train the committed toy fixture"),
        ("ablate", "run the 4 ablation configurations"),
    ):
        p = sub.add_parser(name, help=helptext)
        if name == "train-toy":
            p.add_argument("--seed", type=int, required=True)
            p.add_argument("--no-fs", action="store_true", help="drop the forward-sum term")
            p.add_argument("--no-contrastive", action="store_true", help="drop the contrastive term")
            p.add_argument("--no-curriculum", action="store_true", help="single chunk, same total steps")
            p.set_defaults(func=cmd_train_toy)
        else:
            p.add_argument("--seeds", default="0,1,2", help="comma-separated training seeds")
            p.set_defaults(func=cmd_ablate)
        p.add_argument("--steps", type=int, default=None, help="steps per chunk (fixture default)")
        p.add_argument("--count", type=int, default=None, help="corpus size (fixture default)")
        p.add_argument("--eval-every", type=int, default=None, help="history interval (fixture default)")
        p.add_argument("--out-dir", required=True, help="directory for history, summary, figures")
    return parser


def entry(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (Infeasible, EmptyDecode) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CharsiuLiteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(entry())

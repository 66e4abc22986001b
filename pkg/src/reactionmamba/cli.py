"""Command-line interface.

Subcommands: synth-data, train, generate, evaluate, bench, ablate, plot.
Flags override values from an optional JSON config file (--config), which
override built-in defaults; every run echoes its resolved configuration next
to its outputs. Exit codes: 0 success, 2 usage error, 3 data/parse error,
4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bench as bench_mod
from .data import (
    InteractionPair,
    family_residual,
    load_manifest,
    load_motion,
    load_split,
    normalize,
    save_manifest,
    save_motion,
    split_windows,
    synth_dataset,
)
from .errors import DataFormatError, NumericError, UsageError
from .metrics import MARKDOWN_HEADER, evaluate_sets
from .model import ModelConfig, MotionSequence, ReactionModel, VARIANTS
from .objectives import LossWeights
from .plots import plot_motions
from .trainer import TrainConfig, load_checkpoint, train


def _echo_config(out: str, resolved: dict, is_dir: bool) -> None:
    """Write the exact resolved configuration next to the outputs."""
    path = os.path.join(out, "config.json") if is_dir else out + ".config.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=1, sort_keys=True)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataFormatError(f"{path}: config must be a JSON object")
    return doc


def _resolve(args: argparse.Namespace, keys: list[str], defaults: dict) -> dict:
    """flags > config file > defaults; returns the effective settings."""
    file_values = _load_config_file(getattr(args, "config", None))
    resolved = {}
    for key in keys:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            resolved[key] = flag
        elif key in file_values:
            resolved[key] = file_values[key]
        else:
            resolved[key] = defaults.get(key)
    return resolved


def _prepare_out_dir(out: str, force: bool) -> None:
    if os.path.isdir(out) and os.listdir(out) and not force:
        raise UsageError(f"output directory {out!r} is not empty (use --force)")
    os.makedirs(out, exist_ok=True)


def _model_config_from(resolved: dict, joint_count: int) -> ModelConfig:
    return ModelConfig(
        joint_count=joint_count,
        d_model=resolved["d-model"],
        d_z=resolved["d-z"],
        d_intermediate=resolved["d-intermediate"],
        d_c=resolved["d-c"],
        n_layers=resolved["n-layers"],
        n_state=resolved["n-state"],
        variant=resolved["variant"],
        seed=resolved["seed"],
    )


_MODEL_KEYS = ["d-model", "d-z", "d-intermediate", "d-c", "n-layers", "n-state"]
_MODEL_DEFAULTS = {
    "d-model": 256, "d-z": 128, "d-intermediate": 512, "d-c": 64,
    "n-layers": 6, "n-state": 16,
}


# -- subcommands ---------------------------------------------------------------------


def cmd_synth_data(args) -> int:
    keys = ["pairs", "frames", "joints", "family", "noise", "seed",
            "test-fraction", "fps"]
    defaults = {"pairs": 200, "frames": 20, "joints": 5, "family": "lagged-follow",
                "noise": 0.01, "seed": 0, "test-fraction": 0.1, "fps": 30}
    resolved = _resolve(args, keys, defaults)
    _prepare_out_dir(args.out, args.force)
    pairs = synth_dataset(
        n_pairs=resolved["pairs"], t=resolved["frames"], k=resolved["joints"],
        family=resolved["family"], noise=resolved["noise"], seed=resolved["seed"],
        fps=resolved["fps"],
    )
    pair_dir = os.path.join(args.out, "pairs")
    os.makedirs(pair_dir, exist_ok=True)
    n_test = int(round(len(pairs) * resolved["test-fraction"]))
    entries = []
    for i, pair in enumerate(pairs):
        rel = os.path.join("pairs", f"pair_{i:05d}.json")
        save_motion(pair, os.path.join(args.out, rel))
        split = "test" if i >= len(pairs) - n_test else "train"
        entries.append({"path": rel, "split": split})
    save_manifest(entries, os.path.join(args.out, "manifest.json"))
    _echo_config(args.out, resolved, is_dir=True)
    print(f"wrote {len(pairs)} pairs ({n_test} test) under {args.out}")
    return 0


def cmd_train(args) -> int:
    keys = _MODEL_KEYS + ["variant", "steps", "batch", "seed", "lr", "lr-min",
                          "w-recon", "w-kl", "w-react", "window",
                          "checkpoint-every", "grad-clip"]
    defaults = {
        **_MODEL_DEFAULTS, "variant": "S1", "steps": 1000, "batch": 16, "seed": 0,
        "lr": 1e-4, "lr-min": None, "w-recon": 1.0, "w-kl": 0.5, "w-react": 1.0,
        "window": None, "checkpoint-every": 1000, "grad-clip": None,
    }
    resolved = _resolve(args, keys, defaults)
    _prepare_out_dir(args.out, args.force)
    train_pairs = load_split(args.data, "train")
    if not train_pairs:
        raise UsageError(f"no training pairs in manifest {args.data}")
    if resolved["window"]:
        train_pairs = split_windows(train_pairs, resolved["window"])
    train_pairs, stats = normalize(train_pairs)
    stats.computed_on = args.data

    config = TrainConfig(
        model=_model_config_from(resolved, train_pairs[0].actor.joint_count),
        base_lr=resolved["lr"],
        lr_min=resolved["lr-min"],
        total_steps=resolved["steps"],
        batch_size=resolved["batch"],
        weights=LossWeights(resolved["w-recon"], resolved["w-kl"], resolved["w-react"]),
        seed=resolved["seed"],
        checkpoint_every=resolved["checkpoint-every"],
        grad_clip=resolved["grad-clip"],
    )
    _echo_config(args.out, {**resolved, "data": args.data}, is_dir=True)
    _, records = train(config, train_pairs, stats, out_dir=args.out)
    print(f"trained {config.total_steps} steps; final total loss "
          f"{records[-1]['total']:.6f}; outputs in {args.out}")
    return 0


def _load_model(checkpoint_path: str):
    ckpt = load_checkpoint(checkpoint_path)
    return ckpt.build_model(), ckpt


def _resolve_init_pose(spec_value: str, actor_source) -> np.ndarray:
    """--init-pose is either a frame index or a motion-file path.

    An integer indexes the reactor when the actor input was a pair file, the
    actor frames otherwise. A path takes the first frame of that file.
    """
    try:
        idx = int(spec_value)
    except ValueError:
        loaded = load_motion(spec_value)
        seq = loaded.reactor if isinstance(loaded, InteractionPair) else loaded
        return seq.frames[0]
    if isinstance(actor_source, InteractionPair):
        frames = actor_source.reactor.frames
    else:
        frames = actor_source.frames
    if not 0 <= idx < frames.shape[0]:
        raise UsageError(f"init-pose frame {idx} outside [0, {frames.shape[0]})")
    return frames[idx]


def cmd_generate(args) -> int:
    keys = ["seed", "long-frames", "window"]
    defaults = {"seed": 0, "long-frames": None, "window": None}
    resolved = _resolve(args, keys, defaults)
    model, ckpt = _load_model(args.checkpoint)
    loaded = load_motion(args.actor)
    actor = loaded.actor if isinstance(loaded, InteractionPair) else loaded
    pose_raw = _resolve_init_pose(args.init_pose, loaded)

    stats = ckpt.norm_stats
    if stats is not None:
        actor_n = MotionSequence(
            frames=(actor.frames - stats.mean) / stats.std, fps=actor.fps,
            joint_count=actor.joint_count, skeleton_id=actor.skeleton_id)
        pose = (pose_raw - stats.mean) / stats.std
    else:
        actor_n, pose = actor, pose_raw

    if resolved["long-frames"]:
        window = resolved["window"] or 20
        if actor_n.t < window:
            raise UsageError(f"actor has {actor_n.t} frames, shorter than window {window}")
        if actor_n.t < resolved["long-frames"]:
            raise UsageError(
                f"actor has {actor_n.t} frames but --long-frames asks for {resolved['long-frames']}"
            )
        clipped = MotionSequence(
            frames=actor_n.frames[: resolved["long-frames"]], fps=actor_n.fps,
            joint_count=actor_n.joint_count, skeleton_id=actor_n.skeleton_id)
        reaction = model.generate_long(clipped, pose, window=window, seed=resolved["seed"])
    else:
        reaction = model.generate(actor_n, pose, seed=resolved["seed"])

    frames = reaction.frames
    if stats is not None:
        frames = frames * stats.std + stats.mean
    out_seq = MotionSequence(frames=frames.astype(np.float32), fps=actor.fps,
                             joint_count=actor.joint_count, skeleton_id=actor.skeleton_id)
    save_motion(out_seq, args.out)
    _echo_config(args.out, {**resolved, "checkpoint": args.checkpoint,
                            "actor": args.actor, "init_pose": args.init_pose},
                 is_dir=False)
    print(f"wrote {out_seq.t}-frame reaction to {args.out}")
    return 0


def evaluate_model(model: ReactionModel, pairs: list[InteractionPair], seed: int,
                   num_pairs_sample: int | None = None, threads: int | None = None):
    """Generate one reaction per pair and score the set; also scores the
    copy-actor baseline (prediction = actor motion)."""
    if num_pairs_sample is not None and num_pairs_sample < len(pairs):
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(pairs), size=num_pairs_sample, replace=False)
        pairs = [pairs[i] for i in sorted(idx)]
    workers = threads or bench_mod.thread_cap(min(4, os.cpu_count() or 1))

    def gen(i_pair):
        i, pair = i_pair
        return model.generate(pair.actor, pair.reactor.frames[0], seed=seed + i)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            generated = list(pool.map(gen, enumerate(pairs)))
    else:
        generated = [gen(item) for item in enumerate(pairs)]
    gt = [p.reactor for p in pairs]
    actors = [p.actor for p in pairs]
    report = evaluate_sets(generated, gt, seed=seed)
    baseline = evaluate_sets(actors, gt, seed=seed)
    return report, baseline


def cmd_evaluate(args) -> int:
    keys = ["split", "pairs-sample", "seed"]
    defaults = {"split": "test", "pairs-sample": None, "seed": 0}
    resolved = _resolve(args, keys, defaults)
    _prepare_out_dir(args.out, args.force)
    model, ckpt = _load_model(args.checkpoint)
    pairs = load_split(args.data, resolved["split"])
    if not pairs:
        raise UsageError(f"no pairs with split {resolved['split']!r} in {args.data}")
    if ckpt.norm_stats is not None:
        pairs, _ = normalize(pairs, ckpt.norm_stats)
    report, baseline = evaluate_model(
        model, pairs, seed=resolved["seed"], num_pairs_sample=resolved["pairs-sample"])

    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    with open(os.path.join(args.out, "baseline.json"), "w", encoding="utf-8") as fh:
        json.dump(baseline.to_dict(), fh, indent=1)
    md = "\n".join([
        MARKDOWN_HEADER,
        report.markdown_row(model.config.variant),
        baseline.markdown_row("copy-actor"),
    ])
    with open(os.path.join(args.out, "report.md"), "w", encoding="utf-8") as fh:
        fh.write(md + "\n")
    _echo_config(args.out, {**resolved, "checkpoint": args.checkpoint, "data": args.data},
                 is_dir=True)
    print(md)
    return 0


def cmd_bench(args) -> int:
    keys = ["variant", "lengths", "trials", "warmup", "sequences", "parallel"]
    defaults = {"variant": "S1", "lengths": "256,512,1024,2048,4096",
                "trials": 3, "warmup": 1, "sequences": 16, "parallel": False}
    resolved = _resolve(args, keys, defaults)
    _prepare_out_dir(args.out, args.force)
    if args.checkpoint:
        model, _ = _load_model(args.checkpoint)
    else:
        model = ReactionModel.init(
            bench_mod.bench_model_config(variant=resolved["variant"]))
    lengths = [int(v) for v in str(resolved["lengths"]).split(",") if v]
    if len(lengths) == 1:
        report = bench_mod.bench_inference(
            model, n_sequences=resolved["sequences"], t=lengths[0],
            trials=resolved["trials"], warmup=resolved["warmup"],
            parallel=resolved["parallel"])
    else:
        report = bench_mod.scaling_curve(
            model, lengths, trials=resolved["trials"], warmup=resolved["warmup"],
            parallel=resolved["parallel"])
    with open(os.path.join(args.out, "timing.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    with open(os.path.join(args.out, "timing.md"), "w", encoding="utf-8") as fh:
        fh.write(report.markdown() + "\n")
    with open(os.path.join(args.out, "timing.csv"), "w", encoding="utf-8") as fh:
        fh.write(report.csv() + "\n")
    _echo_config(args.out, resolved, is_dir=True)
    print(report.markdown())
    return 0


def cmd_ablate(args) -> int:
    keys = _MODEL_KEYS + ["variants", "steps", "batch", "seed", "lr", "window",
                          "pairs-sample"]
    defaults = {**_MODEL_DEFAULTS, "variants": "S1,S2,S3,S4,S5", "steps": 500,
                "batch": 16, "seed": 0, "lr": 1e-4, "window": None,
                "pairs-sample": None}
    resolved = _resolve(args, keys, defaults)
    _prepare_out_dir(args.out, args.force)
    variants = [v.strip() for v in str(resolved["variants"]).split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}")

    train_pairs = load_split(args.data, "train")
    test_pairs = load_split(args.data, "test")
    if not train_pairs or not test_pairs:
        raise UsageError(f"manifest {args.data} needs both train and test pairs")
    if resolved["window"]:
        train_pairs = split_windows(train_pairs, resolved["window"])
        test_pairs = split_windows(test_pairs, resolved["window"])
    train_pairs, stats = normalize(train_pairs)
    test_pairs, _ = normalize(test_pairs, stats)

    rows = []
    for variant in variants:
        row = {"variant": variant, "status": "ok"}
        try:
            config = TrainConfig(
                model=_model_config_from(
                    {**resolved, "variant": variant, "seed": resolved["seed"]},
                    train_pairs[0].actor.joint_count),
                base_lr=resolved["lr"],
                total_steps=resolved["steps"],
                batch_size=resolved["batch"],
                seed=resolved["seed"],
                checkpoint_every=10**9,
            )
            run_dir = os.path.join(args.out, variant)
            os.makedirs(run_dir, exist_ok=True)
            model, _ = train(config, train_pairs, stats, out_dir=run_dir)
            report, baseline = evaluate_model(
                model, test_pairs, seed=resolved["seed"],
                num_pairs_sample=resolved["pairs-sample"])
            row["report"] = report.to_dict()
            row["baseline"] = baseline.to_dict()
        except Exception as exc:  # keep remaining variants running
            row["status"] = "failed"
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)

    lines = [MARKDOWN_HEADER.replace("Model", "Scenario")]
    for row in rows:
        if row["status"] == "ok":
            r = row["report"]
            lines.append(
                f"| {row['variant']} | {r['mpjpe']:.4f} | {r['mpjve']:.5f} | "
                f"{r['fid']:.4f} | {r['div_ratio']:.4f} |")
        else:
            lines.append(f"| {row['variant']} | failed | failed | failed | failed |")
    md = "\n".join(lines)
    with open(os.path.join(args.out, "ablation.json"), "w", encoding="utf-8") as fh:
        json.dump({"rows": rows}, fh, indent=1)
    with open(os.path.join(args.out, "ablation.md"), "w", encoding="utf-8") as fh:
        fh.write(md + "\n")
    _echo_config(args.out, {**resolved, "data": args.data}, is_dir=True)
    print(md)
    return 0


def cmd_plot(args) -> int:
    keys = ["mode"]
    resolved = _resolve(args, keys, {"mode": "trajectory"})
    labeled = []
    for path in args.motion:
        loaded = load_motion(path)
        name = os.path.basename(path)
        if isinstance(loaded, InteractionPair):
            labeled.append((f"{name}:actor", loaded.actor))
            labeled.append((f"{name}:reactor", loaded.reactor))
        else:
            labeled.append((name, loaded))
    plot_motions(labeled, args.out, mode=resolved["mode"])
    _echo_config(args.out, {**resolved, "motion": list(args.motion)}, is_dir=False)
    print(f"wrote {args.out}")
    return 0


def cmd_verify_data(args) -> int:
    """Check every pair in a manifest against its family rule."""
    entries = load_manifest(args.data)
    base = os.path.dirname(os.path.abspath(args.data))
    worst = 0.0
    for entry in entries:
        pair = load_motion(os.path.join(base, entry["path"]))
        worst = max(worst, family_residual(pair))
    print(f"max family-rule residual over {len(entries)} pairs: {worst:.6g}")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reactionmamba",
        description="Generate and evaluate 3D skeletal reaction motion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kw):
        p = sub.add_parser(name, **kw)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON config file; flags override it")
        return p

    p = add("synth-data", cmd_synth_data, help="generate a synthetic dataset")
    p.add_argument("--pairs", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--joints", type=int)
    p.add_argument("--family", choices=["mirror", "lagged-follow", "push-impulse"])
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--fps", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = add("train", cmd_train, help="train a model on a dataset manifest")
    p.add_argument("--data", required=True, help="dataset manifest path")
    p.add_argument("--variant", choices=list(VARIANTS))
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-min", type=float)
    p.add_argument("--w-recon", type=float)
    p.add_argument("--w-kl", type=float)
    p.add_argument("--w-react", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--grad-clip", type=float)
    for key in _MODEL_KEYS:
        p.add_argument(f"--{key}", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = add("generate", cmd_generate, help="generate a reaction for an actor motion")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--actor", required=True, help="motion or pair file")
    p.add_argument("--init-pose", required=True,
                   help="frame index (into the pair's reactor, or the actor"
                        " motion) or a motion-file path")
    p.add_argument("--seed", type=int)
    p.add_argument("--long-frames", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, help="score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "test"])
    p.add_argument("--pairs-sample", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = add("bench", cmd_bench, help="measure inference speed and scaling")
    p.add_argument("--checkpoint")
    p.add_argument("--variant", choices=list(VARIANTS))
    p.add_argument("--lengths", help="comma-separated sequence lengths")
    p.add_argument("--trials", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--sequences", type=int)
    p.add_argument("--parallel", action="store_true", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = add("ablate", cmd_ablate, help="train and score conditioning variants")
    p.add_argument("--data", required=True)
    p.add_argument("--variants")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--pairs-sample", type=int)
    for key in _MODEL_KEYS:
        p.add_argument(f"--{key}", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = add("plot", cmd_plot, help="render motion files to SVG")
    p.add_argument("--motion", nargs="+", required=True)
    p.add_argument("--mode", choices=["trajectory", "skeleton-frames"])
    p.add_argument("--out", required=True)

    p = add("verify-data", cmd_verify_data, help="check pairs against family rules")
    p.add_argument("--data", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args) or 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()

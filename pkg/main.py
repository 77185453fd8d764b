#!/usr/bin/env python3
"""
PhaseGen - frequency-domain text-to-motion generation

Subcommands:
    gen-corpus   build the procedural motion corpus
    preprocess   detect primary segments and augmentation pools
    train-ae     train the periodic autoencoder
    train-diff   train the text/pose-conditioned denoiser
    generate     one prompt -> one motion clip
    extend       long motion by phase repetition or chained transitions
    blend        crossfade two clips in signal space
    interp       decode a clip at an integer multiple of its frame rate
    eval         run one of the evaluation studies
    export-anim  write a clip as CSV, PNG frames or a render manifest
"""

import argparse
import json
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence, Tuple

from checkpoint import read_meta
from errors import PhaseGenError, ValidationError
from logger import DebugLevel, PhaseGenLogger, debug_level_from_verbosity, get_logger, reset_logger
from motion_core import MotionDataset, Pose
from motion_enums import ExportFormat, GenerationMode, MotionFamily, RenoiseMode, StudyKind, enum_values
from motion_io import load_clip, load_dataset, save_clip, save_dataset
from run_config import RunConfig, apply_thread_cap, resolve_config, resolve_output, write_run_config


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _setting(parser: argparse.ArgumentParser, section: str, key: str, kind=str, flags: Sequence[str] = (),
             **kwargs):
    """Flag --key-name (or `flags`) overriding `section.key`; absent flags leave the namespace untouched."""
    flags = tuple(flags) or (f"--{key.replace('_', '-')}",)
    parser.add_argument(*flags, dest=f"{section}.{key}", type=kind, default=argparse.SUPPRESS, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='JSON config file (flags override it)')
    common.add_argument('--seed', type=int, default=argparse.SUPPRESS, help='Root seed (default: 0)')
    common.add_argument('--log-dir', type=str, default='logs', help='Session log directory')
    common.add_argument('-v', '--verbose', action='count', default=0,
                        help='Increase verbosity level (can be used multiple times)')

    parser = argparse.ArgumentParser(prog='phasegen', description='PhaseGen text-to-motion generation')
    sub = parser.add_subparsers(dest='command', required=True, metavar='COMMAND')

    p = sub.add_parser('gen-corpus', parents=[common], help='Build the procedural motion corpus')
    p.add_argument('--out', required=True, help='Dataset directory to write')
    _setting(p, 'corpus', 'families', str, nargs='+', help=f"Families ({', '.join(enum_values(MotionFamily))})")
    _setting(p, 'corpus', 'count_per_family', int, help='Clips per family (default: 50)')
    _setting(p, 'corpus', 'num_frames', int, help='Frames per clip (default: 196)')
    _setting(p, 'corpus', 'fps', float, help='Frame rate (default: 12.5)')
    _setting(p, 'corpus', 'workers', int, help='Worker threads')

    p = sub.add_parser('preprocess', parents=[common], help='Detect primary segments')
    p.add_argument('--data', '--in', dest='data', required=True, help='Input dataset directory')
    p.add_argument('--out', required=True, help='Annotated dataset directory to write')
    p.add_argument('--debug-dir', type=str, default=None, help='Write loss matrices (CSV + PNG) to this directory')
    p.add_argument('--matrices', type=int, default=None,
                   help='Export loss matrices of the first N clips (default: all clips with --debug-dir)')
    for key in ('lambda1', 'lambda2', 'lambda3'):
        _setting(p, 'segmentation', key, float, help=f'Segmentation weight {key}')
    _setting(p, 'segmentation', 'min_len', int, help='Minimum segment length (default: 20)')
    _setting(p, 'segmentation', 'window', int, help='Velocity window (default: 5)')
    _setting(p, 'segmentation', 'top_w', int, help='Augmentation pool size W (default: 5)')
    _setting(p, 'segmentation', 'workers', int, help='Worker threads')

    p = sub.add_parser('train-ae', parents=[common], help='Train the periodic autoencoder')
    p.add_argument('--data', required=True, help='Preprocessed dataset directory')
    p.add_argument('--out', required=True, help='Checkpoint directory to write')
    _setting(p, 'codec', 'num_phases', int, flags=('--phases', '--num-phases'),
             help='Number of phases M (default: 128)')
    _setting(p, 'codec', 'f_max', int, flags=('--fmax', '--f-max'), help='Highest frequency (default: 30)')
    _setting(p, 'codec', 'representation', str, flags=('--repr', '--representation'), choices=['sin', 'sincos'],
             help='Signal representation')
    _setting(p, 'codec', 'lambda_fk', float, help='FK loss weight (default: 1.0)')
    _setting(p, 'codec', 'epochs', int, help='Training epochs (default: 30)')
    _setting(p, 'codec', 'batch_size', int, help='Batch size (default: 128)')
    _setting(p, 'codec', 'lr_start', float, help='Initial learning rate (default: 1e-4)')
    _setting(p, 'codec', 'lr_end', float, help='Final learning rate (default: 1e-6)')
    _setting(p, 'codec', 'window', int, help='Encoder input frames (default: 64)')

    p = sub.add_parser('train-diff', parents=[common], help='Train the conditional denoiser')
    p.add_argument('--data', required=True, help='Preprocessed dataset directory')
    p.add_argument('--ae', '--codec', dest='codec', required=True, help='Trained autoencoder checkpoint')
    p.add_argument('--out', required=True, help='Checkpoint directory to write')
    _setting(p, 'diffusion', 'num_steps', int, flags=('--steps', '--num-steps'),
             help='Diffusion steps N (default: 1000)')
    _setting(p, 'diffusion', 'width', int, help='Transformer width (default: 512)')
    _setting(p, 'diffusion', 'layers', int, help='Transformer layers (default: 8)')
    _setting(p, 'diffusion', 'heads', int, help='Attention heads (default: 8)')
    _setting(p, 'diffusion', 'lambda_dec', float, help='Decode-consistency weight (default: 0.5)')
    _setting(p, 'diffusion', 'epochs', int, help='Training epochs (default: 50)')
    _setting(p, 'diffusion', 'batch_size', int, help='Batch size (default: 64)')
    _setting(p, 'diffusion', 'lr_start', float, flags=('--lr-start', '--lr'),
             help='Initial learning rate (default: 1e-4)')
    _setting(p, 'diffusion', 'lr_end', float, help='Final learning rate (default: 1e-6)')
    _setting(p, 'diffusion', 'mask_text', float, help='Text drop probability (default: 0.1)')
    _setting(p, 'diffusion', 'mask_pose', float, help='Pose drop probability (default: 0.1)')

    def sampler_flags(p):
        p.add_argument('--ckpt', required=True, help='Trained denoiser checkpoint')
        _setting(p, 'composer', 'guidance', float, help='Guidance scale s (default: 3.0)')
        _setting(p, 'composer', 'sampling_steps', int, help='Strided sampling steps (default: all)')
        _setting(p, 'composer', 'renoise', str, choices=enum_values(RenoiseMode), help='Re-noise mode')
        _setting(p, 'composer', 'period_frames', int, help='Frames per phase period')
        p.add_argument('--pose-from', type=str, help='Condition on the last frame of this clip')

    p = sub.add_parser('generate', parents=[common], help='Generate one clip from a prompt')
    sampler_flags(p)
    p.add_argument('--prompt', type=str, default=None, help='Text prompt')
    p.add_argument('--length', type=int, default=196, help='Frames (default: 196)')
    p.add_argument('--out', required=True, help='Output clip file')

    p = sub.add_parser('extend', parents=[common], help='Generate a long motion')
    sampler_flags(p)
    p.add_argument('--mode', choices=enum_values(GenerationMode), default='repetition')
    p.add_argument('--prompt', action='append', required=True, help='Prompt (repeat for a sequence)')
    p.add_argument('--length', type=int, default=588, help='Frames (default: 588)')
    _setting(p, 'composer', 'seam_window', int, help='Seam blend frames (default: 8)')
    p.add_argument('--out', required=True, help='Output clip file')

    p = sub.add_parser('blend', parents=[common], help='Crossfade two clips')
    p.add_argument('--ckpt', required=True, help='Autoencoder or denoiser checkpoint')
    p.add_argument('--a', required=True, help='First clip')
    p.add_argument('--b', required=True, help='Second clip')
    _setting(p, 'composer', 'blend_window', int, help='Blend window (default: 20)')
    p.add_argument('--window', type=int, dest='composer.blend_window', default=argparse.SUPPRESS,
                   help='Alias of --blend-window')
    p.add_argument('--out', required=True, help='Output clip file')

    p = sub.add_parser('interp', parents=[common], help='Decode a clip at N times its frame rate')
    p.add_argument('--ckpt', required=True, help='Autoencoder or denoiser checkpoint')
    p.add_argument('--in', dest='input', required=True, help='Input clip')
    p.add_argument('--factor', type=int, required=True, help='Integer factor N >= 1')
    p.add_argument('--out', required=True, help='Output clip file')

    p = sub.add_parser('eval', parents=[common], help='Run an evaluation study')
    p.add_argument('study', choices=enum_values(StudyKind))
    p.add_argument('--data', type=str, help='Preprocessed dataset directory')
    p.add_argument('--ckpt', type=str, help='Trained denoiser checkpoint')
    p.add_argument('--out', required=True, help='Report JSON path')
    p.add_argument('--dashboard', type=str, help='Also write an interactive HTML dashboard')
    p.add_argument('--prompt', type=str, default=None, help='Prompt for the timing study')
    _setting(p, 'eval', 'prompt_pairs', int, help='Transition study prompt pairs (default: 32)')
    _setting(p, 'eval', 'guidance_scales', float, nargs='+', help='Guidance values to sweep')
    _setting(p, 'eval', 'lengths', int, nargs='+', help='Timing study lengths')
    _setting(p, 'eval', 'timing_runs', int, help='Timed runs per length (default: 5)')
    _setting(p, 'eval', 'sampling_steps', int, help='Strided sampling steps for the studies')

    p = sub.add_parser('export-anim', parents=[common], help='Export a clip for viewing')
    p.add_argument('--in', dest='input', required=True, help='Input clip')
    p.add_argument('--out', required=True, help='Output directory')
    p.add_argument('--format', choices=enum_values(ExportFormat), default='csv')
    p.add_argument('--every', type=int, default=1, help='Render every N-th frame (frames-png)')
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested overrides from the dotted flag destinations actually present."""
    overrides: Dict[str, Any] = {}
    for dest, value in vars(args).items():
        if "." in dest:
            section, key = dest.split(".", 1)
            overrides.setdefault(section, {})[key] = value
    if hasattr(args, "seed"):
        overrides["seed"] = args.seed
    return overrides


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _check_distinct(inputs: List[str], output: str):
    out = os.path.abspath(output)
    for path in inputs:
        if path and os.path.abspath(path) == out:
            raise ValidationError(f"output {output} would overwrite input {path}")


def _out_dir(path: str) -> str:
    return os.path.dirname(os.path.abspath(path))


def load_codec(path: str):
    """Autoencoder from an autoencoder checkpoint or from a denoiser checkpoint's embedded codec."""
    from diffusion import CHECKPOINT_KIND as DENOISER_KIND, CODEC_SUBDIR
    from phase_autoencoder import PhaseCodec

    if read_meta(path).get("kind") == DENOISER_KIND:
        return PhaseCodec.load(os.path.join(path, CODEC_SUBDIR))
    return PhaseCodec.load(path)


def _start_pose(path: Optional[str]) -> Optional[Pose]:
    if not path:
        return None
    clip = load_clip(path)
    return clip.pose(clip.num_frames - 1)


def _corpus_seed(data_dir: Optional[str]) -> Optional[int]:
    if not data_dir:
        return None
    path = os.path.join(data_dir, "run_config.json")
    try:
        with open(path, "r") as f:
            return json.load(f)["derived_seeds"]["corpus"]
    except (OSError, ValueError, KeyError):
        return None


class Stage:
    """Times a block and reports it to the session logger."""
    def __init__(self, session: PhaseGenLogger, name: str):
        self.session = session
        self.name = name

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.session.log_stage_time(self.name, time.perf_counter() - self.start)
        return False


def _log_calls(session: PhaseGenLogger, stack):
    for call in stack.run_log:
        session.log_diffusion_call(call["prompt"], call["pose"], call["seed"], call["guidance"])


def _training_callback(session: PhaseGenLogger, stage: str):
    return lambda epoch, loss, lr: session.log_epoch(stage, epoch, loss, lr)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_corpus(args, config: RunConfig, session: PhaseGenLogger) -> Dict[str, Any]:
    from synthetic_corpus import synth_corpus

    with Stage(session, "gen-corpus"):
        dataset = synth_corpus(config.corpus, config.seed_for("corpus"))
        save_dataset(dataset, args.out)
    write_run_config(config, args.out, "gen-corpus")
    return {"clips": len(dataset), "out": args.out}


def cmd_preprocess(args, config: RunConfig, session: PhaseGenLogger) -> Dict[str, Any]:
    from segmentation import export_loss_matrix, preprocess_dataset, save_pools

    _check_distinct([args.data], args.out)
    seg = config.segmentation
    dataset = load_dataset(args.data)
    debug_dir = args.debug_dir or (os.path.join(args.out, "matrices") if args.matrices else None)
    matrix_count = 0 if debug_dir is None else (len(dataset) if args.matrices is None else args.matrices)
    with Stage(session, "preprocess"):
        result = preprocess_dataset(dataset, seg.weights(), seg.window, seg.top_w, seg.workers,
                                    keep_matrices=range(matrix_count))
    save_dataset(result.dataset, args.out)
    save_pools(result.pools, args.out)
    with open(os.path.join(args.out, "normalizer.json"), "w") as f:
        json.dump(result.normalizer.to_dict(), f)
    for i, matrix in result.matrices.items():
        export_loss_matrix(matrix, debug_dir, f"clip_{i:05d}")
    write_run_config(config, args.out, "preprocess")
    return {"clips": len(result.dataset), "out": args.out}


def cmd_train_ae(args, config: RunConfig, session: PhaseGenLogger) -> Dict[str, Any]:
    from phase_autoencoder import evaluate_reconstruction, train_autoencoder
    from visualization.motion_visualizer import MotionVisualizer

    _check_distinct([args.data], args.out)
    dataset = load_dataset(args.data)
    train = dataset.split("train") or dataset.clips
    held_out = dataset.split("val") or dataset.split("test")
    with Stage(session, "train-ae"):
        codec, log = train_autoencoder(train, config.codec, config.seed_for("ae-init"),
                                       on_epoch=_training_callback(session, "train-ae"),
                                       progress=args.verbose > 0)
    metrics = evaluate_reconstruction(codec, held_out) if held_out else {}
    codec.save(args.out, {"training": log.to_dict(), "held_out": metrics})
    MotionVisualizer(args.out).plot_training_curves(log.losses, log.learning_rates,
                                                    title="Autoencoder training loss")
    write_run_config(config, args.out, "train-ae")
    return {"final_loss": log.final_loss, **metrics}


def cmd_train_diff(args, config: RunConfig, session: PhaseGenLogger) -> Dict[str, Any]:
    from diffusion import train_denoiser
    from phase_autoencoder import PhaseCodec
    from segmentation import load_pools
    from visualization.motion_visualizer import MotionVisualizer

    _check_distinct([args.data, args.codec], args.out)
    dataset = load_dataset(args.data)
    indices = dataset.splits.get("train") or list(range(len(dataset)))
    pools = load_pools(args.data, dataset)
    codec = PhaseCodec.load(args.codec)
    with Stage(session, "train-diff"):
        stack, log = train_denoiser([dataset.clips[i] for i in indices], [pools[i] for i in indices], codec,
                                    config.diffusion, config.seed_for("diff-init"),
                                    on_epoch=_training_callback(session, "train-diff"),
                                    progress=args.verbose > 0)
    if config.composer.period_frames:
        stack.period_frames = int(config.composer.period_frames)
    stack.save(args.out, {"training": log.to_dict()})
    MotionVisualizer(args.out).plot_training_curves(log.losses, log.learning_rates,
                                                    title="Denoiser training loss")
    write_run_config(config, args.out, "train-diff", [args.codec])
    return {"final_loss": log.final_loss, "period_frames": stack.period_frames}


def _generate(args, config: RunConfig, session: PhaseGenLogger, prompts, mode: GenerationMode, command: str):
    from composer import generate_long
    from diffusion import DiffusionStack

    _check_distinct([args.ckpt, args.pose_from], args.out)
    stack = DiffusionStack.load(args.ckpt)
    composer = config.composer.to_config(config.seed_for("sampler"))
    with Stage(session, command):
        clip = generate_long(prompts, args.length, mode, stack, composer, _start_pose(args.pose_from))
    _log_calls(session, stack)
    save_clip(clip, args.out)
    write_run_config(config, _out_dir(args.out), command, [args.ckpt])
    return {"frames": clip.num_frames, "diffusion_calls": stack.diffusion_calls, "out": args.out}


def cmd_generate(args, config: RunConfig, session: PhaseGenLogger) -> Dict[str, Any]:
    return _generate(args, config, session, [args.prompt], GenerationMode.REPETITION, "generate")


def cmd_extend(args, config: RunConfig, session: PhaseGenLogger) -> Dict[str, Any]:
    return _generate(args, config, session, args.prompt, GenerationMode(args.mode), "extend")


def cmd_blend(args, config: RunConfig, session: PhaseGenLogger) -> Dict[str, Any]:
    from composer import blend_clips

    _check_distinct([args.a, args.b, args.ckpt], args.out)
    codec = load_codec(args.ckpt)
    with Stage(session, "blend"):
        clip = blend_clips(codec, load_clip(args.a), load_clip(args.b), config.composer.blend_window)
    save_clip(clip, args.out)
    write_run_config(config, _out_dir(args.out), "blend", [args.ckpt])
    return {"frames": clip.num_frames, "out": args.out}


def cmd_interp(args, config: RunConfig, session: PhaseGenLogger) -> Dict[str, Any]:
    from composer import interpolate_clip

    _check_distinct([args.input, args.ckpt], args.out)
    codec = load_codec(args.ckpt)
    with Stage(session, "interp"):
        clip = interpolate_clip(codec, load_clip(args.input), args.factor)
    save_clip(clip, args.out)
    write_run_config(config, _out_dir(args.out), "interp", [args.ckpt])
    return {"frames": clip.num_frames, "fps": clip.fps, "out": args.out}


def _prompt_pairs(prompts: List[str], count: int) -> List[Tuple[str, str]]:
    unique = sorted(set(prompts))
    pairs = [(a, b) for a in unique for b in unique if a != b] or [(a, a) for a in unique]
    if not pairs:
        raise ValidationError("the dataset has no prompts")
    return [pairs[i % len(pairs)] for i in range(count)]


def _pose_bank(dataset: MotionDataset, stride: int = 10) -> List[Pose]:
    clips = dataset.split("test") or dataset.split("val") or dataset.clips
    return [clip.pose(i) for clip in clips for i in range(0, clip.num_frames, stride)]


def cmd_eval(args, config: RunConfig, session: PhaseGenLogger) -> Dict[str, Any]:
    import eval_harness
    from visualization.motion_visualizer import MotionVisualizer

    kind = StudyKind(args.study)
    settings = config.eval
    if args.data is None and kind != StudyKind.TIMING:
        raise ValidationError(f"eval {kind.value} needs --data")
    if args.ckpt is None and kind != StudyKind.RECON_STUDY:
        raise ValidationError(f"eval {kind.value} needs --ckpt")
    dataset = load_dataset(args.data) if args.data else None
    corpus_seed = _corpus_seed(args.data)
    seed = config.seed_for("eval")
    out = resolve_output(args.out)
    visualizer = MotionVisualizer(_out_dir(out))

    with Stage(session, f"eval-{kind.value}"):
        if kind == StudyKind.RECON_STUDY:
            held_out = dataset.split("val") or dataset.split("test") or dataset.clips
            reports = eval_harness.recon_study(dataset.split("train") or dataset.clips, held_out, config.codec,
                                               seed=config.seed_for("ae-init"), corpus_seed=corpus_seed)
            ordering = eval_harness.recon_ordering(reports)
            for report in reports:
                report.metrics["ordering"] = ordering
        else:
            from diffusion import DiffusionStack

            stack = DiffusionStack.load(args.ckpt)
            if kind == StudyKind.TRANSITION_STUDY:
                report = eval_harness.transition_study(
                    stack, _prompt_pairs(dataset.prompts(), settings.prompt_pairs), _pose_bank(dataset),
                    seed=seed, guidance=config.composer.guidance, sampling_steps=settings.sampling_steps,
                    half_window=settings.half_window, corpus_seed=corpus_seed)
                visualizer.plot_transition_curves(report.rows)
            elif kind == StudyKind.GUIDANCE_SWEEP:
                report = eval_harness.guidance_sweep(
                    stack, sorted(set(dataset.prompts())), dataset.split("train") or dataset.clips,
                    settings.guidance_scales, seed=seed, sampling_steps=settings.sampling_steps,
                    corpus_seed=corpus_seed)
                visualizer.plot_guidance_sweep(report.rows)
            else:
                prompt = args.prompt or (dataset.prompts()[0] if dataset and dataset.prompts() else None)
                report = eval_harness.timing_profile(stack, prompt, settings.lengths, settings.timing_runs,
                                                     settings.warmup, seed, settings.sampling_steps, corpus_seed)
                visualizer.plot_timing(report.rows)
            _log_calls(session, stack)
            reports = [report]

    eval_harness.save_reports(reports, out)
    if args.dashboard:
        from visualization.report_dashboard import ReportDashboard

        ReportDashboard(reports).generate_dashboard(args.dashboard, title=f"PhaseGen {kind.value}")
    write_run_config(config, _out_dir(out), f"eval {kind.value}", [args.ckpt] if args.ckpt else [])
    return {"reports": len(reports), "out": out}


def cmd_export_anim(args, config: RunConfig, session: PhaseGenLogger) -> Dict[str, Any]:
    from anim_export import export_anim

    clip = load_clip(args.input)
    files = export_anim(clip, args.out, ExportFormat(args.format), args.every)
    write_run_config(config, args.out, "export-anim")
    return {"files": len(files), "out": args.out}


COMMANDS = {
    'gen-corpus': cmd_gen_corpus,
    'preprocess': cmd_preprocess,
    'train-ae': cmd_train_ae,
    'train-diff': cmd_train_diff,
    'generate': cmd_generate,
    'extend': cmd_extend,
    'blend': cmd_blend,
    'interp': cmd_interp,
    'eval': cmd_eval,
    'export-anim': cmd_export_anim,
}


def report_error(error: PhaseGenError) -> int:
    print(json.dumps({"error": error.to_dict()}), file=sys.stderr)
    return error.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    debug_level = debug_level_from_verbosity(args.verbose)
    session = get_logger(args.log_dir, debug_level=debug_level)
    session.set_debug_level(debug_level)
    try:
        apply_thread_cap()
        config = resolve_config(args.config, collect_overrides(args))
        session.debug(f"Resolved config: {config.to_dict()}", DebugLevel.TRACE)
        session.info(f"=== phasegen {args.command} (seed {config.seed}) ===")
        result = COMMANDS[args.command](args, config, session)
        session.info(f"{args.command} complete: {result}")
        return 0
    except PhaseGenError as e:
        session.error(f"{args.command} failed: {e}")
        return report_error(e)
    except Exception as e:
        session.error(f"{args.command} failed unexpectedly: {e!r}")
        print(json.dumps({"error": {"category": "runtime", "message": str(e)}}), file=sys.stderr)
        return 1
    finally:
        session.save_session_data()
        reset_logger()


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands: train, generate, mask-dump, eval, sweep-ratio, stats.
Exit codes: 0 success, 2 validation error, 3 external-service error,
4 internal invariant breach.  Every flag has a twin key in the optional
JSON config file; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .clients import ClientError, HttpChatClient
from .evalkit import (
    FixtureAestheticsScorer,
    SequenceJudgeClient,
    evaluate_set,
)
from .layout import build_token_layout, build_set_mask, format_mask_dump
from .model import ModelConfig, full_corpus, load_checkpoint, save_checkpoint, train
from .model.data import NULL_ID
from .probe import sweep_step_ratios
from .recaption import Instruction, RecaptionError, recaption, tokenize_for_toy
from .setgen import FrozenLatentError, GridLayout, Schedule, generate_set, grid_layout_for
from .tensor import DegenerateAttentionRowError, Rng, ShapeError

log = logging.getLogger("imgset")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_EXTERNAL = 3
EXIT_INTERNAL = 4


def _merge_config(args: argparse.Namespace, keys) -> dict:
    """Defaults < config file < explicit flags."""
    merged = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            merged.update(json.load(fh))
    for key, default in keys.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            merged[key] = flag_val
        elif key not in merged:
            merged[key] = default
    return merged


def _write_png(path, image) -> None:
    from PIL import Image

    arr = (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    Image.fromarray(arr).save(path)


def _write_ppm(path, image) -> None:
    """Raw binary P6 portable pixmap (bit-stable across encoders)."""
    arr = (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(arr.tobytes())


def _composite(images, grid: GridLayout) -> np.ndarray:
    side = images[0].shape[0]
    if grid.windows is not None:
        rows, cols = 1, len(images)
    else:
        rows, cols = grid.rows, grid.cols
    canvas = np.zeros((rows * side, cols * side, 3))
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        canvas[r * side : (r + 1) * side, c * side : (c + 1) * side] = img
    return canvas


def cmd_train(args) -> int:
    cfg = _merge_config(args, {"steps": 2000, "lr": 1e-3, "seed": 0})
    model_cfg = ModelConfig.from_dict(cfg["model"]) if "model" in cfg else ModelConfig()
    corpus = full_corpus(model_cfg.image_side)
    params = train(
        model_cfg, corpus, steps=int(cfg["steps"]), lr=float(cfg["lr"]),
        rng=Rng(int(cfg["seed"])),
    )
    save_checkpoint(args.out, model_cfg, params)
    print(f"checkpoint written to {args.out}")
    return EXIT_OK


def _resolve_instruction(args) -> Instruction:
    if args.instruction:
        return Instruction(text=args.instruction, set_size=args.n)
    if args.task_id:
        corpus_path = args.corpus or bench.sample_corpus_path()
        tasks = {t.id: t for t in bench.load_corpus(corpus_path)}
        if args.task_id not in tasks:
            raise bench.CorpusError(f"task id {args.task_id!r} not in corpus")
        t = tasks[args.task_id]
        return Instruction(text=t.instruction, set_size=t.set_size)
    raise RecaptionError("provide --instruction or --task-id")


def _recaption_client(args):
    if getattr(args, "offline", False) or not getattr(args, "endpoint", None):
        return None
    return HttpChatClient(endpoint=args.endpoint)


def cmd_generate(args) -> int:
    cfg = _merge_config(args, {"steps": 20, "divide": 2, "guidance": 3.5, "seed": 0, "grid": "auto"})
    model_cfg, params = load_checkpoint(args.checkpoint)
    instruction = _resolve_instruction(args)
    result = recaption(instruction, client=_recaption_client(args))
    prompt_ids = [tokenize_for_toy(p) for p in result.prompts]
    g_ids = tokenize_for_toy(result.global_prompt) if result.global_prompt else [NULL_ID]
    schedule = Schedule(
        total_steps=int(cfg["steps"]), divide_steps=int(cfg["divide"]),
        guidance_scale=float(cfg["guidance"]),
    )
    n = len(prompt_ids)
    if cfg["grid"] == "auto":
        grid = grid_layout_for(n, model_cfg.tokens_per_side)
    elif cfg["grid"] == "1xn":
        grid = GridLayout(1, n, model_cfg.tokens_per_side)
    elif cfg["grid"] == "2x2":
        grid = GridLayout(2, 2, model_cfg.tokens_per_side)
    else:
        raise ValueError(f"unknown grid {cfg['grid']!r} (expected auto|1xn|2x2)")

    images = generate_set(params, model_cfg, prompt_ids, g_ids, schedule, int(cfg["seed"]), grid=grid)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, img in enumerate(images):
        name = f"img_{i:02d}.png"
        _write_png(out / name, img)
        files.append(name)
        if args.ppm:
            _write_ppm(out / f"img_{i:02d}.ppm", img)
    _write_png(out / "composite.png", _composite(images, grid))
    manifest = {
        "schema_version": 1,
        "instruction": instruction.text,
        "entities": list(result.entities),
        "prompts": list(result.prompts),
        "global_prompt": result.global_prompt,
        "prompt_token_ids": prompt_ids,
        "global_token_ids": g_ids,
        "seed": int(cfg["seed"]),
        "schedule": {
            "total_steps": schedule.total_steps,
            "divide_steps": schedule.divide_steps,
            "guidance_scale": schedule.guidance_scale,
        },
        "grid": {"rows": grid.rows, "cols": grid.cols,
                 "windows": [list(w) for w in grid.windows] if grid.windows else None},
        "images": files,
        "composite": "composite.png",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(images)} images to {out}")
    return EXIT_OK


def cmd_mask_dump(args) -> int:
    prompt_lens = [int(x) for x in args.prompt_lens.split(",")]
    visual_lens = [int(x) for x in args.visual_lens.split(",")]
    layout = build_token_layout(prompt_lens, args.global_len, visual_lens)
    sys.stdout.write(format_mask_dump(layout, build_set_mask(layout)))
    return EXIT_OK


def _load_images(directory) -> list[np.ndarray]:
    from PIL import Image

    paths = sorted(Path(directory).glob("img_*.png")) or sorted(Path(directory).glob("*.png"))
    paths = [p for p in paths if p.name != "composite.png"]
    if not paths:
        raise ValueError(f"no PNG images found in {directory}")
    return [np.asarray(Image.open(p).convert("RGB"), dtype=np.float64) / 255.0 for p in paths]


def cmd_eval(args) -> int:
    images = _load_images(args.images)
    instruction = Instruction(text=args.instruction)
    result = recaption(instruction)
    if args.fixtures:
        fixtures_dir = Path(args.fixtures)
        criteria = json.loads((fixtures_dir / "criteria.json").read_text())
        scores = json.loads((fixtures_dir / "scores.json").read_text())
        vlm = SequenceJudgeClient(scores["judgments"])
        scorer = FixtureAestheticsScorer(scores["aesthetics"])
        report = evaluate_set(
            images, result.prompts, instruction.text, vlm, scorer,
            criteria_fixtures=criteria,
        )
    else:
        if not args.endpoint:
            raise ValueError("provide --endpoint or --fixtures")
        client = HttpChatClient(endpoint=args.endpoint)
        raise ClientError(
            "live VLM evaluation requires a logprob-capable judge endpoint; "
            "wire an aesthetics scorer endpoint as well (not configured)"
        ) if args.aesthetics_endpoint is None else None
    out = Path(args.out) if args.out else None
    text = report.to_json() + "\n" + report.to_table(args.label)
    if out:
        out.write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep_ratio(args) -> int:
    model_cfg, params = load_checkpoint(args.checkpoint)
    ratios = []
    for part in args.ratios.split(","):
        d, t = part.split(":")
        ratios.append((int(d), int(t)))
    seeds = list(range(int(args.seeds)))
    results = sweep_step_ratios(params, model_cfg, ratios, seeds, guidance_scale=args.guidance)
    print(json.dumps(results, indent=2))
    return EXIT_OK


def cmd_stats(args) -> int:
    path = args.corpus or bench.sample_corpus_path()
    tasks = bench.load_corpus(path)
    print(json.dumps(bench.corpus_stats(tasks), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imgset")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the toy model and write a checkpoint")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="recaption + divide-and-conquer generation")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instruction")
    p.add_argument("--task-id")
    p.add_argument("--corpus")
    p.add_argument("-n", type=int, help="requested set size")
    p.add_argument("--steps", type=int)
    p.add_argument("--divide", type=int)
    p.add_argument("--guidance", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", choices=["auto", "1xn", "2x2"])
    p.add_argument("--offline", action="store_true")
    p.add_argument("--endpoint")
    p.add_argument("--ppm", action="store_true", help="also write raw P6 pixmaps")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("mask-dump", help="print the set-attention mask")
    p.add_argument("--prompt-lens", required=True, help="comma-separated per-image prompt lengths")
    p.add_argument("--global-len", type=int, required=True)
    p.add_argument("--visual-lens", required=True, help="comma-separated per-image visual lengths")
    p.set_defaults(func=cmd_mask_dump)

    p = sub.add_parser("eval", help="score an image set")
    p.add_argument("--images", required=True)
    p.add_argument("--instruction", required=True)
    p.add_argument("--endpoint")
    p.add_argument("--aesthetics-endpoint")
    p.add_argument("--fixtures", help="directory with criteria.json and scores.json")
    p.add_argument("--label", default="result")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-ratio", help="divide:total step-ratio sweep")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ratios", default="1:20,2:20,4:20,6:20")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--guidance", type=float, default=3.5)
    p.set_defaults(func=cmd_sweep_ratio)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--corpus")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FrozenLatentError, DegenerateAttentionRowError, AssertionError) as exc:
        log.error("internal invariant breach: %s", exc)
        return EXIT_INTERNAL
    except ClientError as exc:
        log.error("external service failure: %s", exc)
        return EXIT_EXTERNAL
    except (RecaptionError, bench.CorpusError, ShapeError, ValueError, OSError) as exc:
        log.error("validation error: %s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

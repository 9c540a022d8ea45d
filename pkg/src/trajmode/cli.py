"""Command-line interface: thin wrappers over the pipeline stages.

Every subcommand is idempotent given unchanged inputs and config; stage
failures exit nonzero with a stage-tagged diagnostic on stderr.
"""

import argparse
import dataclasses
import sys
from typing import Optional

from .config import ConfigError, PipelineConfig, load_config, with_overrides
from .pipeline import PipelineRun, StageError
from .synth import SynthSpec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajmode",
        description="Travel mode identification from GPS trajectory scenes",
    )
    parser.add_argument("--config", help="pipeline config JSON file")
    parser.add_argument("--seed", type=int, help="override embedding seed and train split seed")
    parser.add_argument("--out", help="override output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="parse a GeoLife tree into labeled segments")
    sub.add_parser("features", help="compute kinematics reports for all segments")
    sub.add_parser("render", help="render map scenes for all segments")
    sub.add_parser("narrate", help="generate movement narratives")
    sub.add_parser("embed", help="embed both modalities per segment")
    combine = sub.add_parser("combine", help="combine modality embeddings")
    combine.add_argument(
        "--rule",
        choices=["concatenation", "fusion", "image_only", "text_only"],
        help="override the configured combination rule",
    )
    sub.add_parser("train", help="train the travel-mode classifier")
    sub.add_parser("eval", help="evaluate the trained classifier on its test split")
    sub.add_parser("ablate", help="train/evaluate all four combination rules")
    sub.add_parser("pipeline", help="run features through evaluation end to end")

    synth = sub.add_parser("synth", help="generate the synthetic labeled corpus and map")
    synth.add_argument("--per-mode", type=int, default=20, help="segments per travel mode")

    serve = sub.add_parser("serve", help="run the HTTP service wrapping the pipeline")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--checkpoint", help="model checkpoint for /classify")
    serve.add_argument("--osm", help="OSM extract for scene layers")
    return parser


def _load(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    return with_overrides(cfg, out=args.out, seed=args.seed)


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "serve":
            return _serve(args, cfg)
        run = PipelineRun(cfg)
        if args.command == "synth":
            seed = args.seed if args.seed is not None else cfg.embedding.seed
            run.synth(SynthSpec(segments_per_mode=args.per_mode, seed=seed))
        elif args.command == "ingest":
            cfg.validate_inputs_exist(require_segments_source=False)
            run.ingest()
        elif args.command == "features":
            run.features()
        elif args.command == "render":
            run.render()
        elif args.command == "narrate":
            cfg.validate_remote_ready()
            run.narrate()
        elif args.command == "embed":
            cfg.validate_remote_ready()
            run.embed()
        elif args.command == "combine":
            rules = None
            if args.rule is not None:
                from .embedding import CombineRule

                rules = [CombineRule(args.rule)]
            run.combine(rules)
        elif args.command == "train":
            run.train()
        elif args.command == "eval":
            run.evaluate()
        elif args.command == "ablate":
            run.ablate()
        elif args.command == "pipeline":
            run.pipeline()
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"[config] {exc}", file=sys.stderr)
        return 1
    return 0


def _serve(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        checkpoint_path=args.checkpoint,
        osm_path=args.osm or cfg.paths.osm,
        embed_dim=cfg.embedding.dim,
        embed_seed=cfg.embedding.seed,
        combine_rule=cfg.embedding.combine_rule,
        buffer_frac=cfg.render.buffer_frac,
        max_px=cfg.render.max_px,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())

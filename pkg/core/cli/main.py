import argparse
import logging
import sys
from typing import List, Optional

from ..encoder.inversion_encoder import EncoderMode
from ..errors import CheckpointError, ConfigError, DivergenceError
from ..training.config import SSLMode
from ..world.shapes import ShapeCategory
from . import commands


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_USAGE = 2
EXIT_DIVERGENCE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cgc-lab", description="Desk-scale 3D-GAN lab with a cyclic generative constraint")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--quiet", action="store_true", help="Warnings only, no progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Train G, D and E from a JSON config")
    train.add_argument("--config", required=True)
    train.add_argument("--output-dir", dest="output_dir")
    train.add_argument("--resume", help="Checkpoint to continue from")
    train.add_argument("--ssl-mode", dest="ssl_mode", choices=[m.value for m in SSLMode])
    train.add_argument("--encoder-mode", dest="encoder_mode", choices=[m.value for m in EncoderMode])
    train.add_argument("--cycle-depth", dest="cycle_depth", type=int, choices=[1, 2])
    train.add_argument("--seed", type=int)
    train.add_argument("--total-steps", dest="total_steps", type=int)
    train.add_argument("--warmup-steps", dest="warmup_steps", type=int)
    train.set_defaults(handler=commands.cmd_train)

    evaluate = sub.add_parser("eval", help="Score a checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--suite", default="all", choices=list(commands.SUITES))
    evaluate.add_argument("--config", help="Experiment config whose metrics section sizes the suites")
    evaluate.add_argument("--output-dir", dest="output_dir")
    evaluate.add_argument("--label", choices=[c.value for c in ShapeCategory])
    evaluate.add_argument("--B", dest="B", type=int)
    evaluate.add_argument("--scales", help="Comma-separated latent noise scales")
    evaluate.set_defaults(handler=commands.cmd_eval)

    ablate = sub.add_parser("ablate", help="Encoder, SSL-mode and cycle-depth grids over every seed")
    ablate.add_argument("--config", required=True)
    ablate.add_argument("--output-dir", dest="output_dir")
    ablate.add_argument("--workers", type=int, default=1)
    ablate.set_defaults(handler=commands.cmd_ablate)

    render = sub.add_parser("render", help="Orbit views plus .occ and OBJ exports for one latent")
    render.add_argument("--checkpoint", required=True)
    render.add_argument("--output-dir", dest="output_dir")
    render.add_argument("--z-seed", dest="z_seed", type=int, default=0)
    render.add_argument("--z-file", dest="z_file", help="Whitespace-separated latent values")
    render.add_argument("--label", choices=[c.value for c in ShapeCategory])
    render.add_argument("--views", type=int, default=8)
    render.add_argument("--elevation", type=float, default=0.3)
    render.set_defaults(handler=commands.cmd_render)

    gradcheck = sub.add_parser("gradcheck", help="Finite-difference check of every differentiable op")
    gradcheck.add_argument("--op", action="append", help="Restrict to this op (repeatable)")
    gradcheck.add_argument("--json", action="store_true", help="Machine-readable report")
    gradcheck.add_argument("--output-dir", dest="output_dir")
    gradcheck.set_defaults(handler=commands.cmd_gradcheck)
    return parser


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    args.show_progress = not args.quiet and sys.stderr.isatty()

    try:
        return args.handler(args)
    except ConfigError as exc:
        for diagnostic in exc.diagnostics:
            logger.error(diagnostic)
        return EXIT_USAGE
    except (FileNotFoundError, CheckpointError) as exc:
        logger.error(str(exc))
        return EXIT_USAGE
    except DivergenceError as exc:
        logger.error(str(exc))
        return EXIT_DIVERGENCE

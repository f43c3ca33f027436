# handlers/synth_handler.py
import logging

from agesign.services.synth_logic import generate_corpus

logger = logging.getLogger(__name__)


def _counts(raw: str):
    return tuple(int(part) for part in raw.split(",") if part.strip())


def _floats(raw: str):
    return tuple(float(part) for part in raw.split(",") if part.strip())


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="сгенерировать синтетический корпус")
    parser.add_argument("--train-per-class", type=int, default=18)
    parser.add_argument("--eval-counts", type=_counts, default=(43, 27, 41), help="например 43,27,41")
    parser.add_argument("--train-negatives", type=int, default=18)
    parser.add_argument("--eval-negatives", type=int, default=18)
    parser.add_argument("--radius-range", type=_floats, default=(24, 48), help="например 24,48")
    parser.add_argument("--noise-levels", type=_floats, default=(0, 4, 8), help="σ шума, например 0,4,8")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="каталог корпуса")
    parser.set_defaults(handler=handle_synth)


async def handle_synth(args) -> int:
    manifest = await generate_corpus(
        args.out,
        train_counts=(args.train_per_class,) * 3,
        eval_counts=args.eval_counts,
        train_negatives=args.train_negatives,
        eval_negatives=args.eval_negatives,
        radius_range=args.radius_range,
        noise_levels=args.noise_levels,
        seed=args.seed,
    )
    print(f"{len(manifest.records)} кадров в {args.out}")
    return 0

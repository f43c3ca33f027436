# handlers/schedule_handler.py
import logging

from agesign.services.synth_logic import build_schedule, write_schedule

logger = logging.getLogger(__name__)


def _floats(raw: str):
    return tuple(float(part) for part in raw.split(",") if part.strip())


def register(subparsers) -> None:
    parser = subparsers.add_parser("schedule", help="сгенерировать расписание вещания для stream")
    parser.add_argument("--out", required=True, help="каталог для кадров и schedule.jsonl")
    parser.add_argument("--duration", type=float, default=120.0, help="длительность, с")
    parser.add_argument("--interval", type=float, default=1.0, help="шаг между кадрами, с")
    parser.add_argument("--windows", type=_floats, default=(15.0, 50.0, 90.0), help="начала окон знаков, с")
    parser.add_argument("--sign-duration", type=float, default=10.0)
    parser.add_argument("--noise", type=float, default=4.0, help="σ гауссова шума")
    parser.add_argument("--seed", type=int, default=0)
    parser.set_defaults(handler=handle_schedule)


async def handle_schedule(args) -> int:
    schedule = build_schedule(
        duration=args.duration,
        frame_interval=args.interval,
        window_starts=args.windows,
        sign_duration=args.sign_duration,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    path = await write_schedule(args.out, schedule)
    print(path)
    return 0

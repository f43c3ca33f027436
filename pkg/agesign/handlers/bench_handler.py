# handlers/bench_handler.py
import logging

from agesign import config
from agesign.database.queries import load_manifest
from agesign.services.benchmark_logic import format_benchmark_table, run_benchmark, write_benchmark_csv
from agesign.services.classify_logic import load_model_file

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("bench", help="сравнить CHT и CE на оценочной части корпуса")
    parser.add_argument("--corpus", required=True)
    parser.add_argument("--model", default=None)
    parser.add_argument("--out", default="results.csv", help="CSV с результатами")
    parser.set_defaults(handler=handle_bench)


async def handle_bench(args) -> int:
    cfg = config.load_pipeline_config(model_path=args.model)
    model = await load_model_file(cfg.model_path)
    manifest = await load_manifest(args.corpus)

    table = await run_benchmark(manifest, model, cfg)
    await write_benchmark_csv(args.out, table)
    print(format_benchmark_table(table), end="")
    logger.info(f"📊 Результаты записаны в {args.out}")
    return 0

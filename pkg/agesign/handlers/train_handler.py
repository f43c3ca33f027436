# handlers/train_handler.py
import asyncio
import logging

from agesign import config
from agesign.database.queries import load_manifest
from agesign.services.classify_logic import TrainConfig, mlp_train, save_model_file
from agesign.services.pipeline_logic import build_training_set
from agesign.utils.logger import log_model_trained

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="обучить MLP на обучающей части корпуса")
    parser.add_argument("--corpus", required=True, help="каталог корпуса с manifest.jsonl")
    parser.add_argument("--seed", type=int, default=0, help="зерно начальных весов")
    parser.add_argument("--out", default=None, help=f"файл модели (по умолчанию {config.MODEL_PATH})")
    parser.add_argument("--lr", type=float, default=0.5)
    parser.add_argument("--epochs", type=int, default=5000)
    parser.add_argument("--target-mse", type=float, default=0.01)
    parser.add_argument("--fit-threshold", type=float, default=0.5,
                        help="обучение идёт, пока хоть один пример распознаётся неверно; 0 отключает")
    parser.add_argument("--detector", choices=("ce", "cht"), default=None,
                        help="детектор для извлечения признаков")
    parser.set_defaults(handler=handle_train)


async def handle_train(args) -> int:
    cfg = config.load_pipeline_config(detector=args.detector, model_path=args.out)
    train_cfg = TrainConfig(
        learning_rate=args.lr, max_epochs=args.epochs, target_mse=args.target_mse,
        fit_threshold=args.fit_threshold, rng_seed=args.seed,
    )
    manifest = await load_manifest(args.corpus)
    dataset = await build_training_set(manifest, "train", cfg)

    model, curve = await asyncio.to_thread(mlp_train, dataset, train_cfg)
    await save_model_file(cfg.model_path, model)
    log_model_trained(len(curve), curve[-1], len(dataset), cfg.model_path)

    if curve[-1] > train_cfg.target_mse:
        logger.warning(f"⚠️ Целевая MSE {train_cfg.target_mse} не достигнута: {curve[-1]:.5f}")
    return 0

# handlers/detect_handler.py
import asyncio
import json
import logging
import os

from agesign import config
from agesign.services.classify_logic import load_model_file
from agesign.services.pipeline_logic import annotate_output, load_frame, process_frame
from agesign.services.raster_logic import save_pnm
from agesign.utils.logger import log_sign_detected

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("detect", help="найти и классифицировать знак в одном кадре")
    parser.add_argument("--image", required=True, help="кадр PPM/PGM")
    parser.add_argument("--detector", choices=("ce", "cht"), default=None)
    parser.add_argument("--model", default=None, help=f"файл модели (по умолчанию {config.MODEL_PATH})")
    parser.add_argument("--annotate", default=None, help="куда сохранить размеченный кадр (PPM)")
    parser.add_argument("--json", action="store_true", help="вывести результат одной строкой JSON")
    parser.add_argument("--debug-dir", default=None, help="каталог для этапов предобработки (PGM)")
    parser.set_defaults(handler=handle_detect)


def detection_dict(detection) -> dict:
    circle = detection.circle
    return {
        "label": detection.label.value,
        "corner": detection.corner.value if detection.corner else None,
        "a0": circle.a0 if circle else None,
        "b0": circle.b0 if circle else None,
        "r0": circle.r0 if circle else None,
        "activations": list(detection.activations),
        "ms": round(detection.elapsed * 1000, 3),
    }


async def dump_stages(debug_dir: str, debug: dict) -> None:
    os.makedirs(debug_dir, exist_ok=True)
    for corner, stages in debug.items():
        for name, image in stages.images().items():
            await save_pnm(os.path.join(debug_dir, f"{corner.value}_{name}.pgm"), image)
    logger.info(f"🔍 Этапы предобработки сохранены в {debug_dir}")


async def handle_detect(args) -> int:
    cfg = config.load_pipeline_config(detector=args.detector, model_path=args.model)
    model = await load_model_file(cfg.model_path)
    frame = await load_frame(args.image)

    debug = {} if args.debug_dir else None
    result = await asyncio.to_thread(process_frame, frame, cfg, model, debug)
    decision = result.decision

    if args.json:
        print(json.dumps({
            **detection_dict(decision),
            "corners": [detection_dict(d) for d in result.detections],
        }, ensure_ascii=False))
    else:
        print(f"{decision.label.value}\t{decision.corner.value if decision.corner else '-'}")

    if decision.circle is not None:
        log_sign_detected(decision)
    if args.annotate:
        await save_pnm(args.annotate, annotate_output(frame, decision))
        logger.info(f"🖼 Размеченный кадр: {args.annotate}")
    if debug is not None:
        await dump_stages(args.debug_dir, debug)
    return 0

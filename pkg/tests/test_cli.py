import asyncio
import json
import logging
import os

import pytest

from agesign import config
from agesign.app import main
from agesign.handlers import build_parser
from agesign.services.circle_detect_logic import Circle
from agesign.services.classify_logic import Detection, SignClass
from agesign.services.raster_logic import Corner
from agesign.utils.logger import JournalLogHandler, log_corner_conflict, log_sign_detected


def run(*argv):
    # main перенастраивает корневой логгер, возвращаем обработчики pytest
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    try:
        return asyncio.run(main(list(argv)))
    finally:
        root.handlers[:] = handlers
        root.setLevel(level)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Корпус и модель, собранные через подкоманды."""
    root = tmp_path_factory.mktemp("cli")
    corpus = str(root / "corpus")
    model = str(root / "model.bin")
    assert run("synth", "--out", corpus, "--train-per-class", "2", "--eval-counts", "1,1,1",
               "--train-negatives", "3", "--eval-negatives", "0", "--seed", "1") == 0
    assert run("train", "--corpus", corpus, "--out", model, "--epochs", "200") == 0
    return root, corpus, model


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_synth_accepts_fractional_noise_and_radii():
    args = build_parser().parse_args(["synth", "--out", "corpus", "--noise-levels", "0,2.5,8",
                                      "--radius-range", "24.5,40", "--eval-counts", "4,3,2"])
    assert args.noise_levels == (0.0, 2.5, 8.0)
    assert args.radius_range == (24.5, 40.0)
    assert args.eval_counts == (4, 3, 2)


def test_train_fit_threshold_flag():
    args = build_parser().parse_args(["train", "--corpus", "c", "--fit-threshold", "0"])
    assert args.fit_threshold == 0.0
    assert build_parser().parse_args(["train", "--corpus", "c"]).fit_threshold == 0.5


def test_detect_json(workspace, capsys):
    _, corpus, model = workspace
    capsys.readouterr()
    frame = os.path.join(corpus, "frames", "eval_0009.ppm")
    annotated = os.path.join(corpus, "annotated.ppm")
    assert run("detect", "--image", frame, "--model", model, "--json", "--annotate", annotated) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["label"] in [c.value for c in SignClass]
    assert len(payload["corners"]) == 2
    assert os.path.isfile(annotated)


def test_detect_debug_dir(workspace, capsys):
    root, corpus, model = workspace
    debug_dir = str(root / "debug")
    frame = os.path.join(corpus, "frames", "eval_0009.ppm")
    assert run("detect", "--image", frame, "--model", model, "--debug-dir", debug_dir) == 0
    dumped = os.listdir(debug_dir)
    assert {"upper-left_gray.pgm", "upper-right_gray.pgm"} <= set(dumped)


def test_missing_model_is_reported(workspace):
    root, corpus, _ = workspace
    frame = os.path.join(corpus, "frames", "eval_0009.ppm")
    assert run("detect", "--image", frame, "--model", str(root / "absent.bin")) == 2


def test_bad_model_file(workspace):
    root, corpus, _ = workspace
    bad = root / "bad.bin"
    bad.write_bytes(b"not a model at all, definitely not")
    frame = os.path.join(corpus, "frames", "eval_0009.ppm")
    assert run("detect", "--image", frame, "--model", str(bad)) == 2


def test_schedule_and_stream(workspace, capsys):
    root, _, model = workspace
    out = str(root / "broadcast")
    assert run("schedule", "--out", out, "--duration", "16", "--windows", "4", "--sign-duration", "6") == 0
    capsys.readouterr()
    code = run("stream", "--schedule", os.path.join(out, "schedule.jsonl"), "--model", model, "--period", "4")
    events = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert code == 0
    assert [e["t"] for e in events] == [0.0, 4.0, 8.0, 12.0]
    assert all(e["deadline_met"] for e in events)


def test_bench_writes_csv(workspace, capsys):
    root, corpus, model = workspace
    out = str(root / "results.csv")
    assert run("bench", "--corpus", corpus, "--model", model, "--out", out) == 0
    with open(out, encoding="utf-8") as f:
        assert f.readline().strip() == "detector,class,n,mean_s,std_s,accuracy_pct"
    assert "CHT" in capsys.readouterr().out


# ---------- конфигурация и журнал ----------

def test_config_overrides_skip_none():
    cfg = config.load_pipeline_config(detector="cht", model_path=None, sampling_period=2.0)
    assert cfg.detector == "cht"
    assert cfg.model_path == config.MODEL_PATH
    assert cfg.sampling_period == 2.0


def test_journal_handler_writes_lines(tmp_path):
    path = tmp_path / "logs" / "journal.log"
    handler = JournalLogHandler(str(path))
    log = logging.getLogger("agesign.tests.journal")
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    try:
        log.info("первая\nвторая")
    finally:
        log.removeHandler(handler)
    line = path.read_text(encoding="utf-8")
    assert "INFO" in line and "первая | вторая" in line
    assert line.count("\n") == 1


def test_event_helpers_use_hashtags(caplog):
    detection = Detection(label=SignClass.AGE_13, corner=Corner.UPPER_LEFT, circle=Circle(a0=1, b0=2, r0=3))
    with caplog.at_level(logging.INFO, logger="agesign.utils.logger"):
        log_sign_detected(detection, 12.0)
        log_corner_conflict(detection, detection)
    assert "#13plus" in caplog.text
    assert "#КОНФЛИКТ_УГЛОВ" in caplog.text

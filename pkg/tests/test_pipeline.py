import asyncio

import numpy as np
import pytest

from agesign.database.models import CorpusManifest
from agesign.errors import EmptySplitError
from agesign.services.circle_detect_logic import Circle
from agesign.services.classify_logic import Detection, SignClass, classify, init_model
from agesign.services.pipeline_logic import (
    OUTLINE_COLOR,
    analyze_corner,
    annotate_output,
    build_training_set,
    decide_frame,
    find_circle,
    load_frame,
    process_frame,
)
from agesign.services.raster_logic import ColorImage, Corner, GrayImage, crop, corner_regions, save_pnm, to_grayscale
from agesign.services.synth_logic import FrameSpec, generate_corpus, render_frame

from conftest import sign_frame_spec


def sign_detection(label, corner, circle=None):
    return Detection(label=label, corner=corner, circle=circle or Circle(a0=90, b0=70, r0=30))


# ---------- process_frame ----------

def test_sign_in_upper_right(pipeline_cfg, trained_model):
    spec = sign_frame_spec(SignClass.AGE_18, corner=Corner.UPPER_RIGHT, radius=40, center=(90, 70))
    frame, truth = render_frame(spec)
    result = process_frame(frame, pipeline_cfg, trained_model)
    decision = result.decision
    assert decision.label is SignClass.AGE_18
    assert decision.corner is Corner.UPPER_RIGHT
    assert abs(decision.circle.a0 - 630) <= 2 and abs(decision.circle.b0 - 70) <= 2
    assert abs(decision.circle.r0 - 40) <= 2
    assert result.left.label is SignClass.NC


def test_badge_free_frame_is_nc(pipeline_cfg):
    frame, _ = render_frame(FrameSpec(seed=1, noise_sigma=0.0))
    result = process_frame(frame, pipeline_cfg, init_model())
    assert result.decision.label is SignClass.NC
    assert all(d.label is SignClass.NC and d.circle is None for d in result.detections)


def test_debug_stages_per_corner(pipeline_cfg):
    frame, _ = render_frame(sign_frame_spec(SignClass.AGE_7))
    debug = {}
    process_frame(frame, pipeline_cfg, init_model(), debug)
    assert set(debug) == {Corner.UPPER_LEFT, Corner.UPPER_RIGHT}
    assert "object" in debug[Corner.UPPER_LEFT].images()
    assert "object" not in debug[Corner.UPPER_RIGHT].images()


def test_detectors_agree_on_clean_badge(pipeline_cfg):
    frame, _ = render_frame(sign_frame_spec(SignClass.AGE_13, radius=35, center=(80, 75)))
    left, _ = corner_regions(frame.width, frame.height)
    gray = crop(to_grayscale(frame), left)
    ce = find_circle(gray, pipeline_cfg.model_copy(update={"detector": "ce"}))
    cht = find_circle(gray, pipeline_cfg.model_copy(update={"detector": "cht"}))
    assert abs(ce.a0 - cht.a0) <= 2 and abs(ce.b0 - cht.b0) <= 2 and abs(ce.r0 - cht.r0) <= 2


def test_filled_point_source_tracks_centroid(pipeline_cfg):
    frame, _ = render_frame(sign_frame_spec(SignClass.AGE_7, radius=40, center=(90, 70)))
    left, _ = corner_regions(frame.width, frame.height)
    circle = find_circle(crop(to_grayscale(frame), left), pipeline_cfg.model_copy(update={"point_source": "filled"}))
    assert abs(circle.a0 - 90) <= 2 and abs(circle.b0 - 70) <= 2
    # по залитому диску CE занижает радиус
    assert circle.r0 < 40


# ---------- decide_frame ----------

def test_single_sign_wins():
    left = Detection(label=SignClass.NC, corner=Corner.UPPER_LEFT, elapsed=0.1)
    right = sign_detection(SignClass.AGE_13, Corner.UPPER_RIGHT).model_copy(update={"elapsed": 0.2})
    decision = decide_frame(left, right)
    assert decision.label is SignClass.AGE_13 and decision.corner is Corner.UPPER_RIGHT
    assert decision.elapsed == pytest.approx(0.3)


def test_two_signs_conflict():
    decision = decide_frame(sign_detection(SignClass.AGE_7, Corner.UPPER_LEFT),
                            sign_detection(SignClass.AGE_18, Corner.UPPER_RIGHT))
    assert decision.label is SignClass.NC and decision.circle is None


def test_no_signs():
    nc = Detection(label=SignClass.NC)
    assert decide_frame(nc, nc).label is SignClass.NC


# ---------- annotate_output ----------

def test_annotate_nc_is_copy():
    frame = ColorImage(np.full((576, 720, 3), 120, dtype=np.uint8))
    assert annotate_output(frame, Detection(label=SignClass.NC)) == frame


def test_annotate_outline_and_idempotence():
    frame = ColorImage(np.full((200, 300, 3), 120, dtype=np.uint8))
    detection = sign_detection(SignClass.AGE_7, Corner.UPPER_LEFT, Circle(a0=100, b0=100, r0=30))
    annotated = annotate_output(frame, detection)

    ys, xs = np.mgrid[0:200, 0:300]
    ring = np.abs(np.hypot(xs - 100, ys - 100) - 30) <= 0.5
    assert (annotated.pixels[ring] == OUTLINE_COLOR).all()
    assert annotate_output(annotated, detection) == annotated
    # исходный кадр не меняется
    assert (frame.pixels == 120).all()


def test_annotate_label_fits_near_right_edge():
    frame = ColorImage(np.full((200, 300, 3), 120, dtype=np.uint8))
    detection = sign_detection(SignClass.AGE_18, Corner.UPPER_RIGHT, Circle(a0=270, b0=60, r0=25))
    annotated = annotate_output(frame, detection)
    changed = (annotated.pixels != frame.pixels).any(axis=2)
    ys, xs = np.nonzero(changed)
    assert xs.max() < 300 and changed[:, :240].any()


# ---------- ввод и обучающая выборка ----------

def test_gray_frame_is_replicated(tmp_path):
    path = tmp_path / "frame.pgm"
    gray = GrayImage(np.arange(12, dtype=np.uint8).reshape(3, 4))
    asyncio.run(save_pnm(path, gray))
    frame = asyncio.run(load_frame(str(path)))
    assert frame.pixels.shape == (3, 4, 3)
    assert to_grayscale(frame) == gray


def test_training_set_from_corpus(tmp_path, pipeline_cfg):
    manifest = asyncio.run(generate_corpus(str(tmp_path), train_counts=(2, 2, 2), eval_counts=(1, 1, 1),
                                           train_negatives=3, eval_negatives=0, seed=2))
    dataset = asyncio.run(build_training_set(manifest, "train", pipeline_cfg))
    labels = [SignClass.from_index(int(np.argmax(target))) for _, target in dataset]
    for label in SignClass.signs():
        assert labels.count(label) == 2
    # ring и square дают по кадру с двумя углами, пустой кадр ничего
    assert labels.count(SignClass.NC) <= 4


def test_empty_split():
    with pytest.raises(EmptySplitError):
        asyncio.run(build_training_set(CorpusManifest(root=".", records=[]), "eval", None))


# ---------- точность на оценочной выборке ----------

def accuracy_by_class(results):
    hits = {label: [] for label in SignClass.signs()}
    for truth, result in results:
        hits[truth.label].append(result.decision.label is truth.label)
    return {label: 100.0 * sum(values) / len(values) for label, values in hits.items()}


def test_eval_corpus_counts(eval_results):
    labels = [truth.label for truth, _ in eval_results["ce"]]
    assert [labels.count(label) for label in SignClass.signs()] == [43, 27, 41]


def test_ce_accuracy_per_class(eval_results):
    for label, accuracy in accuracy_by_class(eval_results["ce"]).items():
        assert accuracy >= 92.0, label


def test_cht_accuracy_per_class(eval_results):
    for label, accuracy in accuracy_by_class(eval_results["cht"]).items():
        assert accuracy >= 97.0, label


def test_polarity_invariance_on_eval_badges(corpus_plan, pipeline_cfg, trained_model):
    cfg = pipeline_cfg.model_copy(update={"detector": "ce"})
    for planned in corpus_plan:
        if planned.split != "eval" or planned.kind != "sign":
            continue
        analyses = []
        for polarity in ("positive", "negative"):
            badge = planned.spec.badge.model_copy(update={"polarity": polarity})
            frame, truth = render_frame(planned.spec.model_copy(update={"badge": badge}))
            region = {r.corner: r for r in corner_regions(frame.width, frame.height)}[truth.corner]
            analyses.append(analyze_corner(crop(to_grayscale(frame), region), cfg))
        positive, negative = analyses
        assert np.abs(positive.features.counts - negative.features.counts).max() <= 1, planned.index
        assert classify(trained_model, positive.features)[0] is classify(trained_model, negative.features)[0]

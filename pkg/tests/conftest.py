import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

import numpy as np
import pytest

from agesign.services.classify_logic import SignClass, TrainConfig, mlp_train
from agesign.services.pipeline_logic import PipelineConfig, frame_samples, process_frame
from agesign.services.raster_logic import BinaryImage, Corner
from agesign.services.synth_logic import BadgeSpec, FrameSpec, plan_corpus, render_frame

CORPUS_SEED = 7


def disc_mask(width, height, cx, cy, r):
    ys, xs = np.mgrid[0:height, 0:width]
    return BinaryImage((xs - cx) ** 2 + (ys - cy) ** 2 <= r * r)


def sign_frame_spec(label=SignClass.AGE_7, corner=Corner.UPPER_LEFT, radius=40.0, center=(90.0, 70.0),
                    polarity="positive", sigma=0.0, background="flat", seed=1):
    badge = BadgeSpec(label=label, radius=radius, center=center, polarity=polarity)
    return FrameSpec(background=background, badge=badge, corner=corner, noise_sigma=sigma, seed=seed)


@pytest.fixture(scope="session")
def pipeline_cfg():
    return PipelineConfig()


@pytest.fixture(scope="session")
def corpus_plan():
    return plan_corpus(seed=CORPUS_SEED)


@pytest.fixture(scope="session")
def training_dataset(corpus_plan, pipeline_cfg):
    dataset = []
    for planned in corpus_plan:
        if planned.split != "train":
            continue
        frame, truth = render_frame(planned.spec)
        dataset.extend(frame_samples(frame, truth.label, truth.corner, pipeline_cfg))
    return dataset


@pytest.fixture(scope="session")
def training_result(training_dataset):
    return mlp_train(training_dataset, TrainConfig(max_epochs=20000))


@pytest.fixture(scope="session")
def trained_model(training_result):
    return training_result[0]


@pytest.fixture(scope="session")
def eval_results(corpus_plan, pipeline_cfg, trained_model):
    """(истина, FrameResult) по детекторам для оценочных кадров со знаками; детекторы чередуются покадрово."""
    configs = {detector: pipeline_cfg.model_copy(update={"detector": detector}) for detector in ("ce", "cht")}
    results = {detector: [] for detector in configs}
    for planned in corpus_plan:
        if planned.split != "eval" or planned.kind != "sign":
            continue
        frame, truth = render_frame(planned.spec)
        for detector, cfg in configs.items():
            results[detector].append((truth, process_frame(frame, cfg, trained_model)))
    return results

import asyncio

import numpy as np
import pytest

from agesign.database.models import CorpusManifest
from agesign.errors import EmptySplitError
from agesign.services.benchmark_logic import (
    CSV_HEADER,
    BenchmarkRow,
    benchmark_csv,
    format_benchmark_table,
    frame_detection_time,
    run_benchmark,
    summarize,
    write_benchmark_csv,
)
from agesign.services.circle_detect_logic import Circle
from agesign.services.classify_logic import Detection, SignClass
from agesign.services.pipeline_logic import FrameResult
from agesign.services.synth_logic import generate_corpus


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("bench_corpus"))
    return asyncio.run(generate_corpus(root, train_counts=(1, 1, 1), eval_counts=(2, 2, 2),
                                       train_negatives=0, eval_negatives=3, seed=4))


def test_summarize():
    row = summarize("ce", SignClass.AGE_7, [1.0, 3.0], [True, False])
    assert (row.n, row.mean_s, row.std_s, row.accuracy) == (2, 2.0, 1.0, 50.0)


def test_row_bounds():
    with pytest.raises(ValueError):
        BenchmarkRow(detector="ce", sign_class=SignClass.AGE_7, n=1, mean_s=0.1, std_s=0.0, accuracy=120.0)


def test_benchmark_rows(small_corpus, pipeline_cfg, trained_model):
    table = asyncio.run(run_benchmark(small_corpus, trained_model, pipeline_cfg))
    assert list(table) == ["cht", "ce"]
    for detector, rows in table.items():
        assert [row.sign_class for row in rows] == list(SignClass.signs())
        assert all(row.n == 2 and row.detector == detector and row.mean_s > 0 for row in rows)

    again = asyncio.run(run_benchmark(small_corpus, trained_model, pipeline_cfg))
    for detector in table:
        assert [r.accuracy for r in table[detector]] == [r.accuracy for r in again[detector]]


def test_csv_and_console_table(tmp_path, small_corpus, pipeline_cfg, trained_model):
    table = asyncio.run(run_benchmark(small_corpus, trained_model, pipeline_cfg, detectors=("ce",)))
    text = benchmark_csv(table)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 4
    assert lines[1].startswith("ce,7+,2,")

    path = tmp_path / "results.csv"
    asyncio.run(write_benchmark_csv(str(path), table))
    assert path.read_text(encoding="utf-8") == text
    assert "Accuracy" in format_benchmark_table(table)


def test_benchmark_needs_eval_signs(pipeline_cfg, trained_model):
    with pytest.raises(EmptySplitError):
        asyncio.run(run_benchmark(CorpusManifest(root=".", records=[]), trained_model, pipeline_cfg))


def test_frame_time_sums_both_corners():
    left = Detection(label=SignClass.NC, detect_elapsed=0.25, elapsed=0.25)
    right = Detection(label=SignClass.AGE_7, circle=Circle(a0=1, b0=1, r0=1), detect_elapsed=0.5, elapsed=0.75)
    assert frame_detection_time(FrameResult(left=left, right=right, decision=right)) == 0.75


def test_ce_median_is_fifty_times_faster(eval_results):
    ce = [frame_detection_time(result) for _, result in eval_results["ce"]]
    cht = [frame_detection_time(result) for _, result in eval_results["cht"]]
    assert len(ce) == len(cht) == 111
    assert np.median(cht) >= 50 * np.median(ce)

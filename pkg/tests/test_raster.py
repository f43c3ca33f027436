import asyncio

import numpy as np
import pytest

from agesign.errors import (
    MalformedHeaderError,
    RegionOutOfBoundsError,
    TruncatedPayloadError,
    UnsupportedFormatError,
    UnsupportedMaxvalError,
    ZeroSizeRegionError,
)
from agesign.services.raster_logic import (
    BinaryImage,
    ColorImage,
    Corner,
    CropRegion,
    GrayImage,
    corner_regions,
    crop,
    load_pnm,
    read_pnm,
    replicate_gray,
    save_pnm,
    to_grayscale,
    write_pnm,
)


def gradient_gray(width=32, height=24):
    ys, xs = np.mgrid[0:height, 0:width]
    return GrayImage((xs * 7 + ys * 3) % 256)


# ---------- to_grayscale ----------

def test_black_image_is_black():
    gray = to_grayscale(ColorImage(np.zeros((4, 5, 3), dtype=np.uint8)))
    assert gray.pixels.shape == (4, 5)
    assert not gray.pixels.any()


def test_white_pixel_stays_white():
    gray = to_grayscale(ColorImage(np.full((1, 1, 3), 255, dtype=np.uint8)))
    assert gray.pixels[0, 0] == 255


def test_luma_hand_evaluation():
    gray = to_grayscale(ColorImage(np.array([[[100, 200, 50]]], dtype=np.uint8)))
    assert gray.pixels[0, 0] == 153


def test_grayscale_idempotent_through_replication():
    gray = gradient_gray()
    assert to_grayscale(replicate_gray(gray)) == gray


# ---------- crop ----------

def test_full_region_is_identity():
    gray = gradient_gray()
    assert crop(gray, CropRegion(0, 0, gray.width, gray.height)) == gray


def test_single_pixel_region():
    gray = gradient_gray()
    assert crop(gray, CropRegion(0, 0, 1, 1)).pixels[0, 0] == gray.pixels[0, 0]


def test_crop_matches_double_loop():
    gray = gradient_gray()
    region = CropRegion(5, 7, 10, 10)
    out = crop(gray, region)
    for y in range(10):
        for x in range(10):
            assert out.pixels[y, x] == gray.pixels[7 + y, 5 + x]


def test_crop_color_keeps_channels():
    color = replicate_gray(gradient_gray())
    out = crop(color, CropRegion(2, 3, 4, 5))
    assert isinstance(out, ColorImage)
    assert out.pixels.shape == (5, 4, 3)


def test_crop_composition():
    gray = gradient_gray()
    outer = CropRegion(3, 2, 20, 15)
    inner = CropRegion(4, 5, 6, 7)
    assert crop(crop(gray, outer), inner) == crop(gray, outer.compose(inner))


def test_out_of_bounds_region():
    with pytest.raises(RegionOutOfBoundsError):
        crop(gradient_gray(), CropRegion(30, 0, 5, 5))


def test_zero_size_region():
    with pytest.raises(ZeroSizeRegionError):
        CropRegion(0, 0, 0, 5)


# ---------- corner_regions ----------

def test_broadcast_corners():
    left, right = corner_regions(720, 576, 0.25, 0.25)
    assert (left.x, left.y, left.width, left.height, left.corner) == (0, 0, 180, 144, Corner.UPPER_LEFT)
    assert (right.x, right.y, right.width, right.height, right.corner) == (540, 0, 180, 144, Corner.UPPER_RIGHT)


def test_full_fraction_covers_frame():
    left, right = corner_regions(720, 576, 1.0, 1.0)
    for region in (left, right):
        assert (region.x, region.y, region.width, region.height) == (0, 0, 720, 576)


def test_zero_fraction_rejected():
    with pytest.raises(ZeroSizeRegionError):
        corner_regions(720, 576, 0.0, 0.25)


# ---------- PNM ----------

def test_hand_built_ppm():
    data = b"P6 2 1 255\n" + bytes([1, 2, 3, 4, 5, 6])
    img = read_pnm(data)
    assert isinstance(img, ColorImage)
    assert img.pixels.tolist() == [[[1, 2, 3], [4, 5, 6]]]


def test_header_comments_are_skipped():
    data = b"P5\n# comment line\n2 2\n# another\n255\n" + bytes([0, 64, 128, 255])
    img = read_pnm(data)
    assert isinstance(img, GrayImage)
    assert img.pixels.tolist() == [[0, 64], [128, 255]]


def test_written_bytes_reserialize_identically():
    for img in (gradient_gray(), replicate_gray(gradient_gray(5, 3))):
        data = write_pnm(img)
        assert write_pnm(read_pnm(data)) == data


def test_binary_written_as_gray():
    img = read_pnm(write_pnm(BinaryImage(np.eye(3, dtype=bool))))
    assert img.pixels.tolist() == [[255, 0, 0], [0, 255, 0], [0, 0, 255]]


@pytest.mark.parametrize("magic", [b"P1", b"P2", b"P3", b"P4", b"P7"])
def test_unsupported_format(magic):
    with pytest.raises(UnsupportedFormatError):
        read_pnm(magic + b" 1 1 255\n" + b"\x00")


def test_unsupported_maxval():
    with pytest.raises(UnsupportedMaxvalError):
        read_pnm(b"P5 1 1 65535\n\x00\x00")


def test_truncated_payload():
    with pytest.raises(TruncatedPayloadError):
        read_pnm(b"P6 2 2 255\n" + bytes(5))


def test_malformed_header():
    with pytest.raises(MalformedHeaderError):
        read_pnm(b"P5 x 1 255\n\x00")


def test_async_file_round_trip(tmp_path):
    img = replicate_gray(gradient_gray())
    path = tmp_path / "frame.ppm"
    asyncio.run(save_pnm(path, img))
    assert asyncio.run(load_pnm(path)) == img

import numpy as np
import pytest

from watertrav.extraction import (
    CropSpec,
    DimensionMismatchError,
    EmptyMaskError,
    connected_component_masks,
    extract_instance,
    mask_bbox,
    padded_crop_box,
    split_connected_components,
)

from oracles import flood_components


def _image(w=100, h=100, seed=0):
    rng = np.random.RandomState(seed)
    return rng.randint(0, 255, size=(h, w, 3), dtype=np.uint8)


def _mask(w=100, h=100, box=(40, 50, 59, 69)):
    mask = np.zeros((h, w), dtype=bool)
    x0, y0, x1, y1 = box
    mask[y0 : y1 + 1, x0 : x1 + 1] = True
    return mask


def test_crop_spec_validation():
    with pytest.raises(ValueError):
        CropSpec(padding_ratio=-0.1)
    with pytest.raises(ValueError):
        CropSpec(padding_ratio=2.5)
    with pytest.raises(ValueError):
        CropSpec(max_edge=32)
    with pytest.raises(ValueError):
        CropSpec(highlight="glow")


def test_padding_rule():
    # 20x20 bbox, padding 0.25 -> 5 px per side
    crop = extract_instance(_image(), _mask(), CropSpec(padding_ratio=0.25, highlight="none"))
    assert crop.crop_box == (35, 45, 64, 74)
    assert crop.scale == 1.0


def test_zero_padding_equals_bbox():
    crop = extract_instance(_image(), _mask(), CropSpec(padding_ratio=0.0, highlight="none"))
    assert crop.crop_box == (40, 50, 59, 69)
    assert crop.pixels.shape == (20, 20, 3)


def test_clamping_at_image_edge():
    mask = _mask(box=(0, 30, 19, 49))
    crop = extract_instance(_image(), mask, CropSpec(padding_ratio=0.25, highlight="none"))
    assert crop.crop_box == (0, 25, 24, 54)


def test_crop_contains_instance_bbox():
    rng = np.random.RandomState(4)
    for _ in range(25):
        w, h = rng.randint(40, 120), rng.randint(40, 120)
        x0, y0 = rng.randint(0, w - 5), rng.randint(0, h - 5)
        x1 = rng.randint(x0, min(w - 1, x0 + 30))
        y1 = rng.randint(y0, min(h - 1, y0 + 30))
        mask = _mask(w, h, (x0, y0, x1, y1))
        spec = CropSpec(padding_ratio=float(rng.uniform(0, 2)), highlight="none", max_edge=4096)
        crop = extract_instance(_image(w, h), mask, spec)
        cx0, cy0, cx1, cy1 = crop.crop_box
        assert cx0 <= x0 and cy0 <= y0 and cx1 >= x1 and cy1 >= y1
        assert 0 <= cx0 and 0 <= cy0 and cx1 < w and cy1 < h


def test_background_kept_by_default():
    image = _image()
    crop = extract_instance(image, _mask(), CropSpec(padding_ratio=0.25, highlight="none"))
    x0, y0, x1, y1 = crop.crop_box
    assert np.array_equal(crop.pixels, image[y0 : y1 + 1, x0 : x1 + 1])


def test_outline_marks_boundary_only():
    image = _image()
    spec = CropSpec(padding_ratio=0.25, highlight="outline")
    crop = extract_instance(image, _mask(), spec)
    plain = extract_instance(image, _mask(), CropSpec(padding_ratio=0.25, highlight="none"))
    diff = np.any(crop.pixels != plain.pixels, axis=2)
    assert diff.any()
    changed = np.nonzero(diff)
    # magenta ring sits outside the instance, within 2 px of it
    assert np.all(crop.pixels[changed] == (255, 0, 255))
    mask_crop = _mask()[45:75, 35:65]
    assert not (diff & mask_crop).any()


def test_dim_background_darkens_only_background():
    image = _image()
    crop = extract_instance(image, _mask(), CropSpec(padding_ratio=0.25, highlight="dim_background"))
    x0, y0, x1, y1 = crop.crop_box
    source = image[y0 : y1 + 1, x0 : x1 + 1]
    mask_crop = _mask()[y0 : y1 + 1, x0 : x1 + 1]
    assert np.array_equal(crop.pixels[mask_crop], source[mask_crop])
    assert (crop.pixels[~mask_crop].astype(int) <= source[~mask_crop].astype(int)).all()


def test_downscale_bounds_long_edge():
    image = _image(300, 200)
    mask = _mask(300, 200, (10, 10, 289, 189))
    crop = extract_instance(image, mask, CropSpec(padding_ratio=0.0, highlight="none", max_edge=64))
    assert max(crop.pixels.shape[:2]) == 64
    assert crop.scale == pytest.approx(64 / 280)


def test_extract_deterministic():
    image = _image()
    spec = CropSpec()
    a = extract_instance(image, _mask(), spec)
    b = extract_instance(image, _mask(), spec)
    assert np.array_equal(a.pixels, b.pixels)
    assert a.crop_box == b.crop_box


def test_extract_errors():
    with pytest.raises(EmptyMaskError):
        extract_instance(_image(), np.zeros((100, 100), bool))
    with pytest.raises(DimensionMismatchError):
        extract_instance(_image(), np.zeros((50, 100), bool))


def test_mask_bbox_and_padded_box_helpers():
    mask = _mask(box=(3, 4, 10, 8))
    assert mask_bbox(mask) == (3, 4, 10, 8)
    assert padded_crop_box((3, 4, 10, 8), 0.5, 100, 100) == (0, 0, 14, 12)


def test_split_two_squares():
    mask = np.zeros((50, 50), bool)
    mask[5:15, 5:15] = True
    mask[30:40, 30:40] = True
    instances = split_connected_components(mask, min_area=25)
    assert len(instances) == 2
    assert all(inst.pixel_count == 100 for inst in instances)
    assert instances[0].bbox == (5, 5, 14, 14)
    assert instances[1].bbox == (30, 30, 39, 39)
    assert [inst.id for inst in instances] == ["cc_000", "cc_001"]


def test_split_empty_mask():
    assert split_connected_components(np.zeros((10, 10), bool)) == []


def test_split_diagonal_touch_is_one_component():
    # two blocks sharing only a diagonal corner pair: 8-connectivity joins them
    mask = np.zeros((20, 20), bool)
    mask[2:8, 2:8] = True
    mask[8:14, 8:14] = True
    instances = split_connected_components(mask, min_area=1)
    oracle = flood_components(mask.tolist(), min_area=1)
    assert len(instances) == len(oracle) == 1
    assert instances[0].pixel_count == 72


def test_split_min_area_drops_noise():
    mask = np.zeros((30, 30), bool)
    mask[1:11, 1:11] = True  # 100 px
    mask[20:22, 20:22] = True  # 4 px of noise
    instances = split_connected_components(mask, min_area=25)
    assert len(instances) == 1
    assert instances[0].pixel_count == 100


def test_split_matches_flood_fill_oracle_on_random_masks():
    rng = np.random.RandomState(9)
    for trial in range(20):
        mask = rng.rand(40, 40) > 0.72
        min_area = int(rng.choice([1, 5, 25]))
        instances = split_connected_components(mask, min_area=min_area)
        masks = connected_component_masks(mask, min_area=min_area)
        oracle = flood_components(mask.tolist(), min_area=min_area)
        assert len(instances) == len(oracle)
        impl_sizes = sorted(inst.pixel_count for inst in instances)
        oracle_sizes = sorted(len(comp) for comp in oracle)
        assert impl_sizes == oracle_sizes
        # partition property: kept + dropped pixels = all foreground pixels
        all_components = flood_components(mask.tolist(), min_area=0)
        dropped = sum(len(c) for c in all_components if len(c) < min_area)
        assert sum(impl_sizes) + dropped == int(mask.sum())
        # pairwise disjoint, and each aligned mask matches its instance
        union = np.zeros_like(mask, dtype=int)
        for m in masks:
            union += m.astype(int)
        assert union.max() <= 1
        for inst, m in zip(instances, masks):
            assert inst.pixel_count == int(m.sum())
            assert inst.bbox == mask_bbox(m)

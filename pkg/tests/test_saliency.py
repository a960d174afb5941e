import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sizenet.errors import SizeNetError
from sizenet.pgm import read_pgm
from sizenet.saliency import (
    MaskSet,
    apply_masks,
    chance_level,
    generate_masks,
    localization_score,
    rise_map,
    write_saliency,
)

MASKS = generate_masks(200, (4, 4), 0.5, 16, 16, seed=1)
IMAGE = np.random.default_rng(0).random((16, 16))


def test_same_seed_same_masks():
    again = generate_masks(200, (4, 4), 0.5, 16, 16, seed=1)
    assert np.array_equal(MASKS.masks, again.masks)
    assert not np.array_equal(MASKS.masks, generate_masks(200, (4, 4), 0.5, 16, 16, seed=2).masks)


def test_masks_in_unit_interval_and_shape():
    assert MASKS.masks.shape == (200, 16, 16)
    assert MASKS.masks.min() >= 0 and MASKS.masks.max() <= 1


def test_mean_mask_near_keep_probability():
    masks = generate_masks(2000, (8, 8), 0.5, 32, 32, seed=0)
    assert abs(masks.masks.mean() - 0.5) <= 0.02


def test_all_kept_grid_gives_ones(monkeypatch):
    # force every Bernoulli cell on by making the uniform draws zero
    class AllZero:
        def __init__(self, real):
            self.real = real

        def random(self, shape):
            return np.zeros(shape)

        def integers(self, *a, **k):
            return self.real.integers(*a, **k)

    import sizenet.saliency as sal

    real = np.random.default_rng
    monkeypatch.setattr(sal.np.random, "default_rng", lambda seed: AllZero(real(seed)))
    masks = sal.generate_masks(20, (4, 4), 0.5, 16, 16, seed=0)
    assert np.all(masks.masks == 1.0)


@pytest.mark.parametrize("args", [(0, (4, 4), 0.5, 16, 16), (5, (20, 4), 0.5, 16, 16), (5, (4, 4), 1.0, 16, 16), (5, (4, 4), 0.0, 16, 16)])
def test_invalid_mask_parameters(args):
    with pytest.raises(SizeNetError):
        generate_masks(*args, seed=0)


@pytest.mark.parametrize("c", [0.0, 0.3, 1.0])
def test_constant_score_identity(c):
    sal = rise_map(lambda batch: np.full(len(batch), c), IMAGE, MASKS)
    expected = c * MASKS.masks.mean(axis=0) / MASKS.p_keep
    assert np.allclose(sal, expected, rtol=1e-12, atol=1e-15)
    if c == 0:
        assert np.all(sal == 0)


def _f(batch):
    return batch[:, :4, :4].mean(axis=(1, 2))


def _g(batch):
    return 1 / (1 + np.exp(-batch.sum(axis=(1, 2)) / 50))


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_linear_in_score_function(a, b):
    combined = rise_map(lambda x: a * _f(x) + b * _g(x), IMAGE, MASKS)
    separate = a * rise_map(_f, IMAGE, MASKS) + b * rise_map(_g, IMAGE, MASKS)
    assert np.max(np.abs(combined - separate)) <= 1e-12


def test_nonnegative_for_nonnegative_scores():
    assert rise_map(_g, IMAGE, MASKS).min() >= 0


def test_batching_does_not_change_result():
    assert np.array_equal(rise_map(_g, IMAGE, MASKS, batch_size=7), rise_map(_g, IMAGE, MASKS))


def test_fill_value_used():
    subset = MaskSet(MASKS.masks[:3], MASKS.grid, MASKS.p_keep, MASKS.seed)
    out = apply_masks(np.zeros((16, 16)), subset, fill=0.4)
    assert np.allclose(out, 0.4 * (1 - subset.masks))


def test_image_shape_checked():
    with pytest.raises(SizeNetError):
        rise_map(_g, np.zeros((8, 8)), MASKS)


def test_localization_uniform_map_is_deterministic():
    region = (0, 0, 4, 4)
    # stable tie break picks the first 26 pixels in row-major order: rows 0 and part of row 1
    score = localization_score(np.ones((16, 16)), region, 0.1)
    assert score == pytest.approx(8 / 26)


def test_localization_perfect():
    sal = np.zeros((16, 16))
    sal[4:8, 4:8] = 1.0
    assert localization_score(sal, (4, 4, 4, 4), 0.05) == 1.0


def test_localization_random_maps_near_chance():
    rng = np.random.default_rng(0)
    region = (2, 3, 5, 6)
    scores = [localization_score(rng.random((16, 16)), region, 0.1) for _ in range(1000)]
    p = chance_level((16, 16), region)
    k = 26
    # hypergeometric std of the mean over 1,000 trials
    sd = np.sqrt(p * (1 - p) / k * (256 - k) / 255) / np.sqrt(1000)
    assert abs(np.mean(scores) - p) <= 3 * sd


def test_localization_region_checked():
    with pytest.raises(SizeNetError):
        localization_score(np.ones((8, 8)), (6, 6, 4, 4), 0.1)


def test_write_saliency(tmp_path):
    sal = np.linspace(0, 2.0, 64).reshape(8, 8)
    scale = write_saliency(tmp_path / "m.pgm", sal)
    assert scale == 2.0
    assert (tmp_path / "m.scale.txt").read_text().strip() == "scale = 2.0"
    assert np.allclose(read_pgm(tmp_path / "m.pgm") * scale, sal, atol=scale / 255)

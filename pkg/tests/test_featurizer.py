import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sizenet.errors import FormatError, SizeNetError
from sizenet.featurizer import (
    ProjectionSpec,
    Standardizer,
    featurize_batch,
    featurize_image,
    load_embeddings,
    projection_matrix,
    write_embeddings,
)

SPEC = ProjectionSpec(64, 16, seed=3)
images = arrays(np.float64, (8, 8), elements=st.floats(-1, 1))


def test_deterministic_and_seed_dependent():
    a = featurize_image(np.ones((8, 8)), SPEC)
    b = featurize_image(np.ones((8, 8)), ProjectionSpec(64, 16, seed=3))
    c = featurize_image(np.ones((8, 8)), ProjectionSpec(64, 16, seed=4))
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_matrix_is_read_only():
    with pytest.raises(ValueError):
        projection_matrix(SPEC)[0, 0] = 1.0


@settings(max_examples=100, deadline=None)
@given(images, images, st.floats(-3, 3))
def test_linear(x, y, a):
    lhs = featurize_image(a * x + y, SPEC)
    rhs = a * featurize_image(x, SPEC) + featurize_image(y, SPEC)
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_norm_preserved_on_average():
    spec = ProjectionSpec(1024, 128, seed=0)
    rng = np.random.default_rng(1)
    x = rng.random((200, 32, 32))
    ratio = np.linalg.norm(featurize_batch(x, spec), axis=1) ** 2 / np.linalg.norm(x.reshape(200, -1), axis=1) ** 2
    assert abs(ratio.mean() - 1) < 0.1


def test_batch_matches_single():
    rng = np.random.default_rng(0)
    x = rng.random((5, 8, 8))
    batch = featurize_batch(x, SPEC)
    for i in range(5):
        assert np.allclose(batch[i], featurize_image(x[i], SPEC))


def test_shape_mismatch():
    with pytest.raises(SizeNetError):
        featurize_image(np.zeros((4, 4)), SPEC)


def test_standardizer_constant_column():
    x = np.array([[1.0, 5.0], [3.0, 5.0]])
    z = Standardizer.fit(x).transform(x)
    assert np.allclose(z[:, 0], [-1, 1])
    assert np.allclose(z[:, 1], 0)


def test_embeddings_round_trip(tmp_path):
    table = {"b": np.array([1.5, -2.0]), "a": np.array([0.1, 0.2])}
    write_embeddings(tmp_path / "e.csv", table)
    back = load_embeddings(tmp_path / "e.csv")
    assert list(back) == ["a", "b"]
    assert all(np.array_equal(back[k], table[k]) for k in table)


@pytest.mark.parametrize(
    "text,fragment",
    [("a,1,2\nb,1\n", "expected 2 values"), ("a,1,x\n", "non-numeric"), ("a,1\na,2\n", "duplicate"), ("a,nan\n", "non-finite")],
)
def test_embeddings_malformed(tmp_path, text, fragment):
    path = tmp_path / "e.csv"
    path.write_text(text)
    with pytest.raises(FormatError, match=fragment):
        load_embeddings(path)


def test_embedding_examples(tmp_path):
    path = tmp_path / "e.csv"
    row = ",".join(["0.5"] * 128)
    path.write_text("".join(f"a{i},{row}\n" for i in range(3)))
    assert len(load_embeddings(path)) == 3
    path.write_text(f"a,{row}\nb,{','.join(['0.5'] * 127)}\n")
    with pytest.raises(FormatError) as info:
        load_embeddings(path)
    assert info.value.line_no == 2


def test_zero_image_and_cue_difference():
    spec = ProjectionSpec(1024, 128, seed=0)
    assert np.all(featurize_image(np.zeros((32, 32)), spec) == 0)
    a = np.full((32, 32), 0.02)
    b = a.copy()
    b[8:16, 8:16] = 0.9
    assert not np.array_equal(featurize_image(a, spec), featurize_image(b, spec))

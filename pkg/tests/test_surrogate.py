import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morsedyn.errors import ValidationError
from morsedyn.grid import Box
from morsedyn.surrogate import (
    KernelConfig,
    SamplePair,
    SurrogateModel,
    VarianceConfig,
    cell_samples,
    fit,
    image_box,
    read_pairs_csv,
    write_pairs_csv,
)


def double_well(x):
    return x - 0.2 * 4.0 * x * (x * x - 1.0)


@pytest.fixture(scope="module")
def half_model():
    x = np.linspace(-1, 1, 20)[:, None]
    return fit((x, x / 2))


def test_two_point_interpolation():
    pairs = [SamplePair((0.0,), (0.5,)), SamplePair((1.0,), (0.7,))]
    m = fit(pairs, KernelConfig(jitter=1e-8))
    mean, std = m.predict([0.0])
    assert abs(mean[0] - 0.5) < 1e-3
    assert std[0] < 1e-3


def test_symmetric_data_zero_at_origin():
    a = 0.8
    m = fit([SamplePair((-1.0,), (-a,)), SamplePair((1.0,), (a,))])
    assert m.prior_mean[0] == 0.0
    assert abs(m.predict([0.0])[0][0]) < 1e-15


def test_linear_map_recovered(half_model):
    t = np.linspace(-1, 1, 2001)[:, None]
    assert np.max(np.abs(half_model.mean_map(t) - t / 2)) < 1e-2


def test_two_point_closed_form():
    # Hand-derived: R = [[1, rho], [rho, 1]] with rho = exp(-1/2) since ell = |x2 - x1|.
    # (R + jI) has eigenvalues 1 + j +- rho on (1, 1) and (1, -1).
    x1, x2, y1, y2, j = 0.3, 1.1, -0.2, 0.6, 1e-6
    m = fit([SamplePair((x1,), (y1,)), SamplePair((x2,), (y2,))], KernelConfig(jitter=j))
    mu, delta, s2 = (y1 + y2) / 2, (y1 - y2) / 2, ((y1 - y2) / 2) ** 2
    rho = math.exp(-0.5)
    q = x1 + 0.25 * (x2 - x1)
    r1, r2 = math.exp(-0.5 * 0.25**2), math.exp(-0.5 * 0.75**2)
    mean = mu + delta * (r1 - r2) / (1 + j - rho)
    quad = (r1 + r2) ** 2 / (2 * (1 + j + rho)) + (r1 - r2) ** 2 / (2 * (1 + j - rho))
    std = math.sqrt(s2 * (1 + j - quad))
    got_mean, got_std = m.predict([q])
    assert got_mean[0] == pytest.approx(mean, rel=1e-9)
    assert got_std[0] == pytest.approx(std, rel=1e-6)
    mid_mean, _ = m.predict([(x1 + x2) / 2])
    assert mid_mean[0] == pytest.approx(mu, abs=1e-12)


def test_prior_reversion(half_model):
    mean, std = half_model.predict([50.0])
    s2 = half_model.signal_variance[0]
    assert abs(std[0] - math.sqrt(s2 + half_model.noise_variance[0])) < 1e-6
    assert mean[0] == pytest.approx(half_model.prior_mean[0], abs=1e-12)


def test_interpolation_property():
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, size=(40, 2))
    y = np.column_stack([np.sin(x[:, 0]) + x[:, 1], np.cos(x[:, 1])])
    m = fit((x, y), KernelConfig(jitter=1e-8))
    mean, _ = m.predict_many(x)
    assert np.max(np.abs(mean - y)) < 1e-3


def test_std_nonnegative(half_model):
    q = np.random.default_rng(1).uniform(-5, 5, size=(10_000, 1))
    _, std = half_model.predict_many(q)
    assert np.all(std >= 0)


def test_validation_errors():
    with pytest.raises(ValidationError):
        fit([SamplePair((0.0,), (1.0,))])
    with pytest.raises(ValidationError):
        fit([SamplePair((0.0,), (1.0,)), SamplePair((0.0,), (2.0,))])
    with pytest.raises(ValidationError):
        SamplePair((0.0, 1.0), (1.0,))
    with pytest.raises(ValidationError):
        fit([SamplePair((0.0,), (1.0,)), SamplePair((1.0, 2.0), (1.0, 2.0))])
    m = fit([SamplePair((0.0,), (1.0,)), SamplePair((1.0,), (2.0,))])
    with pytest.raises(ValidationError):
        m.predict([0.0, 1.0])
    with pytest.raises(ValidationError):
        VarianceConfig(z=-1)
    with pytest.raises(ValidationError):
        VarianceConfig(samples_per_cell=0)


def test_constant_model_point_box():
    x = np.linspace(0, 1, 5)[:, None]
    m = fit((x, np.full_like(x, 0.3)))
    b = image_box(m, Box((0.2,), (0.4,)), VarianceConfig(z=0.0))
    assert b.lower == b.upper == (0.3,)


def test_image_box_linear(half_model):
    b = image_box(half_model, Box((0.0,), (1.0,)), VarianceConfig(z=0.0, epsilon=0.0, samples_per_cell=65))
    assert b.lower[0] <= 0.0 + 1e-2 and abs(b.lower[0]) < 1e-2
    assert abs(b.upper[0] - 0.5) < 1e-2


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.0, 0.9), st.floats(0.01, 1.0), st.floats(0.0, 4.0))
def test_image_box_monotone_in_z(a, w, z):
    x = np.linspace(-1, 1, 20)[:, None]
    m = fit((x, double_well(x)))
    cell = Box((a,), (a + w,))
    small = image_box(m, cell, VarianceConfig(z=z))
    big = image_box(m, cell, VarianceConfig(z=2 * z + 0.1))
    assert big.contains_box(small)


def test_image_box_monotone_in_cell(half_model):
    cfg = VarianceConfig(z=0.0)
    parent = Box((-0.5,), (0.5,))
    child = Box((-0.5,), (0.0,))
    assert image_box(half_model, parent, cfg).contains_box(image_box(half_model, child, cfg))


def test_cell_samples_scheme():
    pts = cell_samples(Box((0.0, 0.0), (1.0, 1.0)), 13)
    assert pts.shape == (13, 2)
    assert {tuple(p) for p in pts[:4]} == {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert {tuple(p) for p in pts[4:]} == {(a, b) for a in (0.25, 0.5, 0.75) for b in (0.25, 0.5, 0.75)}
    assert cell_samples(Box((0.0,), (1.0,)), 1).tolist() == [[0.5]]
    assert VarianceConfig().n_samples(1) == 5
    assert VarianceConfig().n_samples(4) == 64


def test_coverage_double_well():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.6, 1.6, size=(60, 1))
    m = fit((x, double_well(x)))
    h = rng.uniform(-1.6, 1.6, size=(1000, 1))
    assert m.coverage(h, double_well(h), 3.0) >= 0.95


def test_determinism_and_serialisation(tmp_path):
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, size=(30, 2))
    y = x[:, ::-1] * 0.5
    a, b = fit((x, y)), fit((x, y))
    cell = Box((-0.2, 0.1), (0.3, 0.4))
    assert image_box(a, cell) == image_box(b, cell)
    text = json.dumps(a.to_dict())
    c = SurrogateModel.from_dict(json.loads(text))
    q = rng.uniform(-1, 1, size=(50, 2))
    assert np.array_equal(a.predict_many(q)[0], c.predict_many(q)[0])
    assert np.allclose(a.predict_many(q)[1], c.predict_many(q)[1], rtol=0, atol=0)


def test_pairs_csv_round_trip(tmp_path):
    pairs = [SamplePair((0.1, -0.2), (0.3, 0.4)), SamplePair((1.0, 2.0), (3.0, 4.5))]
    path = tmp_path / "pairs.csv"
    write_pairs_csv(path, pairs)
    assert path.read_text().splitlines()[0] == "x_1,x_2,y_1,y_2"
    assert read_pairs_csv(path) == pairs
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValidationError):
        read_pairs_csv(bad)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebmorph.curve import PhasedCurve
from ebmorph.errors import EmptyCurve, FormatError
from ebmorph.imaging import (
    HexGrid,
    HexLattice,
    curve_to_image,
    hexbin_counts,
    pixel_bins,
    pixel_centers,
    quantize,
    rasterize,
    read_pgm,
    to_polar,
    write_pgm,
)
from ebmorph.synth import Morphology, generate_curve, sample_binary_params


def brute_nearest(lattice: HexLattice, xy: np.ndarray) -> np.ndarray:
    """Scan every centre of both lattices; the first minimum wins (A precedes B)."""
    centers = lattice.centers
    out = np.empty(len(xy), dtype=np.int64)
    for start in range(0, len(xy), 2048):
        chunk = xy[start:start + 2048]
        d = ((chunk[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        out[start:start + 2048] = np.argmin(d, axis=1)
    return out


def curve(phases, fluxes):
    return PhasedCurve(np.asarray(phases, float), np.asarray(fluxes, float))


# --- to_polar ------------------------------------------------------------------


def test_polar_examples():
    xy = to_polar(curve([0.0, 0.25], [1.0, 0.5]))
    np.testing.assert_allclose(xy[0], [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(xy[1], [0.2, 0.0], atol=1e-15)


def test_polar_constant_curve():
    xy = to_polar(curve([0.0, 0.5], [0.7, 0.7]))
    np.testing.assert_allclose(xy, [[0, 1], [0, -1]], atol=1e-15)


def test_polar_is_clockwise():
    xy = to_polar(curve([0.0, 0.125, 0.25, 0.5, 0.75], [1, 1, 1, 1, 0.5]))
    # +y, then towards +x, then -y, then -x
    assert xy[1, 0] > 0 and xy[1, 1] > 0
    np.testing.assert_allclose(xy[3], [0, -1], atol=1e-15)
    assert xy[4, 0] == pytest.approx(-0.2)


def test_polar_empty():
    with pytest.raises(EmptyCurve):
        to_polar(curve([], []))


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 200))
def test_polar_radius_bounds(seed, n):
    rng = np.random.default_rng(seed)
    xy = to_polar(curve(np.sort(rng.uniform(0, 1, n)), rng.normal(1, 0.3, n)))
    r = np.hypot(xy[:, 0], xy[:, 1])
    assert np.all(r >= 0.2 - 1e-12) and np.all(r <= 1.0 + 1e-9)
    assert np.all(np.abs(xy) <= 1.0 + 1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), delta=st.floats(0, 1, exclude_max=True))
def test_phase_rotation_equivariance(seed, delta):
    rng = np.random.default_rng(seed)
    p = np.sort(rng.uniform(0, 1, 40))
    f = rng.uniform(0.5, 1, 40)
    base = to_polar(curve(p, f))
    rotated_p = np.mod(p + delta, 1.0)
    order = np.argsort(rotated_p, kind="stable")
    rotated = to_polar(curve(rotated_p[order], f[order]))
    a = -2 * np.pi * delta  # clockwise by 2*pi*delta
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    np.testing.assert_allclose(rotated, (base @ rot.T)[order], atol=1e-12)


# --- lattice and hexbin --------------------------------------------------------------


def test_lattice_geometry():
    lat = HexLattice(24)
    assert lat.dx == pytest.approx(2 / 24)
    assert lat.dy == pytest.approx(lat.dx * math.sqrt(3) / 2)
    c = lat.centers
    assert c.shape == (lat.n_bins, 2)
    np.testing.assert_allclose(c[0], [-1, -1])
    # lattice B starts after all of A, offset by half a cell in both axes
    n_a = math.prod(lat.shape_a)
    np.testing.assert_allclose(c[n_a], [-1 + lat.dx / 2, -1 + lat.dy / 2])
    # the lattices cover the domain
    assert c[:, 0].max() >= 1 and c[:, 1].max() >= 1


def test_point_on_center():
    lat = HexLattice(24)
    target = 24 * 3 + 5
    grid = hexbin_counts(lat.centers[target][None, :], 24)
    assert grid.nonzero() == {target: 1}
    assert grid.total == 1


def test_coincident_points():
    grid = hexbin_counts(np.array([[0.3, -0.4], [0.3, -0.4]]), 16)
    assert list(grid.nonzero().values()) == [2]


def test_tie_goes_to_lattice_a():
    lat = HexLattice(8)
    a = lat.centers[0]
    n_a = math.prod(lat.shape_a)
    b = lat.centers[n_a]
    mid = (a + b) / 2
    assert lat.assign(mid[None, :])[0] == 0


@pytest.mark.parametrize("g", [8, 20, 24, 48])
def test_random_points_match_exhaustive_oracle(g):
    rng = np.random.default_rng(g)
    xy = rng.uniform(-1, 1, (1000, 2))
    lat = HexLattice(g)
    np.testing.assert_array_equal(lat.assign(xy), brute_nearest(lat, xy))


@pytest.mark.parametrize("g", [8, 24, 48])
def test_lattice_and_boundary_points_match_oracle(g):
    lat = HexLattice(g)
    rng = np.random.default_rng(100 + g)
    # exact centres, midpoints between neighbours, and jittered edges
    c = lat.centers
    pairs = rng.integers(0, len(c), (2000, 2))
    mids = (c[pairs[:, 0]] + c[pairs[:, 1]]) / 2
    pts = np.vstack([c, mids, mids + rng.normal(0, 1e-12, mids.shape)])
    pts = pts[np.all(np.abs(pts) <= 1, axis=1)]
    np.testing.assert_array_equal(lat.assign(pts), brute_nearest(lat, pts))


@pytest.mark.parametrize("g", [8, 24, 48])
def test_pixel_assignment_matches_oracle(g):
    lat = HexLattice(g)
    expected = brute_nearest(lat, pixel_centers(224)).reshape(224, 224)
    np.testing.assert_array_equal(pixel_bins(g, 224), expected)


def test_pixel_centers_orientation():
    pc = pixel_centers(224).reshape(224, 224, 2)
    assert pc[0, 0, 0] == pytest.approx(-1 + 1 / 224)
    assert pc[0, 0, 1] == pytest.approx(1 - 1 / 224)  # row 0 at the top
    assert pc[-1, -1, 1] == pytest.approx(-1 + 1 / 224)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(0, 500), g=st.integers(4, 60))
def test_count_conservation(seed, n, g):
    xy = np.random.default_rng(seed).uniform(-1, 1, (n, 2))
    grid = hexbin_counts(xy, g)
    assert grid.total == n
    assert np.all(grid.counts >= 0)


# --- rasterize ---------------------------------------------------------------------------


def test_empty_grid_is_black():
    lat = HexLattice(24)
    img = rasterize(HexGrid(lat, np.zeros(lat.n_bins, dtype=np.int64)))
    assert img.shape == (224, 224)
    assert not img.any()


def test_single_bin():
    lat = HexLattice(24)
    counts = np.zeros(lat.n_bins, dtype=np.int64)
    target = lat.assign(np.array([[0.1, 0.5]]))[0]
    counts[target] = 3
    img = rasterize(HexGrid(lat, counts))
    lit = img == 1.0
    assert lit.any()
    np.testing.assert_array_equal(lit, pixel_bins(24) == target)
    assert set(np.unique(img)) == {0.0, 1.0}


def test_intensity_is_count_over_max():
    lat = HexLattice(12)
    rng = np.random.default_rng(0)
    counts = rng.integers(0, 5, lat.n_bins)
    img = rasterize(HexGrid(lat, counts))
    np.testing.assert_array_equal(img, counts[pixel_bins(12)] / counts.max())
    assert img.min() >= 0 and img.max() <= 1


def test_equal_counts_equal_images():
    xy = np.random.default_rng(1).uniform(-1, 1, (60, 2))
    a = rasterize(hexbin_counts(xy, 24))
    b = rasterize(hexbin_counts(xy[::-1], 24))
    np.testing.assert_array_equal(a, b)


def test_curve_image_symmetry_and_determinism():
    rng = np.random.default_rng(3)
    for morph in Morphology:
        params = sample_binary_params(morph, rng)
        while True:
            try:
                c, _ = generate_curve(params)
                break
            except ValueError:
                params = sample_binary_params(morph, rng)
        img = curve_to_image(c)
        np.testing.assert_array_equal(img, curve_to_image(c))
        # mirror symmetric curve -> image symmetric about x = 0, up to one column
        mirrored = img[:, ::-1]
        diff = img != mirrored
        if diff.any():
            shifted_l = img[:, 1:] != mirrored[:, :-1]
            shifted_r = img[:, :-1] != mirrored[:, 1:]
            ok = ~diff
            ok[:, 1:] |= ~shifted_l
            ok[:, :-1] |= ~shifted_r
            assert ok.all()


def test_hundred_point_curve_count():
    params = sample_binary_params(Morphology.OVERCONTACT, np.random.default_rng(2))
    c, _ = generate_curve(params)
    grid = hexbin_counts(to_polar(c), 24)
    assert grid.total == 100


# --- PGM ------------------------------------------------------------------------------


def test_pgm_roundtrip(tmp_path):
    img = np.random.default_rng(0).uniform(0, 1, (224, 224))
    write_pgm(tmp_path / "x.pgm", img)
    raw = (tmp_path / "x.pgm").read_bytes()
    assert raw.startswith(b"P5\n224 224\n255\n")
    assert len(raw) == len(b"P5\n224 224\n255\n") + 224 * 224
    back = read_pgm(tmp_path / "x.pgm", raw_bytes=True)
    np.testing.assert_array_equal(back, quantize(img))
    np.testing.assert_array_equal(read_pgm(tmp_path / "x.pgm"), quantize(img) / 255.0)


def test_quantize_rounding():
    np.testing.assert_array_equal(quantize(np.array([0.0, 1.0, 0.5, 1 / 3, 2 / 3])), [0, 255, 128, 85, 170])


def test_pgm_rejects_other_formats(tmp_path):
    (tmp_path / "bad.pgm").write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "bad.pgm")

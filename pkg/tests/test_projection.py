import numpy as np
import pytest

from dualmapper.geodata import METERS_PER_DEGREE, GeoRegion, project, unproject

from oracles import haversine_offset_px

PORTO = GeoRegion(41.2370, -8.6900, width_px=20000, height_px=20000)


def test_origin_is_fixed_point():
    assert project(PORTO.origin_lat, PORTO.origin_lon, PORTO) == (0.0, 0.0)


def test_224m_south_is_row_224():
    lat = PORTO.origin_lat - 224.0 / METERS_PER_DEGREE
    row, col = project(lat, PORTO.origin_lon, PORTO)
    assert row == pytest.approx(224.0, abs=1e-9)
    assert col == 0.0


def test_resolution_scales_pixels():
    region = GeoRegion(PORTO.origin_lat, PORTO.origin_lon, 100, 100, resolution=2.0)
    lat = PORTO.origin_lat - 224.0 / METERS_PER_DEGREE
    assert project(lat, PORTO.origin_lon, region)[0] == pytest.approx(112.0)


def test_matches_haversine_over_20km(rng):
    lats = PORTO.origin_lat - rng.uniform(0, 20000, 500) / METERS_PER_DEGREE
    lons = PORTO.origin_lon + rng.uniform(0, 20000, 500) / (METERS_PER_DEGREE * np.cos(np.radians(PORTO.origin_lat)))
    rows, cols = project(lats, lons, PORTO)
    for lat, lon, r, c in zip(lats, lons, rows, cols):
        er, ec = haversine_offset_px(lat, lon, PORTO.origin_lat, PORTO.origin_lon)
        assert abs(r - er) < 0.5
        assert abs(c - ec) < 0.5


def test_out_of_region_points_are_returned():
    row, col = project(PORTO.origin_lat + 0.01, PORTO.origin_lon - 0.01, PORTO)
    assert row < 0 and col < 0


def test_unproject_roundtrip(rng):
    rows = rng.uniform(-100, 5000, 50)
    cols = rng.uniform(-100, 5000, 50)
    lat, lon = unproject(rows, cols, PORTO)
    r2, c2 = project(lat, lon, PORTO)
    np.testing.assert_allclose(r2, rows, atol=1e-6)
    np.testing.assert_allclose(c2, cols, atol=1e-6)


@pytest.mark.parametrize("kw", [dict(width_px=0), dict(height_px=-1), dict(resolution=0.0)])
def test_invalid_region(kw):
    args = dict(origin_lat=0.0, origin_lon=0.0, width_px=10, height_px=10, resolution=1.0)
    args.update(kw)
    with pytest.raises(ValueError):
        GeoRegion(**args)

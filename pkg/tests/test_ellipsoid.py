import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spqc.ellipsoid import (Box, SafeEllipsoid, SafetyFault, Sphere, compute_safe_ellipsoid,
                            obstacle_from_dict, sense_obstacles)

Z3 = np.zeros(3)


def test_sensing_examples():
    near = Sphere([3.0, 0, 0], 1.5)
    far = Sphere([10.0, 0, 0], 1.0)
    assert sense_obstacles([near, far], Z3, 2.0) == [near]
    assert sense_obstacles([], Z3, 2.0) == []


def test_no_obstacles_gives_sensing_ball():
    p = np.array([1.0, -2.0, 0.5])
    ell = compute_safe_ellipsoid(p, [], 2.0)
    assert np.array_equal(ell.C, 2 * np.eye(3)) and np.array_equal(ell.zeta, p)


@pytest.mark.parametrize("d,r", [(1.0, 0.3), (1.5, 0.5), (0.6, 0.2)])
def test_single_sphere_containment(d, r, rng):
    ob = Sphere([d, 0, 0], r)
    ell = compute_safe_ellipsoid(Z3, [ob], 2.0)
    # +x extent of the ellipsoid is zeta_x + |C e_x|
    assert ell.zeta[0] + np.linalg.norm(ell.C[0]) <= d - r + 1e-12
    assert not np.any(ob.contains(ell.sample_boundary(10_000, rng)))


def test_symmetric_obstacles_keep_center_on_plane():
    obs = [Sphere([1.0, 0, 0], 0.3), Sphere([-1.0, 0, 0], 0.3)]
    ell = compute_safe_ellipsoid(Z3, obs, 2.0)
    assert abs(ell.zeta[0]) < 1e-9


def test_inside_obstacle_raises():
    with pytest.raises(SafetyFault):
        compute_safe_ellipsoid(Z3, [Sphere([0.1, 0, 0], 0.3)], 2.0)


def _scene(seed):
    r = np.random.default_rng(seed)
    obs = []
    for _ in range(r.integers(1, 5)):
        if r.random() < 0.5:
            c = r.uniform(-2, 2, 3)
            if np.linalg.norm(c) > 0.5:
                obs.append(Sphere(c, r.uniform(0.1, min(1.0, np.linalg.norm(c) - 0.3))))
        else:
            lo = r.uniform(-2, 2, 3)
            hi = lo + r.uniform(0.1, 1.0, 3)
            b = Box(lo, hi)
            if b.distance(Z3) > 0.2:
                obs.append(b)
    axis = r.normal(size=3)
    axis[2] = abs(axis[2]) + 0.5
    return obs, axis / np.linalg.norm(axis)


@given(st.integers(0, 2 ** 31), st.booleans())
@settings(max_examples=60, deadline=None)
def test_random_scenes_sound(seed, lifted):
    obs, axis = _scene(seed)
    sensed = sense_obstacles(obs, Z3, 2.0)
    hist = []
    kw = dict(axis=axis, lift=0.1) if lifted else {}
    ell = compute_safe_ellipsoid(Z3, sensed, 2.0, history=hist, **kw)
    pts = ell.sample_interior(10_000, np.random.default_rng(seed))
    for ob in sensed:
        assert not np.any(ob.contains(pts))
    # volume-monotone rounds, vehicle kept near the center
    assert all(b >= a * (1 - 1e-9) for a, b in zip(hist, hist[1:]))
    if sensed:
        assert np.linalg.norm(ell.normalized(Z3)) <= 0.5 + 1e-6
    if sensed and lifted:
        assert (ell.zeta - Z3) @ axis > 0


def test_lift_positions_center_along_axis():
    ell = compute_safe_ellipsoid(Z3, [Sphere([1.2, 0, 0], 0.3)], 2.0, axis=[0, 0, 1], lift=0.1)
    assert ell.zeta[2] >= 0.1 * (1 - 1e-6)


def test_ellipsoid_samplers(rng):
    ell = SafeEllipsoid(np.diag([1.0, 2.0, 0.5]), [1.0, 0, 0])
    inner = np.linalg.norm((ell.sample_interior(1000, rng) - ell.zeta) @ np.linalg.inv(ell.C).T, axis=1)
    outer = np.linalg.norm((ell.sample_boundary(1000, rng) - ell.zeta) @ np.linalg.inv(ell.C).T, axis=1)
    assert np.all(inner <= 1 + 1e-12) and np.allclose(outer, 1.0)
    assert ell.volume == pytest.approx(4 / 3 * np.pi)


def test_box_geometry():
    b = Box([1.0, -1.0, -1.0], [2.0, 1.0, 1.0])
    assert b.distance(Z3) == pytest.approx(1.0)
    assert b.distance([1.5, 0, 0]) < 0
    assert b.contains([[1.5, 0, 0], [0.5, 0, 0]]).tolist() == [True, False]


def test_sphere_motion():
    s = Sphere([0, 0, 0], 0.3, [0.78, 0, 0])
    assert np.allclose(s.moved(1.0).center, [0.78, 0, 0])
    assert np.allclose(s.moved(0.5).moved(0.5).center, s.moved(1.0).center)
    assert not Sphere(Z3, 1.0).dynamic


def test_obstacle_dict_round_trip():
    for ob in (Sphere([1, 2, 3], 0.5, [0.1, 0, 0], "a"), Box([0, 0, 0], [1, 1, 1])):
        back = obstacle_from_dict(ob.to_dict())
        assert type(back) is type(ob)
        assert back.distance([3.0, -1.0, 0.5]) == ob.distance([3.0, -1.0, 0.5])

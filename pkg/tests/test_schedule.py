import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from svdc.roi import TimestepMap
from svdc.schedule import build_ddim_grid, build_plan, build_schedule, resample_trajectory

# closed-form cosine value evaluated with mpmath at 40 digits
ALPHA_500 = 0.70274005894116902358
ALPHA_1 = 0.99997935767453631082


@pytest.mark.parametrize("kind", ["cosine", "scaled_linear"])
def test_vp_identity_and_boundary(kind):
    s = build_schedule(kind, 1000)
    assert s.alphas[0] == 1.0 and s.sigmas[0] == 0.0
    np.testing.assert_allclose(s.alphas ** 2 + s.sigmas ** 2, 1.0, atol=1e-14)
    assert np.all(np.diff(s.alphas) < 0)
    assert s.alphas[-1] > 0


def test_cosine_pinned_values(cosine):
    assert cosine.alphas[500] == pytest.approx(ALPHA_500, abs=1e-14)
    assert cosine.alphas[1] == pytest.approx(ALPHA_1, abs=1e-14)


def test_scaled_linear_matches_cumprod():
    s = build_schedule("scaled_linear", 1000)
    betas = [(math.sqrt(0.00085) + i * (math.sqrt(0.012) - math.sqrt(0.00085)) / 999) ** 2 for i in range(1000)]
    abar = math.prod(1 - b for b in betas[:10])
    assert s.alphas[10] ** 2 == pytest.approx(abar, rel=1e-12)


def test_schedule_errors():
    with pytest.raises(ValueError):
        build_schedule("linear", 1000)
    with pytest.raises(ValueError):
        build_schedule("cosine", 1)


def test_ddim_grid_worked_values(cosine):
    g = build_ddim_grid(50, cosine)
    assert g.indices.tolist() == list(range(981, 0, -20))
    assert build_ddim_grid(1000, cosine).indices.tolist() == list(range(1000, 0, -1))
    assert build_ddim_grid(1, cosine).indices.tolist() == [1]
    assert g.start_index(4) == 61 and g.start_index(7) == 121 and g.start_index(50) == 981
    with pytest.raises(ValueError):
        build_ddim_grid(1001, cosine)
    with pytest.raises(ValueError):
        g.start_index(0)


def test_resample_worked_values():
    assert resample_trajectory(61, 7).tolist() == [61, 51, 41, 31, 21, 11, 1]
    assert resample_trajectory(61, 4).tolist() == [61, 41, 21, 1]
    assert resample_trajectory(17, 1).tolist() == [17]
    with pytest.raises(ValueError):
        resample_trajectory(0, 3)


@given(st.integers(1, 1000), st.integers(1, 60))
def test_resample_properties(start, tau):
    d = resample_trajectory(start, tau)
    assert len(d) == tau and d[0] == start
    if tau > 1:
        assert d[-1] == 1
    assert np.all(np.diff(d) <= 0)
    if start >= tau:
        assert np.all(np.diff(d) < 0)
    # exact rounding of the evenly spaced real-valued trajectory
    if tau > 1:
        exact = [start - k * (start - 1) / (tau - 1) for k in range(tau)]
        assert all(abs(a - b) <= 0.5 + 1e-9 for a, b in zip(d, exact))


def test_constant_plan_is_plain_ddim(cosine, grid50):
    for t in (1, 4, 33, 50):
        plan = build_plan(TimestepMap.constant(t, 5, 3, 50), grid50, cosine)
        assert plan.tau == t
        assert plan.trajectories[t].tolist() == grid50.indices[50 - t:].tolist()


def test_two_level_plan(cosine, grid50):
    v = np.full((4, 4), 7)
    v[:2] = 4
    plan = build_plan(TimestepMap(v, 50), grid50, cosine)
    assert plan.tau == 7
    assert plan.trajectories[4].tolist() == [61, 51, 41, 31, 21, 11, 1]
    assert plan.trajectories[7].tolist() == [121, 101, 81, 61, 41, 21, 1]
    assert plan.index_maps[:, 0, 0].tolist() == [61, 51, 41, 31, 21, 11, 1]
    a, s = plan.next_alpha_sigma(6)
    assert np.all(a == 1) and np.all(s == 0)


@given(st.lists(st.integers(1, 50), min_size=1, max_size=30))
def test_plan_terminal_alpha(levels):
    s = build_schedule("cosine", 1000)
    g = build_ddim_grid(50, s)
    plan = build_plan(np.asarray(levels).reshape(1, -1), g, s)
    assert plan.tau == max(levels)
    assert np.all(plan.alpha_maps[-1] == s.alphas[1])
    assert np.all(plan.index_maps[0] == g.start_index(np.asarray(levels)))
    assert not plan.alpha_maps.flags.writeable

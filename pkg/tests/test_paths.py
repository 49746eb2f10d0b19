import math

import numpy as np
import pytest

from epbtopo.errors import DegenerateLoop, RefinementDiverged, UnknownLoop
from epbtopo.invariants import analyze_loop, discriminant_number, trace_eigensystem
from epbtopo.model import ChainParamPoint, ModelKind, ParamPoint, discriminant_many
from epbtopo.paths import (
    LoopSpec,
    SampledLoop,
    builtin_loop,
    builtin_names,
    loop_from_dict,
    loop_to_dict,
    read_loop_file,
    refine_adaptive,
    reversed_loop,
    sample_loop,
    validate_loop,
    write_loop_file,
)

TABLE_S1 = [(0.14, -0.28), (0.10, 0.00), (0.13, 0.36), (-0.44, 0.37), (-1.00, 0.37), (-1.00, 0.01), (-1.00, -0.26), (-0.45, -0.28)]


def square(center=(-1.0, 0.0, 0.0), r=0.1, n=10, axes=(1, 2)):
    a = []
    for s1, s2 in [(-1, -1), (1, -1), (1, 1), (-1, 1)]:
        x = list(center)
        x[axes[0]] += s1 * r
        x[axes[1]] += s2 * r
        a.append(ParamPoint(*x))
    return LoopSpec("square", "parabola", a, subdivisions_per_segment=n)


def test_sample_counts_and_closure():
    lp = sample_loop(square(n=10))
    assert len(lp) == 40
    assert not np.allclose(lp.coords[0], lp.coords[-1])
    np.testing.assert_array_equal(lp.coords[::10], square().anchor_array())


def test_sampled_points_lie_on_segments():
    spec = builtin_loop("loop-b")
    lp = sample_loop(spec, 16)
    a = spec.anchor_array()
    for k in range(len(a)):
        seg = lp.coords[16 * k : 16 * (k + 1)]
        d = np.roll(a, -1, axis=0)[k] - a[k]
        t = np.arange(16) / 16
        np.testing.assert_allclose(seg, a[k] + t[:, None] * d, rtol=0, atol=1e-15)


def test_deterministic():
    a = sample_loop(builtin_loop("loop-a-prime"), 32).coords
    b = sample_loop(builtin_loop("loop-a-prime"), 32).coords
    assert a.tobytes() == b.tobytes()


def test_table_s1_anchors():
    lp = sample_loop(builtin_loop("loop-a"), 1)
    assert len(lp) == 8
    np.testing.assert_array_equal(lp.coords[:, :2], TABLE_S1)
    np.testing.assert_array_equal(lp.coords[:, 2], 0.0)
    assert lp.points[0] == ParamPoint(0.14, -0.28, 0.0)


def test_builtin_examples():
    b = builtin_loop("loop-b").anchors
    assert (b[0].zeta, b[0].xi_i, b[0].xi_r) == (0.65, -0.50, 0.0)
    bp = builtin_loop("loop-b-prime").anchors
    assert (bp[4].zeta, bp[4].xi_i, bp[4].xi_r) == (-0.72, 0.51, -0.24)
    assert all(p.xi_r == -0.24 for p in builtin_loop("loop-a-prime").anchors)
    assert all(p.xi_r == 0.0 for p in b)
    assert {"loop-a", "loop-b", "loop-a-prime", "loop-b-prime", "chain-green", "chain-blue"} <= set(builtin_names())
    for name in builtin_names():
        spec = builtin_loop(name)
        spec.validate()
        assert spec.name == name
    green = builtin_loop("chain-green")
    assert green.kind is ModelKind.CHAIN
    a = green.anchor_array()
    assert np.all(a[:, 0] == 0) and np.max(np.abs(a[:, 1:])) == 0.5
    assert green.subdivisions_per_segment == 100


def test_unknown_loop():
    with pytest.raises(UnknownLoop, match="available"):
        builtin_loop("loop-z")


def test_degenerate_loops():
    two = LoopSpec("two", "parabola", [ParamPoint(0, 0, 0), ParamPoint(1, 0, 0)])
    with pytest.raises(DegenerateLoop, match="at least 3"):
        sample_loop(two)
    dup = LoopSpec("dup", "parabola", [ParamPoint(0, 0, 0), ParamPoint(0, 0, 0), ParamPoint(1, 0, 0)])
    with pytest.raises(DegenerateLoop, match="coincide"):
        sample_loop(dup)
    wrap = LoopSpec("wrap", "parabola", [ParamPoint(0, 0, 0), ParamPoint(1, 0, 0), ParamPoint(0, 0, 0)])
    with pytest.raises(DegenerateLoop):
        sample_loop(wrap)
    open_ = LoopSpec("open", "parabola", square().anchors, closed=False)
    with pytest.raises(DegenerateLoop, match="not closed"):
        sample_loop(open_)
    with pytest.raises(DegenerateLoop):
        sample_loop(square(), 0)


def test_reversed_loop_keeps_start():
    lp = sample_loop(square(n=3))
    rv = reversed_loop(lp)
    np.testing.assert_array_equal(rv.coords[0], lp.coords[0])
    np.testing.assert_array_equal(rv.coords[1], lp.coords[-1])
    np.testing.assert_array_equal(reversed_loop(rv).coords, lp.coords)


def _max_arg_step(loop, c):
    d = discriminant_many(loop.kind, c, loop.coords)
    return np.max(np.abs(np.angle(np.roll(d, -1) / d)))


def test_refine_far_from_ep_unchanged(c):
    lp = sample_loop(square(n=20))
    out = refine_adaptive(lp, c)
    np.testing.assert_array_equal(out.coords, lp.coords)
    assert out.refine_depth == 0


def test_refine_bounds_arg_step(c):
    tri = [ParamPoint(0.3, 0.0, 0.0), ParamPoint(-0.15, 0.26, 0.0), ParamPoint(-0.15, -0.26, 0.0)]
    lp = sample_loop(LoopSpec("tri", "parabola", tri, subdivisions_per_segment=1))
    assert _max_arg_step(lp, c) > math.pi / 2
    out = refine_adaptive(lp, c)
    assert _max_arg_step(out, c) <= math.pi / 2
    assert len(out) > len(lp)
    # the original points survive, in order
    idx = [int(np.flatnonzero(np.all(out.coords == x, axis=1))[0]) for x in lp.coords]
    assert idx == sorted(idx)


def test_refined_coarse_loop_matches_fine_sampling(c):
    coarse = refine_adaptive(sample_loop(builtin_loop("loop-a"), 1), c)
    fine = sample_loop(builtin_loop("loop-a"), 1250)  # 10^4 points
    d1 = discriminant_number(trace_eigensystem(coarse, c)).dn_int
    d2 = discriminant_number(trace_eigensystem(fine, c)).dn_int
    assert d1 == d2 == -1


def test_refine_through_ep_diverges(c):
    # passes within 1e-12 of the vertex EP; 5/11 of the way along the first
    # segment is not a dyadic fraction, so no midpoint lands on the EP
    a = [ParamPoint(-0.5, -1e-12, 0.0), ParamPoint(0.6, -1e-12, 0.0), ParamPoint(0.5, 0.5, 0.0)]
    lp = sample_loop(LoopSpec("through", "parabola", a, subdivisions_per_segment=4))
    with pytest.raises(RefinementDiverged):
        refine_adaptive(lp, c)
    with pytest.raises(ValueError):
        refine_adaptive(lp, c, max_arg_step=math.pi)


def test_validate_loop(c):
    for name in ("loop-a", "loop-b", "loop-a-prime", "loop-b-prime"):
        rep = validate_loop(sample_loop(builtin_loop(name)), c)
        assert rep.passed and rep.min_gap > 1e-4
    at_vep = SampledLoop(np.zeros((4, 3)), "parabola")
    rep = validate_loop(at_vep, c)
    assert not rep and rep.min_gap == 0.0


def test_loop_file_roundtrip(tmp_path):
    for name in builtin_names():
        spec = builtin_loop(name)
        p = tmp_path / f"{name}.json"
        write_loop_file(spec, p)
        back = read_loop_file(p)
        assert loop_to_dict(back) == loop_to_dict(spec)
        assert back.anchors == spec.anchors


def test_loop_file_chain_keys():
    d = {
        "name": "c",
        "model": "chain",
        "closed": True,
        "subdivisions_per_segment": 5,
        "anchors": [{"xi": 0, "zeta_r": 0.1, "zeta_i": 0}, {"xi": 0, "zeta_r": 0, "zeta_i": 0.1}, {"xi": 0, "zeta_r": -0.1, "zeta_i": 0}],
    }
    spec = loop_from_dict(d)
    assert spec.anchors[1] == ChainParamPoint(0.0, 0.0, 0.1)
    assert len(sample_loop(spec)) == 15
    with pytest.raises(ValueError, match="malformed"):
        loop_from_dict({"model": "chain", "anchors": [{"xi_r": 0, "xi_i": 0, "zeta": 0}]})
    with pytest.raises(ValueError):
        loop_from_dict({"model": "hexagon", "anchors": []})


def test_analyze_constant_like_loop_far_from_ep(c):
    # tiny loop with no EP inside
    r = analyze_loop(sample_loop(square(r=1e-3, n=4)), c)
    assert r.vorticity.dn_int == 0
    assert r.permutation == (0, 1)

# tests/test_geometry.py
"""Domains, collocation sampling, quadrature and initialization."""
from __future__ import annotations

import numpy as np
import pytest

from ritzkit.domain import NetworkParams, SCALING_NTK, SCALING_PLAIN, TRAINABLE_FULL, TRAINABLE_OUTER
from ritzkit.errors import DimensionMismatchError
from ritzkit.geometry import (
    DOMAIN_HYPERRECTANGLE,
    Domain,
    InitScheme,
    check_admissible,
    initialize,
    sample,
    sample_flat_segment,
    stream_generator,
    tensor_gauss_rule,
)


class TestDomain:
    """Facets, flat segment and JSON form."""

    def test_square_facets(self, square):
        facets = square.facets()
        assert len(facets) == 4
        assert square.boundary_measure() == pytest.approx(4.0)
        for f in facets:
            assert np.linalg.norm(f.normal) == 1.0

    def test_time_slab_has_no_final_time_facet(self, slab):
        keys = [f.key for f in slab.facets()]
        assert (0, "hi") not in keys
        assert slab.flat_segment().key == (0, "lo")
        assert slab.boundary_measure() == pytest.approx(2.0 + 1.0 + 1.0)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            Domain(kind=DOMAIN_HYPERRECTANGLE, lo=(0.0, 1.0), hi=(1.0, 1.0))

    def test_dict_round_trip(self):
        d = {"kind": "hyperrectangle", "lo": [-4, 0], "hi": [4, 1], "flat_segment": {"axis": 1, "side": "lo"}}
        dom = Domain.from_dict(d)
        assert dom.flat_segment().axis == 1
        assert dom.flat_segment().normal == (0.0, -1.0)
        assert Domain.from_dict(dom.to_dict()) == dom

    def test_time_slab_from_dict(self):
        dom = Domain.from_dict({"kind": "time_slab", "t": [0, 0.5], "x": [[-1, 1]]})
        assert dom.lo == (0.0, -1.0)
        assert dom.hi == (0.5, 1.0)


class TestSampling:
    """Uniform collocation with per-purpose random streams."""

    def test_interior_strictly_inside(self, square):
        col = sample(square, 500, 100, seed=3)
        assert col.interior.shape == (500, 2)
        assert square.contains(col.interior, strict=True).all()

    def test_boundary_points_on_their_facets(self, square):
        col = sample(square, 10, 200, seed=3)
        facets = square.facets()
        for p, n, fid in zip(col.boundary, col.normals, col.facet_ids):
            f = facets[fid]
            assert p[f.axis] == f.value
            np.testing.assert_array_equal(n, f.normal)

    def test_gamma_subset_is_flat_segment(self, square):
        col = sample(square, 10, 200, seed=5)
        seg = square.flat_segment()
        gp = col.gamma_points()
        assert gp.shape[0] > 0
        np.testing.assert_array_equal(gp[:, seg.axis], seg.value)

    def test_time_slab_boundary_avoids_final_time(self, slab):
        col = sample(slab, 10, 300, seed=1)
        assert not np.any(col.boundary[:, 0] == slab.hi[0])

    def test_weights(self, square):
        col = sample(square, 40, 20, seed=0)
        assert col.interior_weights.sum() == pytest.approx(square.volume())
        assert col.boundary_weights.sum() == pytest.approx(square.boundary_measure())

    def test_deterministic(self, square):
        a = sample(square, 50, 20, seed=11)
        b = sample(square, 50, 20, seed=11)
        c = sample(square, 50, 20, seed=12)
        np.testing.assert_array_equal(a.interior, b.interior)
        np.testing.assert_array_equal(a.boundary, b.boundary)
        assert not np.array_equal(a.interior, c.interior)

    def test_boundary_count_does_not_move_interior(self, square):
        a = sample(square, 50, 0, seed=2)
        b = sample(square, 50, 30, seed=2)
        np.testing.assert_array_equal(a.interior, b.interior)
        assert a.n2 == 0

    def test_counts_validated(self, square):
        with pytest.raises(ValueError):
            sample(square, 0, 10, seed=0)
        with pytest.raises(ValueError):
            sample(square, 10, -1, seed=0)

    def test_streams_differ(self):
        x = stream_generator(7, 0).random(4)
        y = stream_generator(7, 1).random(4)
        assert not np.array_equal(x, y)
        np.testing.assert_array_equal(x, stream_generator(7, 0).random(4))

    def test_export_rows(self, square):
        col = sample(square, 3, 4, seed=0)
        rows = col.rows()
        assert len(rows) == 7
        assert {r[1] for r in rows[:3]} == {"interior"}
        assert {r[1] for r in rows[3:]} <= {"boundary", "gamma"}


class TestQuadrature:
    def test_flat_segment_rule(self):
        dom = Domain.from_dict({"kind": "hyperrectangle", "lo": [-4, 0], "hi": [4, 1],
                                "flat_segment": {"axis": 1, "side": "lo"}})
        rule = sample_flat_segment(dom, 100, seed=0)
        assert rule.weights.sum() == pytest.approx(8.0)
        np.testing.assert_array_equal(rule.points[:, 1], 0.0)

    def test_tensor_rule_integrates_polynomials(self, square):
        rule = tensor_gauss_rule(square, n_per_panel=4)
        f = rule.points[:, 0] ** 2 * rule.points[:, 1]
        assert rule.weights.sum() == pytest.approx(1.0, rel=1e-14)
        assert float(rule.weights @ f) == pytest.approx(1.0 / 6.0, rel=1e-13)

    def test_tensor_rule_size(self, square):
        rule = tensor_gauss_rule(square, n_per_panel=3, mid_panels=2)
        assert rule.n == (3 * 4) ** 2


class TestInitialize:
    """The three initialization laws."""

    def test_ntk(self):
        p = initialize(InitScheme(kind="ntk", seed=1), 50, 2)
        assert set(np.unique(p.a)) <= {-1.0, 1.0}
        assert p.scaling == SCALING_NTK
        assert p.trainable == TRAINABLE_FULL

    def test_random_feature(self):
        p = initialize(InitScheme(kind="random_feature", seed=1), 20, 3)
        np.testing.assert_array_equal(p.a, 0.0)
        assert p.scaling == SCALING_PLAIN
        assert p.trainable == TRAINABLE_OUTER
        assert p.w.shape == (20, 3)

    def test_small_normal(self):
        p = initialize(InitScheme(kind="small_normal", seed=2, delta=0.01, normal_axis=1), 40, 2)
        assert np.all(np.abs(p.w[:, 1]) < 0.01)
        assert np.all(np.abs(p.b) < 0.01)
        assert np.any(np.abs(p.w[:, 0]) > 0.01)

    def test_overrides(self):
        p = initialize(InitScheme(kind="ntk", seed=0, trainable=TRAINABLE_OUTER), 8, 2)
        assert p.trainable == TRAINABLE_OUTER
        assert p.scaling == SCALING_NTK

    def test_deterministic(self):
        s = InitScheme(kind="ntk", seed=9)
        a, b = initialize(s, 10, 2), initialize(s, 10, 2)
        np.testing.assert_array_equal(a.w, b.w)
        np.testing.assert_array_equal(a.a, b.a)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            InitScheme(kind="xavier")


class TestAdmissibility:
    """Distinct tangential directions and non-zero normal components."""

    def test_gaussian_is_admissible(self):
        p = initialize(InitScheme(kind="random_feature", seed=4), 30, 2)
        assert check_admissible(p, normal_axis=1).ok

    def test_violations(self):
        w = np.array([[0.5, 1.0], [0.5, 2.0], [-0.5, 3.0], [0.7, 0.0]])
        p = NetworkParams(a=np.zeros(4), w=w, b=np.zeros(4))
        report = check_admissible(p, normal_axis=1)
        assert not report.ok
        kinds = {(v.i, v.j, v.kind) for v in report.violations}
        assert (1, 2, "+") in kinds
        assert (1, 3, "-") in kinds
        assert (2, 3, "-") in kinds
        assert (4, None, "normal") in kinds
        assert report.to_dict()["ok"] is False

    def test_needs_two_dimensions(self):
        p = NetworkParams(a=[0.0], w=[[1.0]], b=[0.0])
        with pytest.raises(DimensionMismatchError):
            check_admissible(p)

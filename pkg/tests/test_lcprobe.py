import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splinelc.exceptions import DimensionError, InputError, NonFiniteError
from splinelc.lcprobe import (
    LocalComplexity,
    ProbeConfig,
    batch_lc,
    deformation,
    derive_seed,
    embed_neighborhood,
    layer_crossings,
    local_complexity,
    make_neighborhood,
    neighborhood_from_directions,
    random_box_points,
    shift_sweep,
)
from splinelc.netcore import Layer, Network, forward, init_network


def column_scan(Z):
    """Per-column sign scan written with plain loops."""
    count = 0
    for j in range(Z.shape[1]):
        pos = neg = 0
        for v in Z[:, j]:
            if v > 0:
                pos += 1
            elif v < 0:
                neg += 1
        if not (pos == Z.shape[0] or neg == Z.shape[0]):
            count += 1
    return count


def zero_bias_linear(widths, seed=0):
    rng = np.random.default_rng(seed)
    layers = [Layer(rng.normal(size=(b, a)), np.zeros(b), "identity") for a, b in zip(widths[:-1], widths[1:])]
    return Network(layers)


class TestNeighborhood:
    def test_full_basis(self):
        nb = make_neighborhood(np.zeros(6), ProbeConfig(6, 0.1, 3))
        np.testing.assert_allclose(nb.directions @ nb.directions.T, np.eye(6), atol=1e-10)

    def test_vertices_at_radius(self):
        x = np.arange(8.0)
        nb = make_neighborhood(x, ProbeConfig(5, 0.3, 1))
        np.testing.assert_allclose(np.linalg.norm(nb.vertices - x, axis=1), 0.3, atol=1e-10)
        np.testing.assert_allclose((nb.vertices[0::2] + nb.vertices[1::2]) / 2, np.tile(x, (5, 1)), atol=1e-12)

    def test_deterministic(self):
        a = make_neighborhood(np.ones(10), ProbeConfig(4, 0.01, 7))
        b = make_neighborhood(np.ones(10), ProbeConfig(4, 0.01, 7))
        assert a.vertices.tobytes() == b.vertices.tobytes()

    def test_too_many_directions(self):
        with pytest.raises(DimensionError):
            make_neighborhood(np.zeros(3), ProbeConfig(4, 0.1))

    def test_config_validation(self):
        with pytest.raises(InputError):
            ProbeConfig(0)
        with pytest.raises(InputError):
            ProbeConfig(2, r=0.0)

    def test_caller_directions_keep_orientation(self):
        nb = neighborhood_from_directions(np.zeros(3), [[0.0, -2.0, 0.0], [1.0, 0.0, 0.0]], 0.5)
        np.testing.assert_allclose(nb.vertices[0], [0.0, -0.5, 0.0], atol=1e-15)
        np.testing.assert_allclose(nb.vertices[2], [0.5, 0.0, 0.0], atol=1e-15)


class TestLayerCrossings:
    def test_definition(self):
        Z = np.array([[1.0, 1.0, 0.0, -1.0], [1.0, -1.0, 2.0, -3.0]])
        assert layer_crossings(Z) == 2

    def test_zero_bias_symmetric(self):
        W = np.random.default_rng(0).normal(size=(7, 4))
        nb = make_neighborhood(np.zeros(4), ProbeConfig(2, 0.1))
        assert layer_crossings(nb.vertices @ W.T) == 7

    def test_matches_column_scan(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            Z = rng.normal(size=(6, 20)) + rng.normal(size=20) * 2
            Z[rng.random(Z.shape) < 0.05] = 0.0
            assert layer_crossings(Z) == column_scan(Z)


class TestLocalComplexity:
    def test_zero_bias_identity_recovers_every_neuron(self):
        net = zero_bias_linear([50] + [40] * 6, seed=2)
        for r in (1e-4, 1.0, 10.0):
            for P in (2, 25, 50):
                rep = local_complexity(net, np.zeros(50), ProbeConfig(P, r))
                np.testing.assert_array_equal(rep.per_layer, 40)

    def test_single_neuron_outside_ball(self):
        net = Network([Layer([[1.0, 0.0, 0.0]], [0.0], "relu"), Layer([[1.0]], [0.0], "identity")])
        assert local_complexity(net, [2.0, 0.0, 0.0], ProbeConfig(2, 1.0)).total == 0

    def test_final_layer_excluded(self):
        net = init_network([3, 5, 4], seed=0)
        rep = local_complexity(net, np.zeros(3), ProbeConfig(2, 0.1))
        assert rep.per_layer.shape == (1,)

    def test_bounds_and_total(self):
        net = init_network([6, 9, 7, 8, 2], seed=4)
        rep = local_complexity(net, np.ones(6) * 0.1, ProbeConfig(4, 2.0, 1))
        assert np.all(rep.per_layer >= 0)
        assert np.all(rep.per_layer <= [9, 7, 8])
        assert rep.total == rep.per_layer.sum()

    def test_layer_one_exact_predicate(self):
        rng = np.random.default_rng(5)
        net = init_network([5, 30, 3], seed=5)
        W, b = net.layers[0].weight, net.layers[0].bias
        for i in range(20):
            x = rng.normal(size=5) * 0.5
            nb = make_neighborhood(x, ProbeConfig(3, 0.4, i))
            vals = nb.vertices @ W.T + b
            direct = np.sum((vals.min(axis=0) <= 0) & (vals.max(axis=0) >= 0))
            assert local_complexity(net, x, None, neighborhood=nb).per_layer[0] == direct

    def test_radius_monotone_at_layer_one(self):
        net = init_network([4, 40, 2], seed=6)
        x = np.full(4, 0.2)
        dirs = make_neighborhood(x, ProbeConfig(3, 1.0, 2)).directions
        counts = [local_complexity(net, x, None, neighborhood_from_directions(x, dirs, r)).per_layer[0]
                  for r in np.geomspace(1e-3, 3, 12)]
        assert counts == sorted(counts)

    def test_permutation_invariance(self):
        net = init_network([4, 6, 5, 3], "leaky_relu:0.1", seed=7)
        perm = np.random.default_rng(0).permutation(6)
        l0, l1, l2 = net.layers
        permuted = Network([Layer(l0.weight[perm], l0.bias[perm], l0.activation),
                            Layer(l1.weight[:, perm], l1.bias, l1.activation), l2])
        cfg = ProbeConfig(3, 0.5, 9)
        x = np.array([0.1, -0.2, 0.3, 0.0])
        np.testing.assert_array_equal(local_complexity(net, x, cfg).per_layer,
                                      local_complexity(permuted, x, cfg).per_layer)

    def test_deterministic(self):
        net = init_network([5, 8, 8, 2], seed=1)
        cfg = ProbeConfig(3, 0.2, 4)
        a = local_complexity(net, np.ones(5), cfg)
        b = local_complexity(net, np.ones(5), cfg)
        np.testing.assert_array_equal(a.per_layer, b.per_layer)

    def test_non_finite_reports_layer(self):
        net = Network([Layer([[1e300, 1e300]], [0.0], "relu"), Layer([[1e300]], [0.0], "relu"), Layer([[1.0]], [0.0], "identity")])
        with pytest.raises(NonFiniteError) as err:
            local_complexity(net, [1.0, 1.0], ProbeConfig(2, 0.1))
        assert err.value.layer == 1

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            local_complexity(init_network([3, 4, 2]), np.zeros(4), ProbeConfig(2))

    def test_embedding_starts_at_vertices(self):
        net = init_network([4, 5, 6, 2], seed=0)
        nb = make_neighborhood(np.zeros(4), ProbeConfig(3, 0.1))
        emb = embed_neighborhood(net, nb.vertices)
        np.testing.assert_array_equal(emb[0], nb.vertices)
        tr = forward(net, nb.vertices)
        np.testing.assert_allclose(emb[2], net.layers[1].activation(tr.preacts[1]))

    def test_gelu_counts_preactivation_signs(self):
        net = zero_bias_linear([3, 4, 2])
        net.layers[0].activation = net.layers[0].activation.parse("gelu")
        assert local_complexity(net, np.zeros(3), ProbeConfig(2, 0.1)).per_layer[0] == 4


class TestBatch:
    def test_identical_points_zero_stderr(self):
        net = init_network([4, 8, 2], seed=0)
        agg = batch_lc(net, np.zeros((5, 4)), ProbeConfig(2, 0.1, 3))
        assert agg.totals.shape == (5,)
        # identical centres still get different derived seeds; a zero-bias linear
        # net makes every probe see every hyperplane
        lin = zero_bias_linear([4, 8, 2])
        agg = batch_lc(lin, np.zeros((5, 4)), ProbeConfig(2, 0.1, 3))
        assert agg.stderr == 0.0 and agg.mean == 8.0

    def test_mean_recomputed_independently(self):
        net = init_network([5, 10, 10, 2], seed=3)
        X = np.random.default_rng(0).normal(size=(12, 5)) * 0.3
        cfg = ProbeConfig(3, 0.3, 11)
        agg = batch_lc(net, X, cfg)
        totals = []
        for i, x in enumerate(X):
            rep = local_complexity(net, x, ProbeConfig(3, 0.3, derive_seed(11, i)))
            totals.append(rep.total)
        np.testing.assert_array_equal(agg.totals, totals)
        assert agg.mean == pytest.approx(sum(totals) / len(totals), abs=1e-12)
        half = 2.576 * np.std(totals, ddof=1) / np.sqrt(len(totals))
        assert agg.ci_hi - agg.mean == pytest.approx(half, rel=1e-3)

    def test_thread_count_irrelevant(self):
        net = init_network([5, 10, 10, 2], seed=3)
        X = np.random.default_rng(0).normal(size=(40, 5))
        a = batch_lc(net, X, ProbeConfig(3, 0.3), n_jobs=1, chunk_rows=30)
        b = batch_lc(net, X, ProbeConfig(3, 0.3), n_jobs=4, chunk_rows=30)
        assert a.totals.tobytes() == b.totals.tobytes()

    def test_order_stable_prefix(self):
        net = init_network([5, 10, 2], seed=3)
        X = np.random.default_rng(0).normal(size=(10, 5))
        a = batch_lc(net, X, ProbeConfig(3, 0.3))
        b = batch_lc(net, X[:6], ProbeConfig(3, 0.3))
        np.testing.assert_array_equal(a.totals[:6], b.totals)

    def test_errors(self):
        net = init_network([3, 4, 2])
        with pytest.raises(InputError):
            batch_lc(net, np.zeros((1, 3)), ProbeConfig(2))
        with pytest.raises(InputError):
            batch_lc(net, np.zeros((3, 3)), ProbeConfig(2), point_class="val")

    def test_origin_denser_than_far_shift(self):
        net = init_network([64] + [100] * 18 + [10], "leaky_relu:0.01", seed=0)
        X0 = np.zeros((16, 64))
        X1 = np.full((16, 64), 10.0)
        cfg = ProbeConfig(10, 5.0)
        assert batch_lc(net, X0, cfg).mean > batch_lc(net, X1, cfg).mean

    def test_random_box_points(self):
        R = np.array([[0.0, 1.0], [2.0, 3.0], [1.0, 5.0]])
        pts = random_box_points(R, 200, seed=1)
        assert pts.shape == (200, 2)
        assert np.all(pts >= [0, 1]) and np.all(pts <= [2, 5])


class TestShiftSweep:
    def test_hyperplanes_through_origin(self):
        net = zero_bias_linear([6, 10, 2])
        net.layers[0].activation = net.layers[0].activation.parse("relu")
        sweep = shift_sweep(net, np.zeros(6), np.full(6, 3.0), 5, ProbeConfig(3, 0.1))
        means = [p.mean for p in sweep]
        assert means[0] == max(means)
        assert [p.t for p in sweep] == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_linear_network_without_crossings(self):
        # a constant bias dominating the layer keeps every neuron on one side
        net = Network([Layer(np.zeros((4, 3)), np.ones(4), "relu"), Layer(np.ones((1, 4)), [0.0])])
        sweep = shift_sweep(net, -np.ones(3), np.ones(3), 4, ProbeConfig(2, 0.5))
        assert all(p.mean == 0.0 for p in sweep)

    def test_errors(self):
        net = init_network([3, 4, 2])
        with pytest.raises(InputError):
            shift_sweep(net, np.zeros(3), np.ones(3), 1, ProbeConfig(2))
        with pytest.raises(DimensionError):
            shift_sweep(net, np.zeros(2), np.ones(3), 3, ProbeConfig(2))


class TestDeformation:
    @pytest.mark.parametrize("P", [2, 3, 7, 12])
    def test_closed_form_at_input(self, P):
        r = 0.37
        rep = deformation(init_network([12, 6, 2]), np.zeros(12), ProbeConfig(P, r, P))
        assert rep.eccentricity[0] == pytest.approx(2 * np.sqrt(2) * r, abs=1e-10)
        assert rep.diameter[0] == pytest.approx(2 * np.sqrt(2) * r, abs=1e-10)

    def test_identity_network_preserves(self):
        net = Network([Layer(np.eye(5), np.zeros(5), "identity") for _ in range(3)])
        rep = deformation(net, np.ones(5), ProbeConfig(4, 0.2))
        np.testing.assert_allclose(rep.eccentricity, 2 * np.sqrt(2) * 0.2, atol=1e-12)

    def test_diameter_dominates(self):
        net = init_network([8, 10, 10, 10, 2], "relu", seed=3, scale=2.0)
        rep = deformation(net, np.zeros(8), ProbeConfig(5, 0.5))
        assert np.all(rep.diameter >= rep.eccentricity - 1e-15)
        assert np.all(rep.eccentricity >= 0)

    def test_large_radius_deforms_more(self):
        net = init_network([10] + [100] * 18 + [10], "leaky_relu:0.01", seed=0, scale=3.0)
        growth = []
        for r in (0.005, 1.0):
            e = deformation(net, np.zeros(10), ProbeConfig(5, r, 1)).eccentricity
            growth.append(e[-1] - e[0])
        assert growth[1] > growth[0]

    def test_shortest_path_oracle(self):
        from scipy.sparse.csgraph import shortest_path

        net = init_network([6, 8, 8, 2], "leaky_relu:0.2", seed=2)
        nb = make_neighborhood(np.zeros(6), ProbeConfig(4, 0.3))
        rep = deformation(net, np.zeros(6), None, neighborhood=nb)
        for k, V in enumerate(embed_neighborhood(net, nb.vertices)):
            W = np.linalg.norm(V[:, None] - V[None], axis=2)
            for p in range(0, len(V), 2):
                W[p, p + 1] = W[p + 1, p] = 0.0  # csgraph: 0 = no edge
            D = shortest_path(W, directed=False)
            assert rep.eccentricity[k] == pytest.approx(D.max(axis=1).mean(), rel=1e-12)


class TestEstimator:
    def test_transform_matches_batch(self):
        net = init_network([5, 10, 10, 2], seed=3)
        X = np.random.default_rng(0).normal(size=(7, 5))
        lc = LocalComplexity(net, n_directions=3, radius=0.3, random_state=5, per_layer=True).fit(X)
        counts = lc.transform(X)
        assert counts.shape == (7, 2)
        agg = batch_lc(net, X, ProbeConfig(3, 0.3, 5))
        np.testing.assert_array_equal(counts.sum(axis=1), agg.totals)
        assert lc.aggregate(X).mean == agg.mean
        assert lc.get_params()["radius"] == 0.3

    def test_rejects_too_many_directions(self):
        with pytest.raises(DimensionError):
            LocalComplexity(init_network([3, 4, 2]), n_directions=5).fit(np.zeros((2, 3)))


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000), st.floats(1e-3, 5.0))
def test_counts_bounded_property(P, seed, r):
    net = init_network([6, 7, 5, 2], "leaky_relu:0.05", seed=seed)
    rep = local_complexity(net, np.zeros(6), ProbeConfig(P, r, seed))
    assert 0 <= rep.per_layer[0] <= 7 and 0 <= rep.per_layer[1] <= 5

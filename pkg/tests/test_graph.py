import numpy as np
import pytest

from pushnet.errors import DomainError, ParseError
from pushnet.graph import (
    NormalizationKind,
    adjacency_matrix,
    l1_normalize_features,
    largest_connected_component,
    load_edge_list,
    load_features,
    load_labels,
    normalize_adjacency,
    read_edge_list,
    row_l1_normalize,
    write_edge_list,
    write_features,
    write_labels,
)
from pushnet.synthetic import erdos_renyi_graph


class TestLoadEdgeList:
    def test_basic(self):
        g = load_edge_list(["0 1", "1 2"])
        assert g.n == 3
        assert g.edges.tolist() == [[0, 1], [1, 2]]
        assert g.degrees.tolist() == [1, 2, 1]

    def test_empty_stream(self):
        g = load_edge_list([])
        assert g.n == 0
        assert g.num_edges == 0

    def test_undirected_dedup(self):
        g = load_edge_list(["0 1", "1 0", "0 1"])
        assert g.num_edges == 1
        assert g.degrees.tolist() == [1, 1]

    def test_header_fixes_node_count(self):
        g = load_edge_list(["N 5", "0 1"])
        assert g.n == 5
        assert g.degrees.tolist() == [1, 1, 0, 0, 0]

    def test_comments_and_blank_lines(self):
        g = load_edge_list(["# header", "", "0 1", "# mid", "1 2"])
        assert g.n == 3

    def test_self_loop_counts_once(self):
        g = load_edge_list(["0 0", "0 1"])
        assert g.degrees.tolist() == [2, 1]

    def test_malformed_line_reports_number(self):
        with pytest.raises(ParseError, match="line 2"):
            load_edge_list(["0 1", "1 x"])
        with pytest.raises(ParseError, match="line 1"):
            load_edge_list(["0 1 2"])

    def test_negative_id(self):
        with pytest.raises(DomainError):
            load_edge_list(["0 -1"])

    def test_id_beyond_declared_count(self):
        with pytest.raises(DomainError):
            load_edge_list(["N 2", "0 5"])

    def test_file_round_trip(self, tmp_path):
        g = load_edge_list(["N 4", "0 1", "2 2"])
        write_edge_list(tmp_path / "e.txt", g)
        back = read_edge_list(tmp_path / "e.txt")
        assert back.n == g.n
        assert back.edges.tolist() == g.edges.tolist()


class TestLargestConnectedComponent:
    def test_larger_component_wins(self):
        g = load_edge_list(["0 1", "2 3", "3 4"])
        sub, mapping = largest_connected_component(g)
        assert sub.n == 3
        assert mapping.tolist() == [-1, -1, 0, 1, 2]
        assert sub.edges.tolist() == [[0, 1], [1, 2]]

    def test_connected_graph_identity(self):
        g = load_edge_list(["0 1", "1 2"])
        sub, mapping = largest_connected_component(g)
        assert sub.n == 3
        assert mapping.tolist() == [0, 1, 2]

    def test_tie_broken_by_smallest_id(self):
        g = load_edge_list(["0 1", "2 3"])
        sub, mapping = largest_connected_component(g)
        assert sub.n == 2
        assert mapping.tolist() == [0, 1, -1, -1]

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        g = erdos_renyi_graph(40, 0.05, rng)
        once, _ = largest_connected_component(g)
        twice, mapping = largest_connected_component(once)
        assert twice.n == once.n
        assert twice.edges.tolist() == once.edges.tolist()
        assert mapping.tolist() == list(range(once.n))

    def test_empty_graph(self):
        g = load_edge_list([])
        sub, mapping = largest_connected_component(g)
        assert sub.n == 0
        assert mapping.size == 0

    def test_edgeless_keeps_lowest_node(self):
        g = load_edge_list(["N 3"])
        sub, mapping = largest_connected_component(g)
        assert sub.n == 1
        assert mapping.tolist() == [0, -1, -1]


class TestNormalizeAdjacency:
    def test_single_node_symmetric(self):
        g = load_edge_list(["N 1"])
        m = normalize_adjacency(g, NormalizationKind.SYMMETRIC_SELF_LOOPS)
        assert m.toarray().tolist() == [[1.0]]

    def test_path_symmetric(self):
        g = load_edge_list(["0 1"])
        m = normalize_adjacency(g, NormalizationKind.SYMMETRIC_SELF_LOOPS)
        np.testing.assert_allclose(m.toarray(), [[0.5, 0.5], [0.5, 0.5]])

    def test_path_random_walk(self):
        g = load_edge_list(["0 1"])
        m = normalize_adjacency(g, NormalizationKind.RANDOM_WALK)
        np.testing.assert_array_equal(m.toarray(), [[0.0, 1.0], [1.0, 0.0]])

    def test_symmetric_output_is_exactly_symmetric(self):
        rng = np.random.default_rng(11)
        g = erdos_renyi_graph(60, 0.08, rng)
        m = normalize_adjacency(g, NormalizationKind.SYMMETRIC_SELF_LOOPS)
        diff = (m - m.T).tocoo()
        assert diff.nnz == 0 or np.all(diff.data == 0.0)

    def test_random_walk_rows_stochastic(self):
        rng = np.random.default_rng(12)
        g = erdos_renyi_graph(60, 0.08, rng)
        m = normalize_adjacency(g, NormalizationKind.RANDOM_WALK)
        sums = np.asarray(m.sum(axis=1)).ravel()
        for i in range(g.n):
            if g.degrees[i] > 0:
                assert abs(sums[i] - 1.0) <= 1e-12
            else:
                assert sums[i] == 0.0

    def test_isolated_node_zero_row(self):
        g = load_edge_list(["N 3", "0 1"])
        m = normalize_adjacency(g, NormalizationKind.RANDOM_WALK)
        assert np.all(m.toarray()[2] == 0.0)


class TestRowL1Normalize:
    def test_simple_row(self):
        import scipy.sparse as sp
        m = sp.csr_matrix(np.array([[2.0, 2.0]]))
        out = row_l1_normalize(m)
        np.testing.assert_array_equal(out.toarray(), [[0.5, 0.5]])

    def test_zero_row_unchanged(self):
        import scipy.sparse as sp
        m = sp.csr_matrix(np.array([[0.0, 0.0], [1.0, 3.0]]))
        out = row_l1_normalize(m)
        np.testing.assert_allclose(out.toarray(), [[0.0, 0.0], [0.25, 0.75]])

    def test_negative_rejected(self):
        import scipy.sparse as sp
        with pytest.raises(DomainError):
            row_l1_normalize(sp.csr_matrix(np.array([[-1.0, 2.0]])))

    def test_idempotent_on_own_output(self):
        import scipy.sparse as sp
        rng = np.random.default_rng(3)
        m = sp.random(20, 20, density=0.2, random_state=3, format="csr")
        m.data = np.abs(m.data)
        once = row_l1_normalize(m)
        twice = row_l1_normalize(once)
        np.testing.assert_allclose(once.toarray(), twice.toarray(), atol=1e-15)


class TestL1NormalizeFeatures:
    def test_simple(self):
        out = l1_normalize_features(np.array([[1.0, 3.0]]))
        np.testing.assert_array_equal(out, [[0.25, 0.75]])

    def test_zero_row(self):
        out = l1_normalize_features(np.array([[0.0, 0.0]]))
        np.testing.assert_array_equal(out, [[0.0, 0.0]])

    def test_row_sums_zero_or_one(self):
        rng = np.random.default_rng(9)
        x = rng.random((30, 8)) * (rng.random((30, 8)) > 0.3)
        x[5] = 0.0
        sums = l1_normalize_features(x).sum(axis=1)
        assert np.all((np.abs(sums - 1.0) < 1e-12) | (sums == 0.0))

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            l1_normalize_features(np.array([[-0.5, 1.0]]))


class TestFeatureAndLabelFiles:
    def test_feature_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        x = rng.random((6, 4)) * (rng.random((6, 4)) > 0.5)
        write_features(tmp_path / "f.txt", x)
        back = load_features(tmp_path / "f.txt")
        np.testing.assert_array_equal(back, x)

    def test_dense_csv(self, tmp_path):
        (tmp_path / "f.csv").write_text("1.0,2.0\n0.0,4.0\n")
        x = load_features(tmp_path / "f.csv", dense_csv=True)
        np.testing.assert_array_equal(x, [[1.0, 2.0], [0.0, 4.0]])

    def test_feature_bad_header(self, tmp_path):
        (tmp_path / "f.txt").write_text("3 4\n")
        with pytest.raises(ParseError):
            load_features(tmp_path / "f.txt")

    def test_label_round_trip(self, tmp_path):
        labels = np.array([0, 2, 1, -1], dtype=np.int64)
        write_labels(tmp_path / "l.txt", labels)
        back = load_labels(tmp_path / "l.txt", 4)
        np.testing.assert_array_equal(back, labels)

    def test_label_out_of_range_node(self, tmp_path):
        (tmp_path / "l.txt").write_text("9 1\n")
        with pytest.raises(DomainError):
            load_labels(tmp_path / "l.txt", 3)

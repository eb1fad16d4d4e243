import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csbm.errors import DataFormatError, DomainError
from csbm.netdata import (
    DyadData,
    estimate_propensities,
    load_edge_list,
    load_label_map,
    load_multiplex,
    read_labels,
    write_edge_list,
    write_labels,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParse:
    def test_binary_undirected(self, tmp_path):
        d = load_edge_list(write(tmp_path, "e.txt", "0 1\n1 2\n"), "undirected", "binary")
        assert d.n == 3
        assert d.layer_dict() == {(0, 1): 1.0, (1, 2): 1.0}

    def test_count_merge_by_sum(self, tmp_path):
        d = load_edge_list(write(tmp_path, "e.txt", "0 1 5\n0 1 2\n"), "undirected", "count")
        assert d.layer_dict() == {(0, 1): 7.0}

    def test_undirected_orientation_merges(self, tmp_path):
        d = load_edge_list(write(tmp_path, "e.txt", "2 0 1\n0 2 3\n"), "undirected", "count")
        assert d.layer_dict() == {(0, 2): 4.0}

    def test_directed_keeps_orientation(self, tmp_path):
        d = load_edge_list(write(tmp_path, "e.txt", "2 0 1\n0 2 3\n"), "directed", "count")
        assert d.layer_dict() == {(0, 2): 3.0, (2, 0): 1.0}

    def test_binary_duplicates_collapse(self, tmp_path):
        d = load_edge_list(write(tmp_path, "e.txt", "0 1\n1 0\n0 1\n"), "undirected", "binary")
        assert d.layer_dict() == {(0, 1): 1.0}

    def test_comments_and_n_hint(self, tmp_path):
        d = load_edge_list(write(tmp_path, "e.txt", "# header\n0 1  # edge\n\n"),
                           "undirected", "binary", n_hint=5)
        assert d.n == 5

    def test_signed_conflict(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_edge_list(write(tmp_path, "e.txt", "0 1 1\n1 0 -1\n"), "undirected", "signed")
        d = load_edge_list(write(tmp_path, "e.txt", "0 1 -1\n1 0 -1\n"), "undirected", "signed")
        assert d.layer_dict() == {(0, 1): -1.0}

    @pytest.mark.parametrize("text", ["0 0\n", "0 1 2.5\n", "a b\n", "0 1 2 3\n", "-1 2\n"])
    def test_bad_lines(self, tmp_path, text):
        with pytest.raises(DataFormatError):
            load_edge_list(write(tmp_path, "e.txt", text), "directed", "count")

    def test_binary_value_check(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_edge_list(write(tmp_path, "e.txt", "0 1 2\n"), "undirected", "binary")

    def test_n_hint_too_small(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_edge_list(write(tmp_path, "e.txt", "0 7\n"), "undirected", "binary", n_hint=5)

    def test_empty_needs_hint(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_edge_list(write(tmp_path, "e.txt", ""), "undirected", "binary")


class TestMultiplex:
    def test_layers(self, tmp_path):
        paths = [write(tmp_path, f"l{k}.txt", f"{k} {k + 1}\n") for k in range(3)]
        d = load_multiplex(paths, "undirected", "binary")
        assert d.n_layers == 3
        assert d.n == 4
        assert d.layer_dict(2) == {(2, 3): 1.0}

    def test_single_layer_matches_edge_list(self, tmp_path):
        p = write(tmp_path, "e.txt", "0 3\n1 2\n")
        assert load_multiplex([p], "undirected", "binary") == load_edge_list(
            p, "undirected", "binary")

    def test_disjoint_ranges(self, tmp_path):
        a = write(tmp_path, "a.txt", "0 1\n")
        b = write(tmp_path, "b.txt", "5 6\n")
        d = load_multiplex([a, b], "undirected", "binary")
        assert d.n == 7
        assert d.to_dense(0)[5, 6] == 0
        assert d.to_dense(1)[5, 6] == 1


class TestDyadData:
    def test_validation(self):
        with pytest.raises(DomainError):
            DyadData(3, "undirected", "binary", [(np.array([[1, 0]]), np.array([1.0]))])
        with pytest.raises(DomainError):
            DyadData(3, "undirected", "binary", [(np.array([[0, 1]]), np.array([0.0]))])
        with pytest.raises(DomainError):
            DyadData(3, "undirected", "dyad4", [(np.zeros((0, 2)), np.zeros(0))])
        with pytest.raises(DomainError):
            DyadData(3, "sideways", "binary", [(np.zeros((0, 2)), np.zeros(0))])

    def test_immutable(self):
        d = DyadData.from_dense([np.array([[0, 1], [1, 0]])], "undirected", "binary")
        with pytest.raises(ValueError):
            d.layers[0][1][0] = 5.0

    def test_dense_round_trip(self, rng):
        A = rng.poisson(0.7, size=(9, 9)).astype(float)
        np.fill_diagonal(A, 0)
        d = DyadData.from_dense([A], "directed", "count")
        np.testing.assert_array_equal(d.to_dense(), A)
        assert d.total_mass() == A.sum()
        assert d.n_dyads == 72

    def test_undirected_dense_symmetric(self, rng):
        A = np.triu((rng.random((8, 8)) < 0.3).astype(float), 1)
        d = DyadData.from_dense([A + A.T], "undirected", "binary")
        np.testing.assert_array_equal(d.to_dense(), A + A.T)
        assert d.n_dyads == 28

    def test_log_factorial_constant(self):
        d = DyadData.from_arrays(3, "undirected", "count",
                                 [(np.array([0, 1]), np.array([1, 2]), np.array([3.0, 4.0]))])
        np.testing.assert_allclose(d.log_factorial_constant(), np.log(6) + np.log(24))


class TestDyad4:
    @given(st.integers(2, 8), st.data())
    def test_bijection_with_arcs(self, n, data):
        A = np.array(data.draw(st.lists(st.lists(st.integers(0, 1), min_size=n, max_size=n),
                                        min_size=n, max_size=n)), dtype=float)
        np.fill_diagonal(A, 0)
        d = DyadData.from_dense([A], "directed", "dyad4")
        states = d.layer_dict()
        for i in range(n):
            for j in range(i + 1, n):
                expect = int(A[i, j]) + 2 * int(A[j, i])
                assert states.get((i, j), 0) == expect
        np.testing.assert_array_equal(d.to_dense(), A)

    def test_round_trip_file(self, tmp_path):
        A = np.array([[0, 1, 1], [1, 0, 0], [0, 1, 0]], dtype=float)
        d = DyadData.from_dense([A], "directed", "dyad4")
        write_edge_list(d, tmp_path / "e.txt")
        back = load_edge_list(tmp_path / "e.txt", "directed", "dyad4", n_hint=3)
        assert back == d
        assert d.layer_dict() == {(0, 1): 3.0, (0, 2): 1.0, (1, 2): 2.0}


class TestFiles:
    @pytest.mark.parametrize("modality,kind", [("binary", "undirected"), ("count", "directed"),
                                               ("real", "undirected"), ("signed", "undirected")])
    def test_edge_list_round_trip(self, tmp_path, rng, modality, kind):
        n = 12
        src, dst = np.nonzero(~np.eye(n, dtype=bool))
        keep = rng.random(len(src)) < 0.2
        src, dst = src[keep], dst[keep]
        vals = {"binary": np.ones(len(src)), "count": rng.integers(1, 5, len(src)),
                "real": rng.normal(size=len(src)),
                "signed": rng.choice([-1.0, 1.0], len(src))}[modality]
        if kind == "undirected":
            keep = src < dst
            src, dst, vals = src[keep], dst[keep], vals[keep]
        d = DyadData.from_arrays(n, kind, modality, [(src, dst, vals)])
        write_edge_list(d, tmp_path / "e.txt")
        assert load_edge_list(tmp_path / "e.txt", kind, modality, n_hint=n) == d

    def test_labels_round_trip(self, tmp_path):
        z = np.array([2, 0, 1, 1])
        write_labels(z, tmp_path / "z.tsv")
        np.testing.assert_array_equal(read_labels(tmp_path / "z.tsv"), z)

    def test_label_map(self, tmp_path):
        p = write(tmp_path, "m.tsv", "1\tbob\n0\talice\n")
        assert load_label_map(p) == ["alice", "bob"]
        with pytest.raises(DataFormatError):
            load_label_map(write(tmp_path, "bad.tsv", "0\ta\n2\tc\n"))


class TestPropensities:
    def test_regular_graph(self):
        n = 6
        A = np.zeros((n, n))
        for i in range(n):
            A[i, (i + 1) % n] = A[(i + 1) % n, i] = 1
        theta = estimate_propensities(DyadData.from_dense([A], "undirected", "binary")).theta
        np.testing.assert_allclose(theta, np.ones(n))

    def test_star(self):
        A = np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=float)
        theta = estimate_propensities(DyadData.from_dense([A], "undirected", "binary")).theta
        np.testing.assert_allclose(theta, [1.5, 0.75, 0.75])

    def test_isolated(self):
        d = DyadData(4, "undirected", "binary", [(np.zeros((0, 2)), np.zeros(0))])
        np.testing.assert_allclose(estimate_propensities(d).theta, np.ones(4))

    def test_mean_one(self, rng):
        A = np.triu(rng.poisson(1.0, (20, 20)), 1).astype(float)
        theta = estimate_propensities(DyadData.from_dense([A + A.T], "undirected",
                                                          "count")).theta
        np.testing.assert_allclose(theta.mean(), 1.0)
        assert (theta > 0).all()

import csv
import json
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csbm import synthgen
from csbm.errors import DomainError
from csbm.families import (
    BetaBernoulli,
    DirichletMultinomial,
    FamilySpec,
    GammaPoisson,
    NormalInverseGamma,
    ZeroInflatedPoisson,
)
from csbm.netdata import DyadData
from csbm.report import (
    ari,
    block_summary,
    confusion,
    degree_corrected_summary,
    finalize_psm,
    psm_ordering,
    write_block_summary_csv,
    write_manifest,
    write_matrix_csv,
    write_trace_csv,
)

labels = st.lists(st.integers(0, 4), min_size=2, max_size=40)


def ari_oracle(a, b):
    table = {}
    for x, y in zip(a, b):
        table[(x, y)] = table.get((x, y), 0) + 1
    rows, cols = {}, {}
    for (x, y), c in table.items():
        rows[x] = rows.get(x, 0) + c
        cols[y] = cols.get(y, 0) + c
    idx = sum(comb(c, 2) for c in table.values())
    sa = sum(comb(c, 2) for c in rows.values())
    sb = sum(comb(c, 2) for c in cols.values())
    total = comb(len(a), 2)
    expected = sa * sb / total
    top = 0.5 * (sa + sb)
    if top == expected:
        return 1.0
    return (idx - expected) / (top - expected)


class TestARI:
    def test_identity_and_permutation(self):
        z = np.array([0, 0, 1, 1, 2, 2, 2])
        assert ari(z, z) == 1.0
        assert ari(z, np.array([2, 0, 1])[z]) == 1.0

    @given(st.data())
    def test_matches_oracle(self, data):
        a = data.draw(labels)
        b = data.draw(st.lists(st.integers(0, 4), min_size=len(a), max_size=len(a)))
        np.testing.assert_allclose(ari(a, b), ari_oracle(a, b), atol=1e-12)

    @given(st.data())
    def test_symmetric(self, data):
        a = data.draw(labels)
        b = data.draw(st.lists(st.integers(0, 4), min_size=len(a), max_size=len(a)))
        np.testing.assert_allclose(ari(a, b), ari(b, a), atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            ari([0, 1], [0, 1, 1])


class TestConfusion:
    def test_identical(self):
        z = np.repeat([0, 1, 2], [3, 4, 5])
        np.testing.assert_array_equal(confusion(z, z), np.diag([3, 4, 5]))

    def test_swap(self):
        z = np.repeat([0, 1, 2], 50)
        c = confusion(z, np.array([2, 0, 1])[z])
        np.testing.assert_array_equal(c, 50 * np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]]))

    def test_one_misassigned(self):
        z = np.repeat([0, 1], 5)
        w = z.copy()
        w[0] = 1
        c = confusion(z, w)
        assert c.sum() == 10 and c[0, 1] == 1 and c[0, 0] == 4


class TestBlockSummary:
    def test_empty_graph_shrinks_prior_means(self):
        data = DyadData(6, "undirected", "binary", [(np.zeros((0, 2)), np.zeros(0))])
        spec = FamilySpec(BetaBernoulli(2.0, 6.0), BetaBernoulli(1.0, 3.0))
        table = block_summary(data, np.array([0, 0, 0, 1, 1, 1]), spec)
        means = table.means()
        # a / (a + b + n_dyads) with no edges observed
        np.testing.assert_allclose(np.diag(means), 2 / (2 + 6 + 3), rtol=1e-12)
        np.testing.assert_allclose(means[0, 1], 1.0 / (1 + 3 + 9))

    def test_prior_mean_without_dyads(self):
        data = DyadData(2, "undirected", "count", [(np.zeros((0, 2)), np.zeros(0))])
        spec = FamilySpec(GammaPoisson(2.0, 4.0), GammaPoisson(2.0, 4.0))
        table = block_summary(data, np.array([0, 1]), spec)
        assert table.row(0, 0).n_dyads == 0
        np.testing.assert_allclose(table.row(0, 0).mean, 0.5)

    def test_directed_rows(self):
        data, z = synthgen.generate(synthgen.GenSpec(
            40, 2, "poisson", {"lam": [[2.0, 0.1], [0.5, 2.0]]}, directed=True, seed=0))
        table = block_summary(data, z, FamilySpec(GammaPoisson(), GammaPoisson()))
        assert len(table.rows) == 4
        assert table.row(1, 0).mean > table.row(0, 1).mean

    def test_signed_probabilities_ordered(self):
        data, z = synthgen.generate(synthgen.preset("SI-D", seed=1))
        dm = DirichletMultinomial((1, 1, 1))
        table = block_summary(data, z, FamilySpec(dm, dm))
        inside, across = table.row(0, 0).mean, table.row(0, 1).mean
        assert inside[1] > across[1] and inside[2] < across[2]
        np.testing.assert_allclose(sum(inside), 1.0)

    def test_csv_columns(self, tmp_path):
        data, z = synthgen.generate(synthgen.preset("S4", seed=0))
        zp = ZeroInflatedPoisson()
        table = block_summary(data, z, FamilySpec(zp, zp))
        write_block_summary_csv(table, tmp_path / "b.csv")
        rows = list(csv.DictReader((tmp_path / "b.csv").open()))
        assert len(rows) == 6
        assert {"r", "s", "type", "m_active", "sum_active", "mean", "lam_mean", "mu", "q"} <= set(
            rows[0])

        data, z = synthgen.generate(synthgen.preset("SI-B", seed=0))
        nig = NormalInverseGamma()
        write_block_summary_csv(block_summary(data, z, FamilySpec(nig, nig)), tmp_path / "n.csv")
        head = (tmp_path / "n.csv").read_text().splitlines()[0].split(",")
        assert head[-1] == "sigma_mean" and "sum_y2" in head


class TestDegreeCorrected:
    def test_unit_propensities_reduce_to_plain(self):
        data, z = synthgen.generate(synthgen.preset("S2", seed=0))
        omega = degree_corrected_summary(data, z, np.ones(data.n))
        plain = block_summary(data, z, FamilySpec(GammaPoisson(), GammaPoisson())).means()
        np.testing.assert_allclose(omega, plain, rtol=1e-12)

    def test_two_node_toy(self):
        data = DyadData.from_arrays(2, "undirected", "count",
                                    [(np.array([0]), np.array([1]), np.array([3.0]))])
        omega = degree_corrected_summary(data, np.array([0, 1]), np.array([2.0, 0.5]))
        np.testing.assert_allclose(omega[0, 1], (1 + 3) / (1 + 1))

    def test_assortative_ratio(self):
        data, z = synthgen.generate(synthgen.preset("S2", seed=1))
        omega = degree_corrected_summary(data, z, np.ones(data.n))
        assert np.diag(omega).mean() / omega[~np.eye(3, dtype=bool)].mean() > 5


class TestPSM:
    def test_finalize(self):
        counts = np.array([[0, 3, 1], [0, 0, 4], [0, 0, 0]], dtype=float)
        psm = finalize_psm(counts, 4)
        np.testing.assert_allclose(psm, [[1, 0.75, 0.25], [0.75, 1, 1], [0.25, 1, 1]])
        with pytest.raises(DomainError):
            finalize_psm(counts, 0)

    def test_ordering_groups_clusters(self):
        z = np.array([1, 0, 1, 0, 1])
        order = psm_ordering(z)
        np.testing.assert_array_equal(order, [0, 2, 4, 1, 3])
        psm = np.eye(5)
        psm[0, 2] = psm[2, 0] = 0.9
        psm[4, 2] = psm[2, 4] = 0.2
        order = psm_ordering(z, psm)
        assert list(order[:3]) == [2, 0, 4]

    def test_block_constant(self):
        z = np.repeat([0, 1], 3)
        same = (z[:, None] == z[None, :]).astype(float)
        psm = finalize_psm(np.triu(same, 1) * 7, 7)
        np.testing.assert_array_equal(psm, same)


class TestWriters:
    def test_manifest_is_sorted_and_stable(self, tmp_path):
        m = {"b": np.float64(1.5), "a": [np.int64(2), np.array([1, 2])], "c": {"z": 1, "y": None}}
        write_manifest(m, tmp_path / "m1.json")
        write_manifest(dict(reversed(list(m.items()))), tmp_path / "m2.json")
        assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()
        assert json.loads((tmp_path / "m1.json").read_text())["a"] == [2, [1, 2]]

    def test_trace_csv(self, tmp_path):
        traces = [{"sweep": np.array([1, 2]), "logpost": np.array([-3.0, -2.5]),
                   "ari": np.array([0.1, 0.2])}] * 2
        write_trace_csv(traces, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "chain,sweep,logpost,ari"
        assert lines[3] == "1,1,-3.0,0.1"

    def test_matrix_csv(self, tmp_path):
        write_matrix_csv(np.array([[1, 2], [3, 4]]), tmp_path / "c.csv", integer=True)
        assert (tmp_path / "c.csv").read_text() == "1,2\n3,4\n"

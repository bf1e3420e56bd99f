import numpy as np
import pytest

from sgnn.data import SbmSpec, generate_sbm, load_dataset, save_dataset
from sgnn.errors import ContractError, ParseError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_triangle(tmp_path):
    g = write(tmp_path / "g.tsv", "# triangle\n0\t1\n1 2\n0\t2\n")
    f = write(tmp_path / "f.csv", "1,0\n0,1\n0.5,0.5\n")
    data = load_dataset(g, f)
    assert data.n == 3 and data.features.shape == (3, 2) and data.graph.nnz == 6


def test_single_edge_is_symmetrized(tmp_path):
    data = load_dataset(write(tmp_path / "g.tsv", "0\t1\n"), write(tmp_path / "f.csv", "1\n2\n"))
    assert data.graph.nnz == 2
    assert data.graph.to_scipy()[1, 0] == 1.0


def test_out_of_range_edge_names_line(tmp_path):
    g = write(tmp_path / "g.tsv", "0\t1\n# c\n2\t5\n")
    f = write(tmp_path / "f.csv", "1\n2\n3\n4\n")
    with pytest.raises(ParseError, match=r"g\.tsv:3:"):
        load_dataset(g, f)


@pytest.mark.parametrize("labels,split,msg", [
    ("0\n1\n", None, "labels"),
    ("0\n1\n0\n", "train: 0 1\nval: 1\ntest: 2\n", "disjoint"),
    ("0\n1\n0\n", "train: 0\nfoo: 1\n", "expected"),
    ("0\nx\n0\n", None, "integer"),
])
def test_bad_label_and_split_files(tmp_path, labels, split, msg):
    g = write(tmp_path / "g.tsv", "0\t1\n")
    f = write(tmp_path / "f.csv", "1\n2\n3\n")
    lab = write(tmp_path / "l.txt", labels)
    sp = write(tmp_path / "s.txt", split) if split else None
    with pytest.raises(ParseError, match=msg):
        load_dataset(g, f, lab, sp)


def test_bad_feature_rows(tmp_path):
    with pytest.raises(ParseError, match="f.csv:2"):
        load_dataset(write(tmp_path / "g.tsv", ""), write(tmp_path / "f.csv", "1,2\n3\n"))


def test_round_trip(tmp_path):
    data = generate_sbm(SbmSpec(blocks=3, nodes_per_block=20, p_in=0.3, p_out=0.05, feature_dim=4, seed=1))
    paths = save_dataset(data, tmp_path)
    back = load_dataset(paths["graph"], paths["features"], paths["labels"], paths["split"])
    assert np.array_equal(back.graph.row_ptr, data.graph.row_ptr)
    assert np.array_equal(back.graph.col_idx, data.graph.col_idx)
    assert np.array_equal(back.features, data.features)
    assert np.array_equal(back.labels, data.labels)
    for name in ("train", "val", "test"):
        assert np.array_equal(back.split[name], data.split[name])


def test_sbm_extremes():
    data = generate_sbm(SbmSpec(blocks=2, nodes_per_block=3, p_in=1.0, p_out=0.0, feature_dim=2, seed=0))
    a = data.graph.to_scipy().toarray()
    expected = np.kron(np.eye(2), np.ones((3, 3)) - np.eye(3))
    assert np.array_equal(a, expected)
    assert list(data.labels) == [0, 0, 0, 1, 1, 1]


def test_sbm_noise_free_features_and_split():
    data = generate_sbm(SbmSpec(blocks=4, nodes_per_block=30, feature_noise=0.0, seed=2))
    assert np.unique(data.features, axis=0).shape[0] == 4
    data.validate()
    sizes = [data.split[s].size for s in ("train", "val", "test")]
    assert sizes == [12, 12, 96]


def test_sbm_reproducible():
    a, b = generate_sbm(SbmSpec(seed=5)), generate_sbm(SbmSpec(seed=5))
    assert np.array_equal(a.graph.col_idx, b.graph.col_idx) and np.array_equal(a.features, b.features)


def test_sbm_intra_block_edge_count_binomial():
    k, p, seeds = 20, 0.5, 100
    pairs = k * (k - 1) // 2
    total = 0.0
    for seed in range(seeds):
        data = generate_sbm(SbmSpec(blocks=2, nodes_per_block=k, p_in=p, p_out=0.0, feature_dim=2, seed=seed))
        a = data.graph.to_scipy().toarray()
        total += np.triu(a[:k, :k], 1).sum()
    trials = pairs * seeds
    assert abs(total - p * trials) <= 3 * np.sqrt(trials * p * (1 - p))


def test_sbm_rejects_bad_spec():
    with pytest.raises(ContractError):
        generate_sbm(SbmSpec(p_in=0.1, p_out=0.2))

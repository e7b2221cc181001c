import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from treedens.histograms import (
    DataError,
    Dataset,
    MarginalHistogram,
    PairHistogram,
    Partition1D,
    build_marginal_histogram,
    build_pair_histogram,
    cell_index,
    read_csv,
    write_csv,
)


@pytest.mark.parametrize("x,expected", [(0.37, 1), (-0.1, -1), (0.5, 2), (0.0, 0), (-0.25, -1)])
def test_cell_index(x, expected):
    assert cell_index(x, Partition1D(0.25)) == expected


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), -float("inf")])
def test_cell_index_rejects_non_finite(bad):
    with pytest.raises(DataError):
        cell_index(bad, Partition1D(0.25))


@pytest.mark.parametrize("h", [0.0, -1.0, float("nan")])
def test_partition_rejects_bad_width(h):
    with pytest.raises(ValueError):
        Partition1D(h)


def test_pair_histogram_direct_binning():
    data = Dataset(np.array([[0.1, 0.1], [0.1, 0.9], [0.9, 0.9]]))
    ph = build_pair_histogram(data, 0, 1, Partition1D(0.5))
    assert ph.as_dict() == {(0, 0): 1, (0, 1): 1, (1, 1): 1}
    assert ph.n == 3


def test_marginal_histogram_direct_binning():
    data = Dataset(np.array([[0.1, 0.0], [0.6, 0.0]]))
    mh = build_marginal_histogram(data, 0, Partition1D(0.5))
    assert mh.as_dict() == {0: 1, 1: 1}


def test_uniform_counts_bounded(rng):
    data = Dataset(rng.random((1000, 2)))
    ph = build_pair_histogram(data, 0, 1, Partition1D(0.1))
    assert ph.counts.sum() == 1000
    assert len(ph.counts) <= 100


def test_vertex_errors(rng):
    data = Dataset(rng.random((10, 3)))
    with pytest.raises(ValueError):
        build_pair_histogram(data, 1, 1, Partition1D(0.1))
    with pytest.raises(IndexError):
        build_pair_histogram(data, 0, 3, Partition1D(0.1))
    with pytest.raises(IndexError):
        build_marginal_histogram(data, -1, Partition1D(0.1))


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((0, 2)))
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 1)))
    with pytest.raises(DataError, match="row 2"):
        Dataset(np.array([[0.0, 1.0], [np.nan, 1.0]]))
    ds = Dataset(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ds.values[0, 0] = 1.0


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 60), st.just(2)), elements=finite),
       st.sampled_from([0.05, 0.3, 1.0, 7.0]))
def test_conservation_and_marginal_consistency(values, h):
    data = Dataset(values)
    part = Partition1D(h)
    ph = build_pair_histogram(data, 0, 1, part)
    assert int(ph.counts.sum()) == data.n
    assert ph.marginal(0) == build_marginal_histogram(data, 0, part)
    assert ph.marginal(1) == build_marginal_histogram(data, 1, part)
    assert ph.transpose() == build_pair_histogram(data, 1, 0, part)


def test_marginal_cross_check_random(rng):
    data = Dataset(rng.normal(size=(500, 3)))
    part = Partition1D(0.4)
    for i, j in [(0, 1), (2, 0), (1, 2)]:
        ph = build_pair_histogram(data, i, j, part)
        assert ph.marginal(0).as_dict() == build_marginal_histogram(data, i, part).as_dict()
        assert ph.marginal(1).as_dict() == build_marginal_histogram(data, j, part).as_dict()


def test_determinism(rng):
    v = rng.random((300, 2))
    a = build_pair_histogram(Dataset(v), 0, 1, Partition1D(0.13))
    b = build_pair_histogram(Dataset(v.copy()), 0, 1, Partition1D(0.13))
    assert a == b


def test_boundary_goes_right():
    data = Dataset(np.array([[0.5, 1.0], [0.25, 0.75]]))
    ph = build_pair_histogram(data, 0, 1, Partition1D(0.25))
    assert ph.as_dict() == {(2, 4): 1, (1, 3): 1}


def test_lookup_and_unsorted_rejected():
    part = Partition1D(1.0)
    ph = PairHistogram(part, [[0, 0], [0, 2], [1, 1]], [2, 1, 3], 6)
    assert ph.lookup([0, 0, 1, 5, -1], [0, 2, 1, 5, 0]).tolist() == [2, 1, 3, 0, 0]
    with pytest.raises(ValueError):
        PairHistogram(part, [[1, 1], [0, 0]], [1, 1], 2)
    with pytest.raises(ValueError):
        MarginalHistogram(part, [0, 1], [1, 0], 1)


def test_csv_roundtrip(tmp_path, rng):
    v = rng.normal(size=(20, 3))
    p = tmp_path / "d.csv"
    write_csv(p, v, ["a", "b", "c"])
    ds = read_csv(p, has_header=True)
    assert ds.columns == ("a", "b", "c")
    np.testing.assert_array_equal(ds.values, v)


@pytest.mark.parametrize("body,row", [("1,2\n3,x\n", 2), ("1,2\n3\n", 2), ("1,nan\n", 1),
                                      ("1,2\n3,\n", 2)])
def test_csv_errors_report_row(tmp_path, body, row):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=f"row {row}"):
        read_csv(p)


def test_csv_blank_lines_skipped(tmp_path):
    p = tmp_path / "gap.csv"
    p.write_text("1,2\n\n3,4\n")
    assert read_csv(p).values.tolist() == [[1.0, 2.0], [3.0, 4.0]]
    p.write_text("1,2\n\n3,x\n")
    with pytest.raises(DataError, match="row 3"):
        read_csv(p)


def test_csv_header_offsets_row_numbers(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n1,oops\n")
    with pytest.raises(DataError, match="row 3"):
        read_csv(p, has_header=True)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from medpath import DatasetError, RawDataset, load_dataset, read_roles, residualize

import oracles


def write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n", encoding="utf-8")
    return path


ROLES = {"id": "id", "x*": "exposure", "m*": "mediator", "y": "outcome", "c*": "covariate"}


def test_load_minimal(tmp_path):
    f = write_csv(tmp_path / "d.csv", ["x1", "m1", "y"], [[1, 2, 3], [4, 5, 6], [7, 8, 10]])
    d = load_dataset(f, {"x1": "exposure", "m1": "mediator", "y": "outcome"})
    assert (d.n, d.r, d.p, d.c) == (3, 1, 1, 0)
    np.testing.assert_array_equal(d.Y, [3, 6, 10])
    assert d.row_ids == ("1", "2", "3")


def test_load_large_block_shapes(tmp_path):
    rng = np.random.default_rng(0)
    header = ["id"] + [f"x{i}" for i in range(320)] + [f"m{i}" for i in range(145)] + ["y"] + [f"c{i}" for i in range(4)]
    rows = [[f"s{i}"] + list(np.round(rng.normal(size=len(header) - 1), 6)) for i in range(135)]
    d = load_dataset(write_csv(tmp_path / "d.csv", header, rows), ROLES)
    assert (d.n, d.r, d.p, d.c) == (135, 320, 145, 4)
    assert d.row_ids[:2] == ("s0", "s1")
    assert d.exposure_names[0] == "x0" and d.covariate_names == ("c0", "c1", "c2", "c3")


def test_load_errors(tmp_path):
    roles = {"x1": "exposure", "m1": "mediator", "y": "outcome"}
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing.csv", roles)
    f = write_csv(tmp_path / "na.csv", ["x1", "m1", "y"], [[1, 2, 3], [4, "", 6], [7, 8, 9]])
    with pytest.raises(DatasetError, match=r"missing value at \(2, 'm1'\)"):
        load_dataset(f, roles)
    f = write_csv(tmp_path / "txt.csv", ["x1", "m1", "y"], [[1, 2, 3], [4, "abc", 6]])
    with pytest.raises(DatasetError, match="non-numeric"):
        load_dataset(f, roles)
    f = write_csv(tmp_path / "one.csv", ["x1", "m1", "y"], [[1, 2, 3]])
    with pytest.raises(DatasetError, match="at least 2"):
        load_dataset(f, roles)
    f = write_csv(tmp_path / "ok.csv", ["x1", "m1", "y", "z"], [[1, 2, 3, 4], [4, 5, 6, 7]])
    with pytest.raises(DatasetError, match="no role"):
        load_dataset(f, roles)
    with pytest.raises(DatasetError, match="exactly one outcome"):
        load_dataset(f, {**roles, "z": "outcome"})
    with pytest.raises(DatasetError, match="conflicting"):
        load_dataset(f, {**roles, "z*": "covariate", "?": "ignore"})
    with pytest.raises(DatasetError, match="unknown role"):
        load_dataset(f, {**roles, "z": "weight"})
    f = write_csv(tmp_path / "dup.csv", ["x1", "x1", "y"], [[1, 2, 3], [4, 5, 6]])
    with pytest.raises(DatasetError, match="duplicate"):
        load_dataset(f, {"x1": "exposure", "y": "outcome"})


def test_read_roles(tmp_path):
    f = tmp_path / "roles.ini"
    f.write_text("[roles]\nexpr_* = exposure\nregion_* = mediator\nscore = outcome\n", encoding="utf-8")
    assert read_roles(f) == {"expr_*": "exposure", "region_*": "mediator", "score": "outcome"}
    (tmp_path / "bad.ini").write_text("[other]\na = b\n", encoding="utf-8")
    with pytest.raises(DatasetError):
        read_roles(tmp_path / "bad.ini")


def raw(rng, n=50, r=4, p=3, c=3):
    return RawDataset(rng.normal(size=(n, r)), rng.normal(size=(n, p)), rng.normal(size=n), rng.normal(size=(n, c)))


def test_raw_validation():
    with pytest.raises(DatasetError):
        RawDataset(np.ones((1, 1)), np.ones((1, 1)), np.ones(1), None)
    with pytest.raises(DatasetError):
        RawDataset(np.array([[1.0], [np.nan]]), np.ones((2, 1)), np.ones(2), None)
    with pytest.raises(DatasetError):
        RawDataset(np.ones((2, 2)), np.ones((2, 1)), np.ones(2), None, exposure_names=("a", "a"))


def test_centering_only():
    d = RawDataset(np.array([[1.0], [2.0], [3.0]]), np.ones((3, 1)), np.array([1.0, 0.0, 2.0]), None)
    adj = residualize(d)
    np.testing.assert_allclose(adj.X_adj[:, 0], [-1, 0, 1], atol=1e-15)
    assert adj.adjustment_record["method"] == "center"


def test_outcome_equal_to_covariate_is_removed():
    rng = np.random.default_rng(1)
    C = rng.normal(size=(40, 2))
    d = RawDataset(rng.normal(size=(40, 2)), rng.normal(size=(40, 2)), C[:, 1].copy(), C)
    assert np.max(np.abs(residualize(d).Y_adj)) <= 1e-10


def test_matches_normal_equations():
    rng = np.random.default_rng(2)
    d = raw(rng)
    adj = residualize(d)
    np.testing.assert_allclose(adj.Y_adj, oracles.normal_equations_residual(d.C, d.Y), atol=1e-10)
    for k in range(d.c):
        assert abs(d.C[:, k] @ adj.Y_adj) <= 1e-8 * np.linalg.norm(d.C[:, k]) * np.linalg.norm(adj.Y_adj)


def test_rank_deficient_covariates():
    rng = np.random.default_rng(3)
    c = rng.normal(size=(20, 1))
    d = RawDataset(rng.normal(size=(20, 2)), rng.normal(size=(20, 2)), rng.normal(size=20), np.hstack([c, 2 * c]))
    with pytest.raises(DatasetError, match="rank"):
        residualize(d)
    const = RawDataset(rng.normal(size=(20, 2)), rng.normal(size=(20, 2)), rng.normal(size=20), np.ones((20, 1)))
    with pytest.raises(DatasetError, match="rank"):
        residualize(const)


def test_standardize_records_scales():
    rng = np.random.default_rng(4)
    d = raw(rng)
    adj = residualize(d, standardize=True)
    np.testing.assert_allclose(adj.M_adj.std(axis=0, ddof=1), 1.0, rtol=1e-12)
    assert adj.Y_adj.std(ddof=1) == pytest.approx(1.0, rel=1e-12)
    plain = residualize(d)
    np.testing.assert_allclose(adj.M_adj * adj.m_scale, plain.M_adj, atol=1e-12)
    np.testing.assert_allclose(adj.Y_adj * adj.y_scale, plain.Y_adj, atol=1e-12)


@given(
    hnp.arrays(float, (12, 6), elements=st.floats(-100, 100)),
    st.integers(0, 2),
)
def test_adjustment_invariants(block, c):
    rng = np.random.default_rng(0)
    C = rng.normal(size=(12, c))
    d = RawDataset(block[:, :2], block[:, 2:5], block[:, 5], C)
    once = residualize(d)
    twice = residualize(once)
    for a, b in ((once.X_adj, twice.X_adj), (once.M_adj, twice.M_adj), (once.Y_adj, twice.Y_adj)):
        np.testing.assert_allclose(a, b, atol=1e-10 * (1 + np.abs(a).max()))
    for blk in (once.X_adj, once.M_adj, once.Y_adj.reshape(-1, 1)):
        sd = blk.std(axis=0, ddof=1)
        assert np.all(np.abs(blk.mean(axis=0)) <= 1e-10 * np.maximum(sd, 1.0))
        for k in range(c):
            norms = np.linalg.norm(C[:, k]) * np.linalg.norm(blk, axis=0)
            assert np.all(np.abs(C[:, k] @ blk) <= 1e-8 * np.maximum(norms, 1e-300) + 1e-12)

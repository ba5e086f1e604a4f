import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from artcontext.analytics import (
    PCAModel,
    TemporalAxis,
    analogy_shift,
    axis_projection,
    fit_pca,
    group_distance_stats,
    ks_two_sample,
    pc_project,
    project_2d,
    select_axis_exemplars,
    temporal_axis,
)
from artcontext.errors import ContractViolation, PreconditionError
from artcontext.store import EmbeddingMatrix

FIX43 = np.array([[2.0, 0.0, 1.0], [0.0, 1.0, 3.0], [4.0, 2.0, 2.0], [1.0, 5.0, 0.0]])
# eigendecomposition of the sample covariance of FIX43 (numpy.linalg.eigh, sorted
# descending, each eigenvector flipped so its largest-magnitude entry is positive)
FIX43_RATIOS = [0.5871762003866241, 0.31732197553452673, 0.09550182407884927]
FIX43_COMPONENTS = [
    [-0.09439165633950948, 0.9118574994930992, -0.39950734139897376],
    [0.9854971949395184, 0.0287426474978165, -0.16723976495187065],
    [0.1410159351982059, 0.4094994027260702, 0.9013460740399144],
]


def emb(values, ids=None, space="C"):
    values = np.asarray(values, dtype=np.float32)
    d = 1024 if space == "C" else 16384
    if values.shape[1] < d:
        values = np.hstack([values, np.zeros((values.shape[0], d - values.shape[1]), np.float32)])
    ids = ids or [f"p{i:03d}" for i in range(values.shape[0])]
    return EmbeddingMatrix(space, values, ids)


# ------------------------------------------------------------------- PCA


def test_pca_fixture_matches_frozen_eigendecomposition():
    m = fit_pca(FIX43, 3)
    assert np.allclose(m.explained_variance_ratio, FIX43_RATIOS, atol=1e-12)
    assert np.allclose(m.components, FIX43_COMPONENTS, atol=1e-8)


def test_pca_line_data():
    x = np.linspace(-2, 2, 9)
    m = fit_pca(np.column_stack([x, 2 * x]), 1)
    assert m.explained_variance_ratio[0] == pytest.approx(1.0)
    assert np.allclose(m.components[0], np.array([1, 2]) / np.sqrt(5))


def test_pca_rank_error_names_achievable_k():
    x = np.linspace(-2, 2, 9)
    with pytest.raises(PreconditionError, match="k=1"):
        fit_pca(np.column_stack([x, 2 * x]), 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.integers(2, 6), st.integers(0, 10**6))
def test_pca_invariants(n, d, seed):
    X = np.random.default_rng(seed).standard_normal((n, d))
    k = min(n - 1, d)
    m = fit_pca(X, k)
    assert np.allclose(m.components @ m.components.T, np.eye(k), atol=1e-9)
    assert m.explained_variance_ratio.sum() <= 1 + 1e-12
    assert np.all(np.diff(m.explained_variance_ratio) <= 1e-12)
    if k == min(n - 1, d):
        assert m.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-9)


def test_pca_save_load(tmp_path):
    m = fit_pca(FIX43, 2)
    back = PCAModel.load(m.save(tmp_path / "pca"))
    assert np.allclose(back.components, m.components, atol=1e-6)
    assert np.array_equal(back.explained_variance_ratio, m.explained_variance_ratio)


def test_pc_project_cases():
    m = fit_pca(FIX43, 3)
    assert pc_project(m.mean, m, 0) == pytest.approx(0.0, abs=1e-12)
    assert pc_project(m.mean + 3 * m.components[1], m, 1) == pytest.approx(3.0, abs=1e-12)
    expected = [(row - FIX43.mean(0)) @ np.array(FIX43_COMPONENTS[0]) for row in FIX43]
    assert np.allclose(pc_project(FIX43, m, 0), expected, atol=1e-8)
    with pytest.raises(ContractViolation):
        pc_project(np.zeros(4), m, 0)
    with pytest.raises(PreconditionError):
        pc_project(np.zeros(3), m, 3)


def test_analogy_shift_cases():
    m = fit_pca(FIX43, 3)
    v = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(analogy_shift(v, m, 0, 0.0), v)
    assert np.linalg.norm(analogy_shift(v, m, 2, 5.0) - v) == pytest.approx(5.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(-50, 50, allow_nan=False))
def test_analogy_shift_moves_only_axis_i(seed, d_scalar):
    rng = np.random.default_rng(seed)
    m = fit_pca(rng.standard_normal((12, 6)), 5)
    v = rng.standard_normal(6)
    i = int(rng.integers(0, 5))
    shifted = analogy_shift(v, m, i, d_scalar)
    for j in range(5):
        delta = pc_project(shifted, m, j) - pc_project(v, m, j)
        assert delta == pytest.approx(d_scalar if j == i else 0.0, abs=1e-6)


# ------------------------------------------------------------ exemplars


def brute_exemplars(model, i, X, ids, window):
    centred = X - model.mean
    proj = centred @ model.components[i]
    points = np.linspace(proj.min(), proj.max(), 8)
    out = []
    for p in points:
        best = None
        for pid, pr, row in sorted(zip(ids, proj, centred)):
            if abs(pr - p) > window:
                continue
            perp = np.linalg.norm(row - pr * model.components[i])
            if best is None or perp < best[2]:
                best = (pid, pr, perp)
        out.append(best)
    return out


def test_exemplars_match_brute_force():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((20, 1024)) * 0.01
    X[:, 0] += np.linspace(0, 0.1, 20)
    ids = [f"q{(7 * i) % 20:02d}" for i in range(20)]
    m = emb(X, ids)
    model = fit_pca(m.values, 2)
    got = select_axis_exemplars(model, 0, m, window=0.015)
    want = brute_exemplars(model, 0, m.values.astype(np.float64), ids, 0.015)
    assert [s[0] if s else None for s in got.selections] == [w[0] if w else None for w in want]


def test_exemplars_degenerate_and_empty_windows():
    m = emb(np.ones((5, 1024)))
    model = PCAModel(np.zeros(1024), np.eye(1, 1024), np.array([1.0]))
    got = select_axis_exemplars(model, 0, m)
    assert len(got.selections) == 8 and len({s for s in got.selections}) == 1
    spread = emb(np.array([[0.0], [1.0]]))
    got = select_axis_exemplars(model, 0, spread, window=0.01)
    assert got.selections[0][0] == "p000" and got.selections[-1][0] == "p001"
    assert all(s is None for s in got.selections[1:-1])


# ------------------------------------------------------------------- KS


def ks_brute(a, b):
    best = 0.0
    for t in np.concatenate([a, b]):
        best = max(best, abs(np.mean(a <= t) - np.mean(b <= t)))
    return best


@pytest.mark.parametrize(
    "a, b, d",
    [([1, 2, 3], [1, 2, 3], 0.0), ([0, 0, 0], [1, 1, 1], 1.0), ([1, 2, 3, 4], [2, 3, 4, 5], 0.25)],
)
def test_ks_hand_values(a, b, d):
    assert ks_two_sample(a, b) == d


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # scipy's p-value on tiny samples
@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=30), st.lists(st.integers(-5, 5), min_size=1, max_size=30))
def test_ks_matches_brute_and_scipy_with_ties(a, b):
    a, b = np.array(a, float), np.array(b, float)
    got = ks_two_sample(a, b)
    assert got == pytest.approx(ks_brute(a, b), abs=1e-12)
    assert got == pytest.approx(stats.ks_2samp(a, b, method="asymp").statistic, abs=1e-12)


def test_ks_empty_sample():
    with pytest.raises(PreconditionError):
        ks_two_sample([], [1.0])


# ------------------------------------------------------------ distances


def exhaustive(X, labels):
    same, diff = [], []
    for i, j in itertools.combinations(range(len(X)), 2):
        d = float(np.linalg.norm(X[i] - X[j]))
        (same if labels[i] == labels[j] else diff).append(d)
    return np.array(same), np.array(diff)


@settings(max_examples=15, deadline=None)
@given(st.integers(8, 30), st.integers(2, 4), st.integers(0, 10**6))
def test_group_distances_exhaustive(n, groups, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 1024)).astype(np.float32)
    labels = [f"g{i % groups}" for i in range(n)]
    m = emb(X)
    rep = group_distance_stats(m, dict(zip(m.ids, labels)), sample_budget=10**6)
    same, diff = exhaustive(X.astype(np.float64), labels)
    assert rep.n_same == len(same) and rep.n_diff == len(diff)
    assert rep.mean_same == pytest.approx(same.mean(), abs=1e-9)
    assert rep.mean_diff == pytest.approx(diff.mean(), abs=1e-9)
    assert rep.ks == pytest.approx(ks_brute(same, diff), abs=1e-9)
    assert rep.pct_diff == pytest.approx(100 * (diff.mean() - same.mean()) / same.mean(), abs=1e-9)


def test_group_distances_degenerate_and_separated():
    m = emb(np.ones((6, 1024)))
    rep = group_distance_stats(m, {pid: pid[-1] in "024" and "x" or "y" for pid in m.ids})
    assert rep.mean_same == 0 and rep.mean_diff == 0 and rep.ks == 0
    X = np.vstack([np.zeros((5, 1)), 100 + np.arange(5)[:, None] * 0.1])
    m = emb(X)
    rep = group_distance_stats(m, {pid: "ab"[i // 5] for i, pid in enumerate(m.ids)})
    assert rep.mean_diff > rep.mean_same and rep.ks == 1.0


def test_group_distances_sampling_is_seeded_and_order_free():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 1024))
    m = emb(X)
    labels = {pid: f"g{i % 3}" for i, pid in enumerate(m.ids)}
    a = group_distance_stats(m, labels, sample_budget=100, seed=5)
    perm = rng.permutation(60)
    shuffled = EmbeddingMatrix("C", m.values[perm], [m.ids[i] for i in perm])
    b = group_distance_stats(shuffled, labels, sample_budget=100, seed=5)
    assert a.n_same == 100 and a.n_diff == 100
    assert a.row() == b.row()
    assert group_distance_stats(m, labels, sample_budget=100, seed=6).row() != a.row()


def test_group_distances_needs_pairs():
    m = emb(np.eye(3, 1024))
    with pytest.raises(PreconditionError):
        group_distance_stats(m, {pid: pid for pid in m.ids})


# ------------------------------------------------------------ projection


def test_project_2d_pca_reproduces_pc_axes():
    rng = np.random.default_rng(2)
    m = emb(rng.standard_normal((15, 3)) @ np.diag([5, 2, 0.1]))
    xy = project_2d(m)
    model = fit_pca(m.values, 2)
    assert np.allclose(xy[:, 0], pc_project(m.values, model, 0), atol=1e-9)
    assert np.allclose(xy[:, 1], pc_project(m.values, model, 1), atol=1e-9)


def test_project_2d_two_points_symmetric():
    xy = project_2d(emb(np.array([[1.0, 2.0], [3.0, -1.0]])))
    assert xy[0, 0] == pytest.approx(-xy[1, 0]) and np.allclose(xy[:, 1], 0)


def test_project_2d_external_is_deterministic():
    m = emb(np.random.default_rng(1).standard_normal((30, 4)))
    a = project_2d(m, "tsne", {"perplexity": 5.0}, seed=3)
    b = project_2d(m, "tsne", {"perplexity": 5.0}, seed=3)
    assert np.array_equal(a, b)
    with pytest.raises(PreconditionError):
        project_2d(m, "nope")


# --------------------------------------------------------- temporal axis


def test_temporal_axis_cases(tmp_path):
    e1 = np.eye(1, 1024)[0]
    m = emb(np.vstack([e1, e1, 3 * e1, 3 * e1]))
    decades = dict(zip(m.ids, [1500, 1590, 1900, 1990]))
    axis = temporal_axis(m, decades)
    assert np.allclose(axis.vector, 2 * e1)
    assert np.allclose(temporal_axis(m, decades, 1900, 1500).vector, -2 * e1)
    assert TemporalAxis.load(axis.save(tmp_path / "axis.json")).vector.tolist() == axis.vector.tolist()


def test_temporal_axis_six_vectors():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((6, 1024)).astype(np.float32)
    m = emb(X)
    decades = dict(zip(m.ids, [1500, 1510, 1700, 1900, 1950, 1980]))
    want = X[3:].astype(np.float64).mean(0) - X[:2].astype(np.float64).mean(0)
    assert np.allclose(temporal_axis(m, decades).vector, want, atol=1e-12)


def test_axis_projection_cases():
    axis = TemporalAxis(np.array([3.0, 4.0]))
    assert axis_projection(axis.vector, axis) == pytest.approx(5.0)
    assert axis_projection(np.array([-4.0, 3.0]), axis) == 0.0
    assert np.allclose(axis_projection(np.array([[3.0, 4.0], [0.0, 0.0]]), axis), [5.0, 0.0])
    with pytest.raises(PreconditionError):
        axis_projection(np.ones(2), TemporalAxis(np.zeros(2)))

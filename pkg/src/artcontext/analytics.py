"""Latent-space analytics: PCA, PC-axis analogies, group distances, temporal axis."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import ContractViolation, MissingArtifactError, PreconditionError
from .store import EmbeddingMatrix, checksum

EXEMPLAR_WINDOW = 0.015
N_SEGMENT_POINTS = 8
DEFAULT_PAIR_BUDGET = 200_000


# --------------------------------------------------------------------------
# PCA


@dataclass
class PCAModel:
    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    explained_variance_ratio: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def d(self) -> int:
        return self.components.shape[1]

    def save(self, path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        (path / "manifest.json").unlink(missing_ok=True)
        mean = np.asarray(self.mean, dtype="<f4")
        comps = np.ascontiguousarray(self.components, dtype="<f4")
        (path / "mean.f32").write_bytes(mean.tobytes())
        (path / "components.f32").write_bytes(comps.tobytes())
        manifest = {
            "k": self.k,
            "d": self.d,
            "explained_variance_ratio": [float(r) for r in self.explained_variance_ratio],
            "mean_checksum": checksum(mean),
            "components_checksum": checksum(comps),
        }
        (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "PCAModel":
        path = Path(path)
        if not (path / "manifest.json").is_file():
            raise MissingArtifactError(path / "manifest.json")
        manifest = json.loads((path / "manifest.json").read_text())
        k, d = manifest["k"], manifest["d"]
        mean = np.frombuffer((path / "mean.f32").read_bytes(), dtype="<f4").astype(np.float64)
        comps = np.frombuffer((path / "components.f32").read_bytes(), dtype="<f4")
        if mean.size != d or comps.size != k * d:
            raise ContractViolation(f"PCA payload sizes do not match k={k}, d={d}")
        return cls(mean, comps.reshape(k, d).astype(np.float64), np.asarray(manifest["explained_variance_ratio"]))


def _orient(components: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude loading is positive."""
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def fit_pca(matrix, k: int) -> PCAModel:
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2:
        raise PreconditionError("fit_pca expects a 2-D matrix")
    n, d = X.shape
    if n < 2:
        raise PreconditionError("fit_pca needs at least two rows")
    if not 1 <= k <= min(n - 1, d):
        raise PreconditionError(f"k={k} must lie in [1, min(n-1, d)={min(n - 1, d)}]")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    tol = s[0] * max(n, d) * np.finfo(np.float64).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if k > rank:
        raise PreconditionError(f"matrix has rank {rank}; at most k={rank} components are achievable")
    total = float(np.sum(s**2))
    ratios = s[:k] ** 2 / total
    return PCAModel(mean, _orient(vt[:k]), ratios)


def _as_rows(vectors, d: int) -> tuple:
    V = np.asarray(vectors, dtype=np.float64)
    single = V.ndim == 1
    V = np.atleast_2d(V)
    if V.shape[1] != d:
        raise ContractViolation(f"vectors have dimension {V.shape[1]}, model expects {d}")
    return V, single


def pc_project(vectors, model: PCAModel, i: int):
    """Projection of mean-centred vectors onto component ``i``."""
    if not 0 <= i < model.k:
        raise PreconditionError(f"component index {i} outside [0, {model.k})")
    V, single = _as_rows(vectors, model.d)
    out = (V - model.mean) @ model.components[i]
    return float(out[0]) if single else out


def analogy_shift(v, model: PCAModel, i: int, d_scalar: float) -> np.ndarray:
    """``v + d * PC_i``: move a latent along one principal axis."""
    if not 0 <= i < model.k:
        raise PreconditionError(f"component index {i} outside [0, {model.k})")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.d,):
        raise ContractViolation(f"vector has shape {v.shape}, model expects ({model.d},)")
    return v + d_scalar * model.components[i]


@dataclass
class AxisSample:
    pc_index: int
    segment_points: np.ndarray
    selections: list  # per point: (painting id, projection, perpendicular distance) or None


def select_axis_exemplars(model: PCAModel, i: int, embeddings: EmbeddingMatrix,
                          window: float = EXEMPLAR_WINDOW) -> AxisSample:
    """Pick one painting near each of eight equally spaced points on PC ``i``.

    Among paintings whose projection lies within ``window`` of a point, the
    one closest to the axis itself (smallest residual norm) wins.
    """
    if embeddings.n == 0:
        raise PreconditionError("no embeddings to select from")
    order = np.argsort(np.asarray(embeddings.ids), kind="stable")
    ids = [embeddings.ids[j] for j in order]
    centred = embeddings.values[order].astype(np.float64) - model.mean
    if centred.shape[1] != model.d:
        raise ContractViolation("embedding dimension does not match the PCA model")
    proj = centred @ model.components[i]
    perp = np.linalg.norm(centred - np.outer(proj, model.components[i]), axis=1)
    points = np.linspace(proj.min(), proj.max(), N_SEGMENT_POINTS)
    selections = []
    for p in points:
        cand = np.flatnonzero(np.abs(proj - p) <= window)
        if cand.size == 0:
            selections.append(None)
            continue
        best = cand[np.argmin(perp[cand])]
        selections.append((ids[best], float(proj[best]), float(perp[best])))
    return AxisSample(i, points, selections)


# --------------------------------------------------------------------------
# distribution comparison


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic (no p-value)."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise PreconditionError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


@dataclass
class GroupDistanceReport:
    grouping: str
    space: str
    mean_same: float
    mean_diff: float
    pct_diff: float
    ks: float
    n_same: int
    n_diff: int
    same_distances: np.ndarray = field(repr=False, default=None)
    diff_distances: np.ndarray = field(repr=False, default=None)

    def row(self) -> dict:
        return {
            "grouping": self.grouping,
            "space": self.space,
            "mean_same": self.mean_same,
            "mean_diff": self.mean_diff,
            "pct_diff": self.pct_diff,
            "ks": self.ks,
            "n_same": self.n_same,
            "n_diff": self.n_diff,
        }


def _tri_decode(k: np.ndarray, m: int) -> tuple:
    """Linear index over pairs i<j of ``m`` items (row-major) -> (i, j)."""
    k = np.asarray(k, dtype=np.int64)
    i = m - 2 - np.floor(np.sqrt(-8.0 * k + 4.0 * m * (m - 1) - 7) / 2.0 - 0.5).astype(np.int64)
    j = k + i + 1 - m * (m - 1) // 2 + (m - i) * ((m - i) - 1) // 2
    return i, j


def _pair_distances(X: np.ndarray, i: np.ndarray, j: np.ndarray, max_cells: int = 1 << 23) -> np.ndarray:
    # chunk so one difference block stays near 64 MB whatever the dimension
    chunk = max(1, max_cells // max(1, X.shape[1]))
    out = np.empty(len(i), dtype=np.float64)
    for s in range(0, len(i), chunk):
        diff = X[i[s:s + chunk]] - X[j[s:s + chunk]]
        out[s:s + chunk] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return out


def _same_pairs(groups: list, budget: int, rng) -> tuple:
    sizes = np.array([len(g) for g in groups], dtype=np.int64)
    counts = sizes * (sizes - 1) // 2
    offsets = np.concatenate([[0], np.cumsum(counts)])
    total = int(offsets[-1])
    if total <= budget:
        picks = np.arange(total, dtype=np.int64)
    else:
        picks = np.sort(rng.choice(total, size=budget, replace=False))
    gi = np.searchsorted(offsets, picks, side="right") - 1
    ii = np.empty(len(picks), dtype=np.int64)
    jj = np.empty(len(picks), dtype=np.int64)
    for g in np.unique(gi):
        sel = gi == g
        a, b = _tri_decode(picks[sel] - offsets[g], int(sizes[g]))
        members = np.asarray(groups[g])
        ii[sel], jj[sel] = members[a], members[b]
    return ii, jj


def _diff_pairs(codes: np.ndarray, n_diff: int, budget: int, seed_seq) -> tuple:
    n = len(codes)
    total = n * (n - 1) // 2
    if n_diff <= budget:
        i, j = np.triu_indices(n, k=1)
        keep = codes[i] != codes[j]
        return i[keep], j[keep]
    frac = n_diff / total
    draw = min(total, int(math.ceil(budget / frac * 1.2)) + 1000)
    while True:
        rng = np.random.default_rng(seed_seq)
        picks = rng.choice(total, size=draw, replace=False)
        i, j = _tri_decode(picks, n)
        keep = np.flatnonzero(codes[i] != codes[j])
        if keep.size >= budget or draw == total:
            keep = np.sort(keep[:budget])
            return i[keep], j[keep]
        draw = min(total, draw * 2)


def group_distance_stats(embeddings: EmbeddingMatrix, labels: Mapping[str, str],
                         sample_budget: int = DEFAULT_PAIR_BUDGET, seed: int = 0,
                         grouping: str = "author") -> GroupDistanceReport:
    """Euclidean distances within vs. across groups, and their KS statistic.

    Rows are ordered by painting id before sampling, so the result does not
    depend on row order. Unlabelled paintings are ignored.
    """
    rows = embeddings.row_of()
    ids = sorted(pid for pid in rows if labels.get(pid))
    if not ids:
        raise PreconditionError("no labelled paintings")
    X = embeddings.values[[rows[p] for p in ids]].astype(np.float64)
    names = sorted({labels[p] for p in ids})
    code_of = {g: c for c, g in enumerate(names)}
    codes = np.array([code_of[labels[p]] for p in ids], dtype=np.int64)
    groups = [np.flatnonzero(codes == c) for c in range(len(names))]
    big = [g for g in groups if len(g) >= 2]
    if len(big) < 2:
        raise PreconditionError("need at least two groups with two or more members each")

    sizes = np.array([len(g) for g in groups], dtype=np.int64)
    n = len(ids)
    n_same = int(np.sum(sizes * (sizes - 1) // 2))
    n_diff = n * (n - 1) // 2 - n_same
    if n_same == 0:
        raise PreconditionError("insufficient pairs in class 'same'")
    if n_diff == 0:
        raise PreconditionError("insufficient pairs in class 'different'")

    seeds = np.random.SeedSequence(seed).spawn(2)
    si, sj = _same_pairs(big, sample_budget, np.random.default_rng(seeds[0]))
    di, dj = _diff_pairs(codes, n_diff, sample_budget, seeds[1])
    same = _pair_distances(X, si, sj)
    diff = _pair_distances(X, di, dj)
    mean_same, mean_diff = float(same.mean()), float(diff.mean())
    pct = 100.0 * (mean_diff - mean_same) / mean_same if mean_same > 0 else float("nan")
    return GroupDistanceReport(
        grouping, embeddings.space, mean_same, mean_diff, pct, ks_two_sample(same, diff),
        len(same), len(diff), same, diff,
    )


# --------------------------------------------------------------------------
# 2-D projection


def _external_projector(method: str, params: dict, seed: int):
    if method == "tsne":
        from sklearn.manifold import TSNE

        kw = {"n_components": 2, "init": "pca", "random_state": seed}
        kw.update(params)
        return TSNE(**kw)
    if method == "umap":
        try:
            import umap
        except ImportError as exc:
            raise PreconditionError("umap-learn is not installed; use method='pca' instead") from exc
        kw = {"n_components": 2, "random_state": seed}
        kw.update(params)
        return umap.UMAP(**kw)
    raise PreconditionError(f"unknown projection method {method!r}; use 'pca', 'tsne' or 'umap'")


def project_2d(embeddings: EmbeddingMatrix, method: str = "pca", params: Optional[dict] = None,
               seed: int = 0) -> np.ndarray:
    X = embeddings.values.astype(np.float64)
    if X.shape[0] < 2:
        raise PreconditionError("need at least two embeddings to project")
    if method == "pca":
        centred = X - X.mean(axis=0)
        s = np.linalg.svd(centred, compute_uv=False)
        tol = s[0] * max(X.shape) * np.finfo(np.float64).eps if s.size else 0.0
        k = min(2, int(np.sum(s > tol)))
        out = np.zeros((X.shape[0], 2))
        if k:
            model = fit_pca(X, k)
            for c in range(k):
                out[:, c] = pc_project(X, model, c)
        return out
    projector = _external_projector(method, dict(params or {}), seed)
    return np.asarray(projector.fit_transform(X), dtype=np.float64)


# --------------------------------------------------------------------------
# temporal axis


@dataclass
class TemporalAxis:
    vector: np.ndarray
    from_label: str = "1500s"
    to_label: str = "1900s"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({
            "from": self.from_label, "to": self.to_label, "vector": [float(x) for x in self.vector],
        }) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "TemporalAxis":
        path = Path(path)
        if not path.is_file():
            raise MissingArtifactError(path)
        d = json.loads(path.read_text())
        return cls(np.asarray(d["vector"], dtype=np.float64), d["from"], d["to"])


def temporal_axis(embeddings: EmbeddingMatrix, decades: Mapping[str, int],
                  from_century: int = 1500, to_century: int = 1900) -> TemporalAxis:
    """Mean context vector of the later century minus that of the earlier one."""
    def bucket(century):
        rows = [r for r, pid in enumerate(embeddings.ids)
                if pid in decades and century <= decades[pid] <= century + 90]
        if not rows:
            raise PreconditionError(f"no paintings in the {century}s")
        return embeddings.values[rows].astype(np.float64).mean(axis=0)

    vec = bucket(to_century) - bucket(from_century)
    return TemporalAxis(vec, f"{from_century}s", f"{to_century}s")


def axis_projection(v, axis: TemporalAxis):
    """Scalar projection onto the temporal axis; accepts one vector or rows."""
    a = np.asarray(axis.vector, dtype=np.float64)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise PreconditionError("temporal axis is the zero vector")
    V = np.asarray(v, dtype=np.float64)
    out = V @ a / norm
    return float(out) if V.ndim == 1 else out

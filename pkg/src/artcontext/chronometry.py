"""Year prediction from latent vectors, and LOWESS trend curves."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import joblib
import numpy as np
from sklearn.ensemble import HistGradientBoostingRegressor

from .errors import ContractViolation, MissingArtifactError, PreconditionError
from .store import SPACE_DIMS


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")


def split(records: Sequence, spec: SplitSpec = SplitSpec()) -> tuple:
    """Seeded train/test partition of painting ids (ordered by id first)."""
    ids = sorted(r.id if hasattr(r, "id") else str(r) for r in records)
    if not ids:
        raise PreconditionError("cannot split an empty corpus")
    n_train = int(math.floor(spec.train_fraction * len(ids) + 0.5))
    perm = np.random.default_rng(spec.seed).permutation(len(ids))
    train = sorted(ids[i] for i in perm[:n_train])
    test = sorted(ids[i] for i in perm[n_train:])
    return train, test


@dataclass
class GBTParams:
    """Boosted-tree settings. ``max_bins`` bounds histogram resolution."""

    n_trees: int = 300
    max_depth: int = 6
    learning_rate: float = 0.1
    subsample: float = 1.0
    loss: str = "squared_error"
    max_bins: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.subsample != 1.0:
            raise ValueError("row subsampling is not supported; subsample must be 1.0")


@dataclass
class YearModel:
    regressor: HistGradientBoostingRegressor
    feature_dim: int
    space: str
    hyperparams: GBTParams
    training_digest: str

    def save(self, path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        joblib.dump(self.regressor, path / "model.joblib")
        meta = {
            "space": self.space,
            "feature_dim": self.feature_dim,
            "hyperparams": asdict(self.hyperparams),
            "training_digest": self.training_digest,
        }
        (path / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "YearModel":
        path = Path(path)
        if not (path / "model.json").is_file():
            raise MissingArtifactError(path / "model.json")
        meta = json.loads((path / "model.json").read_text())
        return cls(joblib.load(path / "model.joblib"), meta["feature_dim"], meta["space"],
                   GBTParams(**meta["hyperparams"]), meta["training_digest"])


def _digest(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.blake2b(digest_size=8)
    h.update(np.ascontiguousarray(X, dtype="<f4").tobytes())
    h.update(np.ascontiguousarray(y, dtype="<f8").tobytes())
    return h.hexdigest()


def train_year_model(X, y, hyperparams: Optional[GBTParams] = None, space: Optional[str] = None) -> YearModel:
    hp = hyperparams or GBTParams()
    X = np.asarray(X, dtype=np.float32)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise PreconditionError("X must be n x d with one target per row")
    if X.shape[0] < 10:
        raise PreconditionError("need at least 10 training paintings")
    if np.any((y < 1500) | (y > 1990)):
        raise PreconditionError("targets must be decades within [1500, 1990]")
    bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
    if bad.size:
        raise PreconditionError(f"non-finite features in rows {bad.tolist()[:20]}")
    if space is None:
        space = next((s for s, d in SPACE_DIMS.items() if d == X.shape[1]), "?")
    reg = HistGradientBoostingRegressor(
        loss=hp.loss,
        learning_rate=hp.learning_rate,
        max_iter=hp.n_trees,
        max_depth=hp.max_depth,
        max_leaf_nodes=None,
        max_bins=hp.max_bins,
        early_stopping=False,
        random_state=hp.seed,
    )
    reg.fit(X, y)
    return YearModel(reg, X.shape[1], space, hp, _digest(X, y))


def predict_years(model: YearModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float32))
    if X.shape[1] != model.feature_dim:
        raise ContractViolation(f"features have dimension {X.shape[1]}, model expects {model.feature_dim}")
    return model.regressor.predict(X).astype(np.float64)


@dataclass
class EvalReport:
    r2: float
    pearson: Optional[float]
    predictions: list = field(default_factory=list)  # (id, true decade, predicted year)


def regression_scores(y, pred) -> tuple:
    y = np.asarray(y, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        r2 = 1.0 if ss_res == 0 else float("-inf")
        return r2, None
    r2 = 1.0 - ss_res / ss_tot
    if np.all(pred == pred[0]):
        return r2, None
    pearson = float(np.corrcoef(pred, y)[0, 1])
    return r2, max(-1.0, min(1.0, pearson))


def evaluate(model: YearModel, X, y, ids: Optional[Sequence[str]] = None) -> EvalReport:
    y = np.asarray(y, dtype=np.float64)
    if y.size < 2:
        raise PreconditionError("need at least two paintings to evaluate")
    pred = predict_years(model, X)
    r2, pearson = regression_scores(y, pred)
    ids = list(ids) if ids is not None else [str(i) for i in range(len(y))]
    rows = [(pid, int(t), float(p)) for pid, t, p in zip(ids, y, pred)]
    return EvalReport(r2, pearson, rows)


# --------------------------------------------------------------------------
# LOWESS


@dataclass
class TrendCurve:
    xs: np.ndarray
    ys: np.ndarray
    frac: float
    iters: int


def _local_fit(x: np.ndarray, y: np.ndarray, w: np.ndarray, x0: float) -> float:
    sw = w.sum()
    if sw <= 0:
        return float(np.nan)
    # offsets from y[0] keep constant inputs exact
    mx = (w * x).sum() / sw
    my = y[0] + (w * (y - y[0])).sum() / sw
    sxx = (w * (x - mx) ** 2).sum()
    if sxx <= 1e-12 * max(1.0, mx * mx) * sw:
        return float(my)
    slope = (w * (x - mx) * (y - my)).sum() / sxx
    return float(my + slope * (x0 - mx))


def lowess(xs, ys, frac: float = 2.0 / 3.0, iters: int = 3) -> TrendCurve:
    """Robust locally weighted linear regression (tricube kernel, bisquare reweighting).

    Each fitted value uses the ``floor(frac * n)`` nearest neighbours of its x;
    the bandwidth is the distance to the farthest of them. Output is sorted
    by x (ties by y) and evaluated at the input abscissae.
    """
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size:
        raise PreconditionError("xs and ys differ in length")
    n = x.size
    if n < 3:
        raise PreconditionError("lowess needs at least three points")
    if not 0 < frac <= 1:
        raise PreconditionError("frac must lie in (0, 1]")
    if np.all(x == x[0]):
        raise PreconditionError("all xs are identical")
    order = np.lexsort((y, x))
    x, y = x[order], y[order]

    r = min(n, max(2, int(math.floor(frac * n + 1e-7))))
    cache = {} if n <= 4000 else None

    def kernel(i):
        if cache is not None and i in cache:
            return cache[i]
        dist = np.abs(x - x[i])
        h = np.partition(dist, r - 1)[r - 1]
        if h == 0:
            # the r nearest all share x[i]; widen to the nearest distinct neighbour
            h = dist[dist > 0].min()
        k = (1.0 - np.clip(dist / h, 0.0, 1.0) ** 3) ** 3
        if cache is not None:
            cache[i] = k
        return k

    robust = np.ones(n)
    fitted = np.empty(n)
    for it in range(iters + 1):
        for i in range(n):
            fitted[i] = _local_fit(x, y, kernel(i) * robust, x[i])
            if np.isnan(fitted[i]):
                # every neighbour was rejected as an outlier; keep the observation
                fitted[i] = y[i]
        if it == iters:
            break
        resid = y - fitted
        s = np.median(np.abs(resid))
        if s == 0:
            break
        b = np.clip(resid / (6.0 * s), -1.0, 1.0)
        robust = (1.0 - b**2) ** 2
    return TrendCurve(x, fitted, frac, iters)

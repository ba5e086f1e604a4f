"""Pipeline stages over a workspace directory.

Each stage reads artifacts written by earlier stages and writes its own under
the workspace. A stage records a stamp (digest of the config sections it
depends on plus fingerprints of its inputs); when the stamp matches and all
outputs exist, the stage is skipped.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import analytics, chronometry, culturomics, timeshift
from .config import PipelineConfig
from .errors import MissingArtifactError, PreconditionError
from .gateway import GenerationParams, ModelGateway, make_gateway
from .imaging import load_rgb, save_png
from .ingest import ingest_corpus, read_manifest, write_drop_report, write_manifest
from .store import EmbeddingMatrix, load_embeddings, save_embeddings

logger = logging.getLogger(__name__)

SPACES = ("A", "C")


class Workspace:
    def __init__(self, root):
        self.root = Path(root)

    def __truediv__(self, other) -> Path:
        return self.root / other

    manifest = property(lambda self: self.root / "corpus" / "manifest.jsonl")
    corpus_images = property(lambda self: self.root / "corpus" / "images")
    prompts = property(lambda self: self.root / "keywords" / "prompts.tsv")
    century_keywords = property(lambda self: self.root / "keywords" / "century_keywords.json")
    axis = property(lambda self: self.root / "experiment" / "temporal_axis.json")
    records = property(lambda self: self.root / "experiment" / "records.tsv")

    def embeddings(self, space: str) -> Path:
        return self.root / "embeddings" / space

    def year_model(self, space: str) -> Path:
        return self.root / "year" / space / "model"

    def require(self, path: Path) -> Path:
        if not path.exists():
            raise MissingArtifactError(path)
        return path


# --------------------------------------------------------------------------
# stamps


def fingerprint(path) -> str:
    """Content digest of a file, or of every file below a directory."""
    path = Path(path)
    h = hashlib.blake2b(digest_size=8)
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in files:
        h.update(str(p.relative_to(path) if path.is_dir() else p.name).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _stamp_path(ws: Workspace, stage: str) -> Path:
    return ws / "stamps" / f"{stage}.json"


def stage_key(cfg: PipelineConfig, sections, inputs=()) -> str:
    blob = json.dumps([cfg.digest(*sections), [fingerprint(p) for p in inputs]])
    return hashlib.blake2b(blob.encode(), digest_size=8).hexdigest()


def is_fresh(ws: Workspace, stage: str, key: str, outputs) -> bool:
    p = _stamp_path(ws, stage)
    if not p.is_file() or not all(Path(o).exists() for o in outputs):
        return False
    return json.loads(p.read_text()).get("key") == key


def write_stamp(ws: Workspace, stage: str, key: str) -> None:
    p = _stamp_path(ws, stage)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps({"stage": stage, "key": key}) + "\n")


@contextmanager
def _atomic_text(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        yield fh
    tmp.replace(path)


def write_tsv(path, header, rows) -> Path:
    path = Path(path)
    with _atomic_text(path) as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def read_tsv(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


# --------------------------------------------------------------------------
# stages


class Pipeline:
    def __init__(self, cfg: PipelineConfig, gateway: Optional[ModelGateway] = None):
        self.cfg = cfg
        self.ws = Workspace(cfg.workspace)
        self._gateway = gateway

    @property
    def gateway(self) -> ModelGateway:
        if self._gateway is None:
            self._gateway = make_gateway(self.cfg.backend)
        return self._gateway

    def records(self) -> list:
        return read_manifest(self.ws.require(self.ws.manifest))

    def load_image(self, rec) -> np.ndarray:
        # workspace-relative refs keep manifests identical across workspaces
        return load_rgb(self.ws.root / rec.image_ref)

    def _relative(self, ref: str) -> str:
        p = Path(ref)
        try:
            return p.relative_to(self.ws.root).as_posix()
        except ValueError:
            return ref

    # ingest ---------------------------------------------------------------

    def ingest(self) -> dict:
        cfg = self.cfg
        if cfg.paths.metadata is None:
            raise PreconditionError("paths.metadata is not configured")
        inputs = [cfg.paths.metadata] + ([cfg.paths.images] if cfg.paths.images else [])
        key = stage_key(cfg, ["filter"], inputs)
        drops_path = self.ws / "corpus" / "drops.json"
        if is_fresh(self.ws, "ingest", key, [self.ws.manifest, drops_path]):
            return {"skipped": True}
        result = ingest_corpus(cfg.paths.metadata, cfg.paths.images, cfg.filter,
                               out_image_dir=self.ws.corpus_images, image_column=cfg.paths.image_column)
        records = [replace(r, image_ref=self._relative(r.image_ref)) for r in result.records]
        write_manifest(records, self.ws.manifest)
        write_drop_report(result, drops_path)
        write_stamp(self.ws, "ingest", key)
        return result.report()

    # embed ----------------------------------------------------------------

    def embed(self, space: str) -> dict:
        space = space.upper()
        if space not in SPACES:
            raise PreconditionError(f"space must be A or C, not {space!r}")
        sections = ["backend"] + (["normalize_context"] if space == "C" else [])
        key = stage_key(self.cfg, sections, [self.ws.require(self.ws.manifest)])
        out = self.ws.embeddings(space)
        stage = f"embed-{space}"
        if is_fresh(self.ws, stage, key, [out / "manifest.json"]):
            return {"skipped": True}
        recs = self.records()
        encode = self.gateway.encode_formal if space == "A" else self.gateway.encode_context
        rows = [encode(self.load_image(r)) for r in recs]
        d = 16384 if space == "A" else 1024
        values = np.stack(rows).astype(np.float32) if rows else np.zeros((0, d), np.float32)
        if space == "C" and self.cfg.normalize_context and len(values):
            norms = np.linalg.norm(values, axis=1, keepdims=True)
            values = np.where(norms > 0, values / np.where(norms > 0, norms, 1), values).astype(np.float32)
        m = EmbeddingMatrix(space, values, [r.id for r in recs], self.gateway.checkpoint_id)
        receipt = save_embeddings(m, out)
        write_stamp(self.ws, stage, key)
        return {"n": m.n, "checksum": receipt.checksum}

    def load_space(self, space: str) -> EmbeddingMatrix:
        path = self.ws.embeddings(space)
        if not (path / "manifest.json").is_file():
            raise MissingArtifactError(path / "manifest.json")
        return load_embeddings(path)

    # pca ------------------------------------------------------------------

    def pca(self, space: str) -> dict:
        m = self.load_space(space)
        out = self.ws / "pca" / space
        key = stage_key(self.cfg, ["pca_k"], [self.ws.embeddings(space)])
        if is_fresh(self.ws, f"pca-{space}", key, [out / "variance.tsv"]):
            return {"skipped": True}
        if m.n < 2:
            raise PreconditionError("PCA needs at least two paintings")
        k = min(self.cfg.pca_k, m.n - 1, m.d)
        model = analytics.fit_pca(m.values, k)
        model.save(out / "model")
        write_tsv(out / "variance.tsv", ["component", "explained_variance_ratio"],
                  [[i, _fmt(r)] for i, r in enumerate(model.explained_variance_ratio)])
        rows = []
        for i in range(min(k, 4)):
            sample = analytics.select_axis_exemplars(model, i, m)
            for point, sel in zip(sample.segment_points, sample.selections):
                pid, proj, perp = sel if sel else ("", None, None)
                rows.append([i, _fmt(point), pid, _fmt(proj), _fmt(perp)])
        write_tsv(out / "exemplars.tsv", ["component", "segment_point", "painting_id", "projection",
                                          "perpendicular_distance"], rows)
        if space == "A":
            self._decode_sweep(m, model, out / "sweep")
        write_stamp(self.ws, f"pca-{space}", key)
        return {"k": k, "ratios": [float(r) for r in model.explained_variance_ratio[:4]]}

    def _decode_sweep(self, m: EmbeddingMatrix, model, out: Path) -> None:
        centre = m.values.astype(np.float64).mean(axis=0)
        for i in range(min(model.k, 4)):
            proj = analytics.pc_project(m.values, model, i)
            spread = float(np.std(proj)) or 1.0
            for j, step in enumerate(np.linspace(-2.0, 2.0, 5)):
                v = analytics.analogy_shift(centre, model, i, step * spread)
                save_png(self.gateway.decode_formal(v.astype(np.float32)), out / f"pc{i}_{j}.png")

    # distances ------------------------------------------------------------

    def distances(self, spaces=SPACES) -> dict:
        recs = self.records()
        labels = {
            "author": {r.id: r.artist for r in recs},
            "style": {r.id: (r.style or "") for r in recs},
        }
        inputs = [self.ws.manifest] + [self.ws.embeddings(s) for s in spaces]
        key = stage_key(self.cfg, ["distances"], inputs)
        out = self.ws / "distances" / "distances.tsv"
        if is_fresh(self.ws, "distances", key, [out]):
            return {"skipped": True}
        rows = []
        for space in spaces:
            m = self.load_space(space)
            for g in self.cfg.distances.groupings:
                if g not in labels:
                    raise PreconditionError(f"unknown grouping {g!r}")
                rep = analytics.group_distance_stats(m, labels[g], self.cfg.distances.sample_budget,
                                                     self.cfg.distances.seed, g)
                r = rep.row()
                rows.append([r["grouping"], r["space"], _fmt(r["mean_same"]), _fmt(r["mean_diff"]),
                             _fmt(r["pct_diff"]), _fmt(r["ks"]), r["n_same"], r["n_diff"]])
        write_tsv(out, ["grouping", "space", "mean_same", "mean_diff", "pct_diff", "ks", "n_same", "n_diff"], rows)
        write_stamp(self.ws, "distances", key)
        return {"rows": len(rows)}

    # project2d ------------------------------------------------------------

    def project2d(self, space: str) -> dict:
        m = self.load_space(space)
        out = self.ws / "project2d" / f"{space}.tsv"
        key = stage_key(self.cfg, ["project2d"], [self.ws.embeddings(space), self.ws.manifest])
        if is_fresh(self.ws, f"project2d-{space}", key, [out]):
            return {"skipped": True}
        p = self.cfg.project2d
        xy = analytics.project_2d(m, p.method, p.params, p.seed)
        decade = {r.id: r.decade for r in self.records()}
        write_tsv(out, ["painting_id", "decade", "x", "y"],
                  [[pid, decade.get(pid, ""), _fmt(x), _fmt(y)] for pid, (x, y) in zip(m.ids, xy)])
        write_stamp(self.ws, f"project2d-{space}", key)
        return {"n": m.n, "method": p.method}

    # year models ----------------------------------------------------------

    def _xy(self, space: str, ids):
        m = self.load_space(space)
        sub = m.subset(ids)
        decade = {r.id: r.decade for r in self.records()}
        return sub.values, np.array([decade[i] for i in sub.ids], dtype=np.float64), sub.ids

    def train_year(self, space: str) -> dict:
        out = self.ws.year_model(space)
        split_path = self.ws / "year" / "split.json"
        key = stage_key(self.cfg, ["split", "gbt"], [self.ws.manifest, self.ws.embeddings(space)])
        if is_fresh(self.ws, f"train-year-{space}", key, [out / "model.json", split_path]):
            return {"skipped": True}
        train, test = chronometry.split(self.records(), self.cfg.split)
        with _atomic_text(split_path) as fh:
            fh.write(json.dumps({"train": train, "test": test}, indent=0) + "\n")
        X, y, _ = self._xy(space, train)
        model = chronometry.train_year_model(X, y, self.cfg.gbt, space)
        model.save(out)
        write_stamp(self.ws, f"train-year-{space}", key)
        return {"n_train": len(train), "digest": model.training_digest}

    def eval_year(self, space: str) -> dict:
        model = chronometry.YearModel.load(self.ws.year_model(space))
        split_path = self.ws.require(self.ws / "year" / "split.json")
        test = json.loads(split_path.read_text())["test"]
        X, y, ids = self._xy(space, test)
        rep = chronometry.evaluate(model, X, y, ids)
        out = self.ws / "year" / space
        write_tsv(out / "predictions.tsv", ["painting_id", "decade", "predicted_year"],
                  [[pid, t, _fmt(p)] for pid, t, p in rep.predictions])
        write_tsv(out / "metrics.tsv", ["space", "r2", "pearson", "n_test"],
                  [[space, _fmt(rep.r2), _fmt(rep.pearson), len(ids)]])
        return {"r2": rep.r2, "pearson": rep.pearson}

    # keywords -------------------------------------------------------------

    def keywords(self) -> dict:
        key = stage_key(self.cfg, ["backend"], [self.ws.require(self.ws.manifest)])
        freq_path = self.ws / "keywords" / "frequency.tsv"
        if is_fresh(self.ws, "keywords", key, [self.ws.prompts, freq_path]):
            return {"skipped": True}
        recs = self.records()
        rows = [[r.id, r.decade, self.gateway.interrogate(self.load_image(r))] for r in recs]
        write_tsv(self.ws.prompts, ["painting_id", "decade", "prompt"], rows)
        table = culturomics.build_frequency_table(self.docs())
        out = []
        for w in sorted(table.freq):
            for d in sorted(table.freq[w]):
                out.append([w, d, table.counts[w][d], _fmt(table.freq[w][d])])
        write_tsv(freq_path, ["word", "decade", "paintings", "frequency"], out)
        write_stamp(self.ws, "keywords", key)
        return {"prompts": len(rows), "words": len(table.freq)}

    def docs(self) -> list:
        rows = read_tsv(self.ws.require(self.ws.prompts))
        return [culturomics.make_doc(r["painting_id"], int(r["decade"]), r["prompt"]) for r in rows]

    def trends(self) -> dict:
        table = culturomics.build_frequency_table(self.docs())
        kp = self.cfg.keywords
        rep = culturomics.trend_slopes(table, kp.min_support)
        rows = [[w, _fmt(rep.slopes[w]), rep.support[w]] for w in rep.most_increased]
        write_tsv(self.ws / "keywords" / "trends.tsv", ["word", "slope_per_year", "support"], rows)
        return {"increasing": rep.most_increased[:kp.top], "decreasing": rep.most_decreased[:kp.top]}

    def exclusions(self) -> culturomics.Exclusions:
        def names(p):
            if p is None:
                return []
            return [ln.strip() for ln in Path(p).read_text(encoding="utf-8").splitlines() if ln.strip()]

        artists = names(self.cfg.exclusions.artists)
        if self.cfg.exclusions.artists is None:
            artists = sorted({r.artist for r in self.records() if r.artist})
        movements = names(self.cfg.exclusions.movements)
        if self.cfg.exclusions.movements is None:
            movements = sorted({r.style for r in self.records() if r.style})
        return culturomics.Exclusions.from_names(artists, movements)

    def century_prompts(self) -> dict:
        kp = self.cfg.keywords
        sets = culturomics.assign_and_select_century_keywords(
            self.docs(), self.exclusions(), kp.n_words, kp.pool, kp.normalize)
        culturomics.save_keyword_sets(sets, self.ws.century_keywords)
        rows = []
        for c in sorted(sets):
            text = culturomics.build_prompt(sets[c], self.cfg.experiment.separator) if sets[c].words else ""
            rows.append([c, len(sets[c].words), self.gateway.count_tokens(text), text])
        write_tsv(self.ws / "keywords" / "century_prompts.tsv", ["century", "words", "tokens", "prompt"], rows)
        return {c: len(s.words) for c, s in sets.items()}

    # experiment -----------------------------------------------------------

    def temporal_axis(self) -> analytics.TemporalAxis:
        m = self.load_space("C")
        decades = {r.id: r.decade for r in self.records()}
        axis = analytics.temporal_axis(m, decades)
        axis.save(self.ws.axis)
        return axis

    def experiment(self) -> dict:
        plan = self.cfg.experiment
        model = chronometry.YearModel.load(self.ws.year_model("C"))
        prompts = culturomics.load_keyword_sets(self.ws.require(self.ws.century_keywords))
        axis = self.temporal_axis()
        image_dir = self.ws / "experiment" / "images"
        recs = timeshift.run_experiment(plan, self.records(), prompts, self.gateway, model, axis,
                                        self.load_image, image_dir)
        for r in recs:
            r.generated_image_ref = self._relative(r.generated_image_ref)
        timeshift.write_records(recs, self.ws.records)
        summary = timeshift.summarize(recs, self.cfg.lowess.frac, self.cfg.lowess.iters)
        self.write_summary(summary)
        return summary.coverage

    def write_summary(self, summary: timeshift.ExperimentSummary) -> None:
        out = self.ws / "experiment"
        cols = ["century", "condition", "steps", "n", "mean_predicted_year", "std_predicted_year",
                "mean_axis_value", "std_axis_value"]
        write_tsv(out / "summary.tsv", cols,
                  [[c[k] if k in ("century", "condition", "steps", "n") else _fmt(c[k]) for k in cols]
                   for c in summary.cells])
        rows = []
        for (cond, steps), curve in sorted(summary.curves.items()):
            for x, y in zip(curve.xs, curve.ys):
                rows.append([cond, steps, _fmt(x), _fmt(y)])
        write_tsv(out / "lowess.tsv", ["condition", "steps", "decade", "fitted_year"], rows)
        rows = [[cond, summary.axis_step, _fmt(v)] for cond in sorted(summary.axis_values)
                for v in summary.axis_values[cond]]
        write_tsv(out / "axis_values.tsv", ["condition", "steps", "axis_value"], rows)

    def noise_probe(self) -> dict:
        model = chronometry.YearModel.load(self.ws.year_model("C"))
        p = self.cfg.noise_probe
        preds, mean = timeshift.noise_probe(model, self.gateway, p.n, p.seed)
        write_tsv(self.ws / "noise_probe" / "predictions.tsv", ["index", "predicted_year"],
                  [[i, _fmt(v)] for i, v in enumerate(preds)])
        return {"n": p.n, "mean_predicted_year": mean}

    def zero_step_check(self, rec) -> bool:
        """Whether generation with zero diffusion steps returns the input bytes."""
        image = self.load_image(rec)
        out = self.gateway.generate(image, GenerationParams(prompt="", diffusion_steps=0))
        return out.tobytes() == image.tobytes()

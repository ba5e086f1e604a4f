"""Future-directed vs. random-diffusion generation experiment.

Paintings of century ``t`` are regenerated image-to-image, once guided by the
keyword prompt of century ``t + 100`` and once with an empty prompt, over a
sweep of diffusion steps. Each output is re-encoded, dated by the context
year model and projected onto the temporal axis.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .analytics import TemporalAxis, axis_projection
from .chronometry import YearModel, lowess, predict_years
from .culturomics import CenturyKeywordSet, build_prompt
from .errors import ArtContextError, PreconditionError
from .gateway.base import DEFAULT_DDIM_STEPS, GenerationParams, ModelGateway
from .imaging import store_content_addressed

logger = logging.getLogger(__name__)

FUTURE = "future-directed"
RANDOM = "random-diffusion"
ORIGINAL = "original"
DEFAULT_STEPS = (1, 5, 10, 20, 30, 40, 50)


@dataclass
class ExperimentPlan:
    centuries: list = field(default_factory=lambda: [1500, 1600, 1700, 1800, 1900])
    per_century: int = 500
    steps: list = field(default_factory=lambda: list(DEFAULT_STEPS))
    ddim_steps: int = DEFAULT_DDIM_STEPS
    seed: int = 0
    separator: str = "space"
    conditions: list = field(default_factory=lambda: [FUTURE, RANDOM])

    def __post_init__(self):
        if self.per_century < 1:
            raise ValueError("per_century must be at least 1")
        if any(not 0 <= s <= self.ddim_steps for s in self.steps):
            raise ValueError(f"steps must lie in [0, {self.ddim_steps}]")
        unknown = set(self.conditions) - {FUTURE, RANDOM}
        if unknown:
            raise ValueError(f"unknown conditions {sorted(unknown)}")


@dataclass
class GenerationRecord:
    source_id: str
    source_century: int
    source_decade: int
    condition: str
    diffusion_steps: int
    generated_image_ref: str
    predicted_year: float
    axis_value: float
    context_latent: Optional[np.ndarray] = field(default=None, repr=False)
    status: str = "ok"

    FIELDS = ("source_id", "source_century", "source_decade", "condition", "diffusion_steps",
              "generated_image_ref", "predicted_year", "axis_value", "status")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}


def sample_paintings(records: Sequence, per_century: int, seed: int,
                     centuries: Optional[Sequence[int]] = None) -> dict:
    """Seeded sample of painting ids per century, without replacement."""
    by_century = defaultdict(list)
    for r in records:
        by_century[r.century].append(r.id)
    wanted = sorted(centuries) if centuries is not None else sorted(by_century)
    out = {}
    for c in wanted:
        ids = sorted(by_century.get(c, []))
        if not ids:
            raise PreconditionError(f"no paintings from the {c}s in the corpus")
        if len(ids) <= per_century:
            if len(ids) < per_century:
                logger.warning("century %d has %d paintings (< %d); taking all", c, len(ids), per_century)
            out[c] = ids
            continue
        rng = np.random.default_rng([seed, c])
        picks = rng.choice(len(ids), size=per_century, replace=False)
        out[c] = sorted(ids[i] for i in picks)
    return out


def compute_diffusion_steps(strength: float, ddim_steps: int) -> int:
    """``strength * ddim_steps`` rounded half away from zero."""
    if not 0 <= strength <= 1:
        raise PreconditionError("strength must lie in [0, 1]")
    value = Decimal(repr(float(strength))) * Decimal(int(ddim_steps))
    return int(value.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def cell_seed(plan_seed: int, source_id: str, condition: str, steps: int) -> int:
    key = json.dumps([plan_seed, source_id, condition, steps]).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def run_cell(image: np.ndarray, rec, condition: str, steps: int, prompt: str, plan: ExperimentPlan,
             gateway: ModelGateway, year_model: YearModel, axis: TemporalAxis,
             image_dir=None) -> GenerationRecord:
    """One (painting, condition, steps) cell; reproducible in isolation."""
    params = GenerationParams(
        prompt=prompt,
        ddim_steps=plan.ddim_steps,
        diffusion_steps=steps,
        seed=cell_seed(plan.seed, rec.id, condition, steps),
    )
    out = gateway.generate(image, params)
    ctx = gateway.encode_context(out)
    ref = str(store_content_addressed(out, image_dir)) if image_dir is not None else ""
    return GenerationRecord(
        rec.id, rec.century, rec.decade, condition, steps, ref,
        float(predict_years(year_model, ctx[None, :])[0]),
        axis_projection(ctx, axis),
        ctx,
    )


def run_experiment(plan: ExperimentPlan, corpus: Sequence, prompts: Mapping[int, CenturyKeywordSet],
                   gateway: ModelGateway, year_model: YearModel, axis: TemporalAxis,
                   load_image: Callable, image_dir=None) -> list:
    """Generate every cell of the plan.

    Also emits one ``original`` row per sampled painting (the source itself)
    so summaries can compare against the unmodified paintings. The latest
    century has no successor and only runs the random-diffusion condition.
    """
    if year_model.space != "C":
        raise PreconditionError("the experiment needs a context-space (C) year model")
    sample = sample_paintings(corpus, plan.per_century, plan.seed, plan.centuries)
    latest = max(plan.centuries)
    if FUTURE in plan.conditions:
        missing = [c + 100 for c in sample if c != latest and c + 100 not in prompts]
        if missing:
            raise PreconditionError(f"no keyword prompt for centuries {missing}")
    prompt_text = {c: build_prompt(prompts[c + 100], plan.separator)
                   for c in sample if c != latest and c + 100 in prompts}

    by_id = {r.id: r for r in corpus}
    records, failures = [], 0
    for century in sorted(sample):
        for pid in sample[century]:
            rec = by_id[pid]
            image = load_image(rec)
            ctx = gateway.encode_context(image)
            records.append(GenerationRecord(
                pid, century, rec.decade, ORIGINAL, 0, rec.image_ref,
                float(predict_years(year_model, ctx[None, :])[0]), axis_projection(ctx, axis), ctx,
            ))
            for condition in plan.conditions:
                if condition == FUTURE and century == latest:
                    continue
                prompt = prompt_text[century] if condition == FUTURE else ""
                for steps in plan.steps:
                    try:
                        records.append(run_cell(image, rec, condition, steps, prompt, plan,
                                                gateway, year_model, axis, image_dir))
                    except ArtContextError as exc:
                        failures += 1
                        logger.error("generation failed for %s/%s/%d: %s", pid, condition, steps, exc)
                        records.append(GenerationRecord(pid, century, rec.decade, condition, steps, "",
                                                        float("nan"), float("nan"), None, "failed"))
    if failures:
        logger.warning("%d generations failed", failures)
    return records


# --------------------------------------------------------------------------
# summaries


@dataclass
class ExperimentSummary:
    cells: list  # dicts: century, condition, steps, n, mean/std predicted_year, mean axis
    axis_values: dict  # condition -> list of axis values at the highlighted step
    axis_step: int
    curves: dict  # (condition, steps) -> TrendCurve
    coverage: dict  # ok / failed counts


def _sort_key(r):
    return (r.source_id, r.condition, r.diffusion_steps)


def summarize(records: Sequence[GenerationRecord], frac: float = 2.0 / 3.0, iters: int = 3,
              axis_step: Optional[int] = 1) -> ExperimentSummary:
    if not records:
        raise PreconditionError("no records to summarize")
    ok = sorted((r for r in records if r.status == "ok"), key=_sort_key)
    coverage = {"ok": len(ok), "failed": len(records) - len(ok)}

    groups = defaultdict(list)
    for r in ok:
        groups[(r.source_century, r.condition, r.diffusion_steps)].append(r)
    cells = []
    for (century, condition, steps), rs in sorted(groups.items()):
        years = np.array([r.predicted_year for r in rs])
        axes = np.array([r.axis_value for r in rs])
        cells.append({
            "century": century,
            "condition": condition,
            "steps": steps,
            "n": len(rs),
            "mean_predicted_year": float(years.mean()),
            "std_predicted_year": float(years.std()),
            "mean_axis_value": float(axes.mean()),
            "std_axis_value": float(axes.std()),
        })

    generated_steps = sorted({r.diffusion_steps for r in ok if r.condition != ORIGINAL})
    if axis_step not in generated_steps:
        positive = [s for s in generated_steps if s > 0]
        axis_step = positive[0] if positive else (generated_steps[0] if generated_steps else 0)
    axis_values = defaultdict(list)
    for r in ok:
        if r.condition == ORIGINAL or r.diffusion_steps == axis_step:
            axis_values[r.condition].append(r.axis_value)

    curves = {}
    by_cond_step = defaultdict(list)
    for r in ok:
        by_cond_step[(r.condition, r.diffusion_steps)].append(r)
    for key, rs in sorted(by_cond_step.items()):
        xs = np.array([r.source_decade for r in rs], dtype=float)
        ys = np.array([r.predicted_year for r in rs])
        if len(rs) >= 3 and not np.all(xs == xs[0]):
            curves[key] = lowess(xs, ys, frac, iters)
    return ExperimentSummary(cells, dict(axis_values), axis_step, curves, coverage)


def cell_mean(summary: ExperimentSummary, century: int, condition: str, steps: int, what="mean_predicted_year"):
    for c in summary.cells:
        if c["century"] == century and c["condition"] == condition and c["steps"] == steps:
            return c[what]
    raise KeyError((century, condition, steps))


# --------------------------------------------------------------------------
# white-noise probe


def noise_images(n: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield rng.integers(0, 256, size=(512, 512, 3), dtype=np.uint8)


def noise_probe(year_model: YearModel, gateway: ModelGateway, n: int, seed: int = 0) -> tuple:
    """Predicted years for ``n`` uniform white-noise images; returns (sample, mean)."""
    if n < 1:
        raise PreconditionError("noise probe needs n >= 1")
    latents = np.stack([gateway.encode_context(img) for img in noise_images(n, seed)])
    preds = predict_years(year_model, latents)
    return preds, float(preds.mean())


# --------------------------------------------------------------------------
# persistence


def write_records(records: Sequence[GenerationRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=GenerationRecord.FIELDS, delimiter="\t", lineterminator="\n")
        w.writeheader()
        for r in sorted(records, key=lambda r: (r.source_century, _sort_key(r))):
            row = r.row()
            row["predicted_year"] = f"{r.predicted_year:.6f}"
            row["axis_value"] = f"{r.axis_value:.6f}"
            w.writerow(row)
    return path


def read_records(path) -> list:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            out.append(GenerationRecord(
                row["source_id"], int(row["source_century"]), int(row["source_decade"]), row["condition"],
                int(row["diffusion_steps"]), row["generated_image_ref"], float(row["predicted_year"]),
                float(row["axis_value"]), None, row["status"],
            ))
    return out

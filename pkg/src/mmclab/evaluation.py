"""Zero-shot prompts, classification rules, and grouped accuracy reports on the
training (ID) and true (OOD) distributions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import (DataModel1Params, DataModel2Params, LatentBatch,
                      ModalityConfig, PairedDataset, enumerate_latents_dm2,
                      project_latents, sample_latents_dm1, sample_latents_dm2)
from .errors import ArgumentError, ConfigurationError, DimensionError, NumericError
from .numerics import Dictionary, RngStream, _readonly
from .training import MMCLModel, ProbeModel, SLModel, SupConEncoder

SMALL_GROUP_COUNT = 50


@dataclass(frozen=True)
class PromptSet:
    """One text prompt per class: p_y = D_T zbar_y, with zbar_y the latent
    class mean under the true distribution."""

    classes: tuple               # ascending; argmax ties resolve to the first
    latent_means: np.ndarray     # n_classes x l
    prompts: np.ndarray          # n_classes x d_T

    def __post_init__(self):
        object.__setattr__(self, "latent_means", _readonly(self.latent_means))
        object.__setattr__(self, "prompts", _readonly(self.prompts))


def build_prompts(params, text_dictionary: Dictionary) -> PromptSet:
    """Prompts for every class of a data model.

    Model 1: zbar_{+-1} = [+-1, 0]. Model 2: zbar for class (k, c) = c e_k
    (the spurious coordinate has mean zero under the true distribution).
    """
    if text_dictionary.latent_dim != params.l:
        raise DimensionError(
            f"dictionary latent dim {text_dictionary.latent_dim} != model dim {params.l}")
    if isinstance(params, DataModel1Params):
        classes = (-1, 1)
        means = np.array([[-1.0, 0.0], [1.0, 0.0]])
    elif isinstance(params, DataModel2Params):
        classes = tuple(range(1, 2 * params.m + 1))
        means = np.zeros((2 * params.m, params.l))
        for y in classes:
            k, c = params.alias(y)
            means[y - 1, k - 1] = c
    else:
        raise ArgumentError(f"unsupported params type {type(params).__name__}")
    return PromptSet(classes=classes, latent_means=means,
                     prompts=means @ text_dictionary.matrix.T)


def _argmax_labels(scores: np.ndarray, classes: tuple) -> np.ndarray:
    if not np.all(np.isfinite(scores)):
        raise NumericError("non-finite classification scores")
    picks = scores.argmax(axis=1)  # first (lowest-class) winner on exact ties
    return np.asarray(classes)[picks]


def zero_shot_predict(model: MMCLModel, x_image: np.ndarray, prompts: PromptSet) -> int:
    """Predicted class: argmax_y x^T G p_y (ties to the lowest class)."""
    x = np.asarray(x_image, dtype=float)
    if x.shape != (model.G.shape[0],):
        raise DimensionError(f"input shape {x.shape} does not match G {model.G.shape}")
    if prompts.prompts.shape[1] != model.G.shape[1]:
        raise DimensionError("prompt dimension does not match G")
    scores = (x @ model.G) @ prompts.prompts.T
    return int(_argmax_labels(scores[None, :], prompts.classes)[0])


@dataclass(frozen=True)
class EvalSampler:
    """Where evaluation inputs come from: data-model parameters, a split, and
    the image-side projection config. ``exhaustive`` enumerates model 2 instead
    of sampling."""

    params: object
    split: str
    image_cfg: ModalityConfig
    exhaustive: bool = False

    def draw(self, n_eval: int | None, rng: RngStream | None) -> LatentBatch:
        if isinstance(self.params, DataModel1Params):
            if self.exhaustive:
                raise ConfigurationError("model 1 has no exhaustive evaluation mode")
            if n_eval is None or n_eval < 1:
                raise ArgumentError("sampled evaluation needs n_eval >= 1")
            return sample_latents_dm1(self.params, n_eval, self.split, rng.child(11))
        if self.exhaustive:
            return enumerate_latents_dm2(self.params, self.split)
        if n_eval is None or n_eval < 1:
            raise ArgumentError("sampled evaluation needs n_eval >= 1")
        return sample_latents_dm2(self.params, n_eval, self.split, rng.child(11))


@dataclass(frozen=True)
class GroupStat:
    accuracy: float
    count: int
    mc_radius: float
    minority: bool
    small_sample: bool


@dataclass(frozen=True)
class EvalReport:
    """Overall and per-group accuracy with Monte Carlo confidence radii.

    Group keys: model 1 uses (y, a) pairs; model 2 uses the class label plus
    whether the spurious coordinate agreed with it. ``mc_radius`` is the 95%
    normal-approximation half-width; groups with fewer than 50 samples are
    flagged ``small_sample``.
    """

    overall_accuracy: float
    groups: dict[str, GroupStat]
    n_eval: int
    mc_radius: float
    split: str
    mode: str = "sampled"

    def minority_accuracy(self) -> float:
        """Count-weighted accuracy over groups where the spurious cue fails."""
        hits = sum(g.accuracy * g.count for g in self.groups.values() if g.minority)
        total = sum(g.count for g in self.groups.values() if g.minority)
        if total == 0:
            raise ArgumentError("no minority examples in this evaluation")
        return hits / total


def _mc_radius(acc: float, n: int) -> float:
    return 1.96 * np.sqrt(max(acc * (1.0 - acc), 0.0) / n)


def _report(correct: np.ndarray, batch: LatentBatch, split: str, mode: str) -> EvalReport:
    n = len(batch)
    agree = batch.spurious_agrees()
    groups = {}
    if batch.model == "dm1":
        keys = [(y, a) for y in (-1, 1) for a in (-1, 1)]
        for y, a in keys:
            sel = (batch.y == y) & (batch.a == a)
            cnt = int(sel.sum())
            if cnt == 0:
                continue
            acc = float(correct[sel].mean())
            groups[f"y={y:+d},a={a:+d}"] = GroupStat(
                acc, cnt, _mc_radius(acc, cnt), minority=(a != y),
                small_sample=cnt < SMALL_GROUP_COUNT)
    else:
        for y in np.unique(batch.y):
            for flag, tag in ((True, "agree"), (False, "flip")):
                sel = (batch.y == y) & (agree == flag)
                cnt = int(sel.sum())
                if cnt == 0:
                    continue
                acc = float(correct[sel].mean())
                groups[f"y={int(y)},spu={tag}"] = GroupStat(
                    acc, cnt, _mc_radius(acc, cnt), minority=not flag,
                    small_sample=cnt < SMALL_GROUP_COUNT)
    overall = float(correct.mean())
    return EvalReport(overall_accuracy=overall, groups=groups, n_eval=n,
                      mc_radius=_mc_radius(overall, n), split=split, mode=mode)


def _eval_inputs(sampler: EvalSampler, n_eval, rng):
    batch = sampler.draw(n_eval, rng)
    noise_rng = None if rng is None else rng.child(12)
    if sampler.image_cfg.noise_sigma > 0 and noise_rng is None:
        raise ArgumentError("noisy evaluation requires an RngStream")
    x = project_latents(batch.z, sampler.image_cfg, noise_rng)
    mode = "exhaustive" if sampler.exhaustive else "sampled"
    return x, batch, mode


def evaluate_zero_shot(model: MMCLModel, prompts: PromptSet, sampler: EvalSampler,
                       n_eval: int | None = None,
                       rng: RngStream | None = None) -> EvalReport:
    """Grouped zero-shot accuracy of a contrastive model on fresh inputs."""
    if sampler.image_cfg.ambient_dim != model.G.shape[0]:
        raise ConfigurationError(
            f"image dim {sampler.image_cfg.ambient_dim} does not match G rows {model.G.shape[0]}")
    x, batch, mode = _eval_inputs(sampler, n_eval, rng)
    scores = (x @ model.G) @ prompts.prompts.T
    pred = _argmax_labels(scores, prompts.classes)
    return _report(pred == batch.y, batch, sampler.split, mode)


def _linear_predictions(w: np.ndarray, classes: tuple, x: np.ndarray) -> np.ndarray:
    if w.shape[1] == 1:
        raw = np.sign(x @ w[:, 0])
        return np.where(raw == 0, classes[0], raw).astype(int)
    return _argmax_labels(x @ w, classes)


def evaluate_sl(model: SLModel, sampler: EvalSampler, n_eval: int | None = None,
                rng: RngStream | None = None) -> EvalReport:
    """Grouped accuracy of a supervised linear model (sign or argmax rule)."""
    if sampler.image_cfg.ambient_dim != model.W.shape[0]:
        raise ConfigurationError("image dim does not match the model weight rows")
    x, batch, mode = _eval_inputs(sampler, n_eval, rng)
    pred = _linear_predictions(model.W, model.classes, x)
    return _report(pred == batch.y, batch, sampler.split, mode)


def evaluate_probe(encoder: SupConEncoder, probe: ProbeModel, sampler: EvalSampler,
                   n_eval: int | None = None,
                   rng: RngStream | None = None) -> EvalReport:
    """Grouped accuracy of a linear probe on frozen encoder representations."""
    if sampler.image_cfg.ambient_dim != encoder.W.shape[1]:
        raise ConfigurationError("image dim does not match the encoder input dim")
    x, batch, mode = _eval_inputs(sampler, n_eval, rng)
    pred = _linear_predictions(probe.B.T, probe.classes, encoder.transform(x))
    return _report(pred == batch.y, batch, sampler.split, mode)


@dataclass(frozen=True)
class GroupGeometry:
    """Collinearity diagnostics of the four (c, spurious-sign) group means."""

    residual: float
    ordering: tuple                 # (c, sign) keys by increasing line coordinate
    coefficients: dict              # (c, sign) -> mean line coordinate across k


def supcon_group_geometry(encoder: SupConEncoder, data: PairedDataset) -> GroupGeometry:
    """Line fit through the four group-mean representations per class pair.

    For each core coordinate k, examples split into groups by (c, sign of the
    spurious coordinate); their mean representations are projected on the best
    line through them. ``residual`` is the worst distance to the line across
    all k; the ordering of the four line coordinates is shared across k and
    orientation-fixed so that (+1, +1) exceeds (-1, -1).
    """
    batch = data.latents
    if batch.model != "dm2":
        raise ArgumentError("group geometry requires model-2 data")
    m = batch.l // 2
    spu_sign = np.sign(batch.z[np.arange(len(batch)), batch.k - 1 + m]).astype(int)
    reps = encoder.transform(data.x_image)
    keys = [(-1, -1), (1, -1), (-1, 1), (1, 1)]
    worst = 0.0
    coeff_sums = {key: 0.0 for key in keys}
    ordering = None
    for k in range(1, m + 1):
        points = []
        for c, s in keys:
            sel = (batch.k == k) & (batch.c == c) & (spu_sign == s)
            if not sel.any():
                raise ArgumentError(f"group (k={k}, c={c:+d}, sign={s:+d}) is empty; "
                                    "both spurious signs must be present")
            points.append(reps[sel].mean(axis=0))
        pts = np.stack(points)
        center = pts.mean(axis=0)
        _, _, vt = np.linalg.svd(pts - center)
        direction = vt[0]
        coords = (pts - center) @ direction
        if coords[keys.index((1, 1))] < coords[keys.index((-1, -1))]:
            coords = -coords
        resid = np.linalg.norm((pts - center) - np.outer(coords, direction), axis=1)
        worst = max(worst, float(resid.max()))
        order_k = tuple(keys[i] for i in np.argsort(coords, kind="stable"))
        if ordering is None:
            ordering = order_k
        for key, val in zip(keys, coords):
            coeff_sums[key] += float(val)
    coefficients = {key: val / m for key, val in coeff_sums.items()}
    return GroupGeometry(residual=worst, ordering=ordering, coefficients=coefficients)

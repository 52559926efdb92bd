"""Experiment configs, a deterministic parallel runner, theory comparisons, and
CSV/JSON report emission.

A config is a JSON document (see docs/config_example.json). Sweeps expand to a
cartesian grid of cells; every (cell, trial) pair runs on its own counter-based
random stream, so results are byte-identical for a fixed root seed at any
thread count.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import covariance, datagen, evaluation, theory, training
from .datagen import CaptionMask, DataModel1Params, DataModel2Params
from .errors import MmclabError, ValidationError
from .numerics import RngStream, make_dictionary, stream_id_for

EXPERIMENT_KINDS = ("dm1-robustness", "dm2-robustness", "caption-sweep-dm1",
                    "caption-sweep-dm2", "method-compare", "verify-theorems")
METHODS = ("mmcl-closed", "mmcl-gd", "mmcl-analytic", "sl", "supcon")
SUITES = ("all", "dm1", "dm2", "captions", "supcon", "id")

CSV_COLUMNS = ("run_id", "experiment", "seed", "method", "n_train", "d_I", "d_T",
               "p_dim", "rho", "sigma_core", "sigma_spu", "p_spu", "m", "alpha",
               "beta", "pi_core", "pi_spu", "pi", "split", "group", "metric",
               "value", "prediction", "comparator", "pass")

_TOP_KEYS = {"experiment", "name", "root_seed", "trials", "tolerance",
             "min_pass_fraction", "data", "modality", "methods", "train",
             "eval", "sweep", "slacks", "method_overrides"}
_DATA_KEYS = {"model", "sigma_core", "sigma_spu", "p_spu", "m", "alpha", "beta",
              "pi_core", "pi_spu", "pi", "exponent_variant"}
_MODALITY_KEYS = {"d_I", "d_T", "noise_sigma_I", "noise_sigma_T", "dictionary"}
_TRAIN_KEYS = {"n_train", "p_dim", "rho", "lr", "epochs", "exhaustive",
               "probe_lr", "probe_epochs"}
_EVAL_KEYS = {"n_eval", "splits", "exhaustive", "noise_sigma",
              "supcon_restarts", "supcon_geometry", "adversarial_probe_epochs"}
_SWEEPABLE = {"pi_core", "pi_spu", "pi", "p_spu", "sigma_core", "sigma_spu",
              "alpha", "beta", "m", "n_train", "p_dim", "rho"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description. Sections are plain dicts so configs
    round-trip through JSON unchanged."""

    experiment: str
    name: str
    root_seed: int = 0
    trials: int = 1
    tolerance: float = 0.02
    min_pass_fraction: float = 1.0
    data: dict = field(default_factory=dict)
    modality: dict = field(default_factory=dict)
    methods: tuple = ()
    train: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    slacks: dict = field(default_factory=dict)
    method_overrides: dict = field(default_factory=dict)


def _check_keys(section: dict, allowed: set, where: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ValidationError(f"unknown keys in {where}: {', '.join(unknown)}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build and validate a config from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ValidationError("config document must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "config")
    experiment = doc.get("experiment")
    if experiment not in EXPERIMENT_KINDS:
        raise ValidationError(
            f"experiment must be one of {EXPERIMENT_KINDS}, got {experiment!r}")
    trials = doc.get("trials", 1)
    if not isinstance(trials, int) or trials < 1:
        raise ValidationError(f"trials must be an integer >= 1, got {trials!r}")
    data = dict(doc.get("data", {}))
    _check_keys(data, _DATA_KEYS, "data")
    modality = dict(doc.get("modality", {}))
    _check_keys(modality, _MODALITY_KEYS, "modality")
    train = dict(doc.get("train", {}))
    _check_keys(train, _TRAIN_KEYS, "train")
    eval_sec = dict(doc.get("eval", {}))
    _check_keys(eval_sec, _EVAL_KEYS, "eval")
    sweep = dict(doc.get("sweep", {}))
    _check_keys(sweep, _SWEEPABLE, "sweep")
    for key, values in sweep.items():
        if not isinstance(values, list) or not values:
            raise ValidationError(f"sweep.{key} must be a non-empty list")
    methods = tuple(doc.get("methods", ()))
    bad = [mth for mth in methods if mth not in METHODS]
    if bad:
        raise ValidationError(f"unknown methods: {', '.join(bad)}")
    if experiment != "verify-theorems":
        if not methods:
            raise ValidationError("methods must be non-empty")
        if data.get("model") not in ("dm1", "dm2"):
            raise ValidationError("data.model must be dm1 or dm2")
    overrides = dict(doc.get("method_overrides", {}))
    for mth, sec in overrides.items():
        if mth not in METHODS:
            raise ValidationError(f"method_overrides for unknown method {mth!r}")
        _check_keys(sec, {"modality", "train", "eval"}, f"method_overrides.{mth}")
        _check_keys(sec.get("modality", {}), _MODALITY_KEYS, f"method_overrides.{mth}.modality")
        _check_keys(sec.get("train", {}), _TRAIN_KEYS, f"method_overrides.{mth}.train")
        _check_keys(sec.get("eval", {}), _EVAL_KEYS, f"method_overrides.{mth}.eval")
    return ExperimentConfig(
        experiment=experiment,
        name=doc.get("name", experiment),
        root_seed=doc.get("root_seed", 0),
        trials=trials,
        tolerance=doc.get("tolerance", 0.02),
        min_pass_fraction=doc.get("min_pass_fraction", 1.0),
        data=data, modality=modality, methods=methods, train=train,
        eval=eval_sec, sweep=sweep, slacks=dict(doc.get("slacks", {})),
        method_overrides=overrides,
    )


def config_from_file(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


@dataclass(frozen=True)
class RunRecord:
    """One measured (or derived) metric for one cell, trial and method."""

    run_id: str
    experiment: str
    seed: int
    method: str
    params: dict
    split: str
    group: str
    metric: str
    value: float
    prediction: float | None = None
    comparator: str | None = None
    passed: bool | None = None
    wall_time: float = 0.0
    error: str | None = None


def check_passes(value: float, prediction: float, comparator: str, slack: float) -> bool:
    if comparator == "lower-bound":
        return value >= prediction - slack
    if comparator == "upper-bound":
        return value <= prediction + slack
    if comparator == "equality-threshold":
        return abs(value - prediction) <= slack
    if comparator == "boolean-condition":
        return bool(value) == bool(prediction)
    raise ValidationError(f"unknown comparator {comparator!r}")


# ---------------------------------------------------------------------------
# cell execution


def _sweep_cells(config: ExperimentConfig) -> list[dict]:
    if not config.sweep:
        return [{}]
    keys = list(config.sweep)
    return [dict(zip(keys, combo))
            for combo in itertools.product(*(config.sweep[k] for k in keys))]


def _resolved_sections(config: ExperimentConfig, method: str, cell: dict):
    data = dict(config.data)
    modality = dict(config.modality)
    train = dict(config.train)
    eval_sec = dict(config.eval)
    override = config.method_overrides.get(method, {})
    modality.update(override.get("modality", {}))
    train.update(override.get("train", {}))
    eval_sec.update(override.get("eval", {}))
    for key, value in cell.items():
        if key in ("n_train", "p_dim", "rho"):
            train[key] = value
        else:
            data[key] = value
    return data, modality, train, eval_sec


def _make_params(data: dict):
    if data["model"] == "dm1":
        return DataModel1Params(data.get("sigma_core", 1.0),
                                data.get("sigma_spu", 0.0),
                                data.get("p_spu", 0.999))
    return DataModel2Params(int(data.get("m", 2)), data.get("alpha", 1.0),
                            data.get("beta", 0.0))


def _make_mask(data: dict) -> CaptionMask:
    if data["model"] == "dm1" and ("pi_core" in data or "pi_spu" in data):
        return CaptionMask.model1(data.get("pi_core", 1.0), data.get("pi_spu", 1.0))
    if data["model"] == "dm2" and "pi" in data:
        return CaptionMask.model2(data["pi"])
    return CaptionMask.none()


def _cell_param_row(params, train: dict, modality: dict, mask: CaptionMask) -> dict:
    row = {"n_train": train.get("n_train"), "p_dim": train.get("p_dim"),
           "rho": train.get("rho", 1.0), "d_I": modality.get("d_I"),
           "d_T": modality.get("d_T", modality.get("d_I"))}
    if isinstance(params, DataModel1Params):
        row.update(sigma_core=params.sigma_core, sigma_spu=params.sigma_spu,
                   p_spu=params.p_spu)
    else:
        row.update(m=params.m, alpha=params.alpha, beta=params.beta)
    if mask.variant == "model1":
        row.update(pi_core=mask.pi_core, pi_spu=mask.pi_spu)
    elif mask.variant == "model2":
        row.update(pi=mask.pi)
    return row


def _train_latents(params, split, train: dict, rng: RngStream):
    if train.get("exhaustive", False):
        if not isinstance(params, DataModel2Params):
            raise ValidationError("train.exhaustive requires data.model = dm2")
        return datagen.enumerate_latents_dm2(params, split)
    n = train.get("n_train")
    if n is None:
        raise ValidationError("train.n_train is required for sampled training data")
    if isinstance(params, DataModel1Params):
        return datagen.sample_latents_dm1(params, n, split, rng)
    return datagen.sample_latents_dm2(params, n, split, rng)


class _CellContext:
    """Resolved objects for running one method inside one (cell, trial)."""

    def __init__(self, config, method, cell, rng: RngStream):
        self.config = config
        self.method = method
        self.rng = rng
        data, modality, train, eval_sec = _resolved_sections(config, method, cell)
        self.data_sec, self.train_sec, self.eval_sec = data, train, eval_sec
        self.params = _make_params(data)
        self.mask = _make_mask(data)
        l = self.params.l
        d_i = modality.get("d_I", l)
        d_t = modality.get("d_T", d_i)
        kind = modality.get("dictionary", "identity-embed")
        self.dict_image = make_dictionary(d_i, l, kind, rng.child(1))
        self.dict_text = make_dictionary(d_t, l, kind, rng.child(2))
        self.image_cfg = datagen.ModalityConfig(self.dict_image,
                                                modality.get("noise_sigma_I", 0.0))
        self.text_cfg = datagen.ModalityConfig(self.dict_text,
                                               modality.get("noise_sigma_T", 0.0))
        eval_noise = eval_sec.get("noise_sigma", self.image_cfg.noise_sigma)
        self.eval_image_cfg = datagen.ModalityConfig(self.dict_image, eval_noise)
        self.modality_sec = {"d_I": d_i, "d_T": d_t}
        self.p_dim = train.get("p_dim", l)
        self.rho = train.get("rho", 1.0)

    def sampler(self, split: str) -> evaluation.EvalSampler:
        exhaustive = (self.eval_sec.get("exhaustive", False)
                      and isinstance(self.params, DataModel2Params))
        return evaluation.EvalSampler(self.params, split, self.eval_image_cfg,
                                      exhaustive=exhaustive)

    def evaluate_splits(self, eval_one) -> dict:
        reports = {}
        for i, split in enumerate(self.eval_sec.get("splits", ["true"])):
            reports[split] = eval_one(self.sampler(split),
                                      self.eval_sec.get("n_eval"),
                                      self.rng.child(40 + i))
        return reports


def _report_rows(report: evaluation.EvalReport, split: str) -> list[tuple]:
    rows = [("overall", "accuracy", report.overall_accuracy)]
    if any(g.minority for g in report.groups.values()):
        rows.append(("minority", "accuracy", report.minority_accuracy()))
    rows.extend((key, "accuracy", stat.accuracy) for key, stat in report.groups.items())
    return [(split, group, metric, value) for group, metric, value in rows]


def _run_method(ctx: _CellContext) -> list[tuple]:
    """Fit one method and return (split, group, metric, value) tuples."""
    method, params, rng = ctx.method, ctx.params, ctx.rng
    train = ctx.train_sec

    if method in ("mmcl-closed", "mmcl-gd", "mmcl-analytic"):
        if method == "mmcl-analytic":
            if isinstance(params, DataModel1Params):
                s = covariance.population_cross_cov_dm1(
                    params, ctx.mask, ctx.data_sec.get("exponent_variant", "linear"))
            else:
                pi = ctx.mask.pi if ctx.mask.variant == "model2" else 1.0
                s = covariance.population_cross_cov_dm2(params, pi)
            model = training.mmcl_fit_closed_form(s, ctx.p_dim, ctx.rho,
                                                  ctx.dict_image, ctx.dict_text)
        else:
            latents = _train_latents(params, "train", train, rng.child(20))
            dataset = datagen.make_paired_dataset(latents, ctx.image_cfg,
                                                  ctx.text_cfg, ctx.mask, rng.child(21))
            if method == "mmcl-closed":
                s = covariance.empirical_cross_cov(dataset)
                model = training.mmcl_fit_closed_form(s, ctx.p_dim, ctx.rho)
            else:
                model = training.mmcl_fit_gd(
                    dataset, ctx.p_dim, ctx.rho,
                    lr=train.get("lr", training.MMCL_GD_DEFAULTS["lr"]),
                    epochs=train.get("epochs", training.MMCL_GD_DEFAULTS["epochs"]),
                    rng=rng.child(22))
        prompts = evaluation.build_prompts(params, ctx.dict_text)
        reports = ctx.evaluate_splits(
            lambda sampler, n, r: evaluation.evaluate_zero_shot(model, prompts, sampler, n, r))
        return [row for split, rep in reports.items() for row in _report_rows(rep, split)]

    if method == "sl":
        latents = _train_latents(params, "train", train, rng.child(20))
        images = datagen.project_latents(latents.z, ctx.image_cfg, rng.child(23))
        kind = "logistic" if isinstance(params, DataModel1Params) else "cross-entropy"
        model = training.sl_fit_gd(
            images, latents.y, loss_kind=kind,
            lr=train.get("lr", training.SL_GD_DEFAULTS["lr"]),
            epochs=train.get("epochs", training.SL_GD_DEFAULTS["epochs"]),
            rng=rng.child(24))
        reports = ctx.evaluate_splits(
            lambda sampler, n, r: evaluation.evaluate_sl(model, sampler, n, r))
        return [row for split, rep in reports.items() for row in _report_rows(rep, split)]

    if method == "supcon":
        latents = _train_latents(params, "train", train, rng.child(20))
        dataset = datagen.make_paired_dataset(latents, ctx.image_cfg, ctx.image_cfg,
                                              CaptionMask.none(), rng.child(21))
        cov = covariance.supcon_class_mean_cov(dataset, latents.model)
        encoder = training.supcon_fit_closed_form(cov, ctx.p_dim, ctx.rho)
        probe = training.probe_fit(
            encoder.transform(dataset.x_image), latents.y,
            lr=train.get("probe_lr", training.SL_GD_DEFAULTS["lr"]),
            epochs=train.get("probe_epochs", training.SL_GD_DEFAULTS["epochs"]),
            rng=rng.child(25))
        reports = ctx.evaluate_splits(
            lambda sampler, n, r: evaluation.evaluate_probe(encoder, probe, sampler, n, r))
        rows = [row for split, rep in reports.items() for row in _report_rows(rep, split)]
        if ctx.eval_sec.get("supcon_geometry", False):
            true_latents = datagen.enumerate_latents_dm2(params, "true")
            true_data = datagen.make_paired_dataset(
                true_latents, ctx.eval_image_cfg, ctx.eval_image_cfg,
                CaptionMask.none(), rng.child(26))
            geometry = evaluation.supcon_group_geometry(encoder, true_data)
            rows.append(("true", "geometry", "collinearity_residual", geometry.residual))
        restarts = ctx.eval_sec.get("supcon_restarts", 0)
        if restarts:
            # strongest attack: probes retrained on true-split representations
            true_latents = datagen.enumerate_latents_dm2(params, "true")
            true_images = datagen.project_latents(true_latents.z, ctx.eval_image_cfg,
                                                  rng.child(27))
            true_reps = encoder.transform(true_images)
            epochs = ctx.eval_sec.get("adversarial_probe_epochs", 20000)
            for i in range(restarts):
                adv = training.probe_fit(true_reps, true_latents.y,
                                         epochs=epochs, rng=rng.child(300 + i))
                pred = evaluation._linear_predictions(adv.B.T, adv.classes, true_reps)
                acc = float(np.mean(pred == true_latents.y))
                rows.append(("true", f"restart={i:02d}", "best_probe_accuracy", acc))
        return rows

    raise ValidationError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# theory comparisons


def _method_family(method: str) -> str:
    return "mmcl" if method.startswith("mmcl") else method


def _checks_for(config: ExperimentConfig, ctx: _CellContext) -> dict:
    """Map (family, split, group, metric) -> (prediction, comparator)."""
    kind = config.experiment
    params, mask = ctx.params, ctx.mask
    checks = {}
    if kind == "dm1-robustness":
        bound = theory.zero_shot_robustness_dm1(params.sigma_core, params.sigma_spu, params.p_spu)
        checks[("mmcl", "true", "overall", "accuracy")] = (bound.values["overall"],
                                                           "equality-threshold")
        checks[("mmcl", "true", "minority", "accuracy")] = (bound.values["minority"],
                                                            "equality-threshold")
        sl = theory.sl_failure_bounds_dm1()
        checks[("sl", "true", "overall", "accuracy")] = (sl.values["overall"], "upper-bound")
        checks[("sl", "true", "minority", "accuracy")] = (sl.values["minority"], "upper-bound")
    elif kind == "dm2-robustness":
        holds = theory.perfect_zero_shot_condition_dm2(params.m, params.alpha, params.beta).values["condition"]
        if holds:
            checks[("mmcl", "true", "overall", "accuracy")] = (1.0, "equality-threshold")
            checks[("mmcl", "train", "overall", "accuracy")] = (1.0, "equality-threshold")
        else:
            checks[("mmcl", "true", "overall", "accuracy")] = (0.5, "upper-bound")
        try:
            sl = theory.sl_shift_ceiling_dm2(params.alpha, params.beta)
            checks[("sl", "true", "overall", "accuracy")] = (sl.values["overall"], "upper-bound")
        except MmclabError:
            pass  # vacuous bound: nothing to compare
        checks[("sl", "train", "overall", "accuracy")] = (1.0, "equality-threshold")
    elif kind == "caption-sweep-dm1":
        pred = theory.masked_minority_accuracy_dm1(
            params.sigma_core, params.sigma_spu, params.p_spu,
            mask.pi_core if mask.variant == "model1" else 1.0,
            ctx.data_sec.get("exponent_variant", "linear"))
        checks[("mmcl", "true", "minority", "accuracy")] = (pred.values["minority"],
                                                            "equality-threshold")
    elif kind == "caption-sweep-dm2":
        pi = mask.pi if mask.variant == "model2" else 1.0
        try:
            pi_tilde = theory.caption_masking_threshold_dm2(params.m, params.alpha,
                                              params.beta).values["pi_threshold"]
        except MmclabError:
            return checks
        if pi > pi_tilde:
            checks[("mmcl", "true", "overall", "accuracy")] = (1.0, "equality-threshold")
        elif pi < pi_tilde:
            checks[("mmcl", "true", "overall", "accuracy")] = (0.5, "upper-bound")
    elif kind == "method-compare":
        if isinstance(params, DataModel1Params):
            idp = theory.in_distribution_predictions_dm1(params.sigma_core, params.sigma_spu,
                                                  params.p_spu)
            checks[("sl", "train", "overall", "accuracy")] = (idp.values["sl_id"],
                                                              "lower-bound")
            checks[("mmcl", "train", "overall", "accuracy")] = (idp.values["mmcl_id"],
                                                                "equality-threshold")
            checks[("sl-vs-mmcl", "train", "overall", "id_gap")] = (0.0, "lower-bound")
            checks[("supcon", "true", "overall", "accuracy")] = (0.5, "upper-bound")
            checks[("supcon", "true", "minority", "accuracy")] = (0.0, "upper-bound")
        else:
            checks[("supcon", "true", "overall", "accuracy")] = (0.5, "equality-threshold")
            checks[("supcon", "train", "overall", "accuracy")] = (1.0, "equality-threshold")
            checks[("supcon", "true", "geometry", "collinearity_residual")] = (0.0, "upper-bound")
            checks[("supcon", "true", "*", "best_probe_accuracy")] = (0.75, "upper-bound")
    return checks


def _slack_for(config: ExperimentConfig, family, split, group, metric) -> float:
    for key in (f"{family}:{split}:{group}:{metric}", f"{family}:{split}:*:{metric}"):
        if key in config.slacks:
            return config.slacks[key]
    return config.tolerance


# ---------------------------------------------------------------------------
# runner


def _run_task(config: ExperimentConfig, cell: dict, cell_idx: int,
              trial: int) -> list[RunRecord]:
    run_id = f"{config.name}-c{cell_idx:03d}-t{trial:02d}"
    seed = stream_id_for(cell_idx, trial)
    rng = RngStream(config.root_seed, seed)
    started = time.perf_counter()
    records = []
    method_values = {}
    for method in config.methods:
        try:
            ctx = _CellContext(config, method, cell, rng.child(METHODS.index(method)))
            param_row = _cell_param_row(ctx.params, ctx.train_sec, ctx.modality_sec,
                                        ctx.mask)
            rows = _run_method(ctx)
        except MmclabError as exc:
            records.append(RunRecord(
                run_id=run_id, experiment=config.experiment, seed=seed, method=method,
                params=dict(cell), split="", group="error", metric="error",
                value=float("nan"), passed=False, error=f"{type(exc).__name__}: {exc}"))
            continue
        checks = _checks_for(config, ctx)
        family = _method_family(method)
        for split, group, metric, value in rows:
            check = checks.get((family, split, group, metric))
            if check is None:
                check = checks.get((family, split, "*", metric))
            prediction = comparator = passed = None
            if check is not None:
                prediction, comparator = check
                slack = _slack_for(config, family, split, group, metric)
                passed = check_passes(value, prediction, comparator, slack)
            records.append(RunRecord(
                run_id=run_id, experiment=config.experiment, seed=seed, method=method,
                params=param_row, split=split, group=group, metric=metric,
                value=float(value), prediction=prediction, comparator=comparator,
                passed=passed))
            method_values[(family, split, group, metric)] = float(value)
    # derived in-distribution comparison when both model families ran
    sl_id = method_values.get(("sl", "train", "overall", "accuracy"))
    mmcl_id = method_values.get(("mmcl", "train", "overall", "accuracy"))
    if config.experiment == "method-compare" and sl_id is not None and mmcl_id is not None:
        gap = sl_id - mmcl_id
        slack = _slack_for(config, "sl-vs-mmcl", "train", "overall", "id_gap")
        records.append(RunRecord(
            run_id=run_id, experiment=config.experiment, seed=seed, method="sl-vs-mmcl",
            params={}, split="train", group="overall", metric="id_gap", value=gap,
            prediction=0.0, comparator="lower-bound",
            passed=check_passes(gap, 0.0, "lower-bound", slack)))
    elapsed = time.perf_counter() - started
    return [replace(rec, wall_time=elapsed) for rec in records]


def run_experiment(config: ExperimentConfig, threads: int = 1) -> list[RunRecord]:
    """Run every sweep cell and trial; deterministic for a fixed root seed
    regardless of thread count (records come back in cell-major, trial-minor
    order and each task owns an independent random stream)."""
    if config.experiment == "verify-theorems":
        records = []
        for suite_cfg in suite_configs("all", config.root_seed):
            records.extend(run_experiment(suite_cfg, threads))
        return records
    cells = _sweep_cells(config)
    tasks = [(cell, cell_idx, trial)
             for cell_idx, cell in enumerate(cells)
             for trial in range(config.trials)]
    if threads <= 1:
        chunks = [_run_task(config, *task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda t: _run_task(config, *t), tasks))
    return [rec for chunk in chunks for rec in chunk]


# ---------------------------------------------------------------------------
# emission


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    return f"{v:.9g}"


_CSV_TEXT_COLUMNS = ("run_id", "experiment", "method", "split", "group",
                     "metric", "comparator")


def emit_csv(records: list[RunRecord], path) -> None:
    """Write records as CSV with a fixed column order and 9-significant-digit
    numbers; output bytes depend only on the records (group keys may contain
    commas, hence the csv writer)."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            row = {"run_id": rec.run_id, "experiment": rec.experiment,
                   "seed": rec.seed, "method": rec.method, "split": rec.split,
                   "group": rec.group, "metric": rec.metric, "value": rec.value,
                   "prediction": rec.prediction, "comparator": rec.comparator,
                   "pass": rec.passed}
            row.update(rec.params)
            cells = []
            for col in CSV_COLUMNS:
                value = row.get(col)
                if col in _CSV_TEXT_COLUMNS:
                    cells.append("" if value is None else str(value))
                else:
                    cells.append(_fmt(value))
            writer.writerow(cells)


def summarize(records: list[RunRecord], min_pass_fraction: float = 1.0) -> dict:
    """Aggregate per cell (mean/min/max over trials) and compute the verdict."""
    groups = {}
    for rec in records:
        key = (rec.experiment, json.dumps(rec.params, sort_keys=True), rec.method,
               rec.split, rec.group, rec.metric)
        groups.setdefault(key, []).append(rec)
    cells = []
    all_passed = True
    for key in sorted(groups, key=str):
        recs = groups[key]
        values = [r.value for r in recs if not math.isnan(r.value)]
        checked = [r for r in recs if r.passed is not None]
        entry = {
            "experiment": key[0], "params": json.loads(key[1]), "method": key[2],
            "split": key[3], "group": key[4], "metric": key[5],
            "n": len(recs),
            "mean": float(np.mean(values)) if values else None,
            "min": float(np.min(values)) if values else None,
            "max": float(np.max(values)) if values else None,
        }
        if checked:
            frac = sum(bool(r.passed) for r in checked) / len(checked)
            entry["prediction"] = checked[0].prediction
            entry["comparator"] = checked[0].comparator
            entry["pass_fraction"] = frac
            entry["passed"] = frac >= min_pass_fraction
            all_passed = all_passed and entry["passed"]
        cells.append(entry)
    errors = [{"run_id": r.run_id, "error": r.error} for r in records if r.error]
    if errors:
        all_passed = False
    return {
        "n_records": len(records),
        "experiments": sorted({r.experiment for r in records}),
        "cells": cells,
        "errors": errors,
        "all_passed": all_passed,
        "total_wall_time": round(sum({r.run_id: r.wall_time for r in records}.values()), 3),
    }


def emit_json_summary(records: list[RunRecord], path,
                      min_pass_fraction: float = 1.0) -> dict:
    summary = summarize(records, min_pass_fraction)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


# ---------------------------------------------------------------------------
# preset verification suites


def _dm1_suite(root_seed: int) -> list[ExperimentConfig]:
    mmcl = config_from_dict({
        "experiment": "dm1-robustness", "name": "dm1-mmcl", "root_seed": root_seed,
        "trials": 1, "tolerance": 0.02,
        "data": {"model": "dm1", "sigma_core": 1.0, "sigma_spu": 0.02, "p_spu": 0.999},
        "modality": {"d_I": 2, "d_T": 2, "noise_sigma_I": 0.0, "noise_sigma_T": 0.0},
        "methods": ["mmcl-closed"],
        "train": {"n_train": 20000, "p_dim": 2, "rho": 1.0},
        "eval": {"n_eval": 20000, "splits": ["true"]},
    })
    sl = config_from_dict({
        "experiment": "dm1-robustness", "name": "dm1-sl", "root_seed": root_seed,
        "trials": 10, "min_pass_fraction": 0.9,
        "data": {"model": "dm1", "sigma_core": 1.0, "sigma_spu": 0.01, "p_spu": 0.99},
        "modality": {"d_I": 2000, "noise_sigma_I": 0.1},
        "methods": ["sl"],
        # the spurious-dominated direction is already locked in well before the
        # 20000-epoch default; 5000 keeps the 10-trial suite fast
        "train": {"n_train": 500, "epochs": 5000},
        "eval": {"n_eval": 10000, "splits": ["true"]},
        # desk-scale relaxations: overall < 0.70 and minority < 0.40
        "slacks": {"sl:true:overall:accuracy": 0.70 - 2.0 / 3.0,
                   "sl:true:minority:accuracy": 0.40 - 1.0 / 3.0},
    })
    return [mmcl, sl]


def _dm2_suite(root_seed: int) -> list[ExperimentConfig]:
    mmcl = config_from_dict({
        "experiment": "dm2-robustness", "name": "dm2-mmcl", "root_seed": root_seed,
        "data": {"model": "dm2", "m": 3, "alpha": 0.7, "beta": 1.0 / 3.0},
        "modality": {"d_I": 6, "d_T": 6},
        "methods": ["mmcl-closed", "mmcl-analytic"],
        "train": {"exhaustive": True, "p_dim": 6, "rho": 1.0},
        "eval": {"exhaustive": True, "splits": ["true", "train"]},
        "slacks": {"mmcl:true:overall:accuracy": 0.0,
                   "mmcl:train:overall:accuracy": 0.0},
    })
    sl_bound = theory.sl_shift_ceiling_dm2(10.0, 1.0 / 3.0).values["overall"]
    sl = config_from_dict({
        "experiment": "dm2-robustness", "name": "dm2-sl", "root_seed": root_seed,
        "data": {"model": "dm2", "m": 3, "alpha": 10.0, "beta": 1.0 / 3.0},
        "modality": {"d_I": 6},
        "methods": ["sl"],
        "train": {"exhaustive": True, "epochs": 40000},
        "eval": {"exhaustive": True, "splits": ["true", "train"]},
        "slacks": {"sl:true:overall:accuracy": 0.60 - sl_bound,
                   "sl:train:overall:accuracy": 0.0},
    })
    return [mmcl, sl]


def _captions_suite(root_seed: int) -> list[ExperimentConfig]:
    dm1 = config_from_dict({
        "experiment": "caption-sweep-dm1", "name": "captions-dm1",
        "root_seed": root_seed, "tolerance": 0.02,
        "data": {"model": "dm1", "sigma_core": 1.0, "sigma_spu": 0.02,
                 "p_spu": 0.999, "exponent_variant": "linear"},
        "modality": {"d_I": 2, "d_T": 2},
        "methods": ["mmcl-closed"],
        "train": {"n_train": 50000, "p_dim": 2, "rho": 1.0},
        "eval": {"n_eval": 50000, "splits": ["true"]},
        "sweep": {"pi_core": [0.0, 0.5, 1.0], "pi_spu": [0.0, 1.0]},
    })
    dm2 = config_from_dict({
        "experiment": "caption-sweep-dm2", "name": "captions-dm2",
        "root_seed": root_seed,
        "data": {"model": "dm2", "m": 30, "alpha": 1.1, "beta": 1.0 / 3.0},
        "modality": {"d_I": 60, "d_T": 60},
        "methods": ["mmcl-analytic"],
        "train": {"p_dim": 60, "rho": 1.0},
        "eval": {"n_eval": 50000, "splits": ["true"]},
        "sweep": {"pi": [0.3, 0.6]},
        "slacks": {"mmcl:true:overall:accuracy": 0.01},
    })
    return [dm1, dm2]


def _supcon_suite(root_seed: int) -> list[ExperimentConfig]:
    dm1 = config_from_dict({
        "experiment": "method-compare", "name": "supcon-dm1", "root_seed": root_seed,
        "data": {"model": "dm1", "sigma_core": 1.0, "sigma_spu": 0.01, "p_spu": 0.999},
        "modality": {"d_I": 2, "d_T": 2},
        "methods": ["supcon"],
        "train": {"n_train": 20000, "p_dim": 2, "rho": 1.0},
        "eval": {"n_eval": 20000, "splits": ["true"]},
        # claimed bounds 0.50 / 0.00; measurements land near 0.74 / 0.50, see notes
        "slacks": {"supcon:true:overall:accuracy": 0.05,
                   "supcon:true:minority:accuracy": 0.10},
    })
    dm2 = config_from_dict({
        "experiment": "method-compare", "name": "supcon-dm2", "root_seed": root_seed,
        "data": {"model": "dm2", "m": 2, "alpha": 1.5, "beta": 1.0 / 3.0},
        "modality": {"d_I": 4, "d_T": 4},
        "methods": ["supcon"],
        "train": {"exhaustive": True, "p_dim": 4, "rho": 1.0, "probe_epochs": 60000},
        "eval": {"exhaustive": True, "splits": ["true", "train"],
                 "supcon_geometry": True, "supcon_restarts": 20},
        "slacks": {"supcon:true:overall:accuracy": 0.0,
                   "supcon:train:overall:accuracy": 0.0,
                   "supcon:true:geometry:collinearity_residual": 1e-8,
                   "supcon:true:*:best_probe_accuracy": 1e-9},
    })
    return [dm1, dm2]


def _id_suite(root_seed: int) -> list[ExperimentConfig]:
    sl_id = theory.in_distribution_predictions_dm1(1.0, 0.01, 0.999).values["sl_id"]
    cfg = config_from_dict({
        "experiment": "method-compare", "name": "id-control", "root_seed": root_seed,
        "data": {"model": "dm1", "sigma_core": 1.0, "sigma_spu": 0.01, "p_spu": 0.999},
        "modality": {"d_I": 2, "d_T": 2},
        "methods": ["mmcl-closed", "sl"],
        "train": {"n_train": 20000, "p_dim": 2, "rho": 1.0},
        "eval": {"n_eval": 20000, "splits": ["train"]},
        "method_overrides": {
            "sl": {"modality": {"d_I": 2000, "noise_sigma_I": 0.1},
                   "train": {"n_train": 500, "epochs": 5000}},
        },
        "slacks": {"sl:train:overall:accuracy": sl_id - 0.985,
                   "mmcl:train:overall:accuracy": 0.01,
                   "sl-vs-mmcl:train:overall:id_gap": 0.0},
    })
    return [cfg]


_SUITE_BUILDERS = {"dm1": _dm1_suite, "dm2": _dm2_suite, "captions": _captions_suite,
                   "supcon": _supcon_suite, "id": _id_suite}


def suite_configs(suite: str, root_seed: int = 0) -> list[ExperimentConfig]:
    """Preset configs implementing the verification suites."""
    if suite == "all":
        return [cfg for name in ("dm1", "dm2", "captions", "supcon", "id")
                for cfg in _SUITE_BUILDERS[name](root_seed)]
    if suite not in _SUITE_BUILDERS:
        raise ValidationError(f"unknown suite {suite!r}; expected one of {SUITES}")
    return _SUITE_BUILDERS[suite](root_seed)


def run_suite(suite: str, root_seed: int = 0, threads: int = 1):
    """Run a preset suite; returns (records, min_pass_fraction)."""
    records = []
    min_fraction = 1.0
    for cfg in suite_configs(suite, root_seed):
        records.extend(run_experiment(cfg, threads))
        min_fraction = min(min_fraction, cfg.min_pass_fraction)
    return records, min_fraction

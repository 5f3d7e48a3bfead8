# -*- coding: utf-8 -*-

"""dynstg_mamba tasks module which houses the training, distillation,
evaluation, cross-validation, ablation and gradient-check workflows driven
by the command line."""

import logging
import os
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import List

import numpy as np

from . import settings
from .data import (augment_dataset, load_sequences, make_folds,
                   stack_sequences, standardize, synth_gait)
from .distill import (MemoryBank, compute_components, loss_align, loss_intra,
                      loss_memory, loss_region, loss_task, memory_update,
                      sequence_cross_entropy, total_cgrkd)
from .exceptions import (CheckpointError, ConfigError, DataError,
                         DivergenceError, DynSTGError)
from .gradcheck import grad_check
from .graph import (DFSTGNNParams, LightDFSTGNNParams, SkeletonTopology,
                    build_dynamic_adjacency, df_stgnn_forward,
                    light_df_stgnn_forward)
from .metrics import METRIC_NAMES, confusion, metrics
from .models import (ModelConfig, forward_cost, load_state_dict, model_init,
                     model_forward, model_save, param_count, state_dict)
from .optim import Adam
from .ssm import SSMParams, stg_mamba_forward
from .tensor import Tape, backward, no_tape, parameter, reduce_sum
from .utils import Stopwatch, fold_rng, write_json


LOGGER = logging.getLogger(__name__)

ABLATION_VARIANTS = (
    # name, adjacency, temporal links, state-space blocks
    ("static_spatial_without_mamba", "static", False, 0),
    ("static_spatial_with_mamba", "static", False, 2),
    ("dynamic_spatiotemporal_with_mamba", "dynamic", True, 2),
)

DISTILLATION_VARIANTS = (
    # name, distillation config overrides
    ("full", {}),
    ("task_only", {"alpha": 0.0, "beta": 0.0, "gamma": 0.0,
                   "use_align": False}),
    ("without_align", {"use_align": False}),
    ("without_intra", {"alpha": 0.0}),
    ("without_memory", {"beta": 0.0}),
    ("without_region", {"gamma": 0.0}),
)


@dataclass
class TrainLog(object):
    """Per-epoch training loss, training accuracy and, when an evaluation
    split was given, evaluation accuracy"""
    losses: List[float] = field(default_factory=list)
    accuracies: List[float] = field(default_factory=list)
    eval_accuracies: List[float] = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self):
        return {"losses": self.losses, "accuracies": self.accuracies,
                "eval_accuracies": self.eval_accuracies}


@dataclass
class FoldData(object):
    """Standardised train and test splits of one fold"""
    fold: int
    train: list
    test: list
    stats: object


@dataclass
class EvalResult(object):
    predictions: np.ndarray
    labels: np.ndarray
    counts: object
    report: object
    seconds_per_sample: float = 0.0


def prepare_dataset(config):
    """Load or generate the sequences of a run.

    Returns
    -------
    tuple
        ``(dataset, topology, num_classes)``; the dataset includes the
        augmented copies when augmentation is enabled.
    """
    data = config.data
    if data.path:
        dataset = load_sequences(data.path, frames=data.frames)
    else:
        dataset = synth_gait(data.synth_classes, data.synth_per_class,
                             data.synth_frames, data.synth_joints,
                             seed=config.seed, regions=config.model.regions)
    if not dataset:
        raise DataError("no sequences to train on")
    frames = {seq.shape[0] for seq in dataset}
    if len(frames) != 1:
        raise DataError("sequences have %d different lengths; set "
                        "data.frames to crop or pad them" % len(frames))
    if frames.pop() % config.model.regions:
        raise DataError("sequence length is not divisible into %d temporal "
                        "regions" % config.model.regions)

    topology = data.load_topology(dataset[0].shape[1])
    num_classes = max(2, max(seq.label for seq in dataset) + 1)
    if data.augment:
        dataset = augment_dataset(dataset, data.augment_scale)
    LOGGER.info("dataset: %d sequences, %d joints, %d classes",
                len(dataset), topology.joint_count, num_classes)
    return dataset, topology, num_classes


def fold_split(dataset, plan, fold):
    """Split and standardise with statistics of the training part only"""
    train, test = plan.train_test(dataset, fold)
    train, stats = standardize(train)
    test, _ = standardize(test, stats) if test else ([], stats)
    return FoldData(fold=fold, train=train, test=test, stats=stats)


def iterate_minibatches(count, batch_size, rng):
    """Yield index arrays over a seeded permutation; the last batch may be
    short."""
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def _fit(model, train, config, epochs, rng, loss_fn, label, eval_set=None):
    log = TrainLog()
    if epochs == 0:
        return log
    X_all, y_all = stack_sequences(train)
    optim = config.optim
    optimizer = Adam(model.named_parameters(), lr=optim.learning_rate,
                     weight_decay=optim.weight_decay, betas=optim.betas,
                     eps=optim.eps)
    last_finite = state_dict(model)
    with Stopwatch() as watch:
        for epoch in range(epochs):
            total, correct = 0.0, 0
            for batch in iterate_minibatches(len(train), optim.batch_size,
                                             rng):
                X, y = X_all[batch], y_all[batch]
                current = state_dict(model)
                optimizer.zero_grad()
                with Tape():
                    loss, output = loss_fn(X, y)
                    if not loss.is_finite():
                        load_state_dict(model, last_finite)
                        raise DivergenceError(
                            "%s loss became non-finite in epoch %d"
                            % (label, epoch), epoch=epoch, state=last_finite)
                    backward(loss)
                last_finite = current
                optimizer.step()
                total += loss.item() * len(batch)
                correct += int(np.sum(np.argmax(output.seq_logits.data,
                                                axis=1) == y))
            log.losses.append(total / len(train))
            log.accuracies.append(correct / float(len(train)))
            if eval_set:
                log.eval_accuracies.append(evaluate(
                    model, eval_set, optim.batch_size).report.accuracy)
                LOGGER.info("%s epoch %d: loss %.5f, train accuracy %.3f, "
                            "eval accuracy %.3f", label, epoch + 1,
                            log.losses[-1], log.accuracies[-1],
                            log.eval_accuracies[-1])
            else:
                LOGGER.info("%s epoch %d: loss %.5f, train accuracy %.3f",
                            label, epoch + 1, log.losses[-1],
                            log.accuracies[-1])
    log.seconds = watch.elapsed
    return log


def train_supervised(model, train, config, epochs, rng, label="model",
                     eval_set=None):
    """Minimise the per-joint cross-entropy of ``model`` on ``train``,
    scoring ``eval_set`` after every epoch when given"""
    def loss_fn(X, y):
        output = model_forward(model, X)
        return loss_task(output.joint_logits, y), output
    return _fit(model, train, config, epochs, rng, loss_fn, label, eval_set)


def train_teacher(config, fold_data, topology, num_classes):
    """Train a teacher on one fold.

    Batch order comes from the fold's seeded stream, so two runs with the
    same seed produce bit-identical checkpoints.

    Returns
    -------
    tuple
        ``(model, TrainLog)``

    Raises
    ------
    DivergenceError
        If the loss becomes non-finite; the model is left at the last
        finite state.
    """
    model = model_init(config.model_config("teacher", topology, num_classes))
    rng = fold_rng(config.seed, fold_data.fold)
    log = train_supervised(model, fold_data.train, config,
                           config.epochs_teacher, rng, label="teacher",
                           eval_set=fold_data.test)
    return model, log


def distill_student(config, teacher, fold_data, topology, num_classes):
    """Train a student against a frozen teacher with the distillation
    objective.

    Each batch runs the teacher without a tape, computes the five loss
    terms against the memory bank as it stood before the batch, then
    pushes the teacher's joint embeddings into the bank.

    Raises
    ------
    CheckpointError
        If the teacher was built for another skeleton.
    """
    if teacher.config.topology != topology:
        raise CheckpointError("teacher topology %r does not match the data "
                              "topology %r" % (teacher.config.topology,
                                               topology))
    student = model_init(config.model_config("student", topology,
                                             num_classes))
    if teacher.config.graph_out != student.config.graph_out or \
            teacher.config.num_classes != num_classes:
        raise ConfigError("teacher and student must share graph_out and the "
                          "class count")
    distill = config.distill
    bank = MemoryBank(distill.memory_capacity)

    def loss_fn(X, y):
        with no_tape():
            teacher_output = model_forward(teacher, X)
        output = model_forward(student, X)
        components = compute_components(output, teacher_output, y, bank,
                                        distill)
        memory_update(bank, teacher_output.joint_embeddings)
        return total_cgrkd(components, distill), output

    rng = fold_rng(config.seed, fold_data.fold)
    log = _fit(student, fold_data.train, config, config.epochs_student, rng,
               loss_fn, "student", fold_data.test)
    return student, log


def evaluate(model, dataset, batch_size=settings.BATCH_SIZE):
    """Predict every sequence and score the predictions.

    Returns
    -------
    EvalResult
    """
    X_all, y_all = stack_sequences(dataset)
    predictions = []
    with Stopwatch() as watch, no_tape():
        for start in range(0, len(dataset), batch_size):
            output = model_forward(model, X_all[start:start + batch_size])
            predictions.append(np.argmax(output.seq_logits.data, axis=1))
    predictions = np.concatenate(predictions)
    counts = confusion(predictions, y_all, model.config.num_classes)
    return EvalResult(predictions=predictions, labels=y_all, counts=counts,
                      report=metrics(counts),
                      seconds_per_sample=watch.elapsed / len(dataset))


def run_fold(config, dataset, plan, fold, topology, num_classes):
    """Standardise, train the teacher, distill the student and evaluate
    both on the test split of ``fold``."""
    fold_data = fold_split(dataset, plan, fold)
    teacher, teacher_log = train_teacher(config, fold_data, topology,
                                         num_classes)
    student, student_log = distill_student(config, teacher, fold_data,
                                           topology, num_classes)
    batch = config.optim.batch_size
    return {
        "data": fold_data,
        "teacher": teacher, "student": student,
        "teacher_log": teacher_log, "student_log": student_log,
        "teacher_eval": evaluate(teacher, fold_data.test, batch),
        "student_eval": evaluate(student, fold_data.test, batch),
    }


def _average_row(model, rows):
    row = {"model": model, "fold": "Average"}
    for name in METRIC_NAMES:
        row[name] = float(np.mean([r[name] for r in rows]))
    return row


def _fold_dir(out, fold):
    return os.path.join(out, "fold%d" % fold)


def run_cv(config):
    """k-fold cross-validation of teacher and distilled student.

    Writes ``folds.json``, ``normstats.json``, per-fold checkpoints and
    ``report.json`` under ``config.out``.

    Returns
    -------
    dict
        The report; everything outside its ``timings`` key is
        deterministic under ``config.seed``.

    Raises
    ------
    DynSTGError
        From any fold, with its ``fold`` attribute set.
    """
    dataset, topology, num_classes = prepare_dataset(config)
    plan = make_folds(dataset, config.folds, config.seed)
    write_json(os.path.join(config.out, "folds.json"), plan.to_dict())

    rows = {"teacher": [], "student": []}
    curves = {"teacher": [], "student": []}
    timings = {"teacher_train_seconds": [], "student_train_seconds": [],
               "teacher_inference_seconds_per_sample": [],
               "student_inference_seconds_per_sample": []}
    normstats, sizes = {}, []
    costs = None
    for fold in range(plan.k):
        try:
            result = run_fold(config, dataset, plan, fold, topology,
                              num_classes)
        except DynSTGError as error:
            error.fold = fold
            raise
        fold_data = result["data"]
        sizes.append(len(fold_data.test))
        normstats[str(fold)] = fold_data.stats.to_dict()
        for model_name in ("teacher", "student"):
            model = result[model_name]
            model_save(model, os.path.join(_fold_dir(config.out, fold),
                                           "%s.json" % model_name))
            evaluation = result["%s_eval" % model_name]
            row = {"model": model_name, "fold": fold}
            row.update(evaluation.report.to_row())
            rows[model_name].append(row)
            curves[model_name].append(result["%s_log" % model_name].to_dict())
            timings["%s_train_seconds" % model_name].append(
                result["%s_log" % model_name].seconds)
            timings["%s_inference_seconds_per_sample" % model_name].append(
                evaluation.seconds_per_sample)
        if costs is None:
            sample = stack_sequences(fold_data.train[:1])[0]
            costs = {
                "param_counts": {name: param_count(result[name])
                                 for name in ("teacher", "student")},
                "forward_ops": {name: forward_cost(result[name], sample)
                                for name in ("teacher", "student")},
            }
        LOGGER.info("fold %d: teacher accuracy %.3f, student accuracy %.3f",
                    fold, rows["teacher"][-1]["accuracy"],
                    rows["student"][-1]["accuracy"])

    report = {
        "format_version": settings.FORMAT_VERSION,
        "config": config.to_dict(),
        "rows": rows["teacher"] + [_average_row("teacher", rows["teacher"])]
        + rows["student"] + [_average_row("student", rows["student"])],
        "loss_curves": curves,
        "test_fold_sizes": sizes,
        "dataset_size": len(dataset),
        "timings": timings,
    }
    report.update(costs)
    write_json(os.path.join(config.out, "normstats.json"), normstats)
    write_json(os.path.join(config.out, "report.json"), report)
    return report


def run_distillation_ablation(config, variants=DISTILLATION_VARIANTS):
    """Distill one student per variant from a shared teacher on every fold.

    The students of a fold share their initialisation and batch order, so
    variants differ only in the distillation terms they keep.

    Returns
    -------
    dict
        ``teacher`` with per-fold and mean test accuracy, and ``variants``
        mapping each name to its overrides, per-fold accuracies and mean.

    Raises
    ------
    DynSTGError
        From any fold, with its ``fold`` attribute set.
    """
    dataset, topology, num_classes = prepare_dataset(config)
    plan = make_folds(dataset, config.folds, config.seed)
    batch = config.optim.batch_size
    teacher_accuracies = []
    accuracies = OrderedDict((name, []) for name, _ in variants)
    for fold in range(plan.k):
        fold_data = fold_split(dataset, plan, fold)
        try:
            teacher, _ = train_teacher(config, fold_data, topology,
                                       num_classes)
            teacher_accuracies.append(
                evaluate(teacher, fold_data.test, batch).report.accuracy)
            for name, overrides in variants:
                variant = replace(config, distill=replace(config.distill,
                                                          **overrides))
                student, _ = distill_student(variant, teacher, fold_data,
                                             topology, num_classes)
                accuracies[name].append(
                    evaluate(student, fold_data.test, batch).report.accuracy)
        except DynSTGError as error:
            error.fold = fold
            raise
        LOGGER.info("fold %d: teacher accuracy %.3f, %s", fold,
                    teacher_accuracies[-1],
                    ", ".join("%s %.3f" % (name, values[-1])
                              for name, values in accuracies.items()))

    overrides = dict(variants)
    return {
        "teacher": {"folds": teacher_accuracies,
                    "average": float(np.mean(teacher_accuracies))},
        "variants": {name: {"overrides": overrides[name], "folds": values,
                            "average": float(np.mean(values))}
                     for name, values in accuracies.items()},
    }


def run_ablation(config):
    """Train the three graph/state-space variants with the task loss only,
    then the distillation variants against a shared teacher, and write all
    per-fold test accuracies to ``ablation.json``."""
    dataset, topology, num_classes = prepare_dataset(config)
    plan = make_folds(dataset, config.folds, config.seed)
    results = {}
    for name, adjacency, temporal_links, blocks in ABLATION_VARIANTS:
        accuracies, count = [], None
        for fold in range(plan.k):
            fold_data = fold_split(dataset, plan, fold)
            model = model_init(config.model_config(
                "teacher", topology, num_classes, adjacency=adjacency,
                temporal_links=temporal_links, blocks=blocks))
            try:
                train_supervised(model, fold_data.train, config,
                                 config.epochs_teacher,
                                 fold_rng(config.seed, fold), label=name)
            except DynSTGError as error:
                error.fold = fold
                raise
            accuracies.append(evaluate(model, fold_data.test,
                                       config.optim.batch_size)
                              .report.accuracy)
            count = param_count(model)
        results[name] = {"folds": accuracies,
                         "average": float(np.mean(accuracies)),
                         "param_count": count}
        LOGGER.info("ablation %s: mean accuracy %.3f", name,
                    results[name]["average"])
    report = {"format_version": settings.FORMAT_VERSION,
              "config": config.to_dict(), "variants": results,
              "distillation": run_distillation_ablation(config)}
    write_json(os.path.join(config.out, "ablation.json"), report)
    return report


def _weighted_sum(tensor, weights):
    return reduce_sum(tensor * weights)


def run_gradchecks(config, grad_hook=None):
    """Gradient-check every layer type, every loss and both full models.

    Shapes are B=2, T=8, J=5, C=3, O=4, N=4, K=2; each check's loss is a
    fixed random weighting of the layer output, or cross-entropy for the
    full models.

    Returns
    -------
    list of GradCheckReport
    """
    rng = np.random.default_rng(config.seed)
    batch, frames, out, states, classes = 2, 8, 4, 4, 2
    topology = SkeletonTopology.gait()
    joints = topology.joint_count
    X = rng.uniform(-2.0, 2.0, (batch, frames, joints, settings.IN_FEATURES))
    labels = np.array([0, 1])
    reports = []

    def check(label, loss_fn, named):
        named = list(named)
        reports.append(grad_check(
            loss_fn, [p for _, p in named], names=[n for n, _ in named],
            epsilon=settings.GRADCHECK_MODEL_EPSILON,
            tolerance=settings.GRADCHECK_TOLERANCE,
            abs_tolerance=settings.GRADCHECK_MODEL_ABS_TOLERANCE,
            seed=config.seed,
            grad_hook=grad_hook, label=label))

    teacher_layer = DFSTGNNParams.init(joints, settings.IN_FEATURES, out, rng)
    teacher_layer.filter.f_base.data = rng.uniform(-1.0, 1.0,
                                                   (joints, joints))
    weights = rng.uniform(-1.0, 1.0, (joints, joints))
    check("dynamic_adjacency",
          lambda: _weighted_sum(build_dynamic_adjacency(teacher_layer.filter,
                                                        topology), weights),
          teacher_layer.filter.named_parameters())

    weights = rng.uniform(-1.0, 1.0, (batch, frames, joints, out))
    check("df_stgnn",
          lambda: _weighted_sum(df_stgnn_forward(X, teacher_layer, topology),
                                weights),
          teacher_layer.named_parameters())
    light_layer = LightDFSTGNNParams.init(joints, settings.IN_FEATURES, out,
                                          rng)
    check("light_df_stgnn",
          lambda: _weighted_sum(light_df_stgnn_forward(X, light_layer,
                                                       topology), weights),
          light_layer.named_parameters())

    channels = joints * out
    block = SSMParams.init(channels, channels, states, channels, rng)
    U = rng.uniform(-2.0, 2.0, (batch, frames, channels))
    weights = rng.uniform(-1.0, 1.0, (batch, frames, channels))
    check("stg_mamba",
          lambda: _weighted_sum(stg_mamba_forward(U, block), weights),
          block.named_parameters())

    logits = parameter(rng.normal(size=(batch, frames, joints, classes)),
                       name="joint_logits")
    teacher_logits = rng.normal(size=logits.shape)
    F_s = parameter(rng.normal(size=(batch, joints, out)), name="F_s")
    F_t = rng.normal(size=(batch, joints, out))
    R_s = parameter(rng.normal(size=(batch, 4, out)), name="R_s")
    R_t = rng.normal(size=(batch, 4, out))
    bank = MemoryBank(settings.MEMORY_CAPACITY)
    memory_update(bank, rng.normal(size=(1, 6, out)))
    distill = config.distill
    tau = distill.relation_temperature
    check("loss_task", lambda: loss_task(logits, labels),
          [("joint_logits", logits)])
    check("loss_align",
          lambda: loss_align(logits, teacher_logits, distill.kd_temperature),
          [("joint_logits", logits)])
    check("loss_intra", lambda: loss_intra(F_s, F_t, tau), [("F_s", F_s)])
    check("loss_memory", lambda: loss_memory(F_s, bank, F_t, tau),
          [("F_s", F_s)])
    check("loss_region", lambda: loss_region(F_s, R_t, R_s, tau, F_t=F_t),
          [("F_s", F_s), ("R_s", R_s)])

    for variant in ("teacher", "student"):
        model = model_init(ModelConfig(
            topology=topology, graph_out=out, state_dim=states,
            num_classes=classes, variant=variant, seed=config.seed))
        check(variant,
              lambda model=model: sequence_cross_entropy(
                  model_forward(model, X).seq_logits, labels),
              model.named_parameters())
    return reports

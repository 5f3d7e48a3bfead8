# -*- coding: utf-8 -*-

"""Command-line entry point: ``dynstg-mamba <command> [options]``.

Exit codes: 0 success, 1 configuration/data/checkpoint error, 2 failed
gradient check, 3 training divergence.
"""

import argparse
import logging
import os
import sys

from .config import load_config
from .data import (FoldPlan, NormStats, make_folds, standardize, synth_gait,
                   write_sequences)
from .exceptions import CheckpointError, DivergenceError, DynSTGError
from .models import load_state_dict, model_init, model_load, model_save
from .tasks import (distill_student, evaluate, fold_split, prepare_dataset,
                    run_ablation, run_cv, run_gradchecks, train_teacher)
from .utils import read_json, write_json


LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_CHECK_FAILED = 2
EXIT_DIVERGED = 3


def _run_config(args):
    config = load_config(args.config, profile=args.profile, seed=args.seed,
                         out=args.out)
    if getattr(args, "data", None):
        config.data.path = args.data
    return config


def _fold_plan(config, dataset):
    """Reuse ``folds.json`` from the output directory, or create it"""
    path = os.path.join(config.out, "folds.json")
    if os.path.exists(path):
        return FoldPlan.from_dict(read_json(path))
    plan = make_folds(dataset, config.folds, config.seed)
    write_json(path, plan.to_dict())
    return plan


def _record_normstats(config, fold, stats):
    path = os.path.join(config.out, "normstats.json")
    document = read_json(path) if os.path.exists(path) else {}
    document[str(fold)] = stats.to_dict()
    write_json(path, document)


def _checkpoint_path(config, fold, name):
    return os.path.join(config.out, "fold%d" % fold, "%s.json" % name)


def _train(config, fold, variant, train_fn):
    dataset, topology, num_classes = prepare_dataset(config)
    fold_data = fold_split(dataset, _fold_plan(config, dataset), fold)
    _record_normstats(config, fold, fold_data.stats)
    path = _checkpoint_path(config, fold, variant)
    try:
        model, log = train_fn(fold_data, topology, num_classes)
    except DivergenceError as error:
        model = model_init(config.model_config(variant, topology,
                                               num_classes))
        model_save(load_state_dict(model, error.state), path)
        LOGGER.error("last finite %s checkpoint written to %s", variant,
                     path)
        raise
    model_save(model, path)
    write_json(_checkpoint_path(config, fold, "%s_log" % variant),
               log.to_dict())
    LOGGER.info("%s checkpoint written to %s", variant, path)
    return EXIT_OK


def cmd_synth(args):
    dataset = synth_gait(args.classes, args.per_class, args.frames,
                         args.joints, seed=args.seed or 0)
    output = args.output or os.path.join(args.out or ".", "synth.jsonl")
    directory = os.path.dirname(output)
    if directory:
        os.makedirs(directory, exist_ok=True)
    write_sequences(output, dataset)
    LOGGER.info("wrote %d synthetic sequences to %s", len(dataset), output)
    return EXIT_OK


def cmd_train_teacher(args):
    config = _run_config(args)
    return _train(config, args.fold, "teacher",
                  lambda data, topology, classes: train_teacher(
                      config, data, topology, classes))


def cmd_distill_student(args):
    config = _run_config(args)
    teacher_path = args.teacher or _checkpoint_path(config, args.fold,
                                                    "teacher")

    def train(data, topology, classes):
        teacher = model_load(teacher_path, topology=topology)
        return distill_student(config, teacher, data, topology, classes)
    return _train(config, args.fold, "student", train)


def _fold_normstats(config, fold):
    """Normalisation statistics recorded for ``fold`` by a training command"""
    path = os.path.join(config.out, "normstats.json")
    document = read_json(path) if os.path.exists(path) else {}
    if str(fold) not in document:
        raise CheckpointError(
            "no normalisation statistics for fold %d in %s; train a model "
            "on that fold first" % (fold, path))
    return NormStats.from_dict(document[str(fold)])


def cmd_eval(args):
    config = _run_config(args)
    dataset, topology, _ = prepare_dataset(config)
    model = model_load(args.checkpoint, topology=topology)
    if args.fold is not None:
        stats = _fold_normstats(config, args.fold)
        _, test = _fold_plan(config, dataset).train_test(dataset, args.fold)
        test, _ = standardize(test, stats)
    else:
        LOGGER.warning("no fold statistics given; standardising the whole "
                       "dataset on itself")
        test, _ = standardize(dataset)
    result = evaluate(model, test, config.optim.batch_size)
    document = result.report.to_dict()
    document["predictions"] = result.predictions.tolist()
    document["labels"] = result.labels.tolist()
    write_json(os.path.join(config.out, "eval.json"), document)
    LOGGER.info("accuracy %.4f, f1 %.4f on %d sequences",
                result.report.accuracy, result.report.f1, len(test))
    return EXIT_OK


def cmd_cv(args):
    report = run_cv(_run_config(args))
    for row in report["rows"]:
        if row["fold"] == "Average":
            LOGGER.info("%s average: accuracy %.4f, f1 %.4f", row["model"],
                        row["accuracy"], row["f1"])
    return EXIT_OK


def cmd_ablation(args):
    report = run_ablation(_run_config(args))
    for name, result in report["variants"].items():
        LOGGER.info("%s: accuracy %.4f", name, result["average"])
    distillation = report["distillation"]
    LOGGER.info("teacher: accuracy %.4f", distillation["teacher"]["average"])
    for name, result in distillation["variants"].items():
        LOGGER.info("student %s: accuracy %.4f", name, result["average"])
    return EXIT_OK


def cmd_gradcheck(args, grad_hook=None):
    """Run every gradient check; exit code 2 when any of them fails"""
    config = _run_config(args)
    reports = run_gradchecks(config, grad_hook=grad_hook)
    write_json(os.path.join(config.out, "gradcheck.json"),
               [report.to_dict() for report in reports])
    failed = [report.label for report in reports if not report.passed]
    for report in reports:
        LOGGER.info("%-20s max rel err %.3e %s", report.label,
                    report.max_rel_error,
                    "ok" if report.passed else "FAILED")
    if failed:
        LOGGER.error("gradient check failed for %s", ", ".join(failed))
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--profile", choices=["paper", "ci"], default=None,
                        help="epoch and optimiser preset (default: paper)")
    common.add_argument("--data", default=None,
                        help="JSON-lines sequence file; synthetic if omitted")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(
        prog="dynstg-mamba",
        description="Train, distill and verify skeleton gait classifiers.")
    commands = parser.add_subparsers(dest="command")
    commands.required = True

    synth = commands.add_parser("synth", parents=[common],
                                help="write a synthetic gait dataset")
    synth.add_argument("--classes", type=int, default=2)
    synth.add_argument("--per-class", type=int, default=20)
    synth.add_argument("--frames", type=int, default=32)
    synth.add_argument("--joints", type=int, default=5)
    synth.add_argument("--output", default=None,
                       help="file to write (default: <out>/synth.jsonl)")
    synth.set_defaults(handler=cmd_synth)

    teacher = commands.add_parser("train-teacher", parents=[common],
                                  help="train the teacher on one fold")
    teacher.add_argument("--fold", type=int, default=0)
    teacher.set_defaults(handler=cmd_train_teacher)

    student = commands.add_parser("distill-student", parents=[common],
                                  help="distill the student on one fold")
    student.add_argument("--fold", type=int, default=0)
    student.add_argument("--teacher", default=None,
                         help="teacher checkpoint (default: "
                              "<out>/fold<k>/teacher.json)")
    student.set_defaults(handler=cmd_distill_student)

    for name in ("eval", "evaluate"):
        evaluation = commands.add_parser(name, parents=[common],
                                         help="evaluate a checkpoint")
        evaluation.add_argument("--checkpoint", required=True)
        evaluation.add_argument("--fold", type=int, default=None)
        evaluation.set_defaults(handler=cmd_eval)

    for name, handler, text in (
            ("cv", cmd_cv, "k-fold cross-validation of teacher and student"),
            ("ablation", cmd_ablation,
             "compare graph/state-space and distillation variants"),
            ("gradcheck", cmd_gradcheck, "verify gradients numerically")):
        command = commands.add_parser(name, parents=[common], help=text)
        command.set_defaults(handler=handler)
    return parser


def main(argv=None):
    """Parse ``argv``, run the command and return its exit code"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except DivergenceError as error:
        LOGGER.error("training diverged: %s", error)
        return EXIT_DIVERGED
    except (DynSTGError, OSError) as error:
        LOGGER.error("%s", error)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

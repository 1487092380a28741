"""Command-line surface: describe, negatives, train-toy, gradcheck.

Every command is deterministic given its flags; seeds are explicit so no
artifact ever depends on wall-clock state.  Exit codes: 0 success,
1 validation failure, 2 I/O failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .annotations import load_dataset, load_hierarchy
from .errors import NumericalError, ParseError, PipelineError, ValidationError, EmptySceneError
from .negatives import build_negative_set, detect_failures, load_scores
from .prompting import load_templates, render_image_description
from .seeding import TAG_DESCRIBE, TAG_NEGATIVES, mix64

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


def _dump(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))


def describe_seed(seed: int, image_id: int) -> int:
    """Per-image render seed derived from the global describe seed."""
    return mix64(seed, TAG_DESCRIBE, image_id)


def negatives_seed(seed: int, image_id: int) -> int:
    return mix64(seed, TAG_NEGATIVES, image_id)


def cmd_describe(args: argparse.Namespace) -> int:
    scenes, table = load_dataset(args.annotations)
    templates = load_templates(args.templates)
    with open(args.out, "w", encoding="utf-8", newline="\n") as out:
        for scene in scenes:
            desc = render_image_description(
                scene, templates, table, describe_seed(args.seed, scene.image_id)
            )
            out.write(_dump(desc.to_record(scene.image_id)) + "\n")
    return EXIT_OK


def cmd_negatives(args: argparse.Namespace) -> int:
    scenes, table = load_dataset(args.annotations)
    templates = load_templates(args.templates)
    hierarchy = load_hierarchy(args.hierarchy, table)
    if args.no_scores:
        scores = {}
    elif args.scores is None:
        raise ValidationError("either --scores or --no-scores is required")
    else:
        scores = load_scores(args.scores, scenes, table)

    from .negatives import FailureSet

    with open(args.out, "w", encoding="utf-8", newline="\n") as out:
        for scene in scenes:
            anchor = render_image_description(
                scene, templates, table, describe_seed(args.seed, scene.image_id)
            )
            failures = (
                detect_failures(scores[scene.image_id])
                if scene.image_id in scores
                else FailureSet()
            )
            try:
                negs = build_negative_set(
                    scene,
                    anchor,
                    failures,
                    hierarchy,
                    templates,
                    table,
                    args.n_h,
                    negatives_seed(args.seed, scene.image_id),
                )
            except EmptySceneError:
                print(f"skipping empty image {scene.image_id}", file=sys.stderr)
                continue
            for desc, kind in zip(negs.negatives, negs.kinds):
                out.write(
                    _dump({"image_id": scene.image_id, "kind": kind, "text": desc.text}) + "\n"
                )
    return EXIT_OK


def cmd_train_toy(args: argparse.Namespace) -> int:
    from .losses import LossConfig
    from .prompting import full_slot_templates
    from .training import (
        SyntheticConfig,
        TrainConfig,
        generate_synthetic,
        save_model,
        synthetic_hierarchy,
        train,
    )

    templates = load_templates(args.templates) if args.templates else full_slot_templates()
    dataset = generate_synthetic(
        SyntheticConfig(
            num_categories=args.categories,
            scenes=args.scenes,
            max_objects_per_scene=args.max_objects,
            noise_sigma=args.noise_sigma,
            seed=args.seed,
        )
    )
    hierarchy = synthetic_hierarchy(dataset.table)
    loss_config = LossConfig(
        tau=args.tau, lambda_vg=args.lambda_vg, lambda_lg=args.lambda_lg, lambda_o=args.lambda_o
    )
    train_config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        feature_dim=args.dim,
        n_h=args.n_h,
        enable_hard_negatives=not args.no_hard_negatives,
        enable_object_level=not args.no_object_level,
    )
    report, model = train(dataset, templates, hierarchy, loss_config, train_config)
    with open(args.out, "w", encoding="utf-8", newline="\n") as out:
        for metrics in report.epochs:
            out.write(_dump(metrics.to_record()) + "\n")
    save_model(model, args.out + ".ckpt")
    final = report.final
    print(
        f"final retrieval_top1={final.retrieval_top1:.3f} "
        f"object_alignment_top1={final.object_alignment_top1:.3f} "
        f"sibling_confusion_rate={final.sibling_confusion_rate:.3f}"
    )
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    import numpy as np

    from .embedding import ProjectionHead, project_backward
    from .gradcheck import DEFAULT_TOLERANCE, run_all
    from .losses import infonce_hard, infonce_object, infonce_text, infonce_visual

    reports = run_all(
        instances=args.instances, seed=args.seed, tau=args.tau, sabotage=args.sabotage
    )

    # one representative instance per loss so reports carry gradient norms
    rng = np.random.default_rng(args.seed)
    v = rng.standard_normal((4, 8))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    l = rng.standard_normal((4, 8))
    l /= np.linalg.norm(l, axis=1, keepdims=True)
    cats = rng.standard_normal((3, 8))
    cats /= np.linalg.norm(cats, axis=1, keepdims=True)
    negs = [l[:2].copy(), np.zeros((0, 8)), l[1:3].copy(), np.zeros((0, 8))]
    head = ProjectionHead.create(8, 6, 5, seed=args.seed)
    head_grads = project_backward(head, v, rng.standard_normal((4, 5)))
    samples = {
        "image_to_text": infonce_visual(v, l, args.tau).to_record("image_to_text"),
        "text_to_image": infonce_text(l, v, args.tau).to_record("text_to_image"),
        "object_level": infonce_object(v, cats, [1, 2, 1, 2], args.tau).to_record("object_level"),
        "hard_negative": infonce_hard(v, l, negs, args.tau).to_record("hard_negative"),
        "projection_head": {
            "loss_name": "projection_head",
            "value": 0.0,
            "grad_norms": {
                "W1": float(np.linalg.norm(head_grads.W1)),
                "W2": float(np.linalg.norm(head_grads.W2)),
                "input": float(np.linalg.norm(head_grads.x)),
            },
        },
    }

    failed = []
    for name, report in reports.items():
        values = np.asarray(report.values)
        record = dict(samples[name])
        record["value"] = float(values.mean())
        record["max_rel_err"] = report.max_rel_err
        record["finite"] = bool(np.all(np.isfinite(values)))
        print(_dump(record))
        if not report.passed(DEFAULT_TOLERANCE):
            failed.append((name, report))
    if failed:
        worst_name, worst = max(failed, key=lambda item: item[1].max_rel_err)
        raise NumericalError(
            f"gradient check failed for {worst_name}: max relative error "
            f"{worst.max_rel_err:.3e} at coordinate {worst.worst_coordinate} "
            f"(instance {worst.worst_instance})"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxprompt",
        description="Synthesize prompt-based descriptions and hard negatives "
        "from detection annotations; train and check the contrastive objectives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    describe = sub.add_parser("describe", help="render one description per image")
    describe.add_argument("--annotations", required=True)
    describe.add_argument("--templates", required=True)
    describe.add_argument("--out", required=True)
    describe.add_argument("--seed", type=int, required=True)
    describe.set_defaults(func=cmd_describe)

    negatives = sub.add_parser("negatives", help="synthesize hard-negative descriptions")
    negatives.add_argument("--annotations", required=True)
    negatives.add_argument("--templates", required=True)
    negatives.add_argument("--hierarchy", required=True)
    negatives.add_argument("--scores")
    negatives.add_argument("--no-scores", action="store_true",
                           help="no detector scores: every negative confuses a category")
    negatives.add_argument("--out", required=True)
    negatives.add_argument("--seed", type=int, required=True)
    negatives.add_argument("--n-h", type=int, default=5, dest="n_h")
    negatives.set_defaults(func=cmd_negatives)

    train_toy = sub.add_parser("train-toy", help="run the synthetic training harness")
    train_toy.add_argument("--out", required=True)
    train_toy.add_argument("--seed", type=int, required=True)
    train_toy.add_argument("--templates")
    train_toy.add_argument("--epochs", type=int, default=20)
    train_toy.add_argument("--batch-size", type=int, default=32)
    train_toy.add_argument("--lr", type=float, default=0.1)
    train_toy.add_argument("--dim", type=int, default=64)
    train_toy.add_argument("--tau", type=float, default=0.07)
    train_toy.add_argument("--lambda-vg", type=float, default=0.5)
    train_toy.add_argument("--lambda-lg", type=float, default=0.5)
    train_toy.add_argument("--lambda-o", type=float, default=0.1)
    train_toy.add_argument("--n-h", type=int, default=5, dest="n_h")
    train_toy.add_argument("--categories", type=int, default=8)
    train_toy.add_argument("--scenes", type=int, default=2000)
    train_toy.add_argument("--max-objects", type=int, default=3)
    train_toy.add_argument("--noise-sigma", type=float, default=0.05)
    train_toy.add_argument("--no-hard-negatives", action="store_true")
    train_toy.add_argument("--no-object-level", action="store_true")
    train_toy.set_defaults(func=cmd_train_toy)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    gradcheck.add_argument("--tau", type=float, default=0.07)
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--instances", type=int, default=10)
    gradcheck.add_argument("--sabotage", choices=None, default=None, help=argparse.SUPPRESS)
    gradcheck.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, EmptySceneError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

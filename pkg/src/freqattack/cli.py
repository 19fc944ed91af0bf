"""Command-line entry point: ``freqattack <verb> [options]``.

Verbs: train, attack, matrix, sweep, render-mask, selftest, zoo.

Exit codes: 0 success, 1 invariant or self-test failure, 2 configuration
error, 3 I/O error.
"""
import argparse
from dataclasses import replace
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import constraint as constraint_mod
from .attack import AttackSpec
from .config import ExperimentConfig, apply_overrides, dump_config, load_config, parse_pairs
from .constraint import MASK_KINDS, build_mask
from .defense import PREPROCESSOR_KINDS, DefendedModel
from .errors import ConfigurationError, InvalidInputError, UndefinedBaselineError
from .evaluation import dimensionality_sweep, generate_adversarial, run_matrix
from .experiments import load_splits, preprocessor_for, train_model, train_zoo, with_zoo
from .files import load_image, mask_to_pgm, save_image
from .model import load_checkpoint, save_checkpoint

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
QUANT_SLACK = 1 / 255

log = logging.getLogger("freqattack")


class InvariantFailure(Exception):
    """An output failed a validation check."""


def _resolve(config, path):
    return path if os.path.isabs(path) else os.path.join(config.resolved_output_dir(), path)


def _write_text(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def attack_spec(config, side):
    """AttackSpec described by the attack fields of ``config``."""
    c = constraint_mod.make_constraint(config.constraint, side, config.reduced_dim,
                                       config.mask, config.sigma, config.attack_seed)
    return AttackSpec(
        method=config.method, epsilon=config.epsilon,
        iterations=1 if config.method == "fgsm" else config.iterations,
        step_size=config.step_size or None, momentum_decay=config.momentum_decay,
        targeted=config.targeted, target_rule=config.target_rule, constraint=c,
        seed=config.attack_seed)


def _eval_split(config):
    train_set, test_set = load_splits(config)
    data = test_set if test_set is not None else train_set
    return data.subset(min(config.eval_examples, len(data)))


def _check_shape(model, dataset, path):
    if tuple(model.input_shape) != tuple(dataset.image_shape):
        raise ConfigurationError(
            f"checkpoint {path} expects inputs {tuple(model.input_shape)}, "
            f"dataset has {tuple(dataset.image_shape)}")
    if model.num_classes < dataset.num_classes:
        raise ConfigurationError(
            f"checkpoint {path} has {model.num_classes} classes, dataset needs {dataset.num_classes}")


# -- verbs -----------------------------------------------------------------

def cmd_train(config, args):
    train_set, test_set = load_splits(config)
    model, history = train_model(config, train_set)
    model.metadata["config_digest"] = config.digest()
    if test_set is not None:
        model.metadata["test_accuracy"] = model.accuracy(test_set.images, test_set.labels)
    path = _resolve(config, config.checkpoint)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    save_checkpoint(model, path)
    record = {"config_digest": config.digest(), "checkpoint": path,
              "epochs": history.epochs, "metadata": model.metadata}
    _write_text(path + ".log.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path} (train accuracy {model.metadata['final_train_accuracy']:.4f})")
    return EXIT_OK


def validate_emitted(originals, emitted, epsilon):
    """Largest violation of ``|emitted - original| <= epsilon + 1/255`` (0 when valid)."""
    over = np.abs(emitted - originals).max(initial=0.0) - (epsilon + QUANT_SLACK)
    return max(0.0, float(over))


def cmd_attack(config, args):
    path = _resolve(config, config.checkpoint)
    model = load_checkpoint(path)
    data = _eval_split(config)
    _check_shape(model, data, path)
    spec = attack_spec(config, data.image_shape[0])
    ext = "." + config.image_format.lower()
    if ext not in (".pgm", ".png"):
        raise ConfigurationError(f"image_format must be pgm or png, got {config.image_format!r}")
    adv, aimed = generate_adversarial(model, data, spec, config.threads)
    out_dir = os.path.join(config.resolved_output_dir(), "attack")
    os.makedirs(out_dir, exist_ok=True)
    clean_pred = model.predict(data.images)
    adv_pred = model.predict(adv)
    records, emitted = [], []
    digest, spec_digest = config.digest(), spec.digest()
    for i, img in enumerate(adv):
        name = f"{i:05d}{ext}"
        file_path = os.path.join(out_dir, name)
        save_image(file_path, img)
        emitted.append(load_image(file_path))
        records.append({
            "index": i, "file": name, "sha256": _sha256(file_path),
            "label": int(data.labels[i]), "attack_label": int(aimed[i]),
            "clean_prediction": int(clean_pred[i]), "adversarial_prediction": int(adv_pred[i]),
            "spec_digest": spec_digest, "config_digest": digest,
        })
    _write_text(os.path.join(out_dir, "records.jsonl"),
                "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    hits = adv_pred == aimed if spec.targeted else adv_pred != data.labels
    summary = {"schema_version": 1, "config_digest": digest, "spec_digest": spec_digest,
               "spec": spec.describe(), "n_examples": len(data), "successes": int(hits.sum()),
               "asr": float(hits.mean()) if len(hits) else 0.0}
    _write_text(os.path.join(out_dir, "summary.json"),
                json.dumps(summary, indent=2, sort_keys=True) + "\n")
    over = validate_emitted(data.images, np.stack(emitted) if emitted else data.images, spec.epsilon)
    if over > 0:
        raise InvariantFailure(f"emitted images exceed the epsilon budget by {over:.3g}")
    print(f"wrote {len(records)} images to {out_dir} (asr {summary['asr']:.4f})")
    return EXIT_OK


def build_wiring(config):
    """Load models and assemble the ``sources`` / ``targets`` mappings."""
    paths = parse_pairs(config.models, "models")
    models = {}
    for name, path in paths.items():
        models[name] = load_checkpoint(path)

    def model(name, where):
        if name not in models:
            raise ConfigurationError(f"{where} refers to unknown model {name!r}")
        return models[name]

    sources = {}
    for name, spec in parse_pairs(config.sources, "sources").items():
        members = [model(m.strip(), f"source {name!r}") for m in spec.split("+")]
        sources[name] = members[0] if len(members) == 1 else members
    targets = {}
    for name, spec in parse_pairs(config.targets, "targets").items():
        base, _, pre = spec.partition("@")
        m = model(base.strip(), f"target {name!r}")
        if pre:
            if pre.strip() not in PREPROCESSOR_KINDS:
                raise ConfigurationError(f"target {name!r}: unknown preprocessor {pre!r}")
            m = DefendedModel(m, preprocessor_for(pre.strip(), config))
        targets[name] = m
    return models, sources, targets


def _check_models(models, data):
    for name, m in models.items():
        _check_shape(m, data, name)


def cmd_matrix(config, args):
    models, sources, targets = build_wiring(config)
    if not sources or not targets:
        raise ConfigurationError("matrix needs at least one source and one target")
    data = _eval_split(config)
    _check_models(models, data)
    spec = attack_spec(config, data.image_shape[0])
    report = run_matrix(sources, targets, spec, data, config.master_seed,
                        config.clean_target or None, config.threads, config.digest())
    out = config.resolved_output_dir()
    _write_text(os.path.join(out, "matrix.csv"), report.to_csv())
    _write_text(os.path.join(out, "matrix.json"), report.to_json())
    print(_matrix_table(report))
    return EXIT_OK


def _matrix_table(report):
    sources = list(dict.fromkeys(c.source for c in report.cells))
    targets = list(dict.fromkeys(c.target for c in report.cells))
    lines = ["source\\target " + " ".join(f"{t:>7}" for t in targets)]
    for s in sources:
        lines.append(f"{s:<14} " + " ".join(f"{report.cell(s, t).asr:7.3f}" for t in targets))
    return "\n".join(lines)


def cmd_sweep(config, args):
    models, sources, targets = build_wiring(config)
    if config.sweep_source not in sources:
        raise ConfigurationError(f"sweep_source {config.sweep_source!r} is not a configured source")
    if config.sweep_target not in targets:
        raise ConfigurationError(f"sweep_target {config.sweep_target!r} is not a configured target")
    data = _eval_split(config)
    _check_models(models, data)
    spec = attack_spec(config, data.image_shape[0])
    report = dimensionality_sweep(sources[config.sweep_source], targets[config.sweep_target],
                                  spec, data, config.n_values, config.master_seed, config.threads)
    doc = json.loads(report.to_json())
    doc["config_digest"] = config.digest()
    out = config.resolved_output_dir()
    csv_text = report.to_csv().replace("schema_version,n,asr", "schema_version,n,asr,config_digest")
    csv_lines = csv_text.splitlines()
    csv_text = "\n".join([csv_lines[0]] + [f"{ln},{config.digest()}" for ln in csv_lines[1:]]) + "\n"
    _write_text(os.path.join(out, "sweep.csv"), csv_text)
    _write_text(os.path.join(out, "sweep.json"), json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"unconstrained {report.baseline:.4f}")
    for n, a in zip(report.n_values, report.asr):
        print(f"n={n:<4} {a:.4f}")
    return EXIT_OK


def cmd_render_mask(config, args):
    mask = build_mask(args.kind, args.d, args.n, seed=args.seed)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    mask_to_pgm(mask, args.out)
    print(f"wrote {args.out} ({mask.preserved} preserved of {args.d * args.d})")
    return EXIT_OK


def cmd_selftest(config, args):
    from .selftest import run_selftest

    failed = run_selftest()
    if failed:
        print(f"selftest failed: {', '.join(failed)}")
        return EXIT_INVARIANT
    print("selftest passed")
    return EXIT_OK


def cmd_zoo(config, args):
    """Train the desk-scale model zoo and write a matrix config that uses it."""
    train_set, _ = load_splits(config)
    directory = os.path.abspath(os.path.join(config.resolved_output_dir(), "zoo"))
    train_zoo(config, train_set, directory)
    cfg = with_zoo(config, directory)
    path = os.path.join(config.resolved_output_dir(), "zoo.cfg")
    _write_text(path, dump_config(cfg))
    print(f"wrote zoo checkpoints to {directory} and config {path}")
    return EXIT_OK


VERBS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "matrix": cmd_matrix,
    "sweep": cmd_sweep,
    "render-mask": cmd_render_mask,
    "selftest": cmd_selftest,
    "zoo": cmd_zoo,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigurationError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (defaults apply otherwise)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("--threads", type=int, default=None,
                        help="cap on worker threads (overrides the config value)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="freqattack", description="Frequency-constrained adversarial attacks.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train a clean or adversarially trained model")
    sub.add_parser("attack", parents=[common], help="attack the eval split and write images")
    sub.add_parser("matrix", parents=[common], help="source x target ASR matrix (CSV + JSON)")
    sub.add_parser("sweep", parents=[common], help="ASR over low-pass dimensionalities")
    rm = sub.add_parser("render-mask", parents=[common], help="write a spectrum mask as PGM")
    rm.add_argument("--d", type=int, default=299, help="image side (default 299)")
    rm.add_argument("--n", type=int, default=128, help="reduced dimensionality (default 128)")
    rm.add_argument("--kind", choices=MASK_KINDS, default="low", help="mask kind (default low)")
    rm.add_argument("--seed", type=int, default=0, help="seed for the random mask (default 0)")
    rm.add_argument("--out", default="mask.pgm", help="output path (default mask.pgm)")
    sub.add_parser("selftest", parents=[common], help="run the fast invariant checks")
    sub.add_parser("zoo", parents=[common], help="train the desk-scale model zoo")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        config = load_config(args.config) if args.config else ExperimentConfig()
        apply_overrides(config, args.set)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigurationError("--threads must be >= 1")
            config = replace(config, threads=args.threads)
        return VERBS[args.verb](config, args)
    except (ConfigurationError, InvalidInputError, UndefinedBaselineError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvariantFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

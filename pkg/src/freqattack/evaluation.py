"""Attack-success-rate evaluation: threat settings, transfer matrices, sweeps.

Sources are single classifiers or ensembles (lists of classifiers); targets
are classifiers or :class:`~freqattack.defense.DefendedModel` instances. The
threat setting of each (source, target) pair follows from object identity:

* white box: the source is the undefended target itself;
* grey box: the target is a defended model whose base is the source;
* black box: no source member is the target's base model.

Adversarial examples are generated once per source and reused for every
target in that row. Every random choice is derived from the master seed and
the example index, so results do not depend on the thread count.
"""
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, field, replace
import io
import json
import zlib

import numpy as np

from .attack import example_seed, run_attack
from .constraint import FreqMask, build_mask, make_constraint
from .defense import DefendedModel
from .errors import ConfigurationError, InvalidInputError, UndefinedBaselineError

SCHEMA_VERSION = 1
RANDOM_MASK_REPEATS = 3
CHUNK = 128

CSV_COLUMNS = [
    "schema_version", "source", "target", "setting", "method", "epsilon", "iterations",
    "targeted", "constraint", "reduced_dim", "mask_repeats", "n_examples", "successes",
    "asr", "relative_diff", "config_digest",
]


def attack_success_rate(predictions, true_labels, targets=None, targeted=False):
    """Fraction of misclassified examples, or of examples predicted as their target."""
    pred = np.asarray(predictions)
    truth = np.asarray(true_labels)
    if pred.shape != truth.shape:
        raise InvalidInputError(f"{pred.shape[0]} predictions vs {truth.shape[0]} labels")
    if targeted:
        if targets is None:
            raise InvalidInputError("targeted ASR needs target labels")
        targets = np.asarray(targets)
        if targets.shape != pred.shape:
            raise InvalidInputError("targets and predictions differ in length")
        hits = pred == targets
    else:
        hits = pred != truth
    return float(hits.mean()) if len(hits) else 0.0


def relative_difference(asr_target, asr_clean):
    """``(asr_target - asr_clean) / asr_clean``."""
    if asr_clean <= 0:
        raise UndefinedBaselineError("relative difference needs a positive baseline ASR")
    return (asr_target - asr_clean) / asr_clean


def _members(source):
    return list(source) if isinstance(source, (list, tuple)) else [source]


def threat_setting(source_name, source, target_name, target):
    """Classify a (source, target) pair as white_box, grey_box or black_box."""
    members = _members(source)
    base = target.model if isinstance(target, DefendedModel) else target
    shared = [m for m in members if m is base]
    if not shared:
        return "black_box"
    if len(members) == 1:
        return "grey_box" if isinstance(target, DefendedModel) else "white_box"
    raise ConfigurationError(
        f"invalid pairing {source_name!r} -> {target_name!r}: ensemble shares a member "
        "with the target but is not the target itself")


@dataclass
class Cell:
    source: str
    target: str
    setting: str
    successes: int
    n_examples: int
    relative_diff: float | None = None

    @property
    def asr(self):
        return self.successes / self.n_examples if self.n_examples else 0.0


@dataclass
class EvalReport:
    spec: dict
    master_seed: int
    cells: list = field(default_factory=list)
    config_digest: str = ""
    clean_target: str | None = None

    def cell(self, source, target):
        for c in self.cells:
            if c.source == source and c.target == target:
                return c
        raise KeyError((source, target))

    def rows(self):
        constraint = self.spec["constraint"]
        for c in self.cells:
            yield {
                "schema_version": SCHEMA_VERSION,
                "source": c.source,
                "target": c.target,
                "setting": c.setting,
                "method": self.spec["method"],
                "epsilon": self.spec["epsilon"],
                "iterations": self.spec["iterations"],
                "targeted": self.spec["targeted"],
                "constraint": constraint.get("mask", constraint["kind"]),
                "reduced_dim": constraint.get("n", ""),
                "mask_repeats": self.spec.get("mask_repeats", 1),
                "n_examples": c.n_examples,
                "successes": c.successes,
                "asr": c.asr,
                "relative_diff": "" if c.relative_diff is None else c.relative_diff,
                "config_digest": self.config_digest,
            }

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow(row)
        return buf.getvalue()

    def to_json(self):
        nested = {}
        for c in self.cells:
            nested.setdefault(c.source, {})[c.target] = {
                "setting": c.setting,
                "asr": c.asr,
                "successes": c.successes,
                "n_examples": c.n_examples,
                "relative_diff": c.relative_diff,
            }
        doc = {
            "schema_version": SCHEMA_VERSION,
            "master_seed": self.master_seed,
            "config_digest": self.config_digest,
            "clean_target": self.clean_target,
            "spec": self.spec,
            "cells": nested,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _name_seed(master_seed, name):
    return example_seed(master_seed, zlib.crc32(name.encode("utf-8")))


def _chunks(n):
    return [(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]


def generate_adversarial(source, dataset, spec, threads=1):
    """Adversarial copies of ``dataset.images`` and the labels the attack aimed at."""
    members = _members(source)

    def work(bounds):
        lo, hi = bounds
        res = run_attack(members, dataset.images[lo:hi], dataset.labels[lo:hi], spec,
                         index_offset=lo)
        return res.adversarial, res.attack_labels

    parts = _map(work, _chunks(len(dataset)), threads)
    if not parts:
        return dataset.images[:0].copy(), dataset.labels[:0].copy()
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def predict_target(target, images, seed, threads=1):
    def work(bounds):
        lo, hi = bounds
        if isinstance(target, DefendedModel):
            return target.predict(images[lo:hi], seed, index_offset=lo)
        return target.predict(images[lo:hi])

    parts = _map(work, _chunks(len(images)), threads)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def _mask_specs(spec, master_seed):
    c = spec.constraint
    if isinstance(c, FreqMask) and c.mask.kind == "random":
        out = []
        for r in range(RANDOM_MASK_REPEATS):
            mask = build_mask("random", c.mask.side, c.mask.reduced_dim,
                              seed=example_seed(master_seed, 10_000 + r))
            out.append(replace(spec, constraint=FreqMask(mask)))
        return out
    return [spec]


def run_matrix(sources, targets, spec, dataset, master_seed=0, clean_target=None,
               threads=1, config_digest=""):
    """ASR for every (source, target) pair.

    Args:
        sources: ordered mapping name -> classifier or list of classifiers.
        targets: ordered mapping name -> classifier or defended model.
        spec: attack spec; its seed is replaced by one derived from ``master_seed``.
        dataset: evaluation split.
        clean_target: target column used as the relative-difference baseline
            (defaults to the first target).

    Random-band masks are redrawn for three seeds and the counts pooled.
    """
    settings = {(s, t): threat_setting(s, src, t, tgt)
                for s, src in sources.items() for t, tgt in targets.items()}
    clean_target = clean_target if clean_target is not None else next(iter(targets))
    if clean_target not in targets:
        raise ConfigurationError(f"unknown clean target {clean_target!r}")
    spec = replace(spec, seed=example_seed(master_seed, 1))
    runs = _mask_specs(spec, master_seed)
    described = spec.describe()
    described["mask_repeats"] = len(runs)
    report = EvalReport(described, int(master_seed), config_digest=config_digest,
                        clean_target=clean_target)
    for s_name, source in sources.items():
        counts = {t: 0 for t in targets}
        for run_spec in runs:
            adv, aimed = generate_adversarial(source, dataset, run_spec, threads)
            for t_name, target in targets.items():
                pred = predict_target(target, adv, _name_seed(master_seed, t_name), threads)
                hits = pred == aimed if run_spec.targeted else pred != dataset.labels
                counts[t_name] += int(hits.sum())
        row = [Cell(s_name, t, settings[(s_name, t)], counts[t], len(dataset) * len(runs))
               for t in targets]
        base = next(c for c in row if c.target == clean_target)
        for c in row:
            c.relative_diff = relative_difference(c.asr, base.asr) if base.asr > 0 else None
        report.cells.extend(row)
    return report


@dataclass
class SweepReport:
    n_values: list
    asr: list
    baseline: float
    spec: dict

    def rows(self):
        yield {"n": "none", "asr": self.baseline}
        for n, a in zip(self.n_values, self.asr):
            yield {"n": n, "asr": a}

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["schema_version", "n", "asr"], lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({"schema_version": SCHEMA_VERSION, **row})
        return buf.getvalue()

    def to_json(self):
        doc = {"schema_version": SCHEMA_VERSION, "spec": self.spec, "baseline": self.baseline,
               "rows": [{"n": n, "asr": a} for n, a in zip(self.n_values, self.asr)]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def dimensionality_sweep(source, target, spec, dataset, n_values, master_seed=0, threads=1):
    """ASR of ``spec`` with a low-pass DCT mask for each ``n`` plus the unconstrained baseline."""
    n_values = [int(n) for n in n_values]
    d = dataset.image_shape[0]
    if any(b >= a for a, b in zip(n_values, n_values[1:])):
        raise InvalidInputError(f"n values must be strictly decreasing, got {n_values}")
    if any(n > d or n < 1 for n in n_values):
        raise InvalidInputError(f"n values must lie in [1, {d}], got {n_values}")
    threat_setting("source", source, "target", target)
    spec = replace(spec, seed=example_seed(master_seed, 1))
    seed = _name_seed(master_seed, "target")

    def asr_for(run_spec):
        adv, aimed = generate_adversarial(source, dataset, run_spec, threads)
        pred = predict_target(target, adv, seed, threads)
        return attack_success_rate(pred, dataset.labels, aimed, run_spec.targeted)

    baseline = asr_for(replace(spec, constraint=make_constraint("none")))
    rates = [asr_for(replace(spec, constraint=make_constraint("freq_mask", d, n, "low")))
             for n in n_values]
    return SweepReport(n_values, rates, baseline, spec.describe())

"""Repeated cross-validation, performance metrics, KS test and LED analysis."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import NamedTuple, Optional

import numpy as np

from .forest import Dataset, ForestConfig, random_classifier, train

REPORT_SCHEMA_VERSION = 1
KS_TERMS = 100


class ContractError(ValueError):
    """Inputs are well-formed but violate an operation's preconditions."""


# --- metrics -----------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with treatment (label 1) as the positive class."""

    TP: int
    FP: int
    TN: int
    FN: int

    @classmethod
    def from_predictions(cls, truth, pred):
        truth = np.asarray(truth)
        pred = np.asarray(pred)
        return cls(
            TP=int(np.sum((truth == 1) & (pred == 1))),
            FP=int(np.sum((truth == 0) & (pred == 1))),
            TN=int(np.sum((truth == 0) & (pred == 0))),
            FN=int(np.sum((truth == 1) & (pred == 0))),
        )

    @property
    def total(self):
        return self.TP + self.FP + self.TN + self.FN

    def __add__(self, other):
        return ConfusionMatrix(self.TP + other.TP, self.FP + other.FP,
                               self.TN + other.TN, self.FN + other.FN)


class Metrics(NamedTuple):
    sensitivity: float
    specificity: float
    accuracy: float


def metrics(cm: ConfusionMatrix) -> Metrics:
    positives = cm.TP + cm.FN
    negatives = cm.TN + cm.FP
    if positives < 1 or negatives < 1:
        raise ContractError("metrics need at least one treatment and one baseline instance")
    return Metrics(cm.TP / positives, cm.TN / negatives, (cm.TP + cm.TN) / cm.total)


# --- Kolmogorov-Smirnov ------------------------------------------------

def kolmogorov_sf(lam, terms=KS_TERMS):
    """P(K > lam) for the limiting Kolmogorov distribution.

    Uses the alternating series for lam >= 1.18 and the Jacobi-transformed
    series below it, each truncated at ``terms`` terms.
    """
    if lam <= 0:
        return 1.0
    k = np.arange(1, terms + 1, dtype=np.float64)
    if lam >= 1.18:
        signs = np.where(k % 2 == 1, 1.0, -1.0)
        p = 2.0 * float(np.sum(signs * np.exp(-2.0 * k * k * lam * lam)))
    else:
        odd = 2.0 * k - 1.0
        cdf = math.sqrt(2.0 * math.pi) / lam * float(
            np.sum(np.exp(-odd * odd * math.pi ** 2 / (8.0 * lam * lam))))
        p = 1.0 - cdf
    return min(1.0, max(0.0, p))


class KSResult(NamedTuple):
    D: float
    p: float


def ks_two_sample(a, b) -> KSResult:
    """Two-sided two-sample KS statistic with the asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ContractError("ks_two_sample: both samples must be non-empty")
    pts = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pts, side="right") / n
    cdf_b = np.searchsorted(b, pts, side="right") / m
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = math.sqrt(n * m / (n + m))
    return KSResult(d, kolmogorov_sf(en * d))


# --- cross-validation --------------------------------------------------

def fold_partition(n, folds, rng, labels=None, groups=None):
    """Fold index per instance; sizes differ by at most one.

    Default is a plain random partition. ``labels`` stratifies by class;
    ``groups`` keeps each group (e.g. a participant or a pair) in one fold,
    in which case sizes are only balanced greedily.
    """
    assign = np.empty(n, dtype=np.int64)
    if groups is not None:
        uniq, inv = np.unique(np.asarray(groups), return_inverse=True)
        sizes = np.bincount(inv)
        load = np.zeros(folds, dtype=np.int64)
        for g in rng.permutation(len(uniq)):
            f = int(np.argmin(load))
            assign[inv == g] = f
            load[f] += sizes[g]
        return assign
    if labels is not None:
        order = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in (0, 1)])
        assign[order] = np.arange(n) % folds
        return assign
    perm = rng.permutation(n)
    for f, chunk in enumerate(np.array_split(perm, folds)):
        assign[chunk] = f
    return assign


def _seed_int(seq):
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass(eq=False)
class CVResult:
    confusion: list  # one pooled ConfusionMatrix per repetition
    random_confusion: list
    importance: np.ndarray
    feature_ids: tuple
    fold_ids: np.ndarray  # repetitions x n
    probabilities: np.ndarray  # repetitions x n, out-of-fold P(treatment)
    labels: np.ndarray
    groups: Optional[np.ndarray]
    config: dict = field(default_factory=dict)

    @property
    def per_repetition(self):
        return [metrics(cm) for cm in self.confusion]

    @property
    def random_per_repetition(self):
        return [metrics(cm) for cm in self.random_confusion]

    @staticmethod
    def _summary(rows):
        arr = np.array(rows, dtype=np.float64)
        ddof = 1 if len(arr) > 1 else 0
        return {name: (float(arr[:, i].mean()), float(arr[:, i].std(ddof=ddof)))
                for i, name in enumerate(Metrics._fields)}

    @property
    def aggregate(self):
        return self._summary(self.per_repetition)

    @property
    def random_aggregate(self):
        return self._summary(self.random_per_repetition)

    def ks_vs_random(self):
        return ks_two_sample([m.accuracy for m in self.per_repetition],
                             [m.accuracy for m in self.random_per_repetition])

    def per_participant_accuracy(self):
        """participant -> (accuracy over all repetitions, number of instances)."""
        if self.groups is None:
            return {}
        correct = ((self.probabilities >= 0.5).astype(np.int64) == self.labels).mean(axis=0)
        out = {}
        for g in sorted(set(self.groups.tolist())):
            rows = self.groups == g
            out[g] = (float(correct[rows].mean()), int(rows.sum()))
        return out

    def ranking(self):
        order = np.argsort(-self.importance, kind="stable")
        return [(self.feature_ids[i], float(self.importance[i])) for i in order]


def repeated_cv(data: Dataset, folds=10, repetitions=100, seed=0,
                forest: ForestConfig = ForestConfig(), threads=1,
                stratified=False, group_folds=None) -> CVResult:
    """Repeated k-fold CV of the forest alongside the random classifier.

    Each repetition permutes the instances, splits them into ``folds``
    subsets, trains on all but one and pools the held-out predictions into
    one confusion matrix. Per-repetition seed streams make the result
    independent of ``threads``. ``group_folds`` (array per row) keeps groups
    on one side of every split.
    """
    n = len(data)
    if n < folds:
        raise ContractError(f"{n} instances cannot fill {folds} folds")
    try:
        data.require_both_classes()
    except ValueError as exc:
        raise ContractError(str(exc)) from None
    y = data.labels
    fold_ids = np.empty((repetitions, n), dtype=np.int64)
    probs = np.empty((repetitions, n))
    confusion, random_cm = [], []
    importance = np.zeros(data.n_features)
    n_forests = 0
    for rep, rep_seq in enumerate(np.random.SeedSequence(seed).spawn(repetitions)):
        part_seq, forest_seq, null_seq = rep_seq.spawn(3)
        rng = np.random.Generator(np.random.PCG64(part_seq))
        assign = fold_partition(n, folds, rng, labels=y if stratified else None,
                                groups=group_folds)
        fold_ids[rep] = assign
        rand_pred = np.empty(n, dtype=np.int64)
        for f, (fseq, nseq) in enumerate(zip(forest_seq.spawn(folds), null_seq.spawn(folds))):
            val = assign == f
            tr = ~val
            if not val.any():
                continue
            train_set = data.subset(tr)
            try:
                train_set.require_both_classes()
            except ValueError:
                raise ContractError(f"repetition {rep} fold {f}: training split has one class") from None
            cfg = ForestConfig(forest.n_trees, forest.mtry, forest.min_split,
                               forest.max_depth, _seed_int(fseq))
            model = train(train_set, cfg, threads=threads)
            importance += model.importance
            n_forests += 1
            probs[rep, val] = model.predict_proba(data.matrix[val])
            p1 = float(y[tr].mean())
            rand_pred[val] = random_classifier((1.0 - p1, p1), int(val.sum()), nseq)
        confusion.append(ConfusionMatrix.from_predictions(y, (probs[rep] >= 0.5).astype(np.int64)))
        random_cm.append(ConfusionMatrix.from_predictions(y, rand_pred))
    return CVResult(
        confusion=confusion, random_confusion=random_cm,
        importance=importance / max(n_forests, 1), feature_ids=data.feature_ids,
        fold_ids=fold_ids, probabilities=probs, labels=y, groups=data.groups,
        config={"folds": folds, "repetitions": repetitions, "seed": seed,
                "forest": asdict(forest), "stratified": stratified,
                "grouped": group_folds is not None},
    )


# --- LED -------------------------------------------------------------

@dataclass(frozen=True)
class LEDRule:
    factor: float
    rule: str = "plain"  # or "multiplies_levodopa"


def load_led_table(path=None):
    """Conversion table ``drug -> LEDRule`` from CSV (drug, factor, rule)."""
    if path is None:
        text = resources.files("medresponse.data").joinpath("led_table.csv").read_text()
        lines = text.splitlines()
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
    table = {}
    for row in csv.DictReader(lines):
        rule = (row.get("rule") or "plain").strip()
        if rule not in ("plain", "multiplies_levodopa"):
            raise ValueError(f"LED table: unknown rule {rule!r} for {row['drug']}")
        table[row["drug"].strip().lower()] = LEDRule(float(row["factor"]), rule)
    return table


def is_levodopa(drug):
    return drug.lower().startswith("levodopa")


@dataclass(frozen=True)
class LEDRecord:
    participant_id: str
    regimen: tuple  # (drug, dose_mg, times_per_day)
    daily_led: float


def daily_led(regimen, table=None) -> float:
    """Total daily levodopa-equivalent dose in mg.

    Plain entries contribute dose x times/day x factor. COMT-inhibitor
    entries ("multiplies_levodopa") contribute factor x the LED of the
    regimen's levodopa entries; their own dose does not enter.
    """
    table = load_led_table() if table is None else table
    plain = 0.0
    levodopa = 0.0
    multipliers = []
    for drug, dose, freq in regimen:
        key = drug.strip().lower()
        if key not in table:
            raise KeyError(f"drug {drug!r} is not in the LED conversion table")
        if dose < 0 or freq < 0:
            raise ValueError(f"negative dose or frequency for {drug!r}")
        entry = table[key]
        if entry.rule == "multiplies_levodopa":
            multipliers.append(entry.factor)
            continue
        contrib = dose * freq * entry.factor
        plain += contrib
        if is_levodopa(key):
            levodopa += contrib
    return plain + sum(f * levodopa for f in multipliers)


@dataclass(frozen=True)
class QuadraticFit:
    c0: float
    c1: float
    c2: float
    n_points: int
    led_min: float
    led_max: float

    def __call__(self, led):
        return self.c0 + self.c1 * led + self.c2 * led * led

    @property
    def vertex(self):
        return None if self.c2 == 0 else -self.c1 / (2.0 * self.c2)

    def to_dict(self):
        return {"c0": self.c0, "c1": self.c1, "c2": self.c2, "n_points": self.n_points,
                "vertex_led": self.vertex, "concave": self.c2 < 0,
                "fitted_at_min": self(self.led_min), "fitted_at_max": self(self.led_max),
                "led_min": self.led_min, "led_max": self.led_max}


def accuracy_vs_led(points, min_instances=20) -> QuadraticFit:
    """Least-squares quadratic of accuracy on LED.

    ``points`` holds (led, accuracy) or (led, accuracy, n_instances); the
    three-element form drops participants with fewer than ``min_instances``.
    """
    kept = [p for p in points if len(p) < 3 or p[2] >= min_instances]
    if len(kept) < 3:
        raise ContractError(f"need at least 3 participants, have {len(kept)}")
    led = np.array([p[0] for p in kept], dtype=np.float64)
    acc = np.array([p[1] for p in kept], dtype=np.float64)
    if len(np.unique(led)) < 3:
        raise ContractError("need at least 3 distinct LED values")
    scale = max(float(np.max(np.abs(led))), 1.0)
    u = led / scale
    design = np.column_stack([np.ones_like(u), u, u * u])
    coef, *_ = np.linalg.lstsq(design, acc, rcond=None)
    return QuadraticFit(float(coef[0]), float(coef[1] / scale), float(coef[2] / scale ** 2),
                        len(kept), float(led.min()), float(led.max()))


# --- pairing in a feature matrix and paired differences ------------------

def pair_rows(meta):
    """Row indices of (baseline, treatment) pairs sharing participant and local date."""
    from .io import parse_timestamp
    slots = defaultdict(dict)
    for i, (pid, started, label) in enumerate(meta):
        if label in ("baseline", "treatment"):
            day = parse_timestamp(started).date()
            slots[(pid, day)].setdefault(label, i)
    return [(d["baseline"], d["treatment"], key[0]) for key, d in sorted(slots.items())
            if "baseline" in d and "treatment" in d]


def feature_differences(meta, matrix, feature_ids):
    """Treatment minus baseline per pair; returns (pairs, diffs, medians)."""
    pairs = pair_rows(meta)
    if not pairs:
        return [], np.zeros((0, len(feature_ids))), np.zeros(len(feature_ids))
    b = np.array([p[0] for p in pairs])
    t = np.array([p[1] for p in pairs])
    diffs = matrix[t] - matrix[b]
    with np.errstate(all="ignore"):
        medians = np.nanmedian(diffs, axis=0) if len(diffs) else np.zeros(len(feature_ids))
    return pairs, diffs, medians


# --- report -----------------------------------------------------------

def _csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)


def report_paths(report_path):
    from pathlib import Path
    p = Path(report_path)
    stem = p.with_suffix("")
    return {
        "repetitions": Path(f"{stem}_repetitions.csv"),
        "importance": Path(f"{stem}_importance.csv"),
        "participants": Path(f"{stem}_participants.csv"),
        "differences": Path(f"{stem}_feature_differences.csv"),
        "difference_medians": Path(f"{stem}_feature_difference_medians.csv"),
    }


def build_report(result: CVResult, effective_config, led=None, differences=None, top_k=10):
    from .features.registry import feature_spec
    ks = result.ks_vs_random()
    ranking = result.ranking()
    part = result.per_participant_accuracy()
    led = led or {}

    def describe(fid):
        try:
            spec = feature_spec(fid)
        except KeyError:
            return "", ""
        from .features.registry import TEST_TITLES
        return TEST_TITLES.get(spec.test, spec.test), spec.description

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": effective_config,
        "n_instances": int(len(result.labels)),
        "n_treatment": int(result.labels.sum()),
        "random_forest": {k: {"mean": m, "std": s} for k, (m, s) in result.aggregate.items()},
        "random_classifier": {k: {"mean": m, "std": s}
                              for k, (m, s) in result.random_aggregate.items()},
        "ks_forest_vs_random": {"D": ks.D, "p": ks.p},
        "per_repetition": [m._asdict() for m in result.per_repetition],
        "random_per_repetition": [m._asdict() for m in result.random_per_repetition],
        "confusion": [asdict(cm) for cm in result.confusion],
        "top_features": [
            {"feature_id": fid, "test": describe(fid)[0], "description": describe(fid)[1],
             "importance": imp}
            for fid, imp in ranking[:top_k]
        ],
        "per_participant": [
            {"participant_id": pid, "accuracy": acc, "n_instances": n,
             "daily_led": led.get(pid)}
            for pid, (acc, n) in part.items()
        ],
    }
    if led and part:
        pts = [(led[pid], acc, n) for pid, (acc, n) in part.items() if pid in led]
        try:
            report["accuracy_vs_led"] = accuracy_vs_led(pts).to_dict()
        except ContractError as exc:
            report["accuracy_vs_led"] = {"error": str(exc)}
    if differences is not None:
        pairs, _, medians = differences
        report["n_pairs"] = len(pairs)
    return report


def write_report(path, report, result: CVResult, differences=None, led=None):
    from .features.registry import TEST_TITLES, feature_spec
    paths = report_paths(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    _csv(paths["repetitions"],
         ["repetition", "sensitivity", "specificity", "accuracy", "random_sensitivity",
          "random_specificity", "random_accuracy", "TP", "FP", "TN", "FN"],
         [[i, *map(repr, m), *map(repr, r), cm.TP, cm.FP, cm.TN, cm.FN]
          for i, (m, r, cm) in enumerate(zip(result.per_repetition,
                                             result.random_per_repetition, result.confusion))])
    rows = []
    for rank, (fid, imp) in enumerate(result.ranking(), start=1):
        try:
            spec = feature_spec(fid)
            test, desc = TEST_TITLES.get(spec.test, spec.test), spec.description
        except KeyError:
            test, desc = "", ""
        rows.append([rank, fid, test, desc, repr(imp)])
    _csv(paths["importance"], ["rank", "feature_id", "test", "description", "importance"], rows)
    led = led or {}
    _csv(paths["participants"], ["participant_id", "accuracy", "n_instances", "daily_led"],
         [[pid, repr(acc), n, "" if pid not in led else repr(led[pid])]
          for pid, (acc, n) in result.per_participant_accuracy().items()])
    if differences is not None:
        pairs, diffs, medians = differences
        fids = list(result.feature_ids)
        _csv(paths["differences"], ["participant_id", "baseline_row", "treatment_row"] + fids,
             [[pid, b, t, *("" if np.isnan(v) else repr(float(v)) for v in row)]
              for (b, t, pid), row in zip(pairs, diffs)])
        _csv(paths["difference_medians"], ["feature_id", "median_difference"],
             [[fid, "" if np.isnan(m) else repr(float(m))] for fid, m in zip(fids, medians)])
    return paths

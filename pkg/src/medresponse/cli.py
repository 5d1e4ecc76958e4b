"""``medresponse`` command-line interface.

Every subcommand takes ``--config cfg.json``; values resolve as
command-line flag > config file > built-in default, and the effective
configuration is echoed into the JSON outputs. The config file is a JSON
object whose top-level keys apply to every subcommand and whose
subcommand-named sub-objects (e.g. ``{"evaluate": {"reps": 10}}``) apply to
that subcommand only.

Exit codes: 0 success, 2 input-format error, 3 contract violation, 4
internal invariant failure. Failures print one line to stderr of the form
``error code=<name> exit=<n> message=<text>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import RecordingError, pair_instances
from .evaluation import (
    ContractError,
    LEDRecord,
    accuracy_vs_led,
    build_report,
    daily_led,
    feature_differences,
    load_led_table,
    repeated_cv,
    write_report,
)
from .features import extract_instances
from .features.registry import FEATURE_IDS, registry_manifest
from .forest import Dataset, ForestConfig, train
from .io import (
    FormatError,
    format_timestamp,
    read_feature_csv,
    read_instances,
    relative_voice_paths,
    write_feature_csv,
    write_instances,
)

CLI_SCHEMA_VERSION = 1

EXIT_OK, EXIT_FORMAT, EXIT_CONTRACT, EXIT_INTERNAL = 0, 2, 3, 4
_CODE_NAMES = {EXIT_FORMAT: "input_format", EXIT_CONTRACT: "contract_violation",
               EXIT_INTERNAL: "internal_error"}


class CliError(Exception):
    def __init__(self, exit_code, message):
        super().__init__(message)
        self.exit_code = exit_code


# Built-in defaults per subcommand; argparse defaults are None so that
# explicit flags can be told apart from omitted ones.
DEFAULTS = {
    "common": {"threads": 1, "seed": 0},
    "pair": {"window": "30:180"},
    "train": {"trees": 500, "mtry": None, "min_split": 2, "max_depth": None, "top_k": 10,
              "allow_missing": False},
    "evaluate": {"folds": 10, "reps": 100, "trees": 500, "mtry": None, "min_split": 2,
                 "max_depth": None, "stratified": False, "group": "none", "top_k": 10,
                 "allow_missing": False},
    "simulate": {"participants": 20, "instances": 40, "led_min": 0.0, "led_max": 2500.0,
                 "response_curve": None, "audio": "wav"},
    "led": {"min_instances": 20},
}


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CliError(EXIT_FORMAT, f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_FORMAT, f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise CliError(EXIT_FORMAT, f"config {path} must hold a JSON object")
    return cfg


def resolve(args, command):
    """Fill unset options from the config file, then from DEFAULTS."""
    cfg = _load_config(args.config)
    section = cfg.get(command, {})
    if not isinstance(section, dict):
        raise CliError(EXIT_FORMAT, f"config section {command!r} must be an object")
    defaults = {**DEFAULTS["common"], **DEFAULTS.get(command, {})}
    effective = {}
    for key, default in defaults.items():
        val = getattr(args, key, None)
        if val is None:
            val = section.get(key, cfg.get(key, default))
        setattr(args, key, val)
        if key != "threads":  # never changes results, so reports stay byte-identical
            effective[key] = val
    if not isinstance(args.seed, int) or args.seed < 0:
        raise CliError(EXIT_CONTRACT, "seed must be a non-negative integer")
    if not isinstance(args.threads, int) or args.threads < 1:
        raise CliError(EXIT_CONTRACT, "threads must be a positive integer")
    return effective


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _out_dir(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def _read_jsonl(path, report=True):
    try:
        instances, rejects = read_instances(path)
    except OSError as exc:
        raise CliError(EXIT_FORMAT, f"cannot read {path}: {exc.strerror}") from None
    if report:
        for lineno, reason in rejects:
            print(f"reject {path}:{lineno}: {reason}", file=sys.stderr)
    return instances, rejects


# --- subcommands -------------------------------------------------------

def cmd_ingest(args, effective):
    instances, n_rejected = [], 0
    for f in args.files:
        got, rejects = _read_jsonl(f)
        instances.extend(got)
        n_rejected += len(rejects)
    print(f"ingested {len(instances)} instances; rejected {n_rejected} lines")
    if not instances:
        raise CliError(EXIT_FORMAT, "no valid instances in input")
    _out_dir(args.out)
    write_instances(args.out, instances, relative_voice_paths(instances, args.out))


def _parse_window(text):
    try:
        lo, hi = (float(v) for v in str(text).split(":"))
    except ValueError:
        raise CliError(EXIT_FORMAT, f"window must look like MIN:MAX, got {text!r}") from None
    if not 0 <= lo < hi:
        raise CliError(EXIT_CONTRACT, f"window needs 0 <= MIN < MAX, got {text!r}")
    return lo, hi


def cmd_pair(args, effective):
    lo, hi = _parse_window(args.window)
    instances, _ = _read_jsonl(args.input)
    pairs = pair_instances(instances, lo, hi)
    flat = [inst for pair in pairs for inst in pair]
    _out_dir(args.out)
    write_instances(args.out, flat, relative_voice_paths(flat, args.out))
    rate = 2 * len(pairs) / len(instances) if instances else 0.0
    print(f"paired {len(pairs)} pairs from {len(instances)} instances "
          f"(yield {100 * rate:.1f}% of instances)")


def cmd_extract(args, effective):
    instances, _ = _read_jsonl(args.input)
    if not instances:
        raise CliError(EXIT_FORMAT, f"{args.input}: no valid instances")
    results = extract_instances(instances, threads=args.threads)
    rows, failed = [], 0
    for k, res in enumerate(results):
        inst = res.instance
        if not res.complete:
            failed += 1
            why = [f"{t}: {r}" for t, r in sorted(res.failures.items())]
            why += [f"{t}: missing" for t in res.missing]
            print(f"incomplete instance {k} ({inst.participant_id} "
                  f"{format_timestamp(inst.started_at)}): {'; '.join(why)}", file=sys.stderr)
        rows.append((inst.participant_id, format_timestamp(inst.started_at), inst.label,
                     res.features.as_dict()))
    _out_dir(args.out)
    write_feature_csv(args.out, rows, FEATURE_IDS)
    if args.registry:
        _write_json(args.registry, registry_manifest())
    print(f"extracted {len(results)} instances; {failed} incomplete")


def _dataset(path, allow_missing):
    try:
        meta, matrix, fids = read_feature_csv(path)
    except OSError as exc:
        raise CliError(EXIT_FORMAT, f"cannot read {path}: {exc.strerror}") from None
    labels = [m[2] for m in meta]
    keep = np.array([lab in ("baseline", "treatment") for lab in labels], dtype=bool)
    missing = np.isnan(matrix).any(axis=1)
    if allow_missing:
        matrix = np.where(np.isnan(matrix), 0.0, matrix)
    else:
        if (missing & keep).any():
            print(f"dropping {int((missing & keep).sum())} rows with missing features",
                  file=sys.stderr)
        keep &= ~missing
    if keep.sum() < 2:
        raise CliError(EXIT_CONTRACT, "fewer than 2 labeled, complete instances")
    idx = np.flatnonzero(keep)
    meta = [meta[i] for i in idx]
    y = np.array([1 if m[2] == "treatment" else 0 for m in meta], dtype=np.int64)
    groups = np.array([m[0] for m in meta])
    return meta, Dataset(matrix[idx], y, tuple(fids), groups)


def _forest_config(args, seed):
    for name in ("trees", "min_split"):
        if getattr(args, name) < 1:
            raise CliError(EXIT_CONTRACT, f"{name} must be at least 1")
    if args.mtry is not None and args.mtry < 1:
        raise CliError(EXIT_CONTRACT, "mtry must be at least 1")
    return ForestConfig(args.trees, args.mtry, args.min_split, args.max_depth, seed)


def cmd_train(args, effective):
    _, data = _dataset(args.features, args.allow_missing)
    try:
        forest = train(data, _forest_config(args, args.seed), threads=args.threads)
    except ValueError as exc:
        raise CliError(EXIT_CONTRACT, str(exc)) from None
    _out_dir(args.model)
    forest.save(args.model)
    print(f"trained {forest.n_trees} trees on {len(data)} instances x {data.n_features} features")
    for rank, (fid, imp) in enumerate(forest.ranking()[:args.top_k], start=1):
        print(f"{rank:3d}  {fid:<28s} {imp:.6f}")


def _read_led_csv(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError(EXIT_FORMAT, f"cannot read {path}: {exc.strerror}") from None
    try:
        return {r["participant_id"]: float(r["daily_led"]) for r in rows}
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_FORMAT, f"{path}: needs participant_id, daily_led columns ({exc})") from None


def cmd_evaluate(args, effective):
    meta, data = _dataset(args.features, args.allow_missing)
    if args.group not in ("none", "participant", "pair"):
        raise CliError(EXIT_FORMAT, f"unknown group mode {args.group!r}")
    groups = None
    if args.group == "participant":
        groups = data.groups
    elif args.group == "pair":
        from .io import parse_timestamp
        groups = np.array([f"{m[0]}|{parse_timestamp(m[1]).date()}" for m in meta])
    led = _read_led_csv(args.led) if args.led else None
    result = repeated_cv(data, folds=args.folds, repetitions=args.reps, seed=args.seed,
                         forest=_forest_config(args, 0), threads=args.threads,
                         stratified=args.stratified, group_folds=groups)
    differences = feature_differences(meta, data.matrix, data.feature_ids)
    effective = {**effective, "features": str(args.features),
                 "led": None if args.led is None else str(args.led), "version": __version__}
    report = build_report(result, effective, led=led, differences=differences,
                          top_k=args.top_k)
    _out_dir(args.report)
    write_report(args.report, report, result, differences=differences, led=led)
    acc = report["random_forest"]["accuracy"]
    ks = report["ks_forest_vs_random"]
    print(f"accuracy {acc['mean']:.4f} +/- {acc['std']:.4f}; "
          f"KS vs random D={ks['D']:.3f} p={ks['p']:.3g}")


def _read_regimens(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError(EXIT_FORMAT, f"cannot read {path}: {exc.strerror}") from None
    regimens = {}
    for lineno, r in enumerate(rows, start=2):
        try:
            pid = r["participant_id"]
            entry = (r["drug"], float(r["dose_mg"]), float(r["times_per_day"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(EXIT_FORMAT, f"{path}:{lineno}: bad regimen row ({exc})") from None
        if not all(math.isfinite(v) for v in entry[1:]):
            raise CliError(EXIT_FORMAT, f"{path}:{lineno}: non-finite dose or frequency")
        regimens.setdefault(pid, []).append(entry)
    return regimens


def cmd_led(args, effective):
    try:
        table = load_led_table(args.table)
    except OSError as exc:
        raise CliError(EXIT_FORMAT, f"cannot read {args.table}: {exc.strerror}") from None
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_FORMAT, f"bad LED table: {exc}") from None
    records = []
    for pid, regimen in sorted(_read_regimens(args.regimens).items()):
        try:
            records.append(LEDRecord(pid, tuple(regimen), daily_led(regimen, table)))
        except KeyError as exc:
            raise CliError(EXIT_CONTRACT, f"participant {pid}: {exc.args[0]}") from None
        except ValueError as exc:
            raise CliError(EXIT_CONTRACT, f"participant {pid}: {exc}") from None
    _out_dir(args.out)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["participant_id", "daily_led"])
        for rec in records:
            w.writerow([rec.participant_id, repr(rec.daily_led)])
    print(f"computed daily LED for {len(records)} participants")
    if args.fit_quadratic:
        if not args.report:
            raise CliError(EXIT_CONTRACT, "--fit-quadratic needs --report")
        try:
            with open(args.report, encoding="utf-8") as fh:
                report = json.load(fh)
            per = report["per_participant"]
        except OSError as exc:
            raise CliError(EXIT_FORMAT, f"cannot read {args.report}: {exc.strerror}") from None
        except (json.JSONDecodeError, KeyError) as exc:
            raise CliError(EXIT_FORMAT, f"{args.report}: not an evaluation report ({exc})") from None
        led = {r.participant_id: r.daily_led for r in records}
        pts = [(led[p["participant_id"]], p["accuracy"], p["n_instances"])
               for p in per if p["participant_id"] in led]
        fit = accuracy_vs_led(pts, min_instances=args.min_instances)
        out = {"schema_version": CLI_SCHEMA_VERSION, "config": effective,
               "accuracy_vs_led": fit.to_dict()}
        fit_path = Path(args.out).with_name(Path(args.out).stem + "_fit.json")
        _write_json(fit_path, out)
        print(f"quadratic fit: vertex {fit.vertex} mg over {fit.n_points} participants "
              f"-> {fit_path}")


def cmd_simulate(args, effective):
    from .synth import EffectProfile, generate_cohort, load_profile, write_cohort
    curve = "mid_led"
    profile = EffectProfile()
    if args.effect:
        try:
            profile, curve = load_profile(args.effect)
        except OSError as exc:
            raise CliError(EXIT_FORMAT, f"cannot read {args.effect}: {exc.strerror}") from None
        except (json.JSONDecodeError, TypeError) as exc:
            raise CliError(EXIT_FORMAT, f"bad effect profile: {exc}") from None
    if args.response_curve:
        curve = args.response_curve
    if args.participants < 2:
        raise CliError(EXIT_CONTRACT, "need at least 2 participants")
    if args.instances < 2:
        raise CliError(EXIT_CONTRACT, "need at least 2 instances per participant")
    if not 0 <= args.led_min <= args.led_max:
        raise CliError(EXIT_CONTRACT, "LED range needs 0 <= min <= max")
    cohort = generate_cohort(args.participants, args.instances,
                             led_range=(args.led_min, args.led_max), response_curve=curve,
                             seed=args.seed, profile=profile, threads=args.threads)
    out = write_cohort(cohort, args.out, audio=args.audio)
    print(f"simulated {len(cohort.instances)} instances for {args.participants} "
          f"participants -> {out}")


# --- parser ------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="medresponse",
                                description="Medication-response detection from smartphone active tests.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="root random seed (default 0)")
    common.add_argument("--threads", type=int, help="worker threads (default 1)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="validate and normalize instance files")
    s.add_argument("files", nargs="+")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("pair", parents=[common], help="pair baseline/treatment sessions")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--window", help="minutes MIN:MAX after the baseline (default 30:180)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pair)

    s = sub.add_parser("extract", parents=[common], help="extract the feature matrix")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--registry", help="also write the feature registry JSON here")
    s.set_defaults(func=cmd_extract)

    def forest_opts(s):
        s.add_argument("--features", required=True)
        s.add_argument("--trees", type=int)
        s.add_argument("--mtry", type=int)
        s.add_argument("--min-split", dest="min_split", type=int)
        s.add_argument("--max-depth", dest="max_depth", type=int)
        s.add_argument("--top-k", dest="top_k", type=int)
        s.add_argument("--allow-missing", dest="allow_missing", action="store_true", default=None,
                       help="fill missing feature cells with 0 instead of dropping the row")

    s = sub.add_parser("train", parents=[common], help="fit a random forest")
    forest_opts(s)
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="repeated cross-validation report")
    forest_opts(s)
    s.add_argument("--folds", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--report", required=True)
    s.add_argument("--led", help="CSV of participant_id,daily_led for the LED fit")
    s.add_argument("--stratified", action="store_true", default=None)
    s.add_argument("--group", choices=("none", "participant", "pair"),
                   help="keep participants or same-day pairs on one side of every split")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("led", parents=[common], help="daily levodopa-equivalent dose")
    s.add_argument("--regimens", required=True)
    s.add_argument("--table", help="LED conversion table (default: shipped table)")
    s.add_argument("--out", required=True)
    s.add_argument("--report", help="evaluation report supplying per-participant accuracy")
    s.add_argument("--fit-quadratic", dest="fit_quadratic", action="store_true")
    s.add_argument("--min-instances", dest="min_instances", type=int)
    s.set_defaults(func=cmd_led)

    s = sub.add_parser("simulate", parents=[common], help="emit a synthetic cohort")
    s.add_argument("--participants", type=int)
    s.add_argument("--instances", type=int, help="instances per participant (pairs = M // 2)")
    s.add_argument("--effect", help="effect profile JSON")
    s.add_argument("--response-curve", dest="response_curve", choices=("mid_led", "flat", "zero"))
    s.add_argument("--led-min", dest="led_min", type=float)
    s.add_argument("--led-max", dest="led_max", type=float)
    s.add_argument("--audio", choices=("wav", "inline"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        effective = resolve(args, args.command)
        args.func(args, effective)
    except CliError as exc:
        return _fail(exc.exit_code, str(exc))
    except (FormatError, RecordingError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        return _fail(EXIT_FORMAT, str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_FORMAT, f"{exc.filename}: no such file")
    except ContractError as exc:
        return _fail(EXIT_CONTRACT, str(exc))
    except Exception as exc:  # noqa: BLE001 - last-resort invariant failure
        return _fail(EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")
    return EXIT_OK


def _fail(code, message):
    message = " ".join(str(message).split())
    print(f"error code={_CODE_NAMES[code]} exit={code} message={message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

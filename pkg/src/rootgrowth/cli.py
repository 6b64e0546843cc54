"""Command-line driver: generate data, run the protocol, render reports.

Subcommands: generate, run, report, pca-fit, features-export. A run
executes the boxed procedure end to end: per-fold PCA, velocity and
acceleration feature assembly, sliding-window search over all
configured classifiers, and a comparison table with one row per group
pairing. Everything is reproducible from (config file, seed): results
files carry no timestamps and rerunning writes identical bytes.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import evaluation, features, pca
from .dataset import Dataset, SyntheticConfig, generate_synthetic, load_csv, split_by_pairing, write_csv
from .ensembles import TrainConfig
from .errors import ConfigError, DataFormatError
from .evaluation import TABLE_ORDER, ClassifierSpec, format_error_rate, window_search
from .features import WindowSpec
from .seeding import derive

RESULTS_FORMAT = "rootgrowth-results"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """Resolved run parameters; defaults give the reference protocol shape
    (5 folds, window length 40, 4 hidden neurons, rates 0.15/0.1)."""

    dataset: str = "synthetic"
    pairings: tuple[tuple[str, str], ...] = ()
    classifiers: tuple[str, ...] = TABLE_ORDER
    pca_components: int = 30
    include_velocity: bool = True
    include_acceleration: bool = True
    literal_sum: bool = False
    window_length: int = 40
    window_stride: int = 1
    folds: int = 5
    seed: int = 0
    jobs: int = 1
    svm_c: float = 1.0
    svm_sigma: float | None = None
    svm_a: float | None = None
    svm_b: float = 0.0
    lam: float = 0.5
    n_experts: int = 4
    hidden: int = 4
    epochs: int = 200
    eta_experts: float = 0.15
    eta_gate: float = 0.1
    synthetic: SyntheticConfig = SyntheticConfig()

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.pca_components < 1:
            raise ConfigError(f"pca_components must be >= 1, got {self.pca_components}")
        if self.window_length < 3:
            raise ConfigError(f"window_length must be >= 3, got {self.window_length}")
        if self.window_stride < 1:
            raise ConfigError(f"window_stride must be >= 1, got {self.window_stride}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        for kind in self.classifiers:
            if kind not in evaluation.KIND_LABELS:
                raise ConfigError(f"unknown classifier {kind!r} in classifiers")
        if len(set(self.classifiers)) != len(self.classifiers):
            raise ConfigError("classifiers list contains duplicates")

    def window_spec(self) -> WindowSpec:
        return WindowSpec(self.window_length, self.window_stride)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            n_experts=self.n_experts,
            hidden=self.hidden,
            epochs=self.epochs,
            eta_experts=self.eta_experts,
            eta_gate=self.eta_gate,
            seed=0,  # replaced per fit with a derived sub-seed
        )

    def specs(self) -> list[ClassifierSpec]:
        train = self.train_config()
        out = []
        for kind in self.classifiers:
            out.append(
                ClassifierSpec(
                    kind,
                    c=self.svm_c,
                    sigma=self.svm_sigma,
                    a=self.svm_a,
                    b=self.svm_b,
                    lam=self.lam,
                    train=train,
                )
            )
        return out


# ---------------------------------------------------------------------------
# Config file parsing (key = value lines)

_INT_KEYS = {
    "pca_components", "window_length", "window_stride", "folds", "seed", "jobs",
    "n_experts", "hidden", "epochs",
    "synthetic_n_per_class", "synthetic_n_frames", "synthetic_n_coords",
    "synthetic_signal_start", "synthetic_signal_end",
}
_FLOAT_KEYS = {
    "svm_c", "svm_b", "lam", "eta_experts", "eta_gate",
    "synthetic_base_velocity", "synthetic_velocity_gap",
    "synthetic_acceleration_gap", "synthetic_noise_sd",
    "synthetic_intercept_sd", "synthetic_ripple_gap", "synthetic_signal_gap",
}
_OPT_FLOAT_KEYS = {"svm_sigma", "svm_a"}
_BOOL_KEYS = {"include_velocity", "include_acceleration", "literal_sum"}
_STR_KEYS = {"dataset", "synthetic_wild_tag", "synthetic_mutated_tag"}
_LIST_KEYS = {"classifiers", "pairings"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _OPT_FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS | _LIST_KEYS


def parse_config_file(path: str) -> dict[str, str]:
    """Read key = value lines; '#' starts a comment, blanks are skipped."""
    raw: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in text.split("=", 1))
            if key not in _ALL_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in raw:
                raise ConfigError(f"{path}:{lineno}: duplicate config key {key!r}")
            raw[key] = value
    return raw


def _parse_bool(key: str, value: str) -> bool:
    low = value.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"config key {key!r}: expected true/false, got {value!r}")


def build_run_config(raw: dict[str, str]) -> RunConfig:
    """Typed RunConfig from raw strings; errors name the offending key."""
    kwargs: dict = {}
    synth: dict = {}
    signal: dict[str, int] = {}
    for key, value in raw.items():
        try:
            if key in _INT_KEYS:
                parsed: object = int(value)
            elif key in _FLOAT_KEYS:
                parsed = float(value)
            elif key in _OPT_FLOAT_KEYS:
                parsed = None if value.lower() in ("", "none", "auto") else float(value)
            elif key in _BOOL_KEYS:
                parsed = _parse_bool(key, value)
            elif key == "classifiers":
                parsed = tuple(tok.strip() for tok in value.split(",") if tok.strip())
            elif key == "pairings":
                pairs = []
                for tok in value.split(","):
                    tok = tok.strip()
                    if not tok:
                        continue
                    if ":" not in tok:
                        raise ValueError("pairings entries look like wild:mutated")
                    wild, mutated = (t.strip() for t in tok.split(":", 1))
                    pairs.append((wild, mutated))
                parsed = tuple(pairs)
            else:
                parsed = value
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None
        if key.startswith("synthetic_signal_"):
            signal[key.removeprefix("synthetic_signal_")] = parsed  # type: ignore[assignment]
        elif key.startswith("synthetic_"):
            synth[key.removeprefix("synthetic_")] = parsed
        else:
            kwargs[key] = parsed
    if "start" in signal or "end" in signal:
        if not ("start" in signal and "end" in signal):
            raise ConfigError(
                "synthetic_signal_start and synthetic_signal_end must be set together"
            )
        synth["signal_window"] = (signal["start"], signal["end"])
    if "gap" in signal:
        synth["signal_gap"] = signal["gap"]
    base_seed = kwargs.get("seed", 0)
    synth["seed"] = derive(base_seed, "synthetic-data")
    try:
        kwargs["synthetic"] = SyntheticConfig(**synth)
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(args) -> RunConfig:
    raw = parse_config_file(args.config) if args.config else {}
    cfg = build_run_config(raw)
    overrides: dict = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
        overrides["synthetic"] = replace(
            cfg.synthetic, seed=derive(args.seed, "synthetic-data")
        )
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "literal_sum", False):
        overrides["literal_sum"] = True
    return replace(cfg, **overrides) if overrides else cfg


# ---------------------------------------------------------------------------
# Pipeline pieces


def _stage(name: str, fn, *args, **kwargs):
    """Run one pipeline stage; annotate any module error with its name."""
    try:
        return fn(*args, **kwargs)
    except (ValueError, ArithmeticError, OSError) as exc:
        raise type(exc)(f"{name}: {exc}") from None


def _resolve_dataset(cfg: RunConfig) -> Dataset:
    if cfg.dataset == "synthetic":
        return _stage("generate", generate_synthetic, cfg.synthetic)
    return _stage("load-dataset", load_csv, cfg.dataset)


def _resolve_pairings(cfg: RunConfig, ds: Dataset) -> tuple[tuple[str, str], ...]:
    if cfg.pairings:
        return cfg.pairings
    if ds.pairing is not None:
        return (ds.pairing,)
    raise ConfigError(
        "no pairings configured and the dataset does not declare one "
        "(set the pairings key, e.g. pairings = wtS2:331S2)"
    )


def _config_echo(cfg: RunConfig) -> dict:
    echo = {}
    for f in fields(cfg):
        if f.name == "jobs":
            continue  # execution detail; results must not depend on it
        value = getattr(cfg, f.name)
        if f.name == "synthetic":
            echo[f.name] = {
                sf.name: (list(v) if isinstance(v := getattr(value, sf.name), tuple) else v)
                for sf in fields(value)
            }
        elif isinstance(value, tuple):
            echo[f.name] = [list(v) if isinstance(v, tuple) else v for v in value]
        else:
            echo[f.name] = value
    return echo


def _run_id(cfg: RunConfig) -> str:
    blob = json.dumps(_config_echo(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def run_protocol(cfg: RunConfig) -> dict:
    """Execute the full procedure and return the results payload."""
    ds = _resolve_dataset(cfg)
    pairings = _resolve_pairings(cfg, ds)
    specs = cfg.specs()
    labels = [s.label for s in specs]
    rows = []
    for wild_tag, mutated_tag in pairings:
        pair_ds = _stage("pairing", split_by_pairing, ds, wild_tag, mutated_tag)
        pair_seed = derive(cfg.seed, "pairing", wild_tag, mutated_tag)
        result = _stage(
            "window-search",
            window_search,
            pair_ds,
            specs,
            cfg.window_spec(),
            cfg.folds,
            pair_seed,
            n_components=cfg.pca_components,
            include_velocity=cfg.include_velocity,
            include_acceleration=cfg.include_acceleration,
            literal_sum=cfg.literal_sum,
            n_jobs=cfg.jobs,
        )
        best_label = min(labels, key=lambda lab: (result.best[lab][1], labels.index(lab)))
        rows.append(
            {
                "wild_tag": wild_tag,
                "mutated_tag": mutated_tag,
                "n_samples": pair_ds.n_samples,
                "windows": [
                    {
                        "start": int(res.window[0]),
                        "end": int(res.window[1]),
                        "errors": {lab: res.errors[lab] for lab in labels},
                    }
                    for res in result.windows
                ],
                "best": {
                    lab: {
                        "window": [int(result.best[lab][0][0]), int(result.best[lab][0][1])],
                        "error": result.best[lab][1],
                    }
                    for lab in labels
                },
                "row_best_label": best_label,
                "row_best_frames": [
                    int(result.best[best_label][0][0]),
                    int(result.best[best_label][0][1]),
                ],
            }
        )
    return {
        "format": RESULTS_FORMAT,
        "schema_version": SCHEMA_VERSION,
        "run_id": _run_id(cfg),
        "seed": cfg.seed,
        "classifier_labels": labels,
        "config": _config_echo(cfg),
        "rows": rows,
    }


def render_table(payload: dict) -> str:
    """Plain-text comparison table, one row per pairing (sorted)."""
    labels = payload["classifier_labels"]
    header = list(labels) + ["Best Frames", "Wild Type", "Mutated Type"]
    lines = [header]
    for row in sorted(payload["rows"], key=lambda r: (r["wild_tag"], r["mutated_tag"])):
        cells = [format_error_rate(row["best"][lab]["error"]) for lab in labels]
        start, end = row["row_best_frames"]
        cells += [f"{start}-{end}", row["wild_tag"], row["mutated_tag"]]
        lines.append(cells)
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    rendered = []
    for line in lines:
        rendered.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
    return "\n".join(rendered)


def write_results_csv(payload: dict, path: str) -> None:
    """Long-format CSV: one line per (pairing, window, classifier)."""
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(
            ["wild_tag", "mutated_tag", "classifier", "start_frame", "end_frame", "error", "is_best"]
        )
        for row in payload["rows"]:
            for win in row["windows"]:
                for label, err in win["errors"].items():
                    best = row["best"][label]
                    is_best = int([win["start"], win["end"]] == best["window"])
                    writer.writerow(
                        [
                            row["wild_tag"],
                            row["mutated_tag"],
                            label,
                            win["start"],
                            win["end"],
                            repr(float(err)),
                            is_best,
                        ]
                    )


def write_table_csv(payload: dict, path: str) -> None:
    """The rendered comparison table as CSV (same cells as the text form)."""
    import csv as _csv

    labels = payload["classifier_labels"]
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(list(labels) + ["Best Frames", "Wild Type", "Mutated Type"])
        for row in sorted(payload["rows"], key=lambda r: (r["wild_tag"], r["mutated_tag"])):
            cells = [format_error_rate(row["best"][lab]["error"]) for lab in labels]
            start, end = row["row_best_frames"]
            writer.writerow(cells + [f"{start}-{end}", row["wild_tag"], row["mutated_tag"]])


# ---------------------------------------------------------------------------
# Subcommands


def cmd_generate(args) -> int:
    cfg = load_run_config(args)
    out = args.out or "synthetic.csv"
    ds = _stage("generate", generate_synthetic, cfg.synthetic)
    _stage("write-dataset", write_csv, ds, out)
    n_rows = ds.n_samples * ds.n_frames
    print(f"wrote {out}: {ds.n_samples} samples ({cfg.synthetic.n_per_class} per class), "
          f"{ds.n_frames} frames x {ds.n_coords} coords, {n_rows} data rows")
    return 0


def cmd_run(args) -> int:
    cfg = load_run_config(args)
    out_dir = args.out or "results"
    payload = run_protocol(cfg)
    os.makedirs(out_dir, exist_ok=True)
    results_path = os.path.join(out_dir, "results.json")
    with open(results_path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    write_results_csv(payload, os.path.join(out_dir, "results.csv"))
    table = render_table(payload)
    with open(os.path.join(out_dir, "table.txt"), "w") as fh:
        fh.write(table + "\n")
    print(table)
    print(f"\nrun {payload['run_id']}: results in {out_dir}/")
    return 0


def load_results(path: str) -> dict:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not a JSON results file ({exc})") from None
    if payload.get("format") != RESULTS_FORMAT:
        raise DataFormatError(f"{path}: not a results file")
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataFormatError(
            f"{path}: unsupported schema version {version} (expected {SCHEMA_VERSION})"
        )
    return payload


def cmd_report(args) -> int:
    payload = _stage("read-results", load_results, args.results)
    if not payload["rows"]:
        print("no runs")
        return 0
    print(render_table(payload))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        out_path = os.path.join(args.out, "table.csv")
        write_table_csv(payload, out_path)
        print(f"\nwrote {out_path}")
    return 0


def _clamp_components(k: int, rows: np.ndarray) -> int:
    """Debug utilities cap the request at the data rank instead of failing."""
    k_eff = min(k, rows.shape[1], rows.shape[0] - 1)
    if k_eff != k:
        print(f"note: clamping components {k} -> {k_eff} for data of shape {rows.shape}")
    return k_eff


def cmd_pca_fit(args) -> int:
    cfg = load_run_config(args)
    k = args.components or cfg.pca_components
    ds = _stage("load-dataset", load_csv, args.dataset)
    rows = np.vstack([s.frames for s in ds.samples])
    model = _stage("pca-fit", pca.fit, rows, _clamp_components(k, rows))
    out = args.out or "model.pca"
    _stage("write-model", pca.save_model, model, out)
    eig = ", ".join(f"{v:.6g}" for v in model.eigenvalues)
    print(f"wrote {out}: {model.n_components} components over {rows.shape[0]} frames")
    print(f"eigenvalues: {eig}")
    return 0


def cmd_features_export(args) -> int:
    cfg = load_run_config(args)
    ds = _stage("load-dataset", load_csv, args.dataset)
    rows = np.vstack([s.frames for s in ds.samples])
    model = _stage("pca-fit", pca.fit, rows, _clamp_components(cfg.pca_components, rows))
    scores = np.stack([pca.transform(model, s.frames) for s in ds.samples])
    fm = _stage(
        "assemble",
        features.assemble,
        scores,
        cfg.include_velocity,
        cfg.include_acceleration,
        cfg.literal_sum,
    )
    out = args.out or "features.csv"
    _stage(
        "write-features",
        features.export_csv,
        fm,
        out,
        [s.sample_id for s in ds.samples],
        [s.label.value for s in ds.samples],
    )
    print(f"wrote {out}: {fm.n_samples} rows x {fm.layout.width} feature columns")
    return 0


# ---------------------------------------------------------------------------
# Entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems become exit code 1
        raise ConfigError(message)


def _add_common(sub, *, jobs=False, literal=False):
    sub.add_argument("--config", help="key = value config file")
    sub.add_argument("--seed", type=int, help="override the config seed")
    sub.add_argument("--out", help="output path (file or directory by subcommand)")
    if jobs:
        sub.add_argument("--jobs", type=int, help="parallel worker processes")
    if literal:
        sub.add_argument(
            "--literal-sum",
            action="store_true",
            help="use the additive velocity form instead of first differences",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rootgrowth", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate", help="write a synthetic dataset CSV + manifest")
    _add_common(gen)
    gen.set_defaults(func=cmd_generate)

    run = subs.add_parser("run", help="run the full window-search protocol")
    _add_common(run, jobs=True, literal=True)
    run.set_defaults(func=cmd_run)

    rep = subs.add_parser("report", help="render a results file as a table")
    rep.add_argument("results", help="results.json from a previous run")
    rep.add_argument("--out", help="directory to write table.csv into")
    rep.set_defaults(func=cmd_report)

    fit = subs.add_parser("pca-fit", help="fit a PCA on all frames of a dataset CSV")
    _add_common(fit)
    fit.add_argument("dataset", help="dataset CSV path")
    fit.add_argument("--components", type=int, help="number of components")
    fit.set_defaults(func=cmd_pca_fit)

    exp = subs.add_parser("features-export", help="export assembled features as CSV")
    _add_common(exp, literal=True)
    exp.add_argument("dataset", help="dataset CSV path")
    exp.set_defaults(func=cmd_features_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

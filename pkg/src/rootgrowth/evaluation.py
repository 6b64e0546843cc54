"""Cross-validation, lambda sweeps, and sliding-window search.

`cross_validate` works at the classifier level on an already-built
feature matrix. `window_search` owns the full pipeline: per fold it
fits a PCA on the pooled training-fold frames only, assembles features
for every sample, and then evaluates each window by slicing those
per-fold features. Fold assignments are fixed once per (seed, dataset)
and shared across every window so window comparisons are like for
like.

Windows are independent work units: with n_jobs > 1 they are evaluated
in a process pool, and results are aggregated by window index, so the
output is identical to the serial run byte for byte.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import ensembles, features, pca, svm
from .dataset import Dataset
from .errors import ConfigError, DataFormatError
from .features import FeatureMatrix, WindowSpec
from .seeding import derive

SVM_KINDS = ("linear_svm", "gaussian_svm", "sigmoid_svm")
ENSEMBLE_KINDS = ("ncl", "me", "gated_ncl", "mnce")
KIND_LABELS = {
    "sigmoid_svm": "Sigmoid-SVM",
    "gaussian_svm": "Gaussian-SVM",
    "linear_svm": "Linear-SVM",
    "mnce": "MNCE",
    "me": "ME",
    "gated_ncl": "Gated-NCL",
    "ncl": "NCL",
}
# Column order used by reports, minimum-error kernel machines first.
TABLE_ORDER = ("sigmoid_svm", "gaussian_svm", "linear_svm", "mnce", "me", "gated_ncl", "ncl")


@dataclass(frozen=True)
class ClassifierSpec:
    """One classifier column: kind plus the hyperparameters it uses.

    SVM kinds read c/sigma/a/b (None means resolve from data); ensemble
    kinds read lam and the TrainConfig. ``name`` overrides the display
    label when one kind appears twice in a comparison.
    """

    kind: str
    c: float = 1.0
    sigma: float | None = None
    a: float | None = None
    b: float = 0.0
    lam: float = 0.5
    train: ensembles.TrainConfig = field(default_factory=ensembles.TrainConfig)
    name: str | None = None

    def __post_init__(self):
        if self.kind not in SVM_KINDS + ENSEMBLE_KINDS:
            raise ConfigError(f"unknown classifier kind {self.kind!r}")
        if self.kind in SVM_KINDS:
            if self.c <= 0:
                raise ConfigError(f"C must be positive, got {self.c}")
            if self.sigma is not None and self.sigma <= 0:
                raise ConfigError(f"sigma must be positive, got {self.sigma}")
        else:
            if not np.isfinite(self.lam) or self.lam < 0:
                raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}")

    @property
    def label(self) -> str:
        return self.name or KIND_LABELS[self.kind]


class FittedClassifier:
    """Uniform predict-unit-labels wrapper around both model families."""

    def __init__(self, spec: ClassifierSpec, model):
        self.spec = spec
        self.model = model

    def predict(self, x: np.ndarray) -> np.ndarray:
        if self.spec.kind in SVM_KINDS:
            return (np.asarray(svm.decision_function(self.model, x)) > 0).astype(np.int64)
        _, labels = ensembles.predict_batch(self.model, x)
        return labels


def fit_classifier(spec: ClassifierSpec, x: np.ndarray, y_unit: np.ndarray, seed: int) -> FittedClassifier:
    """Train one classifier on unit-labeled rows; all randomness from seed."""
    x = np.asarray(x, dtype=np.float64)
    y_unit = np.asarray(y_unit, dtype=np.int64).ravel()
    if spec.kind in SVM_KINDS:
        kernel = {
            "linear_svm": svm.KernelSpec.linear(),
            "gaussian_svm": svm.KernelSpec.gaussian(spec.sigma),
            "sigmoid_svm": svm.KernelSpec.sigmoid(spec.a, spec.b),
        }[spec.kind]
        model = svm.train_smo(x, 2 * y_unit - 1, kernel, c=spec.c, seed=seed)
        return FittedClassifier(spec, model)
    cfg = replace(spec.train, seed=seed)
    if spec.kind == "me":
        model = ensembles.train_me(x, y_unit, cfg)
    else:
        model = ensembles.TRAINERS[spec.kind](x, y_unit, cfg, spec.lam)
    return FittedClassifier(spec, model)


# ---------------------------------------------------------------------------
# Folds and error rates


def kfold_split(n: int, k: int, labels: np.ndarray, seed: int) -> list[np.ndarray]:
    """Stratified k folds: within each class, shuffled members are dealt
    round-robin, continuing at the next fold where the previous class
    stopped so fold sizes stay within one of each other.

    Every class present in ``labels`` must have at least k members.
    Returns k sorted index arrays (the test folds), a partition of
    0..n-1.
    """
    labels = np.asarray(labels).ravel()
    if labels.shape != (n,):
        raise ValueError(f"labels must have length {n}, got shape {labels.shape}")
    if k < 2:
        raise ValueError(f"need k >= 2 folds, got {k}")
    if n < k:
        raise ValueError(f"cannot make {k} folds from {n} samples")
    rng = np.random.default_rng(derive(seed, "kfold"))
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for value in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == value)
        if len(members) < k:
            raise DataFormatError(
                f"class {value!r} has {len(members)} members, too few for {k} folds"
            )
        members = members[rng.permutation(len(members))]
        for pos, idx in enumerate(members):
            folds[(offset + pos) % k].append(int(idx))
        offset = (offset + len(members)) % k
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def error_rate(predictions: np.ndarray, truth: np.ndarray) -> float:
    """Misclassified fraction in [0, 1]."""
    p = np.asarray(predictions).ravel()
    t = np.asarray(truth).ravel()
    if p.size == 0 or p.shape != t.shape:
        raise ValueError(f"need matching non-empty arrays, got {p.shape} and {t.shape}")
    return float(np.mean(p != t))


def format_error_rate(rate: float) -> str:
    """Render an error rate the way comparison tables print it: %12.50."""
    return f"%{100.0 * rate:.2f}"


@dataclass(frozen=True)
class CvResult:
    mean_error: float
    fold_errors: tuple[float, ...]


def cross_validate(
    spec: ClassifierSpec,
    feats: FeatureMatrix | np.ndarray,
    labels: np.ndarray,
    k: int = 5,
    seed: int = 0,
    folds: list[np.ndarray] | None = None,
) -> CvResult:
    """K-fold CV of one classifier on fixed features.

    Pass ``folds`` to reuse an existing split (window comparisons);
    otherwise a stratified split is derived from the seed. The mean is
    unweighted over folds.
    """
    x = feats.values if isinstance(feats, FeatureMatrix) else np.asarray(feats, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).ravel()
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError(f"features {x.shape} and labels {y.shape} do not line up")
    if folds is None:
        folds = kfold_split(len(y), k, y, seed)
    rates = []
    for fold_idx, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
        try:
            fitted = fit_classifier(
                spec, x[train_idx], y[train_idx], derive(seed, "fit", fold_idx, spec.kind)
            )
            preds = fitted.predict(x[test_idx])
        except (ValueError, ArithmeticError) as exc:
            raise type(exc)(f"fold {fold_idx}: {exc}") from None
        rates.append(error_rate(preds, y[test_idx]))
    return CvResult(float(np.mean(rates)), tuple(rates))


@dataclass(frozen=True)
class SweepResult:
    best_lam: float
    best_error: float
    errors: tuple[tuple[float, float], ...]  # (lambda, mean error) per grid point


DEFAULT_LAMBDA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def lambda_sweep(
    spec: ClassifierSpec,
    feats: FeatureMatrix | np.ndarray,
    labels: np.ndarray,
    grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID,
    k: int = 5,
    seed: int = 0,
) -> SweepResult:
    """Cross-validate an ensemble spec on each lambda of the grid.

    Returns the grid point minimizing mean CV error; ties break toward
    the smaller lambda.
    """
    if spec.kind not in ENSEMBLE_KINDS:
        raise ConfigError(f"lambda sweep only applies to ensembles, not {spec.kind!r}")
    if not grid:
        raise ConfigError("lambda grid is empty")
    results = []
    best = None
    for lam in sorted(grid):
        cv = cross_validate(replace(spec, lam=lam), feats, labels, k, seed)
        results.append((lam, cv.mean_error))
        if best is None or cv.mean_error < best[1]:
            best = (lam, cv.mean_error)
    return SweepResult(best[0], best[1], tuple(results))


# ---------------------------------------------------------------------------
# Window search (the full per-fold pipeline)


@dataclass(frozen=True)
class WindowResult:
    window: tuple[int, int]
    errors: dict[str, float]  # classifier label -> mean CV error
    fold_errors: dict[str, tuple[float, ...]]

    def __post_init__(self):
        for label, err in self.errors.items():
            if not 0.0 <= err <= 1.0:
                raise ValueError(f"{label}: error {err} outside [0, 1]")


@dataclass(frozen=True)
class SearchResult:
    windows: tuple[WindowResult, ...]
    best: dict[str, tuple[tuple[int, int], float]]  # label -> (window, error)


def fit_fold_pca(dataset: Dataset, train_indices: np.ndarray, n_components: int) -> pca.PcaModel:
    """Fit the projection on pooled frames of the training samples only."""
    rows = np.vstack([dataset.samples[int(i)].frames for i in train_indices])
    return pca.fit(rows, n_components)


def dataset_scores(dataset: Dataset, model: pca.PcaModel) -> np.ndarray:
    """Project every sample's frames; (n_samples, T, k)."""
    return np.stack(
        [pca.transform(model, s.frames) for s in dataset.samples]
    )


def _fold_feature_sets(dataset, folds, n_components, include_velocity, include_acceleration, literal_sum):
    """Per fold: full-length features for all samples under that fold's PCA."""
    sets = []
    n = dataset.n_samples
    for test_idx in folds:
        train_idx = np.setdiff1d(np.arange(n), test_idx)
        model = fit_fold_pca(dataset, train_idx, n_components)
        scores = dataset_scores(dataset, model)
        fm = features.assemble(scores, include_velocity, include_acceleration, literal_sum)
        sets.append((fm, train_idx, test_idx))
    return sets


_WORKER_CTX: dict = {}


def _init_worker(ctx):
    _WORKER_CTX.update(ctx)


def _evaluate_window(w_idx: int):
    ctx = _WORKER_CTX
    window = ctx["windows"][w_idx]
    labels = ctx["labels"]
    rates: dict[str, list[float]] = {spec.label: [] for spec in ctx["specs"]}
    for fold_idx, (fm, train_idx, test_idx) in enumerate(ctx["fold_sets"]):
        sliced = features.slice_features(fm, window)
        for spec in ctx["specs"]:
            fit_seed = derive(ctx["seed"], "window", window[0], "fit", fold_idx, spec.kind)
            try:
                fitted = fit_classifier(
                    spec, sliced.values[train_idx], labels[train_idx], fit_seed
                )
                preds = fitted.predict(sliced.values[test_idx])
            except (ValueError, ArithmeticError) as exc:
                raise type(exc)(f"window {window}, fold {fold_idx}: {exc}") from None
            rates[spec.label].append(error_rate(preds, labels[test_idx]))
    means = {label: float(np.mean(r)) for label, r in rates.items()}
    per_fold = {label: tuple(r) for label, r in rates.items()}
    return w_idx, means, per_fold


def window_search(
    dataset: Dataset,
    specs: list[ClassifierSpec],
    wspec: WindowSpec,
    k_folds: int = 5,
    seed: int = 0,
    *,
    n_components: int,
    include_velocity: bool = True,
    include_acceleration: bool = True,
    literal_sum: bool = False,
    n_jobs: int = 1,
) -> SearchResult:
    """Evaluate every window of the grid with every classifier.

    Folds are fixed once from the seed and shared by all windows; each
    fold's PCA is fit on its pooled training frames only, and windows
    see slices of those per-fold features. Results cover all windows;
    the best window per classifier is the error argmin with ties going
    to the smallest start frame.
    """
    if not specs:
        raise ConfigError("no classifiers configured")
    labels_seen = [s.label for s in specs]
    if len(set(labels_seen)) != len(labels_seen):
        raise ConfigError(f"duplicate classifier labels in {labels_seen}")
    if n_jobs < 1:
        raise ConfigError(f"n_jobs must be >= 1, got {n_jobs}")

    windows = features.window_slices(dataset.n_frames, wspec)
    labels = dataset.labels_unit()
    folds = kfold_split(dataset.n_samples, k_folds, labels, seed)
    fold_sets = _fold_feature_sets(
        dataset, folds, n_components, include_velocity, include_acceleration, literal_sum
    )
    ctx = {
        "windows": windows,
        "labels": labels,
        "specs": list(specs),
        "fold_sets": fold_sets,
        "seed": seed,
    }

    if n_jobs == 1:
        _init_worker(ctx)
        try:
            raw = [_evaluate_window(i) for i in range(len(windows))]
        finally:
            _WORKER_CTX.clear()
    else:
        with ProcessPoolExecutor(
            max_workers=n_jobs, initializer=_init_worker, initargs=(ctx,)
        ) as pool:
            raw = list(pool.map(_evaluate_window, range(len(windows))))

    by_index = {w_idx: (means, per_fold) for w_idx, means, per_fold in raw}
    results = tuple(
        WindowResult(windows[i], *by_index[i]) for i in range(len(windows))
    )
    best: dict[str, tuple[tuple[int, int], float]] = {}
    for spec in specs:
        for res in results:  # window order, so ties keep the earliest start
            err = res.errors[spec.label]
            if spec.label not in best or err < best[spec.label][1]:
                best[spec.label] = (res.window, err)
    return SearchResult(results, best)

"""Kernel SVM trained with a simplified SMO solver.

The dual problem
    max W(a) = sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t. 0 <= a_i <= C,  sum(a_i y_i) = 0
is optimized two coordinates at a time: the first index is the worst
KKT violator, the second is drawn from a seeded generator. Kernel
matrices are built so that K[i, j] and K[j, i] are the same float, and
the Gaussian diagonal is exactly 1.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataFormatError, NumericError

KERNEL_KINDS = ("linear", "gaussian", "sigmoid", "gaussian_over")

_SNAP = 1e-10
_STEP_EPS = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus parameters.

    ``sigma=None`` (Gaussian) and ``a=None`` (sigmoid) mean "resolve
    from the training data": the median pairwise distance and 1/d
    respectively. `resolve` fills them in.
    """

    kind: str
    sigma: float | None = None
    a: float | None = None
    b: float = 0.0
    inner: "KernelSpec | None" = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.kind == "gaussian_over":
            if self.inner is None:
                raise ConfigError("gaussian_over kernel needs an inner kernel")
            if self.inner.kind == "gaussian_over":
                raise ConfigError("gaussian_over kernels do not nest")
        elif self.inner is not None:
            raise ConfigError(f"{self.kind} kernel takes no inner kernel")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def gaussian(cls, sigma: float | None = None) -> "KernelSpec":
        return cls("gaussian", sigma=sigma)

    @classmethod
    def sigmoid(cls, a: float | None = None, b: float = 0.0) -> "KernelSpec":
        return cls("sigmoid", a=a, b=b)

    @classmethod
    def gaussian_over(cls, inner: "KernelSpec", sigma: float | None = None) -> "KernelSpec":
        return cls("gaussian_over", sigma=sigma, inner=inner)


def default_sigmoid_a(n_coords: int) -> float:
    """Default sigmoid slope: 1/d for d input features."""
    if n_coords < 1:
        raise ValueError(f"n_coords must be >= 1, got {n_coords}")
    return 1.0 / n_coords


def median_pairwise_distance(x: np.ndarray) -> float:
    """Median Euclidean distance over distinct point pairs."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points for a pairwise median")
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
    if med <= 0:
        raise DataFormatError("median pairwise distance is zero (duplicate points)")
    return med


def resolve(spec: KernelSpec, x: np.ndarray) -> KernelSpec:
    """Fill data-dependent defaults (Gaussian sigma, sigmoid slope)."""
    x = np.asarray(x, dtype=np.float64)
    out = spec
    if out.kind == "gaussian_over":
        inner = resolve(out.inner, x)
        sigma = out.sigma
        if sigma is None:
            # Median distance in the inner kernel's feature space.
            g = gram_matrix(inner, x)
            d2 = np.diag(g)[:, None] + np.diag(g)[None, :] - 2.0 * g
            iu = np.triu_indices(x.shape[0], k=1)
            sigma = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
            if sigma <= 0:
                raise DataFormatError(
                    "median feature-space distance is zero (duplicate points)"
                )
        return KernelSpec("gaussian_over", sigma=sigma, inner=inner)
    if out.kind == "gaussian" and out.sigma is None:
        out = replace(out, sigma=median_pairwise_distance(x))
    if out.kind == "sigmoid" and out.a is None:
        out = replace(out, a=default_sigmoid_a(x.shape[1]))
    return out


def _require_resolved(spec: KernelSpec) -> None:
    if spec.kind in ("gaussian", "gaussian_over") and spec.sigma is None:
        raise ConfigError("gaussian kernel sigma not resolved")
    if spec.kind == "sigmoid" and spec.a is None:
        raise ConfigError("sigmoid kernel slope not resolved")
    if spec.kind == "gaussian_over":
        _require_resolved(spec.inner)


def kernel_eval(spec: KernelSpec, x: np.ndarray, z: np.ndarray) -> float:
    """Evaluate the kernel on a single pair of points."""
    _require_resolved(spec)
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    if x.shape != z.shape:
        raise ValueError(f"point shapes differ: {x.shape} vs {z.shape}")
    if spec.kind == "linear":
        return float(x @ z)
    if spec.kind == "gaussian":
        diff = x - z
        return math.exp(-float(diff @ diff) / (2.0 * spec.sigma**2))
    if spec.kind == "sigmoid":
        return math.tanh(spec.a * float(x @ z) + spec.b)
    kxx = kernel_eval(spec.inner, x, x)
    kzz = kernel_eval(spec.inner, z, z)
    kxz = kernel_eval(spec.inner, x, z)
    d2 = max(kxx - 2.0 * kxz + kzz, 0.0)
    return math.exp(-d2 / (2.0 * spec.sigma**2))


def gram_matrix(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    """Kernel matrix over the rows of ``x``; bitwise symmetric.

    The inner-product matrix is mirrored from its upper triangle before
    any elementwise transform, so K[i, j] == K[j, i] exactly and
    distance-based diagonals are exactly zero.
    """
    _require_resolved(spec)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"x must be (n>=1, d), got shape {x.shape}")
    g = _mirrored(x @ x.T)
    if spec.kind == "linear":
        return g
    if spec.kind == "gaussian":
        d2 = _sq_distances(g)
        return np.exp(-d2 / (2.0 * spec.sigma**2))
    if spec.kind == "sigmoid":
        return np.tanh(spec.a * g + spec.b)
    inner = gram_matrix(spec.inner, x)
    d2 = _sq_distances(inner)
    return np.exp(-d2 / (2.0 * spec.sigma**2))


def cross_gram(spec: KernelSpec, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Kernel values K(x_i, z_j) as an (n, m) matrix."""
    _require_resolved(spec)
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.ndim != 2 or z.ndim != 2 or x.shape[1] != z.shape[1]:
        raise ValueError(f"incompatible shapes {x.shape} and {z.shape}")
    g = x @ z.T
    if spec.kind == "linear":
        return g
    if spec.kind == "gaussian":
        d2 = np.maximum(
            np.sum(x * x, axis=1)[:, None] + np.sum(z * z, axis=1)[None, :] - 2.0 * g,
            0.0,
        )
        return np.exp(-d2 / (2.0 * spec.sigma**2))
    if spec.kind == "sigmoid":
        return np.tanh(spec.a * g + spec.b)
    kxx = np.array([kernel_eval(spec.inner, xi, xi) for xi in x])
    kzz = np.array([kernel_eval(spec.inner, zi, zi) for zi in z])
    kxz = cross_gram(spec.inner, x, z)
    d2 = np.maximum(kxx[:, None] + kzz[None, :] - 2.0 * kxz, 0.0)
    return np.exp(-d2 / (2.0 * spec.sigma**2))


def _mirrored(g: np.ndarray) -> np.ndarray:
    # Copy the upper triangle over the lower one: exact symmetry.
    upper = np.triu(g)
    return upper + np.triu(g, k=1).T


def _sq_distances(g: np.ndarray) -> np.ndarray:
    diag = np.diag(g)
    d2 = diag[:, None] + diag[None, :] - 2.0 * g
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def dual_objective(alpha: np.ndarray, y: np.ndarray, k: np.ndarray) -> float:
    """W(a) = sum(a) - 1/2 (a*y)' K (a*y)."""
    v = alpha * y
    return float(alpha.sum() - 0.5 * (v @ k @ v))


@dataclass(frozen=True)
class SvmModel:
    """Trained classifier: support vectors and their signed coefficients.

    ``coef[i]`` is alpha_i * y_i for the i-th stored support vector;
    only vectors with alpha > 0 are kept. ``kkt_residual`` is the
    largest KKT violation at the end of training.
    """

    support_vectors: np.ndarray
    coef: np.ndarray
    bias: float
    kernel: KernelSpec
    c: float
    kkt_residual: float

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=np.float64)
        coef = np.asarray(self.coef, dtype=np.float64)
        if sv.ndim != 2 or coef.shape != (sv.shape[0],):
            raise ValueError("support vectors and coefficients do not line up")
        if np.any(np.abs(coef) > self.c * (1 + 1e-9)):
            raise ValueError("coefficient outside [0, C]")
        if abs(coef.sum()) > 1e-8 * max(1.0, self.c):
            raise ValueError("coefficients do not satisfy the equality constraint")
        for arr in (sv, coef):
            arr.flags.writeable = False
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "coef", coef)

    @property
    def n_support(self) -> int:
        return self.support_vectors.shape[0]


def train_smo(
    x: np.ndarray,
    y: np.ndarray,
    kernel: KernelSpec,
    c: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 100,
    seed: int = 0,
) -> SvmModel:
    """Solve the dual by sequential minimal optimization.

    Each step picks the worst KKT violator as the first index and tries
    second indices in an order drawn from the seeded generator,
    applying the analytic two-variable update. Training stops when the
    worst violation is within ``tol`` or after ``max_passes`` sweeps
    over the data without convergence.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2:
        raise ValueError(f"x must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 training points")
    if y.shape != (n,) or not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1/+1, one per row of x")
    if not np.isfinite(x).all():
        raise DataFormatError("training data contains non-finite values")
    if c <= 0 or tol <= 0 or max_passes < 1:
        raise ConfigError("need C > 0, tol > 0, max_passes >= 1")

    kernel = resolve(kernel, x)
    k = gram_matrix(kernel, x)
    rng = np.random.default_rng(seed)
    alpha = np.zeros(n)
    u = np.zeros(n)  # u_i = sum_j alpha_j y_j K_ij, kept incrementally

    converged = False
    for _ in range(max_passes):
        moved_in_sweep = False
        for _ in range(n):
            bias = _bias(alpha, u, y, c)
            viol = _kkt_violations(alpha, u, y, bias, c)
            i = int(np.argmax(viol))
            if viol[i] <= tol:
                converged = True
                break
            moved = False
            for j in rng.permutation(n):
                if j == i:
                    continue
                if _take_step(i, int(j), alpha, u, y, k, c):
                    moved = True
                    break
            if not moved:
                break  # the worst violator cannot improve with any partner
            moved_in_sweep = True
        if converged or not moved_in_sweep:
            break

    bias = _bias(alpha, u, y, c)
    residual = float(np.max(_kkt_violations(alpha, u, y, bias, c)))
    if not np.isfinite(alpha).all() or not math.isfinite(bias):
        raise NumericError("SMO produced non-finite multipliers")
    keep = alpha > 0
    return SvmModel(
        support_vectors=x[keep],
        coef=alpha[keep] * y[keep],
        bias=bias,
        kernel=kernel,
        c=c,
        kkt_residual=residual,
    )


def _take_step(i, j, alpha, u, y, k, c) -> bool:
    """Joint update of (alpha_i, alpha_j); True if alpha moved."""
    s = y[i] * y[j]
    if s < 0:
        lo = max(0.0, alpha[j] - alpha[i])
        hi = min(c, c + alpha[j] - alpha[i])
    else:
        lo = max(0.0, alpha[i] + alpha[j] - c)
        hi = min(c, alpha[i] + alpha[j])
    if hi - lo < _STEP_EPS:
        return False
    eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
    # Gain along the constraint line for a move of alpha_j by dj:
    #   dW(dj) = de * dj - eta/2 * dj^2,  de = y_j * (E_i - E_j)
    de = y[j] * ((u[i] - y[i]) - (u[j] - y[j]))
    if eta > _STEP_EPS:
        aj = alpha[j] + de / eta
        aj = min(max(aj, lo), hi)
    else:
        # Flat or concave-up slice: best endpoint wins.
        d_lo = lo - alpha[j]
        d_hi = hi - alpha[j]
        w_lo = de * d_lo - 0.5 * eta * d_lo * d_lo
        w_hi = de * d_hi - 0.5 * eta * d_hi * d_hi
        if w_lo > w_hi + _STEP_EPS:
            aj = lo
        elif w_hi > w_lo + _STEP_EPS:
            aj = hi
        else:
            return False
    aj = _snap(aj, c)
    if abs(aj - alpha[j]) < _STEP_EPS * (aj + alpha[j] + 1.0):
        return False
    # Compensate alpha_i from the snapped alpha_j so the equality
    # constraint is preserved to rounding error, then clear residual
    # cancellation noise at the box edges.
    ai = _snap(alpha[i] + s * (alpha[j] - aj), c)
    ai = min(max(ai, 0.0), c)
    aj = min(max(aj, 0.0), c)
    u += (ai - alpha[i]) * y[i] * k[:, i] + (aj - alpha[j]) * y[j] * k[:, j]
    alpha[i] = ai
    alpha[j] = aj
    return True


def _snap(a: float, c: float) -> float:
    eps = _SNAP * max(1.0, c)
    if a < eps:
        return 0.0
    if a > c - eps:
        return c
    return a


def _bias(alpha, u, y, c) -> float:
    """Bias from unbound vectors, else midpoint of the feasible interval."""
    unbound = (alpha > 0.0) & (alpha < c)
    if np.any(unbound):
        return float(np.mean(y[unbound] - u[unbound]))
    lower, upper = -np.inf, np.inf
    for i in range(len(alpha)):
        edge = y[i] - u[i]
        needs_ge = (alpha[i] == 0.0 and y[i] > 0) or (alpha[i] == c and y[i] < 0)
        if needs_ge:
            lower = max(lower, edge)
        else:
            upper = min(upper, edge)
    if not math.isfinite(lower):
        return 0.0 if not math.isfinite(upper) else upper
    if not math.isfinite(upper):
        return lower
    return 0.5 * (lower + upper)


def _kkt_violations(alpha, u, y, bias, c) -> np.ndarray:
    yf = y * (u + bias)
    at_lo = alpha == 0.0
    at_hi = alpha == c
    viol = np.abs(yf - 1.0)  # unbound: y f(x) = 1
    viol[at_lo] = np.maximum(0.0, 1.0 - yf[at_lo])  # y f(x) >= 1
    viol[at_hi] = np.maximum(0.0, yf[at_hi] - 1.0)  # y f(x) <= 1
    return viol


def decision_function(model: SvmModel, x: np.ndarray) -> np.ndarray | float:
    """f(x) = sum_i coef_i K(sv_i, x) + b; scalar for a single point."""
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if model.n_support == 0:
        f = np.full(pts.shape[0], model.bias)
    else:
        f = model.coef @ cross_gram(model.kernel, model.support_vectors, pts)
        f = f + model.bias
    return float(f[0]) if single else f


def predict(model: SvmModel, x: np.ndarray) -> np.ndarray | int:
    """Signed class labels; the tie f(x) = 0 goes to the negative class."""
    f = decision_function(model, x)
    if np.isscalar(f):
        return 1 if f > 0 else -1
    return np.where(f > 0, 1, -1)


def margin(model: SvmModel, x: np.ndarray, y: np.ndarray) -> float:
    """Smallest functional margin min_i y_i f(x_i) over the given points."""
    pts = np.asarray(x, dtype=np.float64)
    labels = np.asarray(y, dtype=np.float64).ravel()
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("margin needs a non-empty 2-D point set")
    if labels.shape != (pts.shape[0],):
        raise ValueError("labels do not match points")
    return float(np.min(labels * decision_function(model, pts)))


# ---------------------------------------------------------------------------
# Serialization


def _kernel_to_dict(spec: KernelSpec) -> dict:
    out = {"kind": spec.kind, "sigma": spec.sigma, "a": spec.a, "b": spec.b}
    if spec.inner is not None:
        out["inner"] = _kernel_to_dict(spec.inner)
    return out


def _kernel_from_dict(data: dict) -> KernelSpec:
    inner = data.get("inner")
    return KernelSpec(
        kind=data["kind"],
        sigma=data["sigma"],
        a=data["a"],
        b=data["b"],
        inner=_kernel_from_dict(inner) if inner else None,
    )


def save_model(model: SvmModel, path: str | os.PathLike) -> None:
    """Write the model as JSON (floats keep full round-trip precision)."""
    payload = {
        "format": "svm-model",
        "version": 1,
        "kernel": _kernel_to_dict(model.kernel),
        "c": model.c,
        "bias": model.bias,
        "kkt_residual": model.kkt_residual,
        "support_vectors": model.support_vectors.tolist(),
        "coef": model.coef.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> SvmModel:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: not a JSON model file ({exc})") from None
    if payload.get("format") != "svm-model" or payload.get("version") != 1:
        raise DataFormatError(f"{path}: not a version-1 SVM model file")
    sv = np.array(payload["support_vectors"], dtype=np.float64)
    if sv.ndim == 1:  # no support vectors stored
        sv = sv.reshape(0, 0)
    return SvmModel(
        support_vectors=sv,
        coef=np.array(payload["coef"], dtype=np.float64),
        bias=payload["bias"],
        kernel=_kernel_from_dict(payload["kernel"]),
        c=payload["c"],
        kkt_residual=payload["kkt_residual"],
    )

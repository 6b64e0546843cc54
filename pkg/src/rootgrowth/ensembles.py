"""Neural ensembles: negative correlation, mixtures of experts, and hybrids.

Every expert is a one-hidden-layer MLP with sigmoid activations at both
layers and a trailing bias weight per layer. Four trainers share the
same forward/backward building blocks:

  ncl        experts trained together, each on its squared error plus
             lambda times the correlation penalty; simple averaging.
  gated_ncl  two stages: NCL experts first, then a frozen-expert gating
             network trained toward per-expert expertise targets.
  me         mixture of experts: posterior-weighted expert updates and
             a gate trained toward the posterior (the lambda = 0 case
             of mnce, same code path).
  mnce       mixture of negatively correlated experts: the posterior
             and expert error signals carry the correlation penalty.

Gate backpropagation follows the delta-rule convention of the update
equations it implements: the error signal (h - g) is scaled by the
sigmoid derivative of the gate's MLP outputs; the softmax applied on
top of those outputs is not differentiated through.

All per-pattern updates happen in presentation order with a fresh
seeded shuffle per epoch; sub-seeds for weight init and shuffling are
derived from the single config seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DataFormatError, NumericError
from .seeding import derive

VARIANTS = ("ncl", "gated_ncl", "me", "mnce")


@dataclass(frozen=True)
class TrainConfig:
    """Shared training knobs; lambda is passed per trainer call."""

    n_experts: int = 4
    hidden: int = 4
    epochs: int = 200
    eta_experts: float = 0.15
    eta_gate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_experts < 2:
            raise ValueError(f"need at least 2 experts, got {self.n_experts}")
        if self.hidden < 1:
            raise ValueError(f"need at least 1 hidden neuron, got {self.hidden}")
        if self.epochs < 1:
            raise ValueError(f"need at least 1 epoch, got {self.epochs}")
        if self.eta_experts <= 0 or self.eta_gate <= 0:
            raise ValueError("learning rates must be positive")


@dataclass
class MlpNetwork:
    """One-hidden-layer sigmoid MLP; bias is the last column of each layer."""

    w_hidden: np.ndarray  # (hidden, n_inputs + 1)
    w_out: np.ndarray  # (1, hidden + 1)

    @property
    def n_inputs(self) -> int:
        return self.w_hidden.shape[1] - 1

    @property
    def n_hidden(self) -> int:
        return self.w_hidden.shape[0]


@dataclass
class GatingNetwork:
    """MLP whose sigmoid outputs pass through a softmax to give weights."""

    w_hidden: np.ndarray  # (hidden, n_inputs + 1)
    w_out: np.ndarray  # (n_experts, hidden + 1)

    @property
    def n_inputs(self) -> int:
        return self.w_hidden.shape[1] - 1

    @property
    def n_experts(self) -> int:
        return self.w_out.shape[0]


def init_mlp(n_inputs: int, hidden: int, seed: int) -> MlpNetwork:
    """Fresh expert with weights uniform on [-0.5, 0.5]."""
    rng = np.random.default_rng(seed)
    return MlpNetwork(
        w_hidden=rng.uniform(-0.5, 0.5, (hidden, n_inputs + 1)),
        w_out=rng.uniform(-0.5, 0.5, (1, hidden + 1)),
    )


def init_gate(n_inputs: int, hidden: int, n_experts: int, seed: int) -> GatingNetwork:
    """Fresh gate with weights uniform on [-0.5, 0.5]."""
    rng = np.random.default_rng(seed)
    return GatingNetwork(
        w_hidden=rng.uniform(-0.5, 0.5, (hidden, n_inputs + 1)),
        w_out=rng.uniform(-0.5, 0.5, (n_experts, hidden + 1)),
    )


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def softmax(v: np.ndarray) -> np.ndarray:
    """Shift-stabilized softmax; sums to 1."""
    e = np.exp(v - np.max(v))
    return e / e.sum()


def _forward(w_hidden, w_out, x_aug):
    o_h = _sigmoid(w_hidden @ x_aug)
    o = _sigmoid(float(w_out[0, :-1] @ o_h) + w_out[0, -1])
    return o_h, o


def _gate_forward(w_hidden, w_out, x_aug):
    o_h = _sigmoid(w_hidden @ x_aug)
    o_sig = _sigmoid(w_out[:, :-1] @ o_h + w_out[:, -1])
    return o_h, o_sig, softmax(o_sig)


def mlp_forward(net: MlpNetwork, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Hidden activations and scalar output for one input vector."""
    x = _check_point(x, net.n_inputs)
    return _forward(net.w_hidden, net.w_out, np.append(x, 1.0))


def gate_forward(gate: GatingNetwork, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hidden activations, sigmoid outputs, and softmax weights g."""
    x = _check_point(x, gate.n_inputs)
    return _gate_forward(gate.w_hidden, gate.w_out, np.append(x, 1.0))


def _check_point(x, n_inputs):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape != (n_inputs,):
        raise ValueError(f"expected {n_inputs} inputs, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise DataFormatError("input contains non-finite values")
    return x


# ---------------------------------------------------------------------------
# Error signals and weight increments (one pattern at a time)


def ncl_penalty(outputs: np.ndarray, i: int) -> float:
    """Correlation penalty P_i = (O_i - O_ens) * sum_{j!=i} (O_j - O_ens)."""
    dev = outputs - outputs.mean()
    return float(dev[i] * (dev.sum() - dev[i]))


def ncl_output_error(target: float, outputs: np.ndarray, i: int, lam: float) -> float:
    """Output-layer error signal of expert i under the penalty convention.

    The penalty derivative is taken as sum_{j!=i} (O_j - O_ens), i.e.
    -(O_i - O_ens); the signal is applied in the delta rule as
    (target - O_i) + lambda * (O_i - O_ens).
    """
    o_ens = outputs.mean()
    return float((target - outputs[i]) + lam * (outputs[i] - o_ens))


def gncl_target(target: float, outputs: np.ndarray) -> np.ndarray:
    """Expertise shares h: normalized exp(-(target - O_i)^2 / 2)."""
    w = np.exp(-0.5 * (target - outputs) ** 2)
    return w / w.sum()


def mnce_posterior(target: float, outputs: np.ndarray, g: np.ndarray, lam: float) -> np.ndarray:
    """Posterior responsibility h of each expert for the pattern.

    h_i is proportional to g_i * exp(-(target - O_i)^2 / 2 + lambda P_i)
    and normalized to sum to 1.
    """
    pen = np.array([ncl_penalty(outputs, i) for i in range(len(outputs))])
    w = g * np.exp(-0.5 * (target - outputs) ** 2 + lam * pen)
    return w / w.sum()


def mnce_penalty_grad(outputs: np.ndarray, g: np.ndarray, i: int) -> float:
    """dP_i/dO_i convention of the mixture update rule.

    g_i * sum_{j!=i} (O_j - Obar) + g_i * (M - 1) * (O_i - Obar).
    """
    m = len(outputs)
    o_bar = outputs.mean()
    others = (outputs.sum() - outputs[i]) - (m - 1) * o_bar
    return float(g[i] * others + g[i] * (m - 1) * (outputs[i] - o_bar))


def mnce_output_error(
    target: float, outputs: np.ndarray, g: np.ndarray, h: np.ndarray, i: int, lam: float
) -> float:
    """Posterior-weighted error signal of expert i."""
    dp = mnce_penalty_grad(outputs, g, i)
    return float(h[i] * ((target - outputs[i]) - lam * dp))


def expert_increments(w_out, x_aug, o_h, o, err):
    """Delta-rule weight increments (no learning rate) for one expert."""
    delta_o = err * o * (1.0 - o)
    inc_out = delta_o * np.append(o_h, 1.0)
    delta_h = (w_out[0, :-1] * delta_o) * o_h * (1.0 - o_h)
    return np.outer(delta_h, x_aug), inc_out[None, :]


def gate_increments(w_out, x_aug, o_h, o_sig, resid):
    """Delta-rule weight increments (no learning rate) for the gate.

    ``resid`` is the target-minus-g vector; the derivative factor is
    the sigmoid slope of the gate's MLP outputs.
    """
    delta_o = resid * o_sig * (1.0 - o_sig)
    inc_out = np.outer(delta_o, np.append(o_h, 1.0))
    delta_h = (w_out[:, :-1].T @ delta_o) * o_h * (1.0 - o_h)
    return np.outer(delta_h, x_aug), inc_out


# ---------------------------------------------------------------------------
# Trainers


@dataclass(frozen=True)
class EnsembleModel:
    """Trained ensemble; ``gate`` is None for plain NCL averaging."""

    variant: str
    experts: tuple[MlpNetwork, ...]
    gate: GatingNetwork | None
    lam: float
    config: TrainConfig

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if (self.gate is None) != (self.variant == "ncl"):
            raise ValueError(f"variant {self.variant!r} and gate presence disagree")

    @property
    def n_inputs(self) -> int:
        return self.experts[0].n_inputs


def _check_training_inputs(x, y, lam):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"x must be (n>=1, f), got shape {x.shape}")
    if y.shape != (x.shape[0],) or not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be 0/1, one per row of x")
    if not np.isfinite(x).all():
        raise DataFormatError("training data contains non-finite values")
    if not np.isfinite(lam):
        raise ValueError(f"lambda must be finite, got {lam}")
    return x, y


def _ensure_finite(nets, gate, epoch):
    arrays = [a for net in nets for a in (net.w_hidden, net.w_out)]
    if gate is not None:
        arrays += [gate.w_hidden, gate.w_out]
    for a in arrays:
        if not np.isfinite(a).all():
            raise NumericError(f"non-finite weights after epoch {epoch}")


def _freeze(model: EnsembleModel) -> EnsembleModel:
    for net in model.experts:
        net.w_hidden.flags.writeable = False
        net.w_out.flags.writeable = False
    if model.gate is not None:
        model.gate.w_hidden.flags.writeable = False
        model.gate.w_out.flags.writeable = False
    return model


def train_backprop(
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    init_seed: int | None = None,
    shuffle_seed: int | None = None,
) -> MlpNetwork:
    """Train one plain MLP with per-pattern backprop (no ensemble terms).

    Seeds default to the first expert's derived sub-seeds so a single
    network is comparable with ensemble runs on the same config.
    """
    x, y = _check_training_inputs(x, y, 0.0)
    if init_seed is None:
        init_seed = derive(cfg.seed, "expert-init", 0)
    if shuffle_seed is None:
        shuffle_seed = derive(cfg.seed, "shuffle")
    net = init_mlp(x.shape[1], cfg.hidden, init_seed)
    rng = np.random.default_rng(shuffle_seed)
    for epoch in range(cfg.epochs):
        for idx in rng.permutation(len(y)):
            x_aug = np.append(x[idx], 1.0)
            o_h, o = _forward(net.w_hidden, net.w_out, x_aug)
            err = y[idx] - o
            inc_h, inc_out = expert_increments(net.w_out, x_aug, o_h, o, err)
            net.w_hidden += cfg.eta_experts * inc_h
            net.w_out += cfg.eta_experts * inc_out
        _ensure_finite((net,), None, epoch)
    return net


def train_ncl(x: np.ndarray, y: np.ndarray, cfg: TrainConfig, lam: float) -> EnsembleModel:
    """Negative correlation learning over ``cfg.n_experts`` experts.

    All experts see the same shuffled pattern sequence; each pattern's
    forward passes are shared, then every expert takes one delta-rule
    step on its penalized error. With lam = 0 this is exactly
    independent backprop for every expert.
    """
    x, y = _check_training_inputs(x, y, lam)
    nets = [
        init_mlp(x.shape[1], cfg.hidden, derive(cfg.seed, "expert-init", i))
        for i in range(cfg.n_experts)
    ]
    rng = np.random.default_rng(derive(cfg.seed, "shuffle"))
    for epoch in range(cfg.epochs):
        for idx in rng.permutation(len(y)):
            x_aug = np.append(x[idx], 1.0)
            states = [_forward(net.w_hidden, net.w_out, x_aug) for net in nets]
            outs = np.array([o for _, o in states])
            for i, net in enumerate(nets):
                err = ncl_output_error(y[idx], outs, i, lam)
                inc_h, inc_out = expert_increments(
                    net.w_out, x_aug, states[i][0], outs[i], err
                )
                net.w_hidden += cfg.eta_experts * inc_h
                net.w_out += cfg.eta_experts * inc_out
        _ensure_finite(nets, None, epoch)
    return _freeze(EnsembleModel("ncl", tuple(nets), None, lam, cfg))


def train_gated_ncl(x: np.ndarray, y: np.ndarray, cfg: TrainConfig, lam: float) -> EnsembleModel:
    """Two-stage hybrid: NCL experts, then a gate over frozen experts.

    Stage two trains only the gating network, toward the expertise
    shares of each pattern; expert weights are left untouched (they are
    frozen read-only by stage one).
    """
    stage1 = train_ncl(x, y, cfg, lam)
    x, y = _check_training_inputs(x, y, lam)
    nets = stage1.experts
    gate = init_gate(x.shape[1], cfg.hidden, cfg.n_experts, derive(cfg.seed, "gate-init"))
    rng = np.random.default_rng(derive(cfg.seed, "gate-shuffle"))
    for epoch in range(cfg.epochs):
        for idx in rng.permutation(len(y)):
            x_aug = np.append(x[idx], 1.0)
            outs = np.array([_forward(net.w_hidden, net.w_out, x_aug)[1] for net in nets])
            h = gncl_target(y[idx], outs)
            go_h, o_sig, g = _gate_forward(gate.w_hidden, gate.w_out, x_aug)
            inc_h, inc_out = gate_increments(gate.w_out, x_aug, go_h, o_sig, h - g)
            gate.w_hidden += cfg.eta_gate * inc_h
            gate.w_out += cfg.eta_gate * inc_out
        _ensure_finite((), gate, epoch)
    return _freeze(EnsembleModel("gated_ncl", nets, gate, lam, cfg))


def train_mnce(
    x: np.ndarray, y: np.ndarray, cfg: TrainConfig, lam: float, variant: str = "mnce"
) -> EnsembleModel:
    """Mixture of negatively correlated experts, trained jointly.

    Per pattern: expert outputs and gate weights give the posterior h;
    each expert takes a posterior-weighted step on its penalized error,
    and the gate steps toward h. ``lam`` scales the correlation terms
    in both the posterior and the expert errors.
    """
    x, y = _check_training_inputs(x, y, lam)
    nets = [
        init_mlp(x.shape[1], cfg.hidden, derive(cfg.seed, "expert-init", i))
        for i in range(cfg.n_experts)
    ]
    gate = init_gate(x.shape[1], cfg.hidden, cfg.n_experts, derive(cfg.seed, "gate-init"))
    rng = np.random.default_rng(derive(cfg.seed, "shuffle"))
    for epoch in range(cfg.epochs):
        for idx in rng.permutation(len(y)):
            x_aug = np.append(x[idx], 1.0)
            states = [_forward(net.w_hidden, net.w_out, x_aug) for net in nets]
            outs = np.array([o for _, o in states])
            go_h, o_sig, g = _gate_forward(gate.w_hidden, gate.w_out, x_aug)
            h = mnce_posterior(y[idx], outs, g, lam)
            for i, net in enumerate(nets):
                err = mnce_output_error(y[idx], outs, g, h, i, lam)
                inc_h, inc_out = expert_increments(
                    net.w_out, x_aug, states[i][0], outs[i], err
                )
                net.w_hidden += cfg.eta_experts * inc_h
                net.w_out += cfg.eta_experts * inc_out
            ginc_h, ginc_out = gate_increments(gate.w_out, x_aug, go_h, o_sig, h - g)
            gate.w_hidden += cfg.eta_gate * ginc_h
            gate.w_out += cfg.eta_gate * ginc_out
        _ensure_finite(nets, gate, epoch)
    return _freeze(EnsembleModel(variant, tuple(nets), gate, lam, cfg))


def train_me(x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> EnsembleModel:
    """Mixture of experts: the penalty-free case of `train_mnce`.

    Shares the mixture code path with lam pinned to 0.0, so the two
    coincide exactly (not just approximately) step for step.
    """
    return train_mnce(x, y, cfg, 0.0, variant="me")


TRAINERS: dict[str, Callable[..., EnsembleModel]] = {
    "ncl": train_ncl,
    "gated_ncl": train_gated_ncl,
    "mnce": train_mnce,
}


# ---------------------------------------------------------------------------
# Prediction


def ensemble_output(model: EnsembleModel, x: np.ndarray) -> float:
    """Combined output O_T for one input: gated sum, or mean for NCL."""
    x = _check_point(x, model.n_inputs)
    x_aug = np.append(x, 1.0)
    outs = np.array(
        [_forward(net.w_hidden, net.w_out, x_aug)[1] for net in model.experts]
    )
    if model.gate is None:
        return float(outs.mean())
    _, _, g = _gate_forward(model.gate.w_hidden, model.gate.w_out, x_aug)
    return float(outs @ g)


def predict_batch(model: EnsembleModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Combined outputs and 0/1 labels; the tie O_T = 0.5 goes to 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_inputs:
        raise ValueError(f"x must be (n, {model.n_inputs}), got shape {x.shape}")
    outputs = np.array([ensemble_output(model, row) for row in x])
    return outputs, (outputs > 0.5).astype(np.int64)


# ---------------------------------------------------------------------------
# Serialization


def save_model(model: EnsembleModel, path: str | os.PathLike) -> None:
    """Write the ensemble as JSON (floats keep round-trip precision)."""
    payload = {
        "format": "ensemble-model",
        "version": 1,
        "variant": model.variant,
        "lam": model.lam,
        "config": {
            "n_experts": model.config.n_experts,
            "hidden": model.config.hidden,
            "epochs": model.config.epochs,
            "eta_experts": model.config.eta_experts,
            "eta_gate": model.config.eta_gate,
            "seed": model.config.seed,
        },
        "experts": [
            {"w_hidden": net.w_hidden.tolist(), "w_out": net.w_out.tolist()}
            for net in model.experts
        ],
        "gate": None
        if model.gate is None
        else {
            "w_hidden": model.gate.w_hidden.tolist(),
            "w_out": model.gate.w_out.tolist(),
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> EnsembleModel:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: not a JSON model file ({exc})") from None
    if payload.get("format") != "ensemble-model" or payload.get("version") != 1:
        raise DataFormatError(f"{path}: not a version-1 ensemble model file")
    experts = tuple(
        MlpNetwork(np.array(e["w_hidden"]), np.array(e["w_out"]))
        for e in payload["experts"]
    )
    gate = payload["gate"]
    if gate is not None:
        gate = GatingNetwork(np.array(gate["w_hidden"]), np.array(gate["w_out"]))
    return _freeze(
        EnsembleModel(
            variant=payload["variant"],
            experts=experts,
            gate=gate,
            lam=payload["lam"],
            config=TrainConfig(**payload["config"]),
        )
    )

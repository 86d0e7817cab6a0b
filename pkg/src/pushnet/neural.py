"""Model family over push-based propagation, with hand-derived backprop.

Four variants share one propagation core:

* ``full`` — dense hidden transform, propagate, dense prediction.
* ``ptp``  — propagate raw features (cacheable), 2-layer prediction MLP.
* ``pp``   — propagate raw features (cacheable), logistic regression.
* ``tpp``  — class scores first, then propagate the scores; softmax last.

The propagation matrices are constants: gradients flow through the dense
layers, ReLU, dropout masks and (for max aggregation) the recorded argmax
routing, never through the matrices themselves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DomainError, NumericalError
from .propagation import (
    Aggregator,
    PropagationCache,
    ScaleAggregate,
    ScaleSet,
    cache_propagated,
    propagate,
    scale_aggregate,
)

__all__ = [
    "VARIANTS",
    "ModelSpec",
    "DenseLayer",
    "Model",
    "softmax",
    "predict_labels",
    "save_checkpoint",
    "load_checkpoint",
]

VARIANTS = ("full", "ptp", "pp", "tpp")

CHECKPOINT_FORMAT = "pushnet-model"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    """Variant tag plus everything needed to rebuild the architecture."""

    variant: str
    input_dim: int
    num_classes: int
    hidden: Optional[int]
    scales: tuple[float, ...]
    aggregator: str = "sum"
    epsilon: float = 1e-5
    dropout: float = 0.5
    l2: float = 0.01
    learning_rate: float = 0.005

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.aggregator not in ("sum", "max", "cat"):
            raise ConfigurationError(f"unknown aggregator {self.aggregator!r}")
        if self.variant == "tpp" and self.aggregator == "cat":
            raise ConfigurationError("cat aggregation is not applicable to the tpp variant")
        if self.variant == "pp":
            if self.hidden is not None:
                raise ConfigurationError("pp has no hidden layer; set hidden to None")
        elif self.hidden is None or self.hidden < 1:
            raise ConfigurationError(f"variant {self.variant!r} needs a positive hidden size")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ConfigurationError("need input_dim >= 1 and num_classes >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout rate must lie in [0, 1)")
        if self.l2 < 0 or self.learning_rate <= 0:
            raise ConfigurationError("l2 must be >= 0 and learning_rate > 0")
        if not self.scales:
            raise ConfigurationError("at least one scale is required")

    @property
    def num_scales(self) -> int:
        return len(self.scales)

    @property
    def cacheable(self) -> bool:
        """True when nothing trainable runs before the propagation."""
        return self.variant in ("ptp", "pp")

    @property
    def propagated_width(self) -> int:
        """Width entering the propagation (h1)."""
        if self.variant == "full":
            return self.hidden
        if self.variant == "tpp":
            return self.num_classes
        return self.input_dim

    @property
    def aggregated_width(self) -> int:
        """Width after aggregation (h2)."""
        base = self.propagated_width
        return base * self.num_scales if self.aggregator == "cat" else base

    def layer_dims(self) -> list[tuple[str, int, int]]:
        d, c, h = self.input_dim, self.num_classes, self.hidden
        if self.variant == "full":
            return [("f0", d, h), ("g0", self.aggregated_width, c)]
        if self.variant == "ptp":
            return [("g0", self.aggregated_width, h), ("g1", h, c)]
        if self.variant == "pp":
            return [("g0", self.aggregated_width, c)]
        return [("f0", d, h), ("f1", h, c)]  # tpp

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "hidden": self.hidden,
            "scales": list(self.scales),
            "aggregator": self.aggregator,
            "epsilon": self.epsilon,
            "dropout": self.dropout,
            "l2": self.l2,
            "learning_rate": self.learning_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            variant=d["variant"], input_dim=int(d["input_dim"]),
            num_classes=int(d["num_classes"]),
            hidden=None if d["hidden"] is None else int(d["hidden"]),
            scales=tuple(float(a) for a in d["scales"]),
            aggregator=d["aggregator"], epsilon=float(d["epsilon"]),
            dropout=float(d["dropout"]), l2=float(d["l2"]),
            learning_rate=float(d["learning_rate"]))


@dataclass
class DenseLayer:
    w: np.ndarray
    b: np.ndarray


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """Most probable class per row; equal probabilities resolve to the
    lowest class index."""
    return np.argmax(probs, axis=1)


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability rate, survivors scaled
    by 1/(1-rate) so the expectation is unchanged."""
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _sparse_dropout(m: sp.csr_matrix, rate: float, rng: np.random.Generator) -> sp.csr_matrix:
    """Drop stored nonzeros i.i.d. with rescaling; structure is kept."""
    out = m.copy()
    out.data = out.data * _dropout_mask(rng, out.data.shape, rate)
    return out


@dataclass
class ForwardResult:
    mode: str
    logits: np.ndarray
    probs: np.ndarray
    tape: dict = field(default_factory=dict)


class Model:
    """A model spec bound to propagation matrices and parameters."""

    def __init__(self, spec: ModelSpec, scale_set: ScaleSet, layers: list[DenseLayer]):
        if scale_set.num_scales != spec.num_scales:
            raise ConfigurationError(
                f"spec lists {spec.num_scales} scales but scale set has {scale_set.num_scales}")
        if scale_set.aggregator.value != spec.aggregator:
            raise ConfigurationError("spec and scale set disagree on the aggregator")
        expected = spec.layer_dims()
        if len(layers) != len(expected):
            raise ConfigurationError("layer count does not match the model architecture")
        for layer, (name, d_in, d_out) in zip(layers, expected):
            if layer.w.shape != (d_in, d_out) or layer.b.shape != (d_out,):
                raise ConfigurationError(f"layer {name}: shape mismatch")
        self.spec = spec
        self.scale_set = scale_set
        self.layers = layers
        self.layer_names = [name for name, _, _ in expected]

    @classmethod
    def init(cls, spec: ModelSpec, scale_set: ScaleSet, rng: np.random.Generator) -> "Model":
        """Glorot-uniform weights, zero biases."""
        layers = []
        for _name, d_in, d_out in spec.layer_dims():
            limit = np.sqrt(6.0 / (d_in + d_out))
            w = rng.uniform(-limit, limit, size=(d_in, d_out))
            layers.append(DenseLayer(w=w, b=np.zeros(d_out)))
        return cls(spec, scale_set, layers)

    def params(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for name, layer in zip(self.layer_names, self.layers):
            out.append((f"{name}.w", layer.w))
            out.append((f"{name}.b", layer.b))
        return out

    def copy_params(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.params()}

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in self.params():
            np.copyto(arr, values[name])

    # -- forward -----------------------------------------------------------

    def forward(self, x: np.ndarray, mode: str = "eval",
                rng: np.random.Generator | None = None,
                cache: PropagationCache | None = None) -> ForwardResult:
        """Run the variant's pipeline; returns logits, probabilities and the
        activation tape needed for backprop.

        Dropout (train mode, rate > 0) follows the variant's placement:
        inputs of every dense layer plus the stored entries of each
        propagation matrix, except that the cacheable variants apply it
        only after propagation. Caches are rejected for variants with a
        trainable pre-push transform.
        """
        if mode not in ("train", "eval"):
            raise ConfigurationError(f"mode must be train or eval, got {mode!r}")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ConfigurationError(
                f"features must be n x {self.spec.input_dim}, got {x.shape}")
        if cache is not None and not self.spec.cacheable:
            raise ConfigurationError(
                "propagated-feature cache requires the pre-push transform to be the identity")
        use_dropout = mode == "train" and self.spec.dropout > 0
        if use_dropout and rng is None:
            raise ConfigurationError("train-mode dropout needs an rng")
        rate = self.spec.dropout
        tape: dict = {}

        if self.spec.variant in ("full", "tpp"):
            x_in = x
            if use_dropout:
                tape["mask_x"] = _dropout_mask(rng, x.shape, rate)
                x_in = x * tape["mask_x"]
            tape["x_in"] = x_in
            a1 = x_in @ self.layers[0].w + self.layers[0].b
            tape["a1"] = a1
            h = np.maximum(a1, 0.0)
            if self.spec.variant == "tpp":
                if use_dropout:
                    tape["mask_hidden"] = _dropout_mask(rng, h.shape, rate)
                    h = h * tape["mask_hidden"]
                tape["hidden_in"] = h
                h = h @ self.layers[1].w + self.layers[1].b
            pushed = h

            mats = None
            if use_dropout:
                mats = [_sparse_dropout(m.matrix, rate, rng) for m in self.scale_set.matrices]
                tape["dropped"] = mats
                if self.scale_set.aggregator is Aggregator.SUM:
                    summed = mats[0]
                    for m in mats[1:]:
                        summed = summed + m
                    tape["summed"] = summed.tocsr()
                    agg = ScaleAggregate(values=propagate(tape["summed"], pushed))
                else:
                    agg = scale_aggregate(self.scale_set, pushed, matrices=mats)
            else:
                if self.scale_set.aggregator is Aggregator.SUM:
                    tape["summed"] = self.scale_set.summed_matrix()
                agg = scale_aggregate(self.scale_set, pushed)
            tape["argmax"] = agg.argmax

            if self.spec.variant == "tpp":
                logits = agg.values
            else:
                h2 = agg.values
                if use_dropout:
                    tape["mask_h2"] = _dropout_mask(rng, h2.shape, rate)
                    h2 = h2 * tape["mask_h2"]
                tape["h2_in"] = h2
                logits = h2 @ self.layers[1].w + self.layers[1].b
        else:  # ptp / pp: propagation first, cacheable
            if cache is not None:
                agg = cache_propagated(self.scale_set, x, cache)
            else:
                agg = scale_aggregate(self.scale_set, x)
            z = agg.values
            if use_dropout:
                tape["mask_h2"] = _dropout_mask(rng, z.shape, rate)
                z = z * tape["mask_h2"]
            tape["h2_in"] = z
            if self.spec.variant == "pp":
                logits = z @ self.layers[0].w + self.layers[0].b
            else:  # ptp
                a1 = z @ self.layers[0].w + self.layers[0].b
                tape["a1"] = a1
                h = np.maximum(a1, 0.0)
                if use_dropout:
                    tape["mask_hidden"] = _dropout_mask(rng, h.shape, rate)
                    h = h * tape["mask_hidden"]
                tape["hidden_in"] = h
                logits = h @ self.layers[1].w + self.layers[1].b

        return ForwardResult(mode=mode, logits=logits, probs=softmax(logits), tape=tape)

    # -- loss & gradients ---------------------------------------------------

    def loss(self, fwd: ForwardResult, labels: np.ndarray, mask: np.ndarray) -> float:
        """Mean softmax cross-entropy over the masked nodes plus the L2
        penalty on dense weights (biases excluded)."""
        mask = np.asarray(mask)
        if mask.size == 0:
            raise DomainError("loss mask is empty")
        labels = np.asarray(labels)
        picked = labels[mask]
        if picked.min() < 0 or picked.max() >= self.spec.num_classes:
            raise DomainError("label outside [0, num_classes) on the mask")
        logp = _log_softmax(fwd.logits[mask])
        ce = -logp[np.arange(mask.size), picked].mean()
        reg = sum(float(np.sum(layer.w ** 2)) for layer in self.layers)
        return float(ce + self.spec.l2 * reg)

    def loss_and_gradients(self, fwd: ForwardResult, labels: np.ndarray,
                           mask: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        loss = self.loss(fwd, labels, mask)
        mask = np.asarray(mask)
        labels = np.asarray(labels)
        tape = fwd.tape

        dlogits = np.zeros_like(fwd.logits)
        dlogits[mask] = fwd.probs[mask]
        dlogits[mask, labels[mask]] -= 1.0
        dlogits[mask] /= mask.size

        grads: dict[str, np.ndarray] = {}
        v = self.spec.variant
        if v == "full":
            grads["g0.w"] = tape["h2_in"].T @ dlogits
            grads["g0.b"] = dlogits.sum(axis=0)
            dh2 = dlogits @ self.layers[1].w.T
            if "mask_h2" in tape:
                dh2 = dh2 * tape["mask_h2"]
            dh0 = self._aggregate_backward(dh2, tape)
            da1 = dh0 * (tape["a1"] > 0)
            grads["f0.w"] = tape["x_in"].T @ da1
            grads["f0.b"] = da1.sum(axis=0)
        elif v == "tpp":
            ds = self._aggregate_backward(dlogits, tape)
            grads["f1.w"] = tape["hidden_in"].T @ ds
            grads["f1.b"] = ds.sum(axis=0)
            dh = ds @ self.layers[1].w.T
            if "mask_hidden" in tape:
                dh = dh * tape["mask_hidden"]
            da1 = dh * (tape["a1"] > 0)
            grads["f0.w"] = tape["x_in"].T @ da1
            grads["f0.b"] = da1.sum(axis=0)
        elif v == "ptp":
            grads["g1.w"] = tape["hidden_in"].T @ dlogits
            grads["g1.b"] = dlogits.sum(axis=0)
            dh = dlogits @ self.layers[1].w.T
            if "mask_hidden" in tape:
                dh = dh * tape["mask_hidden"]
            da1 = dh * (tape["a1"] > 0)
            grads["g0.w"] = tape["h2_in"].T @ da1
            grads["g0.b"] = da1.sum(axis=0)
        else:  # pp
            grads["g0.w"] = tape["h2_in"].T @ dlogits
            grads["g0.b"] = dlogits.sum(axis=0)

        for name, layer in zip(self.layer_names, self.layers):
            grads[f"{name}.w"] = grads[f"{name}.w"] + 2.0 * self.spec.l2 * layer.w
        return loss, grads

    def _aggregate_backward(self, dh2: np.ndarray, tape: dict) -> np.ndarray:
        """Route gradients back through the (constant) propagation."""
        agg = self.scale_set.aggregator
        mats = tape.get("dropped")
        if mats is None:
            mats = [m.matrix for m in self.scale_set.matrices]
        if agg is Aggregator.SUM:
            return np.asarray(tape["summed"].T @ dh2)
        if agg is Aggregator.MAX:
            arg = tape["argmax"]
            dh0 = np.zeros((mats[0].shape[1], dh2.shape[1]))
            for k, m in enumerate(mats):
                routed = np.where(arg == k, dh2, 0.0)
                dh0 += m.T @ routed
            return dh0
        # cat: consecutive width-h blocks per scale
        h1 = self.spec.propagated_width
        dh0 = np.zeros((mats[0].shape[1], h1))
        for k, m in enumerate(mats):
            dh0 += m.T @ dh2[:, k * h1:(k + 1) * h1]
        return dh0


def check_finite_gradients(grads: dict[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in {name}; training aborted")


# ---------------------------------------------------------------------------
# Checkpoints: versioned JSON, exact float round-trip via repr
# ---------------------------------------------------------------------------

def save_checkpoint(path, model: Model) -> None:
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "layers": {
            name: {"w": layer.w.tolist(), "b": layer.b.tolist()}
            for name, layer in zip(model.layer_names, model.layers)
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(record, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path, scale_set: ScaleSet) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError("not a model checkpoint file")
    if record.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {record.get('version')}")
    spec = ModelSpec.from_dict(record["spec"])
    layers = []
    for name, _din, _dout in spec.layer_dims():
        entry = record["layers"][name]
        layers.append(DenseLayer(w=np.array(entry["w"], dtype=np.float64),
                                 b=np.array(entry["b"], dtype=np.float64)))
    return Model(spec, scale_set, layers)

"""Network specification, construction and inference."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Tuple

import numpy as np

from .layers import Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, sigmoid, softmax

HEADS = ("binary", "topM")


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv | pool | flatten | dense | dropout
    kernel: int = 0
    width: int = 0
    stride: int = 1
    activation: str = "relu"
    rate: float = 0.0
    pool: int = 0


@dataclass(frozen=True)
class NetworkSpec:
    layers: Tuple[LayerSpec, ...]
    head: str = "topM"
    num_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.layers))
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")

    @property
    def n_outputs(self) -> int:
        return 1 if self.head == "binary" else self.num_classes

    def to_dict(self) -> dict:
        return {"layers": [asdict(l) for l in self.layers], "head": self.head,
                "num_classes": self.num_classes}

    @classmethod
    def from_dict(cls, d) -> "NetworkSpec":
        return cls(tuple(LayerSpec(**l) for l in d["layers"]), d["head"], d["num_classes"])


def default_spec(head: str = "topM", num_classes: int = 240, dropout: float = 0.3) -> NetworkSpec:
    """Thirteen layers, seven of them convolutions with kernels shrinking
    from 13x13 to 3x3. The first convolution is strided to keep the
    parameter count near 1e5 for a 64x64x8 input."""
    L = LayerSpec
    layers = (
        L("conv", kernel=13, width=8, stride=2),
        L("pool", pool=2),
        L("conv", kernel=11, width=16),
        L("conv", kernel=9, width=16),
        L("pool", pool=2),
        L("conv", kernel=7, width=16),
        L("conv", kernel=5, width=32),
        L("conv", kernel=5, width=32),
        L("conv", kernel=3, width=16),
        L("flatten"),
        L("dense", width=64),
        L("dropout", rate=dropout),
        L("dense", activation="linear"),  # head; width comes from the spec
    )
    return NetworkSpec(layers, head, num_classes if head == "topM" else 1)


def check_layout(spec: NetworkSpec, n_params: int) -> None:
    """Structural constraints of the reference architecture."""
    if len(spec.layers) != 13:
        raise ValueError(f"expected 13 layers, got {len(spec.layers)}")
    kernels = [l.kernel for l in spec.layers if l.kind == "conv"]
    if len(kernels) != 7:
        raise ValueError(f"expected 7 convolutional layers, got {len(kernels)}")
    if kernels[0] != 13 or kernels[-1] != 3 or any(a < b for a, b in zip(kernels, kernels[1:])):
        raise ValueError(f"kernel sizes must shrink from 13 to 3, got {kernels}")
    if not 0.5e5 <= n_params <= 2e5:
        raise ValueError(f"parameter count {n_params} outside [5e4, 2e5]")


class Network:
    def __init__(self, spec: NetworkSpec, input_shape, layers: List[Layer], dtype=np.float32):
        self.spec = spec
        self.input_shape = tuple(input_shape)
        self.layers = layers
        self.dtype = np.dtype(dtype)

    @property
    def head(self) -> str:
        return self.spec.head

    def param_items(self):
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield (i, name), layer

    def n_params(self) -> int:
        return int(sum(p.size for l in self.layers for p in l.params.values()))

    def set_dropout_rng(self, rng: np.random.Generator) -> None:
        for l in self.layers:
            if isinstance(l, Dropout):
                l.rng = rng

    def forward(self, x, training=False):
        out = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            out = layer.forward(out, training)
        return out

    def backward(self, dlogits):
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
            if d is None:
                break

    def predict_proba(self, x, batch_size: int = 64) -> np.ndarray:
        """Head output: class probabilities (topM) or P(LOS) (binary)."""
        x = np.asarray(x)
        out = []
        for i in range(0, len(x), batch_size):
            z = self.forward(x[i:i + batch_size], training=False).astype(np.float64)
            out.append(softmax(z) if self.head == "topM" else sigmoid(z)[:, 0])
        if not out:
            return np.zeros((0, self.spec.n_outputs) if self.head == "topM" else (0,))
        return np.concatenate(out)


def build_network(spec: NetworkSpec, input_shape, seed: int = 0, dtype=np.float32,
                  strict: bool = True) -> Network:
    """Instantiate layers and draw He-normal weights (sqrt(2 / fan_in); the
    linear head uses sqrt(1 / fan_in)); biases start at zero."""
    rng = np.random.default_rng(seed)
    shape = tuple(input_shape)
    layers: List[Layer] = []
    n_dense = sum(1 for l in spec.layers if l.kind == "dense")
    seen_dense = 0
    for i, ls in enumerate(spec.layers):
        name = f"layer{i}_{ls.kind}"
        try:
            if ls.kind == "conv":
                layer = Conv2D(shape[-1], ls.width, ls.kernel, ls.stride, ls.activation, name)
            elif ls.kind == "pool":
                layer = MaxPool2D(ls.pool, name)
            elif ls.kind == "flatten":
                layer = Flatten(name)
            elif ls.kind == "dropout":
                layer = Dropout(ls.rate, name)
            elif ls.kind == "dense":
                seen_dense += 1
                width = spec.n_outputs if seen_dense == n_dense else ls.width
                if len(shape) != 1:
                    raise ValueError(f"{name}: dense layer needs a flat input, got {shape}")
                layer = Dense(shape[0], width, ls.activation, name)
            else:
                raise ValueError(f"{name}: unknown layer kind {ls.kind!r}")
            shape = layer.output_shape(shape)
        except ValueError as exc:
            raise ValueError(f"shape mismatch at {name}: {exc}") from None
        for pname, p in layer.params.items():
            if pname == "W":
                fan_in = int(np.prod(p.shape[:-1]))
                gain = 2.0 if getattr(layer, "activation", "relu") == "relu" else 1.0
                layer.params[pname] = (rng.normal(size=p.shape) * np.sqrt(gain / fan_in)).astype(dtype)
            else:
                layer.params[pname] = np.zeros(p.shape, dtype=dtype)
        layers.append(layer)
    if shape != (spec.n_outputs,):
        raise ValueError(f"network output {shape} does not match head size {spec.n_outputs}")
    if layers:
        layers[0].needs_input_grad = False
    net = Network(spec, input_shape, layers, dtype)
    if strict:
        check_layout(spec, net.n_params())
    return net


def predict_topM(network: Network, x, M: int) -> np.ndarray:
    """Indices of the M largest outputs per example, best first; ties go to
    the smaller index. ``x`` is one input or a batch."""
    x = np.asarray(x)
    single = x.ndim == len(network.input_shape)
    probs = network.predict_proba(x[None] if single else x)
    if not 1 <= M <= probs.shape[1]:
        raise ValueError(f"M must be in [1, {probs.shape[1]}]")
    order = rank_outputs(probs)[:, :M]
    return order[0] if single else order


def rank_outputs(probs) -> np.ndarray:
    probs = np.atleast_2d(probs)
    return np.argsort(-probs, axis=1, kind="stable")


def predict_los(network: Network, x, threshold: float = 0.5):
    """True (LOS) where the sigmoid output reaches ``threshold``."""
    x = np.asarray(x)
    single = x.ndim == len(network.input_shape)
    p = network.predict_proba(x[None] if single else x)
    los = p >= threshold
    return bool(los[0]) if single else los

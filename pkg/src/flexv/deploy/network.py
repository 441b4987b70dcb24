"""Network descriptions: JSON ingestion, validation and the chained golden oracle."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..tensor import (LayerSpec, PackedTensor, Precision, QuantParams, TensorError, pack,
                      random_tensor, reference_layer)

KINDS = ("conv", "depthwise")


class NetworkError(ValueError):
    pass


def network_schema() -> dict:
    return json.loads(resources.files("flexv.data").joinpath("network-schema.json").read_text())


@dataclass(frozen=True)
class NetLayer:
    name: str
    kind: str
    cout: int
    kh: int
    kw: int
    stride: int
    padding: int
    act: Precision
    weight: Precision
    quant: QuantParams
    input: str | None = None


@dataclass(frozen=True)
class ResolvedLayer:
    """A layer with its input shape resolved through the chain."""
    layer: NetLayer
    spec: LayerSpec
    source: str | None

    @property
    def name(self) -> str:
        return self.layer.name

    @property
    def kind(self) -> str:
        return self.layer.kind

    @property
    def macs(self) -> int:
        s = self.spec
        if self.kind == "depthwise":
            return s.out_h * s.out_w * s.cin * s.kh * s.kw
        return s.macs

    @property
    def output_shape(self) -> tuple:
        return self.spec.output_shape

    def channel_spec(self) -> LayerSpec:
        """Single-channel convolution standing in for one depthwise channel."""
        s = self.spec
        return LayerSpec(s.in_h, s.in_w, 1, 1, s.kh, s.kw, s.stride, s.padding, s.act,
                         s.weight, s.quant)

    @property
    def weight_shape(self) -> tuple:
        s = self.spec
        if self.kind == "depthwise":
            return (s.cin, s.kh, s.kw, 1)
        return s.weight_shape

    @property
    def weight_bytes(self) -> int:
        n = int(np.prod(self.weight_shape))
        return (n * self.spec.weight.bits + 7) // 8


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: tuple
    input_precision: Precision
    layers: tuple
    seed: int = 0
    weights: str | None = None
    description: str = ""
    base_dir: str | None = field(default=None, compare=False)

    def resolve(self) -> list[ResolvedLayer]:
        shapes = {None: (tuple(self.input_shape), self.input_precision)}
        out, prev = [], None
        for ly in self.layers:
            src = ly.input if ly.input is not None else prev
            if src not in shapes:
                raise NetworkError(f"layer {ly.name!r}: unknown input {src!r}")
            (h, w, c), prec = shapes[src]
            if prec != ly.act:
                raise NetworkError(
                    f"layer {ly.name!r}: activation precision {ly.act} does not match "
                    f"producer precision {prec}")
            cout = c if ly.kind == "depthwise" else ly.cout
            if ly.kind == "depthwise":
                if ly.cout not in (c, 0):
                    raise NetworkError(f"layer {ly.name!r}: depthwise cout must equal cin={c}")
                if ly.act.bits != 8 or ly.weight.bits != 8 or ly.quant.out.bits != 8:
                    raise NetworkError(f"layer {ly.name!r}: depthwise layers run per channel "
                                       "and need 8-bit activations, weights and outputs")
            try:
                spec = LayerSpec(h, w, c, cout, ly.kh, ly.kw, ly.stride, ly.padding, ly.act,
                                 ly.weight, ly.quant)
            except TensorError as e:
                raise NetworkError(f"layer {ly.name!r}: {e}") from None
            if ly.name in shapes:
                raise NetworkError(f"duplicate layer name {ly.name!r}")
            shapes[ly.name] = (spec.output_shape, ly.quant.out)
            out.append(ResolvedLayer(ly, spec, src))
            prev = ly.name
        return out

    @property
    def macs(self) -> int:
        return sum(r.macs for r in self.resolve())


def parse_network(doc: dict, base_dir=None) -> NetworkSpec:
    """Validate against the schema (errors carry a JSON pointer) and build a NetworkSpec."""
    validator = jsonschema.Draft202012Validator(network_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        ptr = "/" + "/".join(str(p) for p in e.absolute_path)
        raise NetworkError(f"{ptr}: {e.message}")
    layers = []
    for i, d in enumerate(doc["layers"]):
        q = d.get("quant", {})
        try:
            out = Precision.parse(q.get("out", "u8"))
            quant = QuantParams(q.get("m", 1), q.get("b", 0), q.get("d", 0), out)
            layers.append(NetLayer(
                d["name"], d.get("type", "conv"), d.get("cout", 0), d.get("kh", 3),
                d.get("kw", d.get("kh", 3)), d.get("stride", 1), d.get("padding", 0),
                Precision.parse(d["act"]), Precision.parse(d["weight"]), quant, d.get("input")))
        except (TensorError, ValueError) as e:
            raise NetworkError(f"/layers/{i}: {e}") from None
    net = NetworkSpec(doc["name"], tuple(doc["input"]["shape"]),
                      Precision.parse(doc["input"]["precision"]), tuple(layers),
                      doc.get("seed", 0), doc.get("weights"), doc.get("description", ""),
                      str(base_dir) if base_dir else None)
    net.resolve()
    return net


def load_network(path) -> NetworkSpec:
    p = Path(path)
    if not p.exists():
        bundled = resources.files("flexv.data").joinpath("networks", p.name)
        if bundled.is_file():
            return parse_network(json.loads(bundled.read_text()))
        raise FileNotFoundError(f"no such network file: {path}")
    return parse_network(json.loads(p.read_text()), p.parent)


def bundled_networks() -> list[str]:
    root = resources.files("flexv.data").joinpath("networks")
    return sorted(f.name for f in root.iterdir() if f.name.endswith(".json"))


# ---------------------------------------------------------------------------
# data

def network_tensors(net: NetworkSpec, seed: int | None = None):
    """Input tensor and per-layer weights, from the weight file or the seed."""
    rng = np.random.default_rng(net.seed if seed is None else seed)
    resolved = net.resolve()
    x = random_tensor(rng, net.input_shape, net.input_precision)
    if net.weights:
        path = Path(net.base_dir or ".") / net.weights
        with np.load(path) as npz:
            ws = {r.name: pack(npz[r.name].astype(np.int64).reshape(-1), r.spec.weight,
                               r.weight_shape) for r in resolved}
    else:
        ws = {r.name: random_tensor(rng, r.weight_shape, r.spec.weight) for r in resolved}
    return x, ws


def depthwise_channel(t: PackedTensor, c: int) -> PackedTensor:
    v = t.values()
    return pack(v[..., c:c + 1].reshape(-1), t.precision, v.shape[:-1] + (1,))


def depthwise_filter(w: PackedTensor, c: int) -> PackedTensor:
    """Filter ``c`` of a (C, kh, kw, 1) depthwise weight tensor."""
    v = w.values()
    return pack(v[c:c + 1].reshape(-1), w.precision, (1,) + v.shape[1:])


def concat_channels(parts, precision: Precision) -> PackedTensor:
    v = np.concatenate([p.values() for p in parts], axis=-1)
    return pack(v.reshape(-1), precision, v.shape)


def reference_layer_any(r: ResolvedLayer, x: PackedTensor, w: PackedTensor) -> PackedTensor:
    if r.kind == "conv":
        return reference_layer(r.spec, x, w)
    cs = r.channel_spec()
    outs = [reference_layer(cs, depthwise_channel(x, c), depthwise_filter(w, c))
            for c in range(r.spec.cin)]
    return concat_channels(outs, r.spec.quant.out)


def reference_network(net: NetworkSpec, x: PackedTensor, weights: dict) -> dict:
    """Golden outputs of every layer, chained."""
    acts = {None: x}
    prev = None
    for r in net.resolve():
        acts[r.name] = reference_layer_any(r, acts[r.source], weights[r.name])
        prev = r.name
    acts["__output__"] = acts[prev]
    return acts


def memory_footprint(net: NetworkSpec) -> int:
    """Packed weight bytes plus 12 bytes of requantization parameters per layer."""
    return sum(r.weight_bytes + 12 for r in net.resolve())

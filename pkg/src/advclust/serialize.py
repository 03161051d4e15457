"""Flat text serialization for MLP parameters.

Layout, one network per file:

    # mlp-params v1
    layers <L>
    layer <i> <activation> <out_dim> <in_dim>
    <out_dim> rows of <in_dim> weight values
    1 row of <out_dim> bias values
    ... repeated per layer

Values are written with repr() so a load/save round trip is exact.
"""

from __future__ import annotations

from .numerics import Layer, MlpParams

HEADER = "# mlp-params v1"


def save_mlp(path: str, params: MlpParams) -> None:
    with open(path, "w") as f:
        f.write(HEADER + "\n")
        f.write(f"layers {len(params.layers)}\n")
        for i, layer in enumerate(params.layers):
            out_dim, in_dim = layer.weight.shape
            f.write(f"layer {i} {layer.activation} {out_dim} {in_dim}\n")
            for row in layer.weight:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")
            f.write(" ".join(repr(float(v)) for v in layer.bias) + "\n")


def load_mlp(path: str) -> MlpParams:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0] != HEADER:
        raise ValueError(f"{path}: missing '{HEADER}' header")
    if not lines[1].startswith("layers "):
        raise ValueError(f"{path}:2: expected 'layers <L>'")
    n_layers = int(lines[1].split()[1])
    pos = 2
    layers = []
    for i in range(n_layers):
        tag, idx, activation, out_dim, in_dim = lines[pos].split()
        if tag != "layer" or int(idx) != i:
            raise ValueError(f"{path}:{pos + 1}: expected 'layer {i} ...'")
        out_dim, in_dim = int(out_dim), int(in_dim)
        pos += 1
        weight = [[float(v) for v in lines[pos + r].split()] for r in range(out_dim)]
        pos += out_dim
        bias = [float(v) for v in lines[pos].split()]
        pos += 1
        layers.append(Layer(weight, bias, activation))
    return MlpParams(layers)

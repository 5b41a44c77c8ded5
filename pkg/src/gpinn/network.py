"""Fully-connected tanh networks and hard-constraint output transforms.

``MlpParams`` is a plain value object; the flattened view (layer-major,
weights row-major, then biases) is the order used by the optimizers and
by the checkpoint file format documented in docs/formats.md.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Node

__all__ = [
    "MlpParams",
    "init_mlp",
    "forward",
    "param_leaves",
    "ANSATZ_TAGS",
    "apply_ansatz",
    "save_params",
    "load_params",
]

ANSATZ_TAGS = ("identity", "dirichlet-1d-poisson", "diff-react", "none-soft-bc")


@dataclass(frozen=True)
class MlpParams:
    """Weights and biases of a fully-connected network.

    flat[k] holds, for each layer l in order: W_l row-major with shape
    (fan_out, fan_in), then b_l with shape (fan_out,).
    """

    layer_sizes: tuple[int, ...]
    flat: np.ndarray

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(s <= 0 for s in self.layer_sizes):
            raise ValueError(f"need >=2 positive layer sizes, got {self.layer_sizes}")
        if self.flat.shape != (n_parameters(self.layer_sizes),):
            raise ValueError(
                f"flat length {self.flat.shape} does not match sizes {self.layer_sizes}"
            )

    @property
    def n_params(self) -> int:
        return self.flat.shape[0]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Unflatten into [(W, b)] views; round-trips with ``flat``."""
        out = []
        k = 0
        for fi, fo in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = self.flat[k : k + fi * fo].reshape(fo, fi)
            k += fi * fo
            b = self.flat[k : k + fo]
            k += fo
            out.append((W, b))
        return out

    def with_flat(self, flat: np.ndarray) -> "MlpParams":
        return MlpParams(self.layer_sizes, np.asarray(flat, dtype=np.float64))


def n_parameters(layer_sizes) -> int:
    return sum(fi * fo + fo for fi, fo in zip(layer_sizes[:-1], layer_sizes[1:]))


def init_mlp(layer_sizes, seed: int) -> MlpParams:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ValueError(f"need >=2 positive layer sizes, got {layer_sizes}")
    rng = np.random.default_rng(seed)
    parts = []
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fi + fo))
        parts.append(rng.uniform(-bound, bound, size=fi * fo))
        parts.append(np.zeros(fo))
    return MlpParams(sizes, np.concatenate(parts))


def param_leaves(p: MlpParams, g: Graph) -> list[Node]:
    """Register every parameter as a differentiable input leaf of g,
    in flattened order."""
    return [g.input(v) for v in p.flat]


def forward(p: MlpParams, g: Graph, inputs: list[Node], leaves: list[Node] | None = None) -> Node:
    """N(x): tanh hidden layers, linear output layer, as a graph Node.

    ``leaves`` may pass pre-registered parameter leaves (so several
    forward calls can share one parameter set); otherwise fresh leaves
    are registered.
    """
    sizes = p.layer_sizes
    if len(inputs) != sizes[0]:
        raise ValueError(f"expected {sizes[0]} inputs, got {len(inputs)}")
    if leaves is None:
        leaves = param_leaves(p, g)
    elif len(leaves) != p.n_params:
        raise ValueError(f"expected {p.n_params} parameter leaves, got {len(leaves)}")
    h = list(inputs)
    k = 0
    for li, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
        pre = []
        for r in range(fo):
            row = leaves[k + r * fi : k + r * fi + fi]
            terms = [w * x for w, x in zip(row, h)]
            pre.append(ad.pairwise_sum(terms) + leaves[k + fi * fo + r])
        k += fi * fo + fo
        h = [ad.tanh(z) for z in pre] if li < len(sizes) - 2 else pre
    if len(h) != 1:
        raise ValueError("forward currently supports scalar-output networks")
    return h[0]


def apply_ansatz(tag: str, raw: Node, coords: list[Node], u0=None) -> Node:
    """Combine the raw network output with coordinates so boundary/initial
    conditions hold identically.

    identity / none-soft-bc: raw unchanged.
    dirichlet-1d-poisson:    x*(pi - x)*raw + x          (1 coordinate)
    diff-react:              (x^2 - pi^2)*(1 - e^-t)*raw + u0(x)
                             where ``u0`` builds the initial profile Node.
    """
    if tag not in ANSATZ_TAGS:
        raise ValueError(f"unknown ansatz tag {tag!r}")
    if tag in ("identity", "none-soft-bc"):
        return raw
    if tag == "dirichlet-1d-poisson":
        if len(coords) != 1:
            raise ValueError("dirichlet-1d-poisson expects 1 coordinate")
        x = coords[0]
        return x * (math.pi - x) * raw + x
    # diff-react
    if len(coords) != 2:
        raise ValueError("diff-react expects (x, t) coordinates")
    if u0 is None:
        raise ValueError("diff-react ansatz requires the initial profile builder")
    x, t = coords
    factor = (x * x - math.pi**2) * (1.0 - ad.exp(-t))
    return factor * raw + u0(x)


# -- parameter checkpoint format (docs/formats.md) --------------------------

_MAGIC = b"MLP1"


def save_params(p: MlpParams, path) -> None:
    """Little-endian: magic, u32 layer count, u32 sizes, f64 flat params."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(p.layer_sizes)))
        fh.write(struct.pack(f"<{len(p.layer_sizes)}I", *p.layer_sizes))
        fh.write(np.ascontiguousarray(p.flat, dtype="<f8").tobytes())


def load_params(path) -> MlpParams:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint")
        (n_sizes,) = struct.unpack("<I", fh.read(4))
        sizes = struct.unpack(f"<{n_sizes}I", fh.read(4 * n_sizes))
        flat = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    return MlpParams(tuple(sizes), flat)

"""Channel search spaces for chain-structured convolutional networks.

A network with ``n`` layers is described by its channel counts at the ``n+1``
layer boundaries ``c_0..c_n``.  The first and last boundaries are fixed by the
application (image channels in, classes out); every interior boundary picks
its count from a finite choice set.  All per-layer cost models in this package
(FLOPs, latency) depend only on adjacent pairs ``(c_i, c_{i+1})``, which is
what makes exact dynamic-programming search over the space possible.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

from .errors import EnumerationCapError, FileFormatError

FULL_CONV = "full_conv"
DEPTHWISE_SEPARABLE = "depthwise_separable"
LAYER_KINDS = (FULL_CONV, DEPTHWISE_SEPARABLE)

#: A channel configuration: one count per boundary, length ``n_layers + 1``.
Config = tuple[int, ...]


@dataclass(frozen=True)
class LayerParams:
    """Fixed shape parameters of one layer.

    ``height`` and ``width`` are the layer's input spatial dimensions; the
    stride divides them for the depthwise stage of a separable layer.
    """

    height: int
    width: int
    stride: int
    kernel: int
    kind: str = FULL_CONV

    def __post_init__(self):
        for name in ("height", "width", "stride", "kernel"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"kind must be one of {LAYER_KINDS}, got {self.kind!r}")


def layer_flops(params: LayerParams, c_in: int, c_out: int) -> float:
    """FLOPs of one layer as a function of its input/output channel counts."""
    area = float(params.height * params.width)
    k2_s2 = params.kernel ** 2 / params.stride ** 2
    if params.kind == FULL_CONV:
        return c_in * c_out * area * k2_s2
    # pointwise at input resolution, depthwise at the strided resolution
    return c_in * c_out * area + c_out * area * k2_s2


@dataclass(frozen=True)
class SearchSpace:
    """An ordered chain of layers plus the channel choice set per boundary.

    ``choice_sets`` has length ``n_layers + 1``; each set is strictly
    ascending, and the first and last sets are singletons holding the fixed
    input and output channel counts.
    """

    params: tuple[LayerParams, ...]
    choice_sets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.choice_sets) != len(self.params) + 1:
            raise ValueError(
                f"{len(self.params)} layers require {len(self.params) + 1} "
                f"choice sets, got {len(self.choice_sets)}"
            )
        for i, choices in enumerate(self.choice_sets):
            if not choices:
                raise ValueError(f"choice set {i} is empty")
            if any(c < 1 for c in choices):
                raise ValueError(f"choice set {i} has non-positive entries")
            if any(a >= b for a, b in zip(choices, choices[1:])):
                raise ValueError(f"choice set {i} is not strictly ascending")
        if len(self.choice_sets[0]) != 1 or len(self.choice_sets[-1]) != 1:
            raise ValueError("first and last choice sets must be singletons")

    @classmethod
    def from_layers(
        cls,
        layers: Sequence[tuple[LayerParams, Sequence[int]]],
        input_channels: int,
        output_channels: int,
    ) -> "SearchSpace":
        """Build a space from per-layer (params, output-channel choices) pairs.

        The last layer's choices must be exactly the fixed output count.
        """
        params = tuple(p for p, _ in layers)
        sets = [(int(input_channels),)]
        sets += [tuple(sorted(int(c) for c in set(choices))) for _, choices in layers]
        if sets[-1] != (int(output_channels),):
            raise ValueError(
                f"last layer choices {sets[-1]} must equal the output "
                f"channel count ({output_channels})"
            )
        return cls(params=params, choice_sets=tuple(sets))

    @property
    def n_layers(self) -> int:
        return len(self.params)

    @property
    def n_boundaries(self) -> int:
        return len(self.choice_sets)

    @property
    def input_channels(self) -> int:
        return self.choice_sets[0][0]

    @property
    def output_channels(self) -> int:
        return self.choice_sets[-1][0]

    @property
    def size(self) -> int:
        """Number of configurations in the space (exact integer)."""
        total = 1
        for choices in self.choice_sets:
            total *= len(choices)
        return total

    @property
    def max_config(self) -> Config:
        return tuple(choices[-1] for choices in self.choice_sets)

    @property
    def min_config(self) -> Config:
        return tuple(choices[0] for choices in self.choice_sets)

    def choice_index(self, boundary: int, channel: int) -> int:
        """Index of ``channel`` within the boundary's choice set."""
        try:
            return self.choice_sets[boundary].index(channel)
        except ValueError:
            raise ValueError(
                f"channel {channel} is not a choice at boundary {boundary}"
            ) from None

    def expand_interior(self, interior: Sequence[int]) -> Config:
        """Attach the fixed first/last counts to an interior channel vector."""
        if len(interior) != self.n_boundaries - 2:
            raise ValueError(
                f"expected {self.n_boundaries - 2} interior channels, "
                f"got {len(interior)}"
            )
        return (self.input_channels, *map(int, interior), self.output_channels)


def validate(config: Sequence[int], space: SearchSpace) -> bool:
    """True iff ``config`` has one in-set channel count per boundary."""
    if len(config) != space.n_boundaries:
        return False
    return all(c in choices for c, choices in zip(config, space.choice_sets))


def require_valid(config: Sequence[int], space: SearchSpace) -> Config:
    config = tuple(int(c) for c in config)
    if not validate(config, space):
        raise ValueError(f"configuration {config} is not valid in this space")
    return config


def enumerate_configs(space: SearchSpace, *, cap: int) -> Iterator[Config]:
    """Yield every configuration once, in lexicographic order.

    Refuses outright if the space holds more than ``cap`` configurations.
    """
    size = space.size
    if size > cap:
        raise EnumerationCapError(size, cap)
    return iter(itertools.product(*space.choice_sets))


def flops(config: Sequence[int], space: SearchSpace) -> float:
    """Total FLOPs of a configuration; a sum of per-adjacent-pair terms."""
    config = require_valid(config, space)
    total = 0.0
    for i, params in enumerate(space.params):
        total += layer_flops(params, config[i], config[i + 1])
    return total


# ---------------------------------------------------------------------------
# JSON persistence


def space_to_dict(space: SearchSpace) -> dict:
    layers = []
    for i, params in enumerate(space.params):
        layers.append(
            {
                "height": params.height,
                "width": params.width,
                "stride": params.stride,
                "kernel": params.kernel,
                "kind": params.kind,
                "choices": list(space.choice_sets[i + 1]),
            }
        )
    return {
        "input_channels": space.input_channels,
        "output_channels": space.output_channels,
        "layers": layers,
    }


def space_from_dict(doc: dict) -> SearchSpace:
    try:
        layers = [
            (
                LayerParams(
                    height=int(layer["height"]),
                    width=int(layer["width"]),
                    stride=int(layer["stride"]),
                    kernel=int(layer["kernel"]),
                    kind=str(layer.get("kind", FULL_CONV)),
                ),
                [int(c) for c in layer["choices"]],
            )
            for layer in doc["layers"]
        ]
        return SearchSpace.from_layers(
            layers,
            input_channels=int(doc["input_channels"]),
            output_channels=int(doc["output_channels"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"bad search-space document: {exc}") from exc


def save_space(space: SearchSpace, path: str | Path) -> None:
    Path(path).write_text(json.dumps(space_to_dict(space), indent=2) + "\n")


def load_space(path: str | Path) -> SearchSpace:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from exc
    return space_from_dict(doc)


def mobilenet_v1_space() -> SearchSpace:
    """The bundled MobileNet-v1 width search space (224x224 input)."""
    text = resources.files("widthsearch.data").joinpath("mobilenet_v1_space.json").read_text()
    return space_from_dict(json.loads(text))

"""The full forecasting model.

Forward pass: encode the input window, then for every window size pool the
state sequence, alternate hypergraph and interaction blocks (averaged) for
a fixed number of iterations, mean-pool over time, softmax-fuse the
per-scale node embeddings, and read out the horizon from the fused
embedding concatenated with the last encoded step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tensor,
    add,
    concat_cols,
    linear_combination,
    matmul,
    mean_over_time,
    scale,
    slice_rows,
    softmax_vec,
    transpose,
    window_max_rows,
)
from .encoder import EncoderParams, build_node_features, graph_convolution, init_encoder
from .graphs import RoadNetwork, TemporalGraph, temporal_graph
from .hyperedges import HyperParams, hypergraph_block, init_hyper
from .interaction import InteractionParams, init_interaction, interaction_block


@dataclass(frozen=True)
class ModelConfig:
    n_nodes: int
    n_features: int = 1
    lookback: int = 12
    horizon: int = 12
    width: int = 64
    n_hyperedges: int = 32
    windows: tuple[int, ...] = (1, 2, 3, 4, 6, 12)
    encoder_layers: int = 6
    hyper_layers: int = 1
    scale_iters: int = 2

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        for name in ("n_nodes", "n_features", "lookback", "horizon", "width",
                     "n_hyperedges", "encoder_layers", "hyper_layers", "scale_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.windows:
            raise ValueError("need at least one window size")
        for w in self.windows:
            if w < 1 or self.lookback % w != 0:
                raise ValueError(f"window size {w} does not divide lookback {self.lookback}")

    def to_json(self) -> str:
        d = self.__dict__.copy()
        d["windows"] = list(self.windows)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        d = json.loads(text)
        d["windows"] = tuple(d["windows"])
        return cls(**d)


@dataclass
class ScaleParams:
    hyper: HyperParams
    inter: InteractionParams


@dataclass
class ModelParams:
    encoder: EncoderParams
    scales: dict[int, ScaleParams] = field(default_factory=dict)
    fusion_logits: Tensor | None = None  # (J,)
    readout_w: Tensor | None = None  # (2d, horizon)
    readout_b: Tensor | None = None  # (horizon,)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    params = ModelParams(
        encoder=init_encoder(cfg.n_nodes, cfg.n_features, cfg.lookback,
                             cfg.width, cfg.encoder_layers, rng)
    )
    for eps in cfg.windows:
        rows = cfg.n_nodes * (cfg.lookback // eps)
        params.scales[eps] = ScaleParams(
            hyper=init_hyper(cfg.width, cfg.n_hyperedges, rows, rng),
            inter=init_interaction(cfg.width, rng),
        )
    params.fusion_logits = Tensor(np.zeros(len(cfg.windows)), requires_grad=True)
    s = 1.0 / np.sqrt(2 * cfg.width)
    params.readout_w = Tensor(rng.uniform(-s, s, (2 * cfg.width, cfg.horizon)), requires_grad=True)
    params.readout_b = Tensor(np.zeros(cfg.horizon), requires_grad=True)
    return params


def fuse_scales(per_scale: list[Tensor], logits: Tensor) -> Tensor:
    """Softmax-weighted combination of per-scale node embeddings."""
    return linear_combination(per_scale, softmax_vec(logits))


def forecast_head(fused: Tensor, h_last: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-node affine readout of [fused || last-step state] to the horizon."""
    return transpose(add(matmul(concat_cols(fused, h_last), w), b))


def mixed_layer(delta: Tensor, graph: TemporalGraph, sp: ScaleParams, hyper_layers: int,
                capture: list[np.ndarray] | None = None) -> Tensor:
    """One iteration: average of the hypergraph and interaction block outputs."""
    f = hypergraph_block(delta, sp.hyper, hyper_layers, capture=capture)
    r = interaction_block(delta, graph, sp.inter)
    return scale(add(f, r), 0.5)


class Forecaster:
    """Bundles config, parameters, and the per-scale temporal graphs.

    The temporal graphs depend only on the road network and the lookback,
    so they are built once and shared across every forward pass.
    """

    def __init__(self, cfg: ModelConfig, net: RoadNetwork, seed: int = 0,
                 params: ModelParams | None = None):
        if net.n_nodes != cfg.n_nodes:
            raise ValueError(f"config expects {cfg.n_nodes} nodes, network has {net.n_nodes}")
        self.cfg = cfg
        self.net = net
        self.encoder_graph = temporal_graph(net, cfg.lookback)
        self.scale_graphs: dict[int, TemporalGraph] = {}
        for eps in cfg.windows:
            steps = cfg.lookback // eps
            if steps == cfg.lookback:
                self.scale_graphs[eps] = self.encoder_graph
            else:
                self.scale_graphs[eps] = temporal_graph(net, steps)
        self.params = params if params is not None else init_params(cfg, np.random.default_rng(seed))

    def forward(self, x: np.ndarray, capture: dict | None = None) -> Tensor:
        """Predict the normalized flow horizon for one input window.

        x is (lookback, N, F).  Returns a (horizon, N) tensor.  When
        `capture` is given, incidence matrices are stored per window size
        under capture["incidence"][eps] in evaluation order.
        """
        cfg = self.cfg
        x = np.asarray(x)
        if x.shape != (cfg.lookback, cfg.n_nodes, cfg.n_features):
            raise ValueError(
                f"input window has shape {x.shape}, "
                f"expected {(cfg.lookback, cfg.n_nodes, cfg.n_features)}"
            )
        p = self.params
        h = build_node_features(x, p.encoder)
        h = graph_convolution(h, self.encoder_graph, p.encoder)
        h_last = slice_rows(h, (cfg.lookback - 1) * cfg.n_nodes, cfg.lookback * cfg.n_nodes)

        per_scale = []
        for eps in cfg.windows:
            steps = cfg.lookback // eps
            sink = None
            if capture is not None:
                sink = capture.setdefault("incidence", {}).setdefault(eps, [])
            delta = window_max_rows(h, eps, cfg.lookback, cfg.n_nodes)
            for _ in range(cfg.scale_iters):
                delta = mixed_layer(delta, self.scale_graphs[eps], p.scales[eps],
                                    cfg.hyper_layers, capture=sink)
            per_scale.append(mean_over_time(delta, steps, cfg.n_nodes))

        fused = fuse_scales(per_scale, p.fusion_logits)
        return forecast_head(fused, h_last, p.readout_w, p.readout_b)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Forward pass without recording, for inference and evaluation."""
        return self.forward(x).data

    # -- parameter plumbing -------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        p = self.params
        out = [("encoder.input_proj", p.encoder.input_proj),
               ("encoder.spatial", p.encoder.spatial),
               ("encoder.temporal", p.encoder.temporal)]
        out += [(f"encoder.layer{i}", w) for i, w in enumerate(p.encoder.layers)]
        for eps in self.cfg.windows:
            sp = p.scales[eps]
            out += [
                (f"scale{eps}.hyper.factor", sp.hyper.factor),
                (f"scale{eps}.hyper.relations", sp.hyper.relations),
                (f"scale{eps}.inter.pair_left", sp.inter.pair_left),
                (f"scale{eps}.inter.pair_right", sp.inter.pair_right),
                (f"scale{eps}.inter.through", sp.inter.through),
            ]
        out += [("fusion_logits", p.fusion_logits),
                ("readout_w", p.readout_w),
                ("readout_b", p.readout_b)]
        return out

    def swap_parameter(self, name: str, replacement: Tensor) -> Tensor:
        """Replace one parameter tensor object, returning the old one.

        Gradient checking perturbs a fresh tensor and needs the model to
        route its forward pass (and hence its tape gradients) through it.
        """
        p = self.params
        if name == "fusion_logits":
            old, p.fusion_logits = p.fusion_logits, replacement
            return old
        if name == "readout_w":
            old, p.readout_w = p.readout_w, replacement
            return old
        if name == "readout_b":
            old, p.readout_b = p.readout_b, replacement
            return old
        head, _, rest = name.partition(".")
        if head == "encoder":
            if rest.startswith("layer"):
                i = int(rest[len("layer"):])
                old, p.encoder.layers[i] = p.encoder.layers[i], replacement
                return old
            old = getattr(p.encoder, rest)
            setattr(p.encoder, rest, replacement)
            return old
        if head.startswith("scale"):
            eps = int(head[len("scale"):])
            block_name, _, attr = rest.partition(".")
            block = getattr(p.scales[eps], block_name)
            old = getattr(block, attr)
            setattr(block, attr, replacement)
            return old
        raise KeyError(f"unknown parameter {name!r}")

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, tensor in own.items():
            arr = np.asarray(state[name], dtype=tensor.data.dtype)
            if arr.shape != tensor.data.shape:
                raise ValueError(f"{name}: checkpoint shape {arr.shape} vs model {tensor.data.shape}")
            tensor.data = arr.copy()

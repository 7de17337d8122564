"""
Graph encoder.

Raw features are embedded per face and per curve (shared CNNs on the grids,
type-indexed MLP banks on the geometric scalars, a shared MLP on product
attributes), refined by K rounds of gated message passing with edge updates,
and read out as the sum over nodes and layers of a per-layer affine map.

Graphs are processed in canonical order: nodes sorted by face id, edges
sorted by their canonical endpoint indices. Several graphs can be encoded at
once as a disjoint union; the readout then sums per graph.
"""

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from partsim.errors import ConfigError, ContractError, RoutingError
from partsim.features import CURVE_CHANNELS, FACE_CHANNELS, GraphFeatures
from partsim.models import CURVE_KINDS, SURFACE_KINDS
from partsim.nn import ops
from partsim.nn.checkpoint import load_checkpoint, save_checkpoint
from partsim.nn.tensor import Tensor

logger = logging.getLogger(__name__)

GATES = ('sigmoid', 'learned')


@dataclass(frozen=True)
class EncoderConfig:
    node_dim: int = 128
    graph_dim: int = 256
    layers: int = 5
    node_split: tuple = (64, 32, 32)
    edge_split: tuple = (96, 32)
    cnn_channels: tuple = (32, 64)
    kernel_size: int = 3
    geo_hidden: int = 64
    product_hidden: int = 64
    mp_hidden: int = 128
    gate: str = 'sigmoid'
    dropout: float = 0.0
    readout_include_input: bool = False
    face_grid: tuple = (10, 10)
    curve_grid: int = 10
    product_dim: int = 0
    face_geo_dim: int = 1
    curve_geo_dim: int = 1

    def __post_init__(self):
        for name in ('node_split', 'edge_split', 'cnn_channels', 'face_grid'):
            object.__setattr__(self, name, tuple(int(x) for x in getattr(self, name)))

    @property
    def edge_dim(self):
        return sum(self.edge_split)

    def validate(self):
        positive = ('node_dim', 'graph_dim', 'layers', 'kernel_size', 'geo_hidden', 'product_hidden', 'mp_hidden')
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f'encoder {name} must be positive, got {getattr(self, name)}')
        if len(self.node_split) != 3 or sum(self.node_split) != self.node_dim:
            raise ConfigError(f'node split {self.node_split} must have three widths summing to node_dim={self.node_dim}')
        if len(self.edge_split) != 2 or self.edge_dim != self.node_dim:
            raise ConfigError(f'edge split {self.edge_split} must sum to node_dim={self.node_dim} (gated product)')
        if any(w <= 0 for w in self.node_split + self.edge_split + self.cnn_channels):
            raise ConfigError('sub-embedding widths and CNN channels must be positive')
        if self.kernel_size % 2 == 0:
            raise ConfigError(f'kernel size must be odd, got {self.kernel_size}')
        if self.gate not in GATES:
            raise ConfigError(f'gate must be one of {GATES}, got {self.gate!r}')
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f'dropout must lie in [0, 1), got {self.dropout}')
        return self

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f'unknown encoder settings {sorted(unknown)}')
        return cls(**data)

    def check_features(self, gf: GraphFeatures):
        """Feature dims of `gf` must match what the parameters were built for."""
        found = (gf.face_grid_shape, gf.curve_grid_size, gf.face_product.shape[1],
                 gf.face_geo.shape[1], gf.curve_geo.shape[1])
        expected = (tuple(self.face_grid), self.curve_grid, self.product_dim, self.face_geo_dim, self.curve_geo_dim)
        if found != expected:
            raise ConfigError(
                f'{gf.part_id}: feature dims (face grid, curve grid, product, face geo, curve geo) = {found}, '
                f'encoder expects {expected}'
            )


@dataclass(frozen=True, eq=False)
class EncoderParams:
    """All learned tensors, keyed by dotted name, in creation order."""
    config: EncoderConfig
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def __len__(self):
        return len(self.tensors)

    def names(self):
        return list(self.tensors)

    def count(self):
        return int(sum(t.size for t in self.tensors.values()))

    def with_tensors(self, tensors):
        return replace(self, tensors=dict(tensors))

    def arrays(self):
        return {name: t.data for name, t in self.tensors.items()}

    def save(self, path, extra=None):
        return save_checkpoint(path, self.tensors, dict(extra or {}, encoder_config=self.config.to_dict()))

    @classmethod
    def load(cls, path):
        arrays, manifest = load_checkpoint(path)
        if 'encoder_config' not in manifest:
            raise ConfigError(f'{path}: checkpoint carries no encoder config')
        config = EncoderConfig.from_dict(manifest['encoder_config']).validate()
        tensors = {name: Tensor(a, requires_grad=True, name=name) for name, a in arrays.items()}
        return cls(config=config, tensors=tensors), manifest


def _mlp_shapes(prefix, fan_in, hidden, out):
    return [
        (f'{prefix}.l0.weight', (fan_in, hidden), 'relu'),
        (f'{prefix}.l0.bias', (hidden,), None),
        (f'{prefix}.l1.weight', (hidden, out), 'linear'),
        (f'{prefix}.l1.bias', (out,), None),
    ]


def _cnn_shapes(prefix, channels_in, plan, kernel, spatial, out):
    shapes, previous = [], channels_in
    for i, channels in enumerate(plan):
        shapes.append((f'{prefix}.conv{i}.weight', (channels, previous) + (kernel,) * spatial, 'relu'))
        shapes.append((f'{prefix}.conv{i}.bias', (channels,), None))
        previous = channels
    shapes.append((f'{prefix}.dense.weight', (previous, out), 'linear'))
    shapes.append((f'{prefix}.dense.bias', (out,), None))
    return shapes


def parameter_shapes(cfg: EncoderConfig):
    uv_n, geo_n, prod_n = cfg.node_split
    uv_e, geo_e = cfg.edge_split
    d = cfg.node_dim
    shapes = _cnn_shapes('cnn2d', FACE_CHANNELS, cfg.cnn_channels, cfg.kernel_size, 2, uv_n)
    shapes += _cnn_shapes('cnn1d', CURVE_CHANNELS, cfg.cnn_channels, cfg.kernel_size, 1, uv_e)
    for kind in SURFACE_KINDS:
        shapes += _mlp_shapes(f'face_geo.{kind}', cfg.face_geo_dim, cfg.geo_hidden, geo_n)
    for kind in CURVE_KINDS:
        shapes += _mlp_shapes(f'curve_geo.{kind}', cfg.curve_geo_dim, cfg.geo_hidden, geo_e)
    shapes += _mlp_shapes('product', cfg.product_dim, cfg.product_hidden, prod_n)
    for k in range(1, cfg.layers + 1):
        for name in ('f', 'g1', 'g2'):
            shapes += _mlp_shapes(f'layers.{k}.{name}', d, cfg.mp_hidden, d)
        if cfg.gate == 'learned':
            shapes.append((f'layers.{k}.gate.weight', (d, d), 'linear'))
            shapes.append((f'layers.{k}.gate.bias', (d,), None))
    first = 0 if cfg.readout_include_input else 1
    for k in range(first, cfg.layers + 1):
        shapes.append((f'readout.{k}.weight', (d, cfg.graph_dim), 'linear'))
        shapes.append((f'readout.{k}.bias', (cfg.graph_dim,), None))
    return shapes


def init_params(cfg: EncoderConfig, seed: int) -> EncoderParams:
    """He-normal weights for layers feeding a relu, 1/fan_in variance otherwise; zero biases."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape, kind in parameter_shapes(cfg):
        if kind is None:
            value = np.zeros(shape)
        else:
            fan_in = max(1, int(np.prod(shape[1:])) if len(shape) > 2 else shape[0])
            gain = 2.0 if kind == 'relu' else 1.0
            value = rng.standard_normal(shape) * np.sqrt(gain / fan_in)
        tensors[name] = Tensor(value, requires_grad=True, name=name)
    return EncoderParams(config=cfg, tensors=tensors)


# -- batching -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Disjoint union of canonically ordered graphs, channel-first grids."""
    part_ids: tuple
    node_ids: tuple
    face_grids: np.ndarray
    face_types: np.ndarray
    face_geo: np.ndarray
    face_product: np.ndarray
    curve_grids: np.ndarray
    curve_types: np.ndarray
    curve_geo: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    node_graph: np.ndarray

    @property
    def num_nodes(self):
        return len(self.node_ids)

    @property
    def num_edges(self):
        return len(self.src)

    @property
    def num_graphs(self):
        return len(self.part_ids)


def canonical_order(gf: GraphFeatures):
    """(node permutation, edge permutation, src, dst) in canonical order."""
    nodes = gf.graph.nodes
    node_perm = np.array(sorted(range(len(nodes)), key=lambda i: nodes[i]), dtype=np.int64)
    rank = {nodes[i]: r for r, i in enumerate(node_perm)}
    pairs = []
    for j, edge in enumerate(gf.graph.edges):
        a, b = sorted((rank[edge.u], rank[edge.v]))
        pairs.append((a, b, edge.curve_id, j))
    pairs.sort()
    edge_perm = np.array([p[3] for p in pairs], dtype=np.int64)
    src = np.array([p[0] for p in pairs], dtype=np.int64)
    dst = np.array([p[1] for p in pairs], dtype=np.int64)
    return node_perm, edge_perm, src, dst


def prepare(graphs, cfg: EncoderConfig = None) -> GraphBatch:
    """Stack one or more GraphFeatures into a canonical disjoint-union batch."""
    if isinstance(graphs, GraphFeatures):
        graphs = [graphs]
    if not graphs:
        raise ContractError('cannot prepare an empty batch')
    parts = {name: [] for name in ('node_ids', 'face_grids', 'face_types', 'face_geo', 'face_product',
                                   'curve_grids', 'curve_types', 'curve_geo', 'src', 'dst', 'node_graph')}
    offset = 0
    for index, gf in enumerate(graphs):
        if not gf.graph.nodes:
            raise ContractError(f'{gf.part_id}: graph has no nodes')
        if cfg is not None:
            cfg.check_features(gf)
        node_perm, edge_perm, src, dst = canonical_order(gf)
        parts['node_ids'].extend(gf.graph.nodes[i] for i in node_perm)
        parts['face_grids'].append(np.transpose(gf.face_grids[node_perm], (0, 3, 1, 2)))
        parts['face_types'].append(gf.face_types[node_perm])
        parts['face_geo'].append(gf.face_geo[node_perm])
        parts['face_product'].append(gf.face_product[node_perm])
        parts['curve_grids'].append(np.transpose(gf.curve_grids[edge_perm], (0, 2, 1)))
        parts['curve_types'].append(gf.curve_types[edge_perm])
        parts['curve_geo'].append(gf.curve_geo[edge_perm])
        parts['src'].append(src + offset)
        parts['dst'].append(dst + offset)
        parts['node_graph'].append(np.full(len(node_perm), index, dtype=np.int64))
        offset += len(node_perm)
    stacked = {k: np.concatenate(v, axis=0) for k, v in parts.items() if k != 'node_ids'}
    return GraphBatch(part_ids=tuple(gf.part_id for gf in graphs), node_ids=tuple(parts['node_ids']), **stacked)


# -- forward ------------------------------------------------------------------

def _affine(params, prefix, x):
    return ops.add(ops.matmul(x, params[f'{prefix}.weight']), params[f'{prefix}.bias'])


def mlp(params, prefix, x, dropout=0.0, rng=None):
    """Two-layer MLP: relu hidden layer, linear output."""
    hidden = ops.relu(_affine(params, f'{prefix}.l0', x))
    return _affine(params, f'{prefix}.l1', ops.dropout(hidden, dropout, rng))


def _cnn(params, prefix, x, layers, conv, pool):
    h = x
    for i in range(layers):
        h = ops.relu(conv(h, params[f'{prefix}.conv{i}.weight'], params[f'{prefix}.conv{i}.bias']))
    pooled = ops.reshape(pool(h, 1), (h.shape[0], h.shape[1]))
    return _affine(params, f'{prefix}.dense', pooled)


def _routed(params, prefix, kinds, types, x, dropout, rng):
    """Apply the bank member of each row's type; rows keep their order."""
    if np.any((types < 0) | (types >= len(kinds))):
        bad = sorted(set(int(t) for t in types if not 0 <= t < len(kinds)))
        raise RoutingError(f'{prefix}: type indices {bad} have no bank member')
    order, outputs = [], []
    for index, kind in enumerate(kinds):
        rows = np.flatnonzero(types == index)
        if rows.size == 0:
            continue
        if f'{prefix}.{kind}.l0.weight' not in params:
            raise RoutingError(f'{prefix}: no parameters for type {kind!r}')
        outputs.append(mlp(params, f'{prefix}.{kind}', ops.take(x, rows), dropout, rng))
        order.append(rows)
    combined = ops.concat(outputs, axis=0) if len(outputs) > 1 else outputs[0]
    return ops.take(combined, np.argsort(np.concatenate(order), kind='stable'))


def _zeros(rows, width):
    return Tensor(np.zeros((rows, width)))


def embed_inputs(batch: GraphBatch, params: EncoderParams, rng=None):
    """Node embeddings [|V| x D_n] and edge embeddings [|E| x D_e]."""
    cfg = params.config
    depth = len(cfg.cnn_channels)
    p = cfg.dropout if rng is not None else 0.0
    uv = _cnn(params, 'cnn2d', Tensor(batch.face_grids), depth, ops.conv2d, ops.adaptive_avg_pool2d)
    geo = _routed(params, 'face_geo', SURFACE_KINDS, batch.face_types, Tensor(batch.face_geo), p, rng)
    product = mlp(params, 'product', Tensor(batch.face_product), p, rng)
    nodes = ops.concat([uv, geo, product], axis=1)
    if batch.num_edges == 0:
        return nodes, _zeros(0, cfg.edge_dim)
    uv_e = _cnn(params, 'cnn1d', Tensor(batch.curve_grids), depth, ops.conv1d, ops.adaptive_avg_pool1d)
    geo_e = _routed(params, 'curve_geo', CURVE_KINDS, batch.curve_types, Tensor(batch.curve_geo), p, rng)
    return nodes, ops.concat([uv_e, geo_e], axis=1)


def message_passing_layer(h, e, batch: GraphBatch, params: EncoderParams, k: int, rng=None):
    """One round: gated neighbour sum into f, endpoint sum into the edge update."""
    cfg = params.config
    p = cfg.dropout if rng is not None else 0.0
    prefix = f'layers.{k}'
    if batch.num_edges == 0:
        return mlp(params, f'{prefix}.f', h, p, rng), e
    if cfg.gate == 'learned':
        gate = ops.sigmoid(_affine(params, f'{prefix}.gate', e))
    else:
        gate = ops.sigmoid(e)
    h_src, h_dst = ops.take(h, batch.src), ops.take(h, batch.dst)
    messages = ops.concat([ops.mul(gate, h_src), ops.mul(gate, h_dst)], axis=0)
    targets = np.concatenate([batch.dst, batch.src])
    aggregated = ops.segment_sum(messages, targets, batch.num_nodes)
    h_next = mlp(params, f'{prefix}.f', ops.add(h, aggregated), p, rng)
    e_next = mlp(params, f'{prefix}.g1', ops.add(e, mlp(params, f'{prefix}.g2', ops.add(h_src, h_dst), p, rng)), p, rng)
    return h_next, e_next


def readout(states, batch: GraphBatch, params: EncoderParams):
    """z_g = sum over nodes of g and layers k of (h_v^k W^k + b^k)."""
    cfg = params.config
    first = 0 if cfg.readout_include_input else 1
    if batch.num_nodes == 0:
        raise ContractError('readout of an empty graph')
    if len(states) != cfg.layers + 1:
        raise ContractError(f'readout needs {cfg.layers + 1} node states, got {len(states)}')
    total = None
    for k in range(first, cfg.layers + 1):
        per_node = _affine(params, f'readout.{k}', states[k])
        per_graph = ops.segment_sum(per_node, batch.node_graph, batch.num_graphs)
        total = per_graph if total is None else ops.add(total, per_graph)
    return total


def run(batch: GraphBatch, params: EncoderParams, rng=None):
    """Node states h^0..h^K and the graph embeddings tensor [G x D_g]."""
    h, e = embed_inputs(batch, params, rng)
    states = [h]
    for k in range(1, params.config.layers + 1):
        h, e = message_passing_layer(h, e, batch, params, k, rng)
        states.append(h)
    return states, readout(states, batch, params)


def encode_many(graphs, params: EncoderParams, rng=None):
    """Embeddings tensor [G x D_g] for a list of GraphFeatures (differentiable)."""
    batch = prepare(graphs, params.config)
    _, z = run(batch, params, rng)
    return z


def encode_tensor(gf: GraphFeatures, params: EncoderParams, rng=None):
    return ops.reshape(encode_many([gf], params, rng), (params.config.graph_dim,))


def encode(gf: GraphFeatures, params: EncoderParams) -> np.ndarray:
    """Inference embedding z of one part (no dropout)."""
    return encode_tensor(gf, params).numpy()


def trace(gf: GraphFeatures, params: EncoderParams):
    """Per-layer node states of one graph: (node ids in canonical order, [h^0..h^K] arrays)."""
    batch = prepare([gf], params.config)
    states, _ = run(batch, params)
    return batch.node_ids, [s.numpy() for s in states]

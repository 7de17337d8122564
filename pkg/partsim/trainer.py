"""
Contrastive training.

Each batch of N graphs yields 2N augmented views; the encoder embeds all of
them in one disjoint-union pass and NT-Xent pulls the two views of a part
together against the other parts of the batch.
"""

import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from tqdm import tqdm

from partsim.augment import AugmentConfig, augment_pair, write_audit
from partsim.encoder import EncoderConfig, EncoderParams, encode, encode_many, init_params
from partsim.errors import ConfigError, ContractError, NonFiniteLossError
from partsim.nn import ops
from partsim.nn.optim import AdamState, adam_step
from partsim.nn.tensor import Tape, Tensor, as_tensor
from partsim.partio import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

TEMPERATURES = (0.5, 1.0, 2.0)
LEARNING_RATES = (0.005, 0.001, 0.0005)
RATIOS = (0.0, 0.1, 0.2)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    temperature: float = 1.0
    lr: float = 0.001
    min_epochs: int = 20
    max_epochs: int = 50
    patience: int = 10
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    symmetric: bool = True
    include_positive: bool = False
    seed: int = 0

    def validate(self):
        if self.batch_size < 2:
            raise ConfigError(f'batch size must be >= 2 (NT-Xent needs a negative), got {self.batch_size}')
        if not self.temperature > 0:
            raise ConfigError(f'temperature must be > 0, got {self.temperature}')
        if not self.lr > 0:
            raise ConfigError(f'learning rate must be > 0, got {self.lr}')
        if self.max_epochs < 1 or self.min_epochs < 0 or self.patience < 1:
            raise ConfigError('max_epochs and patience must be >= 1, min_epochs >= 0')
        self.augment.validate()
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        augment = AugmentConfig(**data.pop('augment', {}))
        try:
            return cls(augment=augment, **data)
        except TypeError as e:
            raise ConfigError(f'invalid train config: {e}')


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    batches: int
    improved: bool
    checkpoint: str = None
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_loss: float = math.inf
    stopped_early: bool = False
    checkpoint_hash: str = None

    def losses(self):
        return [e.mean_loss for e in self.epochs]

    def rows(self):
        return [asdict(e) for e in self.epochs]


def load_history(path):
    history = TrainHistory()
    for _, row in read_jsonl(path):
        record = EpochRecord(**row)
        history.epochs.append(record)
        if record.improved:
            history.best_epoch, history.best_loss = record.epoch, record.mean_loss
    return history


def nt_xent_terms(z1, z2, temperature, include_positive=False):
    """Per-row loss l_n = -S_nn + log sum_{n' != n} exp(S_nn'), S = cos(z1, z2) / tau.

    The positive pair is excluded from the denominator unless
    `include_positive` is set, so l_n can be negative.
    """
    z1, z2 = as_tensor(z1), as_tensor(z2)
    if z1.shape != z2.shape or z1.ndim != 2:
        raise ContractError(f'NT-Xent needs two [N x D] views of equal shape, got {z1.shape} and {z2.shape}')
    n = z1.shape[0]
    if n < 2:
        raise ContractError(f'NT-Xent needs N >= 2, got {n}')
    sim = ops.scale(ops.cosine_similarity(z1, z2), 1.0 / temperature)
    eye = np.eye(n, dtype=sim.dtype)
    positive = ops.sum(ops.mul(sim, Tensor(eye, dtype=sim.dtype)), axis=1)
    weights = np.ones((n, n), dtype=sim.dtype) if include_positive else 1.0 - eye
    denominator = ops.sum(ops.mul(ops.exp(sim), Tensor(weights, dtype=sim.dtype)), axis=1)
    return ops.sub(ops.log(denominator), positive)


def nt_xent_loss(z1, z2, temperature, symmetric=True, include_positive=False):
    """Mean NT-Xent over the batch; symmetric averages both view orders."""
    loss = ops.mean(nt_xent_terms(z1, z2, temperature, include_positive))
    if symmetric:
        swapped = ops.mean(nt_xent_terms(z2, z1, temperature, include_positive))
        loss = ops.scale(ops.add(loss, swapped), 0.5)
    return loss


def dataset_encoder_config(base: EncoderConfig, dataset):
    """`base` with the feature dims of `dataset` filled in."""
    first = dataset[0]
    return replace(
        base,
        face_grid=first.face_grid_shape,
        curve_grid=first.curve_grid_size,
        product_dim=int(first.face_product.shape[1]),
        face_geo_dim=int(first.face_geo.shape[1]),
        curve_geo_dim=int(first.curve_geo.shape[1]),
    )


def batches_for_epoch(count, batch_size, seed, epoch):
    """Shuffled index batches; a final batch with fewer than 2 graphs is dropped."""
    order = np.random.default_rng([seed, epoch]).permutation(count)
    batches = [order[i:i + batch_size] for i in range(0, count, batch_size)]
    if batches and len(batches[-1]) < 2:
        batches.pop()
    return batches


def train_step(params: EncoderParams, state: AdamState, graphs, cfg: TrainConfig, epoch, batch_index, records=None):
    """Forward, loss, gradients and one Adam step on a batch of graphs."""
    views1, views2 = [], []
    for gf in graphs:
        v1, v2 = augment_pair(gf, cfg.augment, epoch, records)
        views1.append(v1)
        views2.append(v2)
    dropout_rng = np.random.default_rng([cfg.seed, epoch, batch_index]) if params.config.dropout > 0 else None
    n = len(graphs)
    with Tape() as tape:
        z = encode_many(views1 + views2, params, dropout_rng)
        loss = nt_xent_loss(ops.take(z, np.arange(n)), ops.take(z, np.arange(n, 2 * n)),
                            cfg.temperature, cfg.symmetric, cfg.include_positive)
    value = loss.item()
    if not math.isfinite(value):
        return params, state, value
    names = params.names()
    grads = tape.gradient(loss, [params[name] for name in names])
    new_tensors, state = adam_step(params.tensors, dict(zip(names, grads)), state)
    return params.with_tensors(new_tensors), state, value


def train(dataset, cfg: TrainConfig, encoder_cfg: EncoderConfig = None, checkpoint_path=None,
          history_path=None, audit_path=None, extra=None, progress=False):
    """Train an encoder from scratch; returns (best params, TrainHistory).

    Stops after `patience` epochs without a lower mean loss, never before
    `min_epochs`. The best parameters are checkpointed whenever they improve.
    """
    cfg.validate()
    if len(dataset) < 2:
        raise ContractError(f'training needs at least 2 graphs, got {len(dataset)}')
    encoder_cfg = dataset_encoder_config(encoder_cfg or EncoderConfig(), dataset)
    params = init_params(encoder_cfg, cfg.seed)
    state = AdamState(lr=cfg.lr)
    history = TrainHistory()
    best = params
    trace = []
    stale = 0
    records = [] if audit_path else None
    logger.info(f'training on {len(dataset)} graphs, {params.count()} parameters, '
                f'N={cfg.batch_size} tau={cfg.temperature} lr={cfg.lr} '
                f'alpha={cfg.augment.alpha} beta={cfg.augment.beta} scheme={cfg.augment.scheme}')
    epochs = range(1, cfg.max_epochs + 1)
    for epoch in (tqdm(epochs, desc='epochs', leave=False) if progress else epochs):
        started = time.perf_counter()
        losses = []
        for batch_index, rows in enumerate(batches_for_epoch(len(dataset), cfg.batch_size, cfg.seed, epoch)):
            graphs = [dataset[i] for i in rows]
            params, state, value = train_step(params, state, graphs, cfg, epoch, batch_index, records)
            trace.append(value)
            if not math.isfinite(value):
                logger.error(f'non-finite loss at epoch {epoch}, batch {batch_index}')
                raise NonFiniteLossError(epoch, [g.part_id for g in graphs], trace)
            losses.append(value)
        mean_loss = float(np.mean(losses))
        improved = mean_loss < history.best_loss
        record = EpochRecord(epoch=epoch, mean_loss=mean_loss, batches=len(losses), improved=improved,
                             wall_time=time.perf_counter() - started)
        if improved:
            best, stale = params, 0
            history.best_epoch, history.best_loss = epoch, mean_loss
            if checkpoint_path:
                history.checkpoint_hash = best.save(checkpoint_path, dict(extra or {}, epoch=epoch, loss=mean_loss))
                record.checkpoint = str(checkpoint_path)
        else:
            stale += 1
        history.epochs.append(record)
        logger.info(f'epoch {epoch}: mean loss {mean_loss:.6f}{" (best)" if improved else ""}')
        if history_path:
            write_jsonl(history_path, history.rows())
        if stale >= cfg.patience and epoch >= cfg.min_epochs:
            history.stopped_early = epoch < cfg.max_epochs
            logger.info(f'early stop after epoch {epoch}: no improvement for {stale} epochs')
            break
    if records is not None:
        write_audit(audit_path, records)
    return best, history


def grid_search(dataset, cfg: TrainConfig, encoder_cfg: EncoderConfig = None, lrs=LEARNING_RATES,
                temperatures=TEMPERATURES, alphas=RATIOS, betas=RATIOS):
    """Train once per (lr, tau, alpha, beta); best by final training loss.

    Returns (best TrainConfig, list of result rows sorted by final loss).
    """
    results = []
    for lr, tau, alpha, beta in itertools.product(lrs, temperatures, alphas, betas):
        trial = replace(cfg, lr=lr, temperature=tau, augment=replace(cfg.augment, alpha=alpha, beta=beta))
        _, history = train(dataset, trial, encoder_cfg)
        results.append({
            'lr': lr, 'temperature': tau, 'alpha': alpha, 'beta': beta,
            'final_loss': history.epochs[-1].mean_loss, 'best_loss': history.best_loss,
            'epochs': len(history.epochs),
        })
        logger.info(f'sweep lr={lr} tau={tau} alpha={alpha} beta={beta}: final loss {results[-1]["final_loss"]:.6f}')
    results.sort(key=lambda r: (r['final_loss'], r['lr'], r['temperature'], r['alpha'], r['beta']))
    best = results[0]
    best_cfg = replace(cfg, lr=best['lr'], temperature=best['temperature'],
                       augment=replace(cfg.augment, alpha=best['alpha'], beta=best['beta']))
    return best_cfg, results


def embed_dataset(params: EncoderParams, dataset, progress=False):
    """part id -> embedding, one unaugmented forward pass per part."""
    embeddings = {}
    for gf in (tqdm(dataset, desc='embedding', leave=False) if progress else dataset):
        params.config.check_features(gf)
        if gf.part_id in embeddings:
            raise ContractError(f'duplicate part id {gf.part_id} in dataset')
        embeddings[gf.part_id] = encode(gf, params)
    return embeddings

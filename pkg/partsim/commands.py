"""
Command-line interface for the partsim pipeline.

generate -> convert -> train -> embed -> query / eval / assembly, plus sweep
and describe. Contract errors exit with 2, storage errors with 3.
"""

import functools
import logging
import sys
from pathlib import Path

import click
from flask import current_app
from flask.cli import AppGroup, ScriptInfo
import numpy as np
import yaml
from tqdm import tqdm

from partsim import __version__, create_app
from partsim.augment import SCHEMES
from partsim.encoder import GATES, EncoderParams, encode, init_params
from partsim.errors import ContractError, FormatError, QueryError, SpecError, StorageError
from partsim.families import FamilySpec, default_families, generate_dataset
from partsim.features import AttrSchema, featurize
from partsim.graphcache import MAGIC as CACHE_MAGIC, read_graph_cache, write_graph_cache
from partsim.metrics import DEFAULT_DEPTH, evaluate, graded_labels, sample_queries
from partsim.nn.checkpoint import MAGIC as CHECKPOINT_MAGIC, load_checkpoint
from partsim.partio import file_digest, json_digest, read_bytes, read_json, read_parts, write_json, write_parts
from partsim.retrieval import (MAGIC as INDEX_MAGIC, METRICS, assembly_query, build_index, load_assemblies,
                               load_index, query, save_index)
from partsim.runconfig import load_run_config
from partsim.trainer import (LEARNING_RATES, RATIOS, TEMPERATURES, dataset_encoder_config, embed_dataset,
                             grid_search, train)

logger = logging.getLogger(__name__)


def _fail(error, code):
    click.echo(click.style(f'❌ Error: {error}', fg='red'), err=True)
    sys.exit(code)


def handle_errors(func):
    """Map package errors to exit codes: contract -> 2, storage -> 3."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ContractError as e:
            logger.error(str(e))
            _fail(e, 2)
        except (StorageError, OSError) as e:
            logger.error(str(e))
            _fail(e, 3)
    return wrapper


def _success(message):
    click.echo(click.style(f'✅ {message}', fg='green'))


def _progress():
    return bool(current_app.config.get('PROGRESS'))


def _parse_grid(value):
    if value is None:
        return None
    try:
        sizes = tuple(int(x) for x in value.lower().replace('x', ',').split(','))
    except ValueError:
        raise click.BadParameter(f'expected GUxGV, got {value!r}')
    if len(sizes) != 2:
        raise click.BadParameter(f'expected GUxGV, got {value!r}')
    return sizes


@click.group(cls=AppGroup)
@click.version_option(__version__, prog_name='partsim')
@click.option('--env', envvar='PARTSIM_ENV', default='default', show_default=True,
              help='Configuration name (development, production, testing).')
@click.pass_context
def cli(ctx, env):
    """Self-supervised part similarity: data, training and retrieval."""
    # under `flask` or a test runner the script info is already in place
    if not isinstance(ctx.obj, ScriptInfo):
        try:
            app = create_app(env)
        except ContractError as e:
            _fail(e, 2)
        ctx.obj = ScriptInfo(create_app=lambda: app, set_debug_flag=False)


# -- data ---------------------------------------------------------------------

def _load_families(path):
    if path is None:
        return default_families()
    try:
        data = yaml.safe_load(read_bytes(path).decode('utf-8'))
    except yaml.YAMLError as e:
        raise FormatError(path, f'invalid family file: {e}')
    if isinstance(data, dict):
        data = data.get('families')
    if not isinstance(data, list) or not data:
        raise SpecError(f'{path}: expected a non-empty list of family specs')
    return [FamilySpec.from_dict(row).validate() for row in data]


@cli.command('generate')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False),
              help='Directory for parts.jsonl, labels.json, schema.json and manifest.json.')
@click.option('--count', default=20, show_default=True, type=click.IntRange(min=1), help='Parts per family.')
@click.option('--seed', type=int, default=None, help='Generator seed (default: PARTSIM_SEED).')
@click.option('--families', 'families_path', type=click.Path(dir_okay=False),
              help='YAML or JSON list of family specs (default: built-in families).')
@click.option('--fraction', default=1.0, show_default=True, type=click.FloatRange(0.0, 1.0, min_open=True),
              help='Keep a seeded random subset of the generated parts.')
@handle_errors
def generate_command(out_dir, count, seed, families_path, fraction):
    """Generate a synthetic part dataset with family labels."""
    seed = current_app.config['SEED'] if seed is None else seed
    specs = _load_families(families_path)
    parts, labels = generate_dataset(specs, count, seed)
    if fraction < 1.0:
        keep = max(1, int(round(fraction * len(parts))))
        rows = sorted(np.random.default_rng([seed, len(parts)]).choice(len(parts), size=keep, replace=False))
        parts = [parts[i] for i in rows]
        labels = {part.id: labels[part.id] for part in parts}
    schema = AttrSchema.fit(parts)

    out = Path(out_dir)
    write_parts(out / 'parts.jsonl', parts)
    write_json(out / 'labels.json', labels)
    schema.save(out / 'schema.json')
    settings = {'families': [spec.to_dict() for spec in specs], 'count': count, 'fraction': fraction, 'seed': seed}
    write_json(out / 'manifest.json', {
        'seed': seed,
        'config_hash': json_digest(settings),
        'count': count,
        'fraction': fraction,
        'families': [spec.name for spec in specs],
        'parts': len(parts),
    })
    _success(f'Generated {len(parts)} parts in {len(specs)} families -> {out}')


@cli.command('convert')
@click.argument('parts_path', type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False), help='Graph cache to write.')
@click.option('--schema', 'schema_path', type=click.Path(dir_okay=False),
              help='Attribute schema JSON (default: fitted to the parts file).')
@click.option('--report', 'report_path', type=click.Path(dir_okay=False),
              help='Conversion report JSON (default: <out>.report.json).')
@click.option('--face-grid', help='UV grid size as GUxGV (default: PARTSIM_FACE_GRID).')
@click.option('--curve-grid', type=click.IntRange(min=2), help='Curve grid size (default: PARTSIM_CURVE_GRID).')
@handle_errors
def convert_command(parts_path, out_path, schema_path, report_path, face_grid, curve_grid):
    """Convert a parts file to a binary graph cache with raw features."""
    face_grid = _parse_grid(face_grid) or tuple(current_app.config['FACE_GRID'])
    curve_grid = curve_grid or current_app.config['CURVE_GRID']
    parts = read_parts(parts_path)
    schema = AttrSchema.load(schema_path) if schema_path else AttrSchema.fit(parts)

    records, reports = [], []
    for part in (tqdm(parts, desc='converting', leave=False) if _progress() else parts):
        features, report = featurize(part, schema, face_grid, curve_grid)
        records.append(features)
        reports.append(report)

    settings = {'face_grid': list(face_grid), 'curve_grid': curve_grid, 'schema': schema.to_dict()}
    meta = dict(settings, product_layout=[list(block) for block in schema.layout],
                seed=current_app.config['SEED'], config_hash=json_digest(settings), source=file_digest(parts_path))
    write_graph_cache(out_path, records, meta)
    skipped = sum(r.skipped for r in reports)
    write_json(report_path or f'{out_path}.report.json', {
        'config_hash': meta['config_hash'],
        'seed': meta['seed'],
        'parts': [r.to_dict() for r in reports],
        'totals': {
            'parts': len(reports),
            'nodes': sum(r.nodes for r in reports),
            'edges': sum(r.edges for r in reports),
            'skipped_curves': skipped,
            'duplicate_edges': sum(len(r.duplicate_edges) for r in reports),
        },
    })
    logger.info(f'converted {len(records)} parts from {parts_path} into {out_path}')
    _success(f'Converted {len(records)} parts ({skipped} curves skipped) -> {out_path}')


# -- training -----------------------------------------------------------------

def _training_options(func):
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='YAML or JSON run config.'),
        click.option('--seed', type=int, help='Seed for initialisation, batching and augmentation.'),
        click.option('--batch-size', type=click.IntRange(min=2), help='Parts per batch (N).'),
        click.option('--temperature', type=float, help='NT-Xent temperature.'),
        click.option('--lr', type=float, help='Adam learning rate.'),
        click.option('--min-epochs', type=click.IntRange(min=0), help='Epochs before early stopping may trigger.'),
        click.option('--max-epochs', type=click.IntRange(min=1), help='Epoch limit.'),
        click.option('--patience', type=click.IntRange(min=1), help='Epochs without improvement before stopping.'),
        click.option('--alpha', type=float, help='Feature mask ratio in [0, 0.2].'),
        click.option('--beta', type=float, help='Structure drop ratio in [0, 0.2].'),
        click.option('--scheme', type=click.Choice(SCHEMES), help='Structure drop scheme.'),
        click.option('--layers', type=click.IntRange(min=1), help='Message-passing layers (K).'),
        click.option('--gate', type=click.Choice(GATES), help='Edge gate: plain sigmoid or learned affine.'),
        click.option('--dropout', type=float, help='Dropout on hidden MLP layers during training.'),
        click.option('--include-positive/--exclude-positive', default=None,
                     help='Keep the positive pair in the NT-Xent denominator.'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _run_config(config_path, **flags):
    return load_run_config(config_path, current_app.config, **flags)


@cli.command('train')
@click.argument('cache_path', type=click.Path(dir_okay=False))
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False),
              help='Directory for checkpoint.psck, history.jsonl and run.json.')
@click.option('--audit/--no-audit', default=False, help='Write the augmentation audit log.')
@_training_options
@handle_errors
def train_command(cache_path, out_dir, audit, config_path, **flags):
    """Train the encoder contrastively on a graph cache."""
    run = _run_config(config_path, **flags)
    _, dataset = read_graph_cache(cache_path)
    out = Path(out_dir)
    write_json(out / 'run.json', dict(run.to_dict(), config_hash=run.config_hash))
    _, history = train(
        dataset, run.train, run.encoder,
        checkpoint_path=out / 'checkpoint.psck',
        history_path=out / 'history.jsonl',
        audit_path=out / 'audit.jsonl' if audit else None,
        extra=run.stamp(cache=file_digest(cache_path)),
        progress=_progress(),
    )
    note = ' (early stop)' if history.stopped_early else ''
    _success(f'Trained {len(history.epochs)} epochs{note}; best loss {history.best_loss:.6f} '
             f'at epoch {history.best_epoch}')
    click.echo(f'   Checkpoint: {out / "checkpoint.psck"} (sha256 {history.checkpoint_hash})')


@cli.command('sweep')
@click.argument('cache_path', type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False), help='Results JSON.')
@click.option('--grid-lr', 'lrs', multiple=True, type=float, help='Learning rates to try (repeatable).')
@click.option('--grid-temperature', 'temperatures', multiple=True, type=float, help='Temperatures to try.')
@click.option('--grid-alpha', 'alphas', multiple=True, type=float, help='Feature mask ratios to try.')
@click.option('--grid-beta', 'betas', multiple=True, type=float, help='Structure drop ratios to try.')
@_training_options
@handle_errors
def sweep_command(cache_path, out_path, lrs, temperatures, alphas, betas, config_path, **flags):
    """Grid search over lr, temperature, alpha and beta by final training loss."""
    run = _run_config(config_path, **flags)
    _, dataset = read_graph_cache(cache_path)
    best, results = grid_search(
        dataset, run.train, run.encoder,
        lrs=lrs or LEARNING_RATES,
        temperatures=temperatures or TEMPERATURES,
        alphas=alphas or RATIOS,
        betas=betas or RATIOS,
    )
    write_json(out_path, run.stamp(best=best.to_dict(), results=results))
    _success(f'Swept {len(results)} settings; best lr={best.lr} tau={best.temperature} '
             f'alpha={best.augment.alpha} beta={best.augment.beta}')


# -- retrieval ----------------------------------------------------------------

@cli.command('embed')
@click.argument('cache_path', type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False), help='Index file to write.')
@click.option('--checkpoint', 'checkpoint_path', type=click.Path(dir_okay=False), help='Trained checkpoint.')
@click.option('--untrained', is_flag=True, help='Embed with freshly initialised parameters (baseline).')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Run config for --untrained.')
@click.option('--seed', type=int, help='Initialisation seed for --untrained.')
@handle_errors
def embed_command(cache_path, out_path, checkpoint_path, untrained, config_path, seed):
    """Embed every graph of a cache and write the retrieval index."""
    if bool(checkpoint_path) == untrained:
        raise click.UsageError('pass exactly one of --checkpoint and --untrained')
    _, dataset = read_graph_cache(cache_path)
    if untrained:
        run = _run_config(config_path, seed=seed)
        params = init_params(dataset_encoder_config(run.encoder, dataset).validate(), run.seed)
        meta = run.stamp(untrained=True)
    else:
        params, manifest = EncoderParams.load(checkpoint_path)
        meta = {'seed': manifest.get('seed'), 'config_hash': manifest.get('config_hash'),
                'checkpoint': manifest['sha256'], 'untrained': False}
    embeddings = embed_dataset(params, dataset, progress=_progress())
    index = build_index(embeddings, meta=dict(meta, cache=file_digest(cache_path)))
    save_index(out_path, index)
    _success(f'Embedded {len(index)} parts (D={index.dim}) -> {out_path}')


def _query_vector(index, part_id, part_file, checkpoint_path, schema_path):
    if part_file is None:
        return index.vector(part_id), part_id
    if not checkpoint_path or not schema_path:
        raise click.UsageError('--part-file needs --checkpoint and --schema')
    parts = read_parts(part_file)
    if part_id is not None:
        parts = [p for p in parts if p.id == part_id]
    if len(parts) != 1:
        raise QueryError(f'{part_file}: expected exactly one query part, found {len(parts)}')
    params, _ = EncoderParams.load(checkpoint_path)
    cfg = params.config
    features, _ = featurize(parts[0], AttrSchema.load(schema_path), cfg.face_grid, cfg.curve_grid)
    cfg.check_features(features)
    return encode(features, params), parts[0].id


@cli.command('query')
@click.argument('index_path', type=click.Path(dir_okay=False))
@click.option('--part', 'part_id', help='Id of the query part (in the index, or in --part-file).')
@click.option('--part-file', type=click.Path(dir_okay=False), help='Parts JSONL holding an unseen query part.')
@click.option('--checkpoint', 'checkpoint_path', type=click.Path(dir_okay=False), help='Checkpoint for --part-file.')
@click.option('--schema', 'schema_path', type=click.Path(dir_okay=False), help='Attribute schema for --part-file.')
@click.option('-k', '--k', 'k', default=10, show_default=True, type=int, help='Number of results.')
@click.option('--metric', type=click.Choice(METRICS), default='cosine', show_default=True)
@handle_errors
def query_command(index_path, part_id, part_file, checkpoint_path, schema_path, k, metric):
    """Print the k parts most similar to a query part."""
    if part_id is None and part_file is None:
        raise click.UsageError('pass --part or --part-file')
    index = load_index(index_path)
    vector, query_id = _query_vector(index, part_id, part_file, checkpoint_path, schema_path)
    available = len(index) - (1 if query_id in index else 0)
    if available < 1:
        raise QueryError('the index holds no candidates besides the query part')
    if k > available:
        logger.warning(f'k={k} exceeds the {available} candidates; clamped')
        click.echo(click.style(f'k={k} exceeds the {available} candidates; using k={available}', fg='yellow'), err=True)
        k = available
    result = query(index, vector, k, exclude_id=query_id, metric=metric)
    click.echo(f'{"rank":>4}  {"part":<32} {"score":>10}')
    for rank, (candidate, score) in enumerate(result.items, start=1):
        click.echo(f'{rank:>4}  {candidate:<32} {score:>10.6f}')


@cli.command('eval')
@click.argument('index_path', type=click.Path(dir_okay=False))
@click.option('--labels', 'labels_path', required=True, type=click.Path(dir_okay=False),
              help='Family labels {part: family} or graded labels {query: {candidate: 0|1|2}}.')
@click.option('-k', '--k', 'ks', multiple=True, type=click.IntRange(min=1), help='Cut-offs (default: 5 and 10).')
@click.option('--queries', 'query_count', type=click.IntRange(min=1), help='Sample this many queries.')
@click.option('--seed', type=int, help='Query sampling seed (default: PARTSIM_SEED).')
@click.option('--depth', default=DEFAULT_DEPTH, show_default=True, type=click.IntRange(min=1),
              help='Retrieved list length per query.')
@click.option('--metric', type=click.Choice(METRICS), default='cosine', show_default=True)
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), help='Write the metrics report JSON here.')
@handle_errors
def eval_command(index_path, labels_path, ks, query_count, seed, depth, metric, out_path):
    """Recall@K and NDCG@K of the index against relevance labels."""
    seed = current_app.config['SEED'] if seed is None else seed
    ks = tuple(sorted(set(ks))) or (5, 10)
    index = load_index(index_path)
    labels = graded_labels(read_json(labels_path), index.ids)
    candidates = [q for q in index.ids if q in labels]
    queries = sample_queries(candidates, query_count, seed)
    report = evaluate(index, labels, ks=ks, queries=queries, depth=depth, metric=metric)
    report.update(seed=seed, index_seed=index.meta.get('seed'), config_hash=index.meta.get('config_hash'))
    if out_path:
        write_json(out_path, report)
    _success(f'Evaluated {report["queries"]} queries')
    for name, value in report['mean'].items():
        click.echo(f'   {name}: {value:.6f}')


@cli.command('assembly')
@click.argument('index_path', type=click.Path(dir_okay=False))
@click.option('--assemblies', 'assemblies_path', required=True, type=click.Path(dir_okay=False),
              help='Memberships JSON: {assembly: [part ids]} or [{"id", "parts"}].')
@click.option('--query', 'query_assembly', required=True, help='Id of the query assembly.')
@click.option('--k-parts', default=10, show_default=True, type=click.IntRange(min=1),
              help='Parts retrieved per query member.')
@click.option('--k-out', default=10, show_default=True, type=click.IntRange(min=1), help='Assemblies returned.')
@click.option('--metric', type=click.Choice(METRICS), default='cosine', show_default=True)
@handle_errors
def assembly_command(index_path, assemblies_path, query_assembly, k_parts, k_out, metric):
    """Rank assemblies by part-level retrieval votes."""
    index = load_index(index_path)
    memberships = load_assemblies(assemblies_path)
    by_id = {record.id: record for record in memberships}
    if query_assembly not in by_id:
        raise QueryError(f'assembly {query_assembly} is not in {assemblies_path}')
    ranked = assembly_query(by_id[query_assembly], index, memberships, k_parts, k_out, metric=metric)
    click.echo(f'{"rank":>4}  {"assembly":<32} {"votes":>6}')
    for rank, (assembly_id, votes) in enumerate(ranked, start=1):
        click.echo(f'{rank:>4}  {assembly_id:<32} {votes:>6}')


@cli.command('describe')
@click.argument('path', type=click.Path(dir_okay=False))
@handle_errors
def describe_command(path):
    """Print the header of a graph cache, checkpoint or index file."""
    magic = read_bytes(path)[:4]
    if magic == CACHE_MAGIC:
        meta, records = read_graph_cache(path)
        header = {k: v for k, v in meta.items() if k not in ('schema', 'product_layout')}
        header.update(kind='graph cache', nodes=sum(len(r.graph.nodes) for r in records),
                      edges=sum(len(r.graph.edges) for r in records))
    elif magic == CHECKPOINT_MAGIC:
        tensors, manifest = load_checkpoint(path)
        header = {k: v for k, v in manifest.items() if k not in ('records', 'encoder_config')}
        header.update(kind='checkpoint', tensors=len(tensors), parameters=int(sum(a.size for a in tensors.values())))
    elif magic == INDEX_MAGIC:
        index = load_index(path)
        header = dict(index.meta, kind='index', count=len(index), dim=index.dim)
    else:
        raise FormatError(path, 'not a graph cache, checkpoint or index file')
    click.echo('=' * 60)
    click.echo(f'{header.pop("kind").upper()}: {path}')
    click.echo('=' * 60)
    for key in sorted(header):
        click.echo(f'{key}: {header[key]}')

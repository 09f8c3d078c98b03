#!/usr/bin/env python3
"""
DC2AC Command Line
Runs the pipeline one step at a time:

    generate    sample loads, solve AC-OPF, write a dataset
    solve-ac    AC-OPF at the reference load (optionally scaled)
    solve-dc    DC-OPF at the reference load (optionally scaled)
    train       fit a DC2AC or proxy network on a dataset
    evaluate    compare DC-OPF, proxy and DC2AC against AC-OPF targets
    plot        SVG figure from a metrics or history CSV
    fetch-case  download a MATPOWER case file

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import os
import sys
import json
import time
import hashlib
import logging
import argparse
import tempfile
from typing import Dict, Any, List, Optional

import numpy as np
import requests

# Try to load environment variables from .env file
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass  # python-dotenv not installed, use system environment variables

from grid_case import GridCase, load_case, parse_case, case_hash
from dcopf import DcParams, solve_dcopf
from acopf import solve_acopf
from dataset_generator import generate_dataset, save_dataset, load_dataset, export_dataset_csv
from neural_net import save_checkpoint, load_checkpoint
from training import Dc2AcTrainer, ProxyTrainer, evaluate
from result_plots import plot_csv
from run_config import RunConfig, ConfigError, write_manifest
from artifact_store import file_sha256

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

COMMANDS = {
    'generate': 'Sample load scenarios, solve AC-OPF for each and save a dataset',
    'solve-ac': 'Solve the AC-OPF at the reference load',
    'solve-dc': 'Solve the DC-OPF at the reference load',
    'train': 'Train a DC2AC or proxy network on a dataset',
    'evaluate': 'Compare methods against AC-OPF targets and write metrics CSVs',
    'plot': 'Render a metrics or training-history CSV as SVG',
    'fetch-case': 'Download a MATPOWER case file and validate it',
}


def setup_logging(command: str, log_dir: str, level: str = 'INFO'):
    os.makedirs(log_dir, exist_ok=True)  # Ensure logs directory exists
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(os.path.join(log_dir, f"dc2ac_{command.replace('-', '_')}.log"))
        ],
        force=True,
    )


def _hashes(*paths: str) -> Dict[str, str]:
    return {p: file_sha256(p) for p in paths if p}


def _manifest_path(out: str) -> str:
    return f"{out}.manifest.json"


def _load_scale_case(case: GridCase, scale: float):
    return case.pd_ref * scale, case.qd_ref * scale


def _write_json(path: str, data: Dict[str, Any]):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> int:
    p = cfg.paths
    case = load_case(p['case'])
    ds = generate_dataset(case, p['n'], cfg.sampler_config(), workers=cfg.workers, tol=cfg.ac_tol)
    digest = save_dataset(ds, p['out'])
    outputs = {p['out']: digest}
    if p.get('csv'):
        outputs.update(_hashes(export_dataset_csv(ds, p['csv'])))
    write_manifest(_manifest_path(p['out']), cfg, _hashes(p['case']), outputs, ds.manifest)
    m = ds.manifest
    print(f"\n🎯 Summary: {m['converged']}/{m['attempted']} samples converged "
          f"({m['n_train']} train / {m['n_val']} validation) -> {p['out']}")
    return EXIT_OK


def _solve_summary(kind: str, case: GridCase, objective: float, pg: np.ndarray) -> str:
    return (f"{kind} {case.name}: objective {objective:.6f} $/h, "
            f"total generation {np.sum(pg) * case.base_mva:.3f} MW")


def cmd_solve_ac(cfg: RunConfig) -> int:
    p = cfg.paths
    case = load_case(p['case'])
    pd_s, qd_s = _load_scale_case(case, p.get('load_scale', 1.0))
    sol = solve_acopf(case, tol=cfg.ac_tol, pd=pd_s, qd=qd_s)
    print(_solve_summary('AC-OPF', case, sol.objective, sol.pg) + f", {sol.iterations} iterations")
    if p.get('out'):
        _write_json(p['out'], sol.to_dict())
        write_manifest(_manifest_path(p['out']), cfg, _hashes(p['case']), _hashes(p['out']))
    return EXIT_OK


def cmd_solve_dc(cfg: RunConfig) -> int:
    p = cfg.paths
    case = load_case(p['case'])
    pd_s, _ = _load_scale_case(case, p.get('load_scale', 1.0))
    sol = solve_dcopf(case, DcParams.nominal(case), tol=cfg.tol, pd=pd_s)
    print(_solve_summary('DC-OPF', case, sol.objective, sol.pg)
          + f", shed {np.sum(sol.phi) * case.base_mva:.3f} MW")
    if p.get('out'):
        _write_json(p['out'], sol.to_dict())
        write_manifest(_manifest_path(p['out']), cfg, _hashes(p['case']), _hashes(p['out']))
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    p = cfg.paths
    case = load_case(p['case'])
    dataset = load_dataset(p['dataset'], case)
    trainer_cls = Dc2AcTrainer if p['method'] == 'dc2ac' else ProxyTrainer
    model, history = trainer_cls(case, dataset, cfg.train_config()).train()

    info = {'method': p['method'], 'case_name': case.name, 'case_hash': case_hash(case),
            'best_epoch': history.best_epoch}
    outputs = {p['out']: save_checkpoint(p['out'], model, info)}
    history_path = p.get('history') or f"{os.path.splitext(p['out'])[0]}.history.csv"
    outputs.update(_hashes(history.to_csv(history_path)))
    write_manifest(_manifest_path(p['out']), cfg, _hashes(p['case'], p['dataset']), outputs,
                   {'epochs': history.epochs, 'best_epoch': history.best_epoch,
                    'stopped_early': history.stopped_early})
    print(f"\n🎯 Summary: {p['method']} trained for {history.epochs} epochs, "
          f"best validation loss at epoch {history.best_epoch} -> {p['out']}")
    return EXIT_OK


def _load_model(path: str, method: str, case: GridCase):
    model, info = load_checkpoint(path)
    if info.get('method') != method:
        raise ValueError(f"{path} holds a '{info.get('method')}' model, not '{method}'")
    if info.get('case_hash') != case_hash(case):
        raise ValueError(f"{path} was trained on a different case ({info.get('case_name')})")
    return model


def cmd_evaluate(cfg: RunConfig) -> int:
    p = cfg.paths
    case = load_case(p['case'])
    dataset = load_dataset(p['dataset'], case)
    methods = {'dcopf': None}
    inputs = _hashes(p['case'], p['dataset'])
    for method in ('proxy', 'dc2ac'):
        if p.get(method):
            methods[method] = _load_model(p[method], method, case)
            inputs.update(_hashes(p[method]))

    report = evaluate(methods, dataset, case, split=p.get('split', 'val'), tol=cfg.tol)
    written = report.to_csv(p['out'])
    write_manifest(_manifest_path(p['out']), cfg, inputs, _hashes(*written),
                   {'mean_l1': report.means.to_dict(orient='index'), 'failures': report.failures})
    print(f"\n🎯 Summary: {len(methods)} methods evaluated on {len(dataset.split(p.get('split', 'val')))} "
          f"samples -> {', '.join(written)}")
    return EXIT_OK


def cmd_plot(cfg: RunConfig) -> int:
    p = cfg.paths
    out = plot_csv(p['inputs'], p['out'], group=p.get('group', 'pg'))
    write_manifest(_manifest_path(out), cfg, _hashes(*p['inputs']), _hashes(out))
    return EXIT_OK


def cmd_fetch_case(cfg: RunConfig) -> int:
    p = cfg.paths
    name = p['name'] if p['name'].endswith('.m') else f"{p['name']}.m"
    url = f"{cfg.case_url.rstrip('/')}/{name}"
    logger.info(f"Downloading {url}")
    response = requests.get(url, timeout=60)
    response.raise_for_status()

    case = parse_case(response.text, name=os.path.splitext(name)[0])
    out = p.get('out') or name
    directory = os.path.dirname(os.path.abspath(out))
    fd, tmp_path = tempfile.mkstemp(prefix='.case-', dir=directory)
    with os.fdopen(fd, 'w', encoding='utf-8') as f:
        f.write(response.text)
    os.replace(tmp_path, out)
    write_manifest(_manifest_path(out), cfg, {url: hashlib.sha256(response.content).hexdigest()}, _hashes(out),
                   {'buses': case.n_bus, 'branches': case.n_branch, 'generators': case.n_gen})
    print(f"\n🎯 Summary: {case.name} ({case.n_bus} buses, {case.n_branch} branches) -> {out}")
    return EXIT_OK


HANDLERS = {
    'generate': cmd_generate,
    'solve-ac': cmd_solve_ac,
    'solve-dc': cmd_solve_dc,
    'train': cmd_train,
    'evaluate': cmd_evaluate,
    'plot': cmd_plot,
    'fetch-case': cmd_fetch_case,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='dotenv-style config file (DC2AC_* keys)')
    common.add_argument('--seed', type=int, help='Random seed for sampling, initialization and shuffling')
    common.add_argument('--tol', type=float, help='LP / DC-OPF tolerance')
    common.add_argument('--ac-tol', type=float, help='AC-OPF tolerance')
    common.add_argument('--workers', type=int, help='Worker processes (default: logical cores)')
    common.add_argument('--log-dir', help='Directory for log files')
    common.add_argument('--log-level', help='DEBUG, INFO, WARNING or ERROR')

    parser = argparse.ArgumentParser(prog='dc2ac', description='Learn DC-OPF corrections that track AC-OPF solutions')
    sub = parser.add_subparsers(dest='command', required=True)

    def add(name: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=COMMANDS[name], description=COMMANDS[name])

    gen = add('generate')
    gen.add_argument('case', help='Case file')
    gen.add_argument('n', type=int, help='Number of samples to attempt')
    gen.add_argument('out', help='Dataset output path')
    gen.add_argument('--global-lo', type=float, help='Lower end of the global load factor')
    gen.add_argument('--global-hi', type=float, help='Upper end of the global load factor')
    gen.add_argument('--local-range', type=float, help='Half-width of the per-load noise')
    gen.add_argument('--csv', help='Also export the dataset as CSV')

    for name in ('solve-ac', 'solve-dc'):
        solve = add(name)
        solve.add_argument('case', help='Case file')
        solve.add_argument('--load-scale', type=float, default=1.0, help='Multiplier on the reference loads')
        solve.add_argument('--out', help='Write the solution as JSON')

    train = add('train')
    train.add_argument('dataset', help='Dataset file')
    train.add_argument('case', help='Case file the dataset was generated from')
    train.add_argument('--method', choices=['dc2ac', 'proxy'], default='dc2ac')
    train.add_argument('--out', required=True, help='Checkpoint output path')
    train.add_argument('--history', help='Training history CSV (default: next to the checkpoint)')
    train.add_argument('--epochs', type=int)
    train.add_argument('--batch-size', type=int)
    train.add_argument('--lr', type=float)
    train.add_argument('--patience', type=int)

    ev = add('evaluate')
    ev.add_argument('dataset', help='Dataset file')
    ev.add_argument('case', help='Case file the dataset was generated from')
    ev.add_argument('--dc2ac', help='DC2AC checkpoint')
    ev.add_argument('--proxy', help='Proxy checkpoint')
    ev.add_argument('--split', choices=['train', 'val', 'all'], default='val')
    ev.add_argument('--out', required=True, help='Per-sample metrics CSV')

    plot = add('plot')
    plot.add_argument('inputs', nargs='+', help='Metrics CSV, or one or more history CSVs')
    plot.add_argument('--out', required=True, help='SVG output path')
    plot.add_argument('--group', choices=['pg', 'pf', 'va'], default='pg')

    fetch = add('fetch-case')
    fetch.add_argument('name', help='Case name, e.g. pglib_opf_case14_ieee')
    fetch.add_argument('--out', help='Output path (default: <name>.m)')
    fetch.add_argument('--url', dest='case_url', help='Base URL of the case repository')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ('command', 'config')}
    try:
        if args.command == 'generate' and args.n < 1:
            raise ConfigError("n must be at least 1")
        cfg = RunConfig.resolve(args.command, flags=flags, config_file=args.config)
    except ConfigError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    setup_logging(args.command, cfg.log_dir, cfg.log_level)
    start = time.time()
    try:
        code = HANDLERS[args.command](cfg)
    except (ValueError, RuntimeError, OSError, requests.RequestException) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE
    logger.info(f"{args.command} finished in {time.time() - start:.1f}s")
    return code


if __name__ == '__main__':
    sys.exit(main())

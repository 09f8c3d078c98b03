#!/usr/bin/env python3
"""
Dataset Generator
Samples load scenarios around a case's reference loads, solves the AC-OPF
for each one offline and stores the converged solutions as training targets.
"""

import sys
import time
import logging
import argparse
import multiprocessing
from dataclasses import dataclass, field, asdict
from typing import Dict, Any, Optional, List, Tuple

import numpy as np
import pandas as pd

from grid_case import GridCase, load_case, case_hash
from acopf import (AcSolution, AcOpfFailure, PowerFlowDivergence, OPF_TOL,
                   solve_acopf, check_ac_feasibility)
from artifact_store import ArtifactFormatError, write_container, read_container

logger = logging.getLogger(__name__)

DATASET_MAGIC = b'DC2ACDS\x00'
DATASET_VERSION = 1
TRAIN_FRACTION = 0.8
MIN_CONVERGENCE_RATE = 0.5
TARGET_FEASIBILITY_TOL = 1e-5


class DatasetFormatError(ArtifactFormatError):
    """Dataset file is malformed or of an unsupported version."""


class CaseMismatchError(ValueError):
    """Artifact was produced for a different case than the one supplied."""

    def __init__(self, expected: str, found: str):
        self.expected = expected
        self.found = found
        super().__init__(f"case hash mismatch: artifact has {found[:12]}…, case is {expected[:12]}…")


class LowConvergenceError(RuntimeError):
    """Too many AC-OPF solves failed for the dataset to be meaningful."""

    def __init__(self, rate: float, attempted: int):
        self.rate = rate
        super().__init__(f"only {rate:.1%} of {attempted} AC-OPF samples converged "
                         f"(minimum {MIN_CONVERGENCE_RATE:.0%}); check the case and sampler ranges")


@dataclass(frozen=True)
class SamplerConfig:
    """pd_j = alpha * (1 + eps_j) * pd_ref_j, alpha ~ U(lo, hi), eps_j ~ U(-w, w)."""
    global_lo: float = 0.7
    global_hi: float = 1.1
    local_range: float = 0.15
    seed: int = 0

    def validate(self) -> 'SamplerConfig':
        if not (0.0 < self.global_lo <= self.global_hi):
            raise ValueError(f"global range must satisfy 0 < lo <= hi, got ({self.global_lo}, {self.global_hi})")
        if not (0.0 <= self.local_range < 1.0):
            raise ValueError(f"local range must lie in [0, 1), got {self.local_range}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")
        return self

    @property
    def factor_bounds(self) -> Tuple[float, float]:
        return self.global_lo * (1.0 - self.local_range), self.global_hi * (1.0 + self.local_range)


def sample_loads(case: GridCase, config: SamplerConfig,
                 rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """One load scenario; reactive loads follow the active ones (constant power factor)."""
    alpha = rng.uniform(config.global_lo, config.global_hi)
    eps = rng.uniform(-config.local_range, config.local_range, size=case.n_load)
    factor = alpha * (1.0 + eps)
    return factor * case.pd_ref, factor * case.qd_ref


@dataclass
class SampleRecord:
    sample_index: int
    pd: np.ndarray
    qd: np.ndarray
    status: str
    pg: Optional[np.ndarray] = None
    pf: Optional[np.ndarray] = None
    va: Optional[np.ndarray] = None
    objective: float = float('nan')
    message: str = ''

    @property
    def converged(self) -> bool:
        return self.status == 'converged'

    def target(self) -> np.ndarray:
        return np.concatenate([self.pg, self.pf, self.va])


@dataclass
class Dataset:
    case_name: str
    case_hash: str
    records: List[SampleRecord]
    train_idx: np.ndarray
    val_idx: np.ndarray
    manifest: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def split(self, name: str) -> List[SampleRecord]:
        if name == 'train':
            indices = self.train_idx
        elif name in ('val', 'validation'):
            indices = self.val_idx
        elif name == 'all':
            indices = np.arange(len(self.records))
        else:
            raise ValueError(f"unknown split '{name}'")
        return [self.records[i] for i in indices]

    def arrays(self, name: str = 'all') -> Dict[str, np.ndarray]:
        """Stacked pd/qd/target matrices of a split, one row per record."""
        records = self.split(name)
        if not records:
            return {key: np.zeros((0, 0)) for key in ('pd', 'qd', 'target')}
        return {
            'pd': np.vstack([r.pd for r in records]),
            'qd': np.vstack([r.qd for r in records]),
            'target': np.vstack([r.target() for r in records]),
        }

    def check_case(self, case: GridCase) -> 'Dataset':
        expected = case_hash(case)
        if expected != self.case_hash:
            raise CaseMismatchError(expected, self.case_hash)
        return self


def _solve_sample(case: GridCase, index: int, seed: np.random.SeedSequence,
                  config: SamplerConfig, tol: float) -> SampleRecord:
    rng = np.random.default_rng(seed)
    pd_s, qd_s = sample_loads(case, config, rng)
    try:
        sol: AcSolution = solve_acopf(case, tol=tol, pd=pd_s, qd=qd_s)
    except (AcOpfFailure, PowerFlowDivergence) as e:
        return SampleRecord(index, pd_s, qd_s, status='failed', message=str(e))

    report = check_ac_feasibility(case, sol, TARGET_FEASIBILITY_TOL)
    if not report.passed:
        return SampleRecord(index, pd_s, qd_s, status='infeasible', message=str(report))
    return SampleRecord(index, pd_s, qd_s, status='converged',
                        pg=sol.pg, pf=sol.pf, va=sol.va, objective=sol.objective)


_worker_case: Optional[GridCase] = None


def _init_worker(case: GridCase):
    global _worker_case
    _worker_case = case


def _pool_task(task) -> SampleRecord:
    index, seed, config, tol = task
    return _solve_sample(_worker_case, index, seed, config, tol)


class DatasetGenerator:
    def __init__(self, case: GridCase, config: SamplerConfig, workers: int = 1,
                 tol: float = OPF_TOL):
        """Set up a generator for one case; the sampler config fixes every random draw."""
        self.case = case
        self.config = config.validate()
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.workers = workers
        self.tol = tol
        self.case_hash = case_hash(case)

        # Track statistics
        self.stats = {
            'attempted': 0,
            'converged': 0,
            'failed': 0,
            'infeasible': 0,
        }

    def _solve_all(self, n: int) -> List[SampleRecord]:
        root = np.random.SeedSequence(self.config.seed)
        seeds = root.spawn(n)
        if self.workers == 1 or n == 1:
            return [_solve_sample(self.case, i, s, self.config, self.tol) for i, s in enumerate(seeds)]

        tasks = [(i, s, self.config, self.tol) for i, s in enumerate(seeds)]
        chunk = max(1, n // (4 * self.workers))
        with multiprocessing.Pool(processes=self.workers, initializer=_init_worker,
                                  initargs=(self.case,)) as pool:
            # imap keeps sample order whatever the completion order
            return list(pool.imap(_pool_task, tasks, chunksize=chunk))

    def generate(self, n: int) -> Dataset:
        if n < 1:
            raise ValueError(f"sample count must be >= 1, got {n}")
        start = time.time()
        logger.info(f"🚀 Generating {n} AC-OPF samples for {self.case.name} "
                    f"({self.case.n_bus} buses, {self.workers} worker(s))")

        records = []
        failed_indices = []
        for record in self._solve_all(n):
            self.stats['attempted'] += 1
            if record.converged:
                self.stats['converged'] += 1
                records.append(record)
                continue
            self.stats['infeasible' if record.status == 'infeasible' else 'failed'] += 1
            failed_indices.append(record.sample_index)
            logger.warning(f"sample {record.sample_index} dropped ({record.status}): {record.message}")

        rate = self.stats['converged'] / self.stats['attempted']
        if rate < MIN_CONVERGENCE_RATE:
            logger.error(f"Generation aborted: convergence rate {rate:.1%}")
            raise LowConvergenceError(rate, n)

        split_rng = np.random.default_rng(np.random.SeedSequence(self.config.seed).spawn(n + 1)[n])
        order = split_rng.permutation(len(records))
        n_train = int(round(TRAIN_FRACTION * len(records)))
        if len(records) >= 2:
            n_train = min(max(n_train, 1), len(records) - 1)

        manifest = {
            'format_version': DATASET_VERSION,
            'attempted': self.stats['attempted'],
            'converged': self.stats['converged'],
            'failed': self.stats['failed'] + self.stats['infeasible'],
            'failed_indices': failed_indices,
            'convergence_rate': rate,
            'sampler': asdict(self.config),
            'acopf_tol': self.tol,
            'n_train': n_train,
            'n_val': len(records) - n_train,
        }

        duration = time.time() - start
        logger.info("📈 Generation Summary:")
        logger.info(f"   Attempted: {self.stats['attempted']}")
        logger.info(f"   Converged: {self.stats['converged']}")
        logger.info(f"   Failed: {self.stats['failed']}")
        logger.info(f"   Rejected by feasibility check: {self.stats['infeasible']}")
        logger.info(f"   Split: {n_train} train / {len(records) - n_train} validation")
        logger.info(f"   Duration: {duration:.1f}s")

        return Dataset(case_name=self.case.name, case_hash=self.case_hash, records=records,
                       train_idx=np.sort(order[:n_train]), val_idx=np.sort(order[n_train:]),
                       manifest=manifest)


def generate_dataset(case: GridCase, n: int, config: SamplerConfig, workers: int = 1,
                     tol: float = OPF_TOL) -> Dataset:
    return DatasetGenerator(case, config, workers=workers, tol=tol).generate(n)


def save_dataset(ds: Dataset, path: str) -> str:
    """Write the dataset container; returns the file's SHA-256."""
    n = len(ds.records)
    first = ds.records[0] if n else None
    arrays = {
        'sample_index': np.array([r.sample_index for r in ds.records], dtype=float),
        'objective': np.array([r.objective for r in ds.records], dtype=float),
        'pd': np.vstack([r.pd for r in ds.records]) if n else np.zeros((0, 0)),
        'qd': np.vstack([r.qd for r in ds.records]) if n else np.zeros((0, 0)),
        'pg': np.vstack([r.pg for r in ds.records]) if n else np.zeros((0, 0)),
        'pf': np.vstack([r.pf for r in ds.records]) if n else np.zeros((0, 0)),
        'va': np.vstack([r.va for r in ds.records]) if n else np.zeros((0, 0)),
        'train_idx': np.asarray(ds.train_idx, dtype=float),
        'val_idx': np.asarray(ds.val_idx, dtype=float),
    }
    metadata = {
        'case_name': ds.case_name,
        'case_hash': ds.case_hash,
        'manifest': ds.manifest,
        'dims': {} if first is None else {'n_load': len(first.pd), 'n_gen': len(first.pg),
                                          'n_branch': len(first.pf), 'n_bus': len(first.va)},
    }
    digest = write_container(path, DATASET_MAGIC, DATASET_VERSION, metadata, arrays)
    logger.info(f"💾 Saved {n} records to {path}")
    return digest


def load_dataset(path: str, case: Optional[GridCase] = None) -> Dataset:
    """Read a dataset; with a case given, refuse files generated for another case."""
    metadata, arrays = read_container(path, DATASET_MAGIC, DATASET_VERSION, DatasetFormatError)
    try:
        n = len(arrays['sample_index'])
        records = [
            SampleRecord(sample_index=int(arrays['sample_index'][i]),
                         pd=arrays['pd'][i].copy(), qd=arrays['qd'][i].copy(), status='converged',
                         pg=arrays['pg'][i].copy(), pf=arrays['pf'][i].copy(), va=arrays['va'][i].copy(),
                         objective=float(arrays['objective'][i]))
            for i in range(n)
        ]
        ds = Dataset(case_name=metadata['case_name'], case_hash=metadata['case_hash'],
                     records=records,
                     train_idx=arrays['train_idx'].astype(int),
                     val_idx=arrays['val_idx'].astype(int),
                     manifest=metadata.get('manifest', {}))
    except (KeyError, IndexError) as e:
        raise DatasetFormatError(f"{path}: missing dataset field {e}")

    covered = np.sort(np.concatenate([ds.train_idx, ds.val_idx]))
    if not np.array_equal(covered, np.arange(n)):
        raise DatasetFormatError(f"{path}: train/validation split does not partition the records")
    if case is not None:
        ds.check_case(case)
    return ds


def export_dataset_csv(ds: Dataset, path: str) -> str:
    """One row per record: index, split, objective, total demand, pd and target columns."""
    split = np.empty(len(ds.records), dtype=object)
    split[ds.train_idx] = 'train'
    split[ds.val_idx] = 'val'
    rows = []
    for i, r in enumerate(ds.records):
        row = {'sample_index': r.sample_index, 'split': split[i], 'status': r.status,
               'objective': r.objective, 'total_pd': float(np.sum(r.pd))}
        row.update({f'pd_{j + 1}': v for j, v in enumerate(r.pd)})
        row.update({f'pg_{j + 1}': v for j, v in enumerate(r.pg)})
        row.update({f'pf_{j + 1}': v for j, v in enumerate(r.pf)})
        row.update({f'va_{j + 1}': v for j, v in enumerate(r.va)})
        rows.append(row)
    pd.DataFrame(rows).to_csv(path, index=False, float_format='%.10g')
    logger.info(f"Exported {len(rows)} records to {path}")
    return path


def main():
    """Generate a dataset from the command line without the full CLI."""
    parser = argparse.ArgumentParser(description='Generate an AC-OPF dataset for a case')
    parser.add_argument('case', help='MATPOWER or native case file')
    parser.add_argument('n', type=int, help='Number of samples to attempt')
    parser.add_argument('out', help='Output dataset path')
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--workers', type=int, default=1)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    try:
        ds = generate_dataset(load_case(args.case), args.n, SamplerConfig(seed=args.seed), workers=args.workers)
        save_dataset(ds, args.out)
    except (ValueError, RuntimeError, OSError) as e:
        logger.error(f"Generation failed: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""
Training
Training loops for the DC2AC model (network -> DC-OPF parameters -> DC-OPF
solution) and for the direct proxy regression baseline, plus the evaluation
that compares both against the plain DC-OPF on AC-OPF targets.
"""

import time
import logging
import multiprocessing
from dataclasses import dataclass, field
from typing import Dict, Optional, List, Tuple

import numpy as np
import pandas as pd

from grid_case import GridCase
from dcopf import DcParams, LpSolveError, solve_dcopf
from dcopf_sensitivity import KktFactorizationError, linearize_kkt, adjoint_gradient
from dataset_generator import Dataset
from neural_net import (Mlp, AdamState, DEFAULT_HIDDEN, forward, backward, adam_step, mse_loss,
                        inverse_bounded_output)

logger = logging.getLogger(__name__)

METHODS = ('dcopf', 'proxy', 'dc2ac')
GROUPS = ('pg', 'pf', 'va')


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    patience: int = 10
    eval_every: int = 1
    hidden: Tuple[int, ...] = DEFAULT_HIDDEN
    b_scale_lo: float = 0.5
    b_scale_hi: float = 2.0
    gs_window: float = 0.05
    tol: float = 1e-8
    workers: int = 1

    def validate(self) -> 'TrainConfig':
        for name in ('epochs', 'batch_size', 'patience', 'eval_every', 'workers'):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not (0.0 < self.b_scale_lo < 1.0 < self.b_scale_hi):
            raise ValueError("susceptance scale window must satisfy 0 < lo < 1 < hi")
        if not self.gs_window > 0:
            raise ValueError("shunt window must be positive")
        if not self.hidden or any(int(h) < 1 for h in self.hidden):
            raise ValueError(f"hidden layer widths must be positive, got {self.hidden}")
        return self


@dataclass
class TrainHistory:
    method: str
    initial_val_loss: float = float('nan')
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    skipped: List[int] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def record(self, train_loss: float, val_loss: float, skipped: int, seconds: float):
        self.train_loss.append(float(train_loss))
        self.val_loss.append(float(val_loss))
        self.skipped.append(int(skipped))
        self.seconds.append(float(seconds))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'epoch': np.arange(self.epochs + 1),
            'train_loss': [np.nan] + self.train_loss,
            'val_loss': [self.initial_val_loss] + self.val_loss,
            'skipped': [0] + self.skipped,
            'seconds': [0.0] + self.seconds,
        })

    def to_csv(self, path: str) -> str:
        frame = self.to_frame()
        frame.insert(0, 'method', self.method)
        frame.to_csv(path, index=False, float_format='%.10g')
        return path


# ---------------------------------------------------------------------------
# DC2AC model
# ---------------------------------------------------------------------------

def input_scale(case: GridCase) -> np.ndarray:
    """Per-load normalization: the network sees pd / pd_ref."""
    pd_ref = case.pd_ref
    return np.where(pd_ref != 0.0, pd_ref, 1.0)


def dc2ac_bounds(case: GridCase, config: TrainConfig,
                 nominal: Optional[DcParams] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Output bounds over [gs | b]: a shunt window around gs and a sign-preserving scale window on b."""
    nominal = nominal or DcParams.nominal(case)
    window = config.gs_window * float(np.sum(np.abs(case.pd_ref)))
    if window <= 0:
        raise ValueError(f"{case.name}: shunt window is empty (no load in the case)")
    b = np.asarray(nominal.b, dtype=float)
    scaled_lo, scaled_hi = config.b_scale_lo * b, config.b_scale_hi * b
    lower = np.concatenate([nominal.gs - window, np.minimum(scaled_lo, scaled_hi)])
    upper = np.concatenate([nominal.gs + window, np.maximum(scaled_lo, scaled_hi)])
    return lower, upper


def build_dc2ac_model(case: GridCase, config: TrainConfig) -> Mlp:
    """Network whose zero raw output reproduces the nominal (gs, b)."""
    nominal = DcParams.nominal(case)
    lower, upper = dc2ac_bounds(case, config, nominal)
    offset = inverse_bounded_output(np.concatenate([nominal.gs, nominal.b]), lower, upper)
    return Mlp.create(case.n_load, case.n_bus + case.n_branch, hidden=config.hidden, seed=config.seed,
                      lower=lower, upper=upper, offset=offset, input_scale=input_scale(case))


def predict_params(mlp: Mlp, case: GridCase, pd_row: np.ndarray) -> DcParams:
    y = mlp.predict(pd_row)
    return DcParams(gs=y[:case.n_bus], b=y[case.n_bus:])


def dc2ac_sample_gradient(case: GridCase, mlp: Mlp, pd_row: np.ndarray, target: np.ndarray,
                          tol: float, need_grad: bool = True):
    """(loss, parameter gradients, failure message) for one sample."""
    y, cache = forward(mlp, pd_row)
    params = DcParams(gs=y[:case.n_bus], b=y[case.n_bus:])
    try:
        sol = solve_dcopf(case, params, tol=tol, pd=pd_row)
        loss, dL = mse_loss(sol.stacked(), target)
        if not need_grad:
            return loss, None, ''
        lin = linearize_kkt(case, params, sol)
        dparams = adjoint_gradient(lin, dL)
    except (LpSolveError, KktFactorizationError) as e:
        return None, None, str(e)
    grads, _ = backward(mlp, cache, dparams.as_vector())
    return loss, grads, ''


_worker_case: Optional[GridCase] = None


def _init_worker(case: GridCase):
    global _worker_case
    _worker_case = case


def _pool_sample(task):
    mlp, pd_row, target, tol, need_grad = task
    return dc2ac_sample_gradient(_worker_case, mlp, pd_row, target, tol, need_grad)


def _mean_gradient(results) -> Tuple[float, Optional[List[np.ndarray]], int]:
    ok = [(loss, grads) for loss, grads, _ in results if loss is not None]
    skipped = len(results) - len(ok)
    if not ok:
        return float('nan'), None, skipped
    loss = float(np.mean([l for l, _ in ok]))
    if ok[0][1] is None:
        return loss, None, skipped
    grads = [np.zeros_like(g) for g in ok[0][1]]
    for _, sample_grads in ok:
        for acc, g in zip(grads, sample_grads):
            acc += g
    return loss, [g / len(ok) for g in grads], skipped


def dc2ac_step(batch: Tuple[np.ndarray, np.ndarray], mlp: Mlp, case: GridCase, state: AdamState,
               tol: float = 1e-8) -> Tuple[float, Mlp]:
    """One Adam update on the mean per-sample gradient of a (pd, target) batch."""
    pd_batch, targets = batch
    results = [dc2ac_sample_gradient(case, mlp, p, t, tol) for p, t in zip(pd_batch, targets)]
    loss, grads, _ = _mean_gradient(results)
    for _, _, message in results:
        if message:
            logger.warning(f"sample skipped: {message}")
    if grads is not None:
        adam_step(mlp, grads, state)
    return loss, mlp


class _Trainer:
    """Shared epoch loop, early stopping and best-model bookkeeping."""
    method = ''

    def __init__(self, case: GridCase, dataset: Dataset, config: TrainConfig):
        self.case = case
        self.dataset = dataset.check_case(case)
        self.config = config.validate()
        self.model: Mlp = None
        self.stats = {'epochs': 0, 'steps': 0, 'skipped': 0}

        train = dataset.arrays('train')
        val = dataset.arrays('val')
        if train['pd'].size == 0:
            raise ValueError("dataset has no training samples")
        self.train_pd, self.train_target = train['pd'], train['target']
        # an empty validation split falls back to the training set for model selection
        if val['pd'].size == 0:
            logger.warning("dataset has no validation samples; using training samples for validation")
            val = train
        self.val_pd, self.val_target = val['pd'], val['target']

    def _epoch(self, order: np.ndarray, state: AdamState) -> Tuple[float, int]:
        raise NotImplementedError

    def validation_loss(self) -> float:
        raise NotImplementedError

    def train(self) -> Tuple[Mlp, TrainHistory]:
        cfg = self.config
        history = TrainHistory(method=self.method)
        rng = np.random.default_rng(cfg.seed)
        state = AdamState.for_model(self.model, lr=cfg.lr)
        start = time.time()

        logger.info(f"🚀 Training {self.method} on {self.case.name}: {len(self.train_pd)} train / "
                    f"{len(self.val_pd)} validation samples, {cfg.epochs} epochs")
        best_loss = self.validation_loss()
        history.initial_val_loss = best_loss
        best_model = self.model.copy()
        since_best = 0
        last_val = best_loss

        for epoch in range(1, cfg.epochs + 1):
            epoch_start = time.time()
            order = rng.permutation(len(self.train_pd))
            train_loss, skipped = self._epoch(order, state)
            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
                last_val = self.validation_loss()
            history.record(train_loss, last_val, skipped, time.time() - epoch_start)
            self.stats['epochs'] += 1
            self.stats['skipped'] += skipped
            logger.info(f"Epoch {epoch}/{cfg.epochs} - train {train_loss:.6e}, val {last_val:.6e}, "
                        f"skipped {skipped}, {history.seconds[-1]:.1f}s")

            if np.isfinite(last_val) and (not np.isfinite(best_loss) or last_val < best_loss):
                best_loss, best_model, since_best = last_val, self.model.copy(), 0
                history.best_epoch = epoch
            else:
                since_best += 1
            if since_best >= cfg.patience:
                logger.info(f"Stopping early after {epoch} epochs ({cfg.patience} without improvement)")
                history.stopped_early = True
                break

        logger.info("📈 Training Summary:")
        logger.info(f"   Method: {self.method}")
        logger.info(f"   Epochs: {self.stats['epochs']}, Steps: {self.stats['steps']}")
        logger.info(f"   Best validation loss: {best_loss:.6e} (epoch {history.best_epoch})")
        logger.info(f"   Skipped samples: {self.stats['skipped']}")
        logger.info(f"   Duration: {time.time() - start:.1f}s")
        self.model = best_model
        return best_model, history


class Dc2AcTrainer(_Trainer):
    method = 'dc2ac'

    def __init__(self, case: GridCase, dataset: Dataset, config: TrainConfig, model: Optional[Mlp] = None):
        super().__init__(case, dataset, config)
        self.model = model if model is not None else build_dc2ac_model(case, self.config)
        self._pool = None

    def _evaluate_samples(self, pd_rows, targets, need_grad: bool):
        tol = self.config.tol
        if self._pool is None:
            return [dc2ac_sample_gradient(self.case, self.model, p, t, tol, need_grad)
                    for p, t in zip(pd_rows, targets)]
        tasks = [(self.model, p, t, tol, need_grad) for p, t in zip(pd_rows, targets)]
        return self._pool.map(_pool_sample, tasks)

    def _epoch(self, order: np.ndarray, state: AdamState) -> Tuple[float, int]:
        losses, skipped = [], 0
        for start in range(0, len(order), self.config.batch_size):
            rows = order[start:start + self.config.batch_size]
            results = self._evaluate_samples(self.train_pd[rows], self.train_target[rows], True)
            for row, (_, _, message) in zip(rows, results):
                if message:
                    logger.warning(f"training sample {int(row)} skipped: {message}")
            loss, grads, batch_skipped = _mean_gradient(results)
            skipped += batch_skipped
            if grads is None:
                continue
            adam_step(self.model, grads, state)
            self.stats['steps'] += 1
            losses.append((loss, len(rows) - batch_skipped))
        if not losses:
            return float('nan'), skipped
        total = sum(n for _, n in losses)
        return float(sum(l * n for l, n in losses) / total), skipped

    def validation_loss(self) -> float:
        results = self._evaluate_samples(self.val_pd, self.val_target, False)
        values = [loss for loss, _, _ in results if loss is not None]
        return float(np.mean(values)) if values else float('nan')

    def train(self) -> Tuple[Mlp, TrainHistory]:
        if self.config.workers == 1:
            return super().train()
        with multiprocessing.Pool(processes=self.config.workers, initializer=_init_worker,
                                  initargs=(self.case,)) as pool:
            self._pool = pool
            try:
                return super().train()
            finally:
                self._pool = None


# ---------------------------------------------------------------------------
# Proxy baseline
# ---------------------------------------------------------------------------

def proxy_ref_position(case: GridCase) -> int:
    """Position of the reference-bus angle in the stacked [pg; pf; va] vector."""
    return case.n_gen + case.n_branch + case.ref_bus


def expand_proxy_output(case: GridCase, y: np.ndarray) -> np.ndarray:
    return np.insert(y, proxy_ref_position(case), 0.0, axis=-1)


def build_proxy_model(case: GridCase, config: TrainConfig, targets: Optional[np.ndarray] = None) -> Mlp:
    """Same architecture and seed as DC2AC; the output offset starts at the mean training target."""
    n_out = case.n_gen + case.n_branch + case.n_bus - 1
    offset = None
    if targets is not None and len(targets):
        offset = np.delete(np.mean(targets, axis=0), proxy_ref_position(case))
    return Mlp.create(case.n_load, n_out, hidden=config.hidden, seed=config.seed,
                      offset=offset, input_scale=input_scale(case))


class ProxyTrainer(_Trainer):
    method = 'proxy'

    def __init__(self, case: GridCase, dataset: Dataset, config: TrainConfig, model: Optional[Mlp] = None):
        super().__init__(case, dataset, config)
        self.model = model if model is not None else build_proxy_model(case, self.config, self.train_target)
        self.ref = proxy_ref_position(case)

    def _epoch(self, order: np.ndarray, state: AdamState) -> Tuple[float, int]:
        total, count = 0.0, 0
        for start in range(0, len(order), self.config.batch_size):
            rows = order[start:start + self.config.batch_size]
            y, cache = forward(self.model, self.train_pd[rows])
            loss, dL = mse_loss(expand_proxy_output(self.case, y), self.train_target[rows])
            grads, _ = backward(self.model, cache, np.delete(dL, self.ref, axis=1))
            adam_step(self.model, grads, state)
            self.stats['steps'] += 1
            total += loss * len(rows)
            count += len(rows)
        return total / count, 0

    def validation_loss(self) -> float:
        pred = expand_proxy_output(self.case, self.model.predict(self.val_pd))
        return mse_loss(pred, self.val_target)[0]


def train_dc2ac(dataset: Dataset, case: GridCase, config: TrainConfig) -> Tuple[Mlp, TrainHistory]:
    """Train the DC2AC model on a dataset generated for `case`.

    A dataset stores only the case name and hash, so the GridCase must be
    passed alongside it; a case whose hash differs raises CaseMismatchError.
    Returns the best-validation model and the per-epoch history.
    """
    return Dc2AcTrainer(case, dataset, config).train()


def train_proxy(dataset: Dataset, case: GridCase, config: TrainConfig) -> Tuple[Mlp, TrainHistory]:
    """Train the proxy regression baseline; `case` is required as for train_dc2ac."""
    return ProxyTrainer(case, dataset, config).train()


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    per_sample: pd.DataFrame
    means: pd.DataFrame
    win_rates: Dict[str, pd.DataFrame]
    failures: Dict[str, int]

    def mean_l1(self, method: str, group: str) -> float:
        return float(self.means.loc[method, f'l1_{group}'])

    def win_rate(self, group: str, method: str, other: str) -> float:
        return float(self.win_rates[group].loc[method, other])

    def to_csv(self, path: str) -> List[str]:
        """Per-sample rows at `path`, plus `.summary.csv` and `.winrates.csv` companions."""
        base = path[:-4] if path.endswith('.csv') else path
        summary_path, winrates_path = f'{base}.summary.csv', f'{base}.winrates.csv'
        self.per_sample.to_csv(path, index=False, float_format='%.12g')
        summary = self.means.copy()
        summary['failures'] = [self.failures[m] for m in summary.index]
        summary.to_csv(summary_path, index_label='method', float_format='%.12g')
        rows = []
        for group, table in self.win_rates.items():
            for method in table.index:
                for other in table.columns:
                    rows.append({'group': group, 'method': method, 'versus': other,
                                 'win_rate': table.loc[method, other]})
        pd.DataFrame(rows).to_csv(winrates_path, index=False, float_format='%.12g')
        return [path, summary_path, winrates_path]


def _predict(method: str, model: Optional[Mlp], case: GridCase, pd_row: np.ndarray, tol: float) -> np.ndarray:
    if method == 'proxy':
        return expand_proxy_output(case, model.predict(pd_row))
    params = DcParams.nominal(case) if method == 'dcopf' else predict_params(model, case, pd_row)
    return solve_dcopf(case, params, tol=tol, pd=pd_row).stacked()


def _win_rate(err_a: np.ndarray, err_b: np.ndarray) -> float:
    a = np.where(np.isfinite(err_a), err_a, np.inf)
    b = np.where(np.isfinite(err_b), err_b, np.inf)
    ties = (a == b) | (np.abs(a - b) <= 1e-12 * (1.0 + np.abs(b)))
    wins = (a < b) & ~ties
    return float((np.sum(wins) + 0.5 * np.sum(ties)) / len(a)) if len(a) else float('nan')


def evaluate(methods: Dict[str, Optional[Mlp]], dataset: Dataset, case: GridCase,
             split: str = 'val', tol: float = 1e-8) -> MetricsReport:
    """L1 errors per variable group against AC-OPF targets, per method and sample."""
    dataset.check_case(case)
    for method, model in methods.items():
        if method not in METHODS:
            raise ValueError(f"unknown method '{method}' (expected one of {', '.join(METHODS)})")
        if method != 'dcopf' and model is None:
            raise ValueError(f"no trained model supplied for method '{method}'")

    records = dataset.split(split)
    ng, nl = case.n_gen, case.n_branch
    groups = {'pg': slice(0, ng), 'pf': slice(ng, ng + nl), 'va': slice(ng + nl, None)}
    rows = []
    failures = {m: 0 for m in methods}
    for method, model in methods.items():
        for record in records:
            target = record.target()
            try:
                pred = _predict(method, model, case, record.pd, tol)
                errors = {g: float(np.sum(np.abs(pred[s] - target[s]))) for g, s in groups.items()}
            except (LpSolveError, ValueError) as e:
                logger.warning(f"{method}: sample {record.sample_index} failed: {e}")
                failures[method] += 1
                errors = {g: float('nan') for g in groups}
            rows.append({'method': method, 'sample_index': record.sample_index,
                         'total_pd': float(np.sum(record.pd)),
                         **{f'l1_{g}': v for g, v in errors.items()}})

    per_sample = pd.DataFrame(rows, columns=['method', 'sample_index', 'total_pd', 'l1_pg', 'l1_pf', 'l1_va'])
    names = list(methods)
    means = per_sample.groupby('method', sort=False)[[f'l1_{g}' for g in GROUPS]].mean().reindex(names)
    win_rates = {}
    for g in GROUPS:
        table = pd.DataFrame(index=names, columns=names, dtype=float)
        group_errors = {m: per_sample.loc[per_sample["method"] == m, f"l1_{g}"].to_numpy() for m in names}
        for a in names:
            for b in names:
                table.loc[a, b] = _win_rate(group_errors[a], group_errors[b])
        win_rates[g] = table

    for method in names:
        logger.info(f"{method:>6}: mean L1 pg {means.loc[method, 'l1_pg']:.4f}, "
                    f"pf {means.loc[method, 'l1_pf']:.4f}, va {means.loc[method, 'l1_va']:.4f} "
                    f"({failures[method]} failures)")
    return MetricsReport(per_sample=per_sample, means=means, win_rates=win_rates, failures=failures)

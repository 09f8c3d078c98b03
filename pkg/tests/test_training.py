import os

import numpy as np
import pandas as pd
import pytest

from acopf import solve_acopf
from dataset_generator import CaseMismatchError, Dataset, SampleRecord, SamplerConfig, generate_dataset
from dcopf import DcParams, solve_dcopf
from grid_case import case_hash, load_case
from neural_net import AdamState, Mlp
from training import (Dc2AcTrainer, ProxyTrainer, TrainConfig, TrainHistory, _win_rate, build_dc2ac_model,
                      build_proxy_model, dc2ac_bounds, dc2ac_sample_gradient, dc2ac_step, evaluate,
                      expand_proxy_output, predict_params, train_dc2ac, train_proxy)
from conftest import case_path

TOL = 1e-9


def dc_dataset(case, factors, n_train=None):
    """Dataset whose targets are nominal DC-OPF solutions."""
    records = []
    for i, factor in enumerate(factors):
        pd_row, qd_row = factor * case.pd_ref, factor * case.qd_ref
        sol = solve_dcopf(case, DcParams.nominal(case), tol=TOL, pd=pd_row)
        records.append(SampleRecord(i, pd_row, qd_row, 'converged', pg=sol.pg, pf=sol.pf, va=sol.va,
                                    objective=sol.objective))
    n_train = len(records) if n_train is None else n_train
    return Dataset(case_name=case.name, case_hash=case_hash(case), records=records,
                   train_idx=np.arange(n_train), val_idx=np.arange(n_train, len(records)))


@pytest.fixture(scope='module')
def lossy_case():
    return load_case(case_path('case2_lossy.m'))


@pytest.fixture(scope='module')
def lossy_dataset(lossy_case):
    return generate_dataset(lossy_case, 20, SamplerConfig(seed=4))


def small_config(**kwargs):
    defaults = dict(epochs=5, batch_size=4, lr=1e-2, hidden=(8,), seed=0, tol=TOL)
    defaults.update(kwargs)
    return TrainConfig(**defaults)


@pytest.mark.parametrize('kwargs', [
    dict(epochs=0), dict(batch_size=0), dict(lr=0.0), dict(patience=0), dict(workers=0),
    dict(b_scale_lo=1.0), dict(b_scale_hi=0.9), dict(gs_window=0.0), dict(hidden=()),
])
def test_invalid_train_config(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs).validate()


def test_bounds_keep_susceptance_sign(case2):
    lower, upper = dc2ac_bounds(case2, TrainConfig())
    # gs window is 5% of total load around zero; b = -10 scaled into [-20, -5]
    np.testing.assert_allclose(lower, [-0.05, -0.05, -20.0])
    np.testing.assert_allclose(upper, [0.05, 0.05, -5.0])


def test_untrained_model_predicts_nominal_params(case14):
    mlp = build_dc2ac_model(case14, small_config())
    params = predict_params(mlp, case14, case14.pd_ref * 0.8)
    nominal = DcParams.nominal(case14)
    np.testing.assert_allclose(params.gs, nominal.gs, atol=1e-12)
    np.testing.assert_allclose(params.b, nominal.b, rtol=1e-12)


def test_gradient_vanishes_when_nominal_params_are_optimal(case2):
    mlp = build_dc2ac_model(case2, small_config())
    pd_row = np.array([1.0])
    target = solve_dcopf(case2, DcParams.nominal(case2), tol=TOL, pd=pd_row).stacked()
    loss, grads, message = dc2ac_sample_gradient(case2, mlp, pd_row, target, TOL)
    assert message == ''
    assert loss < 1e-14
    assert max(np.max(np.abs(g)) for g in grads) < 1e-7


def test_zero_learning_rate_step_leaves_model_unchanged(lossy_case):
    mlp = build_dc2ac_model(lossy_case, small_config())
    before = mlp.flat_params()
    pd_batch = np.array([[0.9], [1.1]])
    targets = np.vstack([solve_acopf(lossy_case, pd=p, qd=np.zeros(1)).stacked() for p in pd_batch])
    loss, mlp = dc2ac_step((pd_batch, targets), mlp, lossy_case, AdamState.for_model(mlp, lr=0.0), tol=TOL)
    assert loss > 0
    np.testing.assert_array_equal(mlp.flat_params(), before)


def test_end_to_end_gradient_matches_finite_differences(lossy_case):
    config = small_config(hidden=(4,), seed=3)
    base = build_dc2ac_model(lossy_case, config)
    mlp = Mlp.create(lossy_case.n_load, base.sizes[-1], hidden=(4,), seed=3, lower=base.lower,
                     upper=base.upper, offset=base.offset, input_scale=base.input_scale, zero_output=False)
    mlp.params[-2] *= 0.1
    mlp.params[-1] *= 0.1
    pd_row = np.array([1.1])
    target = solve_acopf(lossy_case, pd=pd_row, qd=np.zeros(1)).stacked()

    _, grads, message = dc2ac_sample_gradient(lossy_case, mlp, pd_row, target, TOL)
    assert message == ''
    analytic = np.concatenate([g.ravel() for g in grads])
    theta = mlp.flat_params()

    def loss_at(flat):
        trial = mlp.copy()
        trial.set_flat_params(flat)
        return dc2ac_sample_gradient(lossy_case, trial, pd_row, target, TOL, need_grad=False)[0]

    rng = np.random.default_rng(9)
    h = 1e-4
    for _ in range(3):
        direction = rng.normal(size=theta.size)
        direction /= np.linalg.norm(direction)
        numeric = (loss_at(theta + h * direction) - loss_at(theta - h * direction)) / (2 * h)
        assert analytic @ direction == pytest.approx(numeric, rel=1e-3, abs=1e-9)


def test_dc2ac_training_improves_validation_loss(lossy_case, lossy_dataset):
    model, history = train_dc2ac(lossy_dataset, lossy_case, small_config())
    assert history.epochs == 5
    assert min(history.val_loss) <= history.initial_val_loss
    trainer = Dc2AcTrainer(lossy_case, lossy_dataset, small_config(), model=model)
    assert trainer.validation_loss() <= history.initial_val_loss
    lower, upper = dc2ac_bounds(lossy_case, small_config())
    for factor in np.linspace(0.6, 1.3, 8):
        y = model.predict(lossy_case.pd_ref * factor)
        assert np.all(y > lower) and np.all(y < upper)


def test_training_is_reproducible(lossy_case, lossy_dataset):
    config = small_config(epochs=2)
    first = train_dc2ac(lossy_dataset, lossy_case, config)
    second = train_dc2ac(lossy_dataset, lossy_case, config)
    assert first[1].train_loss == second[1].train_loss
    assert first[1].val_loss == second[1].val_loss
    np.testing.assert_array_equal(first[0].flat_params(), second[0].flat_params())


def test_early_stopping_keeps_the_best_model(case2):
    dataset = dc_dataset(case2, np.linspace(0.7, 1.1, 6), n_train=4)

    class ScriptedTrainer(ProxyTrainer):
        losses = iter([1.0, 0.5, 0.6, 0.7, 0.8])

        def validation_loss(self):
            return next(self.losses)

    trainer = ScriptedTrainer(case2, dataset, small_config(epochs=30, patience=2))
    model, history = trainer.train()
    assert history.stopped_early
    assert history.val_loss == [0.5, 0.6, 0.7]
    assert history.best_epoch == 1
    assert trainer.model is model


def test_trainer_refuses_another_case(case2, lossy_dataset):
    with pytest.raises(CaseMismatchError):
        Dc2AcTrainer(case2, lossy_dataset, small_config())


@pytest.mark.parametrize('train', [train_dc2ac, train_proxy])
def test_train_functions_take_the_case_next_to_the_dataset(case2, lossy_case, lossy_dataset, train):
    with pytest.raises(CaseMismatchError):
        train(lossy_dataset, case2, small_config(epochs=1))
    model, history = train(lossy_dataset, lossy_case, small_config(epochs=1))
    assert isinstance(model, Mlp)
    assert isinstance(history, TrainHistory)


def test_empty_validation_split_falls_back_to_training(case2):
    dataset = dc_dataset(case2, [0.8, 1.0])
    trainer = ProxyTrainer(case2, dataset, small_config())
    np.testing.assert_array_equal(trainer.val_pd, trainer.train_pd)


def test_history_frame_has_epoch_zero():
    history = TrainHistory(method='proxy', initial_val_loss=2.0)
    history.record(1.5, 1.0, 0, 0.1)
    frame = history.to_frame()
    assert list(frame['epoch']) == [0, 1]
    assert np.isnan(frame['train_loss'][0])
    assert list(frame['val_loss']) == [2.0, 1.0]


def test_proxy_starts_at_the_mean_target(lossy_case, lossy_dataset):
    targets = lossy_dataset.arrays('train')['target']
    mlp = build_proxy_model(lossy_case, small_config(), targets)
    pred = expand_proxy_output(lossy_case, mlp.predict(lossy_dataset.arrays('val')['pd']))
    expected = targets.mean(axis=0)
    expected[lossy_case.n_gen + lossy_case.n_branch + lossy_case.ref_bus] = 0.0
    np.testing.assert_allclose(pred, np.tile(expected, (len(pred), 1)), atol=1e-12)


def test_proxy_learns_a_constant_target(case2):
    dataset = dc_dataset(case2, [1.0] * 6, n_train=4)
    _, history = train_proxy(dataset, case2, small_config(epochs=3))
    assert max(history.val_loss) < 1e-12


def test_proxy_beats_the_mean_predictor(lossy_case, lossy_dataset):
    train, val = lossy_dataset.arrays('train'), lossy_dataset.arrays('val')
    baseline = np.mean((val['target'] - train['target'].mean(axis=0)) ** 2)
    model, _ = train_proxy(lossy_dataset, lossy_case, small_config(epochs=10))
    trainer = ProxyTrainer(lossy_case, lossy_dataset, small_config(), model=model)
    assert trainer.validation_loss() <= baseline + 1e-12


@pytest.mark.parametrize('a, b, expected', [
    ([1.0, 2.0, 3.0], [2.0, 2.0, 1.0], 0.5),
    ([0.0, 0.0], [1.0, 1.0], 1.0),
    ([np.nan], [1.0], 0.0),
    ([np.nan], [np.nan], 0.5),
])
def test_win_rate_counts_ties_as_half(a, b, expected):
    assert _win_rate(np.array(a), np.array(b)) == pytest.approx(expected)


def test_dcopf_against_itself(case2):
    dataset = dc_dataset(case2, [0.8, 0.9, 1.0, 1.1], n_train=2)
    report = evaluate({'dcopf': None, 'dc2ac': build_dc2ac_model(case2, small_config())}, dataset, case2)
    assert len(report.per_sample) == 4
    for group in ('pg', 'pf', 'va'):
        assert report.win_rate(group, 'dcopf', 'dcopf') == 0.5
        assert report.win_rate(group, 'dc2ac', 'dcopf') == 0.5
        assert report.mean_l1('dcopf', group) == pytest.approx(report.mean_l1('dc2ac', group), abs=1e-12)


def test_lossless_dataset_has_no_dcopf_dispatch_error(case2):
    dataset = generate_dataset(case2, 6, SamplerConfig(seed=8))
    report = evaluate({'dcopf': None}, dataset, case2, split='all')
    assert report.per_sample['l1_pg'].max() < 1e-5
    assert report.failures == {'dcopf': 0}


def test_evaluation_is_pure_and_writes_csvs(lossy_case, lossy_dataset, tmp_path):
    methods = {'dcopf': None, 'proxy': build_proxy_model(lossy_case, small_config(),
                                                         lossy_dataset.arrays('train')['target'])}
    first = evaluate(methods, lossy_dataset, lossy_case)
    second = evaluate(methods, lossy_dataset, lossy_case)
    pd.testing.assert_frame_equal(first.per_sample, second.per_sample)

    paths = first.to_csv(str(tmp_path / 'metrics.csv'))
    assert [os.path.basename(p) for p in paths] == ['metrics.csv', 'metrics.summary.csv', 'metrics.winrates.csv']
    per_sample = pd.read_csv(paths[0])
    assert list(per_sample.columns) == ['method', 'sample_index', 'total_pd', 'l1_pg', 'l1_pf', 'l1_va']
    rates = pd.read_csv(paths[2])
    assert rates['win_rate'].between(0.0, 1.0).all()


def test_evaluate_rejects_unknown_or_missing_models(case2):
    dataset = dc_dataset(case2, [1.0, 1.0])
    with pytest.raises(ValueError):
        evaluate({'ridge': None}, dataset, case2)
    with pytest.raises(ValueError):
        evaluate({'proxy': None}, dataset, case2)


@pytest.mark.slow
def test_dc2ac_beats_dcopf_on_14_bus(case14):
    from run_config import default_workers
    dataset = generate_dataset(case14, 1000, SamplerConfig(seed=0), workers=default_workers())
    assert dataset.manifest['convergence_rate'] >= 0.95
    config = TrainConfig(epochs=8, batch_size=16, lr=1e-3, seed=0, tol=1e-8, workers=default_workers())
    model, history = train_dc2ac(dataset, case14, config)
    report = evaluate({'dcopf': None, 'dc2ac': model}, dataset, case14)

    assert report.mean_l1('dc2ac', 'pg') <= 0.7 * report.mean_l1('dcopf', 'pg')
    assert report.win_rate('pg', 'dc2ac', 'dcopf') >= 0.6
    total = history.initial_val_loss - min(history.val_loss)
    early = history.initial_val_loss - min(history.val_loss[:2])
    assert early >= 0.8 * total

"""Test the cross-validation experiments on hand-made features."""
import os.path as op

import numpy as np
import pandas as pd
import pytest

from histopy.config import load_config
from histopy.finetune import FeatureMatrix
from histopy.pipeline.pip_experiment import (run_tissue, run_expression,
                                             run_mutation, write_report,
                                             cmd_experiment, align_features)
from histopy.utils import make_rng


_EVAL = {'eval.k': 3, 'eval.repeats': 6, 'eval.scatter_genes': 2,
         'svr.n_passes': 300, 'lasso.n_lambda': 5, 'lasso.inner_folds': 2}


def _cfg(**kwargs):
    return load_config(overrides={**_EVAL, **kwargs})


def _separable(n_per_class=10, n_classes=3, seed=0):
    """Tile features clustered around the corners of a simplex."""
    rng = make_rng(seed)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    x = 4. * np.eye(n_classes)[labels] + .1 * rng.standard_normal(
        (len(labels), n_classes))
    ids = [f"t{k:03d}" for k in range(len(labels))]
    return ids, x, labels


def _patients(n=18, dim=3, seed=0):
    """Patient features with expression and mutation targets."""
    rng = make_rng(seed)
    ids = [f"P{k:03d}" for k in range(n)]
    x = rng.standard_normal((n, dim))
    w = rng.standard_normal((dim, 2))
    log_expr = np.clip(4. + .5 * x @ w + .05 * rng.standard_normal(
        (n, 2)), 0., None)
    expr = pd.DataFrame(np.expm1(log_expr), index=ids,
                        columns=['GENE_A', 'GENE_B'])
    mut = pd.DataFrame({'TP53': (x[:, 0] > np.median(x[:, 0])).astype(float),
                        'KRAS': np.arange(n) % 2.,
                        'FLAT': np.zeros((n,))}, index=ids)
    return ids, x, expr, mut


def _files_bytes(files):
    out = dict()
    for name, path in files.items():
        with open(path, 'rb') as f:
            out[name] = f.read()
    return out


# -----------------------------------------------------------------------------
# identical extractors


def test_tissue_identical_extractors():
    """Identical features give identical metrics (p = 1, no difference)."""
    ids, x, labels = _separable()
    report = run_tissue(ids, {'baseline': x, 'finetuned': x.copy()}, labels,
                        ['a', 'b', 'c'], _cfg())
    comp = report.comparisons['accuracy']
    assert comp['p'] == 1. and comp['mean_diff'] == 0.
    assert comp['p_ttest'] == 1. and comp['n'] == 6
    assert report.confusion['baseline'] == report.confusion['finetuned']


def test_expression_identical_extractors():
    ids, x, expr, _ = _patients()
    report = run_expression(ids, {'baseline': x, 'finetuned': x.copy()},
                            expr, _cfg())
    comp = report.comparisons['mean_r']
    assert comp['p'] == 1. and comp['mean_diff'] == 0.
    for row in report.genes:
        assert row['delta'] == 0. and row['p_paired'] == 1.
    # the targets are linear in the features
    assert comp['mean_a'] > .5
    assert report.meta['n_improved'] == 0


def test_mutation_identical_extractors():
    ids, x, _, mut = _patients()
    report = run_mutation(ids, {'baseline': x, 'finetuned': x.copy()}, mut,
                          _cfg())
    comp = report.comparisons['mean_auc']
    assert comp['p'] == 1. and comp['mean_diff'] == 0.
    assert [g['gene'] for g in report.genes] == ['TP53', 'KRAS']
    assert report.meta['skipped_genes'] == ['FLAT']
    for row in report.genes:
        assert row['delta'] == 0. and row['p_paired'] == 1.


# -----------------------------------------------------------------------------
# separable classes


@pytest.mark.parametrize('seed', range(3))
def test_tissue_separable(seed):
    """Linearly separable tile features are perfectly classified."""
    ids, x, labels = _separable(seed=seed)
    rng = make_rng(seed, 1)
    noise = x + rng.standard_normal(x.shape) * 3.
    report = run_tissue(ids, {'baseline': noise, 'finetuned': x}, labels,
                        ['a', 'b', 'c'], _cfg(**{'run.seed': seed}))
    df = report.to_frame()
    acc = df[(df['extractor'] == 'finetuned') & (df['metric'] ==
                                                 'accuracy')]['value']
    assert len(acc) == 6 * (3 + 1)
    assert (acc == 1.).all()
    for name in ('a', 'b', 'c'):
        np.testing.assert_array_equal(report.repeat_values(
            'finetuned', f"accuracy_{name}"), 1.)
    conf = np.asarray(report.confusion['finetuned'])
    np.testing.assert_array_equal(conf, np.diag([6 * 10] * 3))
    assert report.comparisons['accuracy']['mean_diff'] >= 0.


# -----------------------------------------------------------------------------
# reproducibility


def test_tissue_report_reproducible(tmp_path):
    """Two runs write byte-identical reports and figures."""
    ids, x, labels = _separable()
    x_b = x + .5 * make_rng(1).standard_normal(x.shape)
    written = []
    for n_run, n_threads in enumerate((1, 2)):
        report = run_tissue(ids, {'baseline': x, 'finetuned': x_b}, labels,
                            ['a', 'b', 'c'], _cfg(), n_threads=n_threads)
        files = write_report(report, str(tmp_path / f"run{n_run}"))
        written += [_files_bytes(files)]
    assert {'report', 'metric_bars', 'per_class'} <= set(written[0])
    assert written[0] == written[1]


@pytest.mark.parametrize('which', ['expression', 'mutation'])
def test_cmd_experiment_reproducible(tmp_path, which):
    """Running the same configuration twice gives identical outputs."""
    ids, x, expr, mut = _patients()
    targets = op.join(str(tmp_path), f"{which}.csv")
    table = expr if which == 'expression' else mut
    table.rename_axis('patient_id').reset_index().to_csv(targets,
                                                         index=False)
    rng = make_rng(2)
    fa = FeatureMatrix(ids, x)
    fb = FeatureMatrix(ids[::-1], x[::-1] + .3 * rng.standard_normal(
        x.shape))
    cfg = _cfg(**{'paths.out': str(tmp_path / 'out'),
                  f"paths.{which}": targets, 'run.threads': 2})
    folder = op.join(str(tmp_path), 'out', 'reports', which)
    names = ['report.json', 'records.csv', 'summary.csv', 'genes.csv',
             'metric_bars.svg']
    names += ['correlation_delta.svg', 'scatter.svg'] if \
        which == 'expression' else ['gene_auc.svg']
    outputs = []
    for _ in range(2):
        report = cmd_experiment(cfg, which, fa, fb)
        outputs += [_files_bytes({k: op.join(folder, k) for k in names})]
    assert outputs[0] == outputs[1]
    assert report.meta['repeats'] == 6 and report.meta['k'] == 3
    # rows are aligned on the sorted ids whatever the file order
    _, X = align_features(fa, fb)
    np.testing.assert_array_equal(X['baseline'], x.astype(np.float32))

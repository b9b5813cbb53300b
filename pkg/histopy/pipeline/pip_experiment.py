"""Repeated cross-validation experiments comparing two feature extractors."""
import logging
import os.path as op

import numpy as np
import pandas as pd

from histopy.errors import (ConfigError, InvalidDataset, InvalidInput,
                            Undefined)
from histopy.finetune import FeatureMatrix
from histopy.io import (read_target_table, scan_class_labels, set_log_level,
                        write_csv)
from histopy.models import (log_transform_expression, predict_lasso,
                            predict_svc, predict_svr, train_lasso, train_svc,
                            train_svr)
from histopy.pipeline.pip_commands import tissue_dataset_key
from histopy.plot import plot_report
from histopy.stats import (CVReport, accuracy_and_confusion, auc,
                           correlation_p_value, count_improved_genes,
                           make_fold_plan, paired_compare, pearson,
                           per_class_accuracy)
from histopy.stats.report import POOLED
from histopy.utils import derive_seed, parallel_map


logger = logging.getLogger('histopy')

EXPERIMENTS = ('tissue', 'expression', 'mutation')
EXTRACTORS = ('baseline', 'finetuned')


def _as_features(features):
    if isinstance(features, FeatureMatrix):
        return features
    return FeatureMatrix.load(features)


def align_features(features_a, features_b):
    """Load two feature files and align their rows on sorted ids.

    Returns
    -------
    ids : list
        Sorted row ids
    X : dict
        Aligned float64 matrices of each extractor
    """
    fa, fb = _as_features(features_a), _as_features(features_b)
    if fa.dim != fb.dim:
        raise ConfigError(f"feature dimensions differ ({fa.dim} != "
                          f"{fb.dim})", field='features')
    if set(fa.ids) != set(fb.ids):
        raise InvalidDataset("the two feature files do not describe the "
                             "same rows")
    ids = sorted(fa.ids)
    X = dict()
    for name, feat in zip(EXTRACTORS, (fa, fb)):
        row = {k: n for n, k in enumerate(feat.ids)}
        X[name] = feat.values[[row[k] for k in ids]].astype(np.float64)
    return ids, X


def _fold_index(plan, ids):
    fold_of = plan.fold_of()
    return np.array([fold_of[k] for k in ids])


def _finite(values):
    return [v for v in values if np.isfinite(v)]


###############################################################################
###############################################################################
#                             TISSUE CLASSIFICATION
###############################################################################
###############################################################################


def run_tissue(ids, X, labels, class_names, cfg, n_threads=1):
    """Linear SVC tissue classification over stratified folds of tiles."""
    y = np.asarray(labels, dtype=np.int64)
    n_classes, seed = len(class_names), cfg['run.seed']
    plans = make_fold_plan(ids, y, k=cfg['eval.k'],
                           n_repeats=cfg['eval.repeats'], seed=seed)

    def _repeat(plan):
        r, folds = plan.repeat_index, _fold_index(plan, ids)
        recs, confs = [], dict()
        for ext in EXTRACTORS:
            pred = np.zeros((len(ids),), dtype=np.int64)
            for f in range(plan.k):
                test = folds == f
                model = train_svc(
                    X[ext][~test], y[~test], c_reg=cfg['svc.c_reg'],
                    seed=derive_seed(seed, r, f), class_names=class_names,
                    tol=cfg['svc.tol'], max_passes=cfg['svc.max_passes'])
                pred[test] = predict_svc(model, X[ext][test])
                recs += [(r, f, ext, 'accuracy', accuracy_and_confusion(
                    pred[test], y[test], n_classes)[0])]
            acc, conf = accuracy_and_confusion(pred, y, n_classes)
            recs += [(r, POOLED, ext, 'accuracy', acc)]
            for name, v in zip(class_names, per_class_accuracy(conf)):
                if np.isfinite(v):
                    recs += [(r, POOLED, ext, f"accuracy_{name}", v)]
            confs[ext] = conf
        logger.info(f"    repeat {r + 1}/{len(plans)} done")
        return recs, confs

    report = CVReport('tissue', list(EXTRACTORS),
                      class_names=list(class_names))
    for recs, confs in parallel_map(_repeat, plans, n_threads=n_threads):
        for rec in recs:
            report.add(*rec)
        for ext, conf in confs.items():
            report.add_confusion(ext, conf)
    test = cfg['eval.paired_test']
    report.compare('accuracy', test=test)
    for name in class_names:
        try:
            report.compare(f"accuracy_{name}", test=test)
        except InvalidInput as e:
            logger.warning(f"    no per-class comparison for {name} ({e})")
    return report


###############################################################################
###############################################################################
#                             EXPRESSION REGRESSION
###############################################################################
###############################################################################


def _gene_rows(report, genes, metric, n_patients=None, alpha=.05):
    """Per-gene mean metric over repeats and paired comparison."""
    rows = []
    for g in genes:
        a = report.repeat_values(EXTRACTORS[0], f"{metric}_{g}")
        b = report.repeat_values(EXTRACTORS[1], f"{metric}_{g}")
        ok = np.isfinite(a) & np.isfinite(b)
        row = dict(gene=g, n_repeats=int(ok.sum()))
        row[f"{metric}_a"] = float(np.mean(a[ok])) if ok.any() else np.nan
        row[f"{metric}_b"] = float(np.mean(b[ok])) if ok.any() else np.nan
        row['delta'] = row[f"{metric}_b"] - row[f"{metric}_a"]
        row['p_paired'] = paired_compare(a[ok], b[ok], test=report.meta[
            'paired_test'])[1] if ok.any() else np.nan
        if n_patients is not None:
            for s in ('a', 'b'):
                r = row[f"{metric}_{s}"]
                row[f"p_{s}"] = correlation_p_value(r, n_patients) if \
                    np.isfinite(r) else np.nan
        rows += [row]
    return rows


def run_expression(ids, X, targets, cfg, n_threads=1):
    """Linear SVR on log expression over plain folds of patients."""
    genes = list(targets.columns)
    Y = log_transform_expression(targets.loc[ids].to_numpy())
    seed = cfg['run.seed']
    plans = make_fold_plan(ids, None, k=cfg['eval.k'],
                           n_repeats=cfg['eval.repeats'], seed=seed)
    n_scatter = min(cfg['eval.scatter_genes'], len(genes))

    def _task(task):
        plan, g = task
        folds = _fold_index(plan, ids)
        recs, preds = [], dict()
        for ext in EXTRACTORS:
            pred = np.zeros((len(ids),))
            for f in range(plan.k):
                test = folds == f
                model = train_svr(X[ext][~test], Y[~test, g],
                                  c_reg=cfg['svr.c_reg'],
                                  epsilon=cfg['svr.epsilon'],
                                  n_passes=cfg['svr.n_passes'],
                                  target=genes[g])
                pred[test] = predict_svr(model, X[ext][test])
            try:
                r = pearson(Y[:, g], pred)
            except Undefined:
                r = np.nan
            recs += [(plan.repeat_index, POOLED, ext, f"r_{genes[g]}", r)]
            preds[ext] = pred
        return recs, preds

    tasks = [(plan, g) for plan in plans for g in range(len(genes))]
    results = parallel_map(_task, tasks, n_threads=n_threads)
    report = CVReport('expression', list(EXTRACTORS))
    report.meta['paired_test'] = cfg['eval.paired_test']
    scatter = dict()
    for (plan, g), (recs, preds) in zip(tasks, results):
        for rec in recs:
            report.add(*rec)
        if (plan.repeat_index == 0) and (g < n_scatter):
            scatter[genes[g]] = dict(observed=Y[:, g].tolist(), **{
                ext: preds[ext].tolist() for ext in EXTRACTORS})
    # mean correlation over genes, per repeat
    for ext in EXTRACTORS:
        r_all = np.array([report.repeat_values(ext, f"r_{g}") for g in
                          genes])
        for r, v in enumerate(r_all.T):
            v = _finite(v)
            report.add(r, POOLED, ext, 'mean_r', np.mean(v) if len(v) else
                       np.nan)
    report.compare('mean_r', test=cfg['eval.paired_test'])
    report.genes = _gene_rows(report, genes, 'r', n_patients=len(ids))
    gf = pd.DataFrame(report.genes)
    n_sig, n_imp = count_improved_genes(gf['r_a'], gf['r_b'], gf['p_b'],
                                        alpha=cfg['eval.alpha'])
    report.meta.update(n_significant=n_sig, n_improved=n_imp,
                       patient_ids=list(ids), scatter=scatter)
    logger.info(f"    {n_imp} of {n_sig} significant genes improved",
                extra={'fields': dict(n_significant=n_sig,
                                      n_improved=n_imp)})
    return report


###############################################################################
###############################################################################
#                             MUTATION PREDICTION
###############################################################################
###############################################################################


def run_mutation(ids, X, targets, cfg, n_threads=1):
    """LASSO mutation prediction, AUC over folds of patients stratified by
    the mutation flag."""
    genes = list(targets.columns)
    Y = targets.loc[ids].to_numpy()
    seed = cfg['run.seed']
    valid = [g for g in range(len(genes)) if len(np.unique(Y[:, g])) == 2]
    for g in set(range(len(genes))) - set(valid):
        logger.warning(f"    {genes[g]} skipped (a single mutation status)")
    plans = {g: make_fold_plan(ids, Y[:, g], k=cfg['eval.k'],
                               n_repeats=cfg['eval.repeats'],
                               seed=derive_seed(seed, g), warn=False)
             for g in valid}

    def _task(task):
        g, plan = task
        r, folds, y = plan.repeat_index, _fold_index(plan, ids), Y[:, g]
        recs = []
        for ext in EXTRACTORS:
            scores = np.zeros((len(ids),))
            for f in range(plan.k):
                test = folds == f
                if len(np.unique(y[~test])) < 2:
                    logger.warning(f"    {genes[g]} : single mutation status "
                                   f"in training fold {f}, prevalence used")
                    scores[test] = y[~test].mean()
                    continue
                model = train_lasso(
                    X[ext][~test], y[~test], family=cfg['lasso.family'],
                    seed=derive_seed(seed, r, f), n_lambda=cfg[
                        'lasso.n_lambda'], decades=cfg['lasso.lambda_decades'],
                    inner_folds=cfg['lasso.inner_folds'], target=genes[g])
                scores[test] = predict_lasso(model, X[ext][test])
            recs += [(r, POOLED, ext, f"auc_{genes[g]}", auc(scores, y))]
        return recs

    tasks = [(g, plan) for g in valid for plan in plans[g]]
    report = CVReport('mutation', list(EXTRACTORS))
    report.meta['paired_test'] = cfg['eval.paired_test']
    for recs in parallel_map(_task, tasks, n_threads=n_threads):
        for rec in recs:
            report.add(*rec)
    if not len(valid):
        raise InvalidDataset("no mutation target has both statuses")
    for ext in EXTRACTORS:
        a_all = np.array([report.repeat_values(ext, f"auc_{genes[g]}") for g
                          in valid])
        for r, v in enumerate(a_all.T):
            report.add(r, POOLED, ext, 'mean_auc', np.mean(v))
    report.compare('mean_auc', test=cfg['eval.paired_test'])
    report.genes = _gene_rows(report, [genes[g] for g in valid], 'auc')
    report.meta['skipped_genes'] = [genes[g] for g in range(len(genes)) if
                                    g not in valid]
    return report


###############################################################################
###############################################################################
#                                  COMMAND
###############################################################################
###############################################################################


def write_report(report, folder, with_json=True):
    """Write a report, its tables and its figures in a folder.

    Parameters
    ----------
    report : CVReport
        The report
    folder : str
        Output folder
    with_json : bool | True
        Also write the report itself (report.json)

    Returns
    -------
    files : dict
        Paths of the written files
    """
    files = dict(report=op.join(folder, 'report.json'),
                 records=op.join(folder, 'records.csv'),
                 summary=op.join(folder, 'summary.csv'),
                 comparisons=op.join(folder, 'comparisons.csv'))
    if with_json:
        report.to_json(files['report'])
    else:
        files.pop('report')
    report.to_csv(files['records'])
    write_csv(files['summary'], report.summary())
    write_csv(files['comparisons'], pd.DataFrame(
        list(report.comparisons.values())))
    if len(report.genes):
        files['genes'] = op.join(folder, 'genes.csv')
        write_csv(files['genes'], report.genes_frame())
    files.update(plot_report(report, folder))
    return files


def cmd_experiment(cfg, which, features_a, features_b, verbose=None):
    """Run an experiment on the features of two extractors.

    Parameters
    ----------
    cfg : PipelineConfig
        Configuration
    which : {'tissue', 'expression', 'mutation'}
        Experiment. Tissue classification uses tile features of the class
        dataset, the other two use patient features
    features_a, features_b : str | FeatureMatrix
        Features of the baseline and of the fine-tuned extractor

    Returns
    -------
    report : CVReport
        The cross-validation report (also written with its figures in
        <out>/reports/<which>)
    """
    set_log_level(verbose)
    if which not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {which}", field='experiment')
    if which == 'tissue':
        key = tissue_dataset_key(cfg)
    else:
        key = 'paths.' + which
    cfg.validate(required_paths=(key,))
    logger.info(f"-> {which} experiment ({cfg['eval.repeats']} x "
                f"{cfg['eval.k']}-fold)")
    ids, X = align_features(features_a, features_b)
    n_threads = cfg['run.threads']
    if which == 'tissue':
        labels, class_names = scan_class_labels(cfg.path(key))
        missing = [k for k in ids if k not in labels]
        if len(missing):
            raise InvalidDataset(f"{len(missing)} feature rows without tissue "
                                 f"label (e.g {missing[0]})")
        report = run_tissue(ids, X, [labels[k] for k in ids], class_names,
                            cfg, n_threads)
    else:
        targets = read_target_table(cfg.path(key), binary=which == 'mutation')
        missing = [k for k in ids if k not in targets.index]
        if len(missing):
            raise InvalidDataset(f"{len(missing)} patients without target "
                                 f"(e.g {missing[0]})")
        fcn = run_expression if which == 'expression' else run_mutation
        report = fcn(ids, X, targets, cfg, n_threads)
    report.meta.update(seed=cfg['run.seed'], k=cfg['eval.k'],
                       repeats=cfg['eval.repeats'],
                       paired_test=cfg['eval.paired_test'])
    write_report(report, op.join(cfg.path('paths.out'), 'reports', which))
    return report

"""Figures of the cross-validation reports.

Every figure is written as a self-contained SVG together with a CSV file
holding the plotted values.
"""
import logging
import os.path as op

import numpy as np
import pandas as pd

from histopy.io.write import make_dirs, write_csv


logger = logging.getLogger('histopy')

HEADLINE = {'tissue': 'accuracy', 'expression': 'mean_r',
            'mutation': 'mean_auc'}
COLORS = {'baseline': '#7f7f7f', 'finetuned': '#1f77b4'}


def _save(fig, path):
    """Save a figure as a reproducible SVG."""
    import matplotlib
    make_dirs(op.dirname(path) or '.')
    with matplotlib.rc_context({'svg.hashsalt': 'histopy',
                                'svg.fonttype': 'none'}):
        fig.savefig(path, format='svg', metadata={'Date': None})
    logger.info(f"    Figure saved to {path}")


def _figure(figsize):
    from matplotlib.figure import Figure
    return Figure(figsize=figsize)


def _grouped_bars(ax, labels, values, errors=None, extractors=()):
    x = np.arange(len(labels))
    width = .8 / max(len(extractors), 1)
    for n_e, ext in enumerate(extractors):
        ax.bar(x + (n_e - (len(extractors) - 1) / 2.) * width, values[ext],
               width, yerr=None if errors is None else errors[ext],
               color=COLORS.get(ext), label=ext, capsize=2)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45, ha='right')
    ax.legend(frameon=False)


def plot_metric_bars(report, path):
    """Mean +/- sd of the headline metric of each extractor."""
    metric = HEADLINE[report.experiment]
    df = report.summary()
    df = df[df['metric'] == metric].set_index('extractor').loc[
        report.extractors].reset_index()
    fig = _figure((4, 4))
    ax = fig.add_subplot(111)
    ax.bar(df['extractor'], df['mean'], yerr=df['sd'], capsize=4,
           color=[COLORS.get(k) for k in df['extractor']])
    comp = report.comparisons.get(metric, {})
    title = metric if 'p' not in comp else f"{metric} (p={comp['p']:.2g})"
    ax.set_title(title)
    ax.set_ylabel(metric)
    _save(fig, path)
    write_csv(op.splitext(path)[0] + '.csv', df)


def plot_per_class(report, path):
    """Per-class accuracy of each extractor."""
    df = report.summary()
    names = [k for k in report.class_names if f"accuracy_{k}" in set(
        df['metric'])]
    rows = []
    for name in names:
        for ext in report.extractors:
            sel = df[(df['metric'] == f"accuracy_{name}") &
                     (df['extractor'] == ext)]
            rows += [dict(class_name=name, extractor=ext,
                          mean=float(sel['mean'].iloc[0]),
                          sd=float(sel['sd'].iloc[0]))]
    table = pd.DataFrame(rows, columns=['class_name', 'extractor', 'mean',
                                        'sd'])
    fig = _figure((7, 4))
    ax = fig.add_subplot(111)
    values = {e: table[table['extractor'] == e]['mean'].to_numpy() for e in
              report.extractors}
    errors = {e: table[table['extractor'] == e]['sd'].to_numpy() for e in
              report.extractors}
    _grouped_bars(ax, names, values, errors, report.extractors)
    ax.set_ylabel('accuracy')
    ax.set_ylim(0., 1.05)
    _save(fig, path)
    write_csv(op.splitext(path)[0] + '.csv', table)


def plot_correlation_delta(report, path):
    """Histogram of the per-gene correlation improvement."""
    gf = report.genes_frame()
    delta = gf['delta'].to_numpy(dtype=float)
    delta = delta[np.isfinite(delta)]
    fig = _figure((5, 4))
    ax = fig.add_subplot(111)
    ax.hist(delta, bins=max(5, int(np.sqrt(len(delta))) + 1),
            color=COLORS['finetuned'])
    ax.axvline(0., color='k', lw=1)
    n_sig, n_imp = report.meta.get('n_significant'), report.meta.get(
        'n_improved')
    ax.set_title(f"{n_imp} of {n_sig} significant genes improved")
    ax.set_xlabel('correlation (finetuned) - correlation (baseline)')
    ax.set_ylabel('number of genes')
    _save(fig, path)
    write_csv(op.splitext(path)[0] + '.csv', gf[['gene', 'r_a', 'r_b',
                                                 'delta']])


def plot_scatter(report, path):
    """Observed versus predicted log expression of selected genes."""
    scatter = report.meta.get('scatter', {})
    genes = list(scatter.keys())
    n_cols = min(3, max(len(genes), 1))
    n_rows = max(int(np.ceil(len(genes) / n_cols)), 1)
    fig = _figure((4 * n_cols, 3.5 * n_rows))
    rows = []
    for n_g, gene in enumerate(genes):
        ax = fig.add_subplot(n_rows, n_cols, n_g + 1)
        obs = np.asarray(scatter[gene]['observed'])
        for ext in report.extractors:
            pred = np.asarray(scatter[gene][ext])
            ax.scatter(obs, pred, s=8, color=COLORS.get(ext), label=ext)
            rows += [dict(gene=gene, extractor=ext, patient_id=p, observed=o,
                          predicted=v) for p, o, v in zip(
                              report.meta.get('patient_ids', []), obs, pred)]
        ax.set_title(gene)
        ax.set_xlabel('observed')
        ax.set_ylabel('predicted')
        if n_g == 0:
            ax.legend(frameon=False)
    _save(fig, path)
    write_csv(op.splitext(path)[0] + '.csv', pd.DataFrame(
        rows, columns=['gene', 'extractor', 'patient_id', 'observed',
                       'predicted']))


def plot_gene_auc(report, path):
    """Mean AUC of each gene and extractor."""
    gf = report.genes_frame()
    fig = _figure((7, 4))
    ax = fig.add_subplot(111)
    values = dict(zip(report.extractors, (gf['auc_a'].to_numpy(),
                                          gf['auc_b'].to_numpy())))
    _grouped_bars(ax, list(gf['gene']), values, None, report.extractors)
    ax.axhline(.5, color='k', lw=1, ls='--')
    ax.set_ylabel('AUC')
    ax.set_ylim(0., 1.)
    _save(fig, path)
    write_csv(op.splitext(path)[0] + '.csv', gf[['gene', 'auc_a', 'auc_b',
                                                 'delta', 'p_paired']])


def plot_report(report, folder):
    """Draw the figures of a report.

    Parameters
    ----------
    report : CVReport
        Report of an experiment
    folder : str
        Output folder

    Returns
    -------
    files : dict
        Paths of the SVG figures
    """
    files = dict(metric_bars=op.join(folder, 'metric_bars.svg'))
    plot_metric_bars(report, files['metric_bars'])
    if report.experiment == 'tissue':
        files['per_class'] = op.join(folder, 'per_class.svg')
        plot_per_class(report, files['per_class'])
    elif report.experiment == 'expression':
        files['correlation_delta'] = op.join(folder, 'correlation_delta.svg')
        plot_correlation_delta(report, files['correlation_delta'])
        files['scatter'] = op.join(folder, 'scatter.svg')
        plot_scatter(report, files['scatter'])
    elif report.experiment == 'mutation' and len(report.genes):
        files['gene_auc'] = op.join(folder, 'gene_auc.svg')
        plot_gene_auc(report, files['gene_auc'])
    return files

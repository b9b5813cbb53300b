"""Cross-validation report."""
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from histopy.errors import InvalidInput, IoError
from histopy.io.write import write_csv, write_text
from histopy.stats.metrics import paired_compare, wilcoxon_signed_rank


logger = logging.getLogger('histopy')

# fold label of the metrics computed on the pooled out-of-fold predictions
POOLED = 'pooled'
RECORD_COLUMNS = ['repeat', 'fold', 'extractor', 'metric', 'value']


@dataclass
class CVReport:
    """Metrics of a repeated cross-validation comparing two extractors.

    Attributes
    ----------
    experiment : str
        Experiment name ('tissue', 'expression' or 'mutation')
    extractors : list
        Names of the compared extractors, baseline first
    records : list
        Metric records (repeat, fold, extractor, metric, value). The fold is
        an index or 'pooled' for metrics of the whole repeat
    confusion : dict
        Confusion matrix summed over repeats, per extractor
    class_names : list
        Class names of the confusion matrices
    genes : list
        Per-gene results (one dict per gene)
    comparisons : dict
        Paired comparisons, per metric
    meta : dict
        Free-form information (seed, configuration...)
    """

    experiment: str
    extractors: list = field(default_factory=lambda: ['baseline',
                                                      'finetuned'])
    records: list = field(default_factory=list)
    confusion: dict = field(default_factory=dict)
    class_names: list = field(default_factory=list)
    genes: list = field(default_factory=list)
    comparisons: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, repeat, fold, extractor, metric, value):
        """Add a metric record."""
        assert extractor in self.extractors, f"unknown extractor {extractor}"
        self.records += [dict(repeat=int(repeat), fold=fold,
                              extractor=extractor, metric=metric,
                              value=float(value))]

    def add_confusion(self, extractor, confusion):
        conf = np.asarray(confusion, dtype=np.int64)
        if extractor in self.confusion:
            conf = conf + np.asarray(self.confusion[extractor])
        self.confusion[extractor] = conf.tolist()

    def to_frame(self):
        """Records as a DataFrame."""
        return pd.DataFrame(self.records, columns=RECORD_COLUMNS)

    def repeat_values(self, extractor, metric):
        """Per-repeat values of a metric, in repeat order.

        Pooled records are used when they exist, the mean over folds
        otherwise.
        """
        df = self.to_frame()
        df = df[(df['extractor'] == extractor) & (df['metric'] == metric)]
        if not len(df):
            raise InvalidInput(f"no record of {metric} for {extractor}")
        pooled = df[df['fold'] == POOLED]
        if len(pooled):
            return pooled.sort_values('repeat')['value'].to_numpy()
        return df.groupby('repeat')['value'].mean().sort_index().to_numpy()

    def compare(self, metric, test='wilcoxon'):
        """Paired comparison of the two extractors on a metric.

        Both the Wilcoxon signed-rank and the paired t-test p-values are
        stored. The p-value of `test` is reported as 'p'.
        """
        a = self.repeat_values(self.extractors[0], metric)
        b = self.repeat_values(self.extractors[1], metric)
        mean_diff, p_w = paired_compare(a, b, test='wilcoxon')
        _, p_t = paired_compare(a, b, test='ttest')
        res = dict(metric=metric, n=len(a), mean_a=float(np.mean(a)),
                   mean_b=float(np.mean(b)), mean_diff=mean_diff,
                   statistic=wilcoxon_signed_rank(a, b)[0], p_wilcoxon=p_w,
                   p_ttest=p_t, p=p_w if test == 'wilcoxon' else p_t)
        self.comparisons[metric] = res
        logger.info(f"    {metric} : {self.extractors[0]}={res['mean_a']:.4f}"
                    f", {self.extractors[1]}={res['mean_b']:.4f} "
                    f"(p={res['p']:.3g})", extra={'fields': res})
        return res

    def summary(self):
        """Mean and standard deviation over repeats, per extractor and
        metric."""
        df = self.to_frame()
        rows = []
        for (ext, metric) in sorted(set(zip(df['extractor'], df['metric']))):
            v = self.repeat_values(ext, metric)
            rows += [dict(extractor=ext, metric=metric, n_repeats=len(v),
                          mean=float(np.mean(v)),
                          sd=float(np.std(v, ddof=1)) if len(v) > 1 else 0.)]
        return pd.DataFrame(rows, columns=['extractor', 'metric', 'n_repeats',
                                           'mean', 'sd'])

    def genes_frame(self):
        return pd.DataFrame(self.genes)

    # -------------------------------------------------------------------------
    # I/O

    def to_dict(self):
        return dict(experiment=self.experiment, extractors=self.extractors,
                    records=self.records, confusion=self.confusion,
                    class_names=self.class_names, genes=_nan_to_none(
                        self.genes), comparisons=self.comparisons,
                    meta=self.meta)

    def to_json(self, path):
        write_text(path, json.dumps(self.to_dict(), indent=1, sort_keys=True))

    def to_csv(self, path):
        """Write one row per repeat, fold, extractor and metric."""
        write_csv(path, self.to_frame())

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, 'r') as f:
                d = json.load(f)
        except (OSError, ValueError) as e:
            raise IoError(f"cannot read report {path} ({e})")
        genes = [{k: (np.nan if v is None else v) for k, v in g.items()} for
                 g in d.get('genes', [])]
        return cls(d['experiment'], d['extractors'], d['records'],
                   d.get('confusion', {}), d.get('class_names', []), genes,
                   d.get('comparisons', {}), d.get('meta', {}))


def _nan_to_none(rows):
    return [{k: (None if isinstance(v, float) and np.isnan(v) else v) for
             k, v in r.items()} for r in rows]

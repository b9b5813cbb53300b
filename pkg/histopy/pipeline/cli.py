"""Command line interface.

All the logs are written on standard error as JSON lines and the exit code
reflects the error category : 0 success, 2 configuration error, 3 data error
and 4 numerical failure.
"""
import argparse
import logging
import os.path as op
import sys

from histopy import __version__
from histopy.config import load_config
from histopy.errors import ConfigError, HistopyError
from histopy.io.syslog import LOGGING_TYPES, set_log_level
from histopy.pipeline.pip_commands import (cmd_extract, cmd_finetune,
                                           cmd_pretrain)
from histopy.pipeline.pip_experiment import (EXPERIMENTS, cmd_experiment,
                                             write_report)
from histopy.pipeline.synthetic import SyntheticSpec, cmd_gen_synthetic
from histopy.stats import CVReport


logger = logging.getLogger('histopy')


def _checkpoint(cfg, args, default):
    if args.checkpoint:
        return args.checkpoint
    return op.join(cfg.path('paths.out'), 'checkpoints', default)


def _run_gen_synthetic(cfg, args):
    cfg.validate()
    spec = SyntheticSpec.from_config(cfg)
    cmd_gen_synthetic(spec, cfg.path('paths.out'), verbose=cfg[
        'run.verbose'])


def _run_pretrain(cfg, args):
    cmd_pretrain(cfg, verbose=cfg['run.verbose'])


def _run_finetune(cfg, args):
    cmd_finetune(cfg, _checkpoint(cfg, args, 'pretrained.hfnn'),
                 verbose=cfg['run.verbose'])


def _run_extract(cfg, args):
    cmd_extract(cfg, _checkpoint(cfg, args, f"{args.name}.hfnn"), args.name,
                source=args.source, verbose=cfg['run.verbose'])


def _run_experiment(cfg, args):
    folder = op.join(cfg.path('paths.out'), 'features')
    suffix = 'tiles' if args.which == 'tissue' else 'patients'
    fa = args.features_a or op.join(folder, f"pretrained_{suffix}.pfv")
    fb = args.features_b or op.join(folder, f"finetuned_{suffix}.pfv")
    for f in (fa, fb):
        if not op.isfile(f):
            raise ConfigError(f"feature file not found ({f})",
                              field='features')
    cmd_experiment(cfg, args.which, fa, fb, verbose=cfg['run.verbose'])


def _run_report(cfg, args):
    report = CVReport.from_json(args.report)
    folder = args.folder or op.dirname(op.abspath(args.report))
    write_report(report, folder, with_json=False)


def _add_global_flags(parser, default):
    parser.add_argument('--config', default=default,
                        help="TOML configuration file")
    parser.add_argument('--seed', type=int, default=default,
                        help="root seed (run.seed)")
    parser.add_argument('--threads', type=int, default=default,
                        help="number of worker threads (run.threads)")
    parser.add_argument('--out', default=default,
                        help="output folder (paths.out)")
    parser.add_argument('-v', '--verbose', default=default,
                        help="log level (debug, info, warning, error)")


def make_parser():
    """Build the argument parser."""
    parser = argparse.ArgumentParser(
        prog='histopy', description="Two-step fine-tuning of histopathology "
        "feature extractors and cross-validated downstream evaluation")
    parser.add_argument('--version', action='version',
                        version=f"histopy {__version__}")
    _add_global_flags(parser, None)
    # sub-commands also accept the global flags
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-synthetic', parents=[common],
                       help="generate synthetic datasets in --out")
    p.set_defaults(func=_run_gen_synthetic)

    p = sub.add_parser('pretrain', parents=[common],
                       help="train a network on the source dataset")
    p.set_defaults(func=_run_pretrain)

    p = sub.add_parser('finetune', parents=[common],
                       help="two-step fine-tuning on the target dataset")
    p.add_argument('--checkpoint', default=None,
                   help="pretrained checkpoint (default "
                   "<out>/checkpoints/pretrained.hfnn)")
    p.set_defaults(func=_run_finetune)

    p = sub.add_parser('extract', parents=[common],
                       help="extract tile (and patient) features")
    p.add_argument('--name', default='finetuned',
                   help="extractor name, prefix of the feature files")
    p.add_argument('--checkpoint', default=None,
                   help="checkpoint (default <out>/checkpoints/<name>.hfnn)")
    p.add_argument('--source', choices=('dataset', 'manifest'),
                   default='dataset', help="class dataset or patient "
                   "manifest")
    p.set_defaults(func=_run_extract)

    p = sub.add_parser('experiment', parents=[common],
                       help="compare two extractors by cross-validation")
    p.add_argument('which', choices=EXPERIMENTS)
    p.add_argument('--features-a', default=None,
                   help="baseline features (default: pretrained)")
    p.add_argument('--features-b', default=None,
                   help="fine-tuned features (default: finetuned)")
    p.set_defaults(func=_run_experiment)

    p = sub.add_parser('report', parents=[common],
                       help="re-render the tables and figures of a report")
    p.add_argument('report', help="report.json file")
    p.add_argument('--folder', default=None,
                   help="output folder (default: folder of the report)")
    p.set_defaults(func=_run_report)
    return parser


def main(argv=None):
    """Run the command line interface.

    Returns
    -------
    code : int
        Exit code
    """
    args = make_parser().parse_args(argv)
    set_log_level('info', fmt='json')
    try:
        cfg = load_config(args.config, overrides={
            'run.seed': args.seed, 'run.threads': args.threads,
            'paths.out': args.out, 'run.verbose': args.verbose})
        if cfg['run.verbose'].upper() not in LOGGING_TYPES:
            raise ConfigError(f"unknown log level {cfg['run.verbose']!r}",
                              field='run.verbose')
        set_log_level(cfg['run.verbose'], fmt='json')
        logger.info(f"-> histopy {args.command}", extra={'fields': {
            'command': args.command, 'seed': cfg['run.seed']}})
        args.func(cfg, args)
    except HistopyError as e:
        logger.error(str(e), extra={'fields': {
            'error': type(e).__name__, 'exit_code': e.exit_code}})
        return e.exit_code
    return 0


def run():
    sys.exit(main())

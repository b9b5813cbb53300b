"""Pipeline functions."""
from .synthetic import (SyntheticSpec, cmd_gen_synthetic,  # noqa
                        check_domain_shift)
from .pip_commands import cmd_pretrain, cmd_finetune, cmd_extract  # noqa
from .pip_experiment import cmd_experiment, write_report  # noqa

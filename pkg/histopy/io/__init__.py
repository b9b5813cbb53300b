"""I/O functions."""
from .syslog import set_log_level, use_log_level, verbose  # noqa
from .read import (read_image, read_checkpoint, read_features,  # noqa
                   read_target_table)
from .write import (make_dirs, write_image, write_checkpoint,  # noqa
                    write_features, write_csv, write_text)
from .load import (LabeledDataset, PatientManifest, scan_class_dataset,  # noqa
                   scan_class_labels, load_class_dataset,
                   load_patient_manifest)

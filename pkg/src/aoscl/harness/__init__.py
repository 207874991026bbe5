"""Experiment plumbing: pretraining, stream runs, sweeps, reports and the command line.

The ``report`` and ``sweep`` submodules hold the functions of the same name.
"""

from aoscl.harness.pretrain import PretrainConfig, Pretrained, data_dir, pretrain
from aoscl.harness.runner import METHODS, RunConfig, RunRecord, make_learner, run, write_record

__all__ = [
    "METHODS", "PretrainConfig", "Pretrained", "RunConfig", "RunRecord",
    "data_dir", "make_learner", "pretrain", "run", "write_record",
]

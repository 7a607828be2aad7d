"""Surrogate trainer: fits the branch-trunk boundary-to-solution network on
exported local-problem datasets and writes the solver's weight-file format."""

from .augment import augment, rotate, scale
from .model import BranchTrunk
from .records import Record, encode, load_dataset, parse_record
from .serialize import save_weights, weights_payload
from .training import TrainReport, train

__version__ = "0.1.0"

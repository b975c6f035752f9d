"""Neural integral operator classifier for 1-D spectra, with baselines and a benchmark harness."""

from .data import Dataset, load_csv, make_split, preset, save_csv
from .operator import IntegralOperatorModel, OperatorConfig, load_checkpoint, save_checkpoint
from .quadrature import MCConfig
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"

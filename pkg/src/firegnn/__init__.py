"""Graph-convolutional recurrent forecasting of monthly burnt area on land grids."""

from .community import LouvainConfig, Partition, louvain, modularity
from .forecast import RolloutPlan, rollout
from .graph import WildfireGraph, build_adjacency, compute_threshold, normalize_adjacency
from .grid import GridSpec, LandMask, inflate, mask_snapshot
from .metrics import MetricReport, mse, psnr, rrmse, ssim
from .model import GcnLstmModel, ModelConfig, forward, init_parameters
from .train import TrainConfig, grid_search

__version__ = "0.1.0"

# 编码器、关系势能、Langevin 采样与训练
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoder import LatentSet, TrajectoryEncoder
from .energy import EdgeEnergyModel, EnergyValue
from .potential_model import ModelConfig, PotentialModel, build_model
from .potentials import ExtraPotential, PotentialContext
from .sampler import ModelTerm, PotentialTerm, SamplerConfig, compose_models, init_trajectory, langevin
from .training import TrainConfig, Trainer, potential_split, training_loss

"""Finite-blocklength coding lab: theory bounds, classical coded-QAM
baselines and a convolutional channel autoencoder for the AWGN channel."""

from .theory import FblParams, SnrPoint, capacity, dispersion, max_rate_fbl, q_func, q_inv
from .channel import NoiseSpec, gaussian_noise, normalize_power, transmit
from .modem import QamSpec, qam_demodulate_hard, qam_modulate
from .polar import PolarCode, polar_encode, sc_decode
from .reed_muller import RmCode, rm_decode_reed, rm_encode
from .cnn_ae import AeConfig, TrainConfig, build_model, derive_config, load_checkpoint, train
from .harness import FepReport, RatePoint, estimate_fep, rate_search, sweep

__version__ = "0.1.0"

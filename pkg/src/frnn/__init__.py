"""Bijective GRU layers and folded recurrent networks for video prediction."""
from .cells import BGruLayer, GruGateSet, bgru_backward, bgru_forward, gru_step, param_count_bridged, param_count_shared
from .data import SequenceBatch, SpriteConfig, gen_sequences, last_frame_baseline, parse_idx, read_seq, write_seq
from .folded import CostReport, FoldedStack, StateSet, TopologySpec, cost_report
from .metrics import EvalReport, dssim, evaluate, mse, psnr
from .tensor import Tensor, backward, grad_check, make_rng, no_grad
from .training import RMSProp, TrainConfig, init_model, l1_loss, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

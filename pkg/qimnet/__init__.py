from .checkpoint import checkpoint_roundtrip, load_checkpoint, save_checkpoint
from .cli import main
from .config import load_config, parse_config
from .data import load_cifar10, load_cifar100, load_idx, make_batches
from .density import dyad, mixture, normalize_vec, validate_density
from .gradcheck import grad_check, run_suite
from .models import ModelSpec, build_model, forward, param_count
from .qim import QimConfig, QimParams, flatten_maps, qim_backward, qim_forward, qim_fused
from .train import TrainConfig, evaluate, fit, train_epoch

# Only import daemons on Unix-like systems.
try:
    from .daemon import as_daemon, close_daemon
except (ImportError, RuntimeError):
    pass

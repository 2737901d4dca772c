from .config import ModelConfig, config_for, hybrid_config, lstm_config, transformer_config
from .layers import (
    batch_norm,
    causal_mask,
    l2_penalty,
    layer_norm,
    lstm_cell,
    lstm_sequence,
    multi_head_attention,
    positional_encoding,
)
from .networks import (
    as_indices,
    build_model,
    expected_param_counts,
    forward,
    forward_hybrid,
    forward_lstm_model,
    forward_transformer,
    l2_term,
    layer_param_counts,
)

from .networkConfiguration import NetworkConfig
from .attention import AttentionParams, ffn, gsa_forward, gta_forward, lba_forward
from .partitions import grid_partition, grid_reverse, window_partition, window_reverse
from .blocks import block_forward
from .network import FeatureMap, feature_extract, init_params, network_forward, reconstruct, reconstruct_head
from .flops import FlopReport, count_attention_macs, count_flops
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint

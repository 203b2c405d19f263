from .module import Module
from .layers import (BGRU, BLOCKS_PER_STAGE, BasicBlock, BatchNorm, BidirectionalGRULayer, Classifier,
                     Conv, ConvBN, GRU, ResNetBackbone, SpatiotemporalFrontend, TemporalAttention,
                     TemporalConvBackend, attention_apply, bgru_forward, classify_per_timestep,
                     frontend_forward, resnet1d_audio, resnet2d_per_timestep,
                     temporal_conv_backend_forward)

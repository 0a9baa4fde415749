from .attention import AttentionMaps, SafeBatchNorm1d, UnitedAttention
from .backbone import BasicBlock, FeaturePyramid, ResidualBackbone
from .rpn import RegionProposer
from .roi_align import assign_pyramid_levels, extract_roi_features, roi_align_single
from .heads import BilayerHeads, CoarseHead, MaskPrediction, RecombineHead
from .detector import BRNet, Detection

__all__ = [
    "AttentionMaps",
    "BRNet",
    "BasicBlock",
    "BilayerHeads",
    "CoarseHead",
    "MaskPrediction",
    "Detection",
    "FeaturePyramid",
    "RecombineHead",
    "RegionProposer",
    "ResidualBackbone",
    "SafeBatchNorm1d",
    "UnitedAttention",
    "assign_pyramid_levels",
    "extract_roi_features",
    "roi_align_single",
]

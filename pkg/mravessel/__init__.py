"""mravessel

Dual-scale Hessian vessel segmentation for skull-stripped, bias-corrected MR angiography.
"""

__version__ = '0.1.0'

from mravessel.libs import *
from mravessel.filters import SatoParams, VesselnessMap, vessel_enhance
from mravessel.threshold import ThresholdPair, hysteresis, relative_thresholds, union_masks
from mravessel.components import LabeledComponents, filter_small, label_components
from mravessel.pipeline import (
    AblationVariant,
    Pipeline,
    SegmentationResult,
    run_ablation,
    segment,
    segment_ablated,
    sweep_thresholds,
)
from mravessel.phantom import PhantomSpec, dice, evaluate, generate_phantom, reference_phantom_spec
